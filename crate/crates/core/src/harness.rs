//! Experiment orchestration: synthetic scenarios, per-trial simulation, the
//! algorithm comparison sweep, summary statistics and CSV/JSON export.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmaes::{cmaes_select, EsConfig};
use crate::error::{Error, Result};
use crate::information::{FimMode, InfoState};
use crate::localization::{map_solve, rmse, SolveOptions};
use crate::rng::{self, Purpose};
use crate::scenario::{
    BeaconCandidate, BeaconId, EdgeReference, Instance, NoiseModel, PositionSpec, Scenario,
};
use crate::selection::{
    brute_force_select, coverage_greedy_select, greedy_select, measurement_greedy_select, random_select, Algorithm,
    Budget, SelectionResult, DEFAULT_ENUMERATION_CAP,
};
use crate::stats;

/// Header of the per-record CSV.
pub const RECORDS_HEADER: [&str; 10] = [
    "setting",
    "trial",
    "algorithm",
    "k",
    "cutoff",
    "prior_sigma",
    "f_norm",
    "rmse_m",
    "runtime_s",
    "converged_all",
];

// ---------------------------------------------------------------------------
// Scenario generation

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    /// Straight pass through the middle of the extent.
    Line,
    /// Rectangular loop inset from the walls.
    Loop,
    /// Three-lane back-and-forth sweep, like a route through factory aisles.
    #[default]
    Serpentine,
}

/// Parameters of a synthetic trajectory scenario. The defaults reproduce the
/// large-scale factory setup: 30 positions, 50 candidates, a 400 m x 300 m
/// floor, prior sigma 8 m, range variance 25 m^2, cutoff 250 m, budget 5.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub positions: usize,
    pub candidates: usize,
    pub dimension: usize,
    /// Box size per axis in meters; the box spans `[0, extent]`.
    pub extent: Vec<f64>,
    pub trajectory: TrajectoryKind,
    pub prior_sigma: f64,
    pub noise_variance: f64,
    /// `None` disables the cutoff.
    pub cutoff: Option<f64>,
    pub budget: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            positions: 30,
            candidates: 50,
            dimension: 2,
            extent: vec![400.0, 300.0],
            trajectory: TrajectoryKind::Serpentine,
            prior_sigma: 8.0,
            noise_variance: 25.0,
            cutoff: Some(250.0),
            budget: 5,
        }
    }
}

impl SyntheticSpec {
    fn extent(&self) -> Result<Vec<f64>> {
        let d = self.dimension;
        if d != 2 && d != 3 {
            return Err(Error::field("dimension", format!("must be 2 or 3, got {d}")));
        }
        let mut e = self.extent.clone();
        if e.len() == 2 && d == 3 {
            e.push(e[0].min(e[1]) * 0.1);
        }
        if e.len() != d || e.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::field("extent", format!("need {d} positive lengths")));
        }
        Ok(e)
    }
}

fn waypoints(kind: TrajectoryKind, extent: &[f64]) -> Vec<Vec<f64>> {
    let margin = 0.1;
    let (x0, x1) = (extent[0] * margin, extent[0] * (1.0 - margin));
    let (y0, y1) = (extent[1] * margin, extent[1] * (1.0 - margin));
    let ymid = extent[1] * 0.5;
    let planar: Vec<[f64; 2]> = match kind {
        TrajectoryKind::Line => vec![[x0, ymid], [x1, ymid]],
        TrajectoryKind::Loop => vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]],
        TrajectoryKind::Serpentine => vec![[x0, y0], [x1, y0], [x1, ymid], [x0, ymid], [x0, y1], [x1, y1]],
    };
    planar
        .into_iter()
        .map(|[x, y]| {
            let mut p = vec![x, y];
            if extent.len() == 3 {
                p.push(extent[2] * 0.5);
            }
            p
        })
        .collect()
}

/// `count` points equally spaced by arc length along a polyline.
fn along_polyline(points: &[Vec<f64>], count: usize) -> Vec<DVector<f64>> {
    let pts: Vec<DVector<f64>> = points.iter().map(|p| DVector::from_column_slice(p)).collect();
    let lengths: Vec<f64> = pts.windows(2).map(|w| (&w[1] - &w[0]).norm()).collect();
    let total: f64 = lengths.iter().sum();
    (0..count)
        .map(|k| {
            let mut s = if count == 1 {
                0.5 * total
            } else {
                total * k as f64 / (count - 1) as f64
            };
            for (seg, len) in lengths.iter().enumerate() {
                if s <= *len || seg == lengths.len() - 1 {
                    let t = if *len > 0.0 { (s / len).min(1.0) } else { 0.0 };
                    return &pts[seg] + (&pts[seg + 1] - &pts[seg]) * t;
                }
                s -= len;
            }
            unreachable!("polyline has at least one segment")
        })
        .collect()
}

fn uniform_points<R: Rng + ?Sized>(count: usize, extent: &[f64], rng: &mut R) -> Vec<DVector<f64>> {
    (0..count)
        .map(|_| DVector::from_iterator(extent.len(), extent.iter().map(|e| rng.random::<f64>() * e)))
        .collect()
}

/// Trajectory scenario: prior means along the chosen path, candidates uniform
/// over the extent box, isotropic priors.
pub fn generate_synthetic_scenario(spec: &SyntheticSpec, seed: u64) -> Result<Scenario> {
    let extent = spec.extent()?;
    if spec.positions == 0 || spec.candidates == 0 {
        return Err(Error::field("positions", "need at least one position and one candidate"));
    }
    let means = along_polyline(&waypoints(spec.trajectory, &extent), spec.positions);
    let mut rng = rng::stream(seed, 0, Purpose::Scenario);
    let candidates = uniform_points(spec.candidates, &extent, &mut rng);
    build_scenario(spec, means, candidates)
}

fn build_scenario(spec: &SyntheticSpec, means: Vec<DVector<f64>>, candidates: Vec<DVector<f64>>) -> Result<Scenario> {
    let variance = spec.prior_sigma * spec.prior_sigma;
    let positions = means
        .into_iter()
        .map(|m| PositionSpec::isotropic(m, variance))
        .collect::<Result<Vec<_>>>()?;
    let scenario = Scenario {
        dimension: spec.dimension,
        positions,
        candidates: candidates
            .into_iter()
            .enumerate()
            .map(|(k, position)| BeaconCandidate {
                id: BeaconId::from_index(k),
                position,
            })
            .collect(),
        noise: NoiseModel::Constant(spec.noise_variance),
        cutoff: spec.cutoff.unwrap_or(f64::INFINITY),
        budget: spec.budget,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Unstructured instance: prior means and candidates both uniform over the
/// extent box. Used for bound certification and small-scale checks.
pub fn generate_random_scenario(spec: &SyntheticSpec, seed: u64) -> Result<Scenario> {
    let extent = spec.extent()?;
    let mut rng = rng::stream(seed, 0, Purpose::Scenario);
    let means = uniform_points(spec.positions, &extent, &mut rng);
    let candidates = uniform_points(spec.candidates, &extent, &mut rng);
    build_scenario(spec, means, candidates)
}

/// Small 3-D instance family used for greedy-versus-brute-force comparisons:
/// 10 positions, 20 candidates in a 100 m cube.
pub fn small_instance_spec() -> SyntheticSpec {
    SyntheticSpec {
        positions: 10,
        candidates: 20,
        dimension: 3,
        extent: vec![100.0, 100.0, 100.0],
        trajectory: TrajectoryKind::Line,
        prior_sigma: 8.0,
        noise_variance: 25.0,
        cutoff: Some(60.0),
        budget: 5,
    }
}

// ---------------------------------------------------------------------------
// Experiment configuration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseScenario {
    Synthetic(SyntheticSpec),
    File(std::path::PathBuf),
}

/// One sweep point: overrides applied to the base scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub label: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub cutoff: Option<f64>,
    #[serde(default)]
    pub prior_sigma: Option<f64>,
}

impl Setting {
    pub fn new(label: &str) -> Self {
        Setting {
            label: label.to_string(),
            k: None,
            cutoff: None,
            prior_sigma: None,
        }
    }

    pub fn k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn cutoff(mut self, c: f64) -> Self {
        self.cutoff = Some(c);
        self
    }

    pub fn prior_sigma(mut self, s: f64) -> Self {
        self.prior_sigma = Some(s);
        self
    }

    /// Copy of `base` with this setting's overrides.
    pub fn apply(&self, base: &Scenario) -> Result<Scenario> {
        let mut s = base.clone();
        if let Some(k) = self.k {
            s.budget = k;
        }
        if let Some(c) = self.cutoff {
            s.cutoff = c;
        }
        if let Some(sigma) = self.prior_sigma {
            s.positions = s
                .positions
                .iter()
                .map(|p| PositionSpec::isotropic(p.mean().clone(), sigma * sigma))
                .collect::<Result<_>>()?;
        }
        s.validate()?;
        Ok(s)
    }
}

/// The comparison sweep: baseline `K=5, C=250, sigma=8`, then one parameter
/// varied at a time over `K in {5, 10, 15}`, `C in {150, 300, 450}` and
/// `sigma in {5, 10, 15}`.
pub fn default_sweep() -> Vec<Setting> {
    vec![
        Setting::new("baseline").k(5).cutoff(250.0).prior_sigma(8.0),
        Setting::new("K=10").k(10).cutoff(250.0).prior_sigma(8.0),
        Setting::new("K=15").k(15).cutoff(250.0).prior_sigma(8.0),
        Setting::new("C=150").k(5).cutoff(150.0).prior_sigma(8.0),
        Setting::new("C=300").k(5).cutoff(300.0).prior_sigma(8.0),
        Setting::new("C=450").k(5).cutoff(450.0).prior_sigma(8.0),
        Setting::new("sigma=5").k(5).cutoff(250.0).prior_sigma(5.0),
        Setting::new("sigma=10").k(5).cutoff(250.0).prior_sigma(10.0),
        Setting::new("sigma=15").k(5).cutoff(250.0).prior_sigma(15.0),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub base: BaseScenario,
    pub settings: Vec<Setting>,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub master_seed: u64,
    /// Draw fresh candidate positions (uniform over the region) every trial.
    pub resample_candidates: bool,
    pub fim_mode: FimMode,
    pub edge_reference: EdgeReference,
    pub es: EsConfig,
    pub solve: SolveOptions,
    pub brute_force_cap: u64,
    /// Write measured selection wall time; when false `runtime_s` is 0 so
    /// that output files are byte-reproducible.
    pub record_runtime: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            base: BaseScenario::Synthetic(SyntheticSpec::default()),
            settings: default_sweep(),
            trials: 50,
            algorithms: vec![
                Algorithm::Random,
                Algorithm::Greedy,
                Algorithm::MeasurementGreedy,
                Algorithm::CoverageGreedy,
            ],
            master_seed: 0,
            resample_candidates: true,
            fim_mode: FimMode::OneSample,
            edge_reference: EdgeReference::GroundTruth,
            es: EsConfig::default(),
            solve: SolveOptions::default(),
            brute_force_cap: DEFAULT_ENUMERATION_CAP as u64,
            record_runtime: true,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("at least one algorithm is required".into()));
        }
        if self.settings.is_empty() {
            return Err(Error::Config("at least one setting is required".into()));
        }
        let mut labels = BTreeSet::new();
        for s in &self.settings {
            if !labels.insert(&s.label) {
                return Err(Error::Config(format!("duplicate setting label `{}`", s.label)));
            }
            let positive = |v: Option<f64>| v.is_none_or(|x| x > 0.0);
            if s.k == Some(0) || !positive(s.cutoff) || !positive(s.prior_sigma) {
                return Err(Error::Config(format!("setting `{}` has a non-positive value", s.label)));
            }
        }
        Ok(())
    }

    pub fn base_scenario(&self) -> Result<Scenario> {
        match &self.base {
            BaseScenario::Synthetic(spec) => generate_synthetic_scenario(spec, self.master_seed),
            BaseScenario::File(path) => Scenario::load(path),
        }
    }

    /// Box from which resampled candidates are drawn.
    fn candidate_region(&self, base: &Scenario) -> Vec<(f64, f64)> {
        if let BaseScenario::Synthetic(spec) = &self.base {
            if let Ok(extent) = spec.extent() {
                return extent.into_iter().map(|e| (0.0, e)).collect();
            }
        }
        (0..base.dimension)
            .map(|axis| {
                base.candidates.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    (lo.min(c.position[axis]), hi.max(c.position[axis]))
                })
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Trials

/// Outcome of one algorithm on one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub setting: String,
    pub trial: u64,
    pub algorithm: Algorithm,
    pub k: usize,
    pub cutoff: f64,
    pub prior_sigma: f64,
    pub f_norm: f64,
    pub rmse_m: f64,
    pub runtime_s: f64,
    pub converged_all: bool,
    #[serde(skip)]
    pub selected: Vec<BeaconId>,
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
    #[serde(skip)]
    pub evaluations: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialFailure {
    pub setting: String,
    pub trial: u64,
    pub algorithm: Algorithm,
    pub error: String,
}

/// Everything one trial produced.
#[derive(Clone, Debug, Default)]
pub struct TrialOutput {
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    /// RMSE of the prior means alone (no beacons).
    pub prior_rmse: f64,
    pub total_time_s: f64,
}

/// Run one selector on a prepared instance.
pub fn run_algorithm(
    algorithm: Algorithm,
    instance: &Instance,
    state: &InfoState,
    config: &ExperimentConfig,
    trial: u64,
) -> Result<SelectionResult> {
    let budget = Budget::new(instance.scenario.budget, instance.scenario.m())?;
    let mut result = match algorithm {
        Algorithm::Greedy => greedy_select(state, budget),
        Algorithm::BruteForce => brute_force_select(state, budget, config.brute_force_cap as u128)?,
        Algorithm::MeasurementGreedy => measurement_greedy_select(&instance.graph, budget),
        Algorithm::CoverageGreedy => coverage_greedy_select(&instance.graph, budget),
        Algorithm::Random => {
            let mut rng = rng::stream(config.master_seed, trial, Purpose::Algorithm(algorithm.tag()));
            random_select(&instance.graph, budget, &mut rng)
        }
        Algorithm::Cmaes => {
            let seed = rng::stream(config.master_seed, trial, Purpose::Algorithm(algorithm.tag())).next_u64();
            let es = EsConfig {
                seed,
                ..config.es.clone()
            };
            cmaes_select(&instance.scenario, state, budget, &es)?
        }
    };
    if result.objective_trace.len() != result.selected.len() {
        let wall = result.wall_time_s;
        let evals = result.evaluations;
        result.score(state)?;
        result.wall_time_s = wall;
        result.evaluations = evals;
    }
    Ok(result)
}

/// Scenario for one trial: the setting's overrides plus, when enabled,
/// freshly drawn candidates.
pub fn trial_scenario(config: &ExperimentConfig, base: &Scenario, setting: &Setting, trial: u64) -> Result<Scenario> {
    let mut s = setting.apply(base)?;
    if config.resample_candidates {
        let region = config.candidate_region(base);
        let mut rng = rng::stream(config.master_seed, trial, Purpose::Candidates);
        let points = (0..s.m())
            .map(|_| DVector::from_iterator(region.len(), region.iter().map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())))
            .collect();
        s = s.with_candidates(points);
    }
    Ok(s)
}

fn setting_value(s: &Scenario) -> f64 {
    s.positions.first().map_or(f64::NAN, |p| p.covariance()[(0, 0)].sqrt())
}

/// Simulate one trial and run every configured algorithm on the same instance:
/// select, restrict the graph to the selection, solve MAP from the ground truth,
/// and score RMSE. Per-algorithm errors are collected, not propagated.
pub fn run_trial(config: &ExperimentConfig, scenario: Scenario, setting: &str, trial: u64) -> Result<TrialOutput> {
    let start = Instant::now();
    let instance = Instance::simulate(scenario, config.master_seed, trial, config.edge_reference)?;
    let state = InfoState::from_instance(&instance, config.fim_mode)?;
    let scenario = &instance.scenario;
    let mut out = TrialOutput {
        prior_rmse: rmse(&scenario.prior_means(), &instance.truth)?,
        ..TrialOutput::default()
    };
    for &algorithm in &config.algorithms {
        let outcome = run_algorithm(algorithm, &instance, &state, config, trial).and_then(|sel| {
            let graph = instance.graph.restricted_to(&sel.selected);
            let loc = map_solve(scenario, &graph, &instance.measurements, &instance.truth, &config.solve)?;
            Ok((sel, loc))
        });
        match outcome {
            Ok((sel, loc)) => out.records.push(TrialRecord {
                setting: setting.to_string(),
                trial,
                algorithm,
                k: scenario.budget,
                cutoff: scenario.cutoff,
                prior_sigma: setting_value(scenario),
                f_norm: sel.value(),
                rmse_m: rmse(&loc.estimates, &instance.truth)?,
                runtime_s: if config.record_runtime { sel.wall_time_s } else { 0.0 },
                converged_all: loc.all_converged(),
                selected: sel.selected,
                objective_trace: sel.objective_trace,
                evaluations: sel.evaluations,
            }),
            Err(e) => out.failures.push(TrialFailure {
                setting: setting.to_string(),
                trial,
                algorithm,
                error: e.to_string(),
            }),
        }
    }
    out.total_time_s = start.elapsed().as_secs_f64();
    log::debug!("trial {setting}/{trial} finished in {:.3}s", out.total_time_s);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Experiments

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: String,
    pub algorithm: Algorithm,
    pub k: usize,
    pub cutoff: f64,
    pub prior_sigma: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub runtime_mean: f64,
    pub runtime_std: f64,
    pub f_norm_mean: f64,
    pub trials: usize,
    pub expected_trials: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn get(&self, setting: &str, algorithm: Algorithm) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.setting == setting && r.algorithm == algorithm)
    }

    /// Rows whose trial count falls short of the configured number.
    pub fn incomplete(&self) -> impl Iterator<Item = &SummaryRow> {
        self.rows.iter().filter(|r| r.trials < r.expected_trials)
    }
}

/// Aggregate records per (setting, algorithm) in first-seen order.
pub fn summarize(records: &[TrialRecord], expected_trials: usize) -> SummaryTable {
    let mut order: Vec<(String, Algorithm)> = Vec::new();
    let mut groups: BTreeMap<(String, Algorithm), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.setting.clone(), r.algorithm);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let rows = order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let rmse: Vec<f64> = rs.iter().map(|r| r.rmse_m).collect();
            let time: Vec<f64> = rs.iter().map(|r| r.runtime_s).collect();
            let f: Vec<f64> = rs.iter().map(|r| r.f_norm).collect();
            SummaryRow {
                setting: key.0.clone(),
                algorithm: key.1,
                k: rs[0].k,
                cutoff: rs[0].cutoff,
                prior_sigma: rs[0].prior_sigma,
                rmse_mean: stats::mean(&rmse),
                rmse_std: stats::std_dev(&rmse),
                runtime_mean: stats::mean(&time),
                runtime_std: stats::std_dev(&time),
                f_norm_mean: stats::mean(&f),
                trials: rs.len(),
                expected_trials,
            }
        })
        .collect();
    SummaryTable { rows }
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub summary: SummaryTable,
}

impl ExperimentOutput {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Run every (setting, trial) pair not already in `done`, in parallel, and
/// merge with `previous` records. Output order is (setting, trial, algorithm)
/// following the configuration, independent of scheduling.
pub fn run_experiment(config: &ExperimentConfig, previous: &[TrialRecord]) -> Result<ExperimentOutput> {
    config.validate()?;
    let base = config.base_scenario()?;
    let done: BTreeSet<(String, u64)> = previous.iter().map(|r| (r.setting.clone(), r.trial)).collect();

    let mut jobs = Vec::new();
    for (si, setting) in config.settings.iter().enumerate() {
        for trial in 0..config.trials as u64 {
            if !done.contains(&(setting.label.clone(), trial)) {
                jobs.push((si, trial));
            }
        }
    }

    let outputs: Vec<(usize, u64, Result<TrialOutput>)> = jobs
        .par_iter()
        .map(|&(si, trial)| {
            let setting = &config.settings[si];
            let out = trial_scenario(config, &base, setting, trial)
                .and_then(|s| run_trial(config, s, &setting.label, trial));
            (si, trial, out)
        })
        .collect();

    let setting_index: BTreeMap<&str, usize> =
        config.settings.iter().enumerate().map(|(i, s)| (s.label.as_str(), i)).collect();
    let algorithm_index = |a: Algorithm| config.algorithms.iter().position(|x| *x == a).unwrap_or(usize::MAX);

    let mut records: Vec<TrialRecord> = previous.to_vec();
    let mut failures = Vec::new();
    for (si, trial, out) in outputs {
        match out {
            Ok(o) => {
                records.extend(o.records);
                failures.extend(o.failures);
            }
            Err(e) => {
                for &algorithm in &config.algorithms {
                    failures.push(TrialFailure {
                        setting: config.settings[si].label.clone(),
                        trial,
                        algorithm,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    let key = |setting: &str, trial: u64, a: Algorithm| {
        (setting_index.get(setting).copied().unwrap_or(usize::MAX), trial, algorithm_index(a))
    };
    records.sort_by_key(|r| key(&r.setting, r.trial, r.algorithm));
    failures.sort_by_key(|f| key(&f.setting, f.trial, f.algorithm));
    let summary = summarize(&records, config.trials);
    Ok(ExperimentOutput {
        records,
        failures,
        summary,
    })
}

// ---------------------------------------------------------------------------
// Export

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `setting,trial,algorithm,k,cutoff,prior_sigma,f_norm,rmse_m,runtime_s,converged_all`.
/// An infinite cutoff is written as `inf`.
pub fn write_records_csv(records: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        &RECORDS_HEADER,
        records.iter().map(|r| {
            vec![
                r.setting.clone(),
                r.trial.to_string(),
                r.algorithm.to_string(),
                r.k.to_string(),
                r.cutoff.to_string(),
                r.prior_sigma.to_string(),
                r.f_norm.to_string(),
                r.rmse_m.to_string(),
                r.runtime_s.to_string(),
                r.converged_all.to_string(),
            ]
        }),
    )
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.iter().ne(RECORDS_HEADER.iter().copied()) {
        return Err(Error::field("header", format!("unexpected records header in {}", path.display())));
    }
    r.deserialize::<TrialRecord>()
        .map(|row| row.map_err(|e| Error::csv(path, e)))
        .collect()
}

const SUMMARY_HEADER: [&str; 12] = [
    "setting",
    "algorithm",
    "k",
    "cutoff",
    "prior_sigma",
    "rmse_mean_m",
    "rmse_std_m",
    "runtime_mean_s",
    "runtime_std_s",
    "f_norm_mean",
    "trials",
    "expected_trials",
];

pub fn write_summary_csv(summary: &SummaryTable, path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        &SUMMARY_HEADER,
        summary.rows.iter().map(|r| {
            vec![
                r.setting.clone(),
                r.algorithm.to_string(),
                r.k.to_string(),
                r.cutoff.to_string(),
                r.prior_sigma.to_string(),
                r.rmse_mean.to_string(),
                r.rmse_std.to_string(),
                r.runtime_mean.to_string(),
                r.runtime_std.to_string(),
                r.f_norm_mean.to_string(),
                r.trials.to_string(),
                r.expected_trials.to_string(),
            ]
        }),
    )
}

/// Summary as JSON. Infinite cutoffs become `null`.
pub fn summary_json(summary: &SummaryTable) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serialization cannot fail");
    s.push('\n');
    s
}

pub fn write_summary_json(summary: &SummaryTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, summary_json(summary)).map_err(|e| Error::io(path, e))
}

/// Objective traces: `setting,trial,algorithm,step,f_norm`.
pub fn write_traces_csv(records: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["setting", "trial", "algorithm", "step", "f_norm"],
        records.iter().flat_map(|r| {
            r.objective_trace.iter().enumerate().map(move |(step, f)| {
                vec![
                    r.setting.clone(),
                    r.trial.to_string(),
                    r.algorithm.to_string(),
                    (step + 1).to_string(),
                    f.to_string(),
                ]
            })
        }),
    )
}

pub fn write_failures_csv(failures: &[TrialFailure], path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["setting", "trial", "algorithm", "error"],
        failures.iter().map(|f| {
            vec![
                f.setting.clone(),
                f.trial.to_string(),
                f.algorithm.to_string(),
                f.error.clone(),
            ]
        }),
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::Config(format!("unknown format `{other}`"))),
        }
    }
}

/// Write `records.csv`, `traces.csv`, `summary.{csv,json}` and, when any
/// cell failed, `failures.csv` into `dir`.
pub fn export_experiment(output: &ExperimentOutput, dir: impl AsRef<Path>, format: ExportFormat) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_records_csv(&output.records, dir.join("records.csv"))?;
    write_traces_csv(&output.records, dir.join("traces.csv"))?;
    match format {
        ExportFormat::Csv => write_summary_csv(&output.summary, dir.join("summary.csv"))?,
        ExportFormat::Json => write_summary_json(&output.summary, dir.join("summary.json"))?,
    }
    let failures = dir.join("failures.csv");
    if output.failures.is_empty() {
        if failures.exists() {
            fs::remove_file(&failures).map_err(|e| Error::io(&failures, e))?;
        }
    } else {
        write_failures_csv(&output.failures, failures)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Bound certification

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationRow {
    pub instance: u64,
    pub k: usize,
    pub greedy: f64,
    pub optimum: f64,
    pub ratio: f64,
    pub holds: bool,
    /// Greedy value equals the optimum to relative `1e-9`.
    pub optimal: bool,
}

/// Greedy versus brute force on `instances` random scenarios drawn from
/// `spec`, for every budget in `budgets`.
pub fn certify_instances(
    spec: &SyntheticSpec,
    instances: u64,
    budgets: &[usize],
    master_seed: u64,
    mode: FimMode,
) -> Result<Vec<CertificationRow>> {
    let rows: Vec<Result<Vec<CertificationRow>>> = (0..instances)
        .into_par_iter()
        .map(|t| {
            let seed = rng::stream(master_seed, t, Purpose::Scenario).next_u64();
            let scenario = generate_random_scenario(spec, seed)?;
            let instance = Instance::simulate(scenario, master_seed, t, EdgeReference::GroundTruth)?;
            let state = InfoState::from_instance(&instance, mode)?;
            budgets
                .iter()
                .map(|&k| {
                    let budget = Budget::new(k, state.m())?;
                    let g = greedy_select(&state, budget);
                    let b = brute_force_select(&state, budget, u128::MAX)?;
                    let cert = crate::selection::certify_bound(&g, &b)?;
                    let optimal = (cert.optimal_value - cert.greedy_value).abs() <= 1e-9 * cert.optimal_value.abs().max(1.0);
                    Ok(CertificationRow {
                        instance: t,
                        k,
                        greedy: cert.greedy_value,
                        optimum: cert.optimal_value,
                        ratio: cert.ratio,
                        holds: cert.holds,
                        optimal,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

pub fn write_certification_csv(rows: &[CertificationRow], path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["instance", "k", "greedy", "optimum", "ratio", "holds", "optimal"],
        rows.iter().map(|r| {
            vec![
                r.instance.to_string(),
                r.k.to_string(),
                r.greedy.to_string(),
                r.optimum.to_string(),
                r.ratio.to_string(),
                r.holds.to_string(),
                r.optimal.to_string(),
            ]
        }),
    )
}
