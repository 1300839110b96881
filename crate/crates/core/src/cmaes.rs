//! CMA-ES over stacked beacon coordinates.
//!
//! A search point `a` in `R^(d*K)` holds `K` beacon positions. It is scored by
//! snapping each slot to a distinct candidate and evaluating the normalized
//! objective of the snapped subset, so the continuous optimizer sees the
//! discrete landscape directly. Strategy parameters are the usual defaults
//! (Hansen's tutorial): `lambda = 4 + floor(3 ln N)`, `mu = lambda / 2`,
//! log-linear recombination weights.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::information::InfoState;
use crate::rng::{self, Purpose};
use crate::scenario::{BeaconCandidate, BeaconId, Scenario};
use crate::selection::{Algorithm, Budget, EsReport, SelectionResult};

/// Restarts allowed after the covariance loses positive definiteness.
pub const MAX_RESTARTS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsConfig {
    /// Offspring per generation; `None` uses `4 + floor(3 ln(dK))`.
    pub population_size: Option<usize>,
    /// Initial step size in meters; `None` uses 0.3 x the candidate
    /// bounding-box diagonal.
    pub initial_step: Option<f64>,
    pub max_evaluations: usize,
    /// Minimum improvement of the best value over the stagnation window.
    pub stagnation_tolerance: f64,
    pub stagnation_generations: usize,
    pub seed: u64,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            population_size: None,
            initial_step: None,
            max_evaluations: 3000,
            stagnation_tolerance: 1e-9,
            stagnation_generations: 20,
            seed: 0,
        }
    }
}

impl EsConfig {
    pub fn validate(&self, dimension: usize) -> Result<()> {
        let lambda = self.lambda(dimension);
        if lambda < 4 {
            return Err(Error::Config(format!("population size must be at least 4, got {lambda}")));
        }
        if self.max_evaluations < lambda {
            return Err(Error::Config(format!(
                "max_evaluations ({}) must be at least the population size ({lambda})",
                self.max_evaluations
            )));
        }
        if let Some(s) = self.initial_step {
            if !(s > 0.0) {
                return Err(Error::Config("initial_step must be positive".into()));
            }
        }
        if !(self.stagnation_tolerance > 0.0) || self.stagnation_generations == 0 {
            return Err(Error::Config("stagnation tolerance and window must be positive".into()));
        }
        Ok(())
    }

    fn lambda(&self, dimension: usize) -> usize {
        self.population_size
            .unwrap_or_else(|| 4 + (3.0 * (dimension as f64).ln()).floor() as usize)
    }
}

/// Snap each `d`-dimensional slot of `a`, in slot order, to its nearest
/// candidate not taken by an earlier slot (ties to the lowest id).
pub fn snap_to_candidates(a: &[f64], dim: usize, candidates: &[BeaconCandidate]) -> Vec<BeaconId> {
    let slots = a.len() / dim;
    let mut taken = vec![false; candidates.len()];
    let mut out = Vec::with_capacity(slots);
    for slot in a.chunks_exact(dim).take(candidates.len()) {
        let mut best: Option<(usize, f64)> = None;
        for (k, c) in candidates.iter().enumerate() {
            if taken[k] {
                continue;
            }
            let d2: f64 = slot.iter().zip(c.position.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            if best.is_none_or(|(_, bd)| d2 < bd) {
                best = Some((k, d2));
            }
        }
        let (k, _) = best.expect("fewer slots than candidates");
        taken[k] = true;
        out.push(candidates[k].id);
    }
    out
}

struct Params {
    n: usize,
    lambda: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Params {
    fn new(n: usize, lambda: usize) -> Self {
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let nf = n as f64;
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Params {
            n,
            lambda,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

/// Distribution state of one CMA-ES run.
#[derive(Clone, Debug)]
pub struct EsState {
    pub mean: DVector<f64>,
    pub step_size: f64,
    pub covariance: DMatrix<f64>,
    pub path_sigma: DVector<f64>,
    pub path_c: DVector<f64>,
    pub generation: usize,
}

impl EsState {
    fn new(mean: DVector<f64>, step_size: f64) -> Self {
        let n = mean.len();
        EsState {
            mean,
            step_size,
            covariance: DMatrix::identity(n, n),
            path_sigma: DVector::zeros(n),
            path_c: DVector::zeros(n),
            generation: 0,
        }
    }
}

fn random_mean<R: Rng + ?Sized>(candidates: &[BeaconCandidate], k: usize, dim: usize, rng: &mut R) -> DVector<f64> {
    let picks = rand::seq::index::sample(rng, candidates.len(), k);
    let mut mean = DVector::zeros(k * dim);
    for (slot, idx) in picks.into_iter().enumerate() {
        mean.rows_mut(slot * dim, dim).copy_from(&candidates[idx].position);
    }
    mean
}

fn bounding_diagonal(candidates: &[BeaconCandidate], dim: usize) -> f64 {
    (0..dim)
        .map(|axis| {
            let (lo, hi) = candidates.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                (lo.min(c.position[axis]), hi.max(c.position[axis]))
            });
            (hi - lo).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Eigendecomposition of a covariance that must stay positive definite.
fn decompose(c: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    if c.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let sym = (c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return None;
    }
    let sd = eig.eigenvalues.map(f64::sqrt);
    Some((eig.eigenvectors, sd))
}

/// Why a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    MaxEvaluations,
    Stagnation,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::MaxEvaluations => "max_evaluations",
            Termination::Stagnation => "stagnation",
        }
    }
}

/// Result of [`maximize`]: the best point seen and what it evaluated to.
#[derive(Clone, Debug)]
pub struct EsOutcome<T> {
    pub best_value: f64,
    pub best_point: DVector<f64>,
    pub best_payload: T,
    pub evaluations: u64,
    pub generations: usize,
    pub restarts: usize,
    pub termination: Termination,
    pub best_per_generation: Vec<f64>,
}

/// Maximize `objective` with (mu/mu_w, lambda)-CMA-ES.
///
/// `objective` returns a value and a payload kept alongside the best point.
/// `initial_mean` is called at the start and after each restart; a restart
/// happens when the covariance stops being positive definite, at most
/// [`MAX_RESTARTS`] times.
pub fn maximize<T, R, F, M>(
    mut objective: F,
    mut initial_mean: M,
    sigma0: f64,
    config: &EsConfig,
    rng: &mut R,
) -> Result<EsOutcome<T>>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<(f64, T)>,
    M: FnMut(&mut R) -> DVector<f64>,
{
    let mut es = EsState::new(initial_mean(rng), sigma0);
    let n = es.mean.len();
    config.validate(n)?;
    let params = Params::new(n, config.lambda(n));

    let mut evaluations = 1u64;
    let (v0, p0) = objective(es.mean.as_slice())?;
    let mut best = (v0, es.mean.clone(), p0);
    let mut history: Vec<f64> = Vec::new();
    let mut restarts = 0usize;
    let mut generations = 0usize;

    let termination = 'outer: loop {
        let Some((b, d)) = decompose(&es.covariance) else {
            if restarts == MAX_RESTARTS {
                return Err(Error::CovarianceBreakdown(restarts));
            }
            restarts += 1;
            log::warn!("CMA-ES covariance not positive definite; restart {restarts}");
            es = EsState::new(initial_mean(rng), sigma0);
            continue;
        };

        let mut offspring: Vec<(f64, DVector<f64>)> = Vec::with_capacity(params.lambda);
        for _ in 0..params.lambda {
            if evaluations as usize >= config.max_evaluations {
                break 'outer Termination::MaxEvaluations;
            }
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = &b * z.component_mul(&d);
            let x = &es.mean + &y * es.step_size;
            evaluations += 1;
            let (value, payload) = objective(x.as_slice())?;
            if value > best.0 {
                best = (value, x, payload);
            }
            offspring.push((value, y));
        }
        offspring.sort_by(|a, b| b.0.total_cmp(&a.0));

        let mut y_w = DVector::zeros(n);
        for (w, (_, y)) in params.weights.iter().zip(&offspring) {
            y_w += y * *w;
        }
        es.mean += &y_w * es.step_size;

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let c_inv_sqrt_yw = &b * (b.transpose() * &y_w).component_div(&d);
        es.path_sigma = &es.path_sigma * (1.0 - params.c_sigma)
            + c_inv_sqrt_yw * (params.c_sigma * (2.0 - params.c_sigma) * params.mu_eff).sqrt();
        let gen = es.generation as i32 + 1;
        let ps_norm = es.path_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - params.c_sigma).powi(2 * gen)).sqrt()
            < (1.4 + 2.0 / (params.n as f64 + 1.0)) * params.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        es.path_c = &es.path_c * (1.0 - params.c_c) + &y_w * (h * (params.c_c * (2.0 - params.c_c) * params.mu_eff).sqrt());

        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, (_, y)) in params.weights.iter().zip(&offspring) {
            rank_mu += y * y.transpose() * *w;
        }
        let delta_h = (1.0 - h) * params.c_c * (2.0 - params.c_c);
        es.covariance = &es.covariance * (1.0 - params.c_1 - params.c_mu)
            + (&es.path_c * es.path_c.transpose() + &es.covariance * delta_h) * params.c_1
            + rank_mu * params.c_mu;
        es.step_size *= ((params.c_sigma / params.d_sigma) * (ps_norm / params.chi_n - 1.0)).exp();
        es.generation += 1;
        generations += 1;

        history.push(best.0);
        let window = config.stagnation_generations;
        if history.len() > window && history[history.len() - 1] - history[history.len() - 1 - window] < config.stagnation_tolerance {
            break Termination::Stagnation;
        }
        if !es.step_size.is_finite() || es.step_size <= 0.0 {
            es.covariance.fill(f64::NAN);
        }
    };

    Ok(EsOutcome {
        best_value: best.0,
        best_point: best.1,
        best_payload: best.2,
        evaluations,
        generations,
        restarts,
        termination,
        best_per_generation: history,
    })
}

/// Maximize `f~(snap(a))` with CMA-ES and return the best snapped subset seen.
pub fn cmaes_select(
    scenario: &Scenario,
    state: &InfoState,
    budget: Budget,
    config: &EsConfig,
) -> Result<SelectionResult> {
    let start = Instant::now();
    let dim = scenario.dimension;
    let k = budget.get();
    if k > scenario.m() {
        return Err(Error::InvalidBudget {
            budget: k,
            candidates: scenario.m(),
        });
    }
    let candidates = &scenario.candidates;
    let mut rng = rng::stream(config.seed, 0, Purpose::Algorithm(Algorithm::Cmaes.tag()));
    let sigma0 = config
        .initial_step
        .unwrap_or_else(|| (0.3 * bounding_diagonal(candidates, dim)).max(1e-3));

    let outcome = maximize(
        |a| {
            let subset = snap_to_candidates(a, dim, candidates);
            Ok((state.evaluate_subset(&subset)?, subset))
        },
        |rng| random_mean(candidates, k, dim, rng),
        sigma0,
        config,
        &mut rng,
    )?;

    let mut result = SelectionResult::new(Algorithm::Cmaes, outcome.best_payload);
    result.score(state)?;
    result.evaluations = outcome.evaluations;
    result.cmaes = Some(EsReport {
        generations: outcome.generations,
        restarts: outcome.restarts,
        termination: outcome.termination.as_str().into(),
        best_per_generation: outcome.best_per_generation,
    });
    result.wall_time_s = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Per-generation best values as `generation,best_f_norm`.
pub fn write_convergence_csv(report: &EsReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["generation", "best_f_norm"]).map_err(|e| Error::csv(path, e))?;
    for (g, v) in report.best_per_generation.iter().enumerate() {
        w.write_record([(g + 1).to_string(), v.to_string()]).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cands(points: &[&[f64]]) -> Vec<BeaconCandidate> {
        points
            .iter()
            .enumerate()
            .map(|(k, p)| BeaconCandidate {
                id: BeaconId::from_index(k),
                position: DVector::from_column_slice(p),
            })
            .collect()
    }

    #[test]
    fn exact_slots_snap_to_themselves() {
        let c = cands(&[&[0.0, 0.0], &[5.0, 0.0], &[0.0, 5.0], &[5.0, 5.0]]);
        let a = [5.0, 5.0, 0.0, 0.0, 0.0, 5.0];
        assert_eq!(snap_to_candidates(&a, 2, &c), vec![BeaconId(4), BeaconId(1), BeaconId(3)]);
    }

    #[test]
    fn collisions_fall_to_next_nearest() {
        let c = cands(&[&[0.0, 0.0], &[10.0, 0.0], &[1.0, 0.0], &[3.0, 0.0]]);
        // both slots nearest to candidate 3 at (1, 0)
        let a = [1.1, 0.0, 0.9, 0.0];
        assert_eq!(snap_to_candidates(&a, 2, &c), vec![BeaconId(3), BeaconId(1)]);
    }

    #[test]
    fn equidistant_tie_goes_to_lowest_id() {
        let c = cands(&[&[2.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(snap_to_candidates(&[1.0, 0.0], 2, &c), vec![BeaconId(1)]);
    }

    fn run(f: impl Fn(&[f64]) -> f64, n: usize, evals: usize) -> EsOutcome<()> {
        let cfg = EsConfig {
            max_evaluations: evals,
            stagnation_tolerance: 1e-300,
            stagnation_generations: 1000,
            ..EsConfig::default()
        };
        let mut rng = rng::stream(1, 0, Purpose::Other(0));
        maximize(|x| Ok((-f(x), ())), |_| DVector::from_element(n, 3.0), 1.0, &cfg, &mut rng).unwrap()
    }

    #[test]
    fn converges_on_the_sphere() {
        // the standard strategy reaches 1e-10 on the 10-D sphere in roughly
        // 1.5k to 2k evaluations
        let out = run(|x| x.iter().map(|v| v * v).sum(), 10, 4000);
        assert!(-out.best_value < 1e-10, "best {}", -out.best_value);
        assert_eq!(out.termination, Termination::MaxEvaluations);
    }

    #[test]
    fn learns_an_ill_conditioned_ellipsoid() {
        // condition number 1e6; needs the covariance to adapt
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| 1e6f64.powf(i as f64 / 7.0) * v * v).sum();
        let out = run(f, 8, 8000);
        assert!(-out.best_value < 1e-8, "best {}", -out.best_value);
        assert!(out.best_point.iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn default_population_size() {
        let cfg = EsConfig::default();
        assert_eq!(cfg.lambda(15), 4 + (3.0f64 * 15f64.ln()).floor() as usize);
        assert_eq!(cfg.lambda(2), 6);
    }

    #[test]
    fn config_validation() {
        let mut cfg = EsConfig {
            population_size: Some(3),
            ..EsConfig::default()
        };
        assert!(cfg.validate(6).is_err());
        cfg.population_size = Some(10);
        cfg.max_evaluations = 5;
        assert!(cfg.validate(6).is_err());
        cfg.max_evaluations = 10;
        assert!(cfg.validate(6).is_ok());
    }
}
