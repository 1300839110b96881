//! Problem instances: positions with Gaussian priors, candidate beacon sites,
//! the cutoff-induced bipartite measurement graph, and simulation of ground
//! truth and noisy range measurements.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Distance below which a position and a beacon are treated as coincident.
pub const COINCIDENT_TOLERANCE: f64 = 1e-9;

/// One-based identifier of a candidate beacon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeaconId(pub usize);

impl BeaconId {
    /// Zero-based index into the candidate list.
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn from_index(index: usize) -> Self {
        BeaconId(index + 1)
    }
}

impl fmt::Display for BeaconId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Gaussian prior of one unknown position.
#[derive(Clone, Debug)]
pub struct PositionSpec {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    sqrt_covariance: DMatrix<f64>,
}

impl PartialEq for PositionSpec {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.covariance == other.covariance
    }
}

impl PositionSpec {
    /// Prior with full covariance. Fails unless the covariance is square,
    /// symmetric and Cholesky-factorizable.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "prior mean has length {d} but covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite { index: 0 });
        }
        let scale = covariance.amax().max(f64::MIN_POSITIVE);
        if (&covariance - covariance.transpose()).amax() > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite { index: 0 });
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { index: 0 })?;
        let precision = chol.inverse();
        let sqrt_covariance = chol.l();
        Ok(PositionSpec {
            mean,
            covariance,
            precision,
            sqrt_covariance,
        })
    }

    /// Isotropic prior `variance * I`.
    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * variance)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Inverse covariance.
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draw one sample from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.sqrt_covariance * z
    }

    fn isotropic_variance(&self) -> Option<f64> {
        let v = self.covariance[(0, 0)];
        let d = self.dim();
        (self.covariance == DMatrix::identity(d, d) * v).then_some(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeaconCandidate {
    pub id: BeaconId,
    pub position: DVector<f64>,
}

/// Range noise variances.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseModel {
    Constant(f64),
    /// Explicit per-edge variances keyed by (position index, beacon id).
    /// Edges missing from the table fall back to `default`.
    PerEdge {
        default: f64,
        table: BTreeMap<(usize, BeaconId), f64>,
    },
}

impl NoiseModel {
    pub fn variance(&self, position: usize, beacon: BeaconId) -> f64 {
        match self {
            NoiseModel::Constant(v) => *v,
            NoiseModel::PerEdge { default, table } => {
                table.get(&(position, beacon)).copied().unwrap_or(*default)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match self {
            NoiseModel::Constant(v) if !positive(*v) => {
                Err(Error::field("noise.constant_variance", "must be a positive number"))
            }
            NoiseModel::PerEdge { default, .. } if !positive(*default) => {
                Err(Error::field("noise.constant_variance", "must be a positive number"))
            }
            NoiseModel::PerEdge { table, .. } => {
                for (k, ((i, j), v)) in table.iter().enumerate() {
                    if !positive(*v) {
                        return Err(Error::field(
                            format!("noise.table[{k}]"),
                            format!("variance for edge ({i}, {j}) must be positive"),
                        ));
                    }
                }
                Ok(())
            }
            NoiseModel::Constant(_) => Ok(()),
        }
    }
}

/// A complete beacon placement problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub dimension: usize,
    pub positions: Vec<PositionSpec>,
    pub candidates: Vec<BeaconCandidate>,
    pub noise: NoiseModel,
    /// Maximum range at which a measurement exists; `f64::INFINITY` disables it.
    pub cutoff: f64,
    pub budget: usize,
}

impl Scenario {
    /// Check every invariant of the instance. Errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let d = self.dimension;
        if d != 2 && d != 3 {
            return Err(Error::field("dimension", format!("must be 2 or 3, got {d}")));
        }
        if self.positions.is_empty() {
            return Err(Error::field("positions", "at least one position is required"));
        }
        if self.candidates.is_empty() {
            return Err(Error::field("candidates", "at least one candidate is required"));
        }
        for (i, p) in self.positions.iter().enumerate() {
            if p.dim() != d {
                return Err(Error::field(
                    format!("positions[{i}].mean"),
                    format!("expected length {d}, got {}", p.dim()),
                ));
            }
        }
        for (k, c) in self.candidates.iter().enumerate() {
            if c.id != BeaconId::from_index(k) {
                return Err(Error::field(
                    format!("candidates[{k}].id"),
                    format!("ids must be 1..=m in order; expected {}, got {}", k + 1, c.id),
                ));
            }
            if c.position.len() != d {
                return Err(Error::field(
                    format!("candidates[{k}].position"),
                    format!("expected length {d}, got {}", c.position.len()),
                ));
            }
            if c.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::field(format!("candidates[{k}].position"), "non-finite coordinate"));
            }
        }
        if !(self.cutoff > 0.0) {
            return Err(Error::field("cutoff", "must be positive"));
        }
        let m = self.candidates.len();
        if self.budget < 1 || self.budget > m {
            return Err(Error::field(
                "budget",
                format!("must satisfy 1 <= budget <= {m} (number of candidates), got {}", self.budget),
            ));
        }
        self.noise.validate()
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn m(&self) -> usize {
        self.candidates.len()
    }

    pub fn candidate(&self, id: BeaconId) -> Result<&BeaconCandidate> {
        if id.0 == 0 {
            return Err(Error::UnknownBeacon(id));
        }
        self.candidates.get(id.index()).ok_or(Error::UnknownBeacon(id))
    }

    pub fn prior_means(&self) -> Vec<DVector<f64>> {
        self.positions.iter().map(|p| p.mean.clone()).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidField { field, reason } => Error::InvalidField {
                field,
                reason: format!("{reason} (in {})", path.display()),
            },
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| Error::field("<root>", e.to_string()))?;
        file.into_scenario()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&ScenarioFile::from(self))
            .expect("scenario serialization cannot fail");
        s.push('\n');
        s
    }

    /// Copy with the candidate set replaced (ids are reassigned 1..=m).
    pub fn with_candidates(&self, positions: Vec<DVector<f64>>) -> Scenario {
        let mut out = self.clone();
        out.candidates = positions
            .into_iter()
            .enumerate()
            .map(|(k, position)| BeaconCandidate {
                id: BeaconId::from_index(k),
                position,
            })
            .collect();
        out
    }
}

// ---------------------------------------------------------------------------
// JSON file format

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    dimension: usize,
    budget: usize,
    /// `null` encodes an infinite cutoff.
    cutoff: Option<f64>,
    noise: NoiseFile,
    positions: Vec<PositionFile>,
    candidates: Vec<CandidateFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseFile {
    mode: String,
    constant_variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Vec<NoiseEntry>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseEntry {
    i: usize,
    j: BeaconId,
    variance: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PositionFile {
    mean: Vec<f64>,
    covariance: CovarianceFile,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CovarianceFile {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateFile {
    id: BeaconId,
    position: Vec<f64>,
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        let noise = match &s.noise {
            NoiseModel::Constant(v) => NoiseFile {
                mode: "constant".into(),
                constant_variance: *v,
                table: None,
            },
            NoiseModel::PerEdge { default, table } => NoiseFile {
                mode: "per-edge-table".into(),
                constant_variance: *default,
                table: Some(
                    table
                        .iter()
                        .map(|(&(i, j), &variance)| NoiseEntry { i, j, variance })
                        .collect(),
                ),
            },
        };
        ScenarioFile {
            dimension: s.dimension,
            budget: s.budget,
            cutoff: s.cutoff.is_finite().then_some(s.cutoff),
            noise,
            positions: s
                .positions
                .iter()
                .map(|p| PositionFile {
                    mean: p.mean.iter().copied().collect(),
                    covariance: match p.isotropic_variance() {
                        Some(v) => CovarianceFile::Scalar(v),
                        None => CovarianceFile::Matrix(
                            p.covariance.row_iter().map(|r| r.iter().copied().collect()).collect(),
                        ),
                    },
                })
                .collect(),
            candidates: s
                .candidates
                .iter()
                .map(|c| CandidateFile {
                    id: c.id,
                    position: c.position.iter().copied().collect(),
                })
                .collect(),
        }
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        let d = self.dimension;
        let noise = match self.noise.mode.as_str() {
            "constant" => NoiseModel::Constant(self.noise.constant_variance),
            "per-edge-table" => {
                let mut table = BTreeMap::new();
                for e in self.noise.table.unwrap_or_default() {
                    table.insert((e.i, e.j), e.variance);
                }
                NoiseModel::PerEdge {
                    default: self.noise.constant_variance,
                    table,
                }
            }
            other => {
                return Err(Error::field(
                    "noise.mode",
                    format!("expected `constant` or `per-edge-table`, got `{other}`"),
                ))
            }
        };
        let mut positions = Vec::with_capacity(self.positions.len());
        for (i, p) in self.positions.into_iter().enumerate() {
            if p.mean.len() != d {
                return Err(Error::field(
                    format!("positions[{i}].mean"),
                    format!("expected length {d}, got {}", p.mean.len()),
                ));
            }
            let mean = DVector::from_vec(p.mean);
            let covariance = match p.covariance {
                CovarianceFile::Scalar(v) => DMatrix::identity(d, d) * v,
                CovarianceFile::Matrix(rows) => {
                    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                        return Err(Error::field(
                            format!("positions[{i}].covariance"),
                            format!("expected a scalar or a {d}x{d} matrix"),
                        ));
                    }
                    DMatrix::from_fn(d, d, |r, c| rows[r][c])
                }
            };
            let spec = PositionSpec::new(mean, covariance).map_err(|_| {
                Error::field(
                    format!("positions[{i}].covariance"),
                    "not symmetric positive definite",
                )
            })?;
            positions.push(spec);
        }
        let candidates = self
            .candidates
            .into_iter()
            .map(|c| BeaconCandidate {
                id: c.id,
                position: DVector::from_vec(c.position),
            })
            .collect();
        let scenario = Scenario {
            dimension: d,
            positions,
            candidates,
            noise,
            cutoff: self.cutoff.unwrap_or(f64::INFINITY),
            budget: self.budget,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

// ---------------------------------------------------------------------------
// Measurement graph

/// Bipartite graph between positions and candidate beacons. Neighbourhoods are
/// sorted by beacon id; `variances[i][k]` belongs to edge `(i, neighbours[i][k])`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementGraph {
    neighbours: Vec<Vec<BeaconId>>,
    variances: Vec<Vec<f64>>,
    incident: Vec<Vec<usize>>,
}

impl MeasurementGraph {
    /// Assemble a graph from explicit edge lists. `neighbours[i]` must be sorted
    /// and aligned with `variances[i]`.
    pub fn from_edges(m: usize, neighbours: Vec<Vec<BeaconId>>, variances: Vec<Vec<f64>>) -> Self {
        let mut incident = vec![Vec::new(); m];
        for (i, ns) in neighbours.iter().enumerate() {
            for j in ns {
                incident[j.index()].push(i);
            }
        }
        MeasurementGraph {
            neighbours,
            variances,
            incident,
        }
    }

    pub fn n(&self) -> usize {
        self.neighbours.len()
    }

    pub fn m(&self) -> usize {
        self.incident.len()
    }

    /// Beacons position `i` can measure, sorted by id.
    pub fn neighbourhood(&self, i: usize) -> &[BeaconId] {
        &self.neighbours[i]
    }

    pub fn variances(&self, i: usize) -> &[f64] {
        &self.variances[i]
    }

    /// Positions within range of beacon `j`, ascending.
    pub fn incident_positions(&self, j: BeaconId) -> &[usize] {
        &self.incident[j.index()]
    }

    pub fn degree(&self, j: BeaconId) -> usize {
        self.incident[j.index()].len()
    }

    pub fn edge_variance(&self, i: usize, j: BeaconId) -> Option<f64> {
        let k = self.neighbours.get(i)?.binary_search(&j).ok()?;
        Some(self.variances[i][k])
    }

    pub fn edge_count(&self) -> usize {
        self.neighbours.iter().map(Vec::len).sum()
    }

    /// All edges as `(position, beacon, variance)`, position-major.
    pub fn edges(&self) -> impl Iterator<Item = (usize, BeaconId, f64)> + '_ {
        self.neighbours.iter().zip(&self.variances).enumerate().flat_map(|(i, (ns, vs))| {
            ns.iter().zip(vs).map(move |(&j, &v)| (i, j, v))
        })
    }

    /// Subgraph keeping only edges to the given beacons. Beacon ids are kept.
    pub fn restricted_to(&self, beacons: &[BeaconId]) -> MeasurementGraph {
        let mut keep = vec![false; self.m()];
        for j in beacons {
            if let Some(k) = keep.get_mut(j.index()) {
                *k = true;
            }
        }
        let mut neighbours = Vec::with_capacity(self.n());
        let mut variances = Vec::with_capacity(self.n());
        for (ns, vs) in self.neighbours.iter().zip(&self.variances) {
            let (n, v): (Vec<_>, Vec<_>) =
                ns.iter().zip(vs).filter(|(j, _)| keep[j.index()]).map(|(j, v)| (*j, *v)).unzip();
            neighbours.push(n);
            variances.push(v);
        }
        MeasurementGraph::from_edges(self.m(), neighbours, variances)
    }
}

/// Build the cutoff graph. Edge `(i, j)` exists iff the distance between the
/// edge-defining point of position `i` (ground truth when supplied, otherwise
/// the prior mean) and beacon `j` is at most the cutoff. Coincident pairs are
/// dropped with a warning.
pub fn build_graph(scenario: &Scenario, truth: Option<&[DVector<f64>]>) -> Result<MeasurementGraph> {
    let d = scenario.dimension;
    if let Some(t) = truth {
        if t.len() != scenario.n() {
            return Err(Error::LengthMismatch {
                expected: scenario.n(),
                actual: t.len(),
            });
        }
    }
    for c in &scenario.candidates {
        if c.position.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "candidate {} has length {}, scenario dimension is {d}",
                c.id,
                c.position.len()
            )));
        }
    }
    let mut neighbours = Vec::with_capacity(scenario.n());
    let mut variances = Vec::with_capacity(scenario.n());
    for (i, spec) in scenario.positions.iter().enumerate() {
        let point = truth.map_or(spec.mean(), |t| &t[i]);
        if point.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "position {i} has length {}, scenario dimension is {d}",
                point.len()
            )));
        }
        let mut ns = Vec::new();
        let mut vs = Vec::new();
        for c in &scenario.candidates {
            let dist = (point - &c.position).norm();
            if dist > scenario.cutoff {
                continue;
            }
            if dist < COINCIDENT_TOLERANCE {
                log::warn!("dropping edge ({i}, {}): position coincides with beacon", c.id);
                continue;
            }
            ns.push(c.id);
            vs.push(scenario.noise.variance(i, c.id));
        }
        neighbours.push(ns);
        variances.push(vs);
    }
    Ok(MeasurementGraph::from_edges(scenario.m(), neighbours, variances))
}

/// Draw `x_i ~ N(prior_mean_i, prior_covariance_i)` independently per position.
pub fn sample_ground_truth<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Vec<DVector<f64>> {
    scenario.positions.iter().map(|p| p.sample(rng)).collect()
}

/// Noisy ranges for one trial, aligned with the graph's neighbourhoods.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    pub ground_truth: Vec<DVector<f64>>,
    ranges: Vec<Vec<f64>>,
    neighbours: Vec<Vec<BeaconId>>,
}

impl MeasurementSet {
    /// Ranges measured at position `i`, aligned with `graph.neighbourhood(i)`.
    pub fn ranges(&self, i: usize) -> &[f64] {
        &self.ranges[i]
    }

    pub fn range(&self, i: usize, j: BeaconId) -> Option<f64> {
        let k = self.neighbours.get(i)?.binary_search(&j).ok()?;
        Some(self.ranges[i][k])
    }

    pub fn len(&self) -> usize {
        self.ranges.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(position, beacon, range)` triples, position-major.
    pub fn iter(&self) -> impl Iterator<Item = (usize, BeaconId, f64)> + '_ {
        self.neighbours.iter().zip(&self.ranges).enumerate().flat_map(|(i, (ns, rs))| {
            ns.iter().zip(rs).map(move |(&j, &r)| (i, j, r))
        })
    }

    /// Write the `i,j,range` CSV dump (`i` zero-based, `j` the beacon id).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["i", "j", "range"]).map_err(|e| Error::csv(path, e))?;
        for (i, j, r) in self.iter() {
            w.write_record([i.to_string(), j.to_string(), r.to_string()])
                .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Read an `i,j,range` dump back as a triple list.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<(usize, BeaconId, f64)>> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        r.deserialize::<(usize, BeaconId, f64)>()
            .map(|row| row.map_err(|e| Error::csv(path, e)))
            .collect()
    }
}

/// Simulate `d_ij = ||x_i - a_j|| + eta_ij`, `eta_ij ~ N(0, sigma_ij^2)`, one
/// draw per edge in position-major, id-ascending order.
pub fn sample_measurements<R: Rng + ?Sized>(
    graph: &MeasurementGraph,
    truth: &[DVector<f64>],
    candidates: &[BeaconCandidate],
    rng: &mut R,
) -> Result<MeasurementSet> {
    if truth.len() != graph.n() {
        return Err(Error::LengthMismatch {
            expected: graph.n(),
            actual: truth.len(),
        });
    }
    let mut ranges = Vec::with_capacity(graph.n());
    for (i, x) in truth.iter().enumerate() {
        let rs = graph
            .neighbourhood(i)
            .iter()
            .zip(graph.variances(i))
            .map(|(&j, &var)| {
                let eta: f64 = rng.sample(StandardNormal);
                (x - &candidates[j.index()].position).norm() + var.sqrt() * eta
            })
            .collect();
        ranges.push(rs);
    }
    Ok(MeasurementSet {
        ground_truth: truth.to_vec(),
        ranges,
        neighbours: graph.neighbours.clone(),
    })
}

/// Which point decides whether an edge exists.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeReference {
    #[default]
    GroundTruth,
    PriorMean,
}

/// One simulated realization: truth, graph and measurements.
#[derive(Clone, Debug)]
pub struct Instance {
    pub scenario: Scenario,
    pub truth: Vec<DVector<f64>>,
    pub graph: MeasurementGraph,
    pub measurements: MeasurementSet,
}

impl Instance {
    /// Simulate trial `trial` of `scenario` from the master seed. Truth and
    /// measurements come from separate streams.
    pub fn simulate(scenario: Scenario, master_seed: u64, trial: u64, edges: EdgeReference) -> Result<Self> {
        scenario.validate()?;
        let truth = sample_ground_truth(&scenario, &mut rng::stream(master_seed, trial, Purpose::Truth));
        let graph = match edges {
            EdgeReference::GroundTruth => build_graph(&scenario, Some(&truth))?,
            EdgeReference::PriorMean => build_graph(&scenario, None)?,
        };
        let measurements = sample_measurements(
            &graph,
            &truth,
            &scenario.candidates,
            &mut rng::stream(master_seed, trial, Purpose::Measurements),
        )?;
        Ok(Instance {
            scenario,
            truth,
            graph,
            measurements,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn scenario(means: &[&[f64]], beacons: &[&[f64]], cutoff: f64) -> Scenario {
        let d = means[0].len();
        Scenario {
            dimension: d,
            positions: means.iter().map(|m| PositionSpec::isotropic(v(m), 4.0).unwrap()).collect(),
            candidates: beacons
                .iter()
                .enumerate()
                .map(|(k, b)| BeaconCandidate {
                    id: BeaconId::from_index(k),
                    position: v(b),
                })
                .collect(),
            noise: NoiseModel::Constant(25.0),
            cutoff,
            budget: 1,
        }
    }

    #[test]
    fn infinite_cutoff_gives_complete_graph() {
        let s = scenario(&[&[0.0, 0.0], &[10.0, 3.0]], &[&[1.0, 1.0], &[50.0, 0.0], &[-3.0, 7.0]], f64::INFINITY);
        let g = build_graph(&s, None).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert_eq!(g.edge_variance(1, BeaconId(2)), Some(25.0));
    }

    #[test]
    fn three_four_five_cutoff() {
        let s = scenario(&[&[0.0, 0.0]], &[&[3.0, 4.0]], 5.0);
        assert_eq!(build_graph(&s, None).unwrap().edge_count(), 1);
        let s = scenario(&[&[0.0, 0.0]], &[&[3.0, 4.0]], 4.9);
        assert_eq!(build_graph(&s, None).unwrap().edge_count(), 0);
    }

    #[test]
    fn truth_defines_edges_when_supplied() {
        let s = scenario(&[&[0.0, 0.0]], &[&[3.0, 4.0]], 5.0);
        let far = vec![v(&[-10.0, 0.0])];
        assert_eq!(build_graph(&s, Some(&far)).unwrap().edge_count(), 0);
    }

    #[test]
    fn coincident_edge_is_dropped() {
        let s = scenario(&[&[1.0, 2.0]], &[&[1.0, 2.0], &[4.0, 2.0]], f64::INFINITY);
        let g = build_graph(&s, None).unwrap();
        assert_eq!(g.neighbourhood(0), &[BeaconId(2)]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut s = scenario(&[&[0.0, 0.0]], &[&[3.0, 4.0]], 5.0);
        s.candidates[0].position = v(&[3.0, 4.0, 0.0]);
        assert!(matches!(build_graph(&s, None), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn degenerate_prior_samples_the_mean() {
        let mut s = scenario(&[&[3.0, -2.0]], &[&[0.0, 0.0]], 5.0);
        s.positions[0] = PositionSpec::isotropic(v(&[3.0, -2.0]), 1e-18).unwrap();
        let x = sample_ground_truth(&s, &mut ChaCha20Rng::seed_from_u64(1));
        assert!((&x[0] - v(&[3.0, -2.0])).amax() < 1e-6);
    }

    #[test]
    fn non_spd_prior_is_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(PositionSpec::new(v(&[0.0, 0.0]), cov).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(PositionSpec::new(v(&[0.0, 0.0]), asym).is_err());
    }

    #[test]
    fn noiseless_measurements_are_exact() {
        let mut s = scenario(&[&[0.0, 0.0]], &[&[3.0, 4.0], &[-6.0, 8.0]], f64::INFINITY);
        s.noise = NoiseModel::Constant(1e-300);
        let truth = vec![v(&[0.0, 0.0])];
        let g = build_graph(&s, Some(&truth)).unwrap();
        let ms = sample_measurements(&g, &truth, &s.candidates, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        assert_eq!(ms.range(0, BeaconId(1)), Some(5.0));
        assert_eq!(ms.range(0, BeaconId(2)), Some(10.0));
    }

    #[test]
    fn empty_graph_gives_empty_measurements() {
        let s = scenario(&[&[0.0, 0.0]], &[&[300.0, 0.0]], 10.0);
        let truth = s.prior_means();
        let g = build_graph(&s, Some(&truth)).unwrap();
        let ms = sample_measurements(&g, &truth, &s.candidates, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        assert!(ms.is_empty());
    }

    #[test]
    fn per_edge_noise_table_overrides_default() {
        let mut s = scenario(&[&[0.0, 0.0]], &[&[3.0, 4.0], &[-6.0, 8.0]], f64::INFINITY);
        s.noise = NoiseModel::PerEdge {
            default: 25.0,
            table: BTreeMap::from([((0, BeaconId(2)), 100.0)]),
        };
        let g = build_graph(&s, None).unwrap();
        assert_eq!(g.variances(0), &[25.0, 100.0]);
    }

    #[test]
    fn minimal_scenario_round_trips() {
        let s = scenario(&[&[1.5, -2.0]], &[&[3.0, 4.0]], 5.0);
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn full_covariance_and_infinite_cutoff_round_trip() {
        let mut s = scenario(&[&[1.5, -2.0, 0.5]], &[&[3.0, 4.0, 1.0]], f64::INFINITY);
        let cov = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        s.positions[0] = PositionSpec::new(v(&[1.5, -2.0, 0.5]), cov).unwrap();
        s.noise = NoiseModel::PerEdge {
            default: 9.0,
            table: BTreeMap::from([((0, BeaconId(1)), 16.0)]),
        };
        let text = s.to_json();
        assert!(text.contains("\"cutoff\": null"));
        assert_eq!(Scenario::from_json(&text).unwrap(), s);
    }

    #[test]
    fn budget_above_m_names_budget() {
        let text = r#"{"dimension":2,"budget":3,"cutoff":5.0,
            "noise":{"mode":"constant","constant_variance":25.0},
            "positions":[{"mean":[0,0],"covariance":4.0}],
            "candidates":[{"id":1,"position":[1,1]}]}"#;
        let err = Scenario::from_json(text).unwrap_err();
        assert!(matches!(&err, Error::InvalidField { field, .. } if field == "budget"), "{err}");
    }

    #[test]
    fn non_spd_prior_names_field_at_load() {
        let text = r#"{"dimension":2,"budget":1,"cutoff":5.0,
            "noise":{"mode":"constant","constant_variance":25.0},
            "positions":[{"mean":[0,0],"covariance":4.0},{"mean":[0,0],"covariance":[[1,2],[2,1]]}],
            "candidates":[{"id":1,"position":[1,1]}]}"#;
        let err = Scenario::from_json(text).unwrap_err();
        assert!(err.to_string().contains("positions[1].covariance"), "{err}");
    }

    #[test]
    fn measurement_csv_round_trip() {
        let s = scenario(&[&[0.0, 0.0], &[5.0, 5.0]], &[&[3.0, 4.0], &[-6.0, 8.0]], f64::INFINITY);
        let inst = Instance::simulate(s, 11, 0, EdgeReference::GroundTruth).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        inst.measurements.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("i,j,range\n"));
        let back = MeasurementSet::read_csv(&path).unwrap();
        assert_eq!(back, inst.measurements.iter().collect::<Vec<_>>());
    }
}
