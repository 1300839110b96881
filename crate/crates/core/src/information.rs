//! Fisher information of range measurements and the D-optimal objective.
//!
//! The information matrix of all positions is block diagonal (one `d x d`
//! block per position), so `f(S) = log det(J(S) + J0)` is the sum of the
//! per-block log-determinants. Each selected beacon adds a rank-one term
//! `w * u u^T` to every block it can reach, which makes marginal gains a
//! matrix-determinant-lemma evaluation per affected block.
//!
//! Blocks are stored in a fixed 3x3 layout. Two-dimensional problems pad the
//! third axis with a unit diagonal entry, which leaves the determinant and the
//! top-left inverse untouched.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{BeaconId, Instance, MeasurementGraph, MeasurementSet, Scenario, COINCIDENT_TOLERANCE};

/// Refactorize a block after this many Sherman-Morrison updates.
pub const REFACTOR_INTERVAL: u32 = 64;

/// Gains in `[-GAIN_CLAMP, 0)` are reported as zero.
pub const GAIN_CLAMP: f64 = 1e-9;

/// How the expectation in the Fisher information is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FimMode {
    /// Exact expectation for Gaussian ranges: weight `1 / sigma^2`.
    Expected,
    /// Gradient outer product at the observed range: weight `r^2 / sigma^4`.
    #[default]
    OneSample,
}

impl std::str::FromStr for FimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expected" => Ok(FimMode::Expected),
            "one-sample" => Ok(FimMode::OneSample),
            other => Err(Error::Config(format!("unknown FIM mode `{other}`"))),
        }
    }
}

/// Rank-one information contributed by one edge: `weight * u u^T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeContribution {
    pub position: usize,
    pub beacon: BeaconId,
    dim: usize,
    direction: Vector3<f64>,
    pub weight: f64,
}

impl EdgeContribution {
    /// Unit vector from the beacon to the evaluation point.
    pub fn direction(&self) -> &[f64] {
        &self.direction.as_slice()[..self.dim]
    }

    /// The `d x d` contribution matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let u = DVector::from_column_slice(self.direction());
        &u * u.transpose() * self.weight
    }
}

/// Contribution of edge `(position, beacon)` evaluated at `point`.
///
/// `measured_range` is only read in [`FimMode::OneSample`].
pub fn edge_contribution(
    position: usize,
    beacon: BeaconId,
    point: &DVector<f64>,
    beacon_position: &DVector<f64>,
    variance: f64,
    measured_range: Option<f64>,
    mode: FimMode,
) -> Result<EdgeContribution> {
    let dim = point.len();
    if beacon_position.len() != dim || !(2..=3).contains(&dim) {
        return Err(Error::DimensionMismatch(format!(
            "point has length {dim}, beacon has length {}",
            beacon_position.len()
        )));
    }
    let diff = point - beacon_position;
    let range = diff.norm();
    if range <= COINCIDENT_TOLERANCE {
        return Err(Error::DegenerateEdge { position, beacon });
    }
    let mut direction = Vector3::zeros();
    for k in 0..dim {
        direction[k] = diff[k] / range;
    }
    let weight = match mode {
        FimMode::Expected => 1.0 / variance,
        FimMode::OneSample => {
            let measured = measured_range.ok_or(Error::MissingEdge { position, beacon })?;
            let residual = range - measured;
            residual * residual / (variance * variance)
        }
    };
    Ok(EdgeContribution {
        position,
        beacon,
        dim,
        direction,
        weight,
    })
}

fn log_det_and_inverse(m: &Matrix3<f64>) -> Option<(f64, Matrix3<f64>)> {
    let chol = m.cholesky()?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Some((log_det, chol.inverse()))
}

/// One `d x d` diagonal block of the information matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InfoBlock {
    dim: usize,
    matrix: Matrix3<f64>,
    inverse: Matrix3<f64>,
    log_det: f64,
    pending: u32,
}

impl InfoBlock {
    /// Block initialized to a prior precision matrix.
    pub fn from_precision(precision: &DMatrix<f64>) -> Option<Self> {
        let dim = precision.nrows();
        if !(2..=3).contains(&dim) || precision.ncols() != dim {
            return None;
        }
        let mut matrix = Matrix3::identity();
        for r in 0..dim {
            for c in 0..dim {
                matrix[(r, c)] = 0.5 * (precision[(r, c)] + precision[(c, r)]);
            }
        }
        let (log_det, inverse) = log_det_and_inverse(&matrix)?;
        Some(InfoBlock {
            dim,
            matrix,
            inverse,
            log_det,
            pending: 0,
        })
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |r, c| self.matrix[(r, c)])
    }

    /// `log det(A + w u u^T) - log det(A)`.
    #[inline]
    fn gain(&self, weight: f64, u: &Vector3<f64>) -> f64 {
        (weight * u.dot(&(self.inverse * u))).ln_1p()
    }

    fn add(&mut self, weight: f64, u: &Vector3<f64>) {
        if weight == 0.0 {
            return;
        }
        let a_inv_u = self.inverse * u;
        let q = weight * u.dot(&a_inv_u);
        self.matrix += u * u.transpose() * weight;
        self.inverse -= a_inv_u * a_inv_u.transpose() * (weight / (1.0 + q));
        self.log_det += q.ln_1p();
        self.pending += 1;
        if self.pending >= REFACTOR_INTERVAL {
            self.refactor();
        }
    }

    fn refactor(&mut self) {
        if let Some((log_det, inverse)) = log_det_and_inverse(&self.matrix) {
            self.log_det = log_det;
            self.inverse = inverse;
        }
        self.pending = 0;
    }
}

/// Information state for a (possibly partial) beacon selection.
///
/// Cloning is cheap: the per-beacon contributions are shared.
#[derive(Clone, Debug)]
pub struct InfoState {
    mode: FimMode,
    contributions: Arc<Vec<Vec<EdgeContribution>>>,
    prior_blocks: Arc<Vec<InfoBlock>>,
    blocks: Vec<InfoBlock>,
    selected: Vec<BeaconId>,
    is_selected: Vec<bool>,
    empty_objective: f64,
    fingerprint: u64,
}

impl InfoState {
    /// Empty-selection state: every block holds its prior precision.
    ///
    /// Contributions are evaluated at `eval_points` (normally the ground
    /// truth). One-sample mode needs the measurements.
    pub fn new(
        scenario: &Scenario,
        graph: &MeasurementGraph,
        eval_points: &[DVector<f64>],
        measurements: Option<&MeasurementSet>,
        mode: FimMode,
    ) -> Result<Self> {
        let n = scenario.n();
        if graph.n() != n || eval_points.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: if graph.n() != n { graph.n() } else { eval_points.len() },
            });
        }
        if mode == FimMode::OneSample && measurements.is_none() {
            return Err(Error::Config("one-sample FIM mode requires measurements".into()));
        }
        let mut prior_blocks = Vec::with_capacity(n);
        for (i, p) in scenario.positions.iter().enumerate() {
            prior_blocks.push(InfoBlock::from_precision(p.precision()).ok_or(Error::NotPositiveDefinite { index: i })?);
        }
        let mut contributions = vec![Vec::new(); scenario.m()];
        for (i, point) in eval_points.iter().enumerate() {
            for (&j, &var) in graph.neighbourhood(i).iter().zip(graph.variances(i)) {
                let measured = measurements.and_then(|ms| ms.range(i, j));
                let c = edge_contribution(i, j, point, &scenario.candidate(j)?.position, var, measured, mode)?;
                contributions[j.index()].push(c);
            }
        }
        Ok(Self::from_parts(mode, prior_blocks, contributions))
    }

    /// State for a simulated instance, evaluated at its ground truth.
    pub fn from_instance(instance: &Instance, mode: FimMode) -> Result<Self> {
        Self::new(
            &instance.scenario,
            &instance.graph,
            &instance.truth,
            Some(&instance.measurements),
            mode,
        )
    }

    /// Build directly from prior blocks and per-beacon contribution lists
    /// (`contributions[j.index()]`).
    pub fn from_parts(mode: FimMode, prior_blocks: Vec<InfoBlock>, contributions: Vec<Vec<EdgeContribution>>) -> Self {
        let mut h = DefaultHasher::new();
        mode.hash(&mut h);
        for b in &prior_blocks {
            for v in b.matrix.iter() {
                v.to_bits().hash(&mut h);
            }
        }
        for cs in &contributions {
            cs.len().hash(&mut h);
            for c in cs {
                c.position.hash(&mut h);
                c.weight.to_bits().hash(&mut h);
                for v in c.direction.iter() {
                    v.to_bits().hash(&mut h);
                }
            }
        }
        let empty_objective = prior_blocks.iter().map(InfoBlock::log_det).sum();
        let m = contributions.len();
        InfoState {
            mode,
            blocks: prior_blocks.clone(),
            prior_blocks: Arc::new(prior_blocks),
            contributions: Arc::new(contributions),
            selected: Vec::new(),
            is_selected: vec![false; m],
            empty_objective,
            fingerprint: h.finish(),
        }
    }

    pub fn mode(&self) -> FimMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    /// Number of candidate beacons.
    pub fn m(&self) -> usize {
        self.contributions.len()
    }

    pub fn blocks(&self) -> &[InfoBlock] {
        &self.blocks
    }

    pub fn selected(&self) -> &[BeaconId] {
        &self.selected
    }

    pub fn is_selected(&self, id: BeaconId) -> bool {
        self.is_selected.get(id.index()).copied().unwrap_or(false)
    }

    /// Contributions of beacon `id`, one per reachable position.
    pub fn contributions(&self, id: BeaconId) -> &[EdgeContribution] {
        &self.contributions[id.index()]
    }

    /// Hash of the instance data (priors and contributions). Two states with
    /// different fingerprints describe different problems.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// `f(S) = sum_i log det(block_i)`.
    pub fn objective(&self) -> f64 {
        self.blocks.iter().map(InfoBlock::log_det).sum()
    }

    /// `f(empty)`.
    pub fn empty_objective(&self) -> f64 {
        self.empty_objective
    }

    /// `f(S) - f(empty)`; exactly zero for the empty selection.
    pub fn normalized_objective(&self) -> f64 {
        if self.selected.is_empty() {
            return 0.0;
        }
        self.objective() - self.empty_objective
    }

    fn check(&self, id: BeaconId) -> Result<()> {
        if id.0 == 0 || id.0 > self.m() {
            return Err(Error::UnknownBeacon(id));
        }
        if self.is_selected[id.index()] {
            return Err(Error::AlreadySelected(id));
        }
        Ok(())
    }

    /// `f(S + j) - f(S)` via the determinant lemma on each affected block.
    pub fn marginal_gain(&self, id: BeaconId) -> Result<f64> {
        self.check(id)?;
        Ok(self.gain_unchecked(id.index()))
    }

    #[inline]
    pub(crate) fn gain_unchecked(&self, index: usize) -> f64 {
        let g: f64 = self.contributions[index]
            .iter()
            .map(|c| self.blocks[c.position].gain(c.weight, &c.direction))
            .sum();
        if (-GAIN_CLAMP..0.0).contains(&g) {
            0.0
        } else {
            g
        }
    }

    /// Add beacon `id` in place.
    pub fn select(&mut self, id: BeaconId) -> Result<()> {
        self.check(id)?;
        self.select_unchecked(id.index());
        Ok(())
    }

    pub(crate) fn select_unchecked(&mut self, index: usize) {
        for c in &self.contributions[index] {
            self.blocks[c.position].add(c.weight, &c.direction);
        }
        self.is_selected[index] = true;
        self.selected.push(BeaconId::from_index(index));
    }

    /// Copy of the state with beacon `id` added.
    pub fn apply_selection(&self, id: BeaconId) -> Result<InfoState> {
        let mut next = self.clone();
        next.select(id)?;
        Ok(next)
    }

    /// Empty-selection state over the same instance.
    pub fn reset(&self) -> InfoState {
        InfoState {
            blocks: self.prior_blocks.as_ref().clone(),
            selected: Vec::new(),
            is_selected: vec![false; self.m()],
            ..self.clone()
        }
    }

    /// `f~(subset)` evaluated from the prior blocks, ignoring the current
    /// selection. Duplicate ids are counted once.
    pub fn evaluate_subset(&self, subset: &[BeaconId]) -> Result<f64> {
        let mut state = self.reset();
        for &id in subset {
            if id.0 == 0 || id.0 > self.m() {
                return Err(Error::UnknownBeacon(id));
            }
            if !state.is_selected(id) {
                state.select_unchecked(id.index());
            }
        }
        Ok(state.normalized_objective())
    }
}
