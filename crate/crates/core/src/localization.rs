//! MAP and maximum-likelihood position estimation from range measurements.
//!
//! Positions are independent given the beacons, so each is solved on its own
//! with a damped Newton iteration on
//!
//! ```text
//! (x - m)^T P (x - m) + sum_j (||x - a_j|| - d_j)^2 / sigma_j^2
//! ```
//!
//! where `m`, `P` are the prior mean and precision (the MLE drops that term).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{MeasurementGraph, MeasurementSet, Scenario};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Damping {
    None,
    #[default]
    AdaptiveLevenberg,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub max_iterations: usize,
    pub damping: Damping,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            gradient_tolerance: 1e-9,
            step_tolerance: 1e-12,
            max_iterations: 100,
            damping: Damping::AdaptiveLevenberg,
        }
    }
}

const INITIAL_SHIFT: f64 = 1e-3;
const SHIFT_UP: f64 = 10.0;
const SHIFT_DOWN: f64 = 3.0;
const COINCIDENT_PERTURBATION: f64 = 1e-6;

/// One range measurement seen by a position.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeTerm {
    pub beacon: DVector<f64>,
    pub range: f64,
    pub variance: f64,
}

/// Gaussian prior term in information form.
#[derive(Clone, Copy, Debug)]
pub struct PriorTerm<'a> {
    pub mean: &'a DVector<f64>,
    pub precision: &'a DMatrix<f64>,
}

/// Objective of one position. Pass `prior = None` for the MLE objective.
pub fn map_objective(x: &DVector<f64>, prior: Option<PriorTerm<'_>>, terms: &[RangeTerm]) -> f64 {
    let prior_cost = prior.map_or(0.0, |p| {
        let e = x - p.mean;
        e.dot(&(p.precision * &e))
    });
    prior_cost
        + terms
            .iter()
            .map(|t| {
                let r = (x - &t.beacon).norm() - t.range;
                r * r / t.variance
            })
            .sum::<f64>()
}

/// Analytic gradient of [`map_objective`].
pub fn map_gradient(x: &DVector<f64>, prior: Option<PriorTerm<'_>>, terms: &[RangeTerm]) -> DVector<f64> {
    let mut g = prior.map_or_else(|| DVector::zeros(x.len()), |p| p.precision * (x - p.mean) * 2.0);
    for t in terms {
        let diff = x - &t.beacon;
        let dist = diff.norm();
        g += diff * (2.0 * (dist - t.range) / (t.variance * dist));
    }
    g
}

/// Analytic Hessian of [`map_objective`]. Indefinite far from the optimum.
pub fn map_hessian(x: &DVector<f64>, prior: Option<PriorTerm<'_>>, terms: &[RangeTerm]) -> DMatrix<f64> {
    let d = x.len();
    let mut h = prior.map_or_else(|| DMatrix::zeros(d, d), |p| p.precision * 2.0);
    let eye = DMatrix::<f64>::identity(d, d);
    for t in terms {
        let diff = x - &t.beacon;
        let dist = diff.norm();
        let u = diff / dist;
        let uut = &u * u.transpose();
        let w = 2.0 / t.variance;
        h += (&uut + (&eye - &uut) * ((dist - t.range) / dist)) * w;
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Gradient norm fell below tolerance.
    Converged,
    /// The step shrank below tolerance.
    StepTolerance,
    MaxIterations,
    /// Fewer range measurements than dimensions and no prior.
    Underdetermined,
}

impl SolveStatus {
    pub fn converged(self) -> bool {
        matches!(self, SolveStatus::Converged | SolveStatus::StepTolerance)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositionSolution {
    pub estimate: DVector<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub objective: f64,
}

fn nudge_off_beacons(x: &mut DVector<f64>, terms: &[RangeTerm]) {
    for t in terms {
        if (&*x - &t.beacon).norm() < 1e-12 {
            x[0] += COINCIDENT_PERTURBATION;
        }
    }
}

fn shifted_step(h: &DMatrix<f64>, g: &DVector<f64>, shift: &mut f64, damping: Damping) -> DVector<f64> {
    let d = h.nrows();
    let mut mu = match damping {
        Damping::None => 0.0,
        Damping::AdaptiveLevenberg => *shift,
    };
    loop {
        let a = h + DMatrix::identity(d, d) * mu;
        if let Some(chol) = a.cholesky() {
            if mu > 0.0 && damping == Damping::AdaptiveLevenberg {
                *shift = mu;
            }
            return -chol.solve(g);
        }
        mu = if mu == 0.0 { INITIAL_SHIFT * h.amax().max(1.0) } else { mu * SHIFT_UP };
    }
}

/// Damped Newton minimization of one position's objective from `init`.
pub fn solve_position(
    init: &DVector<f64>,
    prior: Option<PriorTerm<'_>>,
    terms: &[RangeTerm],
    options: &SolveOptions,
) -> PositionSolution {
    let d = init.len();
    if let (Some(p), true) = (prior, terms.is_empty()) {
        // quadratic objective: the minimizer is the prior mean
        return PositionSolution {
            estimate: p.mean.clone(),
            status: SolveStatus::Converged,
            iterations: 1,
            gradient_norm: 0.0,
            objective: 0.0,
        };
    }
    if prior.is_none() && terms.len() < d {
        return PositionSolution {
            estimate: init.clone(),
            status: SolveStatus::Underdetermined,
            iterations: 0,
            gradient_norm: f64::NAN,
            objective: map_objective(init, None, terms),
        };
    }

    let mut x = init.clone();
    nudge_off_beacons(&mut x, terms);
    let mut f = map_objective(&x, prior, terms);
    let mut best = (x.clone(), f);
    let mut shift = INITIAL_SHIFT;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;

    for _ in 0..options.max_iterations {
        let g = map_gradient(&x, prior, terms);
        if g.norm() <= options.gradient_tolerance {
            status = SolveStatus::Converged;
            break;
        }
        iterations += 1;
        let h = map_hessian(&x, prior, terms);
        let step = shifted_step(&h, &g, &mut shift, options.damping);
        let mut candidate = &x + &step;
        nudge_off_beacons(&mut candidate, terms);
        let f_new = map_objective(&candidate, prior, terms);
        let small_step = step.norm() <= options.step_tolerance * (1.0 + x.norm());
        match options.damping {
            Damping::AdaptiveLevenberg => {
                if f_new <= f {
                    x = candidate;
                    f = f_new;
                    shift /= SHIFT_DOWN;
                } else {
                    shift *= SHIFT_UP;
                }
            }
            Damping::None => {
                x = candidate;
                f = f_new;
            }
        }
        if f < best.1 {
            best = (x.clone(), f);
        }
        if small_step {
            status = SolveStatus::StepTolerance;
            break;
        }
    }
    let (estimate, objective) = if f <= best.1 { (x, f) } else { best };
    let gradient_norm = map_gradient(&estimate, prior, terms).norm();
    if gradient_norm <= options.gradient_tolerance {
        status = SolveStatus::Converged;
    }
    PositionSolution {
        estimate,
        status,
        iterations,
        gradient_norm,
        objective,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationResult {
    pub estimates: Vec<DVector<f64>>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    pub final_gradient_norms: Vec<f64>,
    pub status: Vec<SolveStatus>,
}

#[derive(Serialize, Deserialize)]
struct LocalizationFile {
    estimates: Vec<Vec<f64>>,
    converged: Vec<bool>,
    iterations: Vec<usize>,
    final_gradient_norms: Vec<Option<f64>>,
    status: Vec<SolveStatus>,
}

impl LocalizationResult {
    fn from_solutions(solutions: Vec<PositionSolution>) -> Self {
        let mut out = LocalizationResult {
            estimates: Vec::with_capacity(solutions.len()),
            converged: Vec::with_capacity(solutions.len()),
            iterations: Vec::with_capacity(solutions.len()),
            final_gradient_norms: Vec::with_capacity(solutions.len()),
            status: Vec::with_capacity(solutions.len()),
        };
        for s in solutions {
            out.converged.push(s.status.converged());
            out.iterations.push(s.iterations);
            out.final_gradient_norms.push(s.gradient_norm);
            out.status.push(s.status);
            out.estimates.push(s.estimate);
        }
        out
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub fn to_json(&self) -> String {
        let file = LocalizationFile {
            estimates: self.estimates.iter().map(|e| e.iter().copied().collect()).collect(),
            converged: self.converged.clone(),
            iterations: self.iterations.clone(),
            final_gradient_norms: self.final_gradient_norms.iter().map(|g| g.is_finite().then_some(*g)).collect(),
            status: self.status.clone(),
        };
        serde_json::to_string_pretty(&file).expect("localization serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LocalizationFile = serde_json::from_str(text).map_err(|e| Error::field("<root>", e.to_string()))?;
        Ok(LocalizationResult {
            estimates: file.estimates.into_iter().map(DVector::from_vec).collect(),
            converged: file.converged,
            iterations: file.iterations,
            final_gradient_norms: file.final_gradient_norms.into_iter().map(|g| g.unwrap_or(f64::NAN)).collect(),
            status: file.status,
        })
    }

    /// Per-position diagnostics: `i,converged,iterations,gradient_norm,status`.
    pub fn write_diagnostics_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["i", "converged", "iterations", "gradient_norm", "status"])
            .map_err(|e| Error::csv(path, e))?;
        for i in 0..self.estimates.len() {
            let status = serde_json::to_value(self.status[i]).expect("status serializes");
            w.write_record([
                i.to_string(),
                self.converged[i].to_string(),
                self.iterations[i].to_string(),
                self.final_gradient_norms[i].to_string(),
                status.as_str().unwrap_or_default().to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn terms_for(
    scenario: &Scenario,
    graph: &MeasurementGraph,
    measurements: &MeasurementSet,
    i: usize,
) -> Result<Vec<RangeTerm>> {
    graph
        .neighbourhood(i)
        .iter()
        .zip(graph.variances(i))
        .map(|(&j, &variance)| {
            let range = measurements.range(i, j).ok_or(Error::MissingEdge { position: i, beacon: j })?;
            Ok(RangeTerm {
                beacon: scenario.candidate(j)?.position.clone(),
                range,
                variance,
            })
        })
        .collect()
}

fn solve_all(
    scenario: &Scenario,
    graph: &MeasurementGraph,
    measurements: &MeasurementSet,
    init: &[DVector<f64>],
    options: &SolveOptions,
    use_prior: bool,
) -> Result<LocalizationResult> {
    let n = scenario.n();
    if init.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: init.len(),
        });
    }
    if graph.n() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: graph.n(),
        });
    }
    let mut solutions = Vec::with_capacity(n);
    for (i, spec) in scenario.positions.iter().enumerate() {
        let terms = terms_for(scenario, graph, measurements, i)?;
        let prior = use_prior.then_some(PriorTerm {
            mean: spec.mean(),
            precision: spec.precision(),
        });
        solutions.push(solve_position(&init[i], prior, &terms, options));
    }
    Ok(LocalizationResult::from_solutions(solutions))
}

/// MAP estimates for every position using the edges of `graph` (normally the
/// graph restricted to the selected beacons).
pub fn map_solve(
    scenario: &Scenario,
    graph: &MeasurementGraph,
    measurements: &MeasurementSet,
    init: &[DVector<f64>],
    options: &SolveOptions,
) -> Result<LocalizationResult> {
    solve_all(scenario, graph, measurements, init, options, true)
}

/// Maximum-likelihood estimates; positions with fewer than `d` ranges are
/// reported as [`SolveStatus::Underdetermined`].
pub fn mle_solve(
    scenario: &Scenario,
    graph: &MeasurementGraph,
    measurements: &MeasurementSet,
    init: &[DVector<f64>],
    options: &SolveOptions,
) -> Result<LocalizationResult> {
    solve_all(scenario, graph, measurements, init, options, false)
}

/// Root mean squared position error over all positions.
pub fn rmse(estimates: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<f64> {
    if estimates.len() != truth.len() || estimates.is_empty() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: estimates.len(),
        });
    }
    let sum: f64 = estimates.iter().zip(truth).map(|(e, t)| (e - t).norm_squared()).sum();
    Ok((sum / estimates.len() as f64).sqrt())
}
