//! Budget-constrained beacon selection.
//!
//! [`greedy_select`] is the plain greedy maximizer of the normalized log-det
//! objective. The other selectors are the comparison baselines: exhaustive
//! search, degree-greedy, coverage-then-degree greedy and uniform random.
//! All ties go to the lowest beacon id.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::information::InfoState;
use crate::scenario::{BeaconId, MeasurementGraph};

/// Default cap on the number of subsets brute force may enumerate.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Slack allowed when checking the `1 - 1/e` bound.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Greedy,
    BruteForce,
    MeasurementGreedy,
    CoverageGreedy,
    Random,
    Cmaes,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Greedy,
        Algorithm::BruteForce,
        Algorithm::MeasurementGreedy,
        Algorithm::CoverageGreedy,
        Algorithm::Random,
        Algorithm::Cmaes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::BruteForce => "brute_force",
            Algorithm::MeasurementGreedy => "measurement_greedy",
            Algorithm::CoverageGreedy => "coverage_greedy",
            Algorithm::Random => "random",
            Algorithm::Cmaes => "cmaes",
        }
    }

    /// Stable tag used to derive the algorithm's random stream.
    pub fn tag(self) -> u32 {
        match self {
            Algorithm::Greedy => 1,
            Algorithm::BruteForce => 2,
            Algorithm::MeasurementGreedy => 3,
            Algorithm::CoverageGreedy => 4,
            Algorithm::Random => 5,
            Algorithm::Cmaes => 6,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

/// Cardinality budget `1 <= K <= m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget(usize);

impl Budget {
    pub fn new(k: usize, candidates: usize) -> Result<Self> {
        if k == 0 || k > candidates {
            return Err(Error::InvalidBudget { budget: k, candidates });
        }
        Ok(Budget(k))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// CMA-ES run diagnostics attached to a selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsReport {
    pub generations: usize,
    pub restarts: usize,
    pub termination: String,
    /// Best normalized objective after each generation.
    pub best_per_generation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub algorithm: Algorithm,
    pub selected: Vec<BeaconId>,
    /// Normalized objective after each pick.
    pub objective_trace: Vec<f64>,
    pub wall_time_s: f64,
    pub evaluations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_fingerprint: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cmaes: Option<EsReport>,
}

impl SelectionResult {
    pub fn new(algorithm: Algorithm, selected: Vec<BeaconId>) -> Self {
        SelectionResult {
            algorithm,
            selected,
            objective_trace: Vec::new(),
            wall_time_s: 0.0,
            evaluations: 0,
            instance_fingerprint: None,
            cmaes: None,
        }
    }

    /// Final normalized objective, or 0 for an empty trace.
    pub fn value(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }

    /// Recompute the trace from the empty state of `state`'s instance and tag
    /// the result with its fingerprint.
    pub fn score(&mut self, state: &InfoState) -> Result<()> {
        let mut s = state.reset();
        let mut trace = Vec::with_capacity(self.selected.len());
        for &id in &self.selected {
            s.select(id)?;
            trace.push(s.normalized_objective());
        }
        self.objective_trace = trace;
        self.instance_fingerprint = Some(state.fingerprint());
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selection serialization cannot fail")
    }
}

/// Plain greedy: `K` rounds, each adding the beacon with the largest marginal
/// gain over the current set. Uses `sum_{k<K} (m - k)` gain evaluations.
pub fn greedy_select(state: &InfoState, budget: Budget) -> SelectionResult {
    let start = Instant::now();
    let mut s = state.reset();
    let m = s.m();
    let mut evaluations = 0u64;
    let mut trace = Vec::with_capacity(budget.get());
    for _ in 0..budget.get().min(m) {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..m {
            if s.is_selected(BeaconId::from_index(j)) {
                continue;
            }
            let g = s.gain_unchecked(j);
            evaluations += 1;
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((j, g));
            }
        }
        let (j, _) = best.expect("budget never exceeds the candidate count");
        s.select_unchecked(j);
        trace.push(s.normalized_objective());
    }
    SelectionResult {
        algorithm: Algorithm::Greedy,
        selected: s.selected().to_vec(),
        objective_trace: trace,
        wall_time_s: start.elapsed().as_secs_f64(),
        evaluations,
        instance_fingerprint: Some(state.fingerprint()),
        cmaes: None,
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact: acc * (n - i) is divisible by (i + 1)
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

struct Search {
    k: usize,
    m: usize,
    path: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    evaluations: u64,
}

impl Search {
    fn descend(&mut self, state: &InfoState, start: usize) {
        let remaining = self.k - self.path.len();
        if remaining == 1 {
            let base = state.objective() - state.empty_objective();
            for j in start..self.m {
                let value = base + state.gain_unchecked(j);
                self.evaluations += 1;
                if self.best.as_ref().is_none_or(|(bv, _)| value > *bv) {
                    let mut set = self.path.clone();
                    set.push(j);
                    self.best = Some((value, set));
                }
            }
            return;
        }
        for j in start..=(self.m - remaining) {
            let mut child = state.clone();
            child.select_unchecked(j);
            self.path.push(j);
            self.descend(&child, j + 1);
            self.path.pop();
        }
    }
}

/// Exhaustive search over all `C(m, K)` subsets, in lexicographic order of
/// sorted ids; the first subset attaining the maximum wins.
pub fn brute_force_select(state: &InfoState, budget: Budget, cap: u128) -> Result<SelectionResult> {
    let start = Instant::now();
    let m = state.m();
    let k = budget.get();
    if k > m {
        return Err(Error::InvalidBudget { budget: k, candidates: m });
    }
    let count = binomial(m, k);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut search = Search {
        k,
        m,
        path: Vec::with_capacity(k),
        best: None,
        evaluations: 0,
    };
    search.descend(&state.reset(), 0);
    let (_, best) = search.best.expect("at least one subset exists");
    let mut result = SelectionResult::new(Algorithm::BruteForce, best.into_iter().map(BeaconId::from_index).collect());
    result.score(state)?;
    result.evaluations = search.evaluations;
    result.wall_time_s = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Beacons ordered by decreasing degree, ties by id.
fn by_degree(graph: &MeasurementGraph) -> Vec<BeaconId> {
    let mut ids: Vec<BeaconId> = (0..graph.m()).map(BeaconId::from_index).collect();
    ids.sort_by_key(|&j| (std::cmp::Reverse(graph.degree(j)), j));
    ids
}

/// Repeatedly take the unselected beacon with the most edges.
pub fn measurement_greedy_select(graph: &MeasurementGraph, budget: Budget) -> SelectionResult {
    let start = Instant::now();
    let selected: Vec<BeaconId> = by_degree(graph).into_iter().take(budget.get()).collect();
    let mut result = SelectionResult::new(Algorithm::MeasurementGreedy, selected);
    result.evaluations = graph.m() as u64;
    result.wall_time_s = start.elapsed().as_secs_f64();
    result
}

/// Phase 1 covers as many positions as possible (most newly covered first),
/// stopping once everything is covered or no beacon adds coverage. Phase 2
/// fills the remaining budget by degree.
pub fn coverage_greedy_select(graph: &MeasurementGraph, budget: Budget) -> SelectionResult {
    let start = Instant::now();
    let m = graph.m();
    let k = budget.get().min(m);
    let mut covered = vec![false; graph.n()];
    let mut uncovered = graph.n();
    let mut taken = vec![false; m];
    let mut selected = Vec::with_capacity(k);
    let mut evaluations = 0u64;

    while selected.len() < k && uncovered > 0 {
        let mut best: Option<(BeaconId, usize)> = None;
        for j in (0..m).map(BeaconId::from_index) {
            if taken[j.index()] {
                continue;
            }
            evaluations += 1;
            let new = graph.incident_positions(j).iter().filter(|&&i| !covered[i]).count();
            if best.is_none_or(|(_, b)| new > b) {
                best = Some((j, new));
            }
        }
        match best {
            Some((j, new)) if new > 0 => {
                for &i in graph.incident_positions(j) {
                    if !covered[i] {
                        covered[i] = true;
                        uncovered -= 1;
                    }
                }
                taken[j.index()] = true;
                selected.push(j);
            }
            _ => break,
        }
    }
    for j in by_degree(graph) {
        if selected.len() == k {
            break;
        }
        evaluations += 1;
        if !taken[j.index()] {
            taken[j.index()] = true;
            selected.push(j);
        }
    }
    let mut result = SelectionResult::new(Algorithm::CoverageGreedy, selected);
    result.evaluations = evaluations;
    result.wall_time_s = start.elapsed().as_secs_f64();
    result
}

/// Uniform `K`-subset without replacement.
pub fn random_select<R: Rng + ?Sized>(graph: &MeasurementGraph, budget: Budget, rng: &mut R) -> SelectionResult {
    let start = Instant::now();
    let selected = rand::seq::index::sample(rng, graph.m(), budget.get().min(graph.m()))
        .into_iter()
        .map(BeaconId::from_index)
        .collect();
    let mut result = SelectionResult::new(Algorithm::Random, selected);
    result.wall_time_s = start.elapsed().as_secs_f64();
    result
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub greedy_value: f64,
    pub optimal_value: f64,
    pub ratio: f64,
    pub holds: bool,
}

/// Check `f~(greedy) >= (1 - 1/e) f~(optimum)`.
pub fn certify_bound(greedy: &SelectionResult, brute: &SelectionResult) -> Result<BoundCertificate> {
    let same_instance = match (greedy.instance_fingerprint, brute.instance_fingerprint) {
        (Some(a), Some(b)) => a == b,
        _ => true,
    };
    if !same_instance || greedy.selected.len() != brute.selected.len() {
        return Err(Error::MismatchedInstances);
    }
    let greedy_value = greedy.value();
    let optimal_value = brute.value();
    let (ratio, holds) = if optimal_value > 0.0 {
        let ratio = greedy_value / optimal_value;
        (ratio, ratio >= 1.0 - (-1.0f64).exp() - BOUND_SLACK)
    } else {
        (1.0, true)
    };
    Ok(BoundCertificate {
        greedy_value,
        optimal_value,
        ratio,
        holds,
    })
}
