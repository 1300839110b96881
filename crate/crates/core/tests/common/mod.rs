//! Independent oracles shared by the integration tests. Nothing here touches
//! the incremental information machinery: objectives are assembled as one
//! dense `nd x nd` matrix straight from the scenario and measurements.

#![allow(dead_code)]

use beacon_placement::scenario::{BeaconCandidate, EdgeReference, NoiseModel, PositionSpec};
use beacon_placement::{BeaconId, FimMode, Instance, Scenario};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChaChaRng = ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random SPD covariance with eigenvalues in `[lo, hi]`.
pub fn random_covariance<R: Rng>(rng: &mut R, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
    let q = a.qr().q();
    let eig = DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| lo + (hi - lo) * rng.random::<f64>()));
    let c = &q * eig * q.transpose();
    (&c + c.transpose()) * 0.5
}

pub struct RandomSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub extent: f64,
    pub cutoff: f64,
    pub noise_variance: f64,
}

/// Scenario with uniform means and candidates in a cube and anisotropic priors.
pub fn random_scenario<R: Rng>(rng: &mut R, spec: &RandomSpec) -> Scenario {
    let point = |rng: &mut R| DVector::from_fn(spec.d, |_, _| rng.random::<f64>() * spec.extent);
    let positions = (0..spec.n)
        .map(|_| {
            let mean = point(rng);
            PositionSpec::new(mean, random_covariance(rng, spec.d, 4.0, 100.0)).unwrap()
        })
        .collect();
    let candidates = (0..spec.m)
        .map(|k| BeaconCandidate {
            id: BeaconId::from_index(k),
            position: point(rng),
        })
        .collect();
    Scenario {
        dimension: spec.d,
        positions,
        candidates,
        noise: NoiseModel::Constant(spec.noise_variance),
        cutoff: spec.cutoff,
        budget: 1,
    }
}

pub fn random_instance<R: Rng>(rng: &mut R, spec: &RandomSpec) -> Instance {
    let scenario = random_scenario(rng, spec);
    let seed = rng.random();
    Instance::simulate(scenario, seed, 0, EdgeReference::GroundTruth).unwrap()
}

/// Weight of edge `(i, j)` computed from first principles.
pub fn edge_weight(instance: &Instance, i: usize, j: BeaconId, mode: FimMode) -> f64 {
    let var = instance.scenario.noise.variance(i, j);
    match mode {
        FimMode::Expected => 1.0 / var,
        FimMode::OneSample => {
            let a = &instance.scenario.candidates[j.0 - 1].position;
            let r = (&instance.truth[i] - a).norm() - instance.measurements.range(i, j).unwrap();
            r * r / (var * var)
        }
    }
}

/// Dense information matrix of a selection, over all `n d` coordinates.
pub fn dense_information(instance: &Instance, subset: &[BeaconId], mode: FimMode) -> DMatrix<f64> {
    let s = &instance.scenario;
    let d = s.dimension;
    let mut big = DMatrix::zeros(s.n() * d, s.n() * d);
    for (i, p) in s.positions.iter().enumerate() {
        let prec = p.covariance().clone().try_inverse().unwrap();
        big.view_mut((i * d, i * d), (d, d)).copy_from(&prec);
    }
    for &j in subset {
        let a = &s.candidates[j.0 - 1].position;
        for i in 0..s.n() {
            if instance.graph.edge_variance(i, j).is_none() {
                continue;
            }
            let diff = &instance.truth[i] - a;
            let u = &diff / diff.norm();
            let w = edge_weight(instance, i, j, mode);
            let mut block = big.view_mut((i * d, i * d), (d, d));
            block += &u * u.transpose() * w;
        }
    }
    big
}

pub fn dense_log_det(m: &DMatrix<f64>) -> f64 {
    let chol = m.clone().cholesky().expect("information matrix must be SPD");
    2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `log det` of the full dense information of a selection.
pub fn dense_objective(instance: &Instance, subset: &[BeaconId], mode: FimMode) -> f64 {
    dense_log_det(&dense_information(instance, subset, mode))
}

/// Normalized objective via the dense oracle.
pub fn dense_normalized(instance: &Instance, subset: &[BeaconId], mode: FimMode) -> f64 {
    dense_objective(instance, subset, mode) - dense_objective(instance, &[], mode)
}

/// Every `k`-subset of `1..=m` in lexicographic order.
pub fn all_subsets(m: usize, k: usize) -> Vec<Vec<BeaconId>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| BeaconId::from_index(i)).collect());
        let mut p = k;
        while p > 0 && idx[p - 1] == m - k + p - 1 {
            p -= 1;
        }
        if p == 0 {
            return out;
        }
        idx[p - 1] += 1;
        for q in p..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Random subset of `0..m` (as ids) of size `k`.
pub fn random_subset<R: Rng>(rng: &mut R, m: usize, k: usize) -> Vec<BeaconId> {
    rand::seq::index::sample(rng, m, k).into_iter().map(BeaconId::from_index).collect()
}
