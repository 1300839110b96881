//! Build a synthetic trajectory scenario, draw ground truth and ranges, and
//! report what the cutoff graph looks like.
//!
//! cargo run --example simulate_scenario [seed] [out_dir]
//!
//! With `out_dir`, the scenario JSON and the measurement CSV are written there.

use beacon_placement::harness::{generate_synthetic_scenario, SyntheticSpec};
use beacon_placement::scenario::EdgeReference;
use beacon_placement::{BeaconId, Instance};

fn main() -> beacon_placement::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let out_dir = args.next();

    let spec = SyntheticSpec::default();
    let scenario = generate_synthetic_scenario(&spec, seed)?;
    println!(
        "{} positions, {} candidates, d = {}, cutoff {} m, K = {}",
        scenario.n(),
        scenario.m(),
        scenario.dimension,
        scenario.cutoff,
        scenario.budget
    );

    let instance = Instance::simulate(scenario, seed, 0, EdgeReference::GroundTruth)?;
    let graph = &instance.graph;
    let degrees: Vec<usize> = (0..graph.m()).map(|j| graph.degree(BeaconId::from_index(j))).collect();
    let isolated = degrees.iter().filter(|&&d| d == 0).count();
    println!(
        "{} edges; beacon degree min {} / max {}; {} candidates see nothing",
        graph.edge_count(),
        degrees.iter().min().unwrap_or(&0),
        degrees.iter().max().unwrap_or(&0),
        isolated
    );

    let offsets: Vec<f64> = instance
        .truth
        .iter()
        .zip(&instance.scenario.positions)
        .map(|(t, p)| (t - p.mean()).norm())
        .collect();
    let worst = offsets.iter().cloned().fold(0.0, f64::max);
    println!("truth sits {worst:.2} m from its prior mean at worst");

    let residuals: Vec<f64> = instance
        .measurements
        .iter()
        .map(|(i, j, r)| r - (&instance.truth[i] - &instance.scenario.candidates[j.index()].position).norm())
        .collect();
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    println!("{} ranges, residual mean {mean:.3} m, variance {var:.2} m^2", residuals.len());

    if let Some(dir) = out_dir {
        let dir = std::path::PathBuf::from(dir);
        std::fs::create_dir_all(&dir).map_err(|e| beacon_placement::Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        instance.scenario.save(dir.join("scenario.json"))?;
        instance.measurements.write_csv(dir.join("measurements.csv"))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
