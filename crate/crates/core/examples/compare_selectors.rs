//! Every selector on the same simulated trial, scored by objective and by the
//! RMSE of the MAP estimate built from the selected beacons' ranges.
//!
//! cargo run --release --example compare_selectors [trial] [budget]

use beacon_placement::harness::{run_trial, trial_scenario, ExperimentConfig, Setting};
use beacon_placement::Algorithm;

fn main() -> beacon_placement::Result<()> {
    let mut args = std::env::args().skip(1);
    let trial: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);

    let config = ExperimentConfig {
        algorithms: vec![
            Algorithm::Random,
            Algorithm::MeasurementGreedy,
            Algorithm::CoverageGreedy,
            Algorithm::Greedy,
            Algorithm::Cmaes,
        ],
        ..ExperimentConfig::default()
    };
    let base = config.base_scenario()?;
    let setting = Setting::new("demo").k(k);
    let scenario = trial_scenario(&config, &base, &setting, trial)?;
    let out = run_trial(&config, scenario, "demo", trial)?;

    println!("prior-only RMSE {:.3} m", out.prior_rmse);
    println!("{:<18} {:>8} {:>9} {:>7} {:>10}  beacons", "algorithm", "f_norm", "rmse_m", "evals", "time_s");
    for r in &out.records {
        let ids: Vec<usize> = r.selected.iter().map(|b| b.index()).collect();
        println!(
            "{:<18} {:>8.4} {:>9.3} {:>7} {:>10.5}  {ids:?}",
            r.algorithm.name(),
            r.f_norm,
            r.rmse_m,
            r.evaluations,
            r.runtime_s
        );
    }
    for f in &out.failures {
        println!("{} failed: {}", f.algorithm.name(), f.error);
    }
    Ok(())
}
