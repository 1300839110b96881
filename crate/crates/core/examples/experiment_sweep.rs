//! A reduced parameter sweep: a few settings, paired trials, summary table,
//! a signed-rank test of greedy against coverage, and CSV export.
//!
//! cargo run --release --example experiment_sweep [trials] [out_dir]

use beacon_placement::harness::{export_experiment, run_experiment, ExperimentConfig, ExportFormat, Setting};
use beacon_placement::stats::wilcoxon_signed_rank;
use beacon_placement::Algorithm;

fn main() -> beacon_placement::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let out_dir = args.next().unwrap_or_else(|| "sweep_results".into());

    let config = ExperimentConfig {
        settings: vec![
            Setting::new("baseline"),
            Setting::new("K=10").k(10),
            Setting::new("C=150").cutoff(150.0),
            Setting::new("sigma=15").prior_sigma(15.0),
        ],
        trials,
        ..ExperimentConfig::default()
    };
    let out = run_experiment(&config, &[])?;

    println!("{:<10} {:<18} {:>9} {:>8} {:>8}", "setting", "algorithm", "rmse", "sd", "f_norm");
    for row in &out.summary.rows {
        println!(
            "{:<10} {:<18} {:>9.3} {:>8.3} {:>8.4}",
            row.setting,
            row.algorithm.name(),
            row.rmse_mean,
            row.rmse_std,
            row.f_norm_mean
        );
    }

    for setting in &config.settings {
        let rmse_of = |a: Algorithm| -> Vec<f64> {
            let mut rows: Vec<_> = out.records.iter().filter(|r| r.setting == setting.label && r.algorithm == a).collect();
            rows.sort_by_key(|r| r.trial);
            rows.iter().map(|r| r.rmse_m).collect()
        };
        if let Some(w) = wilcoxon_signed_rank(&rmse_of(Algorithm::Greedy), &rmse_of(Algorithm::CoverageGreedy)) {
            println!("{}: greedy < coverage, one-sided p = {:.4}", setting.label, w.p_less);
        }
    }

    export_experiment(&out, &out_dir, ExportFormat::Csv)?;
    println!("wrote {out_dir}/");
    Ok(())
}
