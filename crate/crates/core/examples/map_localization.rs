//! Localize a trajectory from the ranges of a greedy selection: MAP with the
//! prior, and plain maximum likelihood for comparison.
//!
//! cargo run --example map_localization [seed] [budget]

use beacon_placement::harness::{generate_synthetic_scenario, SyntheticSpec};
use beacon_placement::localization::{map_solve, mle_solve, rmse, SolveOptions};
use beacon_placement::scenario::EdgeReference;
use beacon_placement::selection::{greedy_select, Budget};
use beacon_placement::{FimMode, InfoState, Instance};

fn main() -> beacon_placement::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);

    let scenario = generate_synthetic_scenario(&SyntheticSpec::default(), seed)?;
    let instance = Instance::simulate(scenario, seed, 0, EdgeReference::GroundTruth)?;
    let state = InfoState::from_instance(&instance, FimMode::Expected)?;
    let selection = greedy_select(&state, Budget::new(k, instance.scenario.m())?);
    let graph = instance.graph.restricted_to(&selection.selected);

    let opts = SolveOptions::default();
    // start from the prior means, as a real system would
    let init = instance.scenario.prior_means();
    let map = map_solve(&instance.scenario, &graph, &instance.measurements, &init, &opts)?;
    let mle = mle_solve(&instance.scenario, &graph, &instance.measurements, &init, &opts)?;

    println!("   i  ranges  prior_err  map_err  mle_err  mle_status");
    for i in 0..instance.scenario.n() {
        let truth = &instance.truth[i];
        println!(
            "{i:>4}  {:>6}  {:>9.3}  {:>7.3}  {:>7.3}  {:?}",
            graph.neighbourhood(i).len(),
            (instance.scenario.positions[i].mean() - truth).norm(),
            (&map.estimates[i] - truth).norm(),
            (&mle.estimates[i] - truth).norm(),
            mle.status[i]
        );
    }
    println!(
        "RMSE: prior {:.3} m, MAP {:.3} m, ML {:.3} m (MAP converged everywhere: {})",
        rmse(&init, &instance.truth)?,
        rmse(&map.estimates, &instance.truth)?,
        rmse(&mle.estimates, &instance.truth)?,
        map.all_converged()
    );
    Ok(())
}
