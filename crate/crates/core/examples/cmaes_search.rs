//! CMA-ES over continuous beacon coordinates, snapped to the candidate set,
//! compared with greedy and the exhaustive optimum on small 3-D instances.
//!
//! cargo run --release --example cmaes_search [instances] [max_evaluations]

use beacon_placement::cmaes::{cmaes_select, EsConfig};
use beacon_placement::harness::{generate_random_scenario, small_instance_spec};
use beacon_placement::scenario::EdgeReference;
use beacon_placement::selection::{brute_force_select, greedy_select, Budget};
use beacon_placement::{FimMode, InfoState, Instance};

fn main() -> beacon_placement::Result<()> {
    let mut args = std::env::args().skip(1);
    let instances: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let max_evaluations: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(3000);
    let spec = small_instance_spec();

    println!("inst  optimum   greedy    cmaes     gap%   gens  evals  restarts  stop");
    for t in 0..instances {
        let scenario = generate_random_scenario(&spec, 800 + t)?;
        let instance = Instance::simulate(scenario, 8, t, EdgeReference::GroundTruth)?;
        let state = InfoState::from_instance(&instance, FimMode::OneSample)?;
        let budget = Budget::new(5, instance.scenario.m())?;

        let optimum = brute_force_select(&state, budget, u128::MAX)?.value();
        let greedy = greedy_select(&state, budget).value();
        let config = EsConfig {
            seed: t,
            max_evaluations,
            ..EsConfig::default()
        };
        let es = cmaes_select(&instance.scenario, &state, budget, &config)?;
        let report = es.cmaes.as_ref().expect("CMA-ES attaches its report");
        println!(
            "{t:>4}  {optimum:>7.3}  {greedy:>7.3}  {:>7.3}  {:>6.2}  {:>5}  {:>5}  {:>8}  {}",
            es.value(),
            100.0 * (optimum - es.value()) / optimum,
            report.generations,
            es.evaluations,
            report.restarts,
            report.termination
        );
    }
    Ok(())
}
