//! Greedy log-det placement step by step: each pick, its marginal gain and the
//! running normalized objective, under both information models.
//!
//! cargo run --example greedy_placement [seed] [budget]

use beacon_placement::harness::{generate_synthetic_scenario, SyntheticSpec};
use beacon_placement::scenario::EdgeReference;
use beacon_placement::selection::{greedy_select, Budget};
use beacon_placement::{FimMode, InfoState, Instance};

fn main() -> beacon_placement::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);

    let scenario = generate_synthetic_scenario(&SyntheticSpec::default(), seed)?;
    let instance = Instance::simulate(scenario, seed, 0, EdgeReference::GroundTruth)?;
    let budget = Budget::new(k, instance.scenario.m())?;

    for mode in [FimMode::Expected, FimMode::OneSample] {
        let state = InfoState::from_instance(&instance, mode)?;
        let result = greedy_select(&state, budget);
        println!("\n{mode:?}: f(empty) = {:.3}, {} evaluations", state.empty_objective(), result.evaluations);
        println!("step  beacon  degree      gain    f_norm");
        let mut prev = 0.0;
        for (step, (id, f)) in result.selected.iter().zip(&result.objective_trace).enumerate() {
            println!(
                "{:>4}  {:>6}  {:>6}  {:>8.4}  {:>8.4}",
                step + 1,
                id.index(),
                instance.graph.degree(*id),
                f - prev,
                f
            );
            prev = *f;
        }
    }
    Ok(())
}
