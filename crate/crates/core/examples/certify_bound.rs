//! Greedy against the exhaustive optimum on small 3-D instances, checking the
//! `1 - 1/e` guarantee for every budget.
//!
//! cargo run --release --example certify_bound [instances]

use beacon_placement::harness::{certify_instances, small_instance_spec};
use beacon_placement::FimMode;

fn main() -> beacon_placement::Result<()> {
    let instances: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let budgets: Vec<usize> = (1..=7).collect();
    let rows = certify_instances(&small_instance_spec(), instances, &budgets, 0, FimMode::OneSample)?;

    println!(" K  holds  optimal  min ratio");
    for &k in &budgets {
        let at_k: Vec<_> = rows.iter().filter(|r| r.k == k).collect();
        let min_ratio = at_k.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        println!(
            "{k:>2}  {:>5}  {:>7}  {min_ratio:>9.4}",
            at_k.iter().filter(|r| r.holds).count(),
            at_k.iter().filter(|r| r.optimal).count()
        );
    }
    let holds = rows.iter().filter(|r| r.holds).count();
    println!("bound holds on {holds}/{}", rows.len());
    Ok(())
}
