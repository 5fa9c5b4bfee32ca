//! Deadline and batch-scale optimisation on the benchmark scenario.
//!
//! Usage: `cargo run --example optimize_schedule [config.json]`

use adelfl::harness::{ExperimentConfig, Scenario};
use adelfl::scheduler::optimize_schedule;

fn main() -> adelfl::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "configs/quadratic_benchmark.json".into());
    let config = ExperimentConfig::load(path.as_ref())?;
    let scenario = Scenario::build(&config, config.seed)?;
    let analysis = scenario.analysis()?;
    println!(
        "rho_c = {:.4}, rho_s = {:.4}, G^2 = {:.4}, gap = {:.4}, delta_1 = {:.4}",
        analysis.rho_c, analysis.rho_s, analysis.grad_bound_sq, analysis.het_gap, analysis.delta_1
    );
    let solution = optimize_schedule(&config.search_spec(config.t_max), &scenario.clients, analysis, config.seed)?;
    println!("m = {:.4}", solution.schedule.batch_scale);
    for (t, d) in solution.schedule.deadlines.iter().enumerate() {
        println!("T_{:<2} = {d:.4}", t + 1);
    }
    println!(
        "bound {:.6} vs uniform {:.6} ({} iterations over {} restarts)",
        solution.cost, solution.baseline_cost, solution.diagnostics.iterations, solution.diagnostics.restarts
    );
    Ok(())
}
