//! One training run with optimised deadlines and layer-wise aggregation.
//!
//! Usage: `cargo run --example simulate [config.json] [method]`

use adelfl::harness::{run_method, ExperimentConfig, Method, RunOverrides, Scenario};

fn main() -> adelfl::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "configs/quadratic_benchmark.json".into());
    let config = ExperimentConfig::load(path.as_ref())?;
    let method: Method = match args.next() {
        Some(name) => name.parse()?,
        None => config.method,
    };
    let scenario = Scenario::build(&config, config.seed)?;
    let result = run_method(&config, &scenario, method, config.t_max, config.seed, &RunOverrides::default())?;
    println!("{:>5} {:>9} {:>9} {:>12} {:>6}  contributors", "round", "deadline", "clock", "dist^2", "depth");
    for r in &result.records {
        println!(
            "{:>5} {:>9.3} {:>9.3} {:>12.5} {:>6.2}  {:?}",
            r.round,
            r.deadline,
            r.cumulative_time,
            r.distance_sq.unwrap_or(f64::NAN),
            r.mean_depth,
            r.contributors
        );
    }
    Ok(())
}
