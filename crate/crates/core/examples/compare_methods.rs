//! Final distance to the optimum for each method, averaged over seeds.
//!
//! Usage: `cargo run --release --example compare_methods [config.json] [seeds]`

use adelfl::harness::{compare_methods, ExperimentConfig, Method};

fn main() -> adelfl::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "configs/quadratic_benchmark.json".into());
    let config = ExperimentConfig::load(path.as_ref())?;
    let count: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let seeds: Vec<u64> = (1..=count).collect();
    let methods = if config.methods.is_empty() {
        vec![Method::Adel, Method::SalfFixed, Method::Drop, Method::Wait]
    } else {
        config.methods.clone()
    };
    let rows = compare_methods(&config, &methods, &seeds)?;
    println!("{:<11} {:>10} {:>8} {:>7} {:>9}", "method", "dist^2", "se", "rounds", "time");
    for r in rows {
        println!(
            "{:<11} {:>10.4} {:>8.4} {:>7.2} {:>9.3}",
            r.method.name(),
            r.mean_final_distance_sq.unwrap_or(f64::NAN),
            r.se_final_distance_sq.unwrap_or(f64::NAN),
            r.mean_rounds,
            r.mean_total_time
        );
    }
    Ok(())
}
