//! Monte Carlo checks of the probability bound, the unbiasedness of the
//! corrected aggregate and its single-round variance.
//!
//! Usage: `cargo run --release --example verify_lemmas [trials]`

use adelfl::harness::{verify_lemmas, Status, VerifySpec, MIN_TRIALS};

fn main() -> adelfl::Result<()> {
    let trials = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(MIN_TRIALS);
    let report = verify_lemmas(&VerifySpec::default(), trials, 0)?;
    for suite in &report.suites {
        let count = |s: Status| suite.cells.iter().filter(|c| c.status == s).count();
        println!(
            "{:<24} pass {:>3}  fail {:>3}  skipped {:>3}",
            suite.name,
            count(Status::Pass),
            count(Status::Fail),
            count(Status::Skipped)
        );
        for cell in suite.cells.iter().filter(|c| c.status != Status::Pass) {
            println!("    {:?} {}: {}", cell.status, cell.label, cell.note.as_deref().unwrap_or(""));
        }
    }
    println!("all passed: {}", report.passed);
    Ok(())
}
