use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Method};
use crate::harness::experiment::{run_method, ExperimentResult, RunOverrides, Scenario};

pub const MIN_SEEDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: Method,
    pub t_max: f64,
    pub seeds: usize,
    pub mean_final_distance_sq: Option<f64>,
    pub se_final_distance_sq: Option<f64>,
    pub mean_final_accuracy: Option<f64>,
    pub se_final_accuracy: Option<f64>,
    pub mean_rounds: f64,
    pub mean_total_time: f64,
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn summarize(method: Method, t_max: f64, runs: &[ExperimentResult]) -> CompareRow {
    let stat = |f: &dyn Fn(&ExperimentResult) -> Option<f64>| {
        let values: Option<Vec<f64>> = runs.iter().map(f).collect();
        values.map(|v| mean_se(&v))
    };
    let dist = stat(&|r| r.final_distance_sq());
    let acc = stat(&|r| r.final_accuracy());
    let n = runs.len() as f64;
    CompareRow {
        method,
        t_max,
        seeds: runs.len(),
        mean_final_distance_sq: dist.map(|d| d.0),
        se_final_distance_sq: dist.map(|d| d.1),
        mean_final_accuracy: acc.map(|a| a.0),
        se_final_accuracy: acc.map(|a| a.1),
        mean_rounds: runs.iter().map(|r| r.records.len() as f64).sum::<f64>() / n,
        mean_total_time: runs.iter().map(ExperimentResult::total_time).sum::<f64>() / n,
    }
}

/// Runs every method on every seed and budget; one row per
/// `(method, T_max)` in the order given.
pub fn compare_methods(config: &ExperimentConfig, methods: &[Method], seeds: &[u64]) -> Result<Vec<CompareRow>> {
    if methods.len() < 2 {
        return Err(Error::Config(format!("need at least 2 methods, got {}", methods.len())));
    }
    if seeds.len() < MIN_SEEDS {
        return Err(Error::Config(format!("need at least {MIN_SEEDS} seeds, got {}", seeds.len())));
    }
    for &m in methods {
        config.validate_method(m)?;
    }
    let budgets = if config.t_max_values.is_empty() {
        vec![config.t_max]
    } else {
        config.t_max_values.clone()
    };
    let scenarios = seeds
        .iter()
        .map(|&s| Scenario::build(config, s))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &t_max in &budgets {
        for &method in methods {
            let runs = seeds
                .iter()
                .zip(&scenarios)
                .map(|(&seed, scenario)| {
                    run_method(config, scenario, method, t_max, seed, &RunOverrides::default())
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(summarize(method, t_max, &runs));
        }
    }
    Ok(rows)
}
