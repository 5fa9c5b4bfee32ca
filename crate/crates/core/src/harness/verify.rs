//! Monte Carlo checks of the analytical results the simulator relies on.
//!
//! Failures are reported in the returned document, never raised.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::{
    aggregate_fedavg, aggregate_layerwise, local_sgd_update, FederatedTask, LayeredModel,
    PartialUpdate,
};
use crate::error::{Error, Result};
use crate::gamma::{regularized_upper_gamma, Probability};
use crate::quadrature::upper_gamma_integral;
use crate::rng::{stream, Domain};
use crate::system::{
    batch_size, exact_no_contributor_prob, lemma1_bound, rate_for_batch, sample_depth,
    ClientProfile,
};
use crate::tasks::make_quadratic_task;

pub const MIN_TRIALS: usize = 10_000;

/// One `(L, U, T/m)` configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaSetting {
    pub layers: usize,
    pub users: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifySpec {
    pub gamma_shapes: u32,
    pub gamma_points: Vec<f64>,
    pub gamma_tolerance: f64,
    pub lemma1_layers: Vec<usize>,
    pub lemma1_users: Vec<usize>,
    pub lemma1_ratios: Vec<f64>,
    pub lemma2_settings: Vec<LemmaSetting>,
    pub lemma3_settings: Vec<LemmaSetting>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        let s = |layers, users, ratio| LemmaSetting { layers, users, ratio };
        VerifySpec {
            gamma_shapes: 64,
            gamma_points: vec![0.1, 1.0, 4.5, 17.0, 40.0, 90.0],
            gamma_tolerance: 1e-10,
            lemma1_layers: vec![2, 4, 8],
            lemma1_users: vec![2, 5, 10],
            lemma1_ratios: vec![1.0, 2.0, 4.0, 8.0],
            lemma2_settings: vec![s(2, 3, 2.0), s(4, 5, 2.0), s(3, 4, 1.5)],
            lemma3_settings: vec![s(2, 4, 3.0), s(3, 5, 4.0), s(4, 8, 3.0), s(4, 2, 0.5)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub label: String,
    pub status: Status,
    pub observed: f64,
    pub reference: f64,
    pub standard_error: f64,
    /// Distance to the acceptance threshold; negative on failure.
    pub margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub cells: Vec<CellReport>,
}

impl SuiteReport {
    fn new(name: &str, cells: Vec<CellReport>) -> Self {
        SuiteReport {
            name: name.to_string(),
            passed: cells.iter().all(|c| c.status != Status::Fail),
            cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub trials: usize,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

/// Series `Q(s, x)` against adaptive quadrature of the tail integral.
pub fn gamma_identity_suite(spec: &VerifySpec) -> Result<SuiteReport> {
    let mut cells = Vec::new();
    for &x in &spec.gamma_points {
        let mut worst: f64 = 0.0;
        let mut worst_s = 1;
        for s in 1..=spec.gamma_shapes {
            let diff = (regularized_upper_gamma(s, x)?.value() - upper_gamma_integral(s, x)).abs();
            if diff > worst {
                worst = diff;
                worst_s = s;
            }
        }
        cells.push(CellReport {
            label: format!("x={x} worst s={worst_s}"),
            status: status(worst <= spec.gamma_tolerance),
            observed: worst,
            reference: 0.0,
            standard_error: 0.0,
            margin: spec.gamma_tolerance - worst,
            note: None,
        });
    }
    Ok(SuiteReport::new("gamma_identity", cells))
}

/// Heterogeneous clients whose Poisson rates are at least `T/m`.
fn lemma1_clients<R: Rng + ?Sized>(users: usize, deadline: f64, m: f64, rng: &mut R) -> Result<Vec<ClientProfile>> {
    (0..users)
        .map(|u| {
            let comm = 0.2 * deadline * rng.random::<f64>();
            let min_rate = deadline / (m * (deadline - comm));
            ClientProfile::new(u, min_rate * rng.random_range(1.0..5.0), comm, 0.0)
        })
        .collect()
}

/// Empirical frequency of an empty `U^l` against the closed-form bound
/// and the exact Poisson product.
pub fn lemma1_suite(spec: &VerifySpec, trials: usize, seed: u64) -> Result<SuiteReport> {
    let deadline = 10.0;
    let mut cells = Vec::new();
    let mut cell_id = 0u64;
    for &layers in &spec.lemma1_layers {
        for &users in &spec.lemma1_users {
            for &ratio in &spec.lemma1_ratios {
                cell_id += 1;
                let m = deadline / ratio;
                let mut rng = stream(seed, Domain::Verify, 1, cell_id);
                let clients = lemma1_clients(users, deadline, m, &mut rng)?;
                let batches = clients
                    .iter()
                    .map(|c| batch_size(m, c, deadline))
                    .collect::<Result<Vec<_>>>()?;
                let mut empty = vec![0usize; layers];
                for _ in 0..trials {
                    let mut min_depth = layers + 1;
                    for (c, &s) in clients.iter().zip(&batches) {
                        let d = sample_depth(c, deadline, s, layers, &mut rng)?.reached_depth;
                        min_depth = min_depth.min(d);
                    }
                    // U^l is empty for every l below the shallowest depth reached
                    for slot in empty.iter_mut().take(min_depth - 1) {
                        *slot += 1;
                    }
                }
                for l in 1..=layers {
                    let exact = exact_no_contributor_prob(l, layers, &clients, m, deadline)?.value();
                    let bound = lemma1_bound(l, layers, users, m, deadline)?.value();
                    let freq = empty[l - 1] as f64 / trials as f64;
                    let se = (exact * (1.0 - exact) / trials as f64).sqrt();
                    let bound_margin = bound + 3.0 * se - freq;
                    let exact_margin = 3.0 * se - (freq - exact).abs();
                    cells.push(CellReport {
                        label: format!("L={layers} U={users} T/m={ratio} l={l}"),
                        status: status(bound_margin >= 0.0 && exact_margin >= 0.0),
                        observed: freq,
                        reference: exact,
                        standard_error: se,
                        margin: bound_margin.min(exact_margin),
                        note: Some(format!("bound={bound}")),
                    });
                }
            }
        }
    }
    Ok(SuiteReport::new("lemma1_no_contributor", cells))
}

/// Identical clients with Poisson rate exactly `T/m`: `m P` is an integer.
fn identical_clients(users: usize, ratio: f64) -> Result<(Vec<ClientProfile>, f64, f64)> {
    let deadline = 1.0;
    let m = deadline / ratio;
    let rate = 2.0 / m;
    let clients = (0..users)
        .map(|u| ClientProfile::new(u, rate, 0.0, 0.0))
        .collect::<Result<Vec<_>>>()?;
    Ok((clients, deadline, m))
}

fn sample_truncations<R: Rng + ?Sized>(
    full: &[PartialUpdate],
    clients: &[ClientProfile],
    batch: u64,
    deadline: f64,
    layers: usize,
    rng: &mut R,
) -> Result<Vec<PartialUpdate>> {
    full.iter()
        .zip(clients)
        .map(|(u, c)| {
            let d = sample_depth(c, deadline, batch, layers, rng)?.reached_depth;
            Ok(u.truncated(d))
        })
        .collect()
}

fn exact_probs(clients: &[ClientProfile], batch: u64, deadline: f64, layers: usize) -> Result<Vec<Probability>> {
    let rates: Vec<f64> = clients.iter().map(|c| rate_for_batch(c, batch, deadline)).collect();
    (1..=layers)
        .map(|l| crate::system::no_contributor_prob(l, layers, &rates))
        .collect()
}

/// Mean of the layer-wise aggregate over resampled depths against the
/// FedAvg model built from the same batches.
pub fn lemma2_suite(spec: &VerifySpec, trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut cells = Vec::new();
    for (k, setting) in spec.lemma2_settings.iter().enumerate() {
        let LemmaSetting { layers, users, ratio } = *setting;
        let mut rng = stream(seed, Domain::Verify, 2, k as u64);
        let task = make_quadratic_task(users, 2 * layers, 0.5, layers, &mut rng)?;
        let dims = task.layer_dims();
        let prev_flat: Vec<f64> = (0..2 * layers).map(|_| rng.sample(StandardNormal)).collect();
        let prev = LayeredModel::from_flat(&prev_flat, &dims)?;
        let full = (0..users)
            .map(|u| {
                let batch: Vec<usize> = (0..3).map(|_| rng.random_range(0..task.local_size(u))).collect();
                local_sgd_update(&task, &prev, u, &[batch], 0.1, 1, 0.0)
            })
            .collect::<Result<Vec<_>>>()?;
        let fedavg = aggregate_fedavg(&full, &prev)?.flatten();
        let (clients, deadline, m) = identical_clients(users, ratio)?;
        let batch = batch_size(m, &clients[0], deadline)?;
        let p = exact_probs(&clients, batch, deadline, layers)?;
        let n = fedavg.len();
        let (mut sum, mut sum_sq) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..trials {
            let partial = sample_truncations(&full, &clients, batch, deadline, layers, &mut rng)?;
            let w = aggregate_layerwise(&partial, &prev, &p)?.flatten();
            for i in 0..n {
                sum[i] += w[i];
                sum_sq[i] += w[i] * w[i];
            }
        }
        let t = trials as f64;
        let mut offset = 0;
        for (l, &dim) in dims.iter().enumerate() {
            let mut worst_z: f64 = 0.0;
            let mut worst = (0.0, 0.0, 0.0);
            for i in offset..offset + dim {
                let mean = sum[i] / t;
                let var = (sum_sq[i] / t - mean * mean).max(0.0) * t / (t - 1.0);
                let se = (var / t).sqrt();
                let diff = (mean - fedavg[i]).abs();
                let z = if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
                if z >= worst_z {
                    worst_z = z;
                    worst = (mean, fedavg[i], se);
                }
            }
            offset += dim;
            cells.push(CellReport {
                label: format!("L={layers} U={users} T/m={ratio} l={}", l + 1),
                status: status(worst_z <= 4.0),
                observed: worst.0,
                reference: worst.1,
                standard_error: worst.2,
                margin: 4.0 - worst_z,
                note: Some(format!("p={}", p[l].value())),
            });
        }
    }
    Ok(SuiteReport::new("lemma2_unbiasedness", cells))
}

/// Single-round `E‖w̃_2 − w_2‖²` against the closed-form variance bound.
pub fn lemma3_suite(spec: &VerifySpec, trials: usize, seed: u64) -> Result<SuiteReport> {
    let eta = 0.1;
    let grad_bound = 1.0;
    let layer_dim = 3;
    let mut cells = Vec::new();
    for (k, setting) in spec.lemma3_settings.iter().enumerate() {
        let LemmaSetting { layers, users, ratio } = *setting;
        let label = format!("L={layers} U={users} T/m={ratio}");
        let (clients, deadline, m) = identical_clients(users, ratio)?;
        let q: Vec<f64> = (1..=layers)
            .map(|l| lemma1_bound(l, layers, users, m, deadline).map(|p| p.value()))
            .collect::<Result<_>>()?;
        if q[0] >= 0.2 {
            cells.push(CellReport {
                label,
                status: Status::Skipped,
                observed: f64::NAN,
                reference: f64::NAN,
                standard_error: f64::NAN,
                margin: f64::NAN,
                note: Some(format!("precondition unmet: bound on p^1 = {} ≥ 0.2", q[0])),
            });
            continue;
        }
        let mut rng = stream(seed, Domain::Verify, 3, k as u64);
        let dims = vec![layer_dim; layers];
        let w1_flat: Vec<f64> = (0..layers * layer_dim).map(|_| rng.sample(StandardNormal)).collect();
        let w1 = LayeredModel::from_flat(&w1_flat, &dims)?;
        let full: Vec<PartialUpdate> = (0..users)
            .map(|u| {
                let g: Vec<f64> = (0..layers * layer_dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = grad_bound * rng.random_range(0.5..1.0) / norm;
                let local: Vec<f64> = w1_flat.iter().zip(&g).map(|(w, gi)| w - eta * scale * gi).collect();
                PartialUpdate {
                    client_id: u,
                    reached_depth: 1,
                    layer_params: LayeredModel::from_flat(&local, &dims).expect("dims").layers().to_vec(),
                }
            })
            .collect();
        let w2 = aggregate_fedavg(&full, &w1)?.flatten();
        let batch = batch_size(m, &clients[0], deadline)?;
        let p = exact_probs(&clients, batch, deadline, layers)?;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..trials {
            let partial = sample_truncations(&full, &clients, batch, deadline, layers, &mut rng)?;
            let err = aggregate_layerwise(&partial, &w1, &p)?.distance_sq(&w2);
            sum += err;
            sum_sq += err * err;
        }
        let t = trials as f64;
        let mean = sum / t;
        let se = ((sum_sq / t - mean * mean).max(0.0) / (t - 1.0)).sqrt();
        let u = users as f64;
        let bound = eta * eta * grad_bound * grad_bound * 4.0 * u / (u - 1.0)
            * q.iter().map(|&ql| (1.0 + ql) / (1.0 - 5.0 * ql)).sum::<f64>();
        let margin = bound + 3.0 * se - mean;
        cells.push(CellReport {
            label,
            status: status(margin >= 0.0),
            observed: mean,
            reference: bound,
            standard_error: se,
            margin,
            note: None,
        });
    }
    Ok(SuiteReport::new("lemma3_variance", cells))
}

/// Runs all four suites.
pub fn verify_lemmas(spec: &VerifySpec, trials: usize, seed: u64) -> Result<VerifyReport> {
    if trials < MIN_TRIALS {
        return Err(Error::Config(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    let suites = vec![
        gamma_identity_suite(spec)?,
        lemma1_suite(spec, trials, seed)?,
        lemma2_suite(spec, trials, seed)?,
        lemma3_suite(spec, trials, seed)?,
    ];
    Ok(VerifyReport {
        seed,
        trials,
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}
