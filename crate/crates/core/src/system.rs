//! Client heterogeneity model.
//!
//! Each client `u` has a compute rate `P_u` and a fixed upload time `B_u`.
//! With batch-scaling parameter `m` and round deadline `T`, its batch is
//! `S = ⌊m P_u (T − B_u) / T⌋`; every layer of backpropagation then takes an
//! exponential time with mean `S / P_u`, output layer first. The number of
//! layers finished before `T − B_u` is Poisson with rate
//! `λ = (P_u / S)(T − B_u) ≥ T / m`.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::{poisson_cdf, regularized_upper_gamma, Probability};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub id: usize,
    /// `P_u`, layer·samples per second.
    pub compute_rate: f64,
    /// `B_u`, seconds.
    pub comm_time: f64,
    /// `σ_u²`, the single-sample gradient variance constant.
    #[serde(default)]
    pub noise_scale_sq: f64,
}

impl ClientProfile {
    pub fn new(id: usize, compute_rate: f64, comm_time: f64, noise_scale_sq: f64) -> Result<Self> {
        let profile = ClientProfile {
            id,
            compute_rate,
            comm_time,
            noise_scale_sq,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.compute_rate.is_finite() && self.compute_rate > 0.0) {
            return Err(Error::Domain(format!(
                "client {}: compute rate {} must be positive",
                self.id, self.compute_rate
            )));
        }
        if !(self.comm_time.is_finite() && self.comm_time >= 0.0) {
            return Err(Error::Domain(format!(
                "client {}: communication time {} must be nonnegative",
                self.id, self.comm_time
            )));
        }
        if !(self.noise_scale_sq.is_finite() && self.noise_scale_sq >= 0.0) {
            return Err(Error::Domain(format!(
                "client {}: noise scale {} must be nonnegative",
                self.id, self.noise_scale_sq
            )));
        }
        Ok(())
    }

    /// `m P_u (T − B_u) / T`, the unfloored batch size.
    pub fn scaled_workload(&self, m: f64, deadline: f64) -> f64 {
        m * self.compute_rate * (deadline - self.comm_time) / deadline
    }
}

/// Per-round deadlines plus the global batch-scaling parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub deadlines: Vec<f64>,
    pub batch_scale: f64,
}

impl Schedule {
    pub fn uniform(rounds: usize, t_max: f64, batch_scale: f64) -> Self {
        Schedule {
            deadlines: vec![t_max / rounds as f64; rounds],
            batch_scale,
        }
    }

    pub fn rounds(&self) -> usize {
        self.deadlines.len()
    }

    pub fn total_time(&self) -> f64 {
        self.deadlines.iter().sum()
    }

    /// Checks positivity, monotonicity, the time budget (with `1e−9`
    /// relative slack) and `T_t > B_u` for every client.
    pub fn validate(&self, t_max: f64, clients: &[ClientProfile]) -> Result<()> {
        if self.deadlines.is_empty() {
            return Err(Error::InvalidSchedule("no rounds".into()));
        }
        if !(self.batch_scale.is_finite() && self.batch_scale > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "batch scale {} must be positive",
                self.batch_scale
            )));
        }
        for (t, &d) in self.deadlines.iter().enumerate() {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidSchedule(format!("deadline {d} at round {}", t + 1)));
            }
        }
        for (t, pair) in self.deadlines.windows(2).enumerate() {
            if pair[1] > pair[0] {
                return Err(Error::InvalidSchedule(format!(
                    "deadline increases from round {} to {}",
                    t + 1,
                    t + 2
                )));
            }
        }
        let total = self.total_time();
        if total > t_max * (1.0 + 1e-9) {
            return Err(Error::InvalidSchedule(format!(
                "total time {total} exceeds budget {t_max}"
            )));
        }
        let shortest = *self.deadlines.last().expect("nonempty");
        for c in clients {
            if shortest <= c.comm_time {
                return Err(Error::DeadlineTooShort {
                    client: c.id,
                    deadline: shortest,
                    comm_time: c.comm_time,
                });
            }
        }
        Ok(())
    }
}

/// `S = ⌊m P_u (T − B_u) / T⌋`.
pub fn batch_size(m: f64, client: &ClientProfile, deadline: f64) -> Result<u64> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::Domain(format!("batch scale {m} must be positive")));
    }
    if deadline <= client.comm_time {
        return Err(Error::DeadlineTooShort {
            client: client.id,
            deadline,
            comm_time: client.comm_time,
        });
    }
    let value = client.scaled_workload(m, deadline);
    if value < 1.0 {
        return Err(Error::InfeasibleBatch {
            client: client.id,
            value,
        });
    }
    Ok(value.floor() as u64)
}

/// Poisson rate of completed layers for a client running a `batch`-sample
/// minibatch under `deadline`: `(P_u / S)(T − B_u)`.
pub fn rate_for_batch(client: &ClientProfile, batch: u64, deadline: f64) -> f64 {
    client.compute_rate / batch as f64 * (deadline - client.comm_time)
}

/// `λ_t^u` under the batch rule.
pub fn poisson_rate(m: f64, client: &ClientProfile, deadline: f64) -> Result<f64> {
    let batch = batch_size(m, client, deadline)?;
    Ok(rate_for_batch(client, batch, deadline))
}

/// Outcome of one client's depth-limited backpropagation in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSample {
    pub client_id: usize,
    /// `z`, layers that fit in the effective deadline on an unbounded stack.
    pub layers_completed: u64,
    /// `d = max(L + 1 − z, 1)`; `L + 1` means nothing was computed.
    pub reached_depth: usize,
    /// Cumulative completion time of each finished layer, output side first.
    pub layer_finish_times: Vec<f64>,
}

impl DepthSample {
    pub fn from_completed(client_id: usize, layers_completed: u64, num_layers: usize) -> Self {
        DepthSample {
            client_id,
            layers_completed,
            reached_depth: reached_depth(layers_completed, num_layers),
            layer_finish_times: Vec::new(),
        }
    }
}

pub fn reached_depth(layers_completed: u64, num_layers: usize) -> usize {
    let l1 = num_layers as u64 + 1;
    l1.saturating_sub(layers_completed).max(1) as usize
}

/// Draws exponential layer durations (mean `S / P_u`) until the effective
/// deadline `T − B_u` is exceeded.
pub fn sample_depth<R: Rng + ?Sized>(
    client: &ClientProfile,
    deadline: f64,
    batch: u64,
    num_layers: usize,
    rng: &mut R,
) -> Result<DepthSample> {
    if deadline <= client.comm_time {
        return Err(Error::DeadlineTooShort {
            client: client.id,
            deadline,
            comm_time: client.comm_time,
        });
    }
    let budget = deadline - client.comm_time;
    let mean = batch as f64 / client.compute_rate;
    let mut clock = 0.0;
    let mut completed = 0u64;
    let mut finish_times = Vec::with_capacity(num_layers);
    loop {
        let unit: f64 = rng.sample(Exp1);
        clock += mean * unit;
        if clock > budget {
            break;
        }
        completed += 1;
        if finish_times.len() < num_layers {
            finish_times.push(clock);
        }
    }
    Ok(DepthSample {
        client_id: client.id,
        layers_completed: completed,
        reached_depth: reached_depth(completed, num_layers),
        layer_finish_times: finish_times,
    })
}

/// Cumulative finish times of all `num_layers` layers with no deadline.
/// Consumes the same draws, in the same order, as [`sample_depth`].
pub fn sample_full_pass<R: Rng + ?Sized>(
    client: &ClientProfile,
    batch: u64,
    num_layers: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mean = batch as f64 / client.compute_rate;
    let mut clock = 0.0;
    (0..num_layers)
        .map(|_| {
            let unit: f64 = rng.sample(Exp1);
            clock += mean * unit;
            clock
        })
        .collect()
}

/// `Π_u P(z_u ≤ L − l)` for per-client Poisson rates.
pub fn no_contributor_prob(layer: usize, num_layers: usize, rates: &[f64]) -> Result<Probability> {
    check_layer(layer, num_layers)?;
    let k = (num_layers - layer) as u32;
    let mut product = 1.0;
    for &rate in rates {
        product *= poisson_cdf(k, rate)?.value();
    }
    Probability::new(product)
}

/// Exact `p_t^l = P(|U_t^l| = 0)` under the batch rule.
pub fn exact_no_contributor_prob(
    layer: usize,
    num_layers: usize,
    clients: &[ClientProfile],
    m: f64,
    deadline: f64,
) -> Result<Probability> {
    let rates = clients
        .iter()
        .map(|c| poisson_rate(m, c, deadline))
        .collect::<Result<Vec<_>>>()?;
    no_contributor_prob(layer, num_layers, &rates)
}

/// Closed-form upper bound `Q(L + 1 − l, T/m)^U` on `p_t^l`.
pub fn lemma1_bound(
    layer: usize,
    num_layers: usize,
    num_users: usize,
    m: f64,
    deadline: f64,
) -> Result<Probability> {
    check_layer(layer, num_layers)?;
    if num_users < 1 {
        return Err(Error::Domain("at least one user required".into()));
    }
    if !(m > 0.0 && deadline > 0.0) {
        return Err(Error::Domain(format!("m = {m} and T = {deadline} must be positive")));
    }
    let q = regularized_upper_gamma((num_layers + 1 - layer) as u32, deadline / m)?;
    Ok(q.powi(num_users as u32))
}

fn check_layer(layer: usize, num_layers: usize) -> Result<()> {
    if layer < 1 || layer > num_layers {
        return Err(Error::Domain(format!("layer {layer} outside [1, {num_layers}]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma::poisson_pmf;
    use crate::rng::{stream, Domain};
    use approx::assert_abs_diff_eq;

    fn client(p: f64, b: f64) -> ClientProfile {
        ClientProfile::new(0, p, b, 1.0).unwrap()
    }

    #[test]
    fn batch_size_examples() {
        assert_eq!(batch_size(10.0, &client(2.0, 2.0), 10.0).unwrap(), 16);
        assert_eq!(batch_size(1.0, &client(1.0, 0.0), 5.0).unwrap(), 1);
        assert_eq!(batch_size(7.5, &client(3.0, 1.0), 4.0).unwrap(), 16);
    }

    #[test]
    fn batch_size_errors() {
        assert!(matches!(
            batch_size(0.5, &client(1.0, 0.0), 5.0),
            Err(Error::InfeasibleBatch { .. })
        ));
        assert!(matches!(
            batch_size(10.0, &client(1.0, 5.0), 5.0),
            Err(Error::DeadlineTooShort { .. })
        ));
    }

    #[test]
    fn poisson_rate_examples() {
        assert_eq!(poisson_rate(10.0, &client(2.0, 2.0), 10.0).unwrap(), 1.0);
        // (P/S)(T − B) = (3/16)·3
        assert_abs_diff_eq!(poisson_rate(7.5, &client(3.0, 1.0), 4.0).unwrap(), 0.5625, epsilon = 1e-15);
    }

    #[test]
    fn rate_never_below_deadline_over_m() {
        let mut rng = stream(1, Domain::Verify, 0, 0);
        for _ in 0..2000 {
            let p = rng.random_range(0.1..10.0);
            let b = rng.random_range(0.0..2.0);
            let t = b + rng.random_range(0.1..20.0);
            let m = rng.random_range(0.1..30.0);
            let c = client(p, b);
            if let Ok(rate) = poisson_rate(m, &c, t) {
                assert!(rate >= t / m * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn vanishing_budget_completes_nothing() {
        let c = client(1.0, 1.0);
        let mut rng = stream(3, Domain::Compute, 0, 0);
        let s = sample_depth(&c, 1.0 + 1e-12, 5, 4, &mut rng).unwrap();
        assert_eq!(s.layers_completed, 0);
        assert_eq!(s.reached_depth, 5);
        assert!(s.layer_finish_times.is_empty());
    }

    #[test]
    fn depth_sample_shape() {
        let c = client(2.0, 0.5);
        for seed in 0..200 {
            let mut rng = stream(seed, Domain::Compute, 1, 1);
            let s = sample_depth(&c, 6.0, 3, 4, &mut rng).unwrap();
            assert_eq!(s.layer_finish_times.len(), (s.layers_completed as usize).min(4));
            assert!(s.layer_finish_times.windows(2).all(|w| w[0] < w[1]));
            assert!(s.layer_finish_times.iter().all(|&t| t <= 5.5));
            assert_eq!(s.reached_depth, reached_depth(s.layers_completed, 4));
        }
    }

    #[test]
    fn depth_is_poisson_in_mean_and_variance() {
        // λ = (P/S)(T − B) = (4/2)(1.5 − 0.5) = 2
        let c = client(4.0, 0.5);
        let n = 100_000;
        let mut rng = stream(11, Domain::Verify, 0, 0);
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_depth(&c, 1.5, 2, 4, &mut rng).unwrap().layers_completed as f64)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let lambda = 2.0;
        assert!((mean - lambda).abs() <= 3.0 * (lambda / n as f64).sqrt());
        // Var of sample variance for Poisson: (λ + 2λ²)/n approximately
        let se_var = ((lambda + 2.0 * lambda * lambda) / n as f64).sqrt();
        assert!((var - lambda).abs() <= 3.0 * se_var);
    }

    #[test]
    fn depth_distribution_chi_square() {
        let c = client(4.0, 0.5);
        let n = 100_000usize;
        let lambda = 2.0;
        let mut rng = stream(12, Domain::Verify, 0, 0);
        let max_k = 7usize; // bins 0..=6 and a tail bin
        let mut counts = vec![0usize; max_k + 1];
        for _ in 0..n {
            let z = sample_depth(&c, 1.5, 2, 4, &mut rng).unwrap().layers_completed as usize;
            counts[z.min(max_k)] += 1;
        }
        let mut chi2 = 0.0;
        let mut head = 0.0;
        for k in 0..max_k {
            let p = poisson_pmf(k as u32, lambda).unwrap().value();
            head += p;
            let e = p * n as f64;
            chi2 += (counts[k] as f64 - e).powi(2) / e;
        }
        let e_tail = (1.0 - head) * n as f64;
        chi2 += (counts[max_k] as f64 - e_tail).powi(2) / e_tail;
        // 7 degrees of freedom, 0.99 quantile
        assert!(chi2 < 18.475, "chi2 = {chi2}");
    }

    #[test]
    fn same_stream_same_samples() {
        let c = client(3.0, 0.2);
        let a = sample_depth(&c, 2.0, 4, 4, &mut stream(5, Domain::Compute, 2, 9)).unwrap();
        let b = sample_depth(&c, 2.0, 4, 4, &mut stream(5, Domain::Compute, 2, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_pass_shares_draws_with_depth_sampling() {
        let c = client(3.0, 0.2);
        let pass = sample_full_pass(&c, 4, 4, &mut stream(5, Domain::Compute, 2, 9));
        let depth = sample_depth(&c, 100.0, 4, 4, &mut stream(5, Domain::Compute, 2, 9)).unwrap();
        assert_eq!(&pass[..], &depth.layer_finish_times[..]);
    }

    #[test]
    fn identical_clients_last_layer() {
        // λ = T/m exactly when m P (T − B)/T is an integer
        let clients: Vec<_> = (0..3).map(|i| ClientProfile::new(i, 2.0, 0.0, 0.0).unwrap()).collect();
        let (m, t) = (2.0, 3.0);
        let exact = exact_no_contributor_prob(4, 4, &clients, m, t).unwrap().value();
        assert_abs_diff_eq!(exact, (-3.0 * t / m).exp(), epsilon = 1e-14);
        let bound = lemma1_bound(4, 4, 3, m, t).unwrap().value();
        assert_abs_diff_eq!(bound, (-3.0 * t / m).exp(), epsilon = 1e-14);
    }

    #[test]
    fn two_clients_three_layers() {
        // λ = 2 each: poisson_cdf(2, 2)^2 = (5 e^{−2})^2
        let clients: Vec<_> = (0..2).map(|i| ClientProfile::new(i, 1.0, 0.0, 0.0).unwrap()).collect();
        let exact = exact_no_contributor_prob(1, 3, &clients, 1.0, 2.0).unwrap().value();
        assert_abs_diff_eq!(exact, 0.457_890_972_218_354_5, epsilon = 1e-12);
        let bound = lemma1_bound(1, 3, 2, 1.0, 2.0).unwrap().value();
        assert_abs_diff_eq!(bound, 0.457_890_972_218_354_5, epsilon = 1e-12);
    }

    #[test]
    fn exact_below_bound_and_decreasing_in_layer() {
        let clients = vec![
            ClientProfile::new(0, 1.3, 0.4, 0.0).unwrap(),
            ClientProfile::new(1, 2.9, 0.1, 0.0).unwrap(),
            ClientProfile::new(2, 0.7, 0.9, 0.0).unwrap(),
        ];
        let (m, t, l_max) = (2.3, 5.0, 6);
        let mut prev = f64::INFINITY;
        for l in 1..=l_max {
            let exact = exact_no_contributor_prob(l, l_max, &clients, m, t).unwrap().value();
            let bound = lemma1_bound(l, l_max, 3, m, t).unwrap().value();
            assert!(exact <= bound + 1e-15);
            assert!(exact < prev);
            prev = exact;
        }
    }

    #[test]
    fn bound_vanishes_for_long_deadlines() {
        for l in 1..=5 {
            assert!(lemma1_bound(l, 5, 3, 1.0, 2000.0).unwrap().value() < 1e-300);
        }
    }

    #[test]
    fn schedule_validation() {
        let clients = vec![client(1.0, 0.5)];
        let ok = Schedule { deadlines: vec![3.0, 2.0, 2.0], batch_scale: 1.0 };
        ok.validate(7.0, &clients).unwrap();
        let increasing = Schedule { deadlines: vec![2.0, 3.0], batch_scale: 1.0 };
        assert!(increasing.validate(10.0, &clients).is_err());
        assert!(ok.validate(6.9, &clients).is_err());
        let short = Schedule { deadlines: vec![1.0, 0.5], batch_scale: 1.0 };
        assert!(matches!(short.validate(10.0, &clients), Err(Error::DeadlineTooShort { .. })));
    }
}
