//! Deadline and batch-scale selection by minimising the convergence bound.
//!
//! The decision variables `(T_1..T_R, m)` are replaced by free reals
//! `(g_1..g_R, g_m)`:
//!
//! ```text
//! T_t = F + Σ_{k≥t} e^{g_k}            (scaled down to the budget if needed)
//! m   = m_lo(T_R) + (m_hi(T_R) − m_lo(T_R)) · sigmoid(g_m)
//! ```
//!
//! so every point is a non-increasing, in-budget schedule whose batch sizes
//! and truncation probabilities are admissible, and the trust-region solver
//! never leaves the feasible set.

mod trust_region;

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cost::{theorem1_bound, AnalysisParams, TRUNCATION_MARGIN};
use crate::error::{Error, Result};
use crate::gamma::regularized_upper_gamma;
use crate::rng::{stream, Domain};
use crate::system::{ClientProfile, Schedule};

pub use trust_region::{minimize, numeric_gradient, Minimum, TrustRegionParams};

/// Relative headroom above the smallest admissible `m`, keeping every
/// variance denominator strictly positive.
const BATCH_HEADROOM: f64 = 1e-9;
/// Points in the uniform-baseline line search over `m`.
const BASELINE_GRID: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSearchSpec {
    pub t_max: f64,
    pub rounds: usize,
    #[serde(default = "default_m_bounds")]
    pub m_bounds: [f64; 2],
    /// `ε_B`; defaults to 1% of `T_max / R`.
    #[serde(default)]
    pub floor_margin: Option<f64>,
    #[serde(default)]
    pub tr: TrustRegionParams,
    #[serde(default = "default_multistart")]
    pub multistart_count: usize,
}

fn default_m_bounds() -> [f64; 2] {
    [1e-6, 1e9]
}

fn default_multistart() -> usize {
    8
}

impl ScheduleSearchSpec {
    pub fn new(t_max: f64, rounds: usize) -> Self {
        ScheduleSearchSpec {
            t_max,
            rounds,
            m_bounds: default_m_bounds(),
            floor_margin: None,
            tr: TrustRegionParams::default(),
            multistart_count: default_multistart(),
        }
    }

    /// `max_u B_u + ε_B`.
    pub fn deadline_floor(&self, clients: &[ClientProfile]) -> f64 {
        let margin = self.floor_margin.unwrap_or(0.01 * self.t_max / self.rounds as f64);
        clients.iter().map(|c| c.comm_time).fold(0.0, f64::max) + margin
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max > 0.0) || self.rounds == 0 {
            return Err(Error::Config(format!(
                "need T_max > 0 and R ≥ 1, got {} and {}",
                self.t_max, self.rounds
            )));
        }
        let [lo, hi] = self.m_bounds;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Config(format!("invalid m bounds [{lo}, {hi}]")));
        }
        if self.floor_margin.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::Config("floor margin must be positive".into()));
        }
        self.tr.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Trust-region iterations summed over restarts.
    pub iterations: usize,
    pub restarts: usize,
    pub final_radius: f64,
    /// Accepted objective values of the winning restart.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Index of the winning restart, `None` when the uniform baseline won.
    pub best_restart: Option<usize>,
    pub effective_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    pub schedule: Schedule,
    pub cost: f64,
    pub baseline: Schedule,
    pub baseline_cost: f64,
    pub diagnostics: Diagnostics,
}

/// Smallest `x` with `5 Q(L, x)^U` safely below `1 − ε`.
pub fn truncation_threshold(num_layers: usize, num_users: usize) -> Result<f64> {
    let target = 1.0 - 2.0 * TRUNCATION_MARGIN;
    let g = |x: f64| -> Result<f64> {
        Ok(5.0 * regularized_upper_gamma(num_layers as u32, x)?.powi(num_users as u32).value())
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi)? > target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Infeasible("truncation threshold diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// The change of variables and the feasible `m` interval.
#[derive(Debug, Clone)]
pub struct Parameterization {
    pub t_max: f64,
    pub rounds: usize,
    /// Effective floor `F`: no deadline goes below it.
    pub floor: f64,
    pub m_bounds: [f64; 2],
    pub threshold: f64,
    clients: Vec<ClientProfile>,
}

impl Parameterization {
    pub fn new(spec: &ScheduleSearchSpec, clients: &[ClientProfile], params: &AnalysisParams) -> Result<Self> {
        spec.validate()?;
        if clients.is_empty() {
            return Err(Error::Config("no clients".into()));
        }
        let threshold = truncation_threshold(params.num_layers, clients.len())?;
        let mut p = Parameterization {
            t_max: spec.t_max,
            rounds: spec.rounds,
            floor: spec.deadline_floor(clients),
            m_bounds: spec.m_bounds,
            threshold,
            clients: clients.to_vec(),
        };
        let uniform = spec.t_max / spec.rounds as f64;
        if uniform < p.floor {
            return Err(Error::Infeasible(format!(
                "T_max = {} is below R · floor = {}",
                spec.t_max,
                spec.rounds as f64 * p.floor
            )));
        }
        if !p.feasible_at(uniform) {
            return Err(Error::Infeasible(format!(
                "no m meets the batch and truncation constraints at the uniform deadline {uniform}"
            )));
        }
        // raise the floor until the m interval is non-empty
        if !p.feasible_at(p.floor) {
            let (mut lo, mut hi) = (p.floor, uniform);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if p.feasible_at(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            p.floor = hi;
        }
        Ok(p)
    }

    /// `[m_lo, m_hi]` admissible when the shortest deadline is `t`.
    pub fn m_range(&self, t: f64) -> (f64, f64) {
        let batch_lo = self
            .clients
            .iter()
            .map(|c| t / (c.compute_rate * (t - c.comm_time)))
            .fold(0.0, f64::max)
            * (1.0 + BATCH_HEADROOM);
        let lo = batch_lo.max(self.m_bounds[0]);
        let hi = (t / self.threshold).min(self.m_bounds[1]);
        (lo, hi)
    }

    fn feasible_at(&self, t: f64) -> bool {
        if self.clients.iter().any(|c| t <= c.comm_time) {
            return false;
        }
        let (lo, hi) = self.m_range(t);
        lo <= hi
    }

    pub fn dim(&self) -> usize {
        self.rounds + 1
    }

    /// Maps free variables to a feasible schedule.
    pub fn schedule(&self, g: &[f64]) -> Schedule {
        let r = self.rounds;
        let mut tails = vec![0.0; r];
        let mut acc = 0.0;
        for t in (0..r).rev() {
            acc += g[t].min(700.0).exp();
            tails[t] = acc;
        }
        let available = self.t_max - r as f64 * self.floor;
        let used: f64 = tails.iter().sum();
        let scale = if used > available && used > 0.0 {
            available / used
        } else {
            1.0
        };
        let deadlines: Vec<f64> = tails.iter().map(|&x| self.floor + scale * x).collect();
        let (lo, hi) = self.m_range(deadlines[r - 1]);
        let m = lo + (hi - lo) * sigmoid(g[r]);
        Schedule {
            deadlines,
            batch_scale: m.clamp(lo, hi),
        }
    }

    /// Free variables that reproduce a uniform schedule with scale `m`
    /// (up to `e^{−30}` increments).
    pub fn uniform_point(&self, m: f64) -> Vec<f64> {
        let r = self.rounds;
        let mut g = vec![-30.0; r + 1];
        g[r - 1] = (self.t_max / r as f64 - self.floor).max(1e-300).ln();
        let (lo, hi) = self.m_range(self.t_max / r as f64);
        let frac = ((m - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
        g[r] = if hi > lo { (frac / (1.0 - frac)).ln() } else { 0.0 };
        g
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn cost_or_inf(schedule: &Schedule, clients: &[ClientProfile], params: &AnalysisParams) -> f64 {
    theorem1_bound(schedule, clients, params).unwrap_or(f64::INFINITY)
}

/// Uniform deadlines `T_max / R` with `m` chosen from a log-spaced grid.
pub fn uniform_baseline(
    spec: &ScheduleSearchSpec,
    clients: &[ClientProfile],
    params: &AnalysisParams,
) -> Result<(Schedule, f64)> {
    let param = Parameterization::new(spec, clients, params)?;
    let t = spec.t_max / spec.rounds as f64;
    let (lo, hi) = param.m_range(t);
    let mut best: Option<(Schedule, f64)> = None;
    for i in 0..BASELINE_GRID {
        let m = if hi > lo {
            lo * (hi / lo).powf(i as f64 / (BASELINE_GRID - 1) as f64)
        } else {
            lo
        };
        let schedule = Schedule::uniform(spec.rounds, spec.t_max, m);
        let cost = cost_or_inf(&schedule, clients, params);
        if cost.is_finite() && best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some((schedule, cost));
        }
    }
    best.ok_or_else(|| Error::Infeasible("no finite cost on the uniform schedule".into()))
}

/// Minimises the convergence bound over feasible schedules.
pub fn optimize_schedule(
    spec: &ScheduleSearchSpec,
    clients: &[ClientProfile],
    params: &AnalysisParams,
    seed: u64,
) -> Result<ScheduleSolution> {
    params.validate()?;
    if clients.len() != params.num_users {
        return Err(Error::Config(format!(
            "{} clients but analysis parameters assume U = {}",
            clients.len(),
            params.num_users
        )));
    }
    let param = Parameterization::new(spec, clients, params)?;
    let (baseline, baseline_cost) = uniform_baseline(spec, clients, params)?;
    let objective = |g: &[f64]| cost_or_inf(&param.schedule(g), clients, params);

    let restarts = spec.multistart_count.max(1);
    let mut total_iters = 0;
    let mut best: Option<(usize, Minimum)> = None;
    for k in 0..restarts {
        let start = if k == 0 {
            param.uniform_point(baseline.batch_scale)
        } else {
            random_start(&param, seed, k)
        };
        if !objective(&start).is_finite() {
            continue;
        }
        let min = match minimize(objective, &start, &spec.tr) {
            Ok(min) => min,
            Err(_) => continue,
        };
        total_iters += min.iterations;
        if best.as_ref().is_none_or(|(_, b)| min.value < b.value) {
            best = Some((k, min));
        }
    }

    let effective_floor = param.floor;
    let (schedule, cost, diagnostics) = match best {
        Some((k, min)) if min.value <= baseline_cost => {
            if !min.converged {
                warn!(
                    "schedule search stopped after {} iterations without meeting the gradient tolerance",
                    min.iterations
                );
            }
            let schedule = param.schedule(&min.point);
            let cost = theorem1_bound(&schedule, clients, params)?;
            let diag = Diagnostics {
                iterations: total_iters,
                restarts,
                final_radius: min.final_radius,
                objective_trace: min.trace,
                converged: min.converged,
                best_restart: Some(k),
                effective_floor,
            };
            (schedule, cost, diag)
        }
        _ => {
            let diag = Diagnostics {
                iterations: total_iters,
                restarts,
                final_radius: 0.0,
                objective_trace: vec![baseline_cost],
                converged: false,
                best_restart: None,
                effective_floor,
            };
            (baseline.clone(), baseline_cost, diag)
        }
    };
    schedule.validate(spec.t_max, clients)?;
    Ok(ScheduleSolution {
        schedule,
        cost,
        baseline,
        baseline_cost,
        diagnostics,
    })
}

fn random_start(param: &Parameterization, seed: u64, restart: usize) -> Vec<f64> {
    let mut rng = stream(seed, Domain::Multistart, restart as u64, 0);
    let r = param.rounds;
    let share = ((param.t_max - r as f64 * param.floor) / r as f64).max(1e-300).ln();
    let mut g: Vec<f64> = (0..r)
        .map(|_| share + 1.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    g.push(rng.random_range(-4.0..4.0));
    g
}
