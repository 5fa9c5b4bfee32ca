//! Convergence-bound cost used as the scheduling objective.
//!
//! For a schedule `({T_t}, m)` the bound on `E‖w̃_{R+1} − w_opt‖²` is
//!
//! ```text
//! Π_t (1 − η_t ρ_c) Δ_1 + Σ_t η_t² (B_t + C_t) Π_{τ>t} (1 − η_τ ρ_c)
//! B_t = (1/U²) Σ_u σ_u² / (m P_u (T_t − B_u)/T_t − 1) + 6 ρ_s Γ
//! C_t = G² · 4U/(U−1) · Σ_l (1 + q_l) / (1 − 5 q_l),   q_l = Q(L+1−l, T_t/m)^U
//! ```
//!
//! `B_t` falls as `m` grows (larger batches), `C_t` rises (deeper truncation).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::engine::FederatedTask;
use crate::error::{Error, Result};
use crate::gamma::regularized_upper_gamma;
use crate::system::{ClientProfile, Schedule};
use crate::tasks::QuadraticFederatedTask;

/// Numerical margin for the strict `5 Q^U < 1` requirement.
pub const TRUNCATION_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// `η_t = η_0 / (1 + t)`.
    InverseDecay { eta0: f64 },
    /// `η_t = η_0`.
    Constant { eta0: f64 },
}

impl LrSchedule {
    /// Learning rate of round `t ≥ 1`.
    pub fn eta(&self, t: usize) -> f64 {
        match *self {
            LrSchedule::InverseDecay { eta0 } => lr_inverse_decay(eta0, t),
            LrSchedule::Constant { eta0 } => eta0,
        }
    }

    pub fn eta0(&self) -> f64 {
        match *self {
            LrSchedule::InverseDecay { eta0 } | LrSchedule::Constant { eta0 } => eta0,
        }
    }
}

/// `η_0 / (1 + t)`.
pub fn lr_inverse_decay(eta0: f64, t: usize) -> f64 {
    eta0 / (1.0 + t as f64)
}

/// Constants entering the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub rho_c: f64,
    pub rho_s: f64,
    /// `G²`.
    pub grad_bound_sq: f64,
    /// `Γ`.
    pub het_gap: f64,
    /// `Δ_1`.
    pub delta_1: f64,
    pub lr: LrSchedule,
    pub num_layers: usize,
    pub num_users: usize,
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.rho_c, self.rho_s, self.grad_bound_sq, self.het_gap, self.delta_1]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Precondition("analysis constants must be finite".into()));
        }
        if !(self.rho_c > 0.0 && self.rho_s >= self.rho_c) {
            return Err(Error::Precondition(format!(
                "need ρ_s ≥ ρ_c > 0, got ρ_c = {}, ρ_s = {}",
                self.rho_c, self.rho_s
            )));
        }
        if self.grad_bound_sq < 0.0 || self.het_gap < 0.0 || self.delta_1 < 0.0 {
            return Err(Error::Precondition("G², Γ and Δ_1 must be nonnegative".into()));
        }
        if self.num_users < 2 {
            return Err(Error::Precondition(format!(
                "U = {} but the variance factor U/(U−1) needs U ≥ 2",
                self.num_users
            )));
        }
        if self.num_layers < 1 {
            return Err(Error::Precondition("at least one layer required".into()));
        }
        let eta0 = self.lr.eta0();
        if !(eta0.is_finite() && eta0 > 0.0) {
            return Err(Error::Precondition(format!("η_0 = {eta0} must be positive")));
        }
        let eta1 = self.lr.eta(1);
        let cap = 1.0 / (4.0 * self.rho_s);
        if eta1 > cap * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!(
                "η_1 = {eta1} exceeds 1/(4ρ_s) = {cap}"
            )));
        }
        Ok(())
    }
}

fn deadline(schedule: &Schedule, t: usize) -> Result<f64> {
    if t < 1 || t > schedule.rounds() {
        return Err(Error::Domain(format!(
            "round {t} outside [1, {}]",
            schedule.rounds()
        )));
    }
    Ok(schedule.deadlines[t - 1])
}

/// Stochastic-gradient term `B_t`.
pub fn term_b(
    t: usize,
    schedule: &Schedule,
    clients: &[ClientProfile],
    params: &AnalysisParams,
) -> Result<f64> {
    let deadline = deadline(schedule, t)?;
    if clients.len() != params.num_users {
        return Err(Error::DimensionMismatch(format!(
            "{} clients but U = {}",
            clients.len(),
            params.num_users
        )));
    }
    let mut sum = 0.0;
    for c in clients {
        let denom = c.scaled_workload(schedule.batch_scale, deadline) - 1.0;
        if !(denom > 0.0) {
            return Err(Error::InfeasibleDenominator {
                client: c.id,
                value: denom,
            });
        }
        sum += c.noise_scale_sq / denom;
    }
    let u = clients.len() as f64;
    Ok(sum / (u * u) + 6.0 * params.rho_s * params.het_gap)
}

/// `Q(L + 1 − l, T/m)^U` for `l = 1..=L`.
pub fn truncation_bounds(deadline: f64, m: f64, params: &AnalysisParams) -> Result<Vec<f64>> {
    let x = deadline / m;
    (1..=params.num_layers)
        .map(|l| {
            let q = regularized_upper_gamma((params.num_layers + 1 - l) as u32, x)?;
            Ok(q.powi(params.num_users as u32).value())
        })
        .collect()
}

/// Truncation-variance term `C_t`.
pub fn term_c(t: usize, schedule: &Schedule, params: &AnalysisParams) -> Result<f64> {
    let deadline = deadline(schedule, t)?;
    let bounds = truncation_bounds(deadline, schedule.batch_scale, params)?;
    let mut sum = 0.0;
    for &q in &bounds {
        if 5.0 * q > 1.0 - TRUNCATION_MARGIN {
            return Err(Error::TruncationConstraint {
                round: t,
                value: 5.0 * q,
            });
        }
        sum += (1.0 + q) / (1.0 - 5.0 * q);
    }
    let u = params.num_users as f64;
    Ok(params.grad_bound_sq * 4.0 * u / (u - 1.0) * sum)
}

/// `Π_t (1 − η_t ρ_c) Δ_1 + Σ_t η_t² noise_t Π_{τ>t} (1 − η_τ ρ_c)`.
pub fn contraction_bound(etas: &[f64], rho_c: f64, delta_1: f64, noise: &[f64]) -> Result<f64> {
    if etas.len() != noise.len() {
        return Err(Error::DimensionMismatch("one noise term per round".into()));
    }
    for (t, &eta) in etas.iter().enumerate() {
        if eta * rho_c >= 1.0 {
            return Err(Error::Precondition(format!(
                "η_{} ρ_c = {} must be < 1",
                t + 1,
                eta * rho_c
            )));
        }
    }
    let factors: Vec<f64> = etas.iter().map(|eta| 1.0 - eta * rho_c).collect();
    let mut tail = 1.0; // Π_{τ>t}
    let mut sum = 0.0;
    for t in (0..etas.len()).rev() {
        sum += etas[t] * etas[t] * noise[t] * tail;
        tail *= factors[t];
    }
    Ok(tail * delta_1 + sum)
}

/// Full bound for a schedule.
pub fn theorem1_bound(
    schedule: &Schedule,
    clients: &[ClientProfile],
    params: &AnalysisParams,
) -> Result<f64> {
    params.validate()?;
    let rounds = schedule.rounds();
    let mut etas = Vec::with_capacity(rounds);
    let mut noise = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        etas.push(params.lr.eta(t));
        noise.push(term_b(t, schedule, clients, params)? + term_c(t, schedule, params)?);
    }
    contraction_bound(&etas, params.rho_c, params.delta_1, &noise)
}

/// `Γ = F(w_opt) − (1/U) Σ_u min_w F_u(w)`.
pub fn het_gap_quadratic(task: &QuadraticFederatedTask) -> Result<f64> {
    let w_opt = task.w_opt();
    let users = task.num_users();
    let mut global = 0.0;
    let mut local_minima = 0.0;
    for u in 0..users {
        let (a, b) = task.user_system(u);
        global += task.user_loss(u, w_opt);
        let normal = a.transpose() * a;
        let rhs = a.transpose() * b;
        let chol = normal.cholesky().ok_or_else(|| {
            Error::SingularTask(format!("user {u} has a degenerate quadratic"))
        })?;
        let w_u: DVector<f64> = chol.solve(&rhs);
        local_minima += task.user_loss(u, &w_u);
    }
    let gap = (global - local_minima) / users as f64;
    Ok(gap.max(0.0))
}
