//! Unconstrained trust-region minimisation with a BFGS model Hessian,
//! dogleg steps, and central-difference gradients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrustRegionParams {
    pub initial_radius: f64,
    pub shrink: f64,
    pub grow: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Finite-difference step, relative to `max(1, |x_i|)`.
    pub fd_step: f64,
}

impl Default for TrustRegionParams {
    fn default() -> Self {
        TrustRegionParams {
            initial_radius: 1.0,
            shrink: 0.25,
            grow: 2.0,
            max_iters: 500,
            grad_tol: 1e-6,
            fd_step: 1e-6,
        }
    }
}

impl TrustRegionParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_radius > 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.grow > 1.0
            && self.grad_tol >= 0.0
            && self.fd_step > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid trust-region parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub final_radius: f64,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Central differences with step `step · max(1, |x_i|)` per coordinate.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(objective: F, point: &[f64], step: f64) -> Result<Vec<f64>> {
    let mut probe = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let h = step * point[i].abs().max(1.0);
        probe[i] = point[i] + h;
        let up = objective(&probe);
        probe[i] = point[i] - h;
        let down = objective(&probe);
        probe[i] = point[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::Domain(format!(
                "objective not finite around coordinate {i} of {point:?}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

fn dogleg(hessian: &DMatrix<f64>, grad: &DVector<f64>, radius: f64) -> DVector<f64> {
    let gnorm = grad.norm();
    let newton = hessian.clone().cholesky().map(|c| -c.solve(grad));
    if let Some(pb) = &newton {
        if pb.norm() <= radius {
            return pb.clone();
        }
    }
    let curvature = grad.dot(&(hessian * grad));
    if curvature <= 0.0 {
        return grad * (-radius / gnorm);
    }
    let pu = grad * (-(gnorm * gnorm) / curvature);
    let pu_norm = pu.norm();
    let Some(pb) = newton else {
        return pu * (radius / pu_norm).min(1.0);
    };
    if pu_norm >= radius {
        return grad * (-radius / gnorm);
    }
    // largest τ ∈ [0, 1] with ‖pu + τ(pb − pu)‖ = radius
    let d = &pb - &pu;
    let a = d.norm_squared();
    let b = 2.0 * pu.dot(&d);
    let c = pu_norm * pu_norm - radius * radius;
    let tau = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
    pu + d * tau.clamp(0.0, 1.0)
}

/// Minimises `objective` from `start`. Non-finite objective values are
/// treated as rejected steps.
pub fn minimize<F: Fn(&[f64]) -> f64>(objective: F, start: &[f64], params: &TrustRegionParams) -> Result<Minimum> {
    params.validate()?;
    let n = start.len();
    let mut x = DVector::from_column_slice(start);
    let mut f = objective(x.as_slice());
    if !f.is_finite() {
        return Err(Error::Domain(format!("objective not finite at start {start:?}")));
    }
    let mut g = DVector::from_vec(numeric_gradient(&objective, x.as_slice(), params.fd_step)?);
    let mut hessian = DMatrix::<f64>::identity(n, n);
    let mut radius = params.initial_radius;
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iters {
        if g.norm() <= params.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let step = dogleg(&hessian, &g, radius);
        let candidate = &x + &step;
        let f_new = objective(candidate.as_slice());
        let predicted = -(g.dot(&step) + 0.5 * step.dot(&(&hessian * &step)));
        let ratio = if f_new.is_finite() && predicted > 0.0 {
            (f - f_new) / predicted
        } else {
            -1.0
        };
        if ratio < 0.25 {
            radius *= params.shrink;
        } else if ratio > 0.75 && step.norm() >= 0.99 * radius {
            radius *= params.grow;
        }
        if ratio > 1e-4 && f_new < f {
            let g_new = match numeric_gradient(&objective, candidate.as_slice(), params.fd_step) {
                Ok(v) => DVector::from_vec(v),
                Err(_) => {
                    radius *= params.shrink;
                    continue;
                }
            };
            let y = &g_new - &g;
            let sy = step.dot(&y);
            if sy > 1e-12 * step.norm() * y.norm() {
                let hs = &hessian * &step;
                let shs = step.dot(&hs);
                hessian += &y * y.transpose() / sy - &hs * hs.transpose() / shs;
            }
            x = candidate;
            f = f_new;
            g = g_new;
            trace.push(f);
        }
        if radius < 1e-14 {
            break;
        }
    }
    Ok(Minimum {
        point: x.as_slice().to_vec(),
        value: f,
        iterations,
        final_radius: radius,
        trace,
        converged,
    })
}
