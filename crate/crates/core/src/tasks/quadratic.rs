//! Synthetic least-squares federated task with closed-form constants.
//!
//! User `u` holds `F_u(w) = ½‖A_u w − b_u‖²`. Each row of `A_u` is one local
//! sample with per-sample loss `(n/2)(a_iᵀw − b_i)²`, so the sample mean of
//! the per-sample losses is `F_u` and a minibatch drawn with replacement
//! gives an unbiased gradient whose variance is exactly `σ_u²(w)/S`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cost::het_gap_quadratic;
use crate::engine::{FederatedTask, LayeredModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QuadraticFederatedTask {
    a: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
    layer_dims: Vec<usize>,
    w_opt: DVector<f64>,
    rho_c: f64,
    rho_s: f64,
}

/// Analysis constants derived from a quadratic task.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConstants {
    pub rho_c: f64,
    pub rho_s: f64,
    pub grad_bound_sq: f64,
    pub het_gap: f64,
    pub delta_1: f64,
    pub noise_scale_sq: Vec<f64>,
}

/// Sizes of `num_layers` near-equal consecutive segments of `dim`.
pub fn segment_dims(dim: usize, num_layers: usize) -> Vec<usize> {
    (0..num_layers)
        .map(|l| dim / num_layers + usize::from(l < dim % num_layers))
        .collect()
}

impl QuadraticFederatedTask {
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>, num_layers: usize) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::DimensionMismatch("one (A_u, b_u) pair per user".into()));
        }
        let dim = a[0].ncols();
        if num_layers < 1 || num_layers > dim {
            return Err(Error::DimensionMismatch(format!(
                "{num_layers} layers for dimension {dim}"
            )));
        }
        for (u, (au, bu)) in a.iter().zip(&b).enumerate() {
            if au.ncols() != dim || au.nrows() != bu.len() || au.nrows() == 0 {
                return Err(Error::DimensionMismatch(format!("user {u}: shapes disagree")));
            }
        }
        let users = a.len() as f64;
        let mut hessian = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for (au, bu) in a.iter().zip(&b) {
            hessian += au.transpose() * au;
            rhs += au.transpose() * bu;
        }
        hessian /= users;
        rhs /= users;
        let chol = hessian.clone().cholesky().ok_or_else(|| {
            Error::SingularTask("averaged Hessian is not positive definite".into())
        })?;
        let w_opt = chol.solve(&rhs);
        let eigen = SymmetricEigen::new(hessian);
        let rho_c = eigen.eigenvalues.min();
        let rho_s = eigen.eigenvalues.max();
        Ok(QuadraticFederatedTask {
            a,
            b,
            layer_dims: segment_dims(dim, num_layers),
            w_opt,
            rho_c,
            rho_s,
        })
    }

    pub fn dim(&self) -> usize {
        self.w_opt.len()
    }

    pub fn w_opt(&self) -> &DVector<f64> {
        &self.w_opt
    }

    /// Extreme eigenvalues of `(1/U) Σ A_uᵀA_u`.
    pub fn curvature(&self) -> (f64, f64) {
        (self.rho_c, self.rho_s)
    }

    pub fn averaged_hessian(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim(), self.dim());
        for au in &self.a {
            h += au.transpose() * au;
        }
        h / self.a.len() as f64
    }

    pub fn user_system(&self, u: usize) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.a[u], &self.b[u])
    }

    pub fn user_loss(&self, u: usize, w: &DVector<f64>) -> f64 {
        0.5 * (&self.a[u] * w - &self.b[u]).norm_squared()
    }

    /// `F(w) = (1/U) Σ F_u(w)`.
    pub fn global_loss(&self, w: &DVector<f64>) -> f64 {
        (0..self.a.len()).map(|u| self.user_loss(u, w)).sum::<f64>() / self.a.len() as f64
    }

    pub fn full_gradient(&self, u: usize, w: &DVector<f64>) -> DVector<f64> {
        self.a[u].transpose() * (&self.a[u] * w - &self.b[u])
    }

    pub fn het_gap(&self) -> Result<f64> {
        het_gap_quadratic(self)
    }

    /// `(E_i‖g_i(w)‖², ‖∇F_u(w)‖²)` for single-sample gradients
    /// `g_i = n a_i (a_iᵀw − b_i)`.
    fn single_sample_moments(&self, u: usize, w: &DVector<f64>) -> (f64, f64) {
        let a = &self.a[u];
        let n = a.nrows() as f64;
        let residual = a * w - &self.b[u];
        let second: f64 = (0..a.nrows())
            .map(|i| n * n * a.row(i).norm_squared() * residual[i] * residual[i])
            .sum::<f64>()
            / n;
        let mean = a.transpose() * residual;
        (second, mean.norm_squared())
    }

    /// Single-sample gradient variance `σ_u²(w)`; a batch of `S` drawn with
    /// replacement has variance `σ_u²(w)/S`.
    pub fn single_sample_variance(&self, u: usize, w: &DVector<f64>) -> f64 {
        let (second, mean_sq) = self.single_sample_moments(u, w);
        (second - mean_sq).max(0.0)
    }

    /// Estimates the analysis constants. `G²` and each `σ_u²` are maxima over
    /// `samples` points of the ball of `radius` around `w_opt` (plus `w_opt`
    /// and `w_1` themselves).
    pub fn derive_constants<R: Rng + ?Sized>(
        &self,
        w_1: &DVector<f64>,
        radius: f64,
        samples: usize,
        rng: &mut R,
    ) -> Result<QuadraticConstants> {
        let dim = self.dim();
        let mut points = vec![self.w_opt.clone(), w_1.clone()];
        for _ in 0..samples {
            let dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = dir.norm().max(1e-300);
            let scale = radius * rng.random::<f64>().powf(1.0 / dim as f64) / norm;
            points.push(&self.w_opt + dir * scale);
        }
        let users = self.a.len();
        let mut grad_bound_sq: f64 = 0.0;
        let mut noise = vec![0.0f64; users];
        for w in &points {
            for (u, slot) in noise.iter_mut().enumerate() {
                let (second, mean_sq) = self.single_sample_moments(u, w);
                grad_bound_sq = grad_bound_sq.max(second);
                *slot = slot.max((second - mean_sq).max(0.0));
            }
        }
        Ok(QuadraticConstants {
            rho_c: self.rho_c,
            rho_s: self.rho_s,
            grad_bound_sq,
            het_gap: self.het_gap()?,
            delta_1: (w_1 - &self.w_opt).norm_squared(),
            noise_scale_sq: noise,
        })
    }
}

impl FederatedTask for QuadraticFederatedTask {
    fn num_users(&self) -> usize {
        self.a.len()
    }

    fn layer_dims(&self) -> Vec<usize> {
        self.layer_dims.clone()
    }

    fn local_size(&self, user: usize) -> usize {
        self.a[user].nrows()
    }

    fn partial_gradient(
        &self,
        user: usize,
        model: &LayeredModel,
        batch: &[usize],
        from_layer: usize,
    ) -> Result<Vec<Vec<f64>>> {
        model.check_dims(&self.layer_dims)?;
        let a = &self.a[user];
        let n = a.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset(user));
        }
        if batch.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        let w = DVector::from_vec(model.flatten());
        let scale = n as f64 / batch.len() as f64;
        let mut grad = DVector::<f64>::zeros(w.len());
        for &i in batch {
            let row = a.row(i);
            let r = row.dot(&w.transpose()) - self.b[user][i];
            grad.axpy(scale * r, &row.transpose(), 1.0);
        }
        let offset: usize = self.layer_dims[..from_layer - 1].iter().sum();
        let mut start = offset;
        Ok(self.layer_dims[from_layer - 1..]
            .iter()
            .map(|&d| {
                let seg = grad.as_slice()[start..start + d].to_vec();
                start += d;
                seg
            })
            .collect())
    }

    fn batch_loss(&self, user: usize, model: &LayeredModel, batch: &[usize]) -> Result<f64> {
        let a = &self.a[user];
        let n = a.nrows() as f64;
        let w = DVector::from_vec(model.flatten());
        let total: f64 = batch
            .iter()
            .map(|&i| {
                let r = a.row(i).dot(&w.transpose()) - self.b[user][i];
                0.5 * n * r * r
            })
            .sum();
        Ok(total / batch.len() as f64)
    }
}

/// `A_u = I + h R_u` with Gaussian `R_u` (entries of variance `1/dim`),
/// `b_u = A_u c_u` with centres `c_u = c + h ξ_u`. With `h = 0` every user
/// is identical and the heterogeneity gap vanishes.
pub fn make_quadratic_task<R: Rng + ?Sized>(
    users: usize,
    dim: usize,
    heterogeneity: f64,
    num_layers: usize,
    rng: &mut R,
) -> Result<QuadraticFederatedTask> {
    if dim < 1 || users < 2 {
        return Err(Error::Domain(format!("need dim ≥ 1 and U ≥ 2, got {dim}, {users}")));
    }
    if !(heterogeneity.is_finite() && heterogeneity >= 0.0) {
        return Err(Error::Domain(format!("heterogeneity {heterogeneity} must be ≥ 0")));
    }
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    let centre = DVector::from_fn(dim, |_, _| normal());
    let entry_scale = 1.0 / (dim as f64).sqrt();
    let mut a = Vec::with_capacity(users);
    let mut b = Vec::with_capacity(users);
    for _ in 0..users {
        let r = DMatrix::from_fn(dim, dim, |_, _| normal() * entry_scale);
        let au = DMatrix::identity(dim, dim) + r * heterogeneity;
        let cu = &centre + DVector::from_fn(dim, |_, _| normal()) * heterogeneity;
        b.push(&au * cu);
        a.push(au);
    }
    QuadraticFederatedTask::new(a, b, num_layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use approx::assert_abs_diff_eq;

    /// Cyclic Jacobi eigenvalue iteration, independent of nalgebra's solver.
    fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i][i]).collect()
    }

    #[test]
    fn homogeneous_task_has_no_gap() {
        let mut rng = stream(1, Domain::Task, 0, 0);
        let task = make_quadratic_task(4, 6, 0.0, 3, &mut rng).unwrap();
        assert_abs_diff_eq!(task.het_gap().unwrap(), 0.0, epsilon = 1e-12);
        let (a0, b0) = task.user_system(0);
        // A = I, so the common centre is b
        assert_abs_diff_eq!((task.w_opt() - b0).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(a0, &DMatrix::identity(6, 6));
    }

    #[test]
    fn normal_equation_residual() {
        for seed in 0..100 {
            let mut rng = stream(seed, Domain::Task, 0, 0);
            let dim = 1 + (seed as usize % 9);
            let task = make_quadratic_task(3 + seed as usize % 4, dim, 0.4, 1, &mut rng).unwrap();
            let mut residual = DVector::zeros(dim);
            for u in 0..task.num_users() {
                residual += task.full_gradient(u, task.w_opt());
            }
            assert!(residual.norm() / task.num_users() as f64 <= 1e-8);
        }
    }

    #[test]
    fn curvature_matches_independent_eigensolver() {
        for seed in 0..20 {
            let mut rng = stream(seed, Domain::Task, 1, 0);
            let dim = 2 + seed as usize % 15;
            let task = make_quadratic_task(5, dim, 0.6, 1, &mut rng).unwrap();
            let eig = jacobi_eigenvalues(&task.averaged_hessian());
            let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (rho_c, rho_s) = task.curvature();
            assert_abs_diff_eq!(rho_c, lo, epsilon = 1e-8);
            assert_abs_diff_eq!(rho_s, hi, epsilon = 1e-8);
        }
    }

    #[test]
    fn segments_cover_dimension() {
        assert_eq!(segment_dims(10, 4), vec![3, 3, 2, 2]);
        assert_eq!(segment_dims(4, 4), vec![1, 1, 1, 1]);
    }

    #[test]
    fn batch_gradient_is_hand_rolled_gradient() {
        let mut rng = stream(5, Domain::Task, 0, 0);
        let task = make_quadratic_task(3, 5, 0.3, 2, &mut rng).unwrap();
        let model = LayeredModel::from_flat(&[0.3, -1.0, 2.0, 0.5, 0.1], &task.layer_dims()).unwrap();
        let batch = [0usize, 2, 2, 4];
        let grad = task.partial_gradient(1, &model, &batch, 1).unwrap();
        let (a, b) = task.user_system(1);
        let w = DVector::from_vec(model.flatten());
        let mut expected = vec![0.0; 5];
        for &i in &batch {
            let r: f64 = (0..5).map(|j| a[(i, j)] * w[j]).sum::<f64>() - b[i];
            for j in 0..5 {
                expected[j] += 5.0 * a[(i, j)] * r / 4.0;
            }
        }
        let flat: Vec<f64> = grad.concat();
        for j in 0..5 {
            assert_abs_diff_eq!(flat[j], expected[j], epsilon = 1e-12);
        }
        let tail = task.partial_gradient(1, &model, &batch, 2).unwrap();
        assert_eq!(tail.len(), 1);
        assert_eq!(tail[0], grad[1]);
    }

    #[test]
    fn full_batch_of_every_row_is_full_gradient() {
        let mut rng = stream(6, Domain::Task, 0, 0);
        let task = make_quadratic_task(2, 4, 0.5, 2, &mut rng).unwrap();
        let model = LayeredModel::from_flat(&[1.0, 0.0, -1.0, 0.5], &task.layer_dims()).unwrap();
        let batch: Vec<usize> = (0..4).collect();
        let g: Vec<f64> = task.partial_gradient(0, &model, &batch, 1).unwrap().concat();
        let full = task.full_gradient(0, &DVector::from_vec(model.flatten()));
        for j in 0..4 {
            assert_abs_diff_eq!(g[j], full[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn derived_constants_are_consistent() {
        let mut rng = stream(8, Domain::Task, 0, 0);
        let task = make_quadratic_task(4, 6, 0.3, 3, &mut rng).unwrap();
        let w1 = DVector::zeros(6);
        let consts = task
            .derive_constants(&w1, (task.w_opt()).norm(), 64, &mut stream(8, Domain::Analysis, 0, 0))
            .unwrap();
        assert!(consts.rho_s >= consts.rho_c && consts.rho_c > 0.0);
        assert_abs_diff_eq!(consts.delta_1, task.w_opt().norm_squared(), epsilon = 1e-12);
        for u in 0..4 {
            assert!(consts.noise_scale_sq[u] >= task.single_sample_variance(u, &w1));
            assert!(consts.grad_bound_sq >= consts.noise_scale_sq[u]);
        }
    }
}
