//! Alternating estimation of the bumps spectrogram `S_x` (smooth along
//! frequency) and the AM-FM spectrogram `S_y` (sparse), with both estimates
//! projected onto consistent STFTs after every update.
//!
//! The objective is
//!
//! ```text
//! J(S_x, S_y) = ‖S_z − S_x − S_y‖²_F + λ‖B S_x‖²_F + μ‖S_y‖₁
//! ```
//!
//! where `B` is the forward difference along frequency applied to every
//! time column.

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tf_transform::{
    combine_magnitude_phase, spectrogram, ComplexTFGrid, SpectrogramGrid, StftPlan,
};

/// Guard for the denominator of the relative cost change.
const RHO_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationParams {
    /// Smoothness weight λ on `‖B S_x‖²`.
    pub lambda: f64,
    /// Sparsity weight μ on `‖S_y‖₁`.
    pub mu: f64,
    /// Outer iteration cap K.
    pub max_iter: usize,
    /// Relative cost change Θ below which the outer loop stops.
    pub theta: f64,
    pub fista_max_iter: usize,
    pub fista_tol: f64,
    /// Scale the input spectrogram to unit maximum before solving.
    pub normalize: bool,
}

impl Default for SeparationParams {
    fn default() -> Self {
        SeparationParams {
            lambda: 0.1,
            mu: 1e-5,
            max_iter: 1000,
            theta: 1e-3,
            fista_max_iter: 200,
            fista_tol: 1e-8,
            normalize: true,
        }
    }
}

impl SeparationParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must be finite and nonnegative")))
            }
        };
        nonneg("lambda", self.lambda)?;
        nonneg("mu", self.mu)?;
        nonneg("theta", self.theta)?;
        nonneg("fista_tol", self.fista_tol)?;
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if self.fista_max_iter == 0 {
            return Err(Error::Config("fista_max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Forward difference along frequency: −1 on the diagonal, +1 on the
/// superdiagonal, last row `(0 … 0 −1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreqDiffOperator {
    dim: usize,
}

impl FreqDiffOperator {
    pub fn new(dim: usize) -> Self {
        FreqDiffOperator { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, column: &[f64]) -> Vec<f64> {
        assert_eq!(column.len(), self.dim);
        (0..self.dim)
            .map(|i| match column.get(i + 1) {
                Some(next) => next - column[i],
                None => -column[i],
            })
            .collect()
    }

    /// Diagonal and off-diagonal of `I + λBᵀB`.
    fn normal_system(&self, lambda: f64) -> (Vec<f64>, f64) {
        let diag = (0..self.dim)
            .map(|i| if i == 0 { 1.0 + lambda } else { 1.0 + 2.0 * lambda })
            .collect();
        (diag, -lambda)
    }
}

/// Factored `I + λBᵀB` for repeated tridiagonal solves.
#[derive(Debug, Clone)]
pub struct SmoothSolver {
    off: f64,
    pivots: Vec<f64>,
    upper: Vec<f64>,
}

impl SmoothSolver {
    pub fn new(dim: usize, lambda: f64) -> Self {
        let (diag, off) = FreqDiffOperator::new(dim).normal_system(lambda);
        let mut pivots = Vec::with_capacity(dim);
        let mut upper = Vec::with_capacity(dim);
        for (i, d) in diag.iter().enumerate() {
            let pivot = if i == 0 { *d } else { d - off * upper[i - 1] };
            pivots.push(pivot);
            upper.push(off / pivot);
        }
        SmoothSolver { off, pivots, upper }
    }

    pub fn dim(&self) -> usize {
        self.pivots.len()
    }

    /// Solves `(I + λBᵀB) s = r` in place.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.pivots.len();
        assert_eq!(rhs.len(), n);
        if n == 0 {
            return;
        }
        rhs[0] /= self.pivots[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.off * rhs[i - 1]) / self.pivots[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }

    /// Column-wise solve without clamping.
    pub fn solve(&self, rhs: &Array2<f64>) -> Array2<f64> {
        assert_eq!(rhs.nrows(), self.dim());
        let mut out = Array2::zeros(rhs.dim());
        let mut column = vec![0.0; rhs.nrows()];
        for (src, mut dst) in rhs.columns().into_iter().zip(out.columns_mut()) {
            column.iter_mut().zip(src).for_each(|(c, s)| *c = *s);
            self.solve_in_place(&mut column);
            dst.iter_mut().zip(&column).for_each(|(d, c)| *d = *c);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothUpdate {
    /// Nonnegative solution.
    pub values: Array2<f64>,
    /// Number of entries raised to zero.
    pub clamped: usize,
}

/// `max((I + λBᵀB)⁻¹ R, 0)` per time column.
pub fn update_smooth(residual: &Array2<f64>, lambda: f64) -> Result<SmoothUpdate> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda = {lambda} must be nonnegative")));
    }
    if residual.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite residual".into()));
    }
    Ok(smooth_step(&SmoothSolver::new(residual.nrows(), lambda), residual))
}

fn smooth_step(solver: &SmoothSolver, residual: &Array2<f64>) -> SmoothUpdate {
    let mut values = solver.solve(residual);
    let mut clamped = 0;
    values.mapv_inplace(|v| {
        if v < 0.0 {
            clamped += 1;
            0.0
        } else {
            v
        }
    });
    SmoothUpdate { values, clamped }
}

/// FISTA on `‖R − S‖² + μ‖S‖₁ + ι_{S ≥ 0}` from a warm start.
pub fn update_sparse(
    residual: &Array2<f64>,
    warm_start: &Array2<f64>,
    mu: f64,
    params: &SeparationParams,
) -> Result<Array2<f64>> {
    if residual.dim() != warm_start.dim() {
        return Err(Error::Shape { expected: residual.dim(), found: warm_start.dim() });
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Config(format!("mu = {mu} must be nonnegative")));
    }
    // Gradient 2(S − R) is 2-Lipschitz.
    let step = 0.5;
    let threshold = mu * step;
    let mut x_prev = warm_start.mapv(|v| v.max(0.0));
    let mut y = x_prev.clone();
    let mut x = Array2::zeros(residual.dim());
    let mut t = 1.0_f64;
    for _ in 0..params.fista_max_iter {
        Zip::from(&mut x).and(&y).and(residual).for_each(|x, &y, &r| {
            let v = y - step * 2.0 * (y - r);
            *x = (v - threshold).max(0.0);
        });
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let mut diff = 0.0;
        let mut norm = 0.0;
        Zip::from(&mut y).and(&x).and(&x_prev).for_each(|y, &x, &xp| {
            *y = x + momentum * (x - xp);
            diff += (x - xp) * (x - xp);
            norm += xp * xp;
        });
        std::mem::swap(&mut x_prev, &mut x);
        t = t_next;
        if diff.sqrt() <= params.fista_tol * norm.sqrt().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(x_prev)
}

fn check_same_dim(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape { expected: a.dim(), found: b.dim() });
    }
    Ok(())
}

/// Raw-matrix form of [`objective`].
pub fn objective_values(
    s_z: &Array2<f64>,
    s_x: &Array2<f64>,
    s_y: &Array2<f64>,
    lambda: f64,
    mu: f64,
) -> Result<f64> {
    check_same_dim(s_z, s_x)?;
    check_same_dim(s_z, s_y)?;
    let mut fit = 0.0;
    let mut l1 = 0.0;
    Zip::from(s_z).and(s_x).and(s_y).for_each(|&z, &x, &y| {
        let r = z - x - y;
        fit += r * r;
        l1 += y.abs();
    });
    let mut smooth = 0.0;
    for column in s_x.columns() {
        let n = column.len();
        for i in 0..n {
            let d = if i + 1 < n { column[i + 1] - column[i] } else { -column[i] };
            smooth += d * d;
        }
    }
    Ok(fit + lambda * smooth + mu * l1)
}

pub fn objective(
    s_z: &SpectrogramGrid,
    s_x: &SpectrogramGrid,
    s_y: &SpectrogramGrid,
    params: &SeparationParams,
) -> Result<f64> {
    objective_values(s_z.values(), s_x.values(), s_y.values(), params.lambda, params.mu)
}

/// `‖S_z − S_x − S_y‖_F`.
pub fn residual_norm(s_z: &SpectrogramGrid, s_x: &SpectrogramGrid, s_y: &SpectrogramGrid) -> Result<f64> {
    objective_values(s_z.values(), s_x.values(), s_y.values(), 0.0, 0.0).map(f64::sqrt)
}

#[derive(Debug, Clone)]
pub struct SeparationResult {
    pub s_x: SpectrogramGrid,
    pub s_y: SpectrogramGrid,
    /// Consistent STFTs whose spectrograms are `s_x` and `s_y`.
    pub t_x: ComplexTFGrid,
    pub t_y: ComplexTFGrid,
    /// Objective after each outer iteration, on the normalized scale.
    pub cost_trace: Vec<f64>,
    pub rho_trace: Vec<f64>,
    /// Entries clamped to zero by each smooth update.
    pub clamped_trace: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Factor the input spectrogram was divided by before solving.
    pub normalization: f64,
}

/// Runs the alternating consistent separation on the mixture STFT `t_z`.
pub fn separate(t_z: &ComplexTFGrid, params: &SeparationParams) -> Result<SeparationResult> {
    params.validate()?;
    let plan = StftPlan::new(t_z.config())?;
    let raw = spectrogram(t_z);
    let peak = raw.max();
    let normalization = if params.normalize && peak > 0.0 { peak } else { 1.0 };
    let amp = normalization.sqrt();
    let t_z = ComplexTFGrid::with_signal_len(
        t_z.values().mapv(|z| z / amp),
        *t_z.config(),
        t_z.signal_len(),
    )?;
    let s_z = spectrogram(&t_z);
    let solver = SmoothSolver::new(s_z.dim().0, params.lambda);

    let mut s_y = SpectrogramGrid::zeros(*s_z.config(), s_z.signal_len());
    let mut t_x = ComplexTFGrid::zeros(*t_z.config(), t_z.signal_len());
    let mut t_y = t_x.clone();
    let mut cost_trace: Vec<f64> = Vec::new();
    let mut rho_trace = Vec::new();
    let mut clamped_trace = Vec::new();
    let mut converged = false;

    for k in 1..=params.max_iter {
        let smooth = smooth_step(&solver, &(s_z.values() - s_y.values()));
        clamped_trace.push(smooth.clamped);
        let sx_raw = SpectrogramGrid::from_parts(smooth.values, *s_z.config(), s_z.signal_len());
        t_x = plan.project(&combine_magnitude_phase(&sx_raw, &t_z)?)?;
        let s_x = spectrogram(&t_x);

        let sparse = update_sparse(&(s_z.values() - s_x.values()), s_y.values(), params.mu, params)?;
        let sy_raw = SpectrogramGrid::from_parts(sparse, *s_z.config(), s_z.signal_len());
        t_y = plan.project(&combine_magnitude_phase(&sy_raw, &t_z)?)?;
        s_y = spectrogram(&t_y);

        let cost = objective(&s_z, &s_x, &s_y, params)?;
        if !cost.is_finite() {
            return Err(Error::Divergence { iteration: k, value: cost });
        }
        let rho = match cost_trace.last() {
            None => f64::INFINITY,
            Some(&prev) => (cost - prev).abs() / f64::max(prev, RHO_FLOOR),
        };
        cost_trace.push(cost);
        rho_trace.push(rho);
        if rho < params.theta {
            converged = true;
            break;
        }
    }

    let iterations = cost_trace.len();
    let config = *t_z.config();
    let len = t_z.signal_len();
    let t_x = ComplexTFGrid::from_parts(t_x.into_values() * Complex64::from(amp), config, len);
    let t_y = ComplexTFGrid::from_parts(t_y.into_values() * Complex64::from(amp), config, len);
    Ok(SeparationResult {
        s_x: spectrogram(&t_x),
        s_y: spectrogram(&t_y),
        t_x,
        t_y,
        cost_trace,
        rho_trace,
        clamped_trace,
        iterations,
        converged,
        normalization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tf_transform::{stft, Signal, StftConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense `I + λBᵀB` built from B itself.
    fn dense_normal_matrix(dim: usize, lambda: f64) -> Vec<Vec<f64>> {
        let mut b = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            b[i][i] = -1.0;
            if i + 1 < dim {
                b[i][i + 1] = 1.0;
            }
        }
        let mut a = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                let btb: f64 = (0..dim).map(|k| b[k][i] * b[k][j]).sum();
                a[i][j] = lambda * btb + if i == j { 1.0 } else { 0.0 };
            }
        }
        a
    }

    /// Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut r: Vec<f64>) -> Vec<f64> {
        let n = r.len();
        for col in 0..n {
            let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, p);
            r.swap(col, p);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                r[row] -= f * r[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
            x[i] = (r[i] - s) / a[i][i];
        }
        x
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64, lo: f64, hi: f64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
    }

    #[test]
    fn diff_operator_on_constant_column() {
        let b = FreqDiffOperator::new(5);
        assert_eq!(b.apply(&[3.0; 5]), vec![0.0, 0.0, 0.0, 0.0, -3.0]);
    }

    #[test]
    fn two_by_two_system() {
        let a = dense_normal_matrix(2, 1.0);
        assert_eq!(a, vec![vec![2.0, -1.0], vec![-1.0, 3.0]]);
        let mut r = [1.0, 0.0];
        SmoothSolver::new(2, 1.0).solve_in_place(&mut r);
        assert_abs_diff_eq!(r[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn tridiagonal_matches_dense_solve() {
        for dim in [1, 2, 3, 8, 17, 64] {
            for (seed, lambda) in [(1, 0.1), (2, 1.0), (3, 37.5)] {
                let r = random_matrix(dim, 4, seed, -1.0, 1.0);
                let s = SmoothSolver::new(dim, lambda).solve(&r);
                let a = dense_normal_matrix(dim, lambda);
                for (rc, sc) in r.columns().into_iter().zip(s.columns()) {
                    let rv = rc.to_vec();
                    let oracle = dense_solve(a.clone(), rv.clone());
                    let r_inf = rv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    for i in 0..dim {
                        let ax: f64 = (0..dim).map(|j| a[i][j] * sc[j]).sum();
                        assert!((ax - rv[i]).abs() <= 1e-10 * r_inf);
                        assert_abs_diff_eq!(sc[i], oracle[i], epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_lambda_is_clamp() {
        let r = random_matrix(9, 5, 4, -1.0, 1.0);
        let out = update_smooth(&r, 0.0).unwrap();
        assert_eq!(out.values, r.mapv(|v| v.max(0.0)));
        assert_eq!(out.clamped, r.iter().filter(|v| **v < 0.0).count());
    }

    #[test]
    fn soft_threshold_examples() {
        let params = SeparationParams::default();
        let r = Array2::from_shape_vec((1, 2), vec![5.0, 1.0]).unwrap();
        let out = update_sparse(&r, &Array2::zeros((1, 2)), 4.0, &params).unwrap();
        assert_abs_diff_eq!(out[(0, 0)], 3.0, epsilon = 1e-12);
        assert_eq!(out[(0, 1)], 0.0);
    }

    #[test]
    fn sparse_update_matches_closed_form() {
        let params = SeparationParams::default();
        let r = random_matrix(33, 20, 5, -1.0, 2.0);
        for warm_seed in [6, 7] {
            let warm = random_matrix(33, 20, warm_seed, 0.0, 3.0);
            let out = update_sparse(&r, &warm, 0.3, &params).unwrap();
            Zip::from(&out).and(&r).for_each(|o, r| {
                assert!((o - (r - 0.15).max(0.0)).abs() <= 1e-8);
            });
            let f = |s: &Array2<f64>| {
                (&r - s).mapv(|v| v * v).sum() + 0.3 * s.iter().map(|v| v.abs()).sum::<f64>()
            };
            assert!(f(&out) <= f(&warm));
        }
    }

    #[test]
    fn objective_examples() {
        let p0 = SeparationParams { lambda: 0.0, mu: 0.0, ..Default::default() };
        let sx = random_matrix(6, 3, 8, 0.0, 1.0);
        let sy = random_matrix(6, 3, 9, 0.0, 1.0);
        let sz = &sx + &sy;
        assert_abs_diff_eq!(objective_values(&sz, &sx, &sy, p0.lambda, p0.mu).unwrap(), 0.0, epsilon = 1e-24);

        let c = 2.5;
        let cols = 7;
        let constant = Array2::from_elem((10, cols), c);
        let zeros = Array2::zeros((10, cols));
        let j = objective_values(&constant, &constant, &zeros, 0.4, 0.0).unwrap();
        assert_abs_diff_eq!(j, 0.4 * c * c * cols as f64, epsilon = 1e-12);

        assert_eq!(objective_values(&zeros, &zeros, &zeros, 1.0, 1.0).unwrap(), 0.0);
        assert!(objective_values(&zeros, &Array2::zeros((3, 3)), &zeros, 1.0, 1.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(SeparationParams::default().validate().is_ok());
        assert!(SeparationParams { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(SeparationParams { max_iter: 0, ..Default::default() }.validate().is_err());
        assert!(SeparationParams { theta: f64::NAN, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_mixture_stops_at_second_iteration() {
        let cfg = StftConfig::new(64, 16, 64, 8000.0).unwrap();
        let t_z = ComplexTFGrid::zeros(cfg, 500);
        let res = separate(&t_z, &SeparationParams::default()).unwrap();
        assert_eq!(res.iterations, 2);
        assert!(res.converged);
        assert_eq!(res.rho_trace[1], 0.0);
        assert!(res.s_x.values().iter().all(|v| *v == 0.0));
        assert!(res.s_y.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn separation_halts_within_cap_and_outputs_are_consistent() {
        let sr = 4000.0;
        let cfg = StftConfig::new(64, 16, 64, sr).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..1200)
            .map(|n| (2.0 * std::f64::consts::PI * 500.0 * n as f64 / sr).sin() + 0.1 * rng.random_range(-1.0..1.0))
            .collect();
        let t_z = stft(&Signal::new(x, sr).unwrap(), &cfg).unwrap();
        let params = SeparationParams { max_iter: 7, theta: 0.0, ..Default::default() };
        let res = separate(&t_z, &params).unwrap();
        assert_eq!(res.iterations, 7);
        assert!(!res.converged);
        assert_eq!(res.cost_trace.len(), 7);
        assert!(res.rho_trace[0].is_infinite());
        let plan = StftPlan::new(&cfg).unwrap();
        for t in [&res.t_x, &res.t_y] {
            let again = plan.project(t).unwrap();
            let diff: f64 = (again.values() - t.values()).iter().map(|z| z.norm_sqr()).sum();
            let norm: f64 = t.values().iter().map(|z| z.norm_sqr()).sum();
            assert!(diff.sqrt() <= 1e-10 * norm.sqrt().max(1e-300));
        }
        assert_eq!(res.s_x, spectrogram(&res.t_x));
    }

    proptest! {
        #[test]
        fn smooth_update_scales(c in 0.01f64..100.0, lambda in 0.0f64..10.0, seed in 0u64..100) {
            let r = random_matrix(16, 3, seed, -1.0, 1.0);
            let a = update_smooth(&r, lambda).unwrap().values;
            let b = update_smooth(&(&r * c), lambda).unwrap().values;
            Zip::from(&a).and(&b).for_each(|a, b| {
                assert!((a * c - b).abs() <= 1e-12 * c.max(1.0));
            });
        }

        #[test]
        fn smooth_update_decreases_subproblem(lambda in 0.0f64..5.0, seed in 0u64..100) {
            let r = random_matrix(12, 4, seed, 0.0, 1.0);
            let s = SmoothSolver::new(12, lambda).solve(&r);
            let zeros = Array2::zeros(r.dim());
            let cost = |s: &Array2<f64>| objective_values(&r, s, &zeros, lambda, 0.0).unwrap();
            prop_assert!(cost(&s) <= cost(&r) + 1e-12);
            prop_assert!(cost(&s) <= cost(&zeros) + 1e-12);
        }
    }
}
