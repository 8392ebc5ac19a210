//! Euclidean NMF baseline with Lee–Seung multiplicative updates.

use ndarray::{Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tf_transform::SpectrogramGrid;

const EPS: f64 = 1e-12;
const FIT_TOL: f64 = 1e-9;
pub const DEFAULT_ITERS: usize = 500;

#[derive(Debug, Clone)]
pub struct NmfResult {
    /// Spectral templates, F × rank.
    pub w: Array2<f64>,
    /// Activations, rank × T.
    pub h: Array2<f64>,
    /// Rank-one terms `w_i h_i`, ordered by decreasing activation kurtosis so
    /// that the spikiest (bumps-like) component comes first.
    pub component_grids: Vec<SpectrogramGrid>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// `‖S − WH‖_F` after each update.
    pub fit_trace: Vec<f64>,
}

impl NmfResult {
    /// Sum of the component grids, i.e. `WH`.
    pub fn reconstruction(&self) -> Array2<f64> {
        let mut acc = Array2::zeros(self.component_grids[0].dim());
        for g in &self.component_grids {
            acc += g.values();
        }
        acc
    }
}

fn frobenius_residual(s: &Array2<f64>, approx: &Array2<f64>) -> f64 {
    s.iter().zip(approx).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// `E[(h − mean)^4] / E[(h − mean)^2]^2`, zero for a constant row.
pub fn kurtosis(row: ArrayView1<f64>) -> f64 {
    let n = row.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = row.sum() / n;
    let m2 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = row.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    if m2 <= 0.0 {
        0.0
    } else {
        m4 / (m2 * m2)
    }
}

pub fn nmf_factorize(s_z: &SpectrogramGrid, rank: usize, iters: usize, seed: u64) -> Result<NmfResult> {
    if rank == 0 {
        return Err(Error::Config("NMF rank must be at least 1".into()));
    }
    let s = s_z.values();
    if let Some(v) = s.iter().find(|v| **v < 0.0) {
        return Err(Error::Domain(format!("NMF input entry {v} is negative")));
    }
    let (rows, cols) = s.dim();
    let mean = s.mean().unwrap_or(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // 1 − U[0,1) lies in (0, 1].
    let mut init = |shape| Array2::from_shape_simple_fn(shape, || (1.0 - rng.random::<f64>()) * mean);
    let mut w = init((rows, rank));
    let mut h = init((rank, cols));

    let mut fit_prev = frobenius_residual(s, &w.dot(&h));
    let mut fit_trace = Vec::new();
    for _ in 0..iters {
        let numer = w.t().dot(s);
        let denom = w.t().dot(&w).dot(&h);
        h.zip_mut_with(&numer, |h, n| *h *= n);
        h.zip_mut_with(&denom, |h, d| *h /= d + EPS);

        let numer = s.dot(&h.t());
        let denom = w.dot(&h.dot(&h.t()));
        w.zip_mut_with(&numer, |w, n| *w *= n);
        w.zip_mut_with(&denom, |w, d| *w /= d + EPS);

        let fit = frobenius_residual(s, &w.dot(&h));
        fit_trace.push(fit);
        let change = (fit_prev - fit).abs() / fit_prev.max(f64::MIN_POSITIVE);
        fit_prev = fit;
        if change < FIT_TOL {
            break;
        }
    }

    let mut order: Vec<usize> = (0..rank).collect();
    let kurt: Vec<f64> = h.axis_iter(Axis(0)).map(kurtosis).collect();
    order.sort_by(|&a, &b| kurt[b].total_cmp(&kurt[a]));
    let component_grids = order
        .iter()
        .map(|&i| {
            let wi = w.column(i).insert_axis(Axis(1));
            let hi = h.row(i).insert_axis(Axis(0));
            SpectrogramGrid::with_signal_len(wi.dot(&hi), *s_z.config(), s_z.signal_len())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut result = NmfResult {
        w,
        h,
        component_grids,
        residual_norm: 0.0,
        iterations: fit_trace.len(),
        fit_trace,
    };
    result.residual_norm = frobenius_residual(s, &result.reconstruction());
    Ok(result)
}

/// `‖S_z − WH‖_F` for a factorization of `s_z`.
pub fn nmf_residual(s_z: &SpectrogramGrid, result: &NmfResult) -> Result<f64> {
    let wh = result.w.dot(&result.h);
    if wh.dim() != s_z.dim() {
        return Err(Error::Shape { expected: s_z.dim(), found: wh.dim() });
    }
    Ok(frobenius_residual(s_z.values(), &wh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tf_transform::StftConfig;
    use approx::assert_abs_diff_eq;

    fn config() -> StftConfig {
        StftConfig::new(64, 16, 64, 1000.0).unwrap()
    }

    fn grid(values: Array2<f64>) -> SpectrogramGrid {
        SpectrogramGrid::new(values, config()).unwrap()
    }

    fn random_nonneg(seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((33, 12), || rng.random::<f64>())
    }

    #[test]
    fn rank_one_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w: Vec<f64> = (0..33).map(|_| rng.random_range(0.1..2.0)).collect();
        let h: Vec<f64> = (0..12).map(|_| rng.random_range(0.1..2.0)).collect();
        let s = Array2::from_shape_fn((33, 12), |(i, j)| w[i] * h[j]);
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let res = nmf_factorize(&grid(s), 1, 500, 3).unwrap();
        assert!(res.residual_norm <= 1e-6 * norm, "{}", res.residual_norm);
    }

    #[test]
    fn zero_input_gives_zero_factors() {
        let res = nmf_factorize(&grid(Array2::zeros((33, 12))), 2, 50, 0).unwrap();
        assert_eq!(res.residual_norm, 0.0);
        assert!(res.w.iter().chain(res.h.iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn fit_is_monotone_and_factors_nonnegative() {
        let s = grid(random_nonneg(4));
        let res = nmf_factorize(&s, 2, 300, 5).unwrap();
        for pair in res.fit_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "{} -> {}", pair[0], pair[1]);
        }
        assert!(res.w.iter().chain(res.h.iter()).all(|v| *v >= 0.0));
    }

    #[test]
    fn components_sum_to_product() {
        let s = grid(random_nonneg(6));
        let res = nmf_factorize(&s, 2, 100, 7).unwrap();
        let wh = res.w.dot(&res.h);
        for (a, b) in res.reconstruction().iter().zip(&wh) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(nmf_residual(&s, &res).unwrap(), res.residual_norm, epsilon = 1e-12);
    }

    #[test]
    fn residual_of_zero_factors_is_input_norm() {
        let values = random_nonneg(8);
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = grid(values);
        let mut res = nmf_factorize(&s, 2, 1, 0).unwrap();
        res.w.fill(0.0);
        res.h.fill(0.0);
        assert_abs_diff_eq!(nmf_residual(&s, &res).unwrap(), norm, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let s = grid(random_nonneg(9));
        let a = nmf_factorize(&s, 2, 50, 10).unwrap();
        let b = nmf_factorize(&s, 2, 50, 10).unwrap();
        assert_eq!(a.w, b.w);
        assert_eq!(a.h, b.h);
    }

    #[test]
    fn kurtosis_orders_spiky_rows_first() {
        let spiky = ndarray::arr1(&[0.0, 0.0, 9.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let flat = ndarray::arr1(&[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(kurtosis(spiky.view()) > kurtosis(flat.view()));
        assert_eq!(kurtosis(ndarray::arr1(&[3.0, 3.0]).view()), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            nmf_factorize(&grid(Array2::zeros((33, 12))), 0, 10, 0),
            Err(Error::Config(_))
        ));
    }
}
