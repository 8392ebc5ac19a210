//! Numeric checks of the bumps-spectrogram approximation and of the
//! cross-term assumption behind the separation model.
//!
//! For a bumps signal analyzed with a compactly supported window `g` of
//! half-width Δg, the spectrogram of the train is the sum of single-bump
//! spectrograms as soon as `Δφ < Δg < θφ/2 − Δφ`. The residual terms of the
//! first-order expansion of the window around each bump are bounded by
//!
//! ```text
//! |ε₁| ≤ Δφ² ‖φ‖∞ ‖g′‖∞
//! |ε₂| ≤ (4/3) π Δφ³ ‖φ‖∞ ‖g′‖∞
//! ```

use std::f64::consts::PI;

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::synthesis::{synth_bumps, BumpsSpec};
use crate::tf_transform::{spectrogram, ComplexTFGrid, StftConfig, StftPlan, WindowKind};

/// Dense-grid oversampling used when maximizing `|g′|`.
const DERIVATIVE_OVERSAMPLING: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremBounds {
    pub eps1_bound: f64,
    pub eps2_bound: f64,
    pub support_ok: bool,
    /// Numerically maximized `‖g′‖∞`.
    pub window_derivative_max: f64,
    pub delta_phi: f64,
    pub delta_g: f64,
    /// θφ, infinite for a single bump.
    pub theta_phi: f64,
}

/// `Δφ < Δg < θφ/2 − Δφ`.
pub fn check_support_condition(delta_phi: f64, delta_g: f64, theta_phi: f64) -> bool {
    delta_phi < delta_g && delta_g < theta_phi / 2.0 - delta_phi
}

/// Continuous analysis window centered at 0 with support `[-Δg, Δg]`.
fn window_fn(kind: WindowKind, half_width: f64) -> impl Fn(f64) -> f64 {
    move |t: f64| match kind {
        WindowKind::HannPeriodic => {
            if t.abs() <= half_width {
                0.5 * (1.0 + (PI * t / half_width).cos())
            } else {
                0.0
            }
        }
    }
}

/// `max |g′|` by central differences on a grid `64·window_len` times finer
/// than the window support.
pub fn window_derivative_max(config: &StftConfig) -> f64 {
    let half = config.window_half_width();
    let g = window_fn(config.window_kind, half);
    let steps = DERIVATIVE_OVERSAMPLING * config.window_len;
    let h = 2.0 * half / steps as f64;
    (1..steps)
        .map(|i| {
            let t = -half + i as f64 * h;
            ((g(t + h) - g(t - h)) / (2.0 * h)).abs()
        })
        .fold(0.0, f64::max)
}

fn theta_phi(bumps: &BumpsSpec) -> f64 {
    bumps.min_gap().unwrap_or(f64::INFINITY)
}

pub fn theorem1_error_bounds(bumps: &BumpsSpec, config: &StftConfig) -> TheoremBounds {
    let delta_phi = bumps.bump_half_width();
    let delta_g = config.window_half_width();
    let theta_phi = theta_phi(bumps);
    let phi_max = bumps.bump_shape().peak();
    let g_prime = window_derivative_max(config);
    let eps1_bound = delta_phi.powi(2) * phi_max * g_prime;
    TheoremBounds {
        eps1_bound,
        eps2_bound: 4.0 / 3.0 * PI * delta_phi * eps1_bound,
        support_ok: check_support_condition(delta_phi, delta_g, theta_phi),
        window_derivative_max: g_prime,
        delta_phi,
        delta_g,
        theta_phi,
    }
}

/// Maximum elementwise gap between the spectrogram of the full bumps train
/// and the sum of the spectrograms of each bump alone.
pub fn additivity_gap(bumps: &BumpsSpec, config: &StftConfig) -> Result<f64> {
    let delta_phi = bumps.bump_half_width();
    let delta_g = config.window_half_width();
    let theta = theta_phi(bumps);
    if !check_support_condition(delta_phi, delta_g, theta) {
        return Err(Error::Precondition(format!(
            "support condition fails: Δφ={delta_phi}, Δg={delta_g}, θφ={theta}"
        )));
    }
    let plan = StftPlan::new(config)?;
    let full = spectrogram(&plan.stft(&synth_bumps(bumps))?).into_values();
    let mut sum = Array2::<f64>::zeros(full.dim());
    for &tk in bumps.impulse_times() {
        let single = bumps.with_impulse_times(vec![tk])?;
        sum += spectrogram(&plan.stft(&synth_bumps(&single))?).values();
    }
    Ok(full
        .iter()
        .zip(&sum)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossTermReport {
    /// `2 Re(T_x · conj(T_y))`.
    pub grid: Array2<f64>,
    pub max_abs: f64,
    /// `‖grid‖_F / ‖S_z‖_F`.
    pub rel_fro: f64,
    /// `max|grid| / max S_z`.
    pub rel_max: f64,
    /// `max|S_z − S_x − S_y − grid| / max S_z` with `T_z = T_x + T_y`.
    pub identity_error: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn cross_term_report(t_x: &ComplexTFGrid, t_y: &ComplexTFGrid) -> Result<CrossTermReport> {
    if t_x.dim() != t_y.dim() {
        return Err(Error::Shape { expected: t_x.dim(), found: t_y.dim() });
    }
    let mut grid = Array2::zeros(t_x.dim());
    let mut s_z = Array2::zeros(t_x.dim());
    let mut identity_gap = 0.0_f64;
    Zip::from(&mut grid)
        .and(&mut s_z)
        .and(t_x.values())
        .and(t_y.values())
        .for_each(|c, z, &x, &y| {
            *c = 2.0 * (x * y.conj()).re;
            *z = (x + y).norm_sqr();
            identity_gap = identity_gap.max((*z - x.norm_sqr() - y.norm_sqr() - *c).abs());
        });
    let fro = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let max_abs = grid.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let max_z = s_z.iter().cloned().fold(0.0, f64::max);
    Ok(CrossTermReport {
        max_abs,
        rel_fro: ratio(fro(&grid), fro(&s_z)),
        rel_max: ratio(max_abs, max_z),
        identity_error: ratio(identity_gap, max_z),
        grid,
    })
}
