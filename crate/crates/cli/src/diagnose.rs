//! The `diagnose` pipeline: support condition, error-bound formulas,
//! additivity of the bumps spectrogram and the cross-term report.

use std::f64::consts::PI;
use std::fmt::Write as _;

use specsep::synthesis::{preset_stft_config, synth_amfm, synth_bumps};
use specsep::{
    additivity_gap, cross_term_report, spectrogram, theorem1_error_bounds, AmFmSpec, BumpsSpec, CrossTermReport,
    Signal, StftConfig, StftPlan, TheoremBounds,
};

use crate::error::Result;

/// Largest acceptable `‖cross‖_F / ‖S_z‖_F` on the preset.
pub const CROSS_REL_FRO_MAX: f64 = 0.05;
pub const DERIVATIVE_REL_TOL: f64 = 1e-6;
pub const RATIO_REL_TOL: f64 = 1e-12;
pub const EXACT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, threshold: f64) -> Self {
        Check { name, value, threshold, passed: value <= threshold }
    }

    fn flag(name: &'static str, ok: bool) -> Self {
        Check { name, value: ok as u8 as f64, threshold: 1.0, passed: ok }
    }
}

#[derive(Debug, Clone)]
pub struct DiagnosticReport {
    pub seed: u64,
    pub config: StftConfig,
    pub bounds: TheoremBounds,
    pub additivity_gap: f64,
    pub sx_max: f64,
    /// `max|S_z − S_x − S_y − cross| / max S_z` with `T_z = stft(x + y)`.
    pub decomposition_error: f64,
    pub cross: CrossTermReport,
    pub checks: Vec<Check>,
}

impl DiagnosticReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    /// Flat `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let b = &self.bounds;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("seed", self.seed.to_string());
        kv("sample_rate", self.config.sample_rate.to_string());
        kv("window_len", self.config.window_len.to_string());
        kv("hop", self.config.hop.to_string());
        kv("fft_len", self.config.fft_len.to_string());
        kv("delta_phi", b.delta_phi.to_string());
        kv("delta_g", b.delta_g.to_string());
        kv("theta_phi", b.theta_phi.to_string());
        kv("support_ok", b.support_ok.to_string());
        kv("window_derivative_max", b.window_derivative_max.to_string());
        kv("window_derivative_closed_form", (PI / (2.0 * b.delta_g)).to_string());
        kv("eps1_bound", b.eps1_bound.to_string());
        kv("eps2_bound", b.eps2_bound.to_string());
        kv("additivity_gap", self.additivity_gap.to_string());
        kv("sx_max", self.sx_max.to_string());
        kv("decomposition_error", self.decomposition_error.to_string());
        kv("cross_max_abs", self.cross.max_abs.to_string());
        kv("cross_rel_fro", self.cross.rel_fro.to_string());
        kv("cross_rel_max", self.cross.rel_max.to_string());
        kv("cross_identity_error", self.cross.identity_error.to_string());
        for c in &self.checks {
            kv(&format!("check.{}", c.name), if c.passed { "pass" } else { "fail" }.to_string());
        }
        kv("passed", self.passed().to_string());
        out
    }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Runs every diagnostic on the bumps train `bumps` plus the chirp `amfm`.
pub fn run_diagnostics(seed: u64, bumps: &BumpsSpec, amfm: &AmFmSpec) -> Result<DiagnosticReport> {
    let config = preset_stft_config();
    let plan = StftPlan::new(&config)?;
    let bounds = theorem1_error_bounds(bumps, &config);

    let x = synth_bumps(bumps);
    let y = synth_amfm(amfm);
    let z = Signal::new(x.samples().iter().zip(y.samples()).map(|(a, b)| a + b).collect(), x.sample_rate())?;
    let (t_x, t_y, t_z) = (plan.stft(&x)?, plan.stft(&y)?, plan.stft(&z)?);
    let s_x = spectrogram(&t_x);
    let s_y = spectrogram(&t_y);
    let s_z = spectrogram(&t_z);
    let cross = cross_term_report(&t_x, &t_y)?;

    let mut gap_abs = 0.0_f64;
    for (((z, x), y), c) in s_z.values().iter().zip(s_x.values()).zip(s_y.values()).zip(&cross.grid) {
        gap_abs = gap_abs.max((z - x - y - c).abs());
    }
    let decomposition_error = gap_abs / s_z.max();

    // A failed support condition is reported as a failed check, not an error.
    let gap = if bounds.support_ok { additivity_gap(bumps, &config)? } else { f64::INFINITY };
    let sx_max = s_x.max();

    let checks = vec![
        Check::flag("support_condition", bounds.support_ok),
        Check::at_most(
            "window_derivative",
            relative(bounds.window_derivative_max, PI / (2.0 * bounds.delta_g)),
            DERIVATIVE_REL_TOL,
        ),
        Check::at_most(
            "bound_ratio",
            relative(bounds.eps2_bound / bounds.eps1_bound, 4.0 / 3.0 * PI * bounds.delta_phi),
            RATIO_REL_TOL,
        ),
        Check::at_most("additivity_gap", gap / sx_max, EXACT_REL_TOL),
        Check::at_most("decomposition_identity", decomposition_error, EXACT_REL_TOL),
        Check::at_most("cross_rel_fro", cross.rel_fro, CROSS_REL_FRO_MAX),
    ];
    Ok(DiagnosticReport {
        seed,
        config,
        bounds,
        additivity_gap: gap,
        sx_max,
        decomposition_error,
        cross,
        checks,
    })
}
