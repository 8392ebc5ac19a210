//! Separation of the synthetic preset outside the default hyperparameters.

use specsep::separation::residual_norm;
use specsep::synthesis::preset_stft_config;
use specsep::*;

fn preset_grids(seed: u64) -> (ComplexTFGrid, SpectrogramGrid) {
    let p = make_synthetic_preset(seed).unwrap();
    let t_z = stft(&p.z, &preset_stft_config()).unwrap();
    let s_z = spectrogram(&t_z);
    (t_z, s_z)
}

#[test]
fn strong_smoothing_converges_quickly_and_beats_nmf() {
    let (t_z, s_z) = preset_grids(42);
    let params = SeparationParams { lambda: 10.0, max_iter: 500, ..Default::default() };
    let res = separate(&t_z, &params).unwrap();
    assert!(res.converged, "rho trace tail {:?}", res.rho_trace.last());
    assert!(res.iterations <= 500);
    let ours = residual_norm(&s_z, &res.s_x, &res.s_y).unwrap();
    let nmf = nmf_factorize(&s_z, 2, nmf::DEFAULT_ITERS, 42).unwrap();
    assert!(nmf.residual_norm >= 10.0 * ours, "ours {ours}, nmf {}", nmf.residual_norm);
}

#[test]
fn large_sparsity_weight_stops_immediately() {
    let (t_z, _) = preset_grids(7);
    let params = SeparationParams { mu: 1e-2, ..Default::default() };
    let res = separate(&t_z, &params).unwrap();
    assert!(res.converged);
    assert!(res.iterations <= 3, "{}", res.iterations);
}

#[test]
fn cost_trace_has_one_entry_per_iteration() {
    let (t_z, _) = preset_grids(1);
    let params = SeparationParams { max_iter: 25, ..Default::default() };
    let res = separate(&t_z, &params).unwrap();
    assert_eq!(res.cost_trace.len(), res.iterations);
    assert_eq!(res.rho_trace.len(), res.iterations);
    assert_eq!(res.clamped_trace.len(), res.iterations);
    assert!(res.rho_trace[0].is_infinite());
    assert!(res.cost_trace.iter().all(|j| j.is_finite() && *j >= 0.0));
}
