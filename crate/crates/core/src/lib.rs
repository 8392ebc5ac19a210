//! Consistent spectrogram separation of two-component nonstationary mixtures.
//!
//! A mixture `z = x + y` of a *bumps* signal (short, time-localized pulses)
//! and a multicomponent *AM-FM* signal (slowly varying tones) is separated in
//! the spectrogram domain by alternating a frequency-smoothness update for the
//! bumps spectrogram with a sparse update for the AM-FM spectrogram, each
//! followed by a projection onto consistent STFTs.

pub mod diagnostics;
pub mod error;
pub mod nmf;
pub mod separation;
pub mod synthesis;
pub mod tf_transform;

pub use diagnostics::{
    additivity_gap, check_support_condition, cross_term_report, theorem1_error_bounds,
    CrossTermReport, TheoremBounds,
};
pub use error::{Error, Result};
pub use nmf::{nmf_factorize, nmf_residual, NmfResult};
pub use separation::{
    objective, separate, update_smooth, update_sparse, FreqDiffOperator, SeparationParams,
    SeparationResult,
};
pub use synthesis::{make_synthetic_preset, AmFmSpec, BumpsSpec, PresetMixture};
pub use tf_transform::{
    combine_magnitude_phase, istft, make_window, project_consistent, spectrogram, stft,
    ComplexTFGrid, Signal, SpectrogramGrid, StftConfig, StftPlan, WindowKind,
};
