//! JSON sidecar written next to `synth` outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use specsep::synthesis::{
    PresetMixture, PRESET_DURATION, PRESET_F0, PRESET_HOP_DIV, PRESET_MIN_GAP, PRESET_WINDOW_MS, RNG_ALGORITHM,
};
use specsep::BumpsSpec;

use crate::error::{CliError, Result};

pub const METADATA_FILE: &str = "preset.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetMetadata {
    pub seed: u64,
    pub rng: String,
    pub sample_rate: f64,
    pub duration: f64,
    pub impulse_times: Vec<f64>,
    /// Bump half-width Δφ in seconds.
    pub delta_phi: f64,
    /// Smallest realized gap between impulses, θφ.
    pub theta_phi: f64,
    pub min_gap_requested: f64,
    pub chirp_f0: f64,
    pub window_ms: f64,
    pub hop_div: usize,
}

impl PresetMetadata {
    pub fn from_preset(preset: &PresetMixture) -> Self {
        let bumps = &preset.bumps;
        Self {
            seed: preset.seed,
            rng: RNG_ALGORITHM.to_string(),
            sample_rate: bumps.sample_rate(),
            duration: bumps.duration(),
            impulse_times: bumps.impulse_times().to_vec(),
            delta_phi: bumps.bump_half_width(),
            theta_phi: bumps.min_gap().unwrap_or(f64::INFINITY),
            min_gap_requested: PRESET_MIN_GAP,
            chirp_f0: PRESET_F0,
            window_ms: PRESET_WINDOW_MS,
            hop_div: PRESET_HOP_DIV,
        }
    }

    pub fn bumps(&self) -> Result<BumpsSpec> {
        Ok(BumpsSpec::new(self.impulse_times.clone(), self.delta_phi, self.sample_rate, self.duration)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let meta: Self = serde_json::from_str(&text)?;
        if meta.duration != PRESET_DURATION {
            return Err(CliError::Usage(format!("metadata duration {} differs from the preset", meta.duration)));
        }
        Ok(meta)
    }
}
