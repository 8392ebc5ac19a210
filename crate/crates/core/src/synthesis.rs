//! Bumps, AM-FM and mixture signal generators.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tf_transform::{Signal, StftConfig};

/// Name of the generator behind every seeded draw in this module.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng(seed_from_u64)";

pub const PRESET_SAMPLE_RATE: f64 = 16384.0;
pub const PRESET_DURATION: f64 = 1.0;
pub const PRESET_BUMP_COUNT: usize = 20;
pub const PRESET_MIN_GAP: f64 = 0.035;
pub const PRESET_BUMP_HALF_WIDTH_SAMPLES: usize = 9;
pub const PRESET_F0: f64 = 1500.0;
pub const PRESET_WINDOW_MS: f64 = 31.5;
pub const PRESET_HOP_DIV: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BumpShape {
    /// `0.5 (1 + cos(πt/Δφ))` on `[-Δφ, Δφ]`.
    #[default]
    Hann,
}

impl BumpShape {
    pub fn eval(self, t: f64, half_width: f64) -> f64 {
        match self {
            BumpShape::Hann => {
                if t.abs() <= half_width {
                    0.5 * (1.0 + (PI * t / half_width).cos())
                } else {
                    0.0
                }
            }
        }
    }

    /// `‖φ‖∞`.
    pub fn peak(self) -> f64 {
        match self {
            BumpShape::Hann => 1.0,
        }
    }
}

/// A train of identical pulses `Σₖ φ(t − t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpsSpec {
    impulse_times: Vec<f64>,
    bump_half_width: f64,
    bump_shape: BumpShape,
    sample_rate: f64,
    duration: f64,
    min_gap: Option<f64>,
}

impl BumpsSpec {
    /// Impulse times are sorted; the minimum gap between them is recorded.
    pub fn new(
        mut impulse_times: Vec<f64>,
        bump_half_width: f64,
        sample_rate: f64,
        duration: f64,
    ) -> Result<Self> {
        if !(bump_half_width > 0.0 && bump_half_width.is_finite()) {
            return Err(Error::Config(format!("bump half-width {bump_half_width} must be positive")));
        }
        check_rate_and_duration(sample_rate, duration)?;
        if let Some(t) = impulse_times.iter().find(|t| !(0.0..=duration).contains(*t)) {
            return Err(Error::Config(format!("impulse time {t} outside [0, {duration}]")));
        }
        impulse_times.sort_by(f64::total_cmp);
        let min_gap = impulse_times
            .windows(2)
            .map(|w| w[1] - w[0])
            .min_by(f64::total_cmp);
        if min_gap == Some(0.0) {
            return Err(Error::Config("impulse times must be distinct".into()));
        }
        Ok(BumpsSpec {
            impulse_times,
            bump_half_width,
            bump_shape: BumpShape::Hann,
            sample_rate,
            duration,
            min_gap,
        })
    }

    pub fn impulse_times(&self) -> &[f64] {
        &self.impulse_times
    }

    /// Δφ in seconds.
    pub fn bump_half_width(&self) -> f64 {
        self.bump_half_width
    }

    pub fn bump_shape(&self) -> BumpShape {
        self.bump_shape
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// θφ, the smallest gap between consecutive impulses. `None` for fewer
    /// than two impulses.
    pub fn min_gap(&self) -> Option<f64> {
        self.min_gap
    }

    pub fn len_samples(&self) -> usize {
        sample_count(self.sample_rate, self.duration)
    }

    /// Same bump parameters with a different set of impulses.
    pub fn with_impulse_times(&self, impulse_times: Vec<f64>) -> Result<Self> {
        BumpsSpec::new(impulse_times, self.bump_half_width, self.sample_rate, self.duration)
    }
}

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One AM-FM mode: amplitude `A(t)` and instantaneous frequency `φ′(t)` in Hz.
#[derive(Clone)]
pub struct AmFmMode {
    pub amplitude: TimeFn,
    pub inst_freq: TimeFn,
}

impl AmFmMode {
    pub fn new(
        amplitude: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inst_freq: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        AmFmMode { amplitude: Arc::new(amplitude), inst_freq: Arc::new(inst_freq) }
    }
}

/// A multicomponent AM-FM signal `Σ_ℓ A_ℓ(t) sin(2π φ_ℓ(t))`.
#[derive(Clone)]
pub struct AmFmSpec {
    modes: Vec<AmFmMode>,
    sample_rate: f64,
    duration: f64,
}

impl fmt::Debug for AmFmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AmFmSpec")
            .field("modes", &self.modes.len())
            .field("sample_rate", &self.sample_rate)
            .field("duration", &self.duration)
            .finish()
    }
}

impl AmFmSpec {
    /// Checks positivity of amplitudes and frequencies and strict frequency
    /// ordering of consecutive modes on the sample grid.
    pub fn new(modes: Vec<AmFmMode>, sample_rate: f64, duration: f64) -> Result<Self> {
        check_rate_and_duration(sample_rate, duration)?;
        let n = sample_count(sample_rate, duration);
        for i in 0..n {
            let t = i as f64 / sample_rate;
            let mut prev_freq = None;
            for (l, mode) in modes.iter().enumerate() {
                let a = (mode.amplitude)(t);
                let f = (mode.inst_freq)(t);
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::Config(format!("mode {l}: amplitude {a} at t={t} is not positive")));
                }
                if !(f > 0.0 && f.is_finite()) {
                    return Err(Error::Config(format!("mode {l}: frequency {f} at t={t} is not positive")));
                }
                if prev_freq.is_some_and(|p| f <= p) {
                    return Err(Error::Config(format!(
                        "mode {l}: frequency {f} at t={t} does not exceed the previous mode"
                    )));
                }
                prev_freq = Some(f);
            }
        }
        Ok(AmFmSpec { modes, sample_rate, duration })
    }

    pub fn modes(&self) -> &[AmFmMode] {
        &self.modes
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn len_samples(&self) -> usize {
        sample_count(self.sample_rate, self.duration)
    }
}

fn check_rate_and_duration(sample_rate: f64, duration: f64) -> Result<()> {
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::Config(format!("sample rate {sample_rate} must be positive")));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::Config(format!("duration {duration} must be positive")));
    }
    Ok(())
}

fn sample_count(sample_rate: f64, duration: f64) -> usize {
    (duration * sample_rate).round() as usize
}

/// Draws `count` sorted impulse times in `[min_gap/2, duration − min_gap/2]`
/// whose consecutive gaps are all at least `min_gap`.
///
/// The draw is uniform over the feasible set: sorted uniform offsets in the
/// slack interval are spread apart by `i·min_gap`.
pub fn sample_impulse_times(count: usize, duration: f64, min_gap: f64, seed: u64) -> Result<Vec<f64>> {
    if !(duration > 0.0 && duration.is_finite()) || !(min_gap >= 0.0 && min_gap.is_finite()) {
        return Err(Error::Generation(format!(
            "duration {duration} and min gap {min_gap} must be finite and nonnegative"
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    if !(count as f64 * min_gap < duration) {
        return Err(Error::Generation(format!(
            "{count} impulses with gap {min_gap} s do not fit in {duration} s"
        )));
    }
    let margin = min_gap / 2.0;
    let slack = (duration - 2.0 * margin) - (count - 1) as f64 * min_gap;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offsets: Vec<f64> = (0..count).map(|_| rng.random::<f64>() * slack).collect();
    offsets.sort_by(f64::total_cmp);
    Ok(offsets
        .into_iter()
        .enumerate()
        .map(|(i, u)| margin + u + i as f64 * min_gap)
        .collect())
}

/// Evaluates the bumps signal on the sample grid.
pub fn synth_bumps(spec: &BumpsSpec) -> Signal {
    let n = spec.len_samples();
    let sr = spec.sample_rate;
    let hw = spec.bump_half_width;
    let mut samples = vec![0.0; n];
    for &tk in &spec.impulse_times {
        // Only touch samples inside the bump support.
        let lo = ((tk - hw) * sr).floor().max(0.0) as usize;
        let hi = (((tk + hw) * sr).ceil() as usize + 1).min(n);
        for (i, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
            *s += spec.bump_shape.eval(i as f64 / sr - tk, hw);
        }
    }
    Signal::new(samples, sr).expect("bump values are finite")
}

/// Cumulative trapezoidal integral of `freqs` (Hz) sampled at `sample_rate`,
/// starting from zero. Result is in cycles.
pub fn integrate_phase(freqs: &[f64], sample_rate: f64) -> Vec<f64> {
    let dt = 1.0 / sample_rate;
    let mut phase = Vec::with_capacity(freqs.len());
    let mut acc = 0.0;
    for (i, f) in freqs.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * (freqs[i - 1] + f) * dt;
        }
        phase.push(acc);
    }
    phase
}

pub fn synth_amfm(spec: &AmFmSpec) -> Signal {
    let n = spec.len_samples();
    let sr = spec.sample_rate;
    let times: Vec<f64> = (0..n).map(|i| i as f64 / sr).collect();
    let mut samples = vec![0.0; n];
    for mode in &spec.modes {
        let freqs: Vec<f64> = times.iter().map(|&t| (mode.inst_freq)(t)).collect();
        let phase = integrate_phase(&freqs, sr);
        for ((s, &t), p) in samples.iter_mut().zip(&times).zip(&phase) {
            *s += (mode.amplitude)(t) * (2.0 * PI * p).sin();
        }
    }
    Signal::new(samples, sr).expect("mode amplitudes are finite")
}

/// Instantaneous frequency of the preset chirp, `f0 (1 + (t/2) sin(2πt))`.
pub fn preset_inst_freq(t: f64) -> f64 {
    PRESET_F0 * (1.0 + 0.5 * t * (2.0 * PI * t).sin())
}

/// STFT configuration used with the preset: 31.5 ms Hann window, hop = 1/4.
pub fn preset_stft_config() -> StftConfig {
    StftConfig::from_window_ms(PRESET_SAMPLE_RATE, PRESET_WINDOW_MS, PRESET_HOP_DIV)
        .expect("preset window is valid")
}

/// Ground truth and mixture of the synthetic two-component experiment.
#[derive(Debug, Clone)]
pub struct PresetMixture {
    pub x: Signal,
    pub y: Signal,
    pub z: Signal,
    pub bumps: BumpsSpec,
    pub amfm: AmFmSpec,
    pub seed: u64,
}

/// One second at 16384 Hz: 20 Hann bumps of half-width 9 samples spaced at
/// least 35 ms apart, plus a unit-amplitude chirp around 1.5 kHz.
pub fn make_synthetic_preset(seed: u64) -> Result<PresetMixture> {
    let sr = PRESET_SAMPLE_RATE;
    // Times are snapped to the sample grid so each bump peaks on a sample;
    // one extra sample of gap keeps the snapped gaps above the minimum.
    let times = sample_impulse_times(PRESET_BUMP_COUNT, PRESET_DURATION, PRESET_MIN_GAP + 1.0 / sr, seed)?
        .into_iter()
        .map(|t| (t * sr).round() / sr)
        .collect();
    let bumps = BumpsSpec::new(
        times,
        PRESET_BUMP_HALF_WIDTH_SAMPLES as f64 / sr,
        sr,
        PRESET_DURATION,
    )?;
    let amfm = AmFmSpec::new(vec![AmFmMode::new(|_| 1.0, preset_inst_freq)], sr, PRESET_DURATION)?;
    let x = synth_bumps(&bumps);
    let y = synth_amfm(&amfm);
    let z = Signal::new(
        x.samples().iter().zip(y.samples()).map(|(a, b)| a + b).collect(),
        sr,
    )?;
    Ok(PresetMixture { x, y, z, bumps, amfm, seed })
}
