//! Discrete short-time Fourier transform with a least-squares inverse.
//!
//! Frames are taken from the signal after zero-padding it by `window_len`
//! samples on each side, so every input sample is covered by the same number
//! of full frames and the overlap-added squared-window envelope is constant
//! over the original signal range. The inverse divides by that envelope,
//! which makes `stft ∘ istft` the orthogonal projector onto consistent grids.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};

/// Smallest overlap-added squared-window value accepted by the inverse.
pub const ENVELOPE_FLOOR: f64 = 1e-12;

/// Relative spread tolerated when checking the overlap-add condition.
const COLA_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    /// `0.5 (1 - cos(2πn/N))`, n = 0..N.
    #[default]
    HannPeriodic,
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowKind::HannPeriodic => f.write_str("hann_periodic"),
        }
    }
}

/// Parameters defining an STFT/ISTFT pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub sample_rate: f64,
    pub window_kind: WindowKind,
}

impl StftConfig {
    /// Builds and validates a Hann configuration.
    pub fn new(window_len: usize, hop: usize, fft_len: usize, sample_rate: f64) -> Result<Self> {
        let config = StftConfig {
            window_len,
            hop,
            fft_len,
            sample_rate,
            window_kind: WindowKind::HannPeriodic,
        };
        config.validate()?;
        Ok(config)
    }

    /// Configuration from a window duration in milliseconds.
    ///
    /// The window length is rounded to the nearest multiple of `hop_div`
    /// (and of 2) so that the hop divides it exactly. The FFT length is the
    /// next power of two.
    pub fn from_window_ms(sample_rate: f64, window_ms: f64, hop_div: usize) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Config(format!("sample rate {sample_rate} must be positive")));
        }
        if !(window_ms > 0.0 && window_ms.is_finite()) {
            return Err(Error::Config(format!("window duration {window_ms} ms must be positive")));
        }
        if hop_div < 2 {
            return Err(Error::Config(format!("hop divisor {hop_div} must be at least 2")));
        }
        let quantum = if hop_div.is_multiple_of(2) { hop_div } else { 2 * hop_div };
        let exact = window_ms * 1e-3 * sample_rate;
        let window_len = ((exact / quantum as f64).round() as usize).max(1) * quantum;
        let hop = window_len / hop_div;
        StftConfig::new(window_len, hop, window_len.next_power_of_two(), sample_rate)
    }

    pub fn validate(&self) -> Result<()> {
        let StftConfig { window_len, hop, fft_len, sample_rate, .. } = *self;
        if window_len == 0 || window_len % 2 != 0 {
            return Err(Error::Config(format!("window_len {window_len} must be even and positive")));
        }
        if hop == 0 || window_len % hop != 0 {
            return Err(Error::Config(format!("hop {hop} must divide window_len {window_len}")));
        }
        if hop > window_len / 2 {
            return Err(Error::Config(format!("hop {hop} exceeds window_len/2")));
        }
        if fft_len < window_len || !fft_len.is_power_of_two() {
            return Err(Error::Config(format!(
                "fft_len {fft_len} must be a power of two >= window_len {window_len}"
            )));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Config(format!("sample rate {sample_rate} must be positive")));
        }
        let envelope = cola_envelope(&hann_periodic(window_len), hop);
        let max = envelope.iter().cloned().fold(f64::MIN, f64::max);
        let min = envelope.iter().cloned().fold(f64::MAX, f64::min);
        if max <= 0.0 || (max - min) > COLA_TOLERANCE * max {
            return Err(Error::Config(format!(
                "{} window of length {window_len} is not overlap-add constant at hop {hop}",
                self.window_kind
            )));
        }
        Ok(())
    }

    /// One-sided frequency bin count.
    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        (len + self.window_len).div_ceil(self.hop)
    }

    /// Largest signal length that produces `frames` columns.
    pub fn max_signal_len(&self, frames: usize) -> usize {
        (frames * self.hop).saturating_sub(self.window_len)
    }

    /// Frequency in Hz of a row.
    pub fn bin_frequency(&self, row: usize) -> f64 {
        row as f64 * self.sample_rate / self.fft_len as f64
    }

    /// Time label in seconds of a column (`column * hop / sample_rate`).
    pub fn frame_time(&self, column: usize) -> f64 {
        (column * self.hop) as f64 / self.sample_rate
    }

    /// Time in seconds, relative to the first input sample, of the window
    /// center of a column.
    pub fn frame_center_time(&self, column: usize) -> f64 {
        ((column * self.hop) as f64 - (self.window_len / 2) as f64) / self.sample_rate
    }

    /// Half the window support in seconds.
    pub fn window_half_width(&self) -> f64 {
        self.window_len as f64 / (2.0 * self.sample_rate)
    }
}

/// A uniformly sampled real waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Signal(format!("sample rate {sample_rate} must be positive")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Signal(format!("non-finite sample at index {i}")));
        }
        Ok(Signal { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Result<Self> {
        Signal::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Time in seconds of sample `n`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 / self.sample_rate
    }
}

/// Complex STFT coefficients, rows = one-sided frequency bins, columns = frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTFGrid {
    values: Array2<Complex64>,
    config: StftConfig,
    signal_len: usize,
}

impl ComplexTFGrid {
    /// Wraps a coefficient matrix. The synthesis length is the longest signal
    /// compatible with the column count.
    pub fn new(values: Array2<Complex64>, config: StftConfig) -> Result<Self> {
        let signal_len = config.max_signal_len(values.ncols());
        Self::with_signal_len(values, config, signal_len)
    }

    pub fn with_signal_len(
        values: Array2<Complex64>,
        config: StftConfig,
        signal_len: usize,
    ) -> Result<Self> {
        config.validate()?;
        let expected = (config.bins(), config.frame_count(signal_len));
        if values.dim() != expected {
            return Err(Error::Shape { expected, found: values.dim() });
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Domain("non-finite STFT coefficient".into()));
        }
        Ok(ComplexTFGrid { values, config, signal_len })
    }

    pub fn zeros(config: StftConfig, signal_len: usize) -> Self {
        let values = Array2::zeros((config.bins(), config.frame_count(signal_len)));
        ComplexTFGrid { values, config, signal_len }
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<Complex64> {
        self.values
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    /// Length of the signal this grid synthesizes to.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub(crate) fn from_parts(values: Array2<Complex64>, config: StftConfig, signal_len: usize) -> Self {
        debug_assert_eq!(values.dim(), (config.bins(), config.frame_count(signal_len)));
        ComplexTFGrid { values, config, signal_len }
    }
}

/// Nonnegative spectrogram values on the same layout as [`ComplexTFGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramGrid {
    values: Array2<f64>,
    config: StftConfig,
    signal_len: usize,
}

impl SpectrogramGrid {
    pub fn new(values: Array2<f64>, config: StftConfig) -> Result<Self> {
        let signal_len = config.max_signal_len(values.ncols());
        Self::with_signal_len(values, config, signal_len)
    }

    pub fn with_signal_len(values: Array2<f64>, config: StftConfig, signal_len: usize) -> Result<Self> {
        config.validate()?;
        let expected = (config.bins(), config.frame_count(signal_len));
        if values.dim() != expected {
            return Err(Error::Shape { expected, found: values.dim() });
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("spectrogram entry {v} is not a finite nonnegative value")));
        }
        Ok(SpectrogramGrid { values, config, signal_len })
    }

    pub fn zeros(config: StftConfig, signal_len: usize) -> Self {
        let values = Array2::zeros((config.bins(), config.frame_count(signal_len)));
        SpectrogramGrid { values, config, signal_len }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Same grid with every entry multiplied by `factor` (must be ≥ 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::with_signal_len(self.values.mapv(|v| v * factor), self.config, self.signal_len)
    }

    pub(crate) fn from_parts(values: Array2<f64>, config: StftConfig, signal_len: usize) -> Self {
        debug_assert!(values.iter().all(|v| *v >= 0.0));
        SpectrogramGrid { values, config, signal_len }
    }
}

fn hann_periodic(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / len as f64).cos()))
        .collect()
}

/// Σₖ w[n + k·hop]² for n in one hop period.
fn cola_envelope(window: &[f64], hop: usize) -> Vec<f64> {
    (0..hop)
        .map(|n| window.iter().skip(n).step_by(hop).map(|w| w * w).sum())
        .collect()
}

/// Analysis window for `config`.
pub fn make_window(config: &StftConfig) -> Result<Vec<f64>> {
    config.validate()?;
    Ok(match config.window_kind {
        WindowKind::HannPeriodic => hann_periodic(config.window_len),
    })
}

/// Precomputed window and FFT plans for one configuration.
pub struct StftPlan {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StftPlan").field("config", &self.config).finish_non_exhaustive()
    }
}

impl StftPlan {
    pub fn new(config: &StftConfig) -> Result<Self> {
        let window = make_window(config)?;
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(StftPlan {
            config: *config,
            window,
            forward: planner.plan_fft_forward(config.fft_len),
            inverse: planner.plan_fft_inverse(config.fft_len),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn stft(&self, signal: &Signal) -> Result<ComplexTFGrid> {
        if signal.is_empty() {
            return Err(Error::Signal("cannot transform an empty signal".into()));
        }
        if signal.sample_rate() != self.config.sample_rate {
            return Err(Error::Config(format!(
                "signal sample rate {} does not match configuration {}",
                signal.sample_rate(),
                self.config.sample_rate
            )));
        }
        Ok(self.analyze(signal.samples()))
    }

    fn analyze(&self, samples: &[f64]) -> ComplexTFGrid {
        let StftConfig { window_len, hop, fft_len, .. } = self.config;
        let len = samples.len();
        let frames = self.config.frame_count(len);
        let bins = self.config.bins();
        let padded_len = (len + 2 * window_len).max((frames - 1) * hop + window_len);
        let mut padded = vec![0.0; padded_len];
        padded[window_len..window_len + len].copy_from_slice(samples);

        let mut values = Array2::<Complex64>::zeros((bins, frames));
        let mut input = self.forward.make_input_vec();
        let mut output = self.forward.make_output_vec();
        let mut scratch = self.forward.make_scratch_vec();
        for t in 0..frames {
            let frame = &padded[t * hop..t * hop + window_len];
            for ((dst, x), w) in input.iter_mut().zip(frame).zip(&self.window) {
                *dst = x * w;
            }
            input[window_len..fft_len].fill(0.0);
            self.forward
                .process_with_scratch(&mut input, &mut output, &mut scratch)
                .expect("buffer sizes come from the plan");
            values.column_mut(t).iter_mut().zip(&output).for_each(|(d, s)| *d = *s);
        }
        ComplexTFGrid::from_parts(values, self.config, len)
    }

    pub fn istft(&self, grid: &ComplexTFGrid) -> Result<Signal> {
        self.check_grid(grid)?;
        let samples = self.synthesize(grid.values(), grid.signal_len())?;
        Signal::new(samples, self.config.sample_rate)
    }

    fn synthesize(&self, values: &Array2<Complex64>, len: usize) -> Result<Vec<f64>> {
        let StftConfig { window_len, hop, fft_len, .. } = self.config;
        let frames = values.ncols();
        let padded_len = (len + 2 * window_len).max((frames - 1) * hop + window_len);
        let mut acc = vec![0.0; padded_len];
        let mut envelope = vec![0.0; padded_len];
        let mut spectrum = self.inverse.make_input_vec();
        let mut output = self.inverse.make_output_vec();
        let mut scratch = self.inverse.make_scratch_vec();
        let norm = 1.0 / fft_len as f64;
        let last = spectrum.len() - 1;
        for t in 0..frames {
            spectrum.iter_mut().zip(values.column(t)).for_each(|(d, s)| *d = *s);
            // DC and Nyquist of a real frame carry no imaginary part.
            spectrum[0].im = 0.0;
            spectrum[last].im = 0.0;
            self.inverse
                .process_with_scratch(&mut spectrum, &mut output, &mut scratch)
                .expect("buffer sizes come from the plan");
            let start = t * hop;
            for (n, w) in self.window.iter().enumerate() {
                acc[start + n] += output[n] * norm * w;
                envelope[start + n] += w * w;
            }
        }
        let mut samples = Vec::with_capacity(len);
        for i in 0..len {
            let env = envelope[window_len + i];
            if env < ENVELOPE_FLOOR {
                return Err(Error::Cola { index: i, value: env });
            }
            samples.push(acc[window_len + i] / env);
        }
        Ok(samples)
    }

    /// Π = stft ∘ istft.
    pub fn project(&self, grid: &ComplexTFGrid) -> Result<ComplexTFGrid> {
        self.check_grid(grid)?;
        let samples = self.synthesize(grid.values(), grid.signal_len())?;
        Ok(self.analyze(&samples))
    }

    fn check_grid(&self, grid: &ComplexTFGrid) -> Result<()> {
        if grid.config() != &self.config {
            return Err(Error::Config("grid configuration differs from the plan".into()));
        }
        Ok(())
    }
}

pub fn stft(signal: &Signal, config: &StftConfig) -> Result<ComplexTFGrid> {
    StftPlan::new(config)?.stft(signal)
}

pub fn istft(grid: &ComplexTFGrid) -> Result<Signal> {
    StftPlan::new(grid.config())?.istft(grid)
}

/// Elementwise squared modulus.
pub fn spectrogram(grid: &ComplexTFGrid) -> SpectrogramGrid {
    SpectrogramGrid::from_parts(grid.values().mapv(|z| z.norm_sqr()), *grid.config(), grid.signal_len())
}

/// Projects a grid onto the set of STFTs of real signals.
pub fn project_consistent(grid: &ComplexTFGrid) -> Result<ComplexTFGrid> {
    StftPlan::new(grid.config())?.project(grid)
}

/// `√S · e^{i∠T_ref}`, with phase factor 1 where `T_ref` vanishes.
pub fn combine_magnitude_phase(
    magnitude_sq: &SpectrogramGrid,
    phase_ref: &ComplexTFGrid,
) -> Result<ComplexTFGrid> {
    if magnitude_sq.dim() != phase_ref.dim() {
        return Err(Error::Shape { expected: phase_ref.dim(), found: magnitude_sq.dim() });
    }
    if let Some(v) = magnitude_sq.values().iter().find(|v| **v < 0.0) {
        return Err(Error::Domain(format!("negative spectrogram entry {v}")));
    }
    let mut values = Array2::<Complex64>::zeros(phase_ref.dim());
    Zip::from(&mut values)
        .and(magnitude_sq.values())
        .and(phase_ref.values())
        .for_each(|out, &s, &z| {
            let r = z.norm();
            let phase = if r > 0.0 { z / r } else { Complex64::new(1.0, 0.0) };
            *out = phase * s.sqrt();
        });
    Ok(ComplexTFGrid::from_parts(values, *phase_ref.config(), phase_ref.signal_len()))
}
