//! Mono WAV ingestion (PCM 16-bit, IEEE float 32-bit) and float-32 export.

use std::io::ErrorKind;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use specsep::Signal;

use crate::error::{CliError, Result};

/// Walks the RIFF chunk list to name what a short file is missing.
fn missing_chunk(bytes: &[u8]) -> Option<String> {
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return None;
    }
    let (mut seen_fmt, mut pos) = (false, 12);
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().ok()?) as usize;
        let end = pos + 8 + size;
        match id {
            b"fmt " if end > bytes.len() => return Some("fmt chunk is incomplete".into()),
            b"fmt " => seen_fmt = true,
            b"data" if end > bytes.len() => {
                return Some(format!("data chunk is incomplete ({} of {size} bytes)", bytes.len() - pos - 8))
            }
            _ => {}
        }
        pos = end + (size & 1);
    }
    Some(if seen_fmt { "file is truncated: missing data chunk" } else { "file is truncated: missing fmt chunk" }.into())
}

fn describe(path: &Path, err: hound::Error) -> CliError {
    let msg = match err {
        hound::Error::IoError(e) if e.kind() == ErrorKind::NotFound => return CliError::io(path, e),
        hound::Error::IoError(e) => match std::fs::read(path).ok().as_deref().and_then(missing_chunk) {
            Some(m) => m,
            None => e.to_string(),
        },
        hound::Error::FormatError(m) => format!("malformed header: {m}"),
        hound::Error::Unsupported => "unsupported WAV feature".to_string(),
        other => other.to_string(),
    };
    CliError::Wav(format!("{}: {msg}", path.display()))
}

/// Loads a WAV file, downmixing by channel average. PCM16 is scaled by 1/32768.
pub fn load_wav(path: &Path) -> Result<Signal> {
    let reader = WavReader::open(path).map_err(|e| describe(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(CliError::Wav(format!("{}: zero channels", path.display())));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (format, bits) => {
            return Err(CliError::Wav(format!(
                "{}: unsupported codec {format:?} {bits}-bit (expected PCM 16-bit or float 32-bit)",
                path.display()
            )))
        }
    }
    .map_err(|e| describe(path, e))?;
    if !interleaved.len().is_multiple_of(channels) {
        return Err(CliError::Wav(format!("{}: data chunk ends mid-frame", path.display())));
    }
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    Ok(Signal::new(samples, spec.sample_rate as f64)?)
}

/// Writes a mono float-32 WAV. Samples are rounded to f32.
pub fn save_wav(signal: &Signal, path: &Path) -> Result<()> {
    if signal.is_empty() {
        return Err(CliError::Wav("refusing to write an empty signal".into()));
    }
    let rate = signal.sample_rate();
    if rate.fract() != 0.0 || rate > u32::MAX as f64 {
        return Err(CliError::Wav(format!("sample rate {rate} is not a WAV integer rate")));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: rate as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let wrap = |e| describe(path, e);
    let mut writer = WavWriter::create(path, spec).map_err(wrap)?;
    for &s in signal.samples() {
        writer.write_sample(s as f32).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}
