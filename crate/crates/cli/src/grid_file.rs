//! `SSGR` binary grid files and CSV export.
//!
//! Layout, little-endian throughout:
//!
//! | field       | type        |
//! |-------------|-------------|
//! | magic       | `b"SSGR"`   |
//! | version     | u32 = 1     |
//! | rows        | u32         |
//! | cols        | u32         |
//! | sample_rate | f64         |
//! | hop         | u32         |
//! | window_len  | u32         |
//! | fft_len     | u32         |
//! | payload     | rows·cols f64, column-major (one frame after another) |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use specsep::{SpectrogramGrid, StftConfig};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"SSGR";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 * 3 + 8 + 4 * 3;
pub const CSV_HEADER: &str = "nu_hz,tau_s,value";

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| CliError::Grid(format!("{what} {v} does not fit in u32")))
}

pub fn encode_grid(grid: &SpectrogramGrid) -> Result<Vec<u8>> {
    let (rows, cols) = grid.dim();
    let cfg = grid.config();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * rows * cols);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(rows, "rows")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cols, "cols")?.to_le_bytes());
    out.extend_from_slice(&cfg.sample_rate.to_le_bytes());
    out.extend_from_slice(&to_u32(cfg.hop, "hop")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cfg.window_len, "window_len")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cfg.fft_len, "fft_len")?.to_le_bytes());
    for column in grid.values().columns() {
        for v in column {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| CliError::Grid(format!("truncated file while reading {what}")))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice has length N"))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.take::<8>(what).map(f64::from_le_bytes)
    }
}

pub fn decode_grid(bytes: &[u8]) -> Result<SpectrogramGrid> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take::<4>("magic")?;
    if &magic != MAGIC {
        return Err(CliError::Grid(format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(CliError::Grid(format!("unsupported version {version}")));
    }
    let rows = cur.u32("rows")? as usize;
    let cols = cur.u32("cols")? as usize;
    let sample_rate = cur.f64("sample_rate")?;
    let hop = cur.u32("hop")? as usize;
    let window_len = cur.u32("window_len")? as usize;
    let fft_len = cur.u32("fft_len")? as usize;
    let config = StftConfig::new(window_len, hop, fft_len, sample_rate)?;
    if rows != config.bins() {
        return Err(CliError::Grid(format!("{rows} rows but fft_len {fft_len} implies {}", config.bins())));
    }
    let expected = HEADER_LEN + 8 * rows * cols;
    if bytes.len() != expected {
        return Err(CliError::Grid(format!("payload is {} bytes, expected {}", bytes.len() - HEADER_LEN.min(bytes.len()), expected - HEADER_LEN)));
    }
    let mut values = Array2::zeros((rows, cols));
    for c in 0..cols {
        for r in 0..rows {
            values[(r, c)] = cur.f64("payload")?;
        }
    }
    Ok(SpectrogramGrid::new(values, config)?)
}

pub fn write_grid(grid: &SpectrogramGrid, path: &Path) -> Result<()> {
    let bytes = encode_grid(grid)?;
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<SpectrogramGrid> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    decode_grid(&bytes)
}

/// One line per cell, frame by frame, with physical frequency and time labels.
pub fn write_values_csv(values: &Array2<f64>, config: &StftConfig, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for (c, column) in values.columns().into_iter().enumerate() {
        let tau = config.frame_time(c);
        for (r, v) in column.iter().enumerate() {
            writeln!(out, "{},{},{}", config.bin_frequency(r), tau, v)?;
        }
    }
    Ok(())
}

pub fn write_grid_csv(grid: &SpectrogramGrid, path: &Path) -> Result<()> {
    write_array_csv(grid.values(), grid.config(), path)
}

pub fn write_array_csv(values: &Array2<f64>, config: &StftConfig, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_values_csv(values, config, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_config() -> StftConfig {
        StftConfig::new(2, 1, 2, 1000.0).unwrap()
    }

    fn grid(values: Array2<f64>, config: StftConfig) -> SpectrogramGrid {
        SpectrogramGrid::new(values, config).unwrap()
    }

    #[test]
    fn csv_of_two_by_two() {
        let cfg = small_config();
        assert_eq!(cfg.bins(), 2);
        let values = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        write_values_csv(&values, &cfg, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "0,0,1");
        assert_eq!(lines[2], "500,0,3");
        assert_eq!(lines[3], "0,0.001,2");
        assert_eq!(lines[4], "500,0.001,4");
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let cfg = StftConfig::new(8, 2, 8, 100.0).unwrap();
        let g = grid(Array2::from_elem((5, 6), 1.5), cfg);
        let mut bytes = encode_grid(&g).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_grid(&bytes), Err(CliError::Grid(m)) if m.contains("magic")));
        let mut bytes = encode_grid(&g).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode_grid(&bytes), Err(CliError::Grid(m)) if m.contains("version")));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let cfg = StftConfig::new(8, 2, 8, 100.0).unwrap();
        let bytes = encode_grid(&grid(Array2::from_elem((5, 6), 1.5), cfg)).unwrap();
        assert!(decode_grid(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_grid(&bytes[..10]).is_err());
    }

    #[test]
    fn payload_is_column_major() {
        let cfg = StftConfig::new(8, 2, 8, 100.0).unwrap();
        let values = Array2::from_shape_fn((5, 6), |(r, c)| (10 * c + r) as f64);
        let bytes = encode_grid(&grid(values, cfg)).unwrap();
        let second = f64::from_le_bytes(bytes[HEADER_LEN + 8..HEADER_LEN + 16].try_into().unwrap());
        assert_eq!(second, 1.0);
        let sixth = f64::from_le_bytes(bytes[HEADER_LEN + 40..HEADER_LEN + 48].try_into().unwrap());
        assert_eq!(sixth, 10.0);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.grid");
        let cfg = StftConfig::new(516, 129, 1024, 16384.0).unwrap();
        let g = grid(Array2::from_shape_fn((513, 7), |(r, c)| (r * c) as f64 * 0.25), cfg);
        write_grid(&g, &path).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(back.values(), g.values());
        assert_eq!(back.config(), g.config());
    }

    proptest! {
        #[test]
        fn bytes_round_trip_exactly(values in proptest::collection::vec(0.0f64..1e12, 5 * 6)) {
            let cfg = StftConfig::new(8, 2, 8, 44100.0).unwrap();
            let g = grid(Array2::from_shape_vec((5, 6), values).unwrap(), cfg);
            let bytes = encode_grid(&g).unwrap();
            let back = decode_grid(&bytes).unwrap();
            prop_assert_eq!(back.values(), g.values());
            prop_assert_eq!(encode_grid(&back).unwrap(), bytes);
        }
    }
}
