//! Grayscale decibel heatmaps of spectrograms.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::{GrayImage, Luma};
use ndarray::Array2;
use specsep::SpectrogramGrid;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Colormap {
    #[default]
    Grayscale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub db_floor: f64,
    /// Output width in pixels, the number of frames when `None`.
    pub width: Option<u32>,
    /// Output height in pixels, the number of bins when `None`.
    pub height: Option<u32>,
    pub colormap: Colormap,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { db_floor: -80.0, width: None, height: None, colormap: Colormap::Grayscale }
    }
}

impl RenderOptions {
    pub fn validate(&self) -> Result<()> {
        if self.db_floor >= 0.0 || !self.db_floor.is_finite() {
            return Err(CliError::Usage(format!("db floor must be negative, got {}", self.db_floor)));
        }
        if self.width == Some(0) || self.height == Some(0) {
            return Err(CliError::Usage("image dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Gray level of one cell relative to the grid maximum.
pub fn pixel_level(value: f64, max: f64, db_floor: f64) -> u8 {
    if max <= 0.0 || value <= 0.0 {
        return 0;
    }
    let db = 10.0 * (value / max).log10();
    let unit = ((db - db_floor) / -db_floor).clamp(0.0, 1.0);
    (unit * 255.0).round() as u8
}

/// Native-size image: one pixel per cell, lowest bin on the bottom row.
fn native_image(values: &Array2<f64>, db_floor: f64) -> GrayImage {
    let (rows, cols) = values.dim();
    let max = values.iter().cloned().fold(0.0, f64::max);
    GrayImage::from_fn(cols as u32, rows as u32, |x, y| {
        let bin = rows - 1 - y as usize;
        Luma([pixel_level(values[(bin, x as usize)], max, db_floor)])
    })
}

pub fn render_image(grid: &SpectrogramGrid, opts: &RenderOptions) -> Result<GrayImage> {
    opts.validate()?;
    let (rows, cols) = grid.dim();
    if rows == 0 || cols == 0 {
        return Err(CliError::Grid("cannot render an empty grid".into()));
    }
    let img = match opts.colormap {
        Colormap::Grayscale => native_image(grid.values(), opts.db_floor),
    };
    let width = opts.width.unwrap_or(cols as u32);
    let height = opts.height.unwrap_or(rows as u32);
    if (width, height) == img.dimensions() {
        Ok(img)
    } else {
        Ok(imageops::resize(&img, width, height, FilterType::Nearest))
    }
}

pub fn render_spectrogram(grid: &SpectrogramGrid, opts: &RenderOptions, path: &Path) -> Result<()> {
    render_image(grid, opts)?.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use specsep::StftConfig;

    fn grid(values: Array2<f64>) -> SpectrogramGrid {
        SpectrogramGrid::new(values, StftConfig::new(8, 2, 8, 100.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_grid_is_black() {
        let img = render_image(&grid(Array2::zeros((5, 7))), &RenderOptions::default()).unwrap();
        assert!(img.pixels().all(|p| p.0[0] == 0));
    }

    #[test]
    fn single_peak_is_the_only_white_pixel() {
        let mut v = Array2::from_elem((5, 7), 1e-3);
        v[(1, 4)] = 2.0;
        let img = render_image(&grid(v), &RenderOptions::default()).unwrap();
        let white: Vec<_> = img.enumerate_pixels().filter(|(_, _, p)| p.0[0] == 255).map(|(x, y, _)| (x, y)).collect();
        // bin 1 of 5 sits on the second row from the bottom
        assert_eq!(white, vec![(4, 3)]);
    }

    #[test]
    fn db_mapping() {
        assert_eq!(pixel_level(1.0, 1.0, -80.0), 255);
        assert_eq!(pixel_level(1e-2, 1.0, -80.0), 191);
        assert_eq!(pixel_level(1e-8, 1.0, -80.0), 0);
        assert_eq!(pixel_level(1e-12, 1.0, -80.0), 0);
        assert_eq!(pixel_level(0.1, 1.0, -40.0), 191);
    }

    #[test]
    fn resizing_keeps_orientation() {
        let mut v = Array2::zeros((5, 7));
        v[(0, 0)] = 1.0;
        let opts = RenderOptions { width: Some(70), height: Some(50), ..Default::default() };
        let img = render_image(&grid(v), &opts).unwrap();
        assert_eq!(img.dimensions(), (70, 50));
        assert_eq!(img.get_pixel(0, 49).0[0], 255);
        assert_eq!(img.get_pixel(69, 0).0[0], 0);
    }

    #[test]
    fn rejects_nonnegative_floor() {
        let opts = RenderOptions { db_floor: 0.0, ..Default::default() };
        assert!(render_image(&grid(Array2::zeros((5, 7))), &opts).is_err());
    }

    #[test]
    fn png_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.png");
        let v = Array2::from_shape_fn((5, 7), |(r, c)| (r + c) as f64);
        render_spectrogram(&grid(v), &RenderOptions::default(), &path).unwrap();
        let back = image::open(&path).unwrap();
        assert_eq!(back.color(), image::ColorType::L8);
        assert_eq!((back.width(), back.height()), (7, 5));
    }

    proptest! {
        #[test]
        fn scale_invariant(values in proptest::collection::vec(0.0f64..10.0, 35), c in 1e-6f64..1e6) {
            let v = Array2::from_shape_vec((5, 7), values).unwrap();
            let a = render_image(&grid(v.clone()), &RenderOptions::default()).unwrap();
            let b = render_image(&grid(v * c), &RenderOptions::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
