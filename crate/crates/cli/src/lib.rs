//! File formats and command-line front end for `specsep`: WAV input and
//! output, `SSGR` grid files, PNG heatmaps and the `specsep` subcommands.

pub mod app;
pub mod diagnose;
pub mod error;
pub mod grid_file;
pub mod metadata;
pub mod render;
pub mod wav;

pub use app::{run_cli, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, TRACE_HEADER};
pub use error::{CliError, Result};
pub use grid_file::{read_grid, write_grid};
pub use metadata::PresetMetadata;
pub use render::{render_spectrogram, RenderOptions};
pub use wav::{load_wav, save_wav};
