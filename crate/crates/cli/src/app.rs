//! Command-line parsing and the pipelines behind each subcommand.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use specsep::synthesis::{PRESET_HOP_DIV, PRESET_WINDOW_MS};
use specsep::{
    make_synthetic_preset, nmf_factorize, separate, spectrogram, stft, SeparationParams, SeparationResult,
    SpectrogramGrid, StftConfig,
};

use crate::diagnose::run_diagnostics;
use crate::error::{CliError, Result};
use crate::grid_file::{read_grid, write_array_csv, write_grid, write_grid_csv};
use crate::metadata::{PresetMetadata, METADATA_FILE};
use crate::render::{render_spectrogram, RenderOptions};
use crate::wav::{load_wav, save_wav};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub const TRACE_HEADER: &str = "k,J,rho,clamped_count_x";

#[derive(Debug, Parser)]
#[command(name = "specsep", version, about = "Spectrogram separation of impulsive and oscillatory sounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic bumps + chirp preset as x.wav, y.wav, z.wav and preset.json.
    Synth(SynthArgs),
    /// Split a recording into impulsive (S_x) and oscillatory (S_y) spectrograms.
    Separate(SeparateArgs),
    /// Rank-r NMF baseline on the spectrogram of a recording.
    Nmf(NmfArgs),
    /// Check the bumps-spectrogram approximation and the cross-term size on the preset.
    Diagnose(DiagnoseArgs),
    /// Render a grid file as a grayscale PNG.
    Render(RenderArgs),
    /// Export a grid file as CSV (nu_hz,tau_s,value).
    ExportCsv(ExportCsvArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct StftArgs {
    /// Analysis window length in milliseconds.
    #[arg(long, default_value_t = PRESET_WINDOW_MS)]
    pub win_ms: f64,
    /// Hop as a divisor of the window length.
    #[arg(long, default_value_t = PRESET_HOP_DIV)]
    pub hop_div: usize,
}

impl StftArgs {
    fn config(&self, sample_rate: f64) -> Result<StftConfig> {
        Ok(StftConfig::from_window_ms(sample_rate, self.win_ms, self.hop_div)?)
    }
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = SeparationParams::default().lambda)]
    pub lambda: f64,
    #[arg(long, default_value_t = SeparationParams::default().mu)]
    pub mu: f64,
    #[arg(long, default_value_t = SeparationParams::default().theta)]
    pub theta: f64,
    #[arg(long, default_value_t = SeparationParams::default().max_iter)]
    pub max_iter: usize,
    #[arg(long, default_value_t = SeparationParams::default().fista_max_iter)]
    pub fista_max_iter: usize,
    #[arg(long, default_value_t = SeparationParams::default().fista_tol)]
    pub fista_tol: f64,
    /// Solve on the raw spectrogram instead of scaling it to unit maximum.
    #[arg(long)]
    pub no_normalize: bool,
    #[command(flatten)]
    pub stft: StftArgs,
    #[arg(long, default_value = "sx.grid")]
    pub out_sx: PathBuf,
    #[arg(long, default_value = "sy.grid")]
    pub out_sy: PathBuf,
    #[arg(long, default_value = "trace.csv")]
    pub trace: PathBuf,
    /// Skip writing PNG renderings next to the grid files.
    #[arg(long)]
    pub no_png: bool,
}

impl SeparateArgs {
    pub fn params(&self) -> SeparationParams {
        SeparationParams {
            lambda: self.lambda,
            mu: self.mu,
            max_iter: self.max_iter,
            theta: self.theta,
            fista_max_iter: self.fista_max_iter,
            fista_tol: self.fista_tol,
            normalize: !self.no_normalize,
        }
    }
}

#[derive(Debug, Args)]
pub struct NmfArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub rank: usize,
    #[arg(long, default_value_t = specsep::nmf::DEFAULT_ITERS)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub stft: StftArgs,
    /// Directory for nmf_<i>.grid and nmf_<i>.png.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Take the impulse times from a synth sidecar instead of regenerating them.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// Write the key=value report here as well as to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the cross-term grid as CSV.
    #[arg(long)]
    pub cross_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = -80.0, allow_negative_numbers = true)]
    pub db_floor: f64,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ExportCsvArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn png_path(grid_path: &Path) -> PathBuf {
    grid_path.with_extension("png")
}

pub fn write_trace(result: &SeparationResult, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let mut body = || -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for (k, ((j, rho), clamped)) in
            result.cost_trace.iter().zip(&result.rho_trace).zip(&result.clamped_trace).enumerate()
        {
            writeln!(out, "{},{},{},{}", k + 1, j, rho, clamped)?;
        }
        out.flush()
    };
    body().map_err(|e| CliError::io(path, e))
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    ensure_dir(&args.out_dir)?;
    let preset = make_synthetic_preset(args.seed)?;
    save_wav(&preset.x, &args.out_dir.join("x.wav"))?;
    save_wav(&preset.y, &args.out_dir.join("y.wav"))?;
    save_wav(&preset.z, &args.out_dir.join("z.wav"))?;
    PresetMetadata::from_preset(&preset).write(&args.out_dir.join(METADATA_FILE))?;
    println!("wrote x.wav y.wav z.wav {METADATA_FILE} to {}", args.out_dir.display());
    Ok(())
}

fn run_separate(args: &SeparateArgs) -> Result<()> {
    let params = args.params();
    params.validate()?;
    let signal = load_wav(&args.input)?;
    let config = args.stft.config(signal.sample_rate())?;
    let t_z = stft(&signal, &config)?;
    let result = separate(&t_z, &params)?;

    write_grid(&result.s_x, &args.out_sx)?;
    write_grid(&result.s_y, &args.out_sy)?;
    write_trace(&result, &args.trace)?;
    if !args.no_png {
        let opts = RenderOptions::default();
        render_spectrogram(&result.s_x, &opts, &png_path(&args.out_sx))?;
        render_spectrogram(&result.s_y, &opts, &png_path(&args.out_sy))?;
    }
    let residual = specsep::separation::residual_norm(&spectrogram(&t_z), &result.s_x, &result.s_y)?;
    println!("iterations={}", result.iterations);
    println!("converged={}", result.converged);
    println!("final_cost={}", result.cost_trace.last().copied().unwrap_or(0.0));
    println!("residual={residual}");
    println!("normalization={}", result.normalization);
    Ok(())
}

fn run_nmf(args: &NmfArgs) -> Result<()> {
    let signal = load_wav(&args.input)?;
    let config = args.stft.config(signal.sample_rate())?;
    let s_z = spectrogram(&stft(&signal, &config)?);
    let result = nmf_factorize(&s_z, args.rank, args.iters, args.seed)?;
    ensure_dir(&args.out_dir)?;
    let opts = RenderOptions::default();
    for (i, grid) in result.component_grids.iter().enumerate() {
        let path = args.out_dir.join(format!("nmf_{i}.grid"));
        write_grid(grid, &path)?;
        render_spectrogram(grid, &opts, &png_path(&path))?;
    }
    println!("iterations={}", result.iterations);
    println!("residual={}", result.residual_norm);
    Ok(())
}

fn run_diagnose(args: &DiagnoseArgs) -> Result<()> {
    let preset = make_synthetic_preset(args.seed)?;
    let (seed, bumps) = match &args.metadata {
        Some(path) => {
            let meta = PresetMetadata::read(path)?;
            (meta.seed, meta.bumps()?)
        }
        None => (args.seed, preset.bumps.clone()),
    };
    let report = run_diagnostics(seed, &bumps, &preset.amfm)?;
    let text = report.to_key_values();
    print!("{text}");
    if let Some(path) = &args.report {
        std::fs::write(path, &text).map_err(|e| CliError::io(path, e))?;
    }
    if let Some(path) = &args.cross_csv {
        write_array_csv(&report.cross.grid, &report.config, path)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("failed checks: {}", report.failed_checks().join(", "))))
    }
}

fn run_render(args: &RenderArgs) -> Result<()> {
    let grid: SpectrogramGrid = read_grid(&args.input)?;
    let opts = RenderOptions { db_floor: args.db_floor, width: args.width, height: args.height, ..Default::default() };
    render_spectrogram(&grid, &opts, &args.out)
}

fn run_export_csv(args: &ExportCsvArgs) -> Result<()> {
    write_grid_csv(&read_grid(&args.input)?, &args.out)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Separate(a) => run_separate(a),
        Command::Nmf(a) => run_nmf(a),
        Command::Diagnose(a) => run_diagnose(a),
        Command::Render(a) => run_render(a),
        Command::ExportCsv(a) => run_export_csv(a),
    }
}

/// Parses `args` (including the program name), runs the pipeline and returns
/// the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
