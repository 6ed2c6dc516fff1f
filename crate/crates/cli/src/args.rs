use std::ops::Range;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sirds_core::depth::{Letter, SurfaceKind};
use sirds_core::experiment::Experiment;

#[derive(Debug, Parser)]
#[command(
    name = "sirds",
    version,
    about = "Colored-noise autostereogram toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one stimulus, or a whole experiment inventory with its session manifest.
    Gen(GenArgs),
    /// Matching-function and autocorrelation analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Serve a session directory to the browser UI on the loopback interface.
    Serve(ServeArgs),
    /// Score a response log against its manifest.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("mode").args(["experiment", "beta", "config"]).required(true).multiple(true))]
pub struct GenArgs {
    /// Experiment inventory to build (1, 2 or 3).
    #[arg(long, value_parser = parse_experiment, conflicts_with_all = ["beta", "surface", "letter"])]
    pub experiment: Option<Experiment>,
    /// Master seed for inventories, patch seed for single stimuli.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Spectral exponent of the noise, in [0, 3).
    #[arg(long, value_parser = parse_beta)]
    pub beta: Option<f64>,
    #[arg(long, value_parser = parse_surface)]
    pub surface: Option<SurfaceKind>,
    #[arg(long, value_parser = parse_letter)]
    pub letter: Option<Letter>,
    #[arg(long)]
    pub letter_size: Option<usize>,
    /// Plateau excess over the background peak, e.g. 0.2 or 1/5.
    #[arg(long, value_parser = parse_ratio)]
    pub depth_ratio: Option<f64>,
    /// Horizontal glyph offset from the center, pixels.
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<i32>,
    /// Geometry overrides as inline JSON or a path to a JSON file.
    #[arg(long)]
    pub geometry: Option<String>,
    /// JSON file with any of the above fields; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write link sidecars for every inventory stimulus (about 10 MB each).
    #[arg(long)]
    pub with_links: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Averaged matching surface, planar basin slice and ridge sharpness.
    Match(MatchArgs),
    /// Fit the power law of autocorrelation curvature against cutoff scale.
    ScaleLaw(ScaleLawArgs),
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Stimulus PNGs (or stems) with their JSON and link sidecars.
    #[arg(long, num_args = 1.., required = true)]
    pub stimuli: Vec<PathBuf>,
    /// Half-open row range `a:b` averaged within each stimulus.
    #[arg(long, value_parser = parse_rows, default_value = "0:32")]
    pub rows: Range<usize>,
    /// Column window length, centered unless `--window-start` is given.
    #[arg(long, default_value_t = sirds_core::ColumnWindow::DEFAULT_LEN)]
    pub window: usize,
    #[arg(long)]
    pub window_start: Option<usize>,
    #[arg(long, default_value_t = sirds_core::MatchKernel::default().lambda)]
    pub lambda: f64,
    #[arg(long, default_value = "analysis")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScaleLawArgs {
    #[arg(long, value_parser = parse_beta)]
    pub beta: f64,
    /// Comma-separated cutoff scales in pixels.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    pub sigmas: Vec<f64>,
    /// Number of seeds averaged.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// First seed; seeds run consecutively from here.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional JSON output file (the fit is always printed).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Session directory produced by `gen --experiment`.
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory holding the built UI bundle.
    #[arg(long)]
    pub ui: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub session: PathBuf,
    /// Response log; defaults to the session's responses.jsonl.
    #[arg(long)]
    pub responses: Option<PathBuf>,
    /// Report directory; defaults to `<session>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Correct responses slower than this are excluded from RT statistics.
    #[arg(long, default_value_t = sirds_core::experiment::DEFAULT_RT_CUTOFF_MS)]
    pub rt_cutoff_ms: f64,
    /// Pooled-variance t-tests instead of Welch.
    #[arg(long)]
    pub pooled: bool,
}

pub fn parse_beta(s: &str) -> Result<f64, String> {
    let b: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..3.0).contains(&b) {
        Ok(b)
    } else {
        Err(format!("beta must lie in [0, 3), got {b}"))
    }
}

pub fn parse_experiment(s: &str) -> Result<Experiment, String> {
    let id: u8 = s.parse().map_err(|e| format!("{e}"))?;
    Experiment::try_from(id).map_err(|e| e.to_string())
}

fn parse_surface(s: &str) -> Result<SurfaceKind, String> {
    s.parse().map_err(|e: sirds_core::Error| e.to_string())
}

fn parse_letter(s: &str) -> Result<Letter, String> {
    s.parse().map_err(|e: sirds_core::Error| e.to_string())
}

/// Accepts `0.2` or `1/5`.
pub fn parse_ratio(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|e| format!("{e}"))?;
            let d: f64 = d.trim().parse().map_err(|e| format!("{e}"))?;
            n / d
        }
        None => s.parse().map_err(|e| format!("{e}"))?,
    };
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("depth ratio must be positive, got {s}"))
    }
}

pub fn parse_rows(s: &str) -> Result<Range<usize>, String> {
    let (a, b) = s.split_once(':').ok_or("rows must look like a:b")?;
    let a: usize = a.parse().map_err(|e| format!("{e}"))?;
    let b: usize = b.parse().map_err(|e| format!("{e}"))?;
    if a < b {
        Ok(a..b)
    } else {
        Err(format!("empty row range {a}:{b}"))
    }
}
