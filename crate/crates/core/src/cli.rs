//! Command-line front end; [`cli_main`] maps every outcome to an exit code.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::encoders::{line_coords, EncoderSpec};
use crate::error::{Error, Result};
use crate::io::{self, parse_config, read_image, write_image, RunConfig};
use crate::metrics::ssim;
use crate::network::{Activation, BlockKind, Model, ModelSpec};
use crate::ntk::{ntk_matrix, SpectrumStats};
use crate::operators::{phantom, ImageGrid, Mask};
use crate::trainer::{evaluate, fit, Measurement, TaskKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "hoin", version, about = "High-order implicit neural representations for image inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the task named in the config (image representation by default).
    Fit(RunArgs),
    /// Fit a noisy image and keep the peak-PSNR checkpoint.
    Denoise(RunArgs),
    /// Fit a low-resolution image and render it at full resolution.
    Sr(RunArgs),
    /// Reconstruct an image from its sinogram.
    Ct(RunArgs),
    /// Fit the kept pixels of a masked image.
    Inpaint(RunArgs),
    /// Fit while logging frequency-band correspondence (10 bands by default).
    Spectral(RunArgs),
    /// Empirical NTK of freshly initialized 1-D models.
    Ntk(NtkArgs),
    /// Convert between P5/P6 and PFM, or render a checkpoint to an image.
    Convert(ConvertArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
    /// Track this many frequency bands.
    #[arg(long)]
    bands: Option<usize>,
    /// Ground-truth image for scoring and peak selection.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Input image (or sinogram for ct); overrides the config.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Use a built-in phantom as the clean image.
    #[arg(long, value_parser = ["disk", "squares", "shepp-like"])]
    phantom: Option<String>,
    /// Fill the wall_ms column.
    #[arg(long)]
    wall_time: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BlockArg {
    Plain,
    Residual,
    Ho,
}

impl From<BlockArg> for BlockKind {
    fn from(b: BlockArg) -> Self {
        match b {
            BlockArg::Plain => BlockKind::Plain,
            BlockArg::Residual => BlockKind::Residual,
            BlockArg::Ho => BlockKind::Ho,
        }
    }
}

#[derive(Args, Debug)]
struct NtkArgs {
    /// Block kinds to compare; repeat the flag for several.
    #[arg(long = "block", value_enum, default_values_t = vec![BlockArg::Ho, BlockArg::Plain])]
    blocks: Vec<BlockArg>,
    #[arg(long, default_value_t = 64)]
    points: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    /// Band half-width for the diagonal energy ratio.
    #[arg(long, default_value_t = 2)]
    bandwidth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out/ntk")]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    input: PathBuf,
    output: PathBuf,
    /// Render size for checkpoints, as HEIGHTxWIDTH.
    #[arg(long, default_value = "64x64")]
    size: String,
    #[arg(long)]
    force: bool,
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    configure_threads();
    let result = match cli.command {
        Command::Fit(a) => run_task(None, a, false),
        Command::Denoise(a) => run_task(Some(TaskKind::Denoise), a, false),
        Command::Sr(a) => run_task(Some(TaskKind::Sr), a, false),
        Command::Ct(a) => run_task(Some(TaskKind::Ct), a, false),
        Command::Inpaint(a) => run_task(Some(TaskKind::Inpaint), a, false),
        Command::Spectral(a) => run_task(None, a, true),
        Command::Ntk(a) => run_ntk(a),
        Command::Convert(a) => run_convert(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Divergence(_) => EXIT_DIVERGED,
                Error::Io(_) => EXIT_FAILURE,
                _ => EXIT_USAGE,
            }
        }
    }
}

/// `HOIN_THREADS` caps the worker pool used by parallel kernels.
fn configure_threads() {
    if let Some(n) = std::env::var("HOIN_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Fails before any work when a target exists and `force` is off.
fn check_targets(paths: &[PathBuf], force: bool) -> Result<()> {
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Error::Invalid(format!("{} exists; pass --force to overwrite", p.display())));
        }
    }
    Ok(())
}

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| with_path(path, e))
}

fn load_image(path: &Path) -> Result<ImageGrid> {
    match read_image(path) {
        Err(Error::Io(e)) => Err(with_path(path, e)),
        other => other,
    }
}

/// Relative paths inside a config file resolve against the file's directory.
fn load_config(kind: Option<TaskKind>, a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let mut c = parse_config(&read_text(p)?)?;
            let base = p.parent().unwrap_or(Path::new(""));
            for slot in [&mut c.task.input, &mut c.task.truth, &mut c.task.mask] {
                if let Some(rel) = slot.as_mut().filter(|q| q.is_relative()) {
                    *rel = base.join(&*rel);
                }
            }
            c
        }
        None => {
            let mut c = RunConfig::new(kind.unwrap_or(TaskKind::Represent));
            c.task.simulate = true;
            c
        }
    };
    if let Some(k) = kind {
        cfg.task.kind = k;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if a.epochs.is_some() {
        cfg.train.epochs = a.epochs;
    }
    if let Some(o) = &a.out {
        cfg.output.dir = o.clone();
    }
    cfg.output.force |= a.force;
    if a.bands.is_some() {
        cfg.train.bands = a.bands;
    }
    if let Some(t) = &a.truth {
        cfg.task.truth = Some(t.clone());
    }
    if let Some(i) = &a.input {
        cfg.task.input = Some(i.clone());
    }
    if let Some(p) = &a.phantom {
        cfg.task.phantom = Some(p.clone());
        cfg.task.simulate = true;
    }
    cfg.train.wall_time |= a.wall_time;
    // absolute paths keep the saved run.cfg valid from any directory
    for slot in [&mut cfg.task.input, &mut cfg.task.truth, &mut cfg.task.mask] {
        if let Some(p) = slot.as_mut() {
            *p = std::path::absolute(&*p)?;
        }
    }
    Ok(cfg)
}

fn run_task(kind: Option<TaskKind>, a: RunArgs, spectral: bool) -> Result<i32> {
    let mut cfg = load_config(kind, &a)?;
    if spectral && cfg.train.bands.is_none() {
        cfg.train.bands = Some(10);
    }
    let source = match (&cfg.task.phantom, &cfg.task.input) {
        (Some(name), _) => phantom::by_name(name, cfg.task.phantom_size)?,
        (None, Some(path)) => load_image(path)?,
        (None, None) => return Err(Error::Invalid("no input: set [task] input, --input or --phantom".into())),
    };
    let kind = cfg.task.kind;
    let channels = if kind == TaskKind::Ct { 1 } else { source.channels() };
    let task = cfg.task_spec(channels)?;
    let given_truth = cfg.task.truth.as_deref().map(load_image).transpose()?;

    let (measurement, truth) = if cfg.task.simulate {
        let clean = if kind == TaskKind::Ct { source.luma() } else { source };
        let m = Measurement::simulate(&task, &clean)?;
        let truth = match given_truth {
            Some(t) => t,
            None if kind == TaskKind::Sr => clean.crop(0, 0, m.output_height, m.output_width)?,
            None => clean,
        };
        (m, Some(truth))
    } else {
        let mask = match (&cfg.task.mask, kind) {
            (Some(p), _) => {
                let img = load_image(p)?;
                let keep = img.luma().pixels().iter().map(|&v| v > 0.0).collect();
                Some(Mask::from_bools(img.height(), img.width(), keep)?)
            }
            (None, TaskKind::Inpaint) => return Err(Error::Invalid("inpainting observed data needs [task] mask".into())),
            (None, _) => None,
        };
        (Measurement::observed(&task, source, mask)?, given_truth)
    };

    let dir = cfg.output.dir.clone();
    let ext = if channels == 1 { "pgm" } else { "ppm" };
    let mut targets = vec![
        dir.join(format!("recon.{ext}")),
        dir.join("recon.pfm"),
        dir.join("measurement.pfm"),
        dir.join("metrics.csv"),
        dir.join("run.cfg"),
    ];
    if task.bands.is_some() {
        targets.push(dir.join("bands.csv"));
    }
    if cfg.output.checkpoint {
        targets.push(dir.join("model.ckpt"));
    }
    check_targets(&targets, cfg.output.force)?;
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("run.cfg"), cfg.serialize())?;
    write_image(&dir.join("measurement.pfm"), &measurement.data)?;

    let outcome = fit(&task, &measurement, truth.as_ref())?;
    fs::write(dir.join("metrics.csv"), io::records_csv(&outcome.records))?;
    if let Some(n) = task.bands {
        fs::write(dir.join("bands.csv"), io::bands_csv(&outcome.bands, n))?;
    }
    if let Some(msg) = &outcome.diverged {
        eprintln!("error: divergence: {msg}; partial metrics written to {}", dir.display());
        return Ok(EXIT_DIVERGED);
    }
    let recon = evaluate(&outcome.model, measurement.output_height, measurement.output_width)?;
    write_image(&dir.join(format!("recon.{ext}")), &recon)?;
    write_image(&dir.join("recon.pfm"), &recon)?;
    if cfg.output.checkpoint {
        io::write_checkpoint(&dir.join("model.ckpt"), &outcome.model, task.seed)?;
    }

    let best = outcome.best_record().expect("at least one record");
    let (psnr, ssim_text) = match (best.psnr_truth, best.ssim_truth) {
        (Some(p), s) => (p, s.map_or("na".to_string(), |v| format!("{v:.4}"))),
        (None, _) => {
            let s = if recon.same_shape(&measurement.data) { ssim(&recon, &measurement.data).ok() } else { None };
            (best.psnr_meas, s.map_or("na".to_string(), |v| format!("{v:.4}")))
        }
    };
    if truth.is_none() {
        eprintln!("note: no ground truth; kept the minimum-loss checkpoint and scored against the measurement");
    }
    println!("RESULT psnr={psnr:.4} ssim={ssim_text} best_epoch={}", outcome.best_epoch);
    Ok(EXIT_OK)
}

fn run_ntk(a: NtkArgs) -> Result<i32> {
    let coords = line_coords(a.points);
    let mut targets = Vec::new();
    for b in &a.blocks {
        let name = io::config::block_name((*b).into());
        for f in [format!("ntk_{name}.pfm"), format!("eigenvalues_{name}.csv"), format!("stats_{name}.txt")] {
            targets.push(a.out.join(f));
        }
    }
    check_targets(&targets, a.force)?;
    fs::create_dir_all(&a.out)?;
    for b in &a.blocks {
        let block: BlockKind = (*b).into();
        let name = io::config::block_name(block);
        let spec = ModelSpec {
            encoder: EncoderSpec::positional(),
            in_dim: 1,
            block,
            hidden_layers: a.layers,
            width: a.width,
            activation: Activation::Relu,
            out_dim: 1,
        };
        let kernel = ntk_matrix(&Model::build(&spec, a.seed)?, &coords)?;
        let stats = SpectrumStats::compute(&kernel, a.bandwidth)?;
        write_image(&a.out.join(format!("ntk_{name}.pfm")), &ImageGrid::new(kernel.n, kernel.n, 1, kernel.k.clone())?)?;
        let eig: String = stats.eigenvalues.iter().map(|v| format!("{v}\n")).collect();
        fs::write(a.out.join(format!("eigenvalues_{name}.csv")), format!("eigenvalue\n{eig}"))?;
        fs::write(a.out.join(format!("stats_{name}.txt")), format!("block = {name}\n{}", stats.to_text()))?;
        println!(
            "NTK block={name} diag_ratio={:.6} count_above_10={}",
            stats.diag_energy_ratio,
            stats.count_above(10.0)
        );
    }
    Ok(EXIT_OK)
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    s.split_once('x')
        .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)))
        .filter(|&(h, w)| h > 0 && w > 0)
        .ok_or_else(|| Error::Invalid(format!("size must look like 64x64, got `{s}`")))
}

fn run_convert(a: ConvertArgs) -> Result<i32> {
    check_targets(std::slice::from_ref(&a.output), a.force)?;
    let img = if a.input.extension().is_some_and(|e| e == "ckpt") {
        let (model, _) = io::read_checkpoint(&a.input).map_err(|e| match e {
            Error::Io(e) => with_path(&a.input, e),
            other => other,
        })?;
        let (h, w) = parse_size(&a.size)?;
        evaluate(&model, h, w)?
    } else {
        load_image(&a.input)?
    };
    if let Some(parent) = a.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_image(&a.output, &img)?;
    Ok(EXIT_OK)
}
