//! Command-line front end: `simulate`, `run`, `evaluate` and `plot`.
//!
//! Exit codes: 0 on success, 1 when a pipeline stage fails, 2 on a bad
//! command line or config file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, RunManifest};
use crate::error::{Error, Result};
use crate::ingest::{self, Dataset};
use crate::metrics::{ari, format_report, nmi};
use crate::synthgen::{generate, SynthSpec};
use crate::table::{format_numeric_table, read_labels, write_atomic};
use crate::tensor::format_checkpoint;

pub const THREADS_ENV: &str = "STMMC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stmmc", version, about = "Multi-modal spatial clustering of spatial transcriptomics data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset with planted domains, plus a run config for it.
    Simulate(SimulateArgs),
    /// Preprocess, train, cluster and smooth.
    Run(RunArgs),
    /// Score predicted labels against reference labels (ARI, NMI).
    Evaluate(EvaluateArgs),
    /// Draw a spatial cluster map as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub rows: usize,
    #[arg(long, default_value_t = 20)]
    pub cols: usize,
    #[arg(long, default_value_t = 4)]
    pub n_domains: usize,
    #[arg(long, default_value_t = 60)]
    pub n_genes: usize,
    #[arg(long)]
    pub markers_per_domain: Option<usize>,
    #[arg(long)]
    pub signature_strength: Option<f64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub image_dim: Option<usize>,
    #[arg(long)]
    pub image_signal: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub expression: Option<PathBuf>,
    #[arg(long)]
    pub coords: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    #[arg(long)]
    pub n_clusters: Option<usize>,
    #[arg(long)]
    pub no_image: bool,
    #[arg(long)]
    pub no_contrastive: bool,
    #[arg(long)]
    pub no_smoothing: bool,
    #[arg(long)]
    pub b_smooth: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write the trained parameters.
    #[arg(long)]
    pub checkpoint: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Report path; defaults to `metrics.csv` next to the predictions.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub coords: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Plot(a) => cmd_plot(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        _ => 1,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Error::Config {
        origin: THREADS_ENV.into(),
        reason: format!("expected a positive integer, got '{raw}'"),
    })?;
    // A pool may already exist when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let defaults = SynthSpec::default();
    let spec = SynthSpec {
        rows: a.rows,
        cols: a.cols,
        n_domains: a.n_domains,
        n_genes: a.n_genes,
        markers_per_domain: a.markers_per_domain.unwrap_or(defaults.markers_per_domain),
        signature_strength: a.signature_strength.unwrap_or(defaults.signature_strength),
        noise_sd: a.noise_sd.unwrap_or(defaults.noise_sd),
        image_dim: a.image_dim.unwrap_or(defaults.image_dim),
        image_signal: a.image_signal.unwrap_or(defaults.image_signal),
        seed: a.seed,
    };
    let data = generate(&spec)?;
    let paths = data.write(&a.out_dir)?;
    let cfg = format!(
        "# synthetic dataset (seed {}); truth labels in labels.csv\nexpression = expression.csv\ncoords = coords.csv\nfeatures = features.csv\nn_clusters = {}\nout_dir = run\n",
        spec.seed,
        spec.n_domains.max(2)
    );
    write_atomic(&a.out_dir.join("run.cfg"), cfg.as_bytes())?;
    println!(
        "wrote {} spots x {} genes to {}",
        data.expression.n_spots(),
        data.expression.n_genes(),
        paths.expression.parent().unwrap_or(Path::new(".")).display()
    );
    Ok(())
}

/// Resolves the config file plus command-line overrides.
pub fn resolve_run_config(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            Error::Io { path, source } => Error::Config {
                origin: path.display().to_string(),
                reason: source.to_string(),
            },
            other => other,
        })?,
        None => RunConfig::default(),
    };
    for (slot, flag) in [
        (&mut cfg.expression, &a.expression),
        (&mut cfg.coords, &a.coords),
        (&mut cfg.features, &a.features),
        (&mut cfg.image, &a.image),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if let Some(p) = &a.out_dir {
        cfg.out_dir = p.clone();
    }
    let t = &mut cfg.train;
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.k_neighbors {
        t.k_neighbors = v;
    }
    if let Some(v) = a.n_clusters {
        t.n_clusters = v;
    }
    if let Some(v) = a.b_smooth {
        t.b_smooth = v;
    }
    if a.no_image {
        t.toggles.use_image_modality = false;
    }
    if a.no_contrastive {
        t.toggles.use_contrastive = false;
    }
    if a.no_smoothing {
        t.toggles.use_smoothing = false;
    }
    if a.checkpoint {
        cfg.write_checkpoint = true;
    }
    let origin = a
        .config
        .as_ref()
        .map_or_else(|| "command line".to_string(), |p| p.display().to_string());
    cfg.validate(&origin)?;
    // Absolute paths keep the manifest usable from any working directory.
    let absolute = |p: &Path| std::path::absolute(p).map_err(|e| Error::io(p, e));
    for p in [&mut cfg.expression, &mut cfg.coords, &mut cfg.features, &mut cfg.image].into_iter().flatten() {
        *p = absolute(p)?;
    }
    cfg.out_dir = absolute(&cfg.out_dir)?;
    Ok(cfg)
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn load_run_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let expression = cfg.expression.as_deref().expect("validated");
    let coords = cfg.coords.as_deref().expect("validated");
    if !cfg.train.toggles.use_image_modality {
        return ingest::load_dataset(expression, coords, None);
    }
    if let Some(features) = &cfg.features {
        return ingest::load_dataset(expression, coords, Some(features));
    }
    let mut dataset = ingest::load_dataset(expression, coords, None)?;
    let image = ingest::load_rgb_image(cfg.image.as_deref().expect("validated"))?;
    dataset.features = Some(ingest::extract_patch_features(
        &image,
        &dataset.coordinates,
        cfg.patch_width,
    )?);
    Ok(dataset)
}

pub fn cmd_run(a: &RunArgs) -> Result<()> {
    let cfg = resolve_run_config(a)?;
    let started = unix_now();
    let dataset = load_run_dataset(&cfg)?;
    let out = crate::pipeline::run(&dataset, &cfg.train)?;

    let spot_ids = dataset.expression.spot_ids();
    let mut files: Vec<(&str, String)> = vec![
        ("labels.csv", out.labels.to_csv(spot_ids)?),
        ("history.csv", out.training.history.to_csv()),
        (
            "reconstruction.csv",
            format_numeric_table(
                &out.prepared.gene_ids,
                spot_ids,
                out.training.reconstruction.outer_iter(),
            ),
        ),
    ];
    if cfg.write_checkpoint {
        let named = out.training.model.named_params();
        let entries: Vec<(String, &ndarray::Array2<f64>)> =
            named.iter().map(|(n, p)| (n.clone(), &p.value)).collect();
        files.push(("checkpoint.txt", format_checkpoint(&entries)));
    }
    let mut outputs: Vec<String> = files.iter().map(|(n, _)| n.to_string()).collect();
    outputs.push("manifest.cfg".into());
    let manifest = RunManifest {
        config: cfg.clone(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        started_unix: started,
        finished_unix: unix_now(),
        outputs,
    };
    files.push(("manifest.cfg", manifest.render()));

    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    for (name, body) in &files {
        write_atomic(&cfg.out_dir.join(name), body.as_bytes())?;
    }
    let k = out.labels.histogram().iter().filter(|&&c| c > 0).count();
    println!(
        "clustered {} spots into {k} clusters; outputs in {}",
        spot_ids.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

/// Reads two label files and orders the second by the first's spot ids.
fn aligned_labels(pred: &Path, truth: &Path) -> Result<(Vec<String>, Vec<usize>, Vec<usize>)> {
    let (pred_ids, pred_labels) = read_labels(pred)?;
    let (truth_ids, truth_labels) = read_labels(truth)?;
    let order = ingest::alignment(
        &pred_ids,
        &truth_ids,
        &truth.display().to_string(),
        &pred.display().to_string(),
    )?;
    let truth_aligned = order.iter().map(|&i| truth_labels[i]).collect();
    Ok((pred_ids, pred_labels, truth_aligned))
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let (_, pred, truth) = aligned_labels(&a.pred, &a.truth)?;
    let report = format_report(&[("ari", ari(&pred, &truth)?), ("nmi", nmi(&pred, &truth)?)]);
    let out = a.out.clone().unwrap_or_else(|| {
        a.pred
            .parent()
            .unwrap_or(Path::new("."))
            .join("metrics.csv")
    });
    write_atomic(&out, report.as_bytes())?;
    print!("{report}");
    Ok(())
}

pub fn cmd_plot(a: &PlotArgs) -> Result<()> {
    let coords = ingest::load_coordinates(&a.coords)?;
    let (label_ids, labels) = read_labels(&a.labels)?;
    let order = ingest::alignment(
        coords.spot_ids(),
        &label_ids,
        &a.labels.display().to_string(),
        &a.coords.display().to_string(),
    )?;
    let aligned: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    let svg = crate::plot::render_svg(coords.coords(), &aligned)?;
    write_atomic(&a.out, svg.as_bytes())?;
    println!("wrote {}", a.out.display());
    Ok(())
}
