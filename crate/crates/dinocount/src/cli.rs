//! `dinocount` command line.
//!
//! Exit codes: 0 success, 1 invalid arguments, configuration or inputs,
//! 2 failure while running (including evaluations with failed images).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dinocount_core::eval::{exclusion_rows, render_table, render_table_csv, Exclusion, TableRow};
use dinocount_core::rng::Rng;
use dinocount_core::sample::SampleSource;
use dinocount_core::synth::{generate_synthetic, ShapeKind, SyntheticSceneSpec};
use dinocount_core::Split;
use log::info;

use crate::checkpoint::load_model;
use crate::config::AppConfig;
use crate::evaluate::{evaluate_source, ReportFile};
use crate::fsc147::{self, Fsc147Index};
use crate::image_io::{load_density_png, load_rgb, overlay, save_density_png, save_rgb};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "dinocount", version, about = "Exemplar-free object counting by density-map regression")]
pub struct Cli {
    /// TOML configuration file; defaults apply to anything it omits.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set train.epochs=10`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Root seed for every random choice; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info", value_name = "LEVEL")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an official FSC-147 release, or validate a prepared root.
    Prepare(PrepareArgs),
    /// Render synthetic counting scenes as a dataset root.
    Synth(SynthArgs),
    /// Train a model; writes a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split with tiled inference.
    Evaluate(EvaluateArgs),
    /// Count objects in one image.
    Count(CountArgs),
    /// Blend a density map over its image.
    Visualize(VisualizeArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Official release directory (annotation_FSC147_384.json,
    /// Train_Test_Val_FSC_147.json, images_384_VarV2/).
    #[arg(long, requires = "out")]
    pub source: Option<PathBuf>,
    /// Destination root for the converted dataset.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Validate an already prepared root instead of converting.
    #[arg(long, conflicts_with_all = ["source", "out"])]
    pub root: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// disk, bar, two-lens-glasses or brick.
    #[arg(long, default_value = "disk")]
    pub kind: String,
    /// Instances per scene: `N`, or an inclusive range `A..B` drawn per scene.
    #[arg(long, default_value = "10")]
    pub count: String,
    /// Training scenes to render.
    #[arg(long, default_value_t = 1)]
    pub scenes: usize,
    /// Additional validation scenes.
    #[arg(long, default_value_t = 0)]
    pub val_scenes: usize,
    /// Additional test scenes.
    #[arg(long, default_value_t = 0)]
    pub test_scenes: usize,
    #[arg(long, default_value_t = 384)]
    pub height: usize,
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    /// Minimum clearance between instances in pixels; 0 allows overlap.
    #[arg(long, default_value_t = 2.0)]
    pub min_gap: f64,
    /// Relative size jitter in [0, 0.5].
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Output dataset root.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset root; overrides `data.root`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run name; overrides `run.name`.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// train, val or test.
    #[arg(long, default_value = "val")]
    pub split: Split,
    /// Dataset root; overrides `data.root`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Image id to leave out of the reduced aggregate. Repeatable.
    #[arg(long = "exclude", value_name = "ID")]
    pub exclude: Vec<String>,
    /// Also leave out the K images with the largest absolute error.
    #[arg(long, default_value_t = 0, value_name = "K")]
    pub exclude_top_k: usize,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Text table path; a `.csv` sibling is written next to it.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// 16-bit density PNG (scale recorded in a `.txt` sidecar).
    #[arg(long)]
    pub density: Option<PathBuf>,
    /// Image blended with the colour-mapped density.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Density PNG written by `count --density`.
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pub density: Option<PathBuf>,
    /// Predict the density with this checkpoint instead.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum blend weight of the colour map.
    #[arg(long, default_value_t = 0.6)]
    pub alpha: f64,
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .try_init();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return 1;
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn overrides(cli: &Cli) -> Vec<String> {
    let mut o = cli.overrides.clone();
    if let Some(s) = cli.seed {
        o.push(format!("seed={s}"));
    }
    o
}

fn resolve(cli: &Cli, extra: &[String]) -> Result<AppConfig> {
    let mut o = overrides(cli);
    o.extend_from_slice(extra);
    let cfg = AppConfig::load(cli.config.as_deref(), &o)?;
    info!("resolved config (hash {}):\n{}", cfg.hash(), cfg.to_toml());
    Ok(cfg)
}

/// Configuration for commands that start from a checkpoint: the
/// checkpoint's embedded config, or `--config` when given, plus overrides.
fn resolve_from_checkpoint(cli: &Cli, embedded: &AppConfig, extra: &[String]) -> Result<AppConfig> {
    if cli.config.is_some() {
        return resolve(cli, extra);
    }
    let mut table: toml::Table = toml::from_str(&embedded.to_toml()).expect("config round-trips");
    let mut o = overrides(cli);
    o.extend_from_slice(extra);
    for s in &o {
        crate::config::apply_override(&mut table, s)?;
    }
    let cfg: AppConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    cfg.inference_config()?;
    info!("resolved config (hash {}):\n{}", cfg.hash(), cfg.to_toml());
    Ok(cfg)
}

fn path_override(key: &str, p: &Option<PathBuf>) -> Vec<String> {
    p.iter()
        .map(|p| format!("{key}={}", toml::Value::String(p.display().to_string())))
        .collect()
}

fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Prepare(a) => prepare(a),
        Command::Synth(a) => synth(cli, a),
        Command::Train(a) => {
            let mut extra = path_override("data.root", &a.data);
            if let Some(n) = &a.name {
                extra.push(format!("run.name={}", toml::Value::String(n.clone())));
            }
            let cfg = resolve(cli, &extra)?;
            let train = Fsc147Index::open(&cfg.data.root, Split::Train)?;
            let val = Fsc147Index::open(&cfg.data.root, Split::Val)?;
            info!("training on {} images, validating on {}", train.len(), val.len());
            let (dir, outcome) = crate::run::run_training(&cfg, &train, &val)?;
            println!(
                "best epoch {} val_mae {:.4} -> {}",
                outcome.best.epoch,
                outcome.best.val_mae,
                dir.best_checkpoint().display()
            );
            Ok(0)
        }
        Command::Evaluate(a) => evaluate(cli, a),
        Command::Count(a) => count(cli, a),
        Command::Visualize(a) => visualize(cli, a),
    }
}

fn prepare(a: &PrepareArgs) -> Result<i32> {
    let sizes = match (&a.root, &a.source, &a.out) {
        (Some(root), _, _) => fsc147::validate_root(root)?,
        (None, Some(src), Some(out)) => fsc147::prepare_official(src, out)?,
        _ => return Err(Error::Config("prepare needs either --root, or --source with --out".into())),
    };
    for (split, n) in sizes {
        println!("{split}: {n} images");
    }
    Ok(0)
}

fn parse_count(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("--count: expected N or A..B, got `{s}`"));
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            Ok((a, b))
        }
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            Ok((n, n))
        }
    }
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<i32> {
    let kind: ShapeKind = a.kind.parse()?;
    let (lo, hi) = parse_count(&a.count)?;
    let seed = cli.seed.unwrap_or(0);
    let plan = [(Split::Train, a.scenes), (Split::Val, a.val_scenes), (Split::Test, a.test_scenes)];
    let mut samples = Vec::new();
    let mut rng = Rng::derive(seed, 0x5eed);
    let mut k = 0u64;
    for (split, n) in plan {
        for _ in 0..n {
            let count = lo + rng.below(hi - lo + 1);
            let spec = SyntheticSceneSpec {
                min_gap: a.min_gap,
                jitter: a.jitter,
                ..SyntheticSceneSpec::new((a.height, a.width), kind, count)
            };
            let mut s = generate_synthetic(&spec, seed.wrapping_add(k))?;
            s.split = split;
            samples.push(s);
            k += 1;
        }
    }
    let paths = fsc147::write_dataset(&a.out, &samples)?;
    for (s, p) in samples.iter().zip(paths) {
        println!("{} {} {}", s.split, s.count(), p.display());
    }
    Ok(0)
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<i32> {
    let (model, ck) = load_model(&a.checkpoint)?;
    let cfg = resolve_from_checkpoint(cli, &ck.meta.config, &path_override("data.root", &a.data))?;
    let data = Fsc147Index::open(&cfg.data.root, a.split)?;
    let exclusion = Exclusion {
        ids: a.exclude.clone(),
        top_k: a.exclude_top_k,
    };
    let report = evaluate_source(&model, &data, a.split.as_str(), &cfg.inference_config()?, &exclusion)?;
    let file = ReportFile::new(&report, &ck.id, &cfg.hash());
    if let Some(p) = &a.report {
        file.write(p)?;
    }
    let (val, test) = match a.split {
        Split::Test => (None, Some(&report)),
        _ => (Some(&report), None),
    };
    let rows = if exclusion.is_empty() {
        vec![TableRow {
            label: "Ours".into(),
            val: val.map(|r| r.all),
            test: test.map(|r| r.all),
        }]
    } else {
        exclusion_rows(val, test)
    };
    let first = if exclusion.is_empty() { "Method" } else { "Configuration" };
    let table = render_table(&rows, first);
    print!("{table}");
    if let Some(p) = &a.table {
        crate::image_io::ensure_parent(p)?;
        std::fs::write(p, &table).map_err(Error::io(p))?;
        let csv = p.with_extension("csv");
        std::fs::write(&csv, render_table_csv(&rows)).map_err(Error::io(&csv))?;
    }
    if !report.excluded_ids.is_empty() {
        println!("excluded: {}", report.excluded_ids.join(", "));
    }
    let failures = report.failures();
    if failures > 0 {
        eprintln!("error: {failures} image(s) failed; aggregates cover the rest");
        return Ok(2);
    }
    Ok(0)
}

fn count(cli: &Cli, a: &CountArgs) -> Result<i32> {
    let (model, ck) = load_model(&a.checkpoint)?;
    let cfg = resolve_from_checkpoint(cli, &ck.meta.config, &[])?;
    let pixels = load_rgb(&a.image)?;
    let pred = dinocount_core::inference::infer_tiled(&pixels, &model, &cfg.inference_config()?)?;
    info!("count {} over {} windows", pred.count, pred.plan.origins.len());
    println!("{}", pred.count.round().max(0.0) as i64);
    if let Some(p) = &a.density {
        save_density_png(p, &pred.density)?;
    }
    if let Some(p) = &a.overlay {
        save_rgb(p, &overlay(&pixels, &pred.density, 0.6)?)?;
    }
    Ok(0)
}

fn visualize(cli: &Cli, a: &VisualizeArgs) -> Result<i32> {
    let pixels = load_rgb(&a.image)?;
    let density = match (&a.density, &a.checkpoint) {
        (Some(d), _) => load_density_png(d)?.0,
        (None, Some(c)) => {
            let (model, ck) = load_model(c)?;
            let cfg = resolve_from_checkpoint(cli, &ck.meta.config, &[])?;
            dinocount_core::inference::infer_tiled(&pixels, &model, &cfg.inference_config()?)?.density
        }
        (None, None) => unreachable!("clap requires one of --density/--checkpoint"),
    };
    save_rgb(&a.out, &overlay(&pixels, &density, a.alpha)?)?;
    println!("{}", a.out.display());
    Ok(0)
}
