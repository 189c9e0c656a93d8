//! Command line.
//!
//! Exit status is 0 on success, 1 on a usage error (bad flags, missing
//! config file) and 2 when the command itself fails.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::GradCheck;
use crate::error::{Error, Result};
use crate::gradsuite::gradient_suite;
use crate::layout::{read_layout_file, write_layout_file, GeomKind, Layout, LayoutBatch};
use crate::metrics::{
    alignment_index, export_landscape_svg, loss_landscape, overlap_index, retrieve_nearest, spearman, total_variation,
};
use crate::render::{compose, default_palette, export_png, export_svg, RenderConfig};
use crate::trainer::{
    perturb_locations, perturb_recover_train, synth_data, train, write_manifest, DiscKind, Experiment, TrainConfig,
    Trainer,
};

#[derive(Parser, Debug)]
#[command(name = "wirelayout", version, about = "Layout generation with differentiable wireframe rendering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset as a layout file.
    Synth(SynthArgs),
    /// Train a generator against one discriminator.
    Train(TrainArgs),
    /// Sample layouts and images from a trained run.
    Generate(GenerateArgs),
    /// Rasterize every layout of a file.
    Render(RenderArgs),
    /// Spatial and retrieval metrics over a layout file.
    Eval(EvalArgs),
    /// Finite-difference check of every differentiable stage.
    Gradcheck(GradcheckArgs),
    /// Tangram perturbation recovery.
    Perturb(PerturbArgs),
    /// Discriminator loss under growing shifts of real layouts.
    Landscape(LandscapeArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum)]
    experiment: Experiment,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Digit classes for the points experiment.
    #[arg(long, value_delimiter = ',')]
    digits: Option<Vec<u8>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Flags that override the config file.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
    #[arg(long, value_enum)]
    discriminator: Option<DiscKind>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    dataset_size: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    log_every: Option<usize>,
}

impl Overrides {
    fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { c.$f = v; })*};
        }
        set!(
            experiment,
            discriminator,
            iterations,
            batch_size,
            lr,
            seed,
            width,
            height,
            dataset_size,
            checkpoint_every,
            log_every
        );
        c
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// TOML file with any subset of the training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training layouts; synthesized from the config when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Output directory of a training run.
    #[arg(long)]
    run: PathBuf,
    /// Checkpoint to load; the run's latest when absent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Real layouts to perturb (tangram recovery runs).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Also write SVG outlines.
    #[arg(long)]
    svg: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Reference layouts for nearest-neighbor distances.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Randomized configurations per stage.
    #[arg(long, default_value_t = 50)]
    configs: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PerturbArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    noise_std: f64,
    /// Number of real tangram layouts.
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LandscapeArgs {
    /// Training run directories, one curve each.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    /// Real layouts; synthesized from the first run's config when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    max_shift: f64,
    #[arg(long, default_value_t = 21)]
    steps: usize,
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Entry point of the `wirelayout` binary.
pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Generate(a) => generate(a),
        Command::Render(a) => render(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Perturb(a) => perturb(a),
        Command::Landscape(a) => landscape(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_config(
    path: Option<&Path>,
    overrides: &Overrides,
    force: Option<Experiment>,
) -> std::result::Result<TrainConfig, Failure> {
    let base = match path {
        Some(p) if !p.is_file() => return Err(Failure::Usage(format!("config file not found: {}", p.display()))),
        Some(p) => TrainConfig::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => TrainConfig::default(),
    };
    let mut c = overrides.apply(base);
    if let Some(e) = force {
        c.experiment = e;
    }
    c.resolved().map_err(|e| Failure::Usage(e.to_string()))
}

fn require_file(path: &Path) -> std::result::Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("file not found: {}", path.display())))
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn synth(a: &SynthArgs) -> CmdResult {
    let cfg = TrainConfig {
        experiment: a.experiment,
        dataset_size: a.count,
        seed: a.seed,
        digits: a.digits.clone().unwrap_or_else(|| (0..10).collect()),
        ..Default::default()
    }
    .resolved()
    .map_err(|e| Failure::Usage(e.to_string()))?;
    if a.count == 0 {
        return Err(Failure::Usage("count must be at least 1".into()));
    }
    write_manifest(&a.out, "synth", a.seed, &cfg)?;
    let layouts = synth_data(&cfg)?;
    let path = a.out.join("layouts.json");
    write_layout_file(&layouts, &path)?;
    println!("wrote {} {} layouts to {}", layouts.len(), a.experiment.name(), path.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> CmdResult {
    let cfg = load_config(a.config.as_deref(), &a.overrides, None)?;
    if let Some(d) = &a.data {
        require_file(d)?;
    }
    let cfg = TrainConfig { out_dir: Some(a.out.clone()), ..cfg };
    let data = match &a.data {
        Some(d) => read_layout_file(d)?,
        None => synth_data(&cfg)?,
    };
    let report = train(&cfg, &data)?;
    if let Some(last) = report.log.last() {
        println!("iteration {}: d_loss {:.4} g_loss {:.4}", last.iter, last.d_loss, last.g_loss);
    }
    for c in &report.checkpoints {
        println!("checkpoint {}", c.display());
    }
    Ok(())
}

/// Config and checkpoint of a training run directory.
fn open_run(dir: &Path, checkpoint: Option<&Path>) -> std::result::Result<Trainer, Failure> {
    let manifest = dir.join("manifest.json");
    require_file(&manifest)?;
    let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    let cfg: TrainConfig = serde_json::from_value(value["config"].clone())
        .map_err(|e| Error::Format(format!("{}: {e}", manifest.display())))?;
    let ckpt = match checkpoint {
        Some(c) => c.to_path_buf(),
        None => latest_checkpoint(dir)?.ok_or_else(|| Failure::Usage(format!("no checkpoint in {}", dir.display())))?,
    };
    require_file(&ckpt)?;
    Ok(Trainer::from_checkpoint(&cfg, &ckpt)?)
}

fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("ckpt_") && n.ends_with(".ckpt"))
        })
        .collect();
    found.sort();
    Ok(found.pop())
}

fn write_images(layouts: &[Layout], cfg: &RenderConfig, out: &Path, svg: bool) -> Result<usize> {
    let mut written = 0;
    for (i, l) in layouts.iter().enumerate() {
        let palette = default_palette(l.schema().len());
        export_png(&compose(l, cfg)?, &palette, out.join(format!("layout_{i:04}.png")))?;
        written += 1;
        if svg {
            export_svg(l, &palette, 256.0, out.join(format!("layout_{i:04}.svg")))?;
        }
    }
    Ok(written)
}

fn generate(a: &GenerateArgs) -> CmdResult {
    let trainer = open_run(&a.run, a.checkpoint.as_deref())?;
    let cfg = trainer.config.clone();
    write_manifest(&a.out, "generate", a.seed, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let layouts = if cfg.experiment == Experiment::Tangram {
        let real = match &a.input {
            Some(p) => {
                require_file(p)?;
                read_layout_file(p)?
            }
            None => synth_data(&TrainConfig { dataset_size: a.count, ..cfg.clone() })?,
        };
        let real = &real[..a.count.min(real.len())];
        let z = perturb_locations(&LayoutBatch::from_layouts(real)?, cfg.noise_std, &mut rng)?;
        trainer.generate(&z)?.to_layouts()?
    } else {
        trainer.sample(a.count, &mut rng)?
    };
    let path = a.out.join("layouts.json");
    write_layout_file(&layouts, &path)?;
    let n = write_images(&layouts, &cfg.render()?, &a.out, true)?;
    println!("wrote {} layouts and {n} images to {}", layouts.len(), a.out.display());
    Ok(())
}

fn render(a: &RenderArgs) -> CmdResult {
    require_file(&a.input)?;
    let cfg = RenderConfig::new(a.width, a.height).map_err(|e| Failure::Usage(e.to_string()))?;
    let layouts = read_layout_file(&a.input)?;
    write_manifest(&a.out, "render", 0, &serde_json::json!({ "in": a.input, "width": a.width, "height": a.height }))?;
    let n = write_images(&layouts, &cfg, &a.out, a.svg)?;
    println!("wrote {n} images to {}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    layouts: usize,
    overlap_index: Option<f64>,
    alignment_index: Option<f64>,
    mean_nearest_distance: Option<f64>,
}

fn eval(a: &EvalArgs) -> CmdResult {
    require_file(&a.input)?;
    if let Some(r) = &a.reference {
        require_file(r)?;
    }
    let layouts = read_layout_file(&a.input)?;
    write_manifest(&a.out, "eval", 0, &serde_json::json!({ "in": a.input, "reference": a.reference }))?;
    let boxes = layouts.iter().all(|l| matches!(l.kind(), GeomKind::Box | GeomKind::CenterBox));
    let (overlap, align) = if boxes && !layouts.is_empty() {
        let multi: Vec<Layout> = layouts.iter().filter(|l| l.len() >= 2).cloned().collect();
        (Some(overlap_index(&layouts)?), if multi.is_empty() { None } else { Some(alignment_index(&multi)?) })
    } else {
        (None, None)
    };
    let nearest = match &a.reference {
        Some(r) => {
            let corpus = read_layout_file(r)?;
            let mut total = 0.0;
            for l in &layouts {
                total += retrieve_nearest(l, &corpus, 1)?[0].distance;
            }
            Some(total / layouts.len().max(1) as f64)
        }
        None => None,
    };
    let report = EvalReport {
        layouts: layouts.len(),
        overlap_index: overlap,
        alignment_index: align,
        mean_nearest_distance: nearest,
    };
    write_json(&report, &a.out.join("eval.json"))?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?);
    Ok(())
}

fn gradcheck(a: &GradcheckArgs) -> CmdResult {
    if a.configs == 0 {
        return Err(Failure::Usage("configs must be at least 1".into()));
    }
    let check = GradCheck::default();
    write_manifest(
        &a.out,
        "gradcheck",
        a.seed,
        &serde_json::json!({ "configs": a.configs, "step": check.step, "kink_margin": check.kink_margin }),
    )?;
    let rows = gradient_suite(a.seed, a.configs, &check)?;
    let mut ok = true;
    for r in &rows {
        let pass = r.max_error < 1e-4;
        ok &= pass;
        println!(
            "{:<24} {:>4} configs  max rel err {:.3e}  {}",
            r.op,
            r.configs,
            r.max_error,
            if pass { "ok" } else { "FAIL" }
        );
    }
    write_json(&rows, &a.out.join("gradcheck.json"))?;
    if ok {
        Ok(())
    } else {
        Err(Failure::Runtime(Error::Config("gradient check exceeded 1e-4".into())))
    }
}

fn perturb(a: &PerturbArgs) -> CmdResult {
    let cfg = load_config(a.config.as_deref(), &a.overrides, Some(Experiment::Tangram))?;
    if !(a.noise_std >= 0.0) || a.count == 0 {
        return Err(Failure::Usage("noise_std must be non-negative and count at least 1".into()));
    }
    let cfg = TrainConfig { dataset_size: a.count, noise_std: a.noise_std, out_dir: Some(a.out.clone()), ..cfg };
    let real = synth_data(&cfg)?;
    let report = perturb_recover_train(&cfg, &real, a.noise_std)?;
    let last = report.log.last().and_then(|r| r.displacement);
    println!(
        "input displacement {:.5}  untrained {:.5}  trained {}",
        report.input_displacement.unwrap_or(f64::NAN),
        report.initial_displacement.unwrap_or(f64::NAN),
        last.map(|d| format!("{d:.5}")).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

#[derive(Serialize)]
struct Curve {
    run: PathBuf,
    discriminator: &'static str,
    points: Vec<(f64, f64)>,
    spearman: f64,
    total_variation: f64,
}

fn landscape(a: &LandscapeArgs) -> CmdResult {
    if a.steps < 2 || !(a.max_shift > 0.0) {
        return Err(Failure::Usage("need at least 2 steps and a positive max shift".into()));
    }
    let trainers = a.runs.iter().map(|r| open_run(r, None)).collect::<std::result::Result<Vec<_>, _>>()?;
    let first = trainers[0].config.clone();
    write_manifest(
        &a.out,
        "landscape",
        a.seed,
        &serde_json::json!({ "runs": a.runs, "max_shift": a.max_shift, "steps": a.steps, "samples": a.samples }),
    )?;
    let real = match &a.data {
        Some(d) => {
            require_file(d)?;
            read_layout_file(d)?
        }
        None => synth_data(&TrainConfig { dataset_size: a.samples, ..first })?,
    };
    let real = &real[..a.samples.min(real.len())];
    let mags: Vec<f64> = (0..a.steps).map(|k| a.max_shift * k as f64 / (a.steps - 1) as f64).collect();
    let mut curves = Vec::new();
    for (t, run) in trainers.iter().zip(&a.runs) {
        let data = crate::trainer::prepare_data(&t.config, real)?;
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let points = loss_landscape(&t.disc, &t.dis, &data, &mags, &mut rng)?;
        let (m, l): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        curves.push(Curve {
            run: run.clone(),
            discriminator: t.disc.config.name(),
            spearman: spearman(&m, &l)?,
            total_variation: total_variation(&l),
            points,
        });
    }
    for c in &curves {
        println!(
            "{:<10} spearman {:.4}  total variation {:.5}  ({})",
            c.discriminator,
            c.spearman,
            c.total_variation,
            c.run.display()
        );
    }
    let plot: Vec<(&str, &[(f64, f64)])> = curves.iter().map(|c| (c.discriminator, c.points.as_slice())).collect();
    export_landscape_svg(&plot, a.out.join("landscape.svg"))?;
    write_json(&curves, &a.out.join("landscape.json"))?;
    Ok(())
}
