//! Adversarial training: parameter initialization, the alternating
//! discriminator/generator step, checkpoints, metric logs and the tangram
//! perturbation-recovery regime.

mod config;

pub use config::{DiscKind, Experiment, TrainConfig};

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::autodiff::{checkpoint, AdamConfig, Graph, NodeId, ParamStore, Tensor};
use crate::data::{
    pad_layout, present_elements, synth_clipart_layouts, synth_digit_dataset, synth_doc_layouts, synth_tangram_layouts,
};
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::generator::{self, generate, init_generator, sample_z_tensors, GeneratorConfig};
use crate::layout::{GeomKind, Layout, LayoutBatch};
use crate::metrics::{alignment_index, mean_displacement, overlap_index};
use crate::render::ElementKinds;

const ITERATION_KEY: &str = "trainer/iteration";
const EVAL_STREAM: u64 = u64::MAX;
const INIT_STREAM: u64 = 0;

/// `0.5·(BCE(real, 1) + BCE(fake, 0))`.
pub fn discriminator_loss(g: &mut Graph, real_logits: NodeId, fake_logits: NodeId) -> Result<NodeId> {
    let r = g.bce_with_logits(real_logits, 1.0);
    let f = g.bce_with_logits(fake_logits, 0.0);
    let s = g.add(r, f)?;
    Ok(g.scale(s, 0.5))
}

/// Non-saturating generator loss `BCE(fake, 1) = −log D(G(z))`.
pub fn generator_loss(g: &mut Graph, fake_logits: NodeId) -> NodeId {
    g.bce_with_logits(fake_logits, 1.0)
}

/// Deterministic stream for iteration `iter` of a run seeded with `seed`.
pub fn iteration_rng(seed: u64, iter: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(iter as u64 + 1);
    r
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Synthesizes the experiment's training corpus from `cfg.seed`.
pub fn synth_data(cfg: &TrainConfig) -> Result<Vec<Layout>> {
    let mut rng = stream_rng(cfg.seed, EVAL_STREAM - 1);
    let n = cfg.dataset_size;
    match cfg.experiment {
        Experiment::Points => Ok(synth_digit_dataset(&mut rng, &cfg.digits, n, cfg.resolved()?.n_elements)?.0),
        Experiment::Docbox => synth_doc_layouts(&mut rng, n, cfg.resolved()?.n_elements),
        Experiment::Clipart => synth_clipart_layouts(&mut rng, n),
        Experiment::Tangram => synth_tangram_layouts(&mut rng, n),
    }
}

/// Checks schema and kind against the config and pads every layout to `N`.
pub fn prepare_data(cfg: &TrainConfig, data: &[Layout]) -> Result<Vec<Layout>> {
    if data.is_empty() {
        return Err(Error::InvalidDataset("no training layouts".into()));
    }
    let schema = cfg.experiment.schema();
    let kind = cfg.experiment.kind();
    data.iter()
        .enumerate()
        .map(|(i, l)| {
            if l.schema() != &schema || l.kind() != kind {
                return Err(Error::Schema(format!(
                    "layout {i} is not a {} {} layout",
                    cfg.experiment.name(),
                    kind.name()
                )));
            }
            if l.len() == cfg.n_elements {
                Ok(l.clone())
            } else {
                pad_layout(l, cfg.n_elements)
            }
        })
        .collect()
}

/// Adds `N(0, std²)` to every location coordinate; discrete identities stay.
pub fn perturb_locations<R: Rng + ?Sized>(batch: &LayoutBatch, std: f64, rng: &mut R) -> Result<LayoutBatch> {
    if std == 0.0 {
        return Ok(batch.clone());
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
    let mut geom = batch.geom.clone();
    for v in geom.data_mut() {
        *v += Distribution::<f64>::sample(&normal, rng);
    }
    batch.with_values(batch.p.clone(), geom)
}

/// Losses of one alternating step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepLosses {
    pub d_loss: f64,
    pub g_loss: f64,
}

/// One metric-log row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub overlap_idx: Option<f64>,
    pub align_idx: Option<f64>,
    pub displacement: Option<f64>,
}

/// Generator, discriminator and their optimizer state.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub disc: Discriminator,
    pub gen: ParamStore,
    pub dis: ParamStore,
    /// Completed iterations.
    pub iteration: usize,
}

impl Trainer {
    /// Fresh parameters: weights `N(0, init_std²)`, zero biases.
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        let config = cfg.resolved()?;
        let disc = Discriminator::new(config.discriminator_config(), config.disc_input()?)?;
        let mut rng = stream_rng(config.seed, INIT_STREAM);
        let gen = init_generator(&config.generator, config.init_std, &mut rng)?;
        let dis = disc.init(config.init_std, &mut rng);
        Ok(Trainer { config, disc, gen, dis, iteration: 0 })
    }

    pub fn gen_config(&self) -> &GeneratorConfig {
        &self.config.generator
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.config.lr, beta1: self.config.beta1, beta2: self.config.beta2, eps: 1e-8 }
    }

    fn is_recovery(&self) -> bool {
        self.config.experiment == Experiment::Tangram
    }

    /// Generator input for a real batch: perturbed copies in the recovery
    /// regime, random element sets otherwise.
    pub fn sample_input<R: Rng + ?Sized>(&self, real: &LayoutBatch, rng: &mut R) -> Result<LayoutBatch> {
        if self.is_recovery() {
            return perturb_locations(real, self.config.noise_std, rng);
        }
        let (p, geom) = sample_z_tensors(rng, self.gen_config(), real.batch_size());
        real.with_values(p, geom)
    }

    /// Generator forward pass; class vectors stay frozen in the recovery regime.
    fn generate_nodes(&self, g: &mut Graph, z: &LayoutBatch) -> Result<(NodeId, NodeId)> {
        let zp = g.constant(z.p.clone());
        let zg = g.constant(z.geom.clone());
        let (p, geom) = generate(g, &self.gen, self.gen_config(), zp, zg)?;
        Ok((if self.is_recovery() { zp } else { p }, geom))
    }

    pub fn generate(&self, z: &LayoutBatch) -> Result<LayoutBatch> {
        let mut g = Graph::new();
        let (p, geom) = self.generate_nodes(&mut g, z)?;
        z.with_values(g.value(p).clone(), g.value(geom).clone())
    }

    /// Layouts from fresh random input, `count` of them.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<Layout>> {
        if self.is_recovery() {
            return Err(Error::Config("tangram generation needs real layouts to perturb".into()));
        }
        let schema = self.config.experiment.schema();
        let kind = self.config.experiment.kind();
        let z = (0..count)
            .map(|_| generator::sample_z(rng, self.gen_config(), &schema, kind))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(count);
        for chunk in z.chunks(64) {
            out.extend(self.generate(&LayoutBatch::from_layouts(chunk)?)?.to_layouts()?);
        }
        Ok(out)
    }

    /// One discriminator update on real vs generated, then one generator update.
    pub fn gan_step<R: Rng + ?Sized>(&mut self, real: &LayoutBatch, rng: &mut R) -> Result<StepLosses> {
        let z = self.sample_input(real, rng)?;
        let kinds = ElementKinds::of_batch(real);
        let adam = self.adam();
        let prefix = format!("{}/", self.disc.prefix());

        let fake = self.generate(&z)?;
        let mut g = Graph::new();
        let rp = g.constant(real.p.clone());
        let rg = g.constant(real.geom.clone());
        let fp = g.constant(fake.p.clone());
        let fg = g.constant(fake.geom.clone());
        let real_logits = self.disc.logits(&mut g, &self.dis, rp, rg, &kinds)?;
        let fake_logits = self.disc.logits(&mut g, &self.dis, fp, fg, &kinds)?;
        let d = discriminator_loss(&mut g, real_logits, fake_logits)?;
        let d_loss = g.value(d).item();
        if !d_loss.is_finite() {
            return Err(self.diverged());
        }
        let grads = g.backward(d)?.params_with_prefix(&prefix);
        adam.step(&mut self.dis, &grads)?;

        let mut g = Graph::new();
        g.freeze_params(prefix);
        let (p, geom) = self.generate_nodes(&mut g, &z)?;
        let logits = self.disc.logits(&mut g, &self.dis, p, geom, &kinds)?;
        let gl = generator_loss(&mut g, logits);
        let g_loss = g.value(gl).item();
        if !g_loss.is_finite() {
            return Err(self.diverged());
        }
        let grads = g.backward(gl)?.params_with_prefix(&format!("{}/", generator::PREFIX));
        adam.step(&mut self.gen, &grads)?;
        if !self.gen.all_finite() || !self.dis.all_finite() {
            return Err(self.diverged());
        }
        Ok(StepLosses { d_loss, g_loss })
    }

    fn diverged(&self) -> Error {
        Error::TrainingDiverged { iteration: self.iteration, checkpoint: None }
    }

    /// Samples a real batch with the iteration's stream and runs [`Trainer::gan_step`].
    pub fn step(&mut self, data: &[Layout]) -> Result<StepLosses> {
        let mut rng = iteration_rng(self.config.seed, self.iteration);
        let picks: Vec<Layout> =
            (0..self.config.batch_size).map(|_| data[rng.random_range(0..data.len())].clone()).collect();
        let real = LayoutBatch::from_layouts(&picks)?;
        let losses = self.gan_step(&real, &mut rng)?;
        self.iteration += 1;
        Ok(losses)
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut t = self.gen.to_named_tensors();
        t.extend(self.dis.to_named_tensors());
        t.push((ITERATION_KEY.to_string(), Tensor::vector(vec![self.iteration as f64])));
        t
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(path, &self.named_tensors())
    }

    /// Restores parameters, optimizer state and the iteration counter.
    pub fn from_checkpoint(cfg: &TrainConfig, path: impl AsRef<Path>) -> Result<Self> {
        let mut t = Trainer::new(cfg)?;
        let named = checkpoint::load(path)?;
        let gen = ParamStore::from_named_tensors(&named, &format!("{}/", generator::PREFIX))?;
        let dis = ParamStore::from_named_tensors(&named, &format!("{}/", t.disc.prefix()))?;
        for (fresh, loaded, what) in [(&t.gen, &gen, "generator"), (&t.dis, &dis, "discriminator")] {
            let same = fresh.len() == loaded.len()
                && fresh.iter().all(|(n, p)| loaded.value(n).map(|v| v.shape()) == Some(p.value.shape()));
            if !same {
                return Err(Error::Format(format!("checkpoint {what} parameters do not match the config")));
            }
        }
        let iteration = named
            .iter()
            .find(|(n, _)| n == ITERATION_KEY)
            .map(|(_, v)| v.item() as usize)
            .ok_or_else(|| Error::Format("checkpoint lacks the iteration counter".into()))?;
        t.gen = gen;
        t.dis = dis;
        t.iteration = iteration;
        Ok(t)
    }
}

/// Fixed evaluation inputs: random sets, or perturbed real layouts for recovery.
struct Evaluator {
    z: Vec<LayoutBatch>,
    truth: Vec<Layout>,
}

impl Evaluator {
    fn new(trainer: &Trainer, data: &[Layout]) -> Result<Self> {
        let cfg = &trainer.config;
        let mut rng = stream_rng(cfg.seed, EVAL_STREAM);
        let mut z = Vec::new();
        let mut truth = Vec::new();
        if trainer.is_recovery() {
            let n = cfg.eval_samples.min(data.len());
            truth = data[..n].to_vec();
            for chunk in truth.chunks(64) {
                z.push(perturb_locations(&LayoutBatch::from_layouts(chunk)?, cfg.noise_std, &mut rng)?);
            }
        } else {
            let schema = cfg.experiment.schema();
            let kind = cfg.experiment.kind();
            let all = (0..cfg.eval_samples)
                .map(|_| generator::sample_z(&mut rng, &cfg.generator, &schema, kind))
                .collect::<Result<Vec<_>>>()?;
            for chunk in all.chunks(64) {
                z.push(LayoutBatch::from_layouts(chunk)?);
            }
        }
        Ok(Evaluator { z, truth })
    }

    fn generated(&self, trainer: &Trainer) -> Result<Vec<Layout>> {
        let mut out = Vec::new();
        for z in &self.z {
            out.extend(trainer.generate(z)?.to_layouts()?);
        }
        Ok(out)
    }

    /// `(overlap, alignment, displacement)` for the current parameters.
    fn metrics(&self, trainer: &Trainer) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
        let generated = self.generated(trainer)?;
        if trainer.is_recovery() {
            return Ok((None, None, Some(mean_displacement(&generated, &self.truth)?)));
        }
        if !matches!(trainer.config.experiment.kind(), GeomKind::Box | GeomKind::CenterBox) {
            return Ok((None, None, None));
        }
        let (overlap, align) = box_metrics(&generated, trainer.config.presence_threshold)?;
        Ok((overlap, align, None))
    }
}

/// Overlap over layouts with a present element and alignment over layouts
/// with at least two; `None` when no layout qualifies.
pub fn box_metrics(layouts: &[Layout], presence: f64) -> Result<(Option<f64>, Option<f64>)> {
    let present: Vec<Layout> = layouts.iter().filter_map(|l| present_elements(l, presence)).collect();
    let pairs: Vec<Layout> = present.iter().filter(|l| l.len() >= 2).cloned().collect();
    let overlap = if present.is_empty() { None } else { Some(overlap_index(&present)?) };
    let align = if pairs.is_empty() { None } else { Some(alignment_index(&pairs)?) };
    Ok((overlap, align))
}

/// What a training run produced.
#[derive(Debug)]
pub struct TrainReport {
    pub trainer: Trainer,
    pub log: Vec<LogRow>,
    pub checkpoints: Vec<PathBuf>,
    /// Mean displacement of the perturbed evaluation inputs (recovery regime).
    pub input_displacement: Option<f64>,
    /// Mean displacement of the untrained generator's output (recovery regime).
    pub initial_displacement: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Format(format!("{}: {e}", path.display()))
}

pub const LOG_HEADER: [&str; 6] = ["iter", "d_loss", "g_loss", "overlap_idx", "align_idx", "displacement"];

/// Run provenance written next to every output.
#[derive(Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub checkpoint_format: &'static str,
    pub config: &'a C,
}

pub fn write_manifest<C: Serialize>(dir: &Path, command: &str, seed: u64, config: &C) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let m = Manifest {
        tool: "wirelayout",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        checkpoint_format: std::str::from_utf8(checkpoint::MAGIC).expect("ascii"),
        config,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(io_err(&path))
}

/// Runs the remaining iterations of `trainer` on `data`, logging every
/// `log_every` iterations and checkpointing every `checkpoint_every`.
pub fn run(mut trainer: Trainer, data: &[Layout]) -> Result<TrainReport> {
    let cfg = trainer.config.clone();
    let data = prepare_data(&cfg, data)?;
    let eval = Evaluator::new(&trainer, &data)?;
    let (input_displacement, initial_displacement) = if trainer.is_recovery() {
        let inputs: Vec<Layout> = eval.z.iter().map(|z| z.to_layouts()).collect::<Result<Vec<_>>>()?.concat();
        (Some(mean_displacement(&inputs, &eval.truth)?), eval.metrics(&trainer)?.2)
    } else {
        (None, None)
    };

    let mut writer = match &cfg.out_dir {
        Some(dir) => {
            // The output location is not part of the run's identity.
            write_manifest(dir, "train", cfg.seed, &TrainConfig { out_dir: None, ..cfg.clone() })?;
            let path = dir.join("metrics.csv");
            let fresh = trainer.iteration == 0 || !path.exists();
            let file = std::fs::OpenOptions::new()
                .create(true)
                .append(!fresh)
                .write(true)
                .truncate(fresh)
                .open(&path)
                .map_err(io_err(&path))?;
            let mut w = csv::Writer::from_writer(file);
            if fresh {
                w.write_record(LOG_HEADER).map_err(csv_err(&path))?;
            }
            Some((w, path))
        }
        None => None,
    };

    let mut log = Vec::new();
    let mut checkpoints = Vec::new();
    while trainer.iteration < cfg.iterations {
        let before = (trainer.gen.clone(), trainer.dis.clone(), trainer.iteration);
        let losses = match trainer.step(&data) {
            Ok(l) => l,
            Err(Error::TrainingDiverged { iteration, .. }) => {
                let checkpoint = match &cfg.out_dir {
                    Some(dir) => {
                        let mut good = trainer.clone();
                        (good.gen, good.dis, good.iteration) = before;
                        let path = dir.join(format!("diverged_{iteration:06}.ckpt"));
                        good.save_checkpoint(&path)?;
                        Some(path)
                    }
                    None => None,
                };
                return Err(Error::TrainingDiverged { iteration, checkpoint });
            }
            Err(e) => return Err(e),
        };
        let it = trainer.iteration;
        if it % cfg.log_every == 0 {
            let (overlap_idx, align_idx, displacement) = eval.metrics(&trainer)?;
            let row =
                LogRow { iter: it, d_loss: losses.d_loss, g_loss: losses.g_loss, overlap_idx, align_idx, displacement };
            if let Some((w, path)) = writer.as_mut() {
                w.write_record([
                    it.to_string(),
                    row.d_loss.to_string(),
                    row.g_loss.to_string(),
                    fmt_opt(overlap_idx),
                    fmt_opt(align_idx),
                    fmt_opt(displacement),
                ])
                .map_err(csv_err(path))?;
                w.flush().map_err(io_err(path))?;
            }
            log.push(row);
        }
        let due = cfg.checkpoint_every > 0 && (it % cfg.checkpoint_every == 0 || it == cfg.iterations);
        if let (true, Some(dir)) = (due, &cfg.out_dir) {
            let path = dir.join(format!("ckpt_{it:06}.ckpt"));
            trainer.save_checkpoint(&path)?;
            checkpoints.push(path);
        }
    }
    Ok(TrainReport { trainer, log, checkpoints, input_displacement, initial_displacement })
}

/// Trains from scratch on `data`.
pub fn train(cfg: &TrainConfig, data: &[Layout]) -> Result<TrainReport> {
    run(Trainer::new(cfg)?, data)
}

/// Tangram recovery: the generator sees real layouts with locations displaced
/// by `N(0, noise_std²)` and is trained adversarially against real layouts.
pub fn perturb_recover_train(cfg: &TrainConfig, real: &[Layout], noise_std: f64) -> Result<TrainReport> {
    if real.iter().any(|l| l.kind() != GeomKind::PosedPiece) {
        return Err(Error::InvalidGeometry("recovery training needs posed-piece layouts".into()));
    }
    let cfg = TrainConfig { experiment: Experiment::Tangram, noise_std, ..cfg.clone() };
    train(&cfg, real)
}

#[cfg(test)]
mod tests;
