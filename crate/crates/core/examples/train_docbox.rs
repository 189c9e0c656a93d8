// A short adversarial run on synthetic document pages with the wireframe
// discriminator, followed by sampling from the trained generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wirelayout::data::present_elements;
use wirelayout::discriminator::{RelationDiscConfig, WireframeDiscConfig};
use wirelayout::generator::GeneratorConfig;
use wirelayout::trainer::{synth_data, train, DiscKind, Experiment, LogRow, TrainConfig};
use wirelayout::Result;

pub struct TrainSummary {
    pub log: Vec<LogRow>,
    pub sampled: usize,
    pub present: usize,
}

pub fn run_example() -> Result<TrainSummary> {
    let cfg = TrainConfig {
        experiment: Experiment::Docbox,
        discriminator: DiscKind::Wireframe,
        width: 32,
        height: 32,
        batch_size: 8,
        iterations: 20,
        lr: 5e-5,
        init_std: 0.1,
        seed: 4,
        checkpoint_every: 0,
        log_every: 5,
        eval_samples: 16,
        dataset_size: 64,
        generator: GeneratorConfig {
            embed_dim: 16,
            encoder_widths: vec![16],
            decoder_widths: vec![16],
            ..Default::default()
        },
        relation_disc: RelationDiscConfig { encoder_widths: vec![16], head_widths: vec![16], ..Default::default() },
        wireframe_disc: WireframeDiscConfig { channels: vec![4, 8, 8], kernel: 3, stride: 2, pad: 1 },
        ..Default::default()
    };
    let data = synth_data(&cfg)?;
    let report = train(&cfg, &data)?;
    println!("iter   d_loss   g_loss  overlap  align");
    for r in &report.log {
        let show = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:>4} {:>8.4} {:>8.4} {:>8} {:>6}",
            r.iter,
            r.d_loss,
            r.g_loss,
            show(r.overlap_idx),
            show(r.align_idx)
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples = report.trainer.sample(4, &mut rng)?;
    let present = samples.iter().filter_map(|l| present_elements(l, cfg.presence_threshold)).map(|l| l.len()).sum();
    println!("{} sampled pages, {present} elements above the presence threshold", samples.len());
    Ok(TrainSummary { log: report.log, sampled: samples.len(), present })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
