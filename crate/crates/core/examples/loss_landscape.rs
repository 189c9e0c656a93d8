// Trains both discriminators briefly and sweeps the loss of real pages
// against rigid shifts of the whole page.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wirelayout::discriminator::{RelationDiscConfig, WireframeDiscConfig};
use wirelayout::generator::GeneratorConfig;
use wirelayout::metrics::{landscape_svg, loss_landscape, spearman, total_variation};
use wirelayout::trainer::{prepare_data, synth_data, train, DiscKind, Experiment, TrainConfig};
use wirelayout::Result;

pub struct LandscapeSummary {
    /// `(discriminator, spearman, total variation)`.
    pub curves: Vec<(&'static str, f64, f64)>,
    pub svg: String,
}

pub fn run_example() -> Result<LandscapeSummary> {
    let base = TrainConfig {
        experiment: Experiment::Docbox,
        width: 32,
        height: 32,
        batch_size: 8,
        iterations: 30,
        lr: 1e-4,
        init_std: 0.1,
        seed: 2,
        checkpoint_every: 0,
        log_every: 30,
        eval_samples: 8,
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
    let data = synth_data(&base)?;
    let magnitudes: Vec<f64> = (0..11).map(|k| k as f64 * 0.02).collect();
    let mut points = Vec::new();
    let mut curves = Vec::new();
    for kind in [DiscKind::Relation, DiscKind::Wireframe] {
        let cfg = TrainConfig { discriminator: kind, ..base.clone() };
        let report = train(&cfg, &data)?;
        let t = &report.trainer;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let real = prepare_data(&t.config, &data[..32])?;
        let curve = loss_landscape(&t.disc, &t.dis, &real, &magnitudes, &mut rng)?;
        let (x, y): (Vec<f64>, Vec<f64>) = curve.iter().copied().unzip();
        let (rho, tv) = (spearman(&x, &y)?, total_variation(&y));
        let name = t.disc.config.name();
        println!("{name:>9}: loss {:.4} → {:.4}, spearman {rho:.3}, total variation {tv:.4}", y[0], y[y.len() - 1]);
        curves.push((name, rho, tv));
        points.push((name, curve));
    }
    let refs: Vec<(&str, &[(f64, f64)])> = points.iter().map(|(n, c)| (*n, c.as_slice())).collect();
    let svg = landscape_svg(&refs);
    Ok(LandscapeSummary { curves, svg })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
