// The generator and both discriminators treat a layout as a set: permuting
// the input elements permutes the generator output the same way and leaves
// every discriminator score unchanged.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wirelayout::data::synth_doc_layouts;
use wirelayout::discriminator::{
    DiscInput, Discriminator, DiscriminatorConfig, RelationDiscConfig, WireframeDiscConfig,
};
use wirelayout::generator::{generate_layout, init_generator, sample_z, GeneratorConfig};
use wirelayout::render::RenderConfig;
use wirelayout::{ClassSchema, GeomKind, Result};

pub struct SetSummary {
    pub generator_equivariant: bool,
    pub relation_scores: (f64, f64),
    pub wireframe_scores: (f64, f64),
}

pub fn run_example() -> Result<SetSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let schema = ClassSchema::documents();
    let cfg = GeneratorConfig {
        classes: 6,
        geom_dim: 4,
        n_elements: 9,
        embed_dim: 32,
        encoder_widths: vec![32],
        decoder_widths: vec![32],
        ..Default::default()
    };
    let store = init_generator(&cfg, 0.1, &mut rng)?;
    let z = sample_z(&mut rng, &cfg, &schema, GeomKind::Box)?;
    let mut perm: Vec<usize> = (0..z.len()).collect();
    perm.shuffle(&mut rng);

    let out = generate_layout(&store, &cfg, &z)?;
    let out_perm = generate_layout(&store, &cfg, &z.permuted(&perm))?;
    let generator_equivariant = out.permuted(&perm) == out_perm;
    println!("generator output follows the input permutation: {generator_equivariant}");

    let page = synth_doc_layouts(&mut rng, 1, 9)?.remove(0);
    let mut order: Vec<usize> = (0..page.len()).collect();
    order.shuffle(&mut rng);
    let shuffled = page.permuted(&order);
    let input = DiscInput { classes: 6, geom_dim: 4, render: RenderConfig::square(32)? };
    let mut scores = Vec::new();
    for config in [
        DiscriminatorConfig::Relation(RelationDiscConfig {
            encoder_widths: vec![32],
            head_widths: vec![16],
            ..Default::default()
        }),
        DiscriminatorConfig::Wireframe(WireframeDiscConfig { channels: vec![4, 8, 8], kernel: 3, stride: 2, pad: 1 }),
    ] {
        let d = Discriminator::new(config, input.clone())?;
        let params = d.init(0.1, &mut rng);
        let (a, b) = (d.score(&params, &page)?, d.score(&params, &shuffled)?);
        println!("{:>9} discriminator: {a:.12} original, {b:.12} shuffled", d.config.name());
        scores.push((a, b));
    }
    Ok(SetSummary { generator_equivariant, relation_scores: scores[0], wireframe_scores: scores[1] })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
