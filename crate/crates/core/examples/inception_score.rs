// Trains the point-set digit classifier and scores real strokes against
// uniform noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wirelayout::data::synth_digit_dataset;
use wirelayout::metrics::{inception_score, train_classifier, ClassifierConfig};
use wirelayout::{ClassSchema, Element, Geometry, Layout, Result};

pub struct ScoreSummary {
    pub accuracy: f64,
    pub real: f64,
    pub noise: f64,
}

pub fn run_example() -> Result<ScoreSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let digits = [0, 1, 7];
    let (train_set, labels) = synth_digit_dataset(&mut rng, &digits, 300, 32)?;
    let cfg = ClassifierConfig { image_size: 16, hidden: vec![32], epochs: 30, ..Default::default() };
    let (clf, accuracy) = train_classifier(&train_set, &labels, &cfg)?;
    println!("classifier held-out accuracy {accuracy:.3}");

    let (real, _) = synth_digit_dataset(&mut rng, &digits, 120, 32)?;
    let noise: Vec<Layout> = (0..120)
        .map(|_| {
            let elements =
                (0..32).map(|_| Element::one_hot(0, 1, Geometry::Point { x: rng.random(), y: rng.random() })).collect();
            Layout::new(ClassSchema::points(), elements)
        })
        .collect::<Result<_>>()?;
    let (real_is, _) = inception_score(&real, &clf, 4)?;
    let (noise_is, _) = inception_score(&noise, &clf, 4)?;
    println!("inception score: real strokes {real_is:.3}, uniform noise {noise_is:.3} (upper bound {})", digits.len());
    Ok(ScoreSummary { accuracy, real: real_is, noise: noise_is })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
