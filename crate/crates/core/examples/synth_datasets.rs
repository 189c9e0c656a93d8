// Builds every procedural corpus and round-trips one through the layout
// interchange format.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wirelayout::data::{synth_clipart_layouts, synth_digit_dataset, synth_doc_layouts, synth_tangram_layouts};
use wirelayout::layout::{layouts_from_json, layouts_to_json};
use wirelayout::metrics::{alignment_index, overlap_index};
use wirelayout::Result;

pub struct SynthSummary {
    pub docs: usize,
    pub doc_overlap: f64,
    pub doc_alignment: f64,
    pub digits: usize,
    pub digit_labels: Vec<usize>,
    pub tangrams: usize,
    pub clipart: usize,
    pub round_trip_equal: bool,
}

pub fn run_example() -> Result<SynthSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let docs = synth_doc_layouts(&mut rng, 50, 9)?;
    let doc_overlap = overlap_index(&docs)?;
    let doc_alignment = alignment_index(&docs)?;
    println!("{} document pages, overlap {doc_overlap}, alignment {doc_alignment}", docs.len());

    let (digits, labels) = synth_digit_dataset(&mut rng, &[0, 1, 7], 30, 32)?;
    println!("{} stroke digits with {} points each", digits.len(), digits[0].len());

    let tangrams = synth_tangram_layouts(&mut rng, 10)?;
    println!("{} tangram designs with {} pieces each", tangrams.len(), tangrams[0].len());

    let clipart = synth_clipart_layouts(&mut rng, 10)?;
    println!("{} clipart scenes", clipart.len());

    let text = layouts_to_json(&docs[..3])?;
    let back = layouts_from_json(&text, None)?;
    let round_trip_equal = back == docs[..3];
    println!("json round trip of 3 pages: {}", if round_trip_equal { "identical" } else { "changed" });

    let mut digit_labels = labels.clone();
    digit_labels.sort_unstable();
    digit_labels.dedup();
    Ok(SynthSummary {
        docs: docs.len(),
        doc_overlap,
        doc_alignment,
        digits: digits.len(),
        digit_labels,
        tangrams: tangrams.len(),
        clipart: clipart.len(),
        round_trip_equal,
    })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
