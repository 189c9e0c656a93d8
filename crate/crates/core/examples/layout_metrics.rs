// Spatial scores of hand-made pages and nearest-neighbor retrieval.

use wirelayout::metrics::{alignment_index, layout_alignment, layout_overlap, retrieve_nearest, Neighbor};
use wirelayout::{ClassSchema, Element, Geometry, Layout, Result};

pub struct MetricsSummary {
    pub tidy: (f64, f64),
    pub messy: (f64, f64),
    pub corpus_alignment: f64,
    pub neighbors: Vec<Neighbor>,
}

fn page(boxes: &[[f64; 4]]) -> Result<Layout> {
    let elements = boxes
        .iter()
        .enumerate()
        .map(|(i, &[xl, yt, xr, yb])| Element::one_hot(i % 2, 2, Geometry::Box { xl, yt, xr, yb }))
        .collect();
    Layout::new(ClassSchema::new(["text", "image"])?, elements)
}

pub fn run_example() -> Result<MetricsSummary> {
    let tidy = page(&[[0.125, 0.125, 0.875, 0.25], [0.125, 0.375, 0.625, 0.75], [0.125, 0.8125, 0.875, 0.875]])?;
    let messy = page(&[[0.1, 0.1, 0.7, 0.3], [0.3, 0.2, 0.8, 0.6], [0.17, 0.65, 0.9, 0.9]])?;
    let score = |l: &Layout| -> Result<(f64, f64)> { Ok((layout_overlap(l)?, layout_alignment(l)?)) };
    let (t, m) = (score(&tidy)?, score(&messy)?);
    println!("tidy page:  overlap {:.4}  alignment {:.4}", t.0, t.1);
    println!("messy page: overlap {:.4}  alignment {:.4}", m.0, m.1);
    let corpus_alignment = alignment_index(&[tidy.clone(), messy.clone()])?;
    println!("alignment index over both: {corpus_alignment:.4}");

    let query = tidy.translated(0.01, 0.0);
    let neighbors = retrieve_nearest(&query, &[messy, tidy], 2)?;
    for n in &neighbors {
        println!("neighbor {} at chamfer distance {:.4}", n.index, n.distance);
    }
    Ok(MetricsSummary { tidy: t, messy: m, corpus_alignment, neighbors })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
