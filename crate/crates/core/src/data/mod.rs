//! Dataset construction: raster ingestion, procedural synthesizers and the
//! tangram piece set.

mod clipart;
mod digits;
mod docs;
mod idx;
mod tangram;

pub use clipart::{clipart_scene, synth_clipart_layouts, BOY, GIRL, GLASSES, GLASSES_SCALE, HAT, SUN, TREE};
pub use digits::{digit_skeleton, synth_digit_dataset, synth_digit_strokes, JITTER_TRUNCATION, STROKE_JITTER};
pub use docs::{synth_doc_layouts, DocSynth, CAPTION, FIGURE, HEADING, LIST, PARAGRAPH, TABLE};
pub use idx::{load_idx_images, parse_idx, points_from_raster, GrayImage, RasterSet};
pub use tangram::{
    assembled_square, canonical_center, convex_intersection_area, layout_polygons, piece_polygon, piece_triangles,
    placed_polygon, polygon_area, synth_tangram_layouts, tangram_pieces, PlacedPiece, Pt, TangramSynth, PIECES,
    PIECE_NAMES, POSES, TANGRAM_SCALE,
};

use crate::error::{Error, Result};
use crate::layout::{Element, Geometry, Layout};

/// Appends all-zero-probability elements until the layout has `n` elements.
/// Padding uses a degenerate geometry at the origin and renders to nothing.
pub fn pad_layout(layout: &Layout, n: usize) -> Result<Layout> {
    if layout.len() > n {
        return Err(Error::Shape(format!("layout has {} elements, pad target {n}", layout.len())));
    }
    let m = layout.schema().len();
    let filler = match layout.kind() {
        crate::layout::GeomKind::PosedPiece => {
            return Err(Error::InvalidGeometry("posed-piece layouts are never padded".into()))
        }
        kind => Geometry::from_params(kind, &vec![0.0; kind.param_count()])?,
    };
    let mut elements = layout.elements().to_vec();
    elements.resize(n, Element::new(vec![0.0; m], filler));
    Layout::new(layout.schema().clone(), elements)
}

/// Drops elements whose largest class probability is below `min_prob`.
/// `None` when nothing is left.
pub fn present_elements(layout: &Layout, min_prob: f64) -> Option<Layout> {
    layout.filtered(|e| e.max_prob() >= min_prob).ok()
}
