//! Procedural one-column document pages.
//!
//! Coordinates are generated on a 1/256 grid so that every sum and mean the
//! metrics take is exact in binary floating point: aligned pages then score
//! exactly zero on both the overlap and the alignment index.

use rand::Rng;

use crate::error::{Error, Result};
use crate::layout::{ClassSchema, Element, Geometry, Layout};

const GRID: i64 = 256;

pub const HEADING: usize = 0;
pub const PARAGRAPH: usize = 1;
pub const TABLE: usize = 2;
pub const FIGURE: usize = 3;
pub const CAPTION: usize = 4;
pub const LIST: usize = 5;

/// Size distributions in grid units (`0..=256`).
#[derive(Clone, Debug)]
pub struct DocSynth {
    pub max_boxes: usize,
    pub min_boxes: usize,
    /// `(min, max)` height per class.
    pub heights: [(i64, i64); 6],
    /// `(min, max)` width as a fraction of the column, per class.
    pub widths: [(f64, f64); 6],
    pub gap: (i64, i64),
}

impl Default for DocSynth {
    fn default() -> Self {
        DocSynth {
            max_boxes: 9,
            min_boxes: 2,
            heights: [(8, 14), (16, 44), (28, 56), (32, 64), (5, 9), (16, 36)],
            widths: [(0.35, 0.8), (1.0, 1.0), (0.7, 1.0), (0.5, 0.95), (0.4, 0.9), (0.6, 1.0)],
            gap: (3, 8),
        }
    }
}

/// Runs of classes that obey the page grammar: a heading is followed by a
/// paragraph or a table, a caption sits next to its figure or table.
const GROUPS: [&[usize]; 8] = [
    &[HEADING, PARAGRAPH],
    &[HEADING, TABLE],
    &[PARAGRAPH],
    &[LIST],
    &[FIGURE, CAPTION],
    &[TABLE, CAPTION],
    &[CAPTION, TABLE],
    &[PARAGRAPH, LIST],
];

fn q(v: i64) -> f64 {
    v as f64 / GRID as f64
}

impl DocSynth {
    fn classes<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let left = n - out.len();
            let fits: Vec<&[usize]> = GROUPS.iter().copied().filter(|g| g.len() <= left).collect();
            out.extend_from_slice(fits[rng.random_range(0..fits.len())]);
        }
        out
    }

    pub fn page<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Layout> {
        let n = rng.random_range(self.min_boxes..=self.max_boxes);
        let classes = self.classes(rng, n);
        let mut heights: Vec<i64> =
            classes.iter().map(|&c| rng.random_range(self.heights[c].0..=self.heights[c].1)).collect();
        let mut gaps: Vec<i64> = (1..n).map(|_| rng.random_range(self.gap.0..=self.gap.1)).collect();
        let (top, bottom) = (rng.random_range(10..=24), rng.random_range(10..=24));
        let room = GRID - top - bottom;
        // Shrink tallest boxes first until the stack fits.
        while heights.iter().sum::<i64>() + gaps.iter().sum::<i64>() > room {
            let i = (0..n).max_by_key(|&i| (heights[i], std::cmp::Reverse(i))).unwrap();
            if heights[i] > 4 {
                heights[i] -= 1;
            } else if let Some(g) = gaps.iter_mut().find(|g| **g > 1) {
                *g -= 1;
            } else {
                return Err(Error::GenerationFailed("document stack does not fit the page".into()));
            }
        }

        let margin = rng.random_range(16..=40);
        let column = GRID - 2 * margin;
        let centered = rng.random_bool(0.5);
        let mut y = top;
        let mut elements = Vec::with_capacity(n);
        for (i, &c) in classes.iter().enumerate() {
            let frac = rng.random_range(self.widths[c].0..=self.widths[c].1);
            // Even widths keep centered boxes on the grid.
            let w = (((column as f64 * frac) as i64) / 2 * 2).clamp(8, column);
            let (xl, xr) = if centered { (GRID / 2 - w / 2, GRID / 2 + w / 2) } else { (margin, margin + w) };
            let yb = y + heights[i];
            elements.push(Element::one_hot(c, 6, Geometry::Box { xl: q(xl), yt: q(y), xr: q(xr), yb: q(yb) }));
            y = yb + gaps.get(i).copied().unwrap_or(0);
        }
        Layout::new(ClassSchema::documents(), elements)
    }

    pub fn layouts<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<Layout>> {
        if count == 0 {
            return Err(Error::InvalidDataset("count must be at least 1".into()));
        }
        if self.min_boxes < 2 || self.min_boxes > self.max_boxes {
            return Err(Error::InvalidDataset(format!("box range {}..={} invalid", self.min_boxes, self.max_boxes)));
        }
        (0..count).map(|_| self.page(rng)).collect()
    }
}

/// Document pages with `2..=max_boxes` elements under the six document classes.
pub fn synth_doc_layouts<R: Rng + ?Sized>(rng: &mut R, count: usize, max_boxes: usize) -> Result<Vec<Layout>> {
    DocSynth { max_boxes, ..DocSynth::default() }.layouts(rng, count)
}
