//! The seven tangram pieces, their eight poses, and a randomized arrangement
//! synthesizer.
//!
//! Piece geometry is kept in assembled-square units (the full set tiles a unit
//! square). On the canvas every piece is drawn at [`TANGRAM_SCALE`] around its
//! centroid.

use rand::Rng;

use crate::error::{Error, Result};
use crate::layout::{ClassSchema, Element, Geometry, Layout};

pub const PIECES: usize = 7;
pub const POSES: usize = 8;
pub const PIECE_NAMES: [&str; PIECES] =
    ["large-a", "large-b", "medium", "small-a", "small-b", "square", "parallelogram"];

/// Side of the assembled square as a fraction of the canvas.
pub const TANGRAM_SCALE: f64 = 0.35;

pub type Pt = [f64; 2];

/// Vertices of each piece in the canonical assembled square.
const DISSECTION: [&[Pt]; PIECES] = [
    &[[0.0, 0.0], [1.0, 0.0], [0.5, 0.5]],
    &[[0.0, 0.0], [0.5, 0.5], [0.0, 1.0]],
    &[[1.0, 0.5], [1.0, 1.0], [0.5, 1.0]],
    &[[1.0, 0.0], [1.0, 0.5], [0.75, 0.25]],
    &[[0.5, 0.5], [0.75, 0.75], [0.25, 0.75]],
    &[[0.5, 0.5], [0.75, 0.25], [1.0, 0.5], [0.75, 0.75]],
    &[[0.0, 1.0], [0.25, 0.75], [0.75, 0.75], [0.5, 1.0]],
];

fn vertex_mean(poly: &[Pt]) -> Pt {
    let n = poly.len() as f64;
    let (sx, sy) = poly.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    [sx / n, sy / n]
}

/// Where piece `piece` sits (vertex mean) in the assembled square.
pub fn canonical_center(piece: usize) -> Pt {
    vertex_mean(DISSECTION[piece])
}

/// Reflect (`pose >= 4`) then rotate by `90° * (pose % 4)`.
fn apply_pose(p: Pt, pose: usize) -> Pt {
    let mut q = if pose >= 4 { [-p[0], p[1]] } else { p };
    for _ in 0..pose % 4 {
        q = [-q[1], q[0]];
    }
    q
}

/// Piece outline in assembled-square units, centered on its vertex mean.
pub fn piece_polygon(piece: usize, pose: usize) -> Vec<Pt> {
    let c = canonical_center(piece);
    DISSECTION[piece].iter().map(|v| apply_pose([v[0] - c[0], v[1] - c[1]], pose)).collect()
}

/// The piece as rendering triangles; quads split along the `v0`-`v2` diagonal.
pub fn piece_triangles(piece: usize, pose: usize) -> Vec<[Pt; 3]> {
    let poly = piece_polygon(piece, pose);
    (1..poly.len() - 1).map(|k| [poly[0], poly[k], poly[k + 1]]).collect()
}

/// Every piece in every pose, as rendering triangles.
pub fn tangram_pieces() -> Vec<Vec<Vec<[Pt; 3]>>> {
    (0..PIECES).map(|piece| (0..POSES).map(|pose| piece_triangles(piece, pose)).collect()).collect()
}

/// Outline of a placed piece in canvas coordinates.
pub fn placed_polygon(piece: usize, pose: usize, x: f64, y: f64) -> Vec<Pt> {
    piece_polygon(piece, pose).into_iter().map(|v| [x + TANGRAM_SCALE * v[0], y + TANGRAM_SCALE * v[1]]).collect()
}

/// The seven canonical pieces at their canonical offsets, in unit-square coordinates.
pub fn assembled_square() -> Vec<Vec<Pt>> {
    DISSECTION.iter().map(|p| p.to_vec()).collect()
}

pub fn polygon_area(poly: &[Pt]) -> f64 {
    signed_area(poly).abs()
}

fn signed_area(poly: &[Pt]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

/// Area of the intersection of two convex polygons (Sutherland-Hodgman clip).
pub fn convex_intersection_area(subject: &[Pt], clip: &[Pt]) -> f64 {
    let orient = signed_area(clip).signum();
    let mut out = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if out.is_empty() {
            return 0.0;
        }
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        let side = |p: Pt| orient * ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]));
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (side(p), side(q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    if out.len() < 3 {
        0.0
    } else {
        polygon_area(&out)
    }
}

/// One element per piece, in piece order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlacedPiece {
    pub piece: usize,
    pub pose: usize,
    pub x: f64,
    pub y: f64,
}

impl PlacedPiece {
    pub fn polygon(&self) -> Vec<Pt> {
        placed_polygon(self.piece, self.pose, self.x, self.y)
    }
}

/// Overlap tolerance used when accepting a placement.
const PLACE_EPS: f64 = 1e-12;
/// Vertices stay this far inside the canvas.
const BORDER: f64 = 0.02;

/// Randomized rigid placement: each piece slides outward from a random placed
/// neighbour along a random direction until it no longer overlaps anything.
#[derive(Clone, Debug)]
pub struct TangramSynth {
    /// Number of distinct arrangements; layouts are jittered copies of these.
    pub designs: usize,
    /// Half-width of the uniform global shift applied to each copy.
    pub jitter: f64,
    pub max_tries: usize,
}

impl Default for TangramSynth {
    fn default() -> Self {
        TangramSynth { designs: 8, jitter: 0.03, max_tries: 200 }
    }
}

fn in_canvas(poly: &[Pt], margin: f64) -> bool {
    poly.iter().all(|v| v.iter().all(|&c| (margin..=1.0 - margin).contains(&c)))
}

fn bbox(pieces: &[PlacedPiece]) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for v in pieces.iter().flat_map(|p| p.polygon()) {
        b = [b[0].min(v[0]), b[1].min(v[1]), b[2].max(v[0]), b[3].max(v[1])];
    }
    b
}

impl TangramSynth {
    pub fn design<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<PlacedPiece>> {
        'attempt: for _ in 0..self.max_tries {
            let mut order: Vec<usize> = (0..PIECES).collect();
            for i in (1..PIECES).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let mut placed: Vec<PlacedPiece> = Vec::with_capacity(PIECES);
            for &piece in &order {
                let pose = rng.random_range(0..POSES);
                if placed.is_empty() {
                    placed.push(PlacedPiece { piece, pose, x: 0.5, y: 0.5 });
                    continue;
                }
                let anchor = placed[rng.random_range(0..placed.len())];
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let (dx, dy) = (angle.cos(), angle.sin());
                let mut d = 0.0;
                let found = loop {
                    let cand = PlacedPiece { piece, pose, x: anchor.x + d * dx, y: anchor.y + d * dy };
                    let poly = cand.polygon();
                    if !in_canvas(&poly, 0.0) {
                        break None;
                    }
                    if placed.iter().all(|p| convex_intersection_area(&poly, &p.polygon()) < PLACE_EPS) {
                        break Some(cand);
                    }
                    d += 0.005;
                };
                match found {
                    Some(c) => placed.push(c),
                    None => continue 'attempt,
                }
            }
            let b = bbox(&placed);
            let (sx, sy) = (0.5 - (b[0] + b[2]) / 2.0, 0.5 - (b[1] + b[3]) / 2.0);
            for p in &mut placed {
                p.x += sx;
                p.y += sy;
            }
            if placed.iter().all(|p| in_canvas(&p.polygon(), BORDER + self.jitter)) {
                placed.sort_by_key(|p| p.piece);
                return Ok(placed);
            }
        }
        Err(Error::GenerationFailed(format!("no overlap-free tangram arrangement after {} tries", self.max_tries)))
    }

    pub fn layouts<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<Layout>> {
        if count == 0 || self.designs == 0 {
            return Err(Error::InvalidDataset("tangram synthesis needs count and designs ≥ 1".into()));
        }
        let designs = (0..self.designs).map(|_| self.design(rng)).collect::<Result<Vec<_>>>()?;
        let schema = ClassSchema::tangram();
        (0..count)
            .map(|_| {
                let d = &designs[rng.random_range(0..designs.len())];
                let (sx, sy) = if self.jitter > 0.0 {
                    (rng.random_range(-self.jitter..=self.jitter), rng.random_range(-self.jitter..=self.jitter))
                } else {
                    (0.0, 0.0)
                };
                let elements = d
                    .iter()
                    .map(|p| {
                        Element::one_hot(
                            p.piece * POSES + p.pose,
                            PIECES * POSES,
                            Geometry::PosedPiece { x: p.x + sx, y: p.y + sy, pose: p.pose as u8, piece: p.piece as u8 },
                        )
                    })
                    .collect();
                Layout::new(schema.clone(), elements)
            })
            .collect()
    }
}

/// Tangram arrangements with the default synthesizer settings.
pub fn synth_tangram_layouts<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Result<Vec<Layout>> {
    TangramSynth::default().layouts(rng, count)
}

/// Canvas outlines of every element of a posed-piece layout.
pub fn layout_polygons(layout: &Layout) -> Vec<Vec<Pt>> {
    layout
        .elements()
        .iter()
        .filter_map(|e| match e.geom {
            Geometry::PosedPiece { x, y, pose, piece } => Some(placed_polygon(piece as usize, pose as usize, x, y)),
            _ => None,
        })
        .collect()
}
