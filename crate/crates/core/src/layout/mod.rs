//! Layout domain types: class schemas, element geometry, elements and layouts.
//!
//! All geometry lives in normalized page coordinates `[0, 1]²` with `y` growing
//! downward. Mapping to pixels belongs to the renderer.

mod batch;
mod io;

use std::fmt;
use std::sync::Arc;

pub use batch::{LayoutBatch, PieceId};
pub use io::{layouts_from_json, layouts_to_json, read_layout_file, read_layout_file_with_schema, write_layout_file};

use crate::error::{Error, Result};

/// Class names used by the document-layout experiments.
pub const DOCUMENT_CLASSES: [&str; 6] = ["heading", "paragraph", "table", "figure", "caption", "list"];

/// Class names used by the clipart-scene experiments.
pub const CLIPART_CLASSES: [&str; 6] = ["boy", "girl", "glasses", "hat", "sun", "tree"];

/// Ordered list of element class names.
#[derive(Clone, PartialEq, Eq)]
pub struct ClassSchema {
    names: Arc<[String]>,
}

impl ClassSchema {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Schema("schema needs at least one class".into()));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Schema(format!("class {i} has an empty name")));
            }
            if names[..i].contains(name) {
                return Err(Error::Schema(format!("duplicate class name {name:?}")));
            }
        }
        Ok(ClassSchema { names: names.into() })
    }

    pub fn documents() -> Self {
        Self::new(DOCUMENT_CLASSES).expect("static schema")
    }

    pub fn clipart() -> Self {
        Self::new(CLIPART_CLASSES).expect("static schema")
    }

    /// Single-class schema for point sets.
    pub fn points() -> Self {
        Self::new(["point"]).expect("static schema")
    }

    /// Piece-by-pose schema: class `piece * 8 + pose`.
    pub fn tangram() -> Self {
        let names = crate::data::PIECE_NAMES
            .iter()
            .flat_map(|piece| (0..crate::data::POSES).map(move |pose| format!("{piece}/{pose}")));
        Self::new(names).expect("static schema")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl fmt::Debug for ClassSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names.iter()).finish()
    }
}

/// Which geometry variant a layout uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeomKind {
    Point,
    Box,
    CenterBox,
    Triangle,
    PosedPiece,
}

impl GeomKind {
    /// Number of continuous parameters the networks see for this kind.
    pub fn param_count(self) -> usize {
        match self {
            GeomKind::Point => 2,
            GeomKind::Box => 4,
            GeomKind::CenterBox => 5,
            GeomKind::Triangle => 6,
            GeomKind::PosedPiece => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GeomKind::Point => "point",
            GeomKind::Box => "box",
            GeomKind::CenterBox => "centerbox",
            GeomKind::Triangle => "triangle",
            GeomKind::PosedPiece => "posedpiece",
        }
    }
}

/// Geometric parameters of one element, in normalized coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Geometry {
    Point {
        x: f64,
        y: f64,
    },
    Box {
        xl: f64,
        yt: f64,
        xr: f64,
        yb: f64,
    },
    /// Center, width, height and a relaxed flip flag in `[0, 1]`.
    CenterBox {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        flip: f64,
    },
    Triangle {
        v: [f64; 6],
    },
    /// A tangram piece (`0..7`) in one of eight poses, placed by its centroid.
    PosedPiece {
        x: f64,
        y: f64,
        pose: u8,
        piece: u8,
    },
}

impl Geometry {
    pub fn kind(&self) -> GeomKind {
        match self {
            Geometry::Point { .. } => GeomKind::Point,
            Geometry::Box { .. } => GeomKind::Box,
            Geometry::CenterBox { .. } => GeomKind::CenterBox,
            Geometry::Triangle { .. } => GeomKind::Triangle,
            Geometry::PosedPiece { .. } => GeomKind::PosedPiece,
        }
    }

    /// Continuous parameters in network order.
    pub fn params(&self) -> Vec<f64> {
        match *self {
            Geometry::Point { x, y } => vec![x, y],
            Geometry::Box { xl, yt, xr, yb } => vec![xl, yt, xr, yb],
            Geometry::CenterBox { x, y, w, h, flip } => vec![x, y, w, h, flip],
            Geometry::Triangle { v } => v.to_vec(),
            Geometry::PosedPiece { x, y, .. } => vec![x, y],
        }
    }

    /// Rebuilds a geometry of the same variant as `self` from new continuous parameters.
    /// Discrete fields (pose, piece) are kept.
    pub fn with_params(&self, v: &[f64]) -> Result<Geometry> {
        let want = self.kind().param_count();
        if v.len() != want {
            return Err(Error::Shape(format!(
                "{} geometry takes {want} parameters, got {}",
                self.kind().name(),
                v.len()
            )));
        }
        Ok(match *self {
            Geometry::Point { .. } => Geometry::Point { x: v[0], y: v[1] },
            Geometry::Box { .. } => Geometry::Box { xl: v[0], yt: v[1], xr: v[2], yb: v[3] },
            Geometry::CenterBox { .. } => Geometry::CenterBox { x: v[0], y: v[1], w: v[2], h: v[3], flip: v[4] },
            Geometry::Triangle { .. } => {
                let mut t = [0.0; 6];
                t.copy_from_slice(v);
                Geometry::Triangle { v: t }
            }
            Geometry::PosedPiece { pose, piece, .. } => Geometry::PosedPiece { x: v[0], y: v[1], pose, piece },
        })
    }

    /// Builds a geometry of a continuous kind from parameters. Posed pieces need
    /// their discrete identity and go through [`Geometry::with_params`] instead.
    pub fn from_params(kind: GeomKind, v: &[f64]) -> Result<Geometry> {
        let template = match kind {
            GeomKind::Point => Geometry::Point { x: 0.0, y: 0.0 },
            GeomKind::Box => Geometry::Box { xl: 0.0, yt: 0.0, xr: 0.0, yb: 0.0 },
            GeomKind::CenterBox => Geometry::CenterBox { x: 0.0, y: 0.0, w: 0.0, h: 0.0, flip: 0.0 },
            GeomKind::Triangle => Geometry::Triangle { v: [0.0; 6] },
            GeomKind::PosedPiece => {
                return Err(Error::InvalidGeometry("posed pieces carry a discrete pose and piece".into()))
            }
        };
        template.with_params(v)
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }

    /// Axis-aligned box `[xl, yt, xr, yb]` for box-like kinds.
    pub fn as_box(&self) -> Option<[f64; 4]> {
        match *self {
            Geometry::Box { xl, yt, xr, yb } => Some([xl.min(xr), yt.min(yb), xl.max(xr), yt.max(yb)]),
            Geometry::CenterBox { x, y, w, h, .. } => {
                let (hw, hh) = (w.abs() / 2.0, h.abs() / 2.0);
                Some([x - hw, y - hh, x + hw, y + hh])
            }
            _ => None,
        }
    }

    /// The same shape moved by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Geometry {
        match *self {
            Geometry::Point { x, y } => Geometry::Point { x: x + dx, y: y + dy },
            Geometry::Box { xl, yt, xr, yb } => Geometry::Box { xl: xl + dx, yt: yt + dy, xr: xr + dx, yb: yb + dy },
            Geometry::CenterBox { x, y, w, h, flip } => Geometry::CenterBox { x: x + dx, y: y + dy, w, h, flip },
            Geometry::Triangle { mut v } => {
                for k in 0..3 {
                    v[2 * k] += dx;
                    v[2 * k + 1] += dy;
                }
                Geometry::Triangle { v }
            }
            Geometry::PosedPiece { x, y, pose, piece } => Geometry::PosedPiece { x: x + dx, y: y + dy, pose, piece },
        }
    }

    /// Representative location used for displacement and retrieval.
    pub fn center(&self) -> (f64, f64) {
        match *self {
            Geometry::Point { x, y } => (x, y),
            Geometry::Box { xl, yt, xr, yb } => ((xl + xr) / 2.0, (yt + yb) / 2.0),
            Geometry::CenterBox { x, y, .. } | Geometry::PosedPiece { x, y, .. } => (x, y),
            Geometry::Triangle { v } => ((v[0] + v[2] + v[4]) / 3.0, (v[1] + v[3] + v[5]) / 3.0),
        }
    }
}

/// Swaps box corners so that `xl <= xr` and `yt <= yb`.
pub fn canonicalize_box(g: &Geometry) -> Result<Geometry> {
    match *g {
        Geometry::Box { xl, yt, xr, yb } => {
            if !g.is_finite() {
                return Err(Error::InvalidGeometry(format!("non-finite box {g:?}")));
            }
            Ok(Geometry::Box { xl: xl.min(xr), yt: yt.min(yb), xr: xl.max(xr), yb: yt.max(yb) })
        }
        _ => Err(Error::InvalidGeometry(format!("expected a box, got {}", g.kind().name()))),
    }
}

/// One graphic primitive: per-class probabilities plus geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    pub p: Vec<f64>,
    pub geom: Geometry,
}

impl Element {
    pub fn new(p: Vec<f64>, geom: Geometry) -> Self {
        Element { p, geom }
    }

    /// Element with a one-hot class vector.
    pub fn one_hot(class: usize, classes: usize, geom: Geometry) -> Self {
        let mut p = vec![0.0; classes];
        p[class] = 1.0;
        Element { p, geom }
    }

    /// Index of the largest class probability, lowest index on ties.
    pub fn argmax_class(&self) -> usize {
        let mut best = 0;
        for (c, &v) in self.p.iter().enumerate() {
            if v > self.p[best] {
                best = c;
            }
        }
        best
    }

    pub fn max_prob(&self) -> f64 {
        self.p.iter().copied().fold(0.0, f64::max)
    }
}

/// A set of elements under one class schema. Element order is storage order only.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    schema: ClassSchema,
    elements: Vec<Element>,
}

impl Layout {
    pub fn new(schema: ClassSchema, elements: Vec<Element>) -> Result<Self> {
        validate_elements(&schema, &elements)?;
        Ok(Layout { schema, elements })
    }

    pub fn schema(&self) -> &ClassSchema {
        &self.schema
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn kind(&self) -> GeomKind {
        self.elements[0].geom.kind()
    }

    pub fn into_elements(self) -> Vec<Element> {
        self.elements
    }

    /// Returns the layout with elements reordered so that new position `k`
    /// holds old element `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Layout {
        assert_eq!(perm.len(), self.elements.len(), "permutation length");
        Layout { schema: self.schema.clone(), elements: perm.iter().map(|&i| self.elements[i].clone()).collect() }
    }

    /// Every element moved by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Layout {
        Layout {
            schema: self.schema.clone(),
            elements: self.elements.iter().map(|e| Element::new(e.p.clone(), e.geom.translated(dx, dy))).collect(),
        }
    }

    /// Keeps only elements matching `keep`; errors if nothing remains.
    pub fn filtered(&self, keep: impl Fn(&Element) -> bool) -> Result<Layout> {
        let elements: Vec<Element> = self.elements.iter().filter(|e| keep(e)).cloned().collect();
        Layout::new(self.schema.clone(), elements)
    }
}

fn validate_elements(schema: &ClassSchema, elements: &[Element]) -> Result<()> {
    let Some(first) = elements.first() else {
        return Err(Error::Schema("a layout needs at least one element".into()));
    };
    let kind = first.geom.kind();
    for (i, e) in elements.iter().enumerate() {
        if e.p.len() != schema.len() {
            return Err(Error::Schema(format!(
                "element {i} has {} class probabilities, schema has {}",
                e.p.len(),
                schema.len()
            )));
        }
        if let Some(v) = e.p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Schema(format!("element {i} has probability {v} outside [0,1]")));
        }
        if e.geom.kind() != kind {
            return Err(Error::InvalidGeometry(format!(
                "element {i} is a {}, layout holds {}",
                e.geom.kind().name(),
                kind.name()
            )));
        }
        if !e.geom.is_finite() {
            return Err(Error::InvalidGeometry(format!("element {i} has non-finite geometry")));
        }
        if let Geometry::PosedPiece { pose, piece, .. } = e.geom {
            if piece as usize >= crate::data::PIECES || pose as usize >= crate::data::POSES {
                return Err(Error::InvalidGeometry(format!("element {i} has piece {piece} pose {pose} out of range")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(xl: f64, yt: f64, xr: f64, yb: f64) -> Geometry {
        Geometry::Box { xl, yt, xr, yb }
    }

    #[test]
    fn canonicalize_swaps_corners() {
        let g = bx(0.6, 0.2, 0.3, 0.5);
        assert_eq!(canonicalize_box(&g).unwrap(), bx(0.3, 0.2, 0.6, 0.5));
        let c = bx(0.1, 0.1, 0.4, 0.4);
        assert_eq!(canonicalize_box(&c).unwrap(), c);
    }

    #[test]
    fn canonicalize_rejects_nan() {
        let g = bx(f64::NAN, 0.0, 0.0, 0.0);
        assert!(matches!(canonicalize_box(&g), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn canonicalize_is_idempotent_and_keeps_area() {
        let g = bx(0.9, 0.7, 0.2, 0.1);
        let once = canonicalize_box(&g).unwrap();
        assert_eq!(canonicalize_box(&once).unwrap(), once);
        let area = |g: &Geometry| {
            let b = g.as_box().unwrap();
            (b[2] - b[0]) * (b[3] - b[1])
        };
        assert_eq!(area(&g), area(&once));
    }

    #[test]
    fn schema_rejects_duplicates_and_empty() {
        assert!(ClassSchema::new(Vec::<String>::new()).is_err());
        assert!(ClassSchema::new(["a", "a"]).is_err());
        assert!(ClassSchema::new(["a", ""]).is_err());
        assert_eq!(ClassSchema::tangram().len(), 56);
    }

    #[test]
    fn layout_invariants() {
        let s = ClassSchema::documents();
        assert!(matches!(Layout::new(s.clone(), vec![]), Err(Error::Schema(_))));
        let mixed = vec![
            Element::one_hot(0, 6, bx(0.0, 0.0, 0.5, 0.5)),
            Element::one_hot(0, 6, Geometry::Point { x: 0.1, y: 0.1 }),
        ];
        assert!(matches!(Layout::new(s.clone(), mixed), Err(Error::InvalidGeometry(_))));
        let bad_p = vec![Element::new(vec![1.5, 0.0, 0.0, 0.0, 0.0, 0.0], bx(0.0, 0.0, 0.1, 0.1))];
        assert!(Layout::new(s, bad_p).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let e = Element::new(vec![0.2, 0.7, 0.7], Geometry::Point { x: 0.0, y: 0.0 });
        assert_eq!(e.argmax_class(), 1);
    }
}
