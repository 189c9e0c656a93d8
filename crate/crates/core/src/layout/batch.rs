use super::{ClassSchema, Element, GeomKind, Geometry, Layout};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Discrete identity of a tangram element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PieceId {
    pub piece: u8,
    pub pose: u8,
}

/// Equal-sized layouts packed as `p: [B,N,M]` and `geom: [B,N,G]` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutBatch {
    pub schema: ClassSchema,
    pub kind: GeomKind,
    pub p: Tensor,
    pub geom: Tensor,
    /// Per element (`B*N`), present for posed pieces only.
    pub pieces: Vec<Option<PieceId>>,
}

impl LayoutBatch {
    pub fn from_layouts(layouts: &[Layout]) -> Result<Self> {
        let first = layouts.first().ok_or_else(|| Error::InvalidDataset("empty batch".into()))?;
        let (schema, kind, n) = (first.schema().clone(), first.kind(), first.len());
        let (m, g) = (schema.len(), kind.param_count());
        let mut p = Vec::with_capacity(layouts.len() * n * m);
        let mut geom = Vec::with_capacity(layouts.len() * n * g);
        let mut pieces = Vec::with_capacity(layouts.len() * n);
        for (i, l) in layouts.iter().enumerate() {
            if l.schema() != &schema || l.kind() != kind || l.len() != n {
                return Err(Error::Schema(format!(
                    "layout {i} does not match the batch ({} {}, N={n})",
                    schema.len(),
                    kind.name()
                )));
            }
            for e in l.elements() {
                p.extend_from_slice(&e.p);
                geom.extend(e.geom.params());
                pieces.push(match e.geom {
                    Geometry::PosedPiece { piece, pose, .. } => Some(PieceId { piece, pose }),
                    _ => None,
                });
            }
        }
        let b = layouts.len();
        Ok(LayoutBatch {
            schema,
            kind,
            p: Tensor::new(vec![b, n, m], p)?,
            geom: Tensor::new(vec![b, n, g], geom)?,
            pieces,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.p.shape()[0]
    }

    pub fn elements_per_layout(&self) -> usize {
        self.p.shape()[1]
    }

    pub fn classes(&self) -> usize {
        self.p.shape()[2]
    }

    /// Same discrete structure with new probability and geometry values.
    pub fn with_values(&self, p: Tensor, geom: Tensor) -> Result<Self> {
        if p.shape() != self.p.shape() || geom.shape() != self.geom.shape() {
            return Err(Error::Shape(format!(
                "batch values {:?}/{:?} for {:?}/{:?}",
                p.shape(),
                geom.shape(),
                self.p.shape(),
                self.geom.shape()
            )));
        }
        Ok(LayoutBatch { p, geom, ..self.clone() })
    }

    pub fn to_layouts(&self) -> Result<Vec<Layout>> {
        let (b, n, m) = (self.batch_size(), self.elements_per_layout(), self.classes());
        let g = self.kind.param_count();
        (0..b)
            .map(|bi| {
                let elements = (0..n)
                    .map(|i| {
                        let row = bi * n + i;
                        let p = self.p.data()[row * m..(row + 1) * m].to_vec();
                        let v = &self.geom.data()[row * g..(row + 1) * g];
                        let geom = match self.pieces[row] {
                            Some(PieceId { piece, pose }) => Geometry::PosedPiece { x: v[0], y: v[1], pose, piece },
                            None => Geometry::from_params(self.kind, v)?,
                        };
                        Ok(Element::new(p, geom))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Layout::new(self.schema.clone(), elements)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_and_unpack() {
        let s = ClassSchema::documents();
        let l = Layout::new(
            s,
            vec![
                Element::one_hot(1, 6, Geometry::Box { xl: 0.1, yt: 0.2, xr: 0.3, yb: 0.4 }),
                Element::one_hot(4, 6, Geometry::Box { xl: 0.5, yt: 0.6, xr: 0.7, yb: 0.8 }),
            ],
        )
        .unwrap();
        let b = LayoutBatch::from_layouts(&[l.clone(), l.clone()]).unwrap();
        assert_eq!(b.p.shape(), &[2, 2, 6]);
        assert_eq!(b.geom.shape(), &[2, 2, 4]);
        assert_eq!(b.to_layouts().unwrap(), vec![l.clone(), l]);
    }

    #[test]
    fn ragged_batches_are_rejected() {
        let s = ClassSchema::points();
        let one = Layout::new(s.clone(), vec![Element::one_hot(0, 1, Geometry::Point { x: 0.0, y: 0.0 })]).unwrap();
        let two = Layout::new(
            s,
            vec![
                Element::one_hot(0, 1, Geometry::Point { x: 0.0, y: 0.0 }),
                Element::one_hot(0, 1, Geometry::Point { x: 1.0, y: 0.0 }),
            ],
        )
        .unwrap();
        assert!(LayoutBatch::from_layouts(&[one, two]).is_err());
    }
}
