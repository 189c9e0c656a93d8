use crate::error::{Error, Result};
use crate::layout::Layout;

/// One retrieved corpus entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

fn descriptors(layout: &Layout) -> Vec<(usize, Vec<f64>)> {
    layout.elements().iter().filter(|e| e.max_prob() > 0.0).map(|e| (e.argmax_class(), e.geom.params())).collect()
}

fn one_way(a: &[(usize, Vec<f64>)], b: &[(usize, Vec<f64>)]) -> f64 {
    let mut total = 0.0;
    for (ca, ga) in a {
        let best = b
            .iter()
            .filter(|(cb, _)| cb == ca)
            .map(|(_, gb)| ga.iter().zip(gb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        total += best;
    }
    total / a.len() as f64
}

/// Symmetric class-aware Chamfer distance: each element is matched to the
/// nearest element of the other layout with the same argmax class by L2 over
/// its geometry parameters; no such element makes the distance infinite.
/// Zero-probability padding elements are ignored.
pub fn chamfer_distance(a: &Layout, b: &Layout) -> Result<f64> {
    if a.kind() != b.kind() {
        return Err(Error::Schema(format!("cannot compare {} and {} layouts", a.kind().name(), b.kind().name())));
    }
    let (da, db) = (descriptors(a), descriptors(b));
    if da.is_empty() || db.is_empty() {
        return Ok(if da.is_empty() && db.is_empty() { 0.0 } else { f64::INFINITY });
    }
    Ok(one_way(&da, &db) + one_way(&db, &da))
}

/// The `k` corpus layouts closest to `query`, nearest first, ties by corpus order.
pub fn retrieve_nearest(query: &Layout, corpus: &[Layout], k: usize) -> Result<Vec<Neighbor>> {
    if corpus.is_empty() {
        return Err(Error::InvalidDataset("empty retrieval corpus".into()));
    }
    let mut all = corpus
        .iter()
        .enumerate()
        .map(|(index, c)| Ok(Neighbor { index, distance: chamfer_distance(query, c)? }))
        .collect::<Result<Vec<_>>>()?;
    all.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    all.truncate(k);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{ClassSchema, Element, Geometry};

    fn pts(items: &[(usize, f64, f64)]) -> Layout {
        let els = items.iter().map(|&(c, x, y)| Element::one_hot(c, 2, Geometry::Point { x, y })).collect();
        Layout::new(ClassSchema::new(["a", "b"]).unwrap(), els).unwrap()
    }

    #[test]
    fn self_is_nearest() {
        let q = pts(&[(0, 0.1, 0.1), (1, 0.5, 0.5)]);
        let corpus =
            vec![pts(&[(0, 0.2, 0.1), (1, 0.5, 0.5)]), q.permuted(&[1, 0]), pts(&[(0, 0.9, 0.9), (1, 0.0, 0.0)])];
        let r = retrieve_nearest(&q, &corpus, 1).unwrap();
        assert_eq!(r, vec![Neighbor { index: 1, distance: 0.0 }]);
    }

    #[test]
    fn hand_chamfer_ranking() {
        let q = pts(&[(0, 0.0, 0.0), (1, 1.0, 0.0)]);
        // c0: class-0 at (0, 0.3), class-1 at (1, 0): each side (0.3 + 0)/2, total 0.3.
        // c1: class-0 at (0, 0.1) twice, class-1 at (1, 0.4):
        //     q→c1 (0.1 + 0.4)/2 = 0.25, c1→q (0.1 + 0.1 + 0.4)/3 = 0.2, total 0.45.
        let c0 = pts(&[(0, 0.0, 0.3), (1, 1.0, 0.0)]);
        let c1 = pts(&[(0, 0.0, 0.1), (0, 0.0, 0.1), (1, 1.0, 0.4)]);
        assert!((chamfer_distance(&q, &c0).unwrap() - 0.3).abs() < 1e-12);
        assert!((chamfer_distance(&q, &c1).unwrap() - 0.45).abs() < 1e-12);
        let r = retrieve_nearest(&q, &[c1, c0], 5).unwrap();
        assert_eq!(r.iter().map(|n| n.index).collect::<Vec<_>>(), vec![1, 0]);
    }

    #[test]
    fn class_mismatch_is_infinite_and_ties_keep_order() {
        let q = pts(&[(0, 0.5, 0.5)]);
        let other = pts(&[(1, 0.5, 0.5)]);
        assert_eq!(chamfer_distance(&q, &other).unwrap(), f64::INFINITY);
        let r = retrieve_nearest(&q, &[other.clone(), q.clone(), other, q.clone()], 10).unwrap();
        assert_eq!(r.iter().map(|n| n.index).collect::<Vec<_>>(), vec![1, 3, 0, 2]);
        assert!(matches!(retrieve_nearest(&q, &[], 1), Err(Error::InvalidDataset(_))));
    }
}
