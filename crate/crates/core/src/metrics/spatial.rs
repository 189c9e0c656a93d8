use crate::error::{Error, Result};
use crate::layout::Layout;

fn boxes(layout: &Layout) -> Result<Vec<[f64; 4]>> {
    layout
        .elements()
        .iter()
        .map(|e| {
            e.geom.as_box().ok_or_else(|| {
                Error::InvalidGeometry(format!("{} elements have no bounding box", e.geom.kind().name()))
            })
        })
        .collect()
}

fn nonempty(layouts: &[Layout]) -> Result<()> {
    if layouts.is_empty() {
        return Err(Error::InvalidDataset("no layouts to evaluate".into()));
    }
    Ok(())
}

/// Summed pairwise intersection area of one layout, as a percentage of the unit page.
pub fn layout_overlap(layout: &Layout) -> Result<f64> {
    let b = boxes(layout)?;
    let mut total = 0.0;
    for i in 0..b.len() {
        for j in i + 1..b.len() {
            let w = (b[i][2].min(b[j][2]) - b[i][0].max(b[j][0])).max(0.0);
            let h = (b[i][3].min(b[j][3]) - b[i][1].max(b[j][1])).max(0.0);
            total += w * h;
        }
    }
    Ok(total * 100.0)
}

/// Mean of [`layout_overlap`] over layouts.
pub fn overlap_index(layouts: &[Layout]) -> Result<f64> {
    nonempty(layouts)?;
    let mut sum = 0.0;
    for l in layouts {
        sum += layout_overlap(l)?;
    }
    Ok(sum / layouts.len() as f64)
}

/// Population std, taken about the first value so equal inputs give exactly 0.
fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let d: Vec<f64> = v.iter().map(|x| x - v[0]).collect();
    let mean = d.iter().sum::<f64>() / n;
    (d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// `min(std of left edges, std of horizontal centers) × 100` for one layout.
pub fn layout_alignment(layout: &Layout) -> Result<f64> {
    let b = boxes(layout)?;
    if b.len() < 2 {
        return Err(Error::InsufficientElements { needed: 2, found: b.len() });
    }
    let left: Vec<f64> = b.iter().map(|b| b[0]).collect();
    let center: Vec<f64> = b.iter().map(|b| (b[0] + b[2]) / 2.0).collect();
    Ok(std_dev(&left).min(std_dev(&center)) * 100.0)
}

/// Mean of [`layout_alignment`] over layouts.
pub fn alignment_index(layouts: &[Layout]) -> Result<f64> {
    nonempty(layouts)?;
    let mut sum = 0.0;
    for l in layouts {
        sum += layout_alignment(l)?;
    }
    Ok(sum / layouts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{ClassSchema, Element, Geometry};

    fn boxes_layout(b: &[[f64; 4]]) -> Layout {
        let els = b.iter().map(|&[xl, yt, xr, yb]| Element::one_hot(0, 1, Geometry::Box { xl, yt, xr, yb })).collect();
        Layout::new(ClassSchema::new(["x"]).unwrap(), els).unwrap()
    }

    #[test]
    fn overlap_examples() {
        let disjoint = boxes_layout(&[[0.0, 0.0, 0.25, 0.25], [0.5, 0.5, 1.0, 1.0], [0.25, 0.0, 0.5, 0.25]]);
        assert_eq!(overlap_index(&[disjoint]).unwrap(), 0.0);
        let pair = boxes_layout(&[[0.0, 0.0, 0.5, 0.5], [0.25, 0.25, 0.75, 0.75]]);
        assert_eq!(overlap_index(&[pair]).unwrap(), 6.25);
    }

    #[test]
    fn triple_overlap_is_counted_per_pair() {
        let same = boxes_layout(&[[0.0, 0.0, 0.5, 0.5]; 3]);
        assert_eq!(layout_overlap(&same).unwrap(), 3.0 * 25.0);
    }

    #[test]
    fn alignment_examples() {
        let left = boxes_layout(&[[0.125, 0.0, 0.5, 0.1], [0.125, 0.2, 0.875, 0.3], [0.125, 0.4, 0.25, 0.5]]);
        assert_eq!(alignment_index(&[left]).unwrap(), 0.0);
        let centered = boxes_layout(&[[0.25, 0.0, 0.75, 0.1], [0.125, 0.2, 0.875, 0.3], [0.375, 0.4, 0.625, 0.5]]);
        assert_eq!(alignment_index(&[centered]).unwrap(), 0.0);
        let one = boxes_layout(&[[0.0, 0.0, 0.5, 0.5]]);
        assert!(matches!(alignment_index(&[one]), Err(Error::InsufficientElements { needed: 2, found: 1 })));
    }

    #[test]
    fn decimal_inputs_that_agree_score_exactly_zero() {
        let left = boxes_layout(&[[0.2, 0.1, 0.5, 0.2], [0.2, 0.3, 0.9, 0.4], [0.2, 0.5, 0.3, 0.6]]);
        assert_eq!(layout_alignment(&left).unwrap(), 0.0);
        let centered = boxes_layout(&[[0.1, 0.1, 0.9, 0.2], [0.3, 0.3, 0.7, 0.4], [0.2, 0.5, 0.8, 0.6]]);
        assert_eq!(layout_alignment(&centered).unwrap(), 0.0);
    }

    #[test]
    fn non_box_geometry_is_rejected() {
        let l = Layout::new(ClassSchema::points(), vec![Element::one_hot(0, 1, Geometry::Point { x: 0.0, y: 0.0 })])
            .unwrap();
        assert!(matches!(overlap_index(&[l.clone()]), Err(Error::InvalidGeometry(_))));
        assert!(matches!(alignment_index(&[l]), Err(Error::InvalidGeometry(_))));
    }
}
