//! Procedural stroke digits: a polyline skeleton per digit, randomly scaled and
//! shifted per sample, point-sampled by arc length, then jittered.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::layout::{ClassSchema, Element, Geometry, Layout};

pub const STROKE_JITTER: f64 = 0.02;
/// Jitter draws beyond this many standard deviations are redrawn.
pub const JITTER_TRUNCATION: f64 = 2.5;

type Pt = [f64; 2];

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, n: usize) -> Vec<Pt> {
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64 * std::f64::consts::TAU;
            [cx + rx * t.sin(), cy - ry * t.cos()]
        })
        .collect()
}

/// Skeleton polyline of `digit` in the unit square (y down).
pub fn digit_skeleton(digit: u8) -> Vec<Pt> {
    match digit {
        0 => ellipse(0.5, 0.5, 0.22, 0.33, 24),
        1 => vec![[0.5, 0.15], [0.5, 0.85]],
        2 => vec![
            [0.3, 0.3],
            [0.36, 0.19],
            [0.5, 0.15],
            [0.64, 0.19],
            [0.7, 0.31],
            [0.64, 0.45],
            [0.3, 0.85],
            [0.72, 0.85],
        ],
        3 => vec![
            [0.3, 0.2],
            [0.5, 0.15],
            [0.67, 0.22],
            [0.68, 0.38],
            [0.5, 0.48],
            [0.68, 0.58],
            [0.7, 0.75],
            [0.5, 0.85],
            [0.3, 0.8],
        ],
        4 => vec![[0.6, 0.85], [0.6, 0.15], [0.28, 0.62], [0.75, 0.62]],
        5 => vec![
            [0.7, 0.15],
            [0.35, 0.15],
            [0.32, 0.45],
            [0.55, 0.42],
            [0.7, 0.55],
            [0.68, 0.75],
            [0.5, 0.85],
            [0.3, 0.8],
        ],
        6 => vec![
            [0.65, 0.15],
            [0.45, 0.3],
            [0.33, 0.55],
            [0.35, 0.75],
            [0.5, 0.85],
            [0.66, 0.75],
            [0.65, 0.58],
            [0.5, 0.5],
            [0.35, 0.58],
        ],
        7 => vec![[0.28, 0.15], [0.72, 0.15], [0.45, 0.85]],
        8 => vec![
            [0.5, 0.5],
            [0.33, 0.38],
            [0.35, 0.2],
            [0.5, 0.15],
            [0.65, 0.2],
            [0.67, 0.38],
            [0.5, 0.5],
            [0.3, 0.65],
            [0.33, 0.82],
            [0.5, 0.87],
            [0.67, 0.82],
            [0.7, 0.65],
            [0.5, 0.5],
        ],
        _ => vec![
            [0.65, 0.42],
            [0.5, 0.5],
            [0.35, 0.42],
            [0.35, 0.25],
            [0.5, 0.15],
            [0.65, 0.25],
            [0.65, 0.42],
            [0.6, 0.85],
        ],
    }
}

fn point_at(poly: &[Pt], cum: &[f64], s: f64) -> Pt {
    let k = cum.partition_point(|&c| c <= s).clamp(1, poly.len() - 1);
    let seg = cum[k] - cum[k - 1];
    let t = if seg > 0.0 { (s - cum[k - 1]) / seg } else { 0.0 };
    let (a, b) = (poly[k - 1], poly[k]);
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

fn truncated<R: Rng + ?Sized>(rng: &mut R, normal: &Normal<f64>) -> f64 {
    loop {
        let v = normal.sample(rng);
        if v.abs() <= JITTER_TRUNCATION * STROKE_JITTER {
            return v;
        }
    }
}

/// One jittered point layout of `digit`.
pub fn synth_digit_strokes<R: Rng + ?Sized>(rng: &mut R, digit: u8, n_points: usize) -> Result<Layout> {
    if digit > 9 {
        return Err(Error::InvalidDataset(format!("digit {digit} outside 0..=9")));
    }
    if n_points == 0 {
        return Err(Error::InvalidDataset("need at least one point".into()));
    }
    let scale = rng.random_range(0.85..=1.05);
    let (dx, dy) = (rng.random_range(-0.05..=0.05), rng.random_range(-0.05..=0.05));
    let poly: Vec<Pt> = digit_skeleton(digit)
        .into_iter()
        .map(|p| [0.5 + scale * (p[0] - 0.5) + dx, 0.5 + scale * (p[1] - 0.5) + dy])
        .collect();
    let mut cum = vec![0.0];
    for w in poly.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]));
    }
    let total = *cum.last().unwrap();
    let normal = Normal::new(0.0, STROKE_JITTER).expect("valid sigma");
    let elements = (0..n_points)
        .map(|_| {
            let p = point_at(&poly, &cum, rng.random_range(0.0..total));
            let x = (p[0] + truncated(rng, &normal)).clamp(0.0, 1.0);
            let y = (p[1] + truncated(rng, &normal)).clamp(0.0, 1.0);
            Element::one_hot(0, 1, Geometry::Point { x, y })
        })
        .collect();
    Layout::new(ClassSchema::points(), elements)
}

/// `count` labelled digit layouts, classes drawn uniformly from `digits`.
pub fn synth_digit_dataset<R: Rng + ?Sized>(
    rng: &mut R,
    digits: &[u8],
    count: usize,
    n_points: usize,
) -> Result<(Vec<Layout>, Vec<usize>)> {
    if digits.is_empty() {
        return Err(Error::InvalidDataset("no digit classes".into()));
    }
    let mut layouts = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let k = rng.random_range(0..digits.len());
        layouts.push(synth_digit_strokes(rng, digits[k], n_points)?);
        labels.push(k);
    }
    Ok((layouts, labels))
}
