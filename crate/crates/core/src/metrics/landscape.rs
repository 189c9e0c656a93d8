use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::autodiff::ParamStore;
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::layout::{Layout, LayoutBatch};

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean `-log D(x)` over layouts.
pub fn real_loss(disc: &Discriminator, store: &ParamStore, layouts: &[Layout]) -> Result<f64> {
    if layouts.is_empty() {
        return Err(Error::InvalidDataset("no layouts".into()));
    }
    let mut total = 0.0;
    for chunk in layouts.chunks(64) {
        let z = disc.logits_batch(store, &LayoutBatch::from_layouts(chunk)?)?;
        total += z.iter().map(|&z| softplus(-z)).sum::<f64>();
    }
    Ok(total / layouts.len() as f64)
}

/// Shifts every layout by a vector of norm `m` in one random direction per
/// layout and magnitude, then records the mean loss against the real label.
pub fn loss_landscape<R: Rng + ?Sized>(
    disc: &Discriminator,
    store: &ParamStore,
    real: &[Layout],
    magnitudes: &[f64],
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(magnitudes.len());
    for &m in magnitudes {
        let shifted: Vec<Layout> = real
            .iter()
            .map(|l| {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                l.translated(m * a.cos(), m * a.sin())
            })
            .collect();
        out.push((m, real_loss(disc, store, &shifted)?));
    }
    Ok(out)
}

/// Spearman rank correlation, with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidDataset(format!("spearman on {} and {} values", x.len(), y.len())));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// `Σ |y[i+1] − y[i]|`.
pub fn total_variation(y: &[f64]) -> f64 {
    y.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Line plot of one or more `(magnitude, loss)` curves.
pub fn landscape_svg(curves: &[(&str, &[(f64, f64)])]) -> String {
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let pts = curves.iter().flat_map(|(_, c)| c.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let colors = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"];
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#, h - pad, w - pad);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">magnitude {x0:.3} to {x1:.3}</text>"#, pad, h - 10.0);
    let _ = writeln!(s, r#"<text x="4" y="16" font-size="12">loss {y0:.4} to {y1:.4}</text>"#);
    for (k, (name, curve)) in curves.iter().enumerate() {
        let color = colors[k % colors.len()];
        let path: Vec<String> = curve.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{name}</text>"#,
            w - pad - 100.0,
            pad + 16.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn export_landscape_svg(curves: &[(&str, &[(f64, f64)])], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, landscape_svg(curves)).map_err(|e| Error::io(path, e))
}
