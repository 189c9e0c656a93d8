//! Literal per-pixel, per-element, per-term evaluation with no windows or
//! shared kernel code. Exists only to check the optimized renderer.

use super::{RenderConfig, RenderedLayout};
use crate::autodiff::Tensor;
use crate::data::{piece_triangles, TANGRAM_SCALE};
use crate::error::Result;
use crate::layout::{Geometry, Layout};

fn k(d: f64) -> f64 {
    (1.0 - d.abs()).max(0.0)
}

fn b(d: f64) -> f64 {
    d.max(0.0).min(1.0)
}

fn rect(x: f64, y: f64, l: f64, t: f64, r: f64, bt: f64) -> f64 {
    let terms = [
        k(x - l) * b(y - t) * b(bt - y),
        k(x - r) * b(y - t) * b(bt - y),
        k(y - t) * b(x - l) * b(r - x),
        k(y - bt) * b(x - l) * b(r - x),
    ];
    terms.into_iter().fold(0.0, f64::max)
}

fn edge(x: f64, y: f64, x1: f64, y1: f64, x2: f64, y2: f64, eps_v: f64) -> f64 {
    if (x2 - x1).abs() >= eps_v {
        k(y - (y2 - y1) * (x - x1) / (x2 - x1) - y1) * b(x - x1.min(x2)) * b(x1.max(x2) - x)
    } else if y2 == y1 {
        0.0
    } else {
        k(x - (x2 - x1) * (y - y1) / (y2 - y1) - x1) * b(y - y1.min(y2)) * b(y1.max(y2) - y)
    }
}

fn triangle(x: f64, y: f64, v: [f64; 6], eps_v: f64) -> f64 {
    let [x1, y1, x2, y2, x3, y3] = v;
    edge(x, y, x1, y1, x2, y2, eps_v).max(edge(x, y, x1, y1, x3, y3, eps_v)).max(edge(x, y, x2, y2, x3, y3, eps_v))
}

fn response(geom: &Geometry, x: f64, y: f64, sx: f64, sy: f64, eps_v: f64) -> f64 {
    match *geom {
        Geometry::Point { x: px, y: py } => k(x - px * sx) * k(y - py * sy),
        Geometry::Box { xl, yt, xr, yb } => {
            rect(x, y, xl.min(xr) * sx, yt.min(yb) * sy, xl.max(xr) * sx, yt.max(yb) * sy)
        }
        Geometry::CenterBox { x: cx, y: cy, w, h, .. } => {
            rect(x, y, (cx - w / 2.0) * sx, (cy - h / 2.0) * sy, (cx + w / 2.0) * sx, (cy + h / 2.0) * sy)
        }
        Geometry::Triangle { v } => {
            let v = [v[0] * sx, v[1] * sy, v[2] * sx, v[3] * sy, v[4] * sx, v[5] * sy];
            triangle(x, y, v, eps_v)
        }
        Geometry::PosedPiece { x: cx, y: cy, pose, piece } => piece_triangles(piece as usize, pose as usize)
            .iter()
            .map(|t| {
                let mut v = [0.0; 6];
                for (j, p) in t.iter().enumerate() {
                    v[2 * j] = (cx + TANGRAM_SCALE * p[0]) * sx;
                    v[2 * j + 1] = (cy + TANGRAM_SCALE * p[1]) * sy;
                }
                triangle(x, y, v, eps_v)
            })
            .fold(0.0, f64::max),
    }
}

/// `I(x, y, c) = max_i p_ic F_i(x, y)` evaluated pixel by pixel.
pub fn reference_rasterize(layout: &Layout, cfg: &RenderConfig) -> Result<RenderedLayout> {
    cfg.validate()?;
    let (w, h, m) = (cfg.width, cfg.height, layout.schema().len());
    let (sx, sy) = ((w - 1) as f64, (h - 1) as f64);
    let eps_v = 1e-6 * sx;
    let mut data = vec![0.0; m * h * w];
    for c in 0..m {
        for y in 0..h {
            for x in 0..w {
                let mut best = 0.0;
                for e in layout.elements() {
                    let v = e.p[c] * response(&e.geom, x as f64, y as f64, sx, sy, eps_v);
                    if v > best {
                        best = v;
                    }
                }
                data[(c * h + y) * w + x] = best;
            }
        }
    }
    Ok(RenderedLayout { width: w, height: h, channels: m, image: Tensor::new(vec![m, h, w], data)? })
}
