//! Per-element wireframe response in pixel space.
//!
//! An element is reduced to pixel quantities `q` (corner or vertex
//! coordinates) plus the Jacobian `dq/dθ` back to its normalized parameters.
//! `F` is the max over a handful of terms, each a product of tent and clamp
//! factors whose arguments are affine or rational in `q`.

use super::RenderConfig;
use crate::autodiff::{clamp01, clamp01_deriv, clamp01_kink, tent, tent_deriv, tent_kink};
use crate::data::{piece_triangles, TANGRAM_SCALE};
use crate::layout::{GeomKind, PieceId};

/// Largest term count: two triangles of three edges each.
const MAX_TERMS: usize = 6;

pub(crate) type Kink = (f64, u64);

#[derive(Clone, Copy, Debug)]
enum Prim {
    Point,
    Box,
    /// `n` triangles, vertices laid out as `[x1,y1,x2,y2,x3,y3]` per triangle.
    Tris(usize),
}

#[derive(Clone, Copy, Default)]
struct Factor {
    tent: bool,
    arg: f64,
    d: [(usize, f64); 4],
    nd: usize,
}

impl Factor {
    fn new(tent: bool, arg: f64, d: &[(usize, f64)]) -> Self {
        let mut f = Factor { tent, arg, ..Default::default() };
        f.d[..d.len()].copy_from_slice(d);
        f.nd = d.len();
        f
    }

    fn value(&self) -> f64 {
        if self.tent {
            tent(self.arg)
        } else {
            clamp01(self.arg)
        }
    }

    fn deriv(&self) -> f64 {
        if self.tent {
            tent_deriv(self.arg)
        } else {
            clamp01_deriv(self.arg)
        }
    }

    fn kink(&self) -> Kink {
        if self.tent {
            tent_kink(self.arg)
        } else {
            clamp01_kink(self.arg)
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Term {
    f: [Factor; 3],
    n: usize,
    /// Signed distance of an edge's `|Δx|` from the transposition threshold.
    switch: Option<f64>,
}

impl Term {
    fn value(&self) -> f64 {
        self.f[..self.n].iter().map(Factor::value).product()
    }

    fn others(&self, j: usize) -> f64 {
        (0..self.n).filter(|&k| k != j).map(|k| self.f[k].value()).product()
    }
}

/// Element geometry mapped to pixel space, with its support window.
#[derive(Clone, Debug)]
pub(crate) struct PixelShape {
    prim: Prim,
    pub q: Vec<f64>,
    /// Row-major `q.len() × G`.
    pub jac: Vec<f64>,
    pub g: usize,
    /// Inclusive pixel ranges `(x0, x1, y0, y1)`, `None` when nothing can be lit.
    pub window: Option<(usize, usize, usize, usize)>,
    /// Pixel gap between the two corners on each axis of a `Box`; corner
    /// canonicalization switches branch where a gap reaches zero.
    pub corner_gaps: Option<[f64; 2]>,
    eps_v: f64,
}

impl PixelShape {
    pub fn new(kind: GeomKind, theta: &[f64], piece: Option<PieceId>, cfg: &RenderConfig) -> Self {
        let (sx, sy) = cfg.scale();
        let g = kind.param_count();
        let (prim, q, jac) = match kind {
            GeomKind::Point => (Prim::Point, vec![theta[0] * sx, theta[1] * sy], vec![sx, 0.0, 0.0, sy]),
            GeomKind::Box => {
                // Canonical corners: q holds (min, min, max, max) and the
                // jacobian routes each corner back to whichever input it came from.
                let mut q = vec![0.0; 4];
                let mut jac = vec![0.0; 16];
                for axis in 0..2 {
                    let s = if axis == 0 { sx } else { sy };
                    let (lo, hi) = if theta[axis] <= theta[axis + 2] { (axis, axis + 2) } else { (axis + 2, axis) };
                    q[axis] = theta[lo] * s;
                    q[axis + 2] = theta[hi] * s;
                    jac[axis * 4 + lo] = s;
                    jac[(axis + 2) * 4 + hi] = s;
                }
                (Prim::Box, q, jac)
            }
            GeomKind::CenterBox => {
                let (x, y, w, h) = (theta[0], theta[1], theta[2], theta[3]);
                #[rustfmt::skip]
                let jac = vec![
                    sx, 0.0, -sx / 2.0, 0.0, 0.0,
                    0.0, sy, 0.0, -sy / 2.0, 0.0,
                    sx, 0.0, sx / 2.0, 0.0, 0.0,
                    0.0, sy, 0.0, sy / 2.0, 0.0,
                ];
                (Prim::Box, vec![(x - w / 2.0) * sx, (y - h / 2.0) * sy, (x + w / 2.0) * sx, (y + h / 2.0) * sy], jac)
            }
            GeomKind::Triangle => {
                let mut jac = vec![0.0; 36];
                for k in 0..6 {
                    jac[k * 6 + k] = if k % 2 == 0 { sx } else { sy };
                }
                let q = (0..6).map(|k| theta[k] * if k % 2 == 0 { sx } else { sy }).collect();
                (Prim::Tris(1), q, jac)
            }
            GeomKind::PosedPiece => {
                let id = piece.expect("posed piece without identity");
                let tris = piece_triangles(id.piece as usize, id.pose as usize);
                let mut q = Vec::with_capacity(tris.len() * 6);
                let mut jac = Vec::with_capacity(tris.len() * 12);
                for v in tris.iter().flatten() {
                    q.push((theta[0] + TANGRAM_SCALE * v[0]) * sx);
                    q.push((theta[1] + TANGRAM_SCALE * v[1]) * sy);
                    jac.extend_from_slice(&[sx, 0.0, 0.0, sy]);
                }
                (Prim::Tris(tris.len()), q, jac)
            }
        };
        let window = support_window(&q, cfg);
        let corner_gaps = (kind == GeomKind::Box).then(|| [q[2] - q[0], q[3] - q[1]]);
        PixelShape { prim, q, jac, g, window, corner_gaps, eps_v: 1e-6 * (cfg.width - 1) as f64 }
    }

    fn edge_term(&self, x: f64, y: f64, a: usize, b: usize) -> Term {
        let q = &self.q;
        let (xa, xb) = (q[a], q[b]);
        let dx = xb - xa;
        let switch = dx.abs() - self.eps_v;
        // Indices of the coordinate the line is parameterized by (u) and the
        // one measured across it (v); transposed edges swap the roles.
        let (ua, va, ub, vb, pu, pv) =
            if switch >= 0.0 { (a, a + 1, b, b + 1, x, y) } else { (a + 1, a, b + 1, b, y, x) };
        let (u_a, v_a, u_b, v_b) = (q[ua], q[va], q[ub], q[vb]);
        let du = u_b - u_a;
        let (lo, hi) = if u_a < u_b { (ua, ub) } else { (ub, ua) };
        let gate_lo = Factor::new(false, pu - q[lo], &[(lo, -1.0)]);
        let gate_hi = Factor::new(false, q[hi] - pu, &[(hi, 1.0)]);
        let line = if du == 0.0 {
            // Zero extent: both gates vanish, the line is undefined.
            Factor::new(true, f64::INFINITY, &[])
        } else {
            let t = (pu - u_a) / du;
            let dv = v_b - v_a;
            Factor::new(
                true,
                pv - v_a - dv * t,
                &[(va, -(1.0 - t)), (vb, -t), (ua, -dv * (pu - u_b) / (du * du)), (ub, dv * (pu - u_a) / (du * du))],
            )
        };
        Term { f: [line, gate_lo, gate_hi], n: 3, switch: Some(switch) }
    }

    fn terms(&self, x: f64, y: f64, out: &mut [Term; MAX_TERMS]) -> usize {
        let q = &self.q;
        match self.prim {
            Prim::Point => {
                out[0] = Term {
                    f: [
                        Factor::new(true, x - q[0], &[(0, -1.0)]),
                        Factor::new(true, y - q[1], &[(1, -1.0)]),
                        Factor::default(),
                    ],
                    n: 2,
                    switch: None,
                };
                1
            }
            Prim::Box => {
                let (l, t, r, b) = (q[0], q[1], q[2], q[3]);
                let in_y = [Factor::new(false, y - t, &[(1, -1.0)]), Factor::new(false, b - y, &[(3, 1.0)])];
                let in_x = [Factor::new(false, x - l, &[(0, -1.0)]), Factor::new(false, r - x, &[(2, 1.0)])];
                let edges = [
                    (Factor::new(true, x - l, &[(0, -1.0)]), in_y),
                    (Factor::new(true, x - r, &[(2, -1.0)]), in_y),
                    (Factor::new(true, y - t, &[(1, -1.0)]), in_x),
                    (Factor::new(true, y - b, &[(3, -1.0)]), in_x),
                ];
                for (k, (edge, gates)) in edges.into_iter().enumerate() {
                    out[k] = Term { f: [edge, gates[0], gates[1]], n: 3, switch: None };
                }
                4
            }
            Prim::Tris(n) => {
                for t in 0..n {
                    let base = t * 6;
                    for (k, (a, b)) in [(0, 2), (0, 4), (2, 4)].into_iter().enumerate() {
                        out[t * 3 + k] = self.edge_term(x, y, base + a, base + b);
                    }
                }
                3 * n
            }
        }
    }

    /// `F` at pixel `(x, y)`; optionally `dF/dq` into `dq` (length `q.len()`)
    /// and kink distances of the active branch into `notes`.
    pub fn eval(&self, x: f64, y: f64, dq: Option<&mut [f64]>, notes: Option<&mut Vec<Kink>>) -> f64 {
        let mut terms = [Term::default(); MAX_TERMS];
        let nt = self.terms(x, y, &mut terms);
        let mut vals = [0.0; MAX_TERMS];
        let mut best = 0;
        for t in 0..nt {
            vals[t] = terms[t].value();
            if vals[t] > vals[best] {
                best = t;
            }
        }
        let v = vals[best];
        let term = &terms[best];
        if let Some(notes) = notes {
            if v > 0.0 && nt > 1 {
                let second = (0..nt).filter(|&t| t != best).map(|t| vals[t]).fold(0.0, f64::max);
                notes.push((v - second, 0x100 | best as u64));
            }
            for j in 0..term.n {
                if term.others(j) != 0.0 {
                    let (d, br) = term.f[j].kink();
                    notes.push((d, br | (j as u64) << 4 | (best as u64) << 8));
                }
            }
            if let Some(s) = term.switch {
                notes.push((s.abs(), 0x1000 | (s >= 0.0) as u64));
            }
        }
        if let Some(dq) = dq {
            dq.fill(0.0);
            for j in 0..term.n {
                let f = &term.f[j];
                let scale = f.deriv() * term.others(j);
                if scale != 0.0 {
                    for &(i, c) in &f.d[..f.nd] {
                        dq[i] += scale * c;
                    }
                }
            }
        }
        v
    }

    /// `Σ_k dq_k · ∂q_k/∂θ` accumulated into `out` with weight `w`.
    pub fn pull_back(&self, dq: &[f64], w: f64, out: &mut [f64]) {
        for (k, &d) in dq.iter().enumerate() {
            if d != 0.0 {
                let row = &self.jac[k * self.g..(k + 1) * self.g];
                for (o, j) in out.iter_mut().zip(row) {
                    *o += w * d * j;
                }
            }
        }
    }
}

/// Pixels within two of the geometry's extent, clipped to the canvas.
fn support_window(q: &[f64], cfg: &RenderConfig) -> Option<(usize, usize, usize, usize)> {
    if q.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for c in q.chunks(2) {
        x0 = x0.min(c[0]);
        x1 = x1.max(c[0]);
        y0 = y0.min(c[1]);
        y1 = y1.max(c[1]);
    }
    let (wmax, hmax) = ((cfg.width - 1) as f64, (cfg.height - 1) as f64);
    let (x0, x1) = ((x0 - 2.0).ceil().max(0.0), (x1 + 2.0).floor().min(wmax));
    let (y0, y1) = ((y0 - 2.0).ceil().max(0.0), (y1 + 2.0).floor().min(hmax));
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some((x0 as usize, x1 as usize, y0 as usize, y1 as usize))
}
