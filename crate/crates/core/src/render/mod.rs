//! Differentiable wireframe rasterization.
//!
//! Normalized coordinates map to pixels as `x_px = x·(W−1)`, `y_px = y·(H−1)`,
//! so pixel centers sit on the integer lattice and `0` and `1` land on the
//! first and last pixel. Rendered images are stored channel-major
//! (`[M, H, W]`), matching the convolution input layout.
//!
//! Each element's response `F` is a max of edge terms built from the tent
//! kernel `k(d) = max(0, 1 − |d|)` and the clamp `b(d) = min(max(0, d), 1)`;
//! the layout image is `I(x, y, c) = max_i p_ic · F_i(x, y)` with ties going
//! to the lowest element index.

mod export;
mod kernel;
mod reference;

use serde::{Deserialize, Serialize};

pub use export::{default_palette, export_png, export_svg, layout_svg, png_bytes};
pub use reference::reference_rasterize;

use crate::autodiff::{CustomOp, Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::layout::{GeomKind, Layout, LayoutBatch, PieceId};
use kernel::{Kink, PixelShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
}

impl RenderConfig {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        let cfg = RenderConfig { width, height };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::Config(format!("render size {}x{} must be at least 2x2", self.width, self.height)));
        }
        Ok(())
    }

    /// Normalized-to-pixel scale factors.
    pub fn scale(&self) -> (f64, f64) {
        ((self.width - 1) as f64, (self.height - 1) as f64)
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

/// A rendered layout: `M` channels of `H × W` activations in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedLayout {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// `[M, H, W]`
    pub image: Tensor,
}

impl RenderedLayout {
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.image.data()[(c * self.height + y) * self.width + x]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.image.data()[c * n..(c + 1) * n]
    }

    pub fn max_abs_diff(&self, other: &RenderedLayout) -> f64 {
        self.image.max_abs_diff(&other.image)
    }
}

/// Discrete description of the elements behind a `[B, N, G]` geometry tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementKinds {
    pub kind: GeomKind,
    /// `B·N` entries for posed pieces, empty otherwise.
    pub pieces: Vec<Option<PieceId>>,
}

impl ElementKinds {
    pub fn uniform(kind: GeomKind) -> Self {
        ElementKinds { kind, pieces: Vec::new() }
    }

    pub fn of_batch(batch: &LayoutBatch) -> Self {
        let pieces = if batch.kind == GeomKind::PosedPiece { batch.pieces.clone() } else { Vec::new() };
        ElementKinds { kind: batch.kind, pieces }
    }

    fn piece(&self, row: usize) -> Option<PieceId> {
        self.pieces.get(row).copied().flatten()
    }
}

struct Dims {
    b: usize,
    n: usize,
    m: usize,
    g: usize,
}

fn dims(p: &Tensor, geom: &Tensor, kinds: &ElementKinds) -> Result<Dims> {
    let (ps, gs) = (p.shape(), geom.shape());
    if ps.len() != 3 || gs.len() != 3 || ps[..2] != gs[..2] {
        return Err(Error::Shape(format!("compose: p {ps:?} with geometry {gs:?}")));
    }
    if gs[2] != kinds.kind.param_count() {
        return Err(Error::Shape(format!(
            "compose: {} geometry needs {} parameters, got {}",
            kinds.kind.name(),
            kinds.kind.param_count(),
            gs[2]
        )));
    }
    if kinds.kind == GeomKind::PosedPiece
        && (kinds.pieces.len() != ps[0] * ps[1] || kinds.pieces.iter().any(Option::is_none))
    {
        return Err(Error::InvalidGeometry("posed pieces need a piece identity per element".into()));
    }
    Ok(Dims { b: ps[0], n: ps[1], m: ps[2], g: gs[2] })
}

/// Forward pass of `I = max_i p_i F_i`: returns the image and, per output
/// value, the index of the winning element.
fn compose_forward(
    p: &Tensor,
    geom: &Tensor,
    kinds: &ElementKinds,
    cfg: &RenderConfig,
    mut notes: Option<&mut Vec<Kink>>,
) -> Result<(Tensor, Vec<u32>)> {
    cfg.validate()?;
    let Dims { b, n, m, g } = dims(p, geom, kinds)?;
    let (w, h) = (cfg.width, cfg.height);
    let hw = w * h;
    let mut out = vec![0.0; b * m * hw];
    let mut arg = vec![0u32; b * m * hw];
    let mut second = if notes.is_some() { vec![0.0; b * m * hw] } else { Vec::new() };
    for bi in 0..b {
        for i in 0..n {
            let row = bi * n + i;
            let shape = PixelShape::new(kinds.kind, &geom.data()[row * g..(row + 1) * g], kinds.piece(row), cfg);
            if let (Some(notes), Some(gaps)) = (notes.as_deref_mut(), shape.corner_gaps) {
                let t = &geom.data()[row * g..(row + 1) * g];
                for (axis, gap) in gaps.into_iter().enumerate() {
                    notes.push((gap, 0x4000 | (axis as u64) << 1 | (t[axis] <= t[axis + 2]) as u64));
                }
            }
            let Some((x0, x1, y0, y1)) = shape.window else {
                continue;
            };
            let probs = &p.data()[row * m..(row + 1) * m];
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let f = shape.eval(x as f64, y as f64, None, notes.as_deref_mut());
                    for (c, &pc) in probs.iter().enumerate() {
                        let at = (bi * m + c) * hw + y * w + x;
                        let v = pc * f;
                        if i == 0 {
                            out[at] = v;
                        } else if v > out[at] {
                            if !second.is_empty() {
                                second[at] = out[at];
                            }
                            out[at] = v;
                            arg[at] = i as u32;
                        } else if !second.is_empty() && v > second[at] {
                            second[at] = v;
                        }
                    }
                }
            }
        }
    }
    if let Some(notes) = notes {
        if n > 1 {
            for (k, (&v, &s)) in out.iter().zip(&second).enumerate() {
                if v > 0.0 {
                    notes.push((v - s, 0x2000 | (arg[k] as u64) << 16));
                }
            }
        }
    }
    Ok((Tensor::new(vec![b, m, h, w], out)?, arg))
}

struct ComposeOp {
    kinds: ElementKinds,
    cfg: RenderConfig,
    arg: Vec<u32>,
}

impl CustomOp for ComposeOp {
    fn name(&self) -> &'static str {
        "compose"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (p, geom) = (inputs[0], inputs[1]);
        let Dims { b, n, m, g } = dims(p, geom, &self.kinds).expect("checked in forward");
        let (w, hw) = (self.cfg.width, self.cfg.pixels());
        let gd = grad.data();
        let mut dp = vec![0.0; p.len()];
        let mut dgeom = vec![0.0; geom.len()];
        let mut dq = Vec::new();
        for bi in 0..b {
            for i in 0..n {
                let row = bi * n + i;
                let shape = PixelShape::new(
                    self.kinds.kind,
                    &geom.data()[row * g..(row + 1) * g],
                    self.kinds.piece(row),
                    &self.cfg,
                );
                let Some((x0, x1, y0, y1)) = shape.window else {
                    continue;
                };
                dq.resize(shape.q.len(), 0.0);
                let probs = &p.data()[row * m..(row + 1) * m];
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let won = |c: usize| {
                            let at = (bi * m + c) * hw + y * w + x;
                            (self.arg[at] as usize == i && gd[at] != 0.0).then_some(gd[at])
                        };
                        if !(0..m).any(|c| won(c).is_some()) {
                            continue;
                        }
                        let f = shape.eval(x as f64, y as f64, Some(&mut dq), None);
                        let mut weight = 0.0;
                        for c in 0..m {
                            if let Some(gv) = won(c) {
                                dp[row * m + c] += gv * f;
                                weight += gv * probs[c];
                            }
                        }
                        if weight != 0.0 {
                            shape.pull_back(&dq, weight, &mut dgeom[row * g..(row + 1) * g]);
                        }
                    }
                }
            }
        }
        vec![
            Some(Tensor::new(p.shape().to_vec(), dp).expect("shape")),
            Some(Tensor::new(geom.shape().to_vec(), dgeom).expect("shape")),
        ]
    }
}

/// Differentiable `I = max_i p_i F_i` over a batch: `p` is `[B, N, M]`,
/// `geom` is `[B, N, G]`, the result is `[B, M, H, W]`.
pub fn compose_nodes(
    g: &mut Graph,
    p: NodeId,
    geom: NodeId,
    kinds: &ElementKinds,
    cfg: &RenderConfig,
) -> Result<NodeId> {
    let mut notes = g.tracks_kinks().then(Vec::new);
    let (value, arg) = compose_forward(g.value(p), g.value(geom), kinds, cfg, notes.as_mut())?;
    for (d, br) in notes.into_iter().flatten() {
        g.note_kink(d, br);
    }
    Ok(g.custom(vec![p, geom], value, Box::new(ComposeOp { kinds: kinds.clone(), cfg: *cfg, arg })))
}

/// Renders a whole batch without recording gradients.
pub fn compose_batch(batch: &LayoutBatch, cfg: &RenderConfig) -> Result<Tensor> {
    Ok(compose_forward(&batch.p, &batch.geom, &ElementKinds::of_batch(batch), cfg, None)?.0)
}

/// Renders one layout.
pub fn compose(layout: &Layout, cfg: &RenderConfig) -> Result<RenderedLayout> {
    let batch = LayoutBatch::from_layouts(std::slice::from_ref(layout))?;
    let image = compose_batch(&batch, cfg)?;
    let m = layout.schema().len();
    Ok(RenderedLayout {
        width: cfg.width,
        height: cfg.height,
        channels: m,
        image: image.reshaped(vec![m, cfg.height, cfg.width])?,
    })
}

/// Differentiable response `F` of one element: `geom` is a `[G]` node, the
/// result is `[H, W]`.
pub fn render_element(
    g: &mut Graph,
    geom: NodeId,
    kind: GeomKind,
    piece: Option<PieceId>,
    cfg: &RenderConfig,
) -> Result<NodeId> {
    if g.shape(geom) != [kind.param_count()] {
        return Err(Error::Shape(format!(
            "{} element needs a [{}] geometry, got {:?}",
            kind.name(),
            kind.param_count(),
            g.shape(geom)
        )));
    }
    let one = g.input(Tensor::full(vec![1, 1, 1], 1.0));
    let geom3 = g.reshape(geom, vec![1, 1, kind.param_count()])?;
    let kinds = ElementKinds { kind, pieces: if kind == GeomKind::PosedPiece { vec![piece] } else { Vec::new() } };
    let img = compose_nodes(g, one, geom3, &kinds, cfg)?;
    g.reshape(img, vec![cfg.height, cfg.width])
}

/// Bilinear point response; `geom` is `[x, y]`.
pub fn render_point(g: &mut Graph, geom: NodeId, cfg: &RenderConfig) -> Result<NodeId> {
    render_element(g, geom, GeomKind::Point, None, cfg)
}

/// Rectangle outline response; `geom` is `[xL, yT, xR, yB]`.
pub fn render_rect(g: &mut Graph, geom: NodeId, cfg: &RenderConfig) -> Result<NodeId> {
    render_element(g, geom, GeomKind::Box, None, cfg)
}

/// Triangle outline response; `geom` is `[x1, y1, x2, y2, x3, y3]`.
pub fn render_triangle(g: &mut Graph, geom: NodeId, cfg: &RenderConfig) -> Result<NodeId> {
    render_element(g, geom, GeomKind::Triangle, None, cfg)
}

#[cfg(test)]
mod tests;
