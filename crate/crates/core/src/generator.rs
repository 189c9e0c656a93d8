//! Set generator: element-wise encoder, stacked relation blocks, element-wise
//! decoder with sigmoid class and geometry heads.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::layout::{ClassSchema, Element, GeomKind, Geometry, Layout, LayoutBatch};
use crate::relation::{init_relation, relation_module};

pub const PREFIX: &str = "gen";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub classes: usize,
    pub geom_dim: usize,
    pub n_elements: usize,
    pub embed_dim: usize,
    /// Encoder layer widths; the last must equal `embed_dim`.
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub n_relation_blocks: usize,
    /// Width of `ψ` and `φ`; `0` means `embed_dim`.
    pub key_dim: usize,
    pub bottleneck_reduction: usize,
    /// Sample class vectors uniformly in `[0,1]^M` instead of one-hot.
    pub dense_uniform_p: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            classes: 1,
            geom_dim: 2,
            n_elements: 8,
            embed_dim: 256,
            encoder_widths: vec![128, 256, 256],
            decoder_widths: vec![256, 128],
            n_relation_blocks: 2,
            key_dim: 0,
            bottleneck_reduction: 4,
            dense_uniform_p: false,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes == 0 || self.geom_dim == 0 || self.n_elements == 0 {
            return bad("generator needs classes, geom_dim and n_elements ≥ 1".into());
        }
        if self.n_relation_blocks == 0 {
            return bad("n_relation_blocks must be at least 1".into());
        }
        if self.encoder_widths.last() != Some(&self.embed_dim) {
            return bad(format!(
                "last encoder width {:?} must equal embed_dim {}",
                self.encoder_widths.last(),
                self.embed_dim
            ));
        }
        if self.bottleneck_reduction == 0 || self.embed_dim / self.bottleneck_reduction == 0 {
            return bad("bottleneck reduction leaves no width".into());
        }
        if self.decoder_widths.contains(&0) || self.encoder_widths.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        Ok(())
    }

    pub fn key_width(&self) -> usize {
        if self.key_dim == 0 {
            self.embed_dim
        } else {
            self.key_dim
        }
    }

    fn bottleneck_width(&self) -> usize {
        self.embed_dim / self.bottleneck_reduction
    }
}

fn init_dense<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, din: usize, dout: usize, std: f64, rng: &mut R) {
    store.insert_normal(format!("{name}/w"), vec![din, dout], std, rng);
    store.insert_zeros(format!("{name}/b"), vec![dout]);
}

pub(crate) fn dense(g: &mut Graph, store: &ParamStore, name: &str, x: NodeId) -> Result<NodeId> {
    let w = g.param(store, &format!("{name}/w"))?;
    let b = g.param(store, &format!("{name}/b"))?;
    g.linear(x, w, Some(b))
}

/// Fresh parameters: weights `N(0, std²)`, zero biases.
pub fn init_generator<R: Rng + ?Sized>(cfg: &GeneratorConfig, std: f64, rng: &mut R) -> Result<ParamStore> {
    cfg.validate()?;
    let mut s = ParamStore::new();
    let mut din = cfg.classes + cfg.geom_dim;
    for (k, &w) in cfg.encoder_widths.iter().enumerate() {
        init_dense(&mut s, &format!("{PREFIX}/enc{k}"), din, w, std, rng);
        din = w;
    }
    let d = cfg.embed_dim;
    for b in 0..cfg.n_relation_blocks {
        for r in 0..2 {
            init_relation(&mut s, &format!("{PREFIX}/block{b}/rel{r}"), d, cfg.key_width(), std, rng);
        }
        init_dense(&mut s, &format!("{PREFIX}/block{b}/reduce"), d, cfg.bottleneck_width(), std, rng);
        init_dense(&mut s, &format!("{PREFIX}/block{b}/restore"), cfg.bottleneck_width(), d, std, rng);
    }
    let mut din = d;
    for (k, &w) in cfg.decoder_widths.iter().enumerate() {
        init_dense(&mut s, &format!("{PREFIX}/dec{k}"), din, w, std, rng);
        din = w;
    }
    init_dense(&mut s, &format!("{PREFIX}/head_p"), din, cfg.classes, std, rng);
    init_dense(&mut s, &format!("{PREFIX}/head_geom"), din, cfg.geom_dim, std, rng);
    Ok(s)
}

/// Random generator input as `p: [B,N,M]`, `geom: [B,N,G]` tensors.
pub fn sample_z_tensors<R: Rng + ?Sized>(rng: &mut R, cfg: &GeneratorConfig, batch: usize) -> (Tensor, Tensor) {
    let (n, m, gd) = (cfg.n_elements, cfg.classes, cfg.geom_dim);
    let normal = Normal::new(0.5, 0.15).expect("valid sigma");
    let mut p = vec![0.0; batch * n * m];
    let mut geom = Vec::with_capacity(batch * n * gd);
    for row in 0..batch * n {
        if cfg.dense_uniform_p {
            for c in 0..m {
                p[row * m + c] = rng.random_range(0.0..1.0);
            }
        } else {
            p[row * m + rng.random_range(0..m)] = 1.0;
        }
        for _ in 0..gd {
            geom.push(Distribution::<f64>::sample(&normal, rng).clamp(0.0, 1.0));
        }
    }
    (Tensor::new(vec![batch, n, m], p).expect("shape"), Tensor::new(vec![batch, n, gd], geom).expect("shape"))
}

/// One random input layout under `schema` with continuous geometry `kind`.
pub fn sample_z<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &GeneratorConfig,
    schema: &ClassSchema,
    kind: GeomKind,
) -> Result<Layout> {
    if schema.len() != cfg.classes || kind.param_count() != cfg.geom_dim {
        return Err(Error::Schema(format!(
            "generator expects {} classes and {} geometry parameters",
            cfg.classes, cfg.geom_dim
        )));
    }
    let (p, geom) = sample_z_tensors(rng, cfg, 1);
    let elements = (0..cfg.n_elements)
        .map(|i| {
            let pv = p.data()[i * cfg.classes..(i + 1) * cfg.classes].to_vec();
            let gv = &geom.data()[i * cfg.geom_dim..(i + 1) * cfg.geom_dim];
            Ok(Element::new(pv, Geometry::from_params(kind, gv)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Layout::new(schema.clone(), elements)
}

/// Element-wise embedding of `[p, θ]` to `[B,N,D]`.
pub fn encode(g: &mut Graph, store: &ParamStore, cfg: &GeneratorConfig, p: NodeId, geom: NodeId) -> Result<NodeId> {
    let (ps, gs) = (g.shape(p).to_vec(), g.shape(geom).to_vec());
    if ps.len() != 3 || gs.len() != 3 || ps[..2] != gs[..2] || ps[2] != cfg.classes || gs[2] != cfg.geom_dim {
        return Err(Error::Shape(format!(
            "generator input p {ps:?}, geometry {gs:?} for {} classes, {} parameters",
            cfg.classes, cfg.geom_dim
        )));
    }
    let mut h = g.concat_last(p, geom)?;
    for k in 0..cfg.encoder_widths.len() {
        let z = dense(g, store, &format!("{PREFIX}/enc{k}"), h)?;
        h = g.relu(z);
    }
    Ok(h)
}

/// Two relation modules, then `x + W2 relu(W1 x + b1) + b2`.
pub fn relation_block(g: &mut Graph, store: &ParamStore, block: usize, f: NodeId) -> Result<NodeId> {
    let base = format!("{PREFIX}/block{block}");
    let a = relation_module(g, store, &format!("{base}/rel0"), f, true)?;
    let b = relation_module(g, store, &format!("{base}/rel1"), a, true)?;
    let r = dense(g, store, &format!("{base}/reduce"), b)?;
    let r = g.relu(r);
    let r = dense(g, store, &format!("{base}/restore"), r)?;
    g.add(b, r)
}

/// Decoder trunk and the two sigmoid heads: `(p [B,N,M], θ [B,N,G])`.
pub fn decode(g: &mut Graph, store: &ParamStore, cfg: &GeneratorConfig, f: NodeId) -> Result<(NodeId, NodeId)> {
    let mut h = f;
    for k in 0..cfg.decoder_widths.len() {
        let z = dense(g, store, &format!("{PREFIX}/dec{k}"), h)?;
        h = g.relu(z);
    }
    let p = dense(g, store, &format!("{PREFIX}/head_p"), h)?;
    let geom = dense(g, store, &format!("{PREFIX}/head_geom"), h)?;
    Ok((g.sigmoid(p), g.sigmoid(geom)))
}

/// Full forward pass from input tensors.
pub fn generate(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &GeneratorConfig,
    p: NodeId,
    geom: NodeId,
) -> Result<(NodeId, NodeId)> {
    let mut f = encode(g, store, cfg, p, geom)?;
    for b in 0..cfg.n_relation_blocks {
        f = relation_block(g, store, b, f)?;
    }
    decode(g, store, cfg, f)
}

/// Refines a batch of layouts; discrete piece identities carry over.
pub fn generate_batch(store: &ParamStore, cfg: &GeneratorConfig, z: &LayoutBatch) -> Result<LayoutBatch> {
    let mut g = Graph::new();
    let p = g.input(z.p.clone());
    let geom = g.input(z.geom.clone());
    let (op, og) = generate(&mut g, store, cfg, p, geom)?;
    z.with_values(g.value(op).clone(), g.value(og).clone())
}

pub fn generate_layout(store: &ParamStore, cfg: &GeneratorConfig, z: &Layout) -> Result<Layout> {
    let batch = LayoutBatch::from_layouts(std::slice::from_ref(z))?;
    Ok(generate_batch(store, cfg, &batch)?.to_layouts()?.remove(0))
}

fn iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Greedy suppression of same-class duplicates, strongest first. Survivors
/// keep their original relative order.
pub fn nms_dedupe(layout: &Layout, iou_threshold: f64) -> Result<Layout> {
    let boxes: Vec<[f64; 4]> = layout
        .elements()
        .iter()
        .map(|e| {
            e.geom
                .as_box()
                .ok_or_else(|| Error::InvalidGeometry(format!("NMS needs boxes, got {}", e.geom.kind().name())))
        })
        .collect::<Result<_>>()?;
    let els = layout.elements();
    let mut order: Vec<usize> = (0..els.len()).collect();
    order.sort_by(|&a, &b| els[b].max_prob().total_cmp(&els[a].max_prob()).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let dup = kept
            .iter()
            .any(|&k| els[k].argmax_class() == els[i].argmax_class() && iou(boxes[k], boxes[i]) > iou_threshold);
        if !dup {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    let keep: Vec<Element> = kept.into_iter().map(|i| els[i].clone()).collect();
    Layout::new(layout.schema().clone(), keep)
}
