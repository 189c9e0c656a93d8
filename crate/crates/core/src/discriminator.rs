//! The two adversaries: a relation network over the element set and a CNN
//! over the wireframe rendering. Both return logits `[B, 1]`; the
//! probability is their sigmoid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Graph, NodeId, ParamStore, Reduction};
use crate::error::{Error, Result};
use crate::generator::dense;
use crate::layout::{Layout, LayoutBatch};
use crate::relation::{init_relation, relation_module};
use crate::render::{compose_nodes, ElementKinds, RenderConfig};

pub const RELATION_PREFIX: &str = "dis_rel";
pub const WIREFRAME_PREFIX: &str = "dis_wf";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelationDiscConfig {
    pub encoder_widths: Vec<usize>,
    /// `0` means the last encoder width.
    pub key_dim: usize,
    pub n_relation: usize,
    pub head_widths: Vec<usize>,
}

impl Default for RelationDiscConfig {
    fn default() -> Self {
        RelationDiscConfig { encoder_widths: vec![128, 256], key_dim: 0, n_relation: 1, head_widths: vec![128] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WireframeDiscConfig {
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Default for WireframeDiscConfig {
    fn default() -> Self {
        WireframeDiscConfig { channels: vec![32, 64, 128], kernel: 5, stride: 2, pad: 2 }
    }
}

impl WireframeDiscConfig {
    /// Spatial size after the conv stack.
    pub fn output_size(&self, render: &RenderConfig) -> (usize, usize) {
        let step = |s: usize| (s + 2 * self.pad).saturating_sub(self.kernel) / self.stride + 1;
        let (mut w, mut h) = (render.width, render.height);
        for _ in &self.channels {
            w = step(w);
            h = step(h);
        }
        (w, h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DiscriminatorConfig {
    Relation(RelationDiscConfig),
    Wireframe(WireframeDiscConfig),
}

impl DiscriminatorConfig {
    pub fn prefix(&self) -> &'static str {
        match self {
            DiscriminatorConfig::Relation(_) => RELATION_PREFIX,
            DiscriminatorConfig::Wireframe(_) => WIREFRAME_PREFIX,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DiscriminatorConfig::Relation(_) => "relation",
            DiscriminatorConfig::Wireframe(_) => "wireframe",
        }
    }
}

/// Everything a discriminator needs to know about its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscInput {
    pub classes: usize,
    pub geom_dim: usize,
    pub render: RenderConfig,
}

/// A discriminator bound to its input description.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    pub input: DiscInput,
}

fn init_dense<R: Rng + ?Sized>(s: &mut ParamStore, name: &str, din: usize, dout: usize, std: f64, rng: &mut R) {
    s.insert_normal(format!("{name}/w"), vec![din, dout], std, rng);
    s.insert_zeros(format!("{name}/b"), vec![dout]);
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig, input: DiscInput) -> Result<Self> {
        input.render.validate()?;
        match &config {
            DiscriminatorConfig::Relation(c) => {
                if c.encoder_widths.is_empty() || c.encoder_widths.contains(&0) || c.head_widths.contains(&0) {
                    return Err(Error::Config("relation discriminator widths must be positive".into()));
                }
            }
            DiscriminatorConfig::Wireframe(c) => {
                if c.channels.is_empty() || c.kernel % 2 == 0 || c.stride == 0 || c.channels.contains(&0) {
                    return Err(Error::Config(
                        "wireframe discriminator needs channels, an odd kernel and stride ≥ 1".into(),
                    ));
                }
            }
        }
        Ok(Discriminator { config, input })
    }

    pub fn prefix(&self) -> &'static str {
        self.config.prefix()
    }

    pub fn init<R: Rng + ?Sized>(&self, std: f64, rng: &mut R) -> ParamStore {
        let mut s = ParamStore::new();
        let pre = self.prefix();
        match &self.config {
            DiscriminatorConfig::Relation(c) => {
                let mut din = self.input.classes + self.input.geom_dim;
                for (k, &w) in c.encoder_widths.iter().enumerate() {
                    init_dense(&mut s, &format!("{pre}/enc{k}"), din, w, std, rng);
                    din = w;
                }
                let key = if c.key_dim == 0 { din } else { c.key_dim };
                for r in 0..c.n_relation {
                    init_relation(&mut s, &format!("{pre}/rel{r}"), din, key, std, rng);
                }
                for (k, &w) in c.head_widths.iter().enumerate() {
                    init_dense(&mut s, &format!("{pre}/head{k}"), din, w, std, rng);
                    din = w;
                }
                init_dense(&mut s, &format!("{pre}/out"), din, 1, std, rng);
            }
            DiscriminatorConfig::Wireframe(c) => {
                let mut cin = self.input.classes;
                for (k, &co) in c.channels.iter().enumerate() {
                    s.insert_normal(format!("{pre}/conv{k}/k"), vec![co, cin, c.kernel, c.kernel], std, rng);
                    s.insert_zeros(format!("{pre}/conv{k}/b"), vec![co]);
                    cin = co;
                }
                let (w, h) = c.output_size(&self.input.render);
                init_dense(&mut s, &format!("{pre}/out"), cin * w * h, 1, std, rng);
            }
        }
        s
    }

    /// Logits `[B, 1]` for `p: [B,N,M]`, `geom: [B,N,G]`.
    pub fn logits(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        p: NodeId,
        geom: NodeId,
        kinds: &ElementKinds,
    ) -> Result<NodeId> {
        let (ps, gs) = (g.shape(p).to_vec(), g.shape(geom).to_vec());
        if ps.len() != 3
            || gs.len() != 3
            || ps[..2] != gs[..2]
            || ps[2] != self.input.classes
            || gs[2] != self.input.geom_dim
        {
            return Err(Error::Shape(format!(
                "discriminator input p {ps:?}, geometry {gs:?} for {} classes, {} parameters",
                self.input.classes, self.input.geom_dim
            )));
        }
        let pre = self.prefix();
        match &self.config {
            DiscriminatorConfig::Relation(c) => {
                let mut h = g.concat_last(p, geom)?;
                for k in 0..c.encoder_widths.len() {
                    let z = dense(g, store, &format!("{pre}/enc{k}"), h)?;
                    h = g.relu(z);
                }
                for r in 0..c.n_relation {
                    h = relation_module(g, store, &format!("{pre}/rel{r}"), h, false)?;
                }
                // Feature-wise max over the element axis.
                let mut h = g.reduce(h, Reduction::Max, 1)?;
                for k in 0..c.head_widths.len() {
                    let z = dense(g, store, &format!("{pre}/head{k}"), h)?;
                    h = g.relu(z);
                }
                dense(g, store, &format!("{pre}/out"), h)
            }
            DiscriminatorConfig::Wireframe(c) => {
                let mut h = compose_nodes(g, p, geom, kinds, &self.input.render)?;
                for k in 0..c.channels.len() {
                    let kern = g.param(store, &format!("{pre}/conv{k}/k"))?;
                    let bias = g.param(store, &format!("{pre}/conv{k}/b"))?;
                    let z = g.conv2d(h, kern, Some(bias), c.stride, c.pad)?;
                    h = g.relu(z);
                }
                let b = ps[0];
                let flat = g.value(h).len() / b.max(1);
                let h = g.reshape(h, vec![b, flat])?;
                dense(g, store, &format!("{pre}/out"), h)
            }
        }
    }

    /// Logits for a batch, without gradients.
    pub fn logits_batch(&self, store: &ParamStore, batch: &LayoutBatch) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = g.input(batch.p.clone());
        let geom = g.input(batch.geom.clone());
        let out = self.logits(&mut g, store, p, geom, &ElementKinds::of_batch(batch))?;
        Ok(g.value(out).data().to_vec())
    }

    /// Real-probabilities for a batch.
    pub fn score_batch(&self, store: &ParamStore, batch: &LayoutBatch) -> Result<Vec<f64>> {
        Ok(self.logits_batch(store, batch)?.into_iter().map(sigmoid).collect())
    }

    pub fn score(&self, store: &ParamStore, layout: &Layout) -> Result<f64> {
        Ok(self.score_batch(store, &LayoutBatch::from_layouts(std::slice::from_ref(layout))?)?[0])
    }
}
