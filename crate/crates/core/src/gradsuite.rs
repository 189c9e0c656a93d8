//! Finite-difference verification of every differentiable stage: the three
//! element rasterizers, composition, both discriminators and the generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{GradCheck, Graph, NodeId, ParamStore, Tensor};
use crate::discriminator::{DiscInput, Discriminator, DiscriminatorConfig, RelationDiscConfig, WireframeDiscConfig};
use crate::error::Result;
use crate::generator::{generate, init_generator, GeneratorConfig};
use crate::layout::GeomKind;
use crate::render::{compose_nodes, render_point, render_rect, render_triangle, ElementKinds, RenderConfig};

/// Worst relative error seen for one stage.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteRow {
    pub op: &'static str,
    pub configs: usize,
    pub max_error: f64,
}

pub const SUITE_OPS: [&str; 7] = [
    "render_point",
    "render_rect",
    "render_triangle",
    "compose",
    "relation_discriminator",
    "wireframe_discriminator",
    "generator",
];

const B: usize = 1;
const N: usize = 3;
const M: usize = 2;

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    Tensor::vector((0..n).map(|_| rng.random_range(0.05..0.95)).collect())
}

fn weights(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape matches")
}

/// `x[start..end]` as a node of `shape`, through a 0/1 selection matrix.
fn slice(g: &mut Graph, x: NodeId, start: usize, end: usize, shape: Vec<usize>) -> Result<NodeId> {
    let len = g.value(x).len();
    let width = end - start;
    let mut sel = vec![0.0; len * width];
    for k in start..end {
        sel[k * width + (k - start)] = 1.0;
    }
    let s = g.input(Tensor::new(vec![len, width], sel)?);
    let row = g.reshape(x, vec![1, len])?;
    let y = g.linear(row, s, None)?;
    g.reshape(y, shape)
}

/// Gives every bias a random value so no unit starts exactly at a relu kink.
fn jitter_biases(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let names: Vec<String> = store.names().filter(|n| n.ends_with("/b")).map(String::from).collect();
    for name in names {
        for v in store.value_mut(&name).expect("listed").data_mut() {
            *v = rng.random_range(-0.3..0.3);
        }
    }
}

fn weighted_sum(g: &mut Graph, x: NodeId, w: &Tensor) -> Result<NodeId> {
    let wn = g.input(w.clone());
    let prod = g.mul(x, wn)?;
    Ok(g.sum_all(prod))
}

fn element(check: &GradCheck, kind: GeomKind, cfg: &RenderConfig, rng: &mut ChaCha8Rng) -> Result<f64> {
    let w = weights(rng, vec![cfg.height, cfg.width]);
    let f = |g: &mut Graph, theta: NodeId| {
        let img = match kind {
            GeomKind::Point => render_point(g, theta, cfg)?,
            GeomKind::Box => render_rect(g, theta, cfg)?,
            _ => render_triangle(g, theta, cfg)?,
        };
        weighted_sum(g, img, &w)
    };
    let n = kind.param_count();
    check.sampled(f, |r| uniform(r, n), rng)
}

fn compose_case(check: &GradCheck, cfg: &RenderConfig, rng: &mut ChaCha8Rng) -> Result<f64> {
    let kind = [GeomKind::Point, GeomKind::Box, GeomKind::Triangle][rng.random_range(0..3)];
    let gc = kind.param_count();
    let w = weights(rng, vec![B, M, cfg.height, cfg.width]);
    let np = B * N * M;
    let f = |g: &mut Graph, x: NodeId| {
        let len = g.value(x).len();
        let p = slice(g, x, 0, np, vec![B, N, M])?;
        let geom = slice(g, x, np, len, vec![B, N, gc])?;
        let img = compose_nodes(g, p, geom, &ElementKinds::uniform(kind), cfg)?;
        weighted_sum(g, img, &w)
    };
    check.sampled(f, |r| uniform(r, np + B * N * gc), rng)
}

fn disc_case(check: &GradCheck, config: DiscriminatorConfig, cfg: &RenderConfig, rng: &mut ChaCha8Rng) -> Result<f64> {
    let input = DiscInput { classes: M, geom_dim: 4, render: cfg.clone() };
    let d = Discriminator::new(config, input)?;
    let mut store = d.init(0.5, rng);
    jitter_biases(&mut store, rng);
    let kinds = ElementKinds::uniform(GeomKind::Box);
    let np = B * N * M;
    let f = |g: &mut Graph, x: NodeId| {
        let len = g.value(x).len();
        let p = slice(g, x, 0, np, vec![B, N, M])?;
        let geom = slice(g, x, np, len, vec![B, N, 4])?;
        let z = d.logits(g, &store, p, geom, &kinds)?;
        Ok(g.sum_all(z))
    };
    check.sampled(f, |r| uniform(r, np + B * N * 4), rng)
}

/// Checks the generator with respect to its input set and to one parameter
/// tensor picked at random.
fn generator_case(check: &GradCheck, rng: &mut ChaCha8Rng) -> Result<f64> {
    let cfg = GeneratorConfig {
        classes: M,
        geom_dim: 4,
        n_elements: N,
        embed_dim: 6,
        encoder_widths: vec![6],
        decoder_widths: vec![5],
        n_relation_blocks: 1,
        bottleneck_reduction: 2,
        ..Default::default()
    };
    let mut store = init_generator(&cfg, 0.5, rng)?;
    jitter_biases(&mut store, rng);
    let (wp, wg) = (weights(rng, vec![B, N, M]), weights(rng, vec![B, N, 4]));
    let np = B * N * M;
    let loss = |g: &mut Graph, p: NodeId, geom: NodeId| -> Result<NodeId> {
        let (op, og) = generate(g, &store, &cfg, p, geom)?;
        let a = weighted_sum(g, op, &wp)?;
        let b = weighted_sum(g, og, &wg)?;
        g.add(a, b)
    };
    let wrt_input = |g: &mut Graph, x: NodeId| {
        let len = g.value(x).len();
        let p = slice(g, x, 0, np, vec![B, N, M])?;
        let geom = slice(g, x, np, len, vec![B, N, 4])?;
        loss(g, p, geom)
    };
    let input_err = check.sampled(wrt_input, |r| uniform(r, np + B * N * 4), rng)?;

    let names: Vec<String> = store.names().map(String::from).collect();
    let name = names[rng.random_range(0..names.len())].clone();
    let shape = store.value(&name).expect("listed").shape().to_vec();
    let nw = store.value(&name).expect("listed").len();
    // The leaf holds the parameter followed by the input set, so a kink in
    // the input is resampled along with the weights.
    let wrt_param = |g: &mut Graph, x: NodeId| {
        let len = g.value(x).len();
        let w = slice(g, x, 0, nw, shape.clone())?;
        g.bind(name.clone(), w);
        let p = slice(g, x, nw, nw + np, vec![B, N, M])?;
        let geom = slice(g, x, nw + np, len, vec![B, N, 4])?;
        loss(g, p, geom)
    };
    let check = GradCheck { max_coords: Some(12), ..*check };
    let param_err = check.sampled(
        wrt_param,
        |r| {
            let v = store.value(&name).expect("listed");
            let mut x: Vec<f64> = v.data().iter().map(|x| x + r.random_range(-0.1..0.1)).collect();
            x.extend((0..np + B * N * 4).map(|_| r.random_range(0.05..0.95)));
            Tensor::vector(x)
        },
        rng,
    )?;
    Ok(input_err.max(param_err))
}

/// Runs `configs` randomized configurations of every stage.
pub fn gradient_suite(seed: u64, configs: usize, check: &GradCheck) -> Result<Vec<SuiteRow>> {
    let cfg = RenderConfig::new(8, 7)?;
    let mut rows = Vec::new();
    for (k, &op) in SUITE_OPS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut worst: f64 = 0.0;
        for _ in 0..configs {
            let err = match k {
                0 => element(check, GeomKind::Point, &cfg, &mut rng)?,
                1 => element(check, GeomKind::Box, &cfg, &mut rng)?,
                2 => element(check, GeomKind::Triangle, &cfg, &mut rng)?,
                3 => compose_case(check, &cfg, &mut rng)?,
                4 => disc_case(
                    check,
                    DiscriminatorConfig::Relation(RelationDiscConfig {
                        encoder_widths: vec![5],
                        head_widths: vec![4],
                        ..Default::default()
                    }),
                    &cfg,
                    &mut rng,
                )?,
                5 => disc_case(
                    check,
                    DiscriminatorConfig::Wireframe(WireframeDiscConfig {
                        channels: vec![2, 3, 3],
                        kernel: 3,
                        stride: 2,
                        pad: 1,
                    }),
                    &cfg,
                    &mut rng,
                )?,
                _ => generator_case(check, &mut rng)?,
            };
            worst = worst.max(err);
        }
        rows.push(SuiteRow { op, configs, max_error: worst });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let rows = gradient_suite(1, 3, &GradCheck::default()).unwrap();
        assert_eq!(rows.len(), SUITE_OPS.len());
        for r in rows {
            assert!(r.max_error < 1e-4, "{r:?}");
        }
    }
}
