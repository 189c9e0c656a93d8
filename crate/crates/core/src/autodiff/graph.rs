use std::collections::{BTreeMap, HashMap};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pointwise {
    Relu,
    Sigmoid,
    Abs,
    /// `min(max(0, d), 1)`
    Clamp01,
    /// `max(0, 1 - |d|)`
    Tent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Max,
    Mean,
    Sum,
}

/// An operation whose forward value is computed outside the graph and whose
/// backward rule is supplied by the implementor.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    /// Gradients for each input, in input order. `None` means zero.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    Linear { x: NodeId, w: NodeId, b: Option<NodeId> },
    Conv2d { x: NodeId, k: NodeId, b: Option<NodeId>, stride: usize, pad: usize },
    Pointwise { x: NodeId, kind: Pointwise },
    Reduce { x: NodeId, kind: Reduction, outer: usize, len: usize, inner: usize, argmax: Vec<u32> },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Reshape(NodeId),
    Concat { a: NodeId, b: NodeId, da: usize, db: usize },
    SumAll(NodeId),
    BceWithLogits { logits: NodeId, target: f64 },
    SoftmaxXent { logits: NodeId, labels: Vec<usize> },
    Custom { inputs: Vec<NodeId>, op: Box<dyn CustomOp> },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Linear { x, w, b } => [Some(*x), Some(*w), *b].into_iter().flatten().collect(),
            Op::Conv2d { x, k, b, .. } => [Some(*x), Some(*k), *b].into_iter().flatten().collect(),
            Op::Pointwise { x, .. } | Op::Reduce { x, .. } => vec![*x],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Concat { a, b, .. } => vec![*a, *b],
            Op::Scale(x, _) | Op::Reshape(x) | Op::SumAll(x) => vec![*x],
            Op::BceWithLogits { logits, .. } | Op::SoftmaxXent { logits, .. } => vec![*logits],
            Op::Custom { inputs, .. } => inputs.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    /// False when no differentiable leaf feeds this node.
    needs_grad: bool,
}

/// Smallest distance to a kink seen during forward evaluation, plus a hash of
/// every branch taken.
#[derive(Clone, Copy, Debug)]
struct KinkLog {
    margin: f64,
    signature: u64,
}

/// Append-only record of operations for reverse-mode differentiation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, NodeId>,
    bindings: HashMap<String, NodeId>,
    kinks: Option<KinkLog>,
    frozen: Vec<String>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph that records kink distances and branch choices; used by gradient checks.
    pub fn with_kink_tracking() -> Self {
        Graph { kinks: Some(KinkLog { margin: f64::INFINITY, signature: 0xcbf2_9ce4_8422_2325 }), ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tracks_kinks(&self) -> bool {
        self.kinks.is_some()
    }

    /// Records that a piecewise function was evaluated `distance` away from its
    /// nearest kink, on branch `branch`.
    #[inline]
    pub fn note_kink(&mut self, distance: f64, branch: u64) {
        if let Some(k) = self.kinks.as_mut() {
            k.margin = k.margin.min(distance);
            k.signature = (k.signature ^ branch).wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn kink_margin(&self) -> Option<f64> {
        self.kinks.map(|k| k.margin)
    }

    pub fn kink_signature(&self) -> Option<u64> {
        self.kinks.map(|k| k.signature)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let needs_grad = op.inputs().iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Leaf to differentiate against.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: true });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf that receives no gradient; work that only feeds constants is
    /// skipped in the backward pass.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Parameters whose name starts with `prefix` load as constants from now on.
    pub fn freeze_params(&mut self, prefix: impl Into<String>) {
        self.frozen.push(prefix.into());
    }

    /// Routes every later `param(name)` lookup to `node`.
    pub fn bind(&mut self, name: impl Into<String>, node: NodeId) {
        let name = name.into();
        self.params.insert(name.clone(), node);
        self.bindings.insert(name, node);
    }

    /// Leaf for a named parameter; repeated lookups return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.bindings.get(name) {
            return Ok(id);
        }
        if let Some(&id) = self.params.get(name) {
            return Ok(id);
        }
        let value = store.value(name).ok_or_else(|| Error::Shape(format!("unknown parameter {name:?}")))?.clone();
        let id = if self.frozen.iter().any(|f| name.starts_with(f.as_str())) {
            self.constant(value)
        } else {
            self.input(value)
        };
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn param_nodes(&self) -> &BTreeMap<String, NodeId> {
        &self.params
    }

    /// `y = x W + b` over the last axis of `x`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if ws.len() != 2 || xs.last() != Some(&ws[0]) {
            return Err(Error::Shape(format!("linear: x {xs:?} against W {ws:?}")));
        }
        let (din, dout) = (ws[0], ws[1]);
        if let Some(b) = b {
            if self.shape(b) != [dout] {
                return Err(Error::Shape(format!("linear: bias {:?} for output width {dout}", self.shape(b))));
            }
        }
        let mut out_shape = xs.to_vec();
        *out_shape.last_mut().unwrap() = dout;
        let rows = self.value(x).len() / din.max(1);
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![0.0; rows * dout];
        for r in 0..rows {
            let orow = &mut out[r * dout..(r + 1) * dout];
            if let Some(b) = b {
                orow.copy_from_slice(self.nodes[b.0].value.data());
            }
            let xrow = &xv[r * din..(r + 1) * din];
            for (k, &xk) in xrow.iter().enumerate() {
                if xk == 0.0 {
                    continue;
                }
                let wrow = &wv[k * dout..(k + 1) * dout];
                for (o, &wkj) in orow.iter_mut().zip(wrow) {
                    *o += xk * wkj;
                }
            }
        }
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::Linear { x, w, b }))
    }

    /// Cross-correlation with zero padding. `x: [B,C,H,W]`, `k: [Co,C,Kh,Kw]`.
    pub fn conv2d(&mut self, x: NodeId, k: NodeId, b: Option<NodeId>, stride: usize, pad: usize) -> Result<NodeId> {
        let (xs, ks) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if xs.len() != 4 || ks.len() != 4 || xs[1] != ks[1] {
            return Err(Error::Shape(format!("conv2d: x {xs:?} against kernel {ks:?}")));
        }
        if ks[2] % 2 == 0 || ks[3] % 2 == 0 || stride == 0 {
            return Err(Error::Shape(format!("conv2d: kernel {ks:?} must be odd-sized and stride ≥ 1")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ks[0]] {
                return Err(Error::Shape(format!("conv2d: bias {:?}", self.shape(b))));
            }
        }
        let geo = ConvGeom::new(&xs, &ks, stride, pad)?;
        let xv = self.value(x).data();
        let kv = self.value(k).data();
        let mut out = vec![0.0; geo.batch * geo.co * geo.out_pixels()];
        let mut cols = vec![0.0; geo.patch() * geo.out_pixels()];
        for bi in 0..geo.batch {
            geo.im2col(&xv[bi * geo.in_size()..(bi + 1) * geo.in_size()], &mut cols);
            let ob = &mut out[bi * geo.co * geo.out_pixels()..(bi + 1) * geo.co * geo.out_pixels()];
            for co in 0..geo.co {
                let orow = &mut ob[co * geo.out_pixels()..(co + 1) * geo.out_pixels()];
                if let Some(b) = b {
                    orow.fill(self.nodes[b.0].value.data()[co]);
                }
                let krow = &kv[co * geo.patch()..(co + 1) * geo.patch()];
                for (pi, &kw) in krow.iter().enumerate() {
                    if kw == 0.0 {
                        continue;
                    }
                    let crow = &cols[pi * geo.out_pixels()..(pi + 1) * geo.out_pixels()];
                    for (o, &c) in orow.iter_mut().zip(crow) {
                        *o += kw * c;
                    }
                }
            }
        }
        let value = Tensor::new(vec![geo.batch, geo.co, geo.ho, geo.wo], out)?;
        Ok(self.push(value, Op::Conv2d { x, k, b, stride, pad }))
    }

    pub fn pointwise(&mut self, x: NodeId, kind: Pointwise) -> NodeId {
        let src = &self.nodes[x.0].value;
        let value = src.map(|v| pointwise_value(kind, v));
        if self.kinks.is_some() {
            let args: Vec<f64> = src.data().to_vec();
            for v in args {
                let (dist, branch) = pointwise_kink(kind, v);
                self.note_kink(dist, branch);
            }
        }
        self.push(value, Op::Pointwise { x, kind })
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.pointwise(x, Pointwise::Relu)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.pointwise(x, Pointwise::Sigmoid)
    }

    /// Reduction along `axis`; the axis is removed from the shape. Max sends its
    /// gradient to the lowest index among tied maxima.
    pub fn reduce(&mut self, x: NodeId, kind: Reduction, axis: usize) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Shape(format!("reduce: axis {axis} for shape {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        if len == 0 {
            return Err(Error::Shape("reduce over an empty axis".into()));
        }
        let xv = self.value(x).data().to_vec();
        let mut out = vec![0.0; outer * inner];
        let mut argmax = Vec::new();
        match kind {
            Reduction::Sum | Reduction::Mean => {
                for o in 0..outer {
                    for l in 0..len {
                        let src = &xv[(o * len + l) * inner..(o * len + l + 1) * inner];
                        for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                if kind == Reduction::Mean {
                    let inv = 1.0 / len as f64;
                    out.iter_mut().for_each(|v| *v *= inv);
                }
            }
            Reduction::Max => {
                argmax = vec![0u32; outer * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut best = xv[o * len * inner + i];
                        let mut arg = 0;
                        let mut second = f64::NEG_INFINITY;
                        for l in 1..len {
                            let v = xv[(o * len + l) * inner + i];
                            if v > best {
                                second = best;
                                best = v;
                                arg = l;
                            } else if v > second {
                                second = v;
                            }
                        }
                        out[o * inner + i] = best;
                        argmax[o * inner + i] = arg as u32;
                        if self.kinks.is_some() && len > 1 && best != 0.0 {
                            self.note_kink(best - second, arg as u64);
                        }
                    }
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::Reduce { x, kind, outer, len, inner, argmax }))
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip_values(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let v = self.zip_values(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let v = self.zip_values(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let v = self.zip_values(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> NodeId {
        let v = self.value(x).map(|v| v * s);
        self.push(v, Op::Scale(x, s))
    }

    pub fn reshape(&mut self, x: NodeId, shape: impl Into<Vec<usize>>) -> Result<NodeId> {
        let v = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(v, Op::Reshape(x)))
    }

    /// Concatenation along the last axis; all leading dimensions must agree.
    pub fn concat_last(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::Shape(format!("concat: {sa:?} with {sb:?}")));
        }
        let (da, db) = (*sa.last().unwrap(), *sb.last().unwrap());
        let rows = self.value(a).len() / da.max(1);
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(rows * (da + db));
        for r in 0..rows {
            out.extend_from_slice(&av[r * da..(r + 1) * da]);
            out.extend_from_slice(&bv[r * db..(r + 1) * db]);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = da + db;
        let v = Tensor::new(shape, out)?;
        Ok(self.push(v, Op::Concat { a, b, da, db }))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).len() as f64;
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n)
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against a constant target.
    pub fn bce_with_logits(&mut self, logits: NodeId, target: f64) -> NodeId {
        let z = self.value(logits);
        let n = z.len() as f64;
        let loss: f64 = z.data().iter().map(|&z| softplus(z) - target * z).sum::<f64>() / n;
        self.push(Tensor::scalar(loss), Op::BceWithLogits { logits, target })
    }

    /// Mean softmax cross-entropy; `logits: [B,K]`.
    pub fn softmax_xent(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() || labels.iter().any(|&l| l >= s[1]) {
            return Err(Error::Shape(format!("softmax_xent: logits {s:?} with {} labels", labels.len())));
        }
        let k = s[1];
        let z = self.value(logits).data();
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = &z[r * k..(r + 1) * k];
            loss += log_sum_exp(row) - row[label];
        }
        loss /= labels.len() as f64;
        Ok(self.push(Tensor::scalar(loss), Op::SoftmaxXent { logits, labels: labels.to_vec() }))
    }

    /// Records an operation implemented elsewhere.
    pub fn custom(&mut self, inputs: Vec<NodeId>, value: Tensor, op: Box<dyn CustomOp>) -> NodeId {
        self.push(value, Op::Custom { inputs, op })
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Shape(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss).to_vec(), 1.0));
        for i in (0..=loss.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) || !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let mut acc = |id: NodeId, t: Tensor| {
            if !self.nodes[id.0].needs_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (din, dout) = (wv.shape()[0], wv.shape()[1]);
                let rows = xv.len() / din.max(1);
                let gd = g.data();
                let (want_x, want_w) = (self.needs_grad(*x), self.needs_grad(*w));
                let mut dx = vec![0.0; xv.len()];
                let mut dw = vec![0.0; wv.len()];
                let mut db = vec![0.0; dout];
                for r in 0..rows {
                    let grow = &gd[r * dout..(r + 1) * dout];
                    let xrow = &xv.data()[r * din..(r + 1) * din];
                    for (d, gj) in db.iter_mut().zip(grow) {
                        *d += gj;
                    }
                    for k in 0..din {
                        if want_x {
                            dx[r * din + k] = dot(grow, &wv.data()[k * dout..(k + 1) * dout]);
                        }
                        let xk = xrow[k];
                        if want_w && xk != 0.0 {
                            for (d, gj) in dw[k * dout..(k + 1) * dout].iter_mut().zip(grow) {
                                *d += xk * gj;
                            }
                        }
                    }
                }
                acc(*x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                acc(*w, Tensor::new(wv.shape().to_vec(), dw).unwrap());
                if let Some(b) = b {
                    acc(*b, Tensor::vector(db));
                }
            }
            Op::Conv2d { x, k, b, stride, pad } => {
                let (xv, kv) = (self.value(*x), self.value(*k));
                let (want_x, want_k) = (self.needs_grad(*x), self.needs_grad(*k));
                let geo = ConvGeom::new(xv.shape(), kv.shape(), *stride, *pad).unwrap();
                let op = geo.out_pixels();
                let mut dx = vec![0.0; if want_x { xv.len() } else { 0 }];
                let mut dk = vec![0.0; if want_k { kv.len() } else { 0 }];
                let mut db = vec![0.0; geo.co];
                let mut cols = vec![0.0; if want_k { geo.patch() * op } else { 0 }];
                let mut dcols = vec![0.0; if want_x { geo.patch() * op } else { 0 }];
                for bi in 0..geo.batch {
                    if want_k {
                        geo.im2col(&xv.data()[bi * geo.in_size()..(bi + 1) * geo.in_size()], &mut cols);
                    }
                    dcols.fill(0.0);
                    let gb = &g.data()[bi * geo.co * op..(bi + 1) * geo.co * op];
                    for co in 0..geo.co {
                        let grow = &gb[co * op..(co + 1) * op];
                        db[co] += grow.iter().sum::<f64>();
                        let krow = &kv.data()[co * geo.patch()..(co + 1) * geo.patch()];
                        for pi in 0..geo.patch() {
                            if want_k {
                                dk[co * geo.patch() + pi] += dot(grow, &cols[pi * op..(pi + 1) * op]);
                            }
                            let kw = krow[pi];
                            if want_x && kw != 0.0 {
                                for (d, gv) in dcols[pi * op..(pi + 1) * op].iter_mut().zip(grow) {
                                    *d += kw * gv;
                                }
                            }
                        }
                    }
                    if want_x {
                        geo.col2im(&dcols, &mut dx[bi * geo.in_size()..(bi + 1) * geo.in_size()]);
                    }
                }
                if want_x {
                    acc(*x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                }
                if want_k {
                    acc(*k, Tensor::new(kv.shape().to_vec(), dk).unwrap());
                }
                if let Some(b) = b {
                    acc(*b, Tensor::vector(db));
                }
            }
            Op::Pointwise { x, kind } => {
                let xv = self.value(*x);
                let data = xv.data().iter().zip(g.data()).map(|(&v, &gv)| gv * pointwise_deriv(*kind, v)).collect();
                acc(*x, Tensor::new(xv.shape().to_vec(), data).unwrap());
            }
            Op::Reduce { x, kind, outer, len, inner, argmax } => {
                let (outer, len, inner) = (*outer, *len, *inner);
                let mut dx = vec![0.0; outer * len * inner];
                let gd = g.data();
                match kind {
                    Reduction::Sum | Reduction::Mean => {
                        let s = if *kind == Reduction::Mean { 1.0 / len as f64 } else { 1.0 };
                        for o in 0..outer {
                            for l in 0..len {
                                for i in 0..inner {
                                    dx[(o * len + l) * inner + i] = gd[o * inner + i] * s;
                                }
                            }
                        }
                    }
                    Reduction::Max => {
                        for o in 0..outer {
                            for i in 0..inner {
                                let l = argmax[o * inner + i] as usize;
                                dx[(o * len + l) * inner + i] = gd[o * inner + i];
                            }
                        }
                    }
                }
                acc(*x, Tensor::new(self.shape(*x).to_vec(), dx).unwrap());
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da: Vec<f64> = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                let dbv: Vec<f64> = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                acc(*a, Tensor::new(av.shape().to_vec(), da).unwrap());
                acc(*b, Tensor::new(bv.shape().to_vec(), dbv).unwrap());
            }
            Op::Scale(x, s) => acc(*x, g.map(|v| v * s)),
            Op::Reshape(x) => {
                acc(*x, g.clone().reshaped(self.shape(*x).to_vec()).unwrap());
            }
            Op::Concat { a, b, da, db } => {
                let rows = g.len() / (da + db);
                let mut ga = Vec::with_capacity(rows * da);
                let mut gb = Vec::with_capacity(rows * db);
                for r in 0..rows {
                    let row = &g.data()[r * (da + db)..(r + 1) * (da + db)];
                    ga.extend_from_slice(&row[..*da]);
                    gb.extend_from_slice(&row[*da..]);
                }
                acc(*a, Tensor::new(self.shape(*a).to_vec(), ga).unwrap());
                acc(*b, Tensor::new(self.shape(*b).to_vec(), gb).unwrap());
            }
            Op::SumAll(x) => {
                acc(*x, Tensor::full(self.shape(*x).to_vec(), g.item()));
            }
            Op::BceWithLogits { logits, target } => {
                let z = self.value(*logits);
                let s = g.item() / z.len() as f64;
                acc(*logits, z.map(|z| (sigmoid(z) - target) * s));
            }
            Op::SoftmaxXent { logits, labels } => {
                let z = self.value(*logits);
                let k = z.shape()[1];
                let s = g.item() / labels.len() as f64;
                let mut dz = vec![0.0; z.len()];
                for (r, &label) in labels.iter().enumerate() {
                    let row = &z.data()[r * k..(r + 1) * k];
                    let lse = log_sum_exp(row);
                    for c in 0..k {
                        let p = (row[c] - lse).exp();
                        dz[r * k + c] = s * (p - if c == label { 1.0 } else { 0.0 });
                    }
                }
                acc(*logits, Tensor::new(z.shape().to_vec(), dz).unwrap());
            }
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor> = inputs.iter().map(|&id| self.value(id)).collect();
                let gin = op.backward(&values, &node.value, g);
                debug_assert_eq!(gin.len(), inputs.len(), "{} backward arity", op.name());
                for (&id, gi) in inputs.iter().zip(gin) {
                    if let Some(gi) = gi {
                        acc(id, gi);
                    }
                }
            }
        }
    }
}

/// Gradients of a scalar with respect to every node of a graph.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: BTreeMap<String, NodeId>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `id`; zeros if the loss does not depend on it.
    pub fn wrt(&self, id: NodeId) -> Tensor {
        self.grads[id.0].clone().unwrap_or_else(|| Tensor::zeros(self.shapes[id.0].clone()))
    }

    pub fn param(&self, name: &str) -> Option<Tensor> {
        self.params.get(name).map(|&id| self.wrt(id))
    }

    /// Named parameter gradients whose name starts with `prefix`.
    pub fn params_with_prefix(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .filter(|(name, _)| name.starts_with(prefix))
            .map(|(name, &id)| (name.clone(), self.wrt(id)))
            .collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `max(0, 1 - |d|)`
#[inline]
pub fn tent(d: f64) -> f64 {
    (1.0 - d.abs()).max(0.0)
}

/// Derivative of [`tent`], zero at `d = 0` and at `|d| = 1`.
#[inline]
pub fn tent_deriv(d: f64) -> f64 {
    if d > 0.0 && d < 1.0 {
        -1.0
    } else if d < 0.0 && d > -1.0 {
        1.0
    } else {
        0.0
    }
}

/// `min(max(0, d), 1)`
#[inline]
pub fn clamp01(d: f64) -> f64 {
    d.clamp(0.0, 1.0)
}

/// Derivative of [`clamp01`], zero at both boundaries.
#[inline]
pub fn clamp01_deriv(d: f64) -> f64 {
    if d > 0.0 && d < 1.0 {
        1.0
    } else {
        0.0
    }
}

/// Distance to the nearest kink of the tent kernel and the branch taken.
#[inline]
pub fn tent_kink(d: f64) -> (f64, u64) {
    let a = d.abs();
    let branch = if a >= 1.0 {
        0
    } else if d < 0.0 {
        1
    } else if d > 0.0 {
        2
    } else {
        3
    };
    (a.min((a - 1.0).abs()), branch)
}

#[inline]
pub fn clamp01_kink(d: f64) -> (f64, u64) {
    let branch = if d <= 0.0 {
        4
    } else if d >= 1.0 {
        5
    } else {
        6
    };
    (d.abs().min((d - 1.0).abs()), branch)
}

fn pointwise_value(kind: Pointwise, v: f64) -> f64 {
    match kind {
        Pointwise::Relu => v.max(0.0),
        Pointwise::Sigmoid => sigmoid(v),
        Pointwise::Abs => v.abs(),
        Pointwise::Clamp01 => clamp01(v),
        Pointwise::Tent => tent(v),
    }
}

fn pointwise_deriv(kind: Pointwise, v: f64) -> f64 {
    match kind {
        Pointwise::Relu => {
            if v > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Pointwise::Sigmoid => {
            let s = sigmoid(v);
            s * (1.0 - s)
        }
        Pointwise::Abs => {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        Pointwise::Clamp01 => clamp01_deriv(v),
        Pointwise::Tent => tent_deriv(v),
    }
}

fn pointwise_kink(kind: Pointwise, v: f64) -> (f64, u64) {
    match kind {
        Pointwise::Relu | Pointwise::Abs => (v.abs(), (v > 0.0) as u64),
        Pointwise::Sigmoid => (f64::INFINITY, 0),
        Pointwise::Clamp01 => clamp01_kink(v),
        Pointwise::Tent => tent_kink(v),
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    batch: usize,
    c: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn new(xs: &[usize], ks: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (h, w, kh, kw) = (xs[2], xs[3], ks[2], ks[3]);
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::Shape(format!("conv2d: kernel {ks:?} larger than padded input {xs:?}")));
        }
        Ok(ConvGeom {
            batch: xs[0],
            c: xs[1],
            h,
            w,
            co: ks[0],
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        })
    }

    fn in_size(&self) -> usize {
        self.c * self.h * self.w
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_pixels(&self) -> usize {
        self.ho * self.wo
    }

    /// Fills `cols[(c,ky,kx), (oy,ox)]` with the padded input patch values.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let op = self.out_pixels();
        for c in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * op;
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let dst = &mut cols[row + oy * self.wo..row + (oy + 1) * self.wo];
                        if iy < 0 || iy >= self.h as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let src = &x[(c * self.h + iy as usize) * self.w..];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *d = if ix < 0 || ix >= self.w as isize { 0.0 } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeom::im2col`], accumulating into `dx`.
    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let op = self.out_pixels();
        for c in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * op;
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let base = (c * self.h + iy as usize) * self.w;
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dx[base + ix as usize] += cols[row + oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}
