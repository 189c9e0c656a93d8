use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// A parameter tensor with its Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Param { value, m: Tensor::zeros(shape.clone()), v: Tensor::zeros(shape), step: 0 }
    }
}

/// Named parameters plus optimizer state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), Param::new(value));
    }

    pub fn insert_param(&mut self, name: impl Into<String>, param: Param) {
        self.params.insert(name.into(), param);
    }

    /// Weight drawn from `N(0, std²)`.
    pub fn insert_normal<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: impl Into<Vec<usize>>,
        std: f64,
        rng: &mut R,
    ) {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        let data = (0..n).map(|_| normal.sample(rng)).collect();
        self.insert(name, Tensor::new(shape, data).expect("sized"));
    }

    pub fn insert_zeros(&mut self, name: impl Into<String>, shape: impl Into<Vec<usize>>) {
        self.insert(name, Tensor::zeros(shape));
    }

    pub fn value(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count over all parameters.
    pub fn numel(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(|p| p.value.all_finite())
    }

    /// Merges another store; names must not collide.
    pub fn extend(&mut self, other: ParamStore) -> Result<()> {
        for (name, p) in other.params {
            if self.params.contains_key(&name) {
                return Err(Error::Shape(format!("duplicate parameter {name:?}")));
            }
            self.params.insert(name, p);
        }
        Ok(())
    }

    /// Parameters whose name starts with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        ParamStore {
            params: self
                .params
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Flattens values and optimizer state into named tensors for checkpoints.
    pub fn to_named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(self.params.len() * 4);
        for (name, p) in &self.params {
            out.push((name.clone(), p.value.clone()));
            out.push((format!("{name}@m"), p.m.clone()));
            out.push((format!("{name}@v"), p.v.clone()));
            out.push((format!("{name}@t"), Tensor::vector(vec![p.step as f64])));
        }
        out
    }

    /// Inverse of [`ParamStore::to_named_tensors`] for names starting with `prefix`.
    pub fn from_named_tensors(named: &[(String, Tensor)], prefix: &str) -> Result<ParamStore> {
        let lookup: BTreeMap<&str, &Tensor> = named.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut store = ParamStore::new();
        for (name, value) in named {
            if !name.starts_with(prefix) || name.contains('@') {
                continue;
            }
            let get = |suffix: &str| {
                lookup
                    .get(format!("{name}@{suffix}").as_str())
                    .copied()
                    .cloned()
                    .ok_or_else(|| Error::Format(format!("checkpoint lacks {name}@{suffix}")))
            };
            let (m, v, t) = (get("m")?, get("v")?, get("t")?);
            if m.shape() != value.shape() || v.shape() != value.shape() {
                return Err(Error::Format(format!("moment shapes disagree for {name}")));
            }
            store.insert_param(name.clone(), Param { value: value.clone(), m, v, step: t.item() as u64 });
        }
        Ok(store)
    }
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.00002, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam update for every parameter named in `grads`.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &BTreeMap<String, Tensor>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    for (name, g) in grads {
        let p =
            store.params.get(name).ok_or_else(|| Error::Shape(format!("gradient for unknown parameter {name:?}")))?;
        if p.value.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "gradient {:?} for parameter {name} of shape {:?}",
                g.shape(),
                p.value.shape()
            )));
        }
    }
    for (name, g) in grads {
        let p = store.params.get_mut(name).expect("checked above");
        p.step += 1;
        let t = p.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (value, m, v) = (p.value.data_mut(), p.m.data_mut(), p.v.data_mut());
        for i in 0..value.len() {
            let gi = g.data()[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            value[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

impl AdamConfig {
    pub fn step(&self, store: &mut ParamStore, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        adam_step(store, grads, self.lr, self.beta1, self.beta2, self.eps)
    }
}
