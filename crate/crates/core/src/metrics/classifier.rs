use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, Graph, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::generator::dense;
use crate::layout::{Layout, LayoutBatch};
use crate::render::{compose_batch, RenderConfig};

const PREFIX: &str = "clf";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub image_size: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub init_std: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            image_size: 28,
            hidden: vec![128],
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            init_std: 0.05,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// MLP over the flattened geometry-only rendering of a layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub config: ClassifierConfig,
    pub channels: usize,
    pub classes: usize,
    pub params: ParamStore,
}

/// Renders each layout with every class probability forced to one, flattened to `[B, M·H·W]`.
pub fn classifier_features(layouts: &[Layout], image_size: usize) -> Result<Tensor> {
    let batch = LayoutBatch::from_layouts(layouts)?;
    let ones = Tensor::full(batch.p.shape().to_vec(), 1.0);
    let batch = batch.with_values(ones, batch.geom.clone())?;
    let img = compose_batch(&batch, &RenderConfig::square(image_size)?)?;
    let b = layouts.len();
    let d = img.len() / b;
    img.reshaped(vec![b, d])
}

fn logits(g: &mut Graph, params: &ParamStore, hidden: usize, x: Tensor) -> Result<crate::autodiff::NodeId> {
    let mut h = g.input(x);
    for k in 0..hidden {
        let z = dense(g, params, &format!("{PREFIX}/hidden{k}"), h)?;
        h = g.relu(z);
    }
    dense(g, params, &format!("{PREFIX}/out"), h)
}

fn softmax_rows(z: &Tensor) -> Vec<Vec<f64>> {
    let k = z.shape()[1];
    z.data()
        .chunks(k)
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

impl Classifier {
    fn check(&self, layouts: &[Layout]) -> Result<()> {
        if let Some(l) = layouts.iter().find(|l| l.schema().len() != self.channels) {
            return Err(Error::Schema(format!(
                "classifier was trained on {} channels, layout has {}",
                self.channels,
                l.schema().len()
            )));
        }
        Ok(())
    }

    /// Class posteriors `p(y | x)`, one row per layout.
    pub fn predict_proba(&self, layouts: &[Layout]) -> Result<Vec<Vec<f64>>> {
        self.check(layouts)?;
        let mut out = Vec::with_capacity(layouts.len());
        for chunk in layouts.chunks(256) {
            let x = classifier_features(chunk, self.config.image_size)?;
            let mut g = Graph::new();
            let z = logits(&mut g, &self.params, self.config.hidden.len(), x)?;
            out.extend(softmax_rows(g.value(z)));
        }
        Ok(out)
    }

    pub fn predict(&self, layouts: &[Layout]) -> Result<Vec<usize>> {
        Ok(self
            .predict_proba(layouts)?
            .iter()
            .map(|row| {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }

    pub fn accuracy(&self, layouts: &[Layout], labels: &[usize]) -> Result<f64> {
        if layouts.is_empty() || layouts.len() != labels.len() {
            return Err(Error::InvalidDataset(format!("{} layouts with {} labels", layouts.len(), labels.len())));
        }
        let pred = self.predict(layouts)?;
        let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

/// Supervised training on labeled layouts; returns the classifier and its
/// accuracy on the held-out split (the training split when nothing is held out).
pub fn train_classifier(layouts: &[Layout], labels: &[usize], cfg: &ClassifierConfig) -> Result<(Classifier, f64)> {
    if layouts.len() != labels.len() || layouts.is_empty() {
        return Err(Error::InvalidDataset(format!("{} layouts with {} labels", layouts.len(), labels.len())));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::InvalidDataset("classifier data has a single class".into()));
    }
    if !(0.0..1.0).contains(&cfg.test_fraction) || cfg.batch_size == 0 {
        return Err(Error::Config("test_fraction must lie in [0, 1) and batch_size ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..layouts.len()).collect();
    order.shuffle(&mut rng);
    let n_test = (layouts.len() as f64 * cfg.test_fraction).round() as usize;
    let (test, train) = order.split_at(n_test.min(layouts.len() - 1));

    let channels = layouts[0].schema().len();
    let features = classifier_features(layouts, cfg.image_size)?;
    let d = features.shape()[1];
    let mut params = ParamStore::new();
    let mut din = d;
    for (k, &w) in cfg.hidden.iter().enumerate() {
        params.insert_normal(format!("{PREFIX}/hidden{k}/w"), vec![din, w], cfg.init_std, &mut rng);
        params.insert_zeros(format!("{PREFIX}/hidden{k}/b"), vec![w]);
        din = w;
    }
    params.insert_normal(format!("{PREFIX}/out/w"), vec![din, classes], cfg.init_std, &mut rng);
    params.insert_zeros(format!("{PREFIX}/out/b"), vec![classes]);
    let adam = AdamConfig { lr: cfg.lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 };

    let mut train = train.to_vec();
    for _ in 0..cfg.epochs {
        train.shuffle(&mut rng);
        for chunk in train.chunks(cfg.batch_size) {
            let mut x = Vec::with_capacity(chunk.len() * d);
            for &i in chunk {
                x.extend_from_slice(&features.data()[i * d..(i + 1) * d]);
            }
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut g = Graph::new();
            let z = logits(&mut g, &params, cfg.hidden.len(), Tensor::new(vec![chunk.len(), d], x)?)?;
            let loss = g.softmax_xent(z, &y)?;
            let grads = g.backward(loss)?.params_with_prefix(PREFIX);
            adam.step(&mut params, &grads)?;
        }
    }
    let clf = Classifier { config: cfg.clone(), channels, classes, params };
    let eval: &[usize] = if test.is_empty() { &train } else { test };
    let eval_layouts: Vec<Layout> = eval.iter().map(|&i| layouts[i].clone()).collect();
    let eval_labels: Vec<usize> = eval.iter().map(|&i| labels[i]).collect();
    let acc = clf.accuracy(&eval_layouts, &eval_labels)?;
    Ok((clf, acc))
}

/// `exp(E_x KL(p(y|x) ‖ p(y)))` per split; returns mean and population std over splits.
pub fn inception_score_from_probs(probs: &[Vec<f64>], splits: usize) -> Result<(f64, f64)> {
    if splits == 0 || probs.len() < splits {
        return Err(Error::InvalidDataset(format!("{} samples for {splits} splits", probs.len())));
    }
    let k = probs[0].len();
    if k == 0 || probs.iter().any(|r| r.len() != k) {
        return Err(Error::Schema("posterior rows disagree in class count".into()));
    }
    let mut scores = Vec::with_capacity(splits);
    for s in 0..splits {
        let part = &probs[s * probs.len() / splits..(s + 1) * probs.len() / splits];
        let mut marginal = vec![0.0; k];
        for row in part {
            for (m, &p) in marginal.iter_mut().zip(row) {
                *m += p / part.len() as f64;
            }
        }
        let mut kl = 0.0;
        for row in part {
            for (&p, &q) in row.iter().zip(&marginal) {
                if p > 0.0 {
                    kl += p * (p / q).ln();
                }
            }
        }
        // Mutual information lies in [0, ln K]; clamp away rounding.
        let kl = (kl / part.len() as f64).clamp(0.0, (k as f64).ln());
        scores.push(kl.exp().clamp(1.0, k as f64));
    }
    let mean = scores.iter().sum::<f64>() / splits as f64;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / splits as f64;
    Ok((mean, var.sqrt()))
}

pub fn inception_score(samples: &[Layout], clf: &Classifier, splits: usize) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidDataset("no samples".into()));
    }
    inception_score_from_probs(&clf.predict_proba(samples)?, splits)
}
