//! Central finite-difference verification of analytic gradients.
//!
//! A sample is accepted only if every piecewise op evaluated at it sits at
//! least `kink_margin` from its kinks or ties, and if every `±step`
//! perturbation takes exactly the same branches as the center point.

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use super::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub step: f64,
    pub kink_margin: f64,
    pub max_tries: usize,
    /// Check only this many randomly chosen coordinates (all when `None`).
    pub max_coords: Option<usize>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { step: 1e-4, kink_margin: 1e-3, max_tries: 100, max_coords: None }
    }
}

struct Eval {
    value: f64,
    margin: f64,
    signature: u64,
}

fn evaluate<F>(f: &mut F, params: &Tensor, want_grad: bool) -> Result<(Eval, Option<Tensor>)>
where
    F: FnMut(&mut Graph, NodeId) -> Result<NodeId>,
{
    let mut g = Graph::with_kink_tracking();
    let leaf = g.input(params.clone());
    let out = f(&mut g, leaf)?;
    if !g.value(out).is_scalar() {
        return Err(Error::Shape(format!("gradient check needs a scalar function, got {:?}", g.shape(out))));
    }
    let eval = Eval {
        value: g.value(out).item(),
        margin: g.kink_margin().unwrap_or(f64::INFINITY),
        signature: g.kink_signature().unwrap_or(0),
    };
    let grad = if want_grad { Some(g.backward(out)?.wrt(leaf)) } else { None };
    Ok((eval, grad))
}

impl GradCheck {
    /// Max relative error at one point, or `None` if the point is too close to a kink.
    fn try_point<F, R>(&self, f: &mut F, params: &Tensor, rng: &mut R) -> Result<Option<f64>>
    where
        F: FnMut(&mut Graph, NodeId) -> Result<NodeId>,
        R: Rng + ?Sized,
    {
        let (center, grad) = evaluate(f, params, true)?;
        if center.margin < self.kink_margin {
            return Ok(None);
        }
        let grad = grad.expect("requested");
        let coords: Vec<usize> = match self.max_coords {
            Some(k) if k < params.len() => sample_indices(rng, params.len(), k).into_vec(),
            _ => (0..params.len()).collect(),
        };
        let mut worst: f64 = 0.0;
        let mut probe = params.clone();
        for i in coords {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + self.step;
            let (plus, _) = evaluate(f, &probe, false)?;
            probe.data_mut()[i] = orig - self.step;
            let (minus, _) = evaluate(f, &probe, false)?;
            probe.data_mut()[i] = orig;
            if plus.signature != center.signature || minus.signature != center.signature {
                return Ok(None);
            }
            let fd = (plus.value - minus.value) / (2.0 * self.step);
            let err = (grad.data()[i] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
        Ok(Some(worst))
    }

    /// Checks at a fixed point; a kink at that point is a `DegenerateSample`.
    pub fn at<F>(&self, mut f: F, params: &Tensor) -> Result<f64>
    where
        F: FnMut(&mut Graph, NodeId) -> Result<NodeId>,
    {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        self.try_point(&mut f, params, &mut rng)?.ok_or(Error::DegenerateSample { tries: 1 })
    }

    /// Draws points from `sample` until one is kink-free, then checks it.
    pub fn sampled<F, S, R>(&self, mut f: F, mut sample: S, rng: &mut R) -> Result<f64>
    where
        F: FnMut(&mut Graph, NodeId) -> Result<NodeId>,
        S: FnMut(&mut R) -> Tensor,
        R: Rng,
    {
        for _ in 0..self.max_tries {
            let params = sample(rng);
            if let Some(err) = self.try_point(&mut f, &params, rng)? {
                return Ok(err);
            }
        }
        Err(Error::DegenerateSample { tries: self.max_tries })
    }
}

/// Max over coordinates of `|analytic - central| / max(1, |central|)` at `params`.
pub fn grad_check<F>(f: F, params: &Tensor, step: f64, kink_margin: f64) -> Result<f64>
where
    F: FnMut(&mut Graph, NodeId) -> Result<NodeId>,
{
    GradCheck { step, kink_margin, ..GradCheck::default() }.at(f, params)
}
