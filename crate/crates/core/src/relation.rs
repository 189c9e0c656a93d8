//! Dot-product relation modules over element sets.
//!
//! `f'_i = W_r · (1/N) Σ_{j≠i} (ψ(f_i)·φ(f_j)) U(f_j) + f_i`, with `ψ`, `φ`,
//! `U` and `W_r` bias-free linear maps and no softmax. The context sum runs
//! over the other elements in an order fixed by their values, so permuting
//! the input permutes the output bit for bit.

use std::cmp::Ordering;

use rand::Rng;

use crate::autodiff::{CustomOp, Graph, NodeId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Registers `ψ`, `φ`, `U`, `W_r` under `prefix`.
pub fn init_relation<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    dim: usize,
    key_dim: usize,
    std: f64,
    rng: &mut R,
) {
    store.insert_normal(format!("{prefix}/psi"), vec![dim, key_dim], std, rng);
    store.insert_normal(format!("{prefix}/phi"), vec![dim, key_dim], std, rng);
    store.insert_normal(format!("{prefix}/u"), vec![dim, dim], std, rng);
    store.insert_normal(format!("{prefix}/wr"), vec![dim, dim], std, rng);
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Element order by `(φ_j, U_j)` row values; equal keys have equal contributions.
fn canonical_order(phi: &[f64], u: &[f64], n: usize, k: usize, d: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        cmp_rows(&phi[a * k..(a + 1) * k], &phi[b * k..(b + 1) * k])
            .then_with(|| cmp_rows(&u[a * d..(a + 1) * d], &u[b * d..(b + 1) * d]))
    });
    order
}

struct ContextOp;

impl CustomOp for ContextOp {
    fn name(&self) -> &'static str {
        "relation_context"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (psi, phi, u) = (inputs[0], inputs[1], inputs[2]);
        let (b, n, k) = (psi.shape()[0], psi.shape()[1], psi.shape()[2]);
        let d = u.shape()[2];
        let inv = 1.0 / n as f64;
        let mut dpsi = vec![0.0; psi.len()];
        let mut dphi = vec![0.0; phi.len()];
        let mut du = vec![0.0; u.len()];
        for bi in 0..b {
            let row = |t: &Tensor, i: usize, w: usize| t.data()[(bi * n + i) * w..(bi * n + i + 1) * w].to_vec();
            for i in 0..n {
                let gi = row(grad, i, d);
                let pi = row(psi, i, k);
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let fj = row(phi, j, k);
                    let uj = row(u, j, d);
                    let s = dot(&pi, &fj);
                    let gu = dot(&gi, &uj) * inv;
                    let (oi, oj) = ((bi * n + i) * k, (bi * n + j) * k);
                    for c in 0..k {
                        dpsi[oi + c] += gu * fj[c];
                        dphi[oj + c] += gu * pi[c];
                    }
                    let oj = (bi * n + j) * d;
                    for c in 0..d {
                        du[oj + c] += s * inv * gi[c];
                    }
                }
            }
        }
        vec![
            Some(Tensor::new(psi.shape().to_vec(), dpsi).expect("shape")),
            Some(Tensor::new(phi.shape().to_vec(), dphi).expect("shape")),
            Some(Tensor::new(u.shape().to_vec(), du).expect("shape")),
        ]
    }
}

/// `ctx_i = (1/N) Σ_{j≠i} (ψ_i·φ_j) U_j` for `ψ, φ: [B,N,K]`, `U: [B,N,D]`.
pub fn relation_context(g: &mut Graph, psi: NodeId, phi: NodeId, u: NodeId) -> Result<NodeId> {
    let (sp, sf, su) = (g.shape(psi).to_vec(), g.shape(phi).to_vec(), g.shape(u).to_vec());
    if sp.len() != 3 || sp != sf || su.len() != 3 || su[..2] != sp[..2] {
        return Err(Error::Shape(format!("relation context: ψ {sp:?}, φ {sf:?}, U {su:?}")));
    }
    let (b, n, k, d) = (sp[0], sp[1], sp[2], su[2]);
    let (pv, fv, uv) = (g.value(psi).data(), g.value(phi).data(), g.value(u).data());
    let inv = 1.0 / n as f64;
    let mut out = vec![0.0; b * n * d];
    for bi in 0..b {
        let (pb, fb, ub) =
            (&pv[bi * n * k..(bi + 1) * n * k], &fv[bi * n * k..(bi + 1) * n * k], &uv[bi * n * d..(bi + 1) * n * d]);
        let order = canonical_order(fb, ub, n, k, d);
        for i in 0..n {
            let pi = &pb[i * k..(i + 1) * k];
            let acc = &mut out[(bi * n + i) * d..(bi * n + i + 1) * d];
            for &j in &order {
                if j == i {
                    continue;
                }
                let s = dot(pi, &fb[j * k..(j + 1) * k]);
                for (a, x) in acc.iter_mut().zip(&ub[j * d..(j + 1) * d]) {
                    *a += s * x;
                }
            }
            for a in acc.iter_mut() {
                *a *= inv;
            }
        }
    }
    let value = Tensor::new(vec![b, n, d], out)?;
    Ok(g.custom(vec![psi, phi, u], value, Box::new(ContextOp)))
}

/// One relation module on `f: [B,N,D]`; `residual` adds the `+ f_i` shortcut.
pub fn relation_module(g: &mut Graph, store: &ParamStore, prefix: &str, f: NodeId, residual: bool) -> Result<NodeId> {
    let psi_w = g.param(store, &format!("{prefix}/psi"))?;
    let phi_w = g.param(store, &format!("{prefix}/phi"))?;
    let u_w = g.param(store, &format!("{prefix}/u"))?;
    let wr = g.param(store, &format!("{prefix}/wr"))?;
    let psi = g.linear(f, psi_w, None)?;
    let phi = g.linear(f, phi_w, None)?;
    let u = g.linear(f, u_w, None)?;
    let ctx = relation_context(g, psi, phi, u)?;
    let out = g.linear(ctx, wr, None)?;
    if residual {
        g.add(out, f)
    } else {
        Ok(out)
    }
}
