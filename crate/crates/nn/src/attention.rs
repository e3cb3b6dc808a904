//! Fused multi-head attention kernels over `[B, L, D]` row-major buffers.
//! Head `h` owns columns `h*dh..(h+1)*dh`; every per-head product is a strided
//! sgemm, so no head is ever copied out.

use crate::gemm::{sgemm, View};
use crate::tape::softmax_row;

/// `[B, Lq, Lk, D, heads]`
pub(crate) type Dims = [usize; 5];

pub(crate) fn forward(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    [b, lq, lk, d, heads]: Dims,
    key_valid: Option<&[bool]>,
) -> (Vec<f32>, Vec<f32>) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let mut out = vec![0f32; b * lq * d];
    let mut probs = vec![0f32; b * heads * lq * lk];
    let mut row = vec![0f64; lk];
    for bi in 0..b {
        for h in 0..heads {
            let qo = bi * lq * d + h * dh;
            let ko = bi * lk * d + h * dh;
            let po = (bi * heads + h) * lq * lk;
            let p = &mut probs[po..po + lq * lk];
            sgemm(lq, dh, lk, scale, q, View::strided(qo, d, 1), k, View::strided(ko, 1, d), 0.0, p, View::rows(0, lk));
            for i in 0..lq {
                for j in 0..lk {
                    let live = key_valid.is_none_or(|m| m[bi * lk + j]);
                    row[j] = if live { p[i * lk + j] as f64 } else { f64::NEG_INFINITY };
                }
                softmax_row(&mut row);
                for j in 0..lk {
                    p[i * lk + j] = row[j] as f32;
                }
            }
            sgemm(lq, lk, dh, 1.0, p, View::rows(0, lk), v, View::strided(ko, d, 1), 0.0, &mut out, View::strided(qo, d, 1));
        }
    }
    (out, probs)
}

type Grad = Option<Vec<f32>>;

pub(crate) fn backward(
    g: &[f32],
    q: &[f32],
    k: &[f32],
    v: &[f32],
    probs: &[f32],
    [b, lq, lk, d, heads]: Dims,
    [want_q, want_k, want_v]: [bool; 3],
) -> (Grad, Grad, Grad) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let mut dq = want_q.then(|| vec![0f32; q.len()]);
    let mut dk = want_k.then(|| vec![0f32; k.len()]);
    let mut dv = want_v.then(|| vec![0f32; v.len()]);
    let mut ds = vec![0f32; lq * lk];
    for bi in 0..b {
        for h in 0..heads {
            let qo = bi * lq * d + h * dh;
            let ko = bi * lk * d + h * dh;
            let po = (bi * heads + h) * lq * lk;
            let p = &probs[po..po + lq * lk];
            if let Some(dv) = dv.as_mut() {
                // dV = Pᵀ · dO
                sgemm(lk, lq, dh, 1.0, p, View::transposed(0, lk), g, View::strided(qo, d, 1), 1.0, dv, View::strided(ko, d, 1));
            }
            if dq.is_none() && dk.is_none() {
                continue;
            }
            // dP = dO · Vᵀ, then dS = P ⊙ (dP - rowsum(dP ⊙ P))
            sgemm(lq, dh, lk, 1.0, g, View::strided(qo, d, 1), v, View::strided(ko, 1, d), 0.0, &mut ds, View::rows(0, lk));
            for i in 0..lq {
                let r = i * lk..(i + 1) * lk;
                let dot: f64 = ds[r.clone()].iter().zip(&p[r.clone()]).map(|(x, y)| *x as f64 * *y as f64).sum();
                for j in r {
                    ds[j] = (p[j] as f64 * (ds[j] as f64 - dot)) as f32;
                }
            }
            if let Some(dq) = dq.as_mut() {
                sgemm(lq, lk, dh, scale, &ds, View::rows(0, lk), k, View::strided(ko, d, 1), 1.0, dq, View::strided(qo, d, 1));
            }
            if let Some(dk) = dk.as_mut() {
                sgemm(lk, lq, dh, scale, &ds, View::transposed(0, lk), q, View::strided(qo, d, 1), 1.0, dk, View::strided(ko, d, 1));
            }
        }
    }
    (dq, dk, dv)
}
