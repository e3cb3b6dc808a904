//! Finite-difference gradient checks. Each primitive gets an f64 reference
//! forward written with plain loops; central differences of that reference
//! are compared against the tape's analytic gradients.
//! Shared with the acceptance gate through `#[path]`.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vqprobe_nn::{NnError, Tape, Tensor, Var};

pub const REL_TOL: f64 = 1e-3;
pub const ABS_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct Input {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Input {
    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        // f32-representable so the tape and the reference see the same point.
        let data = (0..n).map(|_| rng.gen_range(-1.5f32..1.5) as f64).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    fn tensor(&self) -> Tensor {
        Tensor::new(&self.shape, self.data.iter().map(|&v| v as f32).collect()).unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub primitive: &'static str,
    pub instances: usize,
    /// Largest `|analytic - numeric| / (REL_TOL * max(|a|, |n|) + ABS_FLOOR)`; below 1 passes.
    pub worst: f64,
    pub failure: Option<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.worst <= 1.0 && self.instances >= 10
    }
}

type TapeFn<'a> = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var, NnError> + 'a>;
type RefFn<'a> = Box<dyn Fn(&[Vec<f64>]) -> Vec<f64> + 'a>;

/// Checks one instance; returns the worst normalized discrepancy.
fn check_instance(inputs: &[Input], build: TapeFn, reference: RefFn, rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.tensor())).collect();
    let out = build(&mut tape, &vars).map_err(|e| e.to_string())?;
    let out_shape = tape.shape(out).to_vec();
    let n_out: usize = out_shape.iter().product();
    let weights: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect();
    let w = tape.input(Tensor::new(&out_shape, weights.iter().map(|&v| v as f32).collect()).unwrap());
    let weighted = tape.mul(out, w).map_err(|e| e.to_string())?;
    let loss = tape.sum(weighted);

    let point: Vec<Vec<f64>> = inputs.iter().map(|x| x.data.clone()).collect();
    let expected = reference(&point);
    if expected.len() != n_out {
        return Err(format!("reference produced {} values, tape {}", expected.len(), n_out));
    }
    for (i, (&e, &got)) in expected.iter().zip(&tape.value(out).data).enumerate() {
        if (e - got as f64).abs() > 1e-4 * e.abs().max(1.0) {
            return Err(format!("forward mismatch at {i}: reference {e}, tape {got}"));
        }
    }

    let grads = tape.backward(loss).map_err(|e| e.to_string())?;
    let objective = |p: &[Vec<f64>]| -> f64 { reference(p).iter().zip(&weights).map(|(y, w)| y * w).sum() };
    let mut worst = 0f64;
    let mut probe = point.clone();
    for (k, var) in vars.iter().enumerate() {
        let zeros = vec![0f32; inputs[k].data.len()];
        let analytic = grads.wrt(*var).unwrap_or(&zeros);
        for j in 0..inputs[k].data.len() {
            let x = point[k][j];
            let h = 1e-6 * x.abs().max(1.0);
            probe[k][j] = x + h;
            let up = objective(&probe);
            probe[k][j] = x - h;
            let down = objective(&probe);
            probe[k][j] = x;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[j] as f64;
            let ratio = (a - numeric).abs() / (REL_TOL * a.abs().max(numeric.abs()) + ABS_FLOOR);
            if ratio > worst {
                worst = ratio;
            }
            if ratio > 1.0 {
                return Err(format!("input {k}[{j}]: analytic {a}, numeric {numeric}"));
            }
        }
    }
    Ok(worst)
}

fn run(
    primitive: &'static str,
    instances: usize,
    seed: u64,
    mut make: impl FnMut(&mut ChaCha8Rng) -> (Vec<Input>, TapeFn<'static>, RefFn<'static>),
) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0f64;
    for i in 0..instances {
        let (inputs, build, reference) = make(&mut rng);
        match check_instance(&inputs, build, reference, &mut rng) {
            Ok(w) => worst = worst.max(w),
            Err(msg) => {
                return CheckReport {
                    primitive,
                    instances: i,
                    worst,
                    failure: Some(format!("instance {i}: {msg}")),
                }
            }
        }
    }
    CheckReport {
        primitive,
        instances,
        worst,
        failure: None,
    }
}

fn dim(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.gen_range(lo..=hi)
}

// ---------------------------------------------------------------------------
// f64 reference forwards

fn ref_matmul(a: &[f64], b: &[f64], batch: usize, m: usize, k: usize, n: usize, shared_b: bool) -> Vec<f64> {
    let mut out = vec![0.0; batch * m * n];
    for t in 0..batch {
        let bo = if shared_b { 0 } else { t * k * n };
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..k {
                    s += a[t * m * k + i * k + l] * b[bo + l * n + j];
                }
                out[t * m * n + i * n + j] = s;
            }
        }
    }
    out
}

fn ref_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row
        .iter()
        .map(|&v| if v == f64::NEG_INFINITY { 0.0 } else { (v - max).exp() })
        .collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn ref_layer_norm(x: &[f64], g: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for j in 0..d {
            out.push((row[j] - mean) * inv * g[j] + b[j]);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn ref_attention(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    b: usize,
    lq: usize,
    lk: usize,
    d: usize,
    heads: usize,
    valid: &[bool],
) -> Vec<f64> {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; b * lq * d];
    for bi in 0..b {
        for h in 0..heads {
            for i in 0..lq {
                let scores: Vec<f64> = (0..lk)
                    .map(|j| {
                        if !valid[bi * lk + j] {
                            return f64::NEG_INFINITY;
                        }
                        let mut s = 0.0;
                        for c in 0..dh {
                            s += q[(bi * lq + i) * d + h * dh + c] * k[(bi * lk + j) * d + h * dh + c];
                        }
                        s * scale
                    })
                    .collect();
                let p = ref_softmax(&scores);
                for c in 0..dh {
                    out[(bi * lq + i) * d + h * dh + c] =
                        (0..lk).map(|j| p[j] * v[(bi * lk + j) * d + h * dh + c]).sum();
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------

pub fn check_matmul(n: usize, seed: u64) -> CheckReport {
    run("matmul", n, seed, |rng| {
        let (b, m, k, p) = (dim(rng, 1, 3), dim(rng, 1, 5), dim(rng, 1, 6), dim(rng, 1, 5));
        let batched = rng.gen_bool(0.5);
        let a = Input::random(rng, &[b, m, k]);
        let w = if batched {
            Input::random(rng, &[b, k, p])
        } else {
            Input::random(rng, &[k, p])
        };
        (
            vec![a, w],
            Box::new(|t: &mut Tape, v: &[Var]| t.matmul(v[0], v[1])),
            Box::new(move |x: &[Vec<f64>]| ref_matmul(&x[0], &x[1], b, m, k, p, !batched)),
        )
    })
}

pub fn check_add(n: usize, seed: u64) -> CheckReport {
    run("add", n, seed, |rng| {
        let (r, c) = (dim(rng, 1, 4), dim(rng, 1, 6));
        let broadcast = rng.gen_bool(0.5);
        let a = Input::random(rng, &[r, c]);
        let b = if broadcast { Input::random(rng, &[c]) } else { Input::random(rng, &[r, c]) };
        (
            vec![a, b],
            Box::new(|t: &mut Tape, v: &[Var]| t.add(v[0], v[1])),
            Box::new(move |x: &[Vec<f64>]| {
                (0..r * c)
                    .map(|i| x[0][i] + if broadcast { x[1][i % c] } else { x[1][i] })
                    .collect()
            }),
        )
    })
}

pub fn check_mul(n: usize, seed: u64) -> CheckReport {
    run("mul", n, seed, |rng| {
        let shape = [dim(rng, 1, 4), dim(rng, 1, 5)];
        let (a, b) = (Input::random(rng, &shape), Input::random(rng, &shape));
        (
            vec![a, b],
            Box::new(|t: &mut Tape, v: &[Var]| t.mul(v[0], v[1])),
            Box::new(|x: &[Vec<f64>]| x[0].iter().zip(&x[1]).map(|(a, b)| a * b).collect()),
        )
    })
}

pub fn check_scale(n: usize, seed: u64) -> CheckReport {
    run("scale", n, seed, |rng| {
        let a = { let s = [dim(rng, 1, 4), dim(rng, 1, 5)]; Input::random(rng, &s) };
        let s = rng.gen_range(-2.0f32..2.0);
        (
            vec![a],
            Box::new(move |t: &mut Tape, v: &[Var]| Ok(t.scale(v[0], s))),
            Box::new(move |x: &[Vec<f64>]| x[0].iter().map(|a| a * s as f64).collect()),
        )
    })
}

pub fn check_concat(n: usize, seed: u64) -> CheckReport {
    run("concat", n, seed, |rng| {
        let (o, c1, c2, inner) = (dim(rng, 1, 3), dim(rng, 1, 4), dim(rng, 1, 4), dim(rng, 1, 3));
        let a = Input::random(rng, &[o, c1, inner]);
        let b = Input::random(rng, &[o, c2, inner]);
        (
            vec![a, b],
            Box::new(|t: &mut Tape, v: &[Var]| t.concat(&[v[0], v[1]], 1)),
            Box::new(move |x: &[Vec<f64>]| {
                let mut out = Vec::new();
                for i in 0..o {
                    out.extend_from_slice(&x[0][i * c1 * inner..(i + 1) * c1 * inner]);
                    out.extend_from_slice(&x[1][i * c2 * inner..(i + 1) * c2 * inner]);
                }
                out
            }),
        )
    })
}

pub fn check_slice(n: usize, seed: u64) -> CheckReport {
    run("slice", n, seed, |rng| {
        let (o, len, inner) = (dim(rng, 1, 3), dim(rng, 2, 6), dim(rng, 1, 3));
        let start = rng.gen_range(0..len);
        let take = rng.gen_range(1..=len - start);
        let a = Input::random(rng, &[o, len, inner]);
        (
            vec![a],
            Box::new(move |t: &mut Tape, v: &[Var]| t.slice(v[0], 1, start, take)),
            Box::new(move |x: &[Vec<f64>]| {
                let mut out = Vec::new();
                for i in 0..o {
                    let base = (i * len + start) * inner;
                    out.extend_from_slice(&x[0][base..base + take * inner]);
                }
                out
            }),
        )
    })
}

pub fn check_transpose(n: usize, seed: u64) -> CheckReport {
    run("transpose", n, seed, |rng| {
        let (b, r, c) = (dim(rng, 1, 3), dim(rng, 1, 5), dim(rng, 1, 5));
        let a = Input::random(rng, &[b, r, c]);
        (
            vec![a],
            Box::new(|t: &mut Tape, v: &[Var]| t.transpose(v[0])),
            Box::new(move |x: &[Vec<f64>]| {
                let mut out = vec![0.0; b * r * c];
                for t in 0..b {
                    for i in 0..r {
                        for j in 0..c {
                            out[t * r * c + j * r + i] = x[0][t * r * c + i * c + j];
                        }
                    }
                }
                out
            }),
        )
    })
}

pub fn check_embedding(n: usize, seed: u64) -> CheckReport {
    run("embedding_lookup", n, seed, |rng| {
        let (rows, d, m) = (dim(rng, 1, 6), dim(rng, 1, 5), dim(rng, 1, 8));
        let ids: Vec<usize> = (0..m).map(|_| rng.gen_range(0..rows)).collect();
        let table = Input::random(rng, &[rows, d]);
        let ids2 = ids.clone();
        (
            vec![table],
            Box::new(move |t: &mut Tape, v: &[Var]| t.embedding(v[0], &ids)),
            Box::new(move |x: &[Vec<f64>]| ids2.iter().flat_map(|&i| x[0][i * d..(i + 1) * d].to_vec()).collect()),
        )
    })
}

pub fn check_relu(n: usize, seed: u64) -> CheckReport {
    run("relu", n, seed, |rng| {
        let mut a = { let s = [dim(rng, 1, 4), dim(rng, 1, 6)]; Input::random(rng, &s) };
        // Keep clear of the kink so central differences see one side only.
        for v in &mut a.data {
            if v.abs() < 0.05 {
                *v = if *v < 0.0 { -0.25 } else { 0.25 };
            }
        }
        (
            vec![a],
            Box::new(|t: &mut Tape, v: &[Var]| Ok(t.relu(v[0]))),
            Box::new(|x: &[Vec<f64>]| x[0].iter().map(|v| v.max(0.0)).collect()),
        )
    })
}

pub fn check_layer_norm(n: usize, seed: u64) -> CheckReport {
    run("layer_norm", n, seed, |rng| {
        let (r, d) = (dim(rng, 1, 4), dim(rng, 2, 8));
        let x = Input::random(rng, &[r, d]);
        let g = Input::random(rng, &[d]);
        let b = Input::random(rng, &[d]);
        (
            vec![x, g, b],
            Box::new(|t: &mut Tape, v: &[Var]| t.layer_norm(v[0], v[1], v[2])),
            Box::new(move |x: &[Vec<f64>]| ref_layer_norm(&x[0], &x[1], &x[2], d)),
        )
    })
}

pub fn check_softmax(n: usize, seed: u64) -> CheckReport {
    run("softmax", n, seed, |rng| {
        let (r, d) = (dim(rng, 1, 4), dim(rng, 2, 7));
        let x = Input::random(rng, &[r, d]);
        let masked = rng.gen_bool(0.5);
        let mut mask = vec![0f32; d];
        if masked {
            let keep = rng.gen_range(0..d);
            for (j, m) in mask.iter_mut().enumerate() {
                if j != keep && rng.gen_bool(0.4) {
                    *m = f32::NEG_INFINITY;
                }
            }
        }
        let mask_t = Tensor::new(&[d], mask.clone()).unwrap();
        (
            vec![x],
            Box::new(move |t: &mut Tape, v: &[Var]| t.softmax(v[0], masked.then_some(&mask_t))),
            Box::new(move |x: &[Vec<f64>]| {
                x[0].chunks(d)
                    .flat_map(|row| {
                        let shifted: Vec<f64> = row.iter().zip(&mask).map(|(v, m)| v + *m as f64).collect();
                        ref_softmax(&shifted)
                    })
                    .collect()
            }),
        )
    })
}

pub fn check_attention(n: usize, seed: u64) -> CheckReport {
    run("scaled_dot_attention", n, seed, |rng| {
        let heads = dim(rng, 1, 3);
        let d = heads * dim(rng, 1, 3);
        let (b, lq, lk) = (dim(rng, 1, 2), dim(rng, 1, 4), dim(rng, 1, 5));
        let q = Input::random(rng, &[b, lq, d]);
        let k = Input::random(rng, &[b, lk, d]);
        let v = Input::random(rng, &[b, lk, d]);
        let mut valid: Vec<bool> = (0..b * lk).map(|_| rng.gen_bool(0.75)).collect();
        for bi in 0..b {
            valid[bi * lk] = true;
        }
        let valid2 = valid.clone();
        (
            vec![q, k, v],
            Box::new(move |t: &mut Tape, x: &[Var]| t.attention(x[0], x[1], x[2], heads, Some(&valid))),
            Box::new(move |x: &[Vec<f64>]| ref_attention(&x[0], &x[1], &x[2], b, lq, lk, d, heads, &valid2)),
        )
    })
}

pub fn check_cross_entropy(n: usize, seed: u64) -> CheckReport {
    run("cross_entropy", n, seed, |rng| {
        let (r, c) = (dim(rng, 1, 5), dim(rng, 2, 6));
        let targets: Vec<Option<usize>> = (0..r)
            .map(|_| rng.gen_bool(0.8).then(|| rng.gen_range(0..c)))
            .collect();
        let logits = Input::random(rng, &[r, c]);
        let t2 = targets.clone();
        (
            vec![logits],
            Box::new(move |t: &mut Tape, v: &[Var]| t.cross_entropy(v[0], &targets)),
            Box::new(move |x: &[Vec<f64>]| {
                let mut loss = 0.0;
                for (row, t) in x[0].chunks(c).zip(&t2) {
                    if let Some(t) = t {
                        let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
                        loss += lse - row[*t];
                    }
                }
                vec![loss]
            }),
        )
    })
}

pub fn check_bce(n: usize, seed: u64) -> CheckReport {
    run("bce_with_logits", n, seed, |rng| {
        let r = dim(rng, 1, 8);
        let targets: Vec<Option<bool>> = (0..r).map(|_| rng.gen_bool(0.8).then(|| rng.gen())).collect();
        let mut logits = Input::random(rng, &[r, 1]);
        for v in &mut logits.data {
            *v *= 3.0;
        }
        let t2 = targets.clone();
        (
            vec![logits],
            Box::new(move |t: &mut Tape, v: &[Var]| t.bce_with_logits(v[0], &targets)),
            Box::new(move |x: &[Vec<f64>]| {
                let mut loss = 0.0;
                for (z, t) in x[0].iter().zip(&t2) {
                    if let Some(y) = t {
                        let p = 1.0 / (1.0 + (-z).exp());
                        loss -= if *y { p.ln() } else { (1.0 - p).ln() };
                    }
                }
                vec![loss]
            }),
        )
    })
}

pub fn check_reshape(n: usize, seed: u64) -> CheckReport {
    run("reshape", n, seed, |rng| {
        let (r, c) = (dim(rng, 1, 4), dim(rng, 1, 4));
        let a = Input::random(rng, &[r, c]);
        (
            vec![a],
            Box::new(move |t: &mut Tape, v: &[Var]| t.reshape(v[0], &[c, r])),
            Box::new(|x: &[Vec<f64>]| x[0].clone()),
        )
    })
}

pub fn check_sum(n: usize, seed: u64) -> CheckReport {
    run("sum", n, seed, |rng| {
        let a = { let s = [dim(rng, 1, 4), dim(rng, 1, 4)]; Input::random(rng, &s) };
        (
            vec![a],
            Box::new(|t: &mut Tape, v: &[Var]| Ok(t.sum(v[0]))),
            Box::new(|x: &[Vec<f64>]| vec![x[0].iter().sum()]),
        )
    })
}

/// Every primitive, `n` instances each.
pub fn all_checks(n: usize, seed: u64) -> Vec<CheckReport> {
    vec![
        check_matmul(n, seed),
        check_add(n, seed + 1),
        check_mul(n, seed + 2),
        check_scale(n, seed + 3),
        check_concat(n, seed + 4),
        check_slice(n, seed + 5),
        check_transpose(n, seed + 6),
        check_reshape(n, seed + 7),
        check_embedding(n, seed + 8),
        check_relu(n, seed + 9),
        check_layer_norm(n, seed + 10),
        check_softmax(n, seed + 11),
        check_attention(n, seed + 12),
        check_cross_entropy(n, seed + 13),
        check_bce(n, seed + 14),
        check_sum(n, seed + 15),
    ]
}
