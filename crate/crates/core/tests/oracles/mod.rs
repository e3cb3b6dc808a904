//! Reference implementations written without the library's own machinery.
//! Shared with the acceptance gate through `#[path]`.
#![allow(dead_code)]

use vqprobe_core::question::{Answer, Filter, Relation, Template};
use vqprobe_core::scene::{Attribute, ObjectSpec, Scene};

// ---------------------------------------------------------------------------
// Template semantics over plain object lists.

fn attr(o: &ObjectSpec, a: Attribute) -> u8 {
    match a {
        Attribute::Shape => o.shape,
        Attribute::Color => o.color,
        Attribute::Size => o.size,
        Attribute::Material => o.material,
    }
}

fn fits(f: &Filter, o: &ObjectSpec) -> bool {
    let want = [
        (f.0[0], o.shape),
        (f.0[1], o.color),
        (f.0[2], o.size),
        (f.0[3], o.material),
    ];
    want.iter().all(|(w, got)| w.is_none_or(|w| w == *got))
}

fn matching(scene: &Scene, f: &Filter) -> Vec<usize> {
    (0..scene.objects.len())
        .filter(|&i| fits(f, &scene.objects[i]))
        .collect()
}

fn the_one(candidates: Vec<usize>) -> Option<usize> {
    if candidates.len() == 1 {
        Some(candidates[0])
    } else {
        None
    }
}

/// Objects standing on the `relation` side of `anchor`, read straight off the
/// coordinates (right = larger x, behind = larger y).
fn beside(scene: &Scene, anchor: usize, relation: Relation) -> Vec<usize> {
    let a = scene.objects[anchor].position;
    (0..scene.objects.len())
        .filter(|&i| {
            let p = scene.objects[i].position;
            i != anchor
                && match relation {
                    Relation::Right => p[0] > a[0],
                    Relation::Left => p[0] < a[0],
                    Relation::Behind => p[1] > a[1],
                    Relation::Front => p[1] < a[1],
                }
        })
        .collect()
}

fn answer_index(a: Attribute, v: u8) -> u8 {
    let offset = match a {
        Attribute::Shape => 0,
        Attribute::Color => 3,
        Attribute::Size => 11,
        Attribute::Material => 13,
    };
    offset + v
}

/// `None` when some referenced object is not uniquely determined.
pub fn brute_force_answer(t: &Template, scene: &Scene) -> Option<Answer> {
    let count = |f: &Filter| matching(scene, f).len();
    Some(match *t {
        Template::Count { target } => Answer::Count(count(&target) as u8),
        Template::CountRelate { target, relation, anchor } => {
            let a = the_one(matching(scene, &anchor))?;
            let n = beside(scene, a, relation)
                .into_iter()
                .filter(|&i| fits(&target, &scene.objects[i]))
                .count();
            Answer::Count(n as u8)
        }
        Template::CountSame { target, attribute, anchor } => {
            let a = the_one(matching(scene, &anchor))?;
            let v = attr(&scene.objects[a], attribute);
            let n = (0..scene.objects.len())
                .filter(|&i| {
                    i != a && attr(&scene.objects[i], attribute) == v && fits(&target, &scene.objects[i])
                })
                .count();
            Answer::Count(n as u8)
        }
        Template::Exist { target } => Answer::Bool(count(&target) > 0),
        Template::ExistRelate { target, relation, anchor } => {
            let a = the_one(matching(scene, &anchor))?;
            Answer::Bool(
                beside(scene, a, relation)
                    .into_iter()
                    .any(|i| fits(&target, &scene.objects[i])),
            )
        }
        Template::MoreThan { left, right } => Answer::Bool(count(&left) > count(&right)),
        Template::FewerThan { left, right } => Answer::Bool(count(&left) < count(&right)),
        Template::EqualCount { left, right } => Answer::Bool(count(&left) == count(&right)),
        Template::Query { attribute, target } => {
            let o = the_one(matching(scene, &target))?;
            Answer::Attribute(answer_index(attribute, attr(&scene.objects[o], attribute)))
        }
        Template::QueryRelate { attribute, target, relation, anchor } => {
            let a = the_one(matching(scene, &anchor))?;
            let o = the_one(
                beside(scene, a, relation)
                    .into_iter()
                    .filter(|&i| fits(&target, &scene.objects[i]))
                    .collect(),
            )?;
            Answer::Attribute(answer_index(attribute, attr(&scene.objects[o], attribute)))
        }
        Template::SameAttribute { attribute, left, right } => {
            let a = the_one(matching(scene, &left))?;
            let b = the_one(matching(scene, &right))?;
            Answer::Bool(attr(&scene.objects[a], attribute) == attr(&scene.objects[b], attribute))
        }
    })
}

// ---------------------------------------------------------------------------
// Reduced world: 2 shapes x 2 colors x 1 size x 1 material on a 3x3 grid.

pub const GRID: [f64; 3] = [-2.0, 0.0, 2.0];

/// Every scene of at most `max_objects` objects, one object per grid cell,
/// objects listed in cell order.
pub fn reduced_scenes(max_objects: usize) -> Vec<Scene> {
    let mut scenes = Vec::new();
    let mut objects = Vec::new();
    fn rec(start: usize, left: usize, objects: &mut Vec<ObjectSpec>, scenes: &mut Vec<Scene>) {
        scenes.push(Scene::with_objects(scenes.len() as u64, objects.clone()));
        if left == 0 {
            return;
        }
        for cell in start..9 {
            for shape in 0..2u8 {
                for color in 0..2u8 {
                    objects.push(ObjectSpec {
                        shape,
                        color,
                        size: 0,
                        material: 0,
                        position: [GRID[cell % 3], GRID[cell / 3], 0.35],
                    });
                    rec(cell + 1, left - 1, objects, scenes);
                    objects.pop();
                }
            }
        }
    }
    rec(0, max_objects, &mut objects, &mut scenes);
    scenes
}

/// Filters over the reduced vocabulary. Size and material take their single
/// value together or stay free.
pub fn reduced_filters() -> Vec<Filter> {
    let mut out = Vec::new();
    for shape in [None, Some(0), Some(1)] {
        for color in [None, Some(0), Some(1)] {
            for fixed in [None, Some(0)] {
                out.push(Filter([shape, color, fixed, fixed]));
            }
        }
    }
    out
}

/// Every instantiation of every template over [`reduced_filters`].
pub fn reduced_templates() -> Vec<Template> {
    let filters = reduced_filters();
    let attrs = [Attribute::Shape, Attribute::Color, Attribute::Size, Attribute::Material];
    let rels = [Relation::Left, Relation::Right, Relation::Front, Relation::Behind];
    let mut out = Vec::new();
    for &t in &filters {
        out.push(Template::Count { target: t });
        out.push(Template::Exist { target: t });
        for attribute in attrs {
            out.push(Template::Query { attribute, target: t });
        }
        for &a in &filters {
            out.push(Template::MoreThan { left: t, right: a });
            out.push(Template::FewerThan { left: t, right: a });
            out.push(Template::EqualCount { left: t, right: a });
            for relation in rels {
                out.push(Template::CountRelate { target: t, relation, anchor: a });
                out.push(Template::ExistRelate { target: t, relation, anchor: a });
            }
            for attribute in attrs {
                out.push(Template::CountSame { target: t, attribute, anchor: a });
                out.push(Template::SameAttribute { attribute, left: t, right: a });
                for relation in rels {
                    out.push(Template::QueryRelate { attribute, target: t, relation, anchor: a });
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Dense symmetric eigensolver (cyclic Jacobi rotations), f64.

/// Eigenvalues (descending) and matching unit eigenvectors (as rows) of the
/// symmetric row-major `n x n` matrix `a`.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut m = a.to_vec();
    let mut v = vec![0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        let scale: f64 = (0..n).map(|i| m[i * n + i] * m[i * n + i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].partial_cmp(&m[i * n + i]).unwrap());
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
        .collect();
    (values, vectors)
}

/// Sample covariance (divisor n - 1) of `n x d` row-major samples, f64.
pub fn covariance(samples: &[f32], n: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0f64; d];
    for r in 0..n {
        for c in 0..d {
            mean[c] += samples[r * d + c] as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![0f64; d * d];
    for r in 0..n {
        for i in 0..d {
            let xi = samples[r * d + i] as f64 - mean[i];
            for j in 0..d {
                cov[i * d + j] += xi * (samples[r * d + j] as f64 - mean[j]);
            }
        }
    }
    for c in &mut cov {
        *c /= n as f64 - 1.0;
    }
    (mean, cov)
}

/// Minimal rank-`k` reconstruction error (sum of squares over all samples):
/// `(n - 1)` times the sum of the discarded eigenvalues.
pub fn optimal_reconstruction_error(samples: &[f32], n: usize, d: usize, k: usize) -> f64 {
    let (_, cov) = covariance(samples, n, d);
    let (values, _) = jacobi_eigen(&cov, d);
    values[k..].iter().map(|v| v.max(0.0)).sum::<f64>() * (n as f64 - 1.0)
}

/// Direct per-bin mean of an `h x w x d` grid onto `g x g`, one cell at a time.
pub fn pool_by_loops(x: &[f32], h: usize, w: usize, d: usize, g: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(g * g * d);
    for i in 0..g {
        for j in 0..g {
            let rows = (i * h / g)..((i + 1) * h / g);
            let cols = (j * w / g)..((j + 1) * w / g);
            for c in 0..d {
                let mut s = 0f64;
                let mut k = 0usize;
                for r in rows.clone() {
                    for q in cols.clone() {
                        s += x[(r * w + q) * d + c] as f64;
                        k += 1;
                    }
                }
                out.push(s / k as f64);
            }
        }
    }
    out
}
