//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Training criteria share one dataset and reuse runs.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

#[path = "../../nn/tests/gradcheck/mod.rs"]
mod gradcheck;

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vqprobe::config::ExperimentConfig;
use vqprobe::data::{generate_dataset, Dataset};
use vqprobe::encoders::Encoder;
use vqprobe::metrics::MetricsReport;
use vqprobe::report;
use vqprobe::train::{fewshot_sweep, run_on, RunOutcome};
use vqprobe_core::adapter::{default_profiles, fit_pca, plan_adaptation, MemoryRegime};
use vqprobe_core::question::{execute, Answer, AnswerType};
use vqprobe_nn::model::{compute_loss, HeadVars};
use vqprobe_nn::{Tape, Tensor};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn out_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn memory_table() -> Verdict {
    let expected = |name: &str| -> Option<[(usize, usize); 2]> {
        Some(match name {
            "gt" | "dti_sprites" => [(10, 10), (10, 100)],
            "slot_attention" => [(11, 9), (11, 90)],
            "resnet50" | "dino_resnet50" | "dino_vit" => [(16, 6), (16, 62)],
            "raw" => [(9, 11), (9, 111)],
            _ => return None,
        })
    };
    let mut seen = std::collections::BTreeSet::new();
    let mut bad = Vec::new();
    for p in default_profiles() {
        let Some(want) = expected(&p.name) else {
            bad.push(format!("unexpected profile {}", p.name));
            continue;
        };
        for (regime, w) in [MemoryRegime::mem100(), MemoryRegime::mem1000()].into_iter().zip(want) {
            match plan_adaptation(p.geometry, regime, &p) {
                Ok(plan) if plan.output_shape() == w => {
                    seen.insert(w);
                }
                Ok(plan) => bad.push(format!("{} @{}: {:?} != {:?}", p.name, regime.budget, plan.output_shape(), w)),
                Err(e) => bad.push(format!("{} @{}: {e}", p.name, regime.budget)),
            }
        }
    }
    let all = bad.is_empty() && seen.len() == 8;
    verdict(all, if all { "8 distinct shapes reproduced".to_string() } else { bad.join("; ") })
}

fn pca_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc);
    let (mut worst_rel, mut worst_ortho) = (0f64, 0f64);
    for _ in 0..25 {
        let d = rng.gen_range(2..=50);
        let n = rng.gen_range(d + 1..=200);
        let k = rng.gen_range(1..=d);
        let scale: Vec<f32> = (0..d).map(|_| rng.gen_range(0.1..3.0)).collect();
        let x: Vec<f32> = (0..n * d).map(|i| rng.gen_range(-1.0f32..1.0) * scale[i % d]).collect();
        let model = match fit_pca(&x, n, d, k) {
            Ok(m) => m,
            Err(e) => return verdict(false, format!("{n}x{d} k={k}: {e}")),
        };
        let ours = model.reconstruction_error(&x);
        let best = oracles::optimal_reconstruction_error(&x, n, d, k);
        let rel = if (ours - best).abs() < 1e-12 { 0.0 } else { (ours - best).abs() / best.abs().max(1e-300) };
        worst_rel = worst_rel.max(rel);
        for a in 0..k {
            for b in 0..k {
                let dot: f64 = model.component(a).iter().zip(model.component(b)).map(|(p, q)| p * q).sum();
                worst_ortho = worst_ortho.max((dot - f64::from(u8::from(a == b))).abs());
            }
        }
    }
    verdict(
        worst_rel <= 1e-8 && worst_ortho <= 1e-6,
        format!("25 matrices, worst relative error {worst_rel:.2e}, worst orthonormality {worst_ortho:.2e}"),
    )
}

fn gradient_suite() -> Verdict {
    let reports = gradcheck::all_checks(12, 0xacce);
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed()).map(|r| format!("{}: {:?}", r.primitive, r.failure)).collect();
    let worst = reports.iter().map(|r| r.worst).fold(0.0, f64::max);
    let min_n = reports.iter().map(|r| r.instances).min().unwrap_or(0);
    verdict(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} primitives, >= {min_n} instances each, worst discrepancy {worst:.2e} of the 1e-3 relative tolerance", reports.len())
        } else {
            failed.join("; ")
        },
    )
}

fn executor_oracle() -> Verdict {
    let templates = oracles::reduced_templates();
    let programs: Vec<_> = templates.iter().map(|t| t.compile()).collect();
    let scenes = oracles::reduced_scenes(3);
    let (mut checked, mut mismatches) = (0usize, Vec::new());
    for scene in &scenes {
        for (t, p) in templates.iter().zip(&programs) {
            let ours = execute(p, scene);
            let theirs = oracles::brute_force_answer(t, scene);
            let agree = match (&ours, theirs) {
                (Ok(a), Some(b)) => *a == b,
                (Err(e), None) => e.is_uniqueness(),
                _ => false,
            };
            if !agree && mismatches.len() < 3 {
                mismatches.push(format!("{t:?}: {ours:?} vs {theirs:?}"));
            }
            checked += 1;
        }
    }
    verdict(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{} scenes x {} templates = {checked} programs agree", scenes.len(), templates.len())
        } else {
            mismatches.join("; ")
        },
    )
}

fn loss_contract() -> Verdict {
    fn heads(tape: &mut Tape, t: &[f32], b: f32, c: &[f32], a: &[f32]) -> HeadVars {
        HeadVars {
            type_logits: tape.leaf(Tensor::new(&[1, 3], t.to_vec()).unwrap()),
            binary: tape.leaf(Tensor::new(&[1, 1], vec![b]).unwrap()),
            count: tape.leaf(Tensor::new(&[1, 11], c.to_vec()).unwrap()),
            attribute: tape.leaf(Tensor::new(&[1, 15], a.to_vec()).unwrap()),
        }
    }
    let mut tape = Tape::new();
    let h = heads(&mut tape, &[0.0; 3], 0.4, &[0.0; 11], &[-0.3; 15]);
    let l = compute_loss(&mut tape, h, &[(AnswerType::Count, Answer::Count(3))]).unwrap();
    let value = f64::from(tape.value(l.total).item());
    let want = 3f64.ln() + 11f64.ln();
    let mut ok = (value - want).abs() <= 1e-6;
    let mut notes = vec![format!("uniform count loss {value:.7} vs ln3+ln11 {want:.7}")];

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut logits = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect() };
    for (active, answer) in [
        (AnswerType::Binary, Answer::Bool(false)),
        (AnswerType::Count, Answer::Count(4)),
        (AnswerType::Attribute, Answer::Attribute(9)),
    ] {
        let (t, b, c, a) = (logits(3), logits(1)[0], logits(11), logits(15));
        let run = |b: f32, c: &[f32], a: &[f32]| {
            let mut tape = Tape::new();
            let h = heads(&mut tape, &t, b, c, a);
            let l = compute_loss(&mut tape, h, &[(active, answer)]).unwrap();
            let v = tape.value(l.total).item();
            let g = tape.backward(l.total).unwrap();
            let grads = [g.wrt(h.binary), g.wrt(h.count), g.wrt(h.attribute)].map(|x| x.map(|s| s.to_vec()));
            (v, grads)
        };
        let (v0, g0) = run(b, &c, &a);
        let shifted = |xs: &[f32]| xs.iter().map(|x| x + 5.0).collect::<Vec<_>>();
        let (b1, c1, a1) = match active {
            AnswerType::Binary => (b, shifted(&c), shifted(&a)),
            AnswerType::Count => (b + 5.0, c.clone(), shifted(&a)),
            AnswerType::Attribute => (b + 5.0, shifted(&c), a.clone()),
        };
        let (v1, _) = run(b1, &c1, &a1);
        let inactive_zero = AnswerType::ALL
            .iter()
            .filter(|x| **x != active)
            .all(|x| g0[x.index()].as_ref().is_none_or(|g| g.iter().all(|&v| v == 0.0)));
        let invariant = v0.to_bits() == v1.to_bits();
        ok &= inactive_zero && invariant;
        notes.push(format!("{active:?}: inactive grads zero={inactive_zero}, value invariant={invariant}"));
    }
    verdict(ok, notes.join("; "))
}

fn desk_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig { seed, serial: true, out_dir: out_dir(), ..Default::default() }
}

fn train_run(cfg: &ExperimentConfig, dataset: &Dataset, encoder: &Encoder, tag: &str) -> Result<RunOutcome, String> {
    let dir = out_dir().join(tag);
    let t = Instant::now();
    let out = run_on(cfg, dataset, encoder, Some(&dir), |l| eprintln!("  [{tag}] {l}")).map_err(|e| e.to_string())?;
    report::write_run(&dir, &out.report).map_err(|e| e.to_string())?;
    eprintln!("  [{tag}] done in {:.0}s", t.elapsed().as_secs_f64());
    Ok(out)
}

fn families(r: &MetricsReport) -> String {
    r.val.families.iter().map(|f| format!("{} {:.3}", f.family, f.accuracy)).collect::<Vec<_>>().join(", ")
}

fn gt_saturation(gt: &Result<RunOutcome, String>) -> Verdict {
    match gt {
        Ok(o) => {
            let r = &o.report;
            let min_family = r.val.families.iter().map(|f| f.accuracy).fold(1.0, f64::min);
            verdict(
                r.val.overall >= 0.95 && min_family >= 0.90,
                format!("overall {:.4} (>= 0.95), min family {min_family:.4} (>= 0.90): {}", r.val.overall, families(r)),
            )
        }
        Err(e) => verdict(false, format!("run failed: {e}")),
    }
}

fn raw_gap(gt: &Result<RunOutcome, String>, raw: &Result<RunOutcome, String>) -> Verdict {
    match (gt, raw) {
        (Ok(g), Ok(r)) => {
            let gap = g.report.val.overall - r.report.val.overall;
            verdict(
                gap >= 0.20,
                format!("gt {:.4} - raw {:.4} = {gap:.4} (>= 0.20)", g.report.val.overall, r.report.val.overall),
            )
        }
        (Err(e), _) | (_, Err(e)) => verdict(false, format!("run failed: {e}")),
    }
}

fn fewshot_shape(gt: &Result<RunOutcome, String>, dataset: &Dataset) -> Verdict {
    let Ok(full) = gt else {
        return verdict(false, "full-data run failed");
    };
    let cfg = ExperimentConfig { out_dir: out_dir().join("sweep"), ..desk_config(0) };
    let mut reports = match fewshot_sweep(&cfg, dataset, &Encoder::GroundTruth, &[0.05, 0.2], |l| eprintln!("  [sweep] {l}")) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("sweep failed: {e}")),
    };
    reports.push(full.report.clone());
    let _ = report::write_sweep(&cfg.out_dir, &reports);
    let acc: Vec<f64> = reports.iter().map(|r| r.val.overall).collect();
    let monotone = acc.windows(2).all(|w| w[1] >= w[0] - 0.02);
    let near = (acc[1] - acc[2]).abs() <= 0.02;
    verdict(
        monotone && near,
        format!(
            "0.05: {:.4}, 0.2: {:.4}, 1.0: {:.4}; monotone within 2 points={monotone}, |acc(0.2)-acc(1.0)| <= 0.02={near}",
            acc[0], acc[1], acc[2]
        ),
    )
}

fn frozen_and_deterministic(runs: &[&Result<RunOutcome, String>], dataset: &Dataset) -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for r in runs {
        match r {
            Ok(o) => {
                let same = o.before == o.after;
                ok &= same;
                notes.push(format!("{} checksums unchanged={same}", o.report.encoder));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("run failed: {e}"));
            }
        }
    }
    let mut cfg = desk_config(11);
    cfg.training.epochs = 2;
    cfg.fraction = 0.1;
    let a = run_on(&cfg, dataset, &Encoder::GroundTruth, None, |_| {});
    let b = run_on(&cfg, dataset, &Encoder::GroundTruth, None, |_| {});
    match (a, b) {
        (Ok(a), Ok(b)) => {
            let bits = |o: &RunOutcome| -> Vec<u32> {
                o.model.params.iter().flat_map(|(_, p)| p.value.data.iter().map(|v| v.to_bits())).collect()
            };
            let same = a.report == b.report && bits(&a) == bits(&b);
            ok &= same;
            notes.push(format!("serial repeat bit-identical={same}"));
        }
        (Err(e), _) | (_, Err(e)) => {
            ok = false;
            notes.push(format!("repeat failed: {e}"));
        }
    }
    verdict(ok, notes.join("; "))
}

fn main() {
    let mut lines: Vec<(u32, &str, Verdict, f64)> = Vec::new();
    let mut record = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        let secs = t.elapsed().as_secs_f64();
        println!("{} criterion {n} ({name}, {secs:.1}s): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        lines.push((n, name, v, secs));
    };
    record(3, "memory-regime table", &mut memory_table);
    record(4, "PCA oracle", &mut pca_oracle);
    record(5, "gradient suite", &mut gradient_suite);
    record(6, "executor oracle", &mut executor_oracle);
    record(7, "loss contract", &mut loss_contract);

    let base = desk_config(0);
    let dataset = generate_dataset(&base.dataset, base.seed).expect("desk dataset");
    let mut gt = Err("not run".to_string());
    record(1, "GT saturation", &mut || {
        gt = train_run(&base, &dataset, &Encoder::GroundTruth, "gt");
        gt_saturation(&gt)
    });
    let raw_cfg = ExperimentConfig {
        encoder: vqprobe::config::EncoderSpec { profile: "raw".into(), ..Default::default() },
        ..base.clone()
    };
    let raw_encoder = Encoder::builtin("raw", raw_cfg.encoder.raw_resolution).expect("raw encoder");
    let mut raw = Err("not run".to_string());
    record(2, "raw-vs-GT gap", &mut || {
        raw = train_run(&raw_cfg, &dataset, &raw_encoder, "raw");
        raw_gap(&gt, &raw)
    });
    record(8, "few-shot shape", &mut || fewshot_shape(&gt, &dataset));
    record(9, "frozen boundary and determinism", &mut || frozen_and_deterministic(&[&gt, &raw], &dataset));

    let failed: Vec<u32> = lines.iter().filter(|l| !l.2.pass).map(|l| l.0).collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        lines.len() - failed.len(),
        lines.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
