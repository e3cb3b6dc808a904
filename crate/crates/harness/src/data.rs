//! Dataset building: seeded scenes and questions, scene-level train
//! subsetting, and the frozen inputs (adapted visual tokens, text
//! embeddings) the reasoning module trains on.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vqprobe_core::adapter::{apply_adapter, find_profile, fit_pca, plan_adaptation, pool_stage, AdapterPlan, PcaModel};
use vqprobe_core::derive_seed;
use vqprobe_core::question::{
    embed_text, generate_questions, tokenize, Answer, AnswerType, PerFamily, Question, QuestionFamily, TextTokens,
    TextVocab,
};
use vqprobe_core::scene::{sample_scene, AttributeVocabulary, Scene};
use vqprobe_core::TokenSequence;
use vqprobe_nn::model::Sample;

use crate::config::{check_fraction, DatasetSpec, ExperimentConfig};
use crate::encoders::Encoder;
use crate::HarnessError;

/// Seed streams derived from the experiment seed.
pub mod stream {
    pub const SCENES: u64 = 1;
    pub const QUESTIONS: u64 = 2;
    pub const TEXT: u64 = 3;
    pub const SUBSET: u64 = 4;
    pub const INIT: u64 = 5;
    pub const TRAIN: u64 = 6;
}

const SCENE_ATTEMPTS: u64 = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub scenes: Vec<Scene>,
    pub questions: Vec<Question>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub val: Split,
}

/// `n` questions spread over the five families, remainder to the first ones.
pub fn per_family(n: usize) -> PerFamily {
    let k = QuestionFamily::ALL.len();
    PerFamily(
        QuestionFamily::ALL
            .iter()
            .enumerate()
            .map(|(i, f)| (*f, n / k + usize::from(i < n % k)))
            .collect(),
    )
}

fn build_split(
    ids: std::ops::Range<u64>,
    spec: &DatasetSpec,
    seed: u64,
    vocab: &AttributeVocabulary,
    next_question: &mut u64,
) -> Result<Split, HarnessError> {
    let scene_seed = derive_seed(seed, stream::SCENES);
    let question_seed = derive_seed(seed, stream::QUESTIONS);
    let wanted = per_family(spec.questions_per_scene);
    let mut split = Split {
        scenes: Vec::with_capacity(ids.end.saturating_sub(ids.start) as usize),
        questions: Vec::new(),
    };
    for id in ids {
        let mut last_err = String::new();
        let mut accepted = None;
        // A scene too sparse for some family is redrawn under the same id.
        for attempt in 0..SCENE_ATTEMPTS {
            let stream = id * SCENE_ATTEMPTS + attempt;
            let scene = match sample_scene(id, derive_seed(scene_seed, stream), &spec.sampler, vocab) {
                Ok(s) => s,
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            };
            match generate_questions(&scene, derive_seed(question_seed, stream), &wanted, &spec.generation, vocab) {
                Ok(qs) => {
                    accepted = Some((scene, qs));
                    break;
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        let (scene, questions) = accepted.ok_or_else(|| {
            HarnessError::Data(format!("scene {id}: no usable draw in {SCENE_ATTEMPTS} attempts ({last_err})"))
        })?;
        for mut q in questions {
            q.id = *next_question;
            *next_question += 1;
            split.questions.push(q);
        }
        split.scenes.push(scene);
    }
    Ok(split)
}

/// Train scenes get ids `0..train_scenes`, validation scenes follow.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset, HarnessError> {
    let vocab = AttributeVocabulary::default();
    let n_train = spec.train_scenes as u64;
    let n_val = spec.val_scenes as u64;
    let mut next = 0;
    let train = build_split(0..n_train, spec, seed, &vocab, &mut next)?;
    let val = build_split(n_train..n_train + n_val, spec, seed, &vocab, &mut next)?;
    Ok(Dataset { train, val })
}

/// Number of scenes kept at `fraction`.
pub fn kept_scenes(total: usize, fraction: f64) -> usize {
    ((fraction * total as f64).round() as usize).clamp(1, total.max(1))
}

/// Keeps `round(fraction * n)` training scenes (a seeded choice, nested
/// across fractions) with all of their questions.
pub fn subset_train(train: &Split, fraction: f64, seed: u64) -> Result<Split, HarnessError> {
    check_fraction(fraction)?;
    let k = kept_scenes(train.scenes.len(), fraction);
    let mut order: Vec<usize> = (0..train.scenes.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::SUBSET)));
    let mut keep: Vec<usize> = order[..k].to_vec();
    keep.sort_unstable();
    let ids: BTreeSet<u64> = keep.iter().map(|&i| train.scenes[i].id).collect();
    Ok(Split {
        scenes: keep.iter().map(|&i| train.scenes[i].clone()).collect(),
        questions: train
            .questions
            .iter()
            .filter(|q| ids.contains(&q.scene_id))
            .cloned()
            .collect(),
    })
}

/// Word list of every training question, sorted.
pub fn text_vocab(train: &Split) -> TextVocab {
    let words: BTreeSet<String> = train.questions.iter().flat_map(|q| tokenize(&q.text)).collect();
    TextVocab::new(words)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub question_id: u64,
    /// Index into [`PreparedSplit::visual`].
    pub scene: usize,
    pub family: QuestionFamily,
    pub truth: (AnswerType, Answer),
}

/// Frozen model inputs for one split.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub scene_ids: Vec<u64>,
    /// Adapted visual tokens, one sequence per scene.
    pub visual: Vec<TokenSequence>,
    /// Text embedding, one per example.
    pub texts: Vec<TextTokens>,
    pub examples: Vec<Example>,
}

impl PreparedSplit {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn samples(&self, indices: &[usize]) -> Vec<Sample<'_>> {
        indices
            .iter()
            .map(|&i| Sample {
                text: &self.texts[i],
                visual: &self.visual[self.examples[i].scene],
            })
            .collect()
    }

    pub fn truths(&self, indices: &[usize]) -> Vec<(AnswerType, Answer)> {
        indices.iter().map(|&i| self.examples[i].truth).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub plan: AdapterPlan,
    pub pca: Option<PcaModel>,
    /// Scenes whose features the PCA was fitted on.
    pub pca_fit_scenes: Vec<u64>,
    pub train: PreparedSplit,
    pub val: PreparedSplit,
}

/// PCA over every valid pooled token of `scenes`, when the plan compresses.
pub fn fit_adapter(
    plan: &AdapterPlan,
    encoder: &Encoder,
    scenes: &[Scene],
) -> Result<Option<PcaModel>, HarnessError> {
    if plan.mode != vqprobe_core::adapter::AdapterMode::Compress {
        return Ok(None);
    }
    let mut samples = Vec::new();
    let mut n = 0;
    for scene in scenes {
        let pooled = pool_stage(plan, &encoder.encode(scene)?).map_err(|e| HarnessError::Data(e.to_string()))?;
        for i in 0..pooled.n {
            if pooled.validity[i] {
                samples.extend_from_slice(pooled.row(i));
                n += 1;
            }
        }
    }
    fit_pca(&samples, n, plan.input.dim, plan.dim)
        .map(Some)
        .map_err(|e| HarnessError::Data(format!("fitting PCA: {e}")))
}

fn prepare_split(
    split: &Split,
    encoder: &Encoder,
    plan: &AdapterPlan,
    pca: Option<&PcaModel>,
    vocab: &TextVocab,
    text_seed: u64,
    text_dim: usize,
) -> Result<PreparedSplit, HarnessError> {
    let mut visual = Vec::with_capacity(split.scenes.len());
    let mut index = HashMap::new();
    for (i, scene) in split.scenes.iter().enumerate() {
        let native = encoder.encode(scene)?;
        visual.push(apply_adapter(plan, pca, &native).map_err(|e| HarnessError::Data(format!("scene {}: {e}", scene.id)))?);
        index.insert(scene.id, i);
    }
    let mut texts = Vec::with_capacity(split.questions.len());
    let mut examples = Vec::with_capacity(split.questions.len());
    for q in &split.questions {
        let scene = *index
            .get(&q.scene_id)
            .ok_or_else(|| HarnessError::Data(format!("question {} refers to missing scene {}", q.id, q.scene_id)))?;
        texts.push(embed_text(&q.text, vocab, text_seed, text_dim));
        examples.push(Example {
            question_id: q.id,
            scene,
            family: q.family,
            truth: (q.answer.answer_type(), q.answer),
        });
    }
    Ok(PreparedSplit {
        scene_ids: split.scenes.iter().map(|s| s.id).collect(),
        visual,
        texts,
        examples,
    })
}

/// Plans the adapter for the encoder, fits it on `train` only, and freezes
/// both splits. The text vocabulary comes from `vocab_source` (the full
/// training split, so every fraction shares one text encoder).
pub fn prepare(
    cfg: &ExperimentConfig,
    encoder: &Encoder,
    vocab_source: &Split,
    train: &Split,
    val: &Split,
) -> Result<Prepared, HarnessError> {
    let train_ids: BTreeSet<u64> = train.scenes.iter().map(|s| s.id).collect();
    if let Some(s) = val.scenes.iter().find(|s| train_ids.contains(&s.id)) {
        return Err(HarnessError::Data(format!("scene {} is in both splits", s.id)));
    }
    let profile = find_profile(&cfg.encoder.profile).map_err(|e| HarnessError::Config(e.to_string()))?;
    let plan = plan_adaptation(encoder.geometry(), cfg.regime()?, &profile)
        .map_err(|e| HarnessError::Data(format!("encoder `{}`: {e}", encoder.name())))?;
    let pca = fit_adapter(&plan, encoder, &train.scenes)?;
    let vocab = text_vocab(vocab_source);
    let text_seed = derive_seed(cfg.seed, stream::TEXT);
    let dim = cfg.dataset.text_dim;
    Ok(Prepared {
        train: prepare_split(train, encoder, &plan, pca.as_ref(), &vocab, text_seed, dim)?,
        val: prepare_split(val, encoder, &plan, pca.as_ref(), &vocab, text_seed, dim)?,
        pca_fit_scenes: if pca.is_some() { train.scenes.iter().map(|s| s.id).collect() } else { Vec::new() },
        plan,
        pca,
    })
}
