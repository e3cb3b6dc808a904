//! Transformer encoder-decoder over `[text; visual]` tokens with an
//! answer-type head and three answer heads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vqprobe_core::question::{Answer, AnswerType, TextTokens};
use vqprobe_core::TokenSequence;

use crate::{AdamW, NnError, ParamId, ParamStore, Tape, Tensor, Var};

pub const TYPE_CLASSES: usize = 3;
pub const COUNT_CLASSES: usize = 11;
pub const ATTRIBUTE_CLASSES: usize = 15;

const EMBED_SIGMA: f32 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasoningConfig {
    pub d_model: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub queries: usize,
    pub dropout: f32,
    /// Width of the incoming text embeddings.
    pub text_dim: usize,
    /// Width of the adapted visual tokens.
    pub visual_dim: usize,
    pub max_text_len: usize,
    /// Side of the square positional table for grid tokens.
    pub max_grid: usize,
    /// Give object tokens a positional embedding by slot index.
    pub object_positions: bool,
}

impl Default for ReasoningConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            encoder_layers: 3,
            decoder_layers: 3,
            heads: 4,
            ffn_dim: 512,
            queries: 1,
            dropout: 0.1,
            text_dim: 64,
            visual_dim: 10,
            max_text_len: 64,
            max_grid: 16,
            object_positions: false,
        }
    }
}

impl ReasoningConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let fail = |m: String| Err(NnError::Config(m));
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return fail(format!("d_model {} is not divisible by {} heads", self.d_model, self.heads));
        }
        if self.queries == 0 {
            return fail("at least one decoder query is required".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.text_dim == 0 || self.visual_dim == 0 || self.ffn_dim == 0 {
            return fail("input and feed-forward widths must be positive".into());
        }
        if self.max_text_len == 0 || self.max_grid == 0 {
            return fail("positional tables must be non-empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    g: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct MultiHead {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone, Copy)]
struct FeedForward {
    up: Linear,
    down: Linear,
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayer {
    attn: MultiHead,
    norm1: Norm,
    ffn: FeedForward,
    norm2: Norm,
}

#[derive(Debug, Clone, Copy)]
struct DecoderLayer {
    self_attn: MultiHead,
    norm1: Norm,
    cross_attn: MultiHead,
    norm2: Norm,
    ffn: FeedForward,
    norm3: Norm,
}

#[derive(Debug, Clone)]
struct Layout {
    text_proj: Linear,
    visual_proj: Linear,
    segment: ParamId,
    text_pos: ParamId,
    grid_pos: ParamId,
    encoder: Vec<EncoderLayer>,
    query: ParamId,
    decoder: Vec<DecoderLayer>,
    type_head: Linear,
    binary_head: Linear,
    count_head: Linear,
    attribute_head: Linear,
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        Linear {
            w: self.store.add_uniform(&format!("{name}.weight"), &[fan_in, fan_out], fan_in, self.rng),
            b: self.store.add_const(&format!("{name}.bias"), &[fan_out], 0.0),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            g: self.store.add_const(&format!("{name}.gamma"), &[d], 1.0),
            b: self.store.add_const(&format!("{name}.beta"), &[d], 0.0),
        }
    }

    fn multi_head(&mut self, name: &str, d: usize) -> MultiHead {
        MultiHead {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.out"), d, d),
        }
    }

    fn ffn(&mut self, name: &str, d: usize, hidden: usize) -> FeedForward {
        FeedForward {
            up: self.linear(&format!("{name}.up"), d, hidden),
            down: self.linear(&format!("{name}.down"), hidden, d),
        }
    }

    fn embedding(&mut self, name: &str, rows: usize, d: usize) -> ParamId {
        self.store.add_normal(name, &[rows, d], EMBED_SIGMA, self.rng)
    }
}

/// One question's inputs: frozen text embeddings and adapted visual tokens.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub text: &'a TextTokens,
    pub visual: &'a TokenSequence,
}

/// Tape handles of the four heads for a batch: `[B, 3]`, `[B, 1]`, `[B, 11]`, `[B, 15]`.
#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub type_logits: Var,
    pub binary: Var,
    pub count: Var,
    pub attribute: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    /// Encoder output `[B, L, d_model]`, text tokens first.
    pub memory: Var,
    pub heads: HeadVars,
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub type_loss: Var,
    pub binary: Var,
    pub count: Var,
    pub attribute: Var,
    pub total: Var,
}

/// Head outputs for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBundle {
    pub type_logits: [f32; TYPE_CLASSES],
    pub binary: f32,
    pub count: [f32; COUNT_CLASSES],
    pub attribute: [f32; ATTRIBUTE_CLASSES],
}

/// Fused inputs for a batch, before they touch any parameter.
#[derive(Debug, Clone)]
pub struct FusedInputs {
    pub batch: usize,
    pub text_len: usize,
    pub visual_len: usize,
    text: Tensor,
    visual: Tensor,
    text_pos_ids: Vec<usize>,
    visual_pos_ids: Option<Vec<usize>>,
    /// Length `batch * (text_len + visual_len)`; false for padding and invalid tokens.
    pub key_valid: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct ReasoningModel {
    pub config: ReasoningConfig,
    pub params: ParamStore,
    layout: Layout,
}

impl ReasoningModel {
    pub fn new(config: ReasoningConfig, rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        config.validate()?;
        let d = config.d_model;
        let mut store = ParamStore::new();
        let mut b = Builder { store: &mut store, rng };
        let text_proj = b.linear("text_proj", config.text_dim, d);
        let visual_proj = b.linear("visual_proj", config.visual_dim, d);
        let segment = b.embedding("segment", 2, d);
        let text_pos = b.embedding("text_pos", config.max_text_len, d);
        let grid_pos = b.embedding("grid_pos", config.max_grid * config.max_grid, d);
        let encoder = (0..config.encoder_layers)
            .map(|i| EncoderLayer {
                attn: b.multi_head(&format!("enc{i}.attn"), d),
                norm1: b.norm(&format!("enc{i}.norm1"), d),
                ffn: b.ffn(&format!("enc{i}.ffn"), d, config.ffn_dim),
                norm2: b.norm(&format!("enc{i}.norm2"), d),
            })
            .collect();
        let query = b.embedding("query", config.queries, d);
        let decoder = (0..config.decoder_layers)
            .map(|i| DecoderLayer {
                self_attn: b.multi_head(&format!("dec{i}.self_attn"), d),
                norm1: b.norm(&format!("dec{i}.norm1"), d),
                cross_attn: b.multi_head(&format!("dec{i}.cross_attn"), d),
                norm2: b.norm(&format!("dec{i}.norm2"), d),
                ffn: b.ffn(&format!("dec{i}.ffn"), d, config.ffn_dim),
                norm3: b.norm(&format!("dec{i}.norm3"), d),
            })
            .collect();
        let layout = Layout {
            text_proj,
            visual_proj,
            segment,
            text_pos,
            grid_pos,
            encoder,
            query,
            decoder,
            type_head: b.linear("head.type", d, TYPE_CLASSES),
            binary_head: b.linear("head.binary", d, 1),
            count_head: b.linear("head.count", d, COUNT_CLASSES),
            attribute_head: b.linear("head.attribute", d, ATTRIBUTE_CLASSES),
        };
        Ok(Self {
            config,
            params: store,
            layout,
        })
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.id(name).map(|id| &self.params.get(id).value)
    }

    /// Weight and bias names of the answer head for `answer_type`.
    pub fn head_param_names(&self, answer_type: AnswerType) -> [String; 2] {
        let name = match answer_type {
            AnswerType::Binary => "head.binary",
            AnswerType::Count => "head.count",
            AnswerType::Attribute => "head.attribute",
        };
        [format!("{name}.weight"), format!("{name}.bias")]
    }

    /// Pads and stacks a batch. Text is padded to the longest question; every
    /// visual sequence must have the same token count.
    pub fn fuse(&self, samples: &[Sample]) -> Result<FusedInputs, NnError> {
        let cfg = &self.config;
        let shape_err = |left: Vec<usize>, right: Vec<usize>| NnError::Shape {
            op: "project_inputs",
            left,
            right,
        };
        let batch = samples.len();
        if batch == 0 {
            return Err(shape_err(vec![0], vec![]));
        }
        let text_len = samples.iter().map(|s| s.text.len()).max().unwrap_or(0);
        let visual_len = samples[0].visual.n;
        if text_len > cfg.max_text_len {
            return Err(shape_err(vec![text_len], vec![cfg.max_text_len]));
        }
        let mut text = Tensor::zeros(&[batch, text_len, cfg.text_dim]);
        let mut visual = Tensor::zeros(&[batch, visual_len, cfg.visual_dim]);
        let mut key_valid = Vec::with_capacity(batch * (text_len + visual_len));
        let mut visual_pos_ids = match (&samples[0].visual.grid, cfg.object_positions) {
            (Some(_), _) | (None, true) => Some(Vec::with_capacity(batch * visual_len)),
            (None, false) => None,
        };
        for (b, s) in samples.iter().enumerate() {
            if s.text.dim != cfg.text_dim && !s.text.is_empty() {
                return Err(shape_err(vec![s.text.len(), s.text.dim], vec![cfg.text_dim]));
            }
            if s.visual.d != cfg.visual_dim || s.visual.n != visual_len {
                return Err(shape_err(vec![s.visual.n, s.visual.d], vec![visual_len, cfg.visual_dim]));
            }
            if s.visual.grid.is_some() != samples[0].visual.grid.is_some() {
                return Err(shape_err(vec![s.visual.n], vec![visual_len]));
            }
            let t0 = b * text_len * cfg.text_dim;
            text.data[t0..t0 + s.text.embedding.len()].copy_from_slice(&s.text.embedding);
            let v0 = b * visual_len * cfg.visual_dim;
            visual.data[v0..v0 + s.visual.values.len()].copy_from_slice(&s.visual.values);
            key_valid.extend((0..text_len).map(|i| i < s.text.len()));
            key_valid.extend_from_slice(&s.visual.validity);
            if let Some(ids) = &mut visual_pos_ids {
                match &s.visual.grid {
                    Some(g) => {
                        for &(r, c) in &g.coords {
                            let (r, c) = (r as usize, c as usize);
                            if r >= cfg.max_grid || c >= cfg.max_grid {
                                return Err(shape_err(vec![r, c], vec![cfg.max_grid, cfg.max_grid]));
                            }
                            ids.push(r * cfg.max_grid + c);
                        }
                    }
                    None => {
                        if visual_len > cfg.max_grid * cfg.max_grid {
                            return Err(shape_err(vec![visual_len], vec![cfg.max_grid * cfg.max_grid]));
                        }
                        ids.extend(0..visual_len);
                    }
                }
            }
        }
        let text_pos_ids = (0..batch).flat_map(|_| 0..text_len).collect();
        Ok(FusedInputs {
            batch,
            text_len,
            visual_len,
            text,
            visual,
            text_pos_ids,
            visual_pos_ids,
            key_valid,
        })
    }

    fn linear(&self, tape: &mut Tape, x: Var, l: Linear) -> Result<Var, NnError> {
        let w = tape.param(&self.params, l.w);
        let b = tape.param(&self.params, l.b);
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }

    fn norm(&self, tape: &mut Tape, x: Var, n: Norm) -> Result<Var, NnError> {
        let g = tape.param(&self.params, n.g);
        let b = tape.param(&self.params, n.b);
        tape.layer_norm(x, g, b)
    }

    fn multi_head(
        &self,
        tape: &mut Tape,
        query: Var,
        memory: Var,
        m: MultiHead,
        key_valid: Option<&[bool]>,
    ) -> Result<Var, NnError> {
        let q = self.linear(tape, query, m.q)?;
        let k = self.linear(tape, memory, m.k)?;
        let v = self.linear(tape, memory, m.v)?;
        let a = tape.attention(q, k, v, self.config.heads, key_valid)?;
        self.linear(tape, a, m.o)
    }

    fn ffn(&self, tape: &mut Tape, x: Var, f: FeedForward, rng: &mut Option<&mut ChaCha8Rng>) -> Result<Var, NnError> {
        let h = self.linear(tape, x, f.up)?;
        let h = tape.relu(h);
        let h = dropout(tape, h, self.config.dropout, rng);
        self.linear(tape, h, f.down)
    }

    /// Projection to `d_model`, segment and positional embeddings, and the
    /// `[Q; V]` concatenation. Returns `[B, L, d_model]`.
    pub fn project_inputs(&self, tape: &mut Tape, inputs: &FusedInputs) -> Result<Var, NnError> {
        let d = self.config.d_model;
        let (b, lt, lv) = (inputs.batch, inputs.text_len, inputs.visual_len);
        let segment = tape.param(&self.params, self.layout.segment);

        let text = tape.input(inputs.text.clone());
        let mut t = self.linear(tape, text, self.layout.text_proj)?;
        let seg_t = tape.embedding(segment, &vec![0; b * lt])?;
        let seg_t = tape.reshape(seg_t, &[b, lt, d])?;
        t = tape.add(t, seg_t)?;
        let text_pos = tape.param(&self.params, self.layout.text_pos);
        let pos_t = tape.embedding(text_pos, &inputs.text_pos_ids)?;
        let pos_t = tape.reshape(pos_t, &[b, lt, d])?;
        t = tape.add(t, pos_t)?;

        let visual = tape.input(inputs.visual.clone());
        let mut v = self.linear(tape, visual, self.layout.visual_proj)?;
        let seg_v = tape.embedding(segment, &vec![1; b * lv])?;
        let seg_v = tape.reshape(seg_v, &[b, lv, d])?;
        v = tape.add(v, seg_v)?;
        if let Some(ids) = &inputs.visual_pos_ids {
            let grid_pos = tape.param(&self.params, self.layout.grid_pos);
            let pos_v = tape.embedding(grid_pos, ids)?;
            let pos_v = tape.reshape(pos_v, &[b, lv, d])?;
            v = tape.add(v, pos_v)?;
        }
        tape.concat(&[t, v], 1)
    }

    /// Full forward pass. Dropout is active only when `rng` is given.
    pub fn forward(
        &self,
        tape: &mut Tape,
        inputs: &FusedInputs,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardVars, NnError> {
        let cfg = &self.config;
        let p = cfg.dropout;
        let valid = Some(inputs.key_valid.as_slice());
        let mut x = self.project_inputs(tape, inputs)?;
        for layer in &self.layout.encoder {
            let a = self.multi_head(tape, x, x, layer.attn, valid)?;
            let a = dropout(tape, a, p, &mut rng);
            let r = tape.add(x, a)?;
            x = self.norm(tape, r, layer.norm1)?;
            let f = self.ffn(tape, x, layer.ffn, &mut rng)?;
            let f = dropout(tape, f, p, &mut rng);
            let r = tape.add(x, f)?;
            x = self.norm(tape, r, layer.norm2)?;
        }
        let memory = x;

        let query = tape.param(&self.params, self.layout.query);
        let zeros = tape.input(Tensor::zeros(&[inputs.batch, cfg.queries, cfg.d_model]));
        let mut t = tape.add(zeros, query)?;
        for layer in &self.layout.decoder {
            let a = self.multi_head(tape, t, t, layer.self_attn, None)?;
            let a = dropout(tape, a, p, &mut rng);
            let r = tape.add(t, a)?;
            t = self.norm(tape, r, layer.norm1)?;
            let c = self.multi_head(tape, t, memory, layer.cross_attn, valid)?;
            let c = dropout(tape, c, p, &mut rng);
            let r = tape.add(t, c)?;
            t = self.norm(tape, r, layer.norm2)?;
            let f = self.ffn(tape, t, layer.ffn, &mut rng)?;
            let f = dropout(tape, f, p, &mut rng);
            let r = tape.add(t, f)?;
            t = self.norm(tape, r, layer.norm3)?;
        }
        let first = tape.slice(t, 1, 0, 1)?;
        let first = tape.reshape(first, &[inputs.batch, cfg.d_model])?;
        let heads = HeadVars {
            type_logits: self.linear(tape, first, self.layout.type_head)?,
            binary: self.linear(tape, first, self.layout.binary_head)?,
            count: self.linear(tape, first, self.layout.count_head)?,
            attribute: self.linear(tape, first, self.layout.attribute_head)?,
        };
        Ok(ForwardVars { memory, heads })
    }

    /// Inference on a batch without dropout.
    pub fn predict(&self, samples: &[Sample]) -> Result<Vec<PredictionBundle>, NnError> {
        let inputs = self.fuse(samples)?;
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, &inputs, None)?;
        Ok(bundles(&tape, out.heads))
    }
}

/// Loss terms of one optimizer step, batch-averaged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub total: f32,
    pub type_loss: f32,
    pub binary: f32,
    pub count: f32,
    pub attribute: f32,
}

impl ReasoningModel {
    /// Forward with dropout, backward, and one AdamW update.
    pub fn train_step(
        &mut self,
        optimizer: &mut AdamW,
        samples: &[Sample],
        truth: &[(AnswerType, Answer)],
        lr: f64,
        weight_decay: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepLoss, NnError> {
        let inputs = self.fuse(samples)?;
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, &inputs, Some(rng))?;
        let loss = compute_loss(&mut tape, out.heads, truth)?;
        let read = |v: Var| tape.value(v).item();
        let stats = StepLoss {
            total: read(loss.total),
            type_loss: read(loss.type_loss),
            binary: read(loss.binary),
            count: read(loss.count),
            attribute: read(loss.attribute),
        };
        if !stats.total.is_finite() {
            return Ok(stats);
        }
        let grads = tape.backward(loss.total)?;
        self.params.zero_grad();
        grads.accumulate_into(&mut self.params);
        optimizer.step(&mut self.params, lr, weight_decay)?;
        Ok(stats)
    }

    /// Value-only loss on a batch, without dropout.
    pub fn eval_loss(&self, samples: &[Sample], truth: &[(AnswerType, Answer)]) -> Result<(f32, Vec<PredictionBundle>), NnError> {
        let inputs = self.fuse(samples)?;
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, &inputs, None)?;
        let loss = compute_loss(&mut tape, out.heads, truth)?;
        Ok((tape.value(loss.total).item(), bundles(&tape, out.heads)))
    }
}

fn dropout(tape: &mut Tape, x: Var, p: f32, rng: &mut Option<&mut ChaCha8Rng>) -> Var {
    match rng {
        Some(r) if p > 0.0 => tape.dropout(x, p, &mut **r),
        _ => x,
    }
}

/// Per-sample head values read off the tape.
pub fn bundles(tape: &Tape, heads: HeadVars) -> Vec<PredictionBundle> {
    let t = &tape.value(heads.type_logits).data;
    let b = &tape.value(heads.binary).data;
    let c = &tape.value(heads.count).data;
    let a = &tape.value(heads.attribute).data;
    (0..b.len())
        .map(|i| PredictionBundle {
            type_logits: t[i * TYPE_CLASSES..(i + 1) * TYPE_CLASSES].try_into().unwrap(),
            binary: b[i],
            count: c[i * COUNT_CLASSES..(i + 1) * COUNT_CLASSES].try_into().unwrap(),
            attribute: a[i * ATTRIBUTE_CLASSES..(i + 1) * ATTRIBUTE_CLASSES].try_into().unwrap(),
        })
        .collect()
}

/// `L_t` plus the one answer-head loss matching each sample's true type,
/// averaged over the batch. Heads of other types contribute exactly 0.
pub fn compute_loss(tape: &mut Tape, heads: HeadVars, truth: &[(AnswerType, Answer)]) -> Result<LossVars, NnError> {
    let n = tape.shape(heads.binary)[0];
    if truth.len() != n {
        return Err(NnError::Shape {
            op: "compute_loss",
            left: vec![n],
            right: vec![truth.len()],
        });
    }
    let mut types = Vec::with_capacity(n);
    let mut binary = vec![None; n];
    let mut count = vec![None; n];
    let mut attribute = vec![None; n];
    for (i, &(t, a)) in truth.iter().enumerate() {
        if a.answer_type() != t {
            return Err(NnError::VariantMismatch {
                expected: type_name(t),
                answer: format!("{a:?}"),
            });
        }
        types.push(Some(t.index()));
        match a {
            Answer::Bool(y) => binary[i] = Some(y),
            Answer::Count(c) if (c as usize) < COUNT_CLASSES => count[i] = Some(c as usize),
            Answer::Attribute(k) if (k as usize) < ATTRIBUTE_CLASSES => attribute[i] = Some(k as usize),
            _ => {
                return Err(NnError::VariantMismatch {
                    expected: type_name(t),
                    answer: format!("{a:?} (out of range)"),
                })
            }
        }
    }
    let inv = 1.0 / n as f32;
    let lt = tape.cross_entropy(heads.type_logits, &types)?;
    let lt = tape.scale(lt, inv);
    let lb = tape.bce_with_logits(heads.binary, &binary)?;
    let lb = tape.scale(lb, inv);
    let lc = tape.cross_entropy(heads.count, &count)?;
    let lc = tape.scale(lc, inv);
    let la = tape.cross_entropy(heads.attribute, &attribute)?;
    let la = tape.scale(la, inv);
    let s = tape.add(lt, lb)?;
    let s = tape.add(s, lc)?;
    let total = tape.add(s, la)?;
    Ok(LossVars {
        type_loss: lt,
        binary: lb,
        count: lc,
        attribute: la,
        total,
    })
}

fn type_name(t: AnswerType) -> &'static str {
    match t {
        AnswerType::Binary => "binary",
        AnswerType::Count => "count",
        AnswerType::Attribute => "attribute",
    }
}

fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Routes through the type head (ties go to the lowest index); the binary
/// answer is `logit > 0`.
pub fn predict_answer(bundle: &PredictionBundle) -> (AnswerType, Answer) {
    let t = AnswerType::from_index(argmax(&bundle.type_logits)).unwrap();
    (t, answer_of_type(bundle, t))
}

/// The answer head for `t`, ignoring the type head.
pub fn answer_of_type(bundle: &PredictionBundle, t: AnswerType) -> Answer {
    match t {
        AnswerType::Binary => Answer::Bool(bundle.binary > 0.0),
        AnswerType::Count => Answer::Count(argmax(&bundle.count) as u8),
        AnswerType::Attribute => Answer::Attribute(argmax(&bundle.attribute) as u8),
    }
}

/// Random answer consistent with its type, for smoke inputs.
pub fn random_answer<R: Rng>(t: AnswerType, rng: &mut R) -> Answer {
    match t {
        AnswerType::Binary => Answer::Bool(rng.gen()),
        AnswerType::Count => Answer::Count(rng.gen_range(0..COUNT_CLASSES as u8)),
        AnswerType::Attribute => Answer::Attribute(rng.gen_range(0..ATTRIBUTE_CLASSES as u8)),
    }
}
