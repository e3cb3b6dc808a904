//! Frozen text encoder: a deterministic tokenizer and a seeded Gaussian
//! embedding table that is never trained.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::derive_seed;

/// Id reserved for out-of-vocabulary words.
pub const OOV_ID: u32 = 0;

/// Standard deviation of embedding entries (unit Gaussian).
pub const EMBED_SIGMA: f32 = 1.0;

/// Lowercases, splits on whitespace and emits punctuation as separate tokens:
/// `"How many red cubes are there?"` gives 7 tokens, the last being `"?"`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for ch in word.chars() {
            if ch.is_ascii_punctuation() && ch != '-' && ch != '\'' {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(ch.to_string());
            } else {
                current.extend(ch.to_lowercase());
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextVocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl TextVocab {
    /// Ids start at 1; 0 is [`OOV_ID`]. Duplicate words keep their first id.
    pub fn new<I: IntoIterator<Item = String>>(words: I) -> Self {
        let mut list = Vec::new();
        let mut index = HashMap::new();
        for w in words {
            if !index.contains_key(&w) {
                index.insert(w.clone(), list.len() as u32 + 1);
                list.push(w);
            }
        }
        Self { words: list, index }
    }

    /// Vocabulary size including the OOV id.
    pub fn len(&self) -> usize {
        self.words.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(OOV_ID)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|w| self.id(w)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextTokens {
    pub ids: Vec<u32>,
    pub dim: usize,
    /// `ids.len() x dim`, row-major.
    pub embedding: Vec<f32>,
}

impl TextTokens {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.embedding[i * self.dim..(i + 1) * self.dim]
    }
}

/// Embedding row of `id`: a pure function of `(id, seed, dim)`.
pub fn embedding_row(id: u32, seed: u64, dim: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, id as u64));
    (0..dim)
        .map(|_| {
            let z: f32 = StandardNormal.sample(&mut rng);
            z * EMBED_SIGMA
        })
        .collect()
}

pub fn embed_text(text: &str, vocab: &TextVocab, seed: u64, dim: usize) -> TextTokens {
    assert!(dim >= 8, "text embedding dimension must be at least 8");
    let ids = vocab.encode(text);
    let mut embedding = Vec::with_capacity(ids.len() * dim);
    for &id in &ids {
        embedding.extend(embedding_row(id, seed, dim));
    }
    TextTokens { ids, dim, embedding }
}
