//! Checkpoint file: named parameter tensors, AdamW state, the training RNG
//! and a free-form metadata string, all little-endian.
//!
//! ```text
//! "VQCK" u16 version
//! u32 meta_len, meta bytes (UTF-8)
//! u32 n_params, then per param: u32 name_len, name, u32 rank, u32 dims[rank], f32 data
//! u8 has_optimizer [u64 step, f64 beta1, f64 beta2, f64 eps, f32 m/v per param]
//! u8 has_rng [32-byte seed, u64 stream, u128 word_pos]
//! ```

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::{AdamW, NnError, ParamStore, Tensor};

const MAGIC: [u8; 4] = *b"VQCK";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub params: Vec<(String, Tensor)>,
    pub optimizer: Option<AdamW>,
    pub rng: Option<RngState>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.bytes.len() {
            return Err(NnError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, NnError> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self) -> Result<String, NnError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| NnError::Checkpoint(e.to_string()))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_f32s(out: &mut Vec<u8>, xs: &[f32]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn capture(store: &ParamStore, optimizer: Option<&AdamW>, rng: Option<&ChaCha8Rng>, meta: &str) -> Self {
        Self {
            meta: meta.to_string(),
            params: store.iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect(),
            optimizer: optimizer.cloned(),
            rng: rng.map(RngState::capture),
        }
    }

    /// Copies parameter values into `store`, which must have the same names and
    /// shapes in the same order.
    pub fn restore_params(&self, store: &mut ParamStore) -> Result<(), NnError> {
        if self.params.len() != store.len() {
            return Err(NnError::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        for (p, (name, t)) in store.iter_mut().zip(&self.params) {
            if &p.name != name || p.value.shape != t.shape {
                return Err(NnError::Checkpoint(format!(
                    "parameter `{}` {:?} does not match checkpoint `{name}` {:?}",
                    p.name, p.value.shape, t.shape
                )));
            }
            p.value.data.copy_from_slice(&t.data);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.meta);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for d in &t.shape {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            put_f32s(&mut out, &t.data);
        }
        match &self.optimizer {
            Some(o) => {
                out.push(1);
                out.extend_from_slice(&o.step.to_le_bytes());
                for x in [o.beta1, o.beta2, o.eps] {
                    out.extend_from_slice(&x.to_le_bytes());
                }
                for (m, v) in o.m.iter().zip(&o.v) {
                    put_f32s(&mut out, m);
                    put_f32s(&mut out, v);
                }
            }
            None => out.push(0),
        }
        match &self.rng {
            Some(r) => {
                out.push(1);
                out.extend_from_slice(&r.seed);
                out.extend_from_slice(&r.stream.to_le_bytes());
                out.extend_from_slice(&r.word_pos.to_le_bytes());
            }
            None => out.push(0),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let meta = r.string()?;
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_, _>>()?;
            let data = r.f32s(shape.iter().product())?;
            params.push((name, Tensor { shape, data }));
        }
        let optimizer = match r.u8()? {
            0 => None,
            _ => {
                let step = r.u64()?;
                let (beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?);
                let mut m = Vec::with_capacity(n);
                let mut v = Vec::with_capacity(n);
                for (_, t) in &params {
                    m.push(r.f32s(t.numel())?);
                    v.push(r.f32s(t.numel())?);
                }
                Some(AdamW { beta1, beta2, eps, step, m, v })
            }
        };
        let rng = match r.u8()? {
            0 => None,
            _ => {
                let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
                let stream = r.u64()?;
                let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
                Some(RngState { seed, stream, word_pos })
            }
        };
        if r.pos != bytes.len() {
            return Err(NnError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { meta, params, optimizer, rng })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
