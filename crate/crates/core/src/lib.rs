//! Data side of the vqprobe harness.
//!
//! Everything here is pure and deterministic given its inputs:
//!
//! - [`scene`]: the CLEVR-like world, seeded scene sampling, ground-truth
//!   object tokens and ingestion of official scene files.
//! - [`raster`]: a top-down 2D rasterizer feeding the raw-pixel baseline.
//! - [`question`]: functional programs, the executor, template-based
//!   question generation and the frozen text embedding.
//! - [`features`]: the VQFS binary feature store and its JSON manifest.
//! - [`adapter`]: the memory adapter (adaptive pooling, PCA, zero padding)
//!   that forces every encoder onto a fixed `N_v x d` budget.

pub mod adapter;
pub mod features;
pub mod question;
pub mod raster;
pub mod scene;
pub mod tokens;

pub use tokens::{Modality, TokenSequence};

/// SplitMix64 finalizer, used to derive independent per-item seeds from a
/// global seed so that generation can be parallelized without changing output.
pub fn derive_seed(global: u64, stream: u64) -> u64 {
    let mut z = global ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
