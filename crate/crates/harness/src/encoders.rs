//! Native visual tokens per scene: the two built-in encoders, or records read
//! back from a VQFS store.

use std::path::Path;

use vqprobe_core::features::{EncoderGeometry, FeatureStore, GeometryKind};
use vqprobe_core::raster::rasterize_scene;
use vqprobe_core::scene::{encode_ground_truth, Scene, D_MIN, K_MAX};
use vqprobe_core::tokens::GridCoords;
use vqprobe_core::{Modality, TokenSequence};

use crate::HarnessError;

/// Raw pixels are cut into this many patches per side.
pub const RAW_GRID: usize = 3;

pub enum Encoder {
    GroundTruth,
    Raw { resolution: usize },
    Store { profile: String, store: Box<FeatureStore> },
}

impl Encoder {
    pub fn builtin(profile: &str, raw_resolution: usize) -> Option<Self> {
        match profile {
            "gt" => Some(Self::GroundTruth),
            "raw" => Some(Self::Raw {
                resolution: raw_resolution,
            }),
            _ => None,
        }
    }

    pub fn open_store(profile: &str, path: &Path) -> Result<Self, HarnessError> {
        let store = FeatureStore::open(path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
        Ok(Self::Store {
            profile: profile.to_string(),
            store: Box::new(store),
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Self::GroundTruth => "gt",
            Self::Raw { .. } => "raw",
            Self::Store { profile, .. } => profile,
        }
    }

    pub fn geometry(&self) -> EncoderGeometry {
        match self {
            Self::GroundTruth => EncoderGeometry::objects(K_MAX, D_MIN),
            Self::Raw { resolution } => {
                let patch = resolution / RAW_GRID;
                EncoderGeometry::grid(RAW_GRID, RAW_GRID, patch * patch * 3)
            }
            Self::Store { store, .. } => store.geometry(),
        }
    }

    /// Store record id of a scene.
    pub fn record_id(scene_id: u64) -> String {
        scene_id.to_string()
    }

    pub fn encode(&self, scene: &Scene) -> Result<TokenSequence, HarnessError> {
        let geometry = self.geometry();
        match self {
            Self::GroundTruth => {
                let gt = encode_ground_truth(scene);
                Ok(TokenSequence::new(Modality::Visual, gt.rows(), D_MIN, gt.matrix).with_validity(gt.validity))
            }
            Self::Raw { resolution } => {
                let values = raw_patches(scene, *resolution);
                Ok(TokenSequence::new(Modality::Visual, geometry.tokens, geometry.dim, values)
                    .with_grid(GridCoords::full(RAW_GRID, RAW_GRID)))
            }
            Self::Store { store, .. } => {
                let id = Self::record_id(scene.id);
                let values = store
                    .get(&id)
                    .map_err(|e| HarnessError::Data(format!("scene {}: {e}", scene.id)))?;
                let seq = TokenSequence::new(Modality::Visual, geometry.tokens, geometry.dim, values);
                Ok(match geometry.kind {
                    GeometryKind::Grid { h, w } => seq.with_grid(GridCoords::full(h, w)),
                    GeometryKind::Objects { .. } => {
                        // Stores carry no mask; all-zero object rows are padding.
                        let validity = (0..seq.n).map(|i| seq.row(i).iter().any(|&v| v != 0.0)).collect();
                        seq.with_validity(validity)
                    }
                    GeometryKind::Text => seq,
                })
            }
        }
    }
}

/// Renders the scene at `resolution x resolution` and flattens each of the
/// `3 x 3` patches row-major (pixel rows, then columns, then RGB).
pub fn raw_patches(scene: &Scene, resolution: usize) -> Vec<f32> {
    let image = rasterize_scene(scene, resolution, resolution);
    let p = resolution / RAW_GRID;
    let mut out = Vec::with_capacity(resolution * resolution * 3);
    for gi in 0..RAW_GRID {
        for gj in 0..RAW_GRID {
            for r in gi * p..(gi + 1) * p {
                let start = (r * resolution + gj * p) * 3;
                out.extend_from_slice(&image.pixels[start..start + p * 3]);
            }
        }
    }
    out
}
