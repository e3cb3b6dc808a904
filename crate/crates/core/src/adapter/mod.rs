//! Memory adapter: forces any encoder's output onto `N_v x d` tokens with
//! `N_v * d <= B`. Grids are average-pooled to a per-profile `g x g`, then
//! every token is PCA-compressed, zero-padded or passed through to
//! `d = floor(B / N_v)`.

mod pca;
mod pool;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pca::{fit_pca, PcaModel};
pub use pool::adaptive_avg_pool;

use crate::features::{EncoderGeometry, GeometryKind};
use crate::scene::K_MAX;
use crate::tokens::{Modality, TokenSequence};

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("budget {budget} leaves zero dims for {tokens} tokens")]
    BudgetTooSmall { budget: usize, tokens: usize },
    #[error("budget {budget} is smaller than the object cap {k}")]
    InvalidRegime { budget: usize, k: usize },
    #[error("cannot pool a {h}x{w} grid to {g}x{g}")]
    PoolTooLarge { h: usize, w: usize, g: usize },
    #[error("profile `{profile}` does not cover {kind:?} geometry")]
    ProfileMismatch { profile: String, kind: GeometryKind },
    #[error("plan/geometry mismatch: {0}")]
    PlanMismatch(String),
    #[error("PCA needs n > d_out and 0 < d_out <= d, got n={n}, d={d}, d_out={d_out}")]
    PcaShape { n: usize, d: usize, d_out: usize },
    #[error("non-finite sample at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },
    #[error("PCA model file: {0}")]
    BadModelFile(String),
    #[error("unknown encoder profile `{0}`")]
    UnknownProfile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Total scalar budget `B` for the visual memory, with the object cap `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRegime {
    pub budget: usize,
    pub k: usize,
}

impl MemoryRegime {
    pub fn new(budget: usize) -> Result<Self, AdapterError> {
        let regime = Self { budget, k: K_MAX };
        regime.validate()?;
        Ok(regime)
    }

    pub fn mem100() -> Self {
        Self { budget: 100, k: K_MAX }
    }

    pub fn mem1000() -> Self {
        Self { budget: 1000, k: K_MAX }
    }

    pub fn validate(&self) -> Result<(), AdapterError> {
        if self.budget < self.k {
            return Err(AdapterError::InvalidRegime {
                budget: self.budget,
                k: self.k,
            });
        }
        Ok(())
    }
}

/// Native geometry of a named encoder plus its pooled grid size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderProfile {
    pub name: String,
    pub geometry: EncoderGeometry,
    /// `g` for grid encoders; pooled output is `g x g` tokens.
    #[serde(default)]
    pub pooled_grid: Option<usize>,
}

impl EncoderProfile {
    pub fn objects(name: &str, n: usize, dim: usize) -> Self {
        Self {
            name: name.to_string(),
            geometry: EncoderGeometry::objects(n, dim),
            pooled_grid: None,
        }
    }

    pub fn grid(name: &str, h: usize, w: usize, dim: usize, g: usize) -> Self {
        Self {
            name: name.to_string(),
            geometry: EncoderGeometry::grid(h, w, dim),
            pooled_grid: Some(g),
        }
    }
}

/// The default encoder table. Raw pixels are 192x192x3 cut into a 3x3 grid
/// of 64x64 patches.
pub fn default_profiles() -> Vec<EncoderProfile> {
    vec![
        EncoderProfile::objects("gt", K_MAX, 7),
        EncoderProfile::objects("dti_sprites", 10, 10),
        EncoderProfile::objects("slot_attention", 11, 64),
        EncoderProfile::grid("resnet50", 7, 7, 2048, 4),
        EncoderProfile::grid("dino_resnet50", 7, 7, 2048, 4),
        EncoderProfile::grid("dino_vit", 14, 14, 384, 4),
        EncoderProfile::grid("raw", 3, 3, 64 * 64 * 3, 3),
    ]
}

pub fn find_profile(name: &str) -> Result<EncoderProfile, AdapterError> {
    default_profiles()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| AdapterError::UnknownProfile(name.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterMode {
    Compress,
    Pad,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterPlan {
    pub profile: String,
    pub input: EncoderGeometry,
    pub pooled_grid: Option<usize>,
    pub regime: MemoryRegime,
    pub tokens: usize,
    pub dim: usize,
    pub mode: AdapterMode,
}

impl AdapterPlan {
    pub fn output_shape(&self) -> (usize, usize) {
        (self.tokens, self.dim)
    }
}

/// Budget arithmetic: `N_v` from the profile, `d = floor(B / N_v)`.
pub fn plan_adaptation(
    geometry: EncoderGeometry,
    regime: MemoryRegime,
    profile: &EncoderProfile,
) -> Result<AdapterPlan, AdapterError> {
    regime.validate()?;
    let mismatch = || AdapterError::ProfileMismatch {
        profile: profile.name.clone(),
        kind: geometry.kind,
    };
    let (tokens, pooled_grid) = match (geometry.kind, profile.geometry.kind) {
        (GeometryKind::Objects { n }, GeometryKind::Objects { .. }) => (n, None),
        (GeometryKind::Grid { h, w }, GeometryKind::Grid { .. }) => {
            let g = profile.pooled_grid.ok_or_else(mismatch)?;
            if g == 0 || g > h || g > w {
                return Err(AdapterError::PoolTooLarge { h, w, g });
            }
            (g * g, Some(g))
        }
        _ => return Err(mismatch()),
    };
    let dim = regime.budget.checked_div(tokens).unwrap_or(0);
    if dim == 0 {
        return Err(AdapterError::BudgetTooSmall {
            budget: regime.budget,
            tokens,
        });
    }
    let mode = match geometry.dim.cmp(&dim) {
        std::cmp::Ordering::Greater => AdapterMode::Compress,
        std::cmp::Ordering::Less => AdapterMode::Pad,
        std::cmp::Ordering::Equal => AdapterMode::Identity,
    };
    Ok(AdapterPlan {
        profile: profile.name.clone(),
        input: geometry,
        pooled_grid,
        regime,
        tokens,
        dim,
        mode,
    })
}

fn check_input(plan: &AdapterPlan, tokens: &TokenSequence) -> Result<(), AdapterError> {
    if tokens.shape() != (plan.input.tokens, plan.input.dim) {
        return Err(AdapterError::PlanMismatch(format!(
            "plan expects {}x{} tokens, got {}x{}",
            plan.input.tokens, plan.input.dim, tokens.n, tokens.d
        )));
    }
    Ok(())
}

/// Spatial stage only: pooled grid tokens, or the object tokens unchanged.
/// This is what the PCA of a compress plan is fitted on.
pub fn pool_stage(plan: &AdapterPlan, tokens: &TokenSequence) -> Result<TokenSequence, AdapterError> {
    check_input(plan, tokens)?;
    match (plan.input.kind, plan.pooled_grid) {
        (GeometryKind::Grid { h, w }, Some(g)) => {
            let (values, coords) = adaptive_avg_pool(&tokens.values, h, w, tokens.d, g)?;
            Ok(TokenSequence::new(Modality::Visual, g * g, tokens.d, values).with_grid(coords))
        }
        (GeometryKind::Objects { .. }, None) => {
            let mut out = tokens.clone();
            out.grid = None;
            Ok(out)
        }
        _ => Err(AdapterError::PlanMismatch(format!(
            "{:?} geometry cannot be adapted",
            plan.input.kind
        ))),
    }
}

/// Pool, then compress/pad/pass through to `plan.dim`. Rows marked invalid
/// (absent objects) come out as zeros.
pub fn apply_adapter(
    plan: &AdapterPlan,
    pca: Option<&PcaModel>,
    tokens: &TokenSequence,
) -> Result<TokenSequence, AdapterError> {
    match (plan.mode, pca) {
        (AdapterMode::Compress, None) => {
            return Err(AdapterError::PlanMismatch("compress plan without a PCA model".into()))
        }
        (AdapterMode::Compress, Some(m)) if m.d_in != plan.input.dim || m.d_out != plan.dim => {
            return Err(AdapterError::PlanMismatch(format!(
                "PCA maps {} -> {}, plan needs {} -> {}",
                m.d_in, m.d_out, plan.input.dim, plan.dim
            )))
        }
        (AdapterMode::Pad | AdapterMode::Identity, Some(_)) => {
            return Err(AdapterError::PlanMismatch(format!(
                "{:?} plan given a PCA model",
                plan.mode
            )))
        }
        _ => {}
    }
    let pooled = pool_stage(plan, tokens)?;
    let (n, d_in, d) = (pooled.n, pooled.d, plan.dim);
    let mut values = vec![0f32; n * d];
    for i in 0..n {
        if !pooled.validity[i] {
            continue;
        }
        let src = pooled.row(i);
        let dst = &mut values[i * d..(i + 1) * d];
        match pca {
            Some(m) => m.transform_into(src, dst),
            None => dst[..d_in].copy_from_slice(src),
        }
    }
    let mut out = TokenSequence::new(Modality::Visual, n, d, values).with_validity(pooled.validity);
    out.grid = pooled.grid;
    Ok(out)
}
