//! Checks on the frozen boundary: encoder features, text embeddings and the
//! fitted adapter must not change while the reasoning module trains, and the
//! adapter must never have seen a validation scene.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Prepared, PreparedSplit};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenChecksums {
    pub visual: String,
    pub text: String,
    pub adapter: String,
}

fn hash_split(split: &PreparedSplit, visual: &mut Sha256, text: &mut Sha256) {
    for (id, seq) in split.scene_ids.iter().zip(&split.visual) {
        visual.update(id.to_le_bytes());
        visual.update((seq.n as u64).to_le_bytes());
        visual.update((seq.d as u64).to_le_bytes());
        for v in &seq.values {
            visual.update(v.to_le_bytes());
        }
        visual.update(seq.validity.iter().map(|&b| u8::from(b)).collect::<Vec<_>>());
    }
    for (ex, t) in split.examples.iter().zip(&split.texts) {
        text.update(ex.question_id.to_le_bytes());
        for id in &t.ids {
            text.update(id.to_le_bytes());
        }
        for v in &t.embedding {
            text.update(v.to_le_bytes());
        }
    }
}

fn hex(d: impl AsRef<[u8]>) -> String {
    d.as_ref().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn checksums(prepared: &Prepared) -> FrozenChecksums {
    let mut visual = Sha256::new();
    let mut text = Sha256::new();
    hash_split(&prepared.train, &mut visual, &mut text);
    hash_split(&prepared.val, &mut visual, &mut text);
    let mut adapter = Sha256::new();
    adapter.update(serde_json::to_vec(&prepared.plan).expect("plan serializes"));
    if let Some(pca) = &prepared.pca {
        adapter.update(pca.to_bytes());
    }
    FrozenChecksums {
        visual: hex(visual.finalize()),
        text: hex(text.finalize()),
        adapter: hex(adapter.finalize()),
    }
}

/// The adapter's fit set must be exactly the training scenes.
pub fn audit_adapter_fit(prepared: &Prepared) -> Result<(), HarnessError> {
    if prepared.pca.is_none() {
        return Ok(());
    }
    let fit: BTreeSet<u64> = prepared.pca_fit_scenes.iter().copied().collect();
    let train: BTreeSet<u64> = prepared.train.scene_ids.iter().copied().collect();
    if let Some(id) = prepared.val.scene_ids.iter().find(|id| fit.contains(id)) {
        return Err(HarnessError::Data(format!("adapter was fitted on validation scene {id}")));
    }
    if fit != train {
        return Err(HarnessError::Data(format!(
            "adapter fit set ({} scenes) differs from the training split ({} scenes)",
            fit.len(),
            train.len()
        )));
    }
    Ok(())
}
