//! VQFS: a flat little-endian container of equally shaped token matrices.
//!
//! ```text
//! offset size field
//!      0    4 magic "VQFS"
//!      4    2 version (u16, currently 1)
//!      6    1 dtype code (0 = float32)
//!      7    4 record count (u32)
//!     11    4 tokens per record N (u32)
//!     15    4 token dim d (u32)
//!     19    1 geometry tag (0 = grid, 1 = object set, 2 = text)
//!     20      payload: count x N x d float32, row-major
//! ```
//!
//! A JSON sidecar (`<store>.manifest.json`) maps sample ids to record
//! indices and records the encoder name, grid shape and extraction notes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"VQFS";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;
pub const HEADER_LEN: u64 = 20;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("bad magic {0:?}, expected \"VQFS\"")]
    BadMagic([u8; 4]),
    #[error("unsupported store version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("unknown geometry tag {0}")]
    BadGeometryTag(u8),
    #[error("truncated store: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("manifest disagrees with store: {0}")]
    ManifestMismatch(String),
    #[error("record `{id}` has shape {got:?}, store expects {expected:?}")]
    ShapeMismatch {
        id: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("record `{id}` has non-finite value at token {row}, dim {col}")]
    NonFinite { id: String, row: usize, col: usize },
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("sample `{0}` not in store")]
    UnknownSample(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryKind {
    Grid { h: usize, w: usize },
    Objects { n: usize },
    Text,
}

impl GeometryKind {
    pub fn tag(&self) -> u8 {
        match self {
            GeometryKind::Grid { .. } => 0,
            GeometryKind::Objects { .. } => 1,
            GeometryKind::Text => 2,
        }
    }
}

/// Native shape of an encoder's output: `tokens x dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderGeometry {
    pub kind: GeometryKind,
    pub tokens: usize,
    pub dim: usize,
}

impl EncoderGeometry {
    pub fn grid(h: usize, w: usize, dim: usize) -> Self {
        Self {
            kind: GeometryKind::Grid { h, w },
            tokens: h * w,
            dim,
        }
    }

    pub fn objects(n: usize, dim: usize) -> Self {
        Self {
            kind: GeometryKind::Objects { n },
            tokens: n,
            dim,
        }
    }

    pub fn text(tokens: usize, dim: usize) -> Self {
        Self {
            kind: GeometryKind::Text,
            tokens,
            dim,
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let ok = match self.kind {
            GeometryKind::Grid { h, w } => h * w == self.tokens,
            GeometryKind::Objects { n } => n == self.tokens,
            GeometryKind::Text => true,
        };
        if !ok {
            return Err(FeatureError::InvalidGeometry(format!(
                "{:?} with {} tokens",
                self.kind, self.tokens
            )));
        }
        Ok(())
    }

    pub fn record_len(&self) -> usize {
        self.tokens * self.dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u16,
    pub encoder: String,
    pub geometry: EncoderGeometry,
    #[serde(default)]
    pub notes: String,
    pub records: BTreeMap<String, u32>,
}

pub fn manifest_path(store: &Path) -> PathBuf {
    let mut name = store.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn header_bytes(geometry: &EncoderGeometry, count: u32) -> [u8; HEADER_LEN as usize] {
    let mut h = [0u8; HEADER_LEN as usize];
    h[0..4].copy_from_slice(&MAGIC);
    h[4..6].copy_from_slice(&VERSION.to_le_bytes());
    h[6] = DTYPE_F32;
    h[7..11].copy_from_slice(&count.to_le_bytes());
    h[11..15].copy_from_slice(&(geometry.tokens as u32).to_le_bytes());
    h[15..19].copy_from_slice(&(geometry.dim as u32).to_le_bytes());
    h[19] = geometry.kind.tag();
    h
}

/// Writes a store and its manifest. Records keep the order given.
pub fn write_store<'a, I>(
    path: impl AsRef<Path>,
    records: I,
    geometry: EncoderGeometry,
    encoder: &str,
    notes: &str,
) -> Result<(), FeatureError>
where
    I: IntoIterator<Item = (&'a str, &'a [f32])>,
{
    geometry.validate()?;
    let path = path.as_ref();
    let expected = (geometry.tokens, geometry.dim);
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&header_bytes(&geometry, 0))?;
    let mut index = BTreeMap::new();
    let mut count: u32 = 0;
    for (id, values) in records {
        if values.len() != geometry.record_len() {
            let dim = geometry.dim.max(1);
            let got = if values.len() % dim == 0 {
                (values.len() / dim, geometry.dim)
            } else {
                (1, values.len())
            };
            return Err(FeatureError::ShapeMismatch {
                id: id.to_string(),
                expected,
                got,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite {
                id: id.to_string(),
                row: pos / geometry.dim,
                col: pos % geometry.dim,
            });
        }
        if index.insert(id.to_string(), count).is_some() {
            return Err(FeatureError::DuplicateId(id.to_string()));
        }
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&bytes)?;
        count += 1;
    }
    out.seek(SeekFrom::Start(0))?;
    out.write_all(&header_bytes(&geometry, count))?;
    out.flush()?;
    let manifest = Manifest {
        version: VERSION,
        encoder: encoder.to_string(),
        geometry,
        notes: notes.to_string(),
        records: index,
    };
    std::fs::write(manifest_path(path), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

/// Read side of a store: validated on open, records read on demand.
#[derive(Debug)]
pub struct FeatureStore {
    path: PathBuf,
    geometry: EncoderGeometry,
    count: u32,
    manifest: Manifest,
    file: Mutex<File>,
}

pub fn read_store(path: impl AsRef<Path>) -> Result<FeatureStore, FeatureError> {
    FeatureStore::open(path)
}

impl FeatureStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        let path = path.as_ref().to_path_buf();
        let mut file = File::open(&path)?;
        let actual = file.metadata()?.len();
        let mut header = [0u8; HEADER_LEN as usize];
        if actual < HEADER_LEN {
            return Err(FeatureError::Truncated {
                expected: HEADER_LEN,
                actual,
            });
        }
        file.read_exact(&mut header)?;
        let magic: [u8; 4] = header[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(FeatureError::BadMagic(magic));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != VERSION {
            return Err(FeatureError::UnsupportedVersion(version));
        }
        if header[6] != DTYPE_F32 {
            return Err(FeatureError::UnsupportedDtype(header[6]));
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let count = u32_at(7);
        let tokens = u32_at(11) as usize;
        let dim = u32_at(15) as usize;
        let tag = header[19];
        if tag > 2 {
            return Err(FeatureError::BadGeometryTag(tag));
        }
        let expected = HEADER_LEN + count as u64 * tokens as u64 * dim as u64 * 4;
        if actual != expected {
            return Err(FeatureError::Truncated { expected, actual });
        }
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(manifest_path(&path))?)?;
        let geometry = manifest.geometry;
        if geometry.kind.tag() != tag || geometry.tokens != tokens || geometry.dim != dim {
            return Err(FeatureError::ManifestMismatch(format!(
                "header says tag {tag}, {tokens}x{dim}; manifest says {:?}",
                geometry
            )));
        }
        geometry.validate()?;
        if manifest.records.len() != count as usize {
            return Err(FeatureError::ManifestMismatch(format!(
                "{} manifest entries for {count} records",
                manifest.records.len()
            )));
        }
        let mut seen = vec![false; count as usize];
        for (id, &i) in &manifest.records {
            match seen.get_mut(i as usize) {
                Some(slot) if !*slot => *slot = true,
                _ => {
                    return Err(FeatureError::ManifestMismatch(format!(
                        "sample `{id}` maps to invalid or repeated index {i}"
                    )))
                }
            }
        }
        Ok(Self {
            path,
            geometry,
            count,
            manifest,
            file: Mutex::new(file),
        })
    }

    pub fn geometry(&self) -> EncoderGeometry {
        self.geometry
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.count as usize
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, id: &str) -> bool {
        self.manifest.records.contains_key(id)
    }

    /// Reads record `index` into `out`, reusing its allocation.
    pub fn read_index_into(&self, index: usize, out: &mut Vec<f32>) -> Result<(), FeatureError> {
        let len = self.geometry.record_len();
        let offset = HEADER_LEN + (index * len * 4) as u64;
        let mut bytes = vec![0u8; len * 4];
        {
            let mut file = self.file.lock().expect("store file lock poisoned");
            file.seek(SeekFrom::Start(offset))?;
            file.read_exact(&mut bytes)?;
        }
        out.clear();
        out.extend(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
        );
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<Vec<f32>, FeatureError> {
        let index = *self
            .manifest
            .records
            .get(id)
            .ok_or_else(|| FeatureError::UnknownSample(id.to_string()))?;
        let mut out = Vec::new();
        self.read_index_into(index as usize, &mut out)?;
        Ok(out)
    }

    /// Sample ids in record order.
    pub fn ids_in_order(&self) -> Vec<&str> {
        let mut ids = vec![""; self.len()];
        for (id, &i) in &self.manifest.records {
            ids[i as usize] = id.as_str();
        }
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize, g: &EncoderGeometry) -> Vec<(String, Vec<f32>)> {
        (0..n)
            .map(|i| {
                let v = (0..g.record_len()).map(|k| (i * 1000 + k) as f32 * 0.25 - 3.0).collect();
                (format!("s{i}"), v)
            })
            .collect()
    }

    fn write(path: &Path, recs: &[(String, Vec<f32>)], g: EncoderGeometry) -> Result<(), FeatureError> {
        write_store(path, recs.iter().map(|(id, v)| (id.as_str(), v.as_slice())), g, "gt", "")
    }

    #[test]
    fn file_size_matches_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.vqfs");
        let g = EncoderGeometry::objects(10, 7);
        write(&path, &records(3, &g), g).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 20 + 3 * 10 * 7 * 4);
        let store = read_store(&path).unwrap();
        assert_eq!(store.geometry(), g);
        assert_eq!(store.ids_in_order(), ["s0", "s1", "s2"]);
    }

    #[test]
    fn empty_store_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.vqfs");
        let g = EncoderGeometry::grid(7, 7, 4);
        write(&path, &[], g).unwrap();
        let store = read_store(&path).unwrap();
        assert!(store.is_empty());
        assert_eq!(std::fs::metadata(&path).unwrap().len(), HEADER_LEN);
    }

    #[test]
    fn write_then_read_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.vqfs");
        let g = EncoderGeometry::grid(2, 3, 5);
        let mut recs = records(4, &g);
        recs[1].1[0] = -0.0;
        recs[1].1[1] = f32::from_bits(1);
        write(&path, &recs, g).unwrap();
        let store = read_store(&path).unwrap();
        for (id, v) in &recs {
            let got = store.get(id).unwrap();
            assert_eq!(
                got.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
        assert!(matches!(store.get("nope"), Err(FeatureError::UnknownSample(_))));
    }

    #[test]
    fn rejects_bad_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vqfs");
        let g = EncoderGeometry::objects(2, 3);
        let mut recs = records(2, &g);
        recs[1].1[4] = f32::NAN;
        match write(&path, &recs, g) {
            Err(FeatureError::NonFinite { id, row, col }) => {
                assert_eq!((id.as_str(), row, col), ("s1", 1, 1));
            }
            other => panic!("{other:?}"),
        }
        let short = vec![("a".to_string(), vec![0.0; 5])];
        assert!(matches!(
            write(&path, &short, g),
            Err(FeatureError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.vqfs");
        let g = EncoderGeometry::objects(10, 7);
        write(&path, &records(3, &g), g).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad = bytes.clone();
        bad[0..4].copy_from_slice(b"XXXX");
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_store(&path), Err(FeatureError::BadMagic(m)) if &m == b"XXXX"));

        let mut bad = bytes.clone();
        bad[4] = 9;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_store(&path), Err(FeatureError::UnsupportedVersion(9))));

        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        match read_store(&path) {
            Err(FeatureError::Truncated { expected, actual }) => {
                assert_eq!(expected, 20 + 840);
                assert_eq!(actual, 20 + 836);
            }
            other => panic!("{other:?}"),
        }

        std::fs::write(&path, &bytes).unwrap();
        let mpath = manifest_path(&path);
        let mut m: Manifest = serde_json::from_slice(&std::fs::read(&mpath).unwrap()).unwrap();
        m.records.remove("s2");
        std::fs::write(&mpath, serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(read_store(&path), Err(FeatureError::ManifestMismatch(_))));
    }
}
