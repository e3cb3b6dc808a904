//! The CLEVR-like world: attribute vocabulary, objects, scenes, seeded
//! sampling, ground-truth tokens and the official scenes JSON schema.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of objects in a scene.
pub const K_MAX: usize = 10;

/// Per-object ground-truth token width: 4 attribute ordinals + (x, y, z).
pub const D_MIN: usize = 7;

/// Size of the attribute answer vocabulary (3 + 8 + 2 + 2).
pub const ATTRIBUTE_ANSWERS: usize = 15;

pub const SHAPES: [&str; 3] = ["cube", "sphere", "cylinder"];
pub const COLORS: [&str; 8] = [
    "gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow",
];
pub const SIZES: [&str; 2] = ["small", "large"];
pub const MATERIALS: [&str; 2] = ["rubber", "metal"];

/// Scene-space radius of small and large objects (CLEVR convention).
pub const OBJECT_RADIUS: [f64; 2] = [0.35, 0.7];

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("could not place object {object} after {attempts} attempts; bounds too tight for {requested} objects")]
    PlacementFailed {
        object: usize,
        attempts: usize,
        requested: usize,
    },
    #[error("invalid object count range {lo}..={hi} (K = {k_max})")]
    BadRange { lo: usize, hi: usize, k_max: usize },
    #[error("degenerate scene bounds")]
    DegenerateBounds,
    #[error("unknown {attribute} `{name}`")]
    Vocabulary { attribute: Attribute, name: String },
    #[error("scene {scene} has {count} objects, more than K = {k_max}")]
    TooManyObjects {
        scene: u64,
        count: usize,
        k_max: usize,
    },
    #[error("scene {scene}: {reason}")]
    InvalidObject { scene: u64, reason: String },
    #[error("scenes file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Shape,
    Color,
    Size,
    Material,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Shape,
        Attribute::Color,
        Attribute::Size,
        Attribute::Material,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Shape => "shape",
            Attribute::Color => "color",
            Attribute::Size => "size",
            Attribute::Material => "material",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn cardinality(self) -> usize {
        match self {
            Attribute::Shape => SHAPES.len(),
            Attribute::Color => COLORS.len(),
            Attribute::Size => SIZES.len(),
            Attribute::Material => MATERIALS.len(),
        }
    }

    /// Offset of this attribute's values inside the 15-way attribute answer head.
    pub fn answer_offset(self) -> usize {
        match self {
            Attribute::Shape => 0,
            Attribute::Color => 3,
            Attribute::Size => 11,
            Attribute::Material => 13,
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Names of every attribute value. The ordering is fixed: it defines the
/// ordinal encoding in ground-truth tokens and the attribute head indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeVocabulary {
    pub shapes: Vec<String>,
    pub colors: Vec<String>,
    pub sizes: Vec<String>,
    pub materials: Vec<String>,
}

impl Default for AttributeVocabulary {
    fn default() -> Self {
        let own = |names: &[&str]| names.iter().map(|s| s.to_string()).collect();
        Self {
            shapes: own(&SHAPES),
            colors: own(&COLORS),
            sizes: own(&SIZES),
            materials: own(&MATERIALS),
        }
    }
}

impl AttributeVocabulary {
    pub fn names(&self, attribute: Attribute) -> &[String] {
        match attribute {
            Attribute::Shape => &self.shapes,
            Attribute::Color => &self.colors,
            Attribute::Size => &self.sizes,
            Attribute::Material => &self.materials,
        }
    }

    pub fn name(&self, attribute: Attribute, value: u8) -> &str {
        &self.names(attribute)[value as usize]
    }

    pub fn index_of(&self, attribute: Attribute, name: &str) -> Result<u8, SceneError> {
        self.names(attribute)
            .iter()
            .position(|n| n == name)
            .map(|i| i as u8)
            .ok_or_else(|| SceneError::Vocabulary {
                attribute,
                name: name.to_string(),
            })
    }

    /// Total number of attribute answers (15 for the CLEVR vocabulary).
    pub fn answer_count(&self) -> usize {
        Attribute::ALL.iter().map(|a| self.names(*a).len()).sum()
    }

    /// Name of a global attribute-answer index (0..15).
    pub fn answer_name(&self, index: usize) -> Option<&str> {
        let (attribute, value) = attribute_of_answer(index)?;
        Some(self.name(attribute, value))
    }
}

/// Splits a global attribute-answer index into (attribute, value).
pub fn attribute_of_answer(index: usize) -> Option<(Attribute, u8)> {
    Attribute::ALL
        .into_iter()
        .rev()
        .find(|a| index >= a.answer_offset())
        .filter(|a| index - a.answer_offset() < a.cardinality())
        .map(|a| (a, (index - a.answer_offset()) as u8))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: u8,
    pub color: u8,
    pub size: u8,
    pub material: u8,
    pub position: [f64; 3],
}

impl ObjectSpec {
    pub fn attr(&self, attribute: Attribute) -> u8 {
        match attribute {
            Attribute::Shape => self.shape,
            Attribute::Color => self.color,
            Attribute::Size => self.size,
            Attribute::Material => self.material,
        }
    }

    pub fn set_attr(&mut self, attribute: Attribute, value: u8) {
        match attribute {
            Attribute::Shape => self.shape = value,
            Attribute::Color => self.color = value,
            Attribute::Size => self.size = value,
            Attribute::Material => self.material = value,
        }
    }

    pub fn radius(&self) -> f64 {
        OBJECT_RADIUS[self.size as usize]
    }
}

/// Axis-aligned scene box. `x` and `y` are the ground plane, `z` is height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Default for SceneBounds {
    fn default() -> Self {
        Self {
            x: [-3.0, 3.0],
            y: [-3.0, 3.0],
            z: [0.0, 1.0],
        }
    }
}

impl SceneBounds {
    fn axis(&self, axis: usize) -> [f64; 2] {
        [self.x, self.y, self.z][axis]
    }

    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|a| {
            let [lo, hi] = self.axis(a);
            !(lo.is_finite() && hi.is_finite() && hi > lo)
        })
    }

    /// Maps a coordinate to [-1, 1] along `axis`.
    pub fn normalize(&self, axis: usize, value: f64) -> f64 {
        let [lo, hi] = self.axis(axis);
        2.0 * (value - lo) / (hi - lo) - 1.0
    }

    pub fn denormalize(&self, axis: usize, value: f64) -> f64 {
        let [lo, hi] = self.axis(axis);
        (value + 1.0) * 0.5 * (hi - lo) + lo
    }

    pub fn contains_ground(&self, p: [f64; 3]) -> bool {
        p[0] >= self.x[0] && p[0] <= self.x[1] && p[1] >= self.y[0] && p[1] <= self.y[1]
    }
}

/// Unit direction vectors used by `relate`. Generated scenes use
/// right = +x and behind = +y; official scene files carry their own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Directions {
    pub left: [f64; 3],
    pub right: [f64; 3],
    pub front: [f64; 3],
    pub behind: [f64; 3],
}

impl Default for Directions {
    fn default() -> Self {
        Self {
            left: [-1.0, 0.0, 0.0],
            right: [1.0, 0.0, 0.0],
            front: [0.0, -1.0, 0.0],
            behind: [0.0, 1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: u64,
    pub objects: Vec<ObjectSpec>,
    pub k_max: usize,
    pub bounds: SceneBounds,
    pub directions: Directions,
}

impl Scene {
    pub fn empty(id: u64) -> Self {
        Self {
            id,
            objects: Vec::new(),
            k_max: K_MAX,
            bounds: SceneBounds::default(),
            directions: Directions::default(),
        }
    }

    pub fn with_objects(id: u64, objects: Vec<ObjectSpec>) -> Self {
        Self {
            objects,
            ..Self::empty(id)
        }
    }

    /// Checks the structural invariants that do not depend on a sampler
    /// configuration (count, vocabulary, finiteness, bounds).
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.objects.len() > self.k_max {
            return Err(SceneError::TooManyObjects {
                scene: self.id,
                count: self.objects.len(),
                k_max: self.k_max,
            });
        }
        for (i, o) in self.objects.iter().enumerate() {
            let bad = |reason: String| SceneError::InvalidObject {
                scene: self.id,
                reason: format!("object {i}: {reason}"),
            };
            for attribute in Attribute::ALL {
                if o.attr(attribute) as usize >= attribute.cardinality() {
                    return Err(bad(format!("{attribute} index {} out of range", o.attr(attribute))));
                }
            }
            if o.position.iter().any(|c| !c.is_finite()) {
                return Err(bad("non-finite position".into()));
            }
            if !self.bounds.contains_ground(o.position) {
                return Err(bad(format!("position {:?} outside the scene box", o.position)));
            }
            if o.position[2] < 0.0 {
                return Err(bad("negative height".into()));
            }
        }
        Ok(())
    }

    /// Smallest pairwise ground-plane distance between object centers.
    pub fn min_separation(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                let d = ground_distance(a.position, b.position);
                best = Some(best.map_or(d, |m| m.min(d)));
            }
        }
        best
    }
}

fn ground_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Parameters of the seeded scene sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub min_objects: usize,
    pub max_objects: usize,
    pub k_max: usize,
    pub bounds: SceneBounds,
    pub min_separation: f64,
    pub max_attempts: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            min_objects: 3,
            max_objects: K_MAX,
            k_max: K_MAX,
            bounds: SceneBounds::default(),
            min_separation: 1.0,
            max_attempts: 1000,
        }
    }
}

/// Samples a scene. Identical `(id, seed, config)` always yields the same scene.
pub fn sample_scene(
    id: u64,
    seed: u64,
    config: &SamplerConfig,
    vocab: &AttributeVocabulary,
) -> Result<Scene, SceneError> {
    let (lo, hi) = (config.min_objects, config.max_objects);
    if lo > hi || hi > config.k_max {
        return Err(SceneError::BadRange {
            lo,
            hi,
            k_max: config.k_max,
        });
    }
    if config.bounds.is_degenerate() {
        return Err(SceneError::DegenerateBounds);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(lo..=hi);
    let b = config.bounds;
    let mut objects: Vec<ObjectSpec> = Vec::with_capacity(count);
    for index in 0..count {
        let shape = rng.gen_range(0..vocab.shapes.len()) as u8;
        let color = rng.gen_range(0..vocab.colors.len()) as u8;
        let size = rng.gen_range(0..vocab.sizes.len()) as u8;
        let material = rng.gen_range(0..vocab.materials.len()) as u8;
        let z = OBJECT_RADIUS[size as usize].clamp(b.z[0], b.z[1]);
        let mut placed = None;
        for _ in 0..config.max_attempts {
            let p = [rng.gen_range(b.x[0]..=b.x[1]), rng.gen_range(b.y[0]..=b.y[1]), z];
            if objects
                .iter()
                .all(|o| ground_distance(o.position, p) >= config.min_separation)
            {
                placed = Some(p);
                break;
            }
        }
        let position = placed.ok_or(SceneError::PlacementFailed {
            object: index,
            attempts: config.max_attempts,
            requested: count,
        })?;
        objects.push(ObjectSpec {
            shape,
            color,
            size,
            material,
            position,
        });
    }
    Ok(Scene {
        id,
        objects,
        k_max: config.k_max,
        bounds: b,
        directions: Directions::default(),
    })
}

/// `K x 7` ground-truth matrix plus a validity mask over rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTokens {
    pub matrix: Vec<f32>,
    pub validity: Vec<bool>,
}

impl GroundTruthTokens {
    pub fn rows(&self) -> usize {
        self.validity.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * D_MIN..(i + 1) * D_MIN]
    }

    /// Inverse of [`encode_ground_truth`] on the valid rows.
    pub fn decode(&self, bounds: &SceneBounds) -> Vec<ObjectSpec> {
        self.validity
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .map(|(i, _)| {
                let r = self.row(i);
                let ordinal = |slot: usize, a: Attribute| {
                    (r[slot] as f64 * (a.cardinality() - 1) as f64).round() as u8
                };
                ObjectSpec {
                    shape: ordinal(0, Attribute::Shape),
                    color: ordinal(1, Attribute::Color),
                    size: ordinal(2, Attribute::Size),
                    material: ordinal(3, Attribute::Material),
                    position: [
                        bounds.denormalize(0, r[4] as f64),
                        bounds.denormalize(1, r[5] as f64),
                        bounds.denormalize(2, r[6] as f64),
                    ],
                }
            })
            .collect()
    }
}

/// Row `i` is `[shape/2, color/7, size, material, x_n, y_n, z_n]` for object `i`
/// (insertion order); rows past the object count are zero and masked invalid.
pub fn encode_ground_truth(scene: &Scene) -> GroundTruthTokens {
    let k = scene.k_max.max(scene.objects.len());
    let mut matrix = vec![0.0f32; k * D_MIN];
    let mut validity = vec![false; k];
    for (i, o) in scene.objects.iter().enumerate() {
        let row = &mut matrix[i * D_MIN..(i + 1) * D_MIN];
        for (slot, attribute) in Attribute::ALL.into_iter().enumerate() {
            row[slot] = (o.attr(attribute) as f64 / (attribute.cardinality() - 1) as f64) as f32;
        }
        for axis in 0..3 {
            row[4 + axis] = scene.bounds.normalize(axis, o.position[axis]) as f32;
        }
        validity[i] = true;
    }
    GroundTruthTokens { matrix, validity }
}

// Official CLEVR scenes JSON.

#[derive(Debug, Serialize)]
struct ScenesFileOut<'a> {
    scenes: Vec<SceneRecordOut<'a>>,
}

#[derive(Debug, Serialize)]
struct SceneRecordOut<'a> {
    image_index: u64,
    objects: Vec<ObjectRecordOut<'a>>,
    directions: DirectionsRecord,
}

#[derive(Debug, Serialize)]
struct ObjectRecordOut<'a> {
    shape: &'a str,
    color: &'a str,
    size: &'a str,
    material: &'a str,
    #[serde(rename = "3d_coords")]
    coords: [f64; 3],
}

#[derive(Debug, Deserialize)]
struct ScenesFile {
    scenes: Vec<SceneRecord>,
}

#[derive(Debug, Deserialize)]
struct SceneRecord {
    image_index: u64,
    objects: Vec<ObjectRecord>,
    #[serde(default)]
    directions: Option<DirectionsRecord>,
}

#[derive(Debug, Deserialize)]
struct ObjectRecord {
    shape: String,
    color: String,
    size: String,
    material: String,
    #[serde(rename = "3d_coords")]
    coords: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct DirectionsRecord {
    left: [f64; 3],
    right: [f64; 3],
    front: [f64; 3],
    behind: [f64; 3],
}

/// Parses an official scenes JSON document.
pub fn parse_scenes(
    json: &str,
    vocab: &AttributeVocabulary,
    k_max: usize,
    bounds: SceneBounds,
) -> Result<Vec<Scene>, SceneError> {
    let file: ScenesFile = serde_json::from_str(json)?;
    file.scenes
        .into_iter()
        .map(|record| {
            if record.objects.len() > k_max {
                return Err(SceneError::TooManyObjects {
                    scene: record.image_index,
                    count: record.objects.len(),
                    k_max,
                });
            }
            let objects = record
                .objects
                .iter()
                .map(|o| {
                    Ok(ObjectSpec {
                        shape: vocab.index_of(Attribute::Shape, &o.shape)?,
                        color: vocab.index_of(Attribute::Color, &o.color)?,
                        size: vocab.index_of(Attribute::Size, &o.size)?,
                        material: vocab.index_of(Attribute::Material, &o.material)?,
                        position: o.coords,
                    })
                })
                .collect::<Result<Vec<_>, SceneError>>()?;
            let directions = record.directions.map_or_else(Directions::default, |d| Directions {
                left: d.left,
                right: d.right,
                front: d.front,
                behind: d.behind,
            });
            let scene = Scene {
                id: record.image_index,
                objects,
                k_max,
                bounds,
                directions,
            };
            scene.validate()?;
            Ok(scene)
        })
        .collect()
}

pub fn load_scenes(
    path: impl AsRef<Path>,
    vocab: &AttributeVocabulary,
    k_max: usize,
    bounds: SceneBounds,
) -> Result<Vec<Scene>, SceneError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenes(&text, vocab, k_max, bounds)
}

pub fn scenes_to_json(scenes: &[Scene], vocab: &AttributeVocabulary) -> String {
    let file = ScenesFileOut {
        scenes: scenes
            .iter()
            .map(|s| SceneRecordOut {
                image_index: s.id,
                objects: s
                    .objects
                    .iter()
                    .map(|o| ObjectRecordOut {
                        shape: vocab.name(Attribute::Shape, o.shape),
                        color: vocab.name(Attribute::Color, o.color),
                        size: vocab.name(Attribute::Size, o.size),
                        material: vocab.name(Attribute::Material, o.material),
                        coords: o.position,
                    })
                    .collect(),
                directions: DirectionsRecord {
                    left: s.directions.left,
                    right: s.directions.right,
                    front: s.directions.front,
                    behind: s.directions.behind,
                },
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("scene serialization is infallible")
}

pub fn write_scenes(
    path: impl AsRef<Path>,
    scenes: &[Scene],
    vocab: &AttributeVocabulary,
) -> Result<(), SceneError> {
    std::fs::write(path, scenes_to_json(scenes, vocab))?;
    Ok(())
}
