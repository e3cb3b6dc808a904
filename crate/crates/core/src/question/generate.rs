//! Template-based question generation with rejection sampling.
//!
//! A candidate is kept only if its program executes, it is not a duplicate
//! within the scene, binary answers hit a coin-flipped target (answer
//! balance), and its answer is not constant over the single-edit scene
//! neighborhood (remove one object or change one attribute of one object).

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::exec::related;
use super::{execute, Answer, Filter, Program, Question, QuestionFamily, Relation, Template};
use crate::scene::{Attribute, AttributeVocabulary, Scene};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerationError {
    #[error("scene {scene}: no valid {family} question after {attempts} attempts")]
    Exhausted {
        scene: u64,
        family: QuestionFamily,
        attempts: usize,
    },
}

/// Number of questions requested per family.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerFamily(pub BTreeMap<QuestionFamily, usize>);

impl PerFamily {
    pub fn uniform(n: usize) -> Self {
        Self(QuestionFamily::ALL.into_iter().map(|f| (f, n)).collect())
    }

    pub fn only(family: QuestionFamily, n: usize) -> Self {
        Self([(family, n)].into_iter().collect())
    }

    pub fn get(&self, family: QuestionFamily) -> usize {
        self.0.get(&family).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub max_attempts: usize,
    pub degeneracy_filter: bool,
    pub balance_binary: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_attempts: 500,
            degeneracy_filter: true,
            balance_binary: true,
        }
    }
}

fn members(set: u64) -> Vec<usize> {
    (0..64).filter(|i| set & (1 << i) != 0).collect()
}

fn matching(scene: &Scene, candidates: u64, filter: &Filter) -> u64 {
    let mut out = 0;
    for i in members(candidates) {
        if filter.matches(&scene.objects[i]) {
            out |= 1 << i;
        }
    }
    out
}

fn all_objects(scene: &Scene) -> u64 {
    (1u64 << scene.objects.len()) - 1
}

struct Sampler<'a> {
    scene: &'a Scene,
    rng: ChaCha8Rng,
}

impl Sampler<'_> {
    fn attribute(&mut self) -> Attribute {
        *Attribute::ALL.choose(&mut self.rng).unwrap()
    }

    fn relation(&mut self) -> Relation {
        *Relation::ALL.choose(&mut self.rng).unwrap()
    }

    fn pick(&mut self, set: u64) -> Option<usize> {
        members(set).choose(&mut self.rng).copied()
    }

    /// Filter that singles out `object` among `candidates`, adding attributes
    /// in random order (never `excluded`) until it is unique.
    fn unique_filter(&mut self, candidates: u64, object: usize, excluded: Option<Attribute>) -> Option<Filter> {
        let mut order: Vec<Attribute> = Attribute::ALL
            .into_iter()
            .filter(|a| Some(*a) != excluded)
            .collect();
        order.shuffle(&mut self.rng);
        let o = self.scene.objects[object];
        let mut f = Filter::default();
        if matching(self.scene, candidates, &f).count_ones() == 1 && self.rng.gen_bool(0.3) {
            return Some(f);
        }
        for a in order {
            f = f.with(a, o.attr(a));
            if matching(self.scene, candidates, &f).count_ones() == 1 {
                return Some(f);
            }
        }
        None
    }

    /// One or two attributes, either copied from an object in `candidates` or random.
    fn target_filter(&mut self, candidates: u64, excluded: Option<Attribute>) -> Filter {
        let k = match self.rng.gen_range(0..10) {
            0 => 0,
            1..=5 => 1,
            _ => 2,
        };
        let mut attrs: Vec<Attribute> = Attribute::ALL
            .into_iter()
            .filter(|a| Some(*a) != excluded)
            .collect();
        attrs.shuffle(&mut self.rng);
        let source = if self.rng.gen_bool(0.6) { self.pick(candidates) } else { None };
        let mut f = Filter::default();
        for a in attrs.into_iter().take(k) {
            let v = match source {
                Some(i) => self.scene.objects[i].attr(a),
                None => self.rng.gen_range(0..a.cardinality()) as u8,
            };
            f = f.with(a, v);
        }
        f
    }

    fn template(&mut self, family: QuestionFamily) -> Option<Template> {
        let scene = self.scene;
        let all = all_objects(scene);
        let t = match family {
            QuestionFamily::Count => match self.rng.gen_range(0..3) {
                0 => Template::Count {
                    target: self.target_filter(all, None),
                },
                1 => {
                    let a = self.pick(all)?;
                    let anchor = self.unique_filter(all, a, None)?;
                    let relation = self.relation();
                    let pool = related(scene, a, relation);
                    Template::CountRelate {
                        target: self.target_filter(pool, None),
                        relation,
                        anchor,
                    }
                }
                _ => {
                    let attribute = self.attribute();
                    let a = self.pick(all)?;
                    let anchor = self.unique_filter(all, a, Some(attribute))?;
                    Template::CountSame {
                        target: self.target_filter(all & !(1 << a), Some(attribute)),
                        attribute,
                        anchor,
                    }
                }
            },
            QuestionFamily::Exist => {
                if self.rng.gen_bool(0.5) {
                    Template::Exist {
                        target: self.target_filter(all, None),
                    }
                } else {
                    let a = self.pick(all)?;
                    let anchor = self.unique_filter(all, a, None)?;
                    let relation = self.relation();
                    let pool = related(scene, a, relation);
                    Template::ExistRelate {
                        target: self.target_filter(pool, None),
                        relation,
                        anchor,
                    }
                }
            }
            QuestionFamily::CompareNumber => {
                let left = self.target_filter(all, None);
                let right = self.target_filter(all, None);
                if left == right {
                    return None;
                }
                match self.rng.gen_range(0..3) {
                    0 => Template::MoreThan { left, right },
                    1 => Template::FewerThan { left, right },
                    _ => Template::EqualCount { left, right },
                }
            }
            QuestionFamily::QueryAttribute => {
                let attribute = self.attribute();
                if self.rng.gen_bool(0.5) {
                    let t = self.pick(all)?;
                    Template::Query {
                        attribute,
                        target: self.unique_filter(all, t, Some(attribute))?,
                    }
                } else {
                    let a = self.pick(all)?;
                    let anchor = self.unique_filter(all, a, None)?;
                    let relation = self.relation();
                    let pool = related(scene, a, relation);
                    let t = self.pick(pool)?;
                    Template::QueryRelate {
                        attribute,
                        target: self.unique_filter(pool, t, Some(attribute))?,
                        relation,
                        anchor,
                    }
                }
            }
            QuestionFamily::CompareAttribute => {
                let attribute = self.attribute();
                let l = self.pick(all)?;
                let r = self.pick(all & !(1 << l))?;
                Template::SameAttribute {
                    attribute,
                    left: self.unique_filter(all, l, Some(attribute))?,
                    right: self.unique_filter(all, r, Some(attribute))?,
                }
            }
        };
        Some(t)
    }
}

/// Single-edit neighborhood of a scene: every object removed in turn, and
/// every attribute of every object changed to every other value.
fn neighbors(scene: &Scene) -> impl Iterator<Item = Scene> + '_ {
    let removals = (0..scene.objects.len()).map(move |i| {
        let mut s = scene.clone();
        s.objects.remove(i);
        s
    });
    let changes = (0..scene.objects.len()).flat_map(move |i| {
        Attribute::ALL.into_iter().flat_map(move |a| {
            (0..a.cardinality() as u8)
                .filter(move |v| *v != scene.objects[i].attr(a))
                .map(move |v| {
                    let mut s = scene.clone();
                    s.objects[i].set_attr(a, v);
                    s
                })
        })
    });
    removals.chain(changes)
}

/// True when no single scene edit changes the answer.
pub(crate) fn is_degenerate(program: &Program, scene: &Scene, answer: Answer) -> bool {
    !neighbors(scene).any(|s| matches!(execute(program, &s), Ok(a) if a != answer))
}

/// Generates questions for one scene. Deterministic in `(scene, seed, per_family, config)`.
/// Question ids are local to the scene (0, 1, ...); callers renumber globally.
pub fn generate_questions(
    scene: &Scene,
    seed: u64,
    per_family: &PerFamily,
    config: &GenerationConfig,
    vocab: &AttributeVocabulary,
) -> Result<Vec<Question>, GenerationError> {
    let mut sampler = Sampler {
        scene,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut out = Vec::with_capacity(per_family.total());
    let mut seen: HashSet<Template> = HashSet::new();
    for family in QuestionFamily::ALL {
        for _ in 0..per_family.get(family) {
            let want_true = sampler.rng.gen_bool(0.5);
            let mut accepted = None;
            for _ in 0..config.max_attempts {
                let Some(template) = sampler.template(family) else {
                    continue;
                };
                if seen.contains(&template) {
                    continue;
                }
                let program = template.compile();
                let Ok(answer) = execute(&program, scene) else {
                    continue;
                };
                if config.balance_binary {
                    if let Answer::Bool(b) = answer {
                        if b != want_true {
                            continue;
                        }
                    }
                }
                if config.degeneracy_filter && is_degenerate(&program, scene, answer) {
                    continue;
                }
                accepted = Some((template, program, answer));
                break;
            }
            let (template, program, answer) = accepted.ok_or(GenerationError::Exhausted {
                scene: scene.id,
                family,
                attempts: config.max_attempts,
            })?;
            seen.insert(template);
            out.push(Question {
                id: out.len() as u64,
                scene_id: scene.id,
                family,
                text: template.render(vocab),
                program,
                answer,
            });
        }
    }
    Ok(out)
}
