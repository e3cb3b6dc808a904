use serde::{Deserialize, Serialize};

use super::{Primitive, Program, QuestionFamily, Relation};
use crate::scene::{Attribute, AttributeVocabulary, ObjectSpec};

/// A conjunction of attribute constraints; `None` leaves an attribute free.
/// Indexed in [`Attribute::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Filter(pub [Option<u8>; 4]);

impl Filter {
    pub fn get(&self, a: Attribute) -> Option<u8> {
        self.0[a as usize]
    }

    pub fn with(mut self, a: Attribute, v: u8) -> Self {
        self.0[a as usize] = Some(v);
        self
    }

    pub fn matches(&self, o: &ObjectSpec) -> bool {
        Attribute::ALL
            .into_iter()
            .all(|a| self.get(a).is_none_or(|v| o.attr(a) == v))
    }

    /// Appends `filter_*` nodes onto `input` and returns the last node.
    fn compile(&self, program: &mut Program, mut input: usize) -> usize {
        // CLEVR order: size, color, material, shape
        for a in [Attribute::Size, Attribute::Color, Attribute::Material, Attribute::Shape] {
            if let Some(v) = self.get(a) {
                input = program.push(Primitive::Filter(a, v), &[input]);
            }
        }
        input
    }

    /// Noun phrase such as "small red cube" / "small red cubes" / "things".
    pub fn phrase(&self, vocab: &AttributeVocabulary, plural: bool) -> String {
        let mut words: Vec<&str> = Vec::new();
        for a in [Attribute::Size, Attribute::Color, Attribute::Material] {
            if let Some(v) = self.get(a) {
                words.push(vocab.name(a, v));
            }
        }
        let noun = match self.get(Attribute::Shape) {
            Some(v) => vocab.name(Attribute::Shape, v).to_string(),
            None => "thing".to_string(),
        };
        let noun = if plural { format!("{noun}s") } else { noun };
        let mut out = words.join(" ");
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&noun);
        out
    }
}

/// The question templates, one variant per template. Field names follow the
/// rendered text: `target` is what is counted/queried, `anchor` is the
/// uniquely referenced object a relation or comparison starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Template {
    /// How many {target} are there?
    Count { target: Filter },
    /// How many {target} are {relation} the {anchor}?
    CountRelate {
        target: Filter,
        relation: Relation,
        anchor: Filter,
    },
    /// How many other {target} have the same {attribute} as the {anchor}?
    CountSame {
        target: Filter,
        attribute: Attribute,
        anchor: Filter,
    },
    /// Are there any {target}?
    Exist { target: Filter },
    /// Are there any {target} {relation} the {anchor}?
    ExistRelate {
        target: Filter,
        relation: Relation,
        anchor: Filter,
    },
    /// Are there more {left} than {right}?
    MoreThan { left: Filter, right: Filter },
    /// Are there fewer {left} than {right}?
    FewerThan { left: Filter, right: Filter },
    /// Are there an equal number of {left} and {right}?
    EqualCount { left: Filter, right: Filter },
    /// What is the {attribute} of the {target}?
    Query { attribute: Attribute, target: Filter },
    /// What is the {attribute} of the {target} that is {relation} the {anchor}?
    QueryRelate {
        attribute: Attribute,
        target: Filter,
        relation: Relation,
        anchor: Filter,
    },
    /// Does the {left} have the same {attribute} as the {right}?
    SameAttribute {
        attribute: Attribute,
        left: Filter,
        right: Filter,
    },
}

fn relation_phrase(r: Relation) -> &'static str {
    match r {
        Relation::Left => "left of",
        Relation::Right => "right of",
        Relation::Front => "in front of",
        Relation::Behind => "behind",
    }
}

impl Template {
    pub fn family(&self) -> QuestionFamily {
        match self {
            Template::Count { .. } | Template::CountRelate { .. } | Template::CountSame { .. } => {
                QuestionFamily::Count
            }
            Template::Exist { .. } | Template::ExistRelate { .. } => QuestionFamily::Exist,
            Template::MoreThan { .. } | Template::FewerThan { .. } | Template::EqualCount { .. } => {
                QuestionFamily::CompareNumber
            }
            Template::Query { .. } | Template::QueryRelate { .. } => QuestionFamily::QueryAttribute,
            Template::SameAttribute { .. } => QuestionFamily::CompareAttribute,
        }
    }

    pub fn compile(&self) -> Program {
        let mut p = Program::default();
        let unique = |p: &mut Program, f: &Filter| {
            let s = p.push(Primitive::Scene, &[]);
            let f = f.compile(p, s);
            p.push(Primitive::Unique, &[f])
        };
        let filtered_scene = |p: &mut Program, f: &Filter| {
            let s = p.push(Primitive::Scene, &[]);
            f.compile(p, s)
        };
        match *self {
            Template::Count { target } => {
                let f = filtered_scene(&mut p, &target);
                p.push(Primitive::Count, &[f]);
            }
            Template::CountRelate {
                target,
                relation,
                anchor,
            } => {
                let u = unique(&mut p, &anchor);
                let r = p.push(Primitive::Relate(relation), &[u]);
                let f = target.compile(&mut p, r);
                p.push(Primitive::Count, &[f]);
            }
            Template::CountSame {
                target,
                attribute,
                anchor,
            } => {
                let u = unique(&mut p, &anchor);
                let s = p.push(Primitive::Same(attribute), &[u]);
                let f = target.compile(&mut p, s);
                p.push(Primitive::Count, &[f]);
            }
            Template::Exist { target } => {
                let f = filtered_scene(&mut p, &target);
                p.push(Primitive::Exist, &[f]);
            }
            Template::ExistRelate {
                target,
                relation,
                anchor,
            } => {
                let u = unique(&mut p, &anchor);
                let r = p.push(Primitive::Relate(relation), &[u]);
                let f = target.compile(&mut p, r);
                p.push(Primitive::Exist, &[f]);
            }
            Template::MoreThan { left, right }
            | Template::FewerThan { left, right }
            | Template::EqualCount { left, right } => {
                let a = filtered_scene(&mut p, &left);
                let a = p.push(Primitive::Count, &[a]);
                let b = filtered_scene(&mut p, &right);
                let b = p.push(Primitive::Count, &[b]);
                let op = match self {
                    Template::MoreThan { .. } => Primitive::GreaterThan,
                    Template::FewerThan { .. } => Primitive::LessThan,
                    _ => Primitive::EqualInteger,
                };
                p.push(op, &[a, b]);
            }
            Template::Query { attribute, target } => {
                let u = unique(&mut p, &target);
                p.push(Primitive::Query(attribute), &[u]);
            }
            Template::QueryRelate {
                attribute,
                target,
                relation,
                anchor,
            } => {
                let u = unique(&mut p, &anchor);
                let r = p.push(Primitive::Relate(relation), &[u]);
                let f = target.compile(&mut p, r);
                let t = p.push(Primitive::Unique, &[f]);
                p.push(Primitive::Query(attribute), &[t]);
            }
            Template::SameAttribute {
                attribute,
                left,
                right,
            } => {
                let a = unique(&mut p, &left);
                let a = p.push(Primitive::Query(attribute), &[a]);
                let b = unique(&mut p, &right);
                let b = p.push(Primitive::Query(attribute), &[b]);
                p.push(Primitive::Equal(attribute), &[a, b]);
            }
        }
        p
    }

    pub fn render(&self, vocab: &AttributeVocabulary) -> String {
        let one = |f: &Filter| f.phrase(vocab, false);
        let many = |f: &Filter| f.phrase(vocab, true);
        match *self {
            Template::Count { target } => format!("How many {} are there?", many(&target)),
            Template::CountRelate {
                target,
                relation,
                anchor,
            } => format!(
                "How many {} are {} the {}?",
                many(&target),
                relation_phrase(relation),
                one(&anchor)
            ),
            Template::CountSame {
                target,
                attribute,
                anchor,
            } => format!(
                "How many other {} have the same {} as the {}?",
                many(&target),
                attribute,
                one(&anchor)
            ),
            Template::Exist { target } => format!("Are there any {}?", many(&target)),
            Template::ExistRelate {
                target,
                relation,
                anchor,
            } => format!(
                "Are there any {} {} the {}?",
                many(&target),
                relation_phrase(relation),
                one(&anchor)
            ),
            Template::MoreThan { left, right } => {
                format!("Are there more {} than {}?", many(&left), many(&right))
            }
            Template::FewerThan { left, right } => {
                format!("Are there fewer {} than {}?", many(&left), many(&right))
            }
            Template::EqualCount { left, right } => format!(
                "Are there an equal number of {} and {}?",
                many(&left),
                many(&right)
            ),
            Template::Query { attribute, target } => {
                format!("What is the {} of the {}?", attribute, one(&target))
            }
            Template::QueryRelate {
                attribute,
                target,
                relation,
                anchor,
            } => format!(
                "What is the {} of the {} that is {} the {}?",
                attribute,
                one(&target),
                relation_phrase(relation),
                one(&anchor)
            ),
            Template::SameAttribute {
                attribute,
                left,
                right,
            } => format!(
                "Does the {} have the same {} as the {}?",
                one(&left),
                attribute,
                one(&right)
            ),
        }
    }

    /// Every word any template can emit, in a fixed order.
    pub fn lexicon(vocab: &AttributeVocabulary) -> Vec<String> {
        let mut words: Vec<String> = [
            "how", "many", "are", "there", "the", "any", "more", "fewer", "than", "an", "equal",
            "number", "of", "and", "what", "is", "that", "does", "have", "same", "as", "other",
            "left", "right", "in", "front", "behind", "thing", "things", "?",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for a in Attribute::ALL {
            words.push(a.name().to_string());
            for name in vocab.names(a) {
                words.push(name.clone());
                if a == Attribute::Shape {
                    words.push(format!("{name}s"));
                }
            }
        }
        words
    }
}
