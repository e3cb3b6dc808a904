//! Functional programs over scenes and the questions built from them.

mod exec;
mod generate;
mod json;
mod template;
mod text;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Attribute, AttributeVocabulary};

pub use exec::{execute, ExecError, Value};
pub use generate::{generate_questions, GenerationConfig, GenerationError, PerFamily};
pub use json::{load_questions, parse_questions, questions_to_json, write_questions, QuestionIoError};
pub use template::{Filter, Template};
pub use text::{embed_text, tokenize, TextTokens, TextVocab, EMBED_SIGMA, OOV_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Left,
    Right,
    Front,
    Behind,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::Left,
        Relation::Right,
        Relation::Front,
        Relation::Behind,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Relation::Left => "left",
            Relation::Right => "right",
            Relation::Front => "front",
            Relation::Behind => "behind",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == name)
    }
}

/// One program step. Arity: `Scene` takes no input; comparisons
/// (`EqualInteger`, `LessThan`, `GreaterThan`, `Equal`) take two; the rest one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Primitive {
    Scene,
    Unique,
    Relate(Relation),
    Count,
    Exist,
    Filter(Attribute, u8),
    Query(Attribute),
    Same(Attribute),
    EqualInteger,
    LessThan,
    GreaterThan,
    Equal(Attribute),
}

impl Primitive {
    pub fn arity(self) -> usize {
        match self {
            Primitive::Scene => 0,
            Primitive::EqualInteger
            | Primitive::LessThan
            | Primitive::GreaterThan
            | Primitive::Equal(_) => 2,
            _ => 1,
        }
    }

    /// Official function name, e.g. `filter_color` or `relate`.
    pub fn function_name(self) -> String {
        match self {
            Primitive::Scene => "scene".into(),
            Primitive::Unique => "unique".into(),
            Primitive::Relate(_) => "relate".into(),
            Primitive::Count => "count".into(),
            Primitive::Exist => "exist".into(),
            Primitive::Filter(a, _) => format!("filter_{a}"),
            Primitive::Query(a) => format!("query_{a}"),
            Primitive::Same(a) => format!("same_{a}"),
            Primitive::EqualInteger => "equal_integer".into(),
            Primitive::LessThan => "less_than".into(),
            Primitive::GreaterThan => "greater_than".into(),
            Primitive::Equal(a) => format!("equal_{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramNode {
    pub primitive: Primitive,
    pub inputs: Vec<usize>,
}

/// A DAG of primitives in topological order; `output` is the terminal node.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Program {
    pub nodes: Vec<ProgramNode>,
    pub output: usize,
}

impl Program {
    /// Appends a node and makes it the output.
    pub fn push(&mut self, primitive: Primitive, inputs: &[usize]) -> usize {
        self.nodes.push(ProgramNode {
            primitive,
            inputs: inputs.to_vec(),
        });
        self.output = self.nodes.len() - 1;
        self.output
    }

    /// Family implied by the terminal primitive, if it is a question terminal.
    pub fn family(&self) -> Option<QuestionFamily> {
        match self.nodes.get(self.output)?.primitive {
            Primitive::Count => Some(QuestionFamily::Count),
            Primitive::Exist => Some(QuestionFamily::Exist),
            Primitive::EqualInteger | Primitive::LessThan | Primitive::GreaterThan => {
                Some(QuestionFamily::CompareNumber)
            }
            Primitive::Query(_) => Some(QuestionFamily::QueryAttribute),
            Primitive::Equal(_) => Some(QuestionFamily::CompareAttribute),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionFamily {
    Count,
    Exist,
    CompareNumber,
    QueryAttribute,
    CompareAttribute,
}

impl QuestionFamily {
    pub const ALL: [QuestionFamily; 5] = [
        QuestionFamily::Count,
        QuestionFamily::Exist,
        QuestionFamily::CompareNumber,
        QuestionFamily::QueryAttribute,
        QuestionFamily::CompareAttribute,
    ];

    pub fn answer_type(self) -> AnswerType {
        match self {
            QuestionFamily::Count => AnswerType::Count,
            QuestionFamily::QueryAttribute => AnswerType::Attribute,
            _ => AnswerType::Binary,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            QuestionFamily::Count => "count",
            QuestionFamily::Exist => "exist",
            QuestionFamily::CompareNumber => "compare_number",
            QuestionFamily::QueryAttribute => "query_attribute",
            QuestionFamily::CompareAttribute => "compare_attribute",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for QuestionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Routing label predicted by the type head. Index order is the head order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerType {
    Binary,
    Count,
    Attribute,
}

impl AnswerType {
    pub const ALL: [AnswerType; 3] = [AnswerType::Binary, AnswerType::Count, AnswerType::Attribute];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Bool(bool),
    Count(u8),
    /// Global attribute-answer index in 0..15.
    Attribute(u8),
}

impl Answer {
    pub fn answer_type(self) -> AnswerType {
        match self {
            Answer::Bool(_) => AnswerType::Binary,
            Answer::Count(_) => AnswerType::Count,
            Answer::Attribute(_) => AnswerType::Attribute,
        }
    }

    pub fn render(self, vocab: &AttributeVocabulary) -> String {
        match self {
            Answer::Bool(true) => "yes".into(),
            Answer::Bool(false) => "no".into(),
            Answer::Count(n) => n.to_string(),
            Answer::Attribute(i) => vocab
                .answer_name(i as usize)
                .unwrap_or("<invalid>")
                .to_string(),
        }
    }

    pub fn parse(text: &str, vocab: &AttributeVocabulary) -> Option<Self> {
        match text {
            "yes" => return Some(Answer::Bool(true)),
            "no" => return Some(Answer::Bool(false)),
            _ => {}
        }
        if let Ok(n) = text.parse::<u8>() {
            return Some(Answer::Count(n));
        }
        (0..vocab.answer_count())
            .find(|i| vocab.answer_name(*i) == Some(text))
            .map(|i| Answer::Attribute(i as u8))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: u64,
    pub scene_id: u64,
    pub family: QuestionFamily,
    pub program: Program,
    pub text: String,
    pub answer: Answer,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("answer {answer:?} does not match family {family}")]
pub struct VariantMismatch {
    pub family: QuestionFamily,
    pub answer: Answer,
}
