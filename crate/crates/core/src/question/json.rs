//! Official CLEVR questions JSON: `{"questions":[{"image_index", "question",
//! "program":[{"function","value_inputs","inputs"}], "answer"}]}`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{execute, Answer, ExecError, Primitive, Program, ProgramNode, Question, Relation};
use crate::scene::{Attribute, AttributeVocabulary, Scene};

#[derive(Debug, Error)]
pub enum QuestionIoError {
    #[error("question {question}: unknown primitive `{name}`")]
    UnknownPrimitive { question: u64, name: String },
    #[error("question {question}: bad value input {value:?} for `{function}`")]
    BadValue {
        question: u64,
        function: String,
        value: Vec<String>,
    },
    #[error("question {question}: scene {scene} not found")]
    SceneNotFound { question: u64, scene: u64 },
    #[error("question {question}: program does not end in a question terminal")]
    NoFamily { question: u64 },
    #[error("question {question}: stored answer `{stored}` but program yields `{executed}`")]
    AnswerMismatch {
        question: u64,
        stored: String,
        executed: String,
    },
    #[error("question {question}: {source}")]
    Exec {
        question: u64,
        #[source]
        source: ExecError,
    },
    #[error("questions file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct QuestionsFile {
    questions: Vec<QuestionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct QuestionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    question_index: Option<u64>,
    image_index: u64,
    question: String,
    program: Vec<NodeRecord>,
    answer: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    #[serde(alias = "type")]
    function: String,
    #[serde(default)]
    value_inputs: Vec<String>,
    #[serde(default)]
    inputs: Vec<usize>,
}

fn parse_node(
    record: &NodeRecord,
    question: u64,
    vocab: &AttributeVocabulary,
) -> Result<Primitive, QuestionIoError> {
    let f = record.function.as_str();
    let bad_value = || QuestionIoError::BadValue {
        question,
        function: record.function.clone(),
        value: record.value_inputs.clone(),
    };
    let simple = match f {
        "scene" => Some(Primitive::Scene),
        "unique" => Some(Primitive::Unique),
        "count" => Some(Primitive::Count),
        "exist" => Some(Primitive::Exist),
        "equal_integer" => Some(Primitive::EqualInteger),
        "less_than" => Some(Primitive::LessThan),
        "greater_than" => Some(Primitive::GreaterThan),
        _ => None,
    };
    if let Some(p) = simple {
        return Ok(p);
    }
    if f == "relate" {
        let name = record.value_inputs.first().ok_or_else(bad_value)?;
        return Relation::from_name(name)
            .map(Primitive::Relate)
            .ok_or_else(bad_value);
    }
    let unknown = || QuestionIoError::UnknownPrimitive {
        question,
        name: record.function.clone(),
    };
    let (kind, attr) = f.split_once('_').ok_or_else(unknown)?;
    let attribute = Attribute::from_name(attr).ok_or_else(unknown)?;
    match kind {
        "filter" => {
            let name = record.value_inputs.first().ok_or_else(bad_value)?;
            let v = vocab.index_of(attribute, name).map_err(|_| bad_value())?;
            Ok(Primitive::Filter(attribute, v))
        }
        "query" => Ok(Primitive::Query(attribute)),
        "same" => Ok(Primitive::Same(attribute)),
        "equal" => Ok(Primitive::Equal(attribute)),
        _ => Err(unknown()),
    }
}

/// Parses questions and re-executes every program against its scene.
pub fn parse_questions(
    json: &str,
    scenes: &HashMap<u64, &Scene>,
    vocab: &AttributeVocabulary,
) -> Result<Vec<Question>, QuestionIoError> {
    let file: QuestionsFile = serde_json::from_str(json)?;
    file.questions
        .into_iter()
        .enumerate()
        .map(|(position, record)| {
            let id = record.question_index.unwrap_or(position as u64);
            let mut program = Program::default();
            for node in &record.program {
                program.nodes.push(ProgramNode {
                    primitive: parse_node(node, id, vocab)?,
                    inputs: node.inputs.clone(),
                });
            }
            program.output = program.nodes.len().saturating_sub(1);
            let scene = scenes
                .get(&record.image_index)
                .ok_or(QuestionIoError::SceneNotFound {
                    question: id,
                    scene: record.image_index,
                })?;
            let family = program.family().ok_or(QuestionIoError::NoFamily { question: id })?;
            let executed = execute(&program, scene).map_err(|source| QuestionIoError::Exec {
                question: id,
                source,
            })?;
            if Answer::parse(&record.answer, vocab) != Some(executed) {
                return Err(QuestionIoError::AnswerMismatch {
                    question: id,
                    stored: record.answer,
                    executed: executed.render(vocab),
                });
            }
            Ok(Question {
                id,
                scene_id: record.image_index,
                family,
                program,
                text: record.question,
                answer: executed,
            })
        })
        .collect()
}

pub fn load_questions(
    path: impl AsRef<Path>,
    scenes: &[Scene],
    vocab: &AttributeVocabulary,
) -> Result<Vec<Question>, QuestionIoError> {
    let index: HashMap<u64, &Scene> = scenes.iter().map(|s| (s.id, s)).collect();
    parse_questions(&std::fs::read_to_string(path)?, &index, vocab)
}

fn value_inputs(p: Primitive, vocab: &AttributeVocabulary) -> Vec<String> {
    match p {
        Primitive::Relate(r) => vec![r.name().to_string()],
        Primitive::Filter(a, v) => vec![vocab.name(a, v).to_string()],
        _ => Vec::new(),
    }
}

pub fn questions_to_json(questions: &[Question], vocab: &AttributeVocabulary) -> String {
    let file = QuestionsFile {
        questions: questions
            .iter()
            .map(|q| QuestionRecord {
                question_index: Some(q.id),
                image_index: q.scene_id,
                question: q.text.clone(),
                program: q
                    .program
                    .nodes
                    .iter()
                    .map(|n| NodeRecord {
                        function: n.primitive.function_name(),
                        value_inputs: value_inputs(n.primitive, vocab),
                        inputs: n.inputs.clone(),
                    })
                    .collect(),
                answer: q.answer.render(vocab),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("question serialization is infallible")
}

pub fn write_questions(
    path: impl AsRef<Path>,
    questions: &[Question],
    vocab: &AttributeVocabulary,
) -> Result<(), QuestionIoError> {
    std::fs::write(path, questions_to_json(questions, vocab))?;
    Ok(())
}
