use thiserror::Error;

use super::{Answer, Primitive, Program, Relation};
use crate::scene::{Attribute, Scene};

/// Intermediate result of a program node. Sets are bitmasks over object indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Set(u64),
    Object(usize),
    Integer(usize),
    Bool(bool),
    Attr(Attribute, u8),
}

impl Value {
    fn kind(&self) -> &'static str {
        match self {
            Value::Set(_) => "set",
            Value::Object(_) => "object",
            Value::Integer(_) => "integer",
            Value::Bool(_) => "bool",
            Value::Attr(..) => "attribute",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("node {node}: unique applied to a set of {size} objects")]
    NotUnique { node: usize, size: usize },
    #[error("node {node}: expected {expected}, got {found}")]
    TypeMismatch {
        node: usize,
        expected: &'static str,
        found: &'static str,
    },
    #[error("node {node}: {reason}")]
    Malformed { node: usize, reason: String },
    #[error("scene has {0} objects, more than the executor supports")]
    SceneTooLarge(usize),
}

impl ExecError {
    /// True for the `unique` cardinality failure used as a generation-time rejection signal.
    pub fn is_uniqueness(&self) -> bool {
        matches!(self, ExecError::NotUnique { .. })
    }
}

pub(crate) fn related(scene: &Scene, anchor: usize, relation: Relation) -> u64 {
    let dir = match relation {
        Relation::Left => scene.directions.left,
        Relation::Right => scene.directions.right,
        Relation::Front => scene.directions.front,
        Relation::Behind => scene.directions.behind,
    };
    let a = scene.objects[anchor].position;
    let mut set = 0u64;
    for (i, o) in scene.objects.iter().enumerate() {
        if i == anchor {
            continue;
        }
        let delta = [o.position[0] - a[0], o.position[1] - a[1], o.position[2] - a[2]];
        let dot = delta[0] * dir[0] + delta[1] * dir[1] + delta[2] * dir[2];
        if dot > 0.0 {
            set |= 1 << i;
        }
    }
    set
}

/// Runs a program against a scene. Every node is evaluated once, in order.
pub fn execute(program: &Program, scene: &Scene) -> Result<Answer, ExecError> {
    if scene.objects.len() > 64 {
        return Err(ExecError::SceneTooLarge(scene.objects.len()));
    }
    if program.output >= program.nodes.len() {
        return Err(ExecError::Malformed {
            node: program.output,
            reason: "output index out of range".into(),
        });
    }
    let all: u64 = if scene.objects.len() == 64 {
        u64::MAX
    } else {
        (1u64 << scene.objects.len()) - 1
    };
    let mut values: Vec<Value> = Vec::with_capacity(program.nodes.len());
    for (node, step) in program.nodes.iter().enumerate() {
        if step.inputs.len() != step.primitive.arity() {
            return Err(ExecError::Malformed {
                node,
                reason: format!(
                    "{} takes {} inputs, got {}",
                    step.primitive.function_name(),
                    step.primitive.arity(),
                    step.inputs.len()
                ),
            });
        }
        if let Some(&bad) = step.inputs.iter().find(|&&i| i >= node) {
            return Err(ExecError::Malformed {
                node,
                reason: format!("input {bad} does not precede its consumer"),
            });
        }
        let arg = |k: usize| values[step.inputs[k]];
        let mismatch = |expected: &'static str, found: Value| ExecError::TypeMismatch {
            node,
            expected,
            found: found.kind(),
        };
        let set = |k: usize| match arg(k) {
            Value::Set(s) => Ok(s),
            other => Err(mismatch("set", other)),
        };
        let object = |k: usize| match arg(k) {
            Value::Object(o) => Ok(o),
            other => Err(mismatch("object", other)),
        };
        let integer = |k: usize| match arg(k) {
            Value::Integer(n) => Ok(n),
            other => Err(mismatch("integer", other)),
        };
        let attr = |k: usize, a: Attribute| match arg(k) {
            Value::Attr(got, v) if got == a => Ok(v),
            other => Err(mismatch("attribute", other)),
        };
        let value = match step.primitive {
            Primitive::Scene => Value::Set(all),
            Primitive::Unique => {
                let s = set(0)?;
                if s.count_ones() != 1 {
                    return Err(ExecError::NotUnique {
                        node,
                        size: s.count_ones() as usize,
                    });
                }
                Value::Object(s.trailing_zeros() as usize)
            }
            Primitive::Relate(r) => Value::Set(related(scene, object(0)?, r)),
            Primitive::Count => Value::Integer(set(0)?.count_ones() as usize),
            Primitive::Exist => Value::Bool(set(0)? != 0),
            Primitive::Filter(a, v) => {
                let s = set(0)?;
                let mut out = 0u64;
                for (i, o) in scene.objects.iter().enumerate() {
                    if s & (1 << i) != 0 && o.attr(a) == v {
                        out |= 1 << i;
                    }
                }
                Value::Set(out)
            }
            Primitive::Query(a) => Value::Attr(a, scene.objects[object(0)?].attr(a)),
            Primitive::Same(a) => {
                let anchor = object(0)?;
                let v = scene.objects[anchor].attr(a);
                let mut out = 0u64;
                for (i, o) in scene.objects.iter().enumerate() {
                    if i != anchor && o.attr(a) == v {
                        out |= 1 << i;
                    }
                }
                Value::Set(out)
            }
            Primitive::EqualInteger => Value::Bool(integer(0)? == integer(1)?),
            Primitive::LessThan => Value::Bool(integer(0)? < integer(1)?),
            Primitive::GreaterThan => Value::Bool(integer(0)? > integer(1)?),
            Primitive::Equal(a) => Value::Bool(attr(0, a)? == attr(1, a)?),
        };
        values.push(value);
    }
    match values[program.output] {
        Value::Bool(b) => Ok(Answer::Bool(b)),
        Value::Integer(n) => Ok(Answer::Count(n.min(u8::MAX as usize) as u8)),
        Value::Attr(a, v) => Ok(Answer::Attribute((a.answer_offset() + v as usize) as u8)),
        other => Err(ExecError::TypeMismatch {
            node: program.output,
            expected: "answer",
            found: other.kind(),
        }),
    }
}
