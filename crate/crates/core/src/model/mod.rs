//! Runtime values, the object store and the compiled form of a program.

pub mod program;
pub mod store;

use std::fmt;

pub use program::{compile, Class, ClassId, Instr, Place, Proc, ProcKind, Program, Rv};
pub use store::{Held, ObjSnap, Object, Store};

/// Object identity. Ids are handed out in creation order and never reused.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjId(pub u32);

impl fmt::Display for ObjId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Ref(ObjId),
    Nil,
}

impl Value {
    pub fn as_int(self) -> i64 {
        match self {
            Value::Int(v) => v,
            other => panic!("expected int, found {other}"),
        }
    }

    pub fn as_bool(self) -> bool {
        match self {
            Value::Bool(b) => b,
            other => panic!("expected bool, found {other}"),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Ref(id) => write!(f, "{id}"),
            Value::Nil => f.write_str("nil"),
        }
    }
}
