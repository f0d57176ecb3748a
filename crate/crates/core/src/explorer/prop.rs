//! Evaluation of property expressions over object fields.

use crate::frontend::ast::{BinOp, Expr, ExprKind, UnOp};
use crate::model::Value;

/// Resolves `field` (unqualified) or `Class.field` (qualified) to a value.
pub trait Fields {
    fn get(&self, class: Option<&str>, field: &str) -> Option<Value>;
}

pub fn eval(e: &Expr, env: &dyn Fields) -> Result<Value, String> {
    Ok(match &e.kind {
        ExprKind::Int(v) => Value::Int(*v),
        ExprKind::Bool(b) => Value::Bool(*b),
        ExprKind::Nil => Value::Nil,
        ExprKind::Name(f) | ExprKind::ThisField(f) => env
            .get(None, f)
            .ok_or_else(|| format!("unknown field `{f}`"))?,
        ExprKind::Qualified(c, f) => env
            .get(Some(c), f)
            .ok_or_else(|| format!("unknown field `{c}.{f}`"))?,
        ExprKind::Unary(UnOp::Not, x) => Value::Bool(!boolean(eval(x, env)?)?),
        ExprKind::Unary(UnOp::Neg, x) => Value::Int(
            integer(eval(x, env)?)?
                .checked_neg()
                .ok_or("integer overflow")?,
        ),
        ExprKind::Binary(op, a, b) => {
            let x = eval(a, env)?;
            match op {
                BinOp::And if !boolean(x)? => return Ok(Value::Bool(false)),
                BinOp::Or if boolean(x)? => return Ok(Value::Bool(true)),
                BinOp::Implies if !boolean(x)? => return Ok(Value::Bool(true)),
                _ => {}
            }
            let y = eval(b, env)?;
            match op {
                BinOp::And | BinOp::Or | BinOp::Implies => Value::Bool(boolean(y)?),
                BinOp::Eq => Value::Bool(x == y),
                BinOp::Ne => Value::Bool(x != y),
                _ => {
                    let (x, y) = (integer(x)?, integer(y)?);
                    let r = match op {
                        BinOp::Add => x.checked_add(y),
                        BinOp::Sub => x.checked_sub(y),
                        BinOp::Mul => x.checked_mul(y),
                        BinOp::Mod if y == 0 => return Err("`mod` by zero".into()),
                        BinOp::Mod => x.checked_rem_euclid(y),
                        BinOp::Lt => return Ok(Value::Bool(x < y)),
                        BinOp::Le => return Ok(Value::Bool(x <= y)),
                        BinOp::Gt => return Ok(Value::Bool(x > y)),
                        BinOp::Ge => return Ok(Value::Bool(x >= y)),
                        _ => unreachable!(),
                    };
                    Value::Int(r.ok_or("integer overflow")?)
                }
            }
        }
        ExprKind::This | ExprKind::Call { .. } | ExprKind::New { .. } => {
            return Err("properties may only read fields".into())
        }
    })
}

fn boolean(v: Value) -> Result<bool, String> {
    match v {
        Value::Bool(b) => Ok(b),
        other => Err(format!("expected bool, found {other}")),
    }
}

fn integer(v: Value) -> Result<i64, String> {
    match v {
        Value::Int(i) => Ok(i),
        other => Err(format!("expected int, found {other}")),
    }
}

pub fn holds(e: &Expr, env: &dyn Fields) -> Result<bool, String> {
    boolean(eval(e, env)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_expr_text;

    struct Env;
    impl Fields for Env {
        fn get(&self, class: Option<&str>, field: &str) -> Option<Value> {
            match (class, field) {
                (None, "a") => Some(Value::Bool(true)),
                (None, "x") => Some(Value::Int(-3)),
                (Some("C"), "y") => Some(Value::Int(4)),
                _ => None,
            }
        }
    }

    fn check(src: &str) -> Result<bool, String> {
        holds(&parse_expr_text(src, true).unwrap(), &Env)
    }

    #[test]
    fn evaluates() {
        assert_eq!(check("a and x mod 2 = 1"), Ok(true));
        assert_eq!(check("not a => x = 0"), Ok(true));
        assert_eq!(check("C.y = -x + 1"), Ok(true));
        assert_eq!(check("x < C.y and C.y <= 4"), Ok(true));
        assert!(check("zz = 1").is_err());
        assert!(check("x mod 0 = 1").is_err());
        assert!(check("x + 1").is_err());
    }
}
