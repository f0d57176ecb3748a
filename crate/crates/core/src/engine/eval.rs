//! Expression evaluation and the call-free instructions.

use crate::frontend::ast::{BinOp, UnOp};
use crate::model::{ClassId, Held, Instr, Place, Rv, Value};

use super::{Engine, FaultKind, Hooks};

/// Depth limit for `new` nested inside `init` bodies evaluated inline.
const MAX_INLINE_DEPTH: u32 = 256;

pub(super) enum Flow {
    Next,
    Goto(u32),
    Return(Option<Value>),
    /// A call or cooperative `new`: handled by the segment loop.
    Cooperative,
}

fn arith(op: BinOp, a: i64, b: i64) -> Result<Value, FaultKind> {
    let r = match op {
        BinOp::Add => a.checked_add(b),
        BinOp::Sub => a.checked_sub(b),
        BinOp::Mul => a.checked_mul(b),
        BinOp::Mod => {
            if b == 0 {
                return Err(FaultKind::ModByZero);
            }
            a.checked_rem_euclid(b)
        }
        BinOp::Lt => return Ok(Value::Bool(a < b)),
        BinOp::Le => return Ok(Value::Bool(a <= b)),
        BinOp::Gt => return Ok(Value::Bool(a > b)),
        BinOp::Ge => return Ok(Value::Bool(a >= b)),
        _ => unreachable!("not an integer operator"),
    };
    r.map(Value::Int).ok_or(FaultKind::Overflow)
}

impl<'a> Engine<'a> {
    pub(super) fn eval(
        &self,
        rv: &Rv,
        locals: &[Value],
        held: &Held<'_>,
        owner: u64,
        hooks: &mut dyn Hooks,
        depth: u32,
    ) -> Result<Value, FaultKind> {
        Ok(match rv {
            Rv::Const(v) => *v,
            Rv::Local(i) => locals[*i as usize],
            Rv::Field(i) => held.field(*i),
            Rv::This => Value::Ref(held.id()),
            Rv::Unary(UnOp::Not, x) => {
                Value::Bool(!self.eval(x, locals, held, owner, hooks, depth)?.as_bool())
            }
            Rv::Unary(UnOp::Neg, x) => {
                let v = self.eval(x, locals, held, owner, hooks, depth)?.as_int();
                Value::Int(v.checked_neg().ok_or(FaultKind::Overflow)?)
            }
            Rv::Binary(op, a, b) => {
                let x = self.eval(a, locals, held, owner, hooks, depth)?;
                match op {
                    BinOp::And if !x.as_bool() => return Ok(Value::Bool(false)),
                    BinOp::Or if x.as_bool() => return Ok(Value::Bool(true)),
                    BinOp::Implies if !x.as_bool() => return Ok(Value::Bool(true)),
                    _ => {}
                }
                let y = self.eval(b, locals, held, owner, hooks, depth)?;
                match op {
                    BinOp::And | BinOp::Or | BinOp::Implies => y,
                    BinOp::Eq => Value::Bool(x == y),
                    BinOp::Ne => Value::Bool(x != y),
                    _ => arith(*op, x.as_int(), y.as_int())?,
                }
            }
            Rv::NewInline { class, args } => {
                let mut argv = Vec::with_capacity(args.len());
                for a in args {
                    argv.push(self.eval(a, locals, held, owner, hooks, depth)?);
                }
                Value::Ref(self.new_inline(*class, argv, owner, hooks, depth + 1)?)
            }
        })
    }

    /// Create an object whose init makes no calls and run the init to
    /// completion. Nobody else can reach the object yet, so this is atomic.
    fn new_inline(
        &self,
        class: ClassId,
        mut locals: Vec<Value>,
        owner: u64,
        hooks: &mut dyn Hooks,
        depth: u32,
    ) -> Result<crate::model::ObjId, FaultKind> {
        if depth > MAX_INLINE_DEPTH {
            return Err(FaultKind::InitTooDeep);
        }
        let c = self.program.class(class);
        let mut held = self
            .store
            .alloc_locked(class, c.field_defaults.clone(), owner);
        if let Some(init) = c.init {
            let proc = &c.procs[init as usize];
            locals.extend_from_slice(&proc.local_defaults);
            let mut pc = 0usize;
            let mut wrote = false;
            while let Some(instr) = proc.code.get(pc) {
                match self.exec_plain(
                    instr,
                    &mut locals,
                    &mut held,
                    owner,
                    hooks,
                    depth,
                    &mut wrote,
                )? {
                    Flow::Next => pc += 1,
                    Flow::Goto(t) => pc = t as usize,
                    Flow::Return(_) => break,
                    Flow::Cooperative => unreachable!("inline init with a call"),
                }
            }
        }
        let id = held.id();
        if c.has_actions() {
            hooks.enqueue(id);
        }
        held.unlock();
        Ok(id)
    }

    pub(super) fn store_place(
        place: Place,
        v: Value,
        locals: &mut [Value],
        held: &mut Held<'_>,
        wrote: &mut bool,
    ) {
        match place {
            Place::Local(i) => locals[i as usize] = v,
            Place::Field(i) => {
                held.fields_mut()[i as usize] = v;
                *wrote = true;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(super) fn exec_plain(
        &self,
        instr: &Instr,
        locals: &mut [Value],
        held: &mut Held<'_>,
        owner: u64,
        hooks: &mut dyn Hooks,
        depth: u32,
        wrote: &mut bool,
    ) -> Result<Flow, FaultKind> {
        match instr {
            Instr::Assign { targets, values } => {
                if let ([t], [v]) = (&targets[..], &values[..]) {
                    let v = self.eval(v, locals, held, owner, hooks, depth)?;
                    Self::store_place(*t, v, locals, held, wrote);
                } else {
                    let mut vals = Vec::with_capacity(values.len());
                    for v in values {
                        vals.push(self.eval(v, locals, held, owner, hooks, depth)?);
                    }
                    for (t, v) in targets.iter().zip(vals) {
                        Self::store_place(*t, v, locals, held, wrote);
                    }
                }
                Ok(Flow::Next)
            }
            Instr::Eval(rv) => {
                self.eval(rv, locals, held, owner, hooks, depth)?;
                Ok(Flow::Next)
            }
            Instr::Jump(t) => Ok(Flow::Goto(*t)),
            Instr::JumpIfFalse(c, t) => {
                if self.eval(c, locals, held, owner, hooks, depth)?.as_bool() {
                    Ok(Flow::Next)
                } else {
                    Ok(Flow::Goto(*t))
                }
            }
            Instr::Print(v) => {
                let v = self.eval(v, locals, held, owner, hooks, depth)?;
                hooks.print(v);
                Ok(Flow::Next)
            }
            Instr::Return(v) => {
                let v = match v {
                    Some(v) => Some(self.eval(v, locals, held, owner, hooks, depth)?),
                    None => None,
                };
                Ok(Flow::Return(v))
            }
            Instr::Call { .. } | Instr::New { .. } => Ok(Flow::Cooperative),
        }
    }
}
