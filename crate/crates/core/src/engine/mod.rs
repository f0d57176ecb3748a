//! Atomic-segment execution of activations.
//!
//! An [`Activation`] is a stack of frames keyed by its originator. Each call
//! to [`Engine::step`] runs exactly one atomic segment: it acquires the top
//! frame's object (checking the guard on entry), runs until the next call,
//! return or the end of the body, and releases the lock again. Between two
//! steps an activation therefore holds no locks.

mod eval;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::model::{ClassId, Held, Instr, ObjId, Place, ProcKind, Program, Store, Value};
use eval::Flow;

/// Number of zero-locks-at-yield checks performed (debug builds only).
pub static YIELD_CHECKS: AtomicU64 = AtomicU64::new(0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    /// The target's lock was taken.
    Lock,
    /// The target's guard was false.
    Guard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameState {
    /// At the guarded entry of the procedure; the lock is not held.
    Enter,
    /// Back from a call and waiting to relock `this`; carries the result.
    Reacquire(Option<Value>),
    /// Inside the body with the lock held. Between steps this only occurs
    /// with [`Granularity::Instruction`].
    Running,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    pub obj: ObjId,
    pub class: ClassId,
    pub proc: u32,
    pub pc: u32,
    /// First slot of this frame in the activation's locals.
    pub base: u32,
    pub state: FrameState,
    /// Where the result of the call this frame is waiting on goes.
    pub dest: Option<Place>,
    /// Self-call running on the caller's lock.
    pub inline: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActKind {
    Init,
    Action,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Activation {
    /// `2 * originator` for an init, `2 * originator + 1` for an action.
    pub id: u64,
    pub originator: ObjId,
    pub kind: ActKind,
    pub frames: Vec<Frame>,
    pub locals: Vec<Value>,
    /// Locks currently held.
    held: u32,
}

impl Activation {
    fn new(obj: ObjId, class: ClassId, proc: u32, kind: ActKind, locals: Vec<Value>) -> Self {
        Activation {
            id: obj.0 as u64 * 2 + (kind == ActKind::Action) as u64,
            originator: obj,
            kind,
            frames: vec![Frame {
                obj,
                class,
                proc,
                pc: 0,
                base: 0,
                state: FrameState::Enter,
                dest: None,
                inline: false,
            }],
            locals,
            held: 0,
        }
    }

    /// Activation running `init(args)` of an already allocated object.
    pub fn init(program: &Program, obj: ObjId, class: ClassId, mut args: Vec<Value>) -> Self {
        let c = program.class(class);
        let proc = c.init.expect("class has an init");
        args.extend_from_slice(&c.procs[proc as usize].local_defaults);
        Activation::new(obj, class, proc, ActKind::Init, args)
    }

    /// Activation for action `proc` of `obj`, at its guarded entry.
    pub fn action(program: &Program, obj: ObjId, class: ClassId, proc: u32) -> Self {
        let locals = program.proc(class, proc).local_defaults.clone();
        Activation::new(obj, class, proc, ActKind::Action, locals)
    }

    pub fn owner(&self) -> u64 {
        self.id + 1
    }

    pub fn is_finished(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn locks_held(&self) -> u32 {
        self.held
    }

    /// Object whose lock or guard the next step must pass.
    pub fn target(&self) -> Option<ObjId> {
        self.frames.last().map(|f| f.obj)
    }

    pub fn backtrace(&self, program: &Program) -> Vec<String> {
        self.frames
            .iter()
            .rev()
            .map(|f| {
                let c = program.class(f.class);
                format!(
                    "  at {}.{} (instruction {}) on {}",
                    c.name, c.procs[f.proc as usize].name, f.pc, f.obj
                )
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Continue,
    Yield { target: ObjId, kind: BlockKind },
    Finished,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FaultKind {
    #[error("integer overflow")]
    Overflow,
    #[error("`mod` by zero")]
    ModByZero,
    #[error("call of `{0}` on nil")]
    NilCall(String),
    #[error("self-call of `{0}` with a false guard can never proceed")]
    SelfCallBlocked(String),
    #[error("`new` nested too deeply inside init bodies")]
    InitTooDeep,
    #[error("cannot start a thread for object #{0}: {1}")]
    ThreadSpawn(u32, String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fault {
    pub kind: FaultKind,
    pub backtrace: Vec<String>,
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "runtime fault: {}", self.kind)?;
        for line in &self.backtrace {
            write!(f, "\n{line}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Fault {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Guard passed and the lock was taken at a procedure entry.
    Enter,
    /// Lock retaken after a call returned.
    Resume,
    Call(ObjId),
    Return,
    Yield(BlockKind),
    Finish,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub act: u64,
    pub obj: ObjId,
    pub class: ClassId,
    pub proc: u32,
    pub kind: EventKind,
}

/// Callbacks from the engine into whoever drives it.
pub trait Hooks {
    /// A method or init of an object with actions ended; called with the
    /// object's lock still held.
    fn enqueue(&mut self, _obj: ObjId) {}
    /// `obj` was unlocked at the end of a segment.
    fn released(&mut self, _obj: ObjId, _wrote: bool) {}
    fn print(&mut self, _v: Value) {}
    fn trace(&mut self, _ev: TraceEvent) {}
}

/// Hooks that ignore everything.
pub struct NoHooks;
impl Hooks for NoHooks {}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Granularity {
    /// One step per atomic segment.
    #[default]
    Segment,
    /// One step per instruction, keeping the lock between steps.
    Instruction,
}

pub struct Engine<'a> {
    pub program: &'a Program,
    pub store: &'a Store,
    pub granularity: Granularity,
}

fn fault(act: &Activation, program: &Program, kind: FaultKind) -> Fault {
    Fault {
        kind,
        backtrace: act.backtrace(program),
    }
}

impl<'a> Engine<'a> {
    pub fn new(program: &'a Program, store: &'a Store) -> Self {
        Engine {
            program,
            store,
            granularity: Granularity::Segment,
        }
    }

    fn event(act: &Activation, kind: EventKind) -> TraceEvent {
        let f = act.frames.last().expect("frame");
        TraceEvent {
            act: act.id,
            obj: f.obj,
            class: f.class,
            proc: f.proc,
            kind,
        }
    }

    fn blocked(act: &Activation, target: ObjId, kind: BlockKind, hooks: &mut dyn Hooks) -> Step {
        if cfg!(debug_assertions) {
            YIELD_CHECKS.fetch_add(1, Ordering::Relaxed);
            assert_eq!(
                act.held, 0,
                "activation {} yields while holding {} lock(s)",
                act.id, act.held
            );
        }
        hooks.trace(Self::event(act, EventKind::Yield(kind)));
        Step::Yield { target, kind }
    }

    /// Run the next atomic segment of `act`.
    pub fn step(&self, act: &mut Activation, hooks: &mut dyn Hooks) -> Result<Step, Fault> {
        let owner = act.owner();
        let top = act.frames.last().expect("stepping a finished activation");
        let obj = top.obj;
        let held = match top.state {
            FrameState::Running => {
                let held = self.store.reclaim(obj, owner);
                held.assert_owner(owner);
                held
            }
            FrameState::Enter => {
                let Some(held) = self.store.try_lock(obj, owner) else {
                    return Ok(Self::blocked(act, obj, BlockKind::Lock, hooks));
                };
                act.held += 1;
                let proc = self.program.proc(top.class, top.proc);
                if let Some(g) = &proc.guard {
                    let ok = self
                        .eval(g, &[], &held, owner, hooks, 0)
                        .map_err(|k| fault(act, self.program, k))?
                        .as_bool();
                    if !ok {
                        held.unlock();
                        act.held -= 1;
                        hooks.released(obj, false);
                        return Ok(Self::blocked(act, obj, BlockKind::Guard, hooks));
                    }
                }
                hooks.trace(Self::event(act, EventKind::Enter));
                act.frames.last_mut().unwrap().state = FrameState::Running;
                held
            }
            FrameState::Reacquire(result) => {
                let Some(mut held) = self.store.try_lock(obj, owner) else {
                    return Ok(Self::blocked(act, obj, BlockKind::Lock, hooks));
                };
                act.held += 1;
                let frame = act.frames.last_mut().unwrap();
                frame.state = FrameState::Running;
                let mut wrote = false;
                if let (Some(dest), Some(v)) = (frame.dest.take(), result) {
                    let base = frame.base as usize;
                    Self::store_place(dest, v, &mut act.locals[base..], &mut held, &mut wrote);
                }
                hooks.trace(Self::event(act, EventKind::Resume));
                return self.run(act, held, hooks, wrote);
            }
        };
        self.run(act, held, hooks, false)
    }

    /// Allocate an instance of `class` with no caller, e.g. the Start object.
    /// Returns the activation that runs its init, if the class has one.
    pub fn create_root(
        &self,
        class: ClassId,
        args: Vec<Value>,
        owner: u64,
        hooks: &mut dyn Hooks,
    ) -> (ObjId, Option<Activation>) {
        let c = self.program.class(class);
        let held = self
            .store
            .alloc_locked(class, c.field_defaults.clone(), owner);
        let id = held.id();
        if c.init.is_some() {
            held.unlock();
            (id, Some(Activation::init(self.program, id, class, args)))
        } else {
            if c.has_actions() {
                hooks.enqueue(id);
            }
            held.unlock();
            (id, None)
        }
    }

    /// Evaluate the guard of `proc` against a locked object. Procedures
    /// without a guard are always enabled.
    pub fn guard_holds(
        &self,
        class: ClassId,
        proc: u32,
        held: &Held<'_>,
    ) -> Result<bool, FaultKind> {
        match &self.program.proc(class, proc).guard {
            None => Ok(true),
            Some(g) => Ok(self.eval(g, &[], held, 0, &mut NoHooks, 0)?.as_bool()),
        }
    }

    /// Run the body of an action whose lock the caller already holds and
    /// whose guard it has already found true.
    pub fn run_entered(
        &self,
        act: &mut Activation,
        held: Held<'_>,
        hooks: &mut dyn Hooks,
    ) -> Result<Step, Fault> {
        let frame = act.frames.last_mut().expect("frame");
        debug_assert_eq!(frame.state, FrameState::Enter);
        debug_assert_eq!(frame.obj, held.id());
        frame.state = FrameState::Running;
        act.held += 1;
        held.assert_owner(act.owner());
        hooks.trace(Self::event(act, EventKind::Enter));
        self.run(act, held, hooks, false)
    }

    fn release(act: &mut Activation, held: Held<'_>, wrote: bool, hooks: &mut dyn Hooks) {
        held.assert_owner(act.owner());
        let obj = held.unlock();
        act.held -= 1;
        hooks.released(obj, wrote);
    }

    fn run(
        &self,
        act: &mut Activation,
        mut held: Held<'_>,
        hooks: &mut dyn Hooks,
        mut wrote: bool,
    ) -> Result<Step, Fault> {
        let owner = act.owner();
        loop {
            let fi = act.frames.len() - 1;
            let Frame {
                obj,
                class,
                proc,
                pc,
                base,
                inline,
                ..
            } = act.frames[fi];
            let p = self.program.proc(class, proc);
            let base = base as usize;
            let end = base + p.n_slots() as usize;
            let flow = match p.code.get(pc as usize) {
                None => Flow::Return(None),
                Some(instr) => self
                    .exec_plain(
                        instr,
                        &mut act.locals[base..end],
                        &mut held,
                        owner,
                        hooks,
                        0,
                        &mut wrote,
                    )
                    .map_err(|k| fault(act, self.program, k))?,
            };
            match flow {
                Flow::Next => act.frames[fi].pc += 1,
                Flow::Goto(t) => act.frames[fi].pc = t,
                Flow::Cooperative => {
                    match &p.code[pc as usize] {
                        Instr::Call {
                            dest,
                            recv,
                            class: callee_class,
                            method,
                            args,
                        } => {
                            let target = match self
                                .eval(recv, &act.locals[base..end], &held, owner, hooks, 0)
                                .map_err(|k| fault(act, self.program, k))?
                            {
                                Value::Ref(t) => t,
                                _ => {
                                    let name =
                                        self.program.proc(*callee_class, *method).name.clone();
                                    return Err(fault(act, self.program, FaultKind::NilCall(name)));
                                }
                            };
                            let callee = self.program.proc(*callee_class, *method);
                            let new_base = act.locals.len();
                            for a in args {
                                let v = self
                                    .eval(a, &act.locals[base..end], &held, owner, hooks, 0)
                                    .map_err(|k| fault(act, self.program, k))?;
                                act.locals.push(v);
                            }
                            act.locals.extend_from_slice(&callee.local_defaults);
                            let frame = &mut act.frames[fi];
                            frame.pc += 1;
                            frame.dest = *dest;
                            let self_call = target == obj;
                            if !self_call {
                                frame.state = FrameState::Reacquire(None);
                            }
                            act.frames.push(Frame {
                                obj: target,
                                class: *callee_class,
                                proc: *method,
                                pc: 0,
                                base: new_base as u32,
                                state: if self_call {
                                    FrameState::Running
                                } else {
                                    FrameState::Enter
                                },
                                dest: None,
                                inline: self_call,
                            });
                            hooks.trace(Self::event(act, EventKind::Call(target)));
                            if self_call {
                                if let Some(g) = &callee.guard {
                                    let ok = self
                                        .eval(g, &[], &held, owner, hooks, 0)
                                        .map_err(|k| fault(act, self.program, k))?
                                        .as_bool();
                                    if !ok {
                                        let name = callee.name.clone();
                                        return Err(fault(
                                            act,
                                            self.program,
                                            FaultKind::SelfCallBlocked(name),
                                        ));
                                    }
                                }
                                continue;
                            }
                            Self::release(act, held, wrote, hooks);
                            return Ok(Step::Continue);
                        }
                        Instr::New {
                            dest,
                            class: new_class,
                            args,
                        } => {
                            let c = self.program.class(*new_class);
                            let init = c.init.expect("cooperative new has an init");
                            let new_base = act.locals.len();
                            for a in args {
                                let v = self
                                    .eval(a, &act.locals[base..end], &held, owner, hooks, 0)
                                    .map_err(|k| fault(act, self.program, k))?;
                                act.locals.push(v);
                            }
                            act.locals
                                .extend_from_slice(&c.procs[init as usize].local_defaults);
                            // Nobody can reach the new object, so its lock
                            // is free for the init frame to take.
                            let target = self
                                .store
                                .alloc_locked(*new_class, c.field_defaults.clone(), owner)
                                .unlock();
                            let frame = &mut act.frames[fi];
                            frame.pc += 1;
                            frame.dest = *dest;
                            frame.state = FrameState::Reacquire(None);
                            act.frames.push(Frame {
                                obj: target,
                                class: *new_class,
                                proc: init,
                                pc: 0,
                                base: new_base as u32,
                                state: FrameState::Enter,
                                dest: None,
                                inline: false,
                            });
                            hooks.trace(Self::event(act, EventKind::Call(target)));
                            Self::release(act, held, wrote, hooks);
                            return Ok(Step::Continue);
                        }
                        _ => unreachable!(),
                    }
                }
                Flow::Return(v) => {
                    hooks.trace(Self::event(act, EventKind::Return));
                    let f = act.frames.pop().expect("frame");
                    let result = if p.kind == ProcKind::Init {
                        Some(Value::Ref(obj))
                    } else {
                        v
                    };
                    if !inline
                        && p.kind != ProcKind::Action
                        && self.program.class(class).has_actions()
                    {
                        hooks.enqueue(obj);
                    }
                    act.locals.truncate(f.base as usize);
                    if inline {
                        let caller = act.frames.last_mut().expect("inline caller");
                        if let (Some(dest), Some(v)) = (caller.dest.take(), result) {
                            let cb = caller.base as usize;
                            Self::store_place(
                                dest,
                                v,
                                &mut act.locals[cb..],
                                &mut held,
                                &mut wrote,
                            );
                        }
                        continue;
                    }
                    Self::release(act, held, wrote, hooks);
                    match act.frames.last_mut() {
                        None => {
                            hooks.trace(TraceEvent {
                                act: act.id,
                                obj,
                                class,
                                proc,
                                kind: EventKind::Finish,
                            });
                            return Ok(Step::Finished);
                        }
                        Some(caller) => {
                            caller.state = FrameState::Reacquire(result);
                            return Ok(Step::Continue);
                        }
                    }
                }
            }
            if self.granularity == Granularity::Instruction {
                // Keep the lock; the next step reclaims it.
                let _kept = held;
                return Ok(Step::Continue);
            }
        }
    }
}

#[cfg(test)]
mod tests;
