//! Running a program to quiescence.
//!
//! Work is split into [`Unit`]s: either "try to start an action of this
//! object" or "step this activation". Three drivers execute them:
//!
//! * [`Mode::Parallel`]: M:N work stealing over a fixed pool of workers.
//! * [`Mode::Deterministic`]: a single thread choosing the next unit with a
//!   seeded RNG, so the same seed replays the same interleaving.
//! * [`Mode::ThreadPerObject`]: one OS thread per originating object, the
//!   baseline the M:N runtime is compared against.
//!
//! A blocked activation does not spin. It parks on the object it waits for
//! and is requeued when that object's lock is released (lock waits) or
//! when a release wrote to the object's fields (guard waits).

pub mod deque;
mod deterministic;
mod parallel;
mod threads;

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::Serialize;

use crate::engine::{
    ActKind, Activation, BlockKind, Engine, EventKind, Fault, Hooks, Step, TraceEvent,
};
use crate::model::{ClassId, ObjId, Program, Store, Value};
use deque::Word;

const IDLE: u8 = 0;
const QUEUED: u8 = 1;
const RUNNING: u8 = 2;

/// Failed retries before a spinning activation parks anyway.
const SPIN_LIMIT: u32 = 64;

pub struct Task {
    pub act: Activation,
    pub spins: u32,
}

pub enum Unit {
    /// Pick an enabled action of the object, if any, and start it.
    Actions(ObjId),
    Resume(Box<Task>),
}

impl Unit {
    fn resume(act: Activation) -> Unit {
        Unit::Resume(Box::new(Task { act, spins: 0 }))
    }

    /// Object whose thread runs this unit in thread-per-object mode.
    fn originator(&self) -> ObjId {
        match self {
            Unit::Actions(o) => *o,
            Unit::Resume(t) => t.act.originator,
        }
    }
}

impl Word for Unit {
    fn into_word(self) -> usize {
        match self {
            Unit::Actions(o) => ((o.0 as usize) << 1) | 1,
            Unit::Resume(t) => Box::into_raw(t) as usize,
        }
    }

    unsafe fn from_word(w: usize) -> Self {
        if w & 1 == 1 {
            Unit::Actions(ObjId((w >> 1) as u32))
        } else {
            Unit::Resume(Box::from_raw(w as *mut Task))
        }
    }
}

/// Units parked on one object.
#[derive(Default)]
pub struct Waiters {
    lock: Vec<Unit>,
    guard: Vec<Unit>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    #[default]
    Parallel,
    Deterministic,
    ThreadPerObject,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StealBatch {
    #[default]
    One,
    Half,
}

#[derive(Clone, Debug)]
pub struct Config {
    pub workers: usize,
    pub seed: u64,
    pub mode: Mode,
    pub steal_batch: StealBatch,
    /// Requeue blocked activations instead of parking them.
    pub spin_retry: bool,
    /// Write each `print` to stdout as it happens.
    pub echo: bool,
    pub deadline: Option<Duration>,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            workers: 1,
            seed: 0,
            mode: Mode::Parallel,
            steal_batch: StealBatch::One,
            spin_retry: false,
            echo: false,
            deadline: None,
            cancel: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub objects: u64,
    /// Action activations started.
    pub actions: u64,
    pub calls: u64,
    pub steals: u64,
    /// Activations still waiting at quiescence.
    pub blocked: u64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Quiescent,
    Fault(Fault),
    /// Deadline passed or cancelled.
    Aborted,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub stats: Stats,
    pub output: Vec<Value>,
    /// Hash of the event trace and output (deterministic mode only).
    pub trace_hash: Option<u64>,
    pub outcome: Outcome,
}

/// State shared by every thread of one run.
struct Shared<'a> {
    engine: Engine<'a>,
    cfg: &'a Config,
    /// Units queued or being handled. Parked units are not counted, so
    /// zero means quiescence.
    pending: AtomicUsize,
    output: Mutex<Vec<Value>>,
    fault: Mutex<Option<Fault>>,
    stop: AtomicBool,
    aborted: AtomicBool,
    started: Instant,
    actions: AtomicU64,
    calls: AtomicU64,
    steals: AtomicU64,
}

impl<'a> Shared<'a> {
    fn new(program: &'a Program, store: &'a Store, cfg: &'a Config) -> Self {
        Shared {
            engine: Engine::new(program, store),
            cfg,
            pending: AtomicUsize::new(0),
            output: Mutex::new(Vec::new()),
            fault: Mutex::new(None),
            stop: AtomicBool::new(false),
            aborted: AtomicBool::new(false),
            started: Instant::now(),
            actions: AtomicU64::new(0),
            calls: AtomicU64::new(0),
            steals: AtomicU64::new(0),
        }
    }

    fn fail(&self, f: Fault) {
        self.fault.lock().get_or_insert(f);
        self.stop.store(true, Ordering::SeqCst);
    }

    /// Deadline or cancellation; sets `stop` when either fires.
    fn check_abort(&self) -> bool {
        let cancelled = self
            .cfg
            .cancel
            .as_ref()
            .is_some_and(|c| c.load(Ordering::Relaxed));
        let late = self
            .cfg
            .deadline
            .is_some_and(|d| self.started.elapsed() >= d);
        if cancelled || late {
            self.aborted.store(true, Ordering::SeqCst);
            self.stop.store(true, Ordering::SeqCst);
        }
        self.stop.load(Ordering::Relaxed)
    }

    fn finish(self, store: &Store, trace_hash: Option<u64>) -> RunReport {
        let mut blocked = 0;
        for i in 0..store.len() {
            let w = store.object(ObjId(i)).waiters.lock();
            blocked += w
                .lock
                .iter()
                .chain(&w.guard)
                .filter(|u| matches!(u, Unit::Resume(_)))
                .count() as u64;
        }
        let outcome = match self.fault.into_inner() {
            Some(f) => Outcome::Fault(f),
            None if self.aborted.load(Ordering::SeqCst) => Outcome::Aborted,
            None => Outcome::Quiescent,
        };
        RunReport {
            stats: Stats {
                objects: store.len() as u64,
                actions: self.actions.into_inner(),
                calls: self.calls.into_inner(),
                steals: self.steals.into_inner(),
                blocked,
                wall_ms: self.started.elapsed().as_millis() as u64,
            },
            output: self.output.into_inner(),
            trace_hash,
            outcome,
        }
    }
}

/// Where a handler sends units that become runnable.
trait Sink {
    fn push(&mut self, unit: Unit);
    /// Retry of a blocked activation in spin mode.
    fn retry(&mut self, unit: Unit) {
        self.push(unit)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over a stream of words.
#[derive(Clone, Copy, Debug)]
pub struct TraceHash(u64);

impl Default for TraceHash {
    fn default() -> Self {
        TraceHash(FNV_OFFSET)
    }
}

impl TraceHash {
    pub fn word(&mut self, w: u64) {
        for b in w.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn value(&mut self, v: Value) {
        match v {
            Value::Int(i) => {
                self.word(0);
                self.word(i as u64)
            }
            Value::Bool(b) => {
                self.word(1);
                self.word(b as u64)
            }
            Value::Ref(o) => {
                self.word(2);
                self.word(o.0 as u64)
            }
            Value::Nil => self.word(3),
        }
    }

    pub fn event(&mut self, ev: &TraceEvent) {
        self.word(ev.act);
        self.word(ev.obj.0 as u64);
        self.word(ev.class as u64);
        self.word(ev.proc as u64);
        let (tag, arg) = match ev.kind {
            EventKind::Enter => (0, 0),
            EventKind::Resume => (1, 0),
            EventKind::Call(o) => (2, o.0 as u64),
            EventKind::Return => (3, 0),
            EventKind::Yield(BlockKind::Lock) => (4, 0),
            EventKind::Yield(BlockKind::Guard) => (5, 0),
            EventKind::Finish => (6, 0),
        };
        self.word(tag);
        self.word(arg);
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

/// Per-thread handler state; doubles as the engine's hooks.
struct Ctx<'s, 'a, S: Sink> {
    sh: &'s Shared<'a>,
    sink: S,
    calls: u64,
    actions: u64,
    hash: Option<TraceHash>,
}

impl<'s, 'a, S: Sink> Hooks for Ctx<'s, 'a, S> {
    fn enqueue(&mut self, obj: ObjId) {
        let o = self.sh.engine.store.object(obj);
        if o.sched
            .compare_exchange(IDLE, QUEUED, Ordering::AcqRel, Ordering::Relaxed)
            .is_ok()
        {
            self.push(Unit::Actions(obj));
        }
    }

    fn released(&mut self, obj: ObjId, wrote: bool) {
        let o = self.sh.engine.store.object(obj);
        if !o.has_waiters.load(Ordering::SeqCst) {
            return;
        }
        let mut w = o.waiters.lock();
        let mut woken = std::mem::take(&mut w.lock);
        if wrote {
            woken.append(&mut w.guard);
        }
        if w.lock.is_empty() && w.guard.is_empty() {
            o.has_waiters.store(false, Ordering::SeqCst);
        }
        drop(w);
        for u in woken {
            self.push(u);
        }
    }

    fn print(&mut self, v: Value) {
        if let Some(h) = &mut self.hash {
            h.value(v);
        }
        let mut out = self.sh.output.lock();
        if self.sh.cfg.echo {
            println!("{v}");
        }
        out.push(v);
    }

    fn trace(&mut self, ev: TraceEvent) {
        if matches!(ev.kind, EventKind::Call(_)) {
            self.calls += 1;
        }
        if let Some(h) = &mut self.hash {
            h.event(&ev);
        }
    }
}

impl<'s, 'a, S: Sink> Ctx<'s, 'a, S> {
    fn new(sh: &'s Shared<'a>, sink: S, hashing: bool) -> Self {
        Ctx {
            sh,
            sink,
            calls: 0,
            actions: 0,
            hash: hashing.then(TraceHash::default),
        }
    }

    fn push(&mut self, unit: Unit) {
        self.sh.pending.fetch_add(1, Ordering::SeqCst);
        self.sink.push(unit);
    }

    fn flush_counters(&mut self) {
        self.sh
            .calls
            .fetch_add(std::mem::take(&mut self.calls), Ordering::Relaxed);
        self.sh
            .actions
            .fetch_add(std::mem::take(&mut self.actions), Ordering::Relaxed);
    }

    /// Allocate the root object and queue its init.
    fn start(&mut self, root: ClassId) {
        let sh = self.sh;
        let (_, init) = sh.engine.create_root(root, Vec::new(), 1, self);
        if let Some(act) = init {
            self.push(Unit::resume(act));
        }
    }

    /// Handle one unit, taking at most `budget` engine steps. The caller
    /// decrements `pending` afterwards.
    fn handle(&mut self, unit: Unit, budget: u32) {
        let result = match unit {
            Unit::Actions(obj) => self.start_action(obj),
            Unit::Resume(task) => self.resume(task, budget),
        };
        if let Err(f) = result {
            self.sh.fail(f);
        }
    }

    fn start_action(&mut self, obj: ObjId) -> Result<(), Fault> {
        let sh = self.sh;
        let engine = &sh.engine;
        let owner = obj.0 as u64 * 2 + 2;
        let Some(mut held) = engine.store.try_lock(obj, owner) else {
            self.park(obj, BlockKind::Lock, Unit::Actions(obj));
            return Ok(());
        };
        let class = held.class();
        let actions = &engine.program.class(class).actions;
        let n = actions.len() as u32;
        let rr = *held.rr_mut();
        let mut chosen = None;
        for i in 0..n {
            let a = actions[((rr + i) % n) as usize];
            let ok = engine.guard_holds(class, a, &held).map_err(|kind| Fault {
                kind,
                backtrace: vec![format!(
                    "  at guard of {}.{} on {obj}",
                    engine.program.class(class).name,
                    engine.program.proc(class, a).name
                )],
            });
            let ok = match ok {
                Ok(ok) => ok,
                Err(f) => {
                    held.unlock();
                    return Err(f);
                }
            };
            if ok {
                *held.rr_mut() = (rr + i + 1) % n;
                chosen = Some(a);
                break;
            }
        }
        let o = held.object();
        let Some(a) = chosen else {
            o.sched.store(IDLE, Ordering::Release);
            held.unlock();
            self.released(obj, false);
            return Ok(());
        };
        o.sched.store(RUNNING, Ordering::Release);
        self.actions += 1;
        let mut act = Activation::action(engine.program, obj, class, a);
        let step = engine.run_entered(&mut act, held, self)?;
        self.after_step(Box::new(Task { act, spins: 0 }), step);
        Ok(())
    }

    fn resume(&mut self, mut task: Box<Task>, budget: u32) -> Result<(), Fault> {
        let sh = self.sh;
        for _ in 0..budget.max(1) {
            let step = sh.engine.step(&mut task.act, self)?;
            if step != Step::Continue {
                self.after_step(task, step);
                return Ok(());
            }
            task.spins = 0;
        }
        self.push(Unit::Resume(task));
        Ok(())
    }

    fn after_step(&mut self, mut task: Box<Task>, step: Step) {
        match step {
            Step::Continue => self.push(Unit::Resume(task)),
            Step::Finished => {
                if task.act.kind == ActKind::Action {
                    let obj = task.act.originator;
                    self.sh
                        .engine
                        .store
                        .object(obj)
                        .sched
                        .store(QUEUED, Ordering::Release);
                    self.push(Unit::Actions(obj));
                }
            }
            Step::Yield { target, kind } => {
                if self.sh.cfg.spin_retry && task.spins < SPIN_LIMIT {
                    task.spins += 1;
                    self.sh.pending.fetch_add(1, Ordering::SeqCst);
                    self.sink.retry(Unit::Resume(task));
                } else {
                    self.park(target, kind, Unit::Resume(task));
                }
            }
        }
    }

    /// Park `unit` on `target`, unless the reason it blocked has already
    /// gone away.
    ///
    /// Setting `has_waiters` before probing the lock means a concurrent
    /// holder either sees the flag when it releases, or had already
    /// released before the probe, in which case the probe succeeds.
    fn park(&mut self, target: ObjId, kind: BlockKind, unit: Unit) {
        let engine = &self.sh.engine;
        let o = engine.store.object(target);
        let mut w = o.waiters.lock();
        o.has_waiters.store(true, Ordering::SeqCst);
        let Some(held) = engine.store.try_lock(target, 0) else {
            w.lock.push(unit);
            return;
        };
        let ready = match (&unit, kind) {
            (_, BlockKind::Lock) => true,
            (Unit::Resume(task), BlockKind::Guard) => {
                let f = task.act.frames.last().expect("frame");
                // A faulting guard is reported when the activation retries.
                engine.guard_holds(f.class, f.proc, &held).unwrap_or(true)
            }
            (Unit::Actions(_), BlockKind::Guard) => true,
        };
        held.unlock();
        if ready {
            if w.lock.is_empty() && w.guard.is_empty() {
                o.has_waiters.store(false, Ordering::SeqCst);
            }
            drop(w);
            self.push(unit);
        } else {
            w.guard.push(unit);
        }
    }
}

/// Run `root`'s init and every action it enables until nothing can move.
pub fn run(program: &Program, root: ClassId, cfg: &Config) -> RunReport {
    match cfg.mode {
        Mode::Parallel => parallel::run(program, root, cfg),
        Mode::Deterministic => deterministic::run(program, root, cfg),
        Mode::ThreadPerObject => threads::run(program, root, cfg),
    }
}
