//! Explicit-state view of a program: a state is the heap plus every live
//! activation, and a transition is one engine step or one action start.

use std::fmt::Write as _;

use crate::engine::{
    ActKind, Activation, Engine, EventKind, Fault, Granularity, Hooks, Step, TraceEvent,
};
use crate::model::{ClassId, ObjId, ObjSnap, Program, Store, Value};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct State {
    pub objects: Vec<ObjSnap>,
    /// Objects whose actions may be scheduled (their init has finished).
    pub live: Vec<bool>,
    /// Sorted by activation id.
    pub acts: Vec<Activation>,
}

impl State {
    /// First object of `class`, if any.
    pub fn find(&self, class: ClassId) -> Option<&ObjSnap> {
        self.objects.iter().find(|o| o.class == class)
    }

    pub fn has_blocked(&self) -> bool {
        !self.acts.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Label {
    pub act: u64,
    /// Step of an action activation.
    pub internal: bool,
    /// Event kinds with the procedure names they happened in.
    pub events: Vec<(EventKind, String)>,
    pub prints: Vec<Value>,
}

impl Label {
    pub fn render(&self) -> String {
        let mut s = format!("activation {}", self.act);
        for (k, p) in &self.events {
            let _ = match k {
                EventKind::Call(o) => write!(s, " {p}:call({o})"),
                other => write!(s, " {p}:{other:?}"),
            };
        }
        for v in &self.prints {
            let _ = write!(s, " print({v})");
        }
        s
    }

    /// Same observable behaviour, ignoring which classes were involved.
    pub fn matches(&self, other: &Label) -> bool {
        self.act == other.act && self.events == other.events && self.prints == other.prints
    }
}

#[derive(Default)]
struct Rec {
    enqueued: Vec<ObjId>,
    events: Vec<TraceEvent>,
    prints: Vec<Value>,
}

impl Hooks for Rec {
    fn enqueue(&mut self, obj: ObjId) {
        self.enqueued.push(obj);
    }
    fn print(&mut self, v: Value) {
        self.prints.push(v);
    }
    fn trace(&mut self, ev: TraceEvent) {
        self.events.push(ev);
    }
}

pub struct Machine<'p> {
    pub program: &'p Program,
    pub root: ClassId,
    pub granularity: Granularity,
}

pub type Successors = Result<Vec<(Label, State)>, (Label, Fault)>;

impl<'p> Machine<'p> {
    pub fn new(program: &'p Program, root: ClassId, granularity: Granularity) -> Self {
        Machine {
            program,
            root,
            granularity,
        }
    }

    fn engine<'a>(&'a self, store: &'a Store) -> Engine<'a> {
        let mut e = Engine::new(self.program, store);
        e.granularity = self.granularity;
        e
    }

    pub fn initial(&self) -> State {
        let store = Store::new();
        let mut rec = Rec::default();
        let (_, init) = self
            .engine(&store)
            .create_root(self.root, Vec::new(), 1, &mut rec);
        let mut live = vec![false; store.len() as usize];
        for o in rec.enqueued {
            live[o.0 as usize] = true;
        }
        State {
            objects: store.snapshot(),
            live,
            acts: init.into_iter().collect(),
        }
    }

    fn label(&self, act: &Activation, rec: &Rec) -> Label {
        Label {
            act: act.id,
            internal: act.kind == ActKind::Action,
            events: rec
                .events
                .iter()
                .map(|e| (e.kind, self.program.proc(e.class, e.proc).name.clone()))
                .collect(),
            prints: rec.prints.clone(),
        }
    }

    fn next_state(
        &self,
        from: &State,
        store: &Store,
        rec: &Rec,
        replace: Option<usize>,
        act: Activation,
    ) -> State {
        let mut live = from.live.clone();
        live.resize(store.len() as usize, false);
        for o in &rec.enqueued {
            live[o.0 as usize] = true;
        }
        let mut acts = from.acts.clone();
        if let Some(i) = replace {
            acts.remove(i);
        }
        if !act.is_finished() {
            let at = acts.partition_point(|a| a.id < act.id);
            acts.insert(at, act);
        }
        State {
            objects: store.snapshot(),
            live,
            acts,
        }
    }

    pub fn successors(&self, s: &State) -> Successors {
        let mut out = Vec::new();
        for (i, a) in s.acts.iter().enumerate() {
            let store = Store::from_snapshot(&s.objects);
            let engine = self.engine(&store);
            let mut act = a.clone();
            let mut rec = Rec::default();
            match engine.step(&mut act, &mut rec) {
                Err(f) => return Err((self.label(a, &rec), f)),
                Ok(Step::Yield { .. }) => {}
                Ok(Step::Continue | Step::Finished) => {
                    let label = self.label(&act, &rec);
                    out.push((label, self.next_state(s, &store, &rec, Some(i), act)));
                }
            }
        }
        for (o, snap) in s.objects.iter().enumerate() {
            let obj = ObjId(o as u32);
            let class = self.program.class(snap.class);
            if !s.live[o] || !class.has_actions() || snap.locked.is_some() {
                continue;
            }
            let id = o as u64 * 2 + 1;
            if s.acts.iter().any(|a| a.id == id) {
                continue;
            }
            for &a in &class.actions {
                let store = Store::from_snapshot(&s.objects);
                let engine = self.engine(&store);
                let mut act = Activation::action(self.program, obj, snap.class, a);
                let held = store
                    .try_lock(obj, act.owner())
                    .expect("unlocked in snapshot");
                let mut rec = Rec::default();
                match engine.guard_holds(snap.class, a, &held) {
                    Err(kind) => {
                        held.unlock();
                        let backtrace = act.backtrace(self.program);
                        return Err((self.label(&act, &rec), Fault { kind, backtrace }));
                    }
                    Ok(false) => {
                        held.unlock();
                        continue;
                    }
                    Ok(true) => {}
                }
                match engine.run_entered(&mut act, held, &mut rec) {
                    Err(f) => return Err((self.label(&act, &rec), f)),
                    Ok(_) => {
                        let label = self.label(&act, &rec);
                        out.push((label, self.next_state(s, &store, &rec, None, act)));
                    }
                }
            }
        }
        Ok(out)
    }

    /// One line per object and activation.
    pub fn render(&self, s: &State) -> String {
        let store = Store::from_snapshot(&s.objects);
        let mut out = store.dump(self.program);
        for a in &s.acts {
            let _ = writeln!(out, "activation {} ({:?})", a.id, a.kind);
            for line in a.backtrace(self.program) {
                let _ = writeln!(out, "{line}");
            }
        }
        out
    }
}
