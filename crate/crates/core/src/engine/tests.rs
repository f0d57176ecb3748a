use std::collections::{HashSet, VecDeque};

use super::*;
use crate::frontend::{load, ValidateOptions};
use crate::model::compile;

#[derive(Default)]
struct Collect {
    prints: Vec<Value>,
    enqueued: Vec<ObjId>,
    released: Vec<(ObjId, bool)>,
}

impl Hooks for Collect {
    fn enqueue(&mut self, obj: ObjId) {
        self.enqueued.push(obj);
    }
    fn released(&mut self, obj: ObjId, wrote: bool) {
        self.released.push((obj, wrote));
    }
    fn print(&mut self, v: Value) {
        self.prints.push(v);
    }
}

fn program(src: &str) -> Program {
    compile(
        &load(
            src,
            ValidateOptions {
                require_start: true,
            },
        )
        .unwrap(),
    )
}

/// FIFO driver: blocked activations spin at the back of the queue.
fn run(src: &str) -> Result<Vec<Value>, Fault> {
    let program = program(src);
    let store = Store::new();
    let engine = Engine::new(&program, &store);
    let mut hooks = Collect::default();
    let (_, init) = engine.create_root(program.start().unwrap(), vec![], 1, &mut hooks);
    let mut acts: VecDeque<Activation> = init.into_iter().collect();
    let mut running: HashSet<ObjId> = HashSet::new();
    for _ in 0..1_000_000 {
        if hooks.enqueued.is_empty() {
            let Some(mut act) = acts.pop_front() else {
                break;
            };
            match engine.step(&mut act, &mut hooks)? {
                Step::Finished => {
                    if act.kind == ActKind::Action {
                        running.remove(&act.originator);
                        hooks.enqueued.push(act.originator);
                    }
                }
                _ => acts.push_back(act),
            }
            continue;
        }
        let obj = hooks.enqueued.remove(0);
        if running.contains(&obj) {
            continue;
        }
        let mut held = store.try_lock(obj, 0).unwrap();
        let class = program.class(held.class());
        let mut chosen = None;
        for &a in &class.actions {
            let guard = class.procs[a as usize].guard.as_ref();
            let ok = match guard {
                None => true,
                Some(g) => engine
                    .eval(g, &[], &held, 0, &mut NoHooks, 0)
                    .unwrap()
                    .as_bool(),
            };
            if ok {
                chosen = Some(a);
                break;
            }
        }
        *held.rr_mut() += 1;
        match chosen {
            None => {
                held.unlock();
            }
            Some(a) => {
                let mut act = Activation::action(&program, obj, held.class(), a);
                held.unlock();
                let held = store.try_lock(obj, act.owner()).unwrap();
                running.insert(obj);
                match engine.run_entered(&mut act, held, &mut hooks)? {
                    Step::Finished => {
                        running.remove(&obj);
                        hooks.enqueued.push(obj);
                    }
                    _ => acts.push_back(act),
                }
            }
        }
    }
    Ok(hooks.prints)
}

const DOUBLERS: &str = include_str!("../../lime/doubler.lime");

#[test]
fn doubler_prints_six() {
    let out = run(DOUBLERS).unwrap();
    assert_eq!(out, vec![Value::Int(6), Value::Int(6)]);
}

#[test]
fn delayed_doubler_waits_for_its_action() {
    let src = format!(
        "{}\nclass Start\n    var d: DelayedDoubler\n    init()\n        d := new DelayedDoubler()\n        d.store(5)\n        print(d.retrieve())\n",
        DOUBLERS.split("class Start").next().unwrap()
    );
    assert_eq!(run(&src).unwrap(), vec![Value::Int(10)]);
}

#[test]
fn guard_false_yields_with_no_lock_held() {
    let program = program(
        "class W\n    var open: bool\n    method take(): int\n        when open do\n            return 1\nclass Start\n    var w: W\n    init()\n        w := new W()\n        print(w.take())\n",
    );
    let store = Store::new();
    let engine = Engine::new(&program, &store);
    let mut hooks = Collect::default();
    let (start, act) = engine.create_root(program.start().unwrap(), vec![], 1, &mut hooks);
    let mut act = act.unwrap();
    // Segment 1: create W, reach the call, release Start.
    assert_eq!(engine.step(&mut act, &mut hooks).unwrap(), Step::Continue);
    assert!(!store.object(start).is_locked());
    let w = act.target().unwrap();
    // Segment 2: guard false.
    assert_eq!(
        engine.step(&mut act, &mut hooks).unwrap(),
        Step::Yield {
            target: w,
            kind: BlockKind::Guard
        }
    );
    assert_eq!(act.locks_held(), 0);
    assert!(!store.object(w).is_locked());
    assert_eq!(hooks.released.last(), Some(&(w, false)));
}

#[test]
fn call_releases_the_callers_lock() {
    let program = program(
        "class Slow\n    var n: int\n    method get(): int\n        return n\nclass Start\n    var s: Slow\n    var x: int\n    init()\n        s := new Slow()\n        x := s.get()\n        print(x)\n",
    );
    let store = Store::new();
    let engine = Engine::new(&program, &store);
    let mut hooks = Collect::default();
    let (start, act) = engine.create_root(program.start().unwrap(), vec![], 1, &mut hooks);
    let mut act = act.unwrap();
    engine.step(&mut act, &mut hooks).unwrap();
    assert!(!store.object(start).is_locked());
    // Someone else takes Start while the call is in flight.
    let other = store.try_lock(start, 99).unwrap();
    assert_eq!(engine.step(&mut act, &mut hooks).unwrap(), Step::Continue);
    // The callee returned, but the caller cannot resume without its lock.
    assert_eq!(
        engine.step(&mut act, &mut hooks).unwrap(),
        Step::Yield {
            target: start,
            kind: BlockKind::Lock
        }
    );
    other.unlock();
    assert_eq!(engine.step(&mut act, &mut hooks).unwrap(), Step::Finished);
    assert_eq!(hooks.prints, vec![Value::Int(0)]);
}

#[test]
fn explicit_self_call_is_inline_and_atomic() {
    let out = run(
        "class Start\n    var n: int\n    init()\n        n := this.bump(1)\n        print(n)\n    method bump(k: int): int\n        n := n + k\n        return n + 10\n",
    )
    .unwrap();
    assert_eq!(out, vec![Value::Int(11)]);
}

#[test]
fn self_call_with_false_guard_faults() {
    let err = run(
        "class Start\n    var ready: bool\n    init()\n        this.wait()\n    method wait()\n        when ready do\n            ready := false\n",
    )
    .unwrap_err();
    assert_eq!(err.kind, FaultKind::SelfCallBlocked("wait".into()));
    assert!(err.backtrace[0].contains("Start.wait"));
    assert!(err.backtrace[1].contains("Start.init"));
}

#[test]
fn nil_call_faults_with_backtrace() {
    let err = run("class Start\n    var s: Start\n    init()\n        s.go()\n    method go()\n        return\n")
        .unwrap_err();
    assert_eq!(err.kind, FaultKind::NilCall("go".into()));
}

#[test]
fn overflow_and_mod_by_zero_fault() {
    let err = run("class Start\n    var x: int\n    init()\n        x := 9223372036854775807\n        x := x + 1\n")
        .unwrap_err();
    assert_eq!(err.kind, FaultKind::Overflow);
    let err = run("class Start\n    var x: int\n    init()\n        x := 5 mod x\n").unwrap_err();
    assert_eq!(err.kind, FaultKind::ModByZero);
}

#[test]
fn mod_is_euclidean() {
    let out =
        run("class Start\n    init()\n        print(-7 mod 2)\n        print(7 mod -2)\n").unwrap();
    assert_eq!(out, vec![Value::Int(1), Value::Int(1)]);
}

#[test]
fn multiple_assignment_reads_before_writing() {
    let out = run("class Start\n    var a, b: int\n    init()\n        a, b := 1, 2\n        a, b := b, a\n        print(a)\n        print(b)\n").unwrap();
    assert_eq!(out, vec![Value::Int(2), Value::Int(1)]);
}

#[test]
fn method_end_enqueues_active_objects() {
    let program = program(
        "class A\n    var f: bool\n    method poke()\n        f := true\n    action act\n        when f do\n            f := false\nclass Start\n    var a: A\n    init()\n        a := new A()\n        a.poke()\n",
    );
    let store = Store::new();
    let engine = Engine::new(&program, &store);
    let mut hooks = Collect::default();
    let (_, act) = engine.create_root(program.start().unwrap(), vec![], 1, &mut hooks);
    let mut act = act.unwrap();
    while engine.step(&mut act, &mut hooks).unwrap() != Step::Finished {}
    // Once for creation, once after poke.
    assert_eq!(hooks.enqueued.len(), 2);
}

#[test]
fn cooperative_new_runs_init_as_callee() {
    let out = run(
        "class Cell\n    var v: int\n    method get(): int\n        return v\nclass Box\n    var c: Cell\n    var v: int\n    init(x: int)\n        c := new Cell()\n        v := c.get()\n        v := v + x\n    method get(): int\n        return v\nclass Start\n    var b: Box\n    init()\n        b := new Box(4)\n        print(b.get())\n",
    )
    .unwrap();
    assert_eq!(out, vec![Value::Int(4)]);
}

#[test]
fn instruction_granularity_keeps_the_lock_between_steps() {
    let program =
        program("class Start\n    var x: int\n    init()\n        x := 1\n        x := 2\n");
    let store = Store::new();
    let mut engine = Engine::new(&program, &store);
    engine.granularity = Granularity::Instruction;
    let (start, act) = engine.create_root(program.start().unwrap(), vec![], 1, &mut NoHooks);
    let mut act = act.unwrap();
    assert_eq!(engine.step(&mut act, &mut NoHooks).unwrap(), Step::Continue);
    assert!(store.object(start).is_locked());
    assert_eq!(act.locks_held(), 1);
    assert_eq!(engine.step(&mut act, &mut NoHooks).unwrap(), Step::Continue);
    assert_eq!(engine.step(&mut act, &mut NoHooks).unwrap(), Step::Finished);
    assert!(!store.object(start).is_locked());
}
