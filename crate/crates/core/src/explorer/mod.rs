//! Bounded exhaustive exploration of interleavings.
//!
//! States are explored breadth first and deduplicated on the full heap and
//! activation stacks. Invariants are checked on every reachable state;
//! refinements are checked with a product construction in which every
//! concrete step must be matched by an abstract step with the same
//! observable label (or by a stutter, for action steps) ending in a pair
//! that satisfies the given relation.

pub mod machine;
pub mod prop;
pub mod specfile;

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::engine::Granularity;
use crate::frontend::ast;
use crate::frontend::{validate, ValidateOptions};
use crate::model::{compile, ClassId, ObjSnap, Program, Value};
use machine::{Machine, State};
use prop::Fields;
use specfile::{Invariant, Refinement, Spec};

#[derive(Clone, Debug)]
pub struct Options {
    pub max_states: usize,
    /// Interleave single instructions rather than atomic segments.
    pub fine: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            max_states: 100_000,
            fine: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CexKind {
    Invariant,
    PermanentBlock,
    Fault,
    Refinement,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub kind: CexKind,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum Verdict {
    /// Every reachable state was visited and the property held.
    Holds,
    /// The state bound was hit before the search finished; no violation was
    /// found among the states visited.
    BoundExhausted,
    Counterexample(Counterexample),
    Error {
        message: String,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub property: String,
    pub verdict: Verdict,
    pub states: usize,
    pub transitions: usize,
    pub depth: usize,
    pub elapsed_ms: u64,
    /// Steps from the initial state to the violating one.
    pub trace: Vec<String>,
    pub final_state: Option<String>,
}

impl Report {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "property: {}", self.property);
        let result = match &self.verdict {
            Verdict::Holds => "holds".to_string(),
            Verdict::BoundExhausted => "no violation within the state bound".to_string(),
            Verdict::Counterexample(c) => format!("counterexample ({:?}): {}", c.kind, c.message),
            Verdict::Error { message } => format!("error: {message}"),
        };
        let _ = writeln!(
            s,
            "result: {result} [{} states, {} transitions, depth {}, {} ms]",
            self.states, self.transitions, self.depth, self.elapsed_ms
        );
        for (i, step) in self.trace.iter().enumerate() {
            let _ = writeln!(s, "  {:>3}. {step}", i + 1);
        }
        if let Some(state) = &self.final_state {
            let _ = writeln!(s, "state:");
            for line in state.lines() {
                let _ = writeln!(s, "  {line}");
            }
        }
        s
    }

    pub fn is_counterexample(&self) -> bool {
        matches!(self.verdict, Verdict::Counterexample(_))
    }
}

struct ObjFields<'a> {
    program: &'a Program,
    obj: &'a ObjSnap,
}

impl Fields for ObjFields<'_> {
    fn get(&self, class: Option<&str>, field: &str) -> Option<Value> {
        let c = self.program.class(self.obj.class);
        if class.is_some_and(|q| q != c.name) {
            return None;
        }
        c.field_index(field).map(|i| self.obj.fields[i as usize])
    }
}

/// Search tree bookkeeping shared by both searches.
struct Tree<K> {
    index: HashMap<K, usize>,
    /// Parent and the label of the step that reached each node.
    parent: Vec<Option<(usize, String)>>,
    depth: Vec<usize>,
}

impl<K: std::hash::Hash + Eq + Clone> Tree<K> {
    fn new() -> Self {
        Tree {
            index: HashMap::new(),
            parent: Vec::new(),
            depth: Vec::new(),
        }
    }

    /// Returns the node id if `k` is new.
    fn add(&mut self, k: &K, parent: Option<(usize, String)>) -> Option<usize> {
        if self.index.contains_key(k) {
            return None;
        }
        let id = self.parent.len();
        let d = parent.as_ref().map_or(0, |(p, _)| self.depth[*p] + 1);
        self.index.insert(k.clone(), id);
        self.parent.push(parent);
        self.depth.push(d);
        Some(id)
    }

    fn trace(&self, mut at: usize, last: Option<String>) -> Vec<String> {
        let mut out: Vec<String> = last.into_iter().collect();
        while let Some((p, label)) = &self.parent[at] {
            out.push(label.clone());
            at = *p;
        }
        out.reverse();
        out
    }

    fn len(&self) -> usize {
        self.parent.len()
    }

    fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }
}

fn granularity(opts: &Options) -> Granularity {
    if opts.fine {
        Granularity::Instruction
    } else {
        Granularity::Segment
    }
}

fn violated_invariant(
    program: &Program,
    s: &State,
    invariants: &[(ClassId, &Invariant)],
) -> Option<String> {
    for (i, obj) in s.objects.iter().enumerate() {
        if obj.locked.is_some() {
            continue;
        }
        for (class, inv) in invariants {
            if obj.class != *class {
                continue;
            }
            match prop::holds(&inv.expr, &ObjFields { program, obj }) {
                Ok(true) => {}
                Ok(false) => {
                    return Some(format!("`{}` is false for {} #{i}", inv.text, inv.class))
                }
                Err(e) => {
                    return Some(format!(
                        "`{}` cannot be evaluated on {} #{i}: {e}",
                        inv.text, inv.class
                    ))
                }
            }
        }
    }
    None
}

/// Check every invariant (and deadlock freedom, if requested) from the
/// root class.
pub fn check_invariants(program: &Program, root: ClassId, spec: &Spec, opts: &Options) -> Report {
    let started = Instant::now();
    let machine = Machine::new(program, root, granularity(opts));
    let invariants: Vec<(ClassId, &Invariant)> = spec
        .invariants
        .iter()
        .filter_map(|inv| program.class_id(&inv.class).map(|c| (c, inv)))
        .collect();
    let mut names: Vec<String> = spec
        .invariants
        .iter()
        .map(|i| format!("invariant {}: {}", i.class, i.text))
        .collect();
    if spec.deadlock_free {
        names.push("deadlock-free".into());
    }
    let mut tree = Tree::new();
    let mut transitions = 0;
    let mut queue = VecDeque::new();
    let init = machine.initial();
    tree.add(&init, None);
    let finish = |tree: &Tree<State>, verdict, transitions, trace, state: Option<&State>| Report {
        property: names.join("; "),
        verdict,
        states: tree.len(),
        transitions,
        depth: tree.max_depth(),
        elapsed_ms: started.elapsed().as_millis() as u64,
        trace,
        final_state: state.map(|s| machine.render(s)),
    };
    let cex = |kind, message: String| Verdict::Counterexample(Counterexample { kind, message });
    if let Some(msg) = violated_invariant(program, &init, &invariants) {
        return finish(&tree, cex(CexKind::Invariant, msg), 0, vec![], Some(&init));
    }
    queue.push_back((0usize, init));
    let mut bounded = false;
    while let Some((id, s)) = queue.pop_front() {
        let succ = match machine.successors(&s) {
            Ok(v) => v,
            Err((label, fault)) => {
                let trace = tree.trace(id, Some(label.render()));
                return finish(
                    &tree,
                    cex(CexKind::Fault, fault.to_string()),
                    transitions,
                    trace,
                    Some(&s),
                );
            }
        };
        if succ.is_empty() && spec.deadlock_free && s.has_blocked() {
            let msg = format!("{} activation(s) can never proceed", s.acts.len());
            let trace = tree.trace(id, None);
            return finish(
                &tree,
                cex(CexKind::PermanentBlock, msg),
                transitions,
                trace,
                Some(&s),
            );
        }
        for (label, next) in succ {
            transitions += 1;
            if tree.len() >= opts.max_states {
                bounded = true;
                break;
            }
            let Some(nid) = tree.add(&next, Some((id, label.render()))) else {
                continue;
            };
            if let Some(msg) = violated_invariant(program, &next, &invariants) {
                let trace = tree.trace(nid, None);
                return finish(
                    &tree,
                    cex(CexKind::Invariant, msg),
                    transitions,
                    trace,
                    Some(&next),
                );
            }
            queue.push_back((nid, next));
        }
        if bounded {
            break;
        }
    }
    let verdict = if bounded {
        Verdict::BoundExhausted
    } else {
        Verdict::Holds
    };
    finish(&tree, verdict, transitions, vec![], None)
}

/// Driver class calling the observed methods on a fresh `target`.
fn driver_source(name: &str, target: &ast::ClassDecl, r: &Refinement, k: i64) -> String {
    let mut s = format!(
        "class {name}\n    var o: {}\n    init()\n        o := new {}()\n",
        target.name, target.name
    );
    for m in &r.observing {
        let decl = target
            .methods
            .iter()
            .find(|x| &x.name == m)
            .expect("checked");
        let args = if decl.params.is_empty() {
            String::new()
        } else {
            k.to_string()
        };
        let call = format!("o.{m}({args})");
        if decl.ret.is_some() {
            let _ = writeln!(s, "        print({call})");
        } else {
            let _ = writeln!(s, "        {call}");
        }
    }
    s
}

const ABSTRACT_DRIVER: &str = "RefinementAbstractDriver";
const CONCRETE_DRIVER: &str = "RefinementConcreteDriver";

struct Pair<'a> {
    program: &'a Program,
    conc: Option<&'a ObjSnap>,
    abs: Option<&'a ObjSnap>,
    conc_name: &'a str,
    abs_name: &'a str,
}

impl Fields for Pair<'_> {
    fn get(&self, class: Option<&str>, field: &str) -> Option<Value> {
        let look = |o: Option<&ObjSnap>| {
            o.and_then(|o| {
                let c = self.program.class(o.class);
                c.field_index(field).map(|i| o.fields[i as usize])
            })
        };
        match class {
            Some(q) if q == self.conc_name => look(self.conc),
            Some(q) if q == self.abs_name => look(self.abs),
            Some(_) => None,
            None => look(self.conc).or_else(|| look(self.abs)),
        }
    }
}

/// Check that `r.concrete_class` forward-simulates `r.abstract_class` under
/// the relation, for drivers calling the observed methods with each value.
pub fn check_refinement(program: &ast::Program, r: &Refinement, opts: &Options) -> Report {
    let started = Instant::now();
    let property = format!(
        "refine {} <= {} via {} observing {}",
        r.abstract_class,
        r.concrete_class,
        r.relation_text,
        r.observing.join(", ")
    );
    let mut states = 0;
    let mut transitions = 0;
    let mut depth = 0;
    let report = |verdict, states, transitions, depth, trace, final_state| Report {
        property: property.clone(),
        verdict,
        states,
        transitions,
        depth,
        elapsed_ms: started.elapsed().as_millis() as u64,
        trace,
        final_state,
    };
    for &k in &r.values {
        let mut ext = program.clone();
        let abs = program.class(&r.abstract_class).expect("checked");
        let conc = program.class(&r.concrete_class).expect("checked");
        let text = format!(
            "{}{}",
            driver_source(ABSTRACT_DRIVER, abs, r, k),
            driver_source(CONCRETE_DRIVER, conc, r, k)
        );
        let drivers = match crate::frontend::parse_source(&text) {
            Ok(p) => p,
            Err(d) => {
                return report(
                    Verdict::Error {
                        message: d.to_string(),
                    },
                    0,
                    0,
                    0,
                    vec![],
                    None,
                )
            }
        };
        ext.classes.extend(drivers.classes);
        if let Err(ds) = validate(&ext, ValidateOptions::default()) {
            let message = ds
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return report(Verdict::Error { message }, 0, 0, 0, vec![], None);
        }
        let compiled = compile(&ext);
        let id = |n: &str| compiled.class_id(n).expect("driver class");
        let am = Machine::new(&compiled, id(ABSTRACT_DRIVER), Granularity::Segment);
        let cm = Machine::new(&compiled, id(CONCRETE_DRIVER), Granularity::Segment);
        let (abs_id, conc_id) = (id(&r.abstract_class), id(&r.concrete_class));
        let related = |c: &State, a: &State| -> Result<bool, String> {
            let (co, ao) = (c.find(conc_id), a.find(abs_id));
            if co.is_none() || ao.is_none() {
                return Ok(co.is_none() && ao.is_none());
            }
            prop::holds(
                &r.relation,
                &Pair {
                    program: &compiled,
                    conc: co,
                    abs: ao,
                    conc_name: &r.concrete_class,
                    abs_name: &r.abstract_class,
                },
            )
        };
        let fail = |tree: &Tree<(State, State)>,
                    at: usize,
                    last: Option<String>,
                    kind,
                    message: String,
                    c: &State| {
            let message = format!("{message} (driver value {k})");
            (
                Verdict::Counterexample(Counterexample { kind, message }),
                tree.trace(at, last),
                Some(cm.render(c)),
            )
        };
        let mut tree: Tree<(State, State)> = Tree::new();
        let init = (cm.initial(), am.initial());
        match related(&init.0, &init.1) {
            Ok(true) => {}
            Ok(false) | Err(_) => {
                let (v, t, f) = fail(
                    &tree,
                    0,
                    None,
                    CexKind::Refinement,
                    "initial states are not related".into(),
                    &init.0,
                );
                return report(v, states, transitions, depth, t, f);
            }
        }
        tree.add(&init, None);
        let mut queue = VecDeque::from([(0usize, init)]);
        let mut bounded = false;
        let mut outcome = None;
        'search: while let Some((id, (c, a))) = queue.pop_front() {
            let csucc = match cm.successors(&c) {
                Ok(v) => v,
                Err((label, f)) => {
                    outcome = Some(fail(
                        &tree,
                        id,
                        Some(label.render()),
                        CexKind::Fault,
                        f.to_string(),
                        &c,
                    ));
                    break;
                }
            };
            let asucc = match am.successors(&a) {
                Ok(v) => v,
                Err((label, f)) => {
                    let msg = format!("abstract side faults: {f}");
                    outcome = Some(fail(
                        &tree,
                        id,
                        Some(label.render()),
                        CexKind::Fault,
                        msg,
                        &c,
                    ));
                    break;
                }
            };
            for (lc, c2) in csucc {
                transitions += 1;
                let mut candidates: Vec<&State> = Vec::new();
                if lc.internal {
                    candidates.push(&a);
                    candidates.extend(asucc.iter().filter(|(la, _)| la.internal).map(|(_, s)| s));
                } else {
                    candidates.extend(
                        asucc
                            .iter()
                            .filter(|(la, _)| la.matches(&lc))
                            .map(|(_, s)| s),
                    );
                }
                let mut matched = false;
                for a2 in candidates {
                    match related(&c2, a2) {
                        Ok(true) => {}
                        Ok(false) => continue,
                        Err(e) => {
                            outcome = Some(fail(
                                &tree,
                                id,
                                Some(lc.render()),
                                CexKind::Refinement,
                                e,
                                &c2,
                            ));
                            break 'search;
                        }
                    }
                    matched = true;
                    if tree.len() >= opts.max_states {
                        bounded = true;
                        break 'search;
                    }
                    let pair = (c2.clone(), a2.clone());
                    if let Some(nid) = tree.add(&pair, Some((id, lc.render()))) {
                        queue.push_back((nid, pair));
                    }
                }
                if !matched {
                    let what = if lc.internal { "action step" } else { "step" };
                    let msg = format!(
                        "concrete {what} `{}` has no abstract counterpart satisfying `{}`",
                        lc.render(),
                        r.relation_text
                    );
                    outcome = Some(fail(
                        &tree,
                        id,
                        Some(lc.render()),
                        CexKind::Refinement,
                        msg,
                        &c2,
                    ));
                    break 'search;
                }
            }
        }
        states += tree.len();
        depth = depth.max(tree.max_depth());
        if let Some((v, t, f)) = outcome {
            return report(v, states, transitions, depth, t, f);
        }
        if bounded {
            return report(
                Verdict::BoundExhausted,
                states,
                transitions,
                depth,
                vec![],
                None,
            );
        }
    }
    report(Verdict::Holds, states, transitions, depth, vec![], None)
}

/// Check every property in `spec`. Invariants and deadlock freedom share
/// one search; each refinement gets its own.
pub fn check(program: &ast::Program, spec: &Spec, opts: &Options) -> Vec<Report> {
    let mut out = Vec::new();
    if !spec.invariants.is_empty() || spec.deadlock_free {
        let compiled = compile(program);
        let root_name = spec.root.as_deref().unwrap_or("Start");
        match compiled.class_id(root_name) {
            Some(root) => out.push(check_invariants(&compiled, root, spec, opts)),
            None => out.push(Report {
                property: "invariants".into(),
                verdict: Verdict::Error {
                    message: format!("no root class `{root_name}`"),
                },
                states: 0,
                transitions: 0,
                depth: 0,
                elapsed_ms: 0,
                trace: vec![],
                final_state: None,
            }),
        }
    }
    for r in &spec.refinements {
        out.push(check_refinement(program, r, opts));
    }
    out
}

/// States reachable from `root`, without checking anything. Used to compare
/// segment and instruction granularity.
pub fn reachable(program: &Program, root: ClassId, opts: &Options) -> Result<Vec<State>, String> {
    let machine = Machine::new(program, root, granularity(opts));
    let mut seen = HashSet::new();
    let init = machine.initial();
    seen.insert(init.clone());
    let mut queue = VecDeque::from([init]);
    let mut out = Vec::new();
    while let Some(s) = queue.pop_front() {
        for (_, next) in machine.successors(&s).map_err(|(_, f)| f.to_string())? {
            if seen.len() >= opts.max_states {
                return Err("state bound reached".into());
            }
            if seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
