//! Name resolution, type checking and the guard restriction.

use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::Diagnostic;

/// Static type of an expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Ty {
    Int,
    Bool,
    Ref(String),
    Nil,
    /// Result of a method without return type.
    Void,
}

impl Ty {
    pub fn of(t: &Type) -> Ty {
        match t {
            Type::Int => Ty::Int,
            Type::Bool => Ty::Bool,
            Type::Class(c) => Ty::Ref(c.clone()),
        }
    }

    fn describe(&self) -> String {
        match self {
            Ty::Int => "int".into(),
            Ty::Bool => "bool".into(),
            Ty::Ref(c) => c.clone(),
            Ty::Nil => "nil".into(),
            Ty::Void => "no value".into(),
        }
    }

    fn is_ref(&self) -> bool {
        matches!(self, Ty::Ref(_) | Ty::Nil)
    }
}

/// `value` may be stored where `slot` is expected.
pub fn assignable(slot: &Ty, value: &Ty) -> bool {
    match (slot, value) {
        (Ty::Ref(_), Ty::Nil) => true,
        (a, b) => a == b,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProcKind {
    Init,
    Method,
    Action,
}

/// Names visible inside one init/method/action body.
pub struct Scope<'p> {
    pub program: &'p Program,
    pub class: &'p ClassDecl,
    pub locals: HashMap<String, Ty>,
    /// Classes whose `init` runs without method calls (and may therefore be
    /// evaluated inside an expression).
    pub simple_inits: &'p HashSet<String>,
}

impl<'p> Scope<'p> {
    pub fn type_of(&self, e: &Expr) -> Result<Ty, Diagnostic> {
        let err = |msg: String| Err(Diagnostic::new(e.pos, msg));
        match &e.kind {
            ExprKind::Int(_) => Ok(Ty::Int),
            ExprKind::Bool(_) => Ok(Ty::Bool),
            ExprKind::Nil => Ok(Ty::Nil),
            ExprKind::This => Ok(Ty::Ref(self.class.name.clone())),
            ExprKind::Name(n) => {
                if let Some(t) = self.locals.get(n) {
                    Ok(t.clone())
                } else if let Some(f) = self.class.field(n) {
                    Ok(Ty::of(&f.ty))
                } else {
                    err(format!("unknown name `{n}`"))
                }
            }
            ExprKind::ThisField(n) => match self.class.field(n) {
                Some(f) => Ok(Ty::of(&f.ty)),
                None => err(format!("class {} has no field `{n}`", self.class.name)),
            },
            ExprKind::Qualified(c, f) => err(format!(
                "`{c}.{f}`: qualified names are only available in property files"
            )),
            ExprKind::Unary(op, x) => {
                let t = self.type_of(x)?;
                let want = match op {
                    UnOp::Not => Ty::Bool,
                    UnOp::Neg => Ty::Int,
                };
                if t != want {
                    return err(format!(
                        "operand of {} must be {}, found {}",
                        if *op == UnOp::Not { "`not`" } else { "`-`" },
                        want.describe(),
                        t.describe()
                    ));
                }
                Ok(want)
            }
            ExprKind::Binary(op, a, b) => {
                let ta = self.type_of(a)?;
                let tb = self.type_of(b)?;
                self.binary_type(*op, &ta, &tb, e.pos)
            }
            ExprKind::Call { recv, method, args } => {
                let (class, m) = self.resolve_call(recv, method, e.pos)?;
                if args.len() != m.params.len() {
                    return err(format!(
                        "{}.{} expects {} argument(s), found {}",
                        class.name,
                        method,
                        m.params.len(),
                        args.len()
                    ));
                }
                for (a, p) in args.iter().zip(&m.params) {
                    let t = self.type_of(a)?;
                    if !assignable(&Ty::of(&p.ty), &t) {
                        return Err(Diagnostic::new(
                            a.pos,
                            format!(
                                "argument `{}` of {}.{} expects {}, found {}",
                                p.name,
                                class.name,
                                method,
                                p.ty,
                                t.describe()
                            ),
                        ));
                    }
                }
                Ok(m.ret.as_ref().map(Ty::of).unwrap_or(Ty::Void))
            }
            ExprKind::New { class, args } => {
                let Some(decl) = self.program.class(class) else {
                    return err(format!("unknown class `{class}`"));
                };
                let params: &[VarDecl] = decl.init.as_ref().map(|i| &i.params[..]).unwrap_or(&[]);
                if args.len() != params.len() {
                    return err(format!(
                        "new {class} expects {} argument(s), found {}",
                        params.len(),
                        args.len()
                    ));
                }
                for (a, p) in args.iter().zip(params) {
                    let t = self.type_of(a)?;
                    if !assignable(&Ty::of(&p.ty), &t) {
                        return Err(Diagnostic::new(
                            a.pos,
                            format!(
                                "argument `{}` of new {class} expects {}, found {}",
                                p.name,
                                p.ty,
                                t.describe()
                            ),
                        ));
                    }
                }
                Ok(Ty::Ref(class.clone()))
            }
        }
    }

    fn binary_type(&self, op: BinOp, ta: &Ty, tb: &Ty, pos: Pos) -> Result<Ty, Diagnostic> {
        let mismatch = || {
            Err(Diagnostic::new(
                pos,
                format!(
                    "operator `{}` cannot combine {} and {}",
                    op.symbol(),
                    ta.describe(),
                    tb.describe()
                ),
            ))
        };
        match op {
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Mod => {
                if *ta == Ty::Int && *tb == Ty::Int {
                    Ok(Ty::Int)
                } else {
                    mismatch()
                }
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                if *ta == Ty::Int && *tb == Ty::Int {
                    Ok(Ty::Bool)
                } else {
                    mismatch()
                }
            }
            BinOp::Eq | BinOp::Ne => {
                let ok = match (ta, tb) {
                    (Ty::Nil, t) | (t, Ty::Nil) => t.is_ref(),
                    (Ty::Void, _) | (_, Ty::Void) => false,
                    (a, b) => a == b,
                };
                if ok {
                    Ok(Ty::Bool)
                } else {
                    mismatch()
                }
            }
            BinOp::And | BinOp::Or | BinOp::Implies => {
                if *ta == Ty::Bool && *tb == Ty::Bool {
                    Ok(Ty::Bool)
                } else {
                    mismatch()
                }
            }
        }
    }

    pub fn resolve_call(
        &self,
        recv: &Expr,
        method: &str,
        pos: Pos,
    ) -> Result<(&'p ClassDecl, &'p MethodDecl), Diagnostic> {
        let class_name = match self.type_of(recv)? {
            Ty::Ref(c) => c,
            Ty::Nil => return Err(Diagnostic::new(pos, "method call on `nil`")),
            other => {
                return Err(Diagnostic::new(
                    pos,
                    format!("method call on a value of type {}", other.describe()),
                ))
            }
        };
        let Some(class) = self.program.class(&class_name) else {
            return Err(Diagnostic::new(
                pos,
                format!("unknown class `{class_name}`"),
            ));
        };
        match class.method(method) {
            Some(m) => Ok((class, m)),
            None if class.actions.iter().any(|a| a.name == method) => Err(Diagnostic::new(
                pos,
                format!("`{method}` is an action of {class_name}; actions cannot be called"),
            )),
            None => Err(Diagnostic::new(
                pos,
                format!("class {class_name} has no method `{method}`"),
            )),
        }
    }

    /// Target type of an assignment, if it resolves.
    pub fn lvalue_type(&self, lv: &LValue) -> Result<Ty, Diagnostic> {
        match &lv.kind {
            LValueKind::Name(n) => {
                if let Some(t) = self.locals.get(n) {
                    Ok(t.clone())
                } else if let Some(f) = self.class.field(n) {
                    Ok(Ty::of(&f.ty))
                } else {
                    Err(Diagnostic::new(lv.pos, format!("unknown name `{n}`")))
                }
            }
            LValueKind::ThisField(n) => match self.class.field(n) {
                Some(f) => Ok(Ty::of(&f.ty)),
                None => Err(Diagnostic::new(
                    lv.pos,
                    format!("class {} has no field `{n}`", self.class.name),
                )),
            },
        }
    }

    /// `true` if evaluating `e` cooperates with the scheduler, i.e. it is a
    /// method call or a `new` whose `init` itself makes calls.
    pub fn is_cooperative(&self, e: &Expr) -> bool {
        match &e.kind {
            ExprKind::Call { .. } => true,
            ExprKind::New { class, .. } => !self.simple_inits.contains(class),
            _ => false,
        }
    }
}

/// Classes whose `init` performs no method calls, directly or through nested
/// `new` of other such classes.
pub fn simple_inits(program: &Program) -> HashSet<String> {
    let mut simple: HashSet<String> = program.classes.iter().map(|c| c.name.clone()).collect();
    loop {
        let mut changed = false;
        for class in &program.classes {
            if !simple.contains(&class.name) {
                continue;
            }
            let Some(init) = &class.init else { continue };
            let mut ok = true;
            walk_stmts(&init.body, &mut |s| {
                for e in s.exprs() {
                    e.walk(&mut |x| match &x.kind {
                        ExprKind::Call { .. } => ok = false,
                        ExprKind::New { class, .. } if !simple.contains(class) => ok = false,
                        _ => {}
                    });
                }
            });
            if !ok {
                simple.remove(&class.name);
                changed = true;
            }
        }
        if !changed {
            return simple;
        }
    }
}

/// Parameters and declared locals of a body, in slot order.
pub fn collect_locals(
    params: &[VarDecl],
    body: &[Stmt],
    diags: &mut Vec<Diagnostic>,
) -> Vec<VarDecl> {
    let mut out: Vec<VarDecl> = Vec::new();
    let mut seen = HashSet::new();
    for p in params {
        if !seen.insert(p.name.clone()) {
            diags.push(Diagnostic::new(
                p.pos,
                format!("duplicate parameter `{}`", p.name),
            ));
        }
        out.push(p.clone());
    }
    walk_stmts(body, &mut |s| {
        if let StmtKind::Local(decls) = &s.kind {
            for d in decls {
                if !seen.insert(d.name.clone()) {
                    diags.push(Diagnostic::new(
                        d.pos,
                        format!("`{}` is already declared in this body", d.name),
                    ));
                } else {
                    out.push(d.clone());
                }
            }
        }
    });
    out
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ValidateOptions {
    /// Require a class named `Start` (needed to run the program).
    pub require_start: bool,
}

/// Check `program`, collecting every diagnostic rather than stopping at the
/// first one.
pub fn validate(program: &Program, opts: ValidateOptions) -> Result<(), Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut names = HashSet::new();
    for c in &program.classes {
        if !names.insert(c.name.as_str()) {
            diags.push(Diagnostic::new(
                c.pos,
                format!("duplicate class `{}`", c.name),
            ));
        }
    }
    if opts.require_start && program.class("Start").is_none() {
        diags.push(Diagnostic::new(Pos::new(1, 1), "no Start class"));
    }
    let simple = simple_inits(program);
    for class in &program.classes {
        check_class(program, class, &simple, &mut diags);
    }
    if diags.is_empty() {
        Ok(())
    } else {
        diags.sort_by_key(|d| (d.pos.line, d.pos.col));
        Err(diags)
    }
}

fn check_type(program: &Program, t: &Type, pos: Pos, diags: &mut Vec<Diagnostic>) {
    if let Type::Class(c) = t {
        if program.class(c).is_none() {
            diags.push(Diagnostic::new(pos, format!("unknown class `{c}`")));
        }
    }
}

fn check_class(
    program: &Program,
    class: &ClassDecl,
    simple: &HashSet<String>,
    diags: &mut Vec<Diagnostic>,
) {
    let mut fields = HashSet::new();
    for f in &class.fields {
        if !fields.insert(f.name.as_str()) {
            diags.push(Diagnostic::new(
                f.pos,
                format!("duplicate field `{}`", f.name),
            ));
        }
        check_type(program, &f.ty, f.pos, diags);
    }
    let mut members = HashSet::new();
    for (name, pos) in class
        .methods
        .iter()
        .map(|m| (&m.name, m.pos))
        .chain(class.actions.iter().map(|a| (&a.name, a.pos)))
    {
        if !members.insert(name.as_str()) {
            diags.push(Diagnostic::new(
                pos,
                format!(
                    "duplicate method or action `{name}` in class {}",
                    class.name
                ),
            ));
        }
    }

    if let Some(init) = &class.init {
        check_body(
            program,
            class,
            simple,
            ProcKind::Init,
            &init.params,
            None,
            None,
            &init.body,
            diags,
        );
    }
    for m in &class.methods {
        if let Some(ret) = &m.ret {
            check_type(program, ret, m.pos, diags);
        }
        check_body(
            program,
            class,
            simple,
            ProcKind::Method,
            &m.params,
            m.ret.as_ref(),
            Some(&m.guard),
            &m.body,
            diags,
        );
        if m.ret.is_some() && !always_returns(&m.body) {
            diags.push(Diagnostic::new(
                m.pos,
                format!("method `{}` can finish without returning a value", m.name),
            ));
        }
    }
    for a in &class.actions {
        check_body(
            program,
            class,
            simple,
            ProcKind::Action,
            &[],
            None,
            Some(&a.guard),
            &a.body,
            diags,
        );
    }
}

/// Guards may read only the object's own fields and literals.
pub fn check_guard(class: &ClassDecl, guard: &Expr, diags: &mut Vec<Diagnostic>) {
    guard.walk(&mut |e| {
        let msg = match &e.kind {
            ExprKind::Name(n) if class.field(n).is_none() => {
                Some(format!("guard references non-field `{n}`"))
            }
            ExprKind::Call { .. } => Some("guard contains a method call".to_string()),
            ExprKind::New { .. } => Some("guard creates an object".to_string()),
            ExprKind::This => Some("guard references `this` as a value".to_string()),
            _ => None,
        };
        if let Some(m) = msg {
            diags.push(Diagnostic::new(e.pos, m));
        }
    });
}

#[allow(clippy::too_many_arguments)]
fn check_body(
    program: &Program,
    class: &ClassDecl,
    simple: &HashSet<String>,
    kind: ProcKind,
    params: &[VarDecl],
    ret: Option<&Type>,
    guard: Option<&Expr>,
    body: &[Stmt],
    diags: &mut Vec<Diagnostic>,
) {
    for p in params {
        check_type(program, &p.ty, p.pos, diags);
    }
    let locals = collect_locals(params, body, diags);
    for l in &locals[params.len()..] {
        check_type(program, &l.ty, l.pos, diags);
    }
    let scope = Scope {
        program,
        class,
        locals: locals
            .iter()
            .map(|l| (l.name.clone(), Ty::of(&l.ty)))
            .collect(),
        simple_inits: simple,
    };
    if let Some(g) = guard {
        let before = diags.len();
        check_guard(class, g, diags);
        if diags.len() == before {
            // Type-check against fields only.
            let field_scope = Scope {
                program,
                class,
                locals: HashMap::new(),
                simple_inits: simple,
            };
            match field_scope.type_of(g) {
                Ok(Ty::Bool) => {}
                Ok(t) => diags.push(Diagnostic::new(
                    g.pos,
                    format!("guard must be bool, found {}", t.describe()),
                )),
                Err(d) => diags.push(d),
            }
        }
    }
    let ret_ty = ret.map(Ty::of);
    walk_stmts(body, &mut |s| {
        check_stmt(&scope, kind, ret_ty.as_ref(), s, diags)
    });
}

fn whole_expr(scope: &Scope, e: &Expr, diags: &mut Vec<Diagnostic>) {
    // The root may be a call; nothing beneath it may.
    let mut first = true;
    e.walk(&mut |x| {
        if first {
            first = false;
            return;
        }
        if scope.is_cooperative(x) {
            diags.push(Diagnostic::new(
                x.pos,
                "a method call must be a whole expression: a statement, an assigned value, a condition, a returned or printed value",
            ));
        }
    });
}

fn expect_type(scope: &Scope, e: &Expr, want: &Ty, what: &str, diags: &mut Vec<Diagnostic>) {
    match scope.type_of(e) {
        Ok(t) if assignable(want, &t) => {}
        Ok(t) => diags.push(Diagnostic::new(
            e.pos,
            format!("{what} must be {}, found {}", want.describe(), t.describe()),
        )),
        Err(d) => diags.push(d),
    }
}

fn check_stmt(
    scope: &Scope,
    kind: ProcKind,
    ret: Option<&Ty>,
    s: &Stmt,
    diags: &mut Vec<Diagnostic>,
) {
    for e in s.exprs() {
        whole_expr(scope, e, diags);
    }
    match &s.kind {
        StmtKind::Local(_) => {}
        StmtKind::Assign { targets, values } => {
            if targets.len() != values.len() {
                diags.push(Diagnostic::new(
                    s.pos,
                    format!(
                        "assignment has {} target(s) but {} value(s)",
                        targets.len(),
                        values.len()
                    ),
                ));
                return;
            }
            let mut seen = HashSet::new();
            for (t, v) in targets.iter().zip(values) {
                if !seen.insert(t.name()) {
                    diags.push(Diagnostic::new(
                        t.pos,
                        format!("`{}` is assigned twice in one statement", t.name()),
                    ));
                }
                match scope.lvalue_type(t) {
                    Ok(want) => expect_type(scope, v, &want, "assigned value", diags),
                    Err(d) => diags.push(d),
                }
            }
        }
        StmtKind::Expr(e) => {
            if let Err(d) = scope.type_of(e) {
                diags.push(d);
            }
        }
        StmtKind::If { branches, .. } => {
            for (c, _) in branches {
                expect_type(scope, c, &Ty::Bool, "condition", diags);
            }
        }
        StmtKind::While { cond, .. } => expect_type(scope, cond, &Ty::Bool, "condition", diags),
        StmtKind::Return(value) => match (kind, ret, value) {
            (ProcKind::Method, Some(want), Some(v)) => {
                expect_type(scope, v, want, "returned value", diags)
            }
            (ProcKind::Method, Some(want), None) => diags.push(Diagnostic::new(
                s.pos,
                format!("`return` needs a value of type {}", want.describe()),
            )),
            (_, _, Some(v)) => diags.push(Diagnostic::new(
                v.pos,
                match kind {
                    ProcKind::Method => "method has no return type; `return` takes no value",
                    ProcKind::Action => "actions cannot return a value",
                    ProcKind::Init => "`init` cannot return a value",
                },
            )),
            _ => {}
        },
        StmtKind::Print(e) => match scope.type_of(e) {
            Ok(Ty::Int) | Ok(Ty::Bool) => {}
            Ok(t) => diags.push(Diagnostic::new(
                e.pos,
                format!("print takes an int or bool, found {}", t.describe()),
            )),
            Err(d) => diags.push(d),
        },
    }
}

/// Conservative: every path through `body` ends in `return`.
pub fn always_returns(body: &[Stmt]) -> bool {
    match body.last().map(|s| &s.kind) {
        Some(StmtKind::Return(_)) => true,
        Some(StmtKind::If {
            branches,
            otherwise: Some(other),
        }) => branches.iter().all(|(_, b)| always_returns(b)) && always_returns(other),
        _ => false,
    }
}
