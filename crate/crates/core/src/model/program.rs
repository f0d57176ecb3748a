//! Compilation of a validated AST into guarded procedures.
//!
//! Every method, action and `init` becomes a [`Proc`]: an optional guard plus
//! a flat instruction list. Method calls and `new` of classes whose `init`
//! makes calls are the only cooperative instructions; they are hoisted out of
//! expressions into temporaries so that each one sits at a statement boundary.

use std::collections::HashMap;

use crate::frontend::ast::{self, BinOp, ExprKind, LValueKind, StmtKind, UnOp};
use crate::frontend::validate::{collect_locals, simple_inits, Scope, Ty};

use super::Value;

pub type ClassId = u32;

/// Compiled, side-effect-free expression (apart from inline `new`).
#[derive(Clone, Debug)]
pub enum Rv {
    Const(Value),
    Local(u32),
    Field(u32),
    This,
    Unary(UnOp, Box<Rv>),
    Binary(BinOp, Box<Rv>, Box<Rv>),
    /// `new C(args)` where `C`'s init makes no calls; runs to completion
    /// inside the enclosing atomic segment.
    NewInline {
        class: ClassId,
        args: Vec<Rv>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Place {
    Local(u32),
    Field(u32),
}

#[derive(Clone, Debug)]
pub enum Instr {
    Assign {
        targets: Vec<Place>,
        values: Vec<Rv>,
    },
    /// Evaluate for effect only (an inline `new` used as a statement).
    Eval(Rv),
    Call {
        dest: Option<Place>,
        recv: Rv,
        class: ClassId,
        method: u32,
        args: Vec<Rv>,
    },
    /// `new` of a class whose init makes calls: the init runs as a callee.
    New {
        dest: Option<Place>,
        class: ClassId,
        args: Vec<Rv>,
    },
    Jump(u32),
    JumpIfFalse(Rv, u32),
    Print(Rv),
    Return(Option<Rv>),
}

impl Instr {
    pub fn is_cooperative(&self) -> bool {
        matches!(self, Instr::Call { .. } | Instr::New { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProcKind {
    Init,
    Method,
    Action,
}

#[derive(Clone, Debug)]
pub struct Proc {
    pub name: String,
    pub kind: ProcKind,
    /// `None` for a literal-true guard.
    pub guard: Option<Rv>,
    pub code: Vec<Instr>,
    pub n_params: u32,
    /// Initial value of every slot past the parameters (locals and temps).
    pub local_defaults: Vec<Value>,
    pub returns_value: bool,
}

impl Proc {
    pub fn n_slots(&self) -> u32 {
        self.n_params + self.local_defaults.len() as u32
    }
}

#[derive(Clone, Debug)]
pub struct Class {
    pub name: String,
    pub fields: Vec<String>,
    pub field_defaults: Vec<Value>,
    pub procs: Vec<Proc>,
    pub init: Option<u32>,
    pub methods: HashMap<String, u32>,
    /// Proc indices of the actions, in declaration order.
    pub actions: Vec<u32>,
    /// The init runs without calls and can therefore be evaluated inline.
    pub simple_init: bool,
}

impl Class {
    pub fn has_actions(&self) -> bool {
        !self.actions.is_empty()
    }

    pub fn field_index(&self, name: &str) -> Option<u32> {
        self.fields.iter().position(|f| f == name).map(|i| i as u32)
    }
}

#[derive(Clone, Debug)]
pub struct Program {
    pub classes: Vec<Class>,
    pub by_name: HashMap<String, ClassId>,
}

impl Program {
    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.by_name.get(name).copied()
    }

    pub fn class(&self, id: ClassId) -> &Class {
        &self.classes[id as usize]
    }

    pub fn proc(&self, class: ClassId, proc: u32) -> &Proc {
        &self.classes[class as usize].procs[proc as usize]
    }

    pub fn start(&self) -> Option<ClassId> {
        self.class_id("Start")
    }
}

pub fn default_value(t: &ast::Type) -> Value {
    match t {
        ast::Type::Int => Value::Int(0),
        ast::Type::Bool => Value::Bool(false),
        ast::Type::Class(_) => Value::Nil,
    }
}

/// Compile a program that passed validation.
pub fn compile(program: &ast::Program) -> Program {
    let by_name: HashMap<String, ClassId> = program
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.clone(), i as ClassId))
        .collect();
    let simple = simple_inits(program);
    let mut classes = Vec::new();
    for decl in &program.classes {
        let mut class = Class {
            name: decl.name.clone(),
            fields: decl.fields.iter().map(|f| f.name.clone()).collect(),
            field_defaults: decl.fields.iter().map(|f| default_value(&f.ty)).collect(),
            procs: Vec::new(),
            init: None,
            methods: HashMap::new(),
            actions: Vec::new(),
            simple_init: simple.contains(&decl.name),
        };
        // Methods first so that call sites can refer to method indices
        // directly: method i is proc i.
        for m in &decl.methods {
            class
                .methods
                .insert(m.name.clone(), class.procs.len() as u32);
            let ctx = Ctx::new(program, decl, &by_name, &simple, &m.params, &m.body);
            class.procs.push(ctx.finish(
                &m.name,
                ProcKind::Method,
                Some(&m.guard),
                &m.body,
                m.ret.is_some(),
            ));
        }
        for a in &decl.actions {
            class.actions.push(class.procs.len() as u32);
            let ctx = Ctx::new(program, decl, &by_name, &simple, &[], &a.body);
            class
                .procs
                .push(ctx.finish(&a.name, ProcKind::Action, Some(&a.guard), &a.body, false));
        }
        if let Some(init) = &decl.init {
            class.init = Some(class.procs.len() as u32);
            let ctx = Ctx::new(program, decl, &by_name, &simple, &init.params, &init.body);
            class
                .procs
                .push(ctx.finish("init", ProcKind::Init, None, &init.body, false));
        }
        classes.push(class);
    }
    Program { classes, by_name }
}

struct Ctx<'p> {
    scope: Scope<'p>,
    by_name: &'p HashMap<String, ClassId>,
    slots: HashMap<String, u32>,
    n_params: u32,
    local_defaults: Vec<Value>,
    code: Vec<Instr>,
}

impl<'p> Ctx<'p> {
    fn new(
        program: &'p ast::Program,
        class: &'p ast::ClassDecl,
        by_name: &'p HashMap<String, ClassId>,
        simple: &'p std::collections::HashSet<String>,
        params: &[ast::VarDecl],
        body: &[ast::Stmt],
    ) -> Self {
        let mut ignored = Vec::new();
        let vars = collect_locals(params, body, &mut ignored);
        let slots = vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.clone(), i as u32))
            .collect();
        let local_defaults = vars[params.len()..]
            .iter()
            .map(|v| default_value(&v.ty))
            .collect();
        Ctx {
            scope: Scope {
                program,
                class,
                locals: vars
                    .iter()
                    .map(|v| (v.name.clone(), Ty::of(&v.ty)))
                    .collect(),
                simple_inits: simple,
            },
            by_name,
            slots,
            n_params: params.len() as u32,
            local_defaults,
            code: Vec::new(),
        }
    }

    fn finish(
        mut self,
        name: &str,
        kind: ProcKind,
        guard: Option<&ast::Expr>,
        body: &[ast::Stmt],
        returns_value: bool,
    ) -> Proc {
        let guard = guard.filter(|g| !g.is_literal_true()).map(|g| self.rv(g));
        self.block(body);
        Proc {
            name: name.to_string(),
            kind,
            guard,
            code: self.code,
            n_params: self.n_params,
            local_defaults: self.local_defaults,
            returns_value,
        }
    }

    fn temp(&mut self, v: Value) -> u32 {
        self.local_defaults.push(v);
        self.n_params + self.local_defaults.len() as u32 - 1
    }

    fn here(&self) -> u32 {
        self.code.len() as u32
    }

    fn patch(&mut self, at: u32, target: u32) {
        match &mut self.code[at as usize] {
            Instr::Jump(t) | Instr::JumpIfFalse(_, t) => *t = target,
            _ => unreachable!("patching a non-jump"),
        }
    }

    fn block(&mut self, body: &[ast::Stmt]) {
        for s in body {
            self.stmt(s);
        }
    }

    fn place(&self, lv: &ast::LValue) -> Place {
        match &lv.kind {
            LValueKind::Name(n) => match self.slots.get(n) {
                Some(&s) => Place::Local(s),
                None => Place::Field(self.field(n)),
            },
            LValueKind::ThisField(n) => Place::Field(self.field(n)),
        }
    }

    fn field(&self, name: &str) -> u32 {
        self.scope
            .class
            .fields
            .iter()
            .position(|f| f.name == name)
            .unwrap_or_else(|| panic!("unresolved field `{name}` in validated program"))
            as u32
    }

    fn stmt(&mut self, s: &ast::Stmt) {
        match &s.kind {
            StmtKind::Local(decls) => {
                let targets = decls
                    .iter()
                    .map(|d| Place::Local(self.slots[&d.name]))
                    .collect();
                let values = decls
                    .iter()
                    .map(|d| Rv::Const(default_value(&d.ty)))
                    .collect();
                self.code.push(Instr::Assign { targets, values });
            }
            StmtKind::Assign { targets, values } => {
                if targets.len() == 1 && self.scope.is_cooperative(&values[0]) {
                    let dest = Some(self.place(&targets[0]));
                    self.cooperative(&values[0], dest);
                    return;
                }
                let values = values.iter().map(|v| self.operand(v)).collect();
                let targets = targets.iter().map(|t| self.place(t)).collect();
                self.code.push(Instr::Assign { targets, values });
            }
            StmtKind::Expr(e) => {
                if self.scope.is_cooperative(e) {
                    self.cooperative(e, None);
                } else {
                    let rv = self.rv(e);
                    self.code.push(Instr::Eval(rv));
                }
            }
            StmtKind::If {
                branches,
                otherwise,
            } => {
                let mut exits = Vec::new();
                for (cond, body) in branches {
                    let c = self.operand(cond);
                    let skip = self.here();
                    self.code.push(Instr::JumpIfFalse(c, 0));
                    self.block(body);
                    exits.push(self.here());
                    self.code.push(Instr::Jump(0));
                    let next = self.here();
                    self.patch(skip, next);
                }
                if let Some(body) = otherwise {
                    self.block(body);
                }
                let end = self.here();
                for e in exits {
                    self.patch(e, end);
                }
            }
            StmtKind::While { cond, body } => {
                let top = self.here();
                let c = self.operand(cond);
                let exit = self.here();
                self.code.push(Instr::JumpIfFalse(c, 0));
                self.block(body);
                self.code.push(Instr::Jump(top));
                let end = self.here();
                self.patch(exit, end);
            }
            StmtKind::Return(value) => {
                let v = value.as_ref().map(|v| self.operand(v));
                self.code.push(Instr::Return(v));
            }
            StmtKind::Print(e) => {
                let v = self.operand(e);
                self.code.push(Instr::Print(v));
            }
        }
    }

    /// Compile `e`, first hoisting it into a temporary if it is cooperative.
    fn operand(&mut self, e: &ast::Expr) -> Rv {
        if self.scope.is_cooperative(e) {
            let ty = self.scope.type_of(e).expect("validated");
            let default = match ty {
                Ty::Int => Value::Int(0),
                Ty::Bool => Value::Bool(false),
                _ => Value::Nil,
            };
            let t = self.temp(default);
            self.cooperative(e, Some(Place::Local(t)));
            Rv::Local(t)
        } else {
            self.rv(e)
        }
    }

    fn cooperative(&mut self, e: &ast::Expr, dest: Option<Place>) {
        match &e.kind {
            ExprKind::Call { recv, method, args } => {
                let (class, _) = self
                    .scope
                    .resolve_call(recv, method, e.pos)
                    .expect("validated");
                let class_id = self.by_name[&class.name];
                let method_idx = class
                    .methods
                    .iter()
                    .position(|m| &m.name == method)
                    .expect("validated") as u32;
                let recv = self.rv(recv);
                let args = args.iter().map(|a| self.rv(a)).collect();
                self.code.push(Instr::Call {
                    dest,
                    recv,
                    class: class_id,
                    method: method_idx,
                    args,
                });
            }
            ExprKind::New { class, args } => {
                let args = args.iter().map(|a| self.rv(a)).collect();
                self.code.push(Instr::New {
                    dest,
                    class: self.by_name[class],
                    args,
                });
            }
            _ => unreachable!("not cooperative"),
        }
    }

    fn rv(&self, e: &ast::Expr) -> Rv {
        match &e.kind {
            ExprKind::Int(v) => Rv::Const(Value::Int(*v)),
            ExprKind::Bool(b) => Rv::Const(Value::Bool(*b)),
            ExprKind::Nil => Rv::Const(Value::Nil),
            ExprKind::This => Rv::This,
            ExprKind::Name(n) => match self.slots.get(n) {
                Some(&s) => Rv::Local(s),
                None => Rv::Field(self.field(n)),
            },
            ExprKind::ThisField(n) => Rv::Field(self.field(n)),
            ExprKind::Unary(op, x) => Rv::Unary(*op, Box::new(self.rv(x))),
            ExprKind::Binary(op, a, b) => {
                Rv::Binary(*op, Box::new(self.rv(a)), Box::new(self.rv(b)))
            }
            ExprKind::New { class, args } => Rv::NewInline {
                class: self.by_name[class],
                args: args.iter().map(|a| self.rv(a)).collect(),
            },
            ExprKind::Call { .. } => unreachable!("calls are hoisted"),
            ExprKind::Qualified(..) => unreachable!("rejected by validation"),
        }
    }
}
