//! Syntax tree for the Lime subset.
//!
//! Positions are carried on every node for diagnostics but never take part
//! in equality, so two trees that differ only in layout compare equal.

use std::fmt;

/// 1-based source position.
#[derive(Clone, Copy, Debug, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Self {
        Pos { line, col }
    }
}

impl PartialEq for Pos {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Pos {}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Type {
    Int,
    Bool,
    Class(String),
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => f.write_str("int"),
            Type::Bool => f.write_str("bool"),
            Type::Class(name) => f.write_str(name),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub classes: Vec<ClassDecl>,
}

impl Program {
    pub fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn class_mut(&mut self, name: &str) -> Option<&mut ClassDecl> {
        self.classes.iter_mut().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: String,
    pub fields: Vec<VarDecl>,
    /// `None` when the class declares no `init`; fields then start at their
    /// type's default value.
    pub init: Option<InitDecl>,
    pub methods: Vec<MethodDecl>,
    pub actions: Vec<ActionDecl>,
    pub pos: Pos,
}

impl ClassDecl {
    pub fn field(&self, name: &str) -> Option<&VarDecl> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn method(&self, name: &str) -> Option<&MethodDecl> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// A field, parameter or local declaration of a single name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub ty: Type,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InitDecl {
    pub params: Vec<VarDecl>,
    pub body: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodDecl {
    pub name: String,
    pub params: Vec<VarDecl>,
    pub ret: Option<Type>,
    /// Literal `true` when the body carries no `when` clause.
    pub guard: Expr,
    pub body: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionDecl {
    pub name: String,
    pub guard: Expr,
    pub body: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    /// `var a, b: T` inside a body.
    Local(Vec<VarDecl>),
    /// `a, b := e1, e2`; all right-hand sides are evaluated before any store.
    Assign {
        targets: Vec<LValue>,
        values: Vec<Expr>,
    },
    /// A call or `new` evaluated for its effect.
    Expr(Expr),
    If {
        branches: Vec<(Expr, Vec<Stmt>)>,
        otherwise: Option<Vec<Stmt>>,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
    },
    Return(Option<Expr>),
    Print(Expr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LValue {
    pub kind: LValueKind,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LValueKind {
    /// A local, parameter or (implicitly `this.`) field.
    Name(String),
    /// Explicit `this.f`.
    ThisField(String),
}

impl LValue {
    pub fn name(&self) -> &str {
        match &self.kind {
            LValueKind::Name(n) | LValueKind::ThisField(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Implies,
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Mod,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Implies => "=>",
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Mod => "mod",
        }
    }

    /// Binding strength; higher binds tighter. `not` sits between `and` and
    /// the comparisons.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Implies => 1,
            BinOp::Or => 2,
            BinOp::And => 3,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 5,
            BinOp::Add | BinOp::Sub => 6,
            BinOp::Mul | BinOp::Mod => 7,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 5
    }
}

pub const NOT_PRECEDENCE: u8 = 4;
pub const NEG_PRECEDENCE: u8 = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    Nil,
    This,
    /// A local, parameter or (implicitly `this.`) field.
    Name(String),
    ThisField(String),
    /// `Class.field`; only produced when parsing explorer property files.
    Qualified(String, String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call {
        recv: Box<Expr>,
        method: String,
        args: Vec<Expr>,
    },
    New {
        class: String,
        args: Vec<Expr>,
    },
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Expr { kind, pos }
    }

    pub fn truth() -> Self {
        Expr::new(ExprKind::Bool(true), Pos::default())
    }

    pub fn is_literal_true(&self) -> bool {
        matches!(self.kind, ExprKind::Bool(true))
    }

    /// Visit this expression and every sub-expression, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Unary(_, e) => e.walk(f),
            ExprKind::Binary(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::Call { recv, args, .. } => {
                recv.walk(f);
                args.iter().for_each(|a| a.walk(f));
            }
            ExprKind::New { args, .. } => args.iter().for_each(|a| a.walk(f)),
            _ => {}
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        f(self);
        match &mut self.kind {
            ExprKind::Unary(_, e) => e.walk_mut(f),
            ExprKind::Binary(_, a, b) => {
                a.walk_mut(f);
                b.walk_mut(f);
            }
            ExprKind::Call { recv, args, .. } => {
                recv.walk_mut(f);
                args.iter_mut().for_each(|a| a.walk_mut(f));
            }
            ExprKind::New { args, .. } => args.iter_mut().for_each(|a| a.walk_mut(f)),
            _ => {}
        }
    }
}

/// Visit every statement of a body (nested blocks included), pre-order.
pub fn walk_stmts<'a>(body: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in body {
        f(s);
        match &s.kind {
            StmtKind::If {
                branches,
                otherwise,
            } => {
                for (_, b) in branches {
                    walk_stmts(b, f);
                }
                if let Some(b) = otherwise {
                    walk_stmts(b, f);
                }
            }
            StmtKind::While { body, .. } => walk_stmts(body, f),
            _ => {}
        }
    }
}

pub fn walk_stmts_mut(body: &mut [Stmt], f: &mut dyn FnMut(&mut Stmt)) {
    for s in body {
        f(s);
        match &mut s.kind {
            StmtKind::If {
                branches,
                otherwise,
            } => {
                for (_, b) in branches {
                    walk_stmts_mut(b, f);
                }
                if let Some(b) = otherwise {
                    walk_stmts_mut(b, f);
                }
            }
            StmtKind::While { body, .. } => walk_stmts_mut(body, f),
            _ => {}
        }
    }
}

impl Stmt {
    /// Expressions appearing directly in this statement (not in nested blocks).
    pub fn exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::Local(_) => vec![],
            StmtKind::Assign { values, .. } => values.iter().collect(),
            StmtKind::Expr(e) | StmtKind::Print(e) => vec![e],
            StmtKind::If { branches, .. } => branches.iter().map(|(c, _)| c).collect(),
            StmtKind::While { cond, .. } => vec![cond],
            StmtKind::Return(e) => e.iter().collect(),
        }
    }
}
