//! Recursive-descent parser over the token stream.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::Diagnostic;

pub fn parse(tokens: &[Token]) -> Result<Program, Diagnostic> {
    let mut p = Parser::new(tokens, false);
    let mut classes = Vec::new();
    while !p.at_end() {
        classes.push(p.class()?);
    }
    Ok(Program { classes })
}

/// Parse a standalone expression, e.g. an invariant from a property file.
/// `qualified` enables `Class.field` names and is meant for property files only.
pub fn parse_expr_text(text: &str, qualified: bool) -> Result<Expr, Diagnostic> {
    let tokens = tokenize(text)?;
    let mut p = Parser::new(&tokens, qualified);
    let e = p.expr()?;
    p.eat(&Tok::Newline);
    if let Some(t) = p.peek_token() {
        return Err(Diagnostic::new(
            t.pos,
            format!("unexpected {} after expression", t.tok.describe()),
        ));
    }
    Ok(e)
}

struct Parser<'t> {
    tokens: &'t [Token],
    at: usize,
    qualified: bool,
}

impl<'t> Parser<'t> {
    fn new(tokens: &'t [Token], qualified: bool) -> Self {
        Parser {
            tokens,
            at: 0,
            qualified,
        }
    }

    fn at_end(&self) -> bool {
        self.at >= self.tokens.len()
    }

    fn peek(&self) -> Option<&'t Tok> {
        self.tokens.get(self.at).map(|t| &t.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&'t Tok> {
        self.tokens.get(self.at + offset).map(|t| &t.tok)
    }

    fn peek_token(&self) -> Option<&'t Token> {
        self.tokens.get(self.at)
    }

    fn pos(&self) -> Pos {
        self.tokens
            .get(self.at)
            .or_else(|| self.tokens.last())
            .map(|t| t.pos)
            .unwrap_or_default()
    }

    fn check(&self, tok: &Tok) -> bool {
        self.peek() == Some(tok)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.check(tok) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn unexpected(&self, wanted: &str) -> Diagnostic {
        match self.peek_token() {
            Some(t) => Diagnostic::new(
                t.pos,
                format!("expected {wanted}, found {}", t.tok.describe()),
            ),
            None => Diagnostic::new(self.pos(), format!("expected {wanted}, found end of input")),
        }
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> Result<Pos, Diagnostic> {
        let pos = self.pos();
        if self.eat(&tok) {
            Ok(pos)
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn ident(&mut self, wanted: &str) -> Result<(String, Pos), Diagnostic> {
        match self.peek_token() {
            Some(Token {
                tok: Tok::Ident(name),
                pos,
            }) => {
                self.at += 1;
                Ok((name.clone(), *pos))
            }
            _ => Err(self.unexpected(wanted)),
        }
    }

    fn ty(&mut self) -> Result<Type, Diagnostic> {
        match self.peek() {
            Some(Tok::IntType) => {
                self.at += 1;
                Ok(Type::Int)
            }
            Some(Tok::BoolType) => {
                self.at += 1;
                Ok(Type::Bool)
            }
            Some(Tok::Ident(_)) => Ok(Type::Class(self.ident("type")?.0)),
            _ => Err(self.unexpected("a type")),
        }
    }

    fn class(&mut self) -> Result<ClassDecl, Diagnostic> {
        let pos = self.expect(Tok::Class, "`class`")?;
        let (name, _) = self.ident("class name")?;
        self.expect(Tok::Newline, "end of line after class name")?;
        let mut class = ClassDecl {
            name,
            fields: vec![],
            init: None,
            methods: vec![],
            actions: vec![],
            pos,
        };
        if !self.eat(&Tok::Indent) {
            return Ok(class);
        }
        while !self.eat(&Tok::Dedent) {
            match self.peek() {
                Some(Tok::Var) => class.fields.extend(self.var_decl()?),
                Some(Tok::Init) => {
                    let pos = self.pos();
                    self.at += 1;
                    let params = self.params()?;
                    let body = self.body(false)?.1;
                    if class.init.is_some() {
                        return Err(Diagnostic::new(pos, "duplicate `init`"));
                    }
                    class.init = Some(InitDecl { params, body, pos });
                }
                Some(Tok::Method) => {
                    let pos = self.pos();
                    self.at += 1;
                    let (name, _) = self.ident("method name")?;
                    let params = self.params()?;
                    let ret = if self.eat(&Tok::Colon) {
                        Some(self.ty()?)
                    } else {
                        None
                    };
                    let (guard, body) = self.body(true)?;
                    class.methods.push(MethodDecl {
                        name,
                        params,
                        ret,
                        guard,
                        body,
                        pos,
                    });
                }
                Some(Tok::Action) => {
                    let pos = self.pos();
                    self.at += 1;
                    let (name, _) = self.ident("action name")?;
                    if self.check(&Tok::LParen) {
                        return Err(Diagnostic::new(self.pos(), "actions take no parameters"));
                    }
                    if self.check(&Tok::Colon) {
                        return Err(Diagnostic::new(self.pos(), "actions have no return type"));
                    }
                    let (guard, body) = self.body(true)?;
                    class.actions.push(ActionDecl {
                        name,
                        guard,
                        body,
                        pos,
                    });
                }
                _ => return Err(self.unexpected("`var`, `init`, `method` or `action`")),
            }
        }
        Ok(class)
    }

    fn var_decl(&mut self) -> Result<Vec<VarDecl>, Diagnostic> {
        self.expect(Tok::Var, "`var`")?;
        let mut names = vec![self.ident("variable name")?];
        while self.eat(&Tok::Comma) {
            names.push(self.ident("variable name")?);
        }
        self.expect(Tok::Colon, "`:`")?;
        let ty = self.ty()?;
        self.expect(Tok::Newline, "end of line")?;
        Ok(names
            .into_iter()
            .map(|(name, pos)| VarDecl {
                name,
                ty: ty.clone(),
                pos,
            })
            .collect())
    }

    fn params(&mut self) -> Result<Vec<VarDecl>, Diagnostic> {
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(params);
        }
        loop {
            let (name, pos) = self.ident("parameter name")?;
            self.expect(Tok::Colon, "`:`")?;
            let ty = self.ty()?;
            params.push(VarDecl { name, ty, pos });
            if self.eat(&Tok::RParen) {
                return Ok(params);
            }
            self.expect(Tok::Comma, "`,` or `)`")?;
        }
    }

    /// Body of an init, method or action. When `guarded`, a body consisting of
    /// exactly one `when g do S` yields guard `g` and body `S`.
    fn body(&mut self, guarded: bool) -> Result<(Expr, Vec<Stmt>), Diagnostic> {
        self.expect(Tok::Newline, "end of line")?;
        if !self.check(&Tok::Indent) {
            return Err(self.unexpected("an indented body"));
        }
        if guarded && self.peek_at(1) == Some(&Tok::When) {
            self.at += 1;
            self.at += 1;
            let guard = self.expr()?;
            self.expect(Tok::Do, "`do`")?;
            let body = self.clause()?;
            if !self.eat(&Tok::Dedent) {
                return Err(Diagnostic::new(
                    self.pos(),
                    "`when` must be the outermost construct of a method or action body",
                ));
            }
            return Ok((guard, body));
        }
        Ok((Expr::truth(), self.block()?))
    }

    fn block(&mut self) -> Result<Vec<Stmt>, Diagnostic> {
        self.expect(Tok::Indent, "an indented block")?;
        let mut stmts = Vec::new();
        while !self.eat(&Tok::Dedent) {
            if self.at_end() {
                return Err(self.unexpected("end of block"));
            }
            stmts.push(self.stmt()?);
        }
        Ok(stmts)
    }

    /// The statement part after `then`, `do` or `else`: either an indented
    /// block on the following lines or one simple statement on the same line.
    fn clause(&mut self) -> Result<Vec<Stmt>, Diagnostic> {
        if self.eat(&Tok::Newline) {
            self.block()
        } else {
            let s = self.simple_stmt()?;
            Ok(vec![s])
        }
    }

    fn stmt(&mut self) -> Result<Stmt, Diagnostic> {
        let pos = self.pos();
        match self.peek() {
            Some(Tok::If) => {
                self.at += 1;
                let mut branches = Vec::new();
                let cond = self.expr()?;
                self.expect(Tok::Then, "`then`")?;
                branches.push((cond, self.clause()?));
                let mut otherwise = None;
                loop {
                    if self.eat(&Tok::Elif) {
                        let cond = self.expr()?;
                        self.expect(Tok::Then, "`then`")?;
                        branches.push((cond, self.clause()?));
                    } else if self.eat(&Tok::Else) {
                        otherwise = Some(self.clause()?);
                        break;
                    } else {
                        break;
                    }
                }
                Ok(Stmt {
                    kind: StmtKind::If {
                        branches,
                        otherwise,
                    },
                    pos,
                })
            }
            Some(Tok::While) => {
                self.at += 1;
                let cond = self.expr()?;
                self.expect(Tok::Do, "`do`")?;
                let body = self.clause()?;
                Ok(Stmt {
                    kind: StmtKind::While { cond, body },
                    pos,
                })
            }
            _ => self.simple_stmt(),
        }
    }

    fn simple_stmt(&mut self) -> Result<Stmt, Diagnostic> {
        let pos = self.pos();
        let kind = match self.peek() {
            Some(Tok::When) => {
                return Err(Diagnostic::new(
                    pos,
                    "`when` must be the outermost construct of a method or action body",
                ))
            }
            Some(Tok::If) | Some(Tok::While) => {
                return Err(Diagnostic::new(
                    pos,
                    "compound statements need their own indented block",
                ))
            }
            Some(Tok::Var) => {
                let decls = self.var_decl()?;
                return Ok(Stmt {
                    kind: StmtKind::Local(decls),
                    pos,
                });
            }
            Some(Tok::Return) => {
                self.at += 1;
                if self.check(&Tok::Newline) {
                    StmtKind::Return(None)
                } else {
                    StmtKind::Return(Some(self.expr()?))
                }
            }
            Some(Tok::Print) => {
                self.at += 1;
                self.expect(Tok::LParen, "`(`")?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                StmtKind::Print(e)
            }
            _ => {
                let mut exprs = vec![self.expr()?];
                while self.eat(&Tok::Comma) {
                    exprs.push(self.expr()?);
                }
                if self.eat(&Tok::Assign) {
                    let targets = exprs
                        .into_iter()
                        .map(to_lvalue)
                        .collect::<Result<Vec<_>, _>>()?;
                    let mut values = vec![self.expr()?];
                    while self.eat(&Tok::Comma) {
                        values.push(self.expr()?);
                    }
                    StmtKind::Assign { targets, values }
                } else if exprs.len() == 1
                    && matches!(exprs[0].kind, ExprKind::Call { .. } | ExprKind::New { .. })
                {
                    StmtKind::Expr(exprs.pop().unwrap())
                } else {
                    return Err(Diagnostic::new(
                        pos,
                        "expected a statement: assignment, call, `if`, `while`, `return` or `print`",
                    ));
                }
            }
        };
        self.expect(Tok::Newline, "end of line")?;
        Ok(Stmt { kind, pos })
    }

    pub fn expr(&mut self) -> Result<Expr, Diagnostic> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek()? {
            Tok::Implies => BinOp::Implies,
            Tok::Or => BinOp::Or,
            Tok::And => BinOp::And,
            Tok::Eq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Mod => BinOp::Mod,
            _ => return None,
        })
    }

    /// Precedence climbing. `=>` is right-associative, comparisons do not
    /// chain, everything else is left-associative.
    fn binary(&mut self, min_prec: u8) -> Result<Expr, Diagnostic> {
        let mut lhs = if min_prec <= NOT_PRECEDENCE && self.check(&Tok::Not) {
            let pos = self.pos();
            self.at += 1;
            let operand = self.binary(NOT_PRECEDENCE)?;
            Expr::new(ExprKind::Unary(UnOp::Not, Box::new(operand)), pos)
        } else {
            self.unary()?
        };
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            let pos = self.pos();
            self.at += 1;
            let rhs = match op {
                BinOp::Implies => self.binary(prec)?,
                _ => self.binary(prec + 1)?,
            };
            if op.is_comparison() {
                if let Some(next) = self.binop() {
                    if next.is_comparison() {
                        return Err(Diagnostic::new(
                            self.pos(),
                            "comparisons do not chain; use `and`",
                        ));
                    }
                }
            }
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, Diagnostic> {
        if self.check(&Tok::Minus) {
            let pos = self.pos();
            self.at += 1;
            // `-<literal>` is a negative constant, unless the literal is a
            // call receiver as in `-5.m()`.
            let receiver = matches!(self.tokens.get(self.at + 1), Some(t) if t.tok == Tok::Dot);
            if let Some(Tok::Int(v)) = self.peek() {
                if *v != 0 && !receiver {
                    let v = -*v;
                    self.at += 1;
                    return Ok(Expr::new(ExprKind::Int(v), pos));
                }
            }
            let operand = self.unary()?;
            return Ok(Expr::new(
                ExprKind::Unary(UnOp::Neg, Box::new(operand)),
                pos,
            ));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, Diagnostic> {
        let mut e = self.primary()?;
        while self.check(&Tok::Dot) {
            let dot = self.pos();
            self.at += 1;
            let (name, _) = self.ident("method name")?;
            if self.check(&Tok::LParen) {
                let args = self.args()?;
                let pos = e.pos;
                e = Expr::new(
                    ExprKind::Call {
                        recv: Box::new(e),
                        method: name,
                        args,
                    },
                    pos,
                );
            } else {
                e = match e.kind {
                    ExprKind::This => Expr::new(ExprKind::ThisField(name), e.pos),
                    ExprKind::Name(class) if self.qualified => {
                        Expr::new(ExprKind::Qualified(class, name), e.pos)
                    }
                    _ => {
                        return Err(Diagnostic::new(
                            dot,
                            format!(
                                "field `{name}` of another object cannot be accessed; only an object's own fields are visible"
                            ),
                        ))
                    }
                };
            }
        }
        Ok(e)
    }

    fn args(&mut self) -> Result<Vec<Expr>, Diagnostic> {
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(&Tok::RParen) {
                return Ok(args);
            }
            self.expect(Tok::Comma, "`,` or `)`")?;
        }
    }

    fn primary(&mut self) -> Result<Expr, Diagnostic> {
        let Some(token) = self.peek_token() else {
            return Err(self.unexpected("an expression"));
        };
        let pos = token.pos;
        let kind = match &token.tok {
            Tok::Int(v) => ExprKind::Int(*v),
            Tok::True => ExprKind::Bool(true),
            Tok::False => ExprKind::Bool(false),
            Tok::Nil => ExprKind::Nil,
            Tok::This => ExprKind::This,
            Tok::Ident(name) => {
                if self.peek_at(1) == Some(&Tok::LParen) {
                    return Err(Diagnostic::new(
                        pos,
                        format!("call to `{name}` needs a receiver, e.g. `this.{name}(...)`"),
                    ));
                }
                ExprKind::Name(name.clone())
            }
            Tok::New => {
                self.at += 1;
                let (class, _) = self.ident("class name")?;
                let args = self.args()?;
                return Ok(Expr::new(ExprKind::New { class, args }, pos));
            }
            Tok::LParen => {
                self.at += 1;
                let mut e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                e.pos = pos;
                return Ok(e);
            }
            _ => return Err(self.unexpected("an expression")),
        };
        self.at += 1;
        Ok(Expr::new(kind, pos))
    }
}

fn to_lvalue(e: Expr) -> Result<LValue, Diagnostic> {
    let kind = match e.kind {
        ExprKind::Name(n) => LValueKind::Name(n),
        ExprKind::ThisField(n) => LValueKind::ThisField(n),
        _ => return Err(Diagnostic::new(e.pos, "left-hand side is not assignable")),
    };
    Ok(LValue { kind, pos: e.pos })
}
