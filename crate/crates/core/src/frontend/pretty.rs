//! Canonical source rendering (4-space indentation, minimal parentheses).

use std::fmt::Write;

use super::ast::*;

pub fn pretty(program: &Program) -> String {
    let mut out = String::new();
    for (i, class) in program.classes.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        class_decl(&mut out, class);
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn params(ps: &[VarDecl]) -> String {
    ps.iter()
        .map(|p| format!("{}: {}", p.name, p.ty))
        .collect::<Vec<_>>()
        .join(", ")
}

fn class_decl(out: &mut String, class: &ClassDecl) {
    let _ = writeln!(out, "class {}", class.name);
    for f in &class.fields {
        indent(out, 1);
        let _ = writeln!(out, "var {}: {}", f.name, f.ty);
    }
    if let Some(init) = &class.init {
        indent(out, 1);
        let _ = writeln!(out, "init({})", params(&init.params));
        block(out, &init.body, 2);
    }
    for m in &class.methods {
        indent(out, 1);
        let _ = write!(out, "method {}({})", m.name, params(&m.params));
        if let Some(ret) = &m.ret {
            let _ = write!(out, ": {ret}");
        }
        out.push('\n');
        guarded(out, &m.guard, &m.body);
    }
    for a in &class.actions {
        indent(out, 1);
        let _ = writeln!(out, "action {}", a.name);
        guarded(out, &a.guard, &a.body);
    }
}

fn guarded(out: &mut String, guard: &Expr, body: &[Stmt]) {
    if guard.is_literal_true() {
        block(out, body, 2);
    } else {
        indent(out, 2);
        let _ = writeln!(out, "when {} do", expr(guard));
        block(out, body, 3);
    }
}

fn block(out: &mut String, body: &[Stmt], depth: usize) {
    for s in body {
        stmt(out, s, depth);
    }
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match &s.kind {
        StmtKind::Local(decls) => {
            // One declaration statement always shares a single type.
            let names: Vec<_> = decls.iter().map(|d| d.name.as_str()).collect();
            let _ = writeln!(out, "var {}: {}", names.join(", "), decls[0].ty);
        }
        StmtKind::Assign { targets, values } => {
            let t: Vec<String> = targets
                .iter()
                .map(|t| match &t.kind {
                    LValueKind::Name(n) => n.clone(),
                    LValueKind::ThisField(n) => format!("this.{n}"),
                })
                .collect();
            let v: Vec<String> = values.iter().map(expr).collect();
            let _ = writeln!(out, "{} := {}", t.join(", "), v.join(", "));
        }
        StmtKind::Expr(e) => {
            let _ = writeln!(out, "{}", expr(e));
        }
        StmtKind::If {
            branches,
            otherwise,
        } => {
            for (i, (cond, body)) in branches.iter().enumerate() {
                if i > 0 {
                    indent(out, depth);
                }
                let kw = if i == 0 { "if" } else { "elif" };
                let _ = writeln!(out, "{kw} {} then", expr(cond));
                block(out, body, depth + 1);
            }
            if let Some(body) = otherwise {
                indent(out, depth);
                out.push_str("else\n");
                block(out, body, depth + 1);
            }
        }
        StmtKind::While { cond, body } => {
            let _ = writeln!(out, "while {} do", expr(cond));
            block(out, body, depth + 1);
        }
        StmtKind::Return(None) => out.push_str("return\n"),
        StmtKind::Return(Some(e)) => {
            let _ = writeln!(out, "return {}", expr(e));
        }
        StmtKind::Print(e) => {
            let _ = writeln!(out, "print({})", expr(e));
        }
    }
}

pub fn expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn own_precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary(op, _, _) => op.precedence(),
        ExprKind::Unary(UnOp::Not, _) => NOT_PRECEDENCE,
        ExprKind::Unary(UnOp::Neg, _) => NEG_PRECEDENCE,
        ExprKind::Int(v) if *v < 0 => NEG_PRECEDENCE,
        _ => u8::MAX,
    }
}

/// Writes `e`, parenthesized when its own precedence is below `min`.
fn write_expr(out: &mut String, e: &Expr, min: u8) {
    let prec = own_precedence(e);
    let paren = prec < min;
    if paren {
        out.push('(');
    }
    match &e.kind {
        ExprKind::Int(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        ExprKind::Nil => out.push_str("nil"),
        ExprKind::This => out.push_str("this"),
        ExprKind::Name(n) => out.push_str(n),
        ExprKind::ThisField(n) => {
            let _ = write!(out, "this.{n}");
        }
        ExprKind::Qualified(c, f) => {
            let _ = write!(out, "{c}.{f}");
        }
        ExprKind::Unary(UnOp::Not, x) => {
            out.push_str("not ");
            write_expr(out, x, NOT_PRECEDENCE);
        }
        ExprKind::Unary(UnOp::Neg, x) => {
            out.push('-');
            if matches!(x.kind, ExprKind::Unary(UnOp::Neg, _))
                || matches!(x.kind, ExprKind::Int(v) if v < 0)
            {
                out.push('(');
                write_expr(out, x, 0);
                out.push(')');
            } else {
                write_expr(out, x, NEG_PRECEDENCE);
            }
        }
        ExprKind::Binary(op, a, b) => {
            let p = op.precedence();
            let (lmin, rmin) = match op {
                BinOp::Implies => (p + 1, p),
                _ if op.is_comparison() => (p + 1, p + 1),
                _ => (p, p + 1),
            };
            write_expr(out, a, lmin);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, b, rmin);
        }
        ExprKind::Call { recv, method, args } => {
            write_expr(out, recv, u8::MAX);
            let _ = write!(out, ".{method}(");
            write_args(out, args);
            out.push(')');
        }
        ExprKind::New { class, args } => {
            let _ = write!(out, "new {class}(");
            write_args(out, args);
            out.push(')');
        }
    }
    if paren {
        out.push(')');
    }
}

fn write_args(out: &mut String, args: &[Expr]) {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a, 0);
    }
}
