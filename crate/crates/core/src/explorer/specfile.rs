//! Property files, one property per line:
//!
//! ```text
//! # comment
//! root Start
//! invariant PriorityQueue: not (a and r)
//! deadlock-free
//! refine Doubler <= DelayedDoubler via d => y = x observing store, retrieve with 0, 1, 7
//! ```

use crate::frontend::ast::{self, Expr, ExprKind, Pos, Type};
use crate::frontend::{parse_expr_text, Diagnostic};

#[derive(Clone, Debug)]
pub struct Invariant {
    pub class: String,
    pub expr: Expr,
    pub text: String,
}

#[derive(Clone, Debug)]
pub struct Refinement {
    pub abstract_class: String,
    pub concrete_class: String,
    pub relation: Expr,
    pub relation_text: String,
    /// Methods the generated driver calls, in order.
    pub observing: Vec<String>,
    /// Argument for the observed methods that take an int; one driver run
    /// per value.
    pub values: Vec<i64>,
}

#[derive(Clone, Debug, Default)]
pub struct Spec {
    pub root: Option<String>,
    pub invariants: Vec<Invariant>,
    pub deadlock_free: bool,
    pub refinements: Vec<Refinement>,
}

struct Line<'a> {
    no: u32,
    text: &'a str,
}

impl Line<'_> {
    fn pos_of(&self, part: &str) -> Pos {
        let off = part.as_ptr() as usize - self.text.as_ptr() as usize;
        Pos::new(self.no, off as u32 + 1)
    }

    fn diag(&self, part: &str, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::new(self.pos_of(part), msg)
    }

    fn expr(&self, part: &str) -> Result<Expr, Diagnostic> {
        parse_expr_text(part, true).map_err(|d| {
            let base = self.pos_of(part);
            Diagnostic::new(Pos::new(self.no, base.col + d.pos.col - 1), d.message)
        })
    }
}

fn class<'p>(
    program: &'p ast::Program,
    line: &Line<'_>,
    name: &str,
) -> Result<&'p ast::ClassDecl, Diagnostic> {
    program
        .class(name)
        .ok_or_else(|| line.diag(name, format!("unknown class `{name}`")))
}

/// Every field reference in `e` must resolve through `resolve`.
fn check_names(
    e: &Expr,
    line: &Line<'_>,
    part: &str,
    resolve: &dyn Fn(Option<&str>, &str) -> bool,
    diags: &mut Vec<Diagnostic>,
) {
    e.walk(&mut |x| {
        let bad = match &x.kind {
            ExprKind::Name(f) | ExprKind::ThisField(f) if !resolve(None, f) => {
                Some(format!("`{f}` is not a field here"))
            }
            ExprKind::Qualified(c, f) if !resolve(Some(c), f) => {
                Some(format!("`{c}.{f}` is not a field here"))
            }
            ExprKind::Call { .. } | ExprKind::New { .. } | ExprKind::This => {
                Some("properties may only read fields".to_string())
            }
            _ => None,
        };
        if let Some(m) = bad {
            let base = line.pos_of(part);
            diags.push(Diagnostic::new(
                Pos::new(line.no, base.col + x.pos.col - 1),
                m,
            ));
        }
    });
}

fn split_word<'a>(s: &'a str, word: &str) -> Option<(&'a str, &'a str)> {
    let pat = format!(" {word} ");
    s.find(&pat)
        .map(|i| (s[..i].trim_end(), s[i + pat.len()..].trim_start()))
}

fn list(s: &str) -> Vec<&str> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .collect()
}

pub fn parse(text: &str, program: &ast::Program) -> Result<Spec, Vec<Diagnostic>> {
    let mut spec = Spec::default();
    let mut diags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim_end();
        let trimmed = body.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        let line = Line {
            no: i as u32 + 1,
            text: raw,
        };
        let (kw, rest) = trimmed
            .split_once(char::is_whitespace)
            .map(|(k, r)| (k, r.trim()))
            .unwrap_or((trimmed, ""));
        let result = match kw {
            "root" => class(program, &line, rest).map(|c| spec.root = Some(c.name.clone())),
            "deadlock-free" if rest.is_empty() => {
                spec.deadlock_free = true;
                Ok(())
            }
            "invariant" => {
                invariant(&line, rest, program, &mut diags).map(|inv| spec.invariants.push(inv))
            }
            "refine" => {
                refinement(&line, rest, program, &mut diags).map(|r| spec.refinements.push(r))
            }
            _ => Err(line.diag(
                trimmed,
                format!("expected `root`, `invariant`, `deadlock-free` or `refine`, found `{kw}`"),
            )),
        };
        if let Err(d) = result {
            diags.push(d);
        }
    }
    if diags.is_empty()
        && spec.invariants.is_empty()
        && spec.refinements.is_empty()
        && !spec.deadlock_free
    {
        diags.push(Diagnostic::new(
            Pos::new(1, 1),
            "property file declares no property",
        ));
    }
    if diags.is_empty() {
        Ok(spec)
    } else {
        diags.sort_by_key(|d| (d.pos.line, d.pos.col));
        Err(diags)
    }
}

fn invariant(
    line: &Line<'_>,
    rest: &str,
    program: &ast::Program,
    diags: &mut Vec<Diagnostic>,
) -> Result<Invariant, Diagnostic> {
    let (name, expr_text) = rest
        .split_once(':')
        .ok_or_else(|| line.diag(rest, "expected `invariant Class: expression`"))?;
    let name = name.trim();
    let expr_text = expr_text.trim();
    let c = class(program, line, name)?;
    let expr = line.expr(expr_text)?;
    check_names(
        &expr,
        line,
        expr_text,
        &|q, f| q.is_none_or(|q| q == c.name) && c.field(f).is_some(),
        diags,
    );
    Ok(Invariant {
        class: c.name.clone(),
        expr,
        text: expr_text.to_string(),
    })
}

fn refinement(
    line: &Line<'_>,
    rest: &str,
    program: &ast::Program,
    diags: &mut Vec<Diagnostic>,
) -> Result<Refinement, Diagnostic> {
    let shape =
        "expected `refine Abstract <= Concrete via relation observing m1, m2 [with v1, v2]`";
    let (classes, rest) = split_word(rest, "via").ok_or_else(|| line.diag(rest, shape))?;
    let (a, c) = classes
        .split_once("<=")
        .ok_or_else(|| line.diag(classes, shape))?;
    let (a, c) = (a.trim(), c.trim());
    let abs = class(program, line, a)?;
    let conc = class(program, line, c)?;
    let (relation_text, rest) =
        split_word(rest, "observing").ok_or_else(|| line.diag(rest, shape))?;
    let (methods, values) = match split_word(rest, "with") {
        Some((m, v)) => (m, Some(v)),
        None => (rest, None),
    };
    let relation = line.expr(relation_text)?;
    check_names(
        &relation,
        line,
        relation_text,
        &|q, f| match q {
            Some(q) if q == abs.name => abs.field(f).is_some(),
            Some(q) if q == conc.name => conc.field(f).is_some(),
            Some(_) => false,
            None => conc.field(f).is_some() || abs.field(f).is_some(),
        },
        diags,
    );
    for cls in [abs, conc] {
        if cls.init.as_ref().is_some_and(|i| !i.params.is_empty()) {
            return Err(line.diag(
                if cls.name == abs.name { a } else { c },
                format!("`{}` must have an init without parameters", cls.name),
            ));
        }
    }
    let observing: Vec<String> = list(methods).into_iter().map(String::from).collect();
    if observing.is_empty() {
        return Err(line.diag(methods, "no observed methods"));
    }
    for m in list(methods) {
        let sig = |cls: &ast::ClassDecl| {
            cls.methods.iter().find(|x| x.name == m).map(|x| {
                (
                    x.params.iter().map(|p| p.ty.clone()).collect::<Vec<_>>(),
                    x.ret.clone(),
                )
            })
        };
        let (Some(sa), Some(sc)) = (sig(abs), sig(conc)) else {
            return Err(line.diag(m, format!("`{m}` must be a method of both `{a}` and `{c}`")));
        };
        if sa != sc {
            return Err(line.diag(
                m,
                format!("`{m}` has different signatures in `{a}` and `{c}`"),
            ));
        }
        if !(sa.0.is_empty() || sa.0 == [Type::Int]) {
            return Err(line.diag(
                m,
                format!("observed method `{m}` must take no parameters or one int"),
            ));
        }
    }
    let values = match values {
        None => vec![0],
        Some(v) => list(v)
            .into_iter()
            .map(|x| {
                x.parse::<i64>()
                    .map_err(|_| line.diag(x, format!("`{x}` is not an integer")))
            })
            .collect::<Result<_, _>>()?,
    };
    Ok(Refinement {
        abstract_class: abs.name.clone(),
        concrete_class: conc.name.clone(),
        relation,
        relation_text: relation_text.to_string(),
        observing,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{load, ValidateOptions};

    fn program() -> ast::Program {
        load(
            include_str!("../../lime/doubler.lime"),
            ValidateOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn parses_all_forms() {
        let s = parse(
            "# props\nroot Start\ninvariant Doubler: x mod 2 = 0\ndeadlock-free\nrefine Doubler <= DelayedDoubler via d => y = Doubler.x observing store, retrieve with 0, 1, 7\n",
            &program(),
        )
        .unwrap();
        assert_eq!(s.root.as_deref(), Some("Start"));
        assert_eq!(s.invariants[0].class, "Doubler");
        assert!(s.deadlock_free);
        let r = &s.refinements[0];
        assert_eq!(r.observing, ["store", "retrieve"]);
        assert_eq!(r.values, [0, 1, 7]);
        assert_eq!(r.relation_text, "d => y = Doubler.x");
    }

    #[test]
    fn reports_positions() {
        let err = parse("invariant Doubler: y = 0\n", &program()).unwrap_err();
        assert_eq!(err[0].message, "`y` is not a field here");
        assert_eq!((err[0].pos.line, err[0].pos.col), (1, 20));
        let err = parse("\ninvariant Nope: x = 0\n", &program()).unwrap_err();
        assert_eq!(err[0].message, "unknown class `Nope`");
        assert_eq!((err[0].pos.line, err[0].pos.col), (2, 11));
        let err = parse("invariant Doubler: x = = 0\n", &program()).unwrap_err();
        assert_eq!(err[0].pos.line, 1);
        let err = parse("frobnicate\n", &program()).unwrap_err();
        assert!(err[0].message.starts_with("expected `root`"));
        assert!(parse("# nothing\n", &program()).is_err());
    }

    #[test]
    fn refinement_signature_checks() {
        let err = parse(
            "refine Doubler <= DelayedDoubler via y = x observing double\n",
            &program(),
        )
        .unwrap_err();
        assert!(err[0].message.contains("method of both"));
    }
}
