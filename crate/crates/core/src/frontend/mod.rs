//! Lexing, parsing, validation and pretty-printing of Lime source.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod validate;

pub use ast::{Pos, Program};
pub use parser::parse_expr_text;
pub use pretty::pretty;
pub use validate::{validate, ValidateOptions};

/// A located front-end error.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{pos}: {message}")]
pub struct Diagnostic {
    pub pos: Pos,
    pub message: String,
}

impl Diagnostic {
    pub fn new(pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic {
            pos,
            message: message.into(),
        }
    }

    /// `file:line:col: message`
    pub fn render(&self, file: &str) -> String {
        format!(
            "{file}:{}:{}: {}",
            self.pos.line, self.pos.col, self.message
        )
    }
}

/// Tokenize and parse, without validation.
pub fn parse_source(source: &str) -> Result<Program, Diagnostic> {
    parser::parse(&lexer::tokenize(source)?)
}

/// Parse and validate. A syntax error yields exactly one diagnostic.
pub fn load(source: &str, opts: ValidateOptions) -> Result<Program, Vec<Diagnostic>> {
    let program = parse_source(source).map_err(|d| vec![d])?;
    validate(&program, opts)?;
    Ok(program)
}

#[cfg(test)]
mod roundtrip {
    use super::ast::*;
    use super::*;
    use proptest::prelude::*;

    fn pos() -> Pos {
        Pos::default()
    }

    fn ident() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["a", "b", "count", "x1", "left", "y"]).prop_map(String::from)
    }

    fn class_name() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["Node", "Cell", "Start"]).prop_map(String::from)
    }

    fn ty() -> impl Strategy<Value = Type> {
        prop_oneof![
            Just(Type::Int),
            Just(Type::Bool),
            class_name().prop_map(Type::Class),
        ]
    }

    fn binop() -> impl Strategy<Value = BinOp> {
        prop::sample::select(vec![
            BinOp::Implies,
            BinOp::Or,
            BinOp::And,
            BinOp::Eq,
            BinOp::Ne,
            BinOp::Lt,
            BinOp::Le,
            BinOp::Gt,
            BinOp::Ge,
            BinOp::Add,
            BinOp::Sub,
            BinOp::Mul,
            BinOp::Mod,
        ])
    }

    fn expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            // i64::MIN has no literal spelling.
            (i64::MIN + 1..=i64::MAX).prop_map(|v| Expr::new(ExprKind::Int(v), pos())),
            any::<bool>().prop_map(|b| Expr::new(ExprKind::Bool(b), pos())),
            Just(Expr::new(ExprKind::Nil, pos())),
            Just(Expr::new(ExprKind::This, pos())),
            ident().prop_map(|n| Expr::new(ExprKind::Name(n), pos())),
            ident().prop_map(|n| Expr::new(ExprKind::ThisField(n), pos())),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                inner
                    .clone()
                    .prop_map(|e| Expr::new(ExprKind::Unary(UnOp::Not, Box::new(e)), pos())),
                // `-5` is a literal, so negation of a nonzero literal never
                // appears in parsed trees.
                inner
                    .clone()
                    .prop_filter(
                        "folded literal",
                        |e| !matches!(e.kind, ExprKind::Int(v) if v != 0)
                    )
                    .prop_map(|e| Expr::new(ExprKind::Unary(UnOp::Neg, Box::new(e)), pos())),
                (binop(), inner.clone(), inner.clone())
                    .prop_filter("comparisons do not chain", |(op, a, b)| {
                        !op.is_comparison() || (!is_cmp(a) && !is_cmp(b))
                    })
                    .prop_map(|(op, a, b)| Expr::new(
                        ExprKind::Binary(op, Box::new(a), Box::new(b)),
                        pos()
                    )),
                (
                    inner.clone(),
                    ident(),
                    prop::collection::vec(inner.clone(), 0..3)
                )
                    .prop_map(|(r, m, args)| Expr::new(
                        ExprKind::Call {
                            recv: Box::new(r),
                            method: m,
                            args
                        },
                        pos()
                    )),
                (class_name(), prop::collection::vec(inner, 0..3))
                    .prop_map(|(class, args)| Expr::new(ExprKind::New { class, args }, pos())),
            ]
        })
    }

    fn is_cmp(e: &Expr) -> bool {
        matches!(&e.kind, ExprKind::Binary(op, _, _) if op.is_comparison())
    }

    fn lvalue() -> impl Strategy<Value = LValue> {
        prop_oneof![
            ident().prop_map(|n| LValue {
                kind: LValueKind::Name(n),
                pos: pos()
            }),
            ident().prop_map(|n| LValue {
                kind: LValueKind::ThisField(n),
                pos: pos()
            }),
        ]
    }

    fn simple_stmt() -> impl Strategy<Value = Stmt> {
        let kind = prop_oneof![
            (prop::collection::vec(ident(), 1..3), ty()).prop_map(|(ns, t)| StmtKind::Local(
                ns.into_iter()
                    .map(|name| VarDecl {
                        name,
                        ty: t.clone(),
                        pos: pos()
                    })
                    .collect()
            )),
            prop::collection::vec((lvalue(), expr()), 1..3).prop_map(|pairs| {
                let (targets, values) = pairs.into_iter().unzip();
                StmtKind::Assign { targets, values }
            }),
            (expr(), ident()).prop_map(|(r, m)| StmtKind::Expr(Expr::new(
                ExprKind::Call {
                    recv: Box::new(r),
                    method: m,
                    args: vec![]
                },
                pos()
            ))),
            proptest::option::of(expr()).prop_map(StmtKind::Return),
            expr().prop_map(StmtKind::Print),
        ];
        kind.prop_map(|kind| Stmt { kind, pos: pos() })
    }

    fn stmt() -> impl Strategy<Value = Stmt> {
        simple_stmt().prop_recursive(3, 16, 3, |inner| {
            let block = prop::collection::vec(inner, 1..3);
            prop_oneof![
                (
                    prop::collection::vec((expr(), block.clone()), 1..3),
                    proptest::option::of(block.clone())
                )
                    .prop_map(|(branches, otherwise)| Stmt {
                        kind: StmtKind::If {
                            branches,
                            otherwise
                        },
                        pos: pos()
                    }),
                (expr(), block).prop_map(|(cond, body)| Stmt {
                    kind: StmtKind::While { cond, body },
                    pos: pos()
                }),
            ]
        })
    }

    fn body() -> impl Strategy<Value = Vec<Stmt>> {
        prop::collection::vec(stmt(), 1..4)
    }

    fn params() -> impl Strategy<Value = Vec<VarDecl>> {
        prop::collection::vec(
            (ident(), ty()).prop_map(|(name, ty)| VarDecl {
                name,
                ty,
                pos: pos(),
            }),
            0..3,
        )
    }

    fn guard() -> impl Strategy<Value = Expr> {
        prop_oneof![Just(Expr::truth()), expr()]
    }

    fn class() -> impl Strategy<Value = ClassDecl> {
        (
            class_name(),
            params(),
            proptest::option::of((params(), body())),
            prop::collection::vec(
                (
                    ident(),
                    params(),
                    proptest::option::of(ty()),
                    guard(),
                    body(),
                ),
                0..3,
            ),
            prop::collection::vec((ident(), guard(), body()), 0..2),
        )
            .prop_map(|(name, fields, init, methods, actions)| ClassDecl {
                name,
                fields,
                init: init.map(|(params, body)| InitDecl {
                    params,
                    body,
                    pos: pos(),
                }),
                methods: methods
                    .into_iter()
                    .map(|(name, params, ret, guard, body)| MethodDecl {
                        name,
                        params,
                        ret,
                        guard,
                        body,
                        pos: pos(),
                    })
                    .collect(),
                actions: actions
                    .into_iter()
                    .map(|(name, guard, body)| ActionDecl {
                        name,
                        guard,
                        body,
                        pos: pos(),
                    })
                    .collect(),
                pos: pos(),
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn pretty_then_parse_is_identity(classes in prop::collection::vec(class(), 0..3)) {
            let program = Program { classes };
            let text = pretty(&program);
            let reparsed = parse_source(&text).map_err(|d| TestCaseError::fail(format!("{d}\n{text}")))?;
            prop_assert_eq!(&reparsed, &program, "{}", text);
            prop_assert_eq!(pretty(&reparsed), text);
        }

        #[test]
        fn expression_printing_roundtrips(e in expr()) {
            let text = pretty::expr(&e);
            let back = parse_expr_text(&text, false).map_err(|d| TestCaseError::fail(format!("{d}: {text}")))?;
            prop_assert_eq!(back, e, "{}", text);
        }
    }
}
