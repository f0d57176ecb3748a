//! Line-oriented tokenizer with synthetic INDENT/DEDENT tokens.

use super::ast::Pos;
use super::Diagnostic;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Class,
    Var,
    Init,
    Method,
    Action,
    When,
    Do,
    If,
    Then,
    Elif,
    Else,
    While,
    Return,
    New,
    Nil,
    True,
    False,
    And,
    Or,
    Not,
    Mod,
    Print,
    This,
    IntType,
    BoolType,
    Ident(String),
    Int(i64),
    Colon,
    Comma,
    LParen,
    RParen,
    Dot,
    Assign,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Implies,
    Newline,
    Indent,
    Dedent,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("identifier `{name}`"),
            Tok::Int(v) => format!("integer {v}"),
            Tok::Newline => "end of line".into(),
            Tok::Indent => "indentation".into(),
            Tok::Dedent => "end of block".into(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::Class => "class",
            Tok::Var => "var",
            Tok::Init => "init",
            Tok::Method => "method",
            Tok::Action => "action",
            Tok::When => "when",
            Tok::Do => "do",
            Tok::If => "if",
            Tok::Then => "then",
            Tok::Elif => "elif",
            Tok::Else => "else",
            Tok::While => "while",
            Tok::Return => "return",
            Tok::New => "new",
            Tok::Nil => "nil",
            Tok::True => "true",
            Tok::False => "false",
            Tok::And => "and",
            Tok::Or => "or",
            Tok::Not => "not",
            Tok::Mod => "mod",
            Tok::Print => "print",
            Tok::This => "this",
            Tok::IntType => "int",
            Tok::BoolType => "bool",
            Tok::Colon => ":",
            Tok::Comma => ",",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Dot => ".",
            Tok::Assign => ":=",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Implies => "=>",
            Tok::Ident(_) | Tok::Int(_) | Tok::Newline | Tok::Indent | Tok::Dedent => "",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "class" => Tok::Class,
        "var" => Tok::Var,
        "init" => Tok::Init,
        "method" => Tok::Method,
        "action" => Tok::Action,
        "when" => Tok::When,
        "do" => Tok::Do,
        "if" => Tok::If,
        "then" => Tok::Then,
        "elif" => Tok::Elif,
        "else" => Tok::Else,
        "while" => Tok::While,
        "return" => Tok::Return,
        "new" => Tok::New,
        "nil" => Tok::Nil,
        "true" => Tok::True,
        "false" => Tok::False,
        "and" => Tok::And,
        "or" => Tok::Or,
        "not" => Tok::Not,
        "mod" => Tok::Mod,
        "print" => Tok::Print,
        "this" => Tok::This,
        "int" => Tok::IntType,
        "bool" => Tok::BoolType,
        _ => return None,
    })
}

/// Tokenize `source`. Blank lines and `#` comments are skipped. Every logical
/// line ends in `Newline`; indentation changes produce `Indent`/`Dedent`, and
/// all open blocks are closed at end of input.
pub fn tokenize(source: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut out = Vec::new();
    let mut levels: Vec<usize> = vec![0];
    // The first indented line fixes whether the file indents with tabs or spaces.
    let mut indent_char: Option<char> = None;

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx as u32 + 1;
        let content_start = raw
            .char_indices()
            .find(|&(_, c)| c != ' ' && c != '\t')
            .map(|(i, _)| i);
        let Some(start) = content_start else { continue };
        if raw[start..].starts_with('#') {
            continue;
        }
        let lead = &raw[..start];
        for (i, c) in lead.chars().enumerate() {
            match indent_char {
                None => indent_char = Some(c),
                Some(expected) if expected != c => {
                    return Err(Diagnostic::new(
                        Pos::new(line_no, i as u32 + 1),
                        "inconsistent indentation: tabs and spaces mixed",
                    ));
                }
                Some(_) => {}
            }
        }
        let width = lead.chars().count();
        let line_pos = Pos::new(line_no, width as u32 + 1);
        let current = *levels.last().expect("indent stack never empty");
        if width > current {
            levels.push(width);
            out.push(Token {
                tok: Tok::Indent,
                pos: line_pos,
            });
        } else if width < current {
            while width < *levels.last().unwrap() {
                levels.pop();
                out.push(Token {
                    tok: Tok::Dedent,
                    pos: line_pos,
                });
            }
            if width != *levels.last().unwrap() {
                return Err(Diagnostic::new(
                    line_pos,
                    "inconsistent indentation: dedent does not match any outer level",
                ));
            }
        }
        lex_line(&raw[start..], line_no, width as u32 + 1, &mut out)?;
        out.push(Token {
            tok: Tok::Newline,
            pos: Pos::new(line_no, raw.chars().count() as u32 + 1),
        });
    }
    let end = Pos::new(source.lines().count() as u32 + 1, 1);
    while levels.len() > 1 {
        levels.pop();
        out.push(Token {
            tok: Tok::Dedent,
            pos: end,
        });
    }
    Ok(out)
}

fn lex_line(text: &str, line: u32, first_col: u32, out: &mut Vec<Token>) -> Result<(), Diagnostic> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos::new(line, first_col + i as u32);
        if c == ' ' || c == '\t' || c == '\r' {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = if c.is_ascii_alphabetic() || c == '_' {
            let end = (i..chars.len())
                .find(|&j| !(chars[j].is_ascii_alphanumeric() || chars[j] == '_'))
                .unwrap_or(chars.len());
            let word: String = chars[i..end].iter().collect();
            let tok = keyword(&word).unwrap_or(Tok::Ident(word));
            (tok, end - i)
        } else if c.is_ascii_digit() {
            let end = (i..chars.len())
                .find(|&j| !chars[j].is_ascii_digit())
                .unwrap_or(chars.len());
            let digits: String = chars[i..end].iter().collect();
            let value = digits.parse::<i64>().map_err(|_| {
                Diagnostic::new(pos, format!("integer literal {digits} out of range"))
            })?;
            (Tok::Int(value), end - i)
        } else {
            match (c, next) {
                (':', Some('=')) => (Tok::Assign, 2),
                ('!', Some('=')) => (Tok::Ne, 2),
                ('<', Some('=')) => (Tok::Le, 2),
                ('>', Some('=')) => (Tok::Ge, 2),
                ('=', Some('>')) => (Tok::Implies, 2),
                (':', _) => (Tok::Colon, 1),
                (',', _) => (Tok::Comma, 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                ('.', _) => (Tok::Dot, 1),
                ('=', _) => (Tok::Eq, 1),
                ('<', _) => (Tok::Lt, 1),
                ('>', _) => (Tok::Gt, 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                _ => return Err(Diagnostic::new(pos, format!("illegal character {c:?}"))),
            }
        };
        out.push(Token { tok, pos });
        i += len;
    }
    Ok(())
}
