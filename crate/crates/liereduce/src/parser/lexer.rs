//! Tokenizer for the problem description language. Tracks line and column
//! for every token so parse errors point at their source.

use crate::error::{Error, Result};
use num_bigint::BigInt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub line: usize,
    pub col: usize,
}

impl SourceSpan {
    pub fn error(self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(BigInt),
    /// Run of apostrophes immediately following an identifier.
    Primes(usize),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Eq,
    Arrow,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::Primes(n) => format!("{n} apostrophe(s)"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

pub fn lex(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();

    macro_rules! push {
        ($tok:expr, $span:expr) => {
            out.push(Token {
                tok: $tok,
                span: $span,
            })
        };
    }

    while let Some(&c) = chars.peek() {
        let span = SourceSpan { line, col };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let n: BigInt = s.parse().expect("digit run parses as integer");
                push!(Tok::Int(n), span);
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push!(Tok::Ident(s), span);
                if let Some(&'\'') = chars.peek() {
                    let pspan = SourceSpan { line, col };
                    let mut n = 0usize;
                    while let Some(&'\'') = chars.peek() {
                        n += 1;
                        chars.next();
                        col += 1;
                    }
                    push!(Tok::Primes(n), pspan);
                }
            }
            '-' => {
                chars.next();
                col += 1;
                if let Some(&'>') = chars.peek() {
                    chars.next();
                    col += 1;
                    push!(Tok::Arrow, span);
                } else {
                    push!(Tok::Minus, span);
                }
            }
            _ => {
                chars.next();
                col += 1;
                let tok = match c {
                    '+' => Tok::Plus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '^' => Tok::Caret,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    '=' => Tok::Eq,
                    other => {
                        return Err(span.error(format!("unexpected character `{other}`")));
                    }
                };
                push!(tok, span);
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: SourceSpan { line, col },
    });
    Ok(out)
}
