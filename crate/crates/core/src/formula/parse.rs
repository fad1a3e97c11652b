//! Recursive-descent parser for the concrete formula syntax.
//!
//! ```text
//! formula  := conj ("or" conj)*
//! conj     := unary ("and" unary)*
//! unary    := "true" | "not" atom | atom | "(" formula ")"
//! atom     := IDENT "(" term ("," term)* ")"
//! term     := "?" IDENT | IDENT "(" term ("," term)* ")" | IDENT
//!           | NUMBER | STRING | "true" | "false"
//! ```

use thiserror::Error;

use super::{Atom, Formula, Term, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Num(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

const KEYWORDS: [&str; 5] = ["and", "or", "not", "true", "false"];

pub(crate) fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

impl<'a> Lexer<'a> {
    fn err<T>(&self, position: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            position,
            message: message.into(),
        })
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek_char() {
            if !is_ident_char(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
        self.src[start..self.pos].to_string()
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut out = Vec::new();
        while let Some(c) = self.peek_char() {
            let start = self.pos;
            match c {
                c if c.is_whitespace() => self.pos += c.len_utf8(),
                '(' => {
                    self.pos += 1;
                    out.push((start, Tok::LParen));
                }
                ')' => {
                    self.pos += 1;
                    out.push((start, Tok::RParen));
                }
                ',' => {
                    self.pos += 1;
                    out.push((start, Tok::Comma));
                }
                '?' => {
                    self.pos += 1;
                    match self.peek_char() {
                        Some(c) if is_ident_start(c) => {
                            let name = self.ident();
                            out.push((start, Tok::Var(name)));
                        }
                        _ => return self.err(self.pos, "expected variable name after `?`"),
                    }
                }
                '"' => {
                    self.pos += 1;
                    let mut s = String::new();
                    loop {
                        let Some(c) = self.peek_char() else {
                            return self.err(start, "unterminated string literal");
                        };
                        self.pos += c.len_utf8();
                        match c {
                            '"' => break,
                            '\\' => {
                                let Some(e) = self.peek_char() else {
                                    return self.err(start, "unterminated string literal");
                                };
                                self.pos += e.len_utf8();
                                match e {
                                    '"' => s.push('"'),
                                    '\\' => s.push('\\'),
                                    'n' => s.push('\n'),
                                    other => {
                                        return self.err(
                                            self.pos - other.len_utf8() - 1,
                                            format!("unknown escape `\\{other}`"),
                                        )
                                    }
                                }
                            }
                            c => s.push(c),
                        }
                    }
                    out.push((start, Tok::Str(s)));
                }
                c if c.is_ascii_digit() || c == '-' || c == '.' => {
                    self.pos += c.len_utf8();
                    while let Some(c) = self.peek_char() {
                        let exponent_sign = matches!(c, '-' | '+')
                            && matches!(self.src[..self.pos].chars().last(), Some('e' | 'E'));
                        if c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E') || exponent_sign {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                    let text = &self.src[start..self.pos];
                    match text.parse::<f64>() {
                        Ok(v) if v.is_finite() => out.push((start, Tok::Num(v))),
                        _ => return self.err(start, format!("invalid number `{text}`")),
                    }
                }
                c if is_ident_start(c) => {
                    let name = self.ident();
                    out.push((start, Tok::Ident(name)));
                }
                other => return self.err(start, format!("unexpected character `{other}`")),
            }
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn pos(&self) -> usize {
        self.toks.get(self.idx).map_or(self.end, |t| t.0)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|t| &t.1)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.idx + k).map(|t| &t.1)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|t| t.1.clone());
        self.idx += 1;
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.pos(),
            message: message.into(),
        })
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.idx += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.conjunction()?];
        while self.peek_keyword("or") {
            self.idx += 1;
            parts.push(self.conjunction()?);
        }
        Ok(Formula::or(parts))
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.unary()?];
        while self.peek_keyword("and") {
            self.idx += 1;
            parts.push(self.unary()?);
        }
        Ok(Formula::and(parts))
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Some(Tok::LParen) => {
                self.idx += 1;
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Some(Tok::Ident(s)) if s == "true" => {
                self.idx += 1;
                Ok(Formula::True)
            }
            Some(Tok::Ident(s)) if s == "not" => {
                self.idx += 1;
                if !matches!(self.peek(), Some(Tok::Ident(s)) if !is_keyword(s)) {
                    return self.err("`not` applies only to a relation atom");
                }
                Ok(Formula::Atom(self.atom()?.negate()))
            }
            Some(Tok::Ident(s)) if !is_keyword(s) => Ok(Formula::Atom(self.atom()?)),
            Some(_) => self.err("expected a relation atom, `true`, `not` or `(`"),
            None => self.err("unexpected end of input"),
        }
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let Some(Tok::Ident(name)) = self.bump() else {
            unreachable!("caller checked for an identifier")
        };
        if self.peek() != Some(&Tok::LParen) {
            return self.err(format!("expected `(` after relation name `{name}`"));
        }
        let args = self.arg_list()?;
        Ok(Atom::new(name, args))
    }

    fn arg_list(&mut self) -> Result<Vec<Term>, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut args = vec![self.term()?];
        while self.peek() == Some(&Tok::Comma) {
            self.idx += 1;
            args.push(self.term()?);
        }
        self.expect(Tok::RParen, "`,` or `)`")?;
        Ok(args)
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Var(v)) => {
                self.idx += 1;
                Ok(Term::Var(v))
            }
            Some(Tok::Num(n)) => {
                self.idx += 1;
                Ok(Term::Lit(Value::number(n)))
            }
            Some(Tok::Str(s)) => {
                self.idx += 1;
                Ok(Term::Lit(Value::Text(s)))
            }
            Some(Tok::Ident(s)) if s == "true" || s == "false" => {
                self.idx += 1;
                Ok(Term::Lit(Value::Bool(s == "true")))
            }
            Some(Tok::Ident(s)) if is_keyword(&s) => {
                self.err(format!("keyword `{s}` cannot be used as a term"))
            }
            Some(Tok::Ident(s)) => {
                if self.peek_at(1) == Some(&Tok::LParen) {
                    self.idx += 1;
                    let args = self.arg_list()?;
                    Ok(Term::Func { name: s, args })
                } else {
                    self.idx += 1;
                    Ok(Term::Obj(s))
                }
            }
            _ => self.err("expected a term"),
        }
    }
}

fn tokenize(text: &str) -> Result<Parser, ParseError> {
    let toks = Lexer { src: text, pos: 0 }.tokens()?;
    if toks.is_empty() {
        return Err(ParseError {
            position: 0,
            message: "empty formula".into(),
        });
    }
    Ok(Parser {
        toks,
        idx: 0,
        end: text.len(),
    })
}

/// Parses the concrete syntax into a [`Formula`].
///
/// `and` binds tighter than `or`; chains of the same connective become one
/// n-ary node, while explicit parentheses keep nesting.
pub fn parse(text: &str) -> Result<Formula, ParseError> {
    let mut p = tokenize(text)?;
    let f = p.formula()?;
    if p.idx < p.toks.len() {
        return p.err("unexpected trailing input");
    }
    Ok(f)
}

pub(crate) fn parse_term(text: &str) -> Result<Term, ParseError> {
    let mut p = tokenize(text)?;
    let t = p.term()?;
    if p.idx < p.toks.len() {
        return p.err("unexpected trailing input");
    }
    Ok(t)
}
