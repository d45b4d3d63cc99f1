use thiserror::Error;

use super::Expr;
use crate::linalg::parse_q;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("unknown identifier `{name}` at column {column}")]
    UnknownIdentifier { column: usize, name: String },
}

impl ParseError {
    /// 1-based column of the offending character.
    pub fn column(&self) -> usize {
        match self {
            ParseError::Syntax { column, .. } | ParseError::UnknownIdentifier { column, .. } => *column,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            out.push((Tok::Num(chars[start..i].iter().collect()), col));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Sym(c), col));
            i += 1;
        } else {
            return Err(ParseError::Syntax { column: col, message: format!("unexpected character `{c}`") });
        }
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

/// Parses an expression in the variable `x`.
///
/// ```text
/// expr  = term { ("+" | "-") term }
/// term  = unary { ("*" | "/") unary }
/// unary = "-" unary | power
/// power = atom { "^" ["-"] integer }
/// atom  = number | "x" | ("exp" | "sin" | "cos") "(" expr ")" | "(" expr ")"
/// ```
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut p = Lexer { toks: lex(text)?, pos: 0 };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        t => Err(p.error(format!("unexpected {}", describe(t)))),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(n) => format!("number `{n}`"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Sym(c) => format!("`{c}`"),
        Tok::End => "end of input".to_string(),
    }
}

impl Lexer {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn column(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error(&self, message: String) -> ParseError {
        ParseError::Syntax { column: self.column(), message }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`, found {}", describe(self.peek()))))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.term()?;
        loop {
            if self.eat('+') {
                e = Expr::add(e, self.term()?);
            } else if self.eat('-') {
                e = Expr::sub(e, self.term()?);
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.unary()?;
        loop {
            if self.eat('*') {
                e = Expr::mul(e, self.unary()?);
            } else if self.eat('/') {
                e = Expr::div(e, self.unary()?);
            } else {
                return Ok(e);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            Ok(Expr::neg(self.unary()?))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.atom()?;
        while self.eat('^') {
            let negative = self.eat('-');
            let column = self.column();
            let n = match self.bump() {
                Tok::Num(s) => s.parse::<i64>().map_err(|_| ParseError::Syntax {
                    column,
                    message: format!("exponent `{s}` is not an integer"),
                })?,
                t => {
                    return Err(ParseError::Syntax {
                        column,
                        message: format!("expected integer exponent, found {}", describe(&t)),
                    })
                }
            };
            e = Expr::pow(e, if negative { -n } else { n });
        }
        Ok(e)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let column = self.column();
        match self.bump() {
            Tok::Num(s) => parse_q(&s)
                .map(Expr::c)
                .ok_or(ParseError::Syntax { column, message: format!("malformed number `{s}`") }),
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::Var),
                "exp" | "sin" | "cos" => {
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    Ok(match name.as_str() {
                        "exp" => Expr::exp(arg),
                        "sin" => Expr::sin(arg),
                        _ => Expr::cos(arg),
                    })
                }
                _ => Err(ParseError::UnknownIdentifier { column, name }),
            },
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            t => Err(ParseError::Syntax { column, message: format!("unexpected {}", describe(&t)) }),
        }
    }
}
