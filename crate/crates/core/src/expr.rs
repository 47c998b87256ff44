//! Arithmetic expression surface and its recursive-descent parser.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := NUM | IDENT | '(' expr ')' | '-' factor
//!         | 'sqrt' '(' expr ')' | 'root' '(' INT ',' expr ')'
//!         | 'abs' '(' expr '-' expr ')' | 'max' '(' expr ',' expr ')'
//!         | 'rsub' '(' expr ',' expr ')'
//! ```

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Inv(Box<Expr>),
    Root(u32, Box<Expr>),
    AbsDiff(Box<Expr>, Box<Expr>),
    RectSub(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    /// Variables in order of first occurrence (left to right).
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Expr::Neg(e) | Expr::Inv(e) | Expr::Root(_, e) => e.collect_vars(out),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::AbsDiff(a, b)
            | Expr::RectSub(a, b)
            | Expr::Max(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Rewrites `1 / e` to `inv(e)` and folds `-c` into a negative constant.
    pub fn simplify(self) -> Expr {
        use Expr::*;
        let bin = |a: Box<Expr>, b: Box<Expr>| (Box::new(a.simplify()), Box::new(b.simplify()));
        match self {
            Div(a, b) => {
                let (a, b) = bin(a, b);
                if *a == Const(1.0) {
                    Inv(b)
                } else {
                    Div(a, b)
                }
            }
            Neg(e) => match e.simplify() {
                Const(c) => Const(-c),
                other => Neg(Box::new(other)),
            },
            Inv(e) => Inv(Box::new(e.simplify())),
            Root(m, e) => Root(m, Box::new(e.simplify())),
            Add(a, b) => {
                let (a, b) = bin(a, b);
                Add(a, b)
            }
            Sub(a, b) => {
                let (a, b) = bin(a, b);
                Sub(a, b)
            }
            Mul(a, b) => {
                let (a, b) = bin(a, b);
                Mul(a, b)
            }
            AbsDiff(a, b) => {
                let (a, b) = bin(a, b);
                AbsDiff(a, b)
            }
            RectSub(a, b) => {
                let (a, b) = bin(a, b);
                RectSub(a, b)
            }
            Max(a, b) => {
                let (a, b) = bin(a, b);
                Max(a, b)
            }
            leaf => leaf,
        }
    }

    /// Direct real-number evaluation. `None` on a missing variable or an
    /// operation outside its domain.
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<f64>) -> Option<f64> {
        use Expr::*;
        Some(match self {
            Const(c) => *c,
            Var(v) => env(v)?,
            Add(a, b) => a.eval(env)? + b.eval(env)?,
            Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Div(a, b) => {
                let d = b.eval(env)?;
                if d == 0.0 {
                    return None;
                }
                a.eval(env)? / d
            }
            Neg(e) => -e.eval(env)?,
            Inv(e) => {
                let d = e.eval(env)?;
                if d == 0.0 {
                    return None;
                }
                1.0 / d
            }
            Root(m, e) => {
                let v = e.eval(env)?;
                if v < 0.0 {
                    return None;
                }
                v.powf(1.0 / f64::from(*m))
            }
            AbsDiff(a, b) => (a.eval(env)? - b.eval(env)?).abs(),
            RectSub(a, b) => (a.eval(env)? - b.eval(env)?).max(0.0),
            Max(a, b) => a.eval(env)?.max(b.eval(env)?),
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expr::*;
        match self {
            Const(c) => write!(f, "{c}"),
            Var(v) => write!(f, "{v}"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Neg(e) => write!(f, "(-{e})"),
            Inv(e) => write!(f, "inv({e})"),
            Root(m, e) => write!(f, "root({m}, {e})"),
            AbsDiff(a, b) => write!(f, "abs({a} - {b})"),
            RectSub(a, b) => write!(f, "rsub({a}, {b})"),
            Max(a, b) => write!(f, "max({a}, {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at {pos}: {message}")]
pub struct SyntaxError {
    /// Byte offset into the source text.
    pub pos: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    End,
}

const KEYWORDS: [&str; 5] = ["sqrt", "root", "abs", "max", "rsub"];

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            c if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| SyntaxError { pos: start, message: format!("bad number `{text}`") })?;
                out.push((Tok::Num(v, text.to_string()), start));
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            other => return Err(SyntaxError { pos: start, message: format!("unexpected character `{other}`") }),
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError { pos: self.pos(), message: message.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), SyntaxError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.fail(format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().clone() {
            Tok::Num(v, _) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::Minus => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) if KEYWORDS.contains(&name.as_str()) => {
                self.bump();
                self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
                let e = match name.as_str() {
                    "sqrt" => Expr::Root(2, Box::new(self.expr()?)),
                    "root" => {
                        let pos = self.pos();
                        let m = match self.bump() {
                            Tok::Num(v, text) if text.bytes().all(|b| b.is_ascii_digit()) => v,
                            _ => return Err(SyntaxError { pos, message: "root index must be an integer".into() }),
                        };
                        if m < 2.0 || m > 254.0 {
                            return Err(SyntaxError { pos, message: format!("root index must be in 2..=254, got {m}") });
                        }
                        self.expect(Tok::Comma, "`,`")?;
                        Expr::Root(m as u32, Box::new(self.expr()?))
                    }
                    "abs" => {
                        let pos = self.pos();
                        match self.expr()? {
                            Expr::Sub(a, b) => Expr::AbsDiff(a, b),
                            _ => return Err(SyntaxError { pos, message: "abs expects a difference `abs(x - y)`".into() }),
                        }
                    }
                    _ => {
                        let a = self.expr()?;
                        self.expect(Tok::Comma, "`,`")?;
                        let b = self.expr()?;
                        if name == "max" {
                            Expr::Max(Box::new(a), Box::new(b))
                        } else {
                            Expr::RectSub(Box::new(a), Box::new(b))
                        }
                    }
                };
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(Expr::Var(name))
            }
            Tok::End => self.fail("unexpected end of input"),
            other => self.fail(format!("unexpected token {other:?}")),
        }
    }
}

/// Parses and simplifies an expression.
pub fn parse_expression(text: &str) -> Result<Expr, SyntaxError> {
    Ok(parse_raw(text)?.simplify())
}

/// Parses without the `1/e` and negative-constant rewrites.
pub fn parse_raw(text: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser { toks: tokenize(text)?, at: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail("trailing input");
    }
    Ok(e)
}
