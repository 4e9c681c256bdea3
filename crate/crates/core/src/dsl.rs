//! Expression language for problem data: functions of `t` and `x` built from
//! arithmetic, a fixed set of elementary functions, and the constants `pi`
//! and `e`. Expressions are immutable after parsing and evaluation is pure,
//! so one parsed tree can be shared across threads.
//!
//! Precedence, loosest to tightest: `+ -`, then `* /`, then unary minus,
//! then `^` (right-associative), then function application. Note that unary
//! minus binds looser than `^`: `-x^2` is `-(x^2)`.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DslError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("domain error: {function}({argument}) is undefined")]
    Domain { function: &'static str, argument: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Exp,
    Log,
    Sqrt,
    Abs,
    Pow,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Pow => "pow",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "pow" => Func::Pow,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Var(Var),
    Const(Constant),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

// ---------------------------------------------------------------- lexer --

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, DslError> {
        let mut lx = Lexer { src: src.as_bytes(), pos: 0 };
        let mut out = Vec::new();
        loop {
            lx.skip_ws();
            let start = lx.pos;
            if lx.pos >= lx.src.len() {
                out.push((Tok::Eof, start));
                return Ok(out);
            }
            let c = lx.src[lx.pos];
            let tok = match c {
                b'+' => {
                    lx.pos += 1;
                    Tok::Plus
                }
                b'-' => {
                    lx.pos += 1;
                    Tok::Minus
                }
                b'*' => {
                    lx.pos += 1;
                    Tok::Star
                }
                b'/' => {
                    lx.pos += 1;
                    Tok::Slash
                }
                b'^' => {
                    lx.pos += 1;
                    Tok::Caret
                }
                b'(' => {
                    lx.pos += 1;
                    Tok::LParen
                }
                b')' => {
                    lx.pos += 1;
                    Tok::RParen
                }
                b',' => {
                    lx.pos += 1;
                    Tok::Comma
                }
                b'0'..=b'9' => lx.number(start)?,
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    while lx.pos < lx.src.len()
                        && (lx.src[lx.pos].is_ascii_alphanumeric() || lx.src[lx.pos] == b'_')
                    {
                        lx.pos += 1;
                    }
                    Tok::Ident(String::from_utf8_lossy(&lx.src[start..lx.pos]).into_owned())
                }
                _ => {
                    return Err(DslError::Syntax {
                        offset: start,
                        expected: "a number, identifier, operator, or parenthesis".into(),
                    })
                }
            };
            out.push((tok, start));
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn number(&mut self, start: usize) -> Result<Tok, DslError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                // not an exponent after all ("2e" could start "2*e"? no: require digits)
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse::<f64>().map(Tok::Num).map_err(|_| DslError::Syntax {
            offset: start,
            expected: "a valid numeric literal".into(),
        })
    }
}

// --------------------------------------------------------------- parser --

struct Parser {
    toks: Vec<(Tok, usize)>,
    cur: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.cur].0
    }

    fn offset(&self) -> usize {
        self.toks[self.cur].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.cur].0.clone();
        if self.cur + 1 < self.toks.len() {
            self.cur += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), DslError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(DslError::Syntax { offset: self.offset(), expected: what.into() })
        }
    }

    fn parse_add(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.parse_mul()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.parse_mul()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn parse_mul(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.parse_unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    // unary minus binds looser than `^`: -x^2 == -(x^2)
    fn parse_unary(&mut self) -> Result<Expr, DslError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.parse_unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr, DslError> {
        let base = self.parse_atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            // right-associative; allow a negated exponent
            let exp = self.parse_unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr, DslError> {
        let offset = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Number(v)),
            Tok::LParen => {
                let inner = self.parse_add()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => self.ident(name, offset),
            _ => Err(DslError::Syntax { offset, expected: "a number, variable, function, or `(`".into() }),
        }
    }

    fn ident(&mut self, name: String, offset: usize) -> Result<Expr, DslError> {
        match name.as_str() {
            "t" => return Ok(Expr::Var(Var::T)),
            "x" => return Ok(Expr::Var(Var::X)),
            "pi" => return Ok(Expr::Const(Constant::Pi)),
            "e" => return Ok(Expr::Const(Constant::E)),
            _ => {}
        }
        let func = Func::from_name(&name)
            .ok_or(DslError::UnknownIdentifier { offset, name: name.clone() })?;
        self.expect(Tok::LParen, "`(` after function name")?;
        let mut args = vec![self.parse_add()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.parse_add()?);
        }
        let close_offset = self.offset();
        self.expect(Tok::RParen, "`)` closing the argument list")?;
        if args.len() != func.arity() {
            return Err(DslError::Syntax {
                offset: close_offset,
                expected: format!("{} argument(s) to {}, got {}", func.arity(), func.name(), args.len()),
            });
        }
        Ok(Expr::Call(func, args))
    }
}

/// Parse a source string into an expression tree.
pub fn parse(src: &str) -> Result<Expr, DslError> {
    let toks = Lexer::tokens(src)?;
    if toks.len() == 1 {
        return Err(DslError::Syntax { offset: 0, expected: "an expression".into() });
    }
    let mut p = Parser { toks, cur: 0 };
    let expr = p.parse_add()?;
    if *p.peek() != Tok::Eof {
        return Err(DslError::Syntax { offset: p.offset(), expected: "end of input".into() });
    }
    Ok(expr)
}

// ----------------------------------------------------------- evaluation --

impl Expr {
    /// Evaluate at (t, x). Domain violations (log of a nonpositive value,
    /// sqrt of a negative, NaN-producing arithmetic) are reported as errors
    /// rather than silently propagating NaN.
    pub fn eval(&self, t: f64, x: f64) -> Result<f64, DslError> {
        match self {
            Expr::Number(v) => Ok(*v),
            Expr::Var(Var::T) => Ok(t),
            Expr::Var(Var::X) => Ok(x),
            Expr::Const(Constant::Pi) => Ok(std::f64::consts::PI),
            Expr::Const(Constant::E) => Ok(std::f64::consts::E),
            Expr::Neg(inner) => Ok(-inner.eval(t, x)?),
            Expr::Bin(op, lhs, rhs) => {
                let a = lhs.eval(t, x)?;
                let b = rhs.eval(t, x)?;
                let v = match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                };
                if v.is_nan() && a.is_finite() && b.is_finite() {
                    let (name, arg): (&'static str, f64) = match op {
                        BinOp::Div => ("div", b),
                        BinOp::Pow => ("pow", a),
                        _ => ("arith", a),
                    };
                    return Err(DslError::Domain { function: name, argument: arg });
                }
                Ok(v)
            }
            Expr::Call(func, args) => {
                let a = args[0].eval(t, x)?;
                match func {
                    Func::Sin => Ok(a.sin()),
                    Func::Cos => Ok(a.cos()),
                    Func::Sinh => Ok(a.sinh()),
                    Func::Cosh => Ok(a.cosh()),
                    Func::Exp => Ok(a.exp()),
                    Func::Abs => Ok(a.abs()),
                    Func::Log => {
                        if a <= 0.0 {
                            Err(DslError::Domain { function: "log", argument: a })
                        } else {
                            Ok(a.ln())
                        }
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            Err(DslError::Domain { function: "sqrt", argument: a })
                        } else {
                            Ok(a.sqrt())
                        }
                    }
                    Func::Pow => {
                        let b = args[1].eval(t, x)?;
                        let v = a.powf(b);
                        if v.is_nan() && a.is_finite() && b.is_finite() {
                            Err(DslError::Domain { function: "pow", argument: a })
                        } else {
                            Ok(v)
                        }
                    }
                }
            }
        }
    }
}

// -------------------------------------------------------------- display --

impl fmt::Display for Expr {
    /// Fully parenthesized canonical form; `parse(print(e))` is structurally
    /// equal to `e`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => {
                if *v == v.trunc() && v.abs() < 1e15 {
                    write!(f, "{v:.1}")
                } else {
                    write!(f, "{v:e}")
                }
            }
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Var(Var::X) => write!(f, "x"),
            Expr::Const(Constant::Pi) => write!(f, "pi"),
            Expr::Const(Constant::E) => write!(f, "e"),
            Expr::Neg(inner) => write!(f, "(-{inner})"),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a}{sym}{b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}
