//! Infix scalar expressions over chart coordinates.
//!
//! Metric components and weight functions are written as strings like
//! `"1 - exp(-2*x0)"` in config files. Coordinates are named `x0..x{n-1}`.
//! Precedence, tightest first: `^` (right associative), unary `-`,
//! `*` `/`, `+` `-`. Evaluation is plain IEEE double precision and every
//! domain failure (division by zero, `log`/`sqrt` outside their domain,
//! non-finite results) is reported as an error, never returned as NaN.

use std::fmt;
use thiserror::Error;

/// Scalar expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Real constant.
    Const(f64),
    /// Chart coordinate `x{i}`.
    Coord(usize),
    /// Unary operation.
    Unary(UnaryOp, Box<Expr>),
    /// Binary operation.
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Exp,
    Log,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Sinh => "sinh",
            UnaryOp::Cosh => "cosh",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "sinh" => UnaryOp::Sinh,
            "cosh" => UnaryOp::Cosh,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            _ => return None,
        })
    }
}

/// Parse failure with the byte offset of the offending token.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown symbol `{name}` at byte {offset}")]
    UnknownSymbol { name: String, offset: usize },
}

/// Evaluation failure on the declared domain.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DomainError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive value {0}")]
    LogNonPositive(f64),
    #[error("sqrt of negative value {0}")]
    SqrtNegative(f64),
    #[error("point has {got} coordinates, expression uses x{index}")]
    CoordinateOutOfRange { index: usize, got: usize },
    #[error("non-finite result in `{op}`")]
    NonFinite { op: &'static str },
}

impl Expr {
    /// Evaluates the tree at a chart point.
    pub fn eval(&self, point: &[f64]) -> Result<f64, DomainError> {
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Coord(i) => {
                if *i >= point.len() {
                    return Err(DomainError::CoordinateOutOfRange {
                        index: *i,
                        got: point.len(),
                    });
                }
                point[*i]
            }
            Expr::Unary(op, inner) => {
                let v = inner.eval(point)?;
                match op {
                    UnaryOp::Neg => -v,
                    UnaryOp::Sin => v.sin(),
                    UnaryOp::Cos => v.cos(),
                    UnaryOp::Sinh => v.sinh(),
                    UnaryOp::Cosh => v.cosh(),
                    UnaryOp::Exp => v.exp(),
                    UnaryOp::Log => {
                        if v <= 0.0 {
                            return Err(DomainError::LogNonPositive(v));
                        }
                        v.ln()
                    }
                    UnaryOp::Sqrt => {
                        if v < 0.0 {
                            return Err(DomainError::SqrtNegative(v));
                        }
                        v.sqrt()
                    }
                    UnaryOp::Abs => v.abs(),
                }
            }
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval(point)?;
                let b = rhs.eval(point)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(DomainError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
        };
        if !value.is_finite() {
            return Err(DomainError::NonFinite { op: self.op_name() });
        }
        Ok(value)
    }

    fn op_name(&self) -> &'static str {
        match self {
            Expr::Const(_) => "const",
            Expr::Coord(_) => "coord",
            Expr::Unary(op, _) => op.name(),
            Expr::Binary(BinOp::Add, ..) => "+",
            Expr::Binary(BinOp::Sub, ..) => "-",
            Expr::Binary(BinOp::Mul, ..) => "*",
            Expr::Binary(BinOp::Div, ..) => "/",
            Expr::Binary(BinOp::Pow, ..) => "^",
        }
    }

    /// Largest coordinate index mentioned, if any.
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Coord(i) => Some(*i),
            Expr::Unary(_, inner) => inner.max_coord(),
            Expr::Binary(_, lhs, rhs) => match (lhs.max_coord(), rhs.max_coord()) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            },
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Const(c) if *c < 0.0 => 2, // prints with a leading minus
            Expr::Const(_) | Expr::Coord(_) => 5,
            Expr::Unary(UnaryOp::Neg, _) => 2,
            Expr::Unary(..) => 5, // function call syntax self-delimits
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 0,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 1,
            Expr::Binary(BinOp::Pow, ..) => 3,
        }
    }
}

impl fmt::Display for Expr {
    /// Prints with the minimal parentheses needed so that
    /// `parse(&e.to_string())` reconstructs the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn paren(f: &mut fmt::Formatter<'_>, e: &Expr, need: bool) -> fmt::Result {
            if need {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Const(c) => {
                if c.fract() == 0.0 && c.abs() < 1e15 {
                    write!(f, "{c:.1}")
                } else {
                    write!(f, "{c:e}")
                }
            }
            Expr::Coord(i) => write!(f, "x{i}"),
            Expr::Unary(UnaryOp::Neg, inner) => {
                write!(f, "-")?;
                paren(f, inner, inner.precedence() < 2)
            }
            Expr::Unary(op, inner) => write!(f, "{}({inner})", op.name()),
            Expr::Binary(op, lhs, rhs) => {
                let (lp, rp, sym) = match op {
                    BinOp::Add => (0, 1, "+"),
                    // the right operand of `-` must bind tighter than `+ -`
                    BinOp::Sub => (0, 1, "-"),
                    BinOp::Mul => (1, 2, "*"),
                    BinOp::Div => (1, 2, "/"),
                    // right associative: left operand must bind strictly tighter
                    BinOp::Pow => (4, 3, "^"),
                };
                paren(f, lhs, lhs.precedence() < lp)?;
                write!(f, " {sym} ")?;
                paren(f, rhs, rhs.precedence() < rp)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns the next token with its starting byte offset.
    fn next(&mut self) -> Result<Option<(Token, usize)>, ParseError> {
        self.skip_ws();
        if self.pos >= self.bytes.len() {
            return Ok(None);
        }
        let start = self.pos;
        let b = self.bytes[self.pos];
        let tok = match b {
            b'+' => {
                self.pos += 1;
                Token::Plus
            }
            b'-' => {
                self.pos += 1;
                Token::Minus
            }
            b'*' => {
                self.pos += 1;
                Token::Star
            }
            b'/' => {
                self.pos += 1;
                Token::Slash
            }
            b'^' => {
                self.pos += 1;
                Token::Caret
            }
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            b'0'..=b'9' | b'.' => {
                let mut end = self.pos;
                let mut seen_exp = false;
                while end < self.bytes.len() {
                    let c = self.bytes[end];
                    let is_num = c.is_ascii_digit() || c == b'.';
                    let is_exp = (c == b'e' || c == b'E') && !seen_exp && end > self.pos;
                    if is_num {
                        end += 1;
                    } else if is_exp {
                        // accept e / e+ / e- only when followed by a digit
                        let mut probe = end + 1;
                        if probe < self.bytes.len()
                            && (self.bytes[probe] == b'+' || self.bytes[probe] == b'-')
                        {
                            probe += 1;
                        }
                        if probe < self.bytes.len() && self.bytes[probe].is_ascii_digit() {
                            seen_exp = true;
                            end = probe;
                        } else {
                            break;
                        }
                    } else {
                        break;
                    }
                }
                let text = &self.src[self.pos..end];
                let value = text.parse::<f64>().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("invalid number `{text}`"),
                })?;
                self.pos = end;
                Token::Num(value)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut end = self.pos;
                while end < self.bytes.len()
                    && (self.bytes[end].is_ascii_alphanumeric() || self.bytes[end] == b'_')
                {
                    end += 1;
                }
                let name = self.src[self.pos..end].to_string();
                self.pos = end;
                Token::Ident(name)
            }
            other => {
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(Some((tok, start)))
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    src_len: usize,
}

const BP_ADD: (u8, u8) = (10, 11);
const BP_MUL: (u8, u8) = (20, 21);
const BP_NEG: u8 = 30;
const BP_POW: (u8, u8) = (41, 40);

impl Parser {
    fn peek(&self) -> Option<&(Token, usize)> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<(Token, usize)> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.peek().map(|(_, o)| *o).unwrap_or(self.src_len)
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.prefix()?;
        while let Some((tok, _)) = self.peek() {
            let (lbp, rbp, op) = match tok {
                Token::Plus => (BP_ADD.0, BP_ADD.1, BinOp::Add),
                Token::Minus => (BP_ADD.0, BP_ADD.1, BinOp::Sub),
                Token::Star => (BP_MUL.0, BP_MUL.1, BinOp::Mul),
                Token::Slash => (BP_MUL.0, BP_MUL.1, BinOp::Div),
                Token::Caret => (BP_POW.0, BP_POW.1, BinOp::Pow),
                _ => break,
            };
            if lbp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.expr(rbp)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        let offset = self.here();
        let (tok, tok_off) = self.bump().ok_or_else(|| ParseError::Syntax {
            offset,
            message: "unexpected end of input".into(),
        })?;
        match tok {
            Token::Num(v) => Ok(Expr::Const(v)),
            Token::Minus => {
                let inner = self.expr(BP_NEG)?;
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)))
            }
            Token::LParen => {
                let inner = self.expr(0)?;
                match self.bump() {
                    Some((Token::RParen, _)) => Ok(inner),
                    other => Err(ParseError::Syntax {
                        offset: other.map(|(_, o)| o).unwrap_or(self.src_len),
                        message: "expected `)`".into(),
                    }),
                }
            }
            Token::Ident(name) => {
                if let Some(op) = UnaryOp::from_name(&name) {
                    match self.bump() {
                        Some((Token::LParen, _)) => {}
                        other => {
                            return Err(ParseError::Syntax {
                                offset: other.map(|(_, o)| o).unwrap_or(self.src_len),
                                message: format!("expected `(` after `{name}`"),
                            })
                        }
                    }
                    let arg = self.expr(0)?;
                    match self.bump() {
                        Some((Token::RParen, _)) => Ok(Expr::Unary(op, Box::new(arg))),
                        other => Err(ParseError::Syntax {
                            offset: other.map(|(_, o)| o).unwrap_or(self.src_len),
                            message: "expected `)`".into(),
                        }),
                    }
                } else if let Some(index) = parse_coord_name(&name) {
                    Ok(Expr::Coord(index))
                } else {
                    Err(ParseError::UnknownSymbol {
                        name,
                        offset: tok_off,
                    })
                }
            }
            other => Err(ParseError::Syntax {
                offset: tok_off,
                message: format!("unexpected token `{other:?}`"),
            }),
        }
    }
}

fn parse_coord_name(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // reject leading zeros like x01 so printing stays a bijection
    if digits.len() > 1 && digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

/// Parses a single infix expression.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let mut lexer = Lexer::new(source);
    let mut tokens = Vec::new();
    while let Some(t) = lexer.next()? {
        tokens.push(t);
    }
    let src_len = source.len();
    let mut parser = Parser {
        tokens,
        pos: 0,
        src_len,
    };
    let expr = parser.expr(0)?;
    if let Some((tok, offset)) = parser.peek() {
        return Err(ParseError::Syntax {
            offset: *offset,
            message: format!("trailing input `{tok:?}`"),
        });
    }
    Ok(expr)
}
