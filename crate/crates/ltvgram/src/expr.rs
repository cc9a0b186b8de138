//! Closed-form scalar expressions of time.
//!
//! The grammar covers real literals, the symbol `t`, binary `+ - * / ^`
//! (usual precedence, `^` right-associative), unary minus, and the functions
//! `sin cos exp ln abs`. Angles are radians and `ln` is the natural log.
//!
//! Expressions are immutable after parsing and safe to evaluate from
//! concurrent workers.

use crate::error::{Error, Result};
use std::fmt;

/// Unary operations. `Neg` is grammar-level; the rest are named functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Ln,
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

/// Expression tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    /// The time symbol `t`.
    Time,
    Unary(UnaryOp, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
}

/// A parsed scalar expression of `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr {
    ast: Node,
}

/// Parse an expression from source text.
pub fn parse_expr(src: &str) -> Result<ScalarExpr> {
    ScalarExpr::parse(src)
}

impl ScalarExpr {
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let ast = p.expr()?;
        match p.peek() {
            Token::Eof => Ok(ScalarExpr { ast }),
            tok => Err(Error::Syntax {
                offset: tok.offset(),
                message: format!("unexpected {}", tok.describe()),
            }),
        }
    }

    pub fn from_node(ast: Node) -> Self {
        ScalarExpr { ast }
    }

    /// Constant expression.
    pub fn constant(value: f64) -> Self {
        if value < 0.0 {
            ScalarExpr {
                ast: Node::Unary(UnaryOp::Neg, Box::new(Node::Num(-value))),
            }
        } else {
            ScalarExpr {
                ast: Node::Num(value),
            }
        }
    }

    pub fn ast(&self) -> &Node {
        &self.ast
    }

    /// Evaluate at time `t`. Domain errors (`ln` of a non-positive argument,
    /// division by zero, invalid powers) and non-finite intermediates are
    /// reported as errors, never returned as NaN/inf.
    pub fn eval(&self, t: f64) -> Result<f64> {
        eval_node(&self.ast, t).map_err(|cause| Error::Eval { t, cause })
    }

    /// Wrap in unary negation, collapsing a double negation.
    pub fn negated(&self) -> Self {
        match &self.ast {
            Node::Unary(UnaryOp::Neg, inner) => ScalarExpr {
                ast: (**inner).clone(),
            },
            node => ScalarExpr {
                ast: Node::Unary(UnaryOp::Neg, Box::new(node.clone())),
            },
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        ScalarExpr {
            ast: Node::Binary(
                BinOp::Add,
                Box::new(self.ast.clone()),
                Box::new(other.ast.clone()),
            ),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        ScalarExpr {
            ast: Node::Binary(
                BinOp::Sub,
                Box::new(self.ast.clone()),
                Box::new(other.ast.clone()),
            ),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        ScalarExpr {
            ast: Node::Binary(
                BinOp::Mul,
                Box::new(self.ast.clone()),
                Box::new(other.ast.clone()),
            ),
        }
    }

    /// True when the tree never references `t`.
    pub fn is_constant(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::Num(_) => true,
                Node::Time => false,
                Node::Unary(_, x) => walk(x),
                Node::Binary(_, a, b) => walk(a) && walk(b),
            }
        }
        walk(&self.ast)
    }
}

impl std::str::FromStr for ScalarExpr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScalarExpr::parse(s)
    }
}

fn eval_node(node: &Node, t: f64) -> std::result::Result<f64, String> {
    let v = match node {
        Node::Num(x) => *x,
        Node::Time => t,
        Node::Unary(op, x) => {
            let x = eval_node(x, t)?;
            match op {
                UnaryOp::Neg => -x,
                UnaryOp::Sin => x.sin(),
                UnaryOp::Cos => x.cos(),
                UnaryOp::Exp => x.exp(),
                UnaryOp::Abs => x.abs(),
                UnaryOp::Ln => {
                    if x <= 0.0 {
                        return Err(format!("ln of non-positive argument {x}"));
                    }
                    x.ln()
                }
            }
        }
        Node::Binary(op, a, b) => {
            let a = eval_node(a, t)?;
            let b = eval_node(b, t)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err("division by zero".to_string());
                    }
                    a / b
                }
                BinOp::Pow => pow_checked(a, b)?,
            }
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite intermediate value {v}"))
    }
}

// `^` is restricted to positive base or integer exponent; anything else would
// leave the reals.
fn pow_checked(base: f64, exp: f64) -> std::result::Result<f64, String> {
    if base > 0.0 {
        Ok(base.powf(exp))
    } else if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        Ok(base.powi(exp as i32))
    } else {
        Err(format!(
            "power {base}^{exp} with non-positive base and non-integer exponent"
        ))
    }
}

// ---------------------------------------------------------------------------
// Printing. Emits minimal parentheses; `Display` output re-parses to a
// structurally equal tree.
// ---------------------------------------------------------------------------

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn node_prec(node: &Node) -> u8 {
    match node {
        Node::Num(x) if *x < 0.0 => PREC_NEG,
        Node::Num(_) | Node::Time => PREC_ATOM,
        Node::Unary(UnaryOp::Neg, _) => PREC_NEG,
        Node::Unary(_, _) => PREC_ATOM,
        Node::Binary(BinOp::Pow, _, _) => PREC_POW,
        Node::Binary(BinOp::Mul | BinOp::Div, _, _) => PREC_MUL,
        Node::Binary(BinOp::Add | BinOp::Sub, _, _) => PREC_ADD,
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, min_prec: u8) -> fmt::Result {
    let prec = node_prec(node);
    let parens = prec < min_prec;
    if parens {
        write!(f, "(")?;
    }
    match node {
        Node::Num(x) => write!(f, "{x:?}")?,
        Node::Time => write!(f, "t")?,
        Node::Unary(UnaryOp::Neg, x) => {
            write!(f, "-")?;
            write_node(f, x, PREC_NEG)?;
        }
        Node::Unary(op, x) => {
            let name = match op {
                UnaryOp::Sin => "sin",
                UnaryOp::Cos => "cos",
                UnaryOp::Exp => "exp",
                UnaryOp::Ln => "ln",
                UnaryOp::Abs => "abs",
                UnaryOp::Neg => unreachable!(),
            };
            write!(f, "{name}(")?;
            write_node(f, x, PREC_ADD)?;
            write!(f, ")")?;
        }
        Node::Binary(op, a, b) => {
            let (sym, lp, rp) = match op {
                BinOp::Add => ("+", PREC_ADD, PREC_ADD + 1),
                BinOp::Sub => ("-", PREC_ADD, PREC_ADD + 1),
                BinOp::Mul => ("*", PREC_MUL, PREC_MUL + 1),
                BinOp::Div => ("/", PREC_MUL, PREC_MUL + 1),
                // Left operand of `^` must be an atom; the right side may be
                // a unary chain or another power (right associativity).
                BinOp::Pow => ("^", PREC_ATOM, PREC_NEG),
            };
            write_node(f, a, lp)?;
            write!(f, "{sym}")?;
            write_node(f, b, rp)?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.ast, 0)
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64, usize),
    Ident(String, usize),
    Op(char, usize),
    LParen(usize),
    RParen(usize),
    Eof,
}

impl Token {
    fn offset(&self) -> usize {
        match self {
            Token::Num(_, o)
            | Token::Ident(_, o)
            | Token::Op(_, o)
            | Token::LParen(o)
            | Token::RParen(o) => *o,
            Token::Eof => usize::MAX,
        }
    }

    fn describe(&self) -> String {
        match self {
            Token::Num(x, _) => format!("number {x:?}"),
            Token::Ident(s, _) => format!("identifier `{s}`"),
            Token::Op(c, _) => format!("operator `{c}`"),
            Token::LParen(_) => "`(`".to_string(),
            Token::RParen(_) => "`)`".to_string(),
            Token::Eof => "end of input".to_string(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                tokens.push(Token::Op(b as char, i));
                i += 1;
            }
            b'(' => {
                tokens.push(Token::LParen(i));
                i += 1;
            }
            b')' => {
                tokens.push(Token::RParen(i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| Error::Syntax {
                    offset: start,
                    message: format!("invalid number `{text}`"),
                })?;
                tokens.push(Token::Num(value, start));
            }
            b if b.is_ascii_alphabetic() || b == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push(Token::Ident(src[start..i].to_string(), start));
            }
            _ => {
                return Err(Error::Syntax {
                    offset: i,
                    message: format!("unexpected character `{}`", bytes[i] as char),
                })
            }
        }
    }
    tokens.push(Token::Eof);
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Token::Op(c @ ('+' | '-'), _) => {
                    let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Token::Op(c @ ('*' | '/'), _) => {
                    let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Node> {
        if let Token::Op('-', _) = self.peek() {
            self.bump();
            let inner = self.factor()?;
            return Ok(Node::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Token::Op('^', _) = self.peek() {
            self.bump();
            // Right-associative; the exponent may carry its own unary minus.
            let exp = self.factor()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.bump() {
            Token::Num(x, _) => Ok(Node::Num(x)),
            Token::Ident(name, offset) => match name.as_str() {
                "t" => Ok(Node::Time),
                "sin" | "cos" | "exp" | "ln" | "abs" => {
                    let op = match name.as_str() {
                        "sin" => UnaryOp::Sin,
                        "cos" => UnaryOp::Cos,
                        "exp" => UnaryOp::Exp,
                        "ln" => UnaryOp::Ln,
                        _ => UnaryOp::Abs,
                    };
                    match self.bump() {
                        Token::LParen(_) => {}
                        tok => {
                            return Err(Error::Syntax {
                                offset: tok.offset().min(offset + name.len()),
                                message: format!("expected `(` after function `{name}`"),
                            })
                        }
                    }
                    let arg = self.expr()?;
                    match self.bump() {
                        Token::RParen(_) => Ok(Node::Unary(op, Box::new(arg))),
                        tok => Err(Error::Syntax {
                            offset: tok.offset(),
                            message: format!("expected `)` to close `{name}(`"),
                        }),
                    }
                }
                _ => Err(Error::UnknownIdentifier { offset, name }),
            },
            Token::LParen(_) => {
                let inner = self.expr()?;
                match self.bump() {
                    Token::RParen(_) => Ok(inner),
                    tok => Err(Error::Syntax {
                        offset: tok.offset(),
                        message: "expected `)`".to_string(),
                    }),
                }
            }
            tok => Err(Error::Syntax {
                offset: tok.offset(),
                message: format!("expected a number, `t`, function call or `(`, found {}", tok.describe()),
            }),
        }
    }
}
