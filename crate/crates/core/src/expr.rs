//! Guard and effect expression language.
//!
//! Expressions use an infix grammar with C-style precedence. The value domain
//! holds 64-bit integers, booleans, and an opaque reference constant with two
//! inhabitants (`null` and `this`) that only supports identity comparison.
//!
//! Integer arithmetic wraps on overflow. Shift amounts are taken modulo 64.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Type {
    Int,
    Bool,
    Ref,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Int => "int",
            Type::Bool => "bool",
            Type::Ref => "ref",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Bool(bool),
    /// `true` for `null`, `false` for `this`.
    Ref(bool),
}

impl Value {
    pub fn ty(self) -> Type {
        match self {
            Value::Int(_) => Type::Int,
            Value::Bool(_) => Type::Bool,
            Value::Ref(_) => Type::Ref,
        }
    }

    pub fn as_int(self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Ref(true) => f.write_str("null"),
            Value::Ref(false) => f.write_str("this"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    Not,
    Neg,
    BitNot,
}

impl UnOp {
    pub const ALL: [UnOp; 3] = [UnOp::Not, UnOp::Neg, UnOp::BitNot];

    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Not => "!",
            UnOp::Neg => "-",
            UnOp::BitNot => "~",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Mul,
    Div,
    Rem,
    Add,
    Sub,
    Shl,
    Shr,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    BitAnd,
    BitXor,
    BitOr,
    And,
    Or,
}

impl BinOp {
    pub const ALL: [BinOp; 18] = [
        BinOp::Mul,
        BinOp::Div,
        BinOp::Rem,
        BinOp::Add,
        BinOp::Sub,
        BinOp::Shl,
        BinOp::Shr,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::BitAnd,
        BinOp::BitXor,
        BinOp::BitOr,
        BinOp::And,
        BinOp::Or,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::BitAnd => "&",
            BinOp::BitXor => "^",
            BinOp::BitOr => "|",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter. All binary operators are
    /// left-associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Mul | BinOp::Div | BinOp::Rem => 10,
            BinOp::Add | BinOp::Sub => 9,
            BinOp::Shl | BinOp::Shr => 8,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 7,
            BinOp::Eq | BinOp::Ne => 6,
            BinOp::BitAnd => 5,
            BinOp::BitXor => 4,
            BinOp::BitOr => 3,
            BinOp::And => 2,
            BinOp::Or => 1,
        }
    }

    fn is_arith(self) -> bool {
        matches!(
            self,
            BinOp::Mul
                | BinOp::Div
                | BinOp::Rem
                | BinOp::Add
                | BinOp::Sub
                | BinOp::Shl
                | BinOp::Shr
                | BinOp::BitAnd
                | BinOp::BitXor
                | BinOp::BitOr
        )
    }

    fn is_relational(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

impl AssignOp {
    pub const ALL: [AssignOp; 11] = [
        AssignOp::Set,
        AssignOp::Add,
        AssignOp::Sub,
        AssignOp::Mul,
        AssignOp::Div,
        AssignOp::Rem,
        AssignOp::And,
        AssignOp::Or,
        AssignOp::Xor,
        AssignOp::Shl,
        AssignOp::Shr,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            AssignOp::Set => "=",
            AssignOp::Add => "+=",
            AssignOp::Sub => "-=",
            AssignOp::Mul => "*=",
            AssignOp::Div => "/=",
            AssignOp::Rem => "%=",
            AssignOp::And => "&=",
            AssignOp::Or => "|=",
            AssignOp::Xor => "^=",
            AssignOp::Shl => "<<=",
            AssignOp::Shr => ">>=",
        }
    }

    /// The binary operator a compound assignment applies, `None` for `=`.
    pub fn base(self) -> Option<BinOp> {
        Some(match self {
            AssignOp::Set => return None,
            AssignOp::Add => BinOp::Add,
            AssignOp::Sub => BinOp::Sub,
            AssignOp::Mul => BinOp::Mul,
            AssignOp::Div => BinOp::Div,
            AssignOp::Rem => BinOp::Rem,
            AssignOp::And => BinOp::BitAnd,
            AssignOp::Or => BinOp::BitOr,
            AssignOp::Xor => BinOp::BitXor,
            AssignOp::Shl => BinOp::Shl,
            AssignOp::Shr => BinOp::Shr,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Null,
    This,
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn unary(op: UnOp, e: Expr) -> Expr {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// Variable names referenced by the expression, in first-occurrence order.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            _ => {}
        }
    }

    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let mut p = Parser::new(src)?;
        let e = p.expr(0)?;
        p.expect_end()?;
        Ok(e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(v) if *v < 0 => write!(f, "({v})"),
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Bool(v) => write!(f, "{v}"),
            Expr::Null => f.write_str("null"),
            Expr::This => f.write_str("this"),
            Expr::Var(v) => f.write_str(v),
            Expr::Unary(op, e) => {
                f.write_str(op.symbol())?;
                match **e {
                    Expr::Int(v) if *op == UnOp::Neg && v >= 0 => write!(f, "({v})"),
                    Expr::Binary(..) => write!(f, "({e})"),
                    Expr::Unary(..) => write!(f, "({e})"),
                    _ => write!(f, "{e}"),
                }
            }
            Expr::Binary(op, l, r) => {
                let prec = op.precedence();
                match **l {
                    Expr::Binary(lop, ..) if lop.precedence() < prec => write!(f, "({l})")?,
                    _ => write!(f, "{l}")?,
                }
                write!(f, " {} ", op.symbol())?;
                match **r {
                    Expr::Binary(rop, ..) if rop.precedence() <= prec => write!(f, "({r})"),
                    _ => write!(f, "{r}"),
                }
            }
        }
    }
}

/// A transition effect step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Assign { var: String, op: AssignOp, value: Expr },
    Emit { signal: String, args: Vec<Expr> },
}

impl Action {
    /// Parses `x += e` or `emit Sig(a, b)`.
    pub fn parse(src: &str) -> Result<Action, ParseError> {
        let mut p = Parser::new(src)?;
        let action = p.action()?;
        p.expect_end()?;
        Ok(action)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Assign { var, op, value } => write!(f, "{var} {} {value}", op.symbol()),
            Action::Emit { signal, args } => {
                write!(f, "emit {signal}")?;
                if !args.is_empty() {
                    f.write_str("(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("column {column}: {message}")]
pub struct ParseError {
    /// 1-based character column inside the parsed text.
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Int(i64),
    Ident(String),
    Sym(&'static str),
    End,
}

const SYMBOLS: [&str; 37] = [
    "<<=", ">>=", "&&", "||", "<<", ">>", "<=", ">=", "==", "!=", "+=", "-=", "*=", "/=", "%=",
    "&=", "|=", "^=", "(", ")", ",", "+", "-", "*", "/", "%", "<", ">", "!", "~", "&", "|",
    "^", "=", "[", "]", ";",
];

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let col = i + 1;
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<i64>().map_err(|_| ParseError {
                column: col,
                message: format!("integer literal `{text}` out of range"),
            })?;
            out.push((Tok::Int(v), col));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
            continue;
        }
        for sym in SYMBOLS {
            let n = sym.len();
            if i + n <= chars.len() && chars[i..i + n].iter().copied().eq(sym.chars()) {
                out.push((Tok::Sym(sym), col));
                i += n;
                continue 'outer;
            }
        }
        return Err(ParseError { column: col, message: format!("unexpected character `{c}`") });
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

fn binop_for(sym: &str) -> Option<BinOp> {
    BinOp::ALL.into_iter().find(|op| op.symbol() == sym)
}

fn assignop_for(sym: &str) -> Option<AssignOp> {
    AssignOp::ALL.into_iter().find(|op| op.symbol() == sym)
}

pub(crate) struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    pub(crate) fn new(src: &str) -> Result<Parser, ParseError> {
        Ok(Parser { toks: tokenize(src)?, pos: 0 })
    }

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

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { column: self.column(), message: message.into() })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Int(v) => format!("`{v}`"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::End => "end of input".to_string(),
        }
    }

    pub(crate) fn expect_end(&self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::End => Ok(()),
            _ => self.err(format!("unexpected {}", self.describe())),
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(s) if *s == sym) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            self.err(format!("expected `{sym}`, found {}", self.describe()))
        }
    }

    pub(crate) fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(s)
            }
            _ => self.err(format!("expected identifier, found {}", self.describe())),
        }
    }

    pub(crate) fn expr(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym(s) => match binop_for(s) {
                    Some(op) if op.precedence() > min_prec => op,
                    _ => break,
                },
                _ => break,
            };
            self.bump();
            let rhs = self.expr(op.precedence())?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        for op in UnOp::ALL {
            if self.eat_sym(op.symbol()) {
                if let (UnOp::Neg, Tok::Int(v)) = (op, self.peek().clone()) {
                    self.bump();
                    return Ok(Expr::Int(v.wrapping_neg()));
                }
                let e = self.unary()?;
                return Ok(Expr::unary(op, e));
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(match s.as_str() {
                    "true" => Expr::Bool(true),
                    "false" => Expr::Bool(false),
                    "null" => Expr::Null,
                    "this" => Expr::This,
                    "emit" => return self.err("`emit` is not an expression"),
                    _ => Expr::Var(s),
                })
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr(0)?;
                self.expect_sym(")")?;
                Ok(e)
            }
            _ => self.err(format!("expected expression, found {}", self.describe())),
        }
    }

    pub(crate) fn action(&mut self) -> Result<Action, ParseError> {
        if matches!(self.peek(), Tok::Ident(s) if s == "emit") {
            self.bump();
            let signal = self.ident()?;
            let mut args = Vec::new();
            if self.eat_sym("(") {
                if !self.eat_sym(")") {
                    loop {
                        args.push(self.expr(0)?);
                        if self.eat_sym(")") {
                            break;
                        }
                        self.expect_sym(",")?;
                    }
                }
            }
            return Ok(Action::Emit { signal, args });
        }
        let var = self.ident()?;
        let op = match self.peek() {
            Tok::Sym(s) => assignop_for(s),
            _ => None,
        };
        let Some(op) = op else {
            return self.err(format!("expected assignment operator, found {}", self.describe()));
        };
        self.bump();
        let value = self.expr(0)?;
        Ok(Action::Assign { var, op, value })
    }

    /// `Sig`, `Sig(name)` for triggers, or `Sig(3)` for stimuli.
    pub(crate) fn signal_with_arg(&mut self) -> Result<(String, Option<Tok>), ParseError> {
        let signal = self.ident()?;
        if self.eat_sym("(") {
            let arg = match self.peek().clone() {
                t @ (Tok::Ident(_) | Tok::Int(_)) => {
                    self.bump();
                    t
                }
                Tok::Sym("-") => {
                    self.bump();
                    match self.bump() {
                        Tok::Int(v) => Tok::Int(-v),
                        _ => return self.err("expected integer after `-`"),
                    }
                }
                _ => return self.err(format!("expected argument, found {}", self.describe())),
            };
            self.expect_sym(")")?;
            return Ok((signal, Some(arg)));
        }
        Ok((signal, None))
    }

    /// `Sig` or `Sig(1, -2)`.
    pub(crate) fn signal_with_ints(&mut self) -> Result<(String, Vec<i64>), ParseError> {
        let signal = self.ident()?;
        let mut args = Vec::new();
        if self.eat_sym("(") && !self.eat_sym(")") {
            loop {
                let neg = self.eat_sym("-");
                match self.bump() {
                    Tok::Int(v) => args.push(if neg { -v } else { v }),
                    _ => return self.err("expected integer argument"),
                }
                if self.eat_sym(")") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        Ok((signal, args))
    }
}

pub(crate) fn parse_trigger(src: &str) -> Result<(String, Option<String>), ParseError> {
    let mut p = Parser::new(src)?;
    let (signal, arg) = p.signal_with_arg()?;
    p.expect_end()?;
    match arg {
        None => Ok((signal, None)),
        Some(Tok::Ident(v)) if !is_keyword(&v) => Ok((signal, Some(v))),
        Some(_) => Err(ParseError { column: 1, message: "trigger binding must be a variable name".into() }),
    }
}

pub(crate) fn parse_stimulus(src: &str) -> Result<(String, Option<i64>), ParseError> {
    let mut p = Parser::new(src)?;
    let (signal, arg) = p.signal_with_arg()?;
    p.expect_end()?;
    match arg {
        None => Ok((signal, None)),
        Some(Tok::Int(v)) => Ok((signal, Some(v))),
        Some(_) => Err(ParseError { column: 1, message: "stimulus payload must be an integer".into() }),
    }
}

pub(crate) fn parse_emission(src: &str) -> Result<(String, Vec<i64>), ParseError> {
    let mut p = Parser::new(src)?;
    let out = p.signal_with_ints()?;
    p.expect_end()?;
    Ok(out)
}

fn is_keyword(s: &str) -> bool {
    matches!(s, "true" | "false" | "null" | "this" | "emit")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("operator `{op}` cannot apply to {found}")]
    Operand { op: &'static str, found: String },
    #[error("expected {expected}, found {found}")]
    Mismatch { expected: Type, found: Type },
}

/// Variable typing environment.
pub type TypeEnv = BTreeMap<String, Type>;

/// Computes the static type of `expr`.
pub fn type_of(expr: &Expr, env: &TypeEnv) -> Result<Type, TypeError> {
    match expr {
        Expr::Int(_) => Ok(Type::Int),
        Expr::Bool(_) => Ok(Type::Bool),
        Expr::Null | Expr::This => Ok(Type::Ref),
        Expr::Var(v) => env.get(v).copied().ok_or_else(|| TypeError::UnknownVariable(v.clone())),
        Expr::Unary(op, e) => {
            let t = type_of(e, env)?;
            let want = if *op == UnOp::Not { Type::Bool } else { Type::Int };
            if t != want {
                return Err(TypeError::Operand { op: op.symbol(), found: t.to_string() });
            }
            Ok(want)
        }
        Expr::Binary(op, l, r) => {
            let lt = type_of(l, env)?;
            let rt = type_of(r, env)?;
            let ok = match op {
                BinOp::And | BinOp::Or => lt == Type::Bool && rt == Type::Bool,
                BinOp::Eq | BinOp::Ne => lt == rt,
                _ => lt == Type::Int && rt == Type::Int,
            };
            if !ok {
                return Err(TypeError::Operand { op: op.symbol(), found: format!("{lt} and {rt}") });
            }
            Ok(if op.is_arith() { Type::Int } else { Type::Bool })
        }
    }
}

/// Checks that `expr` is well typed with type `want`.
pub fn check(expr: &Expr, env: &TypeEnv, want: Type) -> Result<(), TypeError> {
    let found = type_of(expr, env)?;
    if found != want {
        return Err(TypeError::Mismatch { expected: want, found });
    }
    Ok(())
}

/// Checks an action against the variable environment. Emit arguments must be ints.
pub fn check_action(action: &Action, env: &TypeEnv) -> Result<(), TypeError> {
    match action {
        Action::Assign { var, op, value } => {
            let t = env.get(var).copied().ok_or_else(|| TypeError::UnknownVariable(var.clone()))?;
            if *op != AssignOp::Set && t != Type::Int {
                return Err(TypeError::Operand { op: op.symbol(), found: t.to_string() });
            }
            check(value, env, t)
        }
        Action::Emit { args, .. } => args.iter().try_for_each(|a| check(a, env, Type::Int)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("ill-typed operand for `{0}`")]
    TypeMismatch(&'static str),
}

/// Variable store. Ordered so runtime states hash and compare deterministically.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Store(BTreeMap<String, Value>);

impl Store {
    pub fn new() -> Store {
        Store::default()
    }

    pub fn get(&self, var: &str) -> Option<Value> {
        self.0.get(var).copied()
    }

    pub fn set(&mut self, var: &str, value: Value) {
        match self.0.get_mut(var) {
            Some(slot) => *slot = value,
            None => {
                self.0.insert(var.to_string(), value);
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Value)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl FromIterator<(String, Value)> for Store {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        Store(iter.into_iter().collect())
    }
}

/// Applies an integer binary operator. Shared by `eval` and compound assignment.
pub fn int_op(op: BinOp, a: i64, b: i64) -> Result<i64, EvalError> {
    Ok(match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Div if b == 0 => return Err(EvalError::DivisionByZero),
        BinOp::Div => a.wrapping_div(b),
        BinOp::Rem if b == 0 => return Err(EvalError::DivisionByZero),
        BinOp::Rem => a.wrapping_rem(b),
        BinOp::Shl => a.wrapping_shl(b as u32),
        BinOp::Shr => a.wrapping_shr(b as u32),
        BinOp::BitAnd => a & b,
        BinOp::BitXor => a ^ b,
        BinOp::BitOr => a | b,
        _ => return Err(EvalError::TypeMismatch(op.symbol())),
    })
}

/// Strict evaluation with short-circuiting `&&` and `||`.
pub fn eval(expr: &Expr, store: &Store) -> Result<Value, EvalError> {
    match expr {
        Expr::Int(v) => Ok(Value::Int(*v)),
        Expr::Bool(v) => Ok(Value::Bool(*v)),
        Expr::Null => Ok(Value::Ref(true)),
        Expr::This => Ok(Value::Ref(false)),
        Expr::Var(v) => store.get(v).ok_or_else(|| EvalError::UnknownVariable(v.clone())),
        Expr::Unary(op, e) => {
            let v = eval(e, store)?;
            match (op, v) {
                (UnOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                (UnOp::Neg, Value::Int(i)) => Ok(Value::Int(i.wrapping_neg())),
                (UnOp::BitNot, Value::Int(i)) => Ok(Value::Int(!i)),
                _ => Err(EvalError::TypeMismatch(op.symbol())),
            }
        }
        Expr::Binary(op @ (BinOp::And | BinOp::Or), l, r) => {
            let lv = eval(l, store)?.as_bool().ok_or(EvalError::TypeMismatch(op.symbol()))?;
            if (*op == BinOp::And) != lv {
                return Ok(Value::Bool(lv));
            }
            let rv = eval(r, store)?.as_bool().ok_or(EvalError::TypeMismatch(op.symbol()))?;
            Ok(Value::Bool(rv))
        }
        Expr::Binary(op, l, r) => {
            let lv = eval(l, store)?;
            let rv = eval(r, store)?;
            match op {
                BinOp::Eq | BinOp::Ne => {
                    if lv.ty() != rv.ty() {
                        return Err(EvalError::TypeMismatch(op.symbol()));
                    }
                    Ok(Value::Bool((lv == rv) == (*op == BinOp::Eq)))
                }
                _ => {
                    let (Value::Int(a), Value::Int(b)) = (lv, rv) else {
                        return Err(EvalError::TypeMismatch(op.symbol()));
                    };
                    if op.is_relational() {
                        Ok(Value::Bool(match op {
                            BinOp::Lt => a < b,
                            BinOp::Le => a <= b,
                            BinOp::Gt => a > b,
                            _ => a >= b,
                        }))
                    } else {
                        int_op(*op, a, b).map(Value::Int)
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(vals: &[(&str, i64)]) -> Store {
        vals.iter().map(|(k, v)| (k.to_string(), Value::Int(*v))).collect()
    }

    #[test]
    fn relational_guard() {
        let e = Expr::parse("credits >= price").unwrap();
        let s = store(&[("credits", 5), ("price", 3)]);
        assert_eq!(eval(&e, &s), Ok(Value::Bool(true)));
    }

    #[test]
    fn division_by_zero_faults() {
        let s = store(&[("x", 4), ("y", 0)]);
        assert_eq!(eval(&Expr::parse("x / y").unwrap(), &s), Err(EvalError::DivisionByZero));
        assert_eq!(eval(&Expr::parse("x % y").unwrap(), &s), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn shift_literal() {
        assert_eq!(eval(&Expr::parse("1 << 3").unwrap(), &Store::new()), Ok(Value::Int(8)));
    }

    #[test]
    fn short_circuit_skips_faulting_rhs() {
        let s = store(&[("y", 0)]);
        let e = Expr::parse("false && 1 / y == 0").unwrap();
        assert_eq!(eval(&e, &s), Ok(Value::Bool(false)));
        let e = Expr::parse("true || 1 / y == 0").unwrap();
        assert_eq!(eval(&e, &s), Ok(Value::Bool(true)));
    }

    #[test]
    fn precedence_is_c_like() {
        let e = Expr::parse("1 + 2 * 3 == 7 && 6 & 3 == 2").unwrap();
        // `==` binds tighter than `&`, so the right conjunct is 6 & (3 == 2): ill-typed
        assert!(type_of(&e, &TypeEnv::new()).is_err());
        let e = Expr::parse("1 + 2 * 3 == 7 && (6 & 3) == 2").unwrap();
        assert_eq!(eval(&e, &Store::new()), Ok(Value::Bool(true)));
        let e = Expr::parse("10 - 3 - 2").unwrap();
        assert_eq!(eval(&e, &Store::new()), Ok(Value::Int(5)));
    }

    #[test]
    fn null_and_this_compare_by_identity() {
        let env = TypeEnv::new();
        let e = Expr::parse("null != this").unwrap();
        assert_eq!(type_of(&e, &env), Ok(Type::Bool));
        assert_eq!(eval(&e, &Store::new()), Ok(Value::Bool(true)));
        assert!(type_of(&Expr::parse("null < this").unwrap(), &env).is_err());
    }

    #[test]
    fn display_reparses() {
        for src in ["a - (b - c)", "(a - b) - c", "!(x && y) || z", "-(-3)", "~a & (b | c) ^ d", "x * -y"] {
            let e = Expr::parse(src).unwrap();
            assert_eq!(Expr::parse(&e.to_string()).unwrap(), e, "{src} -> {e}");
        }
        assert_eq!(Expr::parse("(a - b) - c").unwrap().to_string(), "a - b - c");
    }

    #[test]
    fn actions_parse_and_print() {
        let a = Action::parse("credit += amount * 2").unwrap();
        assert_eq!(a.to_string(), "credit += amount * 2");
        let a = Action::parse("emit Change(credit, 1)").unwrap();
        assert_eq!(a.to_string(), "emit Change(credit, 1)");
        assert_eq!(Action::parse("emit Done").unwrap().to_string(), "emit Done");
        assert!(Action::parse("x + 1").is_err());
    }

    #[test]
    fn parse_error_carries_column() {
        let err = Expr::parse("a + ) ").unwrap_err();
        assert_eq!(err.column, 5);
        let err = Expr::parse("a $ b").unwrap_err();
        assert_eq!(err.column, 3);
    }

    #[test]
    fn trigger_and_stimulus_syntax() {
        assert_eq!(parse_trigger("Insert(amount)").unwrap(), ("Insert".into(), Some("amount".into())));
        assert_eq!(parse_trigger("Go").unwrap(), ("Go".into(), None));
        assert_eq!(parse_stimulus("Insert(-2)").unwrap(), ("Insert".into(), Some(-2)));
        assert_eq!(parse_emission("Out(1, -2)").unwrap(), ("Out".into(), vec![1, -2]));
        assert!(parse_trigger("Insert(3)").is_err());
    }

    #[test]
    fn compound_assignment_typing() {
        let env: TypeEnv = [("n".to_string(), Type::Int), ("b".to_string(), Type::Bool)].into();
        assert!(check_action(&Action::parse("n <<= 2").unwrap(), &env).is_ok());
        assert!(check_action(&Action::parse("b += 1").unwrap(), &env).is_err());
        assert!(check_action(&Action::parse("b = n > 2").unwrap(), &env).is_ok());
        assert!(check_action(&Action::parse("emit X(b)").unwrap(), &env).is_err());
    }
}
