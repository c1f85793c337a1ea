//! Scalar fields over chart coordinates.
//!
//! A [`ScalarField`] is an immutable expression tree in the coordinates
//! `x1 … xn` built from exact rational literals, the four arithmetic
//! operators, integer powers and the functions `exp`, `ln`, `sin`, `cos`,
//! `sqrt`. Fields differentiate symbolically and evaluate pointwise; the
//! only simplification performed is constant folding and the `x*0`, `x*1`,
//! `x+0` collapses, so two equal functions need not share a tree.
//!
//! Coordinates are 0-based in the Rust API (`ScalarField::var(n, 0)` is
//! `x1`) and 1-based in expression text.

mod diff;
mod parse;
mod tape;

use std::fmt;
use std::ops;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub use parse::{ParseError, ParseErrorKind};
pub use tape::Tape;

/// Elementary functions accepted by the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

pub(crate) type Expr = Arc<Node>;

#[derive(Debug)]
pub(crate) enum Node {
    /// Exact value plus its nearest `f64`.
    Const(BigRational, f64),
    Var(usize),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Neg(Expr),
    Pow(Expr, i32),
    Call(Func, Expr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalErrorKind {
    /// `ln` or `sqrt` applied outside its real domain.
    Domain,
    DivisionByZero,
    /// The value overflowed to an infinity or NaN.
    NonFinite,
}

/// Pointwise evaluation failure, carrying the offending subexpression.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind:?} while evaluating `{subexpression}`")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub subexpression: String,
}

impl EvalError {
    pub(crate) fn at(kind: EvalErrorKind, node: &Expr) -> Self {
        EvalError {
            kind,
            subexpression: Printer(node).to_string(),
        }
    }
}

/// An expression in the coordinates of an `n`-dimensional chart.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    root: Expr,
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub(crate) fn konst(r: BigRational) -> Expr {
    let approx = rational_to_f64(&r);
    Arc::new(Node::Const(r, approx))
}

fn as_const(e: &Expr) -> Option<&BigRational> {
    match e.as_ref() {
        Node::Const(r, _) => Some(r),
        _ => None,
    }
}

fn is_zero(e: &Expr) -> bool {
    as_const(e).is_some_and(Zero::is_zero)
}

fn is_one(e: &Expr) -> bool {
    as_const(e).is_some_and(One::is_one)
}

pub(crate) fn int(k: i64) -> Expr {
    konst(BigRational::from_integer(BigInt::from(k)))
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return b;
    }
    if is_zero(&b) {
        return a;
    }
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        return konst(x + y);
    }
    Arc::new(Node::Add(a, b))
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    if is_zero(&b) {
        return a;
    }
    if is_zero(&a) {
        return neg(b);
    }
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        return konst(x - y);
    }
    Arc::new(Node::Sub(a, b))
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        return int(0);
    }
    if is_one(&a) {
        return b;
    }
    if is_one(&b) {
        return a;
    }
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        return konst(x * y);
    }
    if as_const(&a).is_some_and(|x| *x == -BigRational::one()) {
        return neg(b);
    }
    if as_const(&b).is_some_and(|y| *y == -BigRational::one()) {
        return neg(a);
    }
    Arc::new(Node::Mul(a, b))
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    if is_one(&b) {
        return a;
    }
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        if !y.is_zero() {
            return konst(x / y);
        }
    }
    if is_zero(&a) && as_const(&b).is_none_or(|y| !y.is_zero()) {
        return int(0);
    }
    Arc::new(Node::Div(a, b))
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a.as_ref() {
        Node::Const(r, _) => konst(-r),
        Node::Neg(inner) => inner.clone(),
        _ => Arc::new(Node::Neg(a)),
    }
}

pub(crate) fn pow(a: Expr, k: i32) -> Expr {
    if k == 0 {
        return int(1);
    }
    if k == 1 {
        return a;
    }
    if let Some(x) = as_const(&a) {
        if k > 0 || !x.is_zero() {
            return konst(num_traits::pow::Pow::pow(x, k));
        }
    }
    Arc::new(Node::Pow(a, k))
}

pub(crate) fn call(f: Func, a: Expr) -> Expr {
    if let Some(x) = as_const(&a) {
        if x.is_zero() {
            match f {
                Func::Exp | Func::Cos => return int(1),
                Func::Sin | Func::Sqrt => return int(0),
                Func::Ln => {}
            }
        } else if x.is_one() {
            match f {
                Func::Ln => return int(0),
                Func::Sqrt => return int(1),
                _ => {}
            }
        }
    }
    Arc::new(Node::Call(f, a))
}

impl ScalarField {
    pub(crate) fn from_expr(dim: usize, root: Expr) -> Self {
        ScalarField { dim, root }
    }

    pub(crate) fn expr(&self) -> &Expr {
        &self.root
    }

    /// Parses `text` as a field on an `n`-dimensional chart.
    pub fn parse(text: &str, n: usize) -> Result<Self, ParseError> {
        parse::parse(text, n).map(|root| ScalarField { dim: n, root })
    }

    pub fn constant(n: usize, value: BigRational) -> Self {
        Self::from_expr(n, konst(value))
    }

    pub fn integer(n: usize, value: i64) -> Self {
        Self::from_expr(n, int(value))
    }

    pub fn zero(n: usize) -> Self {
        Self::integer(n, 0)
    }

    pub fn one(n: usize) -> Self {
        Self::integer(n, 1)
    }

    /// The coordinate function `x{index+1}`.
    pub fn var(n: usize, index: usize) -> Self {
        assert!(index < n, "coordinate index {index} out of range for n = {n}");
        Self::from_expr(n, Arc::new(Node::Var(index)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when the tree is the literal constant zero.
    pub fn is_zero(&self) -> bool {
        is_zero(&self.root)
    }

    /// The exact value if the tree folded to a constant.
    pub fn as_constant(&self) -> Option<&BigRational> {
        as_const(&self.root)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        debug_assert_eq!(x.len(), self.dim);
        eval_node(&self.root, x)
    }

    /// Exact partial derivative with respect to coordinate `index` (0-based).
    pub fn diff(&self, index: usize) -> ScalarField {
        assert!(index < self.dim, "coordinate index {index} out of range");
        Self::from_expr(self.dim, diff::diff(&self.root, index))
    }

    pub fn powi(&self, k: i32) -> ScalarField {
        Self::from_expr(self.dim, pow(self.root.clone(), k))
    }

    pub fn apply(&self, f: Func) -> ScalarField {
        Self::from_expr(self.dim, call(f, self.root.clone()))
    }

    pub fn exp(&self) -> ScalarField {
        self.apply(Func::Exp)
    }

    pub fn ln(&self) -> ScalarField {
        self.apply(Func::Ln)
    }

    pub fn sqrt(&self) -> ScalarField {
        self.apply(Func::Sqrt)
    }

    pub fn scale(&self, factor: &BigRational) -> ScalarField {
        Self::from_expr(self.dim, mul(konst(factor.clone()), self.root.clone()))
    }

    /// Number of nodes in the tree, counting shared subtrees once per use.
    pub fn tree_size(&self) -> usize {
        fn walk(e: &Expr) -> usize {
            1 + match e.as_ref() {
                Node::Const(..) | Node::Var(_) => 0,
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => walk(a) + walk(b),
                Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => walk(a),
            }
        }
        walk(&self.root)
    }

    fn check_dim(&self, other: &ScalarField) {
        assert_eq!(self.dim, other.dim, "mixing fields of different dimension");
    }
}

/// Sum of fields; the empty sum is zero.
pub fn sum<'a>(n: usize, terms: impl IntoIterator<Item = &'a ScalarField>) -> ScalarField {
    let mut acc = int(0);
    for t in terms {
        debug_assert_eq!(t.dim, n);
        acc = add(acc, t.root.clone());
    }
    ScalarField::from_expr(n, acc)
}

fn eval_node(e: &Expr, x: &[f64]) -> Result<f64, EvalError> {
    let v = match e.as_ref() {
        Node::Const(_, v) => *v,
        Node::Var(i) => x[*i],
        Node::Add(a, b) => eval_node(a, x)? + eval_node(b, x)?,
        Node::Sub(a, b) => eval_node(a, x)? - eval_node(b, x)?,
        Node::Mul(a, b) => eval_node(a, x)? * eval_node(b, x)?,
        Node::Div(a, b) => {
            let num = eval_node(a, x)?;
            let den = eval_node(b, x)?;
            if den == 0.0 {
                return Err(EvalError::at(EvalErrorKind::DivisionByZero, e));
            }
            num / den
        }
        Node::Neg(a) => -eval_node(a, x)?,
        Node::Pow(a, k) => {
            let base = eval_node(a, x)?;
            if base == 0.0 && *k < 0 {
                return Err(EvalError::at(EvalErrorKind::DivisionByZero, e));
            }
            base.powi(*k)
        }
        Node::Call(f, a) => apply_func(*f, eval_node(a, x)?).ok_or_else(|| EvalError::at(EvalErrorKind::Domain, e))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::at(EvalErrorKind::NonFinite, e))
    }
}

pub(crate) fn apply_func(f: Func, v: f64) -> Option<f64> {
    Some(match f {
        Func::Exp => v.exp(),
        Func::Ln if v > 0.0 => v.ln(),
        Func::Ln => return None,
        Func::Sin => v.sin(),
        Func::Cos => v.cos(),
        Func::Sqrt if v >= 0.0 => v.sqrt(),
        Func::Sqrt => return None,
    })
}

// Binding strength used when printing; higher binds tighter.
const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POWER: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e.as_ref() {
        Node::Const(r, _) if !r.is_integer() => PREC_PRODUCT,
        Node::Const(r, _) if r.is_negative() => PREC_UNARY,
        Node::Const(..) | Node::Var(_) | Node::Call(..) => PREC_ATOM,
        Node::Add(..) | Node::Sub(..) => PREC_SUM,
        Node::Mul(..) | Node::Div(..) => PREC_PRODUCT,
        Node::Neg(_) => PREC_UNARY,
        Node::Pow(..) => PREC_POWER,
    }
}

struct Printer<'a>(&'a Expr);

impl Printer<'_> {
    fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
        if precedence(e) < min {
            write!(f, "({})", Printer(e))
        } else {
            write!(f, "{}", Printer(e))
        }
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.as_ref() {
            Node::Const(r, _) => {
                if r.is_integer() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Add(a, b) => {
                Self::child(f, a, PREC_SUM)?;
                f.write_str(" + ")?;
                Self::child(f, b, PREC_SUM + 1)
            }
            Node::Sub(a, b) => {
                Self::child(f, a, PREC_SUM)?;
                f.write_str(" - ")?;
                Self::child(f, b, PREC_SUM + 1)
            }
            Node::Mul(a, b) => {
                Self::child(f, a, PREC_PRODUCT)?;
                f.write_str("*")?;
                Self::child(f, b, PREC_PRODUCT + 1)
            }
            Node::Div(a, b) => {
                Self::child(f, a, PREC_PRODUCT)?;
                f.write_str("/")?;
                Self::child(f, b, PREC_PRODUCT + 1)
            }
            Node::Neg(a) => {
                f.write_str("-")?;
                Self::child(f, a, PREC_UNARY)
            }
            Node::Pow(a, k) => {
                Self::child(f, a, PREC_ATOM)?;
                if *k < 0 {
                    write!(f, "^({k})")
                } else {
                    write!(f, "^{k}")
                }
            }
            Node::Call(func, a) => write!(f, "{}({})", func.name(), Printer(a)),
        }
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer(&self.root).fmt(f)
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField[n={}]({})", self.dim, self)
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $build:ident) => {
        impl ops::$trait<&ScalarField> for &ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: &ScalarField) -> ScalarField {
                self.check_dim(rhs);
                ScalarField::from_expr(self.dim, $build(self.root.clone(), rhs.root.clone()))
            }
        }
        impl ops::$trait<ScalarField> for ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: ScalarField) -> ScalarField {
                (&self).$method(&rhs)
            }
        }
        impl ops::$trait<&ScalarField> for ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: &ScalarField) -> ScalarField {
                (&self).$method(rhs)
            }
        }
        impl ops::$trait<ScalarField> for &ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: ScalarField) -> ScalarField {
                self.$method(&rhs)
            }
        }
    };
}

binary_op!(Add, add, add);
binary_op!(Sub, sub, sub);
binary_op!(Mul, mul, mul);
binary_op!(Div, div, div);

impl ops::Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        ScalarField::from_expr(self.dim, neg(self.root.clone()))
    }
}

impl ops::Neg for ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        -&self
    }
}
