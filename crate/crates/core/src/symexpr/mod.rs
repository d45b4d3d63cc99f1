//! Closed-form real functions of one chart coordinate `x`.

pub mod matrix;
mod parse;

use std::fmt;
use std::ops;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::linalg::{f64_to_q, fmt_q, q, q_to_f64, Q};

pub use parse::{parse_expr, ParseError};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(Q),
    Var,
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, i64),
    Exp(Arc<Expr>),
    Sin(Arc<Expr>),
    Cos(Arc<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("result is not a finite real number")]
    Domain,
}

impl Expr {
    pub fn x() -> Expr {
        Expr::Var
    }

    pub fn c(v: Q) -> Expr {
        Expr::Const(v)
    }

    pub fn int(n: i64) -> Expr {
        Expr::Const(q(n))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn as_const(&self) -> Option<&Q> {
        match self {
            Expr::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const().is_some_and(Zero::is_zero)
    }

    pub fn is_one(&self) -> bool {
        self.as_const().is_some_and(One::is_one)
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(v) => Expr::Const(-v),
            Expr::Neg(inner) => Arc::unwrap_or_clone(inner),
            a => Expr::Neg(Arc::new(a)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(u), Expr::Const(v)) => Expr::Const(u + v),
            (a, b) if a.is_zero() => b,
            (a, b) if b.is_zero() => a,
            (a, b) => Expr::Add(Arc::new(a), Arc::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::add(a, Expr::neg(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(u), Expr::Const(v)) => Expr::Const(u * v),
            (a, b) if a.is_zero() || b.is_zero() => Expr::zero(),
            (a, b) if a.is_one() => b,
            (a, b) if b.is_one() => a,
            (a, b) => Expr::Mul(Arc::new(a), Arc::new(b)),
        }
    }

    /// Quotient; a literal zero denominator is kept so evaluation reports it.
    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(u), Expr::Const(v)) if !v.is_zero() => Expr::Const(u / v),
            (a, b) if b.is_one() => a,
            (a, b) if a.is_zero() && !b.is_zero() => Expr::zero(),
            (a, b) => Expr::Div(Arc::new(a), Arc::new(b)),
        }
    }

    pub fn pow(a: Expr, n: i64) -> Expr {
        match (a, n) {
            (_, 0) => Expr::one(),
            (a, 1) => a,
            (Expr::Const(v), n) if !(v.is_zero() && n < 0) => Expr::Const(qpow(&v, n)),
            (a, n) => Expr::Pow(Arc::new(a), n),
        }
    }

    pub fn exp(a: Expr) -> Expr {
        if a.is_zero() {
            return Expr::one();
        }
        Expr::Exp(Arc::new(a))
    }

    pub fn sin(a: Expr) -> Expr {
        if a.is_zero() {
            return Expr::zero();
        }
        Expr::Sin(Arc::new(a))
    }

    pub fn cos(a: Expr) -> Expr {
        if a.is_zero() {
            return Expr::one();
        }
        Expr::Cos(Arc::new(a))
    }

    pub fn is_transcendental(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var => false,
            Expr::Exp(_) | Expr::Sin(_) | Expr::Cos(_) => true,
            Expr::Neg(a) | Expr::Pow(a, _) => a.is_transcendental(),
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.is_transcendental() || b.is_transcendental()
            }
        }
    }

    pub fn differentiate(&self) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var => Expr::one(),
            Expr::Neg(a) => Expr::neg(a.differentiate()),
            Expr::Add(a, b) => Expr::add(a.differentiate(), b.differentiate()),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.differentiate(), (**b).clone()),
                Expr::mul((**a).clone(), b.differentiate()),
            ),
            Expr::Div(a, b) => Expr::div(
                Expr::sub(
                    Expr::mul(a.differentiate(), (**b).clone()),
                    Expr::mul((**a).clone(), b.differentiate()),
                ),
                Expr::pow((**b).clone(), 2),
            ),
            Expr::Pow(a, n) => Expr::mul(
                Expr::mul(Expr::int(*n), Expr::pow((**a).clone(), n - 1)),
                a.differentiate(),
            ),
            Expr::Exp(a) => Expr::mul(self.clone(), a.differentiate()),
            Expr::Sin(a) => Expr::mul(Expr::cos((**a).clone()), a.differentiate()),
            Expr::Cos(a) => Expr::neg(Expr::mul(Expr::sin((**a).clone()), a.differentiate())),
        }
    }

    /// Exact value at a rational point. `Ok(None)` when a transcendental node
    /// has an argument other than zero.
    pub fn eval_exact(&self, x: &Q) -> Result<Option<Q>, EvalError> {
        Ok(Some(match self {
            Expr::Const(v) => v.clone(),
            Expr::Var => x.clone(),
            Expr::Neg(a) => match a.eval_exact(x)? {
                Some(v) => -v,
                None => return Ok(None),
            },
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let (Some(u), Some(v)) = (a.eval_exact(x)?, b.eval_exact(x)?) else {
                    return Ok(None);
                };
                match self {
                    Expr::Add(..) => u + v,
                    Expr::Mul(..) => u * v,
                    _ if v.is_zero() => return Err(EvalError::DivisionByZero),
                    _ => u / v,
                }
            }
            Expr::Pow(a, n) => match a.eval_exact(x)? {
                Some(v) if v.is_zero() && *n < 0 => return Err(EvalError::DivisionByZero),
                Some(v) => qpow(&v, *n),
                None => return Ok(None),
            },
            Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) => match a.eval_exact(x)? {
                Some(v) if v.is_zero() => {
                    if matches!(self, Expr::Sin(_)) { Q::zero() } else { Q::one() }
                }
                _ => return Ok(None),
            },
        }))
    }

    /// Binary64 evaluation in plain floating-point arithmetic.
    pub fn eval_f64(&self, x: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(v) => q_to_f64(v),
            Expr::Var => x,
            Expr::Neg(a) => -a.eval_f64(x)?,
            Expr::Add(a, b) => a.eval_f64(x)? + b.eval_f64(x)?,
            Expr::Mul(a, b) => a.eval_f64(x)? * b.eval_f64(x)?,
            Expr::Div(a, b) => {
                let d = b.eval_f64(x)?;
                if d == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a.eval_f64(x)? / d
            }
            Expr::Pow(a, n) => {
                let base = a.eval_f64(x)?;
                if base == 0.0 && *n < 0 {
                    return Err(EvalError::DivisionByZero);
                }
                base.powi(i32::try_from(*n).map_err(|_| EvalError::Domain)?)
            }
            Expr::Exp(a) => a.eval_f64(x)?.exp(),
            Expr::Sin(a) => a.eval_f64(x)?.sin(),
            Expr::Cos(a) => a.eval_f64(x)?.cos(),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::Domain)
        }
    }

    /// Value at `x`. Rational expressions are evaluated exactly at the exact
    /// binary64 value of `x` and rounded once.
    pub fn evaluate(&self, x: f64) -> Result<f64, EvalError> {
        if !x.is_finite() {
            return Err(EvalError::Domain);
        }
        if !self.is_transcendental() {
            if let Some(xq) = f64_to_q(x) {
                if let Some(v) = self.eval_exact(&xq)? {
                    let f = q_to_f64(&v);
                    return if f.is_finite() { Ok(f) } else { Err(EvalError::Domain) };
                }
            }
        }
        self.eval_f64(x)
    }

    /// Exact value when available, else binary64.
    pub fn value_at(&self, x: &Q) -> Result<Value, EvalError> {
        match self.eval_exact(x)? {
            Some(v) => Ok(Value::Exact(v)),
            None => self.eval_f64(q_to_f64(x)).map(Value::Float),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Const(v) if !v.is_integer() => 2,
            Expr::Const(v) if v.is_negative() => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let wrap = self.precedence() < min;
        if wrap {
            f.write_str("(")?;
        }
        match self {
            Expr::Const(v) => f.write_str(&fmt_q(v))?,
            Expr::Var => f.write_str("x")?,
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.write_prec(f, 3)?;
            }
            Expr::Add(a, b) => {
                a.write_prec(f, 1)?;
                match &**b {
                    Expr::Neg(c) => {
                        f.write_str(" - ")?;
                        c.write_prec(f, 2)?;
                    }
                    Expr::Const(v) if v.is_negative() => {
                        f.write_str(" - ")?;
                        Expr::Const(-v).write_prec(f, 2)?;
                    }
                    b => {
                        f.write_str(" + ")?;
                        b.write_prec(f, 2)?;
                    }
                }
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.write_prec(f, 2)?;
                f.write_str(if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                b.write_prec(f, 3)?;
            }
            Expr::Pow(a, n) => {
                a.write_prec(f, 5)?;
                write!(f, "^{n}")?;
            }
            Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) => {
                let name = match self {
                    Expr::Exp(_) => "exp",
                    Expr::Sin(_) => "sin",
                    _ => "cos",
                };
                write!(f, "{name}(")?;
                a.write_prec(f, 0)?;
                f.write_str(")")?;
            }
        }
        if wrap {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// A sampled value: exact where the expression allows it.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Exact(Q),
    Float(f64),
}

impl Value {
    pub fn to_f64(&self) -> f64 {
        match self {
            Value::Exact(v) => q_to_f64(v),
            Value::Float(v) => *v,
        }
    }

    pub fn exact(&self) -> Option<&Q> {
        match self {
            Value::Exact(v) => Some(v),
            Value::Float(_) => None,
        }
    }
}

macro_rules! value_op {
    ($tr:ident, $m:ident, $op:tt) => {
        impl ops::$tr for Value {
            type Output = Value;
            fn $m(self, rhs: Value) -> Value {
                match (self, rhs) {
                    (Value::Exact(a), Value::Exact(b)) => Value::Exact(a $op b),
                    (a, b) => Value::Float(a.to_f64() $op b.to_f64()),
                }
            }
        }
    };
}

value_op!(Add, add, +);
value_op!(Sub, sub, -);
value_op!(Mul, mul, *);

impl ops::Div for Value {
    type Output = Value;
    fn div(self, rhs: Value) -> Value {
        match (self, rhs) {
            (Value::Exact(a), Value::Exact(b)) if !b.is_zero() => Value::Exact(a / b),
            (a, b) => Value::Float(a.to_f64() / b.to_f64()),
        }
    }
}

impl ops::Neg for Value {
    type Output = Value;
    fn neg(self) -> Value {
        match self {
            Value::Exact(a) => Value::Exact(-a),
            Value::Float(a) => Value::Float(-a),
        }
    }
}

impl Value {
    pub fn zero() -> Value {
        Value::Exact(Q::zero())
    }

    pub fn one() -> Value {
        Value::Exact(Q::one())
    }
}

fn qpow(v: &Q, n: i64) -> Q {
    let p = num_traits::pow(v.clone(), n.unsigned_abs() as usize);
    if n < 0 { p.recip() } else { p }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add(self, rhs)
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sub(self, rhs)
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul(self, rhs)
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::div(self, rhs)
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::qf;
    use proptest::prelude::*;

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    fn central_difference(e: &Expr, x: f64) -> f64 {
        let h = 1e-5;
        (e.eval_f64(x + h).unwrap() - e.eval_f64(x - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(p("exp(x)").differentiate(), p("exp(x)"));
        let d = p("x^2+1").differentiate();
        for x in [-1.5, 0.0, 2.0] {
            assert_eq!(d.evaluate(x).unwrap(), 2.0 * x);
        }
        let d = p("sin(x)*exp(x)").differentiate();
        for x in [-1.0f64, 0.3, 1.7] {
            let expected = x.cos() * x.exp() + x.sin() * x.exp();
            assert!((d.eval_f64(x).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(p("exp(x)").evaluate(0.0), Ok(1.0));
        assert_eq!(p("x^2+1").evaluate(2.0), Ok(5.0));
        assert_eq!(p("exp(x)/(2*exp(x))").evaluate(3.7), Ok(0.5));
        assert_eq!(p("1/x").evaluate(0.0), Err(EvalError::DivisionByZero));
        assert_eq!(p("x^-1").evaluate(0.0), Err(EvalError::DivisionByZero));
        assert_eq!(p("exp(x)").evaluate(1000.0), Err(EvalError::Domain));
    }

    #[test]
    fn exact_evaluation_folds_transcendentals_at_zero() {
        let e = p("exp(x)*(x^2+1)/2");
        assert_eq!(e.eval_exact(&q(0)), Ok(Some(qf(1, 2))));
        assert_eq!(e.eval_exact(&q(1)), Ok(None));
        assert_eq!(p("x/3 + 1/6").eval_exact(&qf(1, 2)), Ok(Some(qf(1, 3))));
    }

    #[test]
    fn rational_evaluation_rounds_once() {
        // 0.1 + 0.2 in exact arithmetic on the binary64 inputs, rounded once
        let e = p("x + 1/5");
        let exact = f64_to_q(0.1).unwrap() + qf(1, 5);
        assert_eq!(e.evaluate(0.1).unwrap(), q_to_f64(&exact));
    }

    #[test]
    fn printing_examples() {
        assert_eq!(p("x^2+1").to_string(), "x^2 + 1");
        assert_eq!(p("x - (1 - x)").to_string(), "x - (1 - x)");
        assert_eq!(p("-x^2").to_string(), "-x^2");
        assert_eq!(p("(-x)^2").to_string(), "(-x)^2");
        assert_eq!(p("x*(1/2)").to_string(), "x*(1/2)");
        assert_eq!(p("0.25*x").to_string(), "1/4*x");
        assert_eq!(p("x/(2*x)").to_string(), "x/(2*x)");
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            Just(Expr::Var),
            (-5i64..6, 1i64..4).prop_map(|(n, d)| Expr::c(qf(n, d))),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Expr::neg),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a / b),
                (inner.clone(), -2i64..4).prop_map(|(a, n)| Expr::pow(a, n)),
                inner.clone().prop_map(|a| Expr::exp(a * Expr::c(qf(1, 4)))),
                inner.clone().prop_map(Expr::sin),
                inner.prop_map(Expr::cos),
            ]
        })
    }

    fn sample_points() -> Vec<f64> {
        (0..20).map(|i| -1.9 + 0.19 * i as f64 + 0.013).collect()
    }

    proptest! {
        #[test]
        fn print_parse_round_trip_evaluates_identically(e in arb_expr()) {
            let back = parse_expr(&e.to_string()).unwrap();
            for x in sample_points().into_iter().take(10) {
                prop_assert_eq!(e.evaluate(x), back.evaluate(x), "{}", e);
            }
        }

        #[test]
        fn derivative_matches_central_difference(e in arb_expr()) {
            let d = e.differentiate();
            let d3 = d.differentiate().differentiate();
            for x in sample_points() {
                let (Ok(v), Ok(dv)) = (e.eval_f64(x), d.eval_f64(x)) else { continue };
                let (Ok(_), Ok(_)) = (e.eval_f64(x + 1e-3), e.eval_f64(x - 1e-3)) else { continue };
                if v.abs() > 1e3 || dv.abs() > 1e3 {
                    continue;
                }
                // skip points near poles, where the difference quotient is meaningless
                let probe: Vec<f64> = (-4..=4).map(|k| e.eval_f64(x + k as f64 * 2.5e-4).unwrap_or(f64::NAN)).collect();
                if probe.iter().any(|p| !p.is_finite() || p.abs() > 1e3) {
                    continue;
                }
                // the difference quotient itself is only accurate where the third derivative is tame
                match d3.eval_f64(x) {
                    Ok(t) if t.abs() * 1e-10 / 6.0 <= 1e-7 * (1.0 + dv.abs()) => {}
                    _ => continue,
                }
                let fd = central_difference(&e, x);
                prop_assert!((dv - fd).abs() <= 1e-6 * (1.0 + dv.abs()),
                    "{} at {}: {} vs {}", e, x, dv, fd);
            }
        }

        #[test]
        fn sum_and_product_rules(a in arb_expr(), b in arb_expr()) {
            let lhs_sum = (a.clone() + b.clone()).differentiate();
            let rhs_sum = a.differentiate() + b.differentiate();
            let lhs_prod = (a.clone() * b.clone()).differentiate();
            let rhs_prod = a.differentiate() * b.clone() + a.clone() * b.differentiate();
            for x in sample_points() {
                if let (Ok(l), Ok(r)) = (lhs_sum.eval_f64(x), rhs_sum.eval_f64(x)) {
                    prop_assert!((l - r).abs() <= 1e-9 * (1.0 + l.abs()));
                }
                if let (Ok(l), Ok(r)) = (lhs_prod.eval_f64(x), rhs_prod.eval_f64(x)) {
                    prop_assert!((l - r).abs() <= 1e-9 * (1.0 + l.abs()));
                }
            }
        }
    }
}
