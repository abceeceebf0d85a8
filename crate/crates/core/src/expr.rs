//! Coefficient expressions.
//!
//! A small complex-valued expression language in one variable `t`, closed
//! under differentiation, with a cumulative-integral node
//! `cumint(f, a) = ∫_a^t f(s) ds`. Simplification is constant folding only.

use std::collections::BTreeMap;
use std::fmt;
use std::ops;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

pub type Params = BTreeMap<String, Complex64>;

/// Exponent of a power node, stored in half units: `Exponent(3)` is `t^1.5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Exponent(pub i32);

impl Exponent {
    pub fn int(n: i32) -> Self {
        Exponent(2 * n)
    }

    pub fn from_f64(v: f64) -> Option<Self> {
        let twice = 2.0 * v;
        (twice.fract() == 0.0 && twice.abs() < 1e6).then_some(Exponent(twice as i32))
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub(crate) fn apply(self, z: Complex64, t: f64) -> Result<Complex64> {
        if z.im == 0.0 {
            let x = z.re;
            match self {
                Func::Sin => return Ok(Complex64::new(x.sin(), 0.0)),
                Func::Cos => return Ok(Complex64::new(x.cos(), 0.0)),
                Func::Exp => return Ok(Complex64::new(x.exp(), 0.0)),
                _ => {}
            }
        }
        Ok(match self {
            Func::Sin => z.sin(),
            Func::Cos => z.cos(),
            Func::Exp => z.exp(),
            Func::Ln => Complex64::new(positive_real(z, "ln", t)?.ln(), 0.0),
            Func::Sqrt => Complex64::new(positive_real(z, "sqrt", t)?.sqrt(), 0.0),
        })
    }
}

/// `ln`, `sqrt` and half-integer powers only accept real positive arguments.
pub(crate) fn positive_real(z: Complex64, func: &'static str, t: f64) -> Result<f64> {
    if z.re > 0.0 && z.im.abs() <= 1e-10 * (1.0 + z.re.abs()) {
        Ok(z.re)
    } else {
        Err(Error::DomainError {
            func,
            t,
            re: z.re,
            im: z.im,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(Complex64),
    /// The independent variable `t`.
    Var,
    Param(String),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, Exponent),
    Apply(Func, Box<Expr>),
    /// `∫_lower^t integrand(s) ds`
    CumInt {
        integrand: Box<Expr>,
        lower: f64,
    },
}

impl Expr {
    pub fn real(v: f64) -> Self {
        Expr::Const(Complex64::new(v, 0.0))
    }

    pub fn t() -> Self {
        Expr::Var
    }

    pub fn param(name: impl Into<String>) -> Self {
        Expr::Param(name.into())
    }

    pub fn zero() -> Self {
        Expr::real(0.0)
    }

    pub fn one() -> Self {
        Expr::real(1.0)
    }

    pub fn as_const(&self) -> Option<Complex64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn is_const(&self, v: f64) -> bool {
        self.as_const() == Some(Complex64::new(v, 0.0))
    }

    pub fn sum(terms: Vec<Expr>) -> Self {
        let mut flat = Vec::with_capacity(terms.len());
        let mut acc = Complex64::new(0.0, 0.0);
        for term in terms {
            match term {
                Expr::Sum(inner) => {
                    for e in inner {
                        match e {
                            Expr::Const(c) => acc += c,
                            other => flat.push(other),
                        }
                    }
                }
                Expr::Const(c) => acc += c,
                other => flat.push(other),
            }
        }
        if acc != Complex64::new(0.0, 0.0) {
            flat.push(Expr::Const(acc));
        }
        match flat.len() {
            0 => Expr::zero(),
            1 => flat.pop().unwrap(),
            _ => Expr::Sum(flat),
        }
    }

    pub fn product(factors: Vec<Expr>) -> Self {
        let mut flat = Vec::with_capacity(factors.len());
        let mut acc = Complex64::new(1.0, 0.0);
        let mut negate = false;
        let mut push = |e: Expr, acc: &mut Complex64, negate: &mut bool| match e {
            Expr::Const(c) => *acc *= c,
            Expr::Neg(inner) => {
                *negate = !*negate;
                match *inner {
                    Expr::Const(c) => *acc *= c,
                    other => flat.push(other),
                }
            }
            other => flat.push(other),
        };
        for f in factors {
            match f {
                Expr::Product(inner) => {
                    for e in inner {
                        push(e, &mut acc, &mut negate);
                    }
                }
                other => push(other, &mut acc, &mut negate),
            }
        }
        if negate {
            acc = -acc;
        }
        if acc == Complex64::new(0.0, 0.0) {
            return Expr::zero();
        }
        let folded = match flat.len() {
            0 => return Expr::Const(acc),
            1 if acc == Complex64::new(1.0, 0.0) => return flat.pop().unwrap(),
            _ => flat,
        };
        if acc == Complex64::new(1.0, 0.0) {
            Expr::Product(folded)
        } else if acc == Complex64::new(-1.0, 0.0) {
            Expr::Neg(Box::new(if folded.len() == 1 {
                folded.into_iter().next().unwrap()
            } else {
                Expr::Product(folded)
            }))
        } else {
            let mut v = vec![Expr::Const(acc)];
            v.extend(folded);
            Expr::Product(v)
        }
    }

    pub fn neg(e: Expr) -> Self {
        match e {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn pow(base: Expr, exp: Exponent) -> Self {
        if exp.0 == 0 {
            return Expr::one();
        }
        if exp.0 == 2 {
            return base;
        }
        match base {
            Expr::Const(c) if exp.is_integer() => Expr::Const(c.powi(exp.0 / 2)),
            Expr::Pow(inner, e) if exp.is_integer() && e.is_integer() => {
                Expr::pow(*inner, Exponent::int(e.0 / 2 * exp.0 / 2))
            }
            other => Expr::Pow(Box::new(other), exp),
        }
    }

    pub fn powi(base: Expr, n: i32) -> Self {
        Expr::pow(base, Exponent::int(n))
    }

    pub fn apply(func: Func, arg: Expr) -> Self {
        match (func, &arg) {
            (Func::Sin | Func::Cos | Func::Exp, Expr::Const(c)) => {
                Expr::Const(func.apply(*c, f64::NAN).expect("total function"))
            }
            _ => Expr::Apply(func, Box::new(arg)),
        }
    }

    pub fn sin(e: Expr) -> Self {
        Expr::apply(Func::Sin, e)
    }
    pub fn cos(e: Expr) -> Self {
        Expr::apply(Func::Cos, e)
    }
    pub fn exp(e: Expr) -> Self {
        Expr::apply(Func::Exp, e)
    }
    pub fn ln(e: Expr) -> Self {
        Expr::apply(Func::Ln, e)
    }
    pub fn sqrt(e: Expr) -> Self {
        Expr::apply(Func::Sqrt, e)
    }

    pub fn cumint(integrand: Expr, lower: f64) -> Self {
        Expr::CumInt {
            integrand: Box::new(integrand),
            lower,
        }
    }

    /// Symbolic derivative with respect to `t`.
    pub fn differentiate(&self) -> Result<Expr> {
        Ok(match self {
            Expr::Const(_) | Expr::Param(_) => Expr::zero(),
            Expr::Var => Expr::one(),
            Expr::Sum(terms) => Expr::sum(
                terms
                    .iter()
                    .map(Expr::differentiate)
                    .collect::<Result<Vec<_>>>()?,
            ),
            Expr::Product(factors) => {
                let mut terms = Vec::with_capacity(factors.len());
                for (i, f) in factors.iter().enumerate() {
                    let df = f.differentiate()?;
                    if df.is_const(0.0) {
                        continue;
                    }
                    let mut parts: Vec<Expr> = factors
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, g)| g.clone())
                        .collect();
                    parts.push(df);
                    terms.push(Expr::product(parts));
                }
                Expr::sum(terms)
            }
            Expr::Neg(inner) => Expr::neg(inner.differentiate()?),
            Expr::Pow(base, exp) => {
                // n b^(n-1) b'
                let db = base.differentiate()?;
                Expr::product(vec![
                    Expr::real(exp.value()),
                    Expr::pow((**base).clone(), Exponent(exp.0 - 2)),
                    db,
                ])
            }
            Expr::Apply(func, arg) => {
                let da = arg.differentiate()?;
                let a = (**arg).clone();
                let outer = match func {
                    Func::Sin => Expr::cos(a),
                    Func::Cos => Expr::neg(Expr::sin(a)),
                    Func::Exp => Expr::exp(a),
                    Func::Ln => Expr::powi(a, -1),
                    Func::Sqrt => {
                        Expr::product(vec![Expr::real(0.5), Expr::powi(Expr::sqrt(a), -1)])
                    }
                };
                Expr::product(vec![outer, da])
            }
            Expr::CumInt { integrand, .. } => (**integrand).clone(),
        })
    }

    /// Replace bound parameters by constants and re-fold.
    pub fn substitute(&self, params: &Params) -> Expr {
        match self {
            Expr::Param(name) => match params.get(name) {
                Some(v) => Expr::Const(*v),
                None => self.clone(),
            },
            Expr::Const(_) | Expr::Var => self.clone(),
            Expr::Sum(v) => Expr::sum(v.iter().map(|e| e.substitute(params)).collect()),
            Expr::Product(v) => Expr::product(v.iter().map(|e| e.substitute(params)).collect()),
            Expr::Neg(e) => Expr::neg(e.substitute(params)),
            Expr::Pow(b, n) => Expr::pow(b.substitute(params), *n),
            Expr::Apply(f, e) => Expr::apply(*f, e.substitute(params)),
            Expr::CumInt { integrand, lower } => Expr::cumint(integrand.substitute(params), *lower),
        }
    }

    /// Names of parameters referenced anywhere in the tree.
    pub fn params(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Param(n) = e {
                if !out.contains(n) {
                    out.push(n.clone());
                }
            }
        });
        out
    }

    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Sum(v) | Expr::Product(v) => v.iter().for_each(|e| e.visit(f)),
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Apply(_, e) => e.visit(f),
            Expr::CumInt { integrand, .. } => integrand.visit(f),
            Expr::Const(_) | Expr::Var | Expr::Param(_) => {}
        }
    }

    pub fn has_cumint(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::CumInt { .. }));
        found
    }

    /// Evaluate with cumulative integrals computed by direct adaptive
    /// quadrature from their lower limit. Slow for nested or repeated use;
    /// see [`crate::bind`] for the cached evaluator.
    pub fn eval_direct(&self, params: &Params, t: f64) -> Result<Complex64> {
        self.eval_direct_tol(params, t, Tolerance::default())
    }

    pub fn eval_direct_tol(&self, params: &Params, t: f64, tol: Tolerance) -> Result<Complex64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var => Complex64::new(t, 0.0),
            Expr::Param(n) => *params
                .get(n)
                .ok_or_else(|| Error::UnboundParameter(n.clone()))?,
            Expr::Sum(v) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for e in v {
                    acc += e.eval_direct_tol(params, t, tol)?;
                }
                acc
            }
            Expr::Product(v) => {
                let mut acc = Complex64::new(1.0, 0.0);
                for e in v {
                    acc *= e.eval_direct_tol(params, t, tol)?;
                }
                acc
            }
            Expr::Neg(e) => -e.eval_direct_tol(params, t, tol)?,
            Expr::Pow(b, n) => pow_value(b.eval_direct_tol(params, t, tol)?, *n, t)?,
            Expr::Apply(f, e) => f.apply(e.eval_direct_tol(params, t, tol)?, t)?,
            Expr::CumInt { integrand, lower } => {
                if t < *lower {
                    return Err(Error::OutOfRange {
                        t,
                        lo: *lower,
                        hi: f64::INFINITY,
                    });
                }
                quad::integrate(
                    |s| integrand.eval_direct_tol(params, s, tol),
                    *lower,
                    t,
                    tol,
                )?
                .value
            }
        })
    }
}

pub(crate) fn pow_value(base: Complex64, exp: Exponent, t: f64) -> Result<Complex64> {
    if exp.is_integer() {
        if base.im == 0.0 {
            return Ok(Complex64::new(base.re.powi(exp.0 / 2), 0.0));
        }
        Ok(base.powi(exp.0 / 2))
    } else {
        let x = positive_real(base, "half-integer power", t)?;
        Ok(Complex64::new(x.powf(exp.value()), 0.0))
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::sum(vec![self, rhs])
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sum(vec![self, Expr::neg(rhs)])
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::product(vec![self, rhs])
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

impl ops::Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::product(vec![Expr::real(self), rhs])
    }
}

// Binding strengths used for parenthesization when printing.
const PREC_SUM: u8 = 1;
const PREC_NEG: u8 = 2;
const PREC_PRODUCT: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if c.im != 0.0 && c.re != 0.0 => PREC_SUM,
        Expr::Const(c) if c.im < 0.0 => PREC_NEG,
        Expr::Const(c) if c.im > 0.0 => PREC_PRODUCT,
        Expr::Const(c) if c.re.is_sign_negative() => PREC_NEG,
        Expr::Sum(_) => PREC_SUM,
        Expr::Neg(_) => PREC_NEG,
        Expr::Product(_) => PREC_PRODUCT,
        Expr::Pow(..) => PREC_POW,
        _ => PREC_ATOM,
    }
}

fn fmt_real(v: f64) -> String {
    // Shortest representation that round-trips.
    format!("{v:?}")
}

fn write_at(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if precedence(e) < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => match (c.re, c.im) {
                (re, im) if im == 0.0 => write!(f, "{}", fmt_real(re)),
                (re, im) if re == 0.0 => write!(f, "{}*i", fmt_real(im)),
                (re, im) if im < 0.0 => write!(f, "{} - {}*i", fmt_real(re), fmt_real(-im)),
                (re, im) => write!(f, "{} + {}*i", fmt_real(re), fmt_real(im)),
            },
            Expr::Var => f.write_str("t"),
            Expr::Param(n) => f.write_str(n),
            Expr::Sum(terms) => {
                for (i, term) in terms.iter().enumerate() {
                    match term {
                        Expr::Const(c) if i > 0 && c.im == 0.0 && c.re < 0.0 => {
                            write!(f, " - {}", fmt_real(-c.re))?;
                        }
                        Expr::Neg(inner) if i > 0 => {
                            f.write_str(" - ")?;
                            write_at(f, inner, PREC_PRODUCT)?;
                        }
                        _ => {
                            if i > 0 {
                                f.write_str(" + ")?;
                            }
                            write_at(f, term, PREC_NEG)?;
                        }
                    }
                }
                Ok(())
            }
            Expr::Product(factors) => {
                for (i, factor) in factors.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    write_at(f, factor, PREC_POW)?;
                }
                Ok(())
            }
            Expr::Neg(inner) => {
                f.write_str("-")?;
                write_at(f, inner, PREC_PRODUCT)
            }
            Expr::Pow(base, exp) => {
                write_at(f, base, PREC_ATOM)?;
                if exp.0 < 0 || !exp.is_integer() {
                    write!(f, "^({})", fmt_real(exp.value()))
                } else {
                    write!(f, "^{}", exp.0 / 2)
                }
            }
            Expr::Apply(func, arg) => write!(f, "{}({})", func.name(), arg),
            Expr::CumInt { integrand, lower } => {
                write!(f, "cumint({}, {})", integrand, fmt_real(*lower))
            }
        }
    }
}
