//! Evaluation of expressions with parameters bound and cumulative integrals
//! tabulated.
//!
//! Each distinct `cumint(f, a)` node is integrated once over `[a, t_max]` by
//! adaptive Gauss–Kronrod in blocks; the accepted panels become knots of a
//! table of running integrals. A query at `t` adds a ten-point Gauss rule over
//! `[knot, t]`, which lies inside a panel the adaptive rule already resolved.
//!
//! Integrands that oscillate too fast to tabulate at large `t` may carry a
//! [`Decomposition`]: beyond the cutoff `t_osc` the integral continues along
//! its linear trend from the tabulated value at the cutoff. The neglected
//! remainder variation is bounded by the decomposition's remainder bound.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{pow_value, Exponent, Expr, Func, Params};
use crate::parse::parse;
use crate::quad::{self, Tolerance, DEFAULT_MAX_PANELS};

/// `∫_lower^t integrand = trend·(t − lower) + r(t)` with `|r(t)| ≤ remainder_bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub integrand: String,
    pub lower: f64,
    pub trend: f64,
    pub remainder_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindOptions {
    /// Largest `t` at which bound expressions will be evaluated.
    pub t_max: f64,
    /// Cutoff beyond which decomposed integrals follow their trend.
    pub t_osc: f64,
    pub quad_tol: Tolerance,
    /// Width of the blocks the adaptive integrator works on.
    pub block_width: f64,
    pub decompositions: Vec<Decomposition>,
}

impl BindOptions {
    pub fn new(t_max: f64) -> Self {
        BindOptions {
            t_max,
            t_osc: 12.0,
            quad_tol: Tolerance::default(),
            block_width: 0.5,
            decompositions: Vec::new(),
        }
    }
}

#[derive(Debug)]
enum Node {
    Const(Complex64),
    Var,
    Sum(Vec<Node>),
    Product(Vec<Node>),
    Neg(Box<Node>),
    Pow(Box<Node>, Exponent),
    Apply(Func, Box<Node>),
    Cum(Arc<CumTable>),
    /// A decomposed integrand: beyond `cutoff` it takes its trend value,
    /// the derivative of the continued integral.
    Averaged {
        inner: Box<Node>,
        cutoff: f64,
        trend: f64,
    },
}

impl Node {
    fn eval(&self, t: f64) -> Result<Complex64> {
        Ok(match self {
            Node::Const(c) => *c,
            Node::Var => Complex64::new(t, 0.0),
            Node::Sum(v) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in v {
                    acc += n.eval(t)?;
                }
                acc
            }
            Node::Product(v) => {
                let mut acc = Complex64::new(1.0, 0.0);
                for n in v {
                    acc *= n.eval(t)?;
                }
                acc
            }
            Node::Neg(n) => -n.eval(t)?,
            Node::Pow(b, e) => pow_value(b.eval(t)?, *e, t)?,
            Node::Apply(f, n) => f.apply(n.eval(t)?, t)?,
            Node::Cum(table) => table.value(t)?,
            Node::Averaged {
                inner,
                cutoff,
                trend,
            } => {
                if t > *cutoff {
                    Complex64::new(*trend, 0.0)
                } else {
                    inner.eval(t)?
                }
            }
        })
    }
}

#[derive(Debug)]
struct Tail {
    cutoff: f64,
    base: Complex64,
    trend: f64,
}

#[derive(Debug)]
pub struct CumTable {
    lower: f64,
    integrand: Node,
    knots: Vec<f64>,
    cum: Vec<Complex64>,
    tail: Option<Tail>,
}

impl CumTable {
    fn build(
        integrand: Node,
        lower: f64,
        end: f64,
        tol: Tolerance,
        block: f64,
        trend: Option<f64>,
    ) -> Result<Self> {
        let mut knots = vec![lower];
        let mut cum = vec![Complex64::new(0.0, 0.0)];
        let mut acc = Complex64::new(0.0, 0.0);
        let mut a = lower;
        while a < end {
            let b = (a + block).min(end);
            let panels =
                quad::integrate_partition(|s| integrand.eval(s), a, b, tol, DEFAULT_MAX_PANELS)?;
            for p in &panels {
                acc += p.value;
                knots.push(p.b);
                cum.push(acc);
            }
            a = b;
        }
        let tail = trend.map(|trend| Tail {
            cutoff: end,
            base: acc,
            trend,
        });
        Ok(CumTable {
            lower,
            integrand,
            knots,
            cum,
            tail,
        })
    }

    fn value(&self, t: f64) -> Result<Complex64> {
        let last = *self.knots.last().unwrap();
        if let Some(tail) = &self.tail {
            if t > tail.cutoff {
                return Ok(tail.base + tail.trend * (t - tail.cutoff));
            }
        }
        let slack = 1e-9 * (1.0 + last.abs());
        if t < self.lower - slack || t > last + slack {
            return Err(Error::OutOfRange {
                t,
                lo: self.lower,
                hi: last,
            });
        }
        let t = t.clamp(self.lower, last);
        let k = self.knots.partition_point(|&x| x <= t).saturating_sub(1);
        let k = k.min(self.knots.len() - 1);
        if self.knots[k] == t {
            return Ok(self.cum[k]);
        }
        let part: Complex64 = quad::gl10(&mut |s| self.integrand.eval(s), self.knots[k], t)?;
        Ok(self.cum[k] + part)
    }

    pub fn knot_count(&self) -> usize {
        self.knots.len()
    }
}

/// An expression ready for repeated evaluation. Cheap to clone; safe to share
/// across threads.
#[derive(Debug, Clone)]
pub struct BoundExpr {
    node: Arc<Node>,
    source: Arc<Expr>,
}

impl BoundExpr {
    pub fn eval(&self, t: f64) -> Result<Complex64> {
        self.node.eval(t)
    }

    /// The expression with parameters substituted.
    pub fn expr(&self) -> &Expr {
        &self.source
    }
}

/// Binds parameters and shares cumulative-integral tables between all the
/// expressions it binds.
pub struct Binder {
    params: Params,
    opts: BindOptions,
    decomps: Vec<(String, f64)>,
    integrands: Vec<(String, f64)>,
    cache: HashMap<String, Arc<CumTable>>,
}

impl Binder {
    pub fn new(params: Params, opts: BindOptions) -> Result<Self> {
        let mut decomps = Vec::new();
        let mut integrands = Vec::new();
        for d in &opts.decompositions {
            let e = parse(&d.integrand, d.lower)?.substitute(&params);
            decomps.push((cache_key(&e, d.lower), d.trend));
            integrands.push((e.to_string(), d.trend));
        }
        Ok(Binder {
            params,
            opts,
            decomps,
            integrands,
            cache: HashMap::new(),
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn options(&self) -> &BindOptions {
        &self.opts
    }

    pub fn bind(&mut self, e: &Expr) -> Result<BoundExpr> {
        let substituted = e.substitute(&self.params);
        let node = self.compile(&substituted)?;
        Ok(BoundExpr {
            node: Arc::new(node),
            source: Arc::new(substituted),
        })
    }

    fn compile(&mut self, e: &Expr) -> Result<Node> {
        if self.opts.t_max > self.opts.t_osc && !self.integrands.is_empty() {
            let key = e.to_string();
            if let Some(&(_, trend)) = self.integrands.iter().find(|(k, _)| *k == key) {
                let inner = self.compile_node(e)?;
                return Ok(Node::Averaged {
                    inner: Box::new(inner),
                    cutoff: self.opts.t_osc,
                    trend,
                });
            }
        }
        self.compile_node(e)
    }

    fn compile_node(&mut self, e: &Expr) -> Result<Node> {
        Ok(match e {
            Expr::Const(c) => Node::Const(*c),
            Expr::Var => Node::Var,
            Expr::Param(n) => return Err(Error::UnboundParameter(n.clone())),
            Expr::Sum(v) => Node::Sum(v.iter().map(|x| self.compile(x)).collect::<Result<_>>()?),
            Expr::Product(v) => {
                Node::Product(v.iter().map(|x| self.compile(x)).collect::<Result<_>>()?)
            }
            Expr::Neg(x) => Node::Neg(Box::new(self.compile(x)?)),
            Expr::Pow(b, n) => Node::Pow(Box::new(self.compile(b)?), *n),
            Expr::Apply(f, x) => Node::Apply(*f, Box::new(self.compile(x)?)),
            Expr::CumInt { integrand, lower } => {
                let key = cache_key(integrand, *lower);
                if let Some(table) = self.cache.get(&key) {
                    return Ok(Node::Cum(Arc::clone(table)));
                }
                let inner = self.compile_node(integrand)?;
                let trend = self
                    .decomps
                    .iter()
                    .find(|(k, _)| *k == key)
                    .map(|&(_, trend)| trend);
                let end = match trend {
                    Some(_) => self.opts.t_max.min(self.opts.t_osc),
                    None => self.opts.t_max,
                }
                .max(*lower);
                // A trend only applies if the table actually stops at the cutoff.
                let trend = trend.filter(|_| self.opts.t_max > self.opts.t_osc);
                let table = Arc::new(CumTable::build(
                    inner,
                    *lower,
                    end,
                    self.opts.quad_tol,
                    self.opts.block_width,
                    trend,
                )?);
                self.cache.insert(key, Arc::clone(&table));
                Node::Cum(table)
            }
        })
    }
}

fn cache_key(integrand: &Expr, lower: f64) -> String {
    format!("{integrand}@{lower:?}")
}
