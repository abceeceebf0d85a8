//! Infix parser for coefficient expressions.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' exponent)?
//! atom   := number | 't' | 'i' | name | func '(' expr ')' | 'cumint' '(' expr [',' number] ')' | '(' expr ')'
//! ```
//!
//! Exponents are integer or half-integer literals, optionally negative or
//! parenthesized. `i` is the imaginary unit; any other bare name is a parameter.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expr::{Exponent, Expr, Func};

/// Parse `src`; `cumint(f)` without an explicit lower limit integrates from `t0`.
pub fn parse(src: &str, t0: f64) -> Result<Expr> {
    let mut p = Parser { src, pos: 0, t0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    t0: f64,
}

impl Parser<'_> {
    fn error(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek_raw() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek_raw(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.peek_raw()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat('+') {
                terms.push(self.term()?);
            } else if self.eat('-') {
                terms.push(Expr::neg(self.term()?));
            } else {
                break;
            }
        }
        Ok(Expr::sum(terms))
    }

    fn term(&mut self) -> Result<Expr> {
        let mut factors = vec![self.unary()?];
        loop {
            if self.eat('*') {
                factors.push(self.unary()?);
            } else if self.eat('/') {
                factors.push(Expr::powi(self.unary()?, -1));
            } else {
                break;
            }
        }
        Ok(Expr::product(factors))
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            Ok(Expr::neg(self.unary()?))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let start = self.pos;
        let value = if self.eat('(') {
            let neg = self.eat('-');
            let v = self.number()?;
            self.expect(')')?;
            if neg {
                -v
            } else {
                v
            }
        } else {
            let neg = self.eat('-');
            let v = self.number()?;
            if neg {
                -v
            } else {
                v
            }
        };
        let exp = Exponent::from_f64(value).ok_or(Error::Parse {
            pos: start,
            msg: format!("exponent {value} is not an integer or half-integer"),
        })?;
        Ok(Expr::pow(base, exp))
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let mut end = 0;
        let bytes = rest.as_bytes();
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut k = end + 1;
            if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                k += 1;
            }
            if k < bytes.len() && bytes[k].is_ascii_digit() {
                while k < bytes.len() && bytes[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        if end == 0 {
            return Err(self.error("expected a number"));
        }
        let v = rest[..end]
            .parse::<f64>()
            .map_err(|e| self.error(format!("bad number: {e}")))?;
        self.pos += end;
        Ok(v)
    }

    fn ident(&mut self) -> Option<&str> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .char_indices()
            .find(|&(i, c)| !(c.is_ascii_alphabetic() || c == '_' || (i > 0 && c.is_ascii_digit())))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        if len == 0 {
            return None;
        }
        self.pos += len;
        Some(&rest[..len])
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => Ok(Expr::real(self.number()?)),
            Some(_) => {
                let start = self.pos;
                let name = match self.ident() {
                    Some(n) => n.to_string(),
                    None => return Err(self.error("unexpected character")),
                };
                match name.as_str() {
                    "t" => Ok(Expr::t()),
                    "i" => Ok(Expr::Const(Complex64::new(0.0, 1.0))),
                    "cumint" => {
                        self.expect('(')?;
                        let integrand = self.expr()?;
                        let lower = if self.eat(',') {
                            let neg = self.eat('-');
                            let v = self.number()?;
                            if neg {
                                -v
                            } else {
                                v
                            }
                        } else {
                            self.t0
                        };
                        self.expect(')')?;
                        Ok(Expr::cumint(integrand, lower))
                    }
                    _ => {
                        if let Some(func) = Func::from_name(&name) {
                            self.expect('(')?;
                            let arg = self.expr()?;
                            self.expect(')')?;
                            Ok(Expr::apply(func, arg))
                        } else if self.peek() == Some('(') {
                            Err(Error::Parse {
                                pos: start,
                                msg: format!("unknown function `{name}`"),
                            })
                        } else {
                            Ok(Expr::param(name))
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Params;
    use proptest::prelude::*;

    #[test]
    fn parses_catalog_style_strings() {
        let e = parse(
            "lambda/2 + lambda^2*t^2/4 - t/4 - cumint(sin(exp(t))^2)/4",
            1.0,
        )
        .unwrap();
        let mut params = Params::new();
        params.insert("lambda".into(), Complex64::new(1.0, 0.0));
        let v = e.eval_direct(&params, 1.0).unwrap();
        assert!((v.re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cumint_default_lower_limit() {
        assert_eq!(
            parse("cumint(1)", 2.5).unwrap(),
            Expr::cumint(Expr::one(), 2.5)
        );
        assert_eq!(
            parse("cumint(1, -1)", 2.5).unwrap(),
            Expr::cumint(Expr::one(), -1.0)
        );
    }

    #[test]
    fn rejects_bad_exponent_and_garbage() {
        assert!(parse("t^0.3", 0.0).is_err());
        assert!(parse("t +", 0.0).is_err());
        assert!(parse("foo(t)", 0.0).is_err());
        assert!(parse("t)", 0.0).is_err());
    }

    #[test]
    fn complex_literals() {
        let e = parse("2 + 3*i", 0.0).unwrap();
        assert_eq!(e.as_const(), Some(Complex64::new(2.0, 3.0)));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-5.0f64..5.0).prop_map(Expr::real),
            Just(Expr::t()),
            Just(Expr::param("a")),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::sum),
                prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::product),
                inner.clone().prop_map(Expr::neg),
                (inner.clone(), -3i32..4).prop_map(|(e, n)| Expr::powi(e, n)),
                inner.clone().prop_map(Expr::sin),
                inner.clone().prop_map(Expr::exp),
                inner.prop_map(|e| Expr::cumint(e, 0.5)),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        /// Printing and re-parsing preserves the value of the expression.
        #[test]
        fn display_parse_roundtrip(e in arb_expr(), t in 0.5f64..2.0) {
            let printed = e.to_string();
            let back = parse(&printed, 0.0).unwrap();
            let mut params = Params::new();
            params.insert("a".into(), Complex64::new(0.7, -0.2));
            let tol = crate::quad::Tolerance::new(1e-12, 1e-9);
            let (v1, v2) = match (e.eval_direct_tol(&params, t, tol), back.eval_direct_tol(&params, t, tol)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return Ok(()),
            };
            if v1.norm().is_finite() && v1.norm() < 1e8 {
                prop_assert!((v1 - v2).norm() <= 1e-8 * (1.0 + v1.norm()), "{printed}: {v1} vs {v2}");
            }
        }
    }
}
