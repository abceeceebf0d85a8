//! Boundedness and stability analysis of `φ'' + p(t)φ' + q(t)φ = 0`.
//!
//! The equation is reduced to `ψ'' = (D/4)ψ` with `D = 2p' + p² − 4q`. When
//! `D > 0`, the solution of the Riccati equation `y' + y² = D/4` started at
//! `y(t0) = √(D(t0)/4)` (the *differential root*) governs the qualitative
//! behaviour of every solution. This crate computes that root and the
//! functionals built on it, checks the hypotheses under which they decide
//! boundedness and stability, and cross-checks every verdict against direct
//! integration of the original equation.

pub mod analysis;
pub mod bind;
pub mod criteria;
pub mod error;
pub mod expr;
pub mod ode;
pub mod oracle;
pub mod outcome;
pub mod parse;
pub mod problem;
pub mod quad;
pub mod riccati;
pub mod trace;

pub use analysis::{analyze, AnalysisConfig, AnalysisReport};
pub use bind::{BindOptions, Binder, BoundExpr, Decomposition};
pub use criteria::{CriteriaConfig, Verdict};
pub use error::{Error, Result};
pub use expr::{Expr, Params};
pub use oracle::{EmpiricalVerdict, OracleConfig, SolutionTrace};
pub use outcome::{Boundedness, Stability};
pub use parse::parse;
pub use problem::{catalog, Problem, ProblemDoc};
pub use riccati::{differential_root, RootOptions, RootTrace};
pub use trace::{eval_grid, FnPair, FuncTrace, Grid, RealExpr, SmoothFunction};
