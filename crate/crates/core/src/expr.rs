//! Closed-form structural equations.
//!
//! An [`Expr`] is a small arithmetic tree over parent columns (by name) and a
//! single exogenous symbol. Trees are compiled against a schema into
//! [`CompiledExpr`], which evaluates on index-addressed rows and can solve
//! `f(parents, u) = target` for `u` when the noise symbol sits on a chain
//! of invertible operations.

use std::collections::BTreeSet;
use std::ops;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::FeatureSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    Var(String),
    Noise,
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Neg(Box<Expr>),
    Sigmoid(Box<Expr>),
    /// `1{arg > 0}` when `strict`, `1{arg >= 0}` otherwise.
    Step { arg: Box<Expr>, strict: bool },
}

pub fn var(name: &str) -> Expr {
    Expr::Var(name.to_string())
}

pub fn constant(value: f64) -> Expr {
    Expr::Const(value)
}

pub fn noise() -> Expr {
    Expr::Noise
}

pub fn sigmoid(arg: Expr) -> Expr {
    Expr::Sigmoid(Box::new(arg))
}

/// `1{arg > 0}`.
pub fn positive(arg: Expr) -> Expr {
    Expr::Step { arg: Box::new(arg), strict: true }
}

impl Expr {
    /// Names of the columns referenced by this expression, deduplicated.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Add(xs) | Expr::Mul(xs) => xs.iter().for_each(|x| x.collect_vars(out)),
            Expr::Neg(x) | Expr::Sigmoid(x) => x.collect_vars(out),
            Expr::Step { arg, .. } => arg.collect_vars(out),
            Expr::Const(_) | Expr::Noise => {}
        }
    }

    pub fn compile(&self, schema: &FeatureSchema) -> Result<CompiledExpr> {
        Ok(match self {
            Expr::Const(c) => CompiledExpr::Const(*c),
            Expr::Var(name) => CompiledExpr::Var(
                schema
                    .index_of(name)
                    .ok_or_else(|| Error::InvalidModel(format!("unknown column `{name}` in mechanism")))?,
            ),
            Expr::Noise => CompiledExpr::Noise,
            Expr::Add(xs) => CompiledExpr::Add(xs.iter().map(|x| x.compile(schema)).collect::<Result<_>>()?),
            Expr::Mul(xs) => CompiledExpr::Mul(xs.iter().map(|x| x.compile(schema)).collect::<Result<_>>()?),
            Expr::Neg(x) => CompiledExpr::Neg(Box::new(x.compile(schema)?)),
            Expr::Sigmoid(x) => CompiledExpr::Sigmoid(Box::new(x.compile(schema)?)),
            Expr::Step { arg, strict } => CompiledExpr::Step(Box::new(arg.compile(schema)?), *strict),
        })
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::Const(c)
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        let mut terms = match self {
            Expr::Add(xs) => xs,
            x => vec![x],
        };
        match rhs {
            Expr::Add(xs) => terms.extend(xs),
            x => terms.push(x),
        }
        Expr::Add(terms)
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        let mut factors = match self {
            Expr::Mul(xs) => xs,
            x => vec![x],
        };
        match rhs {
            Expr::Mul(xs) => factors.extend(xs),
            x => factors.push(x),
        }
        Expr::Mul(factors)
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn sub(self, rhs: Expr) -> Expr {
        self + (-rhs)
    }
}

macro_rules! scalar_ops {
    ($($tr:ident $method:ident),*) => {$(
        impl ops::$tr<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                ops::$tr::$method(self, Expr::Const(rhs))
            }
        }
        impl ops::$tr<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                ops::$tr::$method(Expr::Const(self), rhs)
            }
        }
    )*};
}

scalar_ops!(Add add, Sub sub, Mul mul);

#[derive(Debug, Clone, PartialEq)]
pub enum CompiledExpr {
    Const(f64),
    Var(usize),
    Noise,
    Add(Vec<CompiledExpr>),
    Mul(Vec<CompiledExpr>),
    Neg(Box<CompiledExpr>),
    Sigmoid(Box<CompiledExpr>),
    Step(Box<CompiledExpr>, bool),
}

/// Outcome of solving `f(u) = target` in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solve {
    /// Unique solution; `increasing` gives the direction of `f` in `u`.
    Solved { u: f64, increasing: bool },
    /// `f` does not depend on `u` at these parent values.
    Flat,
    /// `f` never attains `target` (e.g. a sigmoid asked for 1.0).
    Unreachable,
    /// The noise symbol is not on an invertible chain; use numeric search.
    NoClosedForm,
}

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl CompiledExpr {
    pub fn eval(&self, values: &[f64], u: f64) -> f64 {
        match self {
            CompiledExpr::Const(c) => *c,
            CompiledExpr::Var(i) => values[*i],
            CompiledExpr::Noise => u,
            CompiledExpr::Add(xs) => xs.iter().map(|x| x.eval(values, u)).sum(),
            CompiledExpr::Mul(xs) => xs.iter().map(|x| x.eval(values, u)).product(),
            CompiledExpr::Neg(x) => -x.eval(values, u),
            CompiledExpr::Sigmoid(x) => logistic(x.eval(values, u)),
            CompiledExpr::Step(x, strict) => {
                let a = x.eval(values, u);
                f64::from(u8::from(if *strict { a > 0.0 } else { a >= 0.0 }))
            }
        }
    }

    pub fn has_noise(&self) -> bool {
        match self {
            CompiledExpr::Noise => true,
            CompiledExpr::Const(_) | CompiledExpr::Var(_) => false,
            CompiledExpr::Add(xs) | CompiledExpr::Mul(xs) => xs.iter().any(CompiledExpr::has_noise),
            CompiledExpr::Neg(x) | CompiledExpr::Sigmoid(x) | CompiledExpr::Step(x, _) => x.has_noise(),
        }
    }

    pub fn parents(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_parents(&mut out);
        out
    }

    fn collect_parents(&self, out: &mut BTreeSet<usize>) {
        match self {
            CompiledExpr::Var(i) => {
                out.insert(*i);
            }
            CompiledExpr::Add(xs) | CompiledExpr::Mul(xs) => xs.iter().for_each(|x| x.collect_parents(out)),
            CompiledExpr::Neg(x) | CompiledExpr::Sigmoid(x) | CompiledExpr::Step(x, _) => x.collect_parents(out),
            CompiledExpr::Const(_) | CompiledExpr::Noise => {}
        }
    }

    /// Solves `self(values, u) = target` for `u` by inverting the chain of
    /// operations between the root and the noise symbol.
    pub fn solve(&self, values: &[f64], target: f64) -> Solve {
        match self {
            CompiledExpr::Noise => Solve::Solved { u: target, increasing: true },
            CompiledExpr::Const(_) | CompiledExpr::Var(_) => Solve::Flat,
            CompiledExpr::Add(xs) => {
                let mut noisy = xs.iter().filter(|x| x.has_noise());
                let Some(inner) = noisy.next() else { return Solve::Flat };
                if noisy.next().is_some() {
                    return Solve::NoClosedForm;
                }
                let rest: f64 = xs.iter().filter(|x| !x.has_noise()).map(|x| x.eval(values, 0.0)).sum();
                inner.solve(values, target - rest)
            }
            CompiledExpr::Mul(xs) => {
                let mut noisy = xs.iter().filter(|x| x.has_noise());
                let Some(inner) = noisy.next() else { return Solve::Flat };
                if noisy.next().is_some() {
                    return Solve::NoClosedForm;
                }
                let k: f64 = xs.iter().filter(|x| !x.has_noise()).map(|x| x.eval(values, 0.0)).product();
                if k == 0.0 {
                    return Solve::Flat;
                }
                if !k.is_finite() {
                    return Solve::NoClosedForm;
                }
                flip_if(inner.solve(values, target / k), k < 0.0)
            }
            CompiledExpr::Neg(x) => flip_if(x.solve(values, -target), true),
            CompiledExpr::Sigmoid(x) => {
                if !x.has_noise() {
                    return Solve::Flat;
                }
                if target <= 0.0 || target >= 1.0 {
                    return Solve::Unreachable;
                }
                let w = (target / (1.0 - target)).ln();
                if !w.is_finite() {
                    return Solve::Unreachable;
                }
                x.solve(values, w)
            }
            CompiledExpr::Step(x, _) => {
                if x.has_noise() {
                    Solve::NoClosedForm
                } else {
                    Solve::Flat
                }
            }
        }
    }
}

fn flip_if(s: Solve, flip: bool) -> Solve {
    match s {
        Solve::Solved { u, increasing } if flip => Solve::Solved { u, increasing: !increasing },
        other => other,
    }
}
