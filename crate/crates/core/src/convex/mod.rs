//! Small convex modeling layer with a log-barrier interior-point solver.
//!
//! Programs maximize a concave objective built from affine terms and a
//! closed set of atoms, subject to convex `expr <= 0` constraints and
//! second-order cones. Hessians are assumed banded once variables are
//! ordered by time slot, which keeps every Newton step linear in size.

pub mod band;
mod barrier;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
#[allow(unused_imports)] // redundant when num-traits is built with std
use num_traits::Float;


pub use barrier::solve;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConvexError {
    #[error("variable `{0}` has inconsistent bounds")]
    Bounds(String),
    #[error("{0} has the wrong curvature")]
    Curvature(String),
    #[error("{0} needs variables bounded below by 0")]
    Domain(String),
    #[error("unknown variable index {0}")]
    UnknownVariable(usize),
    #[error("start point has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// `constant + sum(coef * x[var])`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Affine {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: usize) -> Self {
        Self::new().term(v, 1.0)
    }

    pub fn term(mut self, var: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, (v, c)| acc + c * x[*v])
    }
}

impl From<f64> for Affine {
    fn from(c: f64) -> Self {
        Affine::constant(c)
    }
}

/// Nonlinear building blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    /// `coef * b * log2(1 + gain * p / b)`, closed by 0 at `b = 0`.
    PerspectiveLog {
        coef: f64,
        time: usize,
        amount: usize,
        gain: f64,
    },
    /// `coef * x^3` on `x >= 0`.
    Cube { coef: f64, var: usize },
    /// `coef * ||rows||^exponent`.
    NormPower {
        coef: f64,
        rows: Vec<Affine>,
        exponent: f64,
    },
}

const LN2: f64 = core::f64::consts::LN_2;

/// `ln(1 + r) - r / (1 + r)`, accurate for tiny `r`.
pub(crate) fn log_gap(r: f64) -> f64 {
    if r.abs() < 1e-3 {
        r * r * (0.5 - r * (2.0 / 3.0 - r * (0.75 - r * (0.8 - r * 5.0 / 6.0))))
    } else {
        r.ln_1p() - r / (1.0 + r)
    }
}

impl Atom {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Atom::PerspectiveLog {
                coef,
                time,
                amount,
                gain,
            } => {
                let b = x[*time];
                if b <= 0.0 {
                    0.0
                } else {
                    coef * b * (gain * x[*amount] / b).ln_1p() / LN2
                }
            }
            Atom::Cube { coef, var } => coef * x[*var].powi(3),
            Atom::NormPower {
                coef,
                rows,
                exponent,
            } => {
                let n2: f64 = rows.iter().map(|r| r.eval(x).powi(2)).sum();
                coef * n2.powf(exponent / 2.0)
            }
        }
    }

    fn vars(&self, out: &mut Vec<usize>) {
        match self {
            Atom::PerspectiveLog { time, amount, .. } => {
                out.push(*time);
                out.push(*amount);
            }
            Atom::Cube { var, .. } => out.push(*var),
            Atom::NormPower { rows, .. } => {
                for r in rows {
                    out.extend(r.terms.iter().map(|t| t.0));
                }
            }
        }
    }

    /// Adds the gradient and Hessian of this atom at `x`.
    pub(crate) fn derivatives(&self, x: &[f64], grad: &mut Vec<(usize, f64)>, hess: &mut Vec<(usize, usize, f64)>) {
        match self {
            Atom::PerspectiveLog {
                coef,
                time,
                amount,
                gain,
            } => {
                let b = x[*time];
                let p = x[*amount];
                let s = p / b;
                let r = gain * s;
                grad.push((*amount, coef * gain / ((1.0 + r) * LN2)));
                grad.push((*time, coef * log_gap(r) / LN2));
                let curv = -coef * gain * gain / ((1.0 + r) * (1.0 + r) * LN2 * b);
                hess.push((*time, *time, curv * s * s));
                hess.push((*amount, *time, -curv * s));
                hess.push((*amount, *amount, curv));
            }
            Atom::Cube { coef, var } => {
                let v = x[*var];
                grad.push((*var, 3.0 * coef * v * v));
                hess.push((*var, *var, 6.0 * coef * v));
            }
            Atom::NormPower {
                coef,
                rows,
                exponent,
            } => {
                let vals: Vec<f64> = rows.iter().map(|r| r.eval(x)).collect();
                let n2: f64 = vals.iter().map(|v| v * v).sum();
                let a = *exponent;
                if n2 == 0.0 && a > 2.0 {
                    return;
                }
                let outer = coef * a * n2.powf(a / 2.0 - 1.0);
                for (row, v) in rows.iter().zip(&vals) {
                    for (i, ci) in &row.terms {
                        grad.push((*i, outer * v * ci));
                        for (j, cj) in &row.terms {
                            hess.push((*i, *j, half(*i, *j) * outer * ci * cj));
                        }
                    }
                }
                if a != 2.0 && n2 > 0.0 {
                    let w = outer * (a - 2.0) / n2;
                    for (ra, va) in rows.iter().zip(&vals) {
                        for (rb, vb) in rows.iter().zip(&vals) {
                            for (i, ci) in &ra.terms {
                                for (j, cj) in &rb.terms {
                                    hess.push((*i, *j, half(*i, *j) * w * va * ci * vb * cj));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Weight of an ordered pair when a symmetric matrix is enumerated in full
/// and each triplet fills both `(i, j)` and `(j, i)`.
fn half(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.5
    }
}

/// Affine part plus a sum of atoms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expr {
    pub affine: Affine,
    pub atoms: Vec<Atom>,
}

impl Expr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn term(mut self, var: usize, coef: f64) -> Self {
        self.affine = self.affine.term(var, coef);
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.affine.constant += c;
        self
    }

    pub fn atom(mut self, a: Atom) -> Self {
        self.atoms.push(a);
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.atoms
            .iter()
            .fold(self.affine.eval(x), |acc, a| acc + a.eval(x))
    }

    pub(crate) fn vars(&self, out: &mut Vec<usize>) {
        out.extend(self.affine.terms.iter().map(|t| t.0));
        for a in &self.atoms {
            a.vars(out);
        }
    }

    pub(crate) fn derivatives(&self, x: &[f64], grad: &mut Vec<(usize, f64)>, hess: &mut Vec<(usize, usize, f64)>) {
        grad.extend(self.affine.terms.iter().copied());
        for a in &self.atoms {
            a.derivatives(x, grad, hess);
        }
    }
}

impl From<Affine> for Expr {
    fn from(affine: Affine) -> Self {
        Expr {
            affine,
            atoms: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `expr <= 0` with `expr` convex.
    Convex { name: String, expr: Expr },
    /// `||rows|| <= bound`.
    Cone {
        name: String,
        rows: Vec<Affine>,
        bound: Affine,
    },
}

impl Constraint {
    pub fn name(&self) -> &str {
        match self {
            Constraint::Convex { name, .. } | Constraint::Cone { name, .. } => name,
        }
    }

    /// Signed violation; positive means infeasible.
    pub fn residual(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Convex { expr, .. } => expr.eval(x),
            Constraint::Cone { rows, bound, .. } => {
                let n2: f64 = rows.iter().map(|r| r.eval(x).powi(2)).sum();
                n2.sqrt() - bound.eval(x)
            }
        }
    }

    fn vars(&self, out: &mut Vec<usize>) {
        match self {
            Constraint::Convex { expr, .. } => expr.vars(out),
            Constraint::Cone { rows, bound, .. } => {
                for r in rows {
                    out.extend(r.terms.iter().map(|t| t.0));
                }
                out.extend(bound.terms.iter().map(|t| t.0));
            }
        }
    }
}

/// A maximization problem over bounded variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Program {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Expr,
    pub constraints: Vec<Constraint>,
    /// Optional starting point; it is pushed into the bound interior.
    pub start: Option<Vec<f64>>,
}

impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.len() - 1
    }

    /// A variable pinned to `value`; it is eliminated before solving.
    pub fn fixed(&mut self, name: impl Into<String>, value: f64) -> usize {
        self.var(name, value, value)
    }

    pub fn maximize(&mut self, objective: Expr) {
        self.objective = objective;
    }

    pub fn constrain(&mut self, name: impl Into<String>, expr: Expr) {
        self.constraints.push(Constraint::Convex {
            name: name.into(),
            expr,
        });
    }

    /// `sum(coef * x) <= rhs`.
    pub fn linear_le(&mut self, name: impl Into<String>, terms: &[(usize, f64)], rhs: f64) {
        let mut e = Expr::new().plus(-rhs);
        for (v, c) in terms {
            e = e.term(*v, *c);
        }
        self.constrain(name, e);
    }

    /// `coef * x^3 + affine <= 0`.
    pub fn cube_le(&mut self, name: impl Into<String>, var: usize, coef: f64, affine: Affine) {
        self.constrain(
            name,
            Expr::from(affine).atom(Atom::Cube { coef, var }),
        );
    }

    /// `coef * b * log2(1 + gain * p / b) >= affine`.
    pub fn perspective_ge(
        &mut self,
        name: impl Into<String>,
        time: usize,
        amount: usize,
        coef: f64,
        gain: f64,
        affine: Affine,
    ) {
        self.constrain(
            name,
            Expr::from(affine).atom(Atom::PerspectiveLog {
                coef: -coef,
                time,
                amount,
                gain,
            }),
        );
    }

    pub fn cone(&mut self, name: impl Into<String>, rows: Vec<Affine>, bound: Affine) {
        self.constraints.push(Constraint::Cone {
            name: name.into(),
            rows,
            bound,
        });
    }

    /// `scale * ||rows||^exponent <= x`, the epigraph of a distance power.
    pub fn root_bound(&mut self, name: impl Into<String>, x: usize, rows: Vec<Affine>, exponent: f64, scale: f64) {
        self.constrain(
            name,
            Expr::new().term(x, -1.0).atom(Atom::NormPower {
                coef: scale,
                rows,
                exponent,
            }),
        );
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Checks indices, bounds and atom curvature.
    pub fn validate(&self) -> Result<(), ConvexError> {
        let n = self.len();
        for i in 0..n {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(ConvexError::Bounds(self.names[i].clone()));
            }
        }
        if let Some(s) = &self.start {
            if s.len() != n {
                return Err(ConvexError::Dimension {
                    expected: n,
                    got: s.len(),
                });
            }
        }
        let mut vars = Vec::new();
        self.objective.vars(&mut vars);
        for c in &self.constraints {
            c.vars(&mut vars);
        }
        if let Some(v) = vars.iter().find(|v| **v >= n) {
            return Err(ConvexError::UnknownVariable(*v));
        }
        self.check_atoms("objective", &self.objective, -1.0)?;
        for c in &self.constraints {
            if let Constraint::Convex { name, expr } = c {
                self.check_atoms(name, expr, 1.0)?;
            }
        }
        Ok(())
    }

    /// `sign = 1` requires convex atoms, `-1` concave ones.
    fn check_atoms(&self, place: &str, expr: &Expr, sign: f64) -> Result<(), ConvexError> {
        for a in &expr.atoms {
            let (ok, nonneg): (bool, Vec<usize>) = match a {
                Atom::PerspectiveLog {
                    coef,
                    time,
                    amount,
                    gain,
                } => (*gain >= 0.0 && coef * sign <= 0.0, alloc::vec![*time, *amount]),
                Atom::Cube { coef, var } => (coef * sign >= 0.0, alloc::vec![*var]),
                Atom::NormPower {
                    coef, exponent, ..
                } => (coef * sign >= 0.0 && *exponent >= 1.0, Vec::new()),
            };
            if !ok {
                return Err(ConvexError::Curvature(format!("atom in `{place}`")));
            }
            if nonneg.iter().any(|v| self.lower[*v] < 0.0) {
                return Err(ConvexError::Domain(format!("atom in `{place}`")));
            }
        }
        Ok(())
    }

    /// Every constraint and bound with its signed residual.
    pub fn residuals(&self, x: &[f64]) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .constraints
            .iter()
            .map(|c| (String::from(c.name()), c.residual(x)))
            .collect();
        for i in 0..self.len() {
            let r = (self.lower[i] - x[i]).max(x[i] - self.upper[i]);
            out.push((format!("bound:{}", self.names[i]), r));
        }
        out
    }
}

/// Lists the constraints violated by more than `tol`.
pub fn check_feasibility(prog: &Program, point: &[f64], tol: f64) -> Vec<(String, f64)> {
    prog.residuals(point)
        .into_iter()
        .filter(|(_, r)| *r > tol || r.is_nan())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    pub objective: f64,
    pub status: Status,
    /// Largest constraint or bound violation, 0 if none.
    pub residual: f64,
    /// Duality gap bound of the final barrier subproblem.
    pub gap: f64,
    pub newton_steps: usize,
}

impl Solution {
    pub fn value(&self, var: usize) -> f64 {
        self.values[var]
    }
}

struct Named<'a>(&'a Program, &'a Affine);

impl fmt::Display for Named<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.1.constant)?;
        for (v, c) in &self.1.terms {
            write!(f, " + {}*{}", c, self.0.names[*v])?;
        }
        Ok(())
    }
}

struct NamedExpr<'a>(&'a Program, &'a Expr);

impl fmt::Display for NamedExpr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.0;
        write!(f, "{}", Named(p, &self.1.affine))?;
        for a in &self.1.atoms {
            match a {
                Atom::PerspectiveLog {
                    coef,
                    time,
                    amount,
                    gain,
                } => write!(f, " + {}*plog({}, {}; {})", coef, p.names[*time], p.names[*amount], gain)?,
                Atom::Cube { coef, var } => write!(f, " + {}*cube({})", coef, p.names[*var])?,
                Atom::NormPower {
                    coef,
                    rows,
                    exponent,
                } => {
                    write!(f, " + {coef}*norm(")?;
                    for (i, r) in rows.iter().enumerate() {
                        if i > 0 {
                            write!(f, "; ")?;
                        }
                        write!(f, "{}", Named(p, r))?;
                    }
                    write!(f, ")^{exponent}")?;
                }
            }
        }
        Ok(())
    }
}

/// Stable text dump: objective, constraints in insertion order, bounds.
impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "maximize")?;
        writeln!(f, "  {}", NamedExpr(self, &self.objective))?;
        writeln!(f, "subject to")?;
        for c in &self.constraints {
            match c {
                Constraint::Convex { name, expr } => {
                    writeln!(f, "  {name}: {} <= 0", NamedExpr(self, expr))?
                }
                Constraint::Cone { name, rows, bound } => {
                    write!(f, "  {name}: norm(")?;
                    for (i, r) in rows.iter().enumerate() {
                        if i > 0 {
                            write!(f, "; ")?;
                        }
                        write!(f, "{}", Named(self, r))?;
                    }
                    writeln!(f, ") <= {}", Named(self, bound))?;
                }
            }
        }
        writeln!(f, "bounds")?;
        for i in 0..self.len() {
            writeln!(f, "  {} <= {} <= {}", self.lower[i], self.names[i], self.upper[i])?;
        }
        Ok(())
    }
}
