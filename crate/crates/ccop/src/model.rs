//! Problem definition and the on-disk problem format.
//!
//! A problem is
//!
//! ```text
//!     minimize f(x)   subject to   h(x) = 0,  g(x) >= 0,  ||x||_0 <= s,
//! ```
//!
//! read from a TOML file with keys `n`, `s`, `objective`, `equalities`,
//! `inequalities`, `box`, and `compact_feasible`. The box bounds the solver
//! search region and the level-set grids; it is not part of feasibility.
//!
//! Multipliers follow the sign convention of the Lagrangian
//! `L(x) = f(x) - sum_p lambda_p h_p(x) - sum_q mu_q g_q(x) - sum_i gamma_i x_i`
//! (the last sum over the zero coordinates), so stationarity reads
//! `Df = sum lambda Dh + sum mu Dg + sum gamma e_i`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use crate::expr::{DiffExpr, Expr, ExprError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid problem file: {0}")]
    Toml(String),
    #[error("invalid {location}: {source}")]
    Expr {
        location: String,
        source: ExprError,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Decision thresholds. `main` drives residual and eigenvalue decisions,
/// `zero` declares coordinates zero, `act` declares inequalities active.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub main: f64,
    pub zero: f64,
    pub act: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            main: 1e-8,
            zero: 1e-8,
            act: 1e-8,
        }
    }
}

impl Tolerances {
    /// All three thresholds set to the same value.
    pub fn uniform(tol: f64) -> Self {
        Tolerances {
            main: tol,
            zero: tol,
            act: tol,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    n: usize,
    s: usize,
    objective: String,
    #[serde(default)]
    equalities: Vec<String>,
    #[serde(default)]
    inequalities: Vec<String>,
    #[serde(rename = "box")]
    box_bounds: Vec<[f64; 2]>,
    #[serde(default)]
    compact_feasible: bool,
}

#[derive(Debug, Clone)]
pub struct Problem {
    n: usize,
    s: usize,
    objective: DiffExpr,
    equalities: Vec<DiffExpr>,
    inequalities: Vec<DiffExpr>,
    box_bounds: Vec<[f64; 2]>,
    compact_feasible: bool,
}

impl Problem {
    pub fn new(
        n: usize,
        s: usize,
        objective: Expr,
        equalities: Vec<Expr>,
        inequalities: Vec<Expr>,
        box_bounds: Vec<[f64; 2]>,
        compact_feasible: bool,
    ) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::Invalid("n must be at least 1".into()));
        }
        if s >= n {
            return Err(ModelError::Invalid("s must be < n".into()));
        }
        if box_bounds.len() != n {
            return Err(ModelError::Invalid(format!(
                "box must list exactly n = {n} intervals, found {}",
                box_bounds.len()
            )));
        }
        for (i, [lo, hi]) in box_bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(ModelError::Invalid(format!(
                    "box interval {} must be finite with lo <= hi",
                    i + 1
                )));
            }
        }
        let wrap = |e: Expr, location: String| -> Result<DiffExpr, ModelError> {
            DiffExpr::new(e, n).map_err(|source| ModelError::Expr { location, source })
        };
        let objective = wrap(objective, "objective".into())?;
        let equalities = equalities
            .into_iter()
            .enumerate()
            .map(|(p, e)| wrap(e, format!("equalities[{p}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let inequalities = inequalities
            .into_iter()
            .enumerate()
            .map(|(q, e)| wrap(e, format!("inequalities[{q}]")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Problem {
            n,
            s,
            objective,
            equalities,
            inequalities,
            box_bounds,
            compact_feasible,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let file: ProblemFile =
            toml::from_str(text).map_err(|e| ModelError::Toml(e.to_string()))?;
        let parse_named = |src: &str, location: String| -> Result<Expr, ModelError> {
            crate::expr::parse(src).map_err(|source| ModelError::Expr { location, source })
        };
        let objective = parse_named(&file.objective, "objective".into())?;
        let equalities = file
            .equalities
            .iter()
            .enumerate()
            .map(|(p, s)| parse_named(s, format!("equalities[{p}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let inequalities = file
            .inequalities
            .iter()
            .enumerate()
            .map(|(q, s)| parse_named(s, format!("inequalities[{q}]")))
            .collect::<Result<Vec<_>, _>>()?;
        Problem::new(
            file.n,
            file.s,
            objective,
            equalities,
            inequalities,
            file.box_bounds,
            file.compact_feasible,
        )
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Problem::from_toml_str(&text)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn objective(&self) -> &DiffExpr {
        &self.objective
    }

    pub fn equalities(&self) -> &[DiffExpr] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[DiffExpr] {
        &self.inequalities
    }

    pub fn box_bounds(&self) -> &[[f64; 2]] {
        &self.box_bounds
    }

    pub fn compact_feasible(&self) -> bool {
        self.compact_feasible
    }

    pub fn in_box(&self, x: &DVector<f64>, slack: f64) -> bool {
        (0..self.n).all(|i| {
            x[i] >= self.box_bounds[i][0] - slack && x[i] <= self.box_bounds[i][1] + slack
        })
    }

    /// Re-prints the problem in the file format with canonical expression
    /// strings; stable for fixed input.
    pub fn canonical_echo(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "s = {}", self.s);
        let _ = writeln!(out, "objective = \"{}\"", self.objective.expr());
        let list = |exprs: &[DiffExpr]| -> String {
            let items: Vec<String> = exprs
                .iter()
                .map(|e| format!("\"{}\"", e.expr()))
                .collect();
            format!("[{}]", items.join(", "))
        };
        let _ = writeln!(out, "equalities = {}", list(&self.equalities));
        let _ = writeln!(out, "inequalities = {}", list(&self.inequalities));
        let intervals: Vec<String> = self
            .box_bounds
            .iter()
            .map(|[lo, hi]| format!("[{lo}, {hi}]"))
            .collect();
        let _ = writeln!(out, "box = [{}]", intervals.join(", "));
        let _ = writeln!(out, "compact_feasible = {}", self.compact_feasible);
        out
    }
}

/// Index data of a point: zero coordinates `i0`, support `i1`, active
/// inequalities `q0` (all 0-based and sorted), plus the counts `k = |i1|`,
/// `m = #equalities + |q0|`, and `ell = m + |i0|`.
#[derive(Debug, Clone)]
pub struct ActiveData {
    pub x: DVector<f64>,
    pub i0: Vec<usize>,
    pub i1: Vec<usize>,
    pub q0: Vec<usize>,
    pub k: usize,
    pub m: usize,
    pub ell: usize,
}

pub fn active_data(
    p: &Problem,
    x: &DVector<f64>,
    tols: &Tolerances,
) -> Result<ActiveData, ExprError> {
    let xs = x.as_slice();
    let mut i0 = Vec::new();
    let mut i1 = Vec::new();
    for i in 0..p.n() {
        if x[i].abs() <= tols.zero {
            i0.push(i);
        } else {
            i1.push(i);
        }
    }
    let mut q0 = Vec::new();
    for (q, g) in p.inequalities().iter().enumerate() {
        if g.value(xs)?.abs() <= tols.act {
            q0.push(q);
        }
    }
    let k = i1.len();
    let m = p.equalities().len() + q0.len();
    let ell = m + i0.len();
    Ok(ActiveData {
        x: x.clone(),
        i0,
        i1,
        q0,
        k,
        m,
        ell,
    })
}

/// Feasibility with respect to the equalities, inequalities, and the
/// cardinality bound (the box does not count).
pub fn feasible(p: &Problem, x: &DVector<f64>, tols: &Tolerances) -> Result<bool, ExprError> {
    let xs = x.as_slice();
    for h in p.equalities() {
        if h.value(xs)?.abs() > tols.main {
            return Ok(false);
        }
    }
    for g in p.inequalities() {
        if g.value(xs)? < -tols.main {
            return Ok(false);
        }
    }
    let support = xs.iter().filter(|v| v.abs() > tols.zero).count();
    Ok(support <= p.s())
}

/// Largest constraint violation: max over |h_p(x)| and max(0, -g_q(x)).
pub fn feasibility_residual(p: &Problem, x: &DVector<f64>) -> Result<f64, ExprError> {
    let xs = x.as_slice();
    let mut r = 0.0f64;
    for h in p.equalities() {
        r = r.max(h.value(xs)?.abs());
    }
    for g in p.inequalities() {
        r = r.max(-g.value(xs)?);
    }
    Ok(r.max(0.0))
}

/// A point together with multipliers certifying M-stationarity. `mu` has one
/// entry per inequality (zero off the active set); `gamma` has one entry per
/// coordinate (zero off the zero set).
#[derive(Debug, Clone)]
pub struct MStationaryPair {
    pub x: DVector<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
    pub stationarity_residual: f64,
    pub feasibility_residual: f64,
}

/// L(x) = f - sum lambda h - sum mu g - sum gamma x, evaluated at `x`.
pub fn lagrangian_value(
    p: &Problem,
    pair: &MStationaryPair,
    x: &DVector<f64>,
) -> Result<f64, ExprError> {
    let xs = x.as_slice();
    let mut v = p.objective().value(xs)?;
    for (lam, h) in pair.lambda.iter().zip(p.equalities()) {
        v -= lam * h.value(xs)?;
    }
    for (mu, g) in pair.mu.iter().zip(p.inequalities()) {
        v -= mu * g.value(xs)?;
    }
    for (gam, xi) in pair.gamma.iter().zip(xs) {
        v -= gam * xi;
    }
    Ok(v)
}

/// Gradient of the Lagrangian at `x`; zero (up to the stationarity residual)
/// at the pair's own point.
pub fn lagrangian_gradient(
    p: &Problem,
    pair: &MStationaryPair,
    x: &DVector<f64>,
) -> Result<DVector<f64>, ExprError> {
    let xs = x.as_slice();
    let mut grad = p.objective().gradient(xs)?;
    for (lam, h) in pair.lambda.iter().zip(p.equalities()) {
        grad -= h.gradient(xs)? * *lam;
    }
    for (mu, g) in pair.mu.iter().zip(p.inequalities()) {
        grad -= g.gradient(xs)? * *mu;
    }
    for (i, gam) in pair.gamma.iter().enumerate() {
        grad[i] -= gam;
    }
    Ok(grad)
}

/// Hessian of the Lagrangian at the pair's point:
/// `D2f - sum lambda D2h - sum mu D2g` (the coordinate terms are linear).
pub fn lagrangian_hessian(p: &Problem, pair: &MStationaryPair) -> Result<DMatrix<f64>, ExprError> {
    let xs = pair.x.as_slice();
    let mut hess = p.objective().hessian(xs)?;
    for (lam, h) in pair.lambda.iter().zip(p.equalities()) {
        hess -= h.hessian(xs)? * *lam;
    }
    for (mu, g) in pair.mu.iter().zip(p.inequalities()) {
        hess -= g.hessian(xs)? * *mu;
    }
    Ok(hess)
}

/// All `choose`-element subsets of `items`, in lexicographic order of
/// positions. `items` is assumed sorted; each subset preserves that order.
pub(crate) fn k_subsets(items: &[usize], choose: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    let mut out = Vec::new();
    if choose > n {
        return out;
    }
    if choose == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut idx: Vec<usize> = (0..choose).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        // Rightmost position that can still advance.
        let mut pos = choose;
        while pos > 0 && idx[pos - 1] == pos - 1 + n - choose {
            pos -= 1;
        }
        if pos == 0 {
            return out;
        }
        idx[pos - 1] += 1;
        for j in pos..choose {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
