//! Constraint qualification, multipliers, and the stationary-point solver.
//!
//! A feasible point is M-stationary when `Df` lies in the span of the
//! equality gradients, the active inequality gradients (with nonnegative
//! weights), and the unit vectors of the zero coordinates. The solver
//! enumerates every support set `I1` with `|I1| <= s` together with every
//! subset `A` of the inequalities, and runs damped Newton iterations on the
//! square system
//!
//! ```text
//!     grad_{I1} f - sum_p lambda_p grad_{I1} h_p - sum_{q in A} mu_q grad_{I1} g_q = 0
//!     h(x) = 0,    g_A(x) = 0,    x_i = 0 for i not in I1,
//! ```
//!
//! from low-discrepancy seeds in the box. Converged roots are filtered
//! through the M-stationarity check, deduplicated by clustering, and
//! reported in a deterministic order (fixed for a fixed `rng_seed`,
//! independent of thread count).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::expr::ExprError;
use crate::linalg;
use crate::model::{
    self, active_data, feasibility_residual, ActiveData, MStationaryPair, Problem, Tolerances,
};
use crate::Error;

/// Origin of one row of the constraint-gradient matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowLabel {
    Equality(usize),
    Inequality(usize),
    Coordinate(usize),
}

/// Outcome of the constraint-qualification test: linear independence of the
/// equality gradients, the active inequality gradients, and the unit vectors
/// on the zero coordinates.
#[derive(Debug, Clone)]
pub struct CcLicqReport {
    pub holds: bool,
    /// Smallest singular value of the row matrix; `None` when there are no
    /// rows (the qualification then holds vacuously).
    pub min_singular_value: Option<f64>,
    pub max_singular_value: Option<f64>,
    /// The `ell x n` matrix whose rows are the gradients above.
    pub gradient_matrix: DMatrix<f64>,
    pub row_labels: Vec<RowLabel>,
}

/// Rows of the qualification matrix at a point with the given active data.
pub fn constraint_gradient_rows(
    p: &Problem,
    a: &ActiveData,
) -> Result<(DMatrix<f64>, Vec<RowLabel>), ExprError> {
    let n = p.n();
    let xs = a.x.as_slice();
    let mut labels = Vec::with_capacity(a.ell);
    let mut rows = DMatrix::zeros(a.ell, n);
    let mut r = 0;
    for (pidx, h) in p.equalities().iter().enumerate() {
        rows.row_mut(r).copy_from(&h.gradient(xs)?.transpose());
        labels.push(RowLabel::Equality(pidx));
        r += 1;
    }
    for &q in &a.q0 {
        rows.row_mut(r)
            .copy_from(&p.inequalities()[q].gradient(xs)?.transpose());
        labels.push(RowLabel::Inequality(q));
        r += 1;
    }
    for &i in &a.i0 {
        rows[(r, i)] = 1.0;
        labels.push(RowLabel::Coordinate(i));
        r += 1;
    }
    Ok((rows, labels))
}

pub fn check_cc_licq_at(
    p: &Problem,
    a: &ActiveData,
    tols: &Tolerances,
) -> Result<CcLicqReport, ExprError> {
    let (rows, labels) = constraint_gradient_rows(p, a)?;
    let ell = rows.nrows();
    if ell == 0 {
        return Ok(CcLicqReport {
            holds: true,
            min_singular_value: None,
            max_singular_value: None,
            gradient_matrix: rows,
            row_labels: labels,
        });
    }
    if ell > p.n() {
        // More rows than the ambient dimension can never be independent.
        return Ok(CcLicqReport {
            holds: false,
            min_singular_value: Some(0.0),
            max_singular_value: None,
            gradient_matrix: rows,
            row_labels: labels,
        });
    }
    let svd = rows.clone().svd(false, false);
    let smin = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let holds = smin > tols.main * smax.max(1.0);
    Ok(CcLicqReport {
        holds,
        min_singular_value: Some(smin),
        max_singular_value: Some(smax),
        gradient_matrix: rows,
        row_labels: labels,
    })
}

pub fn check_cc_licq(
    p: &Problem,
    x: &DVector<f64>,
    tols: &Tolerances,
) -> Result<CcLicqReport, ExprError> {
    let a = active_data(p, x, tols)?;
    check_cc_licq_at(p, &a, tols)
}

/// Result of the multiplier computation at a feasible point.
#[derive(Debug, Clone)]
pub enum MultiplierOutcome {
    /// `Df` is (numerically) in the span of the constraint gradients.
    Certified(MStationaryPair),
    /// Best least-squares residual; the point is not stationary.
    NoCertificate { residual: f64 },
}

/// Solves for multipliers by minimum-norm least squares over the active
/// constraint gradients and zero-coordinate directions. The residual is
/// `||Df - A z||_inf`; at most `tol` certifies the stationarity equation.
/// Signs are not checked here.
pub fn multipliers(
    p: &Problem,
    x: &DVector<f64>,
    tols: &Tolerances,
) -> Result<MultiplierOutcome, ExprError> {
    let a = active_data(p, x, tols)?;
    let xs = x.as_slice();
    let df = p.objective().gradient(xs)?;
    let np = p.equalities().len();
    let ncols = np + a.q0.len() + a.i0.len();
    let mut cols = DMatrix::zeros(p.n(), ncols);
    let mut c = 0;
    for h in p.equalities() {
        cols.column_mut(c).copy_from(&h.gradient(xs)?);
        c += 1;
    }
    for &q in &a.q0 {
        cols.column_mut(c)
            .copy_from(&p.inequalities()[q].gradient(xs)?);
        c += 1;
    }
    for &i in &a.i0 {
        cols[(i, c)] = 1.0;
        c += 1;
    }
    let z = linalg::lstsq(&cols, &df, tols.main);
    let residual = (&df - &cols * &z).amax();
    if residual > tols.main {
        return Ok(MultiplierOutcome::NoCertificate { residual });
    }
    let lambda: Vec<f64> = (0..np).map(|i| z[i]).collect();
    let mut mu = vec![0.0; p.inequalities().len()];
    for (t, &q) in a.q0.iter().enumerate() {
        mu[q] = z[np + t];
    }
    let mut gamma = vec![0.0; p.n()];
    for (t, &i) in a.i0.iter().enumerate() {
        gamma[i] = z[np + a.q0.len() + t];
    }
    let feas = feasibility_residual(p, x)?;
    Ok(MultiplierOutcome::Certified(MStationaryPair {
        x: x.clone(),
        lambda,
        mu,
        gamma,
        stationarity_residual: residual,
        feasibility_residual: feas,
    }))
}

/// Why a point fails the M-stationarity test.
#[derive(Debug, Clone)]
pub enum NonStationaryReason {
    /// Constraint or cardinality violation (`residual` covers the former).
    Infeasible { residual: f64 },
    /// `Df` is not in the span of the active gradients.
    NoMultipliers { residual: f64 },
    /// The minimum-norm multiplier of active inequality `q` (0-based) is
    /// negative beyond tolerance.
    NegativeMultiplier { q: usize, value: f64 },
}

#[derive(Debug, Clone)]
pub enum StationarityVerdict {
    Stationary(MStationaryPair),
    NotStationary(NonStationaryReason),
}

/// Full M-stationarity test: feasibility, the stationarity equation, and
/// nonnegativity of the active inequality multipliers. Complementarity is
/// built in: multipliers are zero off the active set by construction.
pub fn check_m_stationarity(
    p: &Problem,
    x: &DVector<f64>,
    tols: &Tolerances,
) -> Result<StationarityVerdict, ExprError> {
    if !model::feasible(p, x, tols)? {
        let residual = feasibility_residual(p, x)?;
        return Ok(StationarityVerdict::NotStationary(
            NonStationaryReason::Infeasible { residual },
        ));
    }
    match multipliers(p, x, tols)? {
        MultiplierOutcome::NoCertificate { residual } => Ok(StationarityVerdict::NotStationary(
            NonStationaryReason::NoMultipliers { residual },
        )),
        MultiplierOutcome::Certified(pair) => {
            for (q, &m) in pair.mu.iter().enumerate() {
                if m < -tols.main {
                    return Ok(StationarityVerdict::NotStationary(
                        NonStationaryReason::NegativeMultiplier { q, value: m },
                    ));
                }
            }
            Ok(StationarityVerdict::Stationary(pair))
        }
    }
}

/// Solver configuration.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub seeds_per_system: usize,
    pub max_newton_iters: usize,
    pub newton_tol: f64,
    pub cluster_radius: f64,
    pub rng_seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            seeds_per_system: 64,
            max_newton_iters: 100,
            newton_tol: 1e-10,
            cluster_radius: 1e-6,
            rng_seed: 0,
        }
    }
}

/// Per-system solver statistics (support and active set are 0-based).
#[derive(Debug, Clone)]
pub struct SystemStats {
    pub support: Vec<usize>,
    pub active: Vec<usize>,
    pub seeds: usize,
    pub converged: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub points: Vec<MStationaryPair>,
    pub systems: Vec<SystemStats>,
}

const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical-inverse (Halton) sequence member in [0, 1).
fn halton(mut index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Builds the full point from support coordinates stored in `z`.
fn assemble_x(n: usize, i1: &[usize], z: &DVector<f64>) -> DVector<f64> {
    let mut x = DVector::zeros(n);
    for (t, &i) in i1.iter().enumerate() {
        x[i] = z[t];
    }
    x
}

/// Residual of the square support/active-set system at `z = (x_I1, lambda, mu_A)`.
fn system_residual(
    p: &Problem,
    i1: &[usize],
    act: &[usize],
    z: &DVector<f64>,
) -> Result<DVector<f64>, ExprError> {
    let kk = i1.len();
    let np = p.equalities().len();
    let na = act.len();
    let x = assemble_x(p.n(), i1, z);
    let xs = x.as_slice();
    let mut r = DVector::zeros(kk + np + na);
    let df = p.objective().gradient(xs)?;
    let dh: Vec<DVector<f64>> = p
        .equalities()
        .iter()
        .map(|h| h.gradient(xs))
        .collect::<Result<_, _>>()?;
    let dg: Vec<DVector<f64>> = act
        .iter()
        .map(|&q| p.inequalities()[q].gradient(xs))
        .collect::<Result<_, _>>()?;
    for (t, &i) in i1.iter().enumerate() {
        let mut v = df[i];
        for (pi, grad) in dh.iter().enumerate() {
            v -= z[kk + pi] * grad[i];
        }
        for (ai, grad) in dg.iter().enumerate() {
            v -= z[kk + np + ai] * grad[i];
        }
        r[t] = v;
    }
    for (pi, h) in p.equalities().iter().enumerate() {
        r[kk + pi] = h.value(xs)?;
    }
    for (ai, &q) in act.iter().enumerate() {
        r[kk + np + ai] = p.inequalities()[q].value(xs)?;
    }
    Ok(r)
}

fn system_jacobian(
    p: &Problem,
    i1: &[usize],
    act: &[usize],
    z: &DVector<f64>,
) -> Result<DMatrix<f64>, ExprError> {
    let kk = i1.len();
    let np = p.equalities().len();
    let na = act.len();
    let dim = kk + np + na;
    let x = assemble_x(p.n(), i1, z);
    let xs = x.as_slice();
    let mut hess = p.objective().hessian(xs)?;
    for (pi, h) in p.equalities().iter().enumerate() {
        hess -= h.hessian(xs)? * z[kk + pi];
    }
    for (ai, &q) in act.iter().enumerate() {
        hess -= p.inequalities()[q].hessian(xs)? * z[kk + np + ai];
    }
    let dh: Vec<DVector<f64>> = p
        .equalities()
        .iter()
        .map(|h| h.gradient(xs))
        .collect::<Result<_, _>>()?;
    let dg: Vec<DVector<f64>> = act
        .iter()
        .map(|&q| p.inequalities()[q].gradient(xs))
        .collect::<Result<_, _>>()?;
    let mut j = DMatrix::zeros(dim, dim);
    for (t, &i) in i1.iter().enumerate() {
        for (u, &iu) in i1.iter().enumerate() {
            j[(t, u)] = hess[(i, iu)];
        }
        for (pi, grad) in dh.iter().enumerate() {
            j[(t, kk + pi)] = -grad[i];
            j[(kk + pi, t)] = grad[i];
        }
        for (ai, grad) in dg.iter().enumerate() {
            j[(t, kk + np + ai)] = -grad[i];
            j[(kk + np + ai, t)] = grad[i];
        }
    }
    Ok(j)
}

/// Warm-starts `lambda, mu_A` at a seed point by least squares on the
/// support rows of the stationarity equation.
fn initial_multipliers(
    p: &Problem,
    x: &DVector<f64>,
    i1: &[usize],
    act: &[usize],
    tols: &Tolerances,
) -> Result<DVector<f64>, ExprError> {
    let kk = i1.len();
    let np = p.equalities().len();
    let na = act.len();
    if kk == 0 || np + na == 0 {
        return Ok(DVector::zeros(np + na));
    }
    let xs = x.as_slice();
    let df = p.objective().gradient(xs)?;
    let mut a = DMatrix::zeros(kk, np + na);
    let mut b = DVector::zeros(kk);
    for (t, &i) in i1.iter().enumerate() {
        b[t] = df[i];
        for (pi, h) in p.equalities().iter().enumerate() {
            a[(t, pi)] = h.gradient(xs)?[i];
        }
        for (ai, &q) in act.iter().enumerate() {
            a[(t, np + ai)] = p.inequalities()[q].gradient(xs)?[i];
        }
    }
    Ok(linalg::lstsq(&a, &b, tols.main))
}

/// One damped-Newton run; `Some(x)` on convergence, with the off-support
/// coordinates exactly zero and near-zero support coordinates snapped.
fn newton_from_seed(
    p: &Problem,
    i1: &[usize],
    act: &[usize],
    halton_index: usize,
    cfg: &SolveConfig,
    tols: &Tolerances,
) -> Option<DVector<f64>> {
    let kk = i1.len();
    let np = p.equalities().len();
    let na = act.len();
    let dim = kk + np + na;
    let mut x0 = DVector::zeros(p.n());
    for (t, &i) in i1.iter().enumerate() {
        let u = halton(halton_index + 1, PRIMES[t % PRIMES.len()]);
        let [lo, hi] = p.box_bounds()[i];
        x0[i] = lo + u * (hi - lo);
    }
    let w0 = initial_multipliers(p, &x0, i1, act, tols).ok()?;
    let mut z = DVector::zeros(dim);
    for (t, &i) in i1.iter().enumerate() {
        z[t] = x0[i];
    }
    for t in 0..np + na {
        z[kk + t] = w0[t];
    }
    let mut fval = system_residual(p, i1, act, &z).ok()?;
    let mut fnorm = fval.norm();
    for _ in 0..cfg.max_newton_iters {
        if fval.amax() <= cfg.newton_tol {
            break;
        }
        let jac = system_jacobian(p, i1, act, &z).ok()?;
        let rhs = -&fval;
        let step = match jac.clone().lu().solve(&rhs) {
            Some(s) => s,
            // Singular Jacobian: fall back to a least-squares step.
            None => {
                let svd = jac.svd(true, true);
                svd.solve(&rhs, 1e-12).ok()?.column(0).into_owned()
            }
        };
        // Backtracking on the residual norm.
        let mut t = 1.0;
        let mut advanced = false;
        while t >= 1e-9 {
            let zt = &z + &step * t;
            if let Ok(fv) = system_residual(p, i1, act, &zt) {
                let norm_t = fv.norm();
                if norm_t <= (1.0 - 1e-4 * t) * fnorm {
                    z = zt;
                    fval = fv;
                    fnorm = norm_t;
                    advanced = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !advanced || z.amax() > 1e10 {
            return None;
        }
    }
    if fval.amax() > cfg.newton_tol {
        return None;
    }
    let mut x = assemble_x(p.n(), i1, &z);
    for i in 0..p.n() {
        if x[i].abs() <= tols.zero {
            x[i] = 0.0;
        }
    }
    Some(x)
}

fn solve_system(
    p: &Problem,
    i1: &[usize],
    act: &[usize],
    cfg: &SolveConfig,
    tols: &Tolerances,
    offset: usize,
) -> (SystemStats, Vec<MStationaryPair>) {
    let mut stats = SystemStats {
        support: i1.to_vec(),
        active: act.to_vec(),
        seeds: cfg.seeds_per_system,
        converged: 0,
        accepted: 0,
    };
    let mut out = Vec::new();
    for seed in 0..cfg.seeds_per_system {
        let Some(x) = newton_from_seed(p, i1, act, offset + seed, cfg, tols) else {
            continue;
        };
        stats.converged += 1;
        if !p.in_box(&x, tols.main) {
            continue;
        }
        if let Ok(StationarityVerdict::Stationary(pair)) = check_m_stationarity(p, &x, tols) {
            stats.accepted += 1;
            out.push(pair);
        }
    }
    (stats, out)
}

fn linf(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for i in 0..a.len() {
        match a[i].total_cmp(&b[i]) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Deduplicates converged roots: sort, greedily cluster within the
/// max-norm radius, re-certify the coordinate-wise median of each cluster.
fn cluster_roots(
    p: &Problem,
    mut roots: Vec<MStationaryPair>,
    cfg: &SolveConfig,
    tols: &Tolerances,
) -> Result<Vec<MStationaryPair>, ExprError> {
    roots.sort_by(|a, b| lex_cmp(&a.x, &b.x));
    let mut clusters: Vec<Vec<MStationaryPair>> = Vec::new();
    'outer: for r in roots {
        for c in clusters.iter_mut() {
            if linf(&c[0].x, &r.x) <= cfg.cluster_radius {
                c.push(r);
                continue 'outer;
            }
        }
        clusters.push(vec![r]);
    }
    let mut points = Vec::new();
    for c in clusters {
        let n = p.n();
        let mut median = DVector::zeros(n);
        for i in 0..n {
            let mut vals: Vec<f64> = c.iter().map(|m| m.x[i]).collect();
            vals.sort_by(f64::total_cmp);
            median[i] = vals[(vals.len() - 1) / 2];
        }
        for i in 0..n {
            if median[i].abs() <= tols.zero {
                median[i] = 0.0;
            }
        }
        match check_m_stationarity(p, &median, tols)? {
            StationarityVerdict::Stationary(pair) => points.push(pair),
            // The median drifted off the certificate; keep a raw member.
            StationarityVerdict::NotStationary(_) => points.push(c[0].clone()),
        }
    }
    // Deterministic output order: by support size, then support, then coords.
    points.sort_by(|a, b| {
        let sa: Vec<usize> = (0..p.n()).filter(|&i| a.x[i] != 0.0).collect();
        let sb: Vec<usize> = (0..p.n()).filter(|&i| b.x[i] != 0.0).collect();
        sa.len()
            .cmp(&sb.len())
            .then_with(|| sa.cmp(&sb))
            .then_with(|| lex_cmp(&a.x, &b.x))
    });
    Ok(points)
}

/// Finds all M-stationary points of `p` inside its box. Deterministic for a
/// fixed `rng_seed`; the system sweep is parallelized but merged in a fixed
/// order, so results do not depend on the thread count.
pub fn solve_all(p: &Problem, cfg: &SolveConfig, tols: &Tolerances) -> Result<SolveReport, Error> {
    let n = p.n();
    let nq = p.inequalities().len();
    let all: Vec<usize> = (0..n).collect();
    let qall: Vec<usize> = (0..nq).collect();
    let mut systems: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for k in 0..=p.s() {
        for i1 in model::k_subsets(&all, k) {
            for asz in 0..=nq {
                for act in model::k_subsets(&qall, asz) {
                    systems.push((i1.clone(), act));
                }
            }
        }
    }
    let offset = (cfg.rng_seed % 8191) as usize;
    let results: Vec<(SystemStats, Vec<MStationaryPair>)> = systems
        .par_iter()
        .map(|(i1, act)| solve_system(p, i1, act, cfg, tols, offset))
        .collect();
    let mut stats = Vec::with_capacity(results.len());
    let mut roots = Vec::new();
    for (st, rs) in results {
        stats.push(st);
        roots.extend(rs);
    }
    let points = cluster_roots(p, roots, cfg, tols)?;
    Ok(SolveReport {
        points,
        systems: stats,
    })
}

/// A structured objective perturbation: `f(x - eps * shift) + eps * linear . x`.
#[derive(Debug, Clone)]
pub struct PerturbSpec {
    pub linear: Vec<f64>,
    pub quadratic_shift: Option<Vec<f64>>,
    pub epsilons: Vec<f64>,
    /// Bifurcation radius; default is half the minimum pairwise distance of
    /// the reference points (the widest box edge when there are fewer than
    /// two).
    pub radius: Option<f64>,
}

/// The problem with its objective perturbed at magnitude `eps`.
pub fn perturbed_problem(p: &Problem, spec: &PerturbSpec, eps: f64) -> Result<Problem, Error> {
    let n = p.n();
    if spec.linear.len() != n {
        return Err(Error::Invalid(format!(
            "perturbation direction has {} entries, expected n = {n}",
            spec.linear.len()
        )));
    }
    if let Some(d) = &spec.quadratic_shift {
        if d.len() != n {
            return Err(Error::Invalid(format!(
                "shift direction has {} entries, expected n = {n}",
                d.len()
            )));
        }
    }
    let mut obj = match &spec.quadratic_shift {
        Some(d) => p.objective().expr().substitute(&|i| {
            let off = eps * d[i];
            (off != 0.0).then(|| {
                crate::expr::sub(crate::expr::Expr::Var(i), crate::expr::Expr::Const(off))
            })
        }),
        None => p.objective().expr().clone(),
    };
    for (i, &c) in spec.linear.iter().enumerate() {
        let w = eps * c;
        if w != 0.0 {
            obj = crate::expr::add(
                obj,
                crate::expr::mul(crate::expr::Expr::Const(w), crate::expr::Expr::Var(i)),
            );
        }
    }
    let eqs = p.equalities().iter().map(|d| d.expr().clone()).collect();
    let ineqs = p.inequalities().iter().map(|d| d.expr().clone()).collect();
    Ok(Problem::new(
        n,
        p.s(),
        obj,
        eqs,
        ineqs,
        p.box_bounds().to_vec(),
        p.compact_feasible(),
    )?)
}

#[derive(Debug, Clone)]
pub struct PerturbRow {
    pub epsilon: f64,
    pub points: Vec<MStationaryPair>,
    /// For each reference point: how many perturbed points lie within the
    /// bifurcation radius.
    pub reference_counts: Vec<usize>,
    pub bifurcation: bool,
}

#[derive(Debug, Clone)]
pub struct PerturbTable {
    pub reference: Vec<MStationaryPair>,
    pub radius: f64,
    pub rows: Vec<PerturbRow>,
}

fn default_radius(p: &Problem, refs: &[MStationaryPair]) -> f64 {
    if refs.len() >= 2 {
        let mut dmin = f64::MAX;
        for i in 0..refs.len() {
            for j in i + 1..refs.len() {
                dmin = dmin.min(linf(&refs[i].x, &refs[j].x));
            }
        }
        dmin / 2.0
    } else {
        p.box_bounds()
            .iter()
            .map(|[lo, hi]| hi - lo)
            .fold(1.0, f64::max)
    }
}

/// Re-solves the problem under the perturbation at each `eps` and counts the
/// stationary points near each unperturbed reference point; a count other
/// than one signals a bifurcation.
pub fn perturb_experiment(
    p: &Problem,
    spec: &PerturbSpec,
    cfg: &SolveConfig,
    tols: &Tolerances,
) -> Result<PerturbTable, Error> {
    let reference = solve_all(p, cfg, tols)?.points;
    let radius = spec.radius.unwrap_or_else(|| default_radius(p, &reference));
    let mut rows = Vec::new();
    for &eps in &spec.epsilons {
        let pp = perturbed_problem(p, spec, eps)?;
        let points = solve_all(&pp, cfg, tols)?.points;
        let reference_counts: Vec<usize> = reference
            .iter()
            .map(|r| points.iter().filter(|q| linf(&q.x, &r.x) <= radius).count())
            .collect();
        let bifurcation = reference_counts.iter().any(|&c| c != 1);
        rows.push(PerturbRow {
            epsilon: eps,
            points,
            reference_counts,
            bifurcation,
        });
    }
    Ok(PerturbTable {
        reference,
        radius,
        rows,
    })
}

/// One failing trial of the genericity probe.
#[derive(Debug, Clone)]
pub struct ProbeFailure {
    pub trial: usize,
    pub x: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ProbeStats {
    pub trials: usize,
    pub successes: usize,
    /// Trials with at least one indeterminate verdict and no clean failure;
    /// excluded from the success fraction.
    pub indeterminate: usize,
    pub fraction: f64,
    pub failures: Vec<ProbeFailure>,
}

/// Draws random linear objective perturbations and checks that every
/// stationary point of the perturbed problem is nondegenerate (including the
/// constraint qualification). Deterministic for a fixed `rng_seed`.
pub fn genericity_probe(
    p: &Problem,
    trials: usize,
    magnitude: f64,
    cfg: &SolveConfig,
    tols: &Tolerances,
) -> Result<ProbeStats, Error> {
    let n = p.n();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut successes = 0;
    let mut indeterminate = 0;
    let mut failures = Vec::new();
    for trial in 0..trials {
        let c: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-magnitude..=magnitude))
            .collect();
        let spec = PerturbSpec {
            linear: c,
            quadratic_shift: None,
            epsilons: vec![],
            radius: None,
        };
        let pp = perturbed_problem(p, &spec, 1.0)?;
        let points = solve_all(&pp, cfg, tols)?.points;
        let mut clean_failure = false;
        let mut fragile = false;
        for pt in &points {
            let nd = crate::classify::check_nondegeneracy(&pp, pt, tols)?;
            match nd.nondegenerate {
                crate::classify::ThreeValued::Holds => {}
                crate::classify::ThreeValued::Indeterminate => fragile = true,
                crate::classify::ThreeValued::Fails => {
                    clean_failure = true;
                    failures.push(ProbeFailure {
                        trial,
                        x: pt.x.iter().cloned().collect(),
                        reason: nd.failure_summary(),
                    });
                }
            }
        }
        if clean_failure {
            continue;
        }
        if fragile {
            indeterminate += 1;
            continue;
        }
        successes += 1;
    }
    let denom = trials.saturating_sub(indeterminate).max(1);
    Ok(ProbeStats {
        trials,
        successes,
        indeterminate,
        fraction: successes as f64 / denom as f64,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn simple_problem() -> Problem {
        Problem::from_toml_str(
            r#"
n = 2
s = 1
objective = "x1^2 + x2^2"
box = [[-3.0, 3.0], [-3.0, 3.0]]
"#,
        )
        .unwrap()
    }

    fn constrained_problem() -> Problem {
        Problem::from_toml_str(
            r#"
n = 3
s = 2
objective = "(x1-1)^2 + 3*(x1-1)*(x2-1) + (x2-1)^2 + x3^2"
inequalities = ["x1 - 1", "x2 - 1"]
box = [[-3.0, 3.0], [-3.0, 3.0], [-3.0, 3.0]]
"#,
        )
        .unwrap()
    }

    #[test]
    fn licq_holds_at_origin_of_simple_problem() {
        let p = simple_problem();
        let r = check_cc_licq(&p, &DVector::from_vec(vec![0.0, 0.0]), &tols()).unwrap();
        // Rows are e1, e2: perfectly conditioned.
        assert!(r.holds);
        assert_eq!(r.min_singular_value, Some(1.0));
        assert_eq!(r.row_labels.len(), 2);
    }

    #[test]
    fn licq_fails_with_duplicated_active_inequality() {
        let p = Problem::from_toml_str(
            r#"
n = 3
s = 2
objective = "x1^2 + x2^2 + x3^2"
inequalities = ["x1 - 1", "x1 - 1"]
box = [[-3.0, 3.0], [-3.0, 3.0], [-3.0, 3.0]]
"#,
        )
        .unwrap();
        let x = DVector::from_vec(vec![1.0, 0.5, 0.0]);
        let r = check_cc_licq(&p, &x, &tols()).unwrap();
        assert!(!r.holds);
        assert!(r.min_singular_value.unwrap() < 1e-12);
    }

    #[test]
    fn licq_vacuous_with_no_rows() {
        // Dense point, no constraints active, no zero coordinates.
        let p = Problem::from_toml_str(
            r#"
n = 2
s = 1
objective = "x1^2 + x2^2"
box = [[-3.0, 3.0], [-3.0, 3.0]]
"#,
        )
        .unwrap();
        // s=1 but the point (1,1) has no zero coordinate; ell = 0 anyway
        // because there are no constraints and I0 is empty.
        let r = check_cc_licq(&p, &DVector::from_vec(vec![1.0, 1.0]), &tols()).unwrap();
        assert!(r.holds);
        assert!(r.min_singular_value.is_none());
    }

    #[test]
    fn licq_fails_when_rows_exceed_dimension() {
        let p = Problem::from_toml_str(
            r#"
n = 2
s = 1
objective = "x1^2 + x2^2"
equalities = ["x1 + x2", "x1 - x2", "x1 + 2*x2"]
box = [[-3.0, 3.0], [-3.0, 3.0]]
"#,
        )
        .unwrap();
        let r = check_cc_licq(&p, &DVector::from_vec(vec![1.0, 1.0]), &tols()).unwrap();
        assert!(!r.holds);
        assert_eq!(r.min_singular_value, Some(0.0));
    }

    #[test]
    fn multipliers_at_origin() {
        let p = simple_problem();
        let out = multipliers(&p, &DVector::from_vec(vec![0.0, 0.0]), &tols()).unwrap();
        match out {
            MultiplierOutcome::Certified(pair) => {
                // Df = 0 there, so the least-squares multiplier is exactly 0.
                assert_eq!(pair.gamma, vec![0.0, 0.0]);
                assert_eq!(pair.stationarity_residual, 0.0);
            }
            MultiplierOutcome::NoCertificate { residual } => {
                panic!("expected certificate, residual {residual}")
            }
        }
    }

    #[test]
    fn stationarity_rejects_nonstationary_point() {
        let p = simple_problem();
        // (1, 0) is feasible (sparse) but Df = (2, 0) is not spanned by e2.
        let v = check_m_stationarity(&p, &DVector::from_vec(vec![1.0, 0.0]), &tols()).unwrap();
        match v {
            StationarityVerdict::NotStationary(NonStationaryReason::NoMultipliers {
                residual,
            }) => {
                assert!(residual > 1.0);
            }
            other => panic!("unexpected verdict {other:?}"),
        }
    }

    #[test]
    fn stationarity_rejects_infeasible_point() {
        let p = simple_problem();
        let v = check_m_stationarity(&p, &DVector::from_vec(vec![1.0, 1.0]), &tols()).unwrap();
        assert!(matches!(
            v,
            StationarityVerdict::NotStationary(NonStationaryReason::Infeasible { .. })
        ));
    }

    #[test]
    fn stationarity_rejects_negative_multiplier() {
        // minimize (x1-3)^2 with g = 2 - x1 >= 0 active at x1 = 2:
        // Df = -2, Dg = -1 gives mu = 2 >= 0. Flip the objective to
        // (x1+3)^2: Df = 10, mu = -10 < 0.
        let p = Problem::from_toml_str(
            r#"
n = 2
s = 1
objective = "(x1+3)^2 + x2^2"
inequalities = ["2 - x1"]
box = [[-5.0, 5.0], [-5.0, 5.0]]
"#,
        )
        .unwrap();
        let v = check_m_stationarity(&p, &DVector::from_vec(vec![2.0, 0.0]), &tols()).unwrap();
        match v {
            StationarityVerdict::NotStationary(NonStationaryReason::NegativeMultiplier {
                q,
                value,
            }) => {
                assert_eq!(q, 0);
                assert!(value < -1.0);
            }
            other => panic!("unexpected verdict {other:?}"),
        }
    }

    #[test]
    fn solver_finds_the_origin_of_the_simple_problem() {
        let p = simple_problem();
        let report = solve_all(&p, &SolveConfig::default(), &tols()).unwrap();
        assert_eq!(report.points.len(), 1);
        let pt = &report.points[0];
        assert_eq!(pt.x.as_slice(), &[0.0, 0.0]);
        assert_eq!(pt.gamma, vec![0.0, 0.0]);
        // Three supports ({}, {1}, {2}), one empty active set each.
        assert_eq!(report.systems.len(), 3);
    }

    #[test]
    fn solver_finds_the_constrained_point() {
        let p = constrained_problem();
        let report = solve_all(&p, &SolveConfig::default(), &tols()).unwrap();
        assert_eq!(report.points.len(), 1);
        let pt = &report.points[0];
        assert!((pt.x[0] - 1.0).abs() < 1e-8);
        assert!((pt.x[1] - 1.0).abs() < 1e-8);
        assert_eq!(pt.x[2], 0.0);
        // mu and gamma are numerically zero at this point.
        assert!(pt.mu.iter().all(|m| m.abs() <= 1e-8));
        assert!(pt.gamma.iter().all(|g| g.abs() <= 1e-8));
    }

    #[test]
    fn solver_is_deterministic_for_fixed_seed() {
        let p = constrained_problem();
        let cfg = SolveConfig {
            rng_seed: 7,
            ..SolveConfig::default()
        };
        let a = solve_all(&p, &cfg, &tols()).unwrap();
        let b = solve_all(&p, &cfg, &tols()).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for (x, y) in a.points.iter().zip(&b.points) {
            assert_eq!(x.x.as_slice(), y.x.as_slice());
            assert_eq!(x.lambda, y.lambda);
            assert_eq!(x.mu, y.mu);
            assert_eq!(x.gamma, y.gamma);
        }
    }

    #[test]
    fn perturbation_splits_the_degenerate_origin() {
        let p = simple_problem();
        let spec = PerturbSpec {
            linear: vec![-2.0, -2.0],
            quadratic_shift: None,
            epsilons: vec![0.1],
            radius: None,
        };
        let table = perturb_experiment(&p, &spec, &SolveConfig::default(), &tols()).unwrap();
        assert_eq!(table.reference.len(), 1);
        let row = &table.rows[0];
        // f + eps c.x = (x1 - 0.1)^2 + (x2 - 0.1)^2 - 0.02 up to a constant:
        // stationary points (0.1, 0), (0, 0.1), and (0, 0).
        assert_eq!(row.points.len(), 3);
        assert!(row.bifurcation);
        assert_eq!(row.reference_counts, vec![3]);
        let mut found = [false; 3];
        for pt in &row.points {
            let x = pt.x.as_slice();
            if (x[0] - 0.1).abs() < 1e-8 && x[1] == 0.0 {
                found[0] = true;
            }
            if x[0] == 0.0 && (x[1] - 0.1).abs() < 1e-8 {
                found[1] = true;
            }
            if x[0] == 0.0 && x[1] == 0.0 {
                found[2] = true;
            }
        }
        assert_eq!(found, [true; 3]);
    }

    #[test]
    fn shift_and_linear_perturbations_agree_on_quadratics() {
        // f(x - eps d) with f = x1^2 + x2^2, d = (1,1) equals
        // f + eps c . x + const with c = (-2,-2), so the stationary sets match.
        let p = simple_problem();
        let cfg = SolveConfig::default();
        let shift = PerturbSpec {
            linear: vec![0.0, 0.0],
            quadratic_shift: Some(vec![1.0, 1.0]),
            epsilons: vec![0.1],
            radius: None,
        };
        let lin = PerturbSpec {
            linear: vec![-2.0, -2.0],
            quadratic_shift: None,
            epsilons: vec![0.1],
            radius: None,
        };
        let a = perturb_experiment(&p, &shift, &cfg, &tols()).unwrap();
        let b = perturb_experiment(&p, &lin, &cfg, &tols()).unwrap();
        let xs = |t: &PerturbTable| -> Vec<Vec<f64>> {
            t.rows[0]
                .points
                .iter()
                .map(|p| p.x.iter().cloned().collect())
                .collect()
        };
        let (xa, xb) = (xs(&a), xs(&b));
        assert_eq!(xa.len(), xb.len());
        for (u, v) in xa.iter().zip(&xb) {
            for (a, b) in u.iter().zip(v) {
                assert!((a - b).abs() < 1e-7, "{u:?} vs {v:?}");
            }
        }
    }
}
