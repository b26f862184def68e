//! Classification of M-stationary points.
//!
//! Decisions are three-valued: a quantity `v >= 0` measuring distance from
//! degeneracy *holds* when `v > 10*tol*scale`, *fails* when `v < tol*scale`,
//! and is *indeterminate* inside the band — borderline cases are reported,
//! never silently rounded.
//!
//! Nondegeneracy is the conjunction of four conditions: the constraint
//! qualification (nd1), strict complementarity of the active inequality
//! multipliers (nd2), nonvanishing multipliers on the zero coordinates when
//! the support is not full (nd3), and nonsingularity of the Lagrangian
//! Hessian restricted to the tangent space of the active stratum (nd4).
//! The quadratic index `qi` counts negative eigenvalues of that restriction,
//! and the M-index is `s - k + qi`; a nondegenerate point is a local
//! minimizer exactly when its M-index is zero.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{self, Inertia};
use crate::model::{
    active_data, k_subsets, lagrangian_hessian, MStationaryPair, Problem, Tolerances,
};
use crate::stationarity::{check_cc_licq_at, CcLicqReport};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ThreeValued {
    Holds,
    Fails,
    Indeterminate,
}

impl ThreeValued {
    /// holds above `10*tol*scale`, fails below `tol*scale`, indeterminate in
    /// the band (inclusive at both edges).
    pub fn decide(v: f64, tol: f64, scale: f64) -> ThreeValued {
        let lo = tol * scale.max(1.0);
        if v < lo {
            ThreeValued::Fails
        } else if v > 10.0 * lo {
            ThreeValued::Holds
        } else {
            ThreeValued::Indeterminate
        }
    }

    pub fn all(parts: &[ThreeValued]) -> ThreeValued {
        if parts.iter().any(|p| *p == ThreeValued::Fails) {
            ThreeValued::Fails
        } else if parts.iter().any(|p| *p == ThreeValued::Indeterminate) {
            ThreeValued::Indeterminate
        } else {
            ThreeValued::Holds
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ThreeValued::Holds => "holds",
            ThreeValued::Fails => "fails",
            ThreeValued::Indeterminate => "indeterminate",
        }
    }
}

/// Nondegeneracy report for one M-stationary pair.
#[derive(Debug, Clone)]
pub struct NdReport {
    pub licq: CcLicqReport,
    pub nd1: ThreeValued,
    pub nd2: ThreeValued,
    pub nd3: ThreeValued,
    pub nd4: ThreeValued,
    pub nondegenerate: ThreeValued,
    /// Support size `|I1|`.
    pub k: usize,
    /// Negative eigenvalue count of the restricted Lagrangian Hessian; set
    /// when nd4 holds.
    pub qi: Option<usize>,
    /// `s - k + qi`; set when the point is nondegenerate.
    pub m_index: Option<usize>,
    /// Active cardinality: the support is full (`k == s`).
    pub acc: bool,
    /// Strict complementarity held cleanly (nd2).
    pub sc: bool,
    pub tangent_dim: usize,
}

impl NdReport {
    /// Human-readable list of the failing conditions.
    pub fn failure_summary(&self) -> String {
        let mut parts = Vec::new();
        for (name, v) in [
            ("constraint qualification", self.nd1),
            ("strict complementarity", self.nd2),
            ("zero-coordinate multipliers", self.nd3),
            ("restricted Hessian regularity", self.nd4),
        ] {
            match v {
                ThreeValued::Fails => parts.push(format!("{name} fails")),
                ThreeValued::Indeterminate => parts.push(format!("{name} indeterminate")),
                ThreeValued::Holds => {}
            }
        }
        if parts.is_empty() {
            "nondegenerate".into()
        } else {
            parts.join("; ")
        }
    }
}

fn tangent_space_rows(
    p: &Problem,
    pair: &MStationaryPair,
    q_set: &[usize],
    zero_coords: &[usize],
) -> Result<DMatrix<f64>, Error> {
    let n = p.n();
    let xs = pair.x.as_slice();
    let nrows = p.equalities().len() + q_set.len() + zero_coords.len();
    let mut rows = DMatrix::zeros(nrows, n);
    let mut r = 0;
    for h in p.equalities() {
        rows.row_mut(r).copy_from(&h.gradient(xs)?.transpose());
        r += 1;
    }
    for &q in q_set {
        rows.row_mut(r)
            .copy_from(&p.inequalities()[q].gradient(xs)?.transpose());
        r += 1;
    }
    for &i in zero_coords {
        rows[(r, i)] = 1.0;
        r += 1;
    }
    Ok(rows)
}

/// Checks the four nondegeneracy conditions and derives `qi` / M-index.
pub fn check_nondegeneracy(
    p: &Problem,
    pair: &MStationaryPair,
    tols: &Tolerances,
) -> Result<NdReport, Error> {
    let a = active_data(p, &pair.x, tols)?;
    let licq = check_cc_licq_at(p, &a, tols)?;
    let nd1 = match (licq.min_singular_value, licq.max_singular_value) {
        (None, _) => ThreeValued::Holds,
        (Some(smin), smax) => ThreeValued::decide(smin, tols.main, smax.unwrap_or(0.0)),
    };
    let nd2 = if a.q0.is_empty() {
        ThreeValued::Holds
    } else {
        let min_mu = a
            .q0
            .iter()
            .map(|&q| pair.mu[q])
            .fold(f64::MAX, f64::min);
        ThreeValued::decide(min_mu, tols.main, 1.0)
    };
    let nd3 = if a.k == p.s() {
        ThreeValued::Holds
    } else {
        let min_gamma = a
            .i0
            .iter()
            .map(|&i| pair.gamma[i].abs())
            .fold(f64::MAX, f64::min);
        ThreeValued::decide(min_gamma, tols.main, 1.0)
    };
    // nd4: restriction of the Lagrangian Hessian to the tangent space of the
    // active stratum (equalities, active inequalities, zero coordinates).
    let rows = tangent_space_rows(p, pair, &a.q0, &a.i0)?;
    let tangent = linalg::nullspace(&rows, tols.main);
    let tangent_dim = tangent.dim();
    let hl = lagrangian_hessian(p, pair)?;
    let restricted = linalg::restrict_form(&hl, &tangent)?;
    let (nd4, qi) = if tangent_dim == 0 {
        (ThreeValued::Holds, Some(0))
    } else {
        let (vals, _) = linalg::eigen_sym_sorted(&restricted);
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min_abs = vals.iter().fold(f64::MAX, |m, v| m.min(v.abs()));
        let nd4 = ThreeValued::decide(min_abs, tols.main, scale);
        let qi = if nd4 == ThreeValued::Holds {
            let (inertia, _) = linalg::inertia_and_detsign(&restricted, tols.main);
            Some(inertia.n_neg)
        } else {
            None
        };
        (nd4, qi)
    };
    let nondegenerate = ThreeValued::all(&[nd1, nd2, nd3, nd4]);
    let m_index = match (nondegenerate, qi) {
        (ThreeValued::Holds, Some(q)) => Some(p.s() - a.k + q),
        _ => None,
    };
    Ok(NdReport {
        licq,
        nd1,
        nd2,
        nd3,
        nd4,
        nondegenerate,
        k: a.k,
        qi,
        m_index,
        acc: a.k == p.s(),
        sc: nd2 == ThreeValued::Holds,
        tangent_dim,
    })
}

/// Local minimality of a nondegenerate point, computed along two equivalent
/// routes (M-index zero; full support with positive-definite restricted
/// Hessian) that are checked against each other.
pub fn is_local_min_nd(report: &NdReport) -> Result<bool, Error> {
    if report.nondegenerate != ThreeValued::Holds {
        return Err(Error::Invalid(
            "local minimality via the M-index requires a nondegenerate point".into(),
        ));
    }
    let by_index = report.m_index == Some(0);
    let by_conditions = report.acc && report.sc && report.qi == Some(0);
    if by_index != by_conditions {
        return Err(Error::Invalid(
            "internal inconsistency: minimizer characterizations disagree".into(),
        ));
    }
    Ok(by_index)
}

// ---------------------------------------------------------------------------
// Strong stability
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SsStatus {
    Holds,
    Fails,
    Indeterminate,
    /// The constraint qualification failed, so the characterization does not
    /// apply; no verdict is issued.
    HypothesisUnmet,
}

/// Witness for a strong-stability failure.
#[derive(Debug, Clone)]
pub enum SsWitness {
    /// A zero-coordinate multiplier vanishes (0-based coordinate).
    GammaZero { index: usize, value: f64 },
    /// The restricted Hessian block for this active selection is singular.
    SingularBlock { q_star: Vec<usize> },
    /// Two active selections give nonsingular blocks with different
    /// determinant signs.
    SignMismatch { first: Vec<usize>, second: Vec<usize> },
}

/// One member of the family of restricted Hessians indexed by
/// `Q+ <= Q* <= Q0` (0-based active selections).
#[derive(Debug, Clone)]
pub struct SsFamilyEntry {
    pub q_star: Vec<usize>,
    pub dim: usize,
    pub inertia: Inertia,
    pub det_sign: i8,
}

#[derive(Debug, Clone)]
pub struct StrongStabilityReport {
    pub status: SsStatus,
    pub witness: Option<SsWitness>,
    pub family: Vec<SsFamilyEntry>,
}

/// Characterization test: the point is strongly stable iff the
/// zero-coordinate multipliers do not vanish (when the support is not full)
/// and every member of the family of restricted Lagrangian Hessians over
/// `Q+ <= Q* <= Q0` is nonsingular with one common determinant sign.
/// Requires the constraint qualification; without it the status is
/// `HypothesisUnmet`.
pub fn check_strong_stability(
    p: &Problem,
    pair: &MStationaryPair,
    tols: &Tolerances,
) -> Result<StrongStabilityReport, Error> {
    let a = active_data(p, &pair.x, tols)?;
    let licq = check_cc_licq_at(p, &a, tols)?;
    if !licq.holds {
        return Ok(StrongStabilityReport {
            status: SsStatus::HypothesisUnmet,
            witness: None,
            family: vec![],
        });
    }
    // Zero-coordinate multiplier condition (vacuous at full support).
    let (nd3, gamma_witness) = if a.k == p.s() {
        (ThreeValued::Holds, None)
    } else {
        let (wi, wv) = a
            .i0
            .iter()
            .map(|&i| (i, pair.gamma[i]))
            .min_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .expect("k < s implies a zero coordinate");
        (
            ThreeValued::decide(wv.abs(), tols.main, 1.0),
            Some(SsWitness::GammaZero {
                index: wi,
                value: wv,
            }),
        )
    };
    let q_plus: Vec<usize> = a
        .q0
        .iter()
        .cloned()
        .filter(|&q| pair.mu[q] > tols.main)
        .collect();
    let rest: Vec<usize> = a
        .q0
        .iter()
        .cloned()
        .filter(|q| !q_plus.contains(q))
        .collect();
    let hl = lagrangian_hessian(p, pair)?;
    let mut family = Vec::with_capacity(1 << rest.len());
    let mut band_hit = false;
    for mask in 0u64..(1u64 << rest.len()) {
        let mut q_star = q_plus.clone();
        for (bit, &q) in rest.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                q_star.push(q);
            }
        }
        q_star.sort_unstable();
        let rows = tangent_space_rows(p, pair, &q_star, &a.i0)?;
        let t = linalg::nullspace(&rows, tols.main);
        let restricted = linalg::restrict_form(&hl, &t)?;
        let (inertia, det_sign) = linalg::inertia_and_detsign(&restricted, tols.main);
        if t.dim() > 0 {
            let (vals, _) = linalg::eigen_sym_sorted(&restricted);
            let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            if vals
                .iter()
                .any(|v| v.abs() >= tols.main * scale && v.abs() <= 10.0 * tols.main * scale)
            {
                band_hit = true;
            }
        }
        family.push(SsFamilyEntry {
            q_star,
            dim: t.dim(),
            inertia,
            det_sign,
        });
    }
    // Decision. Clean failures take precedence; otherwise borderline
    // eigenvalues or a borderline gamma leave the verdict open.
    if nd3 == ThreeValued::Fails {
        return Ok(StrongStabilityReport {
            status: SsStatus::Fails,
            witness: gamma_witness,
            family,
        });
    }
    if let Some(e) = family.iter().find(|e| e.det_sign == 0) {
        let witness = SsWitness::SingularBlock {
            q_star: e.q_star.clone(),
        };
        return Ok(StrongStabilityReport {
            status: SsStatus::Fails,
            witness: Some(witness),
            family,
        });
    }
    let first_sign = family[0].det_sign;
    if let Some(e) = family.iter().find(|e| e.det_sign != first_sign) {
        let witness = SsWitness::SignMismatch {
            first: family[0].q_star.clone(),
            second: e.q_star.clone(),
        };
        return Ok(StrongStabilityReport {
            status: SsStatus::Fails,
            witness: Some(witness),
            family,
        });
    }
    if band_hit || nd3 == ThreeValued::Indeterminate {
        return Ok(StrongStabilityReport {
            status: SsStatus::Indeterminate,
            witness: None,
            family,
        });
    }
    Ok(StrongStabilityReport {
        status: SsStatus::Holds,
        witness: None,
        family,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SsMinimizerStatus {
    Holds,
    Fails,
    Indeterminate,
    /// Strong stability itself could not be established.
    PreconditionUnmet,
}

#[derive(Debug, Clone)]
pub struct SsMinimizerReport {
    pub status: SsMinimizerStatus,
    /// Smallest eigenvalue of the Hessian restricted to the tangent space
    /// for the positive-multiplier selection, when the test ran.
    pub min_eigenvalue: Option<f64>,
}

/// Minimizer test for strongly stable points: the point is a local minimizer
/// iff the support is full and the Lagrangian Hessian is positive definite
/// on the tangent space of the positive-multiplier selection.
pub fn check_ss_minimizer(
    p: &Problem,
    pair: &MStationaryPair,
    tols: &Tolerances,
) -> Result<SsMinimizerReport, Error> {
    let ss = check_strong_stability(p, pair, tols)?;
    if ss.status != SsStatus::Holds {
        return Ok(SsMinimizerReport {
            status: SsMinimizerStatus::PreconditionUnmet,
            min_eigenvalue: None,
        });
    }
    let a = active_data(p, &pair.x, tols)?;
    if a.k != p.s() {
        return Ok(SsMinimizerReport {
            status: SsMinimizerStatus::Fails,
            min_eigenvalue: None,
        });
    }
    let q_plus: Vec<usize> = a
        .q0
        .iter()
        .cloned()
        .filter(|&q| pair.mu[q] > tols.main)
        .collect();
    let rows = tangent_space_rows(p, pair, &q_plus, &a.i0)?;
    let t = linalg::nullspace(&rows, tols.main);
    if t.dim() == 0 {
        return Ok(SsMinimizerReport {
            status: SsMinimizerStatus::Holds,
            min_eigenvalue: None,
        });
    }
    let hl = lagrangian_hessian(p, pair)?;
    let restricted = linalg::restrict_form(&hl, &t)?;
    let (vals, _) = linalg::eigen_sym_sorted(&restricted);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let status = match ThreeValued::decide(vals[0], tols.main, scale) {
        ThreeValued::Holds => SsMinimizerStatus::Holds,
        ThreeValued::Fails => SsMinimizerStatus::Fails,
        ThreeValued::Indeterminate => SsMinimizerStatus::Indeterminate,
    };
    Ok(SsMinimizerReport {
        status,
        min_eigenvalue: Some(vals[0]),
    })
}

// ---------------------------------------------------------------------------
// Cones and second-order conditions
// ---------------------------------------------------------------------------

/// A (possibly nonconvex) cone given by linear equalities `r.xi = 0`,
/// inequalities `r.xi >= 0`, forced zero coordinates, and optionally a union
/// of allowed supports (`pieces`): membership requires the support of `xi`
/// to lie inside one of the pieces.
#[derive(Debug, Clone)]
pub struct ConeDescription {
    pub ambient_dim: usize,
    pub equalities: DMatrix<f64>,
    pub inequalities: DMatrix<f64>,
    pub zero_coords: Vec<usize>,
    pub pieces: Option<Vec<Vec<usize>>>,
}

impl ConeDescription {
    /// Membership up to `tol` (rows are tested relative to their norms).
    pub fn member(&self, xi: &DVector<f64>, tol: f64) -> bool {
        let xi_norm = xi.norm();
        let coord_cut = tol * xi.amax().max(1.0);
        for r in 0..self.equalities.nrows() {
            let row = self.equalities.row(r);
            let cut = tol * (row.norm() * xi_norm).max(1.0);
            if (row * xi)[(0, 0)].abs() > cut {
                return false;
            }
        }
        for r in 0..self.inequalities.nrows() {
            let row = self.inequalities.row(r);
            let cut = tol * (row.norm() * xi_norm).max(1.0);
            if (row * xi)[(0, 0)] < -cut {
                return false;
            }
        }
        for &i in &self.zero_coords {
            if xi[i].abs() > coord_cut {
                return false;
            }
        }
        if let Some(pieces) = &self.pieces {
            return pieces.iter().any(|j| {
                (0..self.ambient_dim)
                    .filter(|i| !j.contains(i))
                    .all(|i| xi[i].abs() <= coord_cut)
            });
        }
        true
    }
}

/// Critical cone at an M-stationary pair: the definitional description
/// (directions in the sparsity tangent cone that keep the constraints and do
/// not increase the objective) and, when the support is full, the polyhedral
/// representation through the positive-multiplier split.
#[derive(Debug, Clone)]
pub struct CriticalCone {
    pub acc: bool,
    pub definitional: ConeDescription,
    pub representation: Option<ConeDescription>,
}

fn support_pieces(p: &Problem, i0: &[usize], i1: &[usize]) -> Vec<Vec<usize>> {
    // Supports J = I1 plus (s - k) zero coordinates; at full support the
    // single piece is I1 itself.
    let extra = p.s() - i1.len();
    k_subsets(i0, extra)
        .into_iter()
        .map(|z| {
            let mut j = i1.to_vec();
            j.extend(z);
            j.sort_unstable();
            j
        })
        .collect()
}

pub fn critical_cone(
    p: &Problem,
    pair: &MStationaryPair,
    tols: &Tolerances,
) -> Result<CriticalCone, Error> {
    let a = active_data(p, &pair.x, tols)?;
    let xs = pair.x.as_slice();
    let n = p.n();
    let np = p.equalities().len();
    let mut eq = DMatrix::zeros(np, n);
    for (r, h) in p.equalities().iter().enumerate() {
        eq.row_mut(r).copy_from(&h.gradient(xs)?.transpose());
    }
    // Inequality rows: active constraint gradients, then the descent row -Df.
    let mut ineq = DMatrix::zeros(a.q0.len() + 1, n);
    for (r, &q) in a.q0.iter().enumerate() {
        ineq.row_mut(r)
            .copy_from(&p.inequalities()[q].gradient(xs)?.transpose());
    }
    let df = p.objective().gradient(xs)?;
    ineq.row_mut(a.q0.len()).copy_from(&(-&df).transpose());
    let definitional = ConeDescription {
        ambient_dim: n,
        equalities: eq.clone(),
        inequalities: ineq,
        zero_coords: vec![],
        pieces: Some(support_pieces(p, &a.i0, &a.i1)),
    };
    let acc = a.k == p.s();
    let representation = if acc {
        let q_plus: Vec<usize> = a
            .q0
            .iter()
            .cloned()
            .filter(|&q| pair.mu[q] > tols.main)
            .collect();
        let q_rest: Vec<usize> = a
            .q0
            .iter()
            .cloned()
            .filter(|q| !q_plus.contains(q))
            .collect();
        let mut eq2 = DMatrix::zeros(np + q_plus.len(), n);
        eq2.view_mut((0, 0), (np, n)).copy_from(&eq);
        for (r, &q) in q_plus.iter().enumerate() {
            eq2.row_mut(np + r)
                .copy_from(&p.inequalities()[q].gradient(xs)?.transpose());
        }
        let mut ineq2 = DMatrix::zeros(q_rest.len(), n);
        for (r, &q) in q_rest.iter().enumerate() {
            ineq2
                .row_mut(r)
                .copy_from(&p.inequalities()[q].gradient(xs)?.transpose());
        }
        Some(ConeDescription {
            ambient_dim: n,
            equalities: eq2,
            inequalities: ineq2,
            zero_coords: a.i0.clone(),
            pieces: None,
        })
    } else {
        None
    };
    Ok(CriticalCone {
        acc,
        definitional,
        representation,
    })
}

/// The sparsity tangent cone at the pair's point: the union of coordinate
/// subspaces spanned by supports `J >= I1` with `|J| = s` (just `I1` at full
/// support). No constraint rows.
pub fn bouligand_cone(
    p: &Problem,
    pair: &MStationaryPair,
    tols: &Tolerances,
) -> Result<ConeDescription, Error> {
    let a = active_data(p, &pair.x, tols)?;
    Ok(ConeDescription {
        ambient_dim: p.n(),
        equalities: DMatrix::zeros(0, p.n()),
        inequalities: DMatrix::zeros(0, p.n()),
        zero_coords: vec![],
        pieces: Some(support_pieces(p, &a.i0, &a.i1)),
    })
}

/// Intersection of the positive-multiplier linearization cone with the
/// sparsity tangent cone: equalities from `h` and the positive-multiplier
/// inequalities, inequality rows from the remaining active constraints,
/// support pieces from the sparsity structure.
pub fn linearization_tangent_cone(
    p: &Problem,
    pair: &MStationaryPair,
    tols: &Tolerances,
) -> Result<ConeDescription, Error> {
    let a = active_data(p, &pair.x, tols)?;
    let xs = pair.x.as_slice();
    let n = p.n();
    let np = p.equalities().len();
    let q_plus: Vec<usize> = a
        .q0
        .iter()
        .cloned()
        .filter(|&q| pair.mu[q] > tols.main)
        .collect();
    let q_rest: Vec<usize> = a
        .q0
        .iter()
        .cloned()
        .filter(|q| !q_plus.contains(q))
        .collect();
    let mut eq = DMatrix::zeros(np + q_plus.len(), n);
    for (r, h) in p.equalities().iter().enumerate() {
        eq.row_mut(r).copy_from(&h.gradient(xs)?.transpose());
    }
    for (r, &q) in q_plus.iter().enumerate() {
        eq.row_mut(np + r)
            .copy_from(&p.inequalities()[q].gradient(xs)?.transpose());
    }
    let mut ineq = DMatrix::zeros(q_rest.len(), n);
    for (r, &q) in q_rest.iter().enumerate() {
        ineq.row_mut(r)
            .copy_from(&p.inequalities()[q].gradient(xs)?.transpose());
    }
    Ok(ConeDescription {
        ambient_dim: n,
        equalities: eq,
        inequalities: ineq,
        zero_coords: vec![],
        pieces: Some(support_pieces(p, &a.i0, &a.i1)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SoscStatus {
    /// Positive definiteness certified by eigenvalues on every piece.
    HoldsExact,
    /// Positive on every sampled direction; sampling cannot certify.
    HoldsSampled,
    /// A unit direction in the cone with a nonpositive form value.
    FailsWithWitness,
    Indeterminate,
}

#[derive(Debug, Clone)]
pub struct SoscVerdict {
    pub status: SoscStatus,
    /// Unit witness direction for a failure.
    pub witness: Option<DVector<f64>>,
    pub witness_value: Option<f64>,
    /// Smallest quadratic-form value seen over unit directions in the cone.
    pub min_value: Option<f64>,
    pub samples_used: usize,
}

/// Second-order sufficiency of the Lagrangian Hessian over a cone: positive
/// definiteness piece by piece. Pieces that reduce to subspaces are decided
/// exactly by eigenvalues; pieces with active inequality rows are scanned
/// with a deterministic sampled minimization of the Rayleigh quotient. A
/// nonpositive minimum always produces a verified unit witness; a tiny
/// positive minimum cannot certify strictness and is reported indeterminate.
pub fn check_sosc(
    p: &Problem,
    pair: &MStationaryPair,
    cone: &ConeDescription,
    tols: &Tolerances,
    samples_per_piece: usize,
) -> Result<SoscVerdict, Error> {
    let n = p.n();
    let hl = lagrangian_hessian(p, pair)?;
    let pieces: Vec<Vec<usize>> = cone
        .pieces
        .clone()
        .unwrap_or_else(|| vec![(0..n).collect()]);
    let mut min_value: Option<f64> = None;
    let mut samples_used = 0usize;
    let mut any_indeterminate = false;
    let mut any_sampled = false;
    let track = |mv: &mut Option<f64>, v: f64| {
        *mv = Some(mv.map_or(v, |m| m.min(v)));
    };
    for (piece_idx, j) in pieces.iter().enumerate() {
        // Subspace V_J: cone equalities plus unit rows for coordinates
        // outside the piece or forced to zero.
        let off: Vec<usize> = (0..n)
            .filter(|i| !j.contains(i) || cone.zero_coords.contains(i))
            .collect();
        let nrows = cone.equalities.nrows() + off.len();
        let mut rows = DMatrix::zeros(nrows, n);
        rows.view_mut((0, 0), (cone.equalities.nrows(), n))
            .copy_from(&cone.equalities);
        for (t, &i) in off.iter().enumerate() {
            rows[(cone.equalities.nrows() + t, i)] = 1.0;
        }
        let v = linalg::nullspace(&rows, tols.main);
        let d = v.dim();
        if d == 0 {
            continue; // the piece is {0}: vacuous
        }
        let r = linalg::restrict_form(&hl, &v)?;
        let (vals, vecs) = linalg::eigen_sym_sorted(&r);
        let scale = vals.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        // Project inequality rows into V coordinates, dropping the trivial ones.
        let mut ineq_sub: Vec<DVector<f64>> = Vec::new();
        for q in 0..cone.inequalities.nrows() {
            let row = cone.inequalities.row(q).transpose();
            let w = v.basis().transpose() * &row;
            if w.norm() > tols.main * row.norm().max(1.0) {
                ineq_sub.push(w);
            }
        }
        if ineq_sub.is_empty() {
            // Pure subspace piece: eigenvalues decide.
            let lam_min = vals[0];
            track(&mut min_value, lam_min);
            if lam_min <= 0.0 {
                let xi = v.embed(&vecs.column(0).into_owned());
                return Ok(SoscVerdict {
                    status: SoscStatus::FailsWithWitness,
                    witness: Some(xi),
                    witness_value: Some(lam_min),
                    min_value,
                    samples_used,
                });
            }
            if lam_min <= 10.0 * tols.main * scale {
                any_indeterminate = true;
            }
            continue;
        }
        // Sampled route.
        any_sampled = true;
        let feasible_sub = |w: &DVector<f64>| -> bool {
            ineq_sub
                .iter()
                .all(|row| row.dot(w) >= -tols.main * w.norm().max(1.0))
        };
        let quad = |w: &DVector<f64>| -> f64 { (w.transpose() * &r * w)[(0, 0)] };
        let mut best: Option<(f64, DVector<f64>)> = None;
        let consider = |w: DVector<f64>, best: &mut Option<(f64, DVector<f64>)>| {
            let nw = w.norm();
            if nw < 1e-12 {
                return false;
            }
            let u = w / nw;
            if !feasible_sub(&u) {
                return false;
            }
            let q = quad(&u);
            if best.as_ref().map_or(true, |(bq, _)| q < *bq) {
                *best = Some((q, u));
            }
            true
        };
        // Deterministic candidates first: eigenvectors of the restriction.
        for c in 0..d {
            let col = vecs.column(c).into_owned();
            if consider(col.clone(), &mut best) {
                samples_used += 1;
            }
            if consider(-col, &mut best) {
                samples_used += 1;
            }
        }
        // Seeded random directions (fixed stream per piece, independent of
        // the environment, so reports are reproducible).
        let mut rng = ChaCha8Rng::seed_from_u64(0x50_5C + piece_idx as u64);
        for _ in 0..samples_per_piece {
            let w = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            if consider(w, &mut best) {
                samples_used += 1;
            }
        }
        let Some((mut bq, mut bw)) = best else {
            // Nothing in this piece satisfied the inequality rows: treat the
            // piece as (numerically) trivial.
            continue;
        };
        // Local refinement: projected descent on the unit sphere, rejecting
        // steps that leave the cone.
        let mut step = 0.5;
        for _ in 0..200 {
            if step < 1e-10 {
                break;
            }
            let grad = &r * &bw * 2.0;
            let trial = &bw - &grad * step;
            let nt = trial.norm();
            if nt > 1e-12 {
                let u = trial / nt;
                if feasible_sub(&u) {
                    let q = quad(&u);
                    if q < bq {
                        bq = q;
                        bw = u;
                        continue;
                    }
                }
            }
            step *= 0.5;
        }
        track(&mut min_value, bq);
        if bq < -tols.main * scale {
            let xi = v.embed(&bw);
            // Re-verify against the full cone description before reporting.
            if cone.member(&xi, 10.0 * tols.main) && bq <= 0.0 {
                return Ok(SoscVerdict {
                    status: SoscStatus::FailsWithWitness,
                    witness: Some(xi),
                    witness_value: Some(bq),
                    min_value,
                    samples_used,
                });
            }
            any_indeterminate = true;
        } else if bq <= 10.0 * tols.main * scale {
            // Covers both tiny negative and tiny positive minima.
            any_indeterminate = true;
        }
    }
    let status = if any_indeterminate {
        SoscStatus::Indeterminate
    } else if any_sampled {
        SoscStatus::HoldsSampled
    } else {
        SoscStatus::HoldsExact
    };
    Ok(SoscVerdict {
        status,
        witness: None,
        witness_value: None,
        min_value,
        samples_used,
    })
}

pub const DEFAULT_SOSC_SAMPLES: usize = 10_000;

/// Second-order condition over the critical cone (the polyhedral
/// representation at full support, the definitional pieces otherwise).
pub fn check_sosc_critical(
    p: &Problem,
    pair: &MStationaryPair,
    tols: &Tolerances,
    samples_per_piece: usize,
) -> Result<SoscVerdict, Error> {
    let cone = critical_cone(p, pair, tols)?;
    let desc = cone.representation.as_ref().unwrap_or(&cone.definitional);
    check_sosc(p, pair, desc, tols, samples_per_piece)
}

/// Second-order condition over the linearization cone intersected with the
/// sparsity tangent cone.
pub fn check_sosc_tangent(
    p: &Problem,
    pair: &MStationaryPair,
    tols: &Tolerances,
    samples_per_piece: usize,
) -> Result<SoscVerdict, Error> {
    let cone = linearization_tangent_cone(p, pair, tols)?;
    check_sosc(p, pair, &cone, tols, samples_per_piece)
}

/// Everything the report carries per point.
#[derive(Debug, Clone)]
pub struct Classification {
    pub nd: NdReport,
    pub local_min: Option<bool>,
    pub strong_stability: StrongStabilityReport,
    pub ss_minimizer: SsMinimizerReport,
    pub sosc_critical: SoscVerdict,
    pub sosc_tangent: SoscVerdict,
}

pub fn classify_point(
    p: &Problem,
    pair: &MStationaryPair,
    tols: &Tolerances,
    sosc_samples: usize,
) -> Result<Classification, Error> {
    let nd = check_nondegeneracy(p, pair, tols)?;
    let local_min = if nd.nondegenerate == ThreeValued::Holds {
        Some(is_local_min_nd(&nd)?)
    } else {
        None
    };
    let strong_stability = check_strong_stability(p, pair, tols)?;
    let ss_minimizer = check_ss_minimizer(p, pair, tols)?;
    let sosc_critical = check_sosc_critical(p, pair, tols, sosc_samples)?;
    let sosc_tangent = check_sosc_tangent(p, pair, tols, sosc_samples)?;
    Ok(Classification {
        nd,
        local_min,
        strong_stability,
        ss_minimizer,
        sosc_critical,
        sosc_tangent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationarity::{check_m_stationarity, StationarityVerdict};

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn pair_at(p: &Problem, coords: &[f64]) -> MStationaryPair {
        let x = DVector::from_vec(coords.to_vec());
        match check_m_stationarity(p, &x, &tols()).unwrap() {
            StationarityVerdict::Stationary(pair) => pair,
            StationarityVerdict::NotStationary(r) => panic!("not stationary: {r:?}"),
        }
    }

    fn unconstrained_shifted() -> Problem {
        // Minimize (x1-1)^2 + (x2-1)^2 with s = 1.
        Problem::from_toml_str(
            r#"
n = 2
s = 1
objective = "(x1-1)^2 + (x2-1)^2"
box = [[-3.0, 3.0], [-3.0, 3.0]]
"#,
        )
        .unwrap()
    }

    #[test]
    fn origin_of_shifted_problem_is_nondegenerate_saddle() {
        let p = unconstrained_shifted();
        let pair = pair_at(&p, &[0.0, 0.0]);
        // gamma = Df(0,0) = (-2,-2).
        assert!((pair.gamma[0] + 2.0).abs() < 1e-12);
        assert!((pair.gamma[1] + 2.0).abs() < 1e-12);
        let nd = check_nondegeneracy(&p, &pair, &tols()).unwrap();
        assert_eq!(nd.nondegenerate, ThreeValued::Holds);
        assert_eq!(nd.k, 0);
        assert_eq!(nd.qi, Some(0)); // tangent space is {0}
        assert_eq!(nd.m_index, Some(1)); // s - k + qi = 1
        assert!(!nd.acc);
        assert_eq!(is_local_min_nd(&nd).unwrap(), false);
    }

    #[test]
    fn axis_points_of_shifted_problem_are_minimizers() {
        let p = unconstrained_shifted();
        for coords in [[1.0, 0.0], [0.0, 1.0]] {
            let pair = pair_at(&p, &coords);
            let nd = check_nondegeneracy(&p, &pair, &tols()).unwrap();
            assert_eq!(nd.nondegenerate, ThreeValued::Holds);
            assert_eq!(nd.m_index, Some(0));
            assert!(is_local_min_nd(&nd).unwrap());
            let ss = check_strong_stability(&p, &pair, &tols()).unwrap();
            assert_eq!(ss.status, SsStatus::Holds);
            let ssm = check_ss_minimizer(&p, &pair, &tols()).unwrap();
            assert_eq!(ssm.status, SsMinimizerStatus::Holds);
        }
    }

    #[test]
    fn degenerate_origin_fails_nd3_and_strong_stability() {
        // x1^2 + x2^2 at the origin: gamma = Df(0) = 0.
        let p = Problem::from_toml_str(
            r#"
n = 2
s = 1
objective = "x1^2 + x2^2"
box = [[-3.0, 3.0], [-3.0, 3.0]]
"#,
        )
        .unwrap();
        let pair = pair_at(&p, &[0.0, 0.0]);
        let nd = check_nondegeneracy(&p, &pair, &tols()).unwrap();
        assert_eq!(nd.nd1, ThreeValued::Holds);
        assert_eq!(nd.nd3, ThreeValued::Fails);
        assert_eq!(nd.nondegenerate, ThreeValued::Fails);
        assert_eq!(nd.m_index, None);
        let ss = check_strong_stability(&p, &pair, &tols()).unwrap();
        assert_eq!(ss.status, SsStatus::Fails);
        assert!(matches!(
            ss.witness,
            Some(SsWitness::GammaZero { value, .. }) if value.abs() < 1e-12
        ));
        let ssm = check_ss_minimizer(&p, &pair, &tols()).unwrap();
        assert_eq!(ssm.status, SsMinimizerStatus::PreconditionUnmet);
        // Both second-order conditions hold: the form is 2|xi|^2 on every piece.
        let bs = check_sosc_critical(&p, &pair, &tols(), 200).unwrap();
        assert_eq!(bs.status, SoscStatus::HoldsExact);
        let pan = check_sosc_tangent(&p, &pair, &tols(), 200).unwrap();
        assert_eq!(pan.status, SoscStatus::HoldsExact);
    }

    #[test]
    fn indefinite_restriction_with_sign_flip_family() {
        // Cross-term objective with two inactive-multiplier inequalities at
        // the point (1,1,0): the family over Q* subsets changes determinant
        // sign, so strong stability fails even though the second-order
        // condition over the critical cone holds.
        let p = Problem::from_toml_str(
            r#"
n = 3
s = 2
objective = "(x1-1)^2 + 3*(x1-1)*(x2-1) + (x2-1)^2 + x3^2"
inequalities = ["x1 - 1", "x2 - 1"]
box = [[-3.0, 3.0], [-3.0, 3.0], [-3.0, 3.0]]
"#,
        )
        .unwrap();
        let pair = pair_at(&p, &[1.0, 1.0, 0.0]);
        assert!(pair.mu.iter().all(|m| m.abs() <= 1e-10));
        let nd = check_nondegeneracy(&p, &pair, &tols()).unwrap();
        // Strict complementarity fails cleanly: active inequalities with
        // zero multipliers.
        assert_eq!(nd.nd2, ThreeValued::Fails);
        assert_eq!(nd.nondegenerate, ThreeValued::Fails);
        let ss = check_strong_stability(&p, &pair, &tols()).unwrap();
        assert_eq!(ss.status, SsStatus::Fails);
        match &ss.witness {
            Some(SsWitness::SignMismatch { first, second }) => {
                assert_eq!(first, &Vec::<usize>::new());
                assert_eq!(second, &vec![0]);
            }
            other => panic!("expected sign mismatch, got {other:?}"),
        }
        // Family order: {}, {0}, {1}, {0,1} with dims 2,1,1,0.
        assert_eq!(ss.family.len(), 4);
        assert_eq!(ss.family[0].det_sign, -1);
        assert_eq!(ss.family[1].det_sign, 1);
        assert_eq!(ss.family[3].dim, 0);
        // The quadratic form is positive on the critical cone.
        let bs = check_sosc_critical(&p, &pair, &tols(), 2000).unwrap();
        assert_eq!(bs.status, SoscStatus::HoldsSampled);
        assert!(bs.min_value.unwrap() > 1.5, "{:?}", bs.min_value);
    }

    #[test]
    fn sosc_fails_with_witness_on_indefinite_subspace() {
        // At the origin the support is empty, so both admissible supports
        // {1} and {2} contribute subspace pieces; the x2 piece has curvature
        // -2 and must produce a verified unit witness.
        let p = Problem::from_toml_str(
            r#"
n = 2
s = 1
objective = "(x1-1)^2 - x2^2"
box = [[-3.0, 3.0], [-3.0, 3.0]]
"#,
        )
        .unwrap();
        let pair = pair_at(&p, &[0.0, 0.0]);
        let v = check_sosc_tangent(&p, &pair, &tols(), 500).unwrap();
        assert_eq!(v.status, SoscStatus::FailsWithWitness);
        let w = v.witness.unwrap();
        assert!((w.norm() - 1.0).abs() < 1e-9);
        assert!((v.witness_value.unwrap() + 2.0).abs() < 1e-9);
        // The witness points along e2.
        assert!(w[1].abs() > 0.99);
        // The critical cone admits the same direction (the descent row is
        // inactive on it), so the cone-restricted condition fails too.
        let c = check_sosc_critical(&p, &pair, &tols(), 500).unwrap();
        assert_eq!(c.status, SoscStatus::FailsWithWitness);

        // At the full-support minimizer (1, 0) the only admissible
        // directions lie along x1, where curvature is +2: both conditions
        // hold exactly even though the ambient Hessian is indefinite.
        let pair = pair_at(&p, &[1.0, 0.0]);
        let v = check_sosc_tangent(&p, &pair, &tols(), 500).unwrap();
        assert_eq!(v.status, SoscStatus::HoldsExact);
        assert!((v.min_value.unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn member_tolerances_accept_boundary_rays() {
        let cone = ConeDescription {
            ambient_dim: 2,
            equalities: DMatrix::zeros(0, 2),
            inequalities: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            zero_coords: vec![],
            pieces: Some(vec![vec![0], vec![1]]),
        };
        let tol = 1e-8;
        assert!(cone.member(&DVector::from_vec(vec![1.0, 0.0]), tol));
        assert!(cone.member(&DVector::from_vec(vec![0.0, 1.0]), tol));
        // Dense vector violates every piece.
        assert!(!cone.member(&DVector::from_vec(vec![0.5, 0.5]), tol));
        // Violates the half-space.
        assert!(!cone.member(&DVector::from_vec(vec![-1.0, 0.0]), tol));
    }
}
