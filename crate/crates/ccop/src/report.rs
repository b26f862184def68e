//! Report assembly and serialization.
//!
//! Reports are plain data: every index set is 1-based (matching the `x1,
//! x2, ...` variable names of the problem format), field order is fixed by
//! struct order, and floating-point values are serialized with 17
//! significant digits so that JSON output round-trips bit-exactly and is
//! byte-identical across runs and thread counts.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::classify::{
    Classification, SoscStatus, SoscVerdict, SsMinimizerStatus, SsStatus, SsWitness, ThreeValued,
};
use crate::linalg::Inertia;
use crate::model::{active_data, MStationaryPair, Problem, Tolerances};
use crate::morse::{self, CellAttachment, LevelSweepReport, MountainPass};
use crate::stationarity::{PerturbTable, ProbeStats};
use crate::Error;

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool_version: String,
    /// Canonical re-print of the problem file; reloadable.
    pub problem_echo: String,
    pub config: ConfigEcho,
    pub points: Vec<PointReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub morse: Option<MorseSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturb: Option<PerturbSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSection>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub tol_main: f64,
    pub tol_zero: f64,
    pub tol_act: f64,
    pub seeds_per_system: usize,
    pub rng_seed: u64,
    pub sosc_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_per_axis: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointReport {
    pub x: Vec<f64>,
    /// 1-based indices of the nonzero coordinates.
    pub support: Vec<usize>,
    pub objective_value: f64,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
    pub stationarity_residual: f64,
    pub feasibility_residual: f64,
    pub classification: ClassificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attached_cells: Option<CellAttachment>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LicqJson {
    pub holds: bool,
    pub min_singular_value: Option<f64>,
    pub max_singular_value: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub licq: LicqJson,
    pub nd1: ThreeValued,
    pub nd2: ThreeValued,
    pub nd3: ThreeValued,
    pub nd4: ThreeValued,
    pub nondegenerate: ThreeValued,
    pub k: usize,
    pub qi: Option<usize>,
    pub m_index: Option<usize>,
    pub acc: bool,
    pub sc: bool,
    pub tangent_dim: usize,
    pub local_min: Option<bool>,
    pub strong_stability: StrongStabilityJson,
    pub ss_minimizer: SsMinimizerJson,
    pub sosc_critical: SoscJson,
    pub sosc_tangent: SoscJson,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WitnessJson {
    /// 1-based coordinate whose multiplier vanishes.
    GammaZero { index: usize, value: f64 },
    /// 1-based active selection whose restricted Hessian is singular.
    SingularBlock { q_star: Vec<usize> },
    /// Two 1-based active selections with opposite determinant signs.
    SignMismatch {
        first: Vec<usize>,
        second: Vec<usize>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyEntryJson {
    /// 1-based active selection.
    pub q_star: Vec<usize>,
    pub dim: usize,
    pub inertia: Inertia,
    pub det_sign: i8,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrongStabilityJson {
    pub status: SsStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessJson>,
    pub family: Vec<FamilyEntryJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SsMinimizerJson {
    pub status: SsMinimizerStatus,
    pub min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SoscJson {
    pub status: SoscStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    pub witness_value: Option<f64>,
    pub min_value: Option<f64>,
    pub samples_used: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossingJson {
    pub value: f64,
    pub below_level: f64,
    pub above_level: f64,
    pub beta0_below: usize,
    pub beta0_above: usize,
    /// 1-based indices into the report's point list.
    pub point_indices: Vec<usize>,
    pub rule: String,
    pub predicted_deltas: Vec<i64>,
    pub observed_delta: i64,
    pub matches: bool,
    pub coincident: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepJson {
    pub grid_per_axis: usize,
    pub band: f64,
    pub levels: Vec<f64>,
    pub beta0: Vec<usize>,
    pub crossings: Vec<CrossingJson>,
    pub plateau_violations: Vec<[f64; 2]>,
    /// 1-based indices of points whose value lies outside the level range.
    pub uncovered_points: Vec<usize>,
    pub indeterminate: bool,
    pub all_rules_match: bool,
}

pub fn sweep_json(s: &LevelSweepReport) -> SweepJson {
    SweepJson {
        grid_per_axis: s.grid_per_axis,
        band: s.band,
        levels: s.levels.clone(),
        beta0: s.beta0.clone(),
        crossings: s
            .crossings
            .iter()
            .map(|c| CrossingJson {
                value: c.value,
                below_level: c.below_level,
                above_level: c.above_level,
                beta0_below: c.beta0_below,
                beta0_above: c.beta0_above,
                point_indices: one_based(&c.point_indices),
                rule: c.rule.clone(),
                predicted_deltas: c.predicted_deltas.clone(),
                observed_delta: c.observed_delta,
                matches: c.matches,
                coincident: c.coincident,
            })
            .collect(),
        plateau_violations: s.plateau_violations.clone(),
        uncovered_points: one_based(&s.uncovered_points),
        indeterminate: s.indeterminate,
        all_rules_match: s.all_rules_match,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MorseSection {
    pub sweep: SweepJson,
    pub mountain_pass: MountainPass,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbPointJson {
    pub x: Vec<f64>,
    pub support: Vec<usize>,
    pub objective_value: f64,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
    pub stationarity_residual: f64,
    pub feasibility_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbRowJson {
    pub epsilon: f64,
    pub points: Vec<PerturbPointJson>,
    /// For each reference point, the number of perturbed points within the
    /// bifurcation radius.
    pub reference_counts: Vec<usize>,
    pub bifurcation: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbSection {
    pub radius: f64,
    pub rows: Vec<PerturbRowJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeFailureJson {
    pub trial: usize,
    pub x: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeSection {
    pub trials: usize,
    pub successes: usize,
    pub indeterminate: usize,
    pub nondegenerate_fraction: f64,
    pub failures: Vec<ProbeFailureJson>,
}

fn one_based(ix: &[usize]) -> Vec<usize> {
    ix.iter().map(|i| i + 1).collect()
}

fn witness_json(w: &SsWitness) -> WitnessJson {
    match w {
        SsWitness::GammaZero { index, value } => WitnessJson::GammaZero {
            index: index + 1,
            value: *value,
        },
        SsWitness::SingularBlock { q_star } => WitnessJson::SingularBlock {
            q_star: one_based(q_star),
        },
        SsWitness::SignMismatch { first, second } => WitnessJson::SignMismatch {
            first: one_based(first),
            second: one_based(second),
        },
    }
}

fn sosc_json(v: &SoscVerdict) -> SoscJson {
    SoscJson {
        status: v.status,
        witness: v.witness.as_ref().map(|w| w.as_slice().to_vec()),
        witness_value: v.witness_value,
        min_value: v.min_value,
        samples_used: v.samples_used,
    }
}

/// Assembles the per-point block of the report from a certified pair and
/// its classification; cell-attachment data is included for nondegenerate
/// points.
pub fn point_report(
    p: &Problem,
    pair: &MStationaryPair,
    cls: &Classification,
    tols: &Tolerances,
) -> Result<PointReport, Error> {
    let a = active_data(p, &pair.x, tols)?;
    let objective_value = p.objective().value(pair.x.as_slice())?;
    let attached = if cls.nd.nondegenerate == ThreeValued::Holds {
        Some(morse::attached_cells(p.n(), p.s(), cls.nd.k, cls.nd.qi)?)
    } else {
        None
    };
    Ok(PointReport {
        x: pair.x.as_slice().to_vec(),
        support: one_based(&a.i1),
        objective_value,
        lambda: pair.lambda.clone(),
        mu: pair.mu.clone(),
        gamma: pair.gamma.clone(),
        stationarity_residual: pair.stationarity_residual,
        feasibility_residual: pair.feasibility_residual,
        classification: ClassificationReport {
            licq: LicqJson {
                holds: cls.nd.licq.holds,
                min_singular_value: cls.nd.licq.min_singular_value,
                max_singular_value: cls.nd.licq.max_singular_value,
            },
            nd1: cls.nd.nd1,
            nd2: cls.nd.nd2,
            nd3: cls.nd.nd3,
            nd4: cls.nd.nd4,
            nondegenerate: cls.nd.nondegenerate,
            k: cls.nd.k,
            qi: cls.nd.qi,
            m_index: cls.nd.m_index,
            acc: cls.nd.acc,
            sc: cls.nd.sc,
            tangent_dim: cls.nd.tangent_dim,
            local_min: cls.local_min,
            strong_stability: StrongStabilityJson {
                status: cls.strong_stability.status,
                witness: cls.strong_stability.witness.as_ref().map(witness_json),
                family: cls
                    .strong_stability
                    .family
                    .iter()
                    .map(|e| FamilyEntryJson {
                        q_star: one_based(&e.q_star),
                        dim: e.dim,
                        inertia: e.inertia,
                        det_sign: e.det_sign,
                    })
                    .collect(),
            },
            ss_minimizer: SsMinimizerJson {
                status: cls.ss_minimizer.status,
                min_eigenvalue: cls.ss_minimizer.min_eigenvalue,
            },
            sosc_critical: sosc_json(&cls.sosc_critical),
            sosc_tangent: sosc_json(&cls.sosc_tangent),
        },
        attached_cells: attached,
    })
}

pub fn perturb_point(
    p: &Problem,
    pair: &MStationaryPair,
    tols: &Tolerances,
) -> Result<PerturbPointJson, Error> {
    let a = active_data(p, &pair.x, tols)?;
    Ok(PerturbPointJson {
        x: pair.x.as_slice().to_vec(),
        support: one_based(&a.i1),
        objective_value: p.objective().value(pair.x.as_slice())?,
        lambda: pair.lambda.clone(),
        mu: pair.mu.clone(),
        gamma: pair.gamma.clone(),
        stationarity_residual: pair.stationarity_residual,
        feasibility_residual: pair.feasibility_residual,
    })
}

/// Note: perturbed rows echo the *perturbed* problem's data; residuals were
/// certified against the perturbed objective during the experiment.
pub fn perturb_section(
    p: &Problem,
    table: &PerturbTable,
    tols: &Tolerances,
) -> Result<PerturbSection, Error> {
    let mut rows = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let mut pts = Vec::with_capacity(row.points.len());
        for pair in &row.points {
            pts.push(perturb_point(p, pair, tols)?);
        }
        rows.push(PerturbRowJson {
            epsilon: row.epsilon,
            points: pts,
            reference_counts: row.reference_counts.clone(),
            bifurcation: row.bifurcation,
        });
    }
    Ok(PerturbSection {
        radius: table.radius,
        rows,
    })
}

pub fn probe_section(stats: &ProbeStats) -> ProbeSection {
    ProbeSection {
        trials: stats.trials,
        successes: stats.successes,
        indeterminate: stats.indeterminate,
        nondegenerate_fraction: stats.fraction,
        failures: stats
            .failures
            .iter()
            .map(|f| ProbeFailureJson {
                trial: f.trial,
                x: f.x.clone(),
                reason: f.reason.clone(),
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Pretty JSON where every float carries 17 significant digits
/// (`{:.16e}`), enough for a bit-exact `f64` round trip. Non-finite values
/// become `null`.
struct SigFigFormatter {
    pretty: PrettyFormatter<'static>,
}

impl SigFigFormatter {
    fn new() -> Self {
        SigFigFormatter {
            pretty: PrettyFormatter::new(),
        }
    }
}

impl Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn begin_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.pretty.begin_array(writer)
    }

    fn end_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.pretty.end_array(writer)
    }

    fn begin_array_value<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.pretty.begin_array_value(writer, first)
    }

    fn end_array_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.pretty.end_array_value(writer)
    }

    fn begin_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.pretty.begin_object(writer)
    }

    fn end_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.pretty.end_object(writer)
    }

    fn begin_object_key<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.pretty.begin_object_key(writer, first)
    }

    fn begin_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.pretty.begin_object_value(writer)
    }

    fn end_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.pretty.end_object_value(writer)
    }
}

pub fn to_json(report: &Report) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigFormatter::new());
    report
        .serialize(&mut ser)
        .expect("report serialization cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serialized JSON is valid UTF-8")
}

fn fmt_vec(v: &[f64]) -> String {
    let inner: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("({})", inner.join(", "))
}

fn fmt_ix(v: &[usize]) -> String {
    let inner: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("{{{}}}", inner.join(", "))
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "-".into(),
    }
}

/// Human-readable rendering of the same data (lower precision; the JSON
/// form is the exchange format).
pub fn to_text(report: &Report) -> String {
    let mut out = String::new();
    let push = |out: &mut String, line: String| {
        out.push_str(&line);
        out.push('\n');
    };
    push(&mut out, format!("ccop {}", report.tool_version));
    push(
        &mut out,
        format!(
            "tolerances: main {:.1e}, zero {:.1e}, active {:.1e}; rng seed {}",
            report.config.tol_main,
            report.config.tol_zero,
            report.config.tol_act,
            report.config.rng_seed
        ),
    );
    push(&mut out, format!("stationary points: {}", report.points.len()));
    for (i, pt) in report.points.iter().enumerate() {
        let c = &pt.classification;
        push(&mut out, format!("point {}:", i + 1));
        push(
            &mut out,
            format!(
                "  x = {}  support {}  f = {:.9e}",
                fmt_vec(&pt.x),
                fmt_ix(&pt.support),
                pt.objective_value
            ),
        );
        push(
            &mut out,
            format!(
                "  lambda = {}  mu = {}  gamma = {}",
                fmt_vec(&pt.lambda),
                fmt_vec(&pt.mu),
                fmt_vec(&pt.gamma)
            ),
        );
        push(
            &mut out,
            format!(
                "  residuals: stationarity {:.3e}, feasibility {:.3e}",
                pt.stationarity_residual, pt.feasibility_residual
            ),
        );
        push(
            &mut out,
            format!(
                "  nd1 {} | nd2 {} | nd3 {} | nd4 {} => nondegenerate {}",
                c.nd1.as_str(),
                c.nd2.as_str(),
                c.nd3.as_str(),
                c.nd4.as_str(),
                c.nondegenerate.as_str()
            ),
        );
        push(
            &mut out,
            format!(
                "  k = {}  qi = {}  m_index = {}  acc = {}  sc = {}  local_min = {}",
                c.k,
                fmt_opt(&c.qi),
                fmt_opt(&c.m_index),
                c.acc,
                c.sc,
                fmt_opt(&c.local_min)
            ),
        );
        let ss_str = |s: &SsStatus| match s {
            SsStatus::Holds => "holds",
            SsStatus::Fails => "fails",
            SsStatus::Indeterminate => "indeterminate",
            SsStatus::HypothesisUnmet => "hypothesis unmet (constraint qualification fails)",
        };
        let ss = match (&c.strong_stability.status, &c.strong_stability.witness) {
            (SsStatus::Fails, Some(w)) => format!("fails ({w:?})"),
            (s, _) => ss_str(s).to_string(),
        };
        push(&mut out, format!("  strong stability: {ss}"));
        let so_str = |s: &SoscStatus| match s {
            SoscStatus::HoldsExact => "holds (exact)",
            SoscStatus::HoldsSampled => "holds (sampled)",
            SoscStatus::FailsWithWitness => "fails (witness)",
            SoscStatus::Indeterminate => "indeterminate",
        };
        push(
            &mut out,
            format!(
                "  sosc: critical cone {}, tangent cone {}",
                so_str(&c.sosc_critical.status),
                so_str(&c.sosc_tangent.status)
            ),
        );
    }
    if let Some(m) = &report.morse {
        push(&mut out, "level sweep:".into());
        for (l, b) in m.sweep.levels.iter().zip(&m.sweep.beta0) {
            push(&mut out, format!("  level {l:.6e}: {b} component(s)"));
        }
        for cr in &m.sweep.crossings {
            push(
                &mut out,
                format!(
                    "  crossing at {:.6e}: observed {} predicted {:?}{}{} [{}]",
                    cr.value,
                    cr.observed_delta,
                    cr.predicted_deltas,
                    if cr.matches { " ok" } else { " VIOLATION" },
                    if cr.coincident { " (coincident)" } else { "" },
                    cr.rule
                ),
            );
        }
        let mp = &m.mountain_pass;
        push(
            &mut out,
            format!(
                "mountain pass: r = {}, r1 = {}, r2 = {}, {} >= {}: {}",
                mp.r, mp.r1, mp.r2, mp.lhs, mp.rhs, mp.holds
            ),
        );
    }
    if let Some(p) = &report.perturb {
        push(&mut out, format!("perturbation (radius {:.3e}):", p.radius));
        for row in &p.rows {
            push(
                &mut out,
                format!(
                    "  epsilon {:.6e}: {} point(s), counts {:?}, bifurcation {}",
                    row.epsilon,
                    row.points.len(),
                    row.reference_counts,
                    row.bifurcation
                ),
            );
            for pt in &row.points {
                push(&mut out, format!("    x = {}", fmt_vec(&pt.x)));
            }
        }
    }
    if let Some(p) = &report.probe {
        push(
            &mut out,
            format!(
                "probe: {} trials, {} nondegenerate, {} indeterminate, fraction {:.6}",
                p.trials, p.successes, p.indeterminate, p.nondegenerate_fraction
            ),
        );
        for f in &p.failures {
            push(
                &mut out,
                format!("  trial {}: x = {} ({})", f.trial, fmt_vec(&f.x), f.reason),
            );
        }
    }
    for n in &report.notes {
        push(&mut out, format!("note: {n}"));
    }
    out
}
