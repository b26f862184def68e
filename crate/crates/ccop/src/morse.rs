//! Desk-scale landscape analysis on the sparsity variety.
//!
//! The feasible set of a cardinality-constrained problem is a union of
//! coordinate subspaces intersected with the smooth constraints. This module
//! discretizes that union — one grid per admissible support, glued along
//! shared sub-supports — and counts connected components of lower level sets
//! `{f <= level}` with a union-find pass. Component counts across a sweep of
//! levels are then checked against the transition rules for nondegenerate
//! stationary points (a minimizer adds a component; an index-1 point can
//! only merge a bounded number of them), and the global mountain-pass
//! inequality `r1 + (n-s)*r2 >= r - 1` is evaluated from the index counts.
//!
//! Everything here assumes a compact feasible set (asserted by the problem
//! file, not verifiable from point data) and desk scale: `n <= 4` and grids
//! small enough to enumerate exhaustively.

use std::collections::HashMap;

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::expr::ExprError;
use crate::model::{k_subsets, Problem, Tolerances};

#[derive(Debug, Error)]
pub enum MorseError {
    #[error(
        "the problem does not assert a compact feasible set; set compact_feasible = true \
         after checking that the constraints bound every admissible support"
    )]
    NotCompact,
    #[error("level-set scans are limited to n <= 4 variables (got n = {n})")]
    DimensionTooLarge { n: usize },
    #[error("grid must have at least 3 nodes per axis (got {grid})")]
    GridTooSmall { grid: usize },
    #[error("a support grid would need {nodes} nodes; lower grid_per_axis")]
    GridTooLarge { nodes: u128 },
    #[error(
        "grid too coarse at level {level}: a component has only {nodes} node(s); \
         increase grid_per_axis"
    )]
    GridTooCoarse { level: f64, nodes: usize },
    #[error("nondegeneracy required: {context}")]
    Degenerate { context: String },
    #[error("invalid levels: {0}")]
    InvalidLevels(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

// ---------------------------------------------------------------------------
// Discretized variety
// ---------------------------------------------------------------------------

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

/// Canonical node identity: (axis, grid index) pairs for the coordinates
/// that are numerically nonzero. Nodes shared between support grids reduce
/// to the same key, which realizes the gluing of the union of subspaces.
type NodeKey = Vec<(u8, u32)>;

struct SupportScan {
    keys: Vec<NodeKey>,
    fvals: Vec<f64>,
    edges: Vec<(u32, u32)>,
}

/// The discretized sparsity variety inside the box: feasible grid nodes
/// (equalities within the band, inequalities above `-band`) over every
/// support of size at most `s`, glued along shared sub-supports, with
/// grid-adjacency edges. Objective values are stored per node so that lower
/// level sets at many levels reuse one scan.
pub struct VarietyGrid {
    node_f: Vec<f64>,
    edges: Vec<(u32, u32)>,
    band: f64,
}

impl VarietyGrid {
    pub fn build(p: &Problem, grid_per_axis: usize, tols: &Tolerances) -> Result<Self, MorseError> {
        if !p.compact_feasible() {
            return Err(MorseError::NotCompact);
        }
        if p.n() > 4 {
            return Err(MorseError::DimensionTooLarge { n: p.n() });
        }
        if grid_per_axis < 3 {
            return Err(MorseError::GridTooSmall {
                grid: grid_per_axis,
            });
        }
        let n = p.n();
        let grid = grid_per_axis;
        let steps: Vec<f64> = p
            .box_bounds()
            .iter()
            .map(|b| (b[1] - b[0]) / (grid - 1) as f64)
            .collect();
        let band = band_width(p, &steps)?;
        let mut supports: Vec<Vec<usize>> = Vec::new();
        let all: Vec<usize> = (0..n).collect();
        for size in 0..=p.s() {
            supports.extend(k_subsets(&all, size));
        }
        for j in &supports {
            let nodes = (grid as u128).pow(j.len() as u32);
            if nodes > 60_000_000 {
                return Err(MorseError::GridTooLarge { nodes });
            }
        }
        let scans: Vec<SupportScan> = supports
            .par_iter()
            .map(|j| scan_support(p, j, grid, &steps, band, tols))
            .collect::<Result<_, MorseError>>()?;
        // Sequential gluing pass: identical keys across supports are one node.
        let mut ids: HashMap<NodeKey, u32> = HashMap::new();
        let mut node_f: Vec<f64> = Vec::new();
        let mut edges: Vec<(u32, u32)> = Vec::new();
        for scan in &scans {
            let mut local_to_global = Vec::with_capacity(scan.keys.len());
            for (key, &f) in scan.keys.iter().zip(&scan.fvals) {
                let id = *ids.entry(key.clone()).or_insert_with(|| {
                    node_f.push(f);
                    (node_f.len() - 1) as u32
                });
                local_to_global.push(id);
            }
            for &(a, b) in &scan.edges {
                let (ga, gb) = (local_to_global[a as usize], local_to_global[b as usize]);
                edges.push((ga.min(gb), ga.max(gb)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(VarietyGrid {
            node_f,
            edges,
            band,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_f.len()
    }

    pub fn band(&self) -> f64 {
        self.band
    }

    /// Connected components of `{f <= level}` on the glued grid. Errors when
    /// a component has fewer than 3 nodes: at that size the discretization
    /// cannot distinguish a component from noise.
    pub fn components_at(&self, level: f64) -> Result<usize, MorseError> {
        let mut uf = UnionFind::new(self.node_f.len());
        let active = |i: u32| self.node_f[i as usize] <= level;
        for &(a, b) in &self.edges {
            if active(a) && active(b) {
                uf.union(a, b);
            }
        }
        let mut sizes: HashMap<u32, usize> = HashMap::new();
        for i in 0..self.node_f.len() as u32 {
            if active(i) {
                *sizes.entry(uf.find(i)).or_insert(0) += 1;
            }
        }
        if let Some(&nodes) = sizes.values().find(|&&c| c < 3) {
            return Err(MorseError::GridTooCoarse { level, nodes });
        }
        Ok(sizes.len())
    }
}

/// Feasibility band for grid thresholding: twice the largest grid step times
/// a coarse bound on the constraint gradients over the box (floored at 1).
/// A node within the band of a constraint surface cannot be distinguished
/// from a point on it at this resolution.
fn band_width(p: &Problem, steps: &[f64]) -> Result<f64, MorseError> {
    if p.equalities().is_empty() && p.inequalities().is_empty() {
        return Ok(0.0);
    }
    let n = p.n();
    let coarse = 9usize;
    let mut bound = 1.0f64;
    let total = (coarse as u64).pow(n as u32);
    let mut x = DVector::zeros(n);
    for lin in 0..total {
        let mut rest = lin;
        for i in 0..n {
            let t = (rest % coarse as u64) as f64;
            rest /= coarse as u64;
            let b = p.box_bounds()[i];
            x[i] = b[0] + t * (b[1] - b[0]) / (coarse - 1) as f64;
        }
        let xs = x.as_slice();
        for c in p.equalities().iter().chain(p.inequalities()) {
            bound = bound.max(c.gradient(xs)?.norm());
        }
    }
    let max_step = steps.iter().fold(0.0f64, |m, s| m.max(*s));
    Ok(2.0 * max_step * bound)
}

fn scan_support(
    p: &Problem,
    j: &[usize],
    grid: usize,
    steps: &[f64],
    band: f64,
    tols: &Tolerances,
) -> Result<SupportScan, MorseError> {
    let d = j.len();
    let total: usize = grid.pow(d as u32);
    let mut strides = vec![1usize; d];
    for a in 1..d {
        strides[a] = strides[a - 1] * grid;
    }
    let mut local_of: Vec<u32> = vec![u32::MAX; total.max(1)];
    let mut keys = Vec::new();
    let mut fvals = Vec::new();
    let mut edges = Vec::new();
    let mut x = DVector::zeros(p.n());
    for lin in 0..total.max(1) {
        if d == 0 && lin > 0 {
            break;
        }
        x.fill(0.0);
        let mut key: NodeKey = Vec::with_capacity(d);
        for (a, &axis) in j.iter().enumerate() {
            let t = (lin / strides[a]) % grid;
            let v = p.box_bounds()[axis][0] + t as f64 * steps[axis];
            x[axis] = v;
            if v.abs() > tols.zero {
                key.push((axis as u8, t as u32));
            }
        }
        let xs = x.as_slice();
        let mut ok = true;
        for h in p.equalities() {
            if h.value(xs)?.abs() > band {
                ok = false;
                break;
            }
        }
        if ok {
            for g in p.inequalities() {
                if g.value(xs)? < -band {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let f = p.objective().value(xs)?;
        let local = keys.len() as u32;
        local_of[lin] = local;
        keys.push(key);
        fvals.push(f);
        // Backward neighbors along each axis are already scanned.
        for (a, _) in j.iter().enumerate() {
            let t = (lin / strides[a]) % grid;
            if t > 0 {
                let prev = local_of[lin - strides[a]];
                if prev != u32::MAX {
                    edges.push((prev, local));
                }
            }
        }
    }
    Ok(SupportScan { keys, fvals, edges })
}

/// Component count of the lower level set `{x feasible : f(x) <= level}` on
/// a fresh grid. Level sweeps should build a [`VarietyGrid`] once instead.
pub fn lower_level_components(
    p: &Problem,
    level: f64,
    grid_per_axis: usize,
    tols: &Tolerances,
) -> Result<usize, MorseError> {
    VarietyGrid::build(p, grid_per_axis, tols)?.components_at(level)
}

// ---------------------------------------------------------------------------
// Level sweeps and transition rules
// ---------------------------------------------------------------------------

/// Per-point data the sweep needs: objective value, M-index (None for a
/// degenerate point, which the sweep rejects), and support size.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub value: f64,
    pub m_index: Option<usize>,
    pub k: usize,
}

/// Relative tolerance for treating two stationary values as one crossing.
const VALUE_GROUP_RTOL: f64 = 1e-6;

fn group_stationary_values(points: &[SweepPoint]) -> Vec<(f64, Vec<usize>)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].value.total_cmp(&points[b].value));
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for idx in order {
        let v = points[idx].value;
        match groups.last_mut() {
            Some((gv, members)) if (v - *gv).abs() <= VALUE_GROUP_RTOL * gv.abs().max(1.0) => {
                members.push(idx);
            }
            _ => groups.push((v, vec![idx])),
        }
    }
    groups
}

/// Sweep levels bracketing the stationary values: one level below the
/// smallest, the midpoint of every consecutive pair, one above the largest.
/// The margin is half the smallest gap (or 0.5 relative units for a single
/// value), so every stationary value sits strictly between two levels.
pub fn auto_levels(points: &[SweepPoint]) -> Result<Vec<f64>, MorseError> {
    let groups = group_stationary_values(points);
    if groups.is_empty() {
        return Err(MorseError::InvalidLevels(
            "no stationary values to bracket".into(),
        ));
    }
    let values: Vec<f64> = groups.iter().map(|(v, _)| *v).collect();
    let margin = if values.len() >= 2 {
        values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::MAX, f64::min)
            / 2.0
    } else {
        0.5 * values[0].abs().max(1.0)
    };
    let mut levels = Vec::with_capacity(values.len() + 1);
    levels.push(values[0] - margin);
    for w in values.windows(2) {
        levels.push((w[0] + w[1]) / 2.0);
    }
    levels.push(values[values.len() - 1] + margin);
    Ok(levels)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Crossing {
    /// Representative stationary value inside the bracket.
    pub value: f64,
    pub below_level: f64,
    pub above_level: f64,
    pub beta0_below: usize,
    pub beta0_above: usize,
    /// Indices into the sweep's point list (solver order).
    pub point_indices: Vec<usize>,
    /// Human-readable statement of the applicable transition rule.
    pub rule: String,
    /// Admissible component deltas (sum over all points in the bracket).
    pub predicted_deltas: Vec<i64>,
    pub observed_delta: i64,
    pub matches: bool,
    /// More than one stationary point crosses in this bracket, so the
    /// per-point attribution of the observed delta is ambiguous.
    pub coincident: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct LevelSweepReport {
    pub grid_per_axis: usize,
    pub band: f64,
    pub levels: Vec<f64>,
    pub beta0: Vec<usize>,
    pub crossings: Vec<Crossing>,
    /// Level intervals with no stationary value where the component count
    /// changed anyway (a discretization artifact when nonempty).
    pub plateau_violations: Vec<[f64; 2]>,
    /// Points whose value lies outside the sampled level range.
    pub uncovered_points: Vec<usize>,
    /// Some crossing was coincident: verdicts for it are aggregate only.
    pub indeterminate: bool,
    pub all_rules_match: bool,
}

fn transition_rule(n: usize, s: usize, pt: &SweepPoint) -> (String, Vec<i64>) {
    match pt.m_index {
        Some(0) => ("minimizer: adds one component".into(), vec![1]),
        Some(1) if pt.k == s => (
            "index 1 at full support: merges at most one pair".into(),
            vec![-1, 0],
        ),
        Some(1) if pt.k + 1 == s => (
            format!("index 1 with one-deficient support: joins up to n-s = {} components", n - s),
            (-((n - s) as i64)..=0).collect(),
        ),
        _ => ("index >= 2: no component-count change".into(), vec![0]),
    }
}

fn minkowski(sets: &[Vec<i64>]) -> Vec<i64> {
    let mut acc: Vec<i64> = vec![0];
    for s in sets {
        let mut next: Vec<i64> = acc
            .iter()
            .flat_map(|a| s.iter().map(move |b| a + b))
            .collect();
        next.sort_unstable();
        next.dedup();
        acc = next;
    }
    acc
}

pub fn level_sweep(
    p: &Problem,
    points: &[SweepPoint],
    levels: Option<&[f64]>,
    grid_per_axis: usize,
    tols: &Tolerances,
) -> Result<LevelSweepReport, MorseError> {
    for (i, pt) in points.iter().enumerate() {
        if pt.m_index.is_none() {
            return Err(MorseError::Degenerate {
                context: format!("stationary point {} in the level sweep", i + 1),
            });
        }
    }
    let levels: Vec<f64> = match levels {
        Some(ls) => {
            if ls.is_empty() {
                return Err(MorseError::InvalidLevels("empty level list".into()));
            }
            if ls.windows(2).any(|w| w[1] <= w[0]) {
                return Err(MorseError::InvalidLevels(
                    "levels must be strictly increasing".into(),
                ));
            }
            ls.to_vec()
        }
        None => auto_levels(points)?,
    };
    // A stationary value on a sampled level makes the bracket attribution
    // ill-posed; refuse rather than guess.
    for pt in points {
        for &l in &levels {
            if (pt.value - l).abs() <= VALUE_GROUP_RTOL * l.abs().max(1.0) {
                return Err(MorseError::InvalidLevels(format!(
                    "level {l} coincides with the stationary value {}",
                    pt.value
                )));
            }
        }
    }
    let grid = VarietyGrid::build(p, grid_per_axis, tols)?;
    let beta0 = levels
        .iter()
        .map(|&l| grid.components_at(l))
        .collect::<Result<Vec<_>, _>>()?;
    let groups = group_stationary_values(points);
    let mut crossings = Vec::new();
    let mut plateau_violations = Vec::new();
    for w in 0..levels.len() - 1 {
        let (lo, hi) = (levels[w], levels[w + 1]);
        let members: Vec<usize> = groups
            .iter()
            .filter(|(v, _)| *v > lo && *v < hi)
            .flat_map(|(_, m)| m.iter().copied())
            .collect();
        let observed = beta0[w + 1] as i64 - beta0[w] as i64;
        if members.is_empty() {
            if observed != 0 {
                plateau_violations.push([lo, hi]);
            }
            continue;
        }
        let rules: Vec<(String, Vec<i64>)> = members
            .iter()
            .map(|&i| transition_rule(p.n(), p.s(), &points[i]))
            .collect();
        let predicted = minkowski(&rules.iter().map(|(_, d)| d.clone()).collect::<Vec<_>>());
        let rule = rules
            .iter()
            .map(|(r, _)| r.as_str())
            .collect::<Vec<_>>()
            .join(" + ");
        crossings.push(Crossing {
            value: points[members[0]].value,
            below_level: lo,
            above_level: hi,
            beta0_below: beta0[w],
            beta0_above: beta0[w + 1],
            matches: predicted.contains(&observed),
            coincident: members.len() > 1,
            point_indices: members,
            rule,
            predicted_deltas: predicted,
            observed_delta: observed,
        });
    }
    let lo = levels[0];
    let hi = levels[levels.len() - 1];
    let uncovered_points: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].value <= lo || points[i].value >= hi)
        .collect();
    let indeterminate = crossings.iter().any(|c| c.coincident);
    let all_rules_match =
        crossings.iter().all(|c| c.matches) && plateau_violations.is_empty();
    Ok(LevelSweepReport {
        grid_per_axis,
        band: grid.band(),
        levels,
        beta0,
        crossings,
        plateau_violations,
        uncovered_points,
        indeterminate,
        all_rules_match,
    })
}

// ---------------------------------------------------------------------------
// Cell attachment and the mountain-pass inequality
// ---------------------------------------------------------------------------

/// Cells attached to the lower level set when a nondegenerate stationary
/// point is crossed: `binom(n-k-1, s-k)` cells of dimension `s-k+qi`, one
/// per index set `J` in `{1..n-k}` with `1` in `J` and `|J| = s-k+1`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CellAttachment {
    pub count: usize,
    pub dim: usize,
    /// 1-based label sets into `{1..n-k}` enumerating the cells.
    pub simplex_supports: Vec<Vec<usize>>,
}

pub fn attached_cells(
    n: usize,
    s: usize,
    k: usize,
    qi: Option<usize>,
) -> Result<CellAttachment, MorseError> {
    let Some(qi) = qi else {
        return Err(MorseError::Degenerate {
            context: "cell attachment".into(),
        });
    };
    // k <= s < n for any feasible stationary point.
    let rest: Vec<usize> = (2..=n - k).collect();
    let simplex_supports: Vec<Vec<usize>> = k_subsets(&rest, s - k)
        .into_iter()
        .map(|tail| {
            let mut j = Vec::with_capacity(s - k + 1);
            j.push(1);
            j.extend(tail);
            j
        })
        .collect();
    Ok(CellAttachment {
        count: simplex_supports.len(),
        dim: s - k + qi,
        simplex_supports,
    })
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct MountainPass {
    /// Number of nondegenerate minimizers (M-index 0).
    pub r: usize,
    /// Index-1 points at full support.
    pub r1: usize,
    /// Index-1 points with support one short of full.
    pub r2: usize,
    pub lhs: i64,
    pub rhs: i64,
    pub holds: bool,
}

/// `r1 + (n-s)*r2 >= r - 1` for a compact connected feasible set whose
/// stationary points are all nondegenerate.
pub fn mountain_pass_check(
    n: usize,
    s: usize,
    points: &[SweepPoint],
) -> Result<MountainPass, MorseError> {
    let mut r = 0usize;
    let mut r1 = 0usize;
    let mut r2 = 0usize;
    for (i, pt) in points.iter().enumerate() {
        let Some(mi) = pt.m_index else {
            return Err(MorseError::Degenerate {
                context: format!("stationary point {} in the mountain-pass count", i + 1),
            });
        };
        match mi {
            0 => r += 1,
            1 if pt.k == s => r1 += 1,
            1 if pt.k + 1 == s => r2 += 1,
            _ => {}
        }
    }
    let lhs = r1 as i64 + (n - s) as i64 * r2 as i64;
    let rhs = r as i64 - 1;
    Ok(MountainPass {
        r,
        r1,
        r2,
        lhs,
        rhs,
        holds: lhs >= rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn compact_two_minima() -> Problem {
        Problem::from_toml_str(
            r#"
n = 2
s = 1
objective = "(x1-1)^2 + (x2-1)^2"
inequalities = ["9 - x1^2 - x2^2"]
box = [[-3.5, 3.5], [-3.5, 3.5]]
compact_feasible = true
"#,
        )
        .unwrap()
    }

    fn its_points() -> Vec<SweepPoint> {
        vec![
            SweepPoint {
                value: 1.0,
                m_index: Some(0),
                k: 1,
            },
            SweepPoint {
                value: 1.0,
                m_index: Some(0),
                k: 1,
            },
            SweepPoint {
                value: 2.0,
                m_index: Some(1),
                k: 0,
            },
        ]
    }

    #[test]
    fn component_counts_across_levels() {
        let p = compact_two_minima();
        let tols = Tolerances::default();
        let grid = VarietyGrid::build(&p, 401, &tols).unwrap();
        assert_eq!(grid.components_at(0.5).unwrap(), 0);
        assert_eq!(grid.components_at(1.5).unwrap(), 2);
        assert_eq!(grid.components_at(2.5).unwrap(), 1);
    }

    #[test]
    fn component_counts_stable_under_refinement() {
        let p = compact_two_minima();
        let tols = Tolerances::default();
        for g in [201, 401] {
            let grid = VarietyGrid::build(&p, g, &tols).unwrap();
            assert_eq!(grid.components_at(1.5).unwrap(), 2, "grid {g}");
            assert_eq!(grid.components_at(2.5).unwrap(), 1, "grid {g}");
        }
    }

    #[test]
    fn tiny_island_is_flagged_as_too_coarse() {
        let p = compact_two_minima();
        let tols = Tolerances::default();
        let grid = VarietyGrid::build(&p, 401, &tols).unwrap();
        // Just above the minimum value the sublevel set around (1,0) contains
        // a single grid node.
        match grid.components_at(1.0002) {
            Err(MorseError::GridTooCoarse { nodes, .. }) => assert!(nodes < 3),
            other => panic!("expected GridTooCoarse, got {other:?}"),
        }
    }

    #[test]
    fn compactness_flag_is_required() {
        let p = Problem::from_toml_str(
            r#"
n = 2
s = 1
objective = "(x1-1)^2 + (x2-1)^2"
box = [[-3.0, 3.0], [-3.0, 3.0]]
"#,
        )
        .unwrap();
        match lower_level_components(&p, 1.5, 101, &Tolerances::default()) {
            Err(MorseError::NotCompact) => {}
            other => panic!("expected NotCompact, got {other:?}"),
        }
    }

    #[test]
    fn auto_levels_bracket_every_value() {
        let levels = auto_levels(&its_points()).unwrap();
        assert_eq!(levels, vec![0.5, 1.5, 2.5]);
    }

    #[test]
    fn sweep_observes_the_transition_rules() {
        let p = compact_two_minima();
        let report = level_sweep(&p, &its_points(), None, 401, &Tolerances::default()).unwrap();
        assert_eq!(report.levels, vec![0.5, 1.5, 2.5]);
        assert_eq!(report.beta0, vec![0, 2, 1]);
        assert_eq!(report.crossings.len(), 2);
        let first = &report.crossings[0];
        assert_eq!(first.point_indices, vec![0, 1]);
        assert_eq!(first.predicted_deltas, vec![2]);
        assert_eq!(first.observed_delta, 2);
        assert!(first.matches && first.coincident);
        let second = &report.crossings[1];
        assert_eq!(second.point_indices, vec![2]);
        assert_eq!(second.predicted_deltas, vec![-1, 0]);
        assert_eq!(second.observed_delta, -1);
        assert!(second.matches && !second.coincident);
        assert!(report.all_rules_match);
        assert!(report.indeterminate); // the two minima share a value
        assert!(report.plateau_violations.is_empty());
        assert!(report.uncovered_points.is_empty());
    }

    #[test]
    fn sweep_rejects_degenerate_points() {
        let p = compact_two_minima();
        let pts = vec![SweepPoint {
            value: 1.0,
            m_index: None,
            k: 1,
        }];
        match level_sweep(&p, &pts, None, 101, &Tolerances::default()) {
            Err(MorseError::Degenerate { .. }) => {}
            other => panic!("expected Degenerate, got {other:?}"),
        }
    }

    #[test]
    fn attached_cell_combinatorics() {
        // One-deficient support in the plane: a single 1-cell.
        let c = attached_cells(2, 1, 0, Some(0)).unwrap();
        assert_eq!((c.count, c.dim), (1, 1));
        assert_eq!(c.simplex_supports, vec![vec![1, 2]]);
        // Full support: always exactly one cell of dimension qi.
        let c = attached_cells(2, 1, 1, Some(0)).unwrap();
        assert_eq!((c.count, c.dim), (1, 0));
        assert_eq!(c.simplex_supports, vec![vec![1]]);
        let c = attached_cells(3, 2, 2, Some(1)).unwrap();
        assert_eq!((c.count, c.dim), (1, 1));
        // Two-deficient support in dimension four.
        let c = attached_cells(4, 2, 0, Some(0)).unwrap();
        assert_eq!((c.count, c.dim), (3, 2));
        assert_eq!(
            c.simplex_supports,
            vec![vec![1, 2, 3], vec![1, 2, 4], vec![1, 3, 4]]
        );
        assert!(attached_cells(2, 1, 0, None).is_err());
    }

    #[test]
    fn mountain_pass_counts() {
        let mp = mountain_pass_check(2, 1, &its_points()).unwrap();
        assert_eq!((mp.r, mp.r1, mp.r2), (2, 0, 1));
        assert_eq!((mp.lhs, mp.rhs), (1, 1));
        assert!(mp.holds);
        // A single minimizer satisfies the inequality trivially.
        let single = vec![SweepPoint {
            value: 0.0,
            m_index: Some(0),
            k: 1,
        }];
        let mp = mountain_pass_check(2, 1, &single).unwrap();
        assert_eq!((mp.r, mp.lhs, mp.rhs), (1, 0, 0));
        assert!(mp.holds);
    }
}
