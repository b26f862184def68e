//! Helpers shared by the integration-test binaries.
#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Instant;

use ccop::model::{MStationaryPair, Problem, Tolerances};
use ccop::stationarity::{solve_all, SolveConfig};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn load(name: &str) -> Problem {
    Problem::load(&fixture(name)).unwrap_or_else(|e| panic!("loading {name}: {e}"))
}

pub fn tols() -> Tolerances {
    Tolerances::uniform(1e-8)
}

pub fn solve(p: &Problem) -> Vec<MStationaryPair> {
    solve_all(p, &SolveConfig::default(), &tols())
        .expect("solve")
        .points
}

/// Find the solved point whose 1-based support equals `support`.
pub fn point_with_support<'a>(
    points: &'a [MStationaryPair],
    support: &[usize],
    tol_zero: f64,
) -> &'a MStationaryPair {
    points
        .iter()
        .find(|pt| {
            let sup: Vec<usize> = pt
                .x
                .iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > tol_zero)
                .map(|(i, _)| i + 1)
                .collect();
            sup == support
        })
        .unwrap_or_else(|| panic!("no point with support {support:?}"))
}

/// Does `pt` minimize the objective over a small feasibility-respecting grid
/// ball of radius `rho`? Disagreements with the M-index signal a broken
/// classification.
pub fn grid_local_min_oracle(p: &Problem, pt: &MStationaryPair, rho: f64) -> bool {
    let n = p.n();
    let f0 = p.objective().value(pt.x.as_slice()).unwrap();
    let offsets = [-2i32, -1, 0, 1, 2];
    let mut idx = vec![0usize; n];
    loop {
        let y: Vec<f64> = (0..n)
            .map(|i| pt.x[i] + offsets[idx[i]] as f64 * (rho / 2.0))
            .collect();
        let card = y.iter().filter(|v| v.abs() > 1e-8).count();
        let yv = nalgebra::DVector::from_column_slice(&y);
        let feasible = card <= p.s()
            && p.in_box(&yv, 0.0)
            && p.equalities()
                .iter()
                .all(|h| h.value(&y).unwrap().abs() <= 1e-8)
            && p.inequalities()
                .iter()
                .all(|g| g.value(&y).unwrap() >= -1e-8);
        if feasible && p.objective().value(&y).unwrap() < f0 - 1e-12 * f0.abs().max(1.0) {
            return false;
        }
        // Mixed-radix increment over the offset grid.
        let mut axis = 0;
        loop {
            if axis == n {
                return true;
            }
            idx[axis] += 1;
            if idx[axis] < offsets.len() {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// Emits `acceptance <name>: PASS` when defused via `pass()`, `FAIL` when the
/// test panics first (the drop runs during unwinding).
pub struct Gate {
    name: &'static str,
    start: Instant,
    passed: bool,
}

impl Gate {
    pub fn new(name: &'static str) -> Self {
        Gate {
            name,
            start: Instant::now(),
            passed: false,
        }
    }

    pub fn elapsed_secs(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    /// Asserts the runtime bound and defuses the failure line.
    pub fn pass_within(mut self, seconds: f64) {
        let dt = self.elapsed_secs();
        assert!(
            dt < seconds,
            "criterion {} exceeded its runtime bound: {dt:.1}s >= {seconds}s",
            self.name
        );
        self.passed = true;
        println!("acceptance {}: PASS ({dt:.2}s)", self.name);
    }

    pub fn pass(mut self) {
        self.passed = true;
        println!("acceptance {}: PASS ({:.2}s)", self.name, self.elapsed_secs());
    }
}

impl Drop for Gate {
    fn drop(&mut self) {
        if !self.passed {
            println!("acceptance {}: FAIL", self.name);
        }
    }
}
