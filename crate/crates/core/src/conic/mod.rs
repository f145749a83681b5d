//! Convex programs over quadratic objectives, linear (in)equalities and
//! second-order cones, solved with an interior-point method.
//!
//! Programs are assembled in the standard form
//! `min 1/2 z'Pz + q'z  s.t.  Gz + s = h,  s in K`
//! where `K` is a product of zero, nonnegative and second-order cones.

pub mod ccbp;
pub mod l1;
pub mod spark;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{CVector, C64};

pub use ccbp::{
    assemble_ccbp, constraint_violation, extract_estimates, solve_ccbp, AmplitudeModel, CcbpEstimate, CcbpProblem,
    CcbpSolution, Extraction,
};
pub use l1::{l1_synthesis, L1Solution};
pub use spark::{spark_bound, SparkMode, SparkReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Feasibility and optimality tolerance promised to callers.
    pub tolerance: f64,
    pub max_iterations: u32,
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tolerance: 1e-6, max_iterations: 200, verbose: false }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::config(format!("solver tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped at reduced accuracy; the point is usable but not certified.
    Inaccurate,
    MaxIter,
    Infeasible,
    /// Numerical breakdown or an unbounded program.
    Failed,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Inaccurate)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Inaccurate => "inaccurate",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Failed => "failed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RawSolution {
    pub z: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: u32,
}

/// Incrementally assembled cone program over `n` real variables.
#[derive(Debug, Clone)]
pub(crate) struct ConeProgram {
    n: usize,
    p_diag: Vec<(usize, f64)>,
    q: Vec<f64>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    h: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl ConeProgram {
    pub fn new(n: usize) -> Self {
        ConeProgram {
            n,
            p_diag: Vec::new(),
            q: vec![0.0; n],
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
            h: Vec::new(),
            cones: Vec::new(),
        }
    }

    pub fn quadratic(&mut self, var: usize, weight: f64) {
        self.p_diag.push((var, weight));
    }

    pub fn linear(&mut self, var: usize, weight: f64) {
        self.q[var] += weight;
    }

    fn push_row(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let r = self.h.len();
        for &(c, v) in terms {
            debug_assert!(c < self.n);
            if v != 0.0 {
                self.rows.push(r);
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.h.push(rhs);
    }

    /// `sum terms = rhs` for each row.
    pub fn equalities(&mut self, rows: impl IntoIterator<Item = (Vec<(usize, f64)>, f64)>) {
        let start = self.h.len();
        for (terms, rhs) in rows {
            self.push_row(&terms, rhs);
        }
        let count = self.h.len() - start;
        if count > 0 {
            self.cones.push(SupportedConeT::ZeroConeT(count));
        }
    }

    /// `Gz = rhs` from sparse `(row, col, value)` triplets with block-local rows.
    pub fn equality_block(&mut self, triplets: &[(usize, usize, f64)], rhs: &[f64]) {
        let start = self.h.len();
        for &(r, c, v) in triplets {
            debug_assert!(r < rhs.len() && c < self.n);
            self.rows.push(start + r);
            self.cols.push(c);
            self.vals.push(v);
        }
        self.h.extend_from_slice(rhs);
        if !rhs.is_empty() {
            self.cones.push(SupportedConeT::ZeroConeT(rhs.len()));
        }
    }

    /// `sum terms <= rhs` for each row.
    pub fn inequalities(&mut self, rows: impl IntoIterator<Item = (Vec<(usize, f64)>, f64)>) {
        let start = self.h.len();
        for (terms, rhs) in rows {
            self.push_row(&terms, rhs);
        }
        let count = self.h.len() - start;
        if count > 0 {
            self.cones.push(SupportedConeT::NonnegativeConeT(count));
        }
    }

    /// `||(e_1, ..., e_k)|| <= e_0` where each entry is `offset + sum coef * z`.
    pub fn second_order(&mut self, entries: &[(Vec<(usize, f64)>, f64)]) {
        for (terms, offset) in entries {
            // s = h - Gz must equal the affine entry.
            let neg: Vec<(usize, f64)> = terms.iter().map(|&(c, v)| (c, -v)).collect();
            self.push_row(&neg, *offset);
        }
        self.cones.push(SupportedConeT::SecondOrderConeT(entries.len()));
    }

    /// Solves at a tenth of the configured tolerance, retrying once at the
    /// tolerance itself when the interior-point iterates stall.
    pub fn solve(&self, cfg: &SolverConfig) -> Result<RawSolution> {
        cfg.validate()?;
        let m = self.h.len();
        let g = CscMatrix::new_from_triplets(m, self.n, self.rows.clone(), self.cols.clone(), self.vals.clone());
        let diag_idx: Vec<usize> = self.p_diag.iter().map(|&(i, _)| i).collect();
        let diag_val: Vec<f64> = self.p_diag.iter().map(|&(_, w)| w).collect();
        let p = CscMatrix::new_from_triplets(self.n, self.n, diag_idx.clone(), diag_idx, diag_val);
        let mut last = None;
        for scale in [0.1, 1.0] {
            let tol = cfg.tolerance * scale;
            let settings = DefaultSettingsBuilder::default()
                .verbose(cfg.verbose)
                .max_iter(cfg.max_iterations)
                .tol_feas(tol)
                .tol_gap_abs(tol)
                .tol_gap_rel(tol)
                .tol_infeas_abs(tol)
                .tol_infeas_rel(tol)
                .build()
                .map_err(|e| Error::Solver(format!("invalid solver settings: {e:?}")))?;
            let mut solver = DefaultSolver::new(&p, &self.q, &g, &self.h, &self.cones, settings)
                .map_err(|e| Error::Solver(format!("{e:?}")))?;
            solver.solve();
            let status = match solver.solution.status {
                SolverStatus::Solved => SolveStatus::Optimal,
                SolverStatus::AlmostSolved => SolveStatus::Inaccurate,
                SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::MaxIter,
                SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
                _ => SolveStatus::Failed,
            };
            log::debug!(
                "cone program {m}x{}: {:?} after {} iterations at tolerance {tol:e}",
                self.n,
                solver.solution.status,
                solver.info.iterations
            );
            let raw = RawSolution {
                z: solver.solution.x.clone(),
                status,
                objective: solver.solution.obj_val,
                iterations: solver.info.iterations,
            };
            if status != SolveStatus::Failed {
                return Ok(raw);
            }
            last = Some(raw);
        }
        Ok(last.expect("at least one attempt"))
    }
}

/// Real-valued column pair `[Re; Im]` of `w * phase`.
pub(crate) fn realify(w: &CVector, phase: C64, row_offset: usize, col: usize, out: &mut Vec<(usize, usize, f64)>) {
    let m = w.len();
    for (i, z) in w.iter().enumerate() {
        let z = z * phase;
        if z.re != 0.0 {
            out.push((row_offset + i, col, z.re));
        }
        if z.im != 0.0 {
            out.push((row_offset + m + i, col, z.im));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_socp_matches_closed_form() {
        // min (z0 - 3)^2 + z1  s.t. ||z0|| <= z1  ->  z0 = 2.5, z1 = 2.5
        let mut prog = ConeProgram::new(3);
        prog.quadratic(2, 2.0);
        prog.linear(1, 1.0);
        prog.equalities([(vec![(0, 1.0), (2, 1.0)], 3.0)]);
        prog.second_order(&[(vec![(1, 1.0)], 0.0), (vec![(0, 1.0)], 0.0)]);
        let sol = prog.solve(&SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.z[0] - 2.5).abs() < 1e-6 && (sol.z[1] - 2.5).abs() < 1e-6);
    }

    #[test]
    fn infeasibility_is_reported() {
        let mut prog = ConeProgram::new(1);
        prog.linear(0, 1.0);
        prog.inequalities([(vec![(0, 1.0)], -1.0), (vec![(0, -1.0)], -1.0)]);
        assert_eq!(prog.solve(&SolverConfig::default()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = SolverConfig { tolerance: 0.0, ..Default::default() };
        assert!(ConeProgram::new(1).solve(&cfg).is_err());
    }
}
