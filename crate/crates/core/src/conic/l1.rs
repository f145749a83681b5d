//! Complex l1 synthesis: `min ||x||_1  s.t.  ||A D x - y||_2 <= epsilon`.

use super::{realify, ConeProgram, SolveStatus, SolverConfig};
use crate::dictionary::ParametricDictionary;
use crate::error::{Error, Result};
use crate::sensing::MeasurementOperator;
use crate::signal::{CMatrix, CVector, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct L1Solution {
    pub x: CVector,
    pub status: SolveStatus,
    /// `||A D x - y||_2` at the returned point.
    pub residual_norm: f64,
    pub iterations: u32,
}

pub fn l1_synthesis(
    op: &MeasurementOperator,
    dict: &ParametricDictionary,
    y: &CVector,
    epsilon: f64,
    cfg: &SolverConfig,
) -> Result<L1Solution> {
    if dict.signal_len() != op.cols() {
        return Err(Error::dim(format!(
            "dictionary has {} samples, operator expects {}",
            dict.signal_len(),
            op.cols()
        )));
    }
    let sensed = op.apply_matrix(dict.atoms())?;
    l1_with_matrix(&sensed, y, epsilon, cfg)
}

pub(crate) fn l1_with_matrix(sensed: &CMatrix, y: &CVector, epsilon: f64, cfg: &SolverConfig) -> Result<L1Solution> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::domain(format!("epsilon must be finite and nonnegative, got {epsilon}")));
    }
    let (m, p) = sensed.shape();
    if y.len() != m {
        return Err(Error::dim(format!("{} measurements against {} rows", y.len(), m)));
    }
    // z = [Re x | Im x | t | r]
    let with_slack = epsilon > 0.0;
    let (t0, r0) = (2 * p, 3 * p);
    let mut prog = ConeProgram::new(3 * p + if with_slack { 2 * m } else { 0 });
    let mut trip = Vec::new();
    for j in 0..p {
        let col = sensed.column(j).into_owned();
        realify(&col, C64::new(1.0, 0.0), 0, j, &mut trip);
        realify(&col, C64::new(0.0, 1.0), 0, p + j, &mut trip);
        prog.linear(t0 + j, 1.0);
    }
    if with_slack {
        trip.extend((0..2 * m).map(|i| (i, r0 + i, 1.0)));
    }
    let rhs: Vec<f64> = y.iter().map(|z| z.re).chain(y.iter().map(|z| z.im)).collect();
    prog.equality_block(&trip, &rhs);
    for j in 0..p {
        prog.second_order(&[(vec![(t0 + j, 1.0)], 0.0), (vec![(j, 1.0)], 0.0), (vec![(p + j, 1.0)], 0.0)]);
    }
    if with_slack {
        let mut entries = vec![(vec![], epsilon)];
        entries.extend((0..2 * m).map(|i| (vec![(r0 + i, 1.0)], 0.0)));
        prog.second_order(&entries);
    }
    let raw = prog.solve(cfg)?;
    let x = CVector::from_iterator(p, (0..p).map(|j| C64::new(raw.z[j], raw.z[p + j])));
    let residual_norm = (sensed * &x - y).norm();
    Ok(L1Solution { x, status: raw.status, residual_norm, iterations: raw.iterations })
}
