use std::time::Instant;

use super::{run_bomp, EstimationResult, EstimatorConfig};
use crate::conic::{assemble_ccbp, constraint_violation, extract_estimates, solve_ccbp, Extraction, SolveStatus};
use crate::dictionary::{ArcBasisSet, ParametricDictionary};
use crate::error::{Error, Result};
use crate::sensing::MeasurementOperator;
use crate::signal::{circular_distance, CVector, C64};

struct Outcome {
    extraction: Option<Extraction>,
    status: SolveStatus,
    violation: Option<f64>,
}

fn solve_over(
    y: &CVector,
    op: &MeasurementOperator,
    dict: &ParametricDictionary,
    arcs: &ArcBasisSet,
    omega: &[usize],
    cfg: &EstimatorConfig,
) -> Result<Outcome> {
    if arcs.len() != dict.len() {
        return Err(Error::dim(format!("{} arc frames for {} atoms", arcs.len(), dict.len())));
    }
    let period = dict.is_circular().then(|| dict.period());
    let problem = assemble_ccbp(arcs, omega, op, y, cfg.lambda, cfg.sigma_sq, cfg.zeta, period)?;
    let solution = solve_ccbp(&problem, &cfg.solver)?;
    if !solution.status.has_solution() {
        log::warn!("CCBP over {} atoms ended with status {}", omega.len(), solution.status);
        return Ok(Outcome { extraction: None, status: solution.status, violation: None });
    }
    let violation = constraint_violation(&problem, &solution);
    Ok(Outcome {
        extraction: Some(extract_estimates(&solution, &problem, cfg.k)),
        status: solution.status,
        violation: Some(violation),
    })
}

/// CCBP over every atom of the grid.
///
/// When the solve fails or leaves fewer than `K` active atoms, the missing
/// components are filled from a BOMP run and the result is flagged.
pub fn run_ccbp(
    y: &CVector,
    op: &MeasurementOperator,
    dict: &ParametricDictionary,
    arcs: &ArcBasisSet,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    cfg.validate()?;
    let start = Instant::now();
    let omega: Vec<usize> = (0..dict.len()).collect();
    let outcome = solve_over(y, op, dict, arcs, &omega, cfg)?;
    let (mut b_hat, mut a_hat) = (Vec::new(), Vec::new());
    let mut complete = false;
    if let Some(ex) = &outcome.extraction {
        for e in &ex.estimates {
            b_hat.push(e.b_hat);
            a_hat.push(e.a_hat);
        }
        complete = !ex.incomplete;
    }
    if !complete {
        let greedy = run_bomp(y, op, dict, cfg)?;
        for (&b, &a) in greedy.b_hat.iter().zip(&greedy.a_hat) {
            if b_hat.len() >= cfg.k {
                break;
            }
            if b_hat.iter().all(|&known| distance(dict, known, b) > dict.spacing()) {
                b_hat.push(b);
                a_hat.push(a);
            }
        }
    }
    let mut out = EstimationResult::from_estimates(dict, b_hat, a_hat);
    out.diagnostics.solver_status = Some(outcome.status);
    out.diagnostics.constraint_violation = outcome.violation;
    out.diagnostics.greedy_fallback = !complete;
    out.elapsed = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Re-estimates a greedy result with CCBP over the greedy atoms and `xi`
/// neighbors on each side. Keeps the greedy estimates, flagged, when the solve
/// does not produce `K` components.
pub fn refine_with_ccbp(
    y: &CVector,
    op: &MeasurementOperator,
    dict: &ParametricDictionary,
    arcs: &ArcBasisSet,
    greedy: EstimationResult,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    cfg.validate()?;
    let mut omega: Vec<usize> = greedy
        .diagnostics
        .selected
        .iter()
        .flat_map(|&s| (-(cfg.xi as isize)..=cfg.xi as isize).filter_map(move |o| dict.neighbor(s, o)))
        .collect();
    omega.sort_unstable();
    omega.dedup();
    if omega.is_empty() {
        let mut out = greedy;
        out.diagnostics.greedy_fallback = true;
        return Ok(out);
    }
    let outcome = solve_over(y, op, dict, arcs, &omega, cfg)?;
    let mut diag = greedy.diagnostics.clone();
    diag.solver_status = Some(outcome.status);
    diag.constraint_violation = outcome.violation;
    match outcome.extraction {
        Some(ex) if !ex.incomplete => {
            let b: Vec<f64> = ex.estimates.iter().map(|e| e.b_hat).collect();
            let a: Vec<C64> = ex.estimates.iter().map(|e| e.a_hat).collect();
            let mut out = EstimationResult::from_estimates(dict, b, a);
            out.diagnostics = diag;
            out.elapsed = greedy.elapsed;
            Ok(out)
        }
        _ => {
            diag.greedy_fallback = true;
            Ok(EstimationResult { diagnostics: diag, ..greedy })
        }
    }
}

fn distance(dict: &ParametricDictionary, a: f64, b: f64) -> f64 {
    if dict.is_circular() {
        circular_distance(a, b, dict.period())
    } else {
        (a - b).abs()
    }
}
