//! Complex continuous basis pursuit.
//!
//! Every atom `j` of the working set carries three complex coefficients
//! `alpha, beta, gamma` on its arc frame `(c, u, v)`. Each is split across the
//! four phases `(1, -1, j, -j)`, giving the stacked variable
//! `x = [x_alpha | x_beta | x_gamma]`, each block `4J` long with copy `k`
//! occupying entries `k J .. (k + 1) J`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{realify, ConeProgram, SolveStatus, SolverConfig};
use crate::dictionary::ArcBasisSet;
use crate::error::{Error, Result};
use crate::sensing::MeasurementOperator;
use crate::signal::{wrap_centered, CMatrix, CVector, C64};

pub const PHASES: [C64; 4] = [C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)];

/// Magnitude below which an `alpha` coefficient counts as inactive.
pub const ACTIVE_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeModel {
    /// All four phase copies are free.
    #[default]
    Complex,
    /// Only the real-positive copy is free; the others are pinned to zero.
    RealNonnegative,
}

#[derive(Debug, Clone)]
pub struct CcbpProblem {
    pub omega: Vec<usize>,
    /// `c, u, v` columns of the working set, each `N x J`.
    pub frames: [CMatrix; 3],
    /// The same columns after the measurement operator, each `M x J`.
    pub sensed: [CMatrix; 3],
    pub y: CVector,
    pub lambda: f64,
    pub sigma_sq: f64,
    pub zeta: f64,
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
    pub params: Vec<f64>,
    pub spacing: f64,
    /// Parameter period for circular grids.
    pub period: Option<f64>,
    pub model: AmplitudeModel,
}

impl CcbpProblem {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Weight on `||t||_1` when the fidelity term is `||y - A E x||^2`.
    pub fn l1_weight(&self) -> f64 {
        2.0 * self.lambda * (self.sigma_sq + self.zeta)
    }

    /// The `N x 12J` synthesis matrix: the four phase copies of `C`, then of `U`, then of `V`.
    pub fn e_matrix(&self) -> CMatrix {
        stacked(&self.frames)
    }

    /// `A E`, `M x 12J`.
    pub fn sensed_e_matrix(&self) -> CMatrix {
        stacked(&self.sensed)
    }

    pub(crate) fn alpha(&self, k: usize, j: usize) -> usize {
        k * self.len() + j
    }

    pub(crate) fn beta(&self, k: usize, j: usize) -> usize {
        4 * self.len() + k * self.len() + j
    }

    pub(crate) fn gamma(&self, k: usize, j: usize) -> usize {
        8 * self.len() + k * self.len() + j
    }
}

fn stacked(blocks: &[CMatrix; 3]) -> CMatrix {
    let (rows, j) = blocks[0].shape();
    let mut e = CMatrix::zeros(rows, 12 * j);
    for (b, block) in blocks.iter().enumerate() {
        for (k, &ph) in PHASES.iter().enumerate() {
            for col in 0..j {
                e.set_column(b * 4 * j + k * j + col, &(block.column(col) * ph));
            }
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcbpSolution {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: u32,
}

impl CcbpSolution {
    /// Complex `(alpha, beta, gamma)` of working-set atom `j`.
    pub fn coefficients(&self, problem: &CcbpProblem, j: usize) -> (C64, C64, C64) {
        let combine = |idx: &dyn Fn(usize) -> usize| {
            PHASES.iter().enumerate().fold(C64::new(0.0, 0.0), |acc, (k, ph)| acc + ph * self.x[idx(k)])
        };
        (
            combine(&|k| problem.alpha(k, j)),
            combine(&|k| problem.beta(k, j)),
            combine(&|k| problem.gamma(k, j)),
        )
    }
}

#[allow(clippy::too_many_arguments)]
pub fn assemble_ccbp(
    arcs: &ArcBasisSet,
    omega: &[usize],
    op: &MeasurementOperator,
    y: &CVector,
    lambda: f64,
    sigma_sq: f64,
    zeta: f64,
    period: Option<f64>,
) -> Result<CcbpProblem> {
    if omega.is_empty() {
        return Err(Error::domain("working set must contain at least one atom"));
    }
    if !(lambda > 0.0) || !(sigma_sq >= 0.0) || !(zeta >= 0.0) {
        return Err(Error::domain(format!(
            "need lambda > 0, sigma^2 >= 0, zeta >= 0 (got {lambda}, {sigma_sq}, {zeta})"
        )));
    }
    if y.len() != op.rows() {
        return Err(Error::dim(format!("{} measurements for an operator with {} rows", y.len(), op.rows())));
    }
    if let Some(&bad) = omega.iter().find(|&&p| p >= arcs.len()) {
        return Err(Error::domain(format!("atom {bad} outside the arc set of {}", arcs.len())));
    }
    let n = op.cols();
    let select = |m: &CMatrix| {
        let mut out = CMatrix::zeros(n, omega.len());
        for (j, &p) in omega.iter().enumerate() {
            out.set_column(j, &m.column(p));
        }
        out
    };
    let frames = [select(arcs.c_vecs()), select(arcs.u_vecs()), select(arcs.v_vecs())];
    let sensed = [
        op.apply_matrix(&frames[0])?,
        op.apply_matrix(&frames[1])?,
        op.apply_matrix(&frames[2])?,
    ];
    Ok(CcbpProblem {
        omega: omega.to_vec(),
        frames,
        sensed,
        y: y.clone(),
        lambda,
        sigma_sq,
        zeta,
        r: omega.iter().map(|&p| arcs.r_at(p)).collect(),
        theta: omega.iter().map(|&p| arcs.theta_at(p)).collect(),
        params: omega.iter().map(|&p| arcs.param(p)).collect(),
        spacing: arcs.spacing(),
        period,
        model: AmplitudeModel::Complex,
    })
}

/// Solves `min ||y - A E x||^2 + 2 lambda (sigma^2 + zeta) ||t||_1` under the arc cones.
pub fn solve_ccbp(problem: &CcbpProblem, cfg: &SolverConfig) -> Result<CcbpSolution> {
    let j_len = problem.len();
    let m = problem.y.len();
    let nx = 12 * j_len;
    let (t0, s0) = (nx, nx + j_len);
    let mut prog = ConeProgram::new(nx + j_len + 2 * m);

    for i in 0..2 * m {
        prog.quadratic(s0 + i, 2.0);
    }
    let w = problem.l1_weight();
    for j in 0..j_len {
        prog.linear(t0 + j, w);
    }

    // A E x + s = y, split into real and imaginary rows.
    let mut trip = Vec::new();
    for (b, block) in problem.sensed.iter().enumerate() {
        for col in 0..j_len {
            let w_col = block.column(col).into_owned();
            for (k, &ph) in PHASES.iter().enumerate() {
                let var = match b {
                    0 => problem.alpha(k, col),
                    1 => problem.beta(k, col),
                    _ => problem.gamma(k, col),
                };
                realify(&w_col, ph, 0, var, &mut trip);
            }
        }
    }
    for i in 0..2 * m {
        trip.push((i, s0 + i, 1.0));
    }
    let rhs: Vec<f64> = problem.y.iter().map(|z| z.re).chain(problem.y.iter().map(|z| z.im)).collect();
    prog.equality_block(&trip, &rhs);

    if problem.model == AmplitudeModel::RealNonnegative {
        let mut pinned = Vec::new();
        for k in 1..4 {
            for j in 0..j_len {
                for var in [problem.alpha(k, j), problem.beta(k, j), problem.gamma(k, j)] {
                    pinned.push((vec![(var, 1.0)], 0.0));
                }
            }
        }
        prog.equalities(pinned);
    }

    // r cos(theta) alpha <= beta <= r alpha
    let mut lin = Vec::with_capacity(8 * j_len);
    for j in 0..j_len {
        let (r, ct) = (problem.r[j], problem.theta[j].cos());
        for k in 0..4 {
            let (a, b) = (problem.alpha(k, j), problem.beta(k, j));
            lin.push((vec![(a, r * ct), (b, -1.0)], 0.0));
            lin.push((vec![(b, 1.0), (a, -r)], 0.0));
        }
    }
    prog.inequalities(lin);

    for j in 0..j_len {
        let r = problem.r[j];
        for k in 0..4 {
            prog.second_order(&[
                (vec![(problem.alpha(k, j), r)], 0.0),
                (vec![(problem.beta(k, j), 1.0)], 0.0),
                (vec![(problem.gamma(k, j), 1.0)], 0.0),
            ]);
        }
    }
    for j in 0..j_len {
        let mut entries = vec![(vec![(t0 + j, 1.0)], 0.0)];
        entries.extend((0..4).map(|k| (vec![(problem.alpha(k, j), 1.0)], 0.0)));
        prog.second_order(&entries);
    }

    let raw = prog.solve(cfg)?;
    Ok(CcbpSolution {
        x: raw.z[..nx].to_vec(),
        t: raw.z[t0..s0].to_vec(),
        status: raw.status,
        objective: raw.objective,
        iterations: raw.iterations,
    })
}

/// Largest violation of the three constraint families at `solution`, plus
/// nonnegativity of the `alpha` and `beta` blocks.
pub fn constraint_violation(problem: &CcbpProblem, solution: &CcbpSolution) -> f64 {
    let x = &solution.x;
    let mut worst: f64 = 0.0;
    for j in 0..problem.len() {
        let (r, ct) = (problem.r[j], problem.theta[j].cos());
        let mut alpha_sq = 0.0;
        for k in 0..4 {
            let (a, b, g) = (x[problem.alpha(k, j)], x[problem.beta(k, j)], x[problem.gamma(k, j)]);
            worst = worst.max(b.hypot(g) - r * a);
            worst = worst.max(r * ct * a - b).max(b - r * a);
            worst = worst.max(-a).max(-b);
            alpha_sq += a * a;
        }
        worst = worst.max(alpha_sq.sqrt() - solution.t[j]);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcbpEstimate {
    /// Position in the working set.
    pub slot: usize,
    pub atom: usize,
    pub b_hat: f64,
    pub a_hat: C64,
    /// `(beta, gamma)` rescaled onto the arc radius.
    pub beta: C64,
    pub gamma: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub estimates: Vec<CcbpEstimate>,
    /// Fewer than `K` active atoms were found.
    pub incomplete: bool,
}

/// Keeps the `k` atoms with largest `|alpha|` and maps each `(beta, gamma)` pair to a parameter.
pub fn extract_estimates(solution: &CcbpSolution, problem: &CcbpProblem, k: usize) -> Extraction {
    let mut ranked: Vec<(usize, C64, C64, C64)> = (0..problem.len())
        .map(|j| {
            let (a, b, g) = solution.coefficients(problem, j);
            (j, a, b, g)
        })
        .filter(|(_, a, _, _)| a.norm() > ACTIVE_THRESHOLD)
        .collect();
    ranked.sort_by(|l, r| r.1.norm().total_cmp(&l.1.norm()).then(l.0.cmp(&r.0)));
    ranked.truncate(k);
    let estimates = ranked
        .into_iter()
        .map(|(j, a, b, g)| {
            let radius = b.norm().hypot(g.norm());
            let scale = if radius > 0.0 { a.norm() * problem.r[j] / radius } else { 0.0 };
            let (beta, gamma) = (b * scale, g * scale);
            let ac = a.conj();
            let angle = if radius > 0.0 { (gamma * ac).re.atan2((beta * ac).re) } else { 0.0 };
            let angle = angle.clamp(-FRAC_PI_2, FRAC_PI_2);
            let half = 0.5 * problem.spacing;
            let offset = (angle * problem.spacing / (2.0 * problem.theta[j])).clamp(-half, half);
            let mut b_hat = problem.params[j] + offset;
            if let Some(p) = problem.period {
                b_hat = wrap_centered(b_hat - 0.5 * p, p) + 0.5 * p;
            }
            CcbpEstimate { slot: j, atom: problem.omega[j], b_hat, a_hat: a, beta, gamma }
        })
        .collect::<Vec<_>>();
    Extraction { incomplete: estimates.len() < k, estimates }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{build_arc_bases, ParametricDictionary};
    use crate::signal::{PulseSpec, SamplingGrid};

    const ZETA: f64 = 7.7e-3;

    fn setup(n: usize) -> (ParametricDictionary, ArcBasisSet) {
        let grid = SamplingGrid::new(n, 1.0 / 50e6).unwrap();
        let d = ParametricDictionary::tde(PulseSpec::reference(), grid, 1).unwrap();
        let arcs = build_arc_bases(&d).unwrap();
        (d, arcs)
    }

    fn encode(problem: &CcbpProblem, j: usize, a: f64, delta_n: f64) -> CcbpSolution {
        let mut x = vec![0.0; 12 * problem.len()];
        let phi = 2.0 * delta_n * problem.theta[j] / problem.spacing;
        x[problem.alpha(0, j)] = a;
        x[problem.beta(0, j)] = a * problem.r[j] * phi.cos();
        x[problem.gamma(0, j)] = a * problem.r[j] * phi.sin();
        let mut t = vec![0.0; problem.len()];
        t[j] = a;
        CcbpSolution { x, t, status: SolveStatus::Optimal, objective: 0.0, iterations: 0 }
    }

    // Fine-grid matched filter.
    fn oracle(y: &CVector, op: &MeasurementOperator, d: &ParametricDictionary, center: f64) -> f64 {
        let mut best = (center, 0.0);
        for s in -1000..=1000 {
            let b = center + s as f64 * d.spacing() * 1e-3;
            let a = op.apply(&d.atom_at(b)).unwrap();
            let c = a.dotc(y).norm() / a.norm();
            if c > best.1 {
                best = (b, c);
            }
        }
        best.0
    }

    #[test]
    fn synthesis_matrix_layout() {
        let (_, arcs) = setup(100);
        let op = MeasurementOperator::new(100, 1.0, 1).unwrap();
        let y = CVector::zeros(100);
        let pb = assemble_ccbp(&arcs, &[7], &op, &y, 1.0, 0.0, ZETA, Some(100.0)).unwrap();
        let e = pb.e_matrix();
        assert_eq!(e.shape(), (100, 12));
        assert_eq!(e.column(0), arcs.c_vecs().column(7));
        assert_eq!(e.column(1), -arcs.c_vecs().column(7));
        assert_eq!(e.column(4), arcs.u_vecs().column(7));
        let pb3 = assemble_ccbp(&arcs, &[1, 2, 3], &op, &y, 1.0, 0.0, ZETA, None).unwrap();
        let e3 = pb3.e_matrix();
        assert_eq!(e3.ncols(), 36);
        assert_eq!(e3.column(3), -arcs.c_vecs().column(1));
        // alpha = 1, beta = r on the real-positive slots gives the atom itself.
        let enc = encode(&pb, 0, 1.0, 0.0);
        let x = CVector::from_iterator(12, enc.x.iter().map(|&v| C64::from(v)));
        let g = arcs.c_vecs().column(7) + arcs.u_vecs().column(7) * C64::from(arcs.r_at(7));
        assert!((e * x - g).norm() < 1e-9);
    }

    #[test]
    fn extraction_inverts_the_arc_map() {
        let (_, arcs) = setup(100);
        let op = MeasurementOperator::new(100, 1.0, 1).unwrap();
        let pb = assemble_ccbp(&arcs, &[10, 11, 40], &op, &CVector::zeros(100), 1.0, 0.0, ZETA, None).unwrap();
        for dn in [-0.5, -0.2, 0.0, 0.3, 0.5] {
            let sol = encode(&pb, 1, 3.0, dn * pb.spacing);
            let ext = extract_estimates(&sol, &pb, 1);
            let est = ext.estimates[0];
            assert_eq!(est.atom, 11);
            assert!((est.b_hat - pb.params[1] - dn * pb.spacing).abs() < 1e-12 * pb.spacing);
            assert!((est.a_hat - C64::from(3.0)).norm() < 1e-12);
            assert!(constraint_violation(&pb, &sol) < 1e-12);
        }
        let mut two = encode(&pb, 0, 5.0, 0.0);
        let other = encode(&pb, 2, 2.0, 0.1 * pb.spacing);
        for (a, b) in two.x.iter_mut().zip(&other.x) {
            *a += b;
        }
        let ext = extract_estimates(&two, &pb, 1);
        assert_eq!(ext.estimates.len(), 1);
        assert_eq!(ext.estimates[0].atom, 10);
        assert_eq!(ext.estimates[0].b_hat, pb.params[0]);
        let ext = extract_estimates(&two, &pb, 3);
        assert!(ext.incomplete && ext.estimates.len() == 2);
    }

    #[test]
    fn zero_measurements_give_zero_solution() {
        let (_, arcs) = setup(100);
        let op = MeasurementOperator::new(100, 0.4, 2).unwrap();
        let pb = assemble_ccbp(&arcs, &(0..100).collect::<Vec<_>>(), &op, &CVector::zeros(40), 1.0, 0.0, ZETA, Some(100.0)).unwrap();
        let sol = solve_ccbp(&pb, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.x.iter().all(|v| v.abs() < 1e-6));
        assert!(sol.t.iter().all(|v| v.abs() < 1e-6));
        assert!(sol.objective.abs() < 1e-6);
    }

    fn recover(amplitude: C64, frac: f64, model: AmplitudeModel, kappa: f64) -> (f64, f64, f64) {
        recover_at(amplitude, frac, model, kappa, SolverConfig::default())
    }

    fn recover_at(amplitude: C64, frac: f64, model: AmplitudeModel, kappa: f64, cfg: SolverConfig) -> (f64, f64, f64) {
        let (d, arcs) = setup(100);
        let op = MeasurementOperator::new(100, kappa, 3).unwrap();
        let b = d.param(37) + frac * d.spacing();
        let y = op.apply(&(d.atom_at(b) * amplitude)).unwrap();
        let mut pb = assemble_ccbp(&arcs, &(0..100).collect::<Vec<_>>(), &op, &y, 1.0, 0.0, ZETA, Some(d.period())).unwrap();
        pb.model = model;
        let sol = solve_ccbp(&pb, &cfg).unwrap();
        assert!(sol.status.has_solution());
        assert!(constraint_violation(&pb, &sol) <= 1e-6);
        let est = extract_estimates(&sol, &pb, 1).estimates[0];
        let fit = (op.apply(&(d.atom_at(est.b_hat) * est.a_hat)).unwrap() - &y).norm() / y.norm();
        (wrap_centered(est.b_hat - b, d.period()).abs(), oracle(&y, &op, &d, b) - b, fit)
    }

    #[test]
    fn on_grid_pulse_is_recovered() {
        let (err, oracle_err, _) = recover(C64::new(3.0, 4.0), 0.0, AmplitudeModel::Complex, 1.0);
        assert!(oracle_err.abs() < 1e-9);
        assert!(err < 1e-3 / 50e6, "error {err:e}");
    }

    #[test]
    fn negative_real_amplitudes_need_the_complex_split() {
        let a = C64::new(-2.0, 5.0);
        let (err, _, fit) = recover(a, 0.3, AmplitudeModel::Complex, 0.4);
        assert!(err < 1e-2 / 50e6 && fit < 0.1, "complex err {err:e} fit {fit}");
        let (_, _, fit) = recover(a, 0.3, AmplitudeModel::RealNonnegative, 0.4);
        assert!(fit > 0.5, "restricted fit {fit}");
    }

    #[test]
    fn real_positive_data_agrees_with_restricted_block() {
        let a = C64::new(4.0, 0.0);
        let ts = 1.0 / 50e6;
        // Tight enough that solver accuracy does not mask the comparison.
        let cfg = SolverConfig { tolerance: 1e-8, ..Default::default() };
        for (frac, tol) in [(0.0, 1e-6), (0.5, 1e-6), (-0.35, 1e-2)] {
            let (full, _, _) = recover_at(a, frac, AmplitudeModel::Complex, 1.0, cfg);
            let (restricted, _, _) = recover_at(a, frac, AmplitudeModel::RealNonnegative, 1.0, cfg);
            assert!((full - restricted).abs() < tol * ts, "offset {frac}: {full:e} vs {restricted:e}");
        }
    }

    #[test]
    fn l1_mass_shrinks_as_lambda_grows() {
        let (d, arcs) = setup(100);
        let op = MeasurementOperator::new(100, 0.4, 4).unwrap();
        let y = op.apply(&(d.atom_at(d.param(20) + 0.2 * d.spacing()) * C64::new(3.0, -2.0))).unwrap();
        let omega: Vec<usize> = (0..100).collect();
        let mass: Vec<f64> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&lam| {
                let pb = assemble_ccbp(&arcs, &omega, &op, &y, lam, 0.0, ZETA, Some(d.period())).unwrap();
                solve_ccbp(&pb, &SolverConfig::default()).unwrap().t.iter().sum()
            })
            .collect();
        assert!(mass[0] >= mass[1] - 1e-6 && mass[1] >= mass[2] - 1e-6, "{mass:?}");
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let (_, arcs) = setup(100);
        let op = MeasurementOperator::new(100, 1.0, 1).unwrap();
        let y = CVector::zeros(100);
        assert!(assemble_ccbp(&arcs, &[], &op, &y, 1.0, 0.0, ZETA, None).is_err());
        assert!(assemble_ccbp(&arcs, &[1], &op, &y, 0.0, 0.0, ZETA, None).is_err());
        assert!(assemble_ccbp(&arcs, &[1], &op, &CVector::zeros(3), 1.0, 0.0, ZETA, None).is_err());
    }
}
