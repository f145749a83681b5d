//! Arc approximation error and the CCBP sparsity-weight sweep.

use serde::{Deserialize, Serialize};

use crate::bench::{run_case, ExperimentConfig, MetricRecord};
use crate::dictionary::{ArcFrame, DictionaryKind};
use crate::error::{Error, Result};
use crate::estimators::Algorithm;
use crate::signal::{PulseSpec, SamplingGrid, Waveform};

/// Signal family whose arc error is analysed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZetaModel {
    Tde { spec: PulseSpec, grid: SamplingGrid },
    Fe { n: usize },
}

impl ZetaModel {
    pub fn kind(&self) -> DictionaryKind {
        match self {
            ZetaModel::Tde { .. } => DictionaryKind::Tde,
            ZetaModel::Fe { .. } => DictionaryKind::Fe,
        }
    }

    fn waveform(&self) -> Result<(Waveform, f64)> {
        match *self {
            ZetaModel::Tde { spec, grid } => Ok((Waveform::chirp(spec, grid)?, grid.ts)),
            ZetaModel::Fe { n } => {
                if n < 2 {
                    return Err(Error::domain("FE model needs at least 2 samples"));
                }
                Ok((Waveform::exponential(n), 1.0))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaReport {
    pub c: usize,
    /// Distance between manifold and arc at the worst sampled offset.
    pub zeta: f64,
    /// Parameter at which `zeta` was measured.
    pub b_worst: f64,
    /// Distance from an atom to the point half a cell away.
    pub bomp_max_error: f64,
    pub samples: usize,
}

/// Offsets `-spacing/2 + (i + 1/2) spacing / n` for `i < n`.
pub fn zeta_offsets(spacing: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| -0.5 * spacing + (i as f64 + 0.5) * spacing / n as f64).collect()
}

/// `|acos(Re<g(b), g(b + dn)>) / theta - |dn| / (spacing / 2)|` with unit-normalized atoms.
pub fn ratio_deviation(wf: &Waveform, b: f64, spacing: f64, delta_n: f64) -> f64 {
    let center = wf.atom(b);
    let angle = |other: f64| {
        let g = wf.atom(other);
        (center.dotc(&g).re / (center.norm() * g.norm())).clamp(-1.0, 1.0).acos()
    };
    let theta = angle(b + 0.5 * spacing);
    (angle(b + delta_n) / theta - delta_n.abs() / (0.5 * spacing)).abs()
}

pub fn compute_zeta(model: ZetaModel, c: usize, n_samples: usize) -> Result<ZetaReport> {
    if c < 1 {
        return Err(Error::domain("redundancy factor must be at least 1"));
    }
    if n_samples < 2 {
        return Err(Error::domain("need at least two offset samples"));
    }
    let (wf, base) = model.waveform()?;
    let spacing = base / c as f64;
    let b_p = (wf.len() * c / 2) as f64 * spacing;
    let frame =
        ArcFrame::new(&wf, b_p, spacing).map_err(|theta| Error::DegenerateArc { atom: wf.len() * c / 2, theta })?;

    let offsets = zeta_offsets(spacing, n_samples);
    let mut worst = (offsets[0], f64::NEG_INFINITY);
    for &dn in &offsets {
        let dev = ratio_deviation(&wf, b_p, spacing, dn);
        if dev > worst.1 {
            worst = (dn, dev);
        }
    }
    let dn = worst.0;
    let zeta = (wf.atom(b_p + dn) - frame.point(dn, spacing)).norm();
    let bomp_max_error = (wf.atom(b_p + 0.5 * spacing) - wf.atom(b_p)).norm();
    Ok(ZetaReport { c, zeta, b_worst: b_p + dn, bomp_max_error, samples: n_samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCell {
    pub lambda: f64,
    pub kappa: f64,
    pub snr: f64,
    /// Mean over trials, µs².
    pub b_mse_us2: f64,
    pub trials: usize,
    /// Trials whose estimator reported anything other than `ok`.
    pub flagged: usize,
}

/// Label used in the CSV `algorithm` column for a sweep point.
pub fn lambda_label(lambda: f64) -> String {
    format!("ccbp[lambda={lambda:e}]")
}

/// Runs CCBP for every `lambda` on the trials `base` would draw, which are
/// identical across `lambda`. Returns the per-cell means and the raw records.
pub fn lambda_sweep(
    base: &ExperimentConfig,
    lambdas: &[f64],
    kappa_grid: &[f64],
    snr_grid: &[f64],
    trials: usize,
    jobs: Option<usize>,
) -> Result<(Vec<LambdaCell>, Vec<MetricRecord>)> {
    if trials == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if lambdas.is_empty() || kappa_grid.is_empty() || snr_grid.is_empty() {
        return Err(Error::config("lambda, kappa and snr grids must be non-empty"));
    }
    let mut cells = Vec::new();
    let mut records = Vec::new();
    for &lambda in lambdas {
        let cfg = ExperimentConfig {
            algorithms: vec![Algorithm::Ccbp],
            kappa_grid: kappa_grid.to_vec(),
            snr_grid: snr_grid.to_vec(),
            trials,
            lambda,
            ..base.clone()
        };
        let mut run = run_case(&cfg, jobs)?;
        for &kappa in kappa_grid {
            for &snr in snr_grid {
                let cell: Vec<&MetricRecord> = run.iter().filter(|r| r.kappa == kappa && r.snr == snr).collect();
                let n = cell.len();
                cells.push(LambdaCell {
                    lambda,
                    kappa,
                    snr,
                    b_mse_us2: cell.iter().map(|r| r.b_mse_us2).sum::<f64>() / n.max(1) as f64,
                    trials: n,
                    flagged: cell.iter().filter(|r| r.status != "ok").count(),
                });
            }
        }
        let label = lambda_label(lambda);
        for r in &mut run {
            r.algorithm = label.clone();
        }
        records.extend(run);
    }
    Ok((cells, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tde() -> ZetaModel {
        ZetaModel::Tde { spec: PulseSpec::reference(), grid: SamplingGrid::reference() }
    }

    #[test]
    fn zero_offset_has_zero_deviation() {
        let wf = Waveform::chirp(PulseSpec::reference(), SamplingGrid::reference()).unwrap();
        assert_eq!(ratio_deviation(&wf, 250.0 * 2e-8, 2e-8, 0.0), 0.0);
        // The anchor itself is exact by construction.
        assert!(ratio_deviation(&wf, 250.0 * 2e-8, 2e-8, 1e-8) < 1e-12);
    }

    #[test]
    fn offsets_are_symmetric_and_inside_the_cell() {
        let o = zeta_offsets(1.0, 100);
        assert_eq!(o.len(), 100);
        assert!((o[0] + 0.495).abs() < 1e-12 && (o[99] - 0.495).abs() < 1e-12);
        assert!(o.iter().zip(o.iter().rev()).all(|(a, b)| (a + b).abs() < 1e-12));
    }

    #[test]
    fn tde_arc_beats_grid_and_fe() {
        let t = compute_zeta(tde(), 1, 100).unwrap();
        let f = compute_zeta(ZetaModel::Fe { n: 100 }, 1, 100).unwrap();
        assert!(t.zeta < t.bomp_max_error, "{t:?}");
        assert!(f.zeta > t.zeta, "{f:?} vs {t:?}");
        // Half a cell of shift on a unit-energy chirp.
        let wf = Waveform::chirp(PulseSpec::reference(), SamplingGrid::reference()).unwrap();
        let direct = (wf.atom(250.5 * 2e-8) - wf.atom(250.0 * 2e-8)).norm();
        assert!((t.bomp_max_error - direct).abs() < 1e-12);
    }

    #[test]
    fn arc_error_at_quarter_cell_is_below_zeta_scale() {
        let t = compute_zeta(tde(), 1, 100).unwrap();
        let wf = Waveform::chirp(PulseSpec::reference(), SamplingGrid::reference()).unwrap();
        let ts = 2e-8;
        let frame = ArcFrame::new(&wf, 120.0 * ts, ts).unwrap();
        let err = (frame.point(0.25 * ts, ts) - wf.atom(120.25 * ts)).norm();
        assert!(err <= 1.05 * t.zeta, "{err} vs {}", t.zeta);
    }

    #[test]
    fn zeta_shrinks_with_redundancy() {
        for model in [tde(), ZetaModel::Fe { n: 100 }] {
            let z: Vec<f64> = (1..=10).map(|c| compute_zeta(model, c, 100).unwrap().zeta).collect();
            for w in z.windows(2) {
                assert!(w[1] <= 1.05 * w[0], "{:?}: {z:?}", model.kind());
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = compute_zeta(tde(), 3, 100).unwrap();
        let b = compute_zeta(tde(), 3, 100).unwrap();
        assert_eq!(a.zeta.to_bits(), b.zeta.to_bits());
        assert!(compute_zeta(tde(), 0, 100).is_err());
        assert!(compute_zeta(tde(), 1, 1).is_err());
    }

    #[test]
    fn empty_sweep() {
        let base = ExperimentConfig::default();
        let (cells, records) = lambda_sweep(&base, &[1.0], &[1.0], &[1e3], 0, None).unwrap();
        assert!(cells.is_empty() && records.is_empty());
        assert!(lambda_sweep(&base, &[], &[1.0], &[1e3], 1, None).is_err());
    }
}
