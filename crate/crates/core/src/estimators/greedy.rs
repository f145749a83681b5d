use std::collections::BTreeSet;
use std::time::Instant;

use super::{EstimationResult, EstimatorConfig};
use crate::dictionary::{band_exclusion, ArcBasisSet, ParametricDictionary};
use crate::error::{Error, Result};
use crate::interp::{
    least_squares, parabolic_interpolate, polar_interpolate, proxy_from_sensed, InterpDiagnostics, InterpolationEstimate,
    ProxyVector,
};
use crate::sensing::MeasurementOperator;
use crate::signal::{CMatrix, CVector, C64};

/// Everything an interpolator may look at for the atom picked this iteration.
pub struct InterpContext<'a> {
    pub y_res: &'a CVector,
    pub op: &'a MeasurementOperator,
    pub dict: &'a ParametricDictionary,
    /// Present for interpolators that need arc frames.
    pub arcs: Option<&'a ArcBasisSet>,
    pub proxy: &'a ProxyVector,
}

/// Refines a grid atom to a continuous parameter.
pub trait Interpolator: Sync {
    fn interpolate(&self, ctx: &InterpContext<'_>, i_n: usize) -> Result<InterpolationEstimate>;
}

/// No refinement: the atom's own grid parameter.
pub struct GridInterpolator;

pub struct ParabolicInterpolator;

pub struct PolarInterpolator;

impl Interpolator for GridInterpolator {
    fn interpolate(&self, ctx: &InterpContext<'_>, i_n: usize) -> Result<InterpolationEstimate> {
        Ok(InterpolationEstimate {
            index: i_n,
            b_hat: ctx.dict.param(i_n),
            amplitude_hint: ctx.proxy.values[i_n],
            diagnostics: InterpDiagnostics::default(),
        })
    }
}

impl Interpolator for ParabolicInterpolator {
    fn interpolate(&self, ctx: &InterpContext<'_>, i_n: usize) -> Result<InterpolationEstimate> {
        parabolic_interpolate(ctx.proxy, ctx.dict, i_n)
    }
}

impl Interpolator for PolarInterpolator {
    fn interpolate(&self, ctx: &InterpContext<'_>, i_n: usize) -> Result<InterpolationEstimate> {
        let arcs = ctx.arcs.ok_or_else(|| Error::domain("polar interpolation needs arc frames"))?;
        polar_interpolate(ctx.y_res, ctx.op, ctx.dict, arcs, i_n)
    }
}

/// Band-excluded OMP on the grid.
pub fn run_bomp(
    y: &CVector,
    op: &MeasurementOperator,
    dict: &ParametricDictionary,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    let start = Instant::now();
    let mut out = greedy(y, op, dict, None, &GridInterpolator, cfg)?;
    out.elapsed = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Band-excluded OMP that refines each selected atom with `interp` before the
/// least-squares refit.
pub fn run_ibomp(
    y: &CVector,
    op: &MeasurementOperator,
    dict: &ParametricDictionary,
    arcs: &ArcBasisSet,
    interp: &dyn Interpolator,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    let start = Instant::now();
    let mut out = greedy(y, op, dict, Some(arcs), interp, cfg)?;
    out.elapsed = start.elapsed().as_secs_f64();
    Ok(out)
}

fn greedy(
    y: &CVector,
    op: &MeasurementOperator,
    dict: &ParametricDictionary,
    arcs: Option<&ArcBasisSet>,
    interp: &dyn Interpolator,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    cfg.validate()?;
    if y.len() != op.rows() || dict.signal_len() != op.cols() {
        return Err(Error::dim(format!(
            "measurements {}x{} do not match operator {}x{}",
            y.len(),
            dict.signal_len(),
            op.rows(),
            op.cols()
        )));
    }
    let sensed = op.apply_matrix(dict.atoms())?;
    let band_cfg = cfg.band();
    let mut support = BTreeSet::new();
    let mut b_hat: Vec<f64> = Vec::with_capacity(cfg.k);
    let mut chosen = CMatrix::zeros(op.rows(), 0);
    let mut amps = CVector::zeros(0);
    let mut y_res = y.clone();
    let mut diag = super::Diagnostics::default();

    for _ in 0..cfg.k {
        let proxy = proxy_from_sensed(&y_res, &sensed);
        let excluded = band_exclusion(dict, &support, &band_cfg);
        let Some(i_n) = proxy.argmax_where(|i| !excluded.contains(&i)) else {
            diag.early_stop = true;
            break;
        };
        assert!(!excluded.contains(&i_n), "selected atom {i_n} lies in the exclusion band");
        let ctx = InterpContext { y_res: &y_res, op, dict, arcs, proxy: &proxy };
        let est = match interp.interpolate(&ctx, i_n) {
            Ok(e) => e,
            Err(Error::UnstableFit(_)) => {
                diag.interpolation_fallbacks += 1;
                GridInterpolator.interpolate(&ctx, i_n)?
            }
            Err(e) => return Err(e),
        };
        if est.diagnostics.fallback {
            diag.interpolation_fallbacks += 1;
        }
        diag.excluded.push(excluded.len());
        diag.selected.push(i_n);
        support.insert(i_n);
        b_hat.push(est.b_hat);
        let col = op.apply(&dict.atom_at(est.b_hat))?;
        let last = chosen.ncols();
        chosen = chosen.insert_column(last, C64::new(0.0, 0.0));
        chosen.set_column(last, &col);
        amps = least_squares(&chosen, y)?;
        y_res = y - &chosen * &amps;
        diag.residual_norms.push(y_res.norm());
        diag.iterations += 1;
    }

    let mut out = EstimationResult::from_estimates(dict, b_hat, amps.iter().copied().collect());
    out.diagnostics = diag;
    Ok(out)
}
