//! Time-delay estimation by spectral division followed by MUSIC.
//!
//! A delayed pulse `g(t - b)` has DFT `G_k exp(-j 2 pi k b / (N Ts))`, so
//! dividing the spectrum of the reconstructed signal by `G` turns a sum of
//! delayed pulses into a sum of complex exponentials in `k`.

use std::time::Instant;

use nalgebra::linalg::SymmetricEigen;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{EstimationResult, EstimatorConfig};
use crate::conic::l1_synthesis;
use crate::dictionary::{DictionaryKind, ParametricDictionary};
use crate::error::{Error, Result};
use crate::interp::least_squares;
use crate::sensing::MeasurementOperator;
use crate::signal::{circular_distance, CMatrix, CVector, C64};

/// Spectrum bins below this magnitude make the division ill-posed.
pub const SPECTRUM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MusicConfig {
    /// Subarray length for spatial smoothing; `None` means `N / 3`.
    pub subarray: Option<usize>,
    /// Pseudospectrum samples per grid cell.
    pub refinement: usize,
}

impl Default for MusicConfig {
    fn default() -> Self {
        MusicConfig { subarray: None, refinement: 100 }
    }
}

pub fn run_tde_music(
    y: &CVector,
    op: &MeasurementOperator,
    dict: &ParametricDictionary,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    cfg.validate()?;
    if dict.kind() != DictionaryKind::Tde {
        return Err(Error::config("TDE-MUSIC needs a delay dictionary"));
    }
    let start = Instant::now();
    let n = dict.signal_len();
    let l = cfg.music.subarray.unwrap_or(n / 3);
    if l <= cfg.k || l >= n || cfg.music.refinement == 0 {
        return Err(Error::config(format!(
            "subarray length {l} must exceed K = {} and stay below N = {n}; refinement must be positive",
            cfg.k
        )));
    }

    let epsilon = (op.rows() as f64).sqrt() * cfg.sigma_sq.sqrt();
    let l1 = l1_synthesis(op, dict, y, epsilon, &cfg.solver)?;
    if !l1.status.has_solution() {
        return Err(Error::Solver(format!("l1 reconstruction ended with status {}", l1.status)));
    }
    let f = dict.atoms() * &l1.x;
    let z = exponential_sum(&f, &dict.atoms().column(0).into_owned())?;
    let subspace = signal_subspace(&z, l, cfg.k);
    let spectrum = pseudospectrum(&subspace, dict, cfg.music.refinement);
    let b_hat = pick_peaks(&spectrum, dict, cfg.k);

    let mut sensed = CMatrix::zeros(op.rows(), b_hat.len());
    for (i, &b) in b_hat.iter().enumerate() {
        sensed.set_column(i, &op.apply(&dict.atom_at(b))?);
    }
    let a_hat = least_squares(&sensed, y)?;
    let mut out = EstimationResult::from_estimates(dict, b_hat, a_hat.iter().copied().collect());
    out.diagnostics.solver_status = Some(l1.status);
    out.elapsed = start.elapsed().as_secs_f64();
    Ok(out)
}

/// `G^-1 F f`, reordered to signed frequency indices `-N/2 .. N/2 - 1`.
fn exponential_sum(f: &CVector, pulse: &CVector) -> Result<Vec<C64>> {
    let n = f.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut spec: Vec<C64> = f.iter().copied().collect();
    let mut g: Vec<C64> = pulse.iter().copied().collect();
    fft.process(&mut spec);
    fft.process(&mut g);
    if let Some((bin, mag)) = g.iter().map(|v| v.norm()).enumerate().find(|&(_, m)| !(m > SPECTRUM_FLOOR)) {
        return Err(Error::SpectrumNull { bin, magnitude: mag });
    }
    let ratio: Vec<C64> = spec.iter().zip(&g).map(|(s, g)| s / g).collect();
    let half = n / 2;
    Ok((0..n).map(|i| ratio[(i + n - half) % n]).collect())
}

/// Dominant `k`-dimensional eigenspace of the forward-backward smoothed covariance.
fn signal_subspace(z: &[C64], l: usize, k: usize) -> CMatrix {
    let snapshots = z.len() - l + 1;
    let mut r = CMatrix::zeros(l, l);
    for s in 0..snapshots {
        let x = CVector::from_column_slice(&z[s..s + l]);
        r += &x * x.adjoint();
    }
    r /= C64::from(snapshots as f64);
    let mut fb = r.clone();
    for i in 0..l {
        for j in 0..l {
            fb[(i, j)] = 0.5 * (r[(i, j)] + r[(l - 1 - i, l - 1 - j)].conj());
        }
    }
    let eig = SymmetricEigen::new(fb);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut es = CMatrix::zeros(l, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        es.set_column(c, &eig.eigenvectors.column(i));
    }
    es
}

/// `1 / ||P_noise a(b)||^2` on a grid `refinement` times finer than the dictionary.
fn pseudospectrum(es: &CMatrix, dict: &ParametricDictionary, refinement: usize) -> Vec<(f64, f64)> {
    let l = es.nrows();
    let step = dict.spacing() / refinement as f64;
    let count = dict.len() * refinement;
    let period = dict.period();
    let mut a = CVector::zeros(l);
    (0..count)
        .map(|i| {
            let b = i as f64 * step;
            let w = C64::from_polar(1.0, -std::f64::consts::TAU * b / period);
            let mut p = C64::new(1.0, 0.0);
            for v in a.iter_mut() {
                *v = p;
                p *= w;
            }
            let proj = es.ad_mul(&a).norm_squared();
            let noise = (l as f64 - proj).max(f64::MIN_POSITIVE);
            (b, 1.0 / noise)
        })
        .collect()
}

/// Up to `k` circular local maxima, strongest first, at least one cell apart.
/// Each peak is refined by a parabola through its two neighbors.
fn pick_peaks(spectrum: &[(f64, f64)], dict: &ParametricDictionary, k: usize) -> Vec<f64> {
    let n = spectrum.len();
    let step = dict.period() / n as f64;
    let mut peaks: Vec<(f64, f64)> = (0..n)
        .filter_map(|i| {
            let (b, v) = spectrum[i];
            let (lo, hi) = (spectrum[(i + n - 1) % n].1, spectrum[(i + 1) % n].1);
            if !(v >= lo && v > hi) {
                return None;
            }
            let denom = lo - 2.0 * v + hi;
            let shift = if denom < 0.0 { (0.5 * (lo - hi) / denom).clamp(-0.5, 0.5) } else { 0.0 };
            Some(((b + shift * step).rem_euclid(dict.period()), v))
        })
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut chosen: Vec<f64> = Vec::with_capacity(k);
    for (b, _) in peaks {
        if chosen.len() == k {
            break;
        }
        if chosen.iter().all(|&c| circular_distance(c, b, dict.period()) >= dict.spacing()) {
            chosen.push(b);
        }
    }
    chosen
}
