use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Case, ExperimentConfig};
use crate::analysis::{compute_zeta, ZetaModel};
use crate::dictionary::{build_arc_bases, ArcBasisSet, ParametricDictionary};
use crate::error::{Error, Result};
use crate::estimators::{estimate, match_and_score, Algorithm, EstimatorConfig};
use crate::sensing::{measure, MeasurementOperator};
use crate::signal::{circular_distance, CVector, NoiseKind, NoiseSpec, SparseSignalParams, C64};

const MAX_DRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub case: Case,
    pub algorithm: String,
    pub kappa: f64,
    pub snr: f64,
    pub trial: usize,
    pub b_mse_us2: f64,
    pub f_rel_err: f64,
    pub elapsed_s: f64,
    pub status: String,
}

/// Dictionary, arc frames and arc error shared by every trial of a run.
pub struct Workspace {
    pub dict: ParametricDictionary,
    pub arcs: ArcBasisSet,
    pub zeta: f64,
}

impl Workspace {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let spec = cfg.pulse_spec()?;
        let grid = cfg.sampling_grid()?;
        let dict = ParametricDictionary::tde(spec, grid, cfg.redundancy)?;
        let arcs = build_arc_bases(&dict)?;
        let zeta = match cfg.zeta {
            Some(z) => z,
            None => compute_zeta(ZetaModel::Tde { spec, grid }, cfg.redundancy, 100)?.zeta,
        };
        Ok(Workspace { dict, arcs, zeta })
    }
}

/// One synthetic measurement with its ground truth.
#[derive(Debug, Clone)]
pub struct Trial {
    pub truth: SparseSignalParams,
    pub f: CVector,
    pub op: MeasurementOperator,
    pub y: CVector,
    /// Per-measurement noise variance.
    pub sigma_sq: f64,
}

/// Draws trial `trial` at grid point `(kappa_idx, snr_idx)`.
///
/// The planted signal depends only on the seed and the trial index, so every
/// kappa and SNR sees the same pulses; operator and noise vary per grid point.
pub fn draw_trial(
    cfg: &ExperimentConfig,
    dict: &ParametricDictionary,
    kappa_idx: usize,
    snr_idx: usize,
    trial: usize,
) -> Result<Trial> {
    let period = dict.period();
    let sep = cfg.min_separation();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial as u64);
    let mut delays = Vec::with_capacity(cfg.k);
    let mut draws = 0;
    while delays.len() < cfg.k {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(Error::config(format!("could not place {} pulses {sep:e} s apart", cfg.k)));
        }
        let b = rng.random_range(0.0..period);
        if delays.iter().all(|&d| circular_distance(d, b, period) >= sep) {
            delays.push(b);
        }
    }
    let amps: Vec<C64> =
        (0..cfg.k).map(|_| C64::new(rng.random_range(1.0..=10.0), rng.random_range(1.0..=10.0))).collect();
    let f = dict.waveform().superpose(&amps, &delays);
    let truth = SparseSignalParams::new(amps, delays)?;

    let kappa = cfg.kappa_grid[kappa_idx];
    let snr = cfg.snr_grid[snr_idx];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f0b_5e4e);
    rng.set_stream(((kappa_idx as u64) << 48) | ((snr_idx as u64) << 32) | trial as u64);
    let op = MeasurementOperator::new(dict.signal_len(), kappa, rng.random())?;
    let noise = if snr.is_infinite() {
        NoiseSpec::none()
    } else {
        NoiseSpec::new(cfg.case.noise_kind(), snr, rng.random())?
    };
    let y = measure(&op, &f, &noise)?;
    let m = op.rows() as f64;
    let sigma_sq = match noise.kind {
        _ if noise.is_none() => 0.0,
        NoiseKind::Measurement => op.apply(&f)?.norm_squared() / (snr * m),
        NoiseKind::Signal => f.norm_squared() / (snr * m),
        NoiseKind::None => 0.0,
    };
    Ok(Trial { truth, f, op, y, sigma_sq })
}

pub fn estimator_config(cfg: &ExperimentConfig, algorithm: Algorithm, zeta: f64, sigma_sq: f64) -> EstimatorConfig {
    EstimatorConfig {
        algorithm,
        k: cfg.k,
        eta: cfg.eta(),
        mu_floor: cfg.mu_floor,
        xi: cfg.xi,
        lambda: cfg.lambda,
        sigma_sq,
        zeta,
        music: cfg.music,
        solver: cfg.solver,
    }
}

/// Runs every (algorithm, kappa, SNR, trial) combination of `cfg`.
///
/// Records come back ordered by algorithm, kappa, SNR and trial regardless of
/// scheduling. `jobs` bounds the worker count; `None` uses all cores.
pub fn run_case(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<MetricRecord>> {
    cfg.validate()?;
    let ws = Workspace::new(cfg)?;
    run_case_with(cfg, &ws, jobs)
}

pub fn run_case_with(cfg: &ExperimentConfig, ws: &Workspace, jobs: Option<usize>) -> Result<Vec<MetricRecord>> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Error::config("--jobs must be at least 1"));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let points: Vec<(usize, usize, usize)> = (0..cfg.kappa_grid.len())
        .flat_map(|ki| (0..cfg.snr_grid.len()).flat_map(move |si| (0..cfg.trials).map(move |t| (ki, si, t))))
        .collect();
    let per_point: Vec<Result<Vec<MetricRecord>>> =
        pool.install(|| points.par_iter().map(|&(ki, si, t)| run_point(cfg, ws, ki, si, t)).collect());
    let mut records = Vec::with_capacity(points.len() * cfg.algorithms.len());
    for r in per_point {
        records.extend(r?);
    }
    let order = |a: &str| cfg.algorithms.iter().position(|x| x.name() == a).unwrap_or(usize::MAX);
    // Stable sort keeps the (kappa, snr, trial) point order within each algorithm.
    records.sort_by_key(|r| order(&r.algorithm));
    Ok(records)
}

fn run_point(cfg: &ExperimentConfig, ws: &Workspace, ki: usize, si: usize, t: usize) -> Result<Vec<MetricRecord>> {
    let trial = draw_trial(cfg, &ws.dict, ki, si, t)?;
    let miss = (0.5 * ws.dict.spacing() * 1e6).powi(2);
    Ok(cfg
        .algorithms
        .iter()
        .map(|&alg| {
            let ecfg = estimator_config(cfg, alg, ws.zeta, trial.sigma_sq);
            let (b_mse, f_err, elapsed, status) = match estimate(&trial.y, &trial.op, &ws.dict, &ws.arcs, &ecfg) {
                Ok(res) => {
                    let s = match_and_score(&trial.truth, &trial.f, &res, &ws.dict);
                    (s.b_mse, s.f_rel_err, res.elapsed, res.status().to_string())
                }
                Err(e) => {
                    log::warn!("{alg} failed on kappa={} snr={} trial {t}: {e}", cfg.kappa_grid[ki], cfg.snr_grid[si]);
                    (miss, 1.0, 0.0, "error".to_string())
                }
            };
            MetricRecord {
                case: cfg.case,
                algorithm: alg.name().to_string(),
                kappa: cfg.kappa_grid[ki],
                snr: cfg.snr_grid[si],
                trial: t,
                b_mse_us2: b_mse,
                f_rel_err: f_err,
                elapsed_s: if cfg.record_timing { elapsed } else { 0.0 },
                status,
            }
        })
        .collect())
}
