//! Estimator suite: band-excluded greedy pursuit with optional per-iteration
//! interpolation, full-grid CCBP, the greedy + CCBP hybrid, and TDE-MUSIC.

mod ccbp;
mod greedy;
mod music;
mod score;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conic::{SolveStatus, SolverConfig};
use crate::dictionary::{ArcBasisSet, BandExclusionConfig, ParametricDictionary};
use crate::error::{Error, Result};
use crate::sensing::MeasurementOperator;
use crate::signal::{CVector, C64};

pub use ccbp::{refine_with_ccbp, run_ccbp};
pub use greedy::{
    run_bomp, run_ibomp, GridInterpolator, InterpContext, Interpolator, ParabolicInterpolator, PolarInterpolator,
};
pub use music::{run_tde_music, MusicConfig};
pub use score::{match_and_score, Score};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Bomp,
    Paibomp,
    Poibomp,
    Ccbp,
    PaibompCcbp,
    TdeMusic,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Bomp,
        Algorithm::Paibomp,
        Algorithm::Poibomp,
        Algorithm::Ccbp,
        Algorithm::PaibompCcbp,
        Algorithm::TdeMusic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bomp => "bomp",
            Algorithm::Paibomp => "paibomp",
            Algorithm::Poibomp => "poibomp",
            Algorithm::Ccbp => "ccbp",
            Algorithm::PaibompCcbp => "paibomp_ccbp",
            Algorithm::TdeMusic => "tde_music",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '+'], "_");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::config(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub algorithm: Algorithm,
    /// Number of components to estimate.
    pub k: usize,
    /// Band-exclusion level in `[0, 1]`; 1 disables exclusion.
    pub eta: f64,
    pub mu_floor: f64,
    /// Neighbors on each side of a greedy atom added to the CCBP working set.
    pub xi: usize,
    pub lambda: f64,
    /// Per-measurement noise variance `E|w_m|^2`.
    pub sigma_sq: f64,
    /// Arc approximation error bound.
    pub zeta: f64,
    pub music: MusicConfig,
    pub solver: SolverConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            algorithm: Algorithm::Poibomp,
            k: 1,
            eta: 0.0,
            mu_floor: BandExclusionConfig::DEFAULT_MU_FLOOR,
            xi: 0,
            lambda: 1.0,
            sigma_sq: 0.0,
            zeta: 0.0,
            music: MusicConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn new(algorithm: Algorithm, k: usize) -> Self {
        EstimatorConfig { algorithm, k, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("K must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::config(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        if !(self.lambda > 0.0) || !(self.sigma_sq >= 0.0) || !(self.zeta >= 0.0) {
            return Err(Error::config("lambda must be positive and sigma_sq, zeta nonnegative"));
        }
        self.solver.validate()
    }

    pub fn band(&self) -> BandExclusionConfig {
        BandExclusionConfig { eta: self.eta, mu_floor: self.mu_floor }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub iterations: usize,
    /// `||y_res||` after each greedy iteration.
    pub residual_norms: Vec<f64>,
    /// Grid atoms picked by the greedy loop, in order.
    pub selected: Vec<usize>,
    /// Size of the exclusion band at each greedy iteration.
    pub excluded: Vec<usize>,
    pub interpolation_fallbacks: usize,
    /// The greedy loop ran out of admissible atoms.
    pub early_stop: bool,
    pub solver_status: Option<SolveStatus>,
    /// Estimates were (partly) taken from the greedy stage.
    pub greedy_fallback: bool,
    /// Largest conic constraint violation at the returned point.
    pub constraint_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub b_hat: Vec<f64>,
    pub a_hat: Vec<C64>,
    pub f_hat: CVector,
    /// Wall time of the estimator call in seconds.
    pub elapsed: f64,
    pub diagnostics: Diagnostics,
}

impl EstimationResult {
    pub(crate) fn from_estimates(dict: &ParametricDictionary, b_hat: Vec<f64>, a_hat: Vec<C64>) -> Self {
        let f_hat = dict.waveform().superpose(&a_hat, &b_hat);
        EstimationResult { b_hat, a_hat, f_hat, elapsed: 0.0, diagnostics: Diagnostics::default() }
    }

    /// Short status label for tabular output.
    pub fn status(&self) -> &'static str {
        let d = &self.diagnostics;
        if d.early_stop {
            "early_stop"
        } else if d.greedy_fallback {
            "greedy_fallback"
        } else if d.solver_status == Some(SolveStatus::Inaccurate) {
            "inaccurate"
        } else if d.interpolation_fallbacks > 0 {
            "interp_fallback"
        } else {
            "ok"
        }
    }
}

/// Runs the estimator selected by `cfg.algorithm`.
pub fn estimate(
    y: &CVector,
    op: &MeasurementOperator,
    dict: &ParametricDictionary,
    arcs: &ArcBasisSet,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    match cfg.algorithm {
        Algorithm::Bomp => run_bomp(y, op, dict, cfg),
        Algorithm::Paibomp => run_ibomp(y, op, dict, arcs, &ParabolicInterpolator, cfg),
        Algorithm::Poibomp => run_ibomp(y, op, dict, arcs, &PolarInterpolator, cfg),
        Algorithm::PaibompCcbp => {
            let start = std::time::Instant::now();
            let greedy = run_ibomp(y, op, dict, arcs, &ParabolicInterpolator, cfg)?;
            let mut out = refine_with_ccbp(y, op, dict, arcs, greedy, cfg)?;
            out.elapsed = start.elapsed().as_secs_f64();
            Ok(out)
        }
        Algorithm::Ccbp => run_ccbp(y, op, dict, arcs, cfg),
        Algorithm::TdeMusic => run_tde_music(y, op, dict, cfg),
    }
}
