use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conic::SolverConfig;
use crate::dictionary::BandExclusionConfig;
use crate::error::{Error, Result};
use crate::estimators::{Algorithm, MusicConfig};
use crate::signal::{NoiseKind, PulseSpec, SamplingGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// Well-separated pulses, measurement noise.
    A,
    /// Overlapping pulses, measurement noise.
    B,
    /// Overlapping pulses, signal noise.
    C,
}

impl Case {
    pub fn noise_kind(self) -> NoiseKind {
        match self {
            Case::A | Case::B => NoiseKind::Measurement,
            Case::C => NoiseKind::Signal,
        }
    }

    pub fn default_min_separation(self, ts: f64) -> f64 {
        match self {
            Case::A => 1e-6,
            Case::B | Case::C => 5.0 * ts,
        }
    }

    pub fn default_eta(self) -> f64 {
        match self {
            Case::A => 0.0,
            Case::B | Case::C => 1.0,
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Case::A => "A",
            Case::B => "B",
            Case::C => "C",
        };
        f.write_str(s)
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Case::A),
            "B" => Ok(Case::B),
            "C" => Ok(Case::C),
            other => Err(Error::config(format!("unknown case '{other}' (expected A, B or C)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    pub f0: f64,
    pub delta_f: f64,
    pub duration: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        let r = PulseSpec::reference();
        PulseConfig { f0: r.f0, delta_f: r.delta_f, duration: r.duration }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    /// Sampling rate in Hz.
    pub fs: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 500, fs: 50e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: Case,
    pub algorithms: Vec<Algorithm>,
    pub kappa_grid: Vec<f64>,
    /// Linear SNRs; `inf` runs noiseless.
    pub snr_grid: Vec<f64>,
    pub trials: usize,
    pub k: usize,
    /// Seconds; defaults by case.
    pub min_separation: Option<f64>,
    pub seed: u64,
    /// Defaults by case.
    pub eta: Option<f64>,
    pub mu_floor: f64,
    pub xi: usize,
    pub lambda: f64,
    /// Computed from the pulse when absent.
    pub zeta: Option<f64>,
    pub redundancy: usize,
    /// Write zero instead of wall time so output is byte-reproducible.
    pub record_timing: bool,
    pub output: Option<PathBuf>,
    pub pulse: PulseConfig,
    pub grid: GridConfig,
    pub music: MusicConfig,
    pub solver: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            case: Case::A,
            algorithms: Algorithm::ALL.to_vec(),
            kappa_grid: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            snr_grid: vec![10.0, 100.0, 1e3, 1e4],
            trials: 25,
            k: 3,
            min_separation: None,
            seed: 1,
            eta: None,
            mu_floor: BandExclusionConfig::DEFAULT_MU_FLOOR,
            xi: 0,
            lambda: 1.0,
            zeta: None,
            redundancy: 1,
            record_timing: true,
            output: None,
            pulse: PulseConfig::default(),
            grid: GridConfig::default(),
            music: MusicConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    pub fn pulse_spec(&self) -> Result<PulseSpec> {
        PulseSpec::new(self.pulse.f0, self.pulse.delta_f, self.pulse.duration, true)
    }

    pub fn sampling_grid(&self) -> Result<SamplingGrid> {
        SamplingGrid::from_rate(self.grid.n, self.grid.fs)
    }

    pub fn min_separation(&self) -> f64 {
        self.min_separation.unwrap_or_else(|| self.case.default_min_separation(1.0 / self.grid.fs))
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or_else(|| self.case.default_eta())
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.sampling_grid()?;
        self.pulse_spec()?;
        self.solver.validate()?;
        if self.trials == 0 || self.k == 0 || self.redundancy == 0 {
            return Err(Error::config("trials, k and redundancy must be at least 1"));
        }
        if self.algorithms.is_empty() || self.kappa_grid.is_empty() || self.snr_grid.is_empty() {
            return Err(Error::config("algorithms, kappa_grid and snr_grid must be non-empty"));
        }
        if let Some(&bad) = self.kappa_grid.iter().find(|&&k| !(k > 0.0 && k <= 1.0)) {
            return Err(Error::config(format!("kappa {bad} outside (0, 1]")));
        }
        if let Some(&bad) = self.snr_grid.iter().find(|&&s| !(s > 0.0)) {
            return Err(Error::config(format!("snr {bad} must be positive")));
        }
        let sep = self.min_separation();
        if !(sep >= 0.0) || self.k as f64 * sep >= grid.period() {
            return Err(Error::config(format!(
                "min_separation {sep:e} s cannot fit {} pulses in {:e} s",
                self.k,
                grid.period()
            )));
        }
        if !(0.0..=1.0).contains(&self.eta()) || !(self.lambda > 0.0) {
            return Err(Error::config("eta must lie in [0, 1] and lambda be positive"));
        }
        if self.zeta.is_some_and(|z| !(z >= 0.0)) {
            return Err(Error::config("zeta must be nonnegative"));
        }
        Ok(())
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Commented configuration with the reference parameters, written by `gen-config`.
pub const DEFAULT_CONFIG_TOML: &str = r#"# Monte Carlo experiment configuration.

# A: pulses at least 1 us apart, measurement noise.
# B: pulses at least 5 samples apart, measurement noise.
# C: as B, with noise added to the signal before sampling.
case = "A"

# Any of: bomp, paibomp, poibomp, ccbp, paibomp_ccbp, tde_music
algorithms = ["bomp", "paibomp", "poibomp", "ccbp", "paibomp_ccbp", "tde_music"]

# Undersampling ratios M/N.
kappa_grid = [0.1, 0.2, 0.3, 0.4, 0.5]

# Linear SNR at the noise injection point; use inf for noiseless runs.
snr_grid = [10.0, 100.0, 1000.0, 10000.0]

trials = 25
k = 3
seed = 1

# Minimum circular distance between pulses in seconds (default by case).
# min_separation = 1e-6

# Band exclusion level (default 0 for case A, 1 otherwise).
# eta = 0.0
mu_floor = 0.01

# Grid neighbors added on each side of a greedy atom before CCBP refinement.
xi = 0

# CCBP sparsity weight.
lambda = 1.0

# Arc approximation error; computed from the pulse when omitted.
# zeta = 7.7e-3

# Dictionary redundancy c (grid spacing Ts / c).
redundancy = 1

# Set to false for byte-identical CSV output across runs.
record_timing = true

# CSV destination; stdout when omitted.
# output = "results.csv"

[pulse]
f0 = 1e6
delta_f = 40e6
duration = 1e-6

[grid]
n = 500
fs = 50e6

[music]
# Smoothing subarray length (default N / 3).
# subarray = 166
refinement = 100

[solver]
tolerance = 1e-6
max_iterations = 200
verbose = false
"#;
