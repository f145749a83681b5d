//! Continuous-parameter signal models and noise injection.
//!
//! Two translation-invariant families are provided: a raised-cosine windowed
//! linear chirp evaluated under circular time shifts (delay estimation), and
//! unit-norm complex exponentials (frequency estimation). Non-integer shifts
//! are always evaluated from the continuous model, never by resampling.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Chirp pulse parameters (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Center frequency in Hz.
    pub f0: f64,
    /// Swept bandwidth in Hz.
    pub delta_f: f64,
    /// Pulse duration in seconds.
    pub duration: f64,
    /// Scale the sampled pulse to unit l2 energy.
    pub energy_normalized: bool,
}

impl PulseSpec {
    pub fn new(f0: f64, delta_f: f64, duration: f64, energy_normalized: bool) -> Result<Self> {
        let spec = PulseSpec { f0, delta_f, duration, energy_normalized };
        spec.validate()?;
        Ok(spec)
    }

    /// 1 MHz center, 40 MHz sweep, 1 us duration, unit energy.
    pub fn reference() -> Self {
        PulseSpec { f0: 1e6, delta_f: 40e6, duration: 1e-6, energy_normalized: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f0 > 0.0 && self.f0.is_finite()) {
            return Err(Error::domain(format!("f0 must be positive, got {}", self.f0)));
        }
        if !(self.delta_f > 0.0 && self.delta_f.is_finite()) {
            return Err(Error::domain(format!("delta_f must be positive, got {}", self.delta_f)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::domain(format!("duration must be positive, got {}", self.duration)));
        }
        Ok(())
    }
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self::reference()
    }
}

/// Uniform sampling grid of `n` samples spaced `ts` seconds apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    pub n: usize,
    pub ts: f64,
}

impl SamplingGrid {
    pub fn new(n: usize, ts: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("grid needs at least 2 samples, got {n}")));
        }
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::domain(format!("sampling period must be positive, got {ts}")));
        }
        Ok(SamplingGrid { n, ts })
    }

    pub fn from_rate(n: usize, fs: f64) -> Result<Self> {
        Self::new(n, 1.0 / fs)
    }

    /// 500 samples at 50 MHz.
    pub fn reference() -> Self {
        SamplingGrid { n: 500, ts: 1.0 / 50e6 }
    }

    /// Observation window length `n * ts`.
    pub fn period(&self) -> f64 {
        self.n as f64 * self.ts
    }
}

/// Amplitudes and translation parameters of a K-sparse signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignalParams {
    pub amplitudes: Vec<C64>,
    pub delays: Vec<f64>,
}

impl SparseSignalParams {
    pub fn new(amplitudes: Vec<C64>, delays: Vec<f64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::domain("sparse signal needs at least one component"));
        }
        if amplitudes.len() != delays.len() {
            return Err(Error::dim(format!(
                "{} amplitudes but {} delays",
                amplitudes.len(),
                delays.len()
            )));
        }
        Ok(SparseSignalParams { amplitudes, delays })
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn validate(&self, grid: &SamplingGrid) -> Result<()> {
        let period = grid.period();
        for &b in &self.delays {
            if !(0.0..period).contains(&b) {
                return Err(Error::domain(format!("delay {b:e} outside [0, {period:e})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// No noise.
    None,
    /// Added after the measurement operator (`w`).
    Measurement,
    /// Added to the signal before the measurement operator (`n`), which folds.
    Signal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Linear SNR: clean energy at the injection point over expected noise energy.
    pub snr: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec { kind: NoiseKind::None, snr: f64::INFINITY, seed: 0 }
    }

    pub fn new(kind: NoiseKind, snr: f64, seed: u64) -> Result<Self> {
        if kind != NoiseKind::None && !(snr > 0.0) {
            return Err(Error::domain(format!("snr must be positive, got {snr}")));
        }
        Ok(NoiseSpec { kind, snr, seed })
    }

    pub fn measurement(snr: f64, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::Measurement, snr, seed }
    }

    pub fn signal(snr: f64, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::Signal, snr, seed }
    }

    pub fn is_none(&self) -> bool {
        self.kind == NoiseKind::None || self.snr.is_infinite()
    }
}

/// A translation-invariant waveform family bound to its sampling grid.
///
/// `atom(b)` accepts any real parameter: chirp delays wrap modulo the window
/// and exponentials are evaluated directly.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    Chirp { spec: PulseSpec, grid: SamplingGrid, scale: f64 },
    Exponential { n: usize },
}

impl Waveform {
    pub fn chirp(spec: PulseSpec, grid: SamplingGrid) -> Result<Self> {
        spec.validate()?;
        if spec.duration >= grid.period() {
            return Err(Error::domain(format!(
                "pulse duration {:e} s does not fit the {:e} s window",
                spec.duration,
                grid.period()
            )));
        }
        let mut wf = Waveform::Chirp { spec, grid, scale: 1.0 };
        if spec.energy_normalized {
            let energy = wf.atom(0.0).norm_squared();
            if energy <= 0.0 {
                return Err(Error::domain("pulse has no energy on this grid"));
            }
            if let Waveform::Chirp { scale, .. } = &mut wf {
                *scale = energy.sqrt().recip();
            }
        }
        Ok(wf)
    }

    pub fn exponential(n: usize) -> Self {
        Waveform::Exponential { n }
    }

    pub fn len(&self) -> usize {
        match self {
            Waveform::Chirp { grid, .. } => grid.n,
            Waveform::Exponential { n } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length of the parameter domain (`N Ts` for delays, `N` for frequencies).
    pub fn period(&self) -> f64 {
        match self {
            Waveform::Chirp { grid, .. } => grid.period(),
            Waveform::Exponential { n } => *n as f64,
        }
    }

    pub fn atom(&self, b: f64) -> CVector {
        let mut out = CVector::zeros(self.len());
        self.atom_into(b, out.as_mut_slice());
        out
    }

    pub fn atom_into(&self, b: f64, out: &mut [C64]) {
        match *self {
            Waveform::Chirp { spec, grid, scale } => {
                let period = grid.period();
                let half_t = 0.5 * spec.duration;
                let sweep = spec.delta_f / (2.0 * spec.duration);
                for (i, o) in out.iter_mut().enumerate() {
                    let tau = wrap_centered(i as f64 * grid.ts - b, period);
                    *o = if tau.abs() < half_t {
                        let window = half_t * (1.0 + (2.0 * PI * tau / spec.duration).cos());
                        let phase = 2.0 * PI * (spec.f0 + sweep * tau) * tau;
                        C64::from_polar(scale * window, phase)
                    } else {
                        C64::new(0.0, 0.0)
                    };
                }
            }
            Waveform::Exponential { n } => {
                let amp = (n as f64).sqrt().recip();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = C64::from_polar(amp, 2.0 * PI * b * i as f64 / n as f64);
                }
            }
        }
    }

    /// `sum_k a_k g(b_k)`.
    pub fn superpose(&self, amplitudes: &[C64], params: &[f64]) -> CVector {
        let mut out = CVector::zeros(self.len());
        let mut atom = CVector::zeros(self.len());
        for (&a, &b) in amplitudes.iter().zip(params) {
            self.atom_into(b, atom.as_mut_slice());
            out.axpy(a, &atom, C64::new(1.0, 0.0));
        }
        out
    }
}

/// Maps `x` into `[-period/2, period/2)`.
pub(crate) fn wrap_centered(x: f64, period: f64) -> f64 {
    x - period * ((x + 0.5 * period) / period).floor()
}

/// Circular distance between two parameters on a domain of length `period`.
pub fn circular_distance(a: f64, b: f64, period: f64) -> f64 {
    wrap_centered(a - b, period).abs()
}

/// Samples the chirp delayed by `delay` seconds at `t = i Ts`, wrapped modulo `N Ts`.
pub fn sample_pulse(spec: &PulseSpec, grid: &SamplingGrid, delay: f64) -> Result<CVector> {
    if !(0.0..grid.period()).contains(&delay) {
        return Err(Error::domain(format!(
            "delay {delay:e} outside [0, {:e})",
            grid.period()
        )));
    }
    Ok(Waveform::chirp(*spec, *grid)?.atom(delay))
}

/// `(1/sqrt(N)) exp(j 2 pi f t / N)` for `t = 0..N-1`.
pub fn sample_exponential(freq_param: f64, grid: &SamplingGrid) -> CVector {
    Waveform::exponential(grid.n).atom(freq_param)
}

pub fn synthesize(params: &SparseSignalParams, spec: &PulseSpec, grid: &SamplingGrid) -> Result<CVector> {
    params.validate(grid)?;
    let wf = Waveform::chirp(*spec, *grid)?;
    Ok(wf.superpose(&params.amplitudes, &params.delays))
}

/// Adds circular complex Gaussian noise with expected energy `energy_ref / snr`.
pub fn add_noise(clean: &CVector, spec: &NoiseSpec, energy_ref: f64) -> CVector {
    if spec.is_none() || clean.is_empty() {
        return clean.clone();
    }
    let per_entry = energy_ref / (spec.snr * clean.len() as f64);
    let sd = (0.5 * per_entry).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    clean.map(|z| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        z + C64::new(sd * re, sd * im)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn reference() -> (PulseSpec, SamplingGrid) {
        (PulseSpec::reference(), SamplingGrid::reference())
    }

    #[test]
    fn reference_pulse_has_unit_norm() {
        let (spec, grid) = reference();
        let g = sample_pulse(&spec, &grid, 0.0).unwrap();
        assert!((g.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn integer_delay_is_a_circular_shift() {
        let (spec, grid) = reference();
        let g0 = sample_pulse(&spec, &grid, 0.0).unwrap();
        let g7 = sample_pulse(&spec, &grid, 7.0 * grid.ts).unwrap();
        let shifted: Vec<C64> = (0..grid.n).map(|i| g0[(i + grid.n - 7) % grid.n]).collect();
        let dev = g7.iter().zip(&shifted).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(dev < 1e-12, "max deviation {dev:e}");
    }

    #[test]
    fn delay_out_of_range_is_rejected() {
        let (spec, grid) = reference();
        assert!(matches!(sample_pulse(&spec, &grid, -1e-9), Err(Error::Domain(_))));
        assert!(matches!(sample_pulse(&spec, &grid, grid.period()), Err(Error::Domain(_))));
    }

    #[test]
    fn norms_preserved_under_translation() {
        let (spec, grid) = reference();
        let wf = Waveform::chirp(spec, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let b1 = rng.random_range(0.0..grid.period());
            let b2 = rng.random_range(0.0..grid.period());
            let d = (wf.atom(b1).norm() - wf.atom(b2).norm()).abs();
            assert!(d < 1e-9, "norm mismatch {d:e} at {b1:e}, {b2:e}");
        }
    }

    #[test]
    fn local_curvature_is_symmetric() {
        let (spec, grid) = reference();
        let wf = Waveform::chirp(spec, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let b = rng.random_range(0.0..grid.period());
            let delta = rng.random_range(0.0..0.5) * grid.ts;
            let g = wf.atom(b);
            let back = (&g - wf.atom(b - delta)).norm();
            let fwd = (&g - wf.atom(b + delta)).norm();
            assert!((back - fwd).abs() < 1e-6, "asymmetry {:e}", (back - fwd).abs());
        }
    }

    #[test]
    fn exponential_atoms() {
        let grid = SamplingGrid::new(100, 1.0).unwrap();
        let e0 = sample_exponential(0.0, &grid);
        assert!(e0.iter().all(|z| (z - C64::new(0.1, 0.0)).norm() < 1e-15));
        assert!((sample_exponential(1.0, &grid).norm() - 1.0).abs() < 1e-12);

        // Dirichlet kernel |sin(pi d) / (N sin(pi d / N))| for a frequency offset d.
        let ip = sample_exponential(3.0, &grid).dotc(&sample_exponential(3.5, &grid));
        let d: f64 = 0.5;
        let n = 100.0;
        let dirichlet = ((PI * d).sin() / (n * (PI * d / n).sin())).abs();
        assert!((ip.norm() - dirichlet).abs() < 1e-12);
    }

    #[test]
    fn synthesis_single_term_and_superposition() {
        let (spec, grid) = reference();
        let b1 = 40.0 * grid.ts;
        let b2 = 123.37 * grid.ts;
        let one = SparseSignalParams::new(vec![C64::new(1.0, 0.0)], vec![b1]).unwrap();
        assert_eq!(synthesize(&one, &spec, &grid).unwrap(), sample_pulse(&spec, &grid, b1).unwrap());

        let two = SparseSignalParams::new(vec![C64::new(2.0, 0.0), C64::new(0.0, -3.0)], vec![b1, b2]).unwrap();
        let f = synthesize(&two, &spec, &grid).unwrap();
        let expected = sample_pulse(&spec, &grid, b1).unwrap() * C64::new(2.0, 0.0)
            + sample_pulse(&spec, &grid, b2).unwrap() * C64::new(0.0, -3.0);
        assert!((f - expected).camax() < 1e-12);
    }

    #[test]
    fn synthesis_obeys_triangle_inequality() {
        let (spec, grid) = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let amps: Vec<C64> =
                (0..3).map(|_| C64::new(rng.random_range(1.0..10.0), rng.random_range(1.0..10.0))).collect();
            let delays: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..grid.period())).collect();
            let bound: f64 = amps.iter().map(|a| a.norm()).sum();
            let f = synthesize(&SparseSignalParams::new(amps, delays).unwrap(), &spec, &grid).unwrap();
            assert!(f.norm() <= bound + 1e-12);
        }
    }

    #[test]
    fn no_noise_is_bit_exact() {
        let (spec, grid) = reference();
        let g = sample_pulse(&spec, &grid, 1e-6).unwrap();
        assert_eq!(add_noise(&g, &NoiseSpec::none(), 1.0), g);
    }

    #[test]
    fn noise_is_seeded() {
        let x = CVector::from_element(64, C64::new(1.0, 0.0));
        let spec = NoiseSpec::measurement(10.0, 42);
        assert_eq!(add_noise(&x, &spec, 64.0), add_noise(&x, &spec, 64.0));
        assert_ne!(add_noise(&x, &spec, 64.0), add_noise(&x, &NoiseSpec::measurement(10.0, 43), 64.0));
    }

    #[test]
    fn empirical_snr_matches_request() {
        let x = CVector::from_element(200, C64::new(0.5, -0.25));
        let energy = x.norm_squared();
        let mut noise_energy = 0.0;
        for seed in 0..1000 {
            let noisy = add_noise(&x, &NoiseSpec::measurement(1000.0, seed), energy);
            noise_energy += (noisy - &x).norm_squared();
        }
        let snr = energy / (noise_energy / 1000.0);
        assert!((snr / 1000.0 - 1.0).abs() < 0.1, "empirical snr {snr}");
    }

    #[test]
    fn wrap_centered_range() {
        for &x in &[-7.5, -0.5, 0.0, 0.49, 0.5, 3.2, 10.0] {
            let w = wrap_centered(x, 1.0);
            assert!((-0.5..0.5).contains(&w), "{x} -> {w}");
            assert!(((x - w) - (x - w).round()).abs() < 1e-12);
        }
    }
}
