//! Random-demodulator measurement operator.
//!
//! `Psi = H diag(eps)`: the input is chipped by an i.i.d. +/-1 sequence and
//! integrated over consecutive blocks. When M does not divide N the blocks
//! have sizes floor(N/M) and ceil(N/M), boundaries at `round(m N / M)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{add_noise, CMatrix, CVector, NoiseKind, NoiseSpec, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    n: usize,
    kappa: f64,
    seed: u64,
    chips: Vec<i8>,
    bounds: Vec<usize>,
}

impl MeasurementOperator {
    pub fn new(n: usize, kappa: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("signal length must be positive"));
        }
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::config(format!("kappa must lie in (0, 1], got {kappa}")));
        }
        let exact = kappa * n as f64;
        let m = exact.round();
        if (exact - m).abs() > 1e-9 * n as f64 || m < 1.0 {
            return Err(Error::config(format!(
                "kappa * N = {exact} is not a positive integer; pick kappa as a multiple of 1/{n}"
            )));
        }
        let m = m as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chips = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let bounds = (0..=m).map(|i| ((i * n) as f64 / m as f64).round() as usize).collect();
        Ok(MeasurementOperator { n, kappa, seed, chips, bounds })
    }

    /// Rebuilds an operator from a stored chip sequence.
    pub(crate) fn from_chips(chips: Vec<i8>, m: usize, kappa: f64, seed: u64) -> Result<Self> {
        let n = chips.len();
        if m == 0 || m > n || chips.iter().any(|&c| c != 1 && c != -1) {
            return Err(Error::Format("invalid chip sequence".into()));
        }
        let bounds = (0..=m).map(|i| ((i * n) as f64 / m as f64).round() as usize).collect();
        Ok(MeasurementOperator { n, kappa, seed, chips, bounds })
    }

    pub fn rows(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn chips(&self) -> &[i8] {
        &self.chips
    }

    /// Column range integrated by row `m`.
    pub fn block(&self, m: usize) -> std::ops::Range<usize> {
        self.bounds[m]..self.bounds[m + 1]
    }

    /// Dense `M x N` matrix with entries in {-1, 0, +1}.
    pub fn matrix(&self) -> DMatrix<i8> {
        let mut a = DMatrix::zeros(self.rows(), self.n);
        for m in 0..self.rows() {
            for j in self.block(m) {
                a[(m, j)] = self.chips[j];
            }
        }
        a
    }

    pub fn apply(&self, f: &CVector) -> Result<CVector> {
        if f.len() != self.n {
            return Err(Error::dim(format!("operator expects length {}, got {}", self.n, f.len())));
        }
        Ok(self.apply_slice(f.as_slice()))
    }

    fn apply_slice(&self, f: &[C64]) -> CVector {
        CVector::from_iterator(
            self.rows(),
            (0..self.rows()).map(|m| {
                self.block(m).fold(C64::new(0.0, 0.0), |acc, j| acc + f[j] * f64::from(self.chips[j]))
            }),
        )
    }

    /// `Psi X` column by column.
    pub fn apply_matrix(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.nrows() != self.n {
            return Err(Error::dim(format!("operator expects {} rows, got {}", self.n, x.nrows())));
        }
        let mut out = CMatrix::zeros(self.rows(), x.ncols());
        for (j, col) in x.column_iter().enumerate() {
            let y = self.apply_slice(col.as_slice());
            out.set_column(j, &y);
        }
        Ok(out)
    }

    /// `Psi^T y`.
    pub fn adjoint(&self, y: &CVector) -> Result<CVector> {
        if y.len() != self.rows() {
            return Err(Error::dim(format!("adjoint expects length {}, got {}", self.rows(), y.len())));
        }
        let mut out = CVector::zeros(self.n);
        for m in 0..self.rows() {
            for j in self.block(m) {
                out[j] = y[m] * f64::from(self.chips[j]);
            }
        }
        Ok(out)
    }
}

pub fn build_operator(n: usize, kappa: f64, seed: u64) -> Result<MeasurementOperator> {
    MeasurementOperator::new(n, kappa, seed)
}

/// `y = Psi (f + n) + w`; the noise kind selects which of `n`, `w` is present.
pub fn measure(op: &MeasurementOperator, f: &CVector, noise: &NoiseSpec) -> Result<CVector> {
    match noise.kind {
        _ if noise.is_none() => op.apply(f),
        NoiseKind::None => op.apply(f),
        NoiseKind::Signal => {
            let noisy = add_noise(f, noise, f.norm_squared());
            op.apply(&noisy)
        }
        NoiseKind::Measurement => {
            let clean = op.apply(f)?;
            let energy = clean.norm_squared();
            Ok(add_noise(&clean, noise, energy))
        }
    }
}
