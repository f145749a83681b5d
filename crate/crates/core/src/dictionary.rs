//! Parametric dictionaries, coherence bands and per-atom polar arc frames.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{CMatrix, CVector, PulseSpec, SamplingGrid, Waveform, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictionaryKind {
    /// Circularly shifted chirps (circulant at redundancy 1).
    Tde,
    /// Complex exponentials on a 1/c frequency grid.
    Fe,
}

impl std::str::FromStr for DictionaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tde" => Ok(DictionaryKind::Tde),
            "fe" => Ok(DictionaryKind::Fe),
            other => Err(Error::config(format!("unknown problem kind '{other}' (expected tde or fe)"))),
        }
    }
}

/// Sampled atoms `g(b_p)` on a uniform parameter grid `b_p = p * spacing`.
#[derive(Debug, Clone)]
pub struct ParametricDictionary {
    kind: DictionaryKind,
    waveform: Waveform,
    atoms: CMatrix,
    params: Vec<f64>,
    spacing: f64,
    redundancy: usize,
}

impl ParametricDictionary {
    pub fn tde(spec: PulseSpec, grid: SamplingGrid, redundancy: usize) -> Result<Self> {
        Self::from_waveform(DictionaryKind::Tde, Waveform::chirp(spec, grid)?, grid.ts, redundancy)
    }

    pub fn fe(n: usize, redundancy: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("dictionary needs at least 2 samples, got {n}")));
        }
        Self::from_waveform(DictionaryKind::Fe, Waveform::exponential(n), 1.0, redundancy)
    }

    fn from_waveform(kind: DictionaryKind, waveform: Waveform, base_step: f64, redundancy: usize) -> Result<Self> {
        if redundancy < 1 {
            return Err(Error::domain("redundancy factor must be at least 1"));
        }
        let n = waveform.len();
        let p = n * redundancy;
        let spacing = base_step / redundancy as f64;
        let params: Vec<f64> = (0..p).map(|i| i as f64 * spacing).collect();
        let mut atoms = CMatrix::zeros(n, p);
        for (j, &b) in params.iter().enumerate() {
            let mut col = atoms.column_mut(j);
            waveform.atom_into(b, col.as_mut_slice());
        }
        Ok(ParametricDictionary { kind, waveform, atoms, params, spacing, redundancy })
    }

    pub(crate) fn from_parts(
        kind: DictionaryKind,
        waveform: Waveform,
        atoms: CMatrix,
        spacing: f64,
        redundancy: usize,
    ) -> Self {
        let params = (0..atoms.ncols()).map(|i| i as f64 * spacing).collect();
        ParametricDictionary { kind, waveform, atoms, params, spacing, redundancy }
    }

    pub fn kind(&self) -> DictionaryKind {
        self.kind
    }

    pub fn waveform(&self) -> &Waveform {
        &self.waveform
    }

    pub fn atoms(&self) -> &CMatrix {
        &self.atoms
    }

    pub fn atom(&self, p: usize) -> CVector {
        self.atoms.column(p).into_owned()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param(&self, p: usize) -> f64 {
        self.params[p]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn redundancy(&self) -> usize {
        self.redundancy
    }

    pub fn signal_len(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    /// Delay dictionaries wrap around; frequency grids clamp at their edges.
    pub fn is_circular(&self) -> bool {
        self.kind == DictionaryKind::Tde
    }

    /// Length of the parameter domain covered by the grid.
    pub fn period(&self) -> f64 {
        self.spacing * self.len() as f64
    }

    /// Index `p + offset`, wrapped for circular dictionaries and `None` past an edge otherwise.
    pub fn neighbor(&self, p: usize, offset: isize) -> Option<usize> {
        let len = self.len() as isize;
        let q = p as isize + offset;
        if self.is_circular() {
            Some(q.rem_euclid(len) as usize)
        } else if (0..len).contains(&q) {
            Some(q as usize)
        } else {
            None
        }
    }

    /// Continuous-model atom at an arbitrary parameter value.
    pub fn atom_at(&self, b: f64) -> CVector {
        self.waveform.atom(b)
    }

    /// Grid index closest to `b`.
    pub fn nearest_index(&self, b: f64) -> usize {
        let len = self.len() as isize;
        let idx = (b / self.spacing).round() as isize;
        if self.is_circular() {
            idx.rem_euclid(len) as usize
        } else {
            idx.clamp(0, len - 1) as usize
        }
    }

    /// `mu(i, k) = |<g(b_i), g(b_k)>|`.
    pub fn coherence(&self, i: usize, k: usize) -> f64 {
        self.atoms.column(i).dotc(&self.atoms.column(k)).norm()
    }

    /// Coherence of every atom against atom `k`.
    pub fn coherence_row(&self, k: usize) -> Vec<f64> {
        let col = self.atoms.column(k);
        (0..self.len()).map(|i| self.atoms.column(i).dotc(&col).norm()).collect()
    }
}

/// Builds a dictionary of the requested kind; `spec` is required for delay dictionaries.
pub fn build_dictionary(
    kind: DictionaryKind,
    spec: Option<&PulseSpec>,
    grid: &SamplingGrid,
    redundancy: usize,
) -> Result<ParametricDictionary> {
    match kind {
        DictionaryKind::Tde => {
            let spec = spec.ok_or_else(|| Error::config("delay dictionary needs a pulse spec"))?;
            ParametricDictionary::tde(*spec, *grid, redundancy)
        }
        DictionaryKind::Fe => ParametricDictionary::fe(grid.n, redundancy),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandExclusionConfig {
    /// Coherence level above which atoms are excluded; 1 disables exclusion.
    pub eta: f64,
    /// Coherences at or below this are treated as zero.
    pub mu_floor: f64,
}

impl BandExclusionConfig {
    pub const DEFAULT_MU_FLOOR: f64 = 1e-2;

    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::domain(format!("eta must lie in [0, 1], got {eta}")));
        }
        Ok(BandExclusionConfig { eta, mu_floor: Self::DEFAULT_MU_FLOOR })
    }

    pub fn disabled() -> Self {
        BandExclusionConfig { eta: 1.0, mu_floor: Self::DEFAULT_MU_FLOOR }
    }

    fn threshold(&self) -> f64 {
        self.eta.max(self.mu_floor)
    }
}

impl Default for BandExclusionConfig {
    fn default() -> Self {
        BandExclusionConfig { eta: 0.0, mu_floor: Self::DEFAULT_MU_FLOOR }
    }
}

/// `B_eta(S)`: every atom whose coherence with some member of `support` exceeds the threshold.
pub fn band_exclusion(
    dict: &ParametricDictionary,
    support: &BTreeSet<usize>,
    cfg: &BandExclusionConfig,
) -> BTreeSet<usize> {
    let threshold = cfg.threshold();
    let mut band = BTreeSet::new();
    if threshold >= 1.0 {
        return band;
    }
    for &k in support {
        band.extend(
            dict.coherence_row(k)
                .into_iter()
                .enumerate()
                .filter(|&(_, mu)| mu > threshold)
                .map(|(i, _)| i),
        );
    }
    band
}

/// Polar arc frames `(c, u, v)` for every atom, with the atom norm `r` and
/// half-angle `theta` between `g(b_p)` and `g(b_p - spacing/2)`.
#[derive(Debug, Clone)]
pub struct ArcBasisSet {
    pub(crate) c: CMatrix,
    pub(crate) u: CMatrix,
    pub(crate) v: CMatrix,
    pub(crate) r: Vec<f64>,
    pub(crate) theta: Vec<f64>,
    pub(crate) spacing: f64,
    pub(crate) params: Vec<f64>,
}

impl ArcBasisSet {
    pub fn c_vecs(&self) -> &CMatrix {
        &self.c
    }

    pub fn u_vecs(&self) -> &CMatrix {
        &self.u
    }

    pub fn v_vecs(&self) -> &CMatrix {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.c.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.c.ncols() == 0
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn param(&self, p: usize) -> f64 {
        self.params[p]
    }

    /// Atom norm at index `p`.
    pub fn r_at(&self, p: usize) -> f64 {
        self.r[p]
    }

    /// Arc half-angle at index `p`.
    pub fn theta_at(&self, p: usize) -> f64 {
        self.theta[p]
    }

    /// Norm of the central atom (all atoms share it for translation-invariant families).
    pub fn r(&self) -> f64 {
        self.r[self.len() / 2]
    }

    pub fn theta(&self) -> f64 {
        self.theta[self.len() / 2]
    }

    pub fn frame(&self, p: usize) -> [CVector; 3] {
        [
            self.c.column(p).into_owned(),
            self.u.column(p).into_owned(),
            self.v.column(p).into_owned(),
        ]
    }
}

/// Arc frame of a single atom.
#[derive(Debug, Clone)]
pub(crate) struct ArcFrame {
    pub c: CVector,
    pub u: CVector,
    pub v: CVector,
    pub r: f64,
    pub theta: f64,
}

impl ArcFrame {
    /// Solves `[1 r cos(t) -r sin(t); 1 r 0; 1 r cos(t) r sin(t)] [c; u; v] = [g-; g0; g+]`
    /// in closed form from the atom at `b` and its half-spacing neighbors.
    pub fn new(wf: &Waveform, b: f64, spacing: f64) -> std::result::Result<Self, f64> {
        let half = 0.5 * spacing;
        let center = wf.atom(b);
        let lower = wf.atom(b - half);
        let upper = wf.atom(b + half);
        let r = center.norm();
        let cos_t = center.dotc(&lower).re / (r * lower.norm());
        let theta = cos_t.clamp(-1.0, 1.0).acos();
        if !(theta > 1e-9) {
            return Err(theta);
        }
        let u = (&upper + &lower - &center * C64::from(2.0)) * C64::from(1.0 / (2.0 * r * (theta.cos() - 1.0)));
        let v = (&upper - &lower) * C64::from(1.0 / (2.0 * r * theta.sin()));
        let c = &center - &u * C64::from(r);
        Ok(ArcFrame { c, u, v, r, theta })
    }

    pub fn point(&self, delta_n: f64, spacing: f64) -> CVector {
        let angle = 2.0 * delta_n * self.theta / spacing;
        &self.c + &self.u * C64::from(self.r * angle.cos()) + &self.v * C64::from(self.r * angle.sin())
    }
}

/// Builds the arc frames from exact half-spacing anchors of the continuous model.
pub fn build_arc_bases(dict: &ParametricDictionary) -> Result<ArcBasisSet> {
    let n = dict.signal_len();
    let p_len = dict.len();
    let mut c = CMatrix::zeros(n, p_len);
    let mut u = CMatrix::zeros(n, p_len);
    let mut v = CMatrix::zeros(n, p_len);
    let mut r = Vec::with_capacity(p_len);
    let mut theta = Vec::with_capacity(p_len);
    for p in 0..p_len {
        let frame = ArcFrame::new(dict.waveform(), dict.param(p), dict.spacing())
            .map_err(|theta| Error::DegenerateArc { atom: p, theta })?;
        c.set_column(p, &frame.c);
        u.set_column(p, &frame.u);
        v.set_column(p, &frame.v);
        r.push(frame.r);
        theta.push(frame.theta);
    }
    Ok(ArcBasisSet { c, u, v, r, theta, spacing: dict.spacing(), params: dict.params().to_vec() })
}

/// Point on atom `p`'s arc at offset `delta_n`, `|delta_n| <= spacing/2`.
pub fn interpolate_on_arc(arcs: &ArcBasisSet, p: usize, delta_n: f64) -> Result<CVector> {
    let half = 0.5 * arcs.spacing;
    if !(delta_n.abs() <= half * (1.0 + 1e-12)) {
        return Err(Error::domain(format!("offset {delta_n:e} outside +/-{half:e}")));
    }
    if p >= arcs.len() {
        return Err(Error::domain(format!("atom index {p} out of range")));
    }
    let angle = 2.0 * delta_n * arcs.theta[p] / arcs.spacing;
    let (cu, cv) = (arcs.r[p] * angle.cos(), arcs.r[p] * angle.sin());
    Ok(arcs.c.column(p) + arcs.u.column(p) * C64::from(cu) + arcs.v.column(p) * C64::from(cv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::sample_pulse;
    use nalgebra::SVD;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tde(c: usize) -> ParametricDictionary {
        ParametricDictionary::tde(PulseSpec::reference(), SamplingGrid::reference(), c).unwrap()
    }

    #[test]
    fn tde_dictionary_is_circulant() {
        let d = tde(1);
        assert_eq!((d.signal_len(), d.len()), (500, 500));
        let col0 = d.atom(0);
        for k in [1usize, 17, 250, 499] {
            let colk = d.atom(k);
            for i in 0..500 {
                assert!((colk[(i + k) % 500] - col0[i]).norm() < 1e-12);
            }
        }
        for p in 0..d.len() {
            assert!((d.atoms().column(p).norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fe_dictionary_is_orthonormal_at_unit_redundancy() {
        let d = ParametricDictionary::fe(100, 1).unwrap();
        let gram = d.atoms().adjoint() * d.atoms();
        let eye = CMatrix::identity(100, 100);
        assert!((gram - eye).camax() < 1e-9);
        assert!(d.coherence(3, 7) < 1e-9);
        assert!((d.coherence(5, 5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn redundancy_raises_adjacent_coherence() {
        let direct = |c: usize| {
            let d = tde(c);
            d.atom(100).dotc(&d.atom(101)).norm()
        };
        assert!(direct(2) > direct(1));
        assert_eq!(tde(2).len(), 1000);
        assert!(ParametricDictionary::tde(PulseSpec::reference(), SamplingGrid::reference(), 0).is_err());
    }

    #[test]
    fn disjoint_pulses_are_incoherent() {
        let d = tde(1);
        for k in [50usize, 73, 200, 250, 450] {
            assert!(d.coherence(0, k) < 1e-9, "k={k}: {}", d.coherence(0, k));
        }
        assert!((d.coherence(10, 123) - d.coherence(123, 10)).abs() < 1e-15);
    }

    #[test]
    fn band_exclusion_edge_cases() {
        let d = tde(1);
        let s: BTreeSet<usize> = [100].into_iter().collect();
        assert!(band_exclusion(&d, &s, &BandExclusionConfig::disabled()).is_empty());
        assert!(band_exclusion(&d, &BTreeSet::new(), &BandExclusionConfig::default()).is_empty());
    }

    #[test]
    fn band_exclusion_matches_exhaustive_scan() {
        let d = tde(1);
        let s: BTreeSet<usize> = [100].into_iter().collect();
        let band = band_exclusion(&d, &s, &BandExclusionConfig::default());
        let scan: BTreeSet<usize> = (0..d.len())
            .filter(|&i| d.atom(i).dotc(&d.atom(100)).norm() > 1e-2)
            .collect();
        assert_eq!(band, scan);
        assert!(band.contains(&100));
        let lo = *band.iter().next().unwrap();
        let hi = *band.iter().last().unwrap();
        assert_eq!(hi - lo + 1, band.len(), "band must be contiguous");
        assert!(hi - lo < 100);
    }

    #[test]
    fn band_exclusion_is_monotone() {
        let d = tde(1);
        let s1: BTreeSet<usize> = [40].into_iter().collect();
        let s2: BTreeSet<usize> = [40, 300].into_iter().collect();
        let cfg = BandExclusionConfig::default();
        assert!(band_exclusion(&d, &s1, &cfg).is_subset(&band_exclusion(&d, &s2, &cfg)));
        let loose = BandExclusionConfig::new(0.05).unwrap();
        let tight = BandExclusionConfig::new(0.5).unwrap();
        assert!(band_exclusion(&d, &s2, &tight).is_subset(&band_exclusion(&d, &s2, &loose)));
    }

    #[test]
    fn tde_dictionary_full_rank() {
        let d = ParametricDictionary::tde(
            PulseSpec::reference(),
            SamplingGrid::from_rate(100, 50e6).unwrap(),
            1,
        )
        .unwrap();
        let svd = SVD::new(d.atoms().clone(), false, false);
        let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(smin > 1e-8, "smallest singular value {smin:e}");
    }

    #[test]
    fn arcs_reproduce_anchors() {
        let d = tde(1);
        let arcs = build_arc_bases(&d).unwrap();
        let spec = PulseSpec::reference();
        let grid = SamplingGrid::reference();
        let half = 0.5 * d.spacing();
        for p in [1usize, 77, 250, 498] {
            let [c, u, v] = arcs.frame(p);
            let (r, th) = (arcs.r_at(p), arcs.theta_at(p));
            let up = &c + &u * C64::from(r * th.cos()) + &v * C64::from(r * th.sin());
            let truth = sample_pulse(&spec, &grid, d.param(p) + half).unwrap();
            assert!((up - &truth).norm() < 1e-9);
            let mid = interpolate_on_arc(&arcs, p, 0.0).unwrap();
            assert!((mid - d.atom(p)).norm() < 1e-12);
            let lo = interpolate_on_arc(&arcs, p, -half).unwrap();
            assert!((lo - sample_pulse(&spec, &grid, d.param(p) - half).unwrap()).norm() < 1e-9);
            // Center anchor identity c + r u = g(b_p).
            assert!((&c + &u * C64::from(r) - d.atom(p)).norm() < 1e-9);
        }
        assert!((arcs.r() - 1.0).abs() < 1e-12);
        assert!(arcs.theta() > 0.0 && arcs.theta() < std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn arc_angle_is_shift_invariant() {
        let d = tde(1);
        let arcs = build_arc_bases(&d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let wf = d.waveform();
        for _ in 0..10 {
            let p = rng.random_range(0..d.len());
            let g0 = d.atom(p);
            let gm = wf.atom(d.param(p) - 0.5 * d.spacing());
            let th = (g0.dotc(&gm).re / (g0.norm() * gm.norm())).acos();
            assert!((th - arcs.theta()).abs() < 1e-9);
        }
    }

    #[test]
    fn arc_points_stay_near_the_sphere() {
        // The frames from this construction are not orthonormal, so arc points
        // are not at distance r from c; they do stay close to the atom sphere.
        let d = tde(1);
        let arcs = build_arc_bases(&d).unwrap();
        let half = 0.5 * d.spacing();
        for k in 0..=20 {
            let dn = -half + k as f64 * half / 10.0;
            let pt = interpolate_on_arc(&arcs, 200, dn).unwrap();
            assert!((pt.norm() - arcs.r()).abs() < 1e-2);
        }
    }

    #[test]
    fn quarter_cell_point_is_within_arc_error() {
        let d = tde(1);
        let arcs = build_arc_bases(&d).unwrap();
        let dn = 0.25 * d.spacing();
        let approx = interpolate_on_arc(&arcs, 120, dn).unwrap();
        let truth = d.atom_at(d.param(120) + dn);
        // Worst-case arc deviation for this pulse at c = 1 is ~7.7e-3.
        assert!((approx - truth).norm() <= 7.7e-3 + 1e-4);
        assert!(interpolate_on_arc(&arcs, 120, 0.6 * d.spacing()).is_err());
    }

    #[test]
    fn fe_neighbors_clamp() {
        let d = ParametricDictionary::fe(16, 1).unwrap();
        assert_eq!(d.neighbor(0, -1), None);
        assert_eq!(d.neighbor(15, 1), None);
        let t = tde(1);
        assert_eq!(t.neighbor(0, -1), Some(499));
        assert_eq!(t.nearest_index(499.7 * t.spacing()), 0);
    }
}
