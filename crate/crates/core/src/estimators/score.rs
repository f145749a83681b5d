use serde::{Deserialize, Serialize};

use super::EstimationResult;
use crate::dictionary::{DictionaryKind, ParametricDictionary};
use crate::signal::{circular_distance, CVector, SparseSignalParams};

/// Estimates beyond this count are ignored by the matcher.
const MAX_MATCHED: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// Mean squared matched parameter error; µs² for delay dictionaries.
    pub b_mse: f64,
    /// `||f - f_hat||^2 / ||f||^2`.
    pub f_rel_err: f64,
    /// Estimate index matched to each true component, `None` when missing.
    pub assignment: Vec<Option<usize>>,
}

/// Scores `result` against the planted components by minimum-cost one-to-one
/// matching. A true component left without an estimate costs half a cell, squared.
pub fn match_and_score(
    truth: &SparseSignalParams,
    f_true: &CVector,
    result: &EstimationResult,
    dict: &ParametricDictionary,
) -> Score {
    let est = &result.b_hat[..result.b_hat.len().min(MAX_MATCHED)];
    let dist = |a: f64, b: f64| {
        if dict.is_circular() {
            circular_distance(a, b, dict.period())
        } else {
            (a - b).abs()
        }
    };
    let miss = (0.5 * dict.spacing()).powi(2);
    let k = truth.len();
    let dummies = k.saturating_sub(est.len());

    // best[mask]: cheapest cost for the first popcount(mask) + used-dummy truths.
    // Truth i is placed after exactly i assignments, so the dummy count is implied.
    let states = 1usize << est.len();
    let mut cost = vec![vec![f64::INFINITY; states]; k + 1];
    let mut from: Vec<Vec<(usize, Option<usize>)>> = vec![vec![(0, None); states]; k + 1];
    cost[0][0] = 0.0;
    for i in 0..k {
        for mask in 0..states {
            let c = cost[i][mask];
            if !c.is_finite() {
                continue;
            }
            let used_dummies = i - mask.count_ones() as usize;
            if used_dummies < dummies && c + miss < cost[i + 1][mask] {
                cost[i + 1][mask] = c + miss;
                from[i + 1][mask] = (mask, None);
            }
            for (j, &b) in est.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    continue;
                }
                let next = mask | (1 << j);
                let v = c + dist(truth.delays[i], b).powi(2);
                if v < cost[i + 1][next] {
                    cost[i + 1][next] = v;
                    from[i + 1][next] = (mask, Some(j));
                }
            }
        }
    }
    let (mut mask, total) = cost[k]
        .iter()
        .enumerate()
        .filter(|(m, _)| m.count_ones() as usize == k.min(est.len()))
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(m, &c)| (m, c))
        .unwrap_or((0, k as f64 * miss));
    let mut assignment = vec![None; k];
    for i in (1..=k).rev() {
        let (prev, j) = from[i][mask];
        assignment[i - 1] = j;
        mask = prev;
    }

    let unit = match dict.kind() {
        DictionaryKind::Tde => 1e12,
        DictionaryKind::Fe => 1.0,
    };
    let energy = f_true.norm_squared();
    let f_rel_err = if energy > 0.0 { (f_true - &result.f_hat).norm_squared() / energy } else { 0.0 };
    Score { b_mse: total / k.max(1) as f64 * unit, f_rel_err, assignment }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{PulseSpec, SamplingGrid, C64};
    use proptest::prelude::*;

    const TS: f64 = 1.0 / 50e6;

    fn dict() -> ParametricDictionary {
        ParametricDictionary::tde(PulseSpec::reference(), SamplingGrid::reference(), 1).unwrap()
    }

    fn planted(d: &ParametricDictionary, delays: &[f64]) -> (SparseSignalParams, CVector) {
        let amps: Vec<C64> = (0..delays.len()).map(|i| C64::new(1.0 + i as f64, -2.0)).collect();
        let f = d.waveform().superpose(&amps, delays);
        (SparseSignalParams::new(amps, delays.to_vec()).unwrap(), f)
    }

    #[test]
    fn perfect_estimates_score_zero() {
        let d = dict();
        let (truth, f) = planted(&d, &[1e-7, 4e-7, 8e-7]);
        let r = EstimationResult::from_estimates(&d, truth.delays.clone(), truth.amplitudes.clone());
        let s = match_and_score(&truth, &f, &r, &d);
        assert_eq!(s.b_mse, 0.0);
        assert!(s.f_rel_err < 1e-20);
        assert_eq!(s.assignment, vec![Some(0), Some(1), Some(2)]);
    }

    #[test]
    fn half_sample_offset() {
        let d = dict();
        let (truth, f) = planted(&d, &[3e-7]);
        let r = EstimationResult::from_estimates(&d, vec![3e-7 + TS / 2.0], vec![C64::new(1.0, -2.0)]);
        let s = match_and_score(&truth, &f, &r, &d);
        assert!((s.b_mse - 1e-4).abs() < 1e-12, "{}", s.b_mse);
    }

    #[test]
    fn wraparound_counts_as_close() {
        let d = dict();
        let (truth, f) = planted(&d, &[0.1 * TS]);
        let r = EstimationResult::from_estimates(&d, vec![d.period() - 0.1 * TS], vec![C64::new(1.0, -2.0)]);
        let s = match_and_score(&truth, &f, &r, &d);
        assert!((s.b_mse - (0.2 * TS * 1e6).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn missing_estimate_costs_half_a_cell() {
        let d = dict();
        let (truth, f) = planted(&d, &[1e-7, 5e-7]);
        let r = EstimationResult::from_estimates(&d, vec![5e-7], vec![C64::new(2.0, -2.0)]);
        let s = match_and_score(&truth, &f, &r, &d);
        assert_eq!(s.assignment, vec![None, Some(0)]);
        assert!((s.b_mse - (0.5 * TS * 1e6).powi(2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn a_bad_estimate_is_not_replaced_by_the_penalty() {
        let d = dict();
        let (truth, f) = planted(&d, &[1e-7]);
        let r = EstimationResult::from_estimates(&d, vec![6e-7], vec![C64::new(1.0, 0.0)]);
        let s = match_and_score(&truth, &f, &r, &d);
        assert_eq!(s.assignment, vec![Some(0)]);
        assert!((s.b_mse - 0.25).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn permutation_invariance(
            delays in proptest::collection::vec(0.0..9.9e-6f64, 1..5),
            jitter in proptest::collection::vec(-2e-8..2e-8f64, 5),
            rot in 0usize..5,
        ) {
            let d = dict();
            let (truth, f) = planted(&d, &delays);
            let est: Vec<f64> = delays.iter().zip(&jitter).map(|(b, j)| b + j).collect();
            let amps = truth.amplitudes.clone();
            let base = match_and_score(&truth, &f, &EstimationResult::from_estimates(&d, est.clone(), amps.clone()), &d);
            let mut pe = est.clone();
            let mut pa = amps.clone();
            pe.rotate_left(rot % est.len());
            pa.rotate_left(rot % est.len());
            let permuted = match_and_score(&truth, &f, &EstimationResult::from_estimates(&d, pe, pa), &d);
            prop_assert!((base.b_mse - permuted.b_mse).abs() <= 1e-12 * base.b_mse.max(1e-30));
            prop_assert!((base.f_rel_err - permuted.f_rel_err).abs() < 1e-9);
        }
    }
}
