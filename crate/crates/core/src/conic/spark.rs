//! Upper bounds on the spark of a dictionary from l1 probes.
//!
//! For a probe column `i` the program `min ||x||_1  s.t.  D x = 0, x_i = 1`
//! returns a null-space vector whose support size bounds the spark from above.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{realify, ConeProgram, SolveStatus, SolverConfig};
use crate::dictionary::ParametricDictionary;
use crate::error::{Error, Result};
use crate::signal::C64;

pub const NONZERO_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparkMode {
    Complex,
    /// Real nonnegative null-space vectors only.
    Nonneg,
}

impl FromStr for SparkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "complex" => Ok(SparkMode::Complex),
            "nonneg" => Ok(SparkMode::Nonneg),
            other => Err(Error::config(format!("unknown spark mode '{other}' (expected complex or nonneg)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub index: usize,
    pub status: SolveStatus,
    pub nonzeros: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparkReport {
    pub bound: usize,
    pub all_infeasible: bool,
    pub probes: Vec<ProbeOutcome>,
}

pub fn spark_bound(
    dict: &ParametricDictionary,
    mode: SparkMode,
    probe_indices: &[usize],
    cfg: &SolverConfig,
) -> Result<SparkReport> {
    if probe_indices.is_empty() {
        return Err(Error::domain("spark bound needs at least one probe"));
    }
    if let Some(&bad) = probe_indices.iter().find(|&&i| i >= dict.len()) {
        return Err(Error::domain(format!("probe {bad} outside the dictionary of {}", dict.len())));
    }
    let mut probes = Vec::with_capacity(probe_indices.len());
    for &i in probe_indices {
        let outcome = match probe(dict, mode, i, cfg) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("spark probe {i} failed: {e}");
                ProbeOutcome { index: i, status: SolveStatus::Failed, nonzeros: None }
            }
        };
        probes.push(outcome);
    }
    let all_infeasible = probes.iter().all(|p| p.status == SolveStatus::Infeasible);
    let bound = probes.iter().filter_map(|p| p.nonzeros).min().unwrap_or(dict.signal_len());
    Ok(SparkReport { bound, all_infeasible, probes })
}

fn probe(dict: &ParametricDictionary, mode: SparkMode, i: usize, cfg: &SolverConfig) -> Result<ProbeOutcome> {
    let (n, p) = (dict.signal_len(), dict.len());
    let mut trip = Vec::new();
    let mut prog = match mode {
        SparkMode::Complex => {
            // z = [Re x | Im x | t]
            let mut prog = ConeProgram::new(3 * p);
            for j in 0..p {
                let col = dict.atoms().column(j).into_owned();
                realify(&col, C64::new(1.0, 0.0), 0, j, &mut trip);
                realify(&col, C64::new(0.0, 1.0), 0, p + j, &mut trip);
                prog.linear(2 * p + j, 1.0);
            }
            prog
        }
        SparkMode::Nonneg => {
            let mut prog = ConeProgram::new(p);
            for j in 0..p {
                realify(&dict.atoms().column(j).into_owned(), C64::new(1.0, 0.0), 0, j, &mut trip);
                prog.linear(j, 1.0);
            }
            prog
        }
    };
    prog.equality_block(&trip, &vec![0.0; 2 * n]);
    match mode {
        SparkMode::Complex => {
            prog.equalities([(vec![(i, 1.0)], 1.0), (vec![(p + i, 1.0)], 0.0)]);
            for j in 0..p {
                prog.second_order(&[(vec![(2 * p + j, 1.0)], 0.0), (vec![(j, 1.0)], 0.0), (vec![(p + j, 1.0)], 0.0)]);
            }
        }
        SparkMode::Nonneg => {
            prog.equalities([(vec![(i, 1.0)], 1.0)]);
            prog.inequalities((0..p).map(|j| (vec![(j, -1.0)], 0.0)));
        }
    }
    let raw = prog.solve(cfg)?;
    let nonzeros = raw.status.has_solution().then(|| {
        (0..p)
            .filter(|&j| {
                let mag = match mode {
                    SparkMode::Complex => raw.z[j].hypot(raw.z[p + j]),
                    SparkMode::Nonneg => raw.z[j].abs(),
                };
                mag > NONZERO_THRESHOLD
            })
            .count()
    });
    Ok(ProbeOutcome { index: i, status: raw.status, nonzeros })
}
