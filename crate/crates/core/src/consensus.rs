//! Consensus-clustering stability criteria over random restarts: the
//! cophenetic correlation coefficient (CCC) and the dispersion of the
//! consensus matrix.

use kodama::{linkage, Method};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{fit, InitKind, SolverConfig};
use crate::data::{EncodedConfounds, MaskedMatrix};
use crate::error::{IcqfError, Result};
use crate::synthetic::pearson;

/// Default number of restarts.
pub const DEFAULT_RUNS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusScores {
    pub ccc: f64,
    pub dispersion: f64,
    pub runs_used: usize,
}

/// Index of the largest entry of each row, ties to the lowest index.
pub fn argmax_assignment(w: &Array2<f64>) -> Vec<usize> {
    w.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (f, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = f;
                }
            }
            best
        })
        .collect()
}

/// Mean connectivity matrix: entry `(i, j)` is the fraction of assignments
/// that put `i` and `j` in the same cluster.
pub fn consensus_matrix(assignments: &[Vec<usize>]) -> Result<Array2<f64>> {
    let n = assignments.first().map_or(0, Vec::len);
    if assignments.is_empty() || assignments.iter().any(|a| a.len() != n) {
        return Err(IcqfError::Invalid("assignments must be non-empty and equally long".into()));
    }
    let mut c = Array2::<f64>::zeros((n, n));
    for a in assignments {
        for i in 0..n {
            for j in 0..n {
                if a[i] == a[j] {
                    c[(i, j)] += 1.0;
                }
            }
        }
    }
    c /= assignments.len() as f64;
    Ok(c)
}

/// `(1/n²) Σ (2Ĉ_ij − 1)²`.
pub fn dispersion(consensus: &Array2<f64>) -> f64 {
    let n = consensus.nrows() as f64;
    consensus.iter().map(|&c| (2.0 * c - 1.0).powi(2)).sum::<f64>() / (n * n)
}

/// Pearson correlation between the dissimilarities `1 − Ĉ` and the
/// cophenetic distances of their average-linkage tree. A constant
/// dissimilarity (one cluster, perfectly reproduced) scores 1.
pub fn cophenetic_correlation(consensus: &Array2<f64>) -> f64 {
    let n = consensus.nrows();
    if n < 3 {
        return 1.0;
    }
    let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            condensed.push((1.0 - consensus[(i, j)]).max(0.0));
        }
    }
    let dissim = condensed.clone();
    let first = dissim[0];
    if dissim.iter().all(|&d| d == first) {
        return 1.0;
    }
    let dendrogram = linkage(&mut condensed, n, Method::Average);
    let coph = cophenetic_distances(dendrogram.steps(), n);
    pearson(&dissim, &coph)
}

/// Condensed cophenetic distances from merge steps labelled in the usual
/// way (observations `0..n`, step `s` creates cluster `n + s`).
fn cophenetic_distances(steps: &[kodama::Step<f64>], n: usize) -> Vec<f64> {
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    members.reserve(steps.len());
    let mut coph = vec![0.0; n * (n - 1) / 2];
    let index = |i: usize, j: usize| {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a * n - a * (a + 1) / 2 + (b - a - 1)
    };
    for step in steps {
        let left = std::mem::take(&mut members[step.cluster1]);
        let right = std::mem::take(&mut members[step.cluster2]);
        for &i in &left {
            for &j in &right {
                coph[index(i, j)] = step.dissimilarity;
            }
        }
        let mut merged = left;
        merged.extend(right);
        members.push(merged);
    }
    coph
}

/// Fits `runs` models from random starts (seeds `seed + run`), drops runs
/// that hit the iteration cap, and scores the consensus of their argmax
/// assignments.
pub fn consensus_criteria(
    data: &MaskedMatrix,
    confounds: &EncodedConfounds,
    k: usize,
    config: &SolverConfig,
    runs: usize,
    seed: u64,
) -> Result<ConsensusScores> {
    if runs < 2 {
        return Err(IcqfError::Config("consensus criteria need at least two runs".into()));
    }
    let fits: Vec<Result<Option<Vec<usize>>>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let cfg = SolverConfig {
                k,
                init: InitKind::Random { seed: seed.wrapping_add(r as u64) },
                ..config.clone()
            };
            let (model, report) = fit(data, confounds, &cfg)?;
            Ok(report.converged.then(|| argmax_assignment(&model.w)))
        })
        .collect();
    let mut assignments = Vec::new();
    for f in fits {
        if let Some(a) = f? {
            assignments.push(a);
        }
    }
    if assignments.len() < 2 {
        return Err(IcqfError::Invalid(format!(
            "only {} of {runs} consensus runs converged",
            assignments.len()
        )));
    }
    let c = consensus_matrix(&assignments)?;
    Ok(ConsensusScores {
        ccc: cophenetic_correlation(&c),
        dispersion: dispersion(&c),
        runs_used: assignments.len(),
    })
}
