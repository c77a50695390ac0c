//! Synthetic questionnaire benchmark with known factors.
//!
//! Random draws happen in a fixed order from one ChaCha8 stream seeded by
//! `seed`:
//!
//! 1. for every `W` entry in row-major order, `a ~ U(0.5, 1)` then `b ~ B(0.9)`;
//! 2. for every `Q` entry in row-major order, `c ~ U(0, value_max)` then `d ~ B(0.3)`;
//! 3. for every `M` entry in row-major order, `e ~ B(δ)` then `f ~ U(−value_max, value_max)`.
//!
//! Both draws of a pair are always taken, so the stream layout does not
//! depend on the values drawn.

use std::path::Path;

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::MaskedMatrix;
use crate::error::{IcqfError, Result};
use crate::io::{save_matrix, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    pub k_star: usize,
    /// Fraction of entries hit by uniform noise.
    pub delta: f64,
    pub seed: u64,
    pub value_max: f64,
    /// Rows where a factor is active alone.
    pub isolation_run: usize,
    /// Rows where a factor is active together with the next one.
    pub overlap_run: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 200,
            m: 100,
            k_star: 10,
            delta: 0.0,
            seed: 0,
            value_max: 100.0,
            isolation_run: 10,
            overlap_run: 10,
        }
    }
}

impl SyntheticSpec {
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Rows spanned by one pass of the step pattern.
    pub fn pattern_len(&self) -> usize {
        self.k_star * (self.isolation_run + self.overlap_run)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_star == 0 || self.m == 0 || self.isolation_run + self.overlap_run == 0 {
            return Err(IcqfError::Config("k_star, m and isolation_run + overlap_run must be positive".into()));
        }
        if self.n < self.pattern_len() {
            return Err(IcqfError::Config(format!(
                "n = {} is smaller than the step pattern length {}",
                self.n,
                self.pattern_len()
            )));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(IcqfError::Config(format!("delta must lie in [0, 1]; got {}", self.delta)));
        }
        if !(self.value_max > 0.0) || !self.value_max.is_finite() {
            return Err(IcqfError::Config(format!("value_max must be positive; got {}", self.value_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub w_true: Array2<f64>,
    pub q_true: Array2<f64>,
    pub m_clean: Array2<f64>,
    pub m_noisy: Array2<f64>,
    pub design: Array2<f64>,
    pub spec: SyntheticSpec,
}

impl SyntheticDataset {
    /// The noisy matrix, fully observed.
    pub fn observed(&self) -> MaskedMatrix {
        MaskedMatrix::from_dense(self.m_noisy.clone()).expect("synthetic data is finite and non-empty")
    }

    /// Writes `W_true.csv`, `Q_true.csv`, `M.csv`, `M_clean.csv`, `mask.csv`
    /// and `meta.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| IcqfError::io(dir, e))?;
        let factors: Vec<String> = (0..self.spec.k_star).map(|f| format!("factor_{f}")).collect();
        let questions: Vec<String> = (0..self.spec.m).map(|j| format!("q{j}")).collect();
        save_matrix(dir.join("W_true.csv"), &factors, &self.w_true)?;
        save_matrix(dir.join("Q_true.csv"), &factors, &self.q_true)?;
        save_matrix(dir.join("M.csv"), &questions, &self.m_noisy)?;
        save_matrix(dir.join("M_clean.csv"), &questions, &self.m_clean)?;
        save_matrix(dir.join("mask.csv"), &questions, &Array2::ones(self.m_noisy.dim()))?;
        write_json(dir.join("meta.json"), &self.spec)
    }
}

/// Binary step design. Factor `j` owns the rows starting at
/// `j·(isolation + overlap)`: `isolation` rows with only column `j` active,
/// then `overlap` rows with columns `j` and `(j + 1) mod k*` active. Rows
/// past one full pattern repeat it.
pub fn gen_step_design(spec: &SyntheticSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let run = spec.isolation_run + spec.overlap_run;
    let len = spec.pattern_len();
    let mut d = Array2::zeros((spec.n, spec.k_star));
    for i in 0..spec.n {
        let pos = i % len;
        let j = pos / run;
        d[(i, j)] = 1.0;
        if pos % run >= spec.isolation_run {
            d[(i, (j + 1) % spec.k_star)] = 1.0;
        }
    }
    Ok(d)
}

/// Draws one dataset from `spec`.
pub fn gen_dataset(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    let design = gen_step_design(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vmax = spec.value_max;

    let mut w_true = Array2::zeros((spec.n, spec.k_star));
    for ((i, j), w) in w_true.indexed_iter_mut() {
        let a: f64 = rng.random_range(0.5..1.0);
        let b = rng.random::<f64>() < 0.9;
        *w = if b { design[(i, j)] * a } else { 0.0 };
    }
    let mut q_true = Array2::zeros((spec.m, spec.k_star));
    for q in q_true.iter_mut() {
        let c: f64 = rng.random_range(0.0..vmax);
        let d = rng.random::<f64>() < 0.3;
        *q = if d { c } else { 0.0 };
    }
    let m_clean = w_true.dot(&q_true.t()).mapv(|v: f64| v.clamp(0.0, vmax));
    let mut m_noisy = m_clean.clone();
    for v in m_noisy.iter_mut() {
        let e = rng.random::<f64>() < spec.delta;
        let f: f64 = rng.random_range(-vmax..vmax);
        if e {
            *v = (*v + f).clamp(0.0, vmax);
        }
    }
    Ok(SyntheticDataset {
        w_true,
        q_true,
        m_clean,
        m_noisy,
        design,
        spec: spec.clone(),
    })
}

/// Pearson correlation of two equal-length slices; 0 when either is constant.
pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Entrywise check used by tests and examples.
pub fn within_bounds(m: &Array2<f64>, lo: f64, hi: f64) -> bool {
    Zip::from(m).all(|&v| v >= lo && v <= hi)
}
