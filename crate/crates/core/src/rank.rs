//! Choosing the latent dimension: blockwise cross-validation and BIC₁.
//!
//! Blockwise cross-validation shuffles rows and columns, cuts the matrix
//! into `b_r × b_c` blocks and deals the blocks into folds. Each fold's
//! blocks are hidden, the model is fitted on the rest, and the hidden
//! observed entries are imputed from the clipped reconstruction.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{fit, SolverConfig};
use crate::data::{EncodedConfounds, FactorModel, MaskedMatrix, SolverReport};
use crate::error::{IcqfError, Result};
use crate::io::format_f64;

/// Default number of row and column blocks.
pub const DEFAULT_BLOCKS: usize = 10;
pub const DEFAULT_FOLDS: usize = 10;

/// Assignment of rows, columns and blocks for cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcvPlan {
    pub row_blocks: usize,
    pub col_blocks: usize,
    pub folds: usize,
    pub row_perm: Vec<usize>,
    pub col_perm: Vec<usize>,
    /// Row-block index of every original row.
    pub row_group: Vec<usize>,
    /// Column-block index of every original column.
    pub col_group: Vec<usize>,
    /// Fold of block `(rb, cb)`, stored at `rb · col_blocks + cb`.
    pub fold_assignment: Vec<usize>,
}

impl BcvPlan {
    pub fn n(&self) -> usize {
        self.row_group.len()
    }

    pub fn m(&self) -> usize {
        self.col_group.len()
    }

    pub fn fold_of(&self, i: usize, j: usize) -> usize {
        self.fold_assignment[self.row_group[i] * self.col_blocks + self.col_group[j]]
    }

    /// Number of blocks in each fold.
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &f in &self.fold_assignment {
            sizes[f] += 1;
        }
        sizes
    }

    /// Cells hidden by fold `fold`.
    pub fn hidden_mask(&self, fold: usize) -> Array2<bool> {
        Array2::from_shape_fn((self.n(), self.m()), |(i, j)| self.fold_of(i, j) == fold)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Builds a seeded plan. Rows are shuffled (within each stratum when
/// `strata` is given, then interleaved) and dealt round-robin to row
/// blocks, so every row block sees each stratum in proportion; columns are
/// shuffled and dealt the same way.
///
/// Blocks are listed along wrapped diagonals, `t ↦ (t mod b_r,
/// (t + ⌊t / lcm⌋) mod b_c)`, and that list is cut into `folds` consecutive
/// runs whose sizes differ by at most one. Consecutive blocks never share a
/// row or column group, so a fold no larger than `min(b_r, b_c)` never hides
/// a whole row or column.
pub fn make_bcv_plan(
    n: usize,
    m: usize,
    row_blocks: usize,
    col_blocks: usize,
    folds: usize,
    seed: u64,
    strata: Option<&[String]>,
) -> Result<BcvPlan> {
    if row_blocks == 0 || col_blocks == 0 || row_blocks > n || col_blocks > m {
        return Err(IcqfError::Config(format!(
            "need 1 <= b_r <= n and 1 <= b_c <= m; got b_r = {row_blocks}, b_c = {col_blocks} for a {n} x {m} matrix"
        )));
    }
    let blocks = row_blocks * col_blocks;
    if folds == 0 || folds > blocks {
        return Err(IcqfError::Config(format!("folds must lie in 1..={blocks}; got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row_perm = match strata {
        None => {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(IcqfError::Dimension(format!("{} strata labels for {n} rows", labels.len())));
            }
            stratified_order(labels, &mut rng)
        }
    };
    let mut col_perm: Vec<usize> = (0..m).collect();
    col_perm.shuffle(&mut rng);

    let mut row_group = vec![0; n];
    for (pos, &i) in row_perm.iter().enumerate() {
        row_group[i] = pos % row_blocks;
    }
    let mut col_group = vec![0; m];
    for (pos, &j) in col_perm.iter().enumerate() {
        col_group[j] = pos % col_blocks;
    }

    let lcm = row_blocks / gcd(row_blocks, col_blocks) * col_blocks;
    let base = blocks / folds;
    let extra = blocks % folds;
    let mut fold_assignment = vec![0; blocks];
    let (mut fold, mut filled) = (0, 0);
    for t in 0..blocks {
        let rb = t % row_blocks;
        let cb = (t + t / lcm) % col_blocks;
        fold_assignment[rb * col_blocks + cb] = fold;
        filled += 1;
        if filled == base + usize::from(fold < extra) {
            fold += 1;
            filled = 0;
        }
    }
    Ok(BcvPlan {
        row_blocks,
        col_blocks,
        folds,
        row_perm,
        col_perm,
        row_group,
        col_group,
        fold_assignment,
    })
}

/// Shuffles each stratum, then interleaves strata proportionally so that
/// every window of the order carries roughly the overall stratum mix.
fn stratified_order(labels: &[String], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut names: Vec<&String> = labels.iter().collect();
    names.sort();
    names.dedup();
    let mut groups: Vec<Vec<usize>> = names
        .iter()
        .map(|name| (0..labels.len()).filter(|&i| &labels[i] == *name).collect())
        .collect();
    for g in &mut groups {
        g.shuffle(rng);
    }
    // Each member gets a fractional position (r + 0.5) / |group|; sorting by
    // position spreads every stratum evenly through the order.
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(labels.len());
    for (gi, g) in groups.iter().enumerate() {
        for (r, &i) in g.iter().enumerate() {
            keyed.push(((r as f64 + 0.5) / g.len() as f64, gi, i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

/// Default plan: `min(10, n) × min(10, m)` blocks in 10 folds (fewer if
/// there are fewer blocks).
pub fn default_plan(n: usize, m: usize, seed: u64) -> Result<BcvPlan> {
    let (br, bc) = (DEFAULT_BLOCKS.min(n), DEFAULT_BLOCKS.min(m));
    make_bcv_plan(n, m, br, bc, DEFAULT_FOLDS.min(br * bc), seed, None)
}

/// Per-fold detail of a cross-validation score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcvScore {
    /// Block-count weighted mean of the fold errors.
    pub error: f64,
    /// Mean squared imputation error of each fold.
    pub fold_errors: Vec<f64>,
    pub fold_weights: Vec<f64>,
    /// Folds that hid every observed entry of some row or column.
    pub flagged_folds: Vec<usize>,
}

/// Fits the model on everything except fold `fold`.
pub fn fit_fold(
    data: &MaskedMatrix,
    confounds: &EncodedConfounds,
    plan: &BcvPlan,
    fold: usize,
    config: &SolverConfig,
) -> Result<(FactorModel, SolverReport)> {
    let train = data.hide(&plan.hidden_mask(fold))?;
    fit(&train, confounds, config)
}

fn check_plan(data: &MaskedMatrix, plan: &BcvPlan) -> Result<()> {
    if (plan.n(), plan.m()) != data.dim() {
        return Err(IcqfError::Dimension(format!(
            "plan covers {} x {}, data is {:?}",
            plan.n(),
            plan.m(),
            data.dim()
        )));
    }
    Ok(())
}

/// Cross-validated imputation error of `(k, beta)`. Only entries observed
/// in `data` are scored.
pub fn bcv_score(
    data: &MaskedMatrix,
    confounds: &EncodedConfounds,
    k: usize,
    beta: f64,
    plan: &BcvPlan,
    config: &SolverConfig,
) -> Result<BcvScore> {
    check_plan(data, plan)?;
    let cfg = config.clone().with_k(k).with_beta(beta);
    let per_fold: Vec<Result<(f64, bool)>> = (0..plan.folds)
        .into_par_iter()
        .map(|fold| {
            let hidden = plan.hidden_mask(fold);
            let train = data.hide(&hidden)?;
            let flagged = train.check_coverage().is_err();
            let (model, _) = fit(&train, confounds, &cfg)?;
            let r = model.reconstruct(confounds)?;
            let (mut sse, mut count) = (0.0, 0usize);
            for ((i, j), &h) in hidden.indexed_iter() {
                if h {
                    if let Some(v) = data.get(i, j) {
                        let d = v - r[(i, j)].clamp(model.lower, model.upper);
                        sse += d * d;
                        count += 1;
                    }
                }
            }
            let err = if count > 0 { sse / count as f64 } else { 0.0 };
            Ok((err, flagged))
        })
        .collect();
    let sizes = plan.fold_sizes();
    let mut fold_errors = Vec::with_capacity(plan.folds);
    let mut flagged_folds = Vec::new();
    for (f, res) in per_fold.into_iter().enumerate() {
        let (err, flagged) = res?;
        fold_errors.push(err);
        if flagged {
            flagged_folds.push(f);
        }
    }
    let fold_weights: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let total: f64 = fold_weights.iter().sum();
    let error = fold_errors.iter().zip(&fold_weights).map(|(e, w)| e * w).sum::<f64>() / total;
    Ok(BcvScore {
        error,
        fold_errors,
        fold_weights,
        flagged_folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub k: usize,
    pub beta: f64,
    pub score: BcvScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSelectionResult {
    pub grid: Vec<GridPoint>,
    pub selected_k: usize,
    pub selected_beta: f64,
    pub selected_error: f64,
}

impl RankSelectionResult {
    /// Index of the lowest error, ties to smaller `k` then smaller `β`.
    fn argmin(grid: &[GridPoint]) -> usize {
        let mut best = 0;
        for (i, g) in grid.iter().enumerate().skip(1) {
            let b = &grid[best];
            let better = g.score.error < b.score.error
                || (g.score.error == b.score.error && (g.k, g.beta).partial_cmp(&(b.k, b.beta)) == Some(std::cmp::Ordering::Less));
            if better {
                best = i;
            }
        }
        best
    }

    pub(crate) fn from_grid(grid: Vec<GridPoint>) -> Result<Self> {
        if grid.is_empty() {
            return Err(IcqfError::Invalid("empty selection grid".into()));
        }
        let best = Self::argmin(&grid);
        Ok(RankSelectionResult {
            selected_k: grid[best].k,
            selected_beta: grid[best].beta,
            selected_error: grid[best].score.error,
            grid,
        })
    }

    /// Error surface as CSV: one row per `k`, one column per `β`.
    pub fn write_surface_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut ks: Vec<usize> = self.grid.iter().map(|g| g.k).collect();
        ks.sort_unstable();
        ks.dedup();
        let mut betas: Vec<f64> = self.grid.iter().map(|g| g.beta).collect();
        betas.sort_by(f64::total_cmp);
        betas.dedup();
        let mut out = String::from("k");
        for b in &betas {
            out.push_str(&format!(",beta={}", format_f64(*b)));
        }
        out.push('\n');
        for k in ks {
            out.push_str(&k.to_string());
            for b in &betas {
                let cell = self
                    .grid
                    .iter()
                    .find(|g| g.k == k && g.beta == *b)
                    .map_or(String::new(), |g| format_f64(g.score.error));
                out.push(',');
                out.push_str(&cell);
            }
            out.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| IcqfError::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| IcqfError::io(path, e))
    }
}

/// Scores every `(k, β)` of the product grid and picks the smallest error.
pub fn select_k(
    data: &MaskedMatrix,
    confounds: &EncodedConfounds,
    k_grid: &[usize],
    beta_grid: &[f64],
    plan: &BcvPlan,
    config: &SolverConfig,
) -> Result<RankSelectionResult> {
    if k_grid.is_empty() || beta_grid.is_empty() {
        return Err(IcqfError::Invalid("k and beta grids must be non-empty".into()));
    }
    let points: Vec<(usize, f64)> = k_grid
        .iter()
        .flat_map(|&k| beta_grid.iter().map(move |&b| (k, b)))
        .collect();
    let grid = points
        .into_par_iter()
        .map(|(k, beta)| {
            bcv_score(data, confounds, k, beta, plan, config).map(|score| GridPoint { k, beta, score })
        })
        .collect::<Result<Vec<_>>>()?;
    RankSelectionResult::from_grid(grid)
}

/// Default β grid for joint selection.
pub const DEFAULT_BETA_GRID: [f64; 5] = [0.01, 0.05, 0.1, 0.2, 0.5];

/// Floor on the residual inside the logarithm of [`bic1`].
pub const BIC_EPS: f64 = 1e-12;

/// `log(max(‖ℳ⊙(M − [W, C]Qᵀ)‖², ε)) + k·((m + n)/(mn))·log(mn/(m + n))`.
pub fn bic1(data: &MaskedMatrix, model: &FactorModel, confounds: &EncodedConfounds) -> Result<f64> {
    let r = model.reconstruct(confounds)?;
    Ok(bic1_from_error(data.masked_sq_error(r.view()), model.k, data.nrows(), data.ncols()))
}

pub fn bic1_from_error(sq_error: f64, k: usize, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    sq_error.max(BIC_EPS).ln() + k as f64 * ((m + n) / (m * n)) * (m * n / (m + n)).ln()
}
