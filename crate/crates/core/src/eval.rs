//! Evaluation metrics: factor matching, masked reconstruction error and
//! rank-detection error summaries.

use ndarray::{ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::data::{EncodedConfounds, FactorModel, MaskedMatrix};
use crate::error::{IcqfError, Result};
use crate::synthetic::pearson;

/// One matched factor pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub a: usize,
    pub b: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub mean_r: f64,
    pub matched_count: usize,
}

/// Greedily pairs the columns of `qa` (`m × k_a`) and `qb` (`m × k_b`) by
/// Pearson correlation: the globally largest remaining correlation is taken
/// first, for `min(k_a, k_b)` rounds. Ties go to the lowest `(a, b)` pair;
/// a constant column correlates as 0 with everything.
pub fn greedy_match_factors(qa: ArrayView2<'_, f64>, qb: ArrayView2<'_, f64>) -> Result<MatchResult> {
    if qa.nrows() != qb.nrows() {
        return Err(IcqfError::Dimension(format!("{} vs {} loading rows", qa.nrows(), qb.nrows())));
    }
    if qa.nrows() < 2 {
        return Err(IcqfError::Invalid("correlation needs at least two rows".into()));
    }
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return Err(IcqfError::Invalid("both loading matrices need at least one column".into()));
    }
    let cols_a: Vec<Vec<f64>> = qa.columns().into_iter().map(|c| c.to_vec()).collect();
    let cols_b: Vec<Vec<f64>> = qb.columns().into_iter().map(|c| c.to_vec()).collect();
    let corr: Vec<Vec<f64>> = cols_a
        .iter()
        .map(|a| cols_b.iter().map(|b| pearson(a, b)).collect())
        .collect();

    let rounds = cols_a.len().min(cols_b.len());
    let mut used_a = vec![false; cols_a.len()];
    let mut used_b = vec![false; cols_b.len()];
    let mut pairs = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in corr.iter().enumerate() {
            if used_a[i] {
                continue;
            }
            for (j, &r) in row.iter().enumerate() {
                if !used_b[j] && best.is_none_or(|(_, _, br)| r > br) {
                    best = Some((i, j, r));
                }
            }
        }
        let (i, j, r) = best.expect("rounds bounded by the smaller side");
        used_a[i] = true;
        used_b[j] = true;
        pairs.push(MatchedPair { a: i, b: j, r });
    }
    let mean_r = pairs.iter().map(|p| p.r).sum::<f64>() / rounds as f64;
    Ok(MatchResult {
        pairs,
        mean_r,
        matched_count: rounds,
    })
}

/// `√(‖ℳ⊙(M − clip([W, C]Qᵀ))‖² / |ℳ|)` with the clip at the model's data
/// bounds.
pub fn masked_rmse(data: &MaskedMatrix, model: &FactorModel, confounds: &EncodedConfounds) -> Result<f64> {
    let r = model.reconstruct(confounds)?;
    if r.dim() != data.dim() {
        return Err(IcqfError::Dimension(format!("model {:?} vs data {:?}", r.dim(), data.dim())));
    }
    let clipped = r.mapv(|v| v.clamp(model.lower, model.upper));
    Ok((data.masked_sq_error(clipped.view()) / data.observed_count() as f64).sqrt())
}

/// Mean of `|k̂ − k*|` and its standard error (sample standard deviation
/// over `√count`; 0 for a single value).
pub fn detection_error_stats(k_hats: &[usize], k_star: usize) -> Result<(f64, f64)> {
    if k_hats.is_empty() {
        return Err(IcqfError::Invalid("no detections to summarize".into()));
    }
    let errs: Vec<f64> = k_hats.iter().map(|&k| (k as f64 - k_star as f64).abs()).collect();
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    if errs.len() < 2 {
        return Ok((mean, 0.0));
    }
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Relative error `‖W* − W‖_F / ‖W*‖_F` after aligning factors by greedy
/// matching of the loadings `q_true` and `rq`. Unmatched factors on either
/// side are compared against a zero column, so too few and too many
/// factors are both penalized.
pub fn matched_w_error(
    w_true: ArrayView2<'_, f64>,
    q_true: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    rq: ArrayView2<'_, f64>,
) -> Result<f64> {
    if w_true.nrows() != w.nrows() || w_true.ncols() != q_true.ncols() || w.ncols() != rq.ncols() {
        return Err(IcqfError::Dimension("factor and loading shapes disagree".into()));
    }
    let matched = greedy_match_factors(q_true, rq)?;
    let mut used_true = vec![false; w_true.ncols()];
    let mut used_fit = vec![false; w.ncols()];
    let mut num = 0.0;
    for p in &matched.pairs {
        used_true[p.a] = true;
        used_fit[p.b] = true;
        num += w_true
            .column(p.a)
            .iter()
            .zip(w.column(p.b))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    for (f, used) in used_true.iter().enumerate() {
        if !used {
            num += w_true.column(f).iter().map(|v| v * v).sum::<f64>();
        }
    }
    for (f, used) in used_fit.iter().enumerate() {
        if !used {
            num += w.column(f).iter().map(|v| v * v).sum::<f64>();
        }
    }
    let den: f64 = w_true.iter().map(|v| v * v).sum();
    Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
}

/// `‖A − B‖_F / ‖B‖_F`.
pub fn relative_error(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    Zip::from(a).and(b).for_each(|&x, &y| {
        num += (x - y) * (x - y);
        den += y * y;
    });
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, m: usize, k: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((m, k), || rng.random::<f64>())
    }

    #[test]
    fn identical_loadings_match_perfectly() {
        let q = random(1, 30, 4);
        let res = greedy_match_factors(q.view(), q.view()).unwrap();
        assert!((res.mean_r - 1.0).abs() < 1e-12);
        assert!(res.pairs.iter().all(|p| p.a == p.b));
    }

    #[test]
    fn permutation_is_recovered() {
        let q = random(2, 30, 4);
        let perm = [2usize, 0, 3, 1];
        let qb = Array2::from_shape_fn((30, 4), |(i, j)| q[(i, perm[j])]);
        let res = greedy_match_factors(q.view(), qb.view()).unwrap();
        assert!((res.mean_r - 1.0).abs() < 1e-12);
        for p in &res.pairs {
            assert_eq!(perm[p.b], p.a);
        }
    }

    #[test]
    fn random_loadings_correlate_weakly() {
        let mean: f64 = (0..20)
            .map(|s| greedy_match_factors(random(100 + s, 100, 5).view(), random(200 + s, 100, 5).view()).unwrap().mean_r)
            .sum::<f64>()
            / 20.0;
        assert!(mean <= 0.35, "{mean}");
    }

    #[test]
    fn constant_column_counts_as_zero() {
        let qa = array![[1.0, 1.0], [2.0, 1.0], [3.0, 1.0]];
        let res = greedy_match_factors(qa.view(), qa.view()).unwrap();
        assert_eq!(res.pairs[0].r, 1.0);
        assert_eq!(res.pairs[1].r, 0.0);
        assert_eq!(res.matched_count, 2);
    }

    #[test]
    fn too_few_rows_rejected() {
        let q = array![[1.0, 2.0]];
        assert!(greedy_match_factors(q.view(), q.view()).is_err());
    }

    #[test]
    fn matched_w_error_cases() {
        let q = random(3, 10, 2);
        let w = random(4, 6, 2);
        let swapped_w = Array2::from_shape_fn((6, 2), |(i, j)| w[(i, 1 - j)]);
        let swapped_q = Array2::from_shape_fn((10, 2), |(i, j)| q[(i, 1 - j)]);
        assert!(matched_w_error(w.view(), q.view(), swapped_w.view(), swapped_q.view()).unwrap() < 1e-12);
        // Dropping a factor costs exactly its share of the norm.
        let one = matched_w_error(w.view(), q.view(), w.slice(ndarray::s![.., ..1]), q.slice(ndarray::s![.., ..1])).unwrap();
        let share = (w.column(1).iter().map(|v| v * v).sum::<f64>() / w.iter().map(|v| v * v).sum::<f64>()).sqrt();
        assert!((one - share).abs() < 1e-12);
    }

    #[test]
    fn detection_stats_examples() {
        assert_eq!(detection_error_stats(&[10, 10, 10], 10).unwrap(), (0.0, 0.0));
        assert_eq!(detection_error_stats(&[9, 11], 10).unwrap(), (1.0, 0.0));
        let (m, se) = detection_error_stats(&[10, 12], 10).unwrap();
        assert_eq!(m, 1.0);
        assert!((se - 1.0).abs() < 1e-12);
        assert!(detection_error_stats(&[], 10).is_err());
    }

    fn model(w: Array2<f64>, rq: Array2<f64>) -> FactorModel {
        let (n, m) = (w.nrows(), rq.nrows());
        FactorModel {
            k: w.ncols(),
            w,
            rq,
            cq: Array2::zeros((m, 0)),
            z: Array2::zeros((n, m)),
            alpha: Array2::zeros((n, m)),
            beta: 0.0,
            gamma: 1.0,
            rho: 3.0,
            q_upper: f64::INFINITY,
            w_upper: 1.0,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    #[test]
    fn rmse_examples() {
        let w = array![[1.0], [0.5]];
        let rq = array![[2.0], [4.0]];
        let exact = w.dot(&rq.t());
        let conf = EncodedConfounds::none(2);
        let data = MaskedMatrix::from_dense(exact.clone()).unwrap();
        assert_eq!(masked_rmse(&data, &model(w.clone(), rq.clone()), &conf).unwrap(), 0.0);
        let shifted = MaskedMatrix::from_dense(exact + 1.0).unwrap();
        assert!((masked_rmse(&shifted, &model(w, rq), &conf).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rmse_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = Array2::from_shape_simple_fn((6, 2), || rng.random::<f64>());
        let rq = Array2::from_shape_simple_fn((5, 2), || rng.random::<f64>() * 3.0);
        let vals = Array2::from_shape_simple_fn((6, 5), || rng.random::<f64>() * 3.0);
        let obs = Array2::from_shape_fn((6, 5), |(i, j)| (i * 5 + j) % 4 != 1);
        let data = MaskedMatrix::new(vals.clone(), obs.clone()).unwrap();
        let mut mdl = model(w.clone(), rq.clone());
        mdl.lower = 0.0;
        mdl.upper = 2.0;
        let (mut acc, mut cnt) = (0.0, 0.0);
        for i in 0..6 {
            for j in 0..5 {
                if obs[(i, j)] {
                    let r: f64 = (0..2).map(|f| w[(i, f)] * rq[(j, f)]).sum::<f64>().clamp(0.0, 2.0);
                    acc += (vals[(i, j)] - r).powi(2);
                    cnt += 1.0;
                }
            }
        }
        let got = masked_rmse(&data, &mdl, &EncodedConfounds::none(6)).unwrap();
        assert!((got - (acc / cnt).sqrt()).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn match_score_is_symmetric(s1 in 0u64..1000, s2 in 1000u64..2000, ka in 1usize..6, kb in 1usize..6) {
            let a = random(s1, 12, ka);
            let b = random(s2, 12, kb);
            let ab = greedy_match_factors(a.view(), b.view()).unwrap().mean_r;
            let ba = greedy_match_factors(b.view(), a.view()).unwrap().mean_r;
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn rmse_ignores_masked_values(seed in 0u64..1000, junk in -1e6f64..1e6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals = Array2::from_shape_simple_fn((4, 3), || rng.random::<f64>());
            let obs = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) % 2 == 0);
            let mut poisoned = vals.clone();
            poisoned[(0, 1)] = junk;
            let mdl = model(Array2::from_elem((4, 1), 0.5), Array2::from_elem((3, 1), 0.7));
            let conf = EncodedConfounds::none(4);
            let a = masked_rmse(&MaskedMatrix::new(vals, obs.clone()).unwrap(), &mdl, &conf).unwrap();
            let b = masked_rmse(&MaskedMatrix::new(poisoned, obs).unwrap(), &mdl, &conf).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
