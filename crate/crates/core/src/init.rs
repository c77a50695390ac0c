//! Starting points for the factor matrices.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{IcqfError, Result};

/// NNDSVD initialization of a complete nonnegative matrix.
///
/// Builds `W₀` (`n × k`) and `Q₀` (`m × k`) from the leading `k` singular
/// triplets, keeping for each component the positive parts of whichever sign
/// choice carries more mass. Each `W₀` column is rescaled to a maximum of 1
/// with the scale moved into `Q₀`, and `Q₀` is clipped to `[0, q_upper]`.
pub fn nndsvd_init(filled: ArrayView2<'_, f64>, k: usize, q_upper: f64) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n, m) = filled.dim();
    if k == 0 || k > n.min(m) {
        return Err(IcqfError::Config(format!(
            "NNDSVD needs 1 <= k <= min(n, m) = {}; got k = {k}",
            n.min(m)
        )));
    }
    if filled.iter().any(|v| !v.is_finite()) {
        return Err(IcqfError::NonFinite {
            iteration: 0,
            stage: "nndsvd input",
        });
    }
    let mat = DMatrix::from_fn(n, m, |i, j| filled[(i, j)]);
    let svd = mat.svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let vt = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let mut w = Array2::<f64>::zeros((n, k));
    let mut q = Array2::<f64>::zeros((m, k));
    for (f, &idx) in order.iter().take(k).enumerate() {
        let s = svd.singular_values[idx];
        let x: Vec<f64> = (0..n).map(|i| u[(i, idx)]).collect();
        let y: Vec<f64> = (0..m).map(|j| vt[(idx, j)]).collect();
        if f == 0 {
            // Leading singular vectors of a nonnegative matrix are single-signed.
            let root = s.sqrt();
            for i in 0..n {
                w[(i, f)] = root * x[i].abs();
            }
            for j in 0..m {
                q[(j, f)] = root * y[j].abs();
            }
            continue;
        }
        let pos = |v: &[f64]| v.iter().map(|a| a.max(0.0)).collect::<Vec<_>>();
        let neg = |v: &[f64]| v.iter().map(|a| (-a).max(0.0)).collect::<Vec<_>>();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let (xp, xn, yp, yn) = (pos(&x), neg(&x), pos(&y), neg(&y));
        let (nxp, nxn, nyp, nyn) = (norm(&xp), norm(&xn), norm(&yp), norm(&yn));
        let (mp, mn) = (nxp * nyp, nxn * nyn);
        let (a, b, na, nb, sigma) = if mp >= mn {
            (xp, yp, nxp, nyp, mp)
        } else {
            (xn, yn, nxn, nyn, mn)
        };
        if sigma <= 0.0 {
            continue;
        }
        let root = (s * sigma).sqrt();
        for i in 0..n {
            w[(i, f)] = root * a[i] / na;
        }
        for j in 0..m {
            q[(j, f)] = root * b[j] / nb;
        }
    }
    rescale_into_unit_box(&mut w, &mut q);
    q.mapv_inplace(|v| v.clamp(0.0, q_upper));
    Ok((w, q))
}

/// Uniform random start: `W ∈ [0, 1]`, `Q` scaled so that `W Qᵀ` matches the
/// mean of `filled` on average.
pub fn random_init(filled: ArrayView2<'_, f64>, k: usize, q_upper: f64, seed: u64) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n, m) = filled.dim();
    if k == 0 {
        return Err(IcqfError::Config("k must be at least 1".into()));
    }
    let mean = filled.iter().sum::<f64>() / (n * m) as f64;
    let scale = (4.0 * mean.max(0.0) / k as f64).max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Array2::from_shape_simple_fn((n, k), || rng.random::<f64>());
    let q = Array2::from_shape_simple_fn((m, k), || (rng.random::<f64>() * scale).min(q_upper));
    Ok((w, q))
}

fn rescale_into_unit_box(w: &mut Array2<f64>, q: &mut Array2<f64>) {
    for f in 0..w.ncols() {
        let s = w.column(f).iter().copied().fold(0.0f64, f64::max);
        if s > 0.0 {
            w.column_mut(f).mapv_inplace(|v| v / s);
            q.column_mut(f).mapv_inplace(|v| v * s);
        }
    }
}
