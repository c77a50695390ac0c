//! Cyclic coordinate descent for the `W` and `Q` blocks.
//!
//! Both blocks have the form
//!
//! ```text
//! minimize ρ/2 ‖V − W H‖² + β‖W‖₁   over W ∈ [0, B]
//! ```
//!
//! and each coordinate has the closed-form minimizer
//! `clip(W_ir − ((W HHᵀ − V Hᵀ)_ir + β/ρ) / (HHᵀ)_rr, 0, B)`. For the loading
//! block the roles are transposed: `W ← Q`, `H ← [W, C]ᵀ`, `V ← (Z + α/ρ)ᵀ`.

use std::collections::BTreeSet;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::admm::{check_shapes, initial_model, outer_loop, SolverConfig, Setup};
use crate::data::{EncodedConfounds, FactorModel, MaskedMatrix, SolverReport};
use crate::error::Result;

/// Coordinate-descent state for one block with cached `WᵀW`, `HHᵀ` and the
/// gradient `W HHᵀ − V Hᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdState {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    pub gram_w: Array2<f64>,
    pub gram_h: Array2<f64>,
    pub grad_w: Array2<f64>,
    /// Factors skipped because `(HHᵀ)_rr = 0`.
    pub dead: BTreeSet<usize>,
}

impl CdState {
    pub fn new(w: Array2<f64>, h: Array2<f64>, v: ArrayView2<'_, f64>) -> Self {
        let gram_h = h.dot(&h.t());
        let gram_w = w.t().dot(&w);
        let grad_w = w.dot(&gram_h) - v.dot(&h.t());
        CdState {
            w,
            h,
            gram_w,
            gram_h,
            grad_w,
            dead: BTreeSet::new(),
        }
    }

    /// Objective `½‖V − W H‖² + (β/ρ)‖W‖₁` (the block objective divided by ρ).
    pub fn objective(&self, v: ArrayView2<'_, f64>, beta: f64, rho: f64) -> f64 {
        let r = &v - &self.w.dot(&self.h);
        0.5 * r.iter().map(|x| x * x).sum::<f64>() + beta / rho * self.w.iter().map(|x| x.abs()).sum::<f64>()
    }

    /// One full row-major sweep over all entries of `W`. Returns the
    /// largest absolute entry change.
    pub fn sweep(&mut self, beta: f64, rho: f64, upper: f64) -> f64 {
        let mut moved = 0.0f64;
        for i in 0..self.w.nrows() {
            for r in 0..self.w.ncols() {
                let old = self.w[(i, r)];
                moved = moved.max((cd_update_entry(self, i, r, beta, rho, upper) - old).abs());
            }
        }
        moved
    }

    /// Up to `max_sweeps` sweeps, stopping once no entry moves by more than
    /// `tol` times the largest entry magnitude (at least `tol`).
    pub fn sweep_until(&mut self, beta: f64, rho: f64, upper: f64, max_sweeps: usize, tol: f64) -> usize {
        for done in 1..=max_sweeps {
            let moved = self.sweep(beta, rho, upper);
            let scale = self.w.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            if moved <= tol * scale {
                return done;
            }
        }
        max_sweeps
    }
}

/// Exact minimization over `W_ir` with the caches updated incrementally.
/// A factor with `(HHᵀ)_rr = 0` has no influence on the fit; its entry is
/// set to the penalty minimizer 0 and the factor is flagged as dead.
pub fn cd_update_entry(state: &mut CdState, i: usize, r: usize, beta: f64, rho: f64, upper: f64) -> f64 {
    let curv = state.gram_h[(r, r)];
    let old = state.w[(i, r)];
    let new = if curv > 0.0 {
        (old - (state.grad_w[(i, r)] + beta / rho) / curv).max(0.0).min(upper)
    } else {
        state.dead.insert(r);
        0.0
    };
    let delta = new - old;
    if delta != 0.0 {
        state.w[(i, r)] = new;
        let k = state.w.ncols();
        for s in 0..k {
            state.grad_w[(i, s)] += delta * state.gram_h[(r, s)];
        }
        for s in 0..k {
            if s != r {
                let inc = delta * state.w[(i, s)];
                state.gram_w[(r, s)] += inc;
                state.gram_w[(s, r)] += inc;
            }
        }
        state.gram_w[(r, r)] += delta * (new + old);
    }
    new
}

/// `Z + α/ρ`.
fn scaled_target(model: &FactorModel) -> Array2<f64> {
    &model.z + &(&model.alpha / model.rho)
}

/// Coordinate sweeps over `W` with the loadings fixed. Returns the dead
/// factors seen.
pub(crate) fn sweep_w(model: &mut FactorModel, confounds: &EncodedConfounds, sweeps: usize, tol: f64) -> BTreeSet<usize> {
    let mut v = scaled_target(model);
    if confounds.ncols() > 0 {
        ndarray::linalg::general_mat_mul(-1.0, &confounds.matrix(), &model.cq.t(), 1.0, &mut v);
    }
    let w = std::mem::take(&mut model.w);
    let mut st = CdState::new(w, model.rq.t().to_owned(), v.view());
    st.sweep_until(model.beta, model.rho, model.w_upper, sweeps, tol);
    model.w = st.w;
    st.dead
}

/// Coordinate sweeps over `[RQ, CQ]` with `W` and `C` fixed.
pub(crate) fn sweep_q(model: &mut FactorModel, confounds: &EncodedConfounds, sweeps: usize, tol: f64) -> BTreeSet<usize> {
    let design = concatenate![Axis(1), model.w, confounds.matrix()];
    let target = scaled_target(model);
    let mut st = CdState::new(model.q(), design.t().to_owned(), target.t());
    st.sweep_until(model.beta * model.gamma, model.rho, model.q_upper, sweeps, tol);
    let k = model.k;
    model.rq.assign(&st.w.slice(s![.., ..k]));
    model.cq.assign(&st.w.slice(s![.., k..]));
    st.dead.into_iter().filter(|&r| r < k).collect()
}

pub(crate) fn sweep_w_only(model: &mut FactorModel, confounds: &EncodedConfounds, sweeps: usize, tol: f64) -> Result<usize> {
    sweep_w(model, confounds, sweeps, tol);
    Ok(0)
}

/// Fits the model with coordinate-descent block updates and the same `Z`
/// and dual steps, stopping rule and constraint sets as the ADMM path.
pub fn fit_cd(data: &MaskedMatrix, confounds: &EncodedConfounds, config: &SolverConfig) -> Result<(FactorModel, SolverReport)> {
    config.validate()?;
    check_shapes(data, confounds)?;
    let setup = Setup::resolve(data, config);
    let mut model = initial_model(data, confounds, config, &setup)?;
    let mut dead = BTreeSet::new();
    let mut report = outer_loop(data, confounds, config, &mut model, |m, _| {
        dead.extend(sweep_w(m, confounds, config.cd_sweeps, config.cd_tol));
        dead.extend(sweep_q(m, confounds, config.cd_sweeps, config.cd_tol));
        Ok(0)
    })?;
    report.dead_factors = dead.into_iter().collect();
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admm::InitKind;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_gradient_leaves_entry() {
        // V = W H exactly and β = 0 → gradient is zero.
        let w = array![[0.4, 0.2]];
        let h = array![[1.0, 0.0], [0.0, 2.0]];
        let v = w.dot(&h);
        let mut st = CdState::new(w, h, v.view());
        assert!((cd_update_entry(&mut st, 0, 0, 0.0, 1.0, 1.0) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn scalar_case_clips_to_bound() {
        let mut st = CdState::new(array![[0.5]], array![[1.0]], array![[2.0]].view());
        let got = cd_update_entry(&mut st, 0, 0, 0.0, 1.0, 1.0);
        assert_eq!(got, 1.0);
        // Against a scan of ½(2 − w)² over [0, 1].
        let best = (0..=100_000)
            .map(|i| i as f64 / 100_000.0)
            .min_by(|a, b| (0.5 * (2.0 - a).powi(2)).total_cmp(&(0.5 * (2.0 - b).powi(2))))
            .unwrap();
        assert!((got - best).abs() < 1e-9);
    }

    #[test]
    fn threshold_cancelling_gradient_is_stationary() {
        // (VHᵀ − WHHᵀ)_00 = 2·1 − 0.5 = 1.5; choose β/ρ = 1.5.
        let mut st = CdState::new(array![[0.5]], array![[1.0]], array![[2.0]].view());
        let got = cd_update_entry(&mut st, 0, 0, 3.0, 2.0, 1.0);
        assert!((got - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dead_factor_flagged_and_zeroed() {
        let w = array![[0.3, 0.7]];
        let h = array![[1.0, 1.0], [0.0, 0.0]];
        let mut st = CdState::new(w, h, array![[1.0, 1.0]].view());
        st.sweep(0.1, 3.0, 1.0);
        assert!(st.dead.contains(&1));
        assert_eq!(st.w[(0, 1)], 0.0);
    }

    #[test]
    fn caches_survive_many_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let w = Array2::from_shape_fn((7, 4), |_| rng.random::<f64>());
        let h = Array2::from_shape_fn((4, 9), |_| rng.random_range(0.0..2.0));
        let v = Array2::from_shape_fn((7, 9), |_| rng.random_range(0.0..3.0));
        let mut st = CdState::new(w, h, v.view());
        for _ in 0..1000 {
            let i = rng.random_range(0..7);
            let r = rng.random_range(0..4);
            cd_update_entry(&mut st, i, r, 0.05, 3.0, 1.0);
        }
        let fresh = CdState::new(st.w.clone(), st.h.clone(), v.view());
        assert!(max_abs_diff(&st.gram_w, &fresh.gram_w) < 1e-10);
        assert!(max_abs_diff(&st.gram_h, &fresh.gram_h) < 1e-10);
        assert!(max_abs_diff(&st.grad_w, &fresh.grad_w) < 1e-10);
    }

    proptest! {
        #[test]
        fn sweep_never_increases_block_objective(seed in 0u64..5_000, beta in 0.0f64..1.0, upper in 0.2f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = Array2::from_shape_fn((5, 3), |_| rng.random_range(0.0..upper));
            let h = Array2::from_shape_fn((3, 6), |_| rng.random_range(0.0..2.0));
            let v = Array2::from_shape_fn((5, 6), |_| rng.random_range(-1.0..3.0));
            let mut st = CdState::new(w, h, v.view());
            let mut prev = st.objective(v.view(), beta, 3.0);
            for _ in 0..5 {
                st.sweep(beta, 3.0, upper);
                let cur = st.objective(v.view(), beta, 3.0);
                prop_assert!(cur <= prev + 1e-12 * prev.abs().max(1.0));
                prop_assert!(st.w.iter().all(|&x| (0.0..=upper).contains(&x)));
                prev = cur;
            }
        }
    }

    #[test]
    fn all_dead_leaves_confound_reconstruction() {
        let data = MaskedMatrix::from_dense(array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        let conf = EncodedConfounds::intercept_only(3);
        let cfg = SolverConfig { k: 1, beta: 0.1, ..Default::default() };
        let setup = Setup::resolve(&data, &cfg);
        let mut model = initial_model(&data, &conf, &cfg, &setup).unwrap();
        model.rq.fill(0.0);
        sweep_w(&mut model, &conf, 1, 0.0);
        assert!(model.w.iter().all(|&v| v == 0.0));
        let r = model.reconstruct(&conf).unwrap();
        let only_c = conf.matrix().dot(&model.cq.t());
        assert_eq!(r, only_c);
    }

    #[test]
    fn fit_cd_keeps_constraints_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals = Array2::from_shape_fn((30, 20), |_| rng.random_range(0.0..4.0));
        let obs = Array2::from_shape_fn((30, 20), |_| rng.random::<f64>() > 0.2);
        let data = MaskedMatrix::new(vals, obs).unwrap();
        let conf = EncodedConfounds::intercept_only(30);
        let cfg = SolverConfig { k: 3, init: InitKind::Random { seed: 4 }, ..Default::default() };
        let (a, rep) = fit_cd(&data, &conf, &cfg).unwrap();
        let (b, _) = fit_cd(&data, &conf, &cfg).unwrap();
        a.check_constraints(0.0).unwrap();
        assert_eq!(a.w, b.w);
        assert!(rep.iterations >= 1);
    }
}
