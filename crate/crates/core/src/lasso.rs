//! Row-wise box-constrained lasso:
//!
//! ```text
//! minimize  ρ/2 ‖b − A x‖² + β ‖x‖₁   subject to  lo ≤ x ≤ hi
//! ```
//!
//! solved by a small ADMM that splits the box off into `y`. The `x` step is a
//! lasso with an extra proximal term, handled by FISTA; the `y` step is a
//! projection; `μ` is the scaled-form dual.
//!
//! Everything is expressed through the Gram matrix `AᵀA` and `Aᵀb`, so the
//! factor updates can share one Gram matrix across all rows.

use ndarray::{Array1, ArrayView1, ArrayView2};

use serde::{Deserialize, Serialize};

use crate::error::{IcqfError, Result};

/// One row sub-problem in its original design-matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxLassoProblem {
    pub a: ndarray::Array2<f64>,
    pub b: Array1<f64>,
    pub rho: f64,
    pub beta: f64,
    pub box_lower: f64,
    pub box_upper: f64,
    pub tau: f64,
}

impl BoxLassoProblem {
    pub fn validate(&self) -> Result<()> {
        if self.a.nrows() != self.b.len() {
            return Err(IcqfError::Dimension(format!(
                "A has {} rows, b has {} entries",
                self.a.nrows(),
                self.b.len()
            )));
        }
        if !(self.rho > 0.0 && self.tau > 0.0 && self.beta >= 0.0 && self.box_lower < self.box_upper) {
            return Err(IcqfError::Config(format!(
                "box lasso needs rho > 0, tau > 0, beta >= 0, lower < upper; got rho={}, tau={}, beta={}, box=[{}, {}]",
                self.rho, self.tau, self.beta, self.box_lower, self.box_upper
            )));
        }
        Ok(())
    }

    /// `ρ/2 ‖b − A x‖² + β ‖x‖₁`.
    pub fn objective(&self, x: ArrayView1<'_, f64>) -> f64 {
        let r = &self.b - &self.a.dot(&x);
        0.5 * self.rho * r.dot(&r) + self.beta * x.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// Stopping rules for the nested solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoSettings {
    /// Inner ADMM stops once `‖x − y‖_∞` and the step in `y` fall to this.
    pub admm_tol: f64,
    pub max_outer: usize,
    /// FISTA stops once successive proximal points are this close (ℓ₂).
    pub fista_tol: f64,
    pub fista_max_iter: usize,
}

impl Default for LassoSettings {
    fn default() -> Self {
        LassoSettings {
            admm_tol: 1e-5,
            max_outer: 50,
            fista_tol: 1e-6,
            fista_max_iter: 5_000,
        }
    }
}

/// Largest eigenvalue of `2(ρ AᵀA + τ I)`, the Lipschitz constant of the
/// FISTA gradient.
pub fn lipschitz_constant(a: ArrayView2<'_, f64>, rho: f64, tau: f64) -> f64 {
    let gram = a.t().dot(&a);
    let p = gram.nrows();
    lipschitz_from_gram(gram.as_slice().expect("standard layout"), p, rho, tau)
}

/// Power iteration on `2(ρ G + τ I)` to relative tolerance `1e-6`.
pub(crate) fn lipschitz_from_gram(gram: &[f64], p: usize, rho: f64, tau: f64) -> f64 {
    if p == 0 {
        return 2.0 * tau;
    }
    // Irregular start so the iteration does not begin orthogonal to the
    // leading eigenvector of a structured Gram matrix.
    let mut v: Vec<f64> = (0..p)
        .map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
        .collect();
    normalize(&mut v);
    let mut w = vec![0.0; p];
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        for i in 0..p {
            let row = &gram[i * p..(i + 1) * p];
            w[i] = 2.0 * (rho * dot(row, &v) + tau * v[i]);
        }
        let next = dot(&w, &v);
        let done = (next - lambda).abs() <= 1e-6 * next.abs();
        lambda = next;
        v.copy_from_slice(&w);
        if normalize(&mut v) == 0.0 || done {
            break;
        }
    }
    lambda.max(2.0 * tau)
}

/// Affine gradient `∇f(x) = H x + g` of the smooth part `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGradient {
    pub h: ndarray::Array2<f64>,
    pub g: Array1<f64>,
}

impl AffineGradient {
    /// Gradient of `f(x) = ρ‖b − Ax‖² + τ‖x − c‖²`:
    /// `H = 2(ρAᵀA + τI)`, `g = −2(ρAᵀb + τc)`.
    pub fn for_lasso(a: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>, rho: f64, tau: f64, c: ArrayView1<'_, f64>) -> Self {
        let p = a.ncols();
        let mut h = a.t().dot(&a) * (2.0 * rho);
        for i in 0..p {
            h[(i, i)] += 2.0 * tau;
        }
        let g = (a.t().dot(&b) * rho + &c * tau) * -2.0;
        AffineGradient { h, g }
    }
}

/// Result of a FISTA run.
#[derive(Debug, Clone, PartialEq)]
pub struct FistaOutcome {
    pub x: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `λ‖x‖₁ + ½ f(x)` over `x ≥ 0`, where `∇f(x) = H x + g` and
/// `lipschitz ≥ λ_max(H)`.
///
/// The proximal step soft-thresholds at `2λ/L` (the scaled problem
/// `2λ‖x‖₁ + f` has the same minimizer) and then clamps at zero. Iteration
/// stops when successive proximal points differ by at most `tol` in ℓ₂.
/// The returned iterate never has a larger objective than an earlier one.
pub fn fista_solve(grad: &AffineGradient, lambda: f64, lipschitz: f64, tol: f64) -> Result<FistaOutcome> {
    let p = grad.g.len();
    if grad.h.dim() != (p, p) {
        return Err(IcqfError::Dimension("H must be p × p".into()));
    }
    if grad.h.iter().chain(grad.g.iter()).any(|v| !v.is_finite()) {
        return Err(IcqfError::NonFinite {
            iteration: 0,
            stage: "fista gradient",
        });
    }
    let h = grad.h.as_standard_layout();
    let mut x = vec![0.0; p];
    let mut ws = FistaWork::new(p);
    let (iterations, converged) = fista_core(
        h.as_slice().expect("standard layout"),
        grad.g.as_slice().expect("contiguous"),
        lambda,
        lipschitz,
        0.0,
        tol,
        usize::MAX,
        &mut x,
        &mut ws,
        None,
    );
    Ok(FistaOutcome {
        x: Array1::from(x),
        iterations,
        converged,
    })
}

/// Scratch buffers reused across FISTA calls on the same dimension.
pub(crate) struct FistaWork {
    y: Vec<f64>,
    z: Vec<f64>,
    z_prev: Vec<f64>,
    x_prev: Vec<f64>,
    grad: Vec<f64>,
}

impl FistaWork {
    pub(crate) fn new(p: usize) -> Self {
        FistaWork {
            y: vec![0.0; p],
            z: vec![0.0; p],
            z_prev: vec![0.0; p],
            x_prev: vec![0.0; p],
            grad: vec![0.0; p],
        }
    }
}

/// `λ‖x‖₁ + ¼ xᵀHx + ½ gᵀx`, i.e. `λ‖x‖₁ + ½ f(x)` up to a constant.
fn fista_objective(h: &[f64], g: &[f64], lambda: f64, x: &[f64]) -> f64 {
    let p = x.len();
    let mut quad = 0.0;
    for i in 0..p {
        quad += x[i] * dot(&h[i * p..(i + 1) * p], x);
    }
    lambda * x.iter().map(|v| v.abs()).sum::<f64>() + 0.25 * quad + 0.5 * dot(g, x)
}

/// Monotone FISTA from the warm start in `x`; the answer is left in `x`.
/// Returns `(iterations, converged)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fista_core(
    h: &[f64],
    g: &[f64],
    lambda: f64,
    lipschitz: f64,
    floor: f64,
    tol: f64,
    max_iter: usize,
    x: &mut [f64],
    ws: &mut FistaWork,
    mut trace: Option<&mut Vec<f64>>,
) -> (usize, bool) {
    let p = x.len();
    let step = 1.0 / lipschitz;
    let thresh = 2.0 * lambda / lipschitz;
    ws.y.copy_from_slice(x);
    ws.z_prev.copy_from_slice(x);
    let mut fx = fista_objective(h, g, lambda, x);
    if let Some(t) = trace.as_deref_mut() {
        t.push(fx);
    }
    let mut t = 1.0f64;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        for i in 0..p {
            ws.grad[i] = dot(&h[i * p..(i + 1) * p], &ws.y) + g[i];
        }
        for i in 0..p {
            let u = ws.y[i] - step * ws.grad[i];
            let s = if u > thresh {
                u - thresh
            } else if u < -thresh {
                u + thresh
            } else {
                0.0
            };
            ws.z[i] = s.max(floor);
        }
        let fz = fista_objective(h, g, lambda, &ws.z);
        ws.x_prev.copy_from_slice(x);
        if fz <= fx {
            x.copy_from_slice(&ws.z);
            fx = fz;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        for i in 0..p {
            ws.y[i] = x[i] + (t / t_next) * (ws.z[i] - x[i]) + ((t - 1.0) / t_next) * (x[i] - ws.x_prev[i]);
        }
        t = t_next;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(fx);
        }
        let mut moved = 0.0;
        for i in 0..p {
            moved += (ws.z[i] - ws.z_prev[i]).powi(2);
        }
        ws.z_prev.copy_from_slice(&ws.z);
        if moved.sqrt() <= tol {
            return (it, true);
        }
    }
    (it, false)
}

/// Per-row solver state carried between outer iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
}

impl WarmStart {
    /// Starts at the feasible point `y0` with a zero dual.
    pub fn at(y0: &[f64]) -> Self {
        WarmStart {
            x: y0.to_vec(),
            y: y0.to_vec(),
            mu: vec![0.0; y0.len()],
        }
    }
}

/// Shared data of every row problem in one factor update: the Gram matrix
/// of the design, the penalties, the box and the FISTA Lipschitz constant.
pub(crate) struct RowSystem {
    pub p: usize,
    pub gram: Vec<f64>,
    hmat: Vec<f64>,
    pub rho: f64,
    pub tau: f64,
    pub beta: f64,
    pub lower: f64,
    pub upper: f64,
    lipschitz: f64,
    pub settings: LassoSettings,
}

impl RowSystem {
    pub(crate) fn new(
        gram: Vec<f64>,
        p: usize,
        rho: f64,
        tau: f64,
        beta: f64,
        lower: f64,
        upper: f64,
        settings: LassoSettings,
    ) -> Self {
        debug_assert_eq!(gram.len(), p * p);
        let mut hmat: Vec<f64> = gram.iter().map(|v| 2.0 * rho * v).collect();
        for i in 0..p {
            hmat[i * p + i] += 2.0 * tau;
        }
        let lipschitz = lipschitz_from_gram(&gram, p, rho, tau);
        RowSystem {
            p,
            gram,
            hmat,
            rho,
            tau,
            beta,
            lower,
            upper,
            lipschitz,
            settings,
        }
    }

    /// `ρ/2 (xᵀGx − 2 xᵀ(Aᵀb) + bᵀb) + β‖x‖₁`.
    pub(crate) fn objective(&self, atb: &[f64], btb: f64, x: &[f64]) -> f64 {
        let p = self.p;
        let mut quad = 0.0;
        for i in 0..p {
            quad += x[i] * dot(&self.gram[i * p..(i + 1) * p], x);
        }
        0.5 * self.rho * (quad - 2.0 * dot(atb, x) + btb) + self.beta * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Runs the inner ADMM from `warm`, leaving the projected solution in
    /// `warm.y`. Returns whether both `‖x − y‖_∞` and the change in `y`
    /// reached the tolerance.
    ///
    /// If the result is worse than the incoming `warm.y`, `warm.y` is
    /// restored, so the row objective never increases.
    pub(crate) fn solve(&self, atb: &[f64], btb: f64, warm: &mut WarmStart, ws: &mut FistaWork) -> (bool, usize) {
        let p = self.p;
        let start_obj = self.objective(atb, btb, &warm.y);
        let start_y = warm.y.clone();
        let mut g = vec![0.0; p];
        let mut converged = false;
        let mut outer = 0;
        let mut fista_unconverged = 0;
        let floor = if self.lower >= 0.0 { 0.0 } else { self.lower };
        while outer < self.settings.max_outer {
            outer += 1;
            for i in 0..p {
                let c = warm.y[i] - warm.mu[i] / self.tau;
                g[i] = -2.0 * (self.rho * atb[i] + self.tau * c);
            }
            let (_, ok) = fista_core(
                &self.hmat,
                &g,
                self.beta,
                self.lipschitz,
                floor,
                self.settings.fista_tol,
                self.settings.fista_max_iter,
                &mut warm.x,
                ws,
                None,
            );
            if !ok {
                fista_unconverged += 1;
            }
            let mut gap = 0.0f64;
            let mut moved = 0.0f64;
            for i in 0..p {
                let y = (warm.x[i] + warm.mu[i] / self.tau).clamp(self.lower, self.upper);
                moved = moved.max((y - warm.y[i]).abs());
                warm.y[i] = y;
                let r = warm.x[i] - y;
                warm.mu[i] += self.tau * r;
                gap = gap.max(r.abs());
            }
            // Primal and dual residuals; x = y alone can hold after a single
            // proximal step when the box is inactive.
            if gap <= self.settings.admm_tol && moved <= self.settings.admm_tol {
                converged = true;
                break;
            }
        }
        if self.objective(atb, btb, &warm.y) > start_obj {
            warm.y = start_y;
        }
        (converged, fista_unconverged)
    }
}

/// Outcome of [`solve_box_lasso`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoxLassoOutcome {
    /// Projected iterate, always inside the box.
    pub x: Array1<f64>,
    pub converged: bool,
    pub objective: f64,
}

/// Solves one box-constrained lasso from a cold start at the projection of
/// zero onto the box. A run that exhausts `max_outer` returns its best
/// iterate with `converged == false`.
pub fn solve_box_lasso(problem: &BoxLassoProblem, tol: f64, max_outer: usize) -> Result<BoxLassoOutcome> {
    problem.validate()?;
    let p = problem.a.ncols();
    let gram = problem.a.t().dot(&problem.a);
    let atb = problem.a.t().dot(&problem.b);
    let btb = problem.b.dot(&problem.b);
    let settings = LassoSettings {
        admm_tol: tol,
        max_outer,
        ..LassoSettings::default()
    };
    let system = RowSystem::new(
        gram.iter().copied().collect(),
        p,
        problem.rho,
        problem.tau,
        problem.beta,
        problem.box_lower,
        problem.box_upper,
        settings,
    );
    let start = vec![0.0f64.clamp(problem.box_lower, problem.box_upper); p];
    let mut warm = WarmStart::at(&start);
    let mut ws = FistaWork::new(p);
    let atb = atb.to_vec();
    let (converged, _) = system.solve(&atb, btb, &mut warm, &mut ws);
    let x = Array1::from(warm.y);
    Ok(BoxLassoOutcome {
        objective: problem.objective(x.view()),
        x,
        converged,
    })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn lipschitz_trivial_cases() {
        let eye = Array2::<f64>::eye(2);
        assert!((lipschitz_constant(eye.view(), 1.0, 1.0) - 4.0).abs() < 1e-12);
        let zero = Array2::<f64>::zeros((3, 5));
        assert!((lipschitz_constant(zero.view(), 5.0, 3.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_matches_dense_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let a = random_matrix(&mut rng, 6, 4);
            let (rho, tau) = (3.0, 1.5);
            let m = (a.t().dot(&a) * rho + Array2::<f64>::eye(4) * tau) * 2.0;
            let dense = nalgebra::DMatrix::from_fn(4, 4, |i, j| m[(i, j)]);
            let oracle = dense.symmetric_eigen().eigenvalues.max();
            let got = lipschitz_constant(a.view(), rho, tau);
            assert!((got - oracle).abs() <= 1e-5 * oracle, "{got} vs {oracle}");
        }
    }

    #[test]
    fn fista_unregularized_least_squares() {
        let a = Array2::<f64>::eye(2);
        let b = array![0.3, 0.7];
        let grad = AffineGradient::for_lasso(a.view(), b.view(), 1.0, 0.0, Array1::zeros(2).view());
        let out = fista_solve(&grad, 0.0, 2.0, 1e-10).unwrap();
        assert!((out.x[0] - 0.3).abs() < 1e-8 && (out.x[1] - 0.7).abs() < 1e-8);
    }

    #[test]
    fn fista_threshold_kills_coordinate() {
        let a = Array2::<f64>::eye(1);
        let b = array![0.3];
        let grad = AffineGradient::for_lasso(a.view(), b.view(), 1.0, 0.0, Array1::zeros(1).view());
        let out = fista_solve(&grad, 1.0, 2.0, 1e-10).unwrap();
        assert_eq!(out.x[0], 0.0);
    }

    #[test]
    fn fista_rejects_non_finite() {
        let grad = AffineGradient {
            h: Array2::eye(1),
            g: array![f64::NAN],
        };
        assert!(matches!(fista_solve(&grad, 0.0, 1.0, 1e-6), Err(IcqfError::NonFinite { .. })));
    }

    /// Objective `λ‖x‖₁ + ½ f(x)` for the oracle, with
    /// `f(x) = ρ‖b − Ax‖² + τ‖x − c‖²`.
    fn half_f_plus_l1(a: &Array2<f64>, b: &Array1<f64>, rho: f64, lambda: f64, x: &Array1<f64>) -> f64 {
        let r = b - &a.dot(x);
        lambda * x.sum() + 0.5 * rho * r.dot(&r)
    }

    #[test]
    fn fista_matches_projected_gradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 5, 3);
        let b = Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0));
        let (rho, lambda) = (1.0, 0.1);
        let grad = AffineGradient::for_lasso(a.view(), b.view(), rho, 0.0, Array1::zeros(3).view());
        let l = lipschitz_constant(a.view(), rho, 0.0);
        let got = fista_solve(&grad, lambda, l, 1e-12).unwrap();

        // Projected gradient on the nonnegative orthant, where |x| = x.
        let mut x = Array1::<f64>::zeros(3);
        let step = 1.0 / (0.5 * l);
        for _ in 0..100_000 {
            let g = a.t().dot(&(a.dot(&x) - &b)) * rho + lambda;
            x = (&x - &(g * step)).mapv(|v| v.max(0.0));
        }
        let f_oracle = half_f_plus_l1(&a, &b, rho, lambda, &x);
        let f_got = half_f_plus_l1(&a, &b, rho, lambda, &got.x);
        assert!((f_got - f_oracle).abs() <= 1e-6, "{f_got} vs {f_oracle}");
    }

    #[test]
    fn fista_objective_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 7, 4);
            let b = Array1::from_shape_fn(7, |_| rng.random_range(-2.0..2.0));
            let grad = AffineGradient::for_lasso(a.view(), b.view(), 2.0, 0.5, Array1::zeros(4).view());
            let l = lipschitz_constant(a.view(), 2.0, 0.5);
            let h = grad.h.as_standard_layout().to_owned();
            let mut x = vec![1.0; 4];
            let mut trace = Vec::new();
            fista_core(
                h.as_slice().unwrap(),
                grad.g.as_slice().unwrap(),
                0.2,
                l,
                0.0,
                1e-10,
                10_000,
                &mut x,
                &mut FistaWork::new(4),
                Some(&mut trace),
            );
            for w in trace.windows(2).skip(2) {
                assert!(w[1] <= w[0] + 1e-10);
            }
        }
    }

    fn problem(a: Array2<f64>, b: Array1<f64>, beta: f64, lo: f64, hi: f64) -> BoxLassoProblem {
        BoxLassoProblem {
            a,
            b,
            rho: 1.0,
            beta,
            box_lower: lo,
            box_upper: hi,
            tau: 1.0,
        }
    }

    #[test]
    fn interior_optimum_untouched() {
        let p = problem(Array2::eye(2), array![0.2, 0.9], 0.0, 0.0, 1.0);
        let out = solve_box_lasso(&p, 1e-8, 500).unwrap();
        assert!((out.x[0] - 0.2).abs() < 1e-6 && (out.x[1] - 0.9).abs() < 1e-6);
        assert!(out.converged);
    }

    #[test]
    fn projection_binds_above_box() {
        let p = problem(Array2::eye(1), array![5.0], 0.0, 0.0, 1.0);
        let out = solve_box_lasso(&p, 1e-8, 500).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = problem(random_matrix(&mut rng, 6, 3) * 10.0, Array1::from_elem(6, 50.0), 0.0, 0.0, 1.0);
        let out = solve_box_lasso(&p, 1e-14, 1).unwrap();
        assert!(!out.converged);
        assert!(out.x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn invalid_problem_rejected() {
        let p = problem(Array2::eye(2), array![0.2, 0.9], 0.0, 1.0, 0.0);
        assert!(matches!(solve_box_lasso(&p, 1e-5, 50), Err(IcqfError::Config(_))));
    }

    #[test]
    fn unbounded_ridge_free_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_matrix(&mut rng, 8, 3);
        let b = Array1::from_shape_fn(8, |_| rng.random_range(-3.0..3.0));
        let p = problem(a.clone(), b.clone(), 0.0, f64::NEG_INFINITY, f64::INFINITY);
        let out = solve_box_lasso(&p, 1e-9, 200).unwrap();
        let na = nalgebra::DMatrix::from_fn(8, 3, |i, j| a[(i, j)]);
        let nb = nalgebra::DVector::from_fn(8, |i, _| b[i]);
        let exact = (na.transpose() * &na).lu().solve(&(na.transpose() * nb)).unwrap();
        for i in 0..3 {
            assert!((out.x[i] - exact[i]).abs() <= 1e-6 * exact[i].abs().max(1.0), "{} vs {}", out.x[i], exact[i]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn output_in_box_and_beats_cheap_bounds(
            seed in 0u64..10_000,
            beta in 0.0f64..0.5,
            hi in 0.5f64..3.0,
            tol in prop_oneof![Just(1e-2), Just(1e-5), Just(1e-8)],
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, 6, 3);
            let b = Array1::from_shape_fn(6, |_| rng.random_range(-2.0..4.0));
            let p = problem(a.clone(), b.clone(), beta, 0.0, hi);
            let out = solve_box_lasso(&p, tol, 50).unwrap();
            prop_assert!(out.x.iter().all(|&v| (0.0..=hi).contains(&v)));
            prop_assert!(out.objective <= p.objective(Array1::zeros(3).view()) + 1e-12);
            let na = nalgebra::DMatrix::from_fn(6, 3, |i, j| a[(i, j)]);
            let nb = nalgebra::DVector::from_fn(6, |i, _| b[i]);
            // A loose tolerance may stop short of the projected least-squares point.
            if tol > 1e-5 {
                return Ok(());
            }
            if let Some(ls) = (na.transpose() * &na).lu().solve(&(na.transpose() * nb)) {
                let proj = Array1::from_shape_fn(3, |i| ls[i].clamp(0.0, hi));
                prop_assert!(out.objective <= p.objective(proj.view()) + 1e-9 * p.objective(proj.view()).abs().max(1.0));
            }
        }
    }
}
