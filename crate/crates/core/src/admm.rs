//! Outer ADMM loop for
//!
//! ```text
//! minimize ½‖ℳ⊙(M − Z)‖² + β‖W‖₁ + βγ‖Q‖₁   s.t.  [W, C] Qᵀ = Z,
//!          W ∈ [0, 1], Q ∈ [0, q_upper], Z ∈ [min M, max M]
//! ```
//!
//! Each iteration updates `W`, then `Q`, then `Z`, then the dual `α`. The
//! `W` and `Q` steps split into independent box-lasso problems, one per row
//! of the respective matrix, which run in parallel.

use ndarray::{concatenate, Array2, ArrayView2, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{reconstruct_parts, EncodedConfounds, FactorModel, MaskedMatrix, SolverReport, StopReason};
use crate::error::{IcqfError, Result};
use crate::init::{nndsvd_init, random_init};
use crate::lasso::{FistaWork, LassoSettings, RowSystem, WarmStart};

/// How the loading-side multiplier `γ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// `γ = (n / m) · max(M)`.
    Heuristic,
    Explicit(f64),
}

/// Upper bound on the loadings `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingBound {
    /// Largest observed value of the data.
    DataMax,
    Unbounded,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Nndsvd,
    Random { seed: u64 },
}

/// Which solver performs the `W` and `Q` updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Row-wise box lasso by inner ADMM and FISTA.
    Admm,
    /// Cyclic coordinate descent.
    Cd,
    /// Coordinate descent when `n · m ≤ 50 000`, ADMM otherwise.
    Auto,
}

/// Quantity whose relative change decides convergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopStatistic {
    /// `½‖ℳ⊙(M − Z)‖²`, guarded by the Lagrangian (both must settle).
    DataFit,
    Lagrangian,
}

/// Size threshold for [`SolverKind::Auto`].
pub const CD_AUTO_MAX_CELLS: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub k: usize,
    pub beta: f64,
    pub rho: f64,
    pub gamma: GammaMode,
    pub q_upper: LoadingBound,
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitKind,
    /// Lift the upper bounds on `W`, `Q` and `Z`, giving plain ℓ₁-NMF.
    pub baseline_l1nmf: bool,
    /// Penalty of the inner box-splitting ADMM; defaults to `rho`.
    pub tau: Option<f64>,
    pub lasso: LassoSettings,
    pub solver: SolverKind,
    pub stop_on: StopStatistic,
    /// Most coordinate-descent sweeps over each block per outer iteration.
    pub cd_sweeps: usize,
    /// A block's sweeps stop early once no entry moves by more than this,
    /// relative to the largest entry.
    pub cd_tol: f64,
    /// Reserved for residual-balancing penalty updates; must stay `false`.
    pub adaptive_rho: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            k: 2,
            beta: 0.1,
            rho: 3.0,
            gamma: GammaMode::Heuristic,
            q_upper: LoadingBound::DataMax,
            tol: 1e-3,
            max_iter: 200,
            init: InitKind::Nndsvd,
            baseline_l1nmf: false,
            tau: None,
            lasso: LassoSettings::default(),
            solver: SolverKind::Admm,
            stop_on: StopStatistic::DataFit,
            cd_sweeps: 10,
            cd_tol: 1e-4,
            adaptive_rho: false,
        }
    }
}

impl SolverConfig {
    /// Operating point published for the CBCL questionnaire in the HBN cohort.
    pub fn cbcl_hbn() -> Self {
        SolverConfig {
            k: 8,
            beta: 0.5,
            ..Self::default()
        }
    }

    /// Operating point published for the CBCL questionnaire in the ABCD cohort.
    pub fn cbcl_abcd() -> Self {
        SolverConfig {
            k: 7,
            beta: 0.5,
            ..Self::default()
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(self.rho)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(IcqfError::Config(msg));
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if !(self.rho >= std::f64::consts::SQRT_2) || !self.rho.is_finite() {
            return bad(format!("rho must be finite and at least sqrt(2); got {}", self.rho));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive; got {}", self.tol));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad(format!("beta must be finite and nonnegative; got {}", self.beta));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if let GammaMode::Explicit(g) = self.gamma {
            if !(g >= 0.0) || !g.is_finite() {
                return bad(format!("explicit gamma must be finite and nonnegative; got {g}"));
            }
        }
        if let LoadingBound::Fixed(q) = self.q_upper {
            if !(q > 0.0) {
                return bad(format!("q_upper must be positive; got {q}"));
            }
        }
        if let Some(t) = self.tau {
            if !(t > 0.0) || !t.is_finite() {
                return bad(format!("tau must be finite and positive; got {t}"));
            }
        }
        let l = &self.lasso;
        if !(l.admm_tol > 0.0 && l.fista_tol > 0.0) || l.max_outer == 0 || l.fista_max_iter == 0 {
            return bad("lasso tolerances must be positive and iteration caps nonzero".into());
        }
        if self.cd_sweeps == 0 {
            return bad("cd_sweeps must be at least 1".into());
        }
        if !(self.cd_tol >= 0.0) {
            return bad(format!("cd_tol must be non-negative, got {}", self.cd_tol));
        }
        if self.adaptive_rho {
            return bad("adaptive_rho is not supported; rho stays fixed".into());
        }
        Ok(())
    }

    /// Solver actually used for an `n × m` problem.
    pub fn resolved_solver(&self, n: usize, m: usize) -> SolverKind {
        match self.solver {
            SolverKind::Auto if n.saturating_mul(m) <= CD_AUTO_MAX_CELLS => SolverKind::Cd,
            SolverKind::Auto => SolverKind::Admm,
            s => s,
        }
    }
}

/// `γ = (n / m) · upper`.
pub fn gamma_heuristic(n: usize, m: usize, upper: f64) -> f64 {
    n as f64 / m as f64 * upper
}

/// Constraint sets and penalty weights for one fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Setup {
    pub w_upper: f64,
    pub q_upper: f64,
    pub lower: f64,
    pub upper: f64,
    pub gamma: f64,
}

impl Setup {
    pub(crate) fn resolve(data: &MaskedMatrix, config: &SolverConfig) -> Self {
        let (n, m) = data.dim();
        let gamma = match config.gamma {
            GammaMode::Heuristic => gamma_heuristic(n, m, data.upper()),
            GammaMode::Explicit(g) => g,
        };
        if config.baseline_l1nmf {
            return Setup {
                w_upper: f64::INFINITY,
                q_upper: f64::INFINITY,
                lower: data.lower(),
                upper: f64::INFINITY,
                gamma,
            };
        }
        let q_upper = match config.q_upper {
            LoadingBound::DataMax => data.upper(),
            LoadingBound::Unbounded => f64::INFINITY,
            LoadingBound::Fixed(q) => q,
        };
        Setup {
            w_upper: 1.0,
            q_upper,
            lower: data.lower(),
            upper: data.upper(),
            gamma,
        }
    }
}

pub(crate) fn check_shapes(data: &MaskedMatrix, confounds: &EncodedConfounds) -> Result<()> {
    if confounds.nrows() != data.nrows() {
        return Err(IcqfError::Dimension(format!(
            "confounds have {} rows, data has {}",
            confounds.nrows(),
            data.nrows()
        )));
    }
    Ok(())
}

/// Starting model: initial factors, zero confound loadings, `Z` equal to
/// the data where observed and to the clipped reconstruction elsewhere, and
/// a zero dual.
pub(crate) fn initial_model(data: &MaskedMatrix, confounds: &EncodedConfounds, config: &SolverConfig, setup: &Setup) -> Result<FactorModel> {
    let (n, m) = data.dim();
    let filled = data.column_mean_filled();
    let (mut w, rq) = match config.init {
        InitKind::Nndsvd => nndsvd_init(filled.view(), config.k, setup.q_upper)?,
        InitKind::Random { seed } => random_init(filled.view(), config.k, setup.q_upper, seed)?,
    };
    w.mapv_inplace(|v| v.clamp(0.0, setup.w_upper));
    let cq = Array2::zeros((m, confounds.ncols()));
    let r = reconstruct_parts(w.view(), rq.view(), confounds.matrix(), cq.view())?;
    let z = initial_z(data, r.view(), setup.lower, setup.upper);
    Ok(FactorModel {
        w,
        rq,
        cq,
        z,
        alpha: Array2::zeros((n, m)),
        k: config.k,
        beta: config.beta,
        gamma: setup.gamma,
        rho: config.rho,
        q_upper: setup.q_upper,
        w_upper: setup.w_upper,
        lower: setup.lower,
        upper: setup.upper,
    })
}

pub(crate) fn initial_z(data: &MaskedMatrix, r: ArrayView2<'_, f64>, lower: f64, upper: f64) -> Array2<f64> {
    Zip::from(data.masked_values())
        .and(data.mask())
        .and(r)
        .map_collect(|&v, &o, &r| if o != 0.0 { v } else { r.clamp(lower, upper) })
}

/// Closed-form `Z` step: `clip((ℳ⊙M + ρR − α) ⊘ (ρ + ℳ), lower, upper)`.
pub fn update_z(
    data: &MaskedMatrix,
    r: ArrayView2<'_, f64>,
    alpha: ArrayView2<'_, f64>,
    rho: f64,
    lower: f64,
    upper: f64,
) -> Array2<f64> {
    Zip::from(data.masked_values())
        .and(data.mask())
        .and(r)
        .and(alpha)
        .map_collect(|&v, &o, &r, &a| ((o * v + rho * r - a) / (rho + o)).clamp(lower, upper))
}

/// Dual ascent `α + ρ(Z − R)`.
pub fn update_dual(alpha: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>, r: ArrayView2<'_, f64>, rho: f64) -> Array2<f64> {
    Zip::from(alpha)
        .and(z)
        .and(r)
        .map_collect(|&a, &z, &r| a + rho * (z - r))
}

/// Augmented Lagrangian of `model`. Fails if any of `W`, `Q`, `Z` is
/// outside its constraint set, since the indicator terms are then infinite.
pub fn lagrangian(model: &FactorModel, data: &MaskedMatrix, confounds: &EncodedConfounds) -> Result<f64> {
    model.check_constraints(0.0)?;
    let r = model.reconstruct(confounds)?;
    Ok(lagrangian_terms(model, data, r.view()).0)
}

/// `(L, ‖Z − R‖_F, ½‖ℳ⊙(M − Z)‖²)`.
pub(crate) fn lagrangian_terms(model: &FactorModel, data: &MaskedMatrix, r: ArrayView2<'_, f64>) -> (f64, f64, f64) {
    let fit = 0.5 * data.masked_sq_error(model.z.view());
    let l1w: f64 = model.w.iter().map(|v| v.abs()).sum();
    let l1q: f64 = model.rq.iter().chain(model.cq.iter()).map(|v| v.abs()).sum();
    let mut inner = 0.0;
    let mut sq = 0.0;
    Zip::from(&model.z).and(r).and(&model.alpha).for_each(|&z, &r, &a| {
        let d = z - r;
        inner += a * d;
        sq += d * d;
    });
    let l = fit + model.beta * l1w + model.beta * model.gamma * l1q + inner + 0.5 * model.rho * sq;
    (l, sq.sqrt(), fit)
}

/// `Z + α/ρ`.
fn scaled_target(model: &FactorModel) -> Array2<f64> {
    let inv = 1.0 / model.rho;
    Zip::from(&model.z)
        .and(&model.alpha)
        .map_collect(|&z, &a| z + a * inv)
}

/// Solves every row problem of one block update in parallel. `atb` holds
/// `Aᵀb` row by row; the solutions are left in the warm starts. Returns the
/// number of rows whose inner ADMM hit its cap.
fn solve_rows(system: &RowSystem, atb: &Array2<f64>, warm: &mut [WarmStart]) -> usize {
    let p = system.p;
    let atb = atb.as_standard_layout();
    let rows = atb.as_slice().expect("standard layout");
    if p == 0 {
        return 0;
    }
    warm.par_iter_mut()
        .zip(rows.par_chunks(p))
        .map_init(
            || FistaWork::new(p),
            |ws, (warm, atb_row)| {
                let (ok, _) = system.solve(atb_row, 0.0, warm, ws);
                usize::from(!ok)
            },
        )
        .sum()
}

fn gram(a: ArrayView2<'_, f64>) -> Vec<f64> {
    let g = a.t().dot(&a);
    g.iter().copied().collect()
}

fn rows_to_warm(a: &Array2<f64>) -> Vec<WarmStart> {
    a.outer_iter()
        .map(|row| WarmStart::at(&row.to_vec()))
        .collect()
}

fn write_rows(dst: &mut Array2<f64>, warm: &[WarmStart]) {
    for (mut row, w) in dst.outer_iter_mut().zip(warm) {
        for (d, &v) in row.iter_mut().zip(&w.y) {
            *d = v;
        }
    }
}

/// `W` step with persistent warm starts.
pub(crate) fn step_w(
    model: &mut FactorModel,
    confounds: &EncodedConfounds,
    config: &SolverConfig,
    warm: &mut [WarmStart],
) -> Result<usize> {
    let mut b = scaled_target(model);
    if confounds.ncols() > 0 {
        ndarray::linalg::general_mat_mul(-1.0, &confounds.matrix(), &model.cq.t(), 1.0, &mut b);
    }
    let atb = b.dot(&model.rq);
    let system = RowSystem::new(
        gram(model.rq.view()),
        model.k,
        model.rho,
        config.tau(),
        model.beta,
        0.0,
        model.w_upper,
        config.lasso,
    );
    let missed = solve_rows(&system, &atb, warm);
    write_rows(&mut model.w, warm);
    Ok(missed)
}

/// `Q` step (factor and confound loadings jointly) with persistent warm
/// starts.
pub(crate) fn step_q(
    model: &mut FactorModel,
    confounds: &EncodedConfounds,
    config: &SolverConfig,
    warm: &mut [WarmStart],
) -> Result<usize> {
    let design = concatenate![Axis(1), model.w, confounds.matrix()];
    let target = scaled_target(model);
    let atb = target.t().dot(&design);
    let system = RowSystem::new(
        gram(design.view()),
        design.ncols(),
        model.rho,
        config.tau(),
        model.beta * model.gamma,
        0.0,
        model.q_upper,
        config.lasso,
    );
    let missed = solve_rows(&system, &atb, warm);
    let mut q = model.q();
    write_rows(&mut q, warm);
    let k = model.k;
    model.rq.assign(&q.slice(ndarray::s![.., ..k]));
    model.cq.assign(&q.slice(ndarray::s![.., k..]));
    Ok(missed)
}

/// One `W` update from fresh warm starts at the current rows of `W`.
pub fn update_w(model: &FactorModel, confounds: &EncodedConfounds, config: &SolverConfig) -> Result<Array2<f64>> {
    let mut m = model.clone();
    let mut warm = rows_to_warm(&model.w);
    step_w(&mut m, confounds, config, &mut warm)?;
    Ok(m.w)
}

/// One `Q` update from fresh warm starts; returns `[RQ, CQ]`.
pub fn update_q(model: &FactorModel, confounds: &EncodedConfounds, config: &SolverConfig) -> Result<Array2<f64>> {
    let mut m = model.clone();
    let mut warm = rows_to_warm(&model.q());
    step_q(&mut m, confounds, config, &mut warm)?;
    Ok(m.q())
}

fn ensure_finite(a: &Array2<f64>, iteration: usize, stage: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(IcqfError::NonFinite { iteration, stage })
    }
}

/// Runs the outer loop around a primal step. `primal` updates `W` (and
/// possibly `Q`) in place and returns the count of capped sub-problems.
pub(crate) fn outer_loop(
    data: &MaskedMatrix,
    confounds: &EncodedConfounds,
    config: &SolverConfig,
    model: &mut FactorModel,
    mut primal: impl FnMut(&mut FactorModel, usize) -> Result<usize>,
) -> Result<SolverReport> {
    let r0 = model.reconstruct(confounds)?;
    let (l0, res0, fit0) = lagrangian_terms(model, data, r0.view());
    let mut report = SolverReport {
        lagrangian_trace: vec![l0],
        primal_residual_trace: vec![res0],
        data_fit_trace: vec![fit0],
        iterations: 0,
        converged: false,
        stop_reason: StopReason::MaxIter,
        inner_unconverged: 0,
        dead_factors: Vec::new(),
    };
    for it in 1..=config.max_iter {
        report.inner_unconverged += primal(model, it)?;
        ensure_finite(&model.w, it, "W update")?;
        ensure_finite(&model.rq, it, "Q update")?;
        ensure_finite(&model.cq, it, "Q update")?;
        let r = model.reconstruct(confounds)?;
        model.z = update_z(data, r.view(), model.alpha.view(), model.rho, model.lower, model.upper);
        ensure_finite(&model.z, it, "Z update")?;
        model.alpha = update_dual(model.alpha.view(), model.z.view(), r.view(), model.rho);
        ensure_finite(&model.alpha, it, "dual update")?;

        let (l, res, fit) = lagrangian_terms(model, data, r.view());
        let rel = |cur: f64, prev: f64| (cur - prev).abs() <= config.tol * prev.abs().max(f64::MIN_POSITIVE);
        let l_settled = rel(l, *report.lagrangian_trace.last().unwrap());
        // The data fit starts at zero (Z₀ agrees with M) and passes through a
        // maximum on its way down; near that turning point its relative change
        // vanishes without convergence, so it only counts once L has settled too.
        let settled = match config.stop_on {
            StopStatistic::DataFit => l_settled && rel(fit, *report.data_fit_trace.last().unwrap()),
            StopStatistic::Lagrangian => l_settled,
        };
        report.lagrangian_trace.push(l);
        report.primal_residual_trace.push(res);
        report.data_fit_trace.push(fit);
        report.iterations = it;
        if settled {
            report.converged = true;
            report.stop_reason = StopReason::Tolerance;
            break;
        }
    }
    Ok(report)
}

/// Fits the model with the solver selected by `config.solver`.
pub fn fit(data: &MaskedMatrix, confounds: &EncodedConfounds, config: &SolverConfig) -> Result<(FactorModel, SolverReport)> {
    match config.resolved_solver(data.nrows(), data.ncols()) {
        SolverKind::Cd => crate::cd::fit_cd(data, confounds, config),
        _ => fit_admm(data, confounds, config),
    }
}

/// Fits the model with FISTA-based row sub-solvers regardless of
/// `config.solver`.
pub fn fit_admm(data: &MaskedMatrix, confounds: &EncodedConfounds, config: &SolverConfig) -> Result<(FactorModel, SolverReport)> {
    config.validate()?;
    check_shapes(data, confounds)?;
    let setup = Setup::resolve(data, config);
    let mut model = initial_model(data, confounds, config, &setup)?;
    let mut warm_w = rows_to_warm(&model.w);
    let mut warm_q = rows_to_warm(&model.q());
    let report = outer_loop(data, confounds, config, &mut model, |m, _| {
        let a = step_w(m, confounds, config, &mut warm_w)?;
        let b = step_q(m, confounds, config, &mut warm_q)?;
        Ok(a + b)
    })?;
    Ok((model, report))
}

/// Infers `W` for new participants with the loadings of `trained` held
/// fixed. Starts from `W = 0` and a zero dual.
pub fn transform(
    data_new: &MaskedMatrix,
    confounds_new: &EncodedConfounds,
    trained: &FactorModel,
    config: &SolverConfig,
) -> Result<(Array2<f64>, SolverReport)> {
    config.validate()?;
    check_shapes(data_new, confounds_new)?;
    let (n, m) = data_new.dim();
    if trained.rq.nrows() != m || trained.cq.nrows() != m {
        return Err(IcqfError::Dimension(format!(
            "trained loadings cover {} questions, data has {m}",
            trained.rq.nrows()
        )));
    }
    if trained.cq.ncols() != confounds_new.ncols() {
        return Err(IcqfError::Dimension(format!(
            "trained loadings have {} confound columns, new confounds have {}",
            trained.cq.ncols(),
            confounds_new.ncols()
        )));
    }
    let w = Array2::zeros((n, trained.k));
    let r = reconstruct_parts(w.view(), trained.rq.view(), confounds_new.matrix(), trained.cq.view())?;
    let mut model = FactorModel {
        z: initial_z(data_new, r.view(), trained.lower, trained.upper),
        alpha: Array2::zeros((n, m)),
        w,
        ..trained.clone()
    };
    let kind = config.resolved_solver(n, m);
    let mut warm = rows_to_warm(&model.w);
    let report = outer_loop(data_new, confounds_new, config, &mut model, |mdl, _| match kind {
        SolverKind::Cd => crate::cd::sweep_w_only(mdl, confounds_new, config.cd_sweeps, config.cd_tol),
        _ => step_w(mdl, confounds_new, config, &mut warm),
    })?;
    Ok((model.w, report))
}
