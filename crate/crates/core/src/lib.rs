//! Bounded, sparse, confound-aware nonnegative matrix factorization of
//! questionnaire data with missing answers.
//!
//! The model factors a masked response matrix `M` (participants × questions)
//! as `M ≈ [W, C] Qᵀ` with `W ∈ [0, 1]`, bounded nonnegative loadings `Q`,
//! and known confound columns `C`. See the `examples/` directory for
//! runnable walkthroughs of each capability.

pub mod admm;
pub mod cd;
pub mod consensus;
pub mod data;
pub mod detect;
pub mod error;
pub mod eval;
pub mod init;
pub mod io;
pub mod lasso;
pub mod rank;
pub mod synthetic;

pub use admm::{fit, fit_admm, gamma_heuristic, lagrangian, transform, update_dual, update_q, update_w, update_z};
pub use admm::{GammaMode, InitKind, LoadingBound, SolverConfig, SolverKind, StopStatistic};
pub use cd::{cd_update_entry, fit_cd, CdState};
pub use data::{
    encode_confounds, reconstruct, ColumnEncoding, ColumnLabel, ConfoundEncoder, ConfoundKind, ConfoundSpec,
    EncodedConfounds, FactorModel, MaskedMatrix, RawColumnData, RawConfound, SolverReport, StopReason,
};
pub use error::{IcqfError, Result};
pub use init::{nndsvd_init, random_init};
pub use lasso::{fista_solve, lipschitz_constant, solve_box_lasso, AffineGradient, BoxLassoOutcome, BoxLassoProblem, LassoSettings};
pub use consensus::{consensus_criteria, ConsensusScores};
pub use detect::{bench_detect, detect_rank, BenchRow, BenchSpec, DetectScheme, DetectSettings, Detection};
pub use eval::{detection_error_stats, greedy_match_factors, masked_rmse, matched_w_error, MatchResult, MatchedPair};
pub use rank::{bcv_score, bic1, make_bcv_plan, select_k, BcvPlan, BcvScore, RankSelectionResult};
pub use io::{load_masked_matrix, load_model, save_loading_table, save_model};
pub use synthetic::{gen_dataset, gen_step_design, SyntheticDataset, SyntheticSpec};
