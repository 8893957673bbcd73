//! Infrared small-target detection via bilateral tensor-ring decomposition.
//!
//! A frame sequence becomes a 4th-order patch tensor (patch row, patch column,
//! frame-in-window, patch index). The solver splits it into a low-rank
//! background, modeled as two coupled tensor-ring chains joined through an
//! interaction rank, plus a sparse target component, by proximal alternating
//! minimization with closed-form block updates. Companion modules score
//! detections with pixel-level ROC sweeps and probe which mode pairings carry
//! correlated structure.

pub mod correlation;
pub mod evaluation;
pub mod matrix;
pub mod patch;
pub mod solver;
pub mod tensor;

pub use correlation::{analyze, CorrelationReport, DimPair};
pub use evaluation::{
    auc_family, detect_at_threshold, roc_sweep, roc_sweep_with, AucFamily, EvalError,
    GroundTruth, RocCurve, ScoreMap, TargetRecord,
};
pub use matrix::{spd_solve, svd, Matrix, Svd};
pub use solver::{
    btr_compose, lambda_from_h, solve, tr_compose, BtrFactors, Ranks, SolverError, SolverParams,
    SolverState, TrChain,
};
pub use tensor::{contract, fold, unfold, DenseTensor, ModePartition, TensorError};
