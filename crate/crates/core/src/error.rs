//! Error types shared across the crate.

use thiserror::Error;

/// Errors surfaced by geometry, flow and certification operations.
///
/// Certificates never error on a *failed check* — those are reported as
/// data. Errors signal contract violations (off-manifold input, degenerate
/// structure) or exhausted numerical budgets.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("point is off the manifold (constraint residual {residual:.3e} > {tol:.3e})")]
    OffManifold { residual: f64, tol: f64 },

    #[error("constraint Jacobian is rank deficient at the given point (rank {rank}, expected {expected})")]
    RankDeficient { rank: usize, expected: usize },

    #[error("retraction failed to reach the manifold (residual {residual:.3e})")]
    RetractionDiverged { residual: f64 },

    #[error("integrator step size underflowed at t = {t:.6e}")]
    StepCollapse { t: f64 },

    #[error("flow limit undetermined within time budget {budget:.3e}")]
    LimitUndetermined { budget: f64 },

    #[error("flow shadowed critical point {near_id} beyond the dwell budget without capture")]
    SaddleShadowing { near_id: usize },

    #[error("point is not critical (gradient norm {grad_norm:.3e} > {tol:.3e})")]
    NotCritical { grad_norm: f64, tol: f64 },

    #[error("degenerate Hessian: eigenvalue {eigenvalue:.3e} within {tol:.3e} of zero")]
    DegenerateHessian { eigenvalue: f64, tol: f64 },

    #[error("fixed-point set does not look finite: {detail}")]
    FixedSetNotFinite { detail: String },

    #[error("critical set does not look finite: {detail}")]
    NonFiniteCrit { detail: String },

    #[error("moduli construction requires index gap 2, got {gap}")]
    IndexGapUnsupported { gap: i64 },

    #[error("sampling resolution insufficient: cluster with {members} members (minimum {minimum})")]
    ResolutionInsufficient { members: usize, minimum: usize },

    #[error("tangent frame propagation diverged at t = {t:.6e}")]
    FramePropagationDiverged { t: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
