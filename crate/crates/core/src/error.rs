use thiserror::Error;

/// Errors raised by the normal-form engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tail integral diverges: {0}")]
    TailDiverges(String),

    #[error("rate {requested} exceeds the certifiable decay rate {max} of the function")]
    RateTooLarge { requested: f64, max: f64 },

    #[error("function is not differentiable at t = {0}")]
    NotDifferentiable(f64),

    #[error("invalid time function: {0}")]
    InvalidTimeFn(String),

    #[error("series metadata mismatch: {0}")]
    MetadataMismatch(String),

    #[error("radii ({rho}, {sigma}) exceed the series radii ({max_rho}, {max_sigma})")]
    RadiiOutOfRange {
        rho: f64,
        sigma: f64,
        max_rho: f64,
        max_sigma: f64,
    },

    #[error("Lie series did not converge within {max_order} orders; term norms {history:?}")]
    LieSeriesDiverged { max_order: usize, history: Vec<f64> },

    #[error("Birkhoff step {step} diverged (Theta = {theta:?}); Lie term norms {history:?}")]
    BirkhoffDiverged {
        step: usize,
        theta: Option<f64>,
        history: Vec<f64>,
    },

    #[error("homological equation has a non-integrable mode k = {harmonic:?}{node}: {reason}")]
    NonIntegrableMode {
        harmonic: Vec<i32>,
        node: String,
        reason: String,
    },

    #[error("operation requires an isochronous integrable part")]
    NotIsochronous,

    #[error("point outside the domain of the map: {0}")]
    OutsideDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("overlapping bumps: t[{index}+1] - t[{index}] = {gap} <= 2h = {min_gap}")]
    OverlappingBumps { index: usize, gap: f64, min_gap: f64 },

    #[error("smallness conditions failed: {0:?}")]
    FlagsFailed(Vec<String>),

    #[error("step size underflow at t = {t}: h = {h}, state = {state:?}")]
    StepUnderflow { t: f64, h: f64, state: Vec<f64> },

    #[error("step limit {steps} reached at t = {t}")]
    StepLimit { t: f64, steps: usize },

    #[error("shell truncation: K_max = {k_max} < r N = {needed}")]
    HarmonicCutoffTooSmall { k_max: u32, needed: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;
