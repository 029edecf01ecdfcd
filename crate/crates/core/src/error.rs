use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the modelling core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("feature `{0}` has zero variance and cannot be normalized")]
    DegenerateFeature(String),

    #[error("dataset is already normalized; normalization statistics are immutable")]
    AlreadyNormalized,

    #[error("dataset has missing values in feature `{0}`")]
    MissingValues(String),

    #[error("imputation error: {0}")]
    Imputation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("partial likelihood is undefined: the data contain no events")]
    NoEvents,

    #[error("coordinate descent did not converge in {iterations} sweeps (KKT residual {kkt_residual:e})")]
    Convergence {
        iterations: usize,
        kkt_residual: f64,
        last_beta: Vec<f64>,
    },

    #[error("concordance is undefined: no comparable pairs")]
    NoComparablePairs,

    #[error("resampling gave up after {0} redraws")]
    Resampling(usize),

    #[error("too few events ({found}) for the test; need at least {needed}")]
    InsufficientEvents { found: usize, needed: usize },

    #[error("scoring error: missing {}", .0.join(", "))]
    MissingInputs(Vec<String>),

    #[error("impossible value for `{field}`: {value}")]
    ImpossibleValue { field: String, value: f64 },

    #[error("constant table integrity check failed: {0}")]
    Integrity(String),

    #[error("nothing to plot: the model has no nonzero coefficients")]
    NothingToPlot,

    #[error("value {value} for `{feature}` is outside the axis range [{lo}, {hi}]")]
    OutOfRange {
        feature: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("generation error: {0}")]
    Generation(String),

    #[error("seed {seed}: {source}")]
    Seeded {
        seed: u64,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
