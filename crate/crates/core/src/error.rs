use thiserror::Error;

/// Errors surfaced by chart construction, evaluation and the numerical pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate domain box: axis {axis} has bounds [{lo}, {hi}]")]
    DegenerateDomain { axis: usize, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    BadParameter(String),

    #[error("point {point:?} outside chart domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("trajectory left the chart domain at t = {time}: {point:?}")]
    TrajectoryEscaped { time: f64, point: Vec<f64> },

    #[error("time {t} outside interval [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("operands live on different charts")]
    ChartMismatch,

    #[error("flow map was not generated from this Hamiltonian")]
    MismatchedPairing,

    #[error("grid does not cover the support: boundary value {value:.3e} at {point:?}")]
    GridMissesSupport { value: f64, point: Vec<f64> },

    #[error("empty sample set")]
    EmptySampleSet,

    #[error("no candidate in the search box achieves a positive margin (best: eps = {best_eps:?}, margin = {best_margin:.3e})")]
    NoRegularCandidate { best_eps: Vec<f64>, best_margin: f64 },

    #[error("speed |G_t| vanishes at t = {t} ({value:.3e}); constant-speed reparameterization needs a regular isotopy")]
    VanishingSpeed { t: f64, value: f64 },

    #[error("requested smallness {requested:.3e} below the achievable {achievable:.3e} for the smoothing template")]
    SmallnessUnachievable { requested: f64, achievable: f64 },

    #[error("sequence thinning exhausted the input ({kept} of {total} kept) before the stage gates held")]
    ThinningExhausted { kept: usize, total: usize },

    #[error("stage {stage} bound violated: {name} = {measured:.6e} but the bound is {bound:.6e}")]
    StageBound {
        stage: usize,
        name: String,
        measured: f64,
        bound: f64,
    },

    #[error("candidate {index} time-one map differs from the target by {distance:.3e} (tolerance {tol:.3e})")]
    CandidateMismatch {
        index: usize,
        distance: f64,
        tol: f64,
    },

    #[error("no candidates supplied")]
    NoCandidates,

    #[error("point map is not defined there: {0:?}")]
    OutsideMapDomain(Vec<f64>),

    #[error("{0}")]
    Parse(#[from] ParseError),

    #[error("unresolved name `{0}` in configuration")]
    Unresolved(String),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parse failure with position information for config and expression text.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("parse error at {line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, Error>;
