use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("unknown glyph {glyph:?} at row {row}, column {col}")]
    UnknownGlyph { row: usize, col: usize, glyph: char },
    #[error("row {row} has {found} cells, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("map has no goal cell")]
    NoGoal,
    #[error("map has no non-terminal road cell")]
    NoNonTerminal,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MdpError {
    #[error("cannot step from terminal state ({x}, {y})")]
    TerminalStep { x: usize, y: usize },
    #[error("({x}, {y}) is not a state of this map")]
    InvalidState { x: usize, y: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("discount factor must lie in (0, 1], got {0}")]
    InvalidGamma(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("normalization denominator V* - V_uniform = {0} is not positive")]
    DegenerateNormalization(f64),
    #[error("policy does not match the map")]
    PolicyShape,
    #[error("at least two candidate policies are required, got {0}")]
    TooFewCandidates(usize),
    #[error("linear system for successor features is singular")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreferenceError {
    #[error("value table was computed for a different map or reward")]
    ValueTableMismatch,
    #[error("the regret model needs state values")]
    MissingValues,
    #[error("successor feature set is empty")]
    EmptySuccessorFeatures,
    #[error("successor feature set was computed for a different map")]
    SuccessorFeatureMismatch,
    #[error("softmax temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("Boltzmann scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("preference model noise does not match the requested labeling")]
    WrongNoise,
    #[error("segment is inconsistent with the map: {0}")]
    InvalidSegment(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no non-terminating segment found from ({x}, {y}) within {attempts} attempts")]
    ResampleCap { x: usize, y: usize, attempts: usize },
    #[error("no start state reaches a {0} terminal in at most two actions")]
    NoQualifyingStart(&'static str),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset map fingerprint {found} does not match map {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("datasets share no strictly-labeled pair")]
    EmptyIntersection,
    #[error("datasets reference different maps")]
    MixedMaps,
    #[error(transparent)]
    Preference(#[from] PreferenceError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("regret training requires a successor feature set")]
    MissingSuccessorFeatures,
    #[error(transparent)]
    Preference(#[from] PreferenceError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("contingency table has an all-zero margin")]
    ZeroMargin,
    #[error("input is constant; the rank correlation is undefined")]
    ConstantInput,
    #[error("samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("exact enumeration is limited to n <= {limit}, got {n}")]
    TooLarge { n: usize, limit: usize },
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("dataset has no strict preferences")]
    EmptyDataset,
    #[error("partition of {0} samples per part is smaller than one sample")]
    EmptyPartition(usize),
    #[error("malformed report: {0}")]
    Report(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Preference(#[from] PreferenceError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}
