use thiserror::Error;

/// Crate-wide error type. Variants carry enough context to name the
/// offending node, edge, or parameter in the message.
#[derive(Debug, Error)]
pub enum Error {
    #[error("topology has no L-nodes")]
    NoLNodes,

    #[error("duplicate node id `{0}`")]
    DuplicateNodeId(String),

    #[error("unknown node id `{0}`")]
    UnknownNodeId(String),

    #[error("{kind}-node index {index} out of range (have {len})")]
    NodeIndexOutOfRange {
        kind: char,
        index: usize,
        len: usize,
    },

    #[error("negative cost on {what} `{id}`")]
    NegativeCost { what: &'static str, id: String },

    #[error("negative sample rate on I-node `{0}`")]
    NegativeRate(String),

    #[error("negative initial sample count on L-node `{0}`")]
    NegativeInitialSamples(String),

    #[error("L-L edge {index} connects `{id}` to itself")]
    SelfLoop { index: usize, id: String },

    #[error("duplicate L-L edge between `{a}` and `{b}`")]
    DuplicateLlEdge { a: String, b: String },

    #[error("duplicate I-L edge from `{i}` to `{l}`")]
    DuplicateIlEdge { i: String, l: String },

    #[error("invalid distribution on `{id}`: {reason}")]
    InvalidDistribution { id: String, reason: String },

    #[error("invalid learning profile: {0}")]
    InvalidProfile(String),

    #[error("epoch index must be >= 1")]
    ZeroEpochIndex,

    #[error("disconnected cooperation graph: spectral gap {0} is not positive")]
    DisconnectedCooperationGraph(f64),

    #[error("error law undefined: c3 + X = {0} is not positive")]
    NonPositiveLogArgument(f64),

    #[error(
        "L-node `{0}` has zero initial samples; per-epoch compute scaling is undefined"
    )]
    ZeroBaseSamples(String),

    #[error(
        "closed form has a pole: lambda_L = {lambda_l} coincides with {w} * lambda_I \
         (epoch {epoch}); perturb lambda_L and retry"
    )]
    ClosedFormPole { lambda_l: f64, w: usize, epoch: usize },

    #[error(
        "closed form requires a_L <= a_I <= b_I <= b_L for every epoch; violated at epoch {0}"
    )]
    ClosedFormOrdering(usize),

    #[error(
        "closed form would sum {compositions} composition terms, above the bound {bound}; \
         use the grid pipeline for populations this large"
    )]
    ClosedFormTooLarge { compositions: u128, bound: u128 },

    #[error("profile fit needs at least 4 observations, got {0}")]
    TooFewObservations(usize),

    #[error("profile fit needs at least 2 distinct dataset sizes")]
    DegenerateObservations,

    #[error("observation {index} is invalid: {reason}")]
    BadObservation { index: usize, reason: String },

    #[error("monte carlo needs at least 100 replications, got {0}")]
    TooFewReplications(u64),

    #[error("brute force would enumerate {states} states, above the bound {bound}")]
    BruteForceTooLarge { states: u128, bound: u128 },

    #[error("selection references unknown {kind} edge `{id}`")]
    UnknownEdge { kind: &'static str, id: String },

    #[error("invalid scenario parameters: {0}")]
    InvalidScenario(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv record {record}: {reason}")]
    Csv { record: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
