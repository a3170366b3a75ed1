use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative value {value} in component {component} at node {node}")]
    NegativeValue { component: usize, node: usize, value: f64 },

    #[error("ball (center ({cx}, {cy}), radius {r}) does not fit inside the interior region")]
    BallOutOfDomain { cx: f64, cy: f64, r: f64 },

    #[error("window exceeds domain: {0}")]
    WindowOutOfDomain(String),

    #[error("invalid interaction: {0}")]
    InvalidInteraction(String),

    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),

    #[error("partial segregation violated: product {product} on subset {subset:?} at boundary node {node}")]
    SegregationViolated {
        subset: Vec<usize>,
        node: usize,
        product: f64,
    },

    #[error("(F2) fails: sup b = {sup_b} is not below lambda_1 = {lambda1}")]
    GrowthBound { sup_b: f64, lambda1: f64 },

    #[error("trace recipe infeasible: {0}")]
    InfeasibleRecipe(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: String, iterations: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
