use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid with {0} nodes is too coarse to resolve the poles (need at least {min})", min = crate::geom2d::MIN_NODES)]
    DegenerateGrid(usize),

    #[error("metric collapse at node {node}: e^(2w) = {factor:e} is below the admissible floor")]
    DegenerateMetric { node: usize, factor: f64 },

    #[error("non-finite conformal exponent at node {0}")]
    NonFinite(usize),

    #[error("field has {got} values but the grid has {expected} nodes")]
    Dimension { expected: usize, got: usize },

    #[error("integrator failure at t = {time}: {reason}")]
    Integrator { time: f64, reason: String },

    #[error("time {time} outside stored range [{lo}, {hi}]")]
    Range { time: f64, lo: f64, hi: f64 },

    #[error("terminal data has mass {mass}, expected 1")]
    Normalization { mass: f64 },

    #[error("bump width {width:e} is not resolved by grid spacing {spacing:e}")]
    Resolution { width: f64, spacing: f64 },

    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
