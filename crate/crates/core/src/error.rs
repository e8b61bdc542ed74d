//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received an argument outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An allocation vector does not sum to the declared resource total.
    #[error("infeasible state: {0}")]
    Infeasible(String),

    /// Graph or schedule construction failed.
    #[error("graph error: {0}")]
    Graph(String),

    /// The schedule is not jointly connected over some aligned window.
    #[error("schedule fails B-connectivity at window {window} (rounds {start}..={end})")]
    NotBConnected {
        window: usize,
        start: usize,
        end: usize,
    },

    /// A derivative evaluated to NaN or infinity during a run.
    #[error("non-finite derivative {value} at node {node} in round {round}")]
    NonFiniteDerivative {
        node: usize,
        round: usize,
        value: f64,
    },

    /// The centralized solver could not produce an optimum.
    #[error("oracle error: {0}")]
    Oracle(String),

    /// Scenario configuration is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
