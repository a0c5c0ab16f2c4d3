//! Crate-wide error type.

use std::fmt;

/// Errors surfaced by the model builders, solvers, and integrators.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input had the wrong length or shape.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A scalar or vector argument violated a documented precondition.
    InvalidInput(String),
    /// A data file could not be parsed; `line` is 1-based.
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    /// Node rosters disagree across input tables.
    RosterMismatch {
        path: String,
        node: String,
        message: String,
    },
    /// A node has no outgoing flow records.
    ZeroOutgoingFlow { node: String },
    /// The matrix handed to the eigensolver is not strongly connected.
    NotStronglyConnected,
    /// An iterative routine hit its iteration cap before meeting tolerance.
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    /// A bisection target lies outside the bracket.
    BracketFailure { what: &'static str, detail: String },
    /// An integrated state left the admissible band.
    Instability {
        t: f64,
        node: usize,
        compartment: &'static str,
        value: f64,
    },
    /// `initial_state` produced negative active cases at a node.
    NegativeActiveCases { node: String, value: f64 },
    /// The infection-flow digraph lost strong connectivity mid-solve.
    ConnectivityLost { iterate: usize },
    /// Backtracking shrank the step below the hard floor.
    BacktrackingExhausted { gamma: f64 },
    /// The quarantine problem is infeasible at the requested decay rate.
    Infeasible(String),
    /// The balancing solution fell outside the box the theory guarantees.
    AssumptionViolated { index: usize, value: f64 },
    /// A policy cost target cannot be met inside the admissible box.
    CostUnreachable { target: f64, max_attainable: f64 },
    /// The quarantine cost has a pole at rate one.
    PoleAtOne { index: usize },
    /// The primal-dual flow blew up.
    Divergence { step: usize, norm: f64 },
    /// The primal-dual flow is oscillating; the Euler step is too large.
    StepTooLarge { step: usize },
    /// Underlying I/O failure.
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected length {expected}, found {found}"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Parse {
                path,
                line,
                message,
            } => write!(f, "{path}:{line}: {message}"),
            Error::RosterMismatch {
                path,
                node,
                message,
            } => write!(f, "{path}: node {node:?}: {message}"),
            Error::ZeroOutgoingFlow { node } => {
                write!(f, "node {node:?}: every node needs outgoing flow")
            }
            Error::NotStronglyConnected => {
                write!(f, "matrix digraph is not strongly connected")
            }
            Error::NonConvergence {
                what,
                iterations,
                residual,
            } => write!(
                f,
                "{what} did not converge after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::BracketFailure { what, detail } => write!(f, "{what}: bracket failure: {detail}"),
            Error::Instability {
                t,
                node,
                compartment,
                value,
            } => write!(
                f,
                "integration unstable at t={t}: node {node} compartment {compartment} = {value:.3e}; try a smaller dt"
            ),
            Error::NegativeActiveCases { node, value } => write!(
                f,
                "node {node:?}: deaths and recovered exceed adjusted cumulative cases (active = {value:.3e})"
            ),
            Error::ConnectivityLost { iterate } => write!(
                f,
                "infection-flow matrix lost strong connectivity at iterate {iterate}"
            ),
            Error::BacktrackingExhausted { gamma } => {
                write!(f, "backtracking exhausted (gamma = {gamma:.3e})")
            }
            Error::Infeasible(report) => write!(f, "infeasible quarantine problem: {report}"),
            Error::AssumptionViolated { index, value } => write!(
                f,
                "balancing solution component {index} is {value:.6} < 1; boundedness assumption violated numerically"
            ),
            Error::CostUnreachable {
                target,
                max_attainable,
            } => write!(
                f,
                "cost target {target:.6} unreachable (max attainable {max_attainable:.6})"
            ),
            Error::PoleAtOne { index } => {
                write!(f, "quarantine rate {index} is 1: cost has a pole there")
            }
            Error::Divergence { step, norm } => {
                write!(f, "primal-dual flow diverged at step {step} (|q_dot| = {norm:.3e})")
            }
            Error::StepTooLarge { step } => write!(
                f,
                "primal-dual residual is not decreasing (detected at step {step}); reduce the Euler step"
            ),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
