//! Convergence diagnostics shared by the solvers.

use serde::{Deserialize, Serialize};

/// Why an iterative solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    GradientTolerance,
    StepTolerance,
    ResidualTolerance,
    MaxIterations,
}

/// One logged iterate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    /// Objective value at this iterate.
    pub objective: f64,
    /// Step size in effect (gradient step or Euler step).
    pub step: f64,
    /// Solver-specific residual (gradient norm, KKT residual, ...).
    pub residual: f64,
}

/// Iterates, objective values, step sizes, and convergence diagnostics of a
/// solver run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveTrace {
    pub entries: Vec<TraceEntry>,
    pub iterations: usize,
    pub stop: StopReason,
}

impl SolveTrace {
    pub fn new() -> Self {
        SolveTrace {
            entries: Vec::new(),
            iterations: 0,
            stop: StopReason::MaxIterations,
        }
    }

    pub fn push(&mut self, iter: usize, objective: f64, step: f64, residual: f64) {
        self.entries.push(TraceEntry {
            iter,
            objective,
            step,
            residual,
        });
    }

    /// Objective values in logged order.
    pub fn objectives(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.objective)
    }

    pub fn is_monotone_nonincreasing(&self, slack: f64) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[1].objective <= w[0].objective + slack)
    }
}

impl Default for SolveTrace {
    fn default() -> Self {
        Self::new()
    }
}
