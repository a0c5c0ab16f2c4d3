//! Networked epidemic simulation and spectral intervention design.
//!
//! The crate models epidemic spread over a travel network, simulates the base
//! and quarantine-extended compartmental dynamics, and computes two kinds of
//! optimal interventions:
//!
//! * travel-rate reduction by projected gradient descent on the dominant
//!   eigenvalue of the linearized infection matrix ([`travel_opt`]);
//! * quarantine-rate design by an exact matrix-balancing reduction,
//!   cross-checked by augmented primal-dual gradient dynamics
//!   ([`quarantine_opt`]).
//!
//! Supporting modules ingest mobility/population/case tables ([`mobility`]),
//! assemble the linearized matrices ([`model`]), integrate the nonlinear
//! dynamics ([`dynamics`]), and provide the Perron-Frobenius machinery the
//! optimizers run on ([`spectral`]).

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod mobility;
pub mod model;
pub mod quarantine_opt;
pub mod spectral;
pub mod trace;
pub mod travel_opt;

pub use error::{Error, Result};
pub use linalg::Mat;
pub use model::{
    assemble_quarantine_matrix, assemble_travel_matrix, validate_params, CompartmentState,
    EconomicCosts, EpidemicParams, NetworkSpec, QuarantineRates, ValidationReport,
};
pub use trace::{SolveTrace, StopReason, TraceEntry};
