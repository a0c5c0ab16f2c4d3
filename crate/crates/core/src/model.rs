//! Shared domain types, parameter validation, and assembly of the linearized
//! infection matrices.
//!
//! The infection dynamics linearized at a disease-free-ish state are governed
//! by a 2n x 2n Metzler matrix over the stacked (asymptomatic, symptomatic)
//! fractions. Two variants are assembled here: one parameterized by travel
//! rates, one by quarantine rates. Quarantine enters purely as a diagonal
//! subtraction, which the optimizers rely on.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::mobility::build_infection_flow;
use serde::{Deserialize, Serialize};

/// Disease progression rates, all per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    /// Transmission rate of asymptomatic individuals.
    pub beta_a: f64,
    /// Transmission rate of symptomatic individuals.
    pub beta_s: f64,
    /// Rate at which asymptomatic individuals develop symptoms.
    pub epsilon: f64,
    /// Recovery rate of asymptomatic individuals.
    pub r_a: f64,
    /// Recovery rate of symptomatic individuals.
    pub r_s: f64,
    /// Recovery rate of quarantined individuals.
    pub r_q: f64,
    /// Required exponential decay rate of infections.
    pub alpha: f64,
}

impl EpidemicParams {
    /// Rates used throughout the bundled scenarios: recovery 0.2 for every
    /// disease state and symptom onset 0.32.
    pub fn with_betas(beta_a: f64, beta_s: f64, alpha: f64) -> Self {
        EpidemicParams {
            beta_a,
            beta_s,
            epsilon: 0.32,
            r_a: 0.2,
            r_s: 0.2,
            r_q: 0.2,
            alpha,
        }
    }
}

/// Node populations, travel-rate matrix, and the derived infection-flow
/// matrix.
///
/// `flow` is always recomputed from `tau` and `populations`, so the stored
/// copy reproduces bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    populations: Vec<f64>,
    tau: Mat,
    flow: Mat,
}

impl NetworkSpec {
    /// Build a network from populations and a travel-rate matrix; the
    /// infection-flow matrix is derived.
    pub fn from_travel_rates(populations: Vec<f64>, tau: Mat) -> Result<Self> {
        let n = populations.len();
        if tau.rows() != n || tau.cols() != n {
            return Err(Error::DimensionMismatch {
                what: "travel-rate matrix",
                expected: n,
                found: tau.rows(),
            });
        }
        let flow = build_infection_flow(&tau, &populations)?;
        Ok(NetworkSpec {
            populations,
            tau,
            flow,
        })
    }

    pub fn len(&self) -> usize {
        self.populations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.populations.is_empty()
    }

    pub fn populations(&self) -> &[f64] {
        &self.populations
    }

    pub fn tau(&self) -> &Mat {
        &self.tau
    }

    pub fn flow(&self) -> &Mat {
        &self.flow
    }

    /// Travel rates flattened column-major; the single vectorization order
    /// used by every gradient and projection in the crate.
    pub fn tau_vec(&self) -> Vec<f64> {
        let n = self.len();
        let mut v = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                v[j * n + i] = self.tau[(i, j)];
            }
        }
        v
    }
}

/// Rebuild an n x n travel-rate matrix from its column-major vectorization.
pub fn tau_from_vec(tau_vec: &[f64], n: usize) -> Result<Mat> {
    if tau_vec.len() != n * n {
        return Err(Error::DimensionMismatch {
            what: "tau_vec",
            expected: n * n,
            found: tau_vec.len(),
        });
    }
    Ok(Mat::from_fn(n, n, |i, j| tau_vec[j * n + i]))
}

/// Per-node compartment fractions at one time instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompartmentState {
    pub t: f64,
    pub s: Vec<f64>,
    pub x_a: Vec<f64>,
    pub x_s: Vec<f64>,
    pub k: Vec<f64>,
    pub h: Vec<f64>,
}

impl CompartmentState {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Max deviation of the per-node compartment sums from one.
    pub fn conservation_defect(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.s[i] + self.x_a[i] + self.x_s[i] + self.k[i] + self.h[i] - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-node quarantine rates for the two infected compartments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineRates {
    pub q_a: Vec<f64>,
    pub q_s: Vec<f64>,
}

impl QuarantineRates {
    pub fn zeros(n: usize) -> Self {
        QuarantineRates {
            q_a: vec![0.0; n],
            q_s: vec![0.0; n],
        }
    }

    pub fn uniform(n: usize, q: f64) -> Self {
        QuarantineRates {
            q_a: vec![q; n],
            q_s: vec![q; n],
        }
    }

    /// Stacked (q_a, q_s) vector of length 2n.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::DimensionMismatch {
                what: "quarantine vector",
                expected: flat.len() + 1,
                found: flat.len(),
            });
        }
        let n = flat.len() / 2;
        Ok(QuarantineRates {
            q_a: flat[..n].to_vec(),
            q_s: flat[n..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.q_a.len());
        v.extend_from_slice(&self.q_a);
        v.extend_from_slice(&self.q_s);
        v
    }

    pub fn len(&self) -> usize {
        self.q_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_a.is_empty()
    }

    pub fn in_unit_box(&self) -> bool {
        self.q_a
            .iter()
            .chain(self.q_s.iter())
            .all(|&q| (0.0..=1.0).contains(&q))
    }
}

/// Per-node relative economic costs of quarantining each infected compartment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomicCosts {
    pub z_a: Vec<f64>,
    pub z_s: Vec<f64>,
}

impl EconomicCosts {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.z_a.len());
        v.extend_from_slice(&self.z_a);
        v.extend_from_slice(&self.z_s);
        v
    }
}

/// Accumulated invariant violations; empty means everything holds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn flag(&mut self, message: impl Into<String>) {
        self.violations.push(message.into());
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            write!(f, "all invariants hold")
        } else {
            write!(f, "{}", self.violations.join("; "))
        }
    }
}

/// Check every documented invariant of the parameters and the network.
///
/// Report-style: never fails, lists each violation instead. Solvers call this
/// up front and abort on a non-empty report.
pub fn validate_params(p: &EpidemicParams, net: &NetworkSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    if p.beta_a < 0.0 {
        report.flag("beta_a nonnegativity violated");
    }
    if p.beta_s < 0.0 {
        report.flag("beta_s nonnegativity violated");
    }
    if p.epsilon < 0.0 {
        report.flag("epsilon nonnegativity violated");
    }
    if p.r_a < 0.0 {
        report.flag("r_a nonnegativity violated");
    }
    if p.r_s < 0.0 {
        report.flag("r_s nonnegativity violated");
    }
    if p.r_q < 0.0 {
        report.flag("r_q nonnegativity violated");
    }
    if p.alpha < 0.0 {
        report.flag("alpha nonnegativity violated");
    }
    if p.beta_a > p.beta_s {
        report.flag("beta_a exceeds beta_s (asymptomatic cases are at most as contagious)");
    }
    for (i, &pop) in net.populations().iter().enumerate() {
        if pop <= 0.0 {
            report.flag(format!("population of node {i} must be positive"));
        }
    }
    let n = net.len();
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            let t = net.tau()[(i, j)];
            if t < 0.0 {
                report.flag(format!("travel rate ({i},{j}) is negative"));
            }
            row_sum += t;
        }
        if row_sum > 1.0 + 1e-12 {
            report.flag(format!(
                "travel-rate row {i} sums to {row_sum:.6}, exceeding the row-sum bound of 1"
            ));
        }
    }
    for i in 0..n {
        for j in 0..n {
            if net.flow()[(i, j)] < 0.0 {
                report.flag(format!("infection flow ({i},{j}) is negative"));
            }
        }
    }
    match build_infection_flow(net.tau(), net.populations()) {
        Ok(recomputed) => {
            for i in 0..n {
                for j in 0..n {
                    let stored = net.flow()[(i, j)];
                    let fresh = recomputed[(i, j)];
                    let scale = stored.abs().max(fresh.abs()).max(1e-300);
                    if (stored - fresh).abs() / scale > 1e-12 {
                        report.flag(format!(
                            "stored infection flow ({i},{j}) is inconsistent with the travel rates"
                        ));
                    }
                }
            }
        }
        Err(e) => report.flag(format!("infection flow not recomputable: {e}")),
    }
    report
}

/// Assemble the travel-parameterized linearization:
///
/// ```text
/// [ beta_a diag(s0) A - (eps + r_a) I    beta_s diag(s0) A ]
/// [ eps I                                -r_s I             ]
/// ```
///
/// with A derived from the (column-major) travel-rate vector.
pub fn assemble_travel_matrix(
    s0: &[f64],
    tau_vec: &[f64],
    populations: &[f64],
    p: &EpidemicParams,
) -> Result<Mat> {
    let n = populations.len();
    if s0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "s0",
            expected: n,
            found: s0.len(),
        });
    }
    let tau = tau_from_vec(tau_vec, n)?;
    let flow = build_infection_flow(&tau, populations)?;
    Ok(assemble_from_flow(s0, &flow, p, None))
}

/// Assemble the quarantine-parameterized linearization: the same matrix with
/// diag(q) subtracted.
pub fn assemble_quarantine_matrix(
    s0: &[f64],
    flow: &Mat,
    p: &EpidemicParams,
    q: &QuarantineRates,
) -> Result<Mat> {
    let n = flow.rows();
    if s0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "s0",
            expected: n,
            found: s0.len(),
        });
    }
    if q.len() != n {
        return Err(Error::DimensionMismatch {
            what: "quarantine rates",
            expected: n,
            found: q.len(),
        });
    }
    Ok(assemble_from_flow(s0, flow, p, Some(q)))
}

pub(crate) fn assemble_from_flow(
    s0: &[f64],
    flow: &Mat,
    p: &EpidemicParams,
    q: Option<&QuarantineRates>,
) -> Mat {
    let n = flow.rows();
    let mut m = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let sa = s0[i] * flow[(i, j)];
            m[(i, j)] = p.beta_a * sa;
            m[(i, n + j)] = p.beta_s * sa;
        }
        m[(i, i)] -= p.epsilon + p.r_a;
        m[(n + i, i)] = p.epsilon;
        m[(n + i, n + i)] = -p.r_s;
        if let Some(q) = q {
            m[(i, i)] -= q.q_a[i];
            m[(n + i, n + i)] -= q.q_s[i];
        }
    }
    m
}
