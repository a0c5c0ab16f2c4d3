//! Quarantine-rate design: minimize the economic cost of quarantining subject
//! to a prescribed decay rate of infections.
//!
//! The problem is solved two ways. The exact route reduces it to matrix
//! balancing: after substituting w = 1 - q and inverting, the optimum is read
//! off a diagonal similarity scaling of diag(z) (-B0^{-1}) with balanced row
//! and column sums. The dynamic route integrates augmented primal-dual
//! gradient dynamics on the same constrained program and is used as a
//! cross-check.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, strongly_connected, Mat};
use crate::model::{
    assemble_from_flow, assemble_quarantine_matrix, EconomicCosts, EpidemicParams, QuarantineRates,
};
use crate::spectral::{dominant_eigenpair, dominant_eigenpair_warm};
use crate::trace::{SolveTrace, StopReason};
use serde::{Deserialize, Serialize};

/// Default relative imbalance tolerance of the balancing iteration.
pub const BALANCE_TOL: f64 = 1e-10;
/// Sweep cap of the balancing iteration.
pub const BALANCE_MAX_SWEEPS: usize = 1_000_000;
/// The optimum must activate the decay constraint to within this tolerance.
const LAMBDA_ACTIVE_TOL: f64 = 1e-6;
/// Safety margin keeping quarantine rates away from the cost pole at one.
pub const BOX_MARGIN: f64 = 1e-6;

/// One quarantine-design problem instance (all borrowed, cheap to pass
/// around).
#[derive(Debug, Clone, Copy)]
pub struct QuarantineProblem<'a> {
    pub s0: &'a [f64],
    pub flow: &'a Mat,
    pub params: &'a EpidemicParams,
    /// Required decay rate: the optimized matrix must satisfy
    /// lambda_max <= -alpha.
    pub alpha: f64,
    pub costs: &'a EconomicCosts,
}

/// Feasibility diagnostics for one problem instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub alpha: f64,
    /// Rate-based bound: alpha must stay below
    /// min(r_s + 1, eps + r_a + 1 - max_i (beta_a diag(s0) A)_ii).
    pub alpha_bound_rate: f64,
    /// Spectral bound -lambda_max(C0); `None` when the flow digraph is not
    /// strongly connected.
    pub alpha_bound_spectral: Option<f64>,
    /// Largest absolute diagonal entry of B0.
    pub assumption_m: f64,
    /// min_j eps * beta_s * s0_j * a_jj.
    pub assumption_x: f64,
    /// Whether 1 + x/m^2 >= m, the sufficient condition for the balancing
    /// solution to land inside the unit box.
    pub assumption1_holds: bool,
    pub strongly_connected: bool,
    pub s0_positive: bool,
    pub feasible: bool,
}

impl FeasibilityReport {
    /// The conditions without which the reduction cannot run at all
    /// (the box-containment assumption is advisory: its failure is caught at
    /// solve time by the v* >= 1 check).
    pub fn hard_feasible(&self) -> bool {
        self.strongly_connected
            && self.s0_positive
            && self.alpha >= 0.0
            && self.alpha < self.alpha_bound_rate
            && self.alpha_bound_spectral.map_or(false, |b| self.alpha < b)
    }
}

impl std::fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "alpha = {}, rate bound = {}, spectral bound = {:?}, m = {}, x = {}, assumption holds = {}, strongly connected = {}, s0 positive = {}",
            self.alpha,
            self.alpha_bound_rate,
            self.alpha_bound_spectral,
            self.assumption_m,
            self.assumption_x,
            self.assumption1_holds,
            self.strongly_connected,
            self.s0_positive
        )
    }
}

/// Scaling vector and residual of a balancing run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceResult {
    /// Positive scaling vector, gauge-fixed to d[0] = 1.
    pub d_star: Vec<f64>,
    /// Final relative row/column imbalance.
    pub imbalance: f64,
    pub iterations: usize,
}

/// B0 and the pieces of it the reduction consumes.
#[derive(Debug, Clone)]
pub struct B0Matrices {
    pub b0: Mat,
    /// -B0^{-1}, elementwise nonnegative for a Hurwitz Metzler B0.
    pub neg_inverse: Mat,
    pub lambda_max: f64,
}

/// Output of the balancing route.
#[derive(Debug, Clone)]
pub struct QuarantineSolution {
    pub rates: QuarantineRates,
    /// Dominant eigenvalue of the controlled matrix; sits at -alpha.
    pub lambda_max: f64,
    pub cost: f64,
    pub v_star: Vec<f64>,
    pub balance: BalanceResult,
    pub feasibility: FeasibilityReport,
}

/// Total economic cost sum_i z_i / (1 - q_i) over both compartments.
pub fn quarantine_cost(q: &QuarantineRates, z: &EconomicCosts) -> Result<f64> {
    cost_flat(&q.to_flat(), &z.to_flat())
}

pub(crate) fn cost_flat(q: &[f64], z: &[f64]) -> Result<f64> {
    debug_assert_eq!(q.len(), z.len());
    let mut total = 0.0;
    for (i, (&qi, &zi)) in q.iter().zip(z).enumerate() {
        if qi >= 1.0 {
            return Err(Error::PoleAtOne { index: i });
        }
        total += zi / (1.0 - qi);
    }
    Ok(total)
}

/// Gradient of the cost: component i is z_i / (1 - q_i)^2.
pub fn grad_cost(q: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    if q.len() != z.len() {
        return Err(Error::DimensionMismatch {
            what: "grad_cost",
            expected: z.len(),
            found: q.len(),
        });
    }
    q.iter()
        .zip(z)
        .enumerate()
        .map(|(i, (&qi, &zi))| {
            if qi >= 1.0 {
                Err(Error::PoleAtOne { index: i })
            } else {
                Ok(zi / ((1.0 - qi) * (1.0 - qi)))
            }
        })
        .collect()
}

/// Osborne-style balancing: find positive d so that
/// (diag d)^{-1} M (diag d) has equal off-diagonal row and column sums at
/// every index.
///
/// Cyclic sweeps update d_i <- d_i sqrt(rowsum_i / colsum_i) of the currently
/// scaled matrix until the largest relative imbalance drops below `tol`. The
/// diagonal carries no information for balancing and is ignored.
pub fn balance(mat: &Mat, tol: f64, max_sweeps: usize) -> Result<BalanceResult> {
    if !mat.is_square() {
        return Err(Error::InvalidInput("balance: matrix must be square".into()));
    }
    let n = mat.rows();
    for i in 0..n {
        for j in 0..n {
            if i != j && mat[(i, j)] < 0.0 {
                return Err(Error::InvalidInput(
                    "balance: off-diagonal entries must be nonnegative".into(),
                ));
            }
        }
    }
    if n == 1 {
        return Ok(BalanceResult {
            d_star: vec![1.0],
            imbalance: 0.0,
            iterations: 0,
        });
    }
    let support = Mat::from_fn(n, n, |i, j| {
        if i != j && mat[(i, j)] > 0.0 {
            1.0
        } else {
            0.0
        }
    });
    if !strongly_connected(&support) {
        return Err(Error::NotStronglyConnected);
    }

    let mut d = vec![1.0; n];
    let imbalance_of = |d: &[f64]| -> f64 {
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut row = 0.0;
            let mut col = 0.0;
            for j in 0..n {
                if j != i {
                    row += mat[(i, j)] * d[j] / d[i];
                    col += mat[(j, i)] * d[i] / d[j];
                }
            }
            worst = worst.max((row - col).abs() / (row + col));
        }
        worst
    };

    let initial = imbalance_of(&d);
    if initial <= tol {
        return Ok(BalanceResult {
            d_star: d,
            imbalance: initial,
            iterations: 0,
        });
    }
    for sweep in 1..=max_sweeps {
        for i in 0..n {
            let mut row = 0.0;
            let mut col = 0.0;
            for j in 0..n {
                if j != i {
                    row += mat[(i, j)] * d[j] / d[i];
                    col += mat[(j, i)] * d[i] / d[j];
                }
            }
            // Strong connectivity keeps both sums positive.
            d[i] *= (row / col).sqrt();
        }
        let imbalance = imbalance_of(&d);
        if imbalance <= tol {
            let gauge = d[0];
            d.iter_mut().for_each(|di| *di /= gauge);
            return Ok(BalanceResult {
                d_star: d,
                imbalance,
                iterations: sweep,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "matrix balancing",
        iterations: BALANCE_MAX_SWEEPS,
        residual: imbalance_of(&d),
    })
}

impl<'a> QuarantineProblem<'a> {
    pub fn n(&self) -> usize {
        self.flow.rows()
    }

    pub fn dim(&self) -> usize {
        2 * self.n()
    }

    fn z_flat(&self) -> Vec<f64> {
        self.costs.to_flat()
    }

    pub fn cost(&self, q: &QuarantineRates) -> Result<f64> {
        quarantine_cost(q, self.costs)
    }

    fn lambda_max_flat(&self, q_flat: &[f64]) -> Result<f64> {
        let q = QuarantineRates::from_flat(q_flat)?;
        let m = assemble_quarantine_matrix(self.s0, self.flow, self.params, &q)?;
        Ok(dominant_eigenpair(&m)?.lambda)
    }

    /// Compute both decay-rate bounds, the box-containment quantities, and
    /// the structural requirements; report-style, never fails.
    pub fn feasibility_check(&self) -> FeasibilityReport {
        let n = self.n();
        let p = self.params;
        let connected = strongly_connected(self.flow);
        let s0_positive = self.s0.iter().all(|&s| s > 0.0);

        let max_diag_transmission = (0..n)
            .map(|i| p.beta_a * self.s0[i] * self.flow[(i, i)])
            .fold(f64::NEG_INFINITY, f64::max);
        let alpha_bound_rate = (p.r_s + 1.0).min(p.epsilon + p.r_a + 1.0 - max_diag_transmission);

        let alpha_bound_spectral = if connected && n > 0 {
            // C0 = M(q = 0) - I.
            let m0 = assemble_from_flow(self.s0, self.flow, p, None);
            let mut c0 = m0;
            for i in 0..2 * n {
                c0[(i, i)] -= 1.0;
            }
            crate::spectral::rayleigh_estimate(&c0).map(|lambda| -lambda)
        } else {
            None
        };

        // Diagonal extremes of B0 = C0 + alpha I.
        let assumption_m = (0..n)
            .map(|i| {
                let upper = p.beta_a * self.s0[i] * self.flow[(i, i)]
                    - (p.epsilon + p.r_a + 1.0 - self.alpha);
                let lower = -(p.r_s + 1.0 - self.alpha);
                upper.abs().max(lower.abs())
            })
            .fold(0.0f64, f64::max);
        let assumption_x = (0..n)
            .map(|j| p.epsilon * p.beta_s * self.s0[j] * self.flow[(j, j)])
            .fold(f64::INFINITY, f64::min);
        let assumption1_holds = assumption_m > 0.0
            && 1.0 + assumption_x / (assumption_m * assumption_m) >= assumption_m;

        let mut report = FeasibilityReport {
            alpha: self.alpha,
            alpha_bound_rate,
            alpha_bound_spectral,
            assumption_m,
            assumption_x,
            assumption1_holds,
            strongly_connected: connected,
            s0_positive,
            feasible: false,
        };
        report.feasible = report.hard_feasible() && assumption1_holds;
        report
    }

    /// Assemble B0 (the alpha-shifted, unit-damped linearization), verify it
    /// is Hurwitz, and compute its elementwise-nonnegative negated inverse.
    pub fn build_b0(&self) -> Result<B0Matrices> {
        let n = self.n();
        let mut b0 = assemble_from_flow(self.s0, self.flow, self.params, None);
        for i in 0..2 * n {
            b0[(i, i)] += self.alpha - 1.0;
        }
        let lambda_max = dominant_eigenpair(&b0)?.lambda;
        if lambda_max >= 0.0 {
            let report = self.feasibility_check();
            return Err(Error::Infeasible(format!(
                "B0 is not Hurwitz (lambda_max = {lambda_max:.6}); {report}"
            )));
        }
        let mut neg_inverse = b0.inverse_refined()?;
        for i in 0..2 * n {
            for j in 0..2 * n {
                neg_inverse[(i, j)] = -neg_inverse[(i, j)];
            }
        }
        let slack = 1e-12 * neg_inverse.inf_norm().max(1.0);
        for i in 0..2 * n {
            for j in 0..2 * n {
                let v = neg_inverse[(i, j)];
                if v < -slack {
                    return Err(Error::InvalidInput(format!(
                        "-B0^(-1) has a negative entry {v:.3e} at ({i},{j})"
                    )));
                }
                if v < 0.0 {
                    neg_inverse[(i, j)] = 0.0;
                }
            }
        }
        Ok(B0Matrices {
            b0,
            neg_inverse,
            lambda_max,
        })
    }

    /// Exact quarantine design by the balancing reduction.
    ///
    /// Balances diag(z) (-B0^{-1}), reads off
    /// v* = (diag d*)^{-1} (-B0^{-1}) (diag d*) 1, and maps back through
    /// q* = 1 - 1/v*. The decay constraint is active at the optimum, which is
    /// verified against the assembled controlled matrix.
    ///
    /// When the uncontrolled system already meets the decay target, q = 0 is
    /// returned directly: the cost is strictly increasing in every rate, so
    /// zero rates are optimal whenever they are feasible. (The reduction
    /// itself does not cover this regime; dropping the upper bound on
    /// 1 - q would let it trade rates below zero.)
    pub fn optimal_quarantine(&self) -> Result<QuarantineSolution> {
        let feasibility = self.feasibility_check();
        if !feasibility.hard_feasible() {
            return Err(Error::Infeasible(feasibility.to_string()));
        }
        let z = self.z_flat();
        if z.iter().any(|&zi| zi <= 0.0) {
            return Err(Error::InvalidInput(
                "economic costs must be strictly positive".into(),
            ));
        }
        let dim_total = self.dim();
        let lambda_uncontrolled = self.lambda_max_flat(&vec![0.0; dim_total])?;
        if lambda_uncontrolled <= -self.alpha + LAMBDA_ACTIVE_TOL {
            let rates = QuarantineRates::zeros(self.n());
            let cost = cost_flat(&rates.to_flat(), &z)?;
            return Ok(QuarantineSolution {
                rates,
                lambda_max: lambda_uncontrolled,
                cost,
                v_star: vec![1.0; dim_total],
                balance: BalanceResult {
                    d_star: vec![1.0; dim_total],
                    imbalance: 0.0,
                    iterations: 0,
                },
                feasibility,
            });
        }
        let b0 = self.build_b0()?;
        let dim = self.dim();
        let scaled = Mat::from_fn(dim, dim, |i, j| z[i] * b0.neg_inverse[(i, j)]);
        let balance_result = balance(&scaled, BALANCE_TOL, BALANCE_MAX_SWEEPS)?;
        let d = &balance_result.d_star;

        let mut v_star = vec![0.0; dim];
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..dim {
                acc += b0.neg_inverse[(i, j)] * d[j];
            }
            v_star[i] = acc / d[i];
        }
        let mut q_flat = vec![0.0; dim];
        for (i, &v) in v_star.iter().enumerate() {
            if v < 1.0 - 1e-9 {
                return Err(Error::AssumptionViolated { index: i, value: v });
            }
            q_flat[i] = (1.0 - 1.0 / v).max(0.0);
        }
        let rates = QuarantineRates::from_flat(&q_flat)?;
        let m = assemble_quarantine_matrix(self.s0, self.flow, self.params, &rates)?;
        let lambda_max = dominant_eigenpair(&m)?.lambda;
        if (lambda_max + self.alpha).abs() > LAMBDA_ACTIVE_TOL {
            return Err(Error::NonConvergence {
                what: "balancing optimum: decay constraint not active",
                iterations: balance_result.iterations,
                residual: (lambda_max + self.alpha).abs(),
            });
        }
        let cost = cost_flat(&q_flat, &z)?;
        Ok(QuarantineSolution {
            rates,
            lambda_max,
            cost,
            v_star,
            balance: balance_result,
            feasibility,
        })
    }

    /// Constraint stack g(q): the decay constraint followed by the box
    /// constraints -q_i <= 0 and q_i - 1 <= 0.
    fn constraints(&self, q_flat: &[f64], lambda_max: f64) -> Vec<f64> {
        let dim = self.dim();
        let mut g = Vec::with_capacity(2 * dim + 1);
        g.push(lambda_max + self.alpha);
        for &qi in q_flat {
            g.push(-qi);
        }
        for &qi in q_flat {
            g.push(qi - 1.0);
        }
        g
    }

    /// Augmented Lagrangian of the constrained program:
    /// f(q) + sum_i ([rho g_i + lambda_i]_+^2 - lambda_i^2) / (2 rho).
    pub fn aug_lagrangian(&self, q_flat: &[f64], lambda: &[f64], rho: f64) -> Result<f64> {
        let dim = self.dim();
        if q_flat.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "q",
                expected: dim,
                found: q_flat.len(),
            });
        }
        if lambda.len() != 2 * dim + 1 {
            return Err(Error::DimensionMismatch {
                what: "lambda",
                expected: 2 * dim + 1,
                found: lambda.len(),
            });
        }
        if !(rho > 0.0) {
            return Err(Error::InvalidInput(format!("rho = {rho} must be positive")));
        }
        if lambda.iter().any(|&l| l < 0.0) {
            return Err(Error::InvalidInput("lambda must be nonnegative".into()));
        }
        let f = cost_flat(q_flat, &self.z_flat())?;
        let lambda_max = self.lambda_max_flat(q_flat)?;
        let g = self.constraints(q_flat, lambda_max);
        let mut theta = 0.0;
        for (gi, &li) in g.iter().zip(lambda) {
            let hinge = (rho * gi + li).max(0.0);
            theta += (hinge * hinge - li * li) / (2.0 * rho);
        }
        Ok(f + theta)
    }

    /// Integrate the augmented primal-dual gradient dynamics by forward
    /// Euler.
    ///
    /// The primal is clamped to [0, 1 - margin] each step; the upper clamp
    /// must never bind in a converged run and the hit counts are reported so
    /// callers can assert that.
    pub fn solve_pdgd(&self, state0: &PdgdState, opts: &PdgdOptions) -> Result<PdgdSolution> {
        let dim = self.dim();
        let n_constraints = 2 * dim + 1;
        if state0.q.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "q0",
                expected: dim,
                found: state0.q.len(),
            });
        }
        if state0.lambda.len() != n_constraints {
            return Err(Error::DimensionMismatch {
                what: "lambda0",
                expected: n_constraints,
                found: state0.lambda.len(),
            });
        }
        if state0.lambda.iter().any(|&l| l < 0.0) {
            return Err(Error::InvalidInput("lambda0 must be nonnegative".into()));
        }
        if state0
            .q
            .iter()
            .any(|&qi| qi < 0.0 || qi > 1.0 - opts.margin)
        {
            return Err(Error::InvalidInput(format!(
                "q0 must lie in [0, 1 - {}]",
                opts.margin
            )));
        }
        let rho = state0.rho;
        if !(rho > 0.0) {
            return Err(Error::InvalidInput(format!("rho = {rho} must be positive")));
        }
        let z = self.z_flat();

        let mut q = state0.q.clone();
        let mut lam = state0.lambda.clone();
        let mut trace = SolveTrace::new();
        let mut snapshots: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut warm_u = vec![1.0 / (dim as f64).sqrt(); dim];
        let mut warm_v = warm_u.clone();
        let mut lower_clamp_hits = 0usize;
        let mut upper_clamp_hits = 0usize;
        let mut best_residual = f64::INFINITY;
        let mut stalled_logs = 0usize;
        let mut converged = false;
        let mut steps_taken = 0usize;

        for step in 0..opts.max_steps {
            steps_taken = step;
            let rates = QuarantineRates::from_flat(&q)?;
            let m = assemble_quarantine_matrix(self.s0, self.flow, self.params, &rates)?;
            let eig = dominant_eigenpair_warm(&m, &warm_u, &warm_v)?;
            warm_u.copy_from_slice(&eig.u);
            warm_v.copy_from_slice(&eig.v);
            let vt_u = eig.vt_u();
            let g = self.constraints(&q, eig.lambda);

            // Primal velocity.
            let grad_f = grad_cost(&q, &z)?;
            let hinge0 = (rho * g[0] + lam[0]).max(0.0);
            let mut q_dot = vec![0.0; dim];
            for i in 0..dim {
                let grad_g1 = -(eig.v[i] * eig.u[i]) / vt_u;
                let hinge_lo = (rho * g[1 + i] + lam[1 + i]).max(0.0);
                let hinge_hi = (rho * g[1 + dim + i] + lam[1 + dim + i]).max(0.0);
                q_dot[i] = -grad_f[i] - hinge0 * grad_g1 + hinge_lo - hinge_hi;
            }
            // Dual velocity.
            let mut lam_dot = vec![0.0; n_constraints];
            for i in 0..n_constraints {
                lam_dot[i] = ((rho * g[i] + lam[i]).max(0.0) - lam[i]) / rho;
            }

            let q_dot_norm = norm2(&q_dot);
            let residual = (q_dot_norm * q_dot_norm + dot(&lam_dot, &lam_dot)).sqrt();
            if q_dot_norm > 1e6 {
                return Err(Error::Divergence {
                    step,
                    norm: q_dot_norm,
                });
            }
            if step % opts.log_every == 0 {
                let t = step as f64 * opts.step;
                trace.push(step, cost_flat(&q, &z)?, opts.step, residual);
                let mut y = q.clone();
                y.extend_from_slice(&lam);
                snapshots.push((t, y));
                // Oscillation detector: a residual pinned far above its best
                // value for many consecutive logs means the Euler step
                // cannot settle.
                if residual > 10.0 * best_residual && residual > (1e3 * opts.stop_tol).max(1e-9) {
                    stalled_logs += 1;
                    if stalled_logs >= 25 {
                        return Err(Error::StepTooLarge { step });
                    }
                } else {
                    stalled_logs = 0;
                }
                best_residual = best_residual.min(residual);
            }
            if residual <= opts.stop_tol {
                converged = true;
                break;
            }

            for i in 0..dim {
                q[i] += opts.step * q_dot[i];
                if q[i] < 0.0 {
                    q[i] = 0.0;
                    lower_clamp_hits += 1;
                } else if q[i] > 1.0 - opts.margin {
                    q[i] = 1.0 - opts.margin;
                    upper_clamp_hits += 1;
                }
            }
            for i in 0..n_constraints {
                lam[i] = (lam[i] + opts.step * lam_dot[i]).max(0.0);
            }
        }

        let t_end = steps_taken as f64 * opts.step;
        let mut y_end = q.clone();
        y_end.extend_from_slice(&lam);
        snapshots.push((t_end, y_end.clone()));
        trace.iterations = steps_taken;
        trace.stop = if converged {
            StopReason::ResidualTolerance
        } else {
            StopReason::MaxIterations
        };
        Ok(PdgdSolution {
            rates: QuarantineRates::from_flat(&q)?,
            dual: lam,
            trace,
            snapshots,
            lower_clamp_hits,
            upper_clamp_hits,
        })
    }

    /// Least-squares dual recovery on the active set, for KKT residual
    /// checks of the balancing optimum.
    ///
    /// Only the decay constraint is generically active at the balancing
    /// solution; box activity is included when a rate sits on the boundary.
    pub fn recover_duals(&self, q_flat: &[f64], active_tol: f64) -> Result<KktCheck> {
        let dim = self.dim();
        let z = self.z_flat();
        let grad_f = grad_cost(q_flat, &z)?;
        let rates = QuarantineRates::from_flat(q_flat)?;
        let m = assemble_quarantine_matrix(self.s0, self.flow, self.params, &rates)?;
        let eig = dominant_eigenpair(&m)?;
        let vt_u = eig.vt_u();
        let g = self.constraints(q_flat, eig.lambda);

        // Columns of the active-constraint gradient matrix.
        let mut active: Vec<(usize, Vec<f64>)> = Vec::new();
        for (idx, &gi) in g.iter().enumerate() {
            if gi.abs() > active_tol {
                continue;
            }
            let column: Vec<f64> = (0..dim)
                .map(|i| {
                    if idx == 0 {
                        -(eig.v[i] * eig.u[i]) / vt_u
                    } else if idx <= dim {
                        if idx - 1 == i {
                            -1.0
                        } else {
                            0.0
                        }
                    } else if idx - dim - 1 == i {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            active.push((idx, column));
        }
        // Solve min |grad_f + G lambda| over lambda via the normal equations.
        let k = active.len();
        let mut gram = Mat::zeros(k, k);
        let mut rhs = vec![0.0; k];
        for a in 0..k {
            for b in 0..k {
                gram[(a, b)] = dot(&active[a].1, &active[b].1);
            }
            rhs[a] = -dot(&active[a].1, &grad_f);
        }
        let multipliers = if k > 0 {
            gram.lu()?.solve(&rhs)
        } else {
            Vec::new()
        };
        let mut residual_vec = grad_f;
        for (slot, (_, col)) in active.iter().enumerate() {
            for i in 0..dim {
                residual_vec[i] += multipliers[slot] * col[i];
            }
        }
        let norm_grad_f = norm2(&grad_cost(q_flat, &z)?);
        Ok(KktCheck {
            active_indices: active.iter().map(|(i, _)| *i).collect(),
            multipliers,
            stationarity_residual: norm2(&residual_vec) / norm_grad_f.max(1.0),
        })
    }
}

/// Primal-dual state handed to the integrator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdgdState {
    pub q: Vec<f64>,
    pub lambda: Vec<f64>,
    pub rho: f64,
}

impl PdgdState {
    /// Cold start: zero rates, zero multipliers.
    pub fn cold(dim: usize, rho: f64) -> Self {
        PdgdState {
            q: vec![0.0; dim],
            lambda: vec![0.0; 2 * dim + 1],
            rho,
        }
    }
}

/// Euler integration knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdgdOptions {
    pub step: f64,
    pub max_steps: usize,
    /// Stop when |(q_dot, lambda_dot)| drops below this.
    pub stop_tol: f64,
    pub log_every: usize,
    /// Safety margin keeping the primal away from the cost pole.
    pub margin: f64,
}

impl Default for PdgdOptions {
    fn default() -> Self {
        PdgdOptions {
            step: 1e-3,
            max_steps: 10_000_000,
            stop_tol: 1e-9,
            log_every: 200,
            margin: BOX_MARGIN,
        }
    }
}

/// Converged primal-dual pair with its trajectory diagnostics.
#[derive(Debug, Clone)]
pub struct PdgdSolution {
    pub rates: QuarantineRates,
    pub dual: Vec<f64>,
    pub trace: SolveTrace,
    /// (t, stacked (q, lambda)) at every logging interval plus the endpoint.
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub lower_clamp_hits: usize,
    pub upper_clamp_hits: usize,
}

impl PdgdSolution {
    pub fn is_converged(&self) -> bool {
        self.trace.stop == StopReason::ResidualTolerance
    }

    /// Distance of each logged state to the final state, for decay-rate
    /// diagnostics.
    pub fn distance_to_limit(&self) -> Vec<(f64, f64)> {
        let y_end = &self.snapshots.last().expect("at least the endpoint").1;
        self.snapshots
            .iter()
            .map(|(t, y)| {
                let dist = y
                    .iter()
                    .zip(y_end.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                (*t, dist)
            })
            .collect()
    }
}

/// Duals recovered on the active set plus the stationarity residual.
#[derive(Debug, Clone)]
pub struct KktCheck {
    pub active_indices: Vec<usize>,
    pub multipliers: Vec<f64>,
    /// |grad f + sum lambda_i grad g_i| relative to |grad f|.
    pub stationarity_residual: f64,
}
