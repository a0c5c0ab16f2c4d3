//! Travel-rate optimization: minimize the dominant eigenvalue of the
//! linearized infection matrix over nonnegative travel rates within an l1
//! budget of the initial rates, by projected gradient descent with
//! backtracking.

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::mobility::build_infection_flow;
use crate::model::{assemble_from_flow, tau_from_vec, EpidemicParams, NetworkSpec};
use crate::spectral::dominant_eigenpair;
use crate::trace::{SolveTrace, StopReason};
use serde::{Deserialize, Serialize};

/// Hard floor for the backtracking step; below this the line search has
/// degenerated.
const GAMMA_FLOOR: f64 = 1e-14;

/// Options of the projected-gradient solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TravelSolveOptions {
    /// l1 budget on the travel-rate change.
    pub budget: f64,
    /// Backtracking contraction factor in (0, 1).
    pub beta_bt: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    /// Entries frozen at their initial value (column-major indexing), e.g.
    /// to keep self-rates untouched. `None` optimizes all n^2 entries.
    pub freeze: Option<Vec<bool>>,
}

impl TravelSolveOptions {
    pub fn with_budget(budget: f64) -> Self {
        TravelSolveOptions {
            budget,
            beta_bt: 0.5,
            max_iters: 5000,
            grad_tol: 1e-8,
            step_tol: 1e-8,
            freeze: None,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.budget < 0.0 {
            return Err(Error::InvalidInput(format!(
                "budget = {} must be nonnegative",
                self.budget
            )));
        }
        if !(self.beta_bt > 0.0 && self.beta_bt < 1.0) {
            return Err(Error::InvalidInput(format!(
                "beta_bt = {} must lie in (0, 1)",
                self.beta_bt
            )));
        }
        if let Some(mask) = &self.freeze {
            if mask.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "freeze mask",
                    expected: dim,
                    found: mask.len(),
                });
            }
        }
        Ok(())
    }
}

/// Result of one projected-gradient solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TravelSolution {
    /// Optimized travel rates, column-major.
    pub tau_star: Vec<f64>,
    /// Dominant eigenvalue at the optimum.
    pub f_star: f64,
    /// Eigenvalue at the initial rates.
    pub f_initial: f64,
    pub trace: SolveTrace,
    /// Rows of the optimized travel-rate matrix whose sums exceed one. The
    /// constraint set does not bound row sums, so this is advisory.
    pub row_sum_exceeded: Vec<usize>,
}

/// Euclidean projection onto {tau >= 0, |tau - tau0|_1 <= b}.
///
/// The l1 constraint is dualized: for a multiplier mu >= 0 the coordinatewise
/// minimizer is tau_i(mu) = max(0, tau0_i + soft_threshold(y_i - tau0_i, mu)),
/// and the correct mu is found by monotone bisection on the constraint gap
/// g(mu) = |tau(mu) - tau0|_1 - b.
pub fn project_travel(y: &[f64], tau0: &[f64], budget: f64) -> Vec<f64> {
    assert_eq!(y.len(), tau0.len());
    assert!(budget >= 0.0);
    let tau_at = |mu: f64| -> Vec<f64> {
        y.iter()
            .zip(tau0)
            .map(|(&yi, &t0)| {
                let z = yi - t0;
                let shrunk = z.signum() * (z.abs() - mu).max(0.0);
                (t0 + shrunk).max(0.0)
            })
            .collect()
    };
    let gap = |tau: &[f64]| -> f64 {
        tau.iter()
            .zip(tau0)
            .map(|(&t, &t0)| (t - t0).abs())
            .sum::<f64>()
            - budget
    };

    // mu = 0 is the plain clamp; feasible means the l1 constraint is slack.
    let clamped = tau_at(0.0);
    if gap(&clamped) <= 0.0 {
        return clamped;
    }
    let mut lo = 0.0;
    let mut hi = y
        .iter()
        .zip(tau0)
        .map(|(&yi, &t0)| (yi - t0).abs())
        .fold(0.0, f64::max);
    // At mu = hi every coordinate collapses to max(tau0, 0) = tau0. Bisect
    // the bracket down to rounding so the constraint gap lands far below the
    // 1e-10 contract and re-projection is a fixed point.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(&tau_at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi.max(1.0) {
            break;
        }
    }
    tau_at(hi)
}

/// Objective evaluation; `None` when the trial point leaves the domain where
/// the dominant eigenvalue is defined (negative flow entries, or an
/// eigensolve that fails outright), which the line search treats as
/// insufficient decrease. Reducible flow digraphs are tolerated: the
/// rightmost eigenvalue of a reducible Metzler matrix is still real and the
/// shifted iteration finds it.
fn try_objective(
    net: &NetworkSpec,
    s0: &[f64],
    p: &EpidemicParams,
    tau_vec: &[f64],
) -> Option<f64> {
    let n = net.len();
    let tau = tau_from_vec(tau_vec, n).ok()?;
    let flow = build_infection_flow(&tau, net.populations()).ok()?;
    // Unprojected trial points can carry negative travel rates, which may
    // push flow entries negative and off the Perron-Frobenius domain.
    if flow.data().iter().any(|&a| a < 0.0) {
        return None;
    }
    let m = assemble_from_flow(s0, &flow, p, None);
    match dominant_eigenpair(&m) {
        Ok(e) => Some(e.lambda),
        Err(Error::NotStronglyConnected) => crate::spectral::dominant_eigenpair_unchecked(&m)
            .ok()
            .map(|e| e.lambda),
        Err(_) => None,
    }
}

/// Projected gradient descent with backtracking from the network's travel
/// rates.
///
/// Each iteration backtracks the unprojected step until the sufficient
/// decrease condition f(tau - g grad) <= f(tau) - (g/2)|grad|^2 holds, then
/// projects. If the projected point increases the objective the step is
/// halved and retried, so the recorded objective sequence never increases.
pub fn optimize_travel(
    net: &NetworkSpec,
    s0: &[f64],
    p: &EpidemicParams,
    opts: &TravelSolveOptions,
) -> Result<TravelSolution> {
    let tau0 = net.tau_vec();
    optimize_travel_from(net, s0, p, opts, &tau0)
}

/// As [`optimize_travel`] but starting from an explicit feasible point, which
/// budget sweeps use to chain solutions across budgets.
pub fn optimize_travel_from(
    net: &NetworkSpec,
    s0: &[f64],
    p: &EpidemicParams,
    opts: &TravelSolveOptions,
    start: &[f64],
) -> Result<TravelSolution> {
    let n = net.len();
    let dim = n * n;
    opts.validate(dim)?;
    let tau0 = net.tau_vec();
    if start.len() != dim {
        return Err(Error::DimensionMismatch {
            what: "start point",
            expected: dim,
            found: start.len(),
        });
    }

    let mask = opts.freeze.as_deref();
    let project = |y: &[f64]| -> Vec<f64> {
        match mask {
            None => project_travel(y, &tau0, opts.budget),
            Some(mask) => {
                // Frozen coordinates sit at tau0 and consume no budget.
                let free: Vec<usize> = (0..dim).filter(|&i| !mask[i]).collect();
                let y_free: Vec<f64> = free.iter().map(|&i| y[i]).collect();
                let t0_free: Vec<f64> = free.iter().map(|&i| tau0[i]).collect();
                let proj = project_travel(&y_free, &t0_free, opts.budget);
                let mut full = tau0.clone();
                for (slot, &i) in free.iter().enumerate() {
                    full[i] = proj[slot];
                }
                full
            }
        }
    };

    let mut tau = project(start);
    let mut f_cur = try_objective(net, s0, p, &tau).ok_or(Error::NotStronglyConnected)?;
    let f_initial = try_objective(net, s0, p, &tau0).ok_or(Error::NotStronglyConnected)?;
    let mut trace = SolveTrace::new();
    trace.push(0, f_cur, 0.0, f64::NAN);

    for k in 0..opts.max_iters {
        let mut grad = match crate::spectral::grad_lambda_travel_relaxed(net, s0, p, &tau) {
            Ok(g) => g,
            Err(e) => {
                // Distinguish a genuinely unevaluable iterate on a
                // disconnected digraph from other failures.
                let tau_mat = tau_from_vec(&tau, n)?;
                let flow = build_infection_flow(&tau_mat, net.populations())?;
                if !crate::linalg::strongly_connected(&flow) {
                    return Err(Error::ConnectivityLost { iterate: k });
                }
                return Err(e);
            }
        };
        if let Some(mask) = mask {
            for (g, &frozen) in grad.iter_mut().zip(mask) {
                if frozen {
                    *g = 0.0;
                }
            }
        }
        let grad_norm = norm2(&grad);
        trace.iterations = k;
        if grad_norm <= opts.grad_tol {
            trace.stop = StopReason::GradientTolerance;
            return Ok(finish(tau, f_cur, f_initial, trace, n));
        }

        // Backtracking on the unprojected step. Trial points with an active
        // nonnegativity bound leave the domain of the dominant eigenvalue at
        // every step size, so an unevaluable trial ends the backtracking and
        // hands step control to the projection guard below.
        let mut gamma = 1.0;
        loop {
            let candidate: Vec<f64> = tau
                .iter()
                .zip(&grad)
                .map(|(&t, &g)| t - gamma * g)
                .collect();
            match try_objective(net, s0, p, &candidate) {
                Some(f_trial) if f_trial <= f_cur - 0.5 * gamma * grad_norm * grad_norm => break,
                Some(_) => gamma *= opts.beta_bt,
                None => break,
            }
            if gamma < GAMMA_FLOOR {
                return Err(Error::BacktrackingExhausted { gamma });
            }
        }

        // Project, then guard monotonicity: halve the step until the
        // projected point does not increase the objective.
        let (tau_next, f_next) = loop {
            let y: Vec<f64> = tau
                .iter()
                .zip(&grad)
                .map(|(&t, &g)| t - gamma * g)
                .collect();
            let projected = project(&y);
            match try_objective(net, s0, p, &projected) {
                Some(f_proj) if f_proj <= f_cur => break (projected, f_proj),
                _ => gamma *= 0.5,
            }
            if gamma < GAMMA_FLOOR {
                return Err(Error::BacktrackingExhausted { gamma });
            }
        };

        let step_norm = norm2(
            &tau_next
                .iter()
                .zip(&tau)
                .map(|(&a, &b)| a - b)
                .collect::<Vec<_>>(),
        );
        tau = tau_next;
        f_cur = f_next;
        trace.push(k + 1, f_cur, gamma, grad_norm);
        if step_norm <= opts.step_tol {
            trace.iterations = k + 1;
            trace.stop = StopReason::StepTolerance;
            return Ok(finish(tau, f_cur, f_initial, trace, n));
        }
    }
    trace.iterations = opts.max_iters;
    trace.stop = StopReason::MaxIterations;
    Ok(finish(tau, f_cur, f_initial, trace, n))
}

fn finish(
    tau: Vec<f64>,
    f_star: f64,
    f_initial: f64,
    trace: SolveTrace,
    n: usize,
) -> TravelSolution {
    let mat = tau_from_vec(&tau, n).expect("validated dimensions");
    let row_sum_exceeded = (0..n)
        .filter(|&i| mat.row(i).iter().sum::<f64>() > 1.0 + 1e-12)
        .collect();
    TravelSolution {
        tau_star: tau,
        f_star,
        f_initial,
        trace,
        row_sum_exceeded,
    }
}

/// Solve for each budget in ascending order, chaining each optimum as the
/// next start point; nested feasible sets then make the optimal values
/// nonincreasing in the budget.
pub fn budget_sweep(
    net: &NetworkSpec,
    s0: &[f64],
    p: &EpidemicParams,
    budgets: &[f64],
    template: &TravelSolveOptions,
) -> Result<Vec<(f64, TravelSolution)>> {
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput(
            "budgets must be sorted ascending".into(),
        ));
    }
    let mut out = Vec::with_capacity(budgets.len());
    let mut start = net.tau_vec();
    for &b in budgets {
        let opts = TravelSolveOptions {
            budget: b,
            ..template.clone()
        };
        let solution = optimize_travel_from(net, s0, p, &opts, &start)?;
        start = solution.tau_star.clone();
        out.push((b, solution));
    }
    Ok(out)
}
