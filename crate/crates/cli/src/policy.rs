//! Construction of the comparison quarantine policies at matched economic
//! cost, and trajectory summary fits.

use crate::config::{PolicyKind, PolicySpec};
use epinet_core::dynamics::{summarize, Trajectory};
use epinet_core::error::Error;
use epinet_core::quarantine_opt::{quarantine_cost, QuarantineProblem, BOX_MARGIN};
use epinet_core::{EpidemicParams, QuarantineRates, Result};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cost-matching tolerance of the policy bisections, relative to
/// max(1, reference cost).
const COST_MATCH_TOL: f64 = 1e-8;
const BISECT_ITERS: usize = 200;

/// Everything needed to build a policy on one problem instance.
pub struct PolicyContext<'a> {
    pub problem: QuarantineProblem<'a>,
    /// Already-solved optimal rates; the optimal policy reuses them.
    pub optimal: &'a QuarantineRates,
}

/// Build the quarantine rates of one policy so its total economic cost
/// matches `reference_cost`.
///
/// * uniform: one scalar rate everywhere, found by bisection on the cost.
/// * random: rates c * u_i with u_i drawn once from the seeded generator and
///   the scale c bisected on the cost.
/// * bounded-decline: every node's decoupled 2x2 infection block is pushed to
///   a common decay bound (a pure diagonal shift, so the per-node rate is
///   closed-form), and the bound is bisected on the cost.
/// * optimal: the precomputed balancing solution.
pub fn make_policy(
    spec: &PolicySpec,
    reference_cost: f64,
    ctx: &PolicyContext<'_>,
) -> Result<QuarantineRates> {
    let n = ctx.problem.n();
    let costs = ctx.problem.costs;
    let baseline = quarantine_cost(&QuarantineRates::zeros(n), costs)?;
    if reference_cost < baseline - 1e-9 {
        return Err(Error::CostUnreachable {
            target: reference_cost,
            max_attainable: baseline,
        });
    }
    let tol = COST_MATCH_TOL * reference_cost.abs().max(1.0);
    match spec.kind {
        PolicyKind::Optimal => Ok(ctx.optimal.clone()),
        PolicyKind::Uniform => {
            let rates_at = |q: f64| QuarantineRates::uniform(n, q);
            bisect_cost(0.0, 1.0 - BOX_MARGIN, reference_cost, tol, costs, rates_at)
        }
        PolicyKind::Random => {
            let seed = spec.seed.expect("validated: random policy has a seed");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            let u: Vec<f64> = (0..2 * n).map(|_| draw()).collect();
            let u_max = u.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
            let rates_at = move |c: f64| {
                QuarantineRates::from_flat(&u.iter().map(|&ui| c * ui).collect::<Vec<_>>())
                    .expect("even length")
            };
            bisect_cost(
                0.0,
                (1.0 - BOX_MARGIN) / u_max,
                reference_cost,
                tol,
                costs,
                rates_at,
            )
        }
        PolicyKind::BoundedDecline => {
            // lambda of each node's 2x2 block shifts one-for-one with its
            // quarantine rate, so the rate hitting a bound is closed-form.
            let lambda0 = node_block_eigenvalues(&ctx.problem);
            let rates_at = |bound: f64| {
                let q: Vec<f64> = lambda0
                    .iter()
                    .map(|&l| (l - bound).clamp(0.0, 1.0 - BOX_MARGIN))
                    .collect();
                let mut flat = q.clone();
                flat.extend_from_slice(&q);
                QuarantineRates::from_flat(&flat).expect("even length")
            };
            if let Some(bound) = spec.decay_bound {
                return Ok(rates_at(bound));
            }
            // Cost decreases as the bound rises; bisect on the negated axis.
            let hi = lambda0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = lambda0.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
            bisect_cost(-hi, -lo, reference_cost, tol, costs, move |neg_bound| {
                rates_at(-neg_bound)
            })
        }
    }
}

/// Dominant eigenvalue of each node's decoupled infection block at q = 0.
fn node_block_eigenvalues(problem: &QuarantineProblem<'_>) -> Vec<f64> {
    let p = problem.params;
    (0..problem.n())
        .map(|i| {
            let sa = problem.s0[i] * problem.flow[(i, i)];
            let a = p.beta_a * sa - (p.epsilon + p.r_a);
            let b = p.beta_s * sa;
            let c = p.epsilon;
            let d = -p.r_s;
            0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * c).sqrt()
        })
        .collect()
}

/// Monotone bisection of a scalar policy parameter against the cost target.
/// The cost must be nondecreasing in the parameter over [lo, hi].
fn bisect_cost(
    lo: f64,
    hi: f64,
    reference_cost: f64,
    tol: f64,
    costs: &epinet_core::EconomicCosts,
    rates_at: impl Fn(f64) -> QuarantineRates,
) -> Result<QuarantineRates> {
    let cost_hi = quarantine_cost(&rates_at(hi), costs)?;
    if cost_hi < reference_cost - tol {
        return Err(Error::CostUnreachable {
            target: reference_cost,
            max_attainable: cost_hi,
        });
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        let rates = rates_at(mid);
        let cost = quarantine_cost(&rates, costs)?;
        if (cost - reference_cost).abs() <= tol {
            return Ok(rates);
        }
        if cost < reference_cost {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence {
        what: "policy cost matching",
        iterations: BISECT_ITERS,
        residual: hi - lo,
    })
}

/// Fit the halving time of total active infections over the final third of
/// the horizon: ln 2 / |slope of log(active)|.
///
/// `None` when the tail is not decaying (or active infections vanish).
pub fn report_halving_time(traj: &Trajectory, populations: &[f64]) -> Option<f64> {
    let rows = summarize(traj, populations);
    let t_end = rows.last()?.t;
    let t_start = rows.first()?.t;
    let cutoff = t_start + 2.0 / 3.0 * (t_end - t_start);
    let tail: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t >= cutoff && r.active > 0.0)
        .map(|r| (r.t, r.active.ln()))
        .collect();
    if tail.len() < 2 {
        return None;
    }
    let slope = fit_slope(&tail);
    if slope >= -1e-12 {
        return None;
    }
    Some(std::f64::consts::LN_2 / slope.abs())
}

pub(crate) fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Simulation-facing parameter bundle of a fully resolved scenario.
#[derive(Debug, Clone)]
pub struct ResolvedParams {
    pub params: EpidemicParams,
    /// Whether beta came from growth-rate calibration.
    pub calibrated: bool,
    pub target_growth: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use epinet_core::linalg::Mat;
    use epinet_core::mobility::build_infection_flow;
    use epinet_core::EconomicCosts;

    fn context_fixture() -> (Mat, Vec<f64>, EpidemicParams, EconomicCosts) {
        let tau = Mat::from_rows(&[vec![0.31, 0.023], vec![0.017, 0.3]]);
        let flow = build_infection_flow(&tau, &[400.0, 850.0]).unwrap();
        let beta_s = 3.0;
        let p = EpidemicParams {
            beta_a: 0.6754 * beta_s,
            beta_s,
            epsilon: 0.5,
            r_a: 0.05,
            r_s: 0.05,
            r_q: 0.1,
            alpha: 0.02,
        };
        let costs = EconomicCosts {
            z_a: vec![0.9, 0.6],
            z_s: vec![1.0, 0.7],
        };
        (flow, vec![0.96, 0.93], p, costs)
    }

    #[test]
    fn uniform_policy_at_baseline_cost_is_zero() {
        let (flow, s0, p, costs) = context_fixture();
        let problem = QuarantineProblem {
            s0: &s0,
            flow: &flow,
            params: &p,
            alpha: 0.02,
            costs: &costs,
        };
        let optimal = QuarantineRates::zeros(2);
        let ctx = PolicyContext {
            problem,
            optimal: &optimal,
        };
        let baseline = quarantine_cost(&optimal, &costs).unwrap();
        let spec = PolicySpec {
            kind: PolicyKind::Uniform,
            seed: None,
            decay_bound: None,
        };
        let rates = make_policy(&spec, baseline, &ctx).unwrap();
        assert!(rates.to_flat().iter().all(|&q| q < 1e-7));
    }

    #[test]
    fn random_policy_is_reproducible_and_cost_matched() {
        let (flow, s0, p, costs) = context_fixture();
        let problem = QuarantineProblem {
            s0: &s0,
            flow: &flow,
            params: &p,
            alpha: 0.02,
            costs: &costs,
        };
        let optimal = problem.optimal_quarantine().unwrap();
        let ctx = PolicyContext {
            problem,
            optimal: &optimal.rates,
        };
        let spec = PolicySpec {
            kind: PolicyKind::Random,
            seed: Some(42),
            decay_bound: None,
        };
        let a = make_policy(&spec, optimal.cost, &ctx).unwrap();
        let b = make_policy(&spec, optimal.cost, &ctx).unwrap();
        assert_eq!(a, b);
        let cost = quarantine_cost(&a, &costs).unwrap();
        assert!((cost - optimal.cost).abs() <= 1e-6 * optimal.cost.max(1.0));
        // A different seed produces a different allocation.
        let other = make_policy(
            &PolicySpec {
                kind: PolicyKind::Random,
                seed: Some(43),
                decay_bound: None,
            },
            optimal.cost,
            &ctx,
        )
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn all_policies_match_the_reference_cost() {
        let (flow, s0, p, costs) = context_fixture();
        let problem = QuarantineProblem {
            s0: &s0,
            flow: &flow,
            params: &p,
            alpha: 0.02,
            costs: &costs,
        };
        let optimal = problem.optimal_quarantine().unwrap();
        let ctx = PolicyContext {
            problem,
            optimal: &optimal.rates,
        };
        for kind in [
            PolicyKind::Optimal,
            PolicyKind::Uniform,
            PolicyKind::Random,
            PolicyKind::BoundedDecline,
        ] {
            let spec = PolicySpec {
                kind,
                seed: Some(7),
                decay_bound: None,
            };
            let rates = make_policy(&spec, optimal.cost, &ctx).unwrap();
            let cost = quarantine_cost(&rates, &costs).unwrap();
            assert!(
                (cost - optimal.cost).abs() <= 1e-6 * optimal.cost.max(1.0),
                "{:?}: cost {cost} vs reference {}",
                kind,
                optimal.cost
            );
        }
    }

    #[test]
    fn unreachable_cost_targets_error() {
        let (flow, s0, p, costs) = context_fixture();
        let problem = QuarantineProblem {
            s0: &s0,
            flow: &flow,
            params: &p,
            alpha: 0.02,
            costs: &costs,
        };
        let optimal = QuarantineRates::zeros(2);
        let ctx = PolicyContext {
            problem,
            optimal: &optimal,
        };
        let spec = PolicySpec {
            kind: PolicyKind::Uniform,
            seed: None,
            decay_bound: None,
        };
        let err = make_policy(&spec, 1.0e12, &ctx).unwrap_err();
        assert!(matches!(err, Error::CostUnreachable { .. }));
    }

    #[test]
    fn halving_time_fits() {
        use epinet_core::CompartmentState;
        // Synthetic single-node pure exponential decay at rate 0.0231.
        let rate = 0.0231;
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut t = 0.0f64;
        while t <= 120.0 {
            let x = 1e-3 * (-rate * t).exp();
            times.push(t);
            states.push(CompartmentState {
                t,
                s: vec![1.0 - 2.0 * x],
                x_a: vec![x],
                x_s: vec![x],
                k: vec![0.0],
                h: vec![0.0],
            });
            t += 0.5;
        }
        let traj = Trajectory { times, states };
        let half = report_halving_time(&traj, &[1.0e5]).unwrap();
        assert!((half - 30.0).abs() <= 0.1, "halving time {half}");

        // Growing trajectory: no decay to fit.
        let mut states = Vec::new();
        let mut times = Vec::new();
        let mut t = 0.0f64;
        while t <= 120.0 {
            let x = 1e-6 * (0.05 * t).exp();
            times.push(t);
            states.push(CompartmentState {
                t,
                s: vec![1.0 - 2.0 * x],
                x_a: vec![x],
                x_s: vec![x],
                k: vec![0.0],
                h: vec![0.0],
            });
            t += 0.5;
        }
        let traj = Trajectory { times, states };
        assert!(report_halving_time(&traj, &[1.0e5]).is_none());
    }
}
