//! Origin-destination ingestion and construction of the travel-rate and
//! infection-flow matrices, plus transmission-rate calibration.
//!
//! Input schemas (UTF-8, comma-separated, one header line):
//!   flows.csv       origin,destination,trips
//!   population.csv  node,population
//!   gdp.csv         node,gdp
//!   cases.csv       node,cum_cases,deaths,date
//!
//! The roster order of population.csv is canonical; every other table must
//! cover exactly the same node set.

use crate::error::{Error, Result};
use crate::linalg::{strongly_connected, Mat};
use crate::model::{assemble_from_flow, EconomicCosts, EpidemicParams};
use crate::spectral::dominant_eigenpair;
use std::collections::HashMap;
use std::path::Path;

/// Origin-destination trip counts per day, aggregated by (origin, destination).
#[derive(Debug, Clone)]
pub struct FlowTable {
    n: usize,
    /// trips[i][j] = daily trips from node i to node j.
    trips: Mat,
}

impl FlowTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn trips(&self) -> &Mat {
        &self.trips
    }
}

/// Cumulative cases and deaths per node at one reference date.
#[derive(Debug, Clone)]
pub struct CaseTable {
    pub cum_cases: Vec<f64>,
    pub deaths: Vec<f64>,
    pub date: String,
}

/// Everything `load_tables` reads from disk, in roster order.
#[derive(Debug, Clone)]
pub struct LoadedTables {
    pub roster: Vec<String>,
    pub flows: FlowTable,
    pub populations: Vec<f64>,
    pub costs: EconomicCosts,
    pub cases: CaseTable,
}

/// Paths to the four input tables.
#[derive(Debug, Clone)]
pub struct TablePaths {
    pub flows: std::path::PathBuf,
    pub population: std::path::PathBuf,
    pub gdp: std::path::PathBuf,
    pub cases: std::path::PathBuf,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

fn split_row<'a>(
    path: &Path,
    line_no: usize,
    line: &'a str,
    expected: usize,
) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
    if fields.len() != expected {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: line_no,
            message: format!("expected {expected} fields, found {}", fields.len()),
        });
    }
    Ok(fields)
}

fn parse_number(path: &Path, line_no: usize, field: &str, what: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line: line_no,
        message: format!("{what}: not a number: {field:?}"),
    })
}

fn check_header(path: &Path, lines: &[String], expected: &str) -> Result<()> {
    match lines.first() {
        Some(h) if h.trim().eq_ignore_ascii_case(expected) => Ok(()),
        Some(h) => Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: format!("expected header {expected:?}, found {h:?}"),
        }),
        None => Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "empty file".into(),
        }),
    }
}

/// Load and cross-validate the four tables.
///
/// Node rosters must be identical sets across files; population.csv order is
/// the canonical node order everywhere downstream.
pub fn load_tables(paths: &TablePaths) -> Result<LoadedTables> {
    // population.csv defines the roster.
    let pop_lines = read_lines(&paths.population)?;
    check_header(&paths.population, &pop_lines, "node,population")?;
    let mut roster: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut populations: Vec<f64> = Vec::new();
    for (off, line) in pop_lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = off + 1;
        let fields = split_row(&paths.population, line_no, line, 2)?;
        let name = fields[0].to_string();
        let pop = parse_number(&paths.population, line_no, fields[1], "population")?;
        if pop <= 0.0 {
            return Err(Error::Parse {
                path: paths.population.display().to_string(),
                line: line_no,
                message: format!("population must be positive, got {pop}"),
            });
        }
        if index.insert(name.clone(), roster.len()).is_some() {
            return Err(Error::Parse {
                path: paths.population.display().to_string(),
                line: line_no,
                message: format!("duplicate node {name:?}"),
            });
        }
        roster.push(name);
        populations.push(pop);
    }
    if roster.is_empty() {
        return Err(Error::Parse {
            path: paths.population.display().to_string(),
            line: 1,
            message: "no nodes".into(),
        });
    }
    let n = roster.len();

    let resolve = |path: &Path, _line_no: usize, name: &str| -> Result<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::RosterMismatch {
                path: path.display().to_string(),
                node: name.to_string(),
                message: "not present in population.csv".into(),
            })
    };

    // flows.csv; duplicate (origin, destination) pairs sum.
    let flow_lines = read_lines(&paths.flows)?;
    check_header(&paths.flows, &flow_lines, "origin,destination,trips")?;
    let mut trips = Mat::zeros(n, n);
    for (off, line) in flow_lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = off + 1;
        let fields = split_row(&paths.flows, line_no, line, 3)?;
        let i = resolve(&paths.flows, line_no, fields[0])?;
        let j = resolve(&paths.flows, line_no, fields[1])?;
        let count = parse_number(&paths.flows, line_no, fields[2], "trips")?;
        if count < 0.0 {
            return Err(Error::Parse {
                path: paths.flows.display().to_string(),
                line: line_no,
                message: format!("negative trip count {count}"),
            });
        }
        trips[(i, j)] += count;
    }
    for i in 0..n {
        if trips.row(i).iter().sum::<f64>() <= 0.0 {
            return Err(Error::ZeroOutgoingFlow {
                node: roster[i].clone(),
            });
        }
    }

    // gdp.csv -> relative costs z_i = g_i / g_max.
    let gdp_lines = read_lines(&paths.gdp)?;
    check_header(&paths.gdp, &gdp_lines, "node,gdp")?;
    let mut gdp = vec![f64::NAN; n];
    for (off, line) in gdp_lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = off + 1;
        let fields = split_row(&paths.gdp, line_no, line, 2)?;
        let i = resolve(&paths.gdp, line_no, fields[0])?;
        let g = parse_number(&paths.gdp, line_no, fields[1], "gdp")?;
        if g <= 0.0 {
            return Err(Error::Parse {
                path: paths.gdp.display().to_string(),
                line: line_no,
                message: format!("gdp must be positive, got {g}"),
            });
        }
        gdp[i] = g;
    }
    for (i, g) in gdp.iter().enumerate() {
        if g.is_nan() {
            return Err(Error::RosterMismatch {
                path: paths.gdp.display().to_string(),
                node: roster[i].clone(),
                message: "missing gdp record".into(),
            });
        }
    }
    let g_max = gdp.iter().fold(0.0f64, |m, &g| m.max(g));
    let z: Vec<f64> = gdp.iter().map(|&g| g / g_max).collect();
    let costs = EconomicCosts {
        z_a: z.clone(),
        z_s: z,
    };

    // cases.csv
    let case_lines = read_lines(&paths.cases)?;
    check_header(&paths.cases, &case_lines, "node,cum_cases,deaths,date")?;
    let mut cum_cases = vec![f64::NAN; n];
    let mut deaths = vec![0.0; n];
    let mut date = String::new();
    for (off, line) in case_lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = off + 1;
        let fields = split_row(&paths.cases, line_no, line, 4)?;
        let i = resolve(&paths.cases, line_no, fields[0])?;
        let c = parse_number(&paths.cases, line_no, fields[1], "cum_cases")?;
        let d = parse_number(&paths.cases, line_no, fields[2], "deaths")?;
        if c < 0.0 || d < 0.0 {
            return Err(Error::Parse {
                path: paths.cases.display().to_string(),
                line: line_no,
                message: "negative count".into(),
            });
        }
        if d > c {
            return Err(Error::Parse {
                path: paths.cases.display().to_string(),
                line: line_no,
                message: format!("deaths {d} exceed cumulative cases {c}"),
            });
        }
        cum_cases[i] = c;
        deaths[i] = d;
        date = fields[3].to_string();
    }
    for (i, c) in cum_cases.iter().enumerate() {
        if c.is_nan() {
            return Err(Error::RosterMismatch {
                path: paths.cases.display().to_string(),
                node: roster[i].clone(),
                message: "missing case record".into(),
            });
        }
    }

    Ok(LoadedTables {
        roster,
        flows: FlowTable { n, trips },
        populations,
        costs,
        cases: CaseTable {
            cum_cases,
            deaths,
            date,
        },
    })
}

/// Normalize trip counts into travel rates: row i of tau sums to the
/// out-of-home fraction t_out[i].
pub fn build_travel_rates(flows: &FlowTable, t_out: &[f64]) -> Result<Mat> {
    let n = flows.n;
    if t_out.len() != n {
        return Err(Error::DimensionMismatch {
            what: "t_out",
            expected: n,
            found: t_out.len(),
        });
    }
    for (i, &t) in t_out.iter().enumerate() {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "t_out[{i}] = {t} must lie in (0, 1]"
            )));
        }
    }
    let mut tau = Mat::zeros(n, n);
    for i in 0..n {
        let total: f64 = flows.trips.row(i).iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroOutgoingFlow {
                node: format!("{i}"),
            });
        }
        for j in 0..n {
            tau[(i, j)] = t_out[i] * flows.trips[(i, j)] / total;
        }
    }
    Ok(tau)
}

/// Infection-flow matrix from travel rates and populations:
///
/// a_ij = sum_l tau_il tau_jl N_j / (sum_k N_k tau_kl),
///
/// skipping columns whose weighted mass sum_k N_k tau_kl is zero (a location
/// nobody visits cannot transmit).
pub fn build_infection_flow(tau: &Mat, populations: &[f64]) -> Result<Mat> {
    let n = populations.len();
    if tau.rows() != n || tau.cols() != n {
        return Err(Error::DimensionMismatch {
            what: "tau",
            expected: n,
            found: tau.rows(),
        });
    }
    let mut column_mass = vec![0.0; n];
    for l in 0..n {
        for k in 0..n {
            column_mass[l] += populations[k] * tau[(k, l)];
        }
    }
    let mut flow = Mat::zeros(n, n);
    for l in 0..n {
        let mass = column_mass[l];
        if mass <= 0.0 {
            continue;
        }
        for i in 0..n {
            let til = tau[(i, l)];
            if til == 0.0 {
                continue;
            }
            for j in 0..n {
                flow[(i, j)] += til * tau[(j, l)] * populations[j] / mass;
            }
        }
    }
    Ok(flow)
}

/// True when the digraph {(i, j) : a_ij > 0} is strongly connected.
pub fn check_strong_connectivity(a: &Mat) -> bool {
    strongly_connected(a)
}

/// Bisection options for `calibrate_beta`. The bracket and tolerances cover
/// any plausible per-day transmission rate.
const CALIBRATE_BETA_MAX: f64 = 100.0;
const CALIBRATE_TOL: f64 = 1e-8;
const CALIBRATE_MAX_ITERS: usize = 200;

/// Find the symptomatic transmission rate whose linearized growth rate matches
/// `target_growth`, with beta_a = eta * beta_s.
///
/// The dominant eigenvalue is nondecreasing in beta_s, so a monotone bisection
/// over [0, 100] suffices. The lower bracket endpoint is evaluated in closed
/// form (the matrix is block triangular at beta_s = 0).
pub fn calibrate_beta(
    flow: &Mat,
    s0: &[f64],
    p: &EpidemicParams,
    eta: f64,
    target_growth: f64,
) -> Result<(f64, f64)> {
    if !check_strong_connectivity(flow) {
        return Err(Error::NotStronglyConnected);
    }
    if s0.iter().any(|&s| s <= 0.0) {
        return Err(Error::InvalidInput(
            "calibrate_beta requires s0 > 0 at every node".into(),
        ));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta = {eta} must be positive")));
    }

    let lambda_at = |beta_s: f64| -> Result<f64> {
        let trial = EpidemicParams {
            beta_a: eta * beta_s,
            beta_s,
            ..p.clone()
        };
        let m = assemble_from_flow(s0, flow, &trial, None);
        Ok(dominant_eigenpair(&m)?.lambda)
    };

    // Block triangular at beta_s = 0: eigenvalues are -(eps + r_a) and -r_s.
    let lambda_zero = (-(p.epsilon + p.r_a)).max(-p.r_s);
    if target_growth < lambda_zero - 1e-12 {
        return Err(Error::BracketFailure {
            what: "calibrate_beta",
            detail: format!(
                "target growth {target_growth} lies below the zero-transmission rate {lambda_zero}"
            ),
        });
    }
    if (target_growth - lambda_zero).abs() <= CALIBRATE_TOL {
        return Ok((0.0, 0.0));
    }
    let mut lo = 0.0;
    let mut hi = CALIBRATE_BETA_MAX;
    let lambda_hi = lambda_at(hi)?;
    if lambda_hi < target_growth {
        return Err(Error::BracketFailure {
            what: "calibrate_beta",
            detail: format!(
                "target growth {target_growth} exceeds the rate {lambda_hi} at beta_s = {hi}"
            ),
        });
    }
    for _ in 0..CALIBRATE_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        let lambda = lambda_at(mid)?;
        if (lambda - target_growth).abs() <= CALIBRATE_TOL {
            return Ok((eta * mid, mid));
        }
        if lambda < target_growth {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence {
        what: "calibrate_beta",
        iterations: CALIBRATE_MAX_ITERS,
        residual: hi - lo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flow_table(rows: &[Vec<f64>]) -> FlowTable {
        FlowTable {
            n: rows.len(),
            trips: Mat::from_rows(rows),
        }
    }

    #[test]
    fn single_node_travel_rate_is_t_out() {
        let flows = flow_table(&[vec![123.0]]);
        let tau = build_travel_rates(&flows, &[1.0 / 3.0]).unwrap();
        assert!((tau[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_node_normalization_matches_hand_result() {
        let flows = flow_table(&[vec![3.0, 1.0], vec![2.0, 2.0]]);
        let tau = build_travel_rates(&flows, &[1.0 / 3.0, 0.5]).unwrap();
        assert!((tau[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((tau[(0, 1)] - 1.0 / 12.0).abs() < 1e-15);
        assert!((tau[(1, 0)] - 0.25).abs() < 1e-15);
        assert!((tau[(1, 1)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn row_sums_equal_t_out() {
        let flows = flow_table(&[
            vec![50.0, 3.0, 7.0],
            vec![4.0, 90.0, 2.0],
            vec![1.0, 6.0, 40.0],
        ]);
        let t_out = [1.0 / 3.0, 0.4, 0.21];
        let tau = build_travel_rates(&flows, &t_out).unwrap();
        for i in 0..3 {
            let sum: f64 = tau.row(i).iter().sum();
            assert!((sum - t_out[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_node_flow_collapses_to_tau() {
        let tau = Mat::from_rows(&[vec![0.4]]);
        let a = build_infection_flow(&tau, &[321.0]).unwrap();
        assert!((a[(0, 0)] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn symmetric_inputs_give_symmetric_flow() {
        let tau = Mat::from_rows(&[vec![0.3, 0.1], vec![0.1, 0.3]]);
        let a = build_infection_flow(&tau, &[70.0, 70.0]).unwrap();
        assert!((a[(0, 1)] - a[(1, 0)]).abs() < 1e-14);
    }

    #[test]
    fn flow_is_invariant_under_population_scaling() {
        let tau = Mat::from_rows(&[
            vec![0.25, 0.05, 0.03],
            vec![0.02, 0.3, 0.01],
            vec![0.04, 0.06, 0.23],
        ]);
        let pops = [10.0, 55.0, 21.0];
        let scaled: Vec<f64> = pops.iter().map(|p| p * 37.5).collect();
        let a1 = build_infection_flow(&tau, &pops).unwrap();
        let a2 = build_infection_flow(&tau, &scaled).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((a1[(i, j)] - a2[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn flow_matches_direct_triple_loop() {
        // Independent route: evaluate the defining sum term by term with the
        // denominator recomputed inline.
        let mut state = 88172645463325252u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let n = 2 + (next() * 5.0) as usize; // 2..=6
            let pops: Vec<f64> = (0..n).map(|_| 1.0 + 100.0 * next()).collect();
            let tau = Mat::from_fn(n, n, |_, _| 0.3 * next());
            let a = build_infection_flow(&tau, &pops).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let mut want = 0.0;
                    for l in 0..n {
                        let mut mass = 0.0;
                        for k in 0..n {
                            mass += pops[k] * tau[(k, l)];
                        }
                        if mass > 0.0 {
                            want += tau[(i, l)] * tau[(j, l)] * pops[j] / mass;
                        }
                    }
                    assert!((a[(i, j)] - want).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn zero_column_contributes_nothing() {
        // Column 1 of tau is all-zero: nobody travels there, so only the
        // visited location contributes and nothing divides by zero.
        let tau = Mat::from_rows(&[vec![0.3, 0.0], vec![0.2, 0.0]]);
        let pops = [10.0, 20.0];
        let a = build_infection_flow(&tau, &pops).unwrap();
        let mass0 = pops[0] * 0.3 + pops[1] * 0.2;
        for i in 0..2 {
            for j in 0..2 {
                let want = tau[(i, 0)] * tau[(j, 0)] * pops[j] / mass0;
                assert!((a[(i, j)] - want).abs() < 1e-15);
                assert!(a[(i, j)].is_finite());
            }
        }
    }

    #[test]
    fn connectivity_cases() {
        let all_positive = Mat::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]]);
        assert!(check_strong_connectivity(&all_positive));
        let triangular = Mat::from_rows(&[
            vec![0.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 0.0],
        ]);
        assert!(!check_strong_connectivity(&triangular));
        let cycle = Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(check_strong_connectivity(&cycle));
    }

    #[test]
    fn calibration_recovers_single_node_rate() {
        let tau = Mat::from_rows(&[vec![1.0 / 3.0]]);
        let pops = vec![1.0e5];
        let flow = build_infection_flow(&tau, &pops).unwrap();
        let p = EpidemicParams::with_betas(0.0, 0.0, 0.0);
        // Closed-form dominant root of the 2x2 characteristic quadratic at
        // beta_s = 0.6, beta_a = 0.6754 * 0.6:
        let beta_s: f64 = 0.6;
        let a11 = 0.6754 * beta_s / 3.0 - 0.52;
        let target =
            0.5 * (a11 - 0.2) + (0.25 * (a11 + 0.2) * (a11 + 0.2) + 0.32 * beta_s / 3.0).sqrt();
        let (ba, bs) = calibrate_beta(&flow, &[1.0], &p, 0.6754, target).unwrap();
        assert!((bs - 0.6).abs() < 1e-6, "beta_s = {bs}");
        assert!((ba - 0.6754 * 0.6).abs() < 1e-6);
    }

    #[test]
    fn calibration_at_bracket_endpoint_returns_zero() {
        let tau = Mat::from_rows(&[vec![1.0 / 3.0]]);
        let flow = build_infection_flow(&tau, &[10.0]).unwrap();
        let p = EpidemicParams::with_betas(0.0, 0.0, 0.0);
        let (ba, bs) = calibrate_beta(&flow, &[1.0], &p, 0.6754, -0.2).unwrap();
        assert_eq!((ba, bs), (0.0, 0.0));
        let err = calibrate_beta(&flow, &[1.0], &p, 0.6754, -0.9).unwrap_err();
        assert!(matches!(err, Error::BracketFailure { .. }));
    }

    #[test]
    fn calibration_is_monotone_in_the_target() {
        let tau = Mat::from_rows(&[vec![0.3, 0.033], vec![0.05, 0.283]]);
        let pops = vec![500.0, 900.0];
        let flow = build_infection_flow(&tau, &pops).unwrap();
        let p = EpidemicParams::with_betas(0.0, 0.0, 0.0);
        let s0 = [0.95, 0.9];
        let mut previous = 0.0;
        for target in [-0.1, -0.02, 0.05, 0.1, 0.2] {
            let (_, bs) = calibrate_beta(&flow, &s0, &p, 0.6754, target).unwrap();
            assert!(
                bs >= previous - 1e-9,
                "beta_s not monotone: {bs} after {previous}"
            );
            previous = bs;
        }
    }

    #[test]
    fn calibration_round_trip_hits_target() {
        let tau = Mat::from_rows(&[vec![0.28, 0.05], vec![0.04, 0.3]]);
        let pops = vec![120.0, 460.0];
        let flow = build_infection_flow(&tau, &pops).unwrap();
        let p = EpidemicParams::with_betas(0.0, 0.0, 0.0);
        let s0 = [0.97, 0.92];
        let target = 0.12;
        let (ba, bs) = calibrate_beta(&flow, &s0, &p, 0.6754, target).unwrap();
        let calibrated = EpidemicParams {
            beta_a: ba,
            beta_s: bs,
            ..p
        };
        let m = assemble_from_flow(&s0, &flow, &calibrated, None);
        let lambda = dominant_eigenpair(&m).unwrap().lambda;
        assert!((lambda - target).abs() <= 1e-8);
    }
}
