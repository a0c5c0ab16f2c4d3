//! Forward integration of the networked epidemic models and construction of
//! data-driven initial conditions.
//!
//! Both the base model and its quarantine extension are integrated with
//! classical fixed-step RK4; the base model is the quarantine model at q = 0,
//! where the quarantined compartment stays identically zero. Fixed stepping
//! keeps runs deterministic and directly comparable across policies.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::mobility::CaseTable;
use crate::model::{CompartmentState, EpidemicParams, NetworkSpec, QuarantineRates};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Time series of compartment states on a uniform grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CompartmentState>,
}

impl Trajectory {
    pub fn last(&self) -> &CompartmentState {
        self.states.last().expect("trajectory is never empty")
    }
}

/// How reported cases translate into compartment fractions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialConditionSpec {
    /// Fraction of infections that get reported.
    pub reporting_rate: f64,
    /// Fraction of adjusted cumulative cases already recovered.
    pub recovered_ratio: f64,
    /// Fraction of active cases that are symptomatic.
    pub symptomatic_fraction: f64,
}

impl Default for InitialConditionSpec {
    fn default() -> Self {
        InitialConditionSpec {
            reporting_rate: 0.14,
            recovered_ratio: 8878.0 / 215215.0,
            symptomatic_fraction: 0.14,
        }
    }
}

impl InitialConditionSpec {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("reporting_rate", self.reporting_rate),
            ("recovered_ratio", self.recovered_ratio),
            ("symptomatic_fraction", self.symptomatic_fraction),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} = {v} must lie in (0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Build the t = 0 state from a case table.
///
/// Cumulative cases are scaled up by the reporting rate; deaths are added to
/// the removed compartment unscaled. Per-node compartments sum to one by
/// construction.
pub fn initial_state(
    cases: &CaseTable,
    populations: &[f64],
    spec: &InitialConditionSpec,
) -> Result<CompartmentState> {
    spec.validate()?;
    let n = populations.len();
    if cases.cum_cases.len() != n || cases.deaths.len() != n {
        return Err(Error::DimensionMismatch {
            what: "case table",
            expected: n,
            found: cases.cum_cases.len(),
        });
    }
    let mut s = vec![0.0; n];
    let mut x_a = vec![0.0; n];
    let mut x_s = vec![0.0; n];
    let mut h = vec![0.0; n];
    for i in 0..n {
        let adjusted = cases.cum_cases[i] / spec.reporting_rate;
        if adjusted > populations[i] {
            return Err(Error::InvalidInput(format!(
                "node {i}: adjusted cumulative cases {adjusted:.1} exceed the population {}",
                populations[i]
            )));
        }
        let c_frac = adjusted / populations[i];
        let removed = spec.recovered_ratio * c_frac + cases.deaths[i] / populations[i];
        let active = c_frac - removed;
        if active < 0.0 {
            return Err(Error::NegativeActiveCases {
                node: format!("{i}"),
                value: active,
            });
        }
        s[i] = 1.0 - c_frac;
        h[i] = removed;
        x_s[i] = spec.symptomatic_fraction * active;
        x_a[i] = (1.0 - spec.symptomatic_fraction) * active;
    }
    Ok(CompartmentState {
        t: 0.0,
        s,
        x_a,
        x_s,
        k: vec![0.0; n],
        h,
    })
}

/// Integrate the base model (no quarantined compartment) with RK4.
pub fn simulate_base(
    state0: &CompartmentState,
    net: &NetworkSpec,
    p: &EpidemicParams,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    simulate_siqr(
        state0,
        net,
        p,
        &QuarantineRates::zeros(net.len()),
        horizon,
        dt,
    )
}

/// Integrate the quarantine-extended model with RK4 until the final time
/// reaches the horizon. At q = 0 this reproduces `simulate_base` exactly.
pub fn simulate_siqr(
    state0: &CompartmentState,
    net: &NetworkSpec,
    p: &EpidemicParams,
    q: &QuarantineRates,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    let n = net.len();
    if state0.len() != n || q.len() != n {
        return Err(Error::DimensionMismatch {
            what: "state or quarantine rates",
            expected: n,
            found: state0.len().min(q.len()),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt = {dt} must be positive")));
    }
    if !q.in_unit_box() {
        return Err(Error::InvalidInput(
            "quarantine rates must lie in [0, 1]".into(),
        ));
    }
    let steps = (horizon / dt).ceil() as usize;
    let mut y = pack(state0);
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(state0.t);
    states.push(state0.clone());

    let mut k1 = vec![0.0; 5 * n];
    let mut k2 = vec![0.0; 5 * n];
    let mut k3 = vec![0.0; 5 * n];
    let mut k4 = vec![0.0; 5 * n];
    let mut scratch = vec![0.0; 5 * n];

    for step in 0..steps {
        let t = state0.t + step as f64 * dt;
        rhs(net.flow(), p, q, &y, &mut k1);
        stage(&y, &k1, 0.5 * dt, &mut scratch);
        rhs(net.flow(), p, q, &scratch, &mut k2);
        stage(&y, &k2, 0.5 * dt, &mut scratch);
        rhs(net.flow(), p, q, &scratch, &mut k3);
        stage(&y, &k3, dt, &mut scratch);
        rhs(net.flow(), p, q, &scratch, &mut k4);
        for i in 0..5 * n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_next = state0.t + (step + 1) as f64 * dt;
        settle(&mut y, t_next, n)?;
        times.push(t_next);
        states.push(unpack(&y, t_next, n));
        let _ = t;
    }
    Ok(Trajectory { times, states })
}

fn pack(state: &CompartmentState) -> Vec<f64> {
    let n = state.len();
    let mut y = Vec::with_capacity(5 * n);
    y.extend_from_slice(&state.s);
    y.extend_from_slice(&state.x_a);
    y.extend_from_slice(&state.x_s);
    y.extend_from_slice(&state.k);
    y.extend_from_slice(&state.h);
    y
}

fn unpack(y: &[f64], t: f64, n: usize) -> CompartmentState {
    CompartmentState {
        t,
        s: y[..n].to_vec(),
        x_a: y[n..2 * n].to_vec(),
        x_s: y[2 * n..3 * n].to_vec(),
        k: y[3 * n..4 * n].to_vec(),
        h: y[4 * n..].to_vec(),
    }
}

fn stage(y: &[f64], k: &[f64], factor: f64, out: &mut [f64]) {
    for i in 0..y.len() {
        out[i] = y[i] + factor * k[i];
    }
}

/// Right-hand side of the quarantine-extended model.
fn rhs(flow: &Mat, p: &EpidemicParams, q: &QuarantineRates, y: &[f64], dy: &mut [f64]) {
    let n = flow.rows();
    let (s, rest) = y.split_at(n);
    let (x_a, rest) = rest.split_at(n);
    let (x_s, rest) = rest.split_at(n);
    let (k, _h) = rest.split_at(n);
    for i in 0..n {
        let mut force = 0.0;
        let row = flow.row(i);
        for j in 0..n {
            force += row[j] * (p.beta_a * x_a[j] + p.beta_s * x_s[j]);
        }
        let infections = s[i] * force;
        dy[i] = -infections;
        dy[n + i] = infections - (p.epsilon + p.r_a + q.q_a[i]) * x_a[i];
        dy[2 * n + i] = p.epsilon * x_a[i] - (p.r_s + q.q_s[i]) * x_s[i];
        dy[3 * n + i] = q.q_a[i] * x_a[i] + q.q_s[i] * x_s[i] - p.r_q * k[i];
        dy[4 * n + i] = p.r_a * x_a[i] + p.r_s * x_s[i] + p.r_q * k[i];
    }
}

/// Clamp roundoff-scale negatives to zero and flag genuine excursions.
fn settle(y: &mut [f64], t: f64, n: usize) -> Result<()> {
    const CLAMP: f64 = 1e-12;
    const BAND: f64 = 1e-9;
    let compartment_of = |idx: usize| -> (&'static str, usize) {
        let names = ["s", "x_a", "x_s", "k", "h"];
        (names[idx / n], idx % n)
    };
    for idx in 0..y.len() {
        let v = y[idx];
        if v < -BAND || v > 1.0 + BAND {
            let (compartment, node) = compartment_of(idx);
            return Err(Error::Instability {
                t,
                node,
                compartment,
                value: v,
            });
        }
        if v < 0.0 && v >= -CLAMP {
            y[idx] = 0.0;
        }
    }
    Ok(())
}

/// Population-weighted totals at one output time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub t: f64,
    /// People currently infected (asymptomatic + symptomatic).
    pub active: f64,
    /// People infected so far (active + quarantined + removed).
    pub cumulative: f64,
    pub quarantined: f64,
    pub recovered: f64,
}

/// Population-weighted aggregates along a trajectory.
pub fn summarize(traj: &Trajectory, populations: &[f64]) -> Vec<AggregateRow> {
    traj.states
        .iter()
        .map(|state| {
            let mut active = 0.0;
            let mut cumulative = 0.0;
            let mut quarantined = 0.0;
            let mut recovered = 0.0;
            for i in 0..populations.len() {
                let pop = populations[i];
                active += pop * (state.x_a[i] + state.x_s[i]);
                cumulative += pop * (state.x_a[i] + state.x_s[i] + state.k[i] + state.h[i]);
                quarantined += pop * state.k[i];
                recovered += pop * state.h[i];
            }
            AggregateRow {
                t: state.t,
                active,
                cumulative,
                quarantined,
                recovered,
            }
        })
        .collect()
}

/// Indices of the trajectory grid sampled every `every` days (always includes
/// the first and last point).
pub fn sample_indices(times: &[f64], every: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut next = times[0];
    for (idx, &t) in times.iter().enumerate() {
        if t + 1e-9 >= next {
            out.push(idx);
            next = t + every;
        }
    }
    if *out.last().unwrap() != times.len() - 1 {
        out.push(times.len() - 1);
    }
    out
}

/// Write the per-node trajectory CSV (`t,node,s,x_a,x_s,k,h`), sampled every
/// `every` days.
pub fn write_trajectory_csv(
    traj: &Trajectory,
    node_names: &[String],
    every: f64,
    out: &mut dyn Write,
) -> Result<()> {
    writeln!(out, "t,node,s,x_a,x_s,k,h")?;
    for idx in sample_indices(&traj.times, every) {
        let state = &traj.states[idx];
        for (i, name) in node_names.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                state.t, name, state.s[i], state.x_a[i], state.x_s[i], state.k[i], state.h[i]
            )?;
        }
    }
    Ok(())
}

/// Write the aggregate CSV (`t,active,cumulative,quarantined,recovered`),
/// sampled every `every` days.
pub fn write_aggregate_csv(
    traj: &Trajectory,
    populations: &[f64],
    every: f64,
    out: &mut dyn Write,
) -> Result<()> {
    let rows = summarize(traj, populations);
    writeln!(out, "t,active,cumulative,quarantined,recovered")?;
    for idx in sample_indices(&traj.times, every) {
        let r = &rows[idx];
        writeln!(
            out,
            "{},{},{},{},{}",
            r.t, r.active, r.cumulative, r.quarantined, r.recovered
        )?;
    }
    Ok(())
}
