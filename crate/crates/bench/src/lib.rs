//! Shared instance builders for the benchmark targets.

use epinet_core::linalg::Mat;
use epinet_core::model::{CompartmentState, EpidemicParams, NetworkSpec};

/// Deterministic n-node network with dominant self-mixing, shaped like the
/// bundled fixture.
pub fn synthetic_network(n: usize) -> (NetworkSpec, Vec<f64>, EpidemicParams) {
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row: Vec<f64> = (0..n).map(|_| 0.002 + 0.02 * next()).collect();
        row[i] = 0.28 + 0.04 * next();
        rows.push(row);
    }
    let tau = Mat::from_rows(&rows);
    let populations: Vec<f64> = (0..n).map(|_| 1.0e4 + 9.0e5 * next()).collect();
    let net = NetworkSpec::from_travel_rates(populations, tau).unwrap();
    let s0: Vec<f64> = (0..n).map(|_| 0.9 + 0.09 * next()).collect();
    let beta_s = 3.2;
    let p = EpidemicParams::with_betas(0.6754 * beta_s, beta_s, 0.0231);
    (net, s0, p)
}

pub fn seeded_state(n: usize) -> CompartmentState {
    CompartmentState {
        t: 0.0,
        s: vec![1.0 - 2e-5; n],
        x_a: vec![2e-5; n],
        x_s: vec![0.0; n],
        k: vec![0.0; n],
        h: vec![0.0; n],
    }
}
