//! Shared helpers for the integration test suites.

#![allow(dead_code)]

use ristep::{DiagonalMetric, EnergyModel, ModelError};

/// Brute-force minimizer of `½‖y − d‖_V² + Σ ρ_i|y_i|` over `‖y‖_V ≤ tau`
/// by enumeration of all `3ⁿ` sign patterns. For each pattern the
/// sign-restricted stationary point is written in closed form, once for an
/// inactive ball and once scaled onto the ball boundary; the best feasible
/// candidate is the exact minimizer because the objective is strongly convex
/// and its minimizer shows up under its own pattern.
pub fn prox_oracle(v: &[f64], rho: &[f64], d: &[f64], tau: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n <= 8, "pattern enumeration is exponential");
    let objective = |y: &[f64]| -> f64 {
        let mut q = 0.0;
        let mut r = 0.0;
        for i in 0..n {
            q += 0.5 * v[i] * (y[i] - d[i]) * (y[i] - d[i]);
            r += rho[i] * y[i].abs();
        }
        q + r
    };
    let feasible = |y: &[f64]| -> bool {
        let norm_sq: f64 = y.iter().zip(v).map(|(&yi, &vi)| vi * yi * yi).sum();
        norm_sq.sqrt() <= tau * (1.0 + 1e-12)
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |y: Vec<f64>, best: &mut Option<(f64, Vec<f64>)>| {
        if !feasible(&y) {
            return;
        }
        let obj = objective(&y);
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            *best = Some((obj, y));
        }
    };
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let mut w = vec![0.0; n];
        for i in 0..n {
            let sigma = (c % 3) as i8 - 1;
            c /= 3;
            if sigma != 0 {
                w[i] = d[i] - sigma as f64 * rho[i] / v[i];
            }
        }
        consider(w.clone(), &mut best);
        let w_norm: f64 = w
            .iter()
            .zip(v)
            .map(|(&wi, &vi)| vi * wi * wi)
            .sum::<f64>()
            .sqrt();
        if w_norm > 0.0 && tau < w_norm {
            // ball-active candidate: positive multiplier scales w inward
            let scale = tau / w_norm;
            consider(w.iter().map(|&wi| wi * scale).collect(), &mut best);
        }
    }
    best.expect("y = 0 is always feasible").1
}

/// Convex scalar model `I(t,z) = ½z² − load_rate·t·z` with `R = |·|`; its
/// evolution never jumps, which isolates the sticking and slip phases.
pub struct ConvexToy {
    metric: DiagonalMetric,
    pub load_rate: f64,
    pub horizon: f64,
}

impl ConvexToy {
    pub fn new(load_rate: f64, horizon: f64) -> Self {
        Self {
            metric: DiagonalMetric::new(vec![1.0], vec![1.0]),
            load_rate,
            horizon,
        }
    }
}

impl EnergyModel for ConvexToy {
    fn dim(&self) -> usize {
        1
    }
    fn metric(&self) -> &DiagonalMetric {
        &self.metric
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn initial_state(&self) -> Vec<f64> {
        vec![0.0]
    }
    fn id(&self) -> String {
        "convex_toy".into()
    }
    fn energy(&self, t: f64, z: &[f64]) -> Result<f64, ModelError> {
        Ok(0.5 * z[0] * z[0] - self.load_rate * t * z[0])
    }
    fn grad_energy(&self, t: f64, z: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(vec![z[0] - self.load_rate * t])
    }
    fn hess_apply(&self, _t: f64, _z: &[f64], v: &[f64], out: &mut [f64]) {
        out[0] = v[0];
    }
    fn hess_diag(&self, _t: f64, _z: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn dt_energy(&self, _t: f64, z: &[f64]) -> Result<f64, ModelError> {
        Ok(self.load_rate * z[0])
    }
}
