//! Verification gates: thresholds applied to a [`ristep::VerificationReport`]
//! to decide the `verify` exit code.
//!
//! Two presets exist. `strict` checks the solution conditions at reference
//! accuracy (1e-8) and suits exact or near-exact curves. `default` is
//! tolerance-aware: energy-balance defects are gated against the
//! `2·N·tol + slack` accumulation bound of the stepping scheme and the
//! pointwise complementarity supremum against a `sqrt(tol)` envelope, which
//! is how fast it vanishes as the tolerance is driven down.

use ristep::{Trajectory, VerificationReport};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct GateResult {
    pub name: &'static str,
    pub value: f64,
    /// Upper bound unless `lower_bound` is set.
    pub limit: f64,
    pub lower_bound: bool,
    pub pass: bool,
}

fn upper(name: &'static str, value: f64, limit: f64) -> GateResult {
    GateResult {
        name,
        value,
        limit,
        lower_bound: false,
        pass: value <= limit,
    }
}

fn lower(name: &'static str, value: f64, limit: f64) -> GateResult {
    GateResult {
        name,
        value,
        limit,
        lower_bound: true,
        pass: value >= limit,
    }
}

pub fn strict_gates(report: &VerificationReport) -> Vec<GateResult> {
    vec![
        upper("complementarity", report.complementarity_defect, 1e-8),
        upper("normalization", report.normalization_defect, 1e-8),
        upper("endtime", report.endtime_defect, 1e-8),
        upper("energy_identity", report.energy_identity_defect, 1e-8),
        upper("time_monotonicity", report.time_monotonicity_defect, 1e-14),
    ]
}

pub fn default_gates(report: &VerificationReport, traj: &Trajectory, tol: f64) -> Vec<GateResult> {
    let n = traj.n_steps() as f64;
    let accumulation = 2.0 * n * tol + report.quadrature_slack;
    vec![
        upper(
            "complementarity",
            report.complementarity_defect,
            100.0 * tol.sqrt(),
        ),
        upper("normalization", report.normalization_defect, 1e-10),
        upper("endtime", report.endtime_defect, 1e-8),
        upper("energy_identity", report.energy_identity_defect, accumulation),
        upper(
            "discrete_identity",
            report.discrete_identity_defect,
            report.sum_i1 + report.sum_i2 + report.quadrature_slack,
        ),
        upper("residua_sum", report.sum_i1 + report.sum_i2, accumulation),
        lower("i2_min", report.i2_min, -report.quadrature_slack - 1e-15),
        upper("time_monotonicity", report.time_monotonicity_defect, 1e-14),
    ]
}
