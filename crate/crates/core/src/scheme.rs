//! Adaptive driver for the incremental stationary scheme.
//!
//! Starting from `(s₀, t₀, z₀) = (0, 0, z₀)`, each iteration solves the
//! ball-constrained stationarity subproblem at the previous state with trust
//! radius `τ`, advances physical time by `t_k = t_{k−1} + τ − ‖z_k − z_{k−1}‖_V`
//! and the curve parameter by `s_k = s_{k−1} + τ`, and then measures two
//! Simpson residua of the piecewise-affine interpolants: `I1` for the
//! complementarity relation and `I2` for the energy-dissipation balance. A
//! step is accepted when both fall below the tolerance; the next proposal is
//! doubled when both fall below half the tolerance, and a rejected step is
//! retried from the same state with half the (possibly clipped) step size.
//!
//! The construction makes `t̂' + ‖ẑ'‖_V = 1` hold exactly on every interval
//! and never moves backwards in time. [`nested_run`] additionally clips each
//! proposal at the next grid point of any coarser tolerance level, so the
//! `s`-grids of a decreasing tolerance sequence are nested.

use crate::model::{EnergyModel, ModelError};
use crate::quad::{simpson, simpson_error_estimate};
use crate::stationarity::{solve_stationary, SolverError, SolverOptions};
use thiserror::Error;

/// Options of the adaptive driver.
#[derive(Clone, Debug)]
pub struct SchemeOptions {
    /// Simpson subintervals per step for the residua (even, ≥ 2).
    pub nq: usize,
    /// Step floor, relative to the initial step size. Falling below it
    /// indicates livelock from inexact subproblem solves.
    pub tau_floor_rel: f64,
    /// Cap on step-size proposals; defaults to the model horizon.
    pub tau_cap: Option<f64>,
    /// Hard bound on accepted steps per level.
    pub max_steps: usize,
    pub solver: SolverOptions,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            nq: 8,
            tau_floor_rel: 1e-12,
            tau_cap: None,
            max_steps: 500_000,
            solver: SolverOptions::default(),
        }
    }
}

impl SchemeOptions {
    pub fn fem() -> Self {
        Self {
            solver: SolverOptions::fem(),
            ..Self::default()
        }
    }
}

/// One accepted step of the scheme, plus the initial record at `k = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateRecord {
    pub k: usize,
    pub s: f64,
    pub t: f64,
    /// Step size of the accepted step; zero on the initial record.
    pub tau: f64,
    pub z: Vec<f64>,
    /// Ball-constraint multiplier of the step.
    pub lambda: f64,
    pub i1: f64,
    pub i2: f64,
    pub norm_dz_v: f64,
    /// Number of halvings before this step was accepted.
    pub rejected_count: u32,
    /// Simpson error indicators for the two residua.
    pub i1_err_est: f64,
    pub i2_err_est: f64,
    /// Largest stationarity-certificate defect of the accepted solve.
    pub kkt_max: f64,
}

impl IterateRecord {
    fn initial(z0: Vec<f64>) -> Self {
        Self {
            k: 0,
            s: 0.0,
            t: 0.0,
            tau: 0.0,
            z: z0,
            lambda: 0.0,
            i1: 0.0,
            i2: 0.0,
            norm_dz_v: 0.0,
            rejected_count: 0,
            i1_err_est: 0.0,
            i2_err_est: 0.0,
            kkt_max: 0.0,
        }
    }
}

/// Ordered iterate records together with the piecewise-affine and
/// piecewise-constant interpolants they induce.
#[derive(Clone, Debug)]
pub struct Trajectory {
    records: Vec<IterateRecord>,
    /// Residuum tolerance of the run; `None` for reference or uniform runs.
    pub tol: Option<f64>,
    pub model_id: String,
    horizon: f64,
    crossing: Option<f64>,
}

impl Trajectory {
    /// Assembles a trajectory and locates the first parameter `S` with
    /// `t̂(S) = T` by linear interpolation inside the crossing interval.
    /// Records beyond the crossing are retained.
    pub fn new(
        records: Vec<IterateRecord>,
        tol: Option<f64>,
        model_id: String,
        horizon: f64,
    ) -> Self {
        assert!(!records.is_empty(), "trajectory needs at least one record");
        assert_eq!(records[0].s, 0.0, "records must start at s = 0");
        let dim = records[0].z.len();
        for w in records.windows(2) {
            assert!(w[1].s > w[0].s, "curve parameter must increase strictly");
            assert_eq!(w[1].z.len(), dim, "state dimension changed mid-trajectory");
        }
        let crossing = locate_crossing(&records, horizon);
        Self {
            records,
            tol,
            model_id,
            horizon,
            crossing,
        }
    }

    pub fn records(&self) -> &[IterateRecord] {
        &self.records
    }

    /// Number of accepted steps (records minus the initial one).
    pub fn n_steps(&self) -> usize {
        self.records.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.records[0].z.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn s_last(&self) -> f64 {
        self.records.last().unwrap().s
    }

    pub fn t_last(&self) -> f64 {
        self.records.last().unwrap().t
    }

    /// First parameter value where the affine time interpolant reaches the
    /// horizon, if it does.
    pub fn crossing_s(&self) -> Option<f64> {
        self.crossing
    }

    /// Whether a record lies beyond the horizon crossing.
    pub fn is_past_crossing(&self, k: usize) -> bool {
        self.crossing.is_some_and(|s| self.records[k].s > s)
    }

    pub fn min_accepted_tau(&self) -> f64 {
        self.records[1..]
            .iter()
            .map(|r| r.tau)
            .fold(f64::INFINITY, f64::min)
    }

    /// Index `k ≥ 1` of the interval `[s_{k−1}, s_k)` containing `s`; the
    /// final interval is closed on the right.
    pub fn interval_of(&self, s: f64) -> usize {
        let last = self.s_last();
        assert!(
            s >= -1e-12 && s <= last * (1.0 + 1e-12) + 1e-12,
            "parameter {s} outside [0, {last}]"
        );
        assert!(self.records.len() > 1, "trajectory has no interval");
        let idx = self.records.partition_point(|r| r.s <= s);
        idx.clamp(1, self.records.len() - 1)
    }

    /// Affine interpolants `(t̂(s), ẑ(s))`.
    pub fn eval_affine(&self, s: f64) -> (f64, Vec<f64>) {
        if self.records.len() == 1 {
            let r = &self.records[0];
            return (r.t, r.z.clone());
        }
        let k = self.interval_of(s);
        let (a, b) = (&self.records[k - 1], &self.records[k]);
        if s >= b.s {
            return (b.t, b.z.clone());
        }
        let theta = (s - a.s) / (b.s - a.s);
        let t = a.t + theta * (b.t - a.t);
        let z = a
            .z
            .iter()
            .zip(&b.z)
            .map(|(&za, &zb)| za + theta * (zb - za))
            .collect();
        (t, z)
    }

    /// Constant interpolants `(t̲(s), z̄(s)) = (t_{k−1}, z_k)` on
    /// `[s_{k−1}, s_k)`.
    pub fn eval_constant(&self, s: f64) -> (f64, Vec<f64>) {
        let k = self.interval_of(s);
        (self.records[k - 1].t, self.records[k].z.clone())
    }
}

fn locate_crossing(records: &[IterateRecord], horizon: f64) -> Option<f64> {
    if records[0].t >= horizon {
        return Some(records[0].s);
    }
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.t >= horizon {
            // a.t < horizon ≤ b.t, so the affine time interpolant crosses here
            return Some(a.s + (horizon - a.t) * (b.s - a.s) / (b.t - a.t));
        }
    }
    None
}

/// Simpson approximations of the two per-step residua, with error indicators
/// from the embedded coarser rule.
#[derive(Clone, Copy, Debug)]
pub struct Residua {
    pub i1: f64,
    pub i2: f64,
    pub i1_err_est: f64,
    pub i2_err_est: f64,
}

/// Computes the residua of one step `(t_prev, z_prev) → (t_new, z_new)` of
/// size `tau` with `nq` Simpson subintervals:
///
/// * `I1 = ∫ t̂'(s) · dist(−D_zI(t̂(s), ẑ(s)), ∂R(0)) ds` with
///   `t̂' = (t_new − t_prev)/τ` constant on the step,
/// * `I2 = ∫ ⟨D_zI(t̂,ẑ) − D_zI(t̲,z̄), ẑ'⟩ + ‖ẑ'‖_V (dist(t̂,ẑ) − dist(t̲,z̄)) ds`
///   with `ẑ' = (z_new − z_prev)/τ` constant and `(t̲, z̄) = (t_prev, z_new)`.
///
/// A sticking step that stays locally stable yields `I1 = I2 = 0` exactly;
/// a step with an active ball constraint has `t̂' = 0` and hence `I1 = 0`.
pub fn residua(
    mdl: &dyn EnergyModel,
    prev: (f64, &[f64]),
    new: (f64, &[f64]),
    tau: f64,
    nq: usize,
) -> Result<Residua, ModelError> {
    assert!(nq >= 2 && nq % 2 == 0, "nq must be even and at least 2");
    assert!(tau > 0.0, "step size must be positive");
    let (t_prev, z_prev) = prev;
    let (t_new, z_new) = new;
    let metric = mdl.metric();
    let n = mdl.dim();

    let dz: Vec<f64> = z_new.iter().zip(z_prev).map(|(&a, &b)| a - b).collect();
    let z_dot: Vec<f64> = dz.iter().map(|&d| d / tau).collect();
    let t_dot = (t_new - t_prev) / tau;
    let norm_z_dot = metric.norm_v(&z_dot);

    let g_bar = mdl.grad_energy(t_prev, z_new)?;
    let neg_bar: Vec<f64> = g_bar.iter().map(|&x| -x).collect();
    let dist_bar = metric.dist_subdiff(&neg_bar);

    let mut f1 = Vec::with_capacity(nq + 1);
    let mut f2 = Vec::with_capacity(nq + 1);
    let mut z_hat = vec![0.0; n];
    for j in 0..=nq {
        let theta = j as f64 / nq as f64;
        let t_hat = t_prev + theta * (t_new - t_prev);
        for (zh, (&zp, &dzi)) in z_hat.iter_mut().zip(z_prev.iter().zip(&dz)) {
            *zh = zp + theta * dzi;
        }
        let g = mdl.grad_energy(t_hat, &z_hat)?;
        let neg: Vec<f64> = g.iter().map(|&x| -x).collect();
        let dist = metric.dist_subdiff(&neg);
        f1.push(t_dot * dist);
        let pairing: f64 = g
            .iter()
            .zip(&g_bar)
            .zip(&z_dot)
            .map(|((&gi, &bi), &zi)| (gi - bi) * zi)
            .sum();
        f2.push(pairing + norm_z_dot * (dist - dist_bar));
    }
    let i1 = simpson(&f1, tau);
    let i2 = simpson(&f2, tau);
    Ok(Residua {
        i1,
        i2,
        i1_err_est: simpson_error_estimate(&f1, tau, i1),
        i2_err_est: simpson_error_estimate(&f2, tau, i2),
    })
}

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(
        "step size {tau:.3e} fell below the floor {floor:.3e} at step {k} \
         (level {level}, s = {s:.6}, t = {t:.6})"
    )]
    StepFloorReached {
        level: usize,
        k: usize,
        s: f64,
        t: f64,
        tau: f64,
        floor: f64,
    },
    #[error("stationarity solve failed at step {k} (level {level}, s = {s:.6}, t = {t:.6}, tau = {tau:.3e}): {source}")]
    Solver {
        level: usize,
        k: usize,
        s: f64,
        t: f64,
        tau: f64,
        source: SolverError,
    },
    #[error("model evaluation failed at step {k} (level {level}): {source}")]
    Model {
        level: usize,
        k: usize,
        source: ModelError,
    },
    #[error("exceeded the step budget of {0}")]
    MaxSteps(usize),
    #[error("tolerances must be positive and strictly decreasing")]
    BadTolerances,
}

/// Runs the adaptive scheme at a single tolerance until `t ≥ T`.
pub fn adaptive_run(
    mdl: &dyn EnergyModel,
    tol: f64,
    tau_init: f64,
    opts: &SchemeOptions,
) -> Result<Trajectory, SchemeError> {
    if tol <= 0.0 || !tol.is_finite() {
        return Err(SchemeError::BadTolerances);
    }
    run_level(mdl, tol, tau_init, opts, None, 1)
}

/// Runs the scheme for a strictly decreasing tolerance sequence so that the
/// `s`-grid of each level contains the grid points of all previous levels:
/// every proposal is clipped at the next previous-level grid point, and a
/// rejection halves the clipped step.
pub fn nested_run(
    mdl: &dyn EnergyModel,
    tols: &[f64],
    tau_init: f64,
    opts: &SchemeOptions,
) -> Result<Vec<Trajectory>, SchemeError> {
    if tols.is_empty()
        || tols.iter().any(|&t| t <= 0.0 || !t.is_finite())
        || tols.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(SchemeError::BadTolerances);
    }
    let mut grid: Vec<f64> = Vec::new();
    let mut out = Vec::with_capacity(tols.len());
    for (level, &tol) in tols.iter().enumerate() {
        let prev = if level == 0 {
            None
        } else {
            Some(grid.as_slice())
        };
        let traj = run_level(mdl, tol, tau_init, opts, prev, level + 1)?;
        for r in &traj.records()[1..] {
            match grid.binary_search_by(|g| g.partial_cmp(&r.s).unwrap()) {
                Ok(_) => {}
                Err(pos) => grid.insert(pos, r.s),
            }
        }
        out.push(traj);
    }
    Ok(out)
}

/// Runs the same stepping loop with a fixed step size and no residuum-based
/// acceptance; used as the comparison baseline for the adaptive controller.
pub fn uniform_run(
    mdl: &dyn EnergyModel,
    tau: f64,
    opts: &SchemeOptions,
) -> Result<Trajectory, SchemeError> {
    assert!(tau > 0.0, "step size must be positive");
    let horizon = mdl.horizon();
    let metric = mdl.metric();
    let mut records = vec![IterateRecord::initial(mdl.initial_state())];
    let mut k = 1usize;
    while records.last().unwrap().t < horizon {
        if records.len() > opts.max_steps {
            return Err(SchemeError::MaxSteps(opts.max_steps));
        }
        let prev = records.last().unwrap();
        let (s_prev, t_prev) = (prev.s, prev.t);
        let z_prev = prev.z.clone();
        let sol = solve_stationary(mdl, t_prev, &z_prev, tau, &opts.solver).map_err(|source| {
            SchemeError::Solver {
                level: 1,
                k,
                s: s_prev,
                t: t_prev,
                tau,
                source,
            }
        })?;
        let dz: Vec<f64> = sol.z_new.iter().zip(&z_prev).map(|(&a, &b)| a - b).collect();
        let norm_dz = metric.norm_v(&dz);
        let t_new = t_prev + (tau - norm_dz).max(0.0);
        let res = residua(mdl, (t_prev, &z_prev), (t_new, &sol.z_new), tau, opts.nq)
            .map_err(|source| SchemeError::Model { level: 1, k, source })?;
        records.push(IterateRecord {
            k,
            s: s_prev + tau,
            t: t_new,
            tau,
            z: sol.z_new,
            lambda: sol.lambda,
            i1: res.i1,
            i2: res.i2,
            norm_dz_v: norm_dz,
            rejected_count: 0,
            i1_err_est: res.i1_err_est,
            i2_err_est: res.i2_err_est,
            kkt_max: sol.kkt_residuals.iter().copied().fold(0.0, f64::max),
        });
        k += 1;
    }
    Ok(Trajectory::new(records, None, mdl.id(), horizon))
}

fn run_level(
    mdl: &dyn EnergyModel,
    tol: f64,
    tau_init: f64,
    opts: &SchemeOptions,
    prev_grid: Option<&[f64]>,
    level: usize,
) -> Result<Trajectory, SchemeError> {
    assert!(tau_init > 0.0, "initial step size must be positive");
    let horizon = mdl.horizon();
    let metric = mdl.metric();
    let tau_cap = opts.tau_cap.unwrap_or(horizon);
    let floor = opts.tau_floor_rel * tau_init;

    let mut records = vec![IterateRecord::initial(mdl.initial_state())];
    let mut sigma = tau_init.min(tau_cap);
    let mut k = 1usize;
    let mut rejected = 0u32;

    while records.last().unwrap().t < horizon {
        if records.len() > opts.max_steps {
            return Err(SchemeError::MaxSteps(opts.max_steps));
        }
        let prev = records.last().unwrap();
        let (s_prev, t_prev) = (prev.s, prev.t);
        let z_prev = prev.z.clone();

        // clip the proposal at the next grid point of any previous level
        let mut tau = sigma;
        let mut s_target = None;
        if let Some(grid) = prev_grid {
            let idx = grid.partition_point(|&g| g <= s_prev);
            if idx < grid.len() {
                let sbar = grid[idx];
                if s_prev + sigma > sbar - 1e-12 * sbar.abs().max(1.0) {
                    tau = sbar - s_prev;
                    s_target = Some(sbar);
                }
            }
        }

        let sol = solve_stationary(mdl, t_prev, &z_prev, tau, &opts.solver).map_err(|source| {
            SchemeError::Solver {
                level,
                k,
                s: s_prev,
                t: t_prev,
                tau,
                source,
            }
        })?;
        let dz: Vec<f64> = sol.z_new.iter().zip(&z_prev).map(|(&a, &b)| a - b).collect();
        let norm_dz = metric.norm_v(&dz);
        debug_assert!(norm_dz <= tau * (1.0 + 1e-12));
        let t_new = t_prev + (tau - norm_dz).max(0.0);
        let res = residua(mdl, (t_prev, &z_prev), (t_new, &sol.z_new), tau, opts.nq)
            .map_err(|source| SchemeError::Model { level, k, source })?;

        if res.i1 < tol && res.i2 < tol {
            records.push(IterateRecord {
                k,
                s: s_target.unwrap_or(s_prev + tau),
                t: t_new,
                tau,
                z: sol.z_new,
                lambda: sol.lambda,
                i1: res.i1,
                i2: res.i2,
                norm_dz_v: norm_dz,
                rejected_count: rejected,
                i1_err_est: res.i1_err_est,
                i2_err_est: res.i2_err_est,
                kkt_max: sol.kkt_residuals.iter().copied().fold(0.0, f64::max),
            });
            rejected = 0;
            if res.i1 < 0.5 * tol && res.i2 < 0.5 * tol {
                sigma *= 2.0;
            }
            sigma = sigma.min(tau_cap);
            k += 1;
        } else {
            sigma = 0.5 * tau;
            rejected += 1;
            if sigma < floor {
                return Err(SchemeError::StepFloorReached {
                    level,
                    k,
                    s: s_prev,
                    t: t_prev,
                    tau: sigma,
                    floor,
                });
            }
        }
    }
    Ok(Trajectory::new(records, Some(tol), mdl.id(), horizon))
}
