//! Per-step stationarity solver.
//!
//! Each step of the incremental scheme requires a point `z` with
//!
//! ```text
//! 0 ∈ ∂(R + I_τ)(z − z_prev) + D_zI(t_prev, z)
//! ```
//!
//! where `I_τ` is the indicator of the `V`-ball of radius `τ` around zero,
//! together with the descent condition
//! `I(t_prev, z) + R(z − z_prev) ≤ I(t_prev, z_prev)`.
//!
//! Writing `d = z − z_prev`, the inclusion is equivalent, for any fixed
//! `γ > 0`, to the fixed-point equation `d = prox_{γR + I_τ}(d − γ V⁻¹ g(d))`
//! with `g(d) = D_zI(t_prev, z_prev + d)`; the prox has a closed form
//! (soft-threshold then radial projection). A damped semismooth Newton method
//! on the fixed-point residual drives `‖d − prox(…)‖_V` to tolerance. The
//! line search on the merit `I(t_prev, z_prev + d) + R(d)` accepts Armijo
//! decrease, or a halved residual as long as the merit stays below its value
//! at the warm start `d = 0`, so the descent condition holds at exit either
//! way. Proximal-gradient iterations serve as the globally convergent
//! fallback whenever a Newton step is rejected or the residual stagnates.

use crate::fem::minres;
use crate::metric::DiagonalMetric;
use crate::model::{EnergyModel, ModelError};
use thiserror::Error;

/// Tunables of the per-step solver.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Tolerance on the fixed-point residual `‖d − prox(…)‖_V`.
    pub newton_tol: f64,
    /// Acceptance threshold for the four stationarity-certificate defects.
    pub kkt_tol: f64,
    /// Newton iteration budget.
    pub max_newton: usize,
    /// Proximal-gradient fallback budget.
    pub max_fallback: usize,
    /// Armijo sufficient-decrease constant of the line search.
    pub armijo_sigma: f64,
    /// Maximum number of step halvings per line search.
    pub max_backtracks: usize,
    /// Iterations without residual progress before the solver hands a
    /// stretch of iterations to the proximal-gradient fallback.
    pub stagnation_window: usize,
    /// Relative tolerance of the inner linear solves.
    pub cg_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-13,
            kkt_tol: 1e-8,
            max_newton: 100,
            max_fallback: 5000,
            armijo_sigma: 1e-4,
            max_backtracks: 40,
            stagnation_window: 5,
            cg_tol: 1e-10,
        }
    }
}

impl SolverOptions {
    /// Defaults for the finite-element model, where the stiffness scaling
    /// makes machine-precision residuals unattainable.
    pub fn fem() -> Self {
        Self {
            newton_tol: 1e-10,
            kkt_tol: 1e-6,
            ..Self::default()
        }
    }
}

/// One accepted solution of the per-step inclusion.
#[derive(Clone, Debug)]
pub struct StationarityResult {
    pub z_new: Vec<f64>,
    /// Multiplier of the ball constraint; nonzero only when `‖d‖_V = τ`.
    pub lambda: f64,
    pub newton_iters: usize,
    pub fallback_iters: usize,
    pub fallback_used: bool,
    /// Defects of the four stationarity-certificate relations.
    pub kkt_residuals: [f64; 4],
    pub descent_ok: bool,
    /// Final fixed-point residual.
    pub residual: f64,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("stationarity solve exceeded budgets (residual {residual:.3e}, target {target:.3e})")]
    MaxIterations { residual: f64, target: f64 },
    #[error("stationary point violates the descent condition (slack {slack:.3e})")]
    DescentViolated { slack: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Defects of the multiplier certificate for a candidate `(z_new, lambda)`.
///
/// With `d = z_new − z_prev` and `g = D_zI(t_prev, z_new)` the four relations
/// are
///
/// 1. `λ (‖d‖_V − τ) = 0`,
/// 2. `τ · dist(−g, ∂R(0)) = λ ‖d‖_V²`,
/// 3. `R(d) + τ · dist(−g, ∂R(0)) = ⟨−g, d⟩`,
/// 4. `−λVd − g ∈ ∂R(0)` (checked componentwise, which is exact for the
///    separable dissipation).
///
/// All four vanish exactly at a stationary point of the ball-constrained
/// subproblem.
pub fn kkt_residuals(
    mdl: &dyn EnergyModel,
    t_prev: f64,
    z_prev: &[f64],
    z_new: &[f64],
    lambda: f64,
    tau: f64,
) -> Result<[f64; 4], ModelError> {
    assert!(lambda >= 0.0, "multiplier must be nonnegative");
    assert!(tau > 0.0, "step size must be positive");
    let metric = mdl.metric();
    let d: Vec<f64> = z_new.iter().zip(z_prev).map(|(&a, &b)| a - b).collect();
    let g = mdl.grad_energy(t_prev, z_new)?;
    let neg_g: Vec<f64> = g.iter().map(|&x| -x).collect();
    let norm_d = metric.norm_v(&d);
    let dist = metric.dist_subdiff(&neg_g);

    let e1 = (lambda * (norm_d - tau)).abs();
    let e2 = (tau * dist - lambda * norm_d * norm_d).abs();
    let pairing: f64 = neg_g.iter().zip(&d).map(|(&a, &b)| a * b).sum();
    let e3 = (metric.dissipation(&d) + tau * dist - pairing).abs();
    let shifted: Vec<f64> = metric
        .v_weights()
        .iter()
        .zip(d.iter().zip(&g))
        .map(|(&v, (&di, &gi))| -(lambda * v * di) - gi)
        .collect();
    let e4 = metric.box_violation(&shifted);
    Ok([e1, e2, e3, e4])
}

struct ProxPoint {
    /// Pre-prox point `x = d − γ V⁻¹ g`.
    x: Vec<f64>,
    /// Prox output, always inside the ball.
    p: Vec<f64>,
    /// Fixed-point residual norm `‖d − p‖_V`.
    res: f64,
    /// Soft-threshold point norm, before the radial projection.
    soft_norm: f64,
}

struct Subproblem<'a> {
    mdl: &'a dyn EnergyModel,
    metric: &'a DiagonalMetric,
    t: f64,
    z_prev: &'a [f64],
    tau: f64,
    gamma: f64,
    n: usize,
}

impl<'a> Subproblem<'a> {
    fn grad_at(&self, d: &[f64]) -> Result<Vec<f64>, ModelError> {
        let z: Vec<f64> = self.z_prev.iter().zip(d).map(|(&a, &b)| a + b).collect();
        self.mdl.grad_energy(self.t, &z)
    }

    fn merit(&self, d: &[f64]) -> Result<f64, ModelError> {
        let z: Vec<f64> = self.z_prev.iter().zip(d).map(|(&a, &b)| a + b).collect();
        Ok(self.mdl.energy(self.t, &z)? + self.metric.dissipation(d))
    }

    fn prox_point(&self, d: &[f64], g: &[f64], gamma: f64) -> ProxPoint {
        let v = self.metric.v_weights();
        let x: Vec<f64> = d
            .iter()
            .zip(g.iter().zip(v))
            .map(|(&di, (&gi, &vi))| di - gamma * gi / vi)
            .collect();
        // soft threshold, then remember the unprojected norm for the Jacobian
        let rho = self.metric.rho_weights();
        let soft: Vec<f64> = x
            .iter()
            .zip(rho.iter().zip(v))
            .map(|(&xi, (&ri, &vi))| xi.signum() * (xi.abs() - gamma * ri / vi).max(0.0))
            .collect();
        let soft_norm = self.metric.norm_v(&soft);
        let p = if soft_norm > self.tau {
            let scale = self.tau / soft_norm;
            soft.iter().map(|&s| s * scale).collect()
        } else {
            soft
        };
        let diff: Vec<f64> = d.iter().zip(&p).map(|(&a, &b)| a - b).collect();
        ProxPoint {
            x,
            p,
            res: self.metric.norm_v(&diff),
            soft_norm,
        }
    }

    fn project_ball(&self, d: &mut [f64]) {
        let norm = self.metric.norm_v(d);
        if norm > self.tau {
            let scale = self.tau / norm;
            for di in d.iter_mut() {
                *di *= scale;
            }
        }
    }

    /// Semismooth Newton direction for the residual `Φ(d) = d − prox(x(d))`.
    /// Returns `None` when the reduced linear system stays indefinite after
    /// regularization, signalling the caller to fall back. `beta_hint` keeps
    /// the last sufficient diagonal regularization across calls, so repeated
    /// solves against an indefinite generalized Hessian skip the escalation.
    fn newton_direction(
        &self,
        d: &[f64],
        point: &ProxPoint,
        cg_tol: f64,
        beta_hint: &mut f64,
    ) -> Option<Vec<f64>> {
        let n = self.n;
        let v = self.metric.v_weights();
        let rho = self.metric.rho_weights();
        let z: Vec<f64> = self.z_prev.iter().zip(d).map(|(&a, &b)| a + b).collect();

        let active: Vec<bool> = point
            .x
            .iter()
            .zip(rho.iter().zip(v))
            .map(|(&xi, (&ri, &vi))| xi.abs() > self.gamma * ri / vi)
            .collect();
        let active_idx: Vec<usize> = (0..n).filter(|&i| active[i]).collect();

        // rows off the active set are identity rows of the Jacobian
        let mut delta = vec![0.0; n];
        for i in 0..n {
            if !active[i] {
                delta[i] = -d[i] + point.p[i];
            }
        }
        if active_idx.is_empty() {
            return Some(delta);
        }

        let ball_active = point.soft_norm > self.tau;
        let c = if ball_active {
            self.tau / point.soft_norm
        } else {
            1.0
        };
        let mu = (1.0 - c) / (c * self.gamma);
        let scale = 1.0 / (c * self.gamma);

        // coupling of the fixed inactive block into the active equations
        let mut h_delta = vec![0.0; n];
        self.mdl.hess_apply(self.t, &z, &delta, &mut h_delta);

        let rhs_a: Vec<f64> = active_idx
            .iter()
            .map(|&i| scale * v[i] * (point.p[i] - d[i]) - h_delta[i])
            .collect();

        let base_precond: Vec<f64> = {
            let mut diag = vec![0.0; n];
            self.mdl.hess_diag(self.t, &z, &mut diag);
            active_idx
                .iter()
                .map(|&i| (diag[i] + mu * v[i]).abs().max(1e-12 * v[i]))
                .collect()
        };

        let v_scale = active_idx.iter().map(|&i| v[i]).fold(0.0, f64::max);
        let beta_floor = 1e-8_f64.max(1e-10 * v_scale);
        let mut beta = 0.0;
        let mut full = vec![0.0; n];
        let mut h_full = vec![0.0; n];
        for attempt in 0..8 {
            if attempt == 1 {
                beta = (0.1 * *beta_hint).max(beta_floor);
            } else if attempt > 1 {
                beta *= 100.0;
            }
            let precond: Vec<f64> = base_precond
                .iter()
                .zip(&active_idx)
                .map(|(&p, &i)| p + beta * v[i])
                .collect();
            let apply = |w_a: &[f64], out: &mut [f64]| {
                full.iter_mut().for_each(|f| *f = 0.0);
                for (slot, &i) in w_a.iter().zip(&active_idx) {
                    full[i] = *slot;
                }
                self.mdl.hess_apply(self.t, &z, &full, &mut h_full);
                for (o, &i) in out.iter_mut().zip(&active_idx) {
                    *o = h_full[i] + (mu + beta) * v[i] * full[i];
                }
            };
            let delta_a = match minres(apply, &rhs_a, cg_tol, 40 * n + 200, Some(&precond)) {
                Ok(sol) => sol,
                Err(_) => continue,
            };

            if !ball_active {
                let mut cand = delta.clone();
                for (&i, &val) in active_idx.iter().zip(&delta_a) {
                    cand[i] = val;
                }
                // a near-singular generalized Hessian yields an unusable
                // direction; escalate the regularization instead
                if self.metric.norm_v(&cand) > 1e3 * self.tau {
                    continue;
                }
                *beta_hint = beta;
                return Some(cand);
            }

            // rank-one radial correction of the projection Jacobian,
            // resolved by a second solve with the same reduced operator
            let u = {
                // soft-threshold point before projection, supported on the active set
                let mut u = vec![0.0; n];
                for &i in &active_idx {
                    let xi = point.x[i];
                    u[i] = xi.signum() * (xi.abs() - self.gamma * rho[i] / v[i]).max(0.0);
                }
                u
            };
            let rhs_u: Vec<f64> = active_idx.iter().map(|&i| scale * v[i] * u[i]).collect();
            let apply2 = |w_a: &[f64], out: &mut [f64]| {
                full.iter_mut().for_each(|f| *f = 0.0);
                for (slot, &i) in w_a.iter().zip(&active_idx) {
                    full[i] = *slot;
                }
                self.mdl.hess_apply(self.t, &z, &full, &mut h_full);
                for (o, &i) in out.iter_mut().zip(&active_idx) {
                    *o = h_full[i] + (mu + beta) * v[i] * full[i];
                }
            };
            let delta2_a = match minres(apply2, &rhs_u, cg_tol, 40 * n + 200, Some(&precond)) {
                Ok(sol) => sol,
                Err(_) => continue,
            };

            let u_norm_sq = self.metric.norm_v(&u).powi(2);
            // q·y = (Vu)ᵀ D_a (y − γ V⁻¹ H y) / ‖u‖_V² for full-space y
            let q_dot = |y_full: &[f64], hy_full: &[f64]| -> f64 {
                active_idx
                    .iter()
                    .map(|&i| v[i] * u[i] * (y_full[i] - self.gamma * hy_full[i] / v[i]))
                    .sum::<f64>()
                    / u_norm_sq
            };
            let mut y1 = delta.clone();
            for (&i, &val) in active_idx.iter().zip(&delta_a) {
                y1[i] = val;
            }
            let mut y2 = vec![0.0; n];
            for (&i, &val) in active_idx.iter().zip(&delta2_a) {
                y2[i] = val;
            }
            let mut hy = vec![0.0; n];
            self.mdl.hess_apply(self.t, &z, &y1, &mut hy);
            let q1 = q_dot(&y1, &hy);
            self.mdl.hess_apply(self.t, &z, &y2, &mut hy);
            let q2 = q_dot(&y2, &hy);
            let denom = 1.0 + c * q2;
            if denom.abs() < 1e-12 {
                return None;
            }
            let factor = c * q1 / denom;
            let mut cand = vec![0.0; n];
            for i in 0..n {
                cand[i] = y1[i] - factor * y2[i];
            }
            if self.metric.norm_v(&cand) > 1e3 * self.tau {
                continue;
            }
            *beta_hint = beta;
            return Some(cand);
        }
        None
    }
}

/// Estimate of the dominant curvature of `V⁻¹·Hess` at `z` in the `V`-norm,
/// by a fixed number of deterministic power iterations.
fn curvature_estimate(mdl: &dyn EnergyModel, t: f64, z: &[f64]) -> f64 {
    let metric = mdl.metric();
    let n = mdl.dim();
    let mut y: Vec<f64> = (0..n)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let norm = metric.norm_v(&y);
    y.iter_mut().for_each(|yi| *yi /= norm);
    let mut hy = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..12 {
        mdl.hess_apply(t, z, &y, &mut hy);
        let v = metric.v_weights();
        for i in 0..n {
            hy[i] /= v[i];
        }
        let norm = metric.norm_v(&hy);
        if !norm.is_finite() || norm == 0.0 {
            return 1.0;
        }
        estimate = norm;
        for i in 0..n {
            y[i] = hy[i] / norm;
        }
    }
    estimate
}

/// Solves the per-step inclusion at `(t_prev, z_prev)` with trust radius
/// `tau`, warm-started at `z_prev`.
///
/// The returned state is exactly feasible (`‖z_new − z_prev‖_V ≤ tau`), the
/// multiplier is recovered from the certificate relation
/// `λ = τ·dist(−g)/‖d‖_V²` on an active ball and is zero otherwise (also at
/// the degenerate boundary where the distance vanishes), and every accepted
/// iterate keeps the merit below its warm-start value, which enforces the
/// descent condition.
pub fn solve_stationary(
    mdl: &dyn EnergyModel,
    t_prev: f64,
    z_prev: &[f64],
    tau: f64,
    opts: &SolverOptions,
) -> Result<StationarityResult, SolverError> {
    assert!(tau > 0.0, "step size must be positive");
    assert_eq!(z_prev.len(), mdl.dim(), "dimension mismatch");

    let mut attempt = solve_from(mdl, t_prev, z_prev, tau, opts, None)?;
    if !attempt.descent_ok {
        // restart from a slightly displaced feasible point; deterministic
        let metric = mdl.metric();
        let g = mdl.grad_energy(t_prev, z_prev)?;
        let mut seed: Vec<f64> = g
            .iter()
            .zip(metric.v_weights())
            .map(|(&gi, &vi)| -1e-3 * tau * gi / vi)
            .collect();
        let norm = metric.norm_v(&seed);
        if norm > tau {
            let scale = tau / norm;
            seed.iter_mut().for_each(|x| *x *= scale);
        }
        attempt = solve_from(mdl, t_prev, z_prev, tau, opts, Some(seed))?;
        if !attempt.descent_ok {
            let merit0 = mdl.energy(t_prev, z_prev)?;
            let merit_new = mdl.energy(t_prev, &attempt.z_new)?
                + mdl.metric().dissipation(
                    &attempt
                        .z_new
                        .iter()
                        .zip(z_prev)
                        .map(|(&a, &b)| a - b)
                        .collect::<Vec<f64>>(),
                );
            return Err(SolverError::DescentViolated {
                slack: merit_new - merit0,
            });
        }
    }
    Ok(attempt)
}

fn solve_from(
    mdl: &dyn EnergyModel,
    t_prev: f64,
    z_prev: &[f64],
    tau: f64,
    opts: &SolverOptions,
    start: Option<Vec<f64>>,
) -> Result<StationarityResult, SolverError> {
    let metric = mdl.metric();
    let n = mdl.dim();
    let curvature = curvature_estimate(mdl, t_prev, z_prev);
    let gamma = 1.0 / (1.0 + curvature);
    let sub = Subproblem {
        mdl,
        metric,
        t: t_prev,
        z_prev,
        tau,
        gamma,
        n,
    };

    let mut d = start.unwrap_or_else(|| vec![0.0; n]);
    sub.project_ball(&mut d);
    let merit_ref = mdl.energy(t_prev, z_prev)?;
    let mut merit = sub.merit(&d)?;
    let mut g = sub.grad_at(&d)?;
    let mut point = sub.prox_point(&d, &g, gamma);

    let mut newton_iters = 0usize;
    let mut fallback_iters = 0usize;
    let mut fallback_used = false;
    let mut fallback_block = 0usize;
    let mut gamma_fb = gamma;
    let mut beta_hint = 0.0f64;
    let mut best_res = point.res;
    let mut since_progress = 0usize;

    let budget = opts.max_newton + opts.max_fallback;
    for _ in 0..budget {
        if point.res <= opts.newton_tol {
            break;
        }
        let mut stepped = false;

        if fallback_block == 0 && newton_iters < opts.max_newton {
            newton_iters += 1;
            if let Some(delta) = sub.newton_direction(&d, &point, opts.cg_tol, &mut beta_hint) {
                let mut alpha = 1.0;
                for _ in 0..opts.max_backtracks {
                    let mut trial: Vec<f64> =
                        d.iter().zip(&delta).map(|(&di, &de)| di + alpha * de).collect();
                    sub.project_ball(&mut trial);
                    let trial_merit = sub.merit(&trial)?;
                    let required =
                        merit - opts.armijo_sigma * alpha * point.res * point.res / gamma;
                    if trial_merit <= required {
                        d = trial;
                        merit = trial_merit;
                        stepped = true;
                        break;
                    }
                    // nonmonotone acceptance near stationary points with an
                    // indefinite generalized Hessian: a halved fixed-point
                    // residual is accepted as long as the overall descent
                    // bound against the step's starting energy is kept
                    if trial_merit <= merit_ref + 1e-12 * (1.0 + merit_ref.abs()) {
                        let g_trial = sub.grad_at(&trial)?;
                        let trial_point = sub.prox_point(&trial, &g_trial, gamma);
                        if trial_point.res <= 0.5 * point.res {
                            d = trial;
                            merit = trial_merit;
                            stepped = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
            }
        }

        if !stepped {
            // proximal-gradient step with backtracked curvature
            fallback_used = true;
            fallback_iters += 1;
            if fallback_iters > opts.max_fallback {
                break;
            }
            gamma_fb = (gamma_fb * 2.0).min(gamma);
            let mut done = false;
            for backtrack in 0..60 {
                let cand = sub.prox_point(&d, &g, gamma_fb);
                let diff: Vec<f64> = cand.p.iter().zip(&d).map(|(&a, &b)| a - b).collect();
                let step_sq = metric.norm_v(&diff).powi(2);
                let cand_merit = sub.merit(&cand.p)?;
                if cand_merit <= merit - opts.armijo_sigma / gamma_fb * step_sq {
                    d = cand.p;
                    merit = cand_merit;
                    done = true;
                    break;
                }
                // deep in the backtracking the merit differences sink below
                // rounding; fall back to measuring the fixed-point residual
                if backtrack >= 10
                    && cand_merit <= merit + 1e-14 * (1.0 + merit.abs())
                    && cand_merit <= merit_ref + 1e-12 * (1.0 + merit_ref.abs())
                {
                    let g_cand = sub.grad_at(&cand.p)?;
                    let cand_point = sub.prox_point(&cand.p, &g_cand, gamma);
                    if cand_point.res <= 0.7 * point.res {
                        d = cand.p;
                        merit = merit.min(cand_merit);
                        done = true;
                        break;
                    }
                }
                gamma_fb *= 0.5;
                if gamma_fb < 1e-18 {
                    break;
                }
            }
            if !done {
                if fallback_block > 0 && newton_iters < opts.max_newton {
                    // the fallback is exhausted in this arithmetic; unblock
                    // Newton for a final attempt before giving up
                    fallback_block = 0;
                    continue;
                }
                break;
            }
            fallback_block = fallback_block.saturating_sub(1);
        }

        g = sub.grad_at(&d)?;
        point = sub.prox_point(&d, &g, gamma);
        if point.res < 0.9 * best_res {
            best_res = point.res;
            since_progress = 0;
        } else {
            since_progress += 1;
            if since_progress >= opts.stagnation_window && fallback_block == 0 {
                // stagnation: hand the iteration to the globally convergent
                // fallback for a stretch before retrying Newton
                fallback_block = 25;
                since_progress = 0;
            }
        }
    }

    if point.res > opts.newton_tol {
        return Err(SolverError::MaxIterations {
            residual: point.res,
            target: opts.newton_tol,
        });
    }

    // adopt the prox output itself: it satisfies the ball constraint exactly
    let d_final = point.p.clone();
    let z_new: Vec<f64> = z_prev.iter().zip(&d_final).map(|(&a, &b)| a + b).collect();
    let norm_d = metric.norm_v(&d_final);
    let lambda = if norm_d < tau * (1.0 - 1e-10) || norm_d == 0.0 {
        0.0
    } else {
        let g_new = mdl.grad_energy(t_prev, &z_new)?;
        let neg: Vec<f64> = g_new.iter().map(|&x| -x).collect();
        tau * metric.dist_subdiff(&neg) / (norm_d * norm_d)
    };
    let kkt = kkt_residuals(mdl, t_prev, z_prev, &z_new, lambda, tau)?;

    let merit_final = mdl.energy(t_prev, &z_new)? + metric.dissipation(&d_final);
    let descent_ok = merit_final <= merit_ref + 1e-12 * (1.0 + merit_ref.abs());

    Ok(StationarityResult {
        z_new,
        lambda,
        newton_iters,
        fallback_iters,
        fallback_used,
        kkt_residuals: kkt,
        descent_ok,
        residual: point.res,
    })
}
