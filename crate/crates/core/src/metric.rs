//! Weighted diagonal geometry.
//!
//! All norms and the dissipation are induced by two weight vectors: `v_i > 0`
//! defines the state norm `‖x‖_V = (Σ v_i x_i²)^{1/2}` together with its dual
//! `‖w‖_{V⁻¹} = (Σ w_i²/v_i)^{1/2}`, and `ρ_i ≥ 0` defines the dissipation
//! `R(x) = Σ ρ_i |x_i|`. With both diagonal, the subdifferential `∂R(0)` is
//! the box `Π_i [−ρ_i, ρ_i]`, so the distance of a covector to it and the
//! proximal map of `R` plus a `V`-ball indicator have closed forms.

/// Diagonal state metric and dissipation weights over `n` degrees of freedom.
///
/// For the scalar test model this is `v = ρ = (1)`; for the lumped
/// finite-element model both weight vectors equal the lumped nodal masses, so
/// `‖·‖_V` approximates the L²-norm and `R` the L¹-norm.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalMetric {
    v: Vec<f64>,
    rho: Vec<f64>,
}

impl DiagonalMetric {
    /// Builds a metric from state weights `v` and dissipation weights `rho`.
    ///
    /// Requires `v_i > 0`, `rho_i ≥ 0` and equal lengths `≥ 1`.
    pub fn new(v: Vec<f64>, rho: Vec<f64>) -> Self {
        assert!(!v.is_empty(), "metric needs at least one degree of freedom");
        assert_eq!(v.len(), rho.len(), "v and rho weight lengths differ");
        assert!(
            v.iter().all(|&w| w > 0.0 && w.is_finite()),
            "state weights must be positive and finite"
        );
        assert!(
            rho.iter().all(|&r| r >= 0.0 && r.is_finite()),
            "dissipation weights must be nonnegative and finite"
        );
        Self { v, rho }
    }

    /// Metric with `v_i = rho_i = w_i`, the lumped-mass case.
    pub fn from_lumped_weights(w: Vec<f64>) -> Self {
        Self::new(w.clone(), w)
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn v_weights(&self) -> &[f64] {
        &self.v
    }

    pub fn rho_weights(&self) -> &[f64] {
        &self.rho
    }

    /// `⟨Vx, y⟩ = Σ v_i x_i y_i`.
    pub fn inner_v(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "dimension mismatch");
        assert_eq!(y.len(), self.dim(), "dimension mismatch");
        self.v
            .iter()
            .zip(x.iter().zip(y))
            .map(|(&v, (&xi, &yi))| v * xi * yi)
            .sum()
    }

    /// State norm `‖x‖_V = sqrt(Σ v_i x_i²)`.
    pub fn norm_v(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "dimension mismatch");
        self.v
            .iter()
            .zip(x)
            .map(|(&v, &xi)| v * xi * xi)
            .sum::<f64>()
            .sqrt()
    }

    /// Dual norm `‖w‖_{V⁻¹} = sqrt(Σ w_i²/v_i)` for covectors in nodal form.
    pub fn norm_vinv(&self, w: &[f64]) -> f64 {
        assert_eq!(w.len(), self.dim(), "dimension mismatch");
        self.v
            .iter()
            .zip(w)
            .map(|(&v, &wi)| wi * wi / v)
            .sum::<f64>()
            .sqrt()
    }

    /// Dissipation `R(x) = Σ ρ_i |x_i|`, positively 1-homogeneous.
    pub fn dissipation(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "dimension mismatch");
        self.rho.iter().zip(x).map(|(&r, &xi)| r * xi.abs()).sum()
    }

    /// `V⁻¹`-distance of a covector `eta` to the box `∂R(0) = Π [−ρ_i, ρ_i]`:
    /// `sqrt(Σ max(|η_i| − ρ_i, 0)² / v_i)`.
    ///
    /// The value is zero exactly when `|η_i| ≤ ρ_i` for all `i`, i.e. when
    /// `−eta` describes a locally stable load. The infimum in the underlying
    /// definition is always attained here (componentwise clamping onto the
    /// box), so the `inf ∅ = ∞` convention of the general setting never
    /// occurs for this diagonal representation.
    pub fn dist_subdiff(&self, eta: &[f64]) -> f64 {
        assert_eq!(eta.len(), self.dim(), "dimension mismatch");
        self.v
            .iter()
            .zip(self.rho.iter().zip(eta))
            .map(|(&v, (&r, &e))| {
                let excess = (e.abs() - r).max(0.0);
                excess * excess / v
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Proximal map of `R` plus the indicator of the `V`-ball of radius `tau`:
    /// the minimizer of `½‖y − d‖_V² + R(y)` over `‖y‖_V ≤ tau`.
    ///
    /// Componentwise soft-thresholding by `ρ_i/v_i` followed by radial
    /// rescaling onto the ball. The composition is exact because the
    /// constrained stationarity system forces the solution to be a radial
    /// rescaling of the unconstrained soft-threshold point.
    pub fn prox_r_ball(&self, d: &[f64], tau: f64) -> Vec<f64> {
        self.prox_r_ball_scaled(d, tau, 1.0)
    }

    /// Proximal map of `gamma·R` plus the `V`-ball indicator, i.e. the
    /// minimizer of `½‖y − d‖_V² + gamma·R(y)` over `‖y‖_V ≤ tau`. The ball
    /// radius is not affected by `gamma`.
    pub fn prox_r_ball_scaled(&self, d: &[f64], tau: f64, gamma: f64) -> Vec<f64> {
        assert_eq!(d.len(), self.dim(), "dimension mismatch");
        assert!(tau > 0.0, "ball radius must be positive");
        assert!(gamma > 0.0, "prox scaling must be positive");
        let mut y: Vec<f64> = self
            .v
            .iter()
            .zip(self.rho.iter().zip(d))
            .map(|(&v, (&r, &di))| {
                let shrink = (di.abs() - gamma * r / v).max(0.0);
                di.signum() * shrink
            })
            .collect();
        let norm = self.norm_v(&y);
        if norm > tau {
            let scale = tau / norm;
            for yi in &mut y {
                *yi *= scale;
            }
        }
        y
    }

    /// Largest-magnitude componentwise violation of `|η_i| ≤ ρ_i`; zero for
    /// covectors inside `∂R(0)`. Used for the sign-pattern form of the
    /// stationarity certificate, where the box membership of a covector must
    /// be reported as a scalar defect.
    pub fn box_violation(&self, eta: &[f64]) -> f64 {
        assert_eq!(eta.len(), self.dim(), "dimension mismatch");
        self.rho
            .iter()
            .zip(eta)
            .map(|(&r, &e)| (e.abs() - r).max(0.0))
            .fold(0.0, f64::max)
    }
}
