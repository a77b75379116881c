//! Adaptive curve-parameter time stepping for rate-independent systems.
//!
//! The library solves evolutions of the form `0 ∈ ∂R(ż) + D_zI(t,z)` where the
//! dissipation `R` is convex and positively 1-homogeneous while the energy `I`
//! may be non-convex. Because such systems generally admit no time-continuous
//! solution, physical time `t` and state `z` are produced as functions of a
//! curve parameter `s`, with the step size for `s` chosen adaptively from two
//! per-step residua: one for the local-stability complementarity relation and
//! one for the energy-dissipation balance.
//!
//! The main entry points are:
//!
//! * [`scheme::adaptive_run`] — the adaptive driver producing a [`scheme::Trajectory`],
//! * [`scheme::nested_run`] — the variant whose `s`-grids are nested across a
//!   decreasing sequence of tolerances,
//! * [`verify::check_bv`] — certification of a trajectory against the
//!   parametrized balanced-viscosity solution conditions,
//! * [`model::make_model_1d`] / [`fem::make_model_fem`] — the two built-in
//!   problem instances (a scalar model with known closed-form solution, and a
//!   P1 finite-element discretization of a double-well PDE on the unit square).

pub mod fem;
pub mod metric;
pub mod model;
pub(crate) mod quad;
pub mod scheme;
pub mod stationarity;
pub mod verify;

pub use fem::{
    assemble_stiffness, build_mesh, lumped_mass, make_model_fem, solve_spd, CsrMatrix, FemModel,
    LinSolveError, StructuredMesh,
};
pub use metric::DiagonalMetric;
pub use model::{make_model_1d, EnergyModel, ModelError, OneDimModel};
pub use scheme::{
    adaptive_run, nested_run, residua, uniform_run, IterateRecord, Residua, SchemeError,
    SchemeOptions, Trajectory,
};
pub use stationarity::{
    kkt_residuals, solve_stationary, SolverError, SolverOptions, StationarityResult,
};
pub use verify::{
    check_bv, classify_regimes, reference_trajectory_1d, trajectory_error, ErrorNorm, Regime,
    RegimeSegment, VerificationReport,
};
