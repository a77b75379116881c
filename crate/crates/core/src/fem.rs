//! P1 finite elements on a structured triangulation of the unit square.
//!
//! The mesh is the uniform right-triangle pattern with all diagonals in one
//! direction, so the interior stiffness stencil is the exact 5-point stencil
//! (diagonal 4, axis neighbors −1, independent of the mesh width). Dirichlet
//! nodes are eliminated rather than penalized, which keeps the reduced metric
//! diagonal, and the mass matrix is lumped so that the discrete L¹- and
//! L²-norms are nodal-separable.

use crate::metric::DiagonalMetric;
use crate::model::{EnergyModel, ModelError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("mesh needs at least 3 nodes per side, got {0}")]
    MeshTooSmall(usize),
}

/// Failure of the conjugate-gradient solve.
#[derive(Debug, Error)]
pub enum LinSolveError {
    /// Negative curvature encountered; the operator is not positive definite.
    /// Callers treat this as a signal to switch to a regularized path.
    #[error("operator is indefinite (negative curvature at iteration {iter})")]
    Indefinite { iter: usize },
    #[error("conjugate gradients did not reach tolerance {tol} in {iters} iterations")]
    MaxIterations { tol: f64, iters: usize },
}

/// Uniform triangulation of the unit square.
#[derive(Clone, Debug)]
pub struct StructuredMesh {
    n_per_side: usize,
    coords: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    /// Global ids of interior nodes, in global order.
    interior: Vec<usize>,
}

impl StructuredMesh {
    pub fn n_per_side(&self) -> usize {
        self.n_per_side
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Mesh width `h = 1/(n_per_side − 1)`.
    pub fn h(&self) -> f64 {
        1.0 / (self.n_per_side - 1) as f64
    }
}

/// Builds the structured mesh with `n_per_side` nodes per side
/// (`n_per_side²` nodes, two triangles per cell).
pub fn build_mesh(n_per_side: usize) -> Result<StructuredMesh, FemError> {
    if n_per_side < 3 {
        return Err(FemError::MeshTooSmall(n_per_side));
    }
    let n = n_per_side;
    let h = 1.0 / (n - 1) as f64;
    let mut coords = Vec::with_capacity(n * n);
    let mut boundary = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            coords.push([i as f64 * h, j as f64 * h]);
            boundary.push(i == 0 || j == 0 || i == n - 1 || j == n - 1);
        }
    }
    let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let v00 = j * n + i;
            let v10 = v00 + 1;
            let v01 = v00 + n;
            let v11 = v01 + 1;
            // diagonal from v00 to v11, both triangles counterclockwise
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let interior = boundary
        .iter()
        .enumerate()
        .filter(|(_, &b)| !b)
        .map(|(i, _)| i)
        .collect();
    Ok(StructuredMesh {
        n_per_side,
        coords,
        triangles,
        boundary,
        interior,
    })
}

/// Symmetric sparse matrix in compressed sparse row form.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row ordered maps; entries are kept in column order.
    fn from_rows(rows: Vec<std::collections::BTreeMap<usize, f64>>) -> Self {
        let n = rows.len();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for row in rows {
            for (c, v) in row {
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n, "dimension mismatch");
        assert_eq!(out.len(), self.n, "dimension mismatch");
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for idx in self.row_offsets[r]..self.row_offsets[r + 1] {
                acc += self.values[idx] * x[self.col_indices[idx]];
            }
            *o = acc;
        }
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n, "dimension mismatch");
        let mut acc = 0.0;
        for r in 0..self.n {
            let mut row = 0.0;
            for idx in self.row_offsets[r]..self.row_offsets[r + 1] {
                row += self.values[idx] * x[self.col_indices[idx]];
            }
            acc += x[r] * row;
        }
        acc
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.n];
        for (r, d) in diag.iter_mut().enumerate() {
            for idx in self.row_offsets[r]..self.row_offsets[r + 1] {
                if self.col_indices[idx] == r {
                    *d = self.values[idx];
                }
            }
        }
        diag
    }

    /// Maximum absolute asymmetry `|A_ij − A_ji|` over the stored pattern.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for idx in self.row_offsets[r]..self.row_offsets[r + 1] {
                let c = self.col_indices[idx];
                let transposed = self.get(c, r);
                worst = worst.max((self.values[idx] - transposed).abs());
            }
        }
        worst
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        for idx in self.row_offsets[r]..self.row_offsets[r + 1] {
            if self.col_indices[idx] == c {
                return self.values[idx];
            }
        }
        0.0
    }
}

fn local_stiffness(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    let area2 = b[0] * c[1] - b[1] * c[0]; // 2·area for ccw orientation
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (b[i] * b[j] + c[i] * c[j]) / (2.0 * area2);
        }
    }
    k
}

fn triangle_area(p: [[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
        - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

/// P1 stiffness matrix over all mesh nodes, without boundary elimination.
pub fn assemble_stiffness_full(mesh: &StructuredMesh) -> CsrMatrix {
    assemble(mesh, Some, mesh.node_count())
}

/// P1 stiffness matrix restricted to interior nodes (Dirichlet elimination).
///
/// On the structured mesh every fully interior row carries the 5-point
/// stencil: 4 on the diagonal, −1 towards the four axis neighbors.
pub fn assemble_stiffness(mesh: &StructuredMesh) -> CsrMatrix {
    let mut to_interior = vec![None; mesh.node_count()];
    for (ii, &node) in mesh.interior.iter().enumerate() {
        to_interior[node] = Some(ii);
    }
    assemble(mesh, |node| to_interior[node], mesh.interior_count())
}

fn assemble(
    mesh: &StructuredMesh,
    index_of: impl Fn(usize) -> Option<usize>,
    n: usize,
) -> CsrMatrix {
    let mut rows = vec![std::collections::BTreeMap::new(); n];
    for tri in &mesh.triangles {
        let p = [
            mesh.coords[tri[0]],
            mesh.coords[tri[1]],
            mesh.coords[tri[2]],
        ];
        let k_local = local_stiffness(p);
        for (a, &na) in tri.iter().enumerate() {
            let Some(ra) = index_of(na) else { continue };
            for (b, &nb) in tri.iter().enumerate() {
                let Some(cb) = index_of(nb) else { continue };
                if k_local[a][b] != 0.0 {
                    *rows[ra].entry(cb).or_insert(0.0) += k_local[a][b];
                }
            }
        }
    }
    CsrMatrix::from_rows(rows)
}

/// Lumped nodal masses over all nodes: `m_i = (1/3) Σ` areas of triangles
/// containing node `i`. They sum to the domain area.
pub fn lumped_mass_all(mesh: &StructuredMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.node_count()];
    for tri in &mesh.triangles {
        let area = triangle_area([
            mesh.coords[tri[0]],
            mesh.coords[tri[1]],
            mesh.coords[tri[2]],
        ]);
        for &node in tri {
            m[node] += area / 3.0;
        }
    }
    m
}

/// Diagonal metric over interior nodes with `v_i = ρ_i = m_i` (lumped mass),
/// so that `‖·‖_V` approximates the L²-norm and the dissipation the L¹-norm.
pub fn lumped_mass(mesh: &StructuredMesh) -> DiagonalMetric {
    let all = lumped_mass_all(mesh);
    let interior: Vec<f64> = mesh.interior.iter().map(|&i| all[i]).collect();
    DiagonalMetric::from_lumped_weights(interior)
}

/// Solves `(op + diag(shift))·x = rhs` for a symmetric positive definite
/// operator by Jacobi-preconditioned conjugate gradients, to a relative
/// residual of `tol`.
pub fn solve_spd(
    op: &CsrMatrix,
    shift: Option<&[f64]>,
    rhs: &[f64],
    tol: f64,
) -> Result<Vec<f64>, LinSolveError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = op.dim();
    assert_eq!(rhs.len(), n, "dimension mismatch");
    let mut diag = op.diagonal();
    if let Some(s) = shift {
        assert_eq!(s.len(), n, "dimension mismatch");
        for (d, &si) in diag.iter_mut().zip(s) {
            *d += si;
        }
    }
    let mut buf = vec![0.0; n];
    cg(
        |x, out| {
            op.matvec(x, &mut buf);
            out.copy_from_slice(&buf);
            if let Some(s) = shift {
                for i in 0..n {
                    out[i] += s[i] * x[i];
                }
            }
        },
        rhs,
        tol,
        10 * n + 100,
        Some(&diag),
    )
}

/// MINRES on a caller-supplied symmetric (possibly indefinite) operator,
/// with an SPD diagonal preconditioner. Convergence is measured in the
/// preconditioned residual norm.
pub(crate) fn minres<F>(
    mut apply: F,
    rhs: &[f64],
    rel_tol: f64,
    max_iter: usize,
    precond_diag: Option<&[f64]>,
) -> Result<Vec<f64>, LinSolveError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let inv_diag: Vec<f64> = match precond_diag {
        Some(d) => d
            .iter()
            .map(|&di| if di.abs() > 0.0 { 1.0 / di.abs() } else { 1.0 })
            .collect(),
        None => vec![1.0; n],
    };
    let mut x = vec![0.0; n];
    let mut r1 = rhs.to_vec();
    let mut y: Vec<f64> = r1.iter().zip(&inv_diag).map(|(&r, &m)| r * m).collect();
    let beta1_sq: f64 = r1.iter().zip(&y).map(|(&a, &b)| a * b).sum();
    if beta1_sq <= 0.0 {
        return Ok(x);
    }
    let beta1 = beta1_sq.sqrt();
    let (mut oldb, mut beta) = (0.0f64, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0f64, 0.0f64, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut r2 = r1.clone();
    let mut v = vec![0.0; n];
    let mut av = vec![0.0; n];
    for _itn in 0..max_iter {
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = y[i] * s;
        }
        apply(&v, &mut av);
        if oldb > 0.0 {
            let c = beta / oldb;
            for i in 0..n {
                av[i] -= c * r1[i];
            }
        }
        let alfa: f64 = v.iter().zip(&av).map(|(&a, &b)| a * b).sum();
        let c = alfa / beta;
        for i in 0..n {
            av[i] -= c * r2[i];
        }
        r1.copy_from_slice(&r2);
        r2.copy_from_slice(&av);
        for i in 0..n {
            y[i] = r2[i] * inv_diag[i];
        }
        oldb = beta;
        let beta_sq: f64 = r2.iter().zip(&y).map(|(&a, &b)| a * b).sum();
        if beta_sq < 0.0 {
            return Err(LinSolveError::Indefinite { iter: _itn });
        }
        beta = beta_sq.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        for i in 0..n {
            let w1_i = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1_i - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        if phibar <= rel_tol * beta1 {
            return Ok(x);
        }
    }
    Err(LinSolveError::MaxIterations {
        tol: rel_tol,
        iters: max_iter,
    })
}

/// Conjugate gradients on a caller-supplied symmetric operator. Reports
/// negative curvature instead of silently returning a bad direction.
pub(crate) fn cg<F>(
    mut apply: F,
    rhs: &[f64],
    rel_tol: f64,
    max_iter: usize,
    precond_diag: Option<&[f64]>,
) -> Result<Vec<f64>, LinSolveError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let rhs_norm = rhs.iter().map(|&b| b * b).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok(x);
    }
    let target = rel_tol * rhs_norm;
    let inv_diag: Vec<f64> = match precond_diag {
        Some(d) => d
            .iter()
            .map(|&di| if di > 0.0 { 1.0 / di } else { 1.0 })
            .collect(),
        None => vec![1.0; n],
    };
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(&ri, &mi)| ri * mi).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(&ri, &zi)| ri * zi).sum();
    for iter in 0..max_iter {
        let rnorm = r.iter().map(|&ri| ri * ri).sum::<f64>().sqrt();
        if rnorm <= target {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(&pi, &api)| pi * api).sum();
        if pap <= 0.0 {
            return Err(LinSolveError::Indefinite { iter });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(&ri, &zi)| ri * zi).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = r.iter().map(|&ri| ri * ri).sum::<f64>().sqrt();
    if rnorm <= target {
        Ok(x)
    } else {
        Err(LinSolveError::MaxIterations {
            tol: rel_tol,
            iters: max_iter,
        })
    }
}

/// Discrete double-well PDE model on the unit square: `A` is the Dirichlet
/// Laplacian, `F(z) = Σ m_i g(z_i)` with `g(z) = 48(1−z²)²` evaluated
/// nodally, and the load couples through `f(t,z) = −200 t³ Σ m_i z_i`.
/// Horizon `T = 1`, initial state zero, state vector over interior nodes.
#[derive(Clone, Debug)]
pub struct FemModel {
    stiffness: CsrMatrix,
    metric: DiagonalMetric,
    n_per_side: usize,
}

const LOAD_SCALE: f64 = 200.0;

fn g_val(z: f64) -> f64 {
    let w = 1.0 - z * z;
    48.0 * w * w
}

fn g_prime(z: f64) -> f64 {
    -192.0 * z * (1.0 - z * z)
}

fn g_second(z: f64) -> f64 {
    -192.0 + 576.0 * z * z
}

/// Builds the discrete double-well model on the given mesh.
pub fn make_model_fem(mesh: &StructuredMesh) -> FemModel {
    FemModel {
        stiffness: assemble_stiffness(mesh),
        metric: lumped_mass(mesh),
        n_per_side: mesh.n_per_side(),
    }
}

impl FemModel {
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    fn load_factor(t: f64) -> f64 {
        LOAD_SCALE * t * t * t
    }
}

impl EnergyModel for FemModel {
    fn dim(&self) -> usize {
        self.metric.dim()
    }

    fn metric(&self) -> &DiagonalMetric {
        &self.metric
    }

    fn horizon(&self) -> f64 {
        1.0
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn id(&self) -> String {
        format!("fem2d_n{}", self.n_per_side)
    }

    fn energy(&self, t: f64, z: &[f64]) -> Result<f64, ModelError> {
        let quad = 0.5 * self.stiffness.quadratic_form(z);
        let masses = self.metric.v_weights();
        let mut well = 0.0;
        let mut load = 0.0;
        for (&m, &zi) in masses.iter().zip(z) {
            well += m * g_val(zi);
            load += m * zi;
        }
        let val = quad + well + Self::load_factor(t) * load;
        if val.is_finite() {
            Ok(val)
        } else {
            Err(ModelError::NonFinite {
                what: "energy value",
                model: "fem2d",
                t,
            })
        }
    }

    fn grad_energy(&self, t: f64, z: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![0.0; self.dim()];
        self.stiffness.matvec(z, &mut out);
        let load = Self::load_factor(t);
        for ((o, &m), &zi) in out.iter_mut().zip(self.metric.v_weights()).zip(z) {
            *o += m * (g_prime(zi) + load);
        }
        if out.iter().all(|&g| g.is_finite()) {
            Ok(out)
        } else {
            Err(ModelError::NonFinite {
                what: "energy gradient",
                model: "fem2d",
                t,
            })
        }
    }

    fn hess_apply(&self, _t: f64, z: &[f64], v: &[f64], out: &mut [f64]) {
        self.stiffness.matvec(v, out);
        for ((o, &m), (&zi, &vi)) in out
            .iter_mut()
            .zip(self.metric.v_weights())
            .zip(z.iter().zip(v))
        {
            *o += m * g_second(zi) * vi;
        }
    }

    fn hess_diag(&self, _t: f64, z: &[f64], out: &mut [f64]) {
        let diag = self.stiffness.diagonal();
        for ((o, &d), (&m, &zi)) in out
            .iter_mut()
            .zip(&diag)
            .zip(self.metric.v_weights().iter().zip(z))
        {
            *o = d + m * g_second(zi);
        }
    }

    fn dt_energy(&self, t: f64, z: &[f64]) -> Result<f64, ModelError> {
        let weighted: f64 = self
            .metric
            .v_weights()
            .iter()
            .zip(z)
            .map(|(&m, &zi)| m * zi)
            .sum();
        let val = 3.0 * LOAD_SCALE * t * t * weighted;
        if val.is_finite() {
            Ok(val)
        } else {
            Err(ModelError::NonFinite {
                what: "energy time derivative",
                model: "fem2d",
                t,
            })
        }
    }
}
