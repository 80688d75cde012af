//! P1 finite elements on the domain and on its boundary curve.
//!
//! Bulk matrices come from linear triangles; surface matrices come from
//! linear elements on the boundary polyline, where the tangential gradient is
//! the arc-length derivative along each edge. Surface quantities are indexed
//! by boundary-loop position, and `trace[k]` maps position `k` back to the
//! global vertex index.
//!
//! The inverse Laplacians act on mean-free data and return mean-free
//! solutions. The mean constraint is imposed with one Lagrange multiplier:
//!
//! ```text
//! [ K    M𝟙 ] [u]   [M f]
//! [ 𝟙ᵀM  0  ] [λ] = [ 0 ]
//! ```
//!
//! Both saddle matrices are factored once at assembly.

use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::TriMesh;
use crate::sparse::{dot, norm_inf, CsrMatrix, LinearSolveError, SparseLu, TripletBuilder};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("degenerate triangle {index} (signed area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },
    #[error("field has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("{which} mean of the data is {mean:e}, expected zero")]
    NonZeroMean { which: &'static str, mean: f64 },
    #[error(transparent)]
    Solver(#[from] LinearSolveError),
}

/// Choice of mass matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassKind {
    #[default]
    Consistent,
    /// Row-sum lumping of the consistent matrix.
    Lumped,
}

/// Generalized averages `(⟨φ⟩_Ω, ⟨φ⟩_Γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanPair {
    pub m1: f64,
    pub m2: f64,
}

#[derive(Debug)]
pub struct FemOperators {
    pub m_bulk: CsrMatrix,
    pub k_bulk: CsrMatrix,
    pub m_surf: CsrMatrix,
    pub k_surf: CsrMatrix,
    /// Boundary position → global vertex index.
    pub trace: Vec<usize>,
    pub bulk_volume: f64,
    pub surf_measure: f64,
    /// `m_bulk · 𝟙`: nodal quadrature weights for nonlinear bulk terms.
    pub bulk_weights: Vec<f64>,
    /// `m_surf · 𝟙`.
    pub surf_weights: Vec<f64>,
    pub mass_kind: MassKind,
    /// Element connectivity and areas, kept for quadrature of nonlinear terms.
    pub triangles: Vec<[usize; 3]>,
    pub areas: Vec<f64>,
    /// Length of boundary edge `k`, joining loop positions `k` and `k + 1`.
    pub edge_lengths: Vec<f64>,
    neumann: SparseLu,
    surface: SparseLu,
}

/// Local stiffness matrix of a linear triangle.
pub fn local_stiffness(p: [[f64; 2]; 3]) -> Result<[[f64; 3]; 3], f64> {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    if !(area > 0.0) {
        return Err(area);
    }
    // Edge opposite vertex i.
    let e: [[f64; 2]; 3] = std::array::from_fn(|i| {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        [b[0] - a[0], b[1] - a[1]]
    });
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (e[i][0] * e[j][0] + e[i][1] * e[j][1]) / (4.0 * area);
        }
    }
    Ok(k)
}

pub fn local_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

pub fn assemble(mesh: &TriMesh) -> Result<FemOperators, FemError> {
    assemble_with(mesh, MassKind::Consistent)
}

pub fn assemble_with(mesh: &TriMesh, mass_kind: MassKind) -> Result<FemOperators, FemError> {
    let n = mesh.num_vertices();
    let nb = mesh.num_boundary();

    let locals: Vec<Result<([[f64; 3]; 3], f64), FemError>> = mesh
        .triangles
        .par_iter()
        .enumerate()
        .map(|(t, tri)| {
            let p = tri.map(|v| mesh.vertices[v]);
            let area = mesh.signed_area(t);
            local_stiffness(p)
                .map(|k| (k, area))
                .map_err(|area| FemError::DegenerateTriangle { index: t, area })
        })
        .collect();

    let mut areas = Vec::with_capacity(mesh.triangles.len());
    let mut stiff = Vec::with_capacity(9 * mesh.triangles.len());
    let mut mass = Vec::with_capacity(9 * mesh.triangles.len());
    for (tri, local) in mesh.triangles.iter().zip(locals) {
        let (k, area) = local?;
        areas.push(area);
        let m = local_mass(area);
        for i in 0..3 {
            for j in 0..3 {
                stiff.push((tri[i], tri[j], k[i][j]));
                mass.push((tri[i], tri[j], m[i][j]));
            }
        }
    }
    let k_bulk = CsrMatrix::from_triplets(n, n, &stiff);
    let mut m_bulk = CsrMatrix::from_triplets(n, n, &mass);

    let mut edge_lengths = Vec::with_capacity(nb);
    let mut s_stiff = Vec::with_capacity(4 * nb);
    let mut s_mass = Vec::with_capacity(4 * nb);
    for k in 0..nb {
        let (a, b) = (k, (k + 1) % nb);
        let [va, vb] = mesh.boundary_edges[k];
        let (pa, pb) = (mesh.vertices[va], mesh.vertices[vb]);
        let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
        edge_lengths.push(len);
        for (i, j, mij, kij) in [
            (a, a, len / 3.0, 1.0 / len),
            (a, b, len / 6.0, -1.0 / len),
            (b, a, len / 6.0, -1.0 / len),
            (b, b, len / 3.0, 1.0 / len),
        ] {
            s_mass.push((i, j, mij));
            s_stiff.push((i, j, kij));
        }
    }
    let k_surf = CsrMatrix::from_triplets(nb, nb, &s_stiff);
    let mut m_surf = CsrMatrix::from_triplets(nb, nb, &s_mass);

    if mass_kind == MassKind::Lumped {
        m_bulk = CsrMatrix::diagonal(&m_bulk.row_sums());
        m_surf = CsrMatrix::diagonal(&m_surf.row_sums());
    }

    let bulk_weights = m_bulk.row_sums();
    let surf_weights = m_surf.row_sums();
    let bulk_volume = bulk_weights.iter().sum();
    let surf_measure = surf_weights.iter().sum();

    let neumann = SparseLu::factor(mean_constrained(&k_bulk, &bulk_weights))?;
    let surface = SparseLu::factor(mean_constrained(&k_surf, &surf_weights))?;

    Ok(FemOperators {
        m_bulk,
        k_bulk,
        m_surf,
        k_surf,
        trace: mesh.boundary_loop.clone(),
        bulk_volume,
        surf_measure,
        bulk_weights,
        surf_weights,
        mass_kind,
        triangles: mesh.triangles.clone(),
        areas,
        edge_lengths,
        neumann,
        surface,
    })
}

/// `[[K, w], [wᵀ, 0]]` with `w = M𝟙`.
fn mean_constrained(k: &CsrMatrix, weights: &[f64]) -> CsrMatrix {
    let n = k.nrows();
    let mut b = TripletBuilder::new();
    b.add_block(k, 0, 0, 1.0);
    for (i, &w) in weights.iter().enumerate() {
        b.push(i, n, w);
        b.push(n, i, w);
    }
    b.build(n + 1)
}

impl FemOperators {
    pub fn num_nodes(&self) -> usize {
        self.k_bulk.nrows()
    }

    pub fn num_boundary(&self) -> usize {
        self.trace.len()
    }

    pub fn restrict(&self, field: &[f64]) -> Vec<f64> {
        self.trace.iter().map(|&v| field[v]).collect()
    }

    /// Adds `Tᵀ b` into a vertex vector.
    pub fn extend_add(&self, target: &mut [f64], boundary: &[f64]) {
        for (&v, &b) in self.trace.iter().zip(boundary) {
            target[v] += b;
        }
    }

    pub fn bulk_integral(&self, phi: &[f64]) -> f64 {
        dot(&self.bulk_weights, phi)
    }

    pub fn surf_integral(&self, phi_b: &[f64]) -> f64 {
        dot(&self.surf_weights, phi_b)
    }

    pub fn bulk_mean(&self, phi: &[f64]) -> f64 {
        self.bulk_integral(phi) / self.bulk_volume
    }

    pub fn surf_mean(&self, phi_b: &[f64]) -> f64 {
        self.surf_integral(phi_b) / self.surf_measure
    }

    pub fn mean_pair(&self, phi: &[f64]) -> Result<MeanPair, FemError> {
        self.check_len(phi, self.num_nodes())?;
        Ok(MeanPair { m1: self.bulk_mean(phi), m2: self.surf_mean(&self.restrict(phi)) })
    }

    /// `(−Δ)⁻¹ f` with homogeneous Neumann conditions; `f` must be mean-free.
    pub fn solve_neumann_poisson(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        self.check_len(rhs, self.num_nodes())?;
        check_mean("bulk", self.bulk_mean(rhs), rhs)?;
        self.neumann_unchecked(rhs)
    }

    /// `(−Δ_Γ)⁻¹ f` on the boundary loop; `f` must be mean-free on Γ.
    pub fn solve_surface_poisson(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        self.check_len(rhs, self.num_boundary())?;
        check_mean("surface", self.surf_mean(rhs), rhs)?;
        self.surface_unchecked(rhs)
    }

    /// Constrained solve for any load; the multiplier absorbs a nonzero
    /// mean, and the result is mean-free.
    pub fn neumann_unchecked(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        solve_constrained(&self.neumann, &self.m_bulk, rhs)
    }

    /// Surface counterpart of [`Self::neumann_unchecked`].
    pub fn surface_unchecked(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        solve_constrained(&self.surface, &self.m_surf, rhs)
    }

    /// Bulk part `∫ ∇(−Δ)⁻¹a · ∇(−Δ)⁻¹b` of the dual inner product.
    pub fn bulk_dual_inner(&self, a: &[f64], b: &[f64]) -> Result<f64, FemError> {
        let ua = self.solve_neumann_poisson(a)?;
        let ub = if std::ptr::eq(a, b) { ua.clone() } else { self.solve_neumann_poisson(b)? };
        Ok(self.k_bulk.bilinear(&ua, &ub))
    }

    /// Surface part `∫_Γ ∇_Γ(−Δ_Γ)⁻¹a · ∇_Γ(−Δ_Γ)⁻¹b` for vertex fields.
    pub fn surf_dual_inner(&self, a: &[f64], b: &[f64]) -> Result<f64, FemError> {
        let va = self.solve_surface_poisson(&self.restrict(a))?;
        let vb = if std::ptr::eq(a, b) { va.clone() } else { self.solve_surface_poisson(&self.restrict(b))? };
        Ok(self.k_surf.bilinear(&va, &vb))
    }

    /// Inner product on mean-free pairs coupling bulk and surface.
    pub fn vkstar_inner(&self, a: &[f64], b: &[f64]) -> Result<f64, FemError> {
        self.check_len(a, self.num_nodes())?;
        self.check_len(b, self.num_nodes())?;
        Ok(self.bulk_dual_inner(a, b)? + self.surf_dual_inner(a, b)?)
    }

    pub fn vkstar_norm_sq(&self, a: &[f64]) -> Result<f64, FemError> {
        self.vkstar_inner(a, a).map(|v| v.max(0.0))
    }

    /// Dual norm for data with a nonzero bulk mean:
    /// `‖∇(−Δ)⁻¹(φ − ⟨φ⟩_Ω)‖² + ⟨φ⟩_Ω²`.
    pub fn bulk_dual_norm_sq(&self, phi: &[f64]) -> Result<f64, FemError> {
        self.check_len(phi, self.num_nodes())?;
        let mean = self.bulk_mean(phi);
        let centered: Vec<f64> = phi.iter().map(|v| v - mean).collect();
        Ok(self.bulk_dual_inner(&centered, &centered)?.max(0.0) + mean * mean)
    }

    /// Surface counterpart of [`Self::bulk_dual_norm_sq`] for a boundary field.
    pub fn surf_dual_norm_sq(&self, phi_b: &[f64]) -> Result<f64, FemError> {
        self.check_len(phi_b, self.num_boundary())?;
        let mean = self.surf_mean(phi_b);
        let centered: Vec<f64> = phi_b.iter().map(|v| v - mean).collect();
        let v = self.solve_surface_poisson(&centered)?;
        Ok(self.k_surf.bilinear(&v, &v).max(0.0) + mean * mean)
    }

    fn check_len(&self, field: &[f64], expected: usize) -> Result<(), FemError> {
        if field.len() != expected {
            return Err(FemError::LengthMismatch { got: field.len(), expected });
        }
        Ok(())
    }
}

fn check_mean(which: &'static str, mean: f64, rhs: &[f64]) -> Result<(), FemError> {
    if mean.abs() > 1e-10 * norm_inf(rhs) {
        return Err(FemError::NonZeroMean { which, mean });
    }
    Ok(())
}

fn solve_constrained(lu: &SparseLu, mass: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
    let n = rhs.len();
    if norm_inf(rhs) == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut load = mass.mul_vec(rhs);
    load.push(0.0);
    let mut sol = lu.solve(&load)?;
    sol.truncate(n);
    Ok(sol)
}
