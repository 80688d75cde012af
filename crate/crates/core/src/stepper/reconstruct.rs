//! Recovery of the chemical potentials after a minimizing-movement step.
//!
//! The mean-free parts come from Poisson problems driven by the discrete
//! time derivative. The two constants follow from testing the potential
//! equation with a nonnegative interior function `η₂` and with `𝟙`:
//!
//! ```text
//! c   = [ε φᵀKη₂ + ε⁻¹ fᵀη₂ − μ̊ᵀMη₂] / 𝟙ᵀMη₂
//! c_Γ = [ε⁻¹ 𝟙ᵀf + ε⁻¹ 𝟙ᵀg − c|Ω|] / |Γ|
//! ```
//!
//! where `f_i = ∫_Ω F'(φ)ψ_i` and `g_k = ∫_Γ G'(φ)ψ_k` are the potential
//! loads used by the energy gradient.

use crate::energy::{potential_forces, Linearization, ModelParams};
use crate::fem::FemOperators;
use crate::sparse::dot;

use super::StepError;

/// Mean-free chemical potentials and their constants.
#[derive(Debug, Clone, PartialEq)]
pub struct MuRing {
    pub mu_ring: Vec<f64>,
    /// Absent without a surface equation.
    pub mu_gamma_ring: Option<Vec<f64>>,
    pub c: f64,
    /// Zero without a surface equation.
    pub c_gamma: f64,
}

impl MuRing {
    pub fn mu(&self) -> Vec<f64> {
        self.mu_ring.iter().map(|v| v + self.c).collect()
    }

    pub fn mu_gamma(&self) -> Option<Vec<f64>> {
        self.mu_gamma_ring.as_ref().map(|m| m.iter().map(|v| v + self.c_gamma).collect())
    }
}

/// Nodal vector of the sum of all interior hat functions.
pub fn interior_indicator(ops: &FemOperators) -> Vec<f64> {
    let mut eta = vec![1.0; ops.num_nodes()];
    for &v in &ops.trace {
        eta[v] = 0.0;
    }
    eta
}

/// Reconstructs `(μ, μ_Γ)` with `η₂` the interior indicator.
pub fn reconstruct_potentials(
    ops: &FemOperators,
    params: &ModelParams,
    phi_next: &[f64],
    phi_prev: &[f64],
) -> Result<MuRing, StepError> {
    reconstruct_with_test_function(ops, params, phi_next, phi_prev, &interior_indicator(ops))
}

/// As [`reconstruct_potentials`] with a caller-supplied `η₂`, which must be
/// nonnegative, vanish on Γ, and have positive integral.
pub fn reconstruct_with_test_function(
    ops: &FemOperators,
    params: &ModelParams,
    phi_next: &[f64],
    phi_prev: &[f64],
    eta: &[f64],
) -> Result<MuRing, StepError> {
    let n = ops.num_nodes();
    if phi_next.len() != n || phi_prev.len() != n || eta.len() != n {
        return Err(StepError::InvalidState);
    }
    if eta.iter().any(|&e| !(e >= 0.0)) {
        return Err(StepError::TestFunction("negative or non-finite values"));
    }
    if ops.trace.iter().any(|&v| eta[v] != 0.0) {
        return Err(StepError::TestFunction("nonzero on the boundary"));
    }
    let m_eta = ops.m_bulk.mul_vec(eta);
    let eta_mass: f64 = m_eta.iter().sum();
    if !(eta_mass > 0.0) {
        return Err(StepError::TestFunction("zero integral; the mesh needs an interior vertex"));
    }

    let eps = params.epsilon;
    let scale = 1.0 + phi_next.iter().chain(phi_prev).fold(0.0f64, |m, v| m.max(v.abs()));
    let rate: Vec<f64> = phi_next.iter().zip(phi_prev).map(|(a, b)| -(a - b) / params.tau).collect();
    let drift = ops.bulk_mean(&rate) * params.tau;
    if drift.abs() > 1e-10 * scale {
        return Err(StepError::MeanViolation { which: "bulk", drift });
    }
    let mu_ring = ops.neumann_unchecked(&rate)?;

    let mu_gamma_ring = if params.has_surface() {
        let rate_b = ops.restrict(&rate);
        let drift = ops.surf_mean(&rate_b) * params.tau;
        if drift.abs() > 1e-10 * scale {
            return Err(StepError::MeanViolation { which: "surface", drift });
        }
        Some(ops.surface_unchecked(&rate_b)?)
    } else {
        None
    };

    let forces = potential_forces(ops, params, phi_next, Linearization::Full);
    let c = (eps * ops.k_bulk.bilinear(phi_next, eta) + dot(&forces.bulk, eta) / eps - dot(&mu_ring, &m_eta)) / eta_mass;

    let c_gamma = if params.has_surface() {
        let total: f64 = forces.bulk.iter().chain(&forces.surf).sum();
        (total / eps - c * ops.bulk_volume) / ops.surf_measure
    } else {
        0.0
    };

    Ok(MuRing { mu_ring, mu_gamma_ring, c, c_gamma })
}
