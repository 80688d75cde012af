//! Free energy, its gradient, and the per-step conservation/dissipation ledger.
//!
//! Potential terms are integrated with element quadrature of the P1 field
//! (exact for quartic potentials). The gradient returned by
//! [`energy_gradient`] is the exact derivative of this discrete energy.

use thiserror::Error;

use crate::fem::{FemError, FemOperators};
use crate::potentials::{Jet, PotentialSplit};
use crate::quadrature::{bulk_curvature, bulk_load, surf_curvature, surf_load};
use crate::sparse::{dot, TripletBuilder};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("kappa must be nonnegative, got {0}")]
    Kappa(f64),
    #[error("tau must be positive, got {0}")]
    Tau(f64),
    #[error("t_end = {t_end} must be at least tau = {tau}")]
    Horizon { t_end: f64, tau: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("need at least two snapshots, got {0}")]
    TooFewSnapshots(usize),
    #[error(transparent)]
    Fem(#[from] FemError),
}

/// Which boundary conditions the chemical potential obeys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelKind {
    /// Surface Cahn–Hilliard dynamics on Γ with its own potential `μ_Γ`.
    #[default]
    LiuWu,
    /// Homogeneous Neumann conditions for `φ` and `μ`; no surface energy.
    NeumannClassic,
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub epsilon: f64,
    pub kappa: f64,
    pub pot_bulk: PotentialSplit,
    pub pot_surf: PotentialSplit,
    pub tau: f64,
    pub t_end: f64,
    pub model: ModelKind,
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(ParamError::Epsilon(self.epsilon));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(ParamError::Kappa(self.kappa));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(ParamError::Tau(self.tau));
        }
        if !(self.t_end >= self.tau * (1.0 - 1e-12)) || !self.t_end.is_finite() {
            return Err(ParamError::Horizon { t_end: self.t_end, tau: self.tau });
        }
        Ok(())
    }

    pub fn has_surface(&self) -> bool {
        self.model == ModelKind::LiuWu
    }

    /// Number of steps of size `tau` needed to reach `t_end`.
    pub fn num_steps(&self) -> usize {
        let ratio = self.t_end / self.tau;
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
            rounded as usize
        } else {
            ratio.ceil() as usize
        }
    }
}

/// Time plus nodal fields. `mu_gamma` is indexed by boundary position.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub mu_gamma: Option<Vec<f64>>,
}

impl State {
    /// State at `t = 0` with zero chemical potentials.
    pub fn initial(ops: &FemOperators, params: &ModelParams, phi: Vec<f64>) -> Self {
        let n = phi.len();
        State {
            t: 0.0,
            phi,
            mu: vec![0.0; n],
            mu_gamma: params.has_surface().then(|| vec![0.0; ops.num_boundary()]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.phi.iter().chain(&self.mu).chain(self.mu_gamma.iter().flatten()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyReport {
    pub e_bulk: f64,
    pub e_surf: f64,
    pub e_total: f64,
    /// `∫_Ω φ`.
    pub mass_bulk: f64,
    /// `∫_Γ φ`.
    pub mass_surf: f64,
    /// `‖∇μ‖²_{L²(Ω)}`.
    pub grad_mu_sq: f64,
    /// `‖∇_Γ μ_Γ‖²_{L²(Γ)}`.
    pub grad_mug_sq: f64,
}

/// Energies and masses of `phi`; the dissipation fields are left at zero.
pub fn total_energy(ops: &FemOperators, params: &ModelParams, phi: &[f64]) -> EnergyReport {
    let eps = params.epsilon;
    let phi_b = ops.restrict(phi);

    let potential = bulk_load(ops, phi, phi, |p, _| params.pot_bulk.jet(p)).value;
    let e_bulk = 0.5 * eps * ops.k_bulk.bilinear(phi, phi) + potential / eps;

    let e_surf = if params.has_surface() {
        let potential = surf_load(ops, &phi_b, &phi_b, |p, _| params.pot_surf.jet(p)).value;
        0.5 * params.kappa * eps * ops.k_surf.bilinear(&phi_b, &phi_b) + potential / eps
    } else {
        0.0
    };

    EnergyReport {
        e_bulk,
        e_surf,
        e_total: e_bulk + e_surf,
        mass_bulk: ops.bulk_integral(phi),
        mass_surf: ops.surf_integral(&phi_b),
        grad_mu_sq: 0.0,
        grad_mug_sq: 0.0,
    }
}

/// Full report for a state, including the chemical-potential gradient norms.
pub fn state_report(ops: &FemOperators, params: &ModelParams, state: &State) -> EnergyReport {
    let mut report = total_energy(ops, params, &state.phi);
    report.grad_mu_sq = ops.k_bulk.bilinear(&state.mu, &state.mu);
    report.grad_mug_sq = state.mu_gamma.as_ref().map_or(0.0, |m| ops.k_surf.bilinear(m, m));
    report
}

/// Gradient of the discrete energy with respect to nodal values:
/// `εKφ + ε⁻¹ f + Tᵀ(κεK_Γ φ|_Γ + ε⁻¹ g)` with the loads
/// `f_i = ∫_Ω F'(φ) ψ_i` and `g_k = ∫_Γ G'(φ) ψ_k`.
pub fn energy_gradient(ops: &FemOperators, params: &ModelParams, phi: &[f64]) -> Vec<f64> {
    let forces = potential_forces(ops, params, phi, Linearization::Full);
    nonlinear_operator(ops, params, phi, &forces)
}

/// Which potential derivative enters the potential equation.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Linearization<'a> {
    /// `F'(φ)`.
    Full,
    /// `F₁'(φ) + F₂'(φ_prev)`: convex part implicit, remainder lagged.
    Split(&'a [f64]),
}

fn jet_for(pot: &PotentialSplit, split: bool) -> impl Fn(f64, f64) -> Jet + '_ {
    move |u, v| {
        if split {
            let c = pot.convex(u);
            let r = pot.remainder(v);
            Jet { value: c.value + r.value, slope: c.slope + r.slope, curvature: c.curvature }
        } else {
            pot.jet(u)
        }
    }
}

/// Potential loads `∫_Ω F'ψ_i` (per vertex) and `∫_Γ G'ψ_k` (per boundary
/// position; empty without a surface).
#[derive(Debug, Clone)]
pub(crate) struct PotentialForces {
    pub bulk: Vec<f64>,
    pub surf: Vec<f64>,
}

pub(crate) fn potential_forces(ops: &FemOperators, params: &ModelParams, phi: &[f64], lin: Linearization) -> PotentialForces {
    let (other, split) = match lin {
        Linearization::Full => (phi, false),
        Linearization::Split(prev) => (prev, true),
    };
    let bulk = bulk_load(ops, phi, other, jet_for(&params.pot_bulk, split)).load;
    let surf = if params.has_surface() {
        surf_load(ops, &ops.restrict(phi), &ops.restrict(other), jet_for(&params.pot_surf, split)).load
    } else {
        Vec::new()
    };
    PotentialForces { bulk, surf }
}

/// Adds the Hessian of the potential terms, `ε⁻¹(∫F''ψ_iψ_j + Tᵀ∫_Γ G''ψ_kψ_l T)`,
/// into the block starting at `(row, col)`. Every element contributes its
/// full local pattern, so the sparsity does not depend on `phi`.
pub(crate) fn add_potential_hessian(
    ops: &FemOperators,
    params: &ModelParams,
    phi: &[f64],
    lin: Linearization,
    out: &mut TripletBuilder,
    row: usize,
    col: usize,
) {
    let (other, split) = match lin {
        Linearization::Full => (phi, false),
        Linearization::Split(prev) => (prev, true),
    };
    let scale = 1.0 / params.epsilon;
    bulk_curvature(ops, phi, other, jet_for(&params.pot_bulk, split), scale, out, row, col);
    if params.has_surface() {
        let tr = &ops.trace;
        let (u, v) = (ops.restrict(phi), ops.restrict(other));
        surf_curvature(ops, &u, &v, jet_for(&params.pot_surf, split), scale, out, |k| row + tr[k], |k| col + tr[k]);
    }
}

/// `εKφ + ε⁻¹ f + Tᵀ(κεK_Γ φ|_Γ + ε⁻¹ g)` for given potential loads.
pub(crate) fn nonlinear_operator(ops: &FemOperators, params: &ModelParams, phi: &[f64], forces: &PotentialForces) -> Vec<f64> {
    let eps = params.epsilon;
    let mut g = ops.k_bulk.mul_vec(phi);
    for (gi, &f) in g.iter_mut().zip(&forces.bulk) {
        *gi = eps * *gi + f / eps;
    }
    if params.has_surface() {
        let phi_b = ops.restrict(phi);
        let mut s = ops.k_surf.mul_vec(&phi_b);
        for (si, &f) in s.iter_mut().zip(&forces.surf) {
            *si = params.kappa * eps * *si + f / eps;
        }
        ops.extend_add(&mut g, &s);
    }
    g
}

/// One row of the run ledger.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub energy: EnergyReport,
    /// `(1/2τ)‖φ^{n+1} − φⁿ‖²` in the dual metric.
    pub metric_cost: f64,
    /// `E(φⁿ) − E(φ^{n+1})`.
    pub energy_decrement: f64,
    /// `|⟨φ^{n}⟩_Ω − ⟨φ⁰⟩_Ω|`.
    pub bulk_mean_drift: f64,
    /// `|⟨φ^{n}⟩_Γ − ⟨φ⁰⟩_Γ|`.
    pub surf_mean_drift: f64,
    /// `½ Σ τ (‖∇μ‖² + ‖∇_Γμ_Γ‖²)` up to this step.
    pub half_dissipation: f64,
    /// The same sum without the factor ½.
    pub full_dissipation: f64,
    /// `E(φⁿ) + ½ Σ τ (…)`, to be compared against `E(φ⁰)`.
    pub ledger_lhs: f64,
    pub initial_energy: f64,
}

impl DiagnosticsRecord {
    /// Whether the cumulative dissipation inequality holds with relative slack `rel`.
    pub fn ledger_holds(&self, rel: f64) -> bool {
        self.ledger_lhs <= self.initial_energy + rel * self.initial_energy.abs()
    }

    /// Whether `E(φ^{n+1}) + cost ≤ E(φⁿ)` holds with slack `tol·(1 + |E(φⁿ)|)`.
    pub fn decrement_covers_cost(&self, tol: f64) -> bool {
        let prev = self.energy.e_total + self.energy_decrement;
        self.energy_decrement >= self.metric_cost - tol * (1.0 + prev.abs())
    }
}

/// Running totals for the dissipation inequality and mean drifts.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    initial_energy: f64,
    initial_means: (f64, f64),
    half_dissipation: f64,
    full_dissipation: f64,
    step: usize,
}

impl EnergyLedger {
    /// Starts a ledger and returns the row for the initial state.
    pub fn start(ops: &FemOperators, params: &ModelParams, initial: &State) -> (Self, DiagnosticsRecord) {
        let energy = state_report(ops, params, initial);
        let ledger = EnergyLedger {
            initial_energy: energy.e_total,
            initial_means: (ops.bulk_mean(&initial.phi), ops.surf_mean(&ops.restrict(&initial.phi))),
            half_dissipation: 0.0,
            full_dissipation: 0.0,
            step: 0,
        };
        let record = DiagnosticsRecord {
            step: 0,
            time: initial.t,
            energy,
            ledger_lhs: energy.e_total,
            initial_energy: energy.e_total,
            ..Default::default()
        };
        (ledger, record)
    }

    pub fn initial_energy(&self) -> f64 {
        self.initial_energy
    }

    /// Appends the step `prev → next`.
    pub fn record_step(
        &mut self,
        ops: &FemOperators,
        params: &ModelParams,
        prev: &State,
        next: &State,
    ) -> Result<DiagnosticsRecord, DiagError> {
        let record = record_step(ops, params, prev, next, self)?;
        self.step = record.step;
        self.half_dissipation = record.half_dissipation;
        self.full_dissipation = record.full_dissipation;
        Ok(record)
    }
}

/// Computes the ledger row for `prev → next` without mutating the ledger.
pub fn record_step(
    ops: &FemOperators,
    params: &ModelParams,
    prev: &State,
    next: &State,
    ledger: &EnergyLedger,
) -> Result<DiagnosticsRecord, DiagError> {
    let prev_energy = total_energy(ops, params, &prev.phi).e_total;
    let energy = state_report(ops, params, next);
    let diff: Vec<f64> = next.phi.iter().zip(&prev.phi).map(|(a, b)| a - b).collect();
    let metric_cost = metric_norm_sq(ops, params, &diff)? / (2.0 * params.tau);

    let dt = next.t - prev.t;
    let dissipation = dt * (energy.grad_mu_sq + energy.grad_mug_sq);
    let half_dissipation = ledger.half_dissipation + 0.5 * dissipation;
    let full_dissipation = ledger.full_dissipation + dissipation;

    let (m1, m2) = ledger.initial_means;
    Ok(DiagnosticsRecord {
        step: ledger.step + 1,
        time: next.t,
        energy,
        metric_cost,
        energy_decrement: prev_energy - energy.e_total,
        bulk_mean_drift: (ops.bulk_mean(&next.phi) - m1).abs(),
        surf_mean_drift: (ops.surf_mean(&ops.restrict(&next.phi)) - m2).abs(),
        half_dissipation,
        full_dissipation,
        ledger_lhs: energy.e_total + half_dissipation,
        initial_energy: ledger.initial_energy,
    })
}

/// Squared dual norm of a mass-conserving increment under the model's metric.
/// Liu–Wu uses the coupled bulk/surface metric; the classical model only the
/// bulk part. Rounding-level means are projected out rather than rejected;
/// drift is tracked separately.
pub fn metric_norm_sq(ops: &FemOperators, params: &ModelParams, diff: &[f64]) -> Result<f64, FemError> {
    let u = ops.neumann_unchecked(diff)?;
    let mut norm = ops.k_bulk.bilinear(&u, &u);
    if params.has_surface() {
        let v = ops.surface_unchecked(&ops.restrict(diff))?;
        norm += ops.k_surf.bilinear(&v, &v);
    }
    Ok(norm.max(0.0))
}

/// `max ‖φ(t₁) − φ(t₂)‖_{L²(Ω)} / |t₁ − t₂|^{1/4}` over all snapshot pairs
/// with distinct times.
pub fn holder_quotient(ops: &FemOperators, history: &[(f64, Vec<f64>)]) -> Result<f64, DiagError> {
    if history.len() < 2 {
        return Err(DiagError::TooFewSnapshots(history.len()));
    }
    let mut best: f64 = 0.0;
    for (i, (t1, p1)) in history.iter().enumerate() {
        for (t2, p2) in &history[i + 1..] {
            let dt = (t1 - t2).abs();
            if dt == 0.0 {
                continue;
            }
            let diff: Vec<f64> = p1.iter().zip(p2).map(|(a, b)| a - b).collect();
            let l2 = ops.m_bulk.bilinear(&diff, &diff).max(0.0).sqrt();
            best = best.max(l2 / dt.powf(0.25));
        }
    }
    Ok(best)
}

/// Weighted L² inner product with the bulk mass matrix.
pub fn l2_bulk(ops: &FemOperators, a: &[f64], b: &[f64]) -> f64 {
    dot(a, &ops.m_bulk.mul_vec(b))
}
