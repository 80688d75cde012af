//! Time steppers for the coupled bulk/surface Cahn–Hilliard system.
//!
//! All three schemes discretize the same backward-Euler system
//!
//! ```text
//! (1)  M(φ − φⁿ)/τ + Kμ = 0
//! (2)  M_Γ(φ|_Γ − φⁿ|_Γ)/τ + K_Γ μ_Γ = 0
//! (3)  ∇E(φ) − Mμ − TᵀM_Γ μ_Γ = 0
//! ```
//!
//! `fully_implicit` applies Newton to (1)–(3) directly. `convex_concave`
//! does the same with the concave parts of the potentials lagged.
//! `minimizing_movement` minimizes `(1/2τ)‖φ − φⁿ‖²_* + E(φ)` over the
//! mass-constrained set, then recovers `(μ, μ_Γ)` from Poisson problems.

mod implicit;
mod minimizing;
mod reconstruct;

use thiserror::Error;

use crate::energy::{nonlinear_operator, potential_forces, Linearization, ModelParams, ParamError, PotentialForces, State};
use crate::fem::{FemError, FemOperators};
use crate::sparse::{norm_inf, LinearSolveError, SymbolicCache};

pub use reconstruct::{interior_indicator, reconstruct_potentials, reconstruct_with_test_function, MuRing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepperKind {
    MinimizingMovement,
    #[default]
    FullyImplicit,
    ConvexConcave,
}

impl StepperKind {
    pub fn name(self) -> &'static str {
        match self {
            StepperKind::MinimizingMovement => "minimizing_movement",
            StepperKind::FullyImplicit => "fully_implicit",
            StepperKind::ConvexConcave => "convex_concave",
        }
    }

    /// Accepts the full names and the short forms `mm`, `fi`, `cc`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "minimizing_movement" | "mm" => Some(StepperKind::MinimizingMovement),
            "fully_implicit" | "fi" => Some(StepperKind::FullyImplicit),
            "convex_concave" | "cc" => Some(StepperKind::ConvexConcave),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub kind: StepperKind,
    /// Stopping tolerance on the ∞-norm of the nonlinear residual.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig { kind: StepperKind::default(), newton_tol: 1e-10, newton_max_iter: 50 }
    }
}

impl StepperConfig {
    pub fn with_kind(kind: StepperKind) -> Self {
        StepperConfig { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.newton_tol > 0.0) || !self.newton_tol.is_finite() {
            return Err(StepError::Config(format!("newton_tol must be positive, got {}", self.newton_tol)));
        }
        if self.newton_max_iter == 0 {
            return Err(StepError::Config("newton_max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Backtracking factor and sufficient-decrease constant of the line searches.
pub(crate) const BACKTRACK: f64 = 0.5;
pub(crate) const ARMIJO: f64 = 1e-4;
pub(crate) const MIN_STEP: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("{kind} solver did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { kind: &'static str, iterations: usize, residual: f64, history: Vec<f64> },
    #[error("state is not finite or has wrong field lengths")]
    InvalidState,
    #[error("mean constraint violated: {which} mean changed by {drift:e}")]
    MeanViolation { which: &'static str, drift: f64 },
    #[error("test function for the constant reconstruction is invalid: {0}")]
    TestFunction(&'static str),
    #[error("invalid stepper configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Linear(#[from] LinearSolveError),
}

/// Outcome of the last nonlinear solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

/// ∞-norms of the three equations of the discrete system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemResidual {
    pub bulk_flux: f64,
    pub surf_flux: f64,
    pub potential: f64,
}

/// Evaluates (1)–(3) for `next` against the previous field `phi_prev`.
/// Without a surface the second entry is zero and (3) has no Γ terms.
pub fn system_residual(ops: &FemOperators, params: &ModelParams, phi_prev: &[f64], next: &State) -> SystemResidual {
    let zeros;
    let mu_gamma = match &next.mu_gamma {
        Some(m) => m.as_slice(),
        None => {
            zeros = vec![0.0; ops.num_boundary()];
            &zeros
        }
    };
    let forces = potential_forces(ops, params, &next.phi, Linearization::Full);
    let r = residual_blocks(ops, params, phi_prev, &next.phi, &next.mu, mu_gamma, &forces);
    SystemResidual { bulk_flux: norm_inf(&r[0]), surf_flux: norm_inf(&r[1]), potential: norm_inf(&r[2]) }
}

/// The three residual blocks for given potential loads.
pub(crate) fn residual_blocks(
    ops: &FemOperators,
    params: &ModelParams,
    phi_prev: &[f64],
    phi: &[f64],
    mu: &[f64],
    mu_gamma: &[f64],
    forces: &PotentialForces,
) -> [Vec<f64>; 3] {
    let inv_tau = 1.0 / params.tau;
    let diff: Vec<f64> = phi.iter().zip(phi_prev).map(|(a, b)| a - b).collect();

    let mut r1 = ops.m_bulk.mul_vec(&diff);
    let k_mu = ops.k_bulk.mul_vec(mu);
    for (r, k) in r1.iter_mut().zip(&k_mu) {
        *r = *r * inv_tau + k;
    }

    let mut r3 = nonlinear_operator(ops, params, phi, forces);
    let m_mu = ops.m_bulk.mul_vec(mu);
    for (r, m) in r3.iter_mut().zip(&m_mu) {
        *r -= m;
    }

    let r2 = if params.has_surface() {
        let mut r2 = ops.m_surf.mul_vec(&ops.restrict(&diff));
        let k_mug = ops.k_surf.mul_vec(mu_gamma);
        for (r, k) in r2.iter_mut().zip(&k_mug) {
            *r = *r * inv_tau + k;
        }
        let m_mug: Vec<f64> = ops.m_surf.mul_vec(mu_gamma).iter().map(|v| -v).collect();
        ops.extend_add(&mut r3, &m_mug);
        r2
    } else {
        Vec::new()
    };
    [r1, r2, r3]
}

/// A stepper bound to one set of operators and parameters. It keeps the
/// symbolic factorization between steps and, for the minimizing-movement
/// scheme, the masses of the first state it sees.
pub struct Stepper<'a> {
    ops: &'a FemOperators,
    params: ModelParams,
    config: StepperConfig,
    cache: SymbolicCache,
    targets: Option<(f64, f64)>,
    stats: SolveStats,
}

impl<'a> Stepper<'a> {
    pub fn new(ops: &'a FemOperators, params: ModelParams, config: StepperConfig) -> Result<Self, StepError> {
        params.validate()?;
        config.validate()?;
        Ok(Stepper { ops, params, config, cache: SymbolicCache::default(), targets: None, stats: SolveStats::default() })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &StepperConfig {
        &self.config
    }

    pub fn last_stats(&self) -> &SolveStats {
        &self.stats
    }

    /// Fixes the constraint masses `(∫_Ω φ, ∫_Γ φ)` used by the
    /// minimizing-movement scheme.
    pub fn set_target_masses(&mut self, bulk: f64, surf: f64) {
        self.targets = Some((bulk, surf));
    }

    pub fn step(&mut self, prev: &State) -> Result<State, StepError> {
        check_state(self.ops, &self.params, prev)?;
        let ops = self.ops;
        let targets = *self.targets.get_or_insert_with(|| (ops.bulk_integral(&prev.phi), ops.surf_integral(&ops.restrict(&prev.phi))));
        let (next, stats) = match self.config.kind {
            StepperKind::FullyImplicit => implicit::solve(ops, &self.params, &self.config, &mut self.cache, prev, false)?,
            StepperKind::ConvexConcave => implicit::solve(ops, &self.params, &self.config, &mut self.cache, prev, true)?,
            StepperKind::MinimizingMovement => {
                minimizing::solve(ops, &self.params, &self.config, &mut self.cache, prev, targets)?
            }
        };
        self.stats = stats;
        if !next.is_finite() {
            return Err(StepError::InvalidState);
        }
        Ok(next)
    }
}

fn check_state(ops: &FemOperators, params: &ModelParams, s: &State) -> Result<(), StepError> {
    let n = ops.num_nodes();
    let surf_ok = match (&s.mu_gamma, params.has_surface()) {
        (Some(m), true) => m.len() == ops.num_boundary(),
        (None, _) => true,
        (Some(_), false) => true,
    };
    if s.phi.len() != n || s.mu.len() != n || !surf_ok || !s.is_finite() {
        return Err(StepError::InvalidState);
    }
    Ok(())
}

fn one_step(ops: &FemOperators, params: &ModelParams, prev: &State, config: StepperConfig) -> Result<State, StepError> {
    Stepper::new(ops, params.clone(), config)?.step(prev)
}

/// One minimizing-movement step; the constraint masses are those of `prev`.
pub fn step_minimizing_movement(ops: &FemOperators, params: &ModelParams, prev: &State) -> Result<State, StepError> {
    one_step(ops, params, prev, StepperConfig::with_kind(StepperKind::MinimizingMovement))
}

pub fn step_fully_implicit(ops: &FemOperators, params: &ModelParams, prev: &State) -> Result<State, StepError> {
    one_step(ops, params, prev, StepperConfig::with_kind(StepperKind::FullyImplicit))
}

pub fn step_convex_concave(ops: &FemOperators, params: &ModelParams, prev: &State) -> Result<State, StepError> {
    one_step(ops, params, prev, StepperConfig::with_kind(StepperKind::ConvexConcave))
}
