//! Constrained minimization of `J(φ) = (1/2τ)‖φ − φⁿ‖²_* + E(φ)`.
//!
//! The dual norm involves inverse Laplacians, so the Newton system carries
//! the potentials `w = (−Δ)⁻¹(φ + δ − φⁿ)` and `w_Γ` as auxiliary unknowns
//! instead of forming the dense Hessian. With `d = φ − φⁿ` and `H = ∇²E(φ)`
//! the step `δ` solves
//!
//! ```text
//! (H + σM)δ + τ⁻¹(Mw + TᵀM_Γ w_Γ) + λ₁ M𝟙 + λ₂ TᵀM_Γ𝟙 = −∇E(φ)
//! τ⁻¹Mδ − τ⁻¹(Kw + M𝟙 α)                          = −τ⁻¹Md
//! −τ⁻¹(M𝟙)ᵀw                                       = 0
//! (surface rows analogous)
//! (M𝟙)ᵀδ = m₁ − (M𝟙)ᵀφ,     (M_Γ𝟙)ᵀδ|_Γ = m₂ − (M_Γ𝟙)ᵀφ|_Γ
//! ```
//!
//! followed by an Armijo search on `J`. The shift `σ` is raised whenever the
//! step fails to descend.

use crate::energy::{add_potential_hessian, energy_gradient, total_energy, Linearization, ModelParams, State};
use crate::fem::FemOperators;
use crate::sparse::{dot, norm_inf, CsrMatrix, SymbolicCache, TripletBuilder};

use super::{reconstruct_potentials, SolveStats, StepError, StepperConfig, ARMIJO, BACKTRACK, MIN_STEP};

const MAX_SHIFT: f64 = 1e12;

struct Layout {
    n: usize,
    nb: usize,
    surface: bool,
}

impl Layout {
    fn alpha(&self) -> usize {
        2 * self.n
    }
    fn w_gamma(&self) -> usize {
        2 * self.n + 1
    }
    fn alpha_gamma(&self) -> usize {
        self.w_gamma() + self.nb
    }
    fn lambda1(&self) -> usize {
        if self.surface {
            self.alpha_gamma() + 1
        } else {
            2 * self.n + 1
        }
    }
    fn lambda2(&self) -> usize {
        self.lambda1() + 1
    }
    fn len(&self) -> usize {
        self.lambda1() + if self.surface { 2 } else { 1 }
    }
}

/// Objective value together with the pieces its gradient needs.
struct Eval {
    j: f64,
    grad: Vec<f64>,
}

fn evaluate(ops: &FemOperators, params: &ModelParams, phi: &[f64], phi_prev: &[f64]) -> Result<Eval, StepError> {
    let inv_tau = 1.0 / params.tau;
    let d: Vec<f64> = phi.iter().zip(phi_prev).map(|(a, b)| a - b).collect();
    let u = ops.neumann_unchecked(&d)?;
    let mut metric = ops.k_bulk.bilinear(&u, &u);
    let mut grad = energy_gradient(ops, params, phi);
    let mu = ops.m_bulk.mul_vec(&u);
    for (g, m) in grad.iter_mut().zip(&mu) {
        *g += inv_tau * m;
    }
    if params.has_surface() {
        let v = ops.surface_unchecked(&ops.restrict(&d))?;
        metric += ops.k_surf.bilinear(&v, &v);
        let mv: Vec<f64> = ops.m_surf.mul_vec(&v).iter().map(|x| inv_tau * x).collect();
        ops.extend_add(&mut grad, &mv);
    }
    let j = 0.5 * inv_tau * metric + total_energy(ops, params, phi).e_total;
    Ok(Eval { j, grad })
}

/// ∞-norm of `g + Bλ` with `λ` the least-squares multipliers for the
/// constraint normals `B = [M𝟙, TᵀM_Γ𝟙]`.
fn stationarity(ops: &FemOperators, params: &ModelParams, grad: &[f64]) -> f64 {
    let b1 = &ops.bulk_weights;
    if !params.has_surface() {
        let l = -dot(b1, grad) / dot(b1, b1);
        return grad.iter().zip(b1).fold(0.0f64, |m, (g, b)| m.max((g + l * b).abs()));
    }
    let mut b2 = vec![0.0; grad.len()];
    ops.extend_add(&mut b2, &ops.surf_weights);
    let (a11, a12, a22) = (dot(b1, b1), dot(b1, &b2), dot(&b2, &b2));
    let (r1, r2) = (-dot(b1, grad), -dot(&b2, grad));
    let det = a11 * a22 - a12 * a12;
    let l1 = (r1 * a22 - r2 * a12) / det;
    let l2 = (a11 * r2 - a12 * r1) / det;
    grad.iter().zip(b1).zip(&b2).fold(0.0f64, |m, ((g, x), y)| m.max((g + l1 * x + l2 * y).abs()))
}

fn kkt_matrix(ops: &FemOperators, params: &ModelParams, lay: &Layout, phi: &[f64], shift: f64) -> CsrMatrix {
    let n = lay.n;
    let inv_tau = 1.0 / params.tau;
    let eps = params.epsilon;
    let tr = &ops.trace;
    let mut b = TripletBuilder::new();

    b.add_block(&ops.k_bulk, 0, 0, eps);
    b.add_block(&ops.m_bulk, 0, 0, shift);
    add_potential_hessian(ops, params, phi, Linearization::Full, &mut b, 0, 0);
    b.add_block(&ops.m_bulk, 0, n, inv_tau);
    b.add_block(&ops.m_bulk, n, 0, inv_tau);
    b.add_block(&ops.k_bulk, n, n, -inv_tau);
    let (a, l1) = (lay.alpha(), lay.lambda1());
    for (i, &w) in ops.bulk_weights.iter().enumerate() {
        b.push(n + i, a, -inv_tau * w);
        b.push(a, n + i, -inv_tau * w);
        b.push(i, l1, w);
        b.push(l1, i, w);
    }

    if lay.surface {
        let (g, ag, l2) = (lay.w_gamma(), lay.alpha_gamma(), lay.lambda2());
        b.add_mapped(&ops.k_surf, |r| tr[r], |c| tr[c], params.kappa * eps);
        b.add_mapped(&ops.m_surf, |r| tr[r], |c| g + c, inv_tau);
        b.add_mapped(&ops.m_surf, |r| g + r, |c| tr[c], inv_tau);
        b.add_block(&ops.k_surf, g, g, -inv_tau);
        for (k, &w) in ops.surf_weights.iter().enumerate() {
            b.push(g + k, ag, -inv_tau * w);
            b.push(ag, g + k, -inv_tau * w);
            b.push(tr[k], l2, w);
            b.push(l2, tr[k], w);
        }
    }
    b.build(lay.len())
}

fn kkt_rhs(ops: &FemOperators, params: &ModelParams, lay: &Layout, phi: &[f64], phi_prev: &[f64], targets: (f64, f64)) -> Vec<f64> {
    let n = lay.n;
    let inv_tau = 1.0 / params.tau;
    let mut rhs = vec![0.0; lay.len()];
    for (r, g) in rhs.iter_mut().zip(energy_gradient(ops, params, phi)) {
        *r = -g;
    }
    let d: Vec<f64> = phi.iter().zip(phi_prev).map(|(a, b)| a - b).collect();
    for (r, m) in rhs[n..2 * n].iter_mut().zip(ops.m_bulk.mul_vec(&d)) {
        *r = -inv_tau * m;
    }
    rhs[lay.lambda1()] = targets.0 - ops.bulk_integral(phi);
    if lay.surface {
        let g = lay.w_gamma();
        for (k, m) in ops.m_surf.mul_vec(&ops.restrict(&d)).into_iter().enumerate() {
            rhs[g + k] = -inv_tau * m;
        }
        rhs[lay.lambda2()] = targets.1 - ops.surf_integral(&ops.restrict(phi));
    }
    rhs
}

pub(super) fn solve(
    ops: &FemOperators,
    params: &ModelParams,
    config: &StepperConfig,
    cache: &mut SymbolicCache,
    prev: &State,
    targets: (f64, f64),
) -> Result<(State, SolveStats), StepError> {
    let lay = Layout { n: ops.num_nodes(), nb: ops.num_boundary(), surface: params.has_surface() };
    let phi_prev = &prev.phi;
    let start_energy = total_energy(ops, params, phi_prev).e_total;

    let mut phi = phi_prev.clone();
    let mut eval = evaluate(ops, params, &phi, phi_prev)?;
    let mut history = vec![stationarity(ops, params, &eval.grad)];
    let mut iterations = 0;

    let converged = |phi: &[f64], stat: f64| {
        let bulk_gap = (ops.bulk_integral(phi) - targets.0).abs();
        let surf_gap = if lay.surface { (ops.surf_integral(&ops.restrict(phi)) - targets.1).abs() } else { 0.0 };
        stat <= config.newton_tol && bulk_gap <= 1e-13 * (1.0 + targets.0.abs()) && surf_gap <= 1e-13 * (1.0 + targets.1.abs())
    };

    while !converged(&phi, *history.last().unwrap()) {
        if iterations == config.newton_max_iter {
            return Err(non_convergence(iterations, history));
        }
        iterations += 1;
        let rhs = kkt_rhs(ops, params, &lay, &phi, phi_prev, targets);
        let mut shift = 0.0;
        loop {
            let lu = cache.factor(kkt_matrix(ops, params, &lay, &phi, shift))?;
            let sol = lu.solve(&rhs)?;
            let delta = &sol[..lay.n];
            let slope = dot(&eval.grad, delta);
            if let Some((p, e)) = line_search(ops, params, phi_prev, &phi, delta, &eval, slope)? {
                phi = p;
                eval = e;
                break;
            }
            shift = if shift == 0.0 { 1.0 / params.epsilon } else { 10.0 * shift };
            if shift > MAX_SHIFT {
                return Err(non_convergence(iterations, history));
            }
        }
        history.push(stationarity(ops, params, &eval.grad));
    }

    if eval.j > start_energy + 1e-12 * (1.0 + start_energy.abs()) {
        return Err(non_convergence(iterations, history));
    }

    let ring = reconstruct_potentials(ops, params, &phi, phi_prev)?;
    let state = State { t: prev.t + params.tau, mu: ring.mu(), mu_gamma: ring.mu_gamma(), phi };
    let residual = *history.last().unwrap();
    Ok((state, SolveStats { iterations, residual, history }))
}

/// Armijo backtracking on `J`. Returns `None` when `delta` does not descend
/// or no acceptable step is found. A roundoff-sized slack lets the search
/// accept steps once `J` is flat to machine precision.
fn line_search(
    ops: &FemOperators,
    params: &ModelParams,
    phi_prev: &[f64],
    phi: &[f64],
    delta: &[f64],
    eval: &Eval,
    slope: f64,
) -> Result<Option<(Vec<f64>, Eval)>, StepError> {
    let slack = 1e-14 * (1.0 + eval.j.abs());
    if !(slope <= 0.0) && slope.abs() > slack {
        return Ok(None);
    }
    if norm_inf(delta) == 0.0 {
        return Ok(None);
    }
    let mut t = 1.0;
    while t >= MIN_STEP {
        let trial: Vec<f64> = phi.iter().zip(delta).map(|(p, d)| p + t * d).collect();
        let e = evaluate(ops, params, &trial, phi_prev)?;
        if e.j.is_finite() && e.j <= eval.j + ARMIJO * t * slope.min(0.0) + slack {
            return Ok(Some((trial, e)));
        }
        t *= BACKTRACK;
    }
    Ok(None)
}

fn non_convergence(iterations: usize, history: Vec<f64>) -> StepError {
    StepError::NonConvergence { kind: "minimizing_movement", iterations, residual: *history.last().unwrap(), history }
}
