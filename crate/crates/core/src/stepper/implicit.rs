//! Newton's method on the coupled system in the unknowns `[φ | μ | μ_Γ]`.

use crate::energy::{add_potential_hessian, potential_forces, Linearization, ModelParams, State};
use crate::fem::FemOperators;
use crate::sparse::{norm_inf, CsrMatrix, SymbolicCache, TripletBuilder};

use super::{residual_blocks, SolveStats, StepError, StepperConfig, ARMIJO, BACKTRACK, MIN_STEP};

struct Layout {
    n: usize,
    nb: usize,
    surface: bool,
}

impl Layout {
    fn len(&self) -> usize {
        2 * self.n + if self.surface { self.nb } else { 0 }
    }
}

fn linearization<'a>(phi_prev: &'a [f64], split: bool) -> Linearization<'a> {
    if split {
        Linearization::Split(phi_prev)
    } else {
        Linearization::Full
    }
}

fn residual(ops: &FemOperators, params: &ModelParams, lay: &Layout, x: &[f64], phi_prev: &[f64], split: bool) -> Vec<f64> {
    let (phi, rest) = x.split_at(lay.n);
    let (mu, mu_gamma) = rest.split_at(lay.n);
    let forces = potential_forces(ops, params, phi, linearization(phi_prev, split));
    let [r1, r2, r3] = residual_blocks(ops, params, phi_prev, phi, mu, mu_gamma, &forces);
    let mut r = r1;
    r.extend(r3);
    r.extend(r2);
    r
}

fn jacobian(ops: &FemOperators, params: &ModelParams, lay: &Layout, phi: &[f64], phi_prev: &[f64], split: bool) -> CsrMatrix {
    let n = lay.n;
    let inv_tau = 1.0 / params.tau;
    let eps = params.epsilon;
    let tr = &ops.trace;

    let mut b = TripletBuilder::new();
    // (1)
    b.add_block(&ops.m_bulk, 0, 0, inv_tau);
    b.add_block(&ops.k_bulk, 0, n, 1.0);
    // (3)
    b.add_block(&ops.k_bulk, n, 0, eps);
    add_potential_hessian(ops, params, phi, linearization(phi_prev, split), &mut b, n, 0);
    b.add_block(&ops.m_bulk, n, n, -1.0);
    if lay.surface {
        let g = 2 * n;
        b.add_mapped(&ops.k_surf, |r| n + tr[r], |c| tr[c], params.kappa * eps);
        b.add_mapped(&ops.m_surf, |r| n + tr[r], |c| g + c, -1.0);
        // (2)
        b.add_mapped(&ops.m_surf, |r| g + r, |c| tr[c], inv_tau);
        b.add_block(&ops.k_surf, g, g, 1.0);
    }
    b.build(lay.len())
}

fn merit(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

pub(super) fn solve(
    ops: &FemOperators,
    params: &ModelParams,
    config: &StepperConfig,
    cache: &mut SymbolicCache,
    prev: &State,
    split: bool,
) -> Result<(State, SolveStats), StepError> {
    let lay = Layout { n: ops.num_nodes(), nb: ops.num_boundary(), surface: params.has_surface() };
    let kind = if split { "convex_concave" } else { "fully_implicit" };
    let phi_prev = &prev.phi;

    let mut x = Vec::with_capacity(lay.len());
    x.extend_from_slice(phi_prev);
    x.extend_from_slice(&prev.mu);
    if lay.surface {
        match &prev.mu_gamma {
            Some(m) => x.extend_from_slice(m),
            None => x.extend(std::iter::repeat(0.0).take(lay.nb)),
        }
    }

    let mut r = residual(ops, params, &lay, &x, phi_prev, split);
    let mut history = vec![norm_inf(&r)];
    let mut iterations = 0;
    while *history.last().unwrap() > config.newton_tol {
        if iterations == config.newton_max_iter {
            return Err(non_convergence(kind, iterations, history));
        }
        iterations += 1;
        let jac = jacobian(ops, params, &lay, &x[..lay.n], phi_prev, split);
        let lu = cache.factor(jac)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = lu.solve(&neg)?;

        let m0 = merit(&r);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + t * d).collect();
            let rt = residual(ops, params, &lay, &trial, phi_prev, split);
            let mt = merit(&rt);
            if mt.is_finite() && mt <= (1.0 - 2.0 * ARMIJO * t) * m0 {
                x = trial;
                r = rt;
                break;
            }
            t *= BACKTRACK;
            if t < MIN_STEP {
                return Err(non_convergence(kind, iterations, history));
            }
        }
        history.push(norm_inf(&r));
    }

    let residual = *history.last().unwrap();
    let mu_gamma = lay.surface.then(|| x[2 * lay.n..].to_vec());
    x.truncate(2 * lay.n);
    let mu = x.split_off(lay.n);
    let state = State { t: prev.t + params.tau, phi: x, mu, mu_gamma };
    Ok((state, SolveStats { iterations, residual, history }))
}

fn non_convergence(kind: &'static str, iterations: usize, history: Vec<f64>) -> StepError {
    StepError::NonConvergence { kind, iterations, residual: *history.last().unwrap(), history }
}
