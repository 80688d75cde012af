mod common;

use chdbc_core::energy::{energy_gradient, total_energy, ModelKind, State};
use chdbc_core::stepper::{
    interior_indicator, reconstruct_potentials, reconstruct_with_test_function, step_convex_concave, step_fully_implicit,
    step_minimizing_movement, system_residual, StepError, Stepper, StepperConfig, StepperKind,
};
use common::*;

const KINDS: [StepperKind; 3] = [StepperKind::MinimizingMovement, StepperKind::FullyImplicit, StepperKind::ConvexConcave];

#[test]
fn pure_phase_is_a_fixed_point() {
    let (_, ops) = unit_mesh(4);
    let p = params(0.02, 0.02, 8e-6);
    let s = State::initial(&ops, &p, vec![1.0; ops.num_nodes()]);
    for kind in KINDS {
        let next = Stepper::new(&ops, p.clone(), StepperConfig::with_kind(kind)).unwrap().step(&s).unwrap();
        assert!(max_diff(&next.phi, &s.phi) < 1e-14, "{kind:?}");
        assert!(next.mu.iter().all(|m| m.abs() < 1e-12), "{kind:?}");
        assert!(next.mu_gamma.unwrap().iter().all(|m| m.abs() < 1e-12), "{kind:?}");
        assert!((next.t - 8e-6).abs() < 1e-20);
    }
}

#[test]
fn every_stepper_conserves_both_means() {
    let (_, ops) = unit_mesh(6);
    let p = params(0.1, 0.05, 1e-4);
    let phi = random_field(ops.num_nodes(), 7, -0.5, 0.5);
    let (m1, m2) = (ops.bulk_mean(&phi), ops.surf_mean(&ops.restrict(&phi)));
    for kind in KINDS {
        let mut stepper = Stepper::new(&ops, p.clone(), StepperConfig::with_kind(kind)).unwrap();
        let mut s = State::initial(&ops, &p, phi.clone());
        for _ in 0..5 {
            s = stepper.step(&s).unwrap();
            assert!((ops.bulk_mean(&s.phi) - m1).abs() < 1e-10, "{kind:?}");
            assert!((ops.surf_mean(&ops.restrict(&s.phi)) - m2).abs() < 1e-10, "{kind:?}");
        }
    }
}

#[test]
fn zero_kappa_runs_with_every_stepper() {
    let (_, ops) = unit_mesh(6);
    let p = params(0.1, 0.0, 1e-4);
    let phi = random_field(ops.num_nodes(), 3, -0.3, 0.3);
    for kind in KINDS {
        let mut stepper = Stepper::new(&ops, p.clone(), StepperConfig::with_kind(kind)).unwrap();
        let mut s = State::initial(&ops, &p, phi.clone());
        for _ in 0..3 {
            let next = stepper.step(&s).unwrap();
            let r = system_residual(&ops, &p, &s.phi, &next);
            assert!(r.bulk_flux < 1e-10 && r.surf_flux < 1e-10, "{kind:?}: {r:?}");
            // The split scheme solves a different potential equation.
            if kind != StepperKind::ConvexConcave {
                assert!(r.potential < 1e-8, "{kind:?}: {r:?}");
            }
            s = next;
        }
    }
}

#[test]
fn neumann_model_spinodal_decreases_bulk_energy() {
    let (_, ops) = unit_mesh(16);
    let mut p = params(0.05, 0.0, 1e-5);
    p.model = ModelKind::NeumannClassic;
    let mut s = State::initial(&ops, &p, random_field(ops.num_nodes(), 11, -0.05, 0.05));
    assert!(s.mu_gamma.is_none());
    let m1 = ops.bulk_mean(&s.phi);
    let mut stepper = Stepper::new(&ops, p.clone(), StepperConfig::default()).unwrap();
    let mut energy = total_energy(&ops, &p, &s.phi);
    assert_eq!(energy.e_surf, 0.0);
    for step in 0..200 {
        s = stepper.step(&s).unwrap();
        assert!(s.mu_gamma.is_none());
        let next = total_energy(&ops, &p, &s.phi);
        assert!(next.e_bulk <= energy.e_bulk + 1e-12 * (1.0 + energy.e_bulk.abs()), "step {step}");
        energy = next;
    }
    assert!((ops.bulk_mean(&s.phi) - m1).abs() < 1e-10);
    // The surface mean is free to move without the surface equation.
    let spread = s.phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(spread > 0.05, "no growth of the unstable modes: {spread}");
}

/// Smooth state with both means of order one.
fn smooth_state(mesh: &chdbc_core::mesh::TriMesh) -> Vec<f64> {
    use std::f64::consts::PI;
    mesh.vertices.iter().map(|p| 0.2 + 0.5 * (PI * p[0]).cos() * (PI * p[1]).cos()).collect()
}

#[test]
fn convex_concave_is_second_order_close_to_implicit() {
    let (mesh, ops) = unit_mesh(8);
    let phi = smooth_state(&mesh);
    let gap = |tau: f64| {
        let p = params(0.1, 0.1, tau);
        let s = State::initial(&ops, &p, phi.clone());
        let cc = step_convex_concave(&ops, &p, &s).unwrap();
        let fi = step_fully_implicit(&ops, &p, &s).unwrap();
        max_diff(&cc.phi, &fi.phi)
    };
    let (coarse, fine) = (gap(1e-5), gap(5e-6));
    let ratio = coarse / fine;
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio} ({coarse:e} / {fine:e})");
}

#[test]
fn convex_concave_large_steps_decrease_energy() {
    let (_, ops) = unit_mesh(8);
    let p = params(0.05, 0.05, 1e-2);
    let mut stepper = Stepper::new(&ops, p.clone(), StepperConfig::with_kind(StepperKind::ConvexConcave)).unwrap();
    let mut s = State::initial(&ops, &p, random_field(ops.num_nodes(), 5, -0.2, 0.2));
    let mut e = total_energy(&ops, &p, &s.phi).e_total;
    for _ in 0..10 {
        s = stepper.step(&s).unwrap();
        let next = total_energy(&ops, &p, &s.phi).e_total;
        assert!(next <= e + 1e-12 * (1.0 + e.abs()));
        e = next;
    }
}

#[test]
fn minimizing_movement_matches_fully_implicit() {
    let (mesh, ops) = unit_mesh(8);
    let p = params(0.02, 0.02, 8e-6);
    let mut mm = Stepper::new(&ops, p.clone(), StepperConfig::with_kind(StepperKind::MinimizingMovement)).unwrap();
    let mut fi = Stepper::new(&ops, p.clone(), StepperConfig::with_kind(StepperKind::FullyImplicit)).unwrap();
    let start = State::initial(&ops, &p, fig1_datum(&mesh));
    let (mut a, mut b) = (start.clone(), start);
    for _ in 0..5 {
        a = mm.step(&a).unwrap();
        b = fi.step(&b).unwrap();
        assert!(max_diff(&a.phi, &b.phi) < 1e-8);
        assert!(max_diff(&a.mu, &b.mu) < 1e-6 * (1.0 + b.mu.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
    }
}

#[test]
fn minimizing_step_satisfies_discrete_system() {
    let (mesh, ops) = unit_mesh(8);
    let p = params(0.02, 0.02, 8e-6);
    let s = State::initial(&ops, &p, fig1_datum(&mesh));
    let next = step_minimizing_movement(&ops, &p, &s).unwrap();
    let r = system_residual(&ops, &p, &s.phi, &next);
    assert!(r.potential <= 1e-8, "{r:?}");
    assert!(r.bulk_flux <= 1e-10 && r.surf_flux <= 1e-10, "{r:?}");
    let e0 = total_energy(&ops, &p, &s.phi).e_total;
    assert!(total_energy(&ops, &p, &next.phi).e_total <= e0);
}

#[test]
fn gradient_flow_identity_holds_for_mean_free_tests() {
    let (mesh, ops) = unit_mesh(6);
    let p = params(0.05, 0.1, 1e-4);
    let mut phi = smooth_state(&mesh);
    for (v, r) in phi.iter_mut().zip(random_field(ops.num_nodes(), 9, -0.1, 0.1)) {
        *v += r;
    }
    let s = State::initial(&ops, &p, phi);
    let next = step_minimizing_movement(&ops, &p, &s).unwrap();
    let rate: Vec<f64> = next.phi.iter().zip(&s.phi).map(|(a, b)| (a - b) / p.tau).collect();
    let g = energy_gradient(&ops, &p, &next.phi);
    for seed in 0..10 {
        let eta = mean_free(&ops, random_field(ops.num_nodes(), 100 + seed, -1.0, 1.0));
        let lhs = ops.vkstar_inner(&rate, &eta).unwrap();
        let rhs: f64 = g.iter().zip(&eta).map(|(a, b)| a * b).sum();
        assert!((lhs + rhs).abs() <= 1e-8 * (1.0 + lhs.abs()), "seed {seed}: {lhs} + {rhs}");
    }
}

#[test]
fn reconstruction_does_not_depend_on_the_test_function() {
    let (mesh, ops) = unit_mesh(6);
    let p = params(0.05, 0.1, 1e-4);
    let s = State::initial(&ops, &p, smooth_state(&mesh));
    let next = step_minimizing_movement(&ops, &p, &s).unwrap();
    let base = reconstruct_potentials(&ops, &p, &next.phi, &s.phi).unwrap();
    let mut weights = random_field(ops.num_nodes(), 21, 0.1, 2.0);
    for (w, e) in weights.iter_mut().zip(interior_indicator(&ops)) {
        *w *= e;
    }
    let other = reconstruct_with_test_function(&ops, &p, &next.phi, &s.phi, &weights).unwrap();
    assert!(max_diff(&base.mu(), &other.mu()) < 1e-8);
    assert!(max_diff(&base.mu_gamma().unwrap(), &other.mu_gamma().unwrap()) < 1e-8);
}

#[test]
fn reconstruction_of_a_zero_step() {
    let (mesh, ops) = unit_mesh(4);
    let p = params(0.05, 0.1, 1e-4);
    let phi = smooth_state(&mesh);
    let ring = reconstruct_potentials(&ops, &p, &phi, &phi).unwrap();
    assert!(ring.mu_ring.iter().all(|v| v.abs() < 1e-14));
    assert!(ring.mu_gamma_ring.unwrap().iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn reconstruction_rejects_bad_inputs() {
    let (mesh, ops) = unit_mesh(4);
    let p = params(0.05, 0.1, 1e-4);
    let phi = smooth_state(&mesh);
    let shifted: Vec<f64> = phi.iter().map(|v| v + 0.1).collect();
    assert!(matches!(reconstruct_potentials(&ops, &p, &shifted, &phi), Err(StepError::MeanViolation { .. })));
    let on_boundary = vec![1.0; ops.num_nodes()];
    assert!(matches!(
        reconstruct_with_test_function(&ops, &p, &phi, &phi, &on_boundary),
        Err(StepError::TestFunction(_))
    ));
    let (_, tiny) = unit_mesh(1);
    let flat = vec![0.0; tiny.num_nodes()];
    assert!(matches!(reconstruct_potentials(&tiny, &p, &flat, &flat), Err(StepError::TestFunction(_))));
}

#[test]
fn config_validation() {
    let (_, ops) = unit_mesh(2);
    let p = params(0.05, 0.1, 1e-4);
    let bad = StepperConfig { newton_tol: 0.0, ..Default::default() };
    assert!(matches!(Stepper::new(&ops, p.clone(), bad), Err(StepError::Config(_))));
    let bad = StepperConfig { newton_max_iter: 0, ..Default::default() };
    assert!(matches!(Stepper::new(&ops, p, bad), Err(StepError::Config(_))));
    assert_eq!(StepperKind::parse("cc"), Some(StepperKind::ConvexConcave));
    assert_eq!(StepperKind::parse("minimizing_movement"), Some(StepperKind::MinimizingMovement));
    assert_eq!(StepperKind::parse("newton"), None);
}

#[test]
fn iteration_cap_reports_history() {
    let (mesh, ops) = unit_mesh(4);
    let p = params(0.02, 0.02, 8e-6);
    let config = StepperConfig { newton_max_iter: 1, newton_tol: 1e-15, ..Default::default() };
    let s = State::initial(&ops, &p, fig1_datum(&mesh));
    match Stepper::new(&ops, p, config).unwrap().step(&s) {
        Err(StepError::NonConvergence { iterations, history, .. }) => {
            assert_eq!(iterations, 1);
            assert_eq!(history.len(), 2);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}
