mod common;

use chdbc_core::energy::{energy_gradient, total_energy};
use chdbc_core::fem::FemOperators;
use common::dense;
use common::*;
use proptest::prelude::*;

fn center_bulk(ops: &FemOperators, mut f: Vec<f64>) -> Vec<f64> {
    let m = ops.bulk_mean(&f);
    f.iter_mut().for_each(|v| *v -= m);
    f
}

fn center_surf(ops: &FemOperators, mut f: Vec<f64>) -> Vec<f64> {
    let m = ops.surf_mean(&f);
    f.iter_mut().for_each(|v| *v -= m);
    f
}

#[test]
fn sparse_assembly_matches_dense_reference() {
    for n in 1..=4 {
        let (mesh, ops) = unit_mesh(n);
        let d = dense::assemble(&mesh);
        for (sparse, reference) in [(&ops.m_bulk, &d.m), (&ops.k_bulk, &d.k), (&ops.m_surf, &d.ms), (&ops.k_surf, &d.ks)] {
            let s = sparse.to_dense();
            for (i, row) in s.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    assert!((v - reference[(i, j)]).abs() < 1e-14, "n={n} ({i},{j})");
                }
            }
        }
    }
}

#[test]
fn poisson_solves_match_dense_bordered_systems() {
    let mut seed = 0;
    for n in 1..=4 {
        let (mesh, ops) = unit_mesh(n);
        let d = dense::assemble(&mesh);
        for _ in 0..13 {
            seed += 1;
            let f = center_bulk(&ops, random_field(ops.num_nodes(), seed, -1.0, 1.0));
            let got = ops.solve_neumann_poisson(&f).unwrap();
            assert!(max_diff(&got, &dense::constrained_solve(&d.k, &d.m, &f)) <= 1e-10);
            assert!(ops.bulk_mean(&got).abs() <= 1e-12);

            let g = center_surf(&ops, random_field(ops.num_boundary(), seed + 1000, -1.0, 1.0));
            let got = ops.solve_surface_poisson(&g).unwrap();
            assert!(max_diff(&got, &dense::constrained_solve(&d.ks, &d.ms, &g)) <= 1e-10);
            assert!(ops.surf_mean(&got).abs() <= 1e-12);
        }
    }
}

#[test]
fn surface_poisson_inverts_a_cosine_mode() {
    // Every boundary edge has length h; the loop operators are circulant.
    let (mesh, ops) = unit_mesh(4);
    let nb = mesh.num_boundary();
    let h = mesh.h;
    let theta = 2.0 * std::f64::consts::PI * 3.0 / nb as f64;
    let mode: Vec<f64> = (0..nb).map(|k| (theta * k as f64).cos()).collect();
    let stiff = (2.0 - 2.0 * theta.cos()) / h;
    let mass = h * (4.0 + 2.0 * theta.cos()) / 6.0;
    let lambda = stiff / mass;
    let got = ops.solve_surface_poisson(&mode).unwrap();
    for (g, m) in got.iter().zip(&mode) {
        assert!((g - m / lambda).abs() <= 1e-8 * (1.0 / lambda));
    }
}

#[test]
fn fig1_energy_matches_exact_quadrature() {
    let (mesh, ops) = unit_mesh(4);
    let p = params(0.02, 0.02, 1e-5);
    let phi = fig1_datum(&mesh);
    let got = total_energy(&ops, &p, &phi).e_total;
    let want = dense::energy(&mesh, 0.02, 0.02, 0.25, 0.25, &phi);
    assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
    let r = total_energy(&ops, &p, &phi);
    assert!((r.mass_surf - 4.0).abs() < 1e-14);
}

#[test]
fn gradient_matches_central_differences() {
    let (_, ops) = unit_mesh(3);
    let p = params(0.02, 0.02, 1e-5);
    let n = ops.num_nodes();
    for state in 0..3u64 {
        let phi = random_field(n, 50 + state, -1.2, 1.2);
        let g = energy_gradient(&ops, &p, &phi);
        let nodes = random_field(20, 70 + state, 0.0, n as f64);
        for node in nodes.iter().map(|x| *x as usize) {
            let d = 1e-6 * (1.0 + phi[node].abs());
            let mut up = phi.clone();
            let mut down = phi.clone();
            up[node] += d;
            down[node] -= d;
            let fd = (total_energy(&ops, &p, &up).e_total - total_energy(&ops, &p, &down).e_total) / (2.0 * d);
            assert!((fd - g[node]).abs() <= 1e-6 * g[node].abs().max(1e-3), "node {node}: {fd} vs {}", g[node]);
        }
    }
}

#[test]
fn quadratic_part_of_the_gradient() {
    let (mesh, ops) = unit_mesh(3);
    let mut p = params(0.3, 0.7, 1e-5);
    p.pot_bulk = chdbc_core::potentials::double_well(1e-300).unwrap();
    p.pot_surf = p.pot_bulk.clone();
    let phi = random_field(ops.num_nodes(), 4, -1.0, 1.0);
    let g = energy_gradient(&ops, &p, &phi);
    let mut want: Vec<f64> = ops.k_bulk.mul_vec(&phi).iter().map(|v| 0.3 * v).collect();
    let ks: Vec<f64> = ops.k_surf.mul_vec(&mesh.trace(&phi)).iter().map(|v| 0.3 * 0.7 * v).collect();
    ops.extend_add(&mut want, &ks);
    assert!(max_diff(&g, &want) < 1e-12);
}

fn mean_free_pair(ops: &FemOperators, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let n = ops.num_nodes();
    (mean_free(ops, random_field(n, seed, -1.0, 1.0)), mean_free(ops, random_field(n, seed ^ 0xABCD, -1.0, 1.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dual_inner_product_axioms(seed in any::<u64>(), s in -3.0f64..3.0) {
        let (_, ops) = unit_mesh(3);
        let (a, b) = mean_free_pair(&ops, seed);
        let ab = ops.vkstar_inner(&a, &b).unwrap();
        let ba = ops.vkstar_inner(&b, &a).unwrap();
        let aa = ops.vkstar_norm_sq(&a).unwrap();
        let bb = ops.vkstar_norm_sq(&b).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-10 * (1.0 + ab.abs()));
        prop_assert!(ab * ab <= aa * bb * (1.0 + 1e-10));
        prop_assert!(aa > 0.0);
        let sa: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + y).collect();
        let lin = ops.vkstar_inner(&sa, &b).unwrap();
        prop_assert!((lin - (s * ab + bb)).abs() <= 1e-10 * (1.0 + lin.abs()));
        // Integration by parts: ⟨a, b⟩ = aᵀM u_b + a_Γᵀ M_Γ v_b.
        let ub = ops.solve_neumann_poisson(&b).unwrap();
        let vb = ops.solve_surface_poisson(&ops.restrict(&b)).unwrap();
        let alt = ops.m_bulk.bilinear(&a, &ub) + ops.m_surf.bilinear(&ops.restrict(&a), &vb);
        prop_assert!((alt - ab).abs() <= 1e-10 * (1.0 + ab.abs()));
    }

    #[test]
    fn neumann_inverse_is_symmetric(seed in any::<u64>()) {
        let (_, ops) = unit_mesh(4);
        let n = ops.num_nodes();
        let a = center_bulk(&ops, random_field(n, seed, -1.0, 1.0));
        let b = center_bulk(&ops, random_field(n, seed.wrapping_add(1), -1.0, 1.0));
        let (ua, ub) = (ops.solve_neumann_poisson(&a).unwrap(), ops.solve_neumann_poisson(&b).unwrap());
        let grad = ops.k_bulk.bilinear(&ua, &ub);
        let mass = ops.m_bulk.bilinear(&a, &ub);
        prop_assert!((grad - mass).abs() <= 1e-10 * (1.0 + grad.abs()));
        prop_assert!((mass - ops.m_bulk.bilinear(&b, &ua)).abs() <= 1e-10 * (1.0 + mass.abs()));
    }

    #[test]
    fn energy_matches_exact_quadrature_on_random_states(seed in any::<u64>(), lo in -2.0f64..0.0, hi in 0.0f64..2.0) {
        let (mesh, ops) = unit_mesh(3);
        let p = params(0.05, 0.3, 1e-5);
        let phi = random_field(ops.num_nodes(), seed, lo, hi);
        let got = total_energy(&ops, &p, &phi).e_total;
        let want = dense::energy(&mesh, 0.05, 0.3, 0.25, 0.25, &phi);
        prop_assert!((got - want).abs() <= 1e-11 * (1.0 + want.abs()));
    }
}
