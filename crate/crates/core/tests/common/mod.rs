#![allow(dead_code)]

use chdbc_core::energy::{ModelKind, ModelParams};
use chdbc_core::fem::{assemble, FemOperators};
use chdbc_core::mesh::{build_friedrichs_keller, Rect, TriMesh};
use chdbc_core::potentials::double_well;
use chdbc_core::rng::SplitMix64;

pub fn unit_mesh(n: usize) -> (TriMesh, FemOperators) {
    let mesh = build_friedrichs_keller(Rect::unit_square(), n, n).unwrap();
    let ops = assemble(&mesh).unwrap();
    (mesh, ops)
}

pub fn params(epsilon: f64, kappa: f64, tau: f64) -> ModelParams {
    ModelParams {
        epsilon,
        kappa,
        pot_bulk: double_well(0.25).unwrap(),
        pot_surf: double_well(0.25).unwrap(),
        tau,
        t_end: 1.0,
        model: ModelKind::LiuWu,
    }
}

/// Zero inside, one on the boundary.
pub fn fig1_datum(mesh: &TriMesh) -> Vec<f64> {
    (0..mesh.num_vertices()).map(|v| if mesh.is_boundary(v) { 1.0 } else { 0.0 }).collect()
}

pub fn random_field(n: usize, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = SplitMix64::new(seed);
    (0..n).map(|_| rng.next_in(lo, hi)).collect()
}

/// Removes the bulk and surface means by subtracting a combination of the
/// constant field and the boundary indicator.
pub fn mean_free(ops: &FemOperators, mut eta: Vec<f64>) -> Vec<f64> {
    let ones = vec![1.0; ops.num_nodes()];
    let mut chi = vec![0.0; ops.num_nodes()];
    for &v in &ops.trace {
        chi[v] = 1.0;
    }
    // Surface means of 𝟙 and χ are both 1, so only the bulk means differ.
    let (b1, bc) = (ops.bulk_mean(&ones), ops.bulk_mean(&chi));
    let (m1, m2) = (ops.bulk_mean(&eta), ops.surf_mean(&ops.restrict(&eta)));
    // a·b1 + c·bc = m1, a + c = m2
    let c = (m1 - m2 * b1) / (bc - b1);
    let a = m2 - c;
    for (e, (o, x)) in eta.iter_mut().zip(ones.iter().zip(&chi)) {
        *e -= a * o + c * x;
    }
    eta
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub mod dense {
    //! Independent dense reference implementations built straight from the
    //! mesh geometry.

    use chdbc_core::mesh::TriMesh;
    use nalgebra::{DMatrix, DVector};

    pub struct DenseOps {
        pub m: DMatrix<f64>,
        pub k: DMatrix<f64>,
        pub ms: DMatrix<f64>,
        pub ks: DMatrix<f64>,
    }

    pub fn assemble(mesh: &TriMesh) -> DenseOps {
        let n = mesh.num_vertices();
        let mut m = DMatrix::zeros(n, n);
        let mut k = DMatrix::zeros(n, n);
        for t in &mesh.triangles {
            let p: Vec<[f64; 2]> = t.iter().map(|&v| mesh.vertices[v]).collect();
            let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
            // ∇λ_i = rot90(opposite edge) / 2|T|
            let grad: Vec<[f64; 2]> = (0..3)
                .map(|i| {
                    let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                    [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)]
                })
                .collect();
            for i in 0..3 {
                for j in 0..3 {
                    k[(t[i], t[j])] += area * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
                    m[(t[i], t[j])] += area * if i == j { 1.0 / 6.0 } else { 1.0 / 12.0 };
                }
            }
        }
        let nb = mesh.num_boundary();
        let mut ms = DMatrix::zeros(nb, nb);
        let mut ks = DMatrix::zeros(nb, nb);
        for a in 0..nb {
            let b = (a + 1) % nb;
            let (pa, pb) = (mesh.vertices[mesh.boundary_loop[a]], mesh.vertices[mesh.boundary_loop[b]]);
            let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            for (i, j, mass, stiff) in [(a, a, 2.0, 1.0), (b, b, 2.0, 1.0), (a, b, 1.0, -1.0), (b, a, 1.0, -1.0)] {
                ms[(i, j)] += len * mass / 6.0;
                ks[(i, j)] += stiff / len;
            }
        }
        DenseOps { m, k, ms, ks }
    }

    /// Solves `K u = M f` with `𝟙ᵀM u = 0` through the bordered system.
    pub fn constrained_solve(k: &DMatrix<f64>, m: &DMatrix<f64>, f: &[f64]) -> Vec<f64> {
        let n = f.len();
        let w = m * DVector::from_element(n, 1.0);
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n)).copy_from(k);
        for i in 0..n {
            a[(i, n)] = w[i];
            a[(n, i)] = w[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(m * DVector::from_column_slice(f)));
        let x = a.lu().solve(&rhs).expect("bordered system is regular");
        x.as_slice()[..n].to_vec()
    }

    /// `∫_T (Σ φ_i λ_i)^p` over a triangle of area `area`, exactly.
    fn tri_power(phi: [f64; 3], p: u32, area: f64) -> f64 {
        let mut sum = 0.0;
        for a in 0..=p {
            for b in 0..=(p - a) {
                let c = p - a - b;
                sum += phi[0].powi(a as i32) * phi[1].powi(b as i32) * phi[2].powi(c as i32);
            }
        }
        // ∫ λ^α = α! 2|T| / (|α| + 2)!, times the multinomial p!/α!.
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        sum * fact(p) * 2.0 * area / fact(p + 2)
    }

    fn seg_power(u: f64, v: f64, p: u32, len: f64) -> f64 {
        (0..=p).map(|a| u.powi(a as i32) * v.powi((p - a) as i32)).sum::<f64>() * len / f64::from(p + 1)
    }

    /// Total energy with double wells `θ(φ² − 1)² = θ(φ⁴ − 2φ² + 1)`,
    /// integrated exactly over the P1 field.
    pub fn energy(mesh: &TriMesh, eps: f64, kappa: f64, theta_bulk: f64, theta_surf: f64, phi: &[f64]) -> f64 {
        let ops = assemble(mesh);
        let x = DVector::from_column_slice(phi);
        let mut e = 0.5 * eps * x.dot(&(&ops.k * &x));
        for t in &mesh.triangles {
            let p: Vec<[f64; 2]> = t.iter().map(|&v| mesh.vertices[v]).collect();
            let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
            let f = [phi[t[0]], phi[t[1]], phi[t[2]]];
            e += theta_bulk / eps * (tri_power(f, 4, area) - 2.0 * tri_power(f, 2, area) + area);
        }
        let tr: Vec<f64> = mesh.boundary_loop.iter().map(|&v| phi[v]).collect();
        let y = DVector::from_column_slice(&tr);
        e += 0.5 * kappa * eps * y.dot(&(&ops.ks * &y));
        let nb = tr.len();
        for a in 0..nb {
            let b = (a + 1) % nb;
            let (pa, pb) = (mesh.vertices[mesh.boundary_loop[a]], mesh.vertices[mesh.boundary_loop[b]]);
            let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            e += theta_surf / eps * (seg_power(tr[a], tr[b], 4, len) - 2.0 * seg_power(tr[a], tr[b], 2, len) + len);
        }
        e
    }
}
