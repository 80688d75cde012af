//! Element quadrature for pointwise nonlinearities of P1 fields.
//!
//! Triangles use the symmetric six-point rule of degree 4 and boundary edges
//! three-point Gauss–Legendre (degree 5), so quartic potentials are
//! integrated exactly. Both rules have positive weights and reproduce the
//! consistent mass matrix, hence `Σ_q ω_q c(x_q) v_h(x_q)² ≥ (min c) vᵀMv`.

use crate::fem::FemOperators;
use crate::potentials::Jet;
use crate::sparse::TripletBuilder;

const A1: f64 = 0.445_948_490_915_964_886_32;
const W1: f64 = 0.223_381_589_678_011_465_69;
const A2: f64 = 0.091_576_213_509_770_743_46;
const W2: f64 = 0.109_951_743_655_321_867_64;

/// Barycentric points and weights (summing to 1) on a triangle.
pub const TRIANGLE_RULE: [([f64; 3], f64); 6] = [
    ([A1, A1, 1.0 - 2.0 * A1], W1),
    ([A1, 1.0 - 2.0 * A1, A1], W1),
    ([1.0 - 2.0 * A1, A1, A1], W1),
    ([A2, A2, 1.0 - 2.0 * A2], W2),
    ([A2, 1.0 - 2.0 * A2, A2], W2),
    ([1.0 - 2.0 * A2, A2, A2], W2),
];

/// Points in `[0, 1]` and weights (summing to 1) on a segment.
pub const EDGE_RULE: [(f64, f64); 3] = [
    (0.5 - 0.387_298_334_620_741_7, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.5 + 0.387_298_334_620_741_7, 5.0 / 18.0),
];

/// `∫ f` and the load vector `∫ f' ψ_i` of a nonlinearity `f(u, v)` of two
/// interpolated fields, differentiated in `u` only.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearLoad {
    pub value: f64,
    pub load: Vec<f64>,
}

fn lerp3(field: &[f64], tri: &[usize; 3], b: &[f64; 3]) -> f64 {
    b[0] * field[tri[0]] + b[1] * field[tri[1]] + b[2] * field[tri[2]]
}

pub fn bulk_load(ops: &FemOperators, u: &[f64], v: &[f64], f: impl Fn(f64, f64) -> Jet) -> NonlinearLoad {
    let mut load = vec![0.0; ops.num_nodes()];
    let mut value = 0.0;
    for (tri, &area) in ops.triangles.iter().zip(&ops.areas) {
        for (b, w) in TRIANGLE_RULE {
            let j = f(lerp3(u, tri, &b), lerp3(v, tri, &b));
            let wa = w * area;
            value += wa * j.value;
            for k in 0..3 {
                load[tri[k]] += wa * j.slope * b[k];
            }
        }
    }
    NonlinearLoad { value, load }
}

/// Adds `scale · ∫ f''(u) ψ_i ψ_j` with row/column offsets.
#[allow(clippy::too_many_arguments)]
pub fn bulk_curvature(
    ops: &FemOperators,
    u: &[f64],
    v: &[f64],
    f: impl Fn(f64, f64) -> Jet,
    scale: f64,
    out: &mut TripletBuilder,
    row: usize,
    col: usize,
) {
    for (tri, &area) in ops.triangles.iter().zip(&ops.areas) {
        let mut local = [[0.0; 3]; 3];
        for (b, w) in TRIANGLE_RULE {
            let c = scale * w * area * f(lerp3(u, tri, &b), lerp3(v, tri, &b)).curvature;
            for i in 0..3 {
                for j in 0..3 {
                    local[i][j] += c * b[i] * b[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                out.push(row + tri[i], col + tri[j], local[i][j]);
            }
        }
    }
}

/// Surface analogue of [`bulk_load`] for boundary fields indexed by loop
/// position.
pub fn surf_load(ops: &FemOperators, u: &[f64], v: &[f64], f: impl Fn(f64, f64) -> Jet) -> NonlinearLoad {
    let nb = ops.num_boundary();
    let mut load = vec![0.0; nb];
    let mut value = 0.0;
    for (a, &len) in ops.edge_lengths.iter().enumerate() {
        let b = (a + 1) % nb;
        for (s, w) in EDGE_RULE {
            let j = f((1.0 - s) * u[a] + s * u[b], (1.0 - s) * v[a] + s * v[b]);
            let wl = w * len;
            value += wl * j.value;
            load[a] += wl * j.slope * (1.0 - s);
            load[b] += wl * j.slope * s;
        }
    }
    NonlinearLoad { value, load }
}

/// Surface analogue of [`bulk_curvature`]; `rows` and `cols` send a loop
/// position to its row and column index.
#[allow(clippy::too_many_arguments)]
pub fn surf_curvature(
    ops: &FemOperators,
    u: &[f64],
    v: &[f64],
    f: impl Fn(f64, f64) -> Jet,
    scale: f64,
    out: &mut TripletBuilder,
    rows: impl Fn(usize) -> usize,
    cols: impl Fn(usize) -> usize,
) {
    let nb = ops.num_boundary();
    for (a, &len) in ops.edge_lengths.iter().enumerate() {
        let b = (a + 1) % nb;
        let mut local = [[0.0; 2]; 2];
        for (s, w) in EDGE_RULE {
            let c = scale * w * len * f((1.0 - s) * u[a] + s * u[b], (1.0 - s) * v[a] + s * v[b]).curvature;
            let phi = [1.0 - s, s];
            for i in 0..2 {
                for j in 0..2 {
                    local[i][j] += c * phi[i] * phi[j];
                }
            }
        }
        let idx = [a, b];
        for i in 0..2 {
            for j in 0..2 {
                out.push(rows(idx[i]), cols(idx[j]), local[i][j]);
            }
        }
    }
}
