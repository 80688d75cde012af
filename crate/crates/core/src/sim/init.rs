//! Initial phase fields.

use crate::mesh::TriMesh;
use crate::rng::SplitMix64;

use super::config::InitSpec;

/// Nodal initial field. Random data draws one value per vertex in index
/// order, from the boundary range on Γ and the bulk range elsewhere.
pub fn make_initial(mesh: &TriMesh, init: &InitSpec) -> Vec<f64> {
    let n = mesh.num_vertices();
    match *init {
        InitSpec::Constant { bulk_value, boundary_value } => {
            (0..n).map(|v| if mesh.is_boundary(v) { boundary_value } else { bulk_value }).collect()
        }
        InitSpec::Random { bulk_lo, bulk_hi, surf_lo, surf_hi, seed } => {
            let mut rng = SplitMix64::new(seed);
            (0..n)
                .map(|v| if mesh.is_boundary(v) { rng.next_in(surf_lo, surf_hi) } else { rng.next_in(bulk_lo, bulk_hi) })
                .collect()
        }
    }
}
