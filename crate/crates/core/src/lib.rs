//! Finite elements for the Cahn–Hilliard equation with dynamic boundary
//! conditions: meshes, operators, energies, three time steppers and a small
//! simulation driver.

pub mod energy;
pub mod fem;
pub mod mesh;
pub mod potentials;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod sparse;
pub mod stepper;

pub use energy::{DiagnosticsRecord, EnergyReport, ModelKind, ModelParams, State};
pub use fem::{assemble, FemOperators, MeanPair};
pub use mesh::{build_friedrichs_keller, Rect, TriMesh};
pub use potentials::{double_well, PotentialSplit};
pub use sim::{parse_config, run, Demo, RunSummary, SimConfig, SimError};
pub use stepper::{MuRing, Stepper, StepperConfig, StepperKind};

/// Caps the worker threads used for assembly. Results do not depend on the
/// count. Fails if the global pool was already initialized.
pub fn set_thread_limit(threads: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}
