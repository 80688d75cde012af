//! Configuration, initial data, run loop and file output.

pub mod config;
pub mod init;
pub mod output;
pub mod run;

pub use config::{parse_config, ConfigError, Formats, InitSpec, SimConfig};
pub use init::make_initial;
pub use output::{read_vtk, write_outputs, VtkData, CSV_HEADER};
pub use run::{run, run_problem, Demo, Problem, RunSummary, SimError, Simulation};
