//! Run orchestration and the two demo presets.

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::energy::{holder_quotient, total_energy, DiagError, DiagnosticsRecord, EnergyLedger, ModelKind, ModelParams, State};
use crate::fem::{assemble, FemError, FemOperators};
use crate::mesh::{build_friedrichs_keller, MeshError, Rect, TriMesh};
use crate::potentials::double_well;
use crate::stepper::{StepError, Stepper, StepperConfig, StepperKind};

use super::config::{ConfigError, Formats, InitSpec, SimConfig};
use super::init::make_initial;
use super::output::{write_outputs, DiagnosticsWriter};

/// Relative slack for counting an energy increase as a violation.
pub const ENERGY_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("assembly: {0}")]
    Fem(#[from] FemError),
    #[error("step {step}: {source}")]
    Solver { step: usize, source: StepError },
    #[error("diagnostics: {0}")]
    Diag(#[from] DiagError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl SimError {
    /// Process exit code: 2 for configuration problems, 3 for solver
    /// failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::Mesh(_) | SimError::Fem(_) => 2,
            SimError::Solver { .. } | SimError::Diag(_) => 3,
            SimError::Io { .. } => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps_taken: usize,
    pub final_energy: f64,
    pub max_bulk_mass_drift: f64,
    pub max_surf_mass_drift: f64,
    /// Steps where `E` rose by more than `ENERGY_SLACK · (1 + |E|)`.
    pub energy_violations: usize,
    /// Steps where the cumulative dissipation inequality failed at `1e-8`.
    pub ledger_violations: usize,
    /// Over the snapshot history; `None` with fewer than two snapshots.
    pub holder_quotient: Option<f64>,
    /// `max |φ_Γ − ⟨φ⁰⟩_Γ|` at the final step.
    pub boundary_deviation: f64,
    /// Fraction of nodes with `|φ| > 0.9` at the final step.
    pub separated_fraction: f64,
    pub newton_iterations: usize,
    /// `Σ τ(‖∇μ‖² + ‖∇_Γμ_Γ‖²)` with weight ½ (the asserted ledger) and 1.
    pub half_dissipation: f64,
    pub full_dissipation: f64,
}

/// Mesh, operators and configuration of one run.
pub struct Problem {
    pub config: SimConfig,
    pub mesh: TriMesh,
    pub ops: FemOperators,
}

impl Problem {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mesh = build_friedrichs_keller(config.domain, config.nx, config.ny)?;
        let ops = assemble(&mesh)?;
        Ok(Problem { config, mesh, ops })
    }

    pub fn initial_state(&self) -> State {
        State::initial(&self.ops, &self.config.params, make_initial(&self.mesh, &self.config.init))
    }

    pub fn start(&self) -> Result<Simulation<'_>, SimError> {
        let stepper = Stepper::new(&self.ops, self.config.params.clone(), self.config.stepper)
            .map_err(|source| SimError::Solver { step: 0, source })?;
        let state = self.initial_state();
        let (ledger, record) = EnergyLedger::start(&self.ops, &self.config.params, &state);
        Ok(Simulation { problem: self, stepper, state, ledger, last: record, steps: 0, iterations: 0 })
    }
}

/// A run in progress.
pub struct Simulation<'a> {
    problem: &'a Problem,
    stepper: Stepper<'a>,
    state: State,
    ledger: EnergyLedger,
    last: DiagnosticsRecord,
    steps: usize,
    iterations: usize,
}

impl<'a> Simulation<'a> {
    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn last_record(&self) -> &DiagnosticsRecord {
        &self.last
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn newton_iterations(&self) -> usize {
        self.iterations
    }

    pub fn stepper(&self) -> &Stepper<'a> {
        &self.stepper
    }

    pub fn step(&mut self) -> Result<&DiagnosticsRecord, SimError> {
        let p = self.problem;
        let next = self
            .stepper
            .step(&self.state)
            .map_err(|source| SimError::Solver { step: self.steps + 1, source })?;
        self.last = self.ledger.record_step(&p.ops, &p.config.params, &self.state, &next)?;
        self.iterations += self.stepper.last_stats().iterations;
        self.state = next;
        self.steps += 1;
        Ok(&self.last)
    }
}

/// Runs `config` to its final time, writing into `config.output`.
pub fn run(config: &SimConfig) -> Result<RunSummary, SimError> {
    let problem = Problem::new(config.clone())?;
    run_problem(&problem, |_| {})
}

/// As [`run`], calling `observe` after every step with the new record.
pub fn run_problem(problem: &Problem, mut observe: impl FnMut(&DiagnosticsRecord)) -> Result<RunSummary, SimError> {
    let config = &problem.config;
    let dir = config.output.as_path();
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut sim = problem.start()?;
    let csv_path = dir.join("diagnostics.csv");
    let mut csv = match config.formats.csv {
        true => Some(DiagnosticsWriter::create(&csv_path).map_err(io_err(&csv_path))?),
        false => None,
    };
    if let Some(w) = csv.as_mut() {
        w.write(sim.last_record()).map_err(io_err(&csv_path))?;
    }
    write_outputs(&problem.mesh, sim.state(), 0, config.formats, dir).map_err(io_err(dir))?;

    let ops = &problem.ops;
    let params = &config.params;
    let initial_surf_mean = ops.surf_mean(&ops.restrict(&sim.state().phi));
    let mut history = vec![(sim.state().t, sim.state().phi.clone())];
    let (mut bulk_drift, mut surf_drift) = (0.0f64, 0.0f64);
    let (mut energy_violations, mut ledger_violations) = (0, 0);
    let mut energy = sim.last_record().energy.e_total;

    let total = config.num_steps();
    for step in 1..=total {
        let record = *sim.step()?;
        observe(&record);
        if let Some(w) = csv.as_mut() {
            w.write(&record).map_err(io_err(&csv_path))?;
        }
        bulk_drift = bulk_drift.max(record.bulk_mean_drift);
        if params.has_surface() {
            surf_drift = surf_drift.max(record.surf_mean_drift);
        }
        let e = record.energy.e_total;
        if e > energy + ENERGY_SLACK * (1.0 + energy.abs()) {
            energy_violations += 1;
        }
        if !record.ledger_holds(1e-8) {
            ledger_violations += 1;
        }
        energy = e;
        if step % config.snapshot_every == 0 || step == total {
            write_outputs(&problem.mesh, sim.state(), step, config.formats, dir).map_err(io_err(dir))?;
            history.push((sim.state().t, sim.state().phi.clone()));
        }
    }
    if let Some(w) = csv {
        w.finish().map_err(io_err(&csv_path))?;
    }

    let phi = &sim.state().phi;
    let boundary_deviation = ops.trace.iter().map(|&v| (phi[v] - initial_surf_mean).abs()).fold(0.0, f64::max);
    let separated = phi.iter().filter(|v| v.abs() > 0.9).count();
    Ok(RunSummary {
        steps_taken: sim.steps_taken(),
        final_energy: total_energy(ops, params, phi).e_total,
        max_bulk_mass_drift: bulk_drift,
        max_surf_mass_drift: surf_drift,
        energy_violations,
        ledger_violations,
        holder_quotient: if history.len() >= 2 { Some(holder_quotient(ops, &history)?) } else { None },
        boundary_deviation,
        separated_fraction: separated as f64 / phi.len() as f64,
        newton_iterations: sim.newton_iterations(),
        half_dissipation: sim.last_record().half_dissipation,
        full_dissipation: sim.last_record().full_dissipation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Demo {
    /// Unit square, bulk 0 and boundary 1.
    Fig1,
    /// Quarter-size square with random bulk and boundary data.
    Fig2,
}

impl Demo {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fig1" => Some(Demo::Fig1),
            "fig2" => Some(Demo::Fig2),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Demo::Fig1 => "fig1",
            Demo::Fig2 => "fig2",
        }
    }

    /// Full-resolution preset: 100 × 100 cells, `ε = 0.02`, `τ = 8e-6`,
    /// 2000 steps.
    pub fn config(self) -> SimConfig {
        let (domain, kappa, init) = match self {
            Demo::Fig1 => (Rect::unit_square(), 0.02, InitSpec::Constant { bulk_value: 0.0, boundary_value: 1.0 }),
            Demo::Fig2 => (
                Rect { x0: 0.0, y0: 0.0, x1: 0.5, y1: 0.5 },
                0.075,
                InitSpec::Random { bulk_lo: -0.1, bulk_hi: 0.1, surf_lo: 0.4, surf_hi: 0.6, seed: 1 },
            ),
        };
        let tau = 8e-6;
        let well = double_well(0.25).expect("positive theta");
        SimConfig {
            domain,
            nx: 100,
            ny: 100,
            params: ModelParams {
                epsilon: 0.02,
                kappa,
                pot_bulk: well.clone(),
                pot_surf: well,
                tau,
                t_end: 2000.0 * tau,
                model: ModelKind::LiuWu,
            },
            stepper: StepperConfig::default(),
            init,
            output: PathBuf::from("out").join(self.name()),
            snapshot_every: 100,
            formats: Formats::all(),
        }
    }

    /// Preset with optional overrides of the grid, step count and scheme.
    pub fn config_with(self, nx: Option<usize>, steps: Option<usize>, stepper: Option<StepperKind>) -> SimConfig {
        let mut c = self.config();
        if let Some(n) = nx {
            c.nx = n;
            c.ny = n;
        }
        if let Some(k) = steps {
            c.params.t_end = k as f64 * c.params.tau;
        }
        if let Some(kind) = stepper {
            c.stepper.kind = kind;
        }
        c
    }
}
