//! Batch front end: `run`, `convergence` and `balance` subcommands.
//!
//! Exit codes: 0 on success, 1 when a run fails or a balance check does not
//! hold, 2 for unusable input (missing files, bad configuration).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::grid::{build_grid, GridError};
use crate::io::{
    load_config, parse_config_with, read_raster, write_gauges, write_snapshot, write_table, ConvergenceRow,
    GaugeRecorder, IoError, RunConfig, SnapshotWriter,
};
use crate::scenarios::{l1_error, relative_drift, Component, Scenario};
use crate::solver::{Observer, Solver, SolverError};

#[derive(Debug, Parser)]
#[command(name = "cweno-swe", version, about = "CWENO shallow water solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configured simulation and write its outputs.
    Run(CommonArgs),
    /// Grid refinement study against an exact solution.
    Convergence(ConvergenceArgs),
    /// Water-at-rest drift check.
    Balance(BalanceArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Configuration file (`section.key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set scheme.order=4`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Noise seed for the spherical rest scenario.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Cells per direction, one entry per grid.
    #[arg(long, value_delimiter = ',', default_values_t = [25, 50, 100, 200, 400])]
    pub grids: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BalanceGeometry {
    Spherical,
    Cartesian,
}

#[derive(Debug, Args)]
pub struct BalanceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Scenario used when no configuration file is given.
    #[arg(long, value_enum, default_value_t = BalanceGeometry::Spherical)]
    pub geometry: BalanceGeometry,
    /// Times at which the drift is reported.
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 60.0, 120.0])]
    pub checkpoints: Vec<f64>,
    /// Largest admissible relative L¹ drift.
    #[arg(long, default_value_t = 1e-12)]
    pub tolerance: f64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Input(#[from] IoError),
    #[error("grid: {0}")]
    Grid(#[from] GridError),
    #[error("solver: {0}")]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Output(String),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) | CliError::Grid(_) => 2,
            CliError::Solver(_) | CliError::Output(_) | CliError::CheckFailed(_) => 1,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Run(c) => c,
        Command::Convergence(a) => &a.common,
        Command::Balance(a) => &a.common,
    };
    // A global pool can only be installed once per process; later calls
    // keep the first one, which only affects speed.
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(common.threads).build_global() {
        log::debug!("thread pool already initialised: {e}");
    }
    match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Convergence(a) => cmd_convergence(a),
        Command::Balance(a) => cmd_balance(a),
    }
}

fn load(common: &CommonArgs, fallback: &str) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Usage(format!("config file {} does not exist", path.display())));
            }
            load_config(path, &common.overrides)?
        }
        None => parse_config_with(fallback, &common.overrides).map_err(IoError::from)?,
    };
    if let Some(dir) = &common.output {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = common.seed {
        match &mut cfg.scenario {
            Scenario::SphericalRest(p) => p.seed = seed,
            other => log::warn!("--seed has no effect on scenario {}", other.name()),
        }
    }
    Ok(cfg)
}

fn bathymetry(cfg: &RunConfig, grid: &crate::grid::Grid) -> Result<Option<Vec<f64>>, CliError> {
    match (&cfg.raster, &cfg.scenario) {
        (Some(r), _) => {
            let raster = read_raster(&r.path)?;
            Ok(Some(raster.depths_on(grid, r, cfg.scheme.quad_vol, &r.path)?))
        }
        (None, Scenario::Bathymetry { .. }) => {
            Err(CliError::Usage("scenario bathymetry needs raster.path".into()))
        }
        (None, _) => Ok(None),
    }
}

fn output_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output.dir.join(format!("{}{name}", cfg.output.prefix))
}

fn snapshot_times(cfg: &RunConfig) -> Vec<f64> {
    let end = cfg.scheme.end_time;
    let mut times: Vec<f64> = cfg.output.snapshot_times.iter().copied().filter(|&t| t <= end).collect();
    if let Some(every) = cfg.output.snapshot_every {
        let n = (end / every).floor() as u64;
        times.extend((0..=n).map(|k| k as f64 * every));
    }
    times.push(end);
    times
}

fn cmd_run(common: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(common, "")?;
    let grid = build_grid(&cfg.grid, &cfg.bc)?;
    let bathy = bathymetry(&cfg, &grid)?;
    let mut field = cfg.scenario.initialize(&grid, cfg.scheme.quad_vol, cfg.scheme.g, bathy.as_deref());
    let mut solver = Solver::new(&grid, &cfg.bc, &cfg.scheme)?;
    let mut snaps = SnapshotWriter::new(&cfg.output.dir, &cfg.output.prefix, snapshot_times(&cfg));
    let mut gauges = GaugeRecorder::new(&cfg.output.gauges, &grid).map_err(CliError::Usage)?;
    log::info!(
        "run {} on {}x{} cells, {} to t = {}",
        cfg.scenario.name(),
        grid.nx,
        grid.ny,
        cfg.scheme.variant.name(),
        cfg.scheme.end_time
    );
    let log = {
        let mut obs: Vec<&mut dyn Observer> = vec![&mut snaps, &mut gauges];
        solver.advance(&mut field, 0.0, cfg.scheme.end_time, &mut obs)?
    };
    for (n, s) in gauges.series.iter().enumerate() {
        write_gauges(s, &output_path(&cfg, &format!("gauge_{n}.csv"))).map_err(|e| CliError::Output(e.to_string()))?;
    }
    println!(
        "steps {} t {} dt [{:e}, {:e}] clamps {} of {} cell-steps, deepest {:e}",
        log.steps, log.t_final, log.dt_min, log.dt_max, log.clamp_events, log.cell_steps, log.clamp_depth
    );
    if let Some(exact) = cfg.scenario.exact(&grid, log.t_final, cfg.scheme.quad_vol, cfg.scheme.g, bathy.as_deref()) {
        let e = [Component::A, Component::M1, Component::M2].map(|c| l1_error(&field, &exact, &grid, c));
        println!("l1 errors h {:e} qx {:e} qy {:e}", e[0], e[1], e[2]);
    }
    for p in &snaps.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_convergence(args: &ConvergenceArgs) -> Result<(), CliError> {
    if args.grids.len() < 2 {
        return Err(CliError::Usage("a convergence study needs at least two grids".into()));
    }
    if args.grids.contains(&0) {
        return Err(CliError::Usage("grid sizes must be positive".into()));
    }
    let base = load(&args.common, "")?;
    if !base.scenario.has_exact() {
        return Err(CliError::Usage(format!("scenario {} has no exact solution", base.scenario.name())));
    }
    let mut rows = Vec::new();
    for &n in &args.grids {
        let mut cfg = base.clone();
        cfg.grid.nx = Some(n);
        cfg.grid.ny = Some(n);
        cfg.grid.dx = None;
        cfg.grid.dy = None;
        let grid = build_grid(&cfg.grid, &cfg.bc)?;
        let bathy = bathymetry(&cfg, &grid)?;
        let (q, g) = (cfg.scheme.quad_vol, cfg.scheme.g);
        let mut field = cfg.scenario.initialize(&grid, q, g, bathy.as_deref());
        let log = Solver::new(&grid, &cfg.bc, &cfg.scheme)?.advance(&mut field, 0.0, cfg.scheme.end_time, &mut [])?;
        let exact = cfg.scenario.exact(&grid, log.t_final, q, g, bathy.as_deref()).expect("checked above");
        let err = [Component::A, Component::M1, Component::M2].map(|c| l1_error(&field, &exact, &grid, c));
        log::info!("N = {n}: {} steps, errors {err:?}", log.steps);
        rows.push(ConvergenceRow { n, err });
    }
    let table = crate::io::format_table(&rows);
    print!("{table}");
    write_table(&rows, &output_path(&base, "convergence.csv")).map_err(|e| CliError::Output(e.to_string()))?;
    Ok(())
}

/// Observer recording the drift of the water column at fixed times.
struct DriftProbe {
    reference: crate::grid::StateField,
    times: Vec<f64>,
    drifts: Vec<(f64, f64)>,
}

impl Observer for DriftProbe {
    fn sample_times(&self) -> Vec<f64> {
        self.times.clone()
    }

    fn observe(&mut self, t: f64, field: &crate::grid::StateField, grid: &crate::grid::Grid) -> Result<(), String> {
        if self.times.contains(&t) {
            self.drifts.push((t, relative_drift(field, &self.reference, grid)));
        }
        Ok(())
    }
}

fn cmd_balance(args: &BalanceArgs) -> Result<(), CliError> {
    let fallback = match args.geometry {
        BalanceGeometry::Spherical => "scenario.name = spherical_rest",
        BalanceGeometry::Cartesian => "scenario.name = step_lake",
    };
    let mut checkpoints = args.checkpoints.clone();
    if checkpoints.is_empty() || checkpoints.iter().any(|&t| !(t > 0.0)) {
        return Err(CliError::Usage("checkpoints must be positive times".into()));
    }
    checkpoints.sort_by(f64::total_cmp);
    checkpoints.dedup();
    let cfg = load(&args.common, fallback)?;
    let grid = build_grid(&cfg.grid, &cfg.bc)?;
    let bathy = bathymetry(&cfg, &grid)?;
    let mut field = cfg.scenario.initialize(&grid, cfg.scheme.quad_vol, cfg.scheme.g, bathy.as_deref());
    let mut solver = Solver::new(&grid, &cfg.bc, &cfg.scheme)?;
    solver.prepare(&mut field);
    let end = *checkpoints.last().expect("non-empty");
    let mut probe = DriftProbe { reference: field.clone(), times: checkpoints, drifts: Vec::new() };
    let log = solver.advance(&mut field, 0.0, end, &mut [&mut probe])?;

    let mut csv = String::from("t,drift\n");
    let mut ok = true;
    for &(t, d) in &probe.drifts {
        let pass = d <= args.tolerance;
        ok &= pass;
        println!("t = {t}: relative L1 drift {d:e} {}", if pass { "ok" } else { "FAIL" });
        csv.push_str(&format!("{t},{d}\n"));
    }
    println!("{} {} steps, {} variant", cfg.scenario.name(), log.steps, cfg.scheme.variant.name());
    write_text(&output_path(&cfg, "balance.csv"), &csv)?;
    write_snapshot(&field, &grid, end, &output_path(&cfg, "balance_final.csv"))
        .map_err(|e| CliError::Output(e.to_string()))?;
    if ok {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("drift exceeds {:e}", args.tolerance)))
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}
