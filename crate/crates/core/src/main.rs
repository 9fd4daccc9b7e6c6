use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use toml::{Table, Value};

use verticrop::crop_model::{rollout, ModelError};
use verticrop::document::{render_errors, FieldError};
use verticrop::io::{read_schedule, resolved_document, validate_table, write_table, write_trajectory, RunConfig, RunManifest};
use verticrop::ocp::{algorithm1, solve_fixed, OcpError};
use verticrop::scenario::{cycle_length_sweep, reference_schedule, run_named, ScenarioError, ScenarioResult, SweepSpec};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "verticrop", version, about = "Crop growth simulation and setpoint optimization for vertical farms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration document (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Crop parameter file; overrides `crop_file`.
    #[arg(long)]
    crop: Option<PathBuf>,
    /// Smoothing constant; overrides `model.epsilon`.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Sampling-time tolerance; overrides `ocp.delta`.
    #[arg(long)]
    delta: Option<f64>,
    /// Worker threads for sweeps (0 = one per core); overrides `sweep.workers`.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Roll the crop model through an input schedule.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Schedule CSV with temp_c, drought, radiation_mj columns. Falls back
        /// to `inputs_file`, then to the bundled 102-day reference schedule.
        inputs: Option<PathBuf>,
    },
    /// Solve the fixed- or free-final-time problem, or run a named scenario.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        free_final_time: bool,
        /// epsilon-sweep, baseline, cycle-sweep or headline.
        #[arg(long, conflicts_with = "free_final_time")]
        scenario: Option<String>,
    },
    /// Fixed-horizon optimum over a grid of cycle lengths.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Cycle lengths as first:last:step (default 50:175:5).
        #[arg(long)]
        grid: Option<String>,
    },
    /// Print the resolved configuration.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Config(String),
    Numeric(String),
    Io(String),
}

impl Failure {
    fn fields(errors: &[FieldError]) -> Self {
        Failure::Config(render_errors(errors))
    }
}

impl From<OcpError> for Failure {
    fn from(e: OcpError) -> Self {
        match e {
            OcpError::InvalidConfig(f) => Failure::fields(&f),
            other => Failure::Numeric(other.to_string()),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite(_) => Failure::Numeric(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Ocp(o) => o.into(),
            ScenarioError::Model(m) => m.into(),
            ScenarioError::Invalid(s) => Failure::Config(s),
        }
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf()))
}

fn set(doc: &mut Table, section: &str, key: &str, value: Value) {
    let entry = doc.entry(section.to_string()).or_insert_with(|| Value::Table(Table::new()));
    if let Value::Table(t) = entry {
        t.insert(key.to_string(), value);
    }
}

fn load(common: &Common, manifest_inputs: &mut Vec<PathBuf>) -> Result<RunConfig, Failure> {
    let (mut doc, base) = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("config: cannot read {}: {e}", path.display())))?;
            let doc: Table = toml::from_str(&text).map_err(|e| Failure::Config(format!("config: {}", e.message())))?;
            manifest_inputs.push(absolute(path));
            (doc, absolute(path).parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (Table::new(), std::env::current_dir().unwrap_or_default()),
    };
    if let Some(c) = &common.crop {
        doc.insert("crop_file".into(), Value::String(absolute(c).display().to_string()));
    }
    if let Some(e) = common.epsilon {
        set(&mut doc, "model", "epsilon", Value::Float(e));
    }
    if let Some(d) = common.delta {
        set(&mut doc, "ocp", "delta", Value::Float(d));
    }
    if let Some(w) = common.workers {
        set(&mut doc, "sweep", "workers", Value::Integer(w as i64));
    }
    let cfg = validate_table(&doc, &base).map_err(|e| Failure::fields(&e))?;
    manifest_inputs.push(cfg.crop_file.clone());
    Ok(cfg)
}

/// Writes files into the output directory and records their digests.
struct Output {
    dir: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

impl Output {
    fn new(dir: &Path, command: &str, cfg: &RunConfig, inputs: &[PathBuf]) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        let mut manifest = RunManifest::new(command, resolved_document(cfg));
        for p in inputs {
            manifest.add_input(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            started: Instant::now(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        self.manifest.add_output(name, bytes);
        Ok(())
    }

    fn write_toml<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let text = toml::to_string(value).map_err(|e| Failure::Io(e.to_string()))?;
        self.write(name, text.as_bytes())
    }

    fn finish(mut self) -> Result<(), Failure> {
        self.manifest.finish(self.started.elapsed());
        let path = self.dir.join("manifest.toml");
        std::fs::write(&path, self.manifest.to_toml()).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Failure::Io(e.to_string()))?;
    Ok(buf)
}

fn simulate(common: &Common, inputs: Option<&Path>) -> Result<u8, Failure> {
    let mut read = Vec::new();
    let cfg = load(common, &mut read)?;
    let source = inputs.map(absolute).or_else(|| cfg.inputs_file.clone());
    let schedule = match &source {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("inputs: cannot read {}: {e}", p.display())))?;
            read.push(p.clone());
            read_schedule(&text, &cfg.ocp.bounds).map_err(|e| Failure::fields(&e))?
        }
        None => reference_schedule(),
    };
    let o = &cfg.ocp;
    let traj = rollout(&o.x_init, &schedule, cfg.variant, &o.env, &o.crop)?;
    let mut out = Output::new(&common.out_dir, "simulate", &cfg, &read)?;
    out.write("trajectory.csv", &csv_bytes(|b| write_trajectory(b, &traj))?)?;
    out.finish()?;
    println!(
        "{} days, final biomass {:.4} kg/m2, final f_solar {:.5}",
        traj.horizon(),
        traj.final_state().biomass,
        traj.f_solar_series.last().copied().unwrap_or(0.0)
    );
    Ok(0)
}

fn report_scenario(r: &ScenarioResult) -> u8 {
    for m in &r.metrics {
        println!("{:<44} {:>14.6} {}", m.name, m.value, m.units);
    }
    for a in &r.anchors {
        println!("{} {:<40} {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    if r.passed() {
        0
    } else {
        EXIT_NOT_CONVERGED
    }
}

fn write_scenario(out: &mut Output, r: &ScenarioResult) -> Result<(), Failure> {
    out.write_toml("report.toml", r)?;
    if let Some(t) = &r.table {
        out.write(&format!("{}.csv", r.id), &csv_bytes(|b| write_table(b, t))?)?;
    }
    Ok(())
}

fn optimize(common: &Common, free: bool, scenario: Option<&str>) -> Result<u8, Failure> {
    let mut read = Vec::new();
    let cfg = load(common, &mut read)?;
    let mut out = Output::new(&common.out_dir, "optimize", &cfg, &read)?;
    let code = if let Some(name) = scenario {
        let r = run_named(name, &cfg.ocp, cfg.workers)?;
        write_scenario(&mut out, &r)?;
        report_scenario(&r)
    } else if free {
        let search = algorithm1(&cfg.ocp)?;
        out.write_toml("report.toml", &search)?;
        out.write("trajectory.csv", &csv_bytes(|b| write_trajectory(b, &search.report.trajectory))?)?;
        println!(
            "N* = {} days after {} iterations, T = {:.5}, biomass {:.4} kg/m2, J_t = {:.4}, converged: {}",
            search.n_star,
            search.iterations,
            search.report.sampling_time.unwrap_or(1.0),
            search.report.final_biomass,
            search.report.objective,
            search.converged
        );
        if search.converged {
            0
        } else {
            EXIT_NOT_CONVERGED
        }
    } else {
        let r = solve_fixed(&cfg.ocp)?;
        out.write_toml("report.toml", &r)?;
        out.write("trajectory.csv", &csv_bytes(|b| write_trajectory(b, &r.trajectory))?)?;
        println!(
            "N = {} days, biomass {:.4} kg/m2, J = {:.4}, |g| = {:.2e}, converged: {}",
            r.horizon, r.final_biomass, r.objective, r.constraint_residual, r.converged
        );
        if r.converged {
            0
        } else {
            EXIT_NOT_CONVERGED
        }
    };
    out.finish()?;
    Ok(code)
}

fn parse_grid(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::Config(format!("grid: expected first:last:step, got '{s}'"));
    let parts: Vec<usize> = s.split(':').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, step] if a >= 1 && a <= b && step >= 1 => Ok((a..=b).step_by(step).collect()),
        _ => Err(bad()),
    }
}

fn sweep(common: &Common, grid: Option<&str>) -> Result<u8, Failure> {
    let mut read = Vec::new();
    let cfg = load(common, &mut read)?;
    let mut spec = SweepSpec {
        workers: cfg.workers,
        ..SweepSpec::reference()
    };
    if let Some(g) = grid {
        spec.grid = parse_grid(g)?;
        // reference values belong to the reference grid
        spec.anchors.clear();
    }
    let mut out = Output::new(&common.out_dir, "sweep", &cfg, &read)?;
    let r = cycle_length_sweep(&spec, &cfg.ocp)?;
    write_scenario(&mut out, &r)?;
    out.finish()?;
    Ok(report_scenario(&r))
}

fn validate(common: &Common) -> Result<u8, Failure> {
    let cfg = load(common, &mut Vec::new())?;
    print!("{}", verticrop::io::resolved_toml(&cfg));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common, inputs } => simulate(common, inputs.as_deref()),
        Command::Optimize {
            common,
            free_final_time,
            scenario,
        } => optimize(common, *free_final_time, scenario.as_deref()),
        Command::Sweep { common, grid } => sweep(common, grid.as_deref()),
        Command::Validate { common } => validate(common),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error:\n{msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(EXIT_NUMERIC)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("i/o error: {msg}");
            ExitCode::FAILURE
        }
    }
}
