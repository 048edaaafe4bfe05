//! `ddtune` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 failed
//! verification or optimization, 3 physically infeasible request.

pub mod config;
mod report;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use ddtune::exec::Execution;
use ddtune::ift_engine::{
    estimate_cost_gradient, estimate_signal_gradients, finite_difference_gradient, optimize, run_experiment_triple,
    unbiasedness_trial, Termination, MIN_TRIALS,
};
use ddtune::maglev::{
    allocate_currents, closed_form_determinant, direct_determinant, forcer_force, invertibility_margin, ForceVector,
    MaglevError, MaglevGeometry, PhaseCurrents, DEFAULT_CURRENT_LIMIT,
};
use ddtune::trajectory::validate_profile;

pub use config::ScenarioConfig;

/// Relative tolerance of the gradient check.
pub const GRADCHECK_TOL: f64 = 0.02;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Failed(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ddtune", version, about = "Data-driven PID tuning from closed-loop experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the tuning loop and export iteration logs and experiment data.
    Tune { config: PathBuf },
    /// Compare the data-driven gradient with central differences.
    Gradcheck {
        config: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        delta: f64,
    },
    /// Monte-Carlo check that the gradient estimate is unbiased.
    Unbiased {
        config: PathBuf,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        /// Run trials on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Forcer model of the maglev stage.
    Maglev {
        #[command(subcommand)]
        op: MaglevOp,
    },
    /// Generate and validate the reference S-curve.
    Profile { config: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum MaglevOp {
    /// Force produced by phase currents at a pose.
    Force {
        #[arg(allow_negative_numbers = true)]
        x: f64,
        z: f64,
        #[arg(allow_negative_numbers = true)]
        i1: f64,
        #[arg(allow_negative_numbers = true)]
        i2: f64,
        #[command(flatten)]
        geom: GeomArgs,
    },
    /// Phase currents realising a force at a pose.
    Alloc {
        #[arg(allow_negative_numbers = true)]
        fx: f64,
        #[arg(allow_negative_numbers = true)]
        fz: f64,
        #[arg(allow_negative_numbers = true)]
        x: f64,
        z: f64,
        #[arg(long, default_value_t = DEFAULT_CURRENT_LIMIT)]
        limit: f64,
        #[command(flatten)]
        geom: GeomArgs,
    },
    /// Closed-form and direct determinant of the phase matrix.
    Det {
        z: f64,
        #[command(flatten)]
        geom: GeomArgs,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct GeomArgs {
    #[arg(long, default_value_t = ddtune::maglev::DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = ddtune::maglev::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = ddtune::maglev::DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cf: f64,
    #[arg(long, default_value_t = 4)]
    pub n_coils: u32,
}

impl GeomArgs {
    fn geometry(&self) -> Result<MaglevGeometry, CliError> {
        MaglevGeometry::new(self.tau, self.alpha, self.beta, self.cf, self.n_coils)
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        Command::Tune { config } => cmd_tune(&config, out, err),
        Command::Gradcheck { config, delta } => cmd_gradcheck(&config, delta, out, err),
        Command::Unbiased {
            config,
            trials,
            sequential,
        } => {
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::default()
            };
            cmd_unbiased(&config, trials, exec, out)
        }
        Command::Maglev { op } => cmd_maglev(op, out),
        Command::Profile { config } => cmd_profile(&config, out),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

pub fn cmd_tune(config_path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = ScenarioConfig::load(config_path)?;
    let scenario = cfg.scenario()?;
    let outcome =
        optimize(&scenario, &cfg.optimize_config()).map_err(|e| CliError::Failed(format!("optimization failed: {e}")))?;

    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    let log_path = dir.join("iterations.jsonl");
    let mut log = create_file(&log_path)?;
    for r in &outcome.reports {
        let line = serde_json::to_string(&report::IterationLine::from(r)).expect("plain data serializes");
        writeln!(log, "{line}").map_err(io_err(&log_path))?;
        for (k, rec) in r.records.iter().enumerate() {
            let p = dir.join(format!("iter{}_exp{}.csv", r.index, k + 1));
            let mut f = create_file(&p)?;
            rec.write_csv(&mut f).and_then(|_| f.flush()).map_err(io_err(&p))?;
        }
    }
    log.flush().map_err(io_err(&log_path))?;

    let summary = report::tune_summary(&outcome, scenario.noise_sigma);
    write_text(&dir.join("summary.txt"), &summary)?;
    emit(out, &summary)?;
    if let Termination::GuardExhausted(msg) = &outcome.termination {
        let _ = writeln!(err, "error: {msg}");
        return Ok(2);
    }
    Ok(0)
}

pub fn cmd_gradcheck(config_path: &Path, delta: f64, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    if !(1e-6..=1e-2).contains(&delta) {
        return Err(CliError::Config(format!("--delta must be in [1e-6, 1e-2], got {delta}")));
    }
    let cfg = ScenarioConfig::load(config_path)?;
    if cfg.noise_requested() {
        let _ = writeln!(
            err,
            "warning: the finite-difference oracle is only meaningful with noise off; set [noise] sigma = 0"
        );
        return Ok(1);
    }
    let scenario = cfg.scenario()?;
    let rho = scenario.rho0;
    let failed = |e: ddtune::ift_engine::IftError| CliError::Failed(e.to_string());
    let t = run_experiment_triple(&scenario, &rho, 0).map_err(failed)?;
    let sg = estimate_signal_gradients(&t.rec2, &rho, &scenario.basis).map_err(failed)?;
    let dd = estimate_cost_gradient(&sg, &t.rec3, &scenario.weights)
        .map_err(failed)?
        .grad_array();
    let fd = finite_difference_gradient(&scenario, &rho, delta, Execution::default()).map_err(failed)?;

    let (text, ok) = report::gradcheck_table(&dd, &fd, delta, GRADCHECK_TOL);
    prepare_dir(&cfg.output.dir)?;
    write_text(&cfg.output.dir.join("gradcheck.txt"), &text)?;
    emit(out, &text)?;
    Ok(if ok { 0 } else { 2 })
}

pub fn cmd_unbiased(config_path: &Path, trials: usize, exec: Execution, out: &mut dyn Write) -> Result<i32, CliError> {
    if trials < MIN_TRIALS {
        return Err(CliError::Config(format!("--trials must be at least {MIN_TRIALS}, got {trials}")));
    }
    let cfg = ScenarioConfig::load(config_path)?;
    let scenario = cfg.scenario()?;
    let rep = unbiasedness_trial(&scenario, &scenario.rho0, trials, exec).map_err(|e| CliError::Failed(e.to_string()))?;
    let text = report::unbiased_table(&rep);
    prepare_dir(&cfg.output.dir)?;
    write_text(&cfg.output.dir.join("unbiased.txt"), &text)?;
    let json = serde_json::to_string_pretty(&rep).expect("plain data serializes");
    write_text(&cfg.output.dir.join("unbiased.json"), &(json + "\n"))?;
    emit(out, &text)?;
    Ok(if rep.correct_passes() { 0 } else { 2 })
}

fn maglev_err(e: MaglevError) -> CliError {
    match e {
        MaglevError::InvalidGap(_) | MaglevError::InvalidGeometry(_) => CliError::Config(e.to_string()),
        MaglevError::OverLimit { .. } => CliError::Infeasible(e.to_string()),
        MaglevError::Singular { .. } => CliError::Config(e.to_string()),
    }
}

pub fn cmd_maglev(op: MaglevOp, out: &mut dyn Write) -> Result<i32, CliError> {
    let text = match op {
        MaglevOp::Force { x, z, i1, i2, geom } => {
            let g = geom.geometry()?;
            let f = forcer_force(x, z, PhaseCurrents { i1, i2 }, &g).map_err(maglev_err)?;
            format!("fx {:.17e}\nfz {:.17e}\n", f.fx + 0.0, f.fz + 0.0)
        }
        MaglevOp::Alloc {
            fx,
            fz,
            x,
            z,
            limit,
            geom,
        } => {
            let g = geom.geometry()?;
            match allocate_currents(ForceVector { fx, fz }, x, z, &g, limit) {
                // `+ 0.0` folds negative zero
                Ok(i) => format!("i1 {:.17e}\ni2 {:.17e}\n", i.i1 + 0.0, i.i2 + 0.0),
                Err(MaglevError::OverLimit { currents, limit }) => {
                    emit(
                        out,
                        &format!(
                            "over-limit {limit} A\ni1 {:.17e}\ni2 {:.17e}\n",
                            currents.i1, currents.i2
                        ),
                    )?;
                    return Ok(3);
                }
                Err(e) => return Err(maglev_err(e)),
            }
        }
        MaglevOp::Det { z, geom } => {
            let g = geom.geometry()?;
            let closed = closed_form_determinant(z, &g).map_err(maglev_err)?;
            let mut s = format!(
                "margin {:.17e}\nclosed_form {closed:.17e}\n",
                invertibility_margin(&g)
            );
            for k in 0..4 {
                let x = k as f64 * g.tau;
                let d = direct_determinant(x, z, &g).map_err(maglev_err)?;
                s += &format!("direct x={x:.6e} {d:.17e}\n");
            }
            s
        }
    };
    emit(out, &text)?;
    Ok(0)
}

pub fn cmd_profile(config_path: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = ScenarioConfig::load(config_path)?;
    // an unplannable reference is a bad configuration here, not a runtime failure
    let profile = cfg.profile().map_err(|e| CliError::Config(e.to_string()))?;
    let bounds = cfg.bounds();
    let rep = validate_profile(&profile, &bounds);
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    let p = dir.join("profile.csv");
    let mut f = create_file(&p)?;
    profile.write_csv(&mut f).and_then(|_| f.flush()).map_err(io_err(&p))?;
    let text = format!(
        "samples {}\nduration {:.6e} s\nfinal_position {:.17e}\n{rep}",
        profile.len(),
        profile.duration(),
        profile.pos.last().copied().unwrap_or(0.0)
    );
    write_text(&dir.join("profile_report.txt"), &text)?;
    emit(out, &text)?;
    Ok(if rep.all_passed() { 0 } else { 2 })
}
