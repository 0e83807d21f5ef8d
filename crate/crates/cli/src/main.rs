//! `asyncdual` command-line front end.
//!
//! Exit codes: 0 success, 1 validation failure, 2 oracle non-convergence,
//! 3 I/O, schema or usage error.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asyncdual::constants::{choose_gammas, constants_for, PhiDenominator, DEFAULT_SAFETY};
use asyncdual::harness::experiment::{
    preset_schedule, run_experiment, summary, sync_step, write_constants_csv, ExperimentConfig, Mode,
};
use asyncdual::harness::generators::Instance;
use asyncdual::harness::instance::load_instance;
use asyncdual::harness::record::RunRecord;
use asyncdual::oracle::{kkt_solve, reference_solve, solve_reference, ReferenceSolution, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE};
use asyncdual::sim::{run_async, run_sync, RunOptions};
use asyncdual::{validate_problem, Error};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asyncdual", version, about = "Asynchronous distributed dual ascent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural and regularity assumptions of an instance.
    Validate { file: PathBuf },
    /// Per-agent constants and step sizes for a given asynchrony bound.
    Constants {
        file: PathBuf,
        #[arg(long = "Q")]
        q: u64,
        #[arg(long, default_value_t = DEFAULT_SAFETY)]
        safety: f64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value = "owner")]
        phi: PhiDenominator,
    },
    /// One synchronous or asynchronous run.
    Solve {
        file: PathBuf,
        #[arg(long)]
        mode: Mode,
        #[arg(long = "Q-target", default_value_t = 1)]
        q_target: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// A grid of runs over Q targets, step scales and seeds.
    Sweep {
        file: PathBuf,
        #[arg(long = "Q-list", value_delimiter = ',', default_value = "1,25,50,100")]
        q_list: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        scale: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "async")]
        mode: Mode,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Centralized reference solution.
    Oracle {
        file: PathBuf,
        /// Projected-gradient tolerance of the long-run solver.
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
        max_iters: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = DEFAULT_SAFETY)]
    safety: f64,
    #[arg(long, default_value_t = 200_000)]
    horizon: u64,
    #[arg(long, default_value_t = 100)]
    record_every: u64,
    #[arg(long, default_value = "owner")]
    phi: PhiDenominator,
    /// Output directory; without it the run CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Invalid(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Core(Error::from(e))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Invalid(_) => 1,
            Self::Core(Error::NotConverged { .. }) => 2,
            Self::Core(Error::Io(_) | Error::Schema { .. } | Error::Version { .. }) => 3,
            Self::Core(_) => 1,
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    // usage errors share the input-error code; 2 is reserved for the oracle
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Validate { file } => validate(&file),
        Command::Constants { file, q, safety, scale, phi } => constants(&file, q, safety, scale, phi),
        Command::Solve { file, mode, q_target, seed, scale, run } => solve(&file, mode, q_target, seed, scale, &run),
        Command::Sweep { file, q_list, scale, seeds, mode, run } => sweep(&file, mode, q_list, scale, seeds, &run),
        Command::Oracle { file, tol, max_iters } => oracle(&file, tol, max_iters),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Invalid(msg) => eprintln!("error: {msg}"),
                Failure::Core(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(f.code())
        }
    }
}

/// Loads an instance and refuses to go on if a regularity check fails.
fn load_valid(path: &Path) -> Result<Instance, Failure> {
    let loaded = load_instance(path)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let inst = loaded.instance;
    let report = validate_problem(&inst.problem, inst.slater_candidate.as_deref());
    if !report.passed() {
        eprint!("{report}");
        return Err(Failure::Invalid(format!("{} failed validation", path.display())));
    }
    Ok(inst)
}

fn validate(path: &Path) -> CliResult {
    let loaded = load_instance(path)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let inst = loaded.instance;
    let report = validate_problem(&inst.problem, inst.slater_candidate.as_deref());
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Invalid(format!("{} failed validation", path.display())))
    }
}

fn constants(path: &Path, q: u64, safety: f64, scale: f64, phi: PhiDenominator) -> CliResult {
    let inst = load_valid(path)?;
    let table = choose_gammas(&constants_for(&inst.problem, phi)?, q, safety, scale)?;
    let stdout = io::stdout();
    write_constants_csv(&table, stdout.lock())?;
    Ok(())
}

fn reference(inst: &Instance) -> Result<ReferenceSolution, Failure> {
    Ok(solve_reference(&inst.problem)?)
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> asyncdual::Result<()>) -> CliResult {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    body(&mut out)?;
    out.flush()?;
    Ok(())
}

fn emit_record(record: &RunRecord, out: Option<&Path>) -> CliResult {
    match out {
        Some(dir) => write_file(dir, "run.csv", |w| record.write_csv(w)),
        None => Ok(record.write_csv(io::stdout().lock())?),
    }
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    Ok(())
}

fn solve(path: &Path, mode: Mode, q_target: u64, seed: u64, scale: f64, args: &RunArgs) -> CliResult {
    let inst = load_valid(path)?;
    let p = &inst.problem;
    let reference = reference(&inst)?;
    let table = constants_for(p, args.phi)?;
    let options = RunOptions {
        reference: Some(reference.x_star.clone()),
        record_every: args.record_every,
        seed,
        ..RunOptions::default()
    };
    if let Some(dir) = &args.out {
        create_dir(dir)?;
    }
    let out = args.out.as_deref();
    match mode {
        Mode::Sync => {
            let gamma = scale * sync_step(&table, args.safety);
            let mut run = run_sync(p, gamma, args.horizon, &options)?;
            run.record.meta.gamma_scale = scale;
            run.record.meta.gamma_safety = args.safety;
            run.record.meta.admissible = scale * args.safety < 1.0;
            emit_record(&run.record, out)?;
            if let Some(dir) = out {
                write_file(dir, "constants.csv", |w| write_constants_csv(&table, w))?;
            }
        }
        Mode::Async => {
            let preset = preset_schedule(p.graph(), q_target, seed, args.horizon)?;
            let gammas = choose_gammas(&table, preset.realized_q, args.safety, scale)?;
            let run = run_async(p, &gammas, &preset.timeline, &options)?;
            emit_record(&run.record, out)?;
            if let Some(dir) = out {
                write_file(dir, "trace.csv", |w| run.trace.write_csv(w))?;
                write_file(dir, "constants.csv", |w| write_constants_csv(&gammas, w))?;
            }
            eprintln!("realized Q = {} (target {q_target})", preset.realized_q);
        }
    }
    Ok(())
}

fn sweep(path: &Path, mode: Mode, q_list: Vec<u64>, scales: Vec<f64>, seeds: Vec<u64>, args: &RunArgs) -> CliResult {
    let inst = load_valid(path)?;
    let reference = reference(&inst)?;
    let config = ExperimentConfig {
        mode,
        q_targets: q_list,
        safety: args.safety,
        scales,
        seeds,
        horizon: args.horizon,
        record_every: args.record_every,
        phi_denominator: args.phi,
        monitor_dual: false,
    };
    let scenarios = run_experiment(&inst.problem, &reference, &config)?;
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        for s in &scenarios {
            write_file(dir, &format!("{}.csv", s.label()), |w| s.record.write_csv(w))?;
        }
    }
    eprint!("{}", summary(&scenarios));
    let mut out = io::stdout().lock();
    writeln!(out, "label,q_target,realized_q,scale,seed,admissible,final_dist,relative_dist")?;
    for s in &scenarios {
        writeln!(
            out,
            "{},{},{},{:e},{},{},{:e},{:e}",
            s.label(),
            s.q_target,
            s.realized_q,
            s.scale,
            s.seed,
            s.admissible,
            s.final_dist(),
            s.relative_dist()
        )?;
    }
    Ok(())
}

fn oracle(path: &Path, tol: f64, max_iters: u64) -> CliResult {
    let inst = load_valid(path)?;
    let p = &inst.problem;
    // equality-only instances have a direct solve
    let r = if p.has_inequalities() || p.has_boxes() {
        reference_solve(p, tol, max_iters, None)?
    } else {
        kkt_solve(p)?
    };
    let mut out = io::stdout().lock();
    writeln!(out, "# method={}", r.method.as_str())?;
    writeln!(out, "# f_star={:e}", r.f_star)?;
    writeln!(out, "# iterations={}", r.iterations)?;
    writeln!(out, "# primal_residual={:e}", r.residuals.primal)?;
    writeln!(out, "# stationarity={:e}", r.residuals.stationarity)?;
    writeln!(out, "# projected_gradient={:e}", r.residuals.projected_gradient)?;
    writeln!(out, "# max_dual_norm={:e}", r.max_dual_norm)?;
    writeln!(out, "agent,kind,index,value")?;
    for (i, x) in r.x_star.iter().enumerate() {
        for (t, v) in x.iter().enumerate() {
            writeln!(out, "{i},x,{t},{v:e}")?;
        }
    }
    for (i, y) in r.y_star.blocks.iter().enumerate() {
        for (t, v) in y.iter().enumerate() {
            writeln!(out, "{i},y,{t},{v:e}")?;
        }
    }
    Ok(())
}
