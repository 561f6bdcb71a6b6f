//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{run_benchmark, values_on_grid, ConstantModeLaw, OraclePayoff};
use crate::config::{extreme_modes, Config, RunConfig};
use crate::error::{Error, Result};
use crate::model::ControlMode;
use crate::quadform;
use crate::solver::backward_solve;

#[derive(Debug, Parser)]
#[command(name = "maxplus-hjb", version, about = "Max-plus probabilistic HJB solver")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; overrides `run.threads`.
    #[arg(long, global = true, env = "MAXPLUS_HJB_THREADS")]
    pub threads: Option<usize>,
    /// Overrides `run.out_dir`.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Backward solve; writes the forms, diagnostics, values and a manifest.
    Solve { config: PathBuf },
    /// Runs the benchmark cases; writes table, figure and timing CSVs.
    Benchmark { config: PathBuf },
    /// Reference values on the evaluation grid for a constant correlation.
    Oracle {
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        rho: f64,
        /// Quadrature nodes; defaults to `bench.oracle_nodes`.
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Terminal payoff approximation and its error report.
    DumpPayoff { config: PathBuf },
}

fn load(path: &Path, global: &GlobalArgs) -> Result<(Config, RunConfig)> {
    let mut cfg = Config::from_path(path)?;
    if let Some(seed) = global.seed {
        cfg.run.seed = seed;
    }
    if let Some(t) = global.threads {
        cfg.run.threads = Some(t);
    }
    if let Some(dir) = &global.out_dir {
        cfg.run.out_dir = dir.to_string_lossy().into_owned();
    }
    let run = cfg.build()?;
    Ok((cfg, run))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, bytes)?;
    Ok(path)
}

fn solve(run: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let result = backward_solve(&run.spec, &run.plan, run.seed, &run.options)?;
    let dir = PathBuf::from(&run.out_dir);
    let extra = [("spec_hash", run.spec_hash.clone()), ("epsilon", run.spec.epsilon().to_string()), ("step", run.spec.step().to_string())];
    result.write_artifacts(&dir, &extra)?;

    let values = values_on_grid(&result, 0.0, &run.grid)?;
    let mut buf = Vec::new();
    writeln!(buf, "xi1,xi2,value,mode")?;
    for (x, v) in run.grid.points().iter().zip(&values) {
        let mode = result.argmax_mode(0.0, x)?.unwrap_or("terminal");
        writeln!(buf, "{},{},{v},{mode}", x[0], x[1])?;
    }
    write_file(&dir, "values.csv", &buf)?;
    writeln!(out, "solved {} steps, {} forms at t=0, wrote {}", result.diagnostics.len(), result.value_function(0.0)?.len(), dir.display())?;
    Ok(())
}

fn benchmark(cfg: &Config, run: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let cases = cfg.cases(run)?;
    let setup = cfg.bench_setup(run);
    let report = run_benchmark(&setup, &cases);
    let dir = PathBuf::from(&run.out_dir);
    let (low, high) = extreme_modes(&run.spec);
    report.write_all(&dir, &low, &high)?;
    let mut buf = Vec::new();
    writeln!(buf, "spec_hash={}", run.spec_hash)?;
    writeln!(buf, "cases={}", cases.len())?;
    writeln!(buf, "failed={}", report.cases.iter().filter(|c| c.status != "ok").count())?;
    write_file(&dir, "manifest.txt", &buf)?;
    for c in &report.cases {
        match c.norms {
            Some(n) => writeln!(out, "{} e_inf={:.4} e_1={:.4}", c.case.id, n.e_inf, n.e_1)?,
            None => writeln!(out, "{} {}", c.case.id, c.status)?,
        }
    }
    Ok(())
}

fn oracle(run: &RunConfig, rho: f64, nodes: Option<usize>, out: &mut dyn Write) -> Result<()> {
    let base = run
        .spec
        .modes()
        .iter()
        .find_map(|m| m.correlation)
        .ok_or_else(|| Error::Unsupported("no correlation mode in the config".into()))?;
    let mode = ControlMode::uncertain_correlation(format!("rho={rho}"), base.sigma1, base.sigma2, rho)?;
    let law = ConstantModeLaw::from_mode(&mode, run.spec.horizon())?;
    let payoff = OraclePayoff::Ridge(run.payoff.clone());
    let n = nodes.unwrap_or(run.oracle_nodes);
    let mut buf = Vec::new();
    writeln!(buf, "xi1,xi2,value")?;
    for x in run.grid.points() {
        writeln!(buf, "{},{},{}", x[0], x[1], law.expectation(&payoff, &x, n)?)?;
    }
    let path = write_file(Path::new(&run.out_dir), &format!("oracle_rho_{rho}.csv"), &buf)?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

fn dump_payoff(cfg: &Config, run: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let dir = PathBuf::from(&run.out_dir);
    let a = &run.approximation;
    let f = &a.function;
    let mut buf = Vec::new();
    writeln!(buf, "{}", quadform::csv_header(f.dim()))?;
    quadform::write_csv_rows(&mut buf, run.spec.horizon(), &vec!["terminal"; f.len()], f)?;
    write_file(&dir, "payoff_forms.csv", &buf)?;

    let u = run.payoff.direction();
    let norm2: f64 = u.iter().map(|v| v * v).sum();
    let center = &cfg.payoff.center;
    let base = run.payoff.ridge_coordinate(center);
    buf.clear();
    // Along the ridge direction through the approximation center.
    writeln!(buf, "s,exact,approx")?;
    let mut s = -20.0;
    while s <= 20.0 + 1e-9 {
        let x: Vec<f64> = center.iter().zip(u).map(|(c, ui)| c + (s - base) * ui / norm2).collect();
        writeln!(buf, "{s},{},{}", run.payoff.eval(&x), f.sup_evaluate(&x)?.0)?;
        s += 0.25;
    }
    write_file(&dir, "payoff_profile.csv", &buf)?;

    buf.clear();
    writeln!(buf, "n_forms={}", f.len())?;
    writeln!(buf, "profile_error={}", a.profile_error)?;
    writeln!(buf, "overshoot={}", a.overshoot)?;
    writeln!(buf, "transverse_penalty={}", a.transverse_penalty)?;
    writeln!(buf, "achieved_error={}", a.achieved_error)?;
    write_file(&dir, "payoff_report.txt", &buf)?;
    writeln!(out, "{} forms, achieved error {:.6}, wrote {}", f.len(), a.achieved_error, dir.display())?;
    Ok(())
}

/// Runs a parsed command.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Solve { config } => {
            let (_, run) = load(config, &cli.global)?;
            solve(&run, out)
        }
        Command::Benchmark { config } => {
            let (cfg, run) = load(config, &cli.global)?;
            benchmark(&cfg, &run, out)
        }
        Command::Oracle { config, rho, nodes } => {
            let (_, run) = load(config, &cli.global)?;
            oracle(&run, *rho, *nodes, out)
        }
        Command::DumpPayoff { config } => {
            let (cfg, run) = load(config, &cli.global)?;
            dump_payoff(&cfg, &run, out)
        }
    }
}

/// `error: kind=<kind> [section=<s> key=<k>] msg="<message>"`.
pub fn error_line(e: &Error) -> String {
    match e {
        Error::Config { section, key, message } => format!("error: kind=config section={section} key={key} msg={message:?}"),
        other => format!("error: kind={} msg={:?}", other.kind(), other.to_string()),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            1
        }
    }
}
