//! Accuracy benchmark for the two-asset uncertain-correlation problem.
//!
//! Each [`BenchmarkCase`] solves with a subset of the modes and, when the
//! subset is a single mode, compares the value at the evaluation time with the
//! quadrature oracle on a line of states.

pub mod oracle;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::quadform::RidgePayoff;
use crate::sampling::SamplePlan;
use crate::solver::{backward_solve, SolveOptions, SolveResult};

pub use oracle::{gauss_hermite, oracle_constant_mode, ConstantModeLaw, OraclePayoff, DEFAULT_NODES};

/// States `(ξ1, ξ2)` with `ξ2` fixed and `ξ1` on a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalGrid {
    pub xi1_min: f64,
    pub xi1_max: f64,
    pub step: f64,
    pub xi2: f64,
}

impl Default for EvalGrid {
    fn default() -> Self {
        EvalGrid {
            xi1_min: 20.0,
            xi1_max: 80.0,
            step: 1.0,
            xi2: 50.0,
        }
    }
}

impl EvalGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.xi1_max >= self.xi1_min) || ![self.xi1_min, self.xi1_max, self.xi2].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad evaluation grid {self:?}")));
        }
        Ok(())
    }

    pub fn xi1(&self) -> Vec<f64> {
        let n = ((self.xi1_max - self.xi1_min) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.xi1_min + i as f64 * self.step).collect()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.xi1().into_iter().map(|x| [x, self.xi2]).collect()
    }
}

/// Sup norm and mean absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub e_inf: f64,
    pub e_1: f64,
}

pub fn error_norms(approx: &[f64], reference: &[f64]) -> ErrorNorms {
    assert_eq!(approx.len(), reference.len(), "value and oracle grids differ");
    let n = approx.len().max(1) as f64;
    let mut e_inf = 0.0f64;
    let mut sum = 0.0;
    for (a, r) in approx.iter().zip(reference) {
        let e = (a - r).abs();
        e_inf = e_inf.max(e);
        sum += e;
    }
    ErrorNorms { e_inf, e_1: sum / n }
}

/// Values of a solved problem on the grid at time `t`.
pub fn values_on_grid(result: &SolveResult, t: f64, grid: &EvalGrid) -> Result<Vec<f64>> {
    grid.points().iter().map(|x| result.evaluate_value(t, x)).collect()
}

/// Oracle values on the grid for the mode labelled `label`, `remaining` time
/// before the horizon.
pub fn oracle_on_grid(spec: &ProblemSpec, label: &str, remaining: f64, payoff: &OraclePayoff, grid: &EvalGrid, n_nodes: usize) -> Result<Vec<f64>> {
    let mode = spec
        .modes()
        .iter()
        .find(|m| m.label == label)
        .ok_or_else(|| Error::InvalidArgument(format!("no mode labelled {label}")))?;
    let law = ConstantModeLaw::from_mode(mode, remaining)?;
    grid.points().iter().map(|x| law.expectation(payoff, x, n_nodes)).collect()
}

/// Sample standard deviation across replicates, point by point.
pub fn pointwise_stddev(replicates: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = replicates.first() else {
        return Vec::new();
    };
    let n = replicates.len() as f64;
    (0..first.len())
        .map(|i| {
            if replicates.len() < 2 {
                return 0.0;
            }
            let mean = replicates.iter().map(|r| r[i]).sum::<f64>() / n;
            (replicates.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect()
}

/// Point-by-point mean across replicates.
pub fn pointwise_mean(replicates: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = replicates.first() else {
        return Vec::new();
    };
    let n = replicates.len() as f64;
    (0..first.len()).map(|i| replicates.iter().map(|r| r[i]).sum::<f64>() / n).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkCase {
    pub id: String,
    /// Labels of the modes kept for this case.
    pub modes: Vec<String>,
    pub plan: SamplePlan,
    pub seed: u64,
    pub grid: EvalGrid,
    /// Solve only the last steps and evaluate at the earliest solved time.
    pub last_steps: Option<usize>,
}

/// Everything shared by the cases of a benchmark run.
#[derive(Debug, Clone)]
pub struct BenchmarkSetup {
    /// Problem with every mode; cases select subsets.
    pub spec: ProblemSpec,
    /// Exact terminal payoff for the oracle.
    pub payoff: RidgePayoff,
    pub options: SolveOptions,
    pub oracle_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseReport {
    pub case: BenchmarkCase,
    pub t_eval: f64,
    pub values: Option<Vec<f64>>,
    pub oracle: Option<Vec<f64>>,
    pub norms: Option<ErrorNorms>,
    /// Largest `card(Z_t)` over the solved steps.
    pub max_forms: usize,
    /// `ok` or `error:<kind>`.
    pub status: String,
    pub message: Option<String>,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchmarkReport {
    pub cases: Vec<CaseReport>,
}

fn run_case(setup: &BenchmarkSetup, case: &BenchmarkCase) -> Result<(f64, Vec<f64>, Option<Vec<f64>>, usize)> {
    case.grid.validate()?;
    let labels: Vec<&str> = case.modes.iter().map(String::as_str).collect();
    let spec = setup.spec.with_modes(&labels)?;
    let opts = SolveOptions {
        last_steps: case.last_steps,
        ..setup.options.clone()
    };
    let result = backward_solve(&spec, &case.plan, case.seed, &opts)?;
    let cap = spec.modes().len() * case.plan.n_in;
    let max_forms = result.diagnostics.iter().map(|d| d.n_forms).max().unwrap_or(0);
    assert!(max_forms <= cap, "card(Z_t) = {max_forms} exceeds M*N_in = {cap}");
    let t_eval = result.first_time();
    let values = values_on_grid(&result, t_eval, &case.grid)?;
    let oracle = if labels.len() == 1 {
        let remaining = spec.horizon() - t_eval;
        Some(oracle_on_grid(&spec, labels[0], remaining, &OraclePayoff::Ridge(setup.payoff.clone()), &case.grid, setup.oracle_nodes)?)
    } else {
        None
    };
    Ok((t_eval, values, oracle, max_forms))
}

/// Runs the cases in order. Failures are recorded and do not stop the run.
pub fn run_benchmark(setup: &BenchmarkSetup, cases: &[BenchmarkCase]) -> BenchmarkReport {
    let mut out = Vec::with_capacity(cases.len());
    for case in cases {
        let start = Instant::now();
        let report = match run_case(setup, case) {
            Ok((t_eval, values, oracle, max_forms)) => CaseReport {
                case: case.clone(),
                t_eval,
                norms: oracle.as_ref().map(|o| error_norms(&values, o)),
                values: Some(values),
                oracle,
                max_forms,
                status: "ok".into(),
                message: None,
                elapsed_secs: start.elapsed().as_secs_f64(),
            },
            Err(e) => CaseReport {
                case: case.clone(),
                t_eval: f64::NAN,
                values: None,
                oracle: None,
                norms: None,
                max_forms: 0,
                status: format!("error:{}", e.kind()),
                message: Some(e.to_string()),
                elapsed_secs: start.elapsed().as_secs_f64(),
            },
        };
        out.push(report);
    }
    BenchmarkReport { cases: out }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BenchmarkReport {
    /// One row per case: `case_id,modes,n_in,n_rg,n_x,n_w,method,seed,t_eval,e_inf,e_1,status`.
    pub fn write_table_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "case_id,modes,n_in,n_rg,n_x,n_w,method,seed,t_eval,e_inf,e_1,status")?;
        for r in &self.cases {
            let p = &r.case.plan;
            let t_eval = if r.t_eval.is_finite() { r.t_eval.to_string() } else { String::new() };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.case.id,
                r.case.modes.join(";"),
                p.n_in,
                p.n_rg,
                p.n_x,
                p.n_w,
                p.method,
                r.case.seed,
                t_eval,
                opt_num(r.norms.map(|n| n.e_inf)),
                opt_num(r.norms.map(|n| n.e_1)),
                r.status
            )?;
        }
        Ok(())
    }

    /// Wall-clock seconds per case.
    pub fn write_timing_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "case_id,wall_clock_secs")?;
        for r in &self.cases {
            writeln!(out, "{},{:.3}", r.case.id, r.elapsed_secs)?;
        }
        Ok(())
    }

    /// Value curves of the first successful full-horizon case for each of the
    /// mode sets `{low}`, `{high}` and `{low, high}`, with oracle curves for
    /// the single-mode cases.
    pub fn write_figure_csv<W: Write>(&self, out: &mut W, low: &str, high: &str) -> std::io::Result<()> {
        let pick = |modes: &[&str]| {
            self.cases.iter().find(|r| {
                r.status == "ok" && r.t_eval == 0.0 && r.case.modes.len() == modes.len() && modes.iter().all(|m| r.case.modes.iter().any(|c| c == m))
            })
        };
        let lo = pick(&[low]);
        let hi = pick(&[high]);
        let both = pick(&[low, high]);
        let Some(grid) = [lo, hi, both].iter().flatten().next().map(|r| r.case.grid) else {
            writeln!(out, "xi1,v_rho_min,v_rho_max,v_controlled,oracle_rho_min,oracle_rho_max")?;
            return Ok(());
        };
        writeln!(out, "xi1,v_rho_min,v_rho_max,v_controlled,oracle_rho_min,oracle_rho_max")?;
        let cell = |r: Option<&CaseReport>, i: usize, oracle: bool| -> String {
            r.filter(|r| r.case.grid == grid)
                .and_then(|r| if oracle { r.oracle.as_ref() } else { r.values.as_ref() })
                .map(|v| v[i].to_string())
                .unwrap_or_default()
        };
        for (i, x) in grid.xi1().iter().enumerate() {
            writeln!(
                out,
                "{x},{},{},{},{},{}",
                cell(lo, i, false),
                cell(hi, i, false),
                cell(both, i, false),
                cell(lo, i, true),
                cell(hi, i, true)
            )?;
        }
        Ok(())
    }

    /// Writes `table.csv`, `figure.csv` and `timing.csv` into `dir`.
    pub fn write_all(&self, dir: &Path, low: &str, high: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut buf = Vec::new();
        self.write_table_csv(&mut buf)?;
        std::fs::write(dir.join("table.csv"), &buf)?;
        buf.clear();
        self.write_figure_csv(&mut buf, low, high)?;
        std::fs::write(dir.join("figure.csv"), &buf)?;
        buf.clear();
        self.write_timing_csv(&mut buf)?;
        std::fs::write(dir.join("timing.csv"), &buf)?;
        Ok(())
    }
}
