//! Backward induction over the time grid.
//!
//! At each time `t` and for each outer sample `(ω, m)` the solver picks the
//! forms of `Z_{t+h}` that are maximal along the Euler step from `x_ω`,
//! pushes them through the sample operator at the regression states, fits a
//! single quadratic form and projects it onto the concave cone. `Z_t` is the
//! collection of these forms in mode-major, sample-minor order.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::quadform::{self, MaxPlusFunction, QuadraticForm, SupScratch};
use crate::regression::{fit_quadratic, project_concave, FitOptions};
use crate::sampling::{build_pairs, simulate_paths, PathTable, SamplePlan};
use crate::scheme::{apply_choices, moment_match, select};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Antithetic pairing and second-moment matching of each increment set.
    pub moment_match: bool,
    /// Project every fitted form onto `Q ≤ -eta_min I`.
    pub enforce_concavity: bool,
    pub eta_min: f64,
    pub fit: FitOptions,
    /// Solve only the last `n` time steps.
    pub last_steps: Option<usize>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            moment_match: true,
            enforce_concavity: true,
            eta_min: 0.0,
            fit: FitOptions::default(),
            last_steps: None,
            threads: None,
        }
    }
}

/// Per-step counters.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub k: usize,
    pub t: f64,
    pub n_forms: usize,
    /// Largest eigenvalue clamp applied by the concavity projection.
    pub max_clamp: f64,
    /// Number of fitted forms that needed projection.
    pub n_clamped: usize,
    /// Distinct forms of `Z_{t+h}` used by the selections, summed over `(ω, m)`.
    pub selection_churn: usize,
    pub underdetermined_fits: usize,
    pub elapsed_secs: f64,
}

/// Value-function sets `Z_t` on the time grid with their provenance.
#[derive(Debug, Clone)]
pub struct SolveResult {
    times: Vec<f64>,
    values: Vec<Option<MaxPlusFunction>>,
    origins: Vec<Vec<usize>>,
    labels: Vec<String>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub plan: SamplePlan,
    pub seed: u64,
    pub guard_clamps: usize,
    pub elapsed_secs: f64,
}

impl SolveResult {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
            .filter(|&k| self.values[k].is_some())
            .ok_or(Error::UnknownTime(t))
    }

    /// `Z_t`, if `t` was solved.
    pub fn value_function(&self, t: f64) -> Result<&MaxPlusFunction> {
        let k = self.index(t)?;
        Ok(self.values[k].as_ref().expect("checked"))
    }

    /// `v(t, x) = max_{z ∈ Z_t} q(x, z)`.
    pub fn evaluate_value(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.value_function(t)?.sup_evaluate(x)?.0)
    }

    /// Mode whose form attains the maximum at `(t, x)`; `None` at the horizon.
    pub fn argmax_mode(&self, t: f64, x: &[f64]) -> Result<Option<&str>> {
        let k = self.index(t)?;
        let (_, i) = self.values[k].as_ref().expect("checked").sup_evaluate(x)?;
        Ok(self.origins[k].get(i).map(|&m| self.labels[m].as_str()))
    }

    /// Earliest solved time.
    pub fn first_time(&self) -> f64 {
        let k = self.values.iter().position(Option::is_some).expect("horizon always present");
        self.times[k]
    }

    fn form_labels(&self, k: usize) -> Vec<&str> {
        let f = self.values[k].as_ref().expect("solved");
        if self.origins[k].is_empty() {
            vec!["terminal"; f.len()]
        } else {
            self.origins[k].iter().map(|&m| self.labels[m].as_str()).collect()
        }
    }

    /// Form dump: every solved `Z_t`, latest time first.
    pub fn write_forms_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let d = self.values.iter().flatten().next().expect("horizon").dim();
        writeln!(out, "{}", quadform::csv_header(d))?;
        for k in (0..self.times.len()).rev() {
            if let Some(f) = &self.values[k] {
                quadform::write_csv_rows(out, self.times[k], &self.form_labels(k), f)?;
            }
        }
        Ok(())
    }

    /// Per-step diagnostics without timings.
    pub fn write_diagnostics_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t,n_forms,max_clamp,n_clamped,selection_churn,underdetermined_fits")?;
        for s in &self.diagnostics {
            writeln!(out, "{},{},{},{},{},{}", s.t, s.n_forms, s.max_clamp, s.n_clamped, s.selection_churn, s.underdetermined_fits)?;
        }
        Ok(())
    }

    /// Flat `key=value` run manifest. `extra` entries are appended verbatim.
    pub fn write_manifest<W: Write>(&self, out: &mut W, extra: &[(&str, String)]) -> std::io::Result<()> {
        writeln!(out, "seed={}", self.seed)?;
        writeln!(out, "plan={}", self.plan.tuple_string())?;
        writeln!(out, "modes={}", self.labels.join(";"))?;
        writeln!(out, "first_time={}", self.first_time())?;
        writeln!(out, "horizon={}", self.times.last().expect("nonempty"))?;
        writeln!(out, "guard_clamps={}", self.guard_clamps)?;
        for (key, value) in extra {
            writeln!(out, "{key}={value}")?;
        }
        for s in &self.diagnostics {
            writeln!(out, "step_secs[{}]={:.3}", s.t, s.elapsed_secs)?;
        }
        writeln!(out, "wall_clock_secs={:.3}", self.elapsed_secs)
    }

    /// Writes `forms.csv`, `diagnostics.csv` and `manifest.txt` into `dir`.
    pub fn write_artifacts(&self, dir: &Path, extra: &[(&str, String)]) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("forms.csv"))?);
        self.write_forms_csv(&mut f)?;
        f.flush()?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("diagnostics.csv"))?);
        self.write_diagnostics_csv(&mut f)?;
        f.flush()?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("manifest.txt"))?);
        self.write_manifest(&mut f, extra)?;
        f.flush()?;
        Ok(())
    }
}

/// Regression pairs grouped by state, with the increment set of each group.
struct Prepared {
    /// `(state index, increment set id)`.
    groups: Vec<(usize, usize)>,
    sets: Vec<Vec<Vec<f64>>>,
}

fn prepare(pairs: &[(usize, usize)], paths: &PathTable, k: usize, h: f64, matched: bool) -> Prepared {
    let mut by_state: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(s, w) in pairs {
        by_state.entry(s).or_default().push(w);
    }
    let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut sets = Vec::new();
    let mut groups = Vec::with_capacity(by_state.len());
    for (s, incs) in by_state {
        let next_id = sets.len();
        let id = *ids.entry(incs.clone()).or_insert_with(|| {
            let raw: Vec<Vec<f64>> = incs.iter().map(|&w| paths.increment(k, w).to_vec()).collect();
            sets.push(if matched { moment_match(&raw, h) } else { raw });
            next_id
        });
        groups.push((s, id));
    }
    Prepared { groups, sets }
}

struct ItemResult {
    form: QuadraticForm,
    clamp: f64,
    churn: usize,
    underdetermined: bool,
}

struct Ctx<'a> {
    spec: &'a ProblemSpec,
    paths: &'a PathTable,
    next: &'a MaxPlusFunction,
    opts: &'a SolveOptions,
    k: usize,
}

fn solve_item(ctx: &Ctx, prep: &Prepared, omega: usize, m: usize) -> Result<ItemResult> {
    let mode = &ctx.spec.modes()[m];
    let (eps, h) = (ctx.spec.epsilon(), ctx.spec.step());
    let x_omega = ctx.paths.state(m, ctx.k, omega);
    let mut scratch = SupScratch::new(ctx.next);
    let choices: Vec<Vec<usize>> = prep.sets.iter().map(|set| select(ctx.next, mode, eps, h, x_omega, set, &mut scratch)).collect();

    let mut used: Vec<usize> = choices.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();

    let mut points = Vec::with_capacity(prep.groups.len());
    let mut values = Vec::with_capacity(prep.groups.len());
    for &(s, id) in &prep.groups {
        let x_g = ctx.paths.state(m, ctx.k, s);
        let y = apply_choices(mode, eps, h, x_g, &prep.sets[id], &choices[id], ctx.next)?;
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("operator value at state {s}")));
        }
        points.push(x_g.to_vec());
        values.push(y);
    }
    let fit = fit_quadratic(&points, &values, ctx.opts.fit)?;
    let (form, clamp) = if ctx.opts.enforce_concavity {
        project_concave(&fit.form, ctx.opts.eta_min)
    } else {
        (fit.form, 0.0)
    };
    if !form.is_finite() {
        return Err(Error::NonFinite("fitted form".into()));
    }
    Ok(ItemResult {
        form,
        clamp,
        churn: used.len(),
        underdetermined: fit.underdetermined,
    })
}

/// Runs the backward induction from the horizon.
pub fn backward_solve(spec: &ProblemSpec, plan: &SamplePlan, seed: u64, opts: &SolveOptions) -> Result<SolveResult> {
    match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| solve_in_pool(spec, plan, seed, opts)),
        None => solve_in_pool(spec, plan, seed, opts),
    }
}

fn solve_in_pool(spec: &ProblemSpec, plan: &SamplePlan, seed: u64, opts: &SolveOptions) -> Result<SolveResult> {
    let start = Instant::now();
    spec.validate_split().ensure()?;
    plan.validate()?;
    let n_modes = spec.modes().len();
    let cap = n_modes * plan.n_in;
    if spec.terminal().len() > cap {
        return Err(Error::Plan(format!("terminal function has {} forms, more than M*N_in = {cap}", spec.terminal().len())));
    }
    if opts.eta_min < 0.0 {
        return Err(Error::InvalidArgument("eta_min must be non-negative".into()));
    }
    let n = spec.n_steps();
    let stop = match opts.last_steps {
        Some(l) if l == 0 || l > n => return Err(Error::InvalidArgument(format!("last_steps must be in 1..={n}, got {l}"))),
        Some(l) => n - l,
        None => 0,
    };
    let paths = simulate_paths(spec, plan, seed)?;

    let times: Vec<f64> = (0..=n).map(|k| spec.time(k)).collect();
    let mut values: Vec<Option<MaxPlusFunction>> = vec![None; n + 1];
    let mut origins: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    values[n] = Some(spec.terminal().clone());
    let mut diagnostics = Vec::new();
    let shared = plan.method.is_shared();

    for k in (stop..n).rev() {
        let step_start = Instant::now();
        let next = values[k + 1].take().expect("solved");
        let ctx = Ctx {
            spec,
            paths: &paths,
            next: &next,
            opts,
            k,
        };
        let h = spec.step();
        let common = shared.then(|| prepare(&build_pairs(plan, seed, k, 0, 0), &paths, k, h, opts.moment_match));
        let items: Vec<ItemResult> = (0..cap)
            .into_par_iter()
            .map(|i| {
                let (m, omega) = (i / plan.n_in, i % plan.n_in);
                let own;
                let prep = match &common {
                    Some(p) => p,
                    None => {
                        own = prepare(&build_pairs(plan, seed, k, omega, m), &paths, k, h, opts.moment_match);
                        &own
                    }
                };
                solve_item(&ctx, prep, omega, m).map_err(|e| Error::Solve {
                    t: spec.time(k),
                    omega,
                    mode: spec.modes()[m].label.clone(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;
        values[k + 1] = Some(next);

        let mut diag = StepDiagnostics {
            k,
            t: spec.time(k),
            n_forms: 0,
            max_clamp: 0.0,
            n_clamped: 0,
            selection_churn: 0,
            underdetermined_fits: 0,
            elapsed_secs: 0.0,
        };
        let mut forms = Vec::with_capacity(cap);
        let mut mode_of = Vec::with_capacity(cap);
        for (i, item) in items.into_iter().enumerate() {
            diag.max_clamp = diag.max_clamp.max(item.clamp);
            diag.n_clamped += (item.clamp > 0.0) as usize;
            diag.selection_churn += item.churn;
            diag.underdetermined_fits += item.underdetermined as usize;
            forms.push(item.form);
            mode_of.push(i / plan.n_in);
        }
        let (z, kept) = MaxPlusFunction::new(forms)?.prune_duplicates(0.0);
        assert!(z.len() <= cap, "card(Z_t) = {} exceeds M*N_in = {cap}", z.len());
        diag.n_forms = z.len();
        origins[k] = kept.iter().map(|&i| mode_of[i]).collect();
        values[k] = Some(z);
        diag.elapsed_secs = step_start.elapsed().as_secs_f64();
        diagnostics.push(diag);
    }

    Ok(SolveResult {
        times,
        values,
        origins,
        labels: spec.modes().iter().map(|m| m.label.clone()).collect(),
        diagnostics,
        plan: *plan,
        seed,
        guard_clamps: paths.guard_clamps(),
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ControlMode;
    use crate::sampling::SamplingMethod;
    use nalgebra::{DMatrix, DVector};

    fn spec_with(terminal: MaxPlusFunction, horizon: f64, modes: Vec<ControlMode>) -> ProblemSpec {
        ProblemSpec::new(horizon, 0.05, 0.75, modes, terminal, vec![(20.0, 80.0), (30.0, 70.0)]).unwrap()
    }

    fn rho(r: f64) -> ControlMode {
        ControlMode::uncertain_correlation(format!("rho={r}"), 0.4, 0.3, r).unwrap()
    }

    #[test]
    fn constants_are_fixed_points() {
        let spec = spec_with(MaxPlusFunction::singleton(QuadraticForm::constant(2, 3.5)), 0.05, vec![rho(0.8)]);
        let plan = SamplePlan::new(20, 50, 5, 10, SamplingMethod::SharedProduct).unwrap();
        let res = backward_solve(&spec, &plan, 7, &SolveOptions::default()).unwrap();
        let z0 = res.value_function(0.0).unwrap();
        assert_eq!(z0.len(), 1);
        for x in [[20.0, 30.0], [50.0, 50.0], [80.0, 70.0]] {
            let v = res.evaluate_value(0.0, &x).unwrap();
            assert!((v - 3.5).abs() < 1e-8, "{v} {:?}", z0.forms()[0]);
        }
        assert_eq!(res.evaluate_value(0.05, &[1.0, 1.0]).unwrap(), 3.5);
        assert!(res.evaluate_value(0.025, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn smallest_instance() {
        let spec = spec_with(MaxPlusFunction::singleton(QuadraticForm::constant(2, 1.0)), 0.1, vec![rho(0.8)]);
        let plan = SamplePlan::new(1, 1, 1, 1, SamplingMethod::FullProduct).unwrap();
        let res = backward_solve(&spec, &plan, 1, &SolveOptions::default()).unwrap();
        assert_eq!(res.diagnostics.len(), 2);
        assert!(res.diagnostics.iter().all(|d| d.n_forms == 1));
    }

    #[test]
    fn value_dominates_members() {
        let q = QuadraticForm::new(DMatrix::identity(2, 2) * -0.02, DVector::from_column_slice(&[0.5, -0.4]), 1.0).unwrap();
        let spec = spec_with(MaxPlusFunction::singleton(q), 0.1, vec![rho(-0.8), rho(0.8)]);
        let plan = SamplePlan::new(30, 60, 3, 20, SamplingMethod::PrivateProduct).unwrap();
        let res = backward_solve(&spec, &plan, 3, &SolveOptions::default()).unwrap();
        let z = res.value_function(0.0).unwrap();
        assert!(z.len() <= 60);
        let mut x = [20.0, 30.0];
        for i in 0..100 {
            x[0] = 20.0 + (i as f64 * 0.61) % 60.0;
            x[1] = 30.0 + (i as f64 * 0.37) % 40.0;
            let v = res.evaluate_value(0.0, &x).unwrap();
            assert!(z.forms().iter().all(|f| f.evaluate(&x).unwrap() <= v));
        }
        assert!(res.argmax_mode(0.0, &[50.0, 50.0]).unwrap().is_some());
        assert!(res.argmax_mode(0.1, &[50.0, 50.0]).unwrap().is_none());
    }

    #[test]
    fn thread_count_does_not_change_forms() {
        let q = QuadraticForm::new(DMatrix::identity(2, 2) * -0.05, DVector::from_column_slice(&[2.5, -2.0]), 0.0).unwrap();
        let spec = spec_with(MaxPlusFunction::singleton(q), 0.1, vec![rho(-0.8), rho(0.8)]);
        let plan = SamplePlan::new(25, 50, 5, 10, SamplingMethod::PrivateProduct).unwrap();
        let dump = |threads| {
            let opts = SolveOptions {
                threads: Some(threads),
                ..SolveOptions::default()
            };
            let res = backward_solve(&spec, &plan, 11, &opts).unwrap();
            let mut buf = Vec::new();
            res.write_forms_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(dump(1), dump(3));
    }

    #[test]
    fn terminal_too_large_rejected() {
        let forms = (0..3).map(|i| QuadraticForm::constant(2, i as f64)).collect();
        let spec = spec_with(MaxPlusFunction::new(forms).unwrap(), 0.05, vec![rho(0.8)]);
        let plan = SamplePlan::new(2, 4, 2, 2, SamplingMethod::SharedProduct).unwrap();
        assert!(matches!(backward_solve(&spec, &plan, 1, &SolveOptions::default()), Err(Error::Plan(_))));
    }

    #[test]
    fn last_steps_limits_solve() {
        let spec = spec_with(MaxPlusFunction::singleton(QuadraticForm::constant(2, 1.0)), 0.15, vec![rho(0.8)]);
        let plan = SamplePlan::new(10, 10, 1, 1, SamplingMethod::Diagonal).unwrap();
        let opts = SolveOptions {
            last_steps: Some(1),
            ..SolveOptions::default()
        };
        let res = backward_solve(&spec, &plan, 1, &opts).unwrap();
        assert!((res.first_time() - 0.1).abs() < 1e-12);
        assert!(res.value_function(0.0).is_err());
        assert!(res.value_function(0.1).is_ok());
    }
}
