//! TOML run configuration.
//!
//! Every key has a default, so an empty file describes the two-asset
//! uncertain-correlation benchmark. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{BenchmarkCase, BenchmarkSetup, EvalGrid, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::model::{default_epsilon, AffineDiffusion, AffineDrift, ControlMode, ProblemSpec, SplitReport};
use crate::quadform::{approximate_payoff, PayoffApprox, PayoffApproxConfig, PiecewiseLinear, QuadraticForm, RidgePayoff};
use crate::regression::FitOptions;
use crate::sampling::{SamplePlan, SamplingMethod};
use crate::solver::SolveOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub state_box: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guard_box: Option<Vec<[f64; 2]>>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            d: 2,
            horizon: 0.25,
            h: 0.05,
            epsilon: None,
            state_box: vec![[20.0, 80.0], [30.0, 70.0]],
            guard_box: None,
        }
    }
}

/// One control mode: either the correlation parameters or a general affine
/// diffusion `Σ(x) = Σ0 + Σ_k x_k Σ_k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_constant: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_linear: Option<Vec<Vec<Vec<f64>>>>,
    /// Drift matrix `A` in `f(x) = A x + b`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_offset: Option<Vec<f64>>,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_q: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_b: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_c: Option<f64>,
}

impl ModeSection {
    fn correlation(sigma1: f64, sigma2: f64, rho: f64) -> Self {
        ModeSection {
            sigma1: Some(sigma1),
            sigma2: Some(sigma2),
            rho: Some(rho),
            ..ModeSection::default()
        }
    }
}

fn default_modes() -> BTreeMap<String, ModeSection> {
    let mut m = BTreeMap::new();
    m.insert("rho_min".to_string(), ModeSection::correlation(0.4, 0.3, -0.8));
    m.insert("rho_max".to_string(), ModeSection::correlation(0.4, 0.3, 0.8));
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PayoffSection {
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    pub band: [f64; 2],
    pub n_forms: usize,
    pub c_kink: f64,
    pub transverse: f64,
    pub target_eps: f64,
    pub center: Vec<f64>,
    pub transverse_radius: f64,
}

impl Default for PayoffSection {
    fn default() -> Self {
        let c = PayoffApproxConfig::default();
        PayoffSection {
            k1: -5.0,
            k2: 5.0,
            band: [c.band.0, c.band.1],
            n_forms: c.n_forms,
            c_kink: c.c_kink,
            transverse: c.transverse,
            target_eps: c.target_eps,
            center: c.center,
            transverse_radius: c.transverse_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    #[serde(rename = "N_in")]
    pub n_in: usize,
    #[serde(rename = "N_rg")]
    pub n_rg: usize,
    #[serde(rename = "N_x")]
    pub n_x: usize,
    #[serde(rename = "N_w")]
    pub n_w: usize,
    pub method: u32,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            n_in: 1000,
            n_rg: 10000,
            n_x: 10,
            n_w: 1000,
            method: 2,
        }
    }
}

impl SamplingSection {
    fn plan(&self, section: &str) -> Result<SamplePlan> {
        let method = SamplingMethod::from_number(self.method).map_err(|e| Error::config(section, "method", e.to_string()))?;
        SamplePlan::new(self.n_in, self.n_rg, self.n_x, self.n_w, method).map_err(|e| Error::config(section, "N_rg", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub out_dir: String,
    pub moment_match: bool,
    pub enforce_concavity: bool,
    pub eta_min: f64,
    pub ridge: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            threads: None,
            out_dir: "out".into(),
            moment_match: true,
            enforce_concavity: true,
            eta_min: 0.0,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    pub id: String,
    pub modes: Vec<String>,
    /// Sample sizes and method; missing entries come from `[sampling]`.
    #[serde(rename = "N_in", skip_serializing_if = "Option::is_none")]
    pub n_in: Option<usize>,
    #[serde(rename = "N_rg", skip_serializing_if = "Option::is_none")]
    pub n_rg: Option<usize>,
    #[serde(rename = "N_x", skip_serializing_if = "Option::is_none")]
    pub n_x: Option<usize>,
    #[serde(rename = "N_w", skip_serializing_if = "Option::is_none")]
    pub n_w: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub xi1_min: f64,
    pub xi1_max: f64,
    pub grid_step: f64,
    pub xi2: f64,
    pub oracle_nodes: usize,
    /// Seeds used when a case has none of its own.
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub case: Vec<CaseSection>,
}

impl Default for BenchSection {
    fn default() -> Self {
        let g = EvalGrid::default();
        BenchSection {
            xi1_min: g.xi1_min,
            xi1_max: g.xi1_max,
            grid_step: g.step,
            xi2: g.xi2,
            oracle_nodes: DEFAULT_NODES,
            seeds: Vec::new(),
            case: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub problem: ProblemSection,
    pub mode: BTreeMap<String, ModeSection>,
    pub payoff: PayoffSection,
    pub sampling: SamplingSection,
    pub run: RunSection,
    pub bench: BenchSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            problem: ProblemSection::default(),
            mode: default_modes(),
            payoff: PayoffSection::default(),
            sampling: SamplingSection::default(),
            run: RunSection::default(),
            bench: BenchSection::default(),
        }
    }
}

/// Everything a run needs, built from a [`Config`].
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: ProblemSpec,
    pub plan: SamplePlan,
    pub payoff: RidgePayoff,
    pub approximation: PayoffApprox,
    pub options: SolveOptions,
    pub seed: u64,
    pub out_dir: String,
    pub grid: EvalGrid,
    pub oracle_nodes: usize,
    pub spec_hash: String,
}

fn parse_error(text: &str, e: toml::de::Error) -> Error {
    let msg = e.message().trim().to_string();
    let key = msg.split('`').nth(1).unwrap_or("-").to_string();
    let section = e
        .span()
        .and_then(|span| {
            text[..span.start.min(text.len())]
                .lines()
                .rev()
                .map(str::trim)
                .find(|l| l.starts_with('['))
                .map(|l| l.trim_matches(|c| c == '[' || c == ']').to_string())
        })
        .unwrap_or_else(|| "-".to_string());
    Error::config(&section, &key, msg)
}

fn matrix(rows: &[Vec<f64>], d: usize, section: &str, key: &str) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::config(section, key, format!("expected a {d}x{d} matrix")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn vector(v: &[f64], d: usize, section: &str, key: &str) -> Result<DVector<f64>> {
    if v.len() != d {
        return Err(Error::config(section, key, format!("expected {d} entries, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

fn build_mode(label: &str, m: &ModeSection, d: usize) -> Result<ControlMode> {
    let section = format!("mode.{label}");
    let s = section.as_str();
    fn wrap<'a>(s: &'a str, key: &'a str) -> impl Fn(Error) -> Error + 'a {
        move |e: Error| Error::config(s, key, e.to_string())
    }
    let correlation = [m.sigma1, m.sigma2, m.rho];
    let general = m.sigma_constant.is_some() || m.sigma_linear.is_some();
    let mut mode = if correlation.iter().any(Option::is_some) {
        if general {
            return Err(Error::config(s, "sigma_constant", "give either sigma1/sigma2/rho or a general diffusion, not both"));
        }
        let missing = ["sigma1", "sigma2", "rho"].iter().zip(&correlation).find(|(_, v)| v.is_none());
        if let Some((key, _)) = missing {
            return Err(Error::config(s, key, "missing"));
        }
        if d != 2 {
            return Err(Error::config(s, "sigma1", "correlation modes need d = 2"));
        }
        ControlMode::uncertain_correlation(label, m.sigma1.unwrap(), m.sigma2.unwrap(), m.rho.unwrap()).map_err(wrap(s, "rho"))?
    } else if general {
        let constant = match &m.sigma_constant {
            Some(rows) => matrix(rows, d, s, "sigma_constant")?,
            None => DMatrix::zeros(d, d),
        };
        let linear = match &m.sigma_linear {
            Some(mats) if mats.len() == d => mats.iter().map(|r| matrix(r, d, s, "sigma_linear")).collect::<Result<_>>()?,
            Some(_) => return Err(Error::config(s, "sigma_linear", format!("expected {d} matrices"))),
            None => vec![DMatrix::zeros(d, d); d],
        };
        ControlMode::new(label, AffineDrift::zero(d), AffineDiffusion { constant, linear }, 0.0).map_err(wrap(s, "sigma_constant"))?
    } else {
        return Err(Error::config(s, "sigma1", "no diffusion given"));
    };
    if m.drift.is_some() || m.drift_offset.is_some() {
        let a = match &m.drift {
            Some(rows) => matrix(rows, d, s, "drift")?,
            None => DMatrix::zeros(d, d),
        };
        let b = match &m.drift_offset {
            Some(v) => vector(v, d, s, "drift_offset")?,
            None => DVector::zeros(d),
        };
        mode.drift = AffineDrift { a, b };
    }
    if !m.delta.is_finite() || m.delta < 0.0 {
        return Err(Error::config(s, "delta", "must be a non-negative number"));
    }
    mode.discount = m.delta;
    if m.reward_q.is_some() || m.reward_b.is_some() || m.reward_c.is_some() {
        let q = match &m.reward_q {
            Some(rows) => matrix(rows, d, s, "reward_q")?,
            None => DMatrix::zeros(d, d),
        };
        let b = match &m.reward_b {
            Some(v) => vector(v, d, s, "reward_b")?,
            None => DVector::zeros(d),
        };
        let reward = QuadraticForm::new(q, b, m.reward_c.unwrap_or(0.0)).map_err(wrap(s, "reward_q"))?;
        mode = mode.with_running_reward(reward).map_err(wrap(s, "reward_q"))?;
    }
    Ok(mode)
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| parse_error(text, e))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// SHA-256 of the canonical serialization, in hex.
    pub fn spec_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn plan(&self) -> Result<SamplePlan> {
        self.sampling.plan("sampling")
    }

    pub fn payoff(&self) -> Result<RidgePayoff> {
        if self.problem.d != 2 {
            return Err(Error::config("problem", "d", "the spread payoff needs d = 2"));
        }
        let p = &self.payoff;
        let profile = PiecewiseLinear::butterfly(p.k1, p.k2).map_err(|e| Error::config("payoff", "K2", e.to_string()))?;
        RidgePayoff::new(vec![1.0, -1.0], profile).map_err(|e| Error::config("payoff", "K1", e.to_string()))
    }

    pub fn payoff_config(&self) -> PayoffApproxConfig {
        let p = &self.payoff;
        PayoffApproxConfig {
            band: (p.band[0], p.band[1]),
            n_forms: p.n_forms,
            c_kink: p.c_kink,
            transverse: p.transverse,
            target_eps: p.target_eps,
            center: p.center.clone(),
            transverse_radius: p.transverse_radius,
        }
    }

    pub fn grid(&self) -> EvalGrid {
        EvalGrid {
            xi1_min: self.bench.xi1_min,
            xi1_max: self.bench.xi1_max,
            step: self.bench.grid_step,
            xi2: self.bench.xi2,
        }
    }

    /// Validates every section and assembles the problem.
    pub fn build(&self) -> Result<RunConfig> {
        let pr = &self.problem;
        let d = pr.d;
        if d == 0 {
            return Err(Error::config("problem", "d", "must be positive"));
        }
        if !(pr.horizon > 0.0) || !pr.horizon.is_finite() {
            return Err(Error::config("problem", "T", "must be positive"));
        }
        if !(pr.h > 0.0) || !pr.h.is_finite() {
            return Err(Error::config("problem", "h", "must be positive"));
        }
        let ratio = pr.horizon / pr.h;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::config("problem", "h", format!("T/h = {ratio} is not an integer")));
        }
        let eps = pr.epsilon.unwrap_or_else(|| default_epsilon(d));
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::config("problem", "epsilon", format!("{eps} outside (0, 1]")));
        }
        SplitReport::proportional(d, eps).ensure().map_err(|e| Error::config("problem", "epsilon", e.to_string()))?;
        if pr.state_box.len() != d || pr.state_box.iter().any(|b| !(b[0] <= b[1])) {
            return Err(Error::config("problem", "state_box", format!("need {d} intervals [lo, hi] with lo <= hi")));
        }
        if self.mode.is_empty() {
            return Err(Error::config("mode", "-", "at least one mode is required"));
        }
        let modes = self.mode.iter().map(|(label, m)| build_mode(label, m, d)).collect::<Result<Vec<_>>>()?;

        let plan = self.plan()?;
        let payoff = self.payoff()?;
        let pc = self.payoff_config();
        let approximation = approximate_payoff(&payoff, &pc).map_err(|e| {
            let key = if matches!(e, Error::PayoffApprox { .. }) { "target_eps" } else { "band" };
            Error::config("payoff", key, e.to_string())
        })?;

        let boxes: Vec<(f64, f64)> = pr.state_box.iter().map(|b| (b[0], b[1])).collect();
        let mut spec = ProblemSpec::new(pr.horizon, pr.h, eps, modes, approximation.function.clone(), boxes).map_err(|e| Error::config("problem", "-", e.to_string()))?;
        if let Some(g) = &pr.guard_box {
            if g.iter().any(|b| !(b[0] <= b[1])) {
                return Err(Error::config("problem", "guard_box", "need lo <= hi"));
            }
            spec = spec
                .with_guard_box(g.iter().map(|b| (b[0], b[1])).collect())
                .map_err(|e| Error::config("problem", "guard_box", e.to_string()))?;
        }

        let r = &self.run;
        if r.threads == Some(0) {
            return Err(Error::config("run", "threads", "must be at least 1"));
        }
        if !(r.eta_min >= 0.0) {
            return Err(Error::config("run", "eta_min", "must be non-negative"));
        }
        if !(r.ridge >= 0.0) {
            return Err(Error::config("run", "ridge", "must be non-negative"));
        }
        let options = SolveOptions {
            moment_match: r.moment_match,
            enforce_concavity: r.enforce_concavity,
            eta_min: r.eta_min,
            fit: FitOptions { ridge: r.ridge, ..FitOptions::default() },
            last_steps: None,
            threads: r.threads,
        };
        let grid = self.grid();
        grid.validate().map_err(|e| Error::config("bench", "grid_step", e.to_string()))?;
        if self.bench.oracle_nodes == 0 {
            return Err(Error::config("bench", "oracle_nodes", "must be at least 1"));
        }
        Ok(RunConfig {
            spec,
            plan,
            payoff,
            approximation,
            options,
            seed: r.seed,
            out_dir: r.out_dir.clone(),
            grid,
            oracle_nodes: self.bench.oracle_nodes,
            spec_hash: self.spec_hash(),
        })
    }

    /// Benchmark cases: the configured list, or the low, high and controlled
    /// cases at the `[sampling]` plan. Cases without a seed run once per
    /// entry of `bench.seeds` (default: the run seed).
    pub fn cases(&self, run: &RunConfig) -> Result<Vec<BenchmarkCase>> {
        let seeds = if self.bench.seeds.is_empty() { vec![run.seed] } else { self.bench.seeds.clone() };
        let mut out = Vec::new();
        if self.bench.case.is_empty() {
            let (low, high) = extreme_modes(&run.spec);
            let mut sets = vec![vec![low.clone()]];
            if high != low {
                sets.push(vec![high.clone()]);
            }
            sets.push(run.spec.modes().iter().map(|m| m.label.clone()).collect());
            for &seed in &seeds {
                for modes in &sets {
                    let tag = if modes.len() == 1 { modes[0].clone() } else { "controlled".into() };
                    out.push(BenchmarkCase {
                        id: format!("{tag}-s{seed}"),
                        modes: modes.clone(),
                        plan: run.plan,
                        seed,
                        grid: run.grid,
                        last_steps: None,
                    });
                }
            }
            return Ok(out);
        }
        for (i, c) in self.bench.case.iter().enumerate() {
            let section = format!("bench.case[{i}]");
            let base = &self.sampling;
            let sampling = SamplingSection {
                n_in: c.n_in.unwrap_or(base.n_in),
                n_rg: c.n_rg.unwrap_or(base.n_rg),
                n_x: c.n_x.unwrap_or(base.n_x),
                n_w: c.n_w.unwrap_or(base.n_w),
                method: c.method.unwrap_or(base.method),
            };
            let plan = sampling.plan(&section)?;
            if let Some(m) = c.modes.iter().find(|m| !self.mode.contains_key(*m)) {
                return Err(Error::config(&section, "modes", format!("unknown mode {m:?}")));
            }
            if c.modes.is_empty() {
                return Err(Error::config(&section, "modes", "empty"));
            }
            let case_seeds = c.seed.map(|s| vec![s]).unwrap_or_else(|| seeds.clone());
            for seed in case_seeds {
                out.push(BenchmarkCase {
                    id: if c.seed.is_some() { c.id.clone() } else { format!("{}-s{seed}", c.id) },
                    modes: c.modes.clone(),
                    plan,
                    seed,
                    grid: run.grid,
                    last_steps: c.last_steps,
                });
            }
        }
        Ok(out)
    }

    pub fn bench_setup(&self, run: &RunConfig) -> BenchmarkSetup {
        BenchmarkSetup {
            spec: run.spec.clone(),
            payoff: run.payoff.clone(),
            options: run.options.clone(),
            oracle_nodes: run.oracle_nodes,
        }
    }
}

/// Labels of the modes with the smallest and largest correlation (first and
/// last mode when no correlation is set).
pub fn extreme_modes(spec: &ProblemSpec) -> (String, String) {
    let modes = spec.modes();
    let key = |m: &ControlMode| m.correlation.map(|c| c.rho);
    let mut low = &modes[0];
    let mut high = &modes[modes.len() - 1];
    for m in modes {
        if let (Some(r), Some(lo)) = (key(m), key(low)) {
            if r < lo {
                low = m;
            }
        }
        if let (Some(r), Some(hi)) = (key(m), key(high)) {
            if r > hi {
                high = m;
            }
        }
    }
    (low.label.clone(), high.label.clone())
}
