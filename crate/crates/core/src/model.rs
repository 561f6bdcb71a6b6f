//! Control modes, problem specification and the Euler transition map.
//!
//! Each mode `m` carries affine drift `f^m(x) = A x + b`, a diffusion matrix
//! `Σ^m(x)` whose entries are affine in `x`, a constant discount `δ^m` and a
//! concave quadratic running reward `ℓ^m`. The Hamiltonian is split as
//! `H^m = L^m + G^m`, where `L^m` is the generator of the simulated diffusion
//! with `σ̲ = εΣ` and `f̲ = f`, and the remainder is
//!
//! `G^m(x, r, p, Γ) = ½(1 − ε²) tr(Σ(x)Σ(x)ᵀ Γ) − δ r + ℓ(x)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadform::{MaxPlusFunction, QuadraticForm};

#[derive(Debug, Clone, PartialEq)]
pub struct AffineDrift {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AffineDrift {
    pub fn zero(d: usize) -> Self {
        AffineDrift {
            a: DMatrix::zeros(d, d),
            b: DVector::zeros(d),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().chain(self.b.iter()).all(|&v| v == 0.0)
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        for i in 0..d {
            let mut v = self.b[i];
            for j in 0..d {
                v += self.a[(i, j)] * x[j];
            }
            out[i] = v;
        }
    }
}

/// `Σ(x) = Σ₀ + Σ_k x_k Σ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDiffusion {
    pub constant: DMatrix<f64>,
    pub linear: Vec<DMatrix<f64>>,
}

impl AffineDiffusion {
    pub fn constant(sigma: DMatrix<f64>) -> Self {
        let d = sigma.nrows();
        AffineDiffusion {
            constant: sigma,
            linear: vec![DMatrix::zeros(d, d); d],
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn at(&self, x: &[f64]) -> DMatrix<f64> {
        let mut s = self.constant.clone();
        for (k, lin) in self.linear.iter().enumerate() {
            s += lin * x[k];
        }
        s
    }

    /// Writes `Σ(x)` row-major into `out` (length `d²`).
    pub(crate) fn at_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                let mut v = self.constant[(i, j)];
                for (k, lin) in self.linear.iter().enumerate() {
                    v += lin[(i, j)] * x[k];
                }
                out[i * d + j] = v;
            }
        }
    }
}

/// Parameters of the two-asset uncertain-correlation diffusion
/// `Σ(ξ) = [[σ1 ξ1, 0], [σ2 ρ ξ2, σ2 √(1−ρ²) ξ2]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationParams {
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
}

/// User-supplied nonlinear part `G^m(x, r, p, Γ)`.
pub type GeneratorFn = Arc<dyn Fn(&[f64], f64, &[f64], &DMatrix<f64>) -> f64 + Send + Sync>;

#[derive(Clone, Default)]
pub enum Generator {
    /// `½(1 − ε²) tr(ΣΣᵀΓ) − δ r + ℓ(x)`.
    #[default]
    Proportional,
    Custom(GeneratorFn),
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Proportional => write!(f, "Proportional"),
            Generator::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControlMode {
    pub label: String,
    pub drift: AffineDrift,
    pub diffusion: AffineDiffusion,
    pub discount: f64,
    pub running_reward: QuadraticForm,
    pub correlation: Option<CorrelationParams>,
    pub generator: Generator,
}

impl ControlMode {
    pub fn new(label: impl Into<String>, drift: AffineDrift, diffusion: AffineDiffusion, discount: f64) -> Result<Self> {
        let d = diffusion.dim();
        if diffusion.constant.ncols() != d || diffusion.linear.len() != d || diffusion.linear.iter().any(|m| m.shape() != (d, d)) {
            return Err(Error::InvalidArgument("diffusion must be d×d with d linear terms".into()));
        }
        if drift.a.shape() != (d, d) || drift.b.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: drift.b.len(),
            });
        }
        if !(discount >= 0.0) || !discount.is_finite() {
            return Err(Error::InvalidArgument(format!("discount must be a nonnegative constant, got {discount}")));
        }
        Ok(ControlMode {
            label: label.into(),
            drift,
            diffusion,
            discount,
            running_reward: QuadraticForm::constant(d, 0.0),
            correlation: None,
            generator: Generator::Proportional,
        })
    }

    /// Zero drift, no discount, no running reward, correlation `rho`.
    pub fn uncertain_correlation(label: impl Into<String>, sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        if !(sigma1 >= 0.0 && sigma2 >= 0.0) {
            return Err(Error::InvalidArgument("volatilities must be nonnegative".into()));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!("correlation {rho} outside [-1, 1]")));
        }
        let mut first = DMatrix::zeros(2, 2);
        first[(0, 0)] = sigma1;
        let mut second = DMatrix::zeros(2, 2);
        second[(1, 0)] = sigma2 * rho;
        second[(1, 1)] = sigma2 * (1.0 - rho * rho).sqrt();
        let diffusion = AffineDiffusion {
            constant: DMatrix::zeros(2, 2),
            linear: vec![first, second],
        };
        let mut mode = ControlMode::new(label, AffineDrift::zero(2), diffusion, 0.0)?;
        mode.correlation = Some(CorrelationParams { sigma1, sigma2, rho });
        Ok(mode)
    }

    pub fn with_running_reward(mut self, reward: QuadraticForm) -> Result<Self> {
        if reward.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: reward.dim(),
            });
        }
        self.running_reward = reward;
        Ok(self)
    }

    pub fn with_generator(mut self, generator: GeneratorFn) -> Self {
        self.generator = Generator::Custom(generator);
        self
    }

    pub fn dim(&self) -> usize {
        self.diffusion.dim()
    }

    pub fn sigma(&self, x: &[f64]) -> DMatrix<f64> {
        self.diffusion.at(x)
    }

    /// `S(x, w) = x + f̲(x) h + ε Σ(x) w`.
    pub fn euler_step(&self, eps: f64, h: f64, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        for v in [x.len(), w.len()] {
            if v != d {
                return Err(Error::Dimension { expected: d, got: v });
            }
        }
        let mut out = vec![0.0; d];
        let mut scratch = vec![0.0; d * d];
        self.euler_step_into(eps, h, x, w, &mut scratch, &mut out);
        Ok(out)
    }

    /// Allocation-free Euler step; `sigma_buf` has length `d²`.
    pub(crate) fn euler_step_into(&self, eps: f64, h: f64, x: &[f64], w: &[f64], sigma_buf: &mut [f64], out: &mut [f64]) {
        let d = x.len();
        self.drift.apply_into(x, out);
        self.diffusion.at_into(x, sigma_buf);
        for i in 0..d {
            let mut sw = 0.0;
            for j in 0..d {
                sw += sigma_buf[i * d + j] * w[j];
            }
            out[i] = x[i] + out[i] * h + eps * sw;
        }
    }

    /// Nonlinear remainder `G^m(x, r, p, Γ)` of the Hamiltonian split.
    pub fn nonlinear_generator(&self, eps: f64, x: &[f64], r: f64, p: &[f64], gamma: &DMatrix<f64>) -> f64 {
        match &self.generator {
            Generator::Custom(g) => g(x, r, p, gamma),
            Generator::Proportional => {
                let s = self.sigma(x);
                let a = &s * s.transpose();
                let tr = a.component_mul(gamma).sum();
                0.5 * (1.0 - eps * eps) * tr - self.discount * r + self.running_reward.eval_unchecked(x)
            }
        }
    }

    /// Largest 2-norm condition number of `Σ` over the corners and center of
    /// `state_box`; fails if `Σ` is singular at any of them.
    pub fn diffusion_conditioning(&self, state_box: &[(f64, f64)]) -> Result<f64> {
        let d = self.dim();
        let mut points: Vec<Vec<f64>> = (0..1usize << d)
            .map(|mask| (0..d).map(|k| if mask >> k & 1 == 1 { state_box[k].1 } else { state_box[k].0 }).collect())
            .collect();
        points.push(state_box.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect());
        let mut worst: f64 = 1.0;
        for x in points {
            let sv = self.sigma(&x).singular_values();
            let (min, max) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            if !(min > 1e-12 * max.max(1e-300)) {
                return Err(Error::SingularDiffusion {
                    mode: self.label.clone(),
                    x,
                });
            }
            worst = worst.max(max / min);
        }
        Ok(worst)
    }
}

/// Outcome of the split admissibility check `tr(a⁻¹ ∂_Γ G) ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitReport {
    pub dim: usize,
    pub eps: f64,
    /// `d(1 − ε²)/(2ε²)`.
    pub trace_value: f64,
    /// `1 − trace_value`.
    pub margin: f64,
    pub passes: bool,
}

impl SplitReport {
    /// Under the proportional split `∂_Γ G = ½(1−ε²)ΣΣᵀ` and `a = ε²ΣΣᵀ`, so
    /// the trace is `d(1−ε²)/(2ε²)` whatever `Σ` is.
    pub fn proportional(dim: usize, eps: f64) -> Self {
        let eps_sq = eps * eps;
        let trace_value = dim as f64 * (1.0 - eps_sq) / (2.0 * eps_sq);
        SplitReport {
            dim,
            eps,
            trace_value,
            margin: 1.0 - trace_value,
            passes: eps > 0.0 && eps <= 1.0 && trace_value <= 1.0 + 1e-12,
        }
    }

    /// `d/(d+2)`, the smallest admissible `ε²`.
    pub fn eps_sq_bound(&self) -> f64 {
        self.dim as f64 / (self.dim as f64 + 2.0)
    }

    pub fn ensure(self) -> Result<Self> {
        if self.passes {
            Ok(self)
        } else {
            Err(Error::Split {
                trace_value: self.trace_value,
                eps_sq: self.eps * self.eps,
                bound: self.eps_sq_bound(),
            })
        }
    }
}

/// Default split parameter: 0.75, or a little above `√(d/(d+2))` when that
/// is larger.
pub fn default_epsilon(d: usize) -> f64 {
    let bound = (d as f64 / (d as f64 + 2.0)).sqrt();
    (1.06 * bound).max(0.75).min(1.0)
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    dim: usize,
    horizon: f64,
    step: f64,
    n_steps: usize,
    epsilon: f64,
    modes: Vec<ControlMode>,
    terminal: MaxPlusFunction,
    state_box: Vec<(f64, f64)>,
    guard_box: Option<Vec<(f64, f64)>>,
}

impl ProblemSpec {
    pub fn new(
        horizon: f64,
        step: f64,
        epsilon: f64,
        modes: Vec<ControlMode>,
        terminal: MaxPlusFunction,
        state_box: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let dim = terminal.dim();
        if modes.is_empty() {
            return Err(Error::InvalidArgument("at least one control mode is required".into()));
        }
        if let Some(m) = modes.iter().find(|m| m.dim() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: m.dim(),
            });
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].iter().any(|o| o.label == m.label) {
                return Err(Error::InvalidArgument(format!("duplicate mode label {:?}", m.label)));
            }
        }
        if !(horizon > 0.0 && step > 0.0) || !horizon.is_finite() || !step.is_finite() {
            return Err(Error::InvalidArgument("horizon and step must be positive".into()));
        }
        let ratio = horizon / step;
        let n_steps = ratio.round();
        if n_steps < 1.0 || (ratio - n_steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidArgument(format!("T/h = {ratio} is not an integer")));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside (0, 1]")));
        }
        SplitReport::proportional(dim, epsilon).ensure()?;
        if state_box.len() != dim || state_box.iter().any(|&(lo, hi)| !(lo <= hi)) {
            return Err(Error::InvalidArgument("state box must give lo <= hi for every coordinate".into()));
        }
        for m in &modes {
            m.diffusion_conditioning(&state_box)?;
        }
        Ok(ProblemSpec {
            dim,
            horizon,
            step,
            n_steps: n_steps as usize,
            epsilon,
            modes,
            terminal,
            state_box,
            guard_box: None,
        })
    }

    /// Samples leaving `guard` are clamped onto it during simulation.
    pub fn with_guard_box(mut self, guard: Vec<(f64, f64)>) -> Result<Self> {
        if guard.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: guard.len(),
            });
        }
        self.guard_box = Some(guard);
        Ok(self)
    }

    /// Same problem restricted to the listed modes, in the given order.
    pub fn with_modes(&self, labels: &[&str]) -> Result<Self> {
        let modes = labels
            .iter()
            .map(|l| {
                self.modes
                    .iter()
                    .find(|m| m.label == *l)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown mode {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = ProblemSpec::new(self.horizon, self.step, self.epsilon, modes, self.terminal.clone(), self.state_box.clone())?;
        out.guard_box = self.guard_box.clone();
        Ok(out)
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut out = ProblemSpec::new(horizon, self.step, self.epsilon, self.modes.clone(), self.terminal.clone(), self.state_box.clone())?;
        out.guard_box = self.guard_box.clone();
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn modes(&self) -> &[ControlMode] {
        &self.modes
    }

    pub fn terminal(&self) -> &MaxPlusFunction {
        &self.terminal
    }

    pub fn state_box(&self) -> &[(f64, f64)] {
        &self.state_box
    }

    pub fn guard_box(&self) -> Option<&[(f64, f64)]> {
        self.guard_box.as_deref()
    }

    /// Time of grid index `k` (`0 ≤ k ≤ n_steps`).
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.horizon / self.n_steps as f64
    }

    /// Grid index of time `t`, if `t` is on the grid.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let k = (t / self.step).round();
        (k >= 0.0 && k as usize <= self.n_steps && (k * self.step - t).abs() <= 1e-9 * self.horizon).then_some(k as usize)
    }

    pub fn validate_split(&self) -> SplitReport {
        SplitReport::proportional(self.dim, self.epsilon)
    }
}
