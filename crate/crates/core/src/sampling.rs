//! Simulation of the uncontrolled Euler processes and the regression sample
//! pairs of the five sampling methods.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::rng::{keyed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplingMethod {
    /// `ω_i = ω'_i = i`: the initial sample itself.
    Diagonal,
    /// One random product of state and increment subsets, shared by every
    /// `(ω, m)` of a time step.
    SharedProduct,
    /// A fresh random product per `(ω, m)`.
    PrivateProduct,
    /// Shared random states times all increments.
    FixedIncrements,
    /// All states times all increments.
    FullProduct,
}

impl SamplingMethod {
    pub fn from_number(n: u32) -> Result<Self> {
        Ok(match n {
            1 => SamplingMethod::Diagonal,
            2 => SamplingMethod::SharedProduct,
            3 => SamplingMethod::PrivateProduct,
            4 => SamplingMethod::FixedIncrements,
            5 => SamplingMethod::FullProduct,
            _ => return Err(Error::Plan(format!("sampling method must be 1..=5, got {n}"))),
        })
    }

    /// Whether every `(ω, m)` of a time step uses the same pairs.
    pub fn is_shared(self) -> bool {
        self != SamplingMethod::PrivateProduct
    }

    pub fn number(self) -> u32 {
        match self {
            SamplingMethod::Diagonal => 1,
            SamplingMethod::SharedProduct => 2,
            SamplingMethod::PrivateProduct => 3,
            SamplingMethod::FixedIncrements => 4,
            SamplingMethod::FullProduct => 5,
        }
    }
}

impl fmt::Display for SamplingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// The sample-size tuple `(N_in, N_rg, N_x, N_w, N_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplePlan {
    pub n_in: usize,
    pub n_rg: usize,
    pub n_x: usize,
    pub n_w: usize,
    pub method: SamplingMethod,
}

impl SamplePlan {
    pub fn new(n_in: usize, n_rg: usize, n_x: usize, n_w: usize, method: SamplingMethod) -> Result<Self> {
        let plan = SamplePlan {
            n_in,
            n_rg,
            n_x,
            n_w,
            method,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let SamplePlan {
            n_in,
            n_rg,
            n_x,
            n_w,
            method,
        } = *self;
        if n_in == 0 || n_rg == 0 || n_x == 0 || n_w == 0 {
            return Err(Error::Plan("all sample sizes must be at least 1".into()));
        }
        let fail = |rule: &str| Err(Error::Plan(format!("method {method} requires {rule} (got N_in={n_in}, N_rg={n_rg}, N_x={n_x}, N_w={n_w})")));
        match method {
            SamplingMethod::Diagonal if n_rg != n_in => fail("N_rg == N_in"),
            SamplingMethod::SharedProduct | SamplingMethod::PrivateProduct if n_rg != n_x * n_w => fail("N_rg == N_x*N_w"),
            SamplingMethod::FixedIncrements if n_rg != n_x * n_w || n_w != n_in => fail("N_rg == N_x*N_w and N_w == N_in"),
            SamplingMethod::FullProduct if n_rg != n_in * n_in => fail("N_rg == N_in^2"),
            _ => Ok(()),
        }
    }

    /// `(N_in, N_rg, N_x, N_w, N_m)` written as in reports.
    pub fn tuple_string(&self) -> String {
        format!("({},{},{},{},{})", self.n_in, self.n_rg, self.n_x, self.n_w, self.method)
    }
}

/// Simulated Brownian increments and Euler states, indexed by
/// `(mode, time index, sample)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTable {
    dim: usize,
    n_modes: usize,
    n_steps: usize,
    n_in: usize,
    seed: u64,
    increments: Vec<f64>,
    states: Vec<f64>,
    guard_clamps: usize,
}

impl PathTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of Euler steps that left the guard box and were clamped.
    pub fn guard_clamps(&self) -> usize {
        self.guard_clamps
    }

    /// `W_{t+h} − W_t` at time index `k < n_steps` for sample `omega`.
    pub fn increment(&self, k: usize, omega: usize) -> &[f64] {
        let i = (k * self.n_in + omega) * self.dim;
        &self.increments[i..i + self.dim]
    }

    /// `X̂^m(t_k, ω)` for `k ≤ n_steps`.
    pub fn state(&self, mode: usize, k: usize, omega: usize) -> &[f64] {
        let i = ((mode * (self.n_steps + 1) + k) * self.n_in + omega) * self.dim;
        &self.states[i..i + self.dim]
    }

    /// Component-wise sample mean and variance of the increments at `k`.
    pub fn increment_moments(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_in as f64;
        let mut mean = vec![0.0; self.dim];
        for omega in 0..self.n_in {
            for (m, w) in mean.iter_mut().zip(self.increment(k, omega)) {
                *m += w / n;
            }
        }
        let mut var = vec![0.0; self.dim];
        for omega in 0..self.n_in {
            for ((v, w), m) in var.iter_mut().zip(self.increment(k, omega)).zip(&mean) {
                *v += (w - m) * (w - m) / (n - 1.0).max(1.0);
            }
        }
        (mean, var)
    }

    /// Time indices whose increment means fall outside `5√(h/N_in)`.
    pub fn increment_mean_outliers(&self, h: f64) -> Vec<usize> {
        let bound = 5.0 * (h / self.n_in as f64).sqrt();
        (0..self.n_steps)
            .filter(|&k| self.increment_moments(k).0.iter().any(|m| m.abs() > bound))
            .collect()
    }

    /// Columns `m,t,omega,x_1..x_d,dw_1..dw_d`; the increment columns are
    /// empty at the final time.
    pub fn write_csv<W: Write>(&self, out: &mut W, times: &[f64]) -> std::io::Result<()> {
        let d = self.dim;
        let mut header = vec!["m".to_string(), "t".to_string(), "omega".to_string()];
        header.extend((1..=d).map(|k| format!("x_{k}")));
        header.extend((1..=d).map(|k| format!("dw_{k}")));
        writeln!(out, "{}", header.join(","))?;
        for m in 0..self.n_modes {
            for k in 0..=self.n_steps {
                for omega in 0..self.n_in {
                    write!(out, "{m},{},{omega}", times[k])?;
                    for v in self.state(m, k, omega) {
                        write!(out, ",{v}")?;
                    }
                    if k < self.n_steps {
                        for v in self.increment(k, omega) {
                            write!(out, ",{v}")?;
                        }
                    } else {
                        write!(out, "{}", ",".repeat(d))?;
                    }
                    writeln!(out)?;
                }
            }
        }
        Ok(())
    }
}

/// Simulates `N_in` paths of every mode: uniform initial states over the
/// state box and `Normal(0, h I)` increments shared across modes.
pub fn simulate_paths(spec: &ProblemSpec, plan: &SamplePlan, seed: u64) -> Result<PathTable> {
    plan.validate()?;
    simulate(spec, plan.n_in, seed, false)
}

/// As [`simulate_paths`] with every increment forced to zero.
pub fn simulate_paths_frozen(spec: &ProblemSpec, n_in: usize, seed: u64) -> Result<PathTable> {
    simulate(spec, n_in, seed, true)
}

struct PathChunk {
    increments: Vec<f64>,
    states: Vec<f64>,
    clamps: usize,
}

fn simulate(spec: &ProblemSpec, n_in: usize, seed: u64, frozen: bool) -> Result<PathTable> {
    if n_in == 0 {
        return Err(Error::Plan("N_in must be at least 1".into()));
    }
    let d = spec.dim();
    let n_steps = spec.n_steps();
    let n_modes = spec.modes().len();
    let h = spec.step();
    let sqrt_h = h.sqrt();
    let eps = spec.epsilon();

    let chunks: Vec<PathChunk> = (0..n_in)
        .into_par_iter()
        .map(|omega| {
            let mut rng = keyed(seed, Stream::InitialState, &[omega as u64]);
            let x0: Vec<f64> = spec.state_box().iter().map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..hi) } else { lo }).collect();
            let mut increments = vec![0.0; n_steps * d];
            if !frozen {
                for k in 0..n_steps {
                    let mut rng = keyed(seed, Stream::Increment, &[k as u64, omega as u64]);
                    for v in &mut increments[k * d..(k + 1) * d] {
                        let z: f64 = rng.sample(StandardNormal);
                        *v = sqrt_h * z;
                    }
                }
            }
            let mut states = vec![0.0; n_modes * (n_steps + 1) * d];
            let mut clamps = 0;
            let mut sigma = vec![0.0; d * d];
            for (m, mode) in spec.modes().iter().enumerate() {
                let base = m * (n_steps + 1) * d;
                states[base..base + d].copy_from_slice(&x0);
                for k in 0..n_steps {
                    let (prev, next) = states[base + k * d..base + (k + 2) * d].split_at_mut(d);
                    mode.euler_step_into(eps, h, prev, &increments[k * d..(k + 1) * d], &mut sigma, next);
                    if let Some(guard) = spec.guard_box() {
                        let mut hit = false;
                        for (v, &(lo, hi)) in next.iter_mut().zip(guard) {
                            if *v < lo || *v > hi {
                                *v = v.clamp(lo, hi);
                                hit = true;
                            }
                        }
                        clamps += hit as usize;
                    }
                }
            }
            PathChunk { increments, states, clamps }
        })
        .collect();

    let mut increments = vec![0.0; n_steps * n_in * d];
    let mut states = vec![0.0; n_modes * (n_steps + 1) * n_in * d];
    let mut guard_clamps = 0;
    for (omega, chunk) in chunks.into_iter().enumerate() {
        for k in 0..n_steps {
            let dst = (k * n_in + omega) * d;
            increments[dst..dst + d].copy_from_slice(&chunk.increments[k * d..(k + 1) * d]);
        }
        for m in 0..n_modes {
            for k in 0..=n_steps {
                let dst = ((m * (n_steps + 1) + k) * n_in + omega) * d;
                let src = (m * (n_steps + 1) + k) * d;
                states[dst..dst + d].copy_from_slice(&chunk.states[src..src + d]);
            }
        }
        guard_clamps += chunk.clamps;
    }
    Ok(PathTable {
        dim: d,
        n_modes,
        n_steps,
        n_in,
        seed,
        increments,
        states,
        guard_clamps,
    })
}

fn draw_indices<R: Rng>(rng: &mut R, count: usize, n_in: usize) -> Vec<usize> {
    (0..count).map(|_| rng.gen_range(0..n_in)).collect()
}

fn product(states: &[usize], increments: &[usize]) -> Vec<(usize, usize)> {
    states.iter().flat_map(|&s| increments.iter().map(move |&w| (s, w))).collect()
}

/// Regression pairs `(ω_i, ω'_i)` (zero-based state and increment indices)
/// for the outer sample `omega` of `mode` at time index `k`. Random subsets
/// are drawn with replacement.
pub fn build_pairs(plan: &SamplePlan, seed: u64, k: usize, omega: usize, mode: usize) -> Vec<(usize, usize)> {
    let n_in = plan.n_in;
    match plan.method {
        SamplingMethod::Diagonal => (0..n_in).map(|i| (i, i)).collect(),
        SamplingMethod::SharedProduct => {
            let mut rng = keyed(seed, Stream::SharedSubset, &[k as u64]);
            let states = draw_indices(&mut rng, plan.n_x, n_in);
            let incs = draw_indices(&mut rng, plan.n_w, n_in);
            product(&states, &incs)
        }
        SamplingMethod::PrivateProduct => {
            let mut rng = keyed(seed, Stream::PrivateSubset, &[k as u64, omega as u64, mode as u64]);
            let states = draw_indices(&mut rng, plan.n_x, n_in);
            let incs = draw_indices(&mut rng, plan.n_w, n_in);
            product(&states, &incs)
        }
        SamplingMethod::FixedIncrements => {
            let mut rng = keyed(seed, Stream::SharedSubset, &[k as u64]);
            let states = draw_indices(&mut rng, plan.n_x, n_in);
            product(&states, &(0..n_in).collect::<Vec<_>>())
        }
        SamplingMethod::FullProduct => {
            let all: Vec<usize> = (0..n_in).collect();
            product(&all, &all)
        }
    }
}
