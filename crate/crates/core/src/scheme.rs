//! The probabilistic one-step operator.
//!
//! For a mode `m`, a point `x` and a sampled function `φ̃` of the Brownian
//! increment, the operator is
//!
//! `G(φ̃) = D⁰ + h G^m(x, D⁰, D¹, D²)`,  `D^k = mean_j φ̃(w_j) P^k(w_j)`
//!
//! with the Malliavin-type weights
//!
//! * `P⁰ = 1`
//! * `P¹(w) = σ̲(x)⁻ᵀ w / h`
//! * `P²(w) = σ̲(x)⁻ᵀ (w wᵀ − h I) σ̲(x)⁻¹ / h²`
//!
//! where `σ̲ = εΣ`. In the solver `φ̃(w) = q(S(x, w), z̄(w))` for a selection
//! `z̄` that picks, for each increment, a maximizing form of the next value
//! function at the outer sample point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ControlMode;
use crate::quadform::{MaxPlusFunction, SupScratch};

/// Value, gradient or Hessian-shaped quantity, by derivative order.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    Value(f64),
    Gradient(DVector<f64>),
    Hessian(DMatrix<f64>),
}

impl Estimate {
    pub fn value(&self) -> Option<f64> {
        match self {
            Estimate::Value(v) => Some(*v),
            _ => None,
        }
    }

    pub fn gradient(&self) -> Option<&DVector<f64>> {
        match self {
            Estimate::Gradient(v) => Some(v),
            _ => None,
        }
    }

    pub fn hessian(&self) -> Option<&DMatrix<f64>> {
        match self {
            Estimate::Hessian(v) => Some(v),
            _ => None,
        }
    }
}

fn check_order(k: usize) -> Result<()> {
    if k > 2 {
        return Err(Error::InvalidArgument(format!("derivative order {k} is not 0, 1 or 2")));
    }
    Ok(())
}

/// `σ̲(x)⁻¹ = (εΣ(x))⁻¹`.
fn inverse_sigma(mode: &ControlMode, eps: f64, x: &[f64]) -> Result<DMatrix<f64>> {
    (mode.sigma(x) * eps).try_inverse().ok_or_else(|| Error::SingularDiffusion {
        mode: mode.label.clone(),
        x: x.to_vec(),
    })
}

/// The weight `P^k(w)` at `x`.
pub fn weight_p(k: usize, mode: &ControlMode, eps: f64, h: f64, x: &[f64], w: &[f64]) -> Result<Estimate> {
    check_order(k)?;
    let d = mode.dim();
    if x.len() != d || w.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: if x.len() != d { x.len() } else { w.len() },
        });
    }
    if k == 0 {
        return Ok(Estimate::Value(1.0));
    }
    let inv = inverse_sigma(mode, eps, x)?;
    let w = DVector::from_column_slice(w);
    if k == 1 {
        return Ok(Estimate::Gradient(inv.transpose() * w / h));
    }
    let inner = &w * w.transpose() - DMatrix::identity(d, d) * h;
    Ok(Estimate::Hessian(inv.transpose() * inner * inv / (h * h)))
}

/// Antithetic pairing followed by second-moment matching.
///
/// Returns `{±L w_j}` where `L` makes the sample second moment exactly `h I`,
/// so `Σ_j P¹(w_j) = 0` and `Σ_j P²(w_j) = 0`. If the increments do not span
/// the space, a scalar rescaling matching `mean |w|² = d h` is used instead,
/// which still cancels the trace of `Σ_j P²`.
pub fn moment_match(increments: &[Vec<f64>], h: f64) -> Vec<Vec<f64>> {
    let n = increments.len();
    if n == 0 {
        return Vec::new();
    }
    let d = increments[0].len();
    let mut c = DMatrix::<f64>::zeros(d, d);
    for w in increments {
        for i in 0..d {
            for j in 0..d {
                c[(i, j)] += w[i] * w[j] / n as f64;
            }
        }
    }
    let eig = c.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let transform = if max > 0.0 && min > 1e-10 * max {
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (h / l).sqrt()));
        &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose()
    } else {
        let tr = c.trace();
        let s = if tr > 0.0 { (d as f64 * h / tr).sqrt() } else { 1.0 };
        DMatrix::identity(d, d) * s
    };
    let mut out = Vec::with_capacity(2 * n);
    for sign in [1.0, -1.0] {
        for w in increments {
            let v = &transform * DVector::from_column_slice(w) * sign;
            out.push(v.iter().copied().collect());
        }
    }
    out
}

/// The sample operator at `x` applied to the values `φ̃(w_j)`.
pub fn apply_to_values(mode: &ControlMode, eps: f64, h: f64, x: &[f64], increments: &[Vec<f64>], values: &[f64]) -> Result<f64> {
    let est = estimates_from_values(mode, eps, h, x, increments, values)?;
    Ok(combine(mode, eps, h, x, &est))
}

/// `(D⁰, D¹, D²)` at `x` for the values `φ̃(w_j)`.
pub fn estimates_from_values(
    mode: &ControlMode,
    eps: f64,
    h: f64,
    x: &[f64],
    increments: &[Vec<f64>],
    values: &[f64],
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    if increments.is_empty() || increments.len() != values.len() {
        return Err(Error::InvalidArgument("need one value per increment and at least one increment".into()));
    }
    let d = mode.dim();
    let mut acc = Accumulator::new(d);
    for (w, &v) in increments.iter().zip(values) {
        acc.add(w, v);
    }
    acc.finish(mode, eps, h, x)
}

fn combine(mode: &ControlMode, eps: f64, h: f64, x: &[f64], est: &(f64, DVector<f64>, DMatrix<f64>)) -> f64 {
    let (d0, d1, d2) = est;
    d0 + h * mode.nonlinear_generator(eps, x, *d0, d1.as_slice(), d2)
}

/// Running sums `Σφ`, `Σφw`, `Σφ(wwᵀ − hI)` (the last without the `h` term).
struct Accumulator {
    d: usize,
    n: usize,
    s0: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Accumulator {
    fn new(d: usize) -> Self {
        Accumulator {
            d,
            n: 0,
            s0: 0.0,
            s1: vec![0.0; d],
            s2: vec![0.0; d * d],
        }
    }

    #[inline]
    fn add(&mut self, w: &[f64], v: f64) {
        let d = self.d;
        self.n += 1;
        self.s0 += v;
        for i in 0..d {
            let vi = v * w[i];
            self.s1[i] += vi;
            for j in 0..d {
                self.s2[i * d + j] += vi * w[j];
            }
        }
    }

    fn finish(&self, mode: &ControlMode, eps: f64, h: f64, x: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let d = self.d;
        let n = self.n as f64;
        let inv = inverse_sigma(mode, eps, x)?;
        let d0 = self.s0 / n;
        let d1 = inv.transpose() * DVector::from_column_slice(&self.s1) / (n * h);
        let mut inner = DMatrix::from_row_slice(d, d, &self.s2);
        for i in 0..d {
            inner[(i, i)] -= h * self.s0;
        }
        let m = inv.transpose() * inner * &inv / (n * h * h);
        let d2 = (&m + m.transpose()) * 0.5;
        Ok((d0, d1, d2))
    }
}

/// For each increment, the index of a maximizing form of the next value
/// function at `S(x_ω, w)`, ties going to the lowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMap {
    pub increments: Vec<Vec<f64>>,
    pub choices: Vec<usize>,
    /// `(ω, m, k)` the selection was built for.
    pub owner: (usize, usize, usize),
}

impl SelectionMap {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Checks that every choice attains the supremum at `S(x_ω, w_j)`.
    pub fn verify(&self, next: &MaxPlusFunction, mode: &ControlMode, eps: f64, h: f64, x_omega: &[f64]) -> Result<bool> {
        for (w, &z) in self.increments.iter().zip(&self.choices) {
            let y = mode.euler_step(eps, h, x_omega, w)?;
            let (sup, _) = next.sup_evaluate(&y)?;
            if next.forms()[z].evaluate(&y)? != sup {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn build_selection(
    next: &MaxPlusFunction,
    mode: &ControlMode,
    eps: f64,
    h: f64,
    x_omega: &[f64],
    increments: Vec<Vec<f64>>,
    owner: (usize, usize, usize),
) -> Result<SelectionMap> {
    let d = mode.dim();
    if next.dim() != d || x_omega.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: if next.dim() != d { next.dim() } else { x_omega.len() },
        });
    }
    if let Some(w) = increments.iter().find(|w| w.len() != d) {
        return Err(Error::Dimension { expected: d, got: w.len() });
    }
    let mut scratch = SupScratch::new(next);
    let choices = select(next, mode, eps, h, x_omega, &increments, &mut scratch);
    Ok(SelectionMap {
        increments,
        choices,
        owner,
    })
}

pub(crate) fn select(next: &MaxPlusFunction, mode: &ControlMode, eps: f64, h: f64, x_omega: &[f64], increments: &[Vec<f64>], scratch: &mut SupScratch) -> Vec<usize> {
    let d = mode.dim();
    let mut sigma = vec![0.0; d * d];
    let mut y = vec![0.0; d];
    increments
        .iter()
        .map(|w| {
            mode.euler_step_into(eps, h, x_omega, w, &mut sigma, &mut y);
            next.argmax_with(&y, scratch).1
        })
        .collect()
}

/// Values `q(S(x, w_j), z_j)` of the selected forms at `x`.
pub fn selected_values(mode: &ControlMode, eps: f64, h: f64, x: &[f64], selection: &SelectionMap, next: &MaxPlusFunction) -> Vec<f64> {
    let d = mode.dim();
    let mut sigma = vec![0.0; d * d];
    let mut y = vec![0.0; d];
    selection
        .increments
        .iter()
        .zip(&selection.choices)
        .map(|(w, &z)| {
            mode.euler_step_into(eps, h, x, w, &mut sigma, &mut y);
            next.forms()[z].eval_unchecked(&y)
        })
        .collect()
}

/// `D̂^k` at `x_g` for the selected forms.
pub fn estimate_d(
    k: usize,
    mode: &ControlMode,
    eps: f64,
    h: f64,
    x_g: &[f64],
    selection: &SelectionMap,
    next: &MaxPlusFunction,
) -> Result<Estimate> {
    check_order(k)?;
    if selection.is_empty() {
        return Err(Error::InvalidArgument("empty selection".into()));
    }
    let values = selected_values(mode, eps, h, x_g, selection, next);
    let (d0, d1, d2) = estimates_from_values(mode, eps, h, x_g, &selection.increments, &values)?;
    Ok(match k {
        0 => Estimate::Value(d0),
        1 => Estimate::Gradient(d1),
        _ => Estimate::Hessian(d2),
    })
}

/// `D̂⁰ + h G^m(x_g, D̂⁰, D̂¹, D̂²)` for the selected forms.
pub fn apply_operator(mode: &ControlMode, eps: f64, h: f64, x_g: &[f64], selection: &SelectionMap, next: &MaxPlusFunction) -> Result<f64> {
    if selection.is_empty() {
        return Err(Error::InvalidArgument("empty selection".into()));
    }
    let d = mode.dim();
    if x_g.len() != d {
        return Err(Error::Dimension { expected: d, got: x_g.len() });
    }
    apply_choices(mode, eps, h, x_g, &selection.increments, &selection.choices, next)
}

pub(crate) fn apply_choices(
    mode: &ControlMode,
    eps: f64,
    h: f64,
    x_g: &[f64],
    increments: &[Vec<f64>],
    choices: &[usize],
    next: &MaxPlusFunction,
) -> Result<f64> {
    let d = mode.dim();
    let mut sigma = vec![0.0; d * d];
    let mut y = vec![0.0; d];
    let mut acc = Accumulator::new(d);
    for (w, &z) in increments.iter().zip(choices) {
        mode.euler_step_into(eps, h, x_g, w, &mut sigma, &mut y);
        acc.add(w, next.forms()[z].eval_unchecked(&y));
    }
    let est = acc.finish(mode, eps, h, x_g)?;
    Ok(combine(mode, eps, h, x_g, &est))
}
