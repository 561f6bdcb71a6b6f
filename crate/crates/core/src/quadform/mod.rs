//! Concave quadratic forms and their finite suprema.
//!
//! A [`QuadraticForm`] is the triple `z = (Q, b, c)` representing
//! `q(x, z) = ½ xᵀQx + b·x + c`. A [`MaxPlusFunction`] is a finite set of such
//! triples standing for the pointwise supremum `x ↦ max_z q(x, z)`; value
//! functions of the solver live in this space.
//!
//! Both types are immutable once built. `MaxPlusFunction` keeps a packed,
//! feature-major copy of the coefficients so that the supremum over many forms
//! at one point is a short dense loop; [`QuadraticForm::evaluate`] performs the
//! same sequence of floating-point operations, so the two routes agree
//! bit-for-bit.

mod payoff;

pub use payoff::{approximate_payoff, PayoffApprox, PayoffApproxConfig, PiecewiseLinear, RidgePayoff};

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default strict-concavity floor for the optional eigenvalue check.
pub const DEFAULT_ETA_MIN: f64 = 1e-10;

/// Number of monomials `{1, x_k, x_k x_l (k ≤ l)}` in dimension `d`.
pub fn n_monomials(d: usize) -> usize {
    (d + 1) * (d + 2) / 2
}

/// Writes the monomials of `x` in the canonical order used throughout the
/// crate: `1`, then `x_1..x_d`, then `x_k x_l` for `k ≤ l` row by row.
pub fn monomials(x: &[f64], out: &mut [f64]) {
    let d = x.len();
    debug_assert_eq!(out.len(), n_monomials(d));
    out[0] = 1.0;
    out[1..=d].copy_from_slice(x);
    let mut i = d + 1;
    for k in 0..d {
        for l in k..d {
            out[i] = x[k] * x[l];
            i += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    q: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl QuadraticForm {
    /// Builds a form, symmetrizing `q` as `(Q + Qᵀ)/2` so the stored matrix is
    /// exactly symmetric.
    pub fn new(q: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self> {
        let d = b.len();
        if d == 0 {
            return Err(Error::InvalidArgument("zero-dimensional form".into()));
        }
        if q.nrows() != d || q.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                got: q.nrows().max(q.ncols()),
            });
        }
        let sym = DMatrix::from_fn(d, d, |i, j| 0.5 * (q[(i, j)] + q[(j, i)]));
        Ok(QuadraticForm { q: sym, b, c })
    }

    pub fn constant(d: usize, c: f64) -> Self {
        QuadraticForm {
            q: DMatrix::zeros(d, d),
            b: DVector::zeros(d),
            c,
        }
    }

    /// Rebuilds a form from its monomial coefficients (the inverse of
    /// [`QuadraticForm::monomial_coefficients`]).
    pub fn from_monomial_coefficients(d: usize, coef: &[f64]) -> Result<Self> {
        if coef.len() != n_monomials(d) {
            return Err(Error::Dimension {
                expected: n_monomials(d),
                got: coef.len(),
            });
        }
        let mut q = DMatrix::zeros(d, d);
        let mut i = d + 1;
        for k in 0..d {
            for l in k..d {
                if k == l {
                    q[(k, k)] = 2.0 * coef[i];
                } else {
                    q[(k, l)] = coef[i];
                    q[(l, k)] = coef[i];
                }
                i += 1;
            }
        }
        Ok(QuadraticForm {
            q,
            b: DVector::from_column_slice(&coef[1..=d]),
            c: coef[0],
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Coefficients against [`monomials`]: `c`, `b`, then `½Q_kk` on the
    /// diagonal and `Q_kl` off it.
    pub fn monomial_coefficients(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(n_monomials(d));
        out.push(self.c);
        out.extend(self.b.iter());
        for k in 0..d {
            for l in k..d {
                out.push(if k == l { 0.5 * self.q[(k, k)] } else { self.q[(k, l)] });
            }
        }
        out
    }

    /// Upper triangle of `Q` (row-major), then `b`, then `c`.
    pub fn triple_entries(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * (d + 1) / 2 + d + 1);
        for k in 0..d {
            for l in k..d {
                out.push(self.q[(k, l)]);
            }
        }
        out.extend(self.b.iter());
        out.push(self.c);
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.triple_entries().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.c.is_finite() && self.b.iter().all(|v| v.is_finite()) && self.q.iter().all(|v| v.is_finite())
    }

    /// `q(x, z) = ½ xᵀQx + b·x + c`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut v = self.c * 1.0;
        for k in 0..d {
            v += self.b[k] * x[k];
        }
        for k in 0..d {
            for l in k..d {
                let coef = if k == l { 0.5 * self.q[(k, k)] } else { self.q[(k, l)] };
                v += coef * (x[k] * x[l]);
            }
        }
        v
    }

    /// The form `x ↦ q(Ax + b0, z)`.
    pub fn compose_affine(&self, a: &DMatrix<f64>, b0: &DVector<f64>) -> Result<Self> {
        let d = self.dim();
        if a.nrows() != d || b0.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: if a.nrows() != d { a.nrows() } else { b0.len() },
            });
        }
        let qa = &self.q * a;
        let q = a.transpose() * qa;
        let shifted = &self.q * b0 + &self.b;
        let b = a.transpose() * shifted;
        let c = 0.5 * b0.dot(&(&self.q * b0)) + self.b.dot(b0) + self.c;
        QuadraticForm::new(q, b, c)
    }

    pub fn add_constant(&self, k: f64) -> Self {
        QuadraticForm {
            q: self.q.clone(),
            b: self.b.clone(),
            c: self.c + k,
        }
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        self.q.clone().symmetric_eigenvalues()
    }

    /// True when every eigenvalue of `Q` is at most `-eta_min`.
    pub fn is_strictly_concave(&self, eta_min: f64) -> bool {
        self.eigenvalues().iter().all(|&l| l <= -eta_min)
    }
}

/// A finite supremum of quadratic forms sharing one dimension.
#[derive(Debug, Clone)]
pub struct MaxPlusFunction {
    dim: usize,
    forms: Vec<QuadraticForm>,
    // feature-major: packed[k * n + f] is coefficient k of form f
    packed: Vec<f64>,
}

impl PartialEq for MaxPlusFunction {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.forms == other.forms
    }
}

impl MaxPlusFunction {
    pub fn new(forms: Vec<QuadraticForm>) -> Result<Self> {
        let first = forms.first().ok_or(Error::EmptyFunction)?;
        let dim = first.dim();
        if let Some(bad) = forms.iter().find(|f| f.dim() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: bad.dim(),
            });
        }
        let n = forms.len();
        let nf = n_monomials(dim);
        let mut packed = vec![0.0; nf * n];
        for (f, form) in forms.iter().enumerate() {
            for (k, v) in form.monomial_coefficients().into_iter().enumerate() {
                packed[k * n + f] = v;
            }
        }
        Ok(MaxPlusFunction { dim, forms, packed })
    }

    pub fn singleton(form: QuadraticForm) -> Self {
        MaxPlusFunction::new(vec![form]).expect("one form")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn forms(&self) -> &[QuadraticForm] {
        &self.forms
    }

    /// Maximum over forms and the lowest index attaining it.
    pub fn sup_evaluate(&self, x: &[f64]) -> Result<(f64, usize)> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut scratch = SupScratch::new(self);
        Ok(self.argmax_with(x, &mut scratch))
    }

    /// Allocation-free supremum for hot loops; `scratch` must come from
    /// [`SupScratch::new`] on a function of the same size and dimension.
    pub fn argmax_with(&self, x: &[f64], scratch: &mut SupScratch) -> (f64, usize) {
        let n = self.forms.len();
        let nf = n_monomials(self.dim);
        scratch.resize(nf, n);
        monomials(x, &mut scratch.features);
        let vals = &mut scratch.values;
        let f0 = scratch.features[0];
        for (v, c) in vals.iter_mut().zip(&self.packed[..n]) {
            *v = *c * f0;
        }
        for k in 1..nf {
            let fk = scratch.features[k];
            let row = &self.packed[k * n..(k + 1) * n];
            for (v, c) in vals.iter_mut().zip(row) {
                *v += *c * fk;
            }
        }
        let mut best = 0;
        let mut best_v = vals[0];
        for (i, &v) in vals.iter().enumerate().skip(1) {
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        (best_v, best)
    }

    /// Removes forms whose triples lie within `tol` (component-wise) of an
    /// earlier kept form. Returns the pruned function and the kept indices.
    pub fn prune_duplicates(&self, tol: f64) -> (MaxPlusFunction, Vec<usize>) {
        let entries: Vec<Vec<f64>> = self.forms.iter().map(|f| f.triple_entries()).collect();
        let mut kept: Vec<usize> = Vec::with_capacity(self.forms.len());
        for (i, e) in entries.iter().enumerate() {
            let dup = kept.iter().any(|&k| {
                entries[k]
                    .iter()
                    .zip(e)
                    .all(|(a, b)| (a - b).abs() <= tol || a == b)
            });
            if !dup {
                kept.push(i);
            }
        }
        if kept.len() == self.forms.len() {
            return (self.clone(), kept);
        }
        let forms = kept.iter().map(|&i| self.forms[i].clone()).collect();
        (MaxPlusFunction::new(forms).expect("nonempty"), kept)
    }
}

/// Reusable buffers for [`MaxPlusFunction::argmax_with`].
#[derive(Debug, Clone, Default)]
pub struct SupScratch {
    features: Vec<f64>,
    values: Vec<f64>,
}

impl SupScratch {
    pub fn new(f: &MaxPlusFunction) -> Self {
        let mut s = SupScratch::default();
        s.resize(n_monomials(f.dim()), f.len());
        s
    }

    fn resize(&mut self, nf: usize, n: usize) {
        if self.features.len() != nf {
            self.features.resize(nf, 0.0);
        }
        if self.values.len() != n {
            self.values.resize(n, 0.0);
        }
    }
}

/// Header line of the form dump for dimension `d`.
pub fn csv_header(d: usize) -> String {
    let mut cols = vec!["t".to_string(), "mode_label".to_string()];
    for k in 1..=d {
        for l in k..=d {
            cols.push(format!("q_{k}_{l}"));
        }
    }
    for k in 1..=d {
        cols.push(format!("b_{k}"));
    }
    cols.push("c".to_string());
    cols.join(",")
}

/// Appends one row per form. `labels[i]` names the control mode that produced
/// form `i`.
pub fn write_csv_rows<W: Write>(out: &mut W, t: f64, labels: &[&str], f: &MaxPlusFunction) -> std::io::Result<()> {
    for (form, label) in f.forms().iter().zip(labels) {
        write!(out, "{t},{label}")?;
        for v in form.triple_entries() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
