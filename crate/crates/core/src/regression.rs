//! Least-squares fitting of quadratic forms and concavity projection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadform::{monomials, n_monomials, QuadraticForm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Tikhonov parameter on the scaled basis; zero for plain least squares.
    pub ridge: f64,
    /// Singular values below `cutoff * σ_max` are treated as zero.
    pub cutoff: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { ridge: 0.0, cutoff: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub form: QuadraticForm,
    /// Numerical rank of the scaled design matrix.
    pub rank: usize,
    pub underdetermined: bool,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

/// Fits `q(x) ≈ y` over the basis `{1, x_k, x_k x_l}`.
///
/// Points and features are centered and scaled before a singular value
/// decomposition; rank-deficient systems get the minimal-norm solution in the
/// scaled basis, with an unpenalized intercept.
pub fn fit_quadratic(points: &[Vec<f64>], values: &[f64], opts: FitOptions) -> Result<Fit> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no regression points".into()));
    }
    if points.len() != values.len() {
        return Err(Error::InvalidArgument(format!("{} points but {} values", points.len(), values.len())));
    }
    let d = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::Dimension { expected: d, got: p.len() });
    }
    if opts.ridge < 0.0 || !opts.ridge.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge must be non-negative, got {}", opts.ridge)));
    }
    if points.iter().flatten().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression input".into()));
    }
    let n = points.len();
    let nb = n_monomials(d);

    let mut mean = vec![0.0; d];
    for p in points {
        for k in 0..d {
            mean[k] += p[k] / n as f64;
        }
    }
    let mut scale = vec![0.0; d];
    for p in points {
        for k in 0..d {
            scale[k] += (p[k] - mean[k]).powi(2) / n as f64;
        }
    }
    for s in scale.iter_mut() {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }

    // Monomials of the standardized points; the intercept is handled by
    // centering so that it is never shrunk by the minimal-norm solution.
    let mut design = DMatrix::<f64>::zeros(n, nb - 1);
    let mut u = vec![0.0; d];
    let mut row = vec![0.0; nb];
    for (i, p) in points.iter().enumerate() {
        for k in 0..d {
            u[k] = (p[k] - mean[k]) / scale[k];
        }
        monomials(&u, &mut row);
        for j in 1..nb {
            design[(i, j - 1)] = row[j];
        }
    }
    let mut col_mean = vec![0.0; nb - 1];
    let mut col_scale = vec![1.0; nb - 1];
    for j in 0..nb - 1 {
        let mut col = design.column_mut(j);
        let mu = col.sum() / n as f64;
        col.add_scalar_mut(-mu);
        let sd = (col.norm_squared() / n as f64).sqrt();
        if sd > 0.0 {
            col /= sd;
            col_scale[j] = sd;
        }
        col_mean[j] = mu;
    }
    let y_mean = values.iter().sum::<f64>() / n as f64;
    let y = DVector::from_iterator(n, values.iter().map(|v| v - y_mean));

    let svd = design.clone().svd(true, true);
    let (uu, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let sig = &svd.singular_values;
    let smax = sig.iter().fold(0.0f64, |m, &s| m.max(s));
    let uty = uu.transpose() * &y;
    let mut gamma = DVector::<f64>::zeros(nb - 1);
    let mut rank = 1;
    for i in 0..sig.len() {
        let s = sig[i];
        if s <= opts.cutoff * smax || s == 0.0 {
            continue;
        }
        rank += 1;
        let f = if opts.ridge > 0.0 { s / (s * s + opts.ridge) } else { 1.0 / s };
        gamma += vt.row(i).transpose() * (f * uty[i]);
    }
    let resid = &design * &gamma - &y;

    let mut beta = vec![y_mean; nb];
    for j in 0..nb - 1 {
        beta[j + 1] = gamma[j] / col_scale[j];
        beta[0] -= beta[j + 1] * col_mean[j];
    }

    let scaled = QuadraticForm::from_monomial_coefficients(d, &beta)?;
    let a = DMatrix::from_diagonal(&DVector::from_iterator(d, scale.iter().map(|s| 1.0 / s)));
    let b0 = DVector::from_iterator(d, (0..d).map(|k| -mean[k] / scale[k]));
    let form = scaled.compose_affine(&a, &b0)?;

    Ok(Fit {
        form,
        rank,
        underdetermined: rank < nb,
        rms_residual: (resid.norm_squared() / n as f64).sqrt(),
    })
}

/// Clamps the eigenvalues of `Q` to at most `-eta_min`.
///
/// Returns the form unchanged when it already complies. The second value is
/// the largest clamp applied to a single eigenvalue.
pub fn project_concave(form: &QuadraticForm, eta_min: f64) -> (QuadraticForm, f64) {
    if form.is_strictly_concave(eta_min) {
        return (form.clone(), 0.0);
    }
    let eig = form.q().clone().symmetric_eigen();
    let mut clamp = 0.0f64;
    let lambda = eig.eigenvalues.map(|l| {
        let c = l.min(-eta_min);
        clamp = clamp.max(l - c);
        c
    });
    let q = &eig.eigenvectors * DMatrix::from_diagonal(&lambda) * eig.eigenvectors.transpose();
    let projected = QuadraticForm::new(q, form.b().clone(), form.c()).expect("same dimension");
    (projected, clamp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<Vec<f64>> {
        (0..n).flat_map(|i| (0..n).map(move |j| vec![i as f64 - 1.0, j as f64 * 0.7 + 3.0])).collect()
    }

    #[test]
    fn recovers_exact_quadratic() {
        let q = QuadraticForm::new(DMatrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.2, -0.5]), DVector::from_column_slice(&[0.3, -2.0]), 4.0).unwrap();
        let pts = grid(4);
        let ys: Vec<f64> = pts.iter().map(|p| q.evaluate(p).unwrap()).collect();
        let fit = fit_quadratic(&pts, &ys, FitOptions::default()).unwrap();
        assert_eq!(fit.rank, 6);
        assert!(!fit.underdetermined);
        for (a, b) in fit.form.triple_entries().iter().zip(q.triple_entries()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn one_dimensional_exact() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        let fit = fit_quadratic(&pts, &[0.0, 1.0, 4.0], FitOptions::default()).unwrap();
        assert!((fit.form.q()[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(fit.form.b()[0].abs() < 1e-12);
        assert!(fit.form.c().abs() < 1e-12);
    }

    #[test]
    fn single_point_gives_constant() {
        let fit = fit_quadratic(&[vec![1.0, 2.0]], &[5.0], FitOptions::default()).unwrap();
        assert!(fit.underdetermined);
        assert_eq!(fit.rank, 1);
        assert!((fit.form.evaluate(&[1.0, 2.0]).unwrap() - 5.0).abs() < 1e-12);
        assert!(fit.form.q().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_quadratic(&[], &[], FitOptions::default()).is_err());
        assert!(fit_quadratic(&[vec![1.0]], &[1.0, 2.0], FitOptions::default()).is_err());
        assert!(fit_quadratic(&[vec![f64::NAN]], &[1.0], FitOptions::default()).is_err());
    }

    #[test]
    fn projection_examples() {
        let q = QuadraticForm::new(DMatrix::from_diagonal(&DVector::from_column_slice(&[-1.0, 0.5])), DVector::from_column_slice(&[1.0, 2.0]), 3.0).unwrap();
        let (p, clamp) = project_concave(&q, 1e-3);
        assert!((p.q()[(0, 0)] + 1.0).abs() < 1e-15);
        assert!((p.q()[(1, 1)] + 1e-3).abs() < 1e-15);
        assert_eq!(p.b(), q.b());
        assert_eq!(p.c(), 3.0);
        assert!((clamp - 0.501).abs() < 1e-12);

        let good = QuadraticForm::new(DMatrix::identity(2, 2) * -2.0, DVector::zeros(2), 0.0).unwrap();
        let (same, clamp) = project_concave(&good, 1e-3);
        assert_eq!(same, good);
        assert_eq!(clamp, 0.0);

        let diag = |a: f64, b: f64| QuadraticForm::new(DMatrix::from_diagonal(&DVector::from_column_slice(&[a, b])), DVector::zeros(2), 0.0).unwrap();
        let neg = diag(-1.0, -1.0);
        assert_eq!(project_concave(&neg, 0.0).0, neg);
        let (p, _) = project_concave(&diag(1.0, -2.0), 0.0);
        assert!((p.q() - diag(0.0, -2.0).q()).norm() < 1e-15);
        let (p, _) = project_concave(&diag(1e-12, -2.0), 1e-10);
        assert!((p.q() - diag(-1e-10, -2.0).q()).norm() < 1e-15);

        let zero = QuadraticForm::constant(2, 1.0);
        let (p, _) = project_concave(&zero, 1e-3);
        assert!((p.q() + DMatrix::identity(2, 2) * 1e-3).norm() < 1e-15);
    }
}
