//! Reference values for constant-mode two-asset problems.
//!
//! With a single mode the dynamics are two correlated geometric Brownian
//! motions, so `E[ψ(ξ_T)]` can be computed without the solver. For payoffs
//! that are piecewise linear in `u·ξ`, conditioning on the first Brownian
//! factor turns each hinge into a Black–Scholes price; the remaining
//! one-dimensional expectation is integrated by Gauss–Hermite quadrature,
//! after subtracting smoothed hinges with closed-form Gaussian expectations
//! at the places where the conditional spread crosses a kink.

use nalgebra::DMatrix;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::{ControlMode, CorrelationParams};
use crate::quadform::{MaxPlusFunction, RidgePayoff};

pub const DEFAULT_NODES: usize = 64;

/// Nodes and weights for `E[f(g)]`, `g ~ N(0, 1)`.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one quadrature node".into()));
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(pairs.into_iter().map(|(x, w)| (x, w / total)).unzip())
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `E[(K − F e^{sZ − s²/2})⁺]`.
fn put(f: f64, k: f64, s: f64) -> f64 {
    if k <= 0.0 {
        return 0.0;
    }
    if s <= 0.0 {
        return (k - f).max(0.0);
    }
    let d1 = ((f / k).ln() + 0.5 * s * s) / s;
    let d2 = d1 - s;
    k * norm_cdf(-d2) - f * norm_cdf(-d1)
}

/// `E[(F e^{sZ − s²/2} − K)⁺]`.
fn call(f: f64, k: f64, s: f64) -> f64 {
    put(f, k, s) + f - k
}

/// `E[(μ + wY)⁺]`, `Y ~ N(0, 1)`.
fn bachelier(mu: f64, w: f64) -> f64 {
    let z = mu / w;
    mu * norm_cdf(z) + w * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `scale · E[(sign (g − center) + width Y)⁺]` as a function of `g`.
#[derive(Debug, Clone, Copy)]
struct HingeControl {
    scale: f64,
    sign: f64,
    center: f64,
    width: f64,
}

impl HingeControl {
    fn eval(&self, g: f64) -> f64 {
        self.scale * bachelier(self.sign * (g - self.center), self.width)
    }

    /// Expectation over `g ~ N(0, 1)`.
    fn expectation(&self) -> f64 {
        self.scale * bachelier(-self.sign * self.center, (1.0 + self.width * self.width).sqrt())
    }
}

/// Terminal function seen by the oracle.
#[derive(Debug, Clone)]
pub enum OraclePayoff {
    Ridge(RidgePayoff),
    Forms(MaxPlusFunction),
    Constant(f64),
}

impl OraclePayoff {
    pub fn eval(&self, xi: &[f64]) -> f64 {
        match self {
            OraclePayoff::Ridge(p) => p.eval(xi),
            OraclePayoff::Forms(f) => f.sup_evaluate(xi).expect("two-dimensional").0,
            OraclePayoff::Constant(c) => *c,
        }
    }
}

/// Exact law of one constant-correlation mode over a horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantModeLaw {
    pub params: CorrelationParams,
    pub horizon: f64,
}

impl ConstantModeLaw {
    /// Fails unless the mode has zero drift, discount and running reward and
    /// the correlation diffusion.
    pub fn from_mode(mode: &ControlMode, horizon: f64) -> Result<Self> {
        let params = mode
            .correlation
            .ok_or_else(|| Error::Unsupported(format!("mode {} is not a constant-correlation diffusion", mode.label)))?;
        let reward = &mode.running_reward;
        let zero_reward = reward.c() == 0.0 && reward.b().iter().all(|&v| v == 0.0) && reward.q().iter().all(|&v| v == 0.0);
        if !mode.drift.is_zero() || mode.discount != 0.0 || !zero_reward {
            return Err(Error::Unsupported(format!("mode {} has drift, discount or running reward", mode.label)));
        }
        if horizon < 0.0 || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be non-negative, got {horizon}")));
        }
        Ok(ConstantModeLaw { params, horizon })
    }

    fn first(&self, x1: f64, g1: f64) -> f64 {
        let (s1, t) = (self.params.sigma1, self.horizon);
        x1 * (-0.5 * s1 * s1 * t + s1 * t.sqrt() * g1).exp()
    }

    /// Forward and log-volatility of `ξ2_T` given the first factor.
    fn second_given(&self, x2: f64, g1: f64) -> (f64, f64) {
        let CorrelationParams { sigma2, rho, .. } = self.params;
        let t = self.horizon;
        let s = sigma2 * t.sqrt() * (1.0 - rho * rho).max(0.0).sqrt();
        let fwd = x2 * (-0.5 * sigma2 * sigma2 * t + sigma2 * t.sqrt() * rho * g1 + 0.5 * s * s).exp();
        (fwd, s)
    }

    fn second(&self, x2: f64, g1: f64, g2: f64) -> f64 {
        let (fwd, s) = self.second_given(x2, g1);
        fwd * (s * g2 - 0.5 * s * s).exp()
    }

    /// Mean and derivative in `g1` of the conditional ridge coordinate, and
    /// its conditional standard deviation.
    fn ridge_moments(&self, u: &[f64], x: &[f64], g1: f64) -> (f64, f64, f64) {
        let CorrelationParams { sigma1, sigma2, rho } = self.params;
        let rt = self.horizon.sqrt();
        let xi1 = self.first(x[0], g1);
        let (fwd, s) = self.second_given(x[1], g1);
        let mean = u[0] * xi1 + u[1] * fwd;
        let slope = u[0] * xi1 * sigma1 * rt + u[1] * fwd * sigma2 * rt * rho;
        let sd = (u[1] * fwd).abs() * (s * s).exp_m1().sqrt();
        (mean, slope, sd)
    }

    /// One smoothed hinge per crossing of a payoff kink by the conditional
    /// mean of the ridge coordinate.
    fn kink_controls(&self, payoff: &RidgePayoff, x: &[f64]) -> Vec<HingeControl> {
        let u = payoff.direction();
        let prof = payoff.profile();
        let slopes = prof.piece_slopes();
        let mut out = Vec::new();
        for (i, &k) in prof.knots().iter().enumerate() {
            let jump = slopes[i + 1] - slopes[i];
            if jump == 0.0 {
                continue;
            }
            let f = |g: f64| self.ridge_moments(u, x, g).0 - k;
            let grid: Vec<f64> = (0..=80).map(|j| -10.0 + 0.25 * j as f64).collect();
            for pair in grid.windows(2) {
                let (mut a, mut b) = (pair[0], pair[1]);
                let (mut fa, fb) = (f(a), f(b));
                if fa == 0.0 || fa.signum() == fb.signum() {
                    continue;
                }
                for _ in 0..100 {
                    let m = 0.5 * (a + b);
                    let fm = f(m);
                    if fm.signum() == fa.signum() {
                        a = m;
                        fa = fm;
                    } else {
                        b = m;
                    }
                }
                let g0 = 0.5 * (a + b);
                let (_, slope, sd) = self.ridge_moments(u, x, g0);
                if slope != 0.0 && sd > 0.0 {
                    out.push(HingeControl {
                        scale: jump * slope.abs(),
                        sign: slope.signum(),
                        center: g0,
                        width: sd / slope.abs(),
                    });
                }
            }
        }
        out
    }

    /// `E[g(u·ξ_T) | g1]` for a piecewise-linear ridge payoff.
    fn conditional_ridge(&self, payoff: &RidgePayoff, x: &[f64], g1: f64) -> f64 {
        let u = payoff.direction();
        let prof = payoff.profile();
        let xi1 = self.first(x[0], g1);
        let (fwd, s) = self.second_given(x[1], g1);
        let knots = prof.knots();
        let slopes = prof.piece_slopes();
        let hinge = |k: f64| -> f64 {
            let a = u[0] * xi1 - k;
            if u[1] < 0.0 {
                -u[1] * put(fwd, a / -u[1], s)
            } else if u[1] > 0.0 {
                u[1] * call(fwd, -a / u[1], s)
            } else {
                a.max(0.0)
            }
        };
        let mean_ridge = u[0] * xi1 + u[1] * fwd;
        let mut v = prof.eval(knots[0]) + slopes[0] * (mean_ridge - knots[0]);
        for (i, &k) in knots.iter().enumerate() {
            let jump = slopes[i + 1] - slopes[i];
            if jump != 0.0 {
                v += jump * hinge(k);
            }
        }
        v
    }

    /// Orders the assets so that the outer integrand varies most slowly: the
    /// conditional spread width over its rate of change in the outer factor
    /// is largest.
    fn conditioning_order(&self, payoff: &RidgePayoff, x: &[f64]) -> (ConstantModeLaw, RidgePayoff, [f64; 2]) {
        let CorrelationParams { sigma1, sigma2, rho } = self.params;
        let u = payoff.direction();
        let resid = (1.0 - rho * rho).max(0.0).sqrt();
        let width = |ui: f64, xi: f64, si: f64, uj: f64, xj: f64, sj: f64| (uj * xj * sj * resid).abs() / (ui * xi * si + uj * xj * sj * rho).abs().max(1e-300);
        let keep = width(u[0], x[0], sigma1, u[1], x[1], sigma2);
        let swap = width(u[1], x[1], sigma2, u[0], x[0], sigma1);
        if swap > keep {
            let law = ConstantModeLaw {
                params: CorrelationParams { sigma1: sigma2, sigma2: sigma1, rho },
                horizon: self.horizon,
            };
            let p = RidgePayoff::new(vec![u[1], u[0]], payoff.profile().clone()).expect("nonzero direction");
            (law, p, [x[1], x[0]])
        } else {
            (*self, payoff.clone(), [x[0], x[1]])
        }
    }

    /// `E[ψ(ξ_T) | ξ_0 = x]` by one-dimensional quadrature when `ψ` is a
    /// ridge payoff, and by tensor quadrature otherwise.
    pub fn expectation(&self, payoff: &OraclePayoff, x: &[f64], n_nodes: usize) -> Result<f64> {
        if x.len() != 2 {
            return Err(Error::Dimension { expected: 2, got: x.len() });
        }
        if x.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("oracle needs positive states, got {x:?}")));
        }
        match payoff {
            OraclePayoff::Ridge(p) if p.dim() == 2 => {
                let (nodes, weights) = gauss_hermite(n_nodes)?;
                let (law, p, x) = self.conditioning_order(p, x);
                let controls = law.kink_controls(&p, &x);
                let exact: f64 = controls.iter().map(HingeControl::expectation).sum();
                let residual: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&g, &w)| w * (law.conditional_ridge(&p, &x, g) - controls.iter().map(|c| c.eval(g)).sum::<f64>()))
                    .sum();
                Ok(exact + residual)
            }
            _ => self.tensor_expectation(payoff, x, n_nodes),
        }
    }

    /// `E[ψ(ξ_T)]` by tensor Gauss–Hermite quadrature over both factors.
    pub fn tensor_expectation(&self, payoff: &OraclePayoff, x: &[f64], n_nodes: usize) -> Result<f64> {
        if x.len() != 2 {
            return Err(Error::Dimension { expected: 2, got: x.len() });
        }
        let (nodes, weights) = gauss_hermite(n_nodes)?;
        let mut total = 0.0;
        for (&g1, &w1) in nodes.iter().zip(&weights) {
            let xi1 = self.first(x[0], g1);
            let mut inner = 0.0;
            for (&g2, &w2) in nodes.iter().zip(&weights) {
                inner += w2 * payoff.eval(&[xi1, self.second(x[1], g1, g2)]);
            }
            total += w1 * inner;
        }
        Ok(total)
    }
}

/// `E[ψ(ξ_T)]` for the constant mode `mode` over the horizon of the problem.
pub fn oracle_constant_mode(mode: &ControlMode, horizon: f64, payoff: &OraclePayoff, x: &[f64], n_nodes: usize) -> Result<f64> {
    ConstantModeLaw::from_mode(mode, horizon)?.expectation(payoff, x, n_nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadform::QuadraticForm;

    fn law(rho: f64, t: f64) -> ConstantModeLaw {
        ConstantModeLaw::from_mode(&ControlMode::uncertain_correlation("m", 0.4, 0.3, rho).unwrap(), t).unwrap()
    }

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite(20).unwrap();
        let m = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-14);
        assert!(m(1).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
        assert!((m(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn short_horizon_returns_payoff() {
        let p = OraclePayoff::Ridge(RidgePayoff::spread_butterfly(-5.0, 5.0).unwrap());
        let v = law(0.8, 1e-12).expectation(&p, &[50.0, 50.0], 64).unwrap();
        assert!((v - 5.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn frozen_volatility_returns_payoff() {
        let mode = ControlMode::uncertain_correlation("m", 0.0, 0.0, 0.3).unwrap();
        let p = OraclePayoff::Ridge(RidgePayoff::spread_butterfly(-5.0, 5.0).unwrap());
        for x in [[50.0, 50.0], [52.0, 50.0], [20.0, 50.0], [80.0, 50.0]] {
            let v = oracle_constant_mode(&mode, 0.25, &p, &x, 16).unwrap();
            assert!((v - p.eval(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_payoff() {
        for n in [1, 5, 64] {
            let v = law(-0.8, 0.25).expectation(&OraclePayoff::Constant(1.0), &[40.0, 60.0], n).unwrap();
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_payoff_is_martingale() {
        let f = MaxPlusFunction::singleton(QuadraticForm::new(DMatrix::zeros(2, 2), nalgebra::DVector::from_column_slice(&[1.0, -2.0]), 3.0).unwrap());
        let v = law(0.5, 0.25).expectation(&OraclePayoff::Forms(f), &[40.0, 60.0], 32).unwrap();
        assert!((v - (40.0 - 120.0 + 3.0)).abs() < 1e-9);
    }

    #[test]
    fn routes_agree() {
        let p = OraclePayoff::Ridge(RidgePayoff::spread_butterfly(-5.0, 5.0).unwrap());
        let l = law(-0.8, 0.25);
        for x in [[45.0, 50.0], [50.0, 50.0], [58.0, 50.0]] {
            let a = l.expectation(&p, &x, 64).unwrap();
            let b = l.tensor_expectation(&p, &x, 200).unwrap();
            assert!((a - b).abs() < 2e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn hinge_control_expectation() {
        let (x, w) = gauss_hermite(400).unwrap();
        for c in [
            HingeControl { scale: 2.0, sign: 1.0, center: 0.3, width: 1.5 },
            HingeControl { scale: -1.0, sign: -1.0, center: -1.2, width: 2.0 },
        ] {
            let quad: f64 = x.iter().zip(&w).map(|(&g, &w)| w * c.eval(g)).sum();
            assert!((quad - c.expectation()).abs() < 1e-9, "{quad} vs {}", c.expectation());
        }
    }

    #[test]
    fn node_convergence() {
        let p = OraclePayoff::Ridge(RidgePayoff::spread_butterfly(-5.0, 5.0).unwrap());
        for rho in [0.8, -0.8] {
            let l = law(rho, 0.25);
            for xi1 in [40.0, 45.0, 50.0, 55.0, 60.0] {
                let a = l.expectation(&p, &[xi1, 50.0], 64).unwrap();
                let b = l.expectation(&p, &[xi1, 50.0], 128).unwrap();
                assert!((a - b).abs() < 1e-6, "rho {rho} xi1 {xi1}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_other_models() {
        let mut mode = ControlMode::uncertain_correlation("m", 0.4, 0.3, 0.8).unwrap();
        mode.discount = 0.1;
        assert!(matches!(ConstantModeLaw::from_mode(&mode, 0.25), Err(Error::Unsupported(_))));
        mode.discount = 0.0;
        mode.correlation = None;
        assert!(matches!(ConstantModeLaw::from_mode(&mode, 0.25), Err(Error::Unsupported(_))));
    }
}
