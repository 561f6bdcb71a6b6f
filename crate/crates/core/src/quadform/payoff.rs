//! Under-approximation of ridge payoffs by finite suprema of concave
//! quadratic forms.
//!
//! The payoff is `ψ(ξ) = g(u·ξ)` with `g` piecewise linear. Each form is a
//! parabola in `s = u·ξ` anchored at a point `s_j` of the band, tangent to `g`
//! there with a one-sided slope, plus a weak transverse curvature about a
//! reference point:
//!
//! `q_j(ξ) = g(s_j) + g'(s_j)(s − s_j) − (c_j/2)(s − s_j)² − (τ/2)|P⊥(ξ − ξ_c)|² − shift_j`
//!
//! A concave kink of `g` cannot be touched from below by a concave form, so
//! forms near it carry the full kink curvature `c_kink`; away from concave
//! kinks the curvature relaxes to `jump / distance`, which is the least
//! curvature keeping a tangent parabola below the plateau on the other side
//! of the kink. Anchors are equidistributed in `∫ √c(s) ds`, which balances
//! the `c Δ²/8` gap between neighbouring tangent parabolas. `shift_j ≥ 0`
//! removes any residual overshoot, computed exactly piece by piece.

use nalgebra::{DMatrix, DVector};

use super::{MaxPlusFunction, QuadraticForm};
use crate::error::{Error, Result};

const SCAN_POINTS: usize = 100_001;
const DENSITY_GRID: usize = 20_001;

/// Continuous piecewise-linear profile, linear beyond its outer knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, left_slope: f64, right_slope: f64) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::InvalidArgument("profile needs matching, nonempty knots and values".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("profile knots must be strictly increasing".into()));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) || !left_slope.is_finite() || !right_slope.is_finite() {
            return Err(Error::InvalidArgument("profile must be finite".into()));
        }
        Ok(PiecewiseLinear {
            knots,
            values,
            left_slope,
            right_slope,
        })
    }

    /// `(s − k1)⁺ − (s − k2)⁺` for `k1 < k2`.
    pub fn butterfly(k1: f64, k2: f64) -> Result<Self> {
        if k1 >= k2 {
            return Err(Error::InvalidArgument(format!("butterfly needs K1 < K2, got {k1} >= {k2}")));
        }
        PiecewiseLinear::new(vec![k1, k2], vec![0.0, k2 - k1], 0.0, 0.0)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn eval(&self, s: f64) -> f64 {
        let n = self.knots.len();
        if s <= self.knots[0] {
            return self.values[0] + self.left_slope * (s - self.knots[0]);
        }
        if s >= self.knots[n - 1] {
            return self.values[n - 1] + self.right_slope * (s - self.knots[n - 1]);
        }
        let i = self.knots.partition_point(|&k| k <= s) - 1;
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        let (va, vb) = (self.values[i], self.values[i + 1]);
        va + (vb - va) * (s - a) / (b - a)
    }

    /// Slopes of the `n + 1` linear pieces, left to right.
    pub fn piece_slopes(&self) -> Vec<f64> {
        let mut out = vec![self.left_slope];
        for i in 0..self.knots.len() - 1 {
            out.push((self.values[i + 1] - self.values[i]) / (self.knots[i + 1] - self.knots[i]));
        }
        out.push(self.right_slope);
        out
    }

    pub fn right_slope_at(&self, s: f64) -> f64 {
        let i = self.knots.partition_point(|&k| k <= s);
        self.piece_slopes()[i]
    }

    pub fn left_slope_at(&self, s: f64) -> f64 {
        let i = self.knots.partition_point(|&k| k < s);
        self.piece_slopes()[i]
    }

    /// Knots where the slope drops, with the size of the drop.
    pub fn concave_kinks(&self) -> Vec<(f64, f64)> {
        let slopes = self.piece_slopes();
        self.knots
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| {
                let jump = slopes[i] - slopes[i + 1];
                (jump > 0.0).then_some((k, jump))
            })
            .collect()
    }

    /// Linear pieces restricted to `[lo, hi]` as `(a, b, slope)`.
    fn pieces_within(&self, lo: f64, hi: f64) -> Vec<(f64, f64, f64)> {
        let slopes = self.piece_slopes();
        let mut bounds = vec![f64::NEG_INFINITY];
        bounds.extend(&self.knots);
        bounds.push(f64::INFINITY);
        bounds
            .windows(2)
            .zip(slopes)
            .filter_map(|(w, m)| {
                let a = w[0].max(lo);
                let b = w[1].min(hi);
                (a < b).then_some((a, b, m))
            })
            .collect()
    }
}

/// `ψ(ξ) = g(u·ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgePayoff {
    direction: Vec<f64>,
    profile: PiecewiseLinear,
}

impl RidgePayoff {
    pub fn new(direction: Vec<f64>, profile: PiecewiseLinear) -> Result<Self> {
        if direction.is_empty() || direction.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidArgument("ridge direction must be nonzero".into()));
        }
        Ok(RidgePayoff { direction, profile })
    }

    /// Butterfly on the spread `ξ1 − ξ2`.
    pub fn spread_butterfly(k1: f64, k2: f64) -> Result<Self> {
        RidgePayoff::new(vec![1.0, -1.0], PiecewiseLinear::butterfly(k1, k2)?)
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn profile(&self) -> &PiecewiseLinear {
        &self.profile
    }

    pub fn ridge_coordinate(&self, xi: &[f64]) -> f64 {
        self.direction.iter().zip(xi).map(|(u, x)| u * x).sum()
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.profile.eval(self.ridge_coordinate(xi))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffApproxConfig {
    /// Interval of the ridge coordinate where the error is controlled.
    pub band: (f64, f64),
    pub n_forms: usize,
    /// Curvature along the ridge at concave kinks.
    pub c_kink: f64,
    /// Curvature across the ridge.
    pub transverse: f64,
    pub target_eps: f64,
    /// Point whose transverse offset is zero.
    pub center: Vec<f64>,
    /// Transverse half-width of the region covered by the error bound.
    pub transverse_radius: f64,
}

impl Default for PayoffApproxConfig {
    fn default() -> Self {
        PayoffApproxConfig {
            band: (-100.0, 100.0),
            n_forms: 90,
            c_kink: 4.0,
            transverse: 1e-6,
            target_eps: 0.05,
            center: vec![50.0, 50.0],
            transverse_radius: 100.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PayoffApprox {
    pub function: MaxPlusFunction,
    pub anchors: Vec<f64>,
    pub curvatures: Vec<f64>,
    pub shifts: Vec<f64>,
    /// `max (g − sup_j p_j)` over the band, from the dense scan.
    pub profile_error: f64,
    /// Largest overshoot `sup_j p_j − g` seen by the scan (should be ≤ 0).
    pub overshoot: f64,
    /// `τ/2 · R²`, the worst transverse loss inside the covered region.
    pub transverse_penalty: f64,
    pub achieved_error: f64,
}

fn curvature_at(s: f64, c_kink: f64, kinks: &[(f64, f64)]) -> f64 {
    if kinks.is_empty() {
        return c_kink;
    }
    kinks
        .iter()
        .map(|&(k, jump)| {
            let dist = (s - k).abs();
            if dist == 0.0 {
                c_kink
            } else {
                c_kink.min(jump / dist)
            }
        })
        .fold(0.0, f64::max)
}

/// Anchors equidistributed in `∫ √c`; both band ends are anchors.
fn place_anchors(lo: f64, hi: f64, n: usize, c_kink: f64, kinks: &[(f64, f64)]) -> Vec<f64> {
    let m = DENSITY_GRID;
    let grid: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
    let dens: Vec<f64> = grid.iter().map(|&s| curvature_at(s, c_kink, kinks).sqrt()).collect();
    let mut cum = vec![0.0; m];
    for i in 1..m {
        cum[i] = cum[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (grid[i] - grid[i - 1]);
    }
    let total = cum[m - 1];
    (0..n)
        .map(|j| {
            if j == 0 {
                return lo;
            }
            if j == n - 1 {
                return hi;
            }
            let target = total * j as f64 / (n - 1) as f64;
            let i = cum.partition_point(|&v| v < target).clamp(1, m - 1);
            let (c0, c1) = (cum[i - 1], cum[i]);
            let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
            grid[i - 1] + frac * (grid[i] - grid[i - 1])
        })
        .collect()
}

/// Largest value of `p(s) − g(s)` over `[lo, hi]` for the parabola
/// `p(s) = v + m (s − a) − (c/2)(s − a)²`.
fn max_overshoot(g: &PiecewiseLinear, lo: f64, hi: f64, a: f64, v: f64, m: f64, c: f64) -> f64 {
    let p = |s: f64| v + m * (s - a) - 0.5 * c * (s - a) * (s - a);
    g.pieces_within(lo, hi)
        .into_iter()
        .map(|(pa, pb, slope)| {
            let vertex = if c > 0.0 { a + (m - slope) / c } else if m > slope { pb } else { pa };
            let s = vertex.clamp(pa, pb);
            [pa, pb, s].into_iter().map(|x| p(x) - g.eval(x)).fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Builds `n_forms` concave forms whose supremum stays below `ψ` on the band
/// and within `target_eps` of it (including the transverse loss). Fails with
/// the achieved error when the target is out of reach.
pub fn approximate_payoff(payoff: &RidgePayoff, cfg: &PayoffApproxConfig) -> Result<PayoffApprox> {
    let d = payoff.dim();
    let (lo, hi) = cfg.band;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty band [{lo}, {hi}]")));
    }
    if cfg.n_forms < 2 {
        return Err(Error::InvalidArgument("n_forms must be at least 2".into()));
    }
    if !(cfg.c_kink > 0.0) || !(cfg.transverse > 0.0) || !(cfg.target_eps > 0.0) {
        return Err(Error::InvalidArgument("c_kink, transverse and target_eps must be positive".into()));
    }
    if cfg.center.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: cfg.center.len(),
        });
    }
    let g = payoff.profile();
    let kinks = g.concave_kinks();
    // each concave kink gets the pair of tangents at k ∓ J/(2c), which meet
    // the kink from below at the optimal depth J²/(8c)
    let mut anchors: Vec<f64> = kinks
        .iter()
        .filter(|&&(k, _)| k > lo && k < hi)
        .flat_map(|&(k, jump)| {
            let delta = jump / (2.0 * cfg.c_kink);
            [k - delta, k + delta]
        })
        .filter(|&a| a > lo && a < hi)
        .collect();
    if anchors.len() + 2 > cfg.n_forms {
        return Err(Error::InvalidArgument(format!(
            "n_forms = {} cannot cover {} concave kinks",
            cfg.n_forms,
            anchors.len() / 2
        )));
    }
    anchors.extend(place_anchors(lo, hi, cfg.n_forms - anchors.len(), cfg.c_kink, &kinks));
    anchors.sort_by(f64::total_cmp);

    let mut params = Vec::with_capacity(anchors.len());
    for (j, &a) in anchors.iter().enumerate() {
        let slope = if j == anchors.len() - 1 { g.left_slope_at(a) } else { g.right_slope_at(a) };
        let c = curvature_at(a, cfg.c_kink, &kinks);
        let v = g.eval(a);
        let shift = max_overshoot(g, lo, hi, a, v, slope, c).max(0.0);
        params.push((a, v - shift, slope, c, shift));
    }

    let mut profile_error: f64 = 0.0;
    let mut overshoot = f64::NEG_INFINITY;
    let mut scan: Vec<f64> = (0..SCAN_POINTS).map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64).collect();
    scan.extend(g.knots().iter().copied().filter(|&k| k >= lo && k <= hi));
    scan.extend(&anchors);
    for s in scan {
        let best = params
            .iter()
            .map(|&(a, v, m, c, _)| v + m * (s - a) - 0.5 * c * (s - a) * (s - a))
            .fold(f64::NEG_INFINITY, f64::max);
        let gs = g.eval(s);
        profile_error = profile_error.max(gs - best);
        overshoot = overshoot.max(best - gs);
    }
    let transverse_penalty = 0.5 * cfg.transverse * cfg.transverse_radius * cfg.transverse_radius;
    let achieved_error = profile_error + transverse_penalty;
    if achieved_error > cfg.target_eps {
        return Err(Error::PayoffApprox {
            achieved: achieved_error,
            target: cfg.target_eps,
        });
    }

    // lift the 1-D parabolas to R^d
    let u = DVector::from_column_slice(payoff.direction());
    let unit = &u / u.norm();
    let perp = DMatrix::identity(d, d) - &unit * unit.transpose();
    let center = DVector::from_column_slice(&cfg.center);
    let perp_center = &perp * &center;
    let uut = &u * u.transpose();
    let tau = cfg.transverse;
    let forms = params
        .iter()
        .map(|&(a, v, m, c, _)| {
            let q = -(&uut * c) - &perp * tau;
            let b = &u * (m + c * a) + &perp_center * tau;
            let c0 = v - m * a - 0.5 * c * a * a - 0.5 * tau * center.dot(&perp_center);
            QuadraticForm::new(q, b, c0)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PayoffApprox {
        function: MaxPlusFunction::new(forms)?,
        anchors,
        curvatures: params.iter().map(|p| p.3).collect(),
        shifts: params.iter().map(|p| p.4).collect(),
        profile_error,
        overshoot,
        transverse_penalty,
        achieved_error,
    })
}
