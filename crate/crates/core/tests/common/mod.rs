#![allow(dead_code)]

use maxplus_hjb::model::ControlMode;
use maxplus_hjb::quadform::{MaxPlusFunction, QuadraticForm};
use maxplus_hjb::regression::{fit_quadratic, FitOptions};
use maxplus_hjb::scheme::{apply_operator, build_selection, moment_match, SelectionMap};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const EPS: f64 = 0.75;
pub const H: f64 = 0.05;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn state(rng: &mut ChaCha8Rng) -> Vec<f64> {
    vec![rng.gen_range(20.0..80.0), rng.gen_range(30.0..70.0)]
}

pub fn concave_form(rng: &mut ChaCha8Rng, curvature: f64) -> QuadraticForm {
    let a = DMatrix::from_fn(2, 2, |_, _| normal(rng));
    let q = -(a.transpose() * a + DMatrix::identity(2, 2) * 0.1) * curvature;
    let b = DVector::from_fn(2, |_, _| 2.0 * normal(rng));
    QuadraticForm::new(q, b, 10.0 * normal(rng)).unwrap()
}

pub fn max_plus(rng: &mut ChaCha8Rng, n: usize) -> MaxPlusFunction {
    MaxPlusFunction::new((0..n).map(|_| concave_form(rng, 0.01)).collect()).unwrap()
}

/// Correlation mode with random volatilities, discount and running reward.
pub fn mode(rng: &mut ChaCha8Rng) -> ControlMode {
    let mut m = ControlMode::uncertain_correlation("m", rng.gen_range(0.1..0.6), rng.gen_range(0.1..0.6), rng.gen_range(-0.95..0.95)).unwrap();
    m.discount = rng.gen_range(0.0..1.0);
    m.with_running_reward(concave_form(rng, 1e-3)).unwrap()
}

pub fn increments(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..2).map(|_| H.sqrt() * normal(rng)).collect()).collect()
}

/// Held-out relative residual of a quadratic fit to the image of a fixed
/// selection.
pub fn lemma_trial(seed: u64) -> f64 {
    let mut r = rng(seed);
    let m = mode(&mut r);
    let n_forms = r.gen_range(1..=3);
    let next = max_plus(&mut r, n_forms);
    let n_inc = r.gen_range(3..=12);
    let mut incs = increments(&mut r, n_inc);
    if r.gen_bool(0.5) {
        incs = moment_match(&incs, H);
    }
    let choices = incs.iter().map(|_| r.gen_range(0..n_forms)).collect();
    let sel = SelectionMap {
        increments: incs,
        choices,
        owner: (0, 0, 0),
    };
    let image = |x: &Vec<f64>| apply_operator(&m, EPS, H, x, &sel, &next).unwrap();
    let train: Vec<Vec<f64>> = (0..15).map(|_| state(&mut r)).collect();
    let held: Vec<Vec<f64>> = (0..15).map(|_| state(&mut r)).collect();
    let y: Vec<f64> = train.iter().map(image).collect();
    let fit = fit_quadratic(&train, &y, FitOptions::default()).unwrap();
    let truth: Vec<f64> = held.iter().map(image).collect();
    let scale = truth.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    held.iter()
        .zip(&truth)
        .map(|(x, t)| (fit.form.evaluate(x).unwrap() - t).abs() / scale)
        .fold(0.0, f64::max)
}

/// Gap between the argmax selection and the best of all selections.
pub fn distributivity_trial(seed: u64) -> f64 {
    let mut r = rng(seed);
    let m = mode(&mut r);
    let n_forms = r.gen_range(1..=3);
    let next = max_plus(&mut r, n_forms);
    let n_inc = r.gen_range(1..=4);
    let mut incs = increments(&mut r, n_inc);
    if n_inc <= 2 && r.gen_bool(0.5) {
        incs = moment_match(&incs, H);
    }
    let x = state(&mut r);
    let sel = build_selection(&next, &m, EPS, H, &x, incs.clone(), (0, 0, 0)).unwrap();
    let greedy = apply_operator(&m, EPS, H, &x, &sel, &next).unwrap();
    let total = n_forms.pow(incs.len() as u32);
    let mut best = f64::NEG_INFINITY;
    for code in 0..total {
        let mut c = code;
        let choices = incs
            .iter()
            .map(|_| {
                let z = c % n_forms;
                c /= n_forms;
                z
            })
            .collect();
        let s = SelectionMap {
            increments: incs.clone(),
            choices,
            owner: (0, 0, 0),
        };
        best = best.max(apply_operator(&m, EPS, H, &x, &s, &next).unwrap());
    }
    (best - greedy).abs()
}

/// Deviation of `G(φ + K) − G(φ)` from `K(1 − hδ)` with moment matching.
pub fn constant_shift_trial(seed: u64) -> f64 {
    let mut r = rng(seed);
    let m = mode(&mut r);
    let n_forms = r.gen_range(1..=3);
    let next = max_plus(&mut r, n_forms);
    let k: f64 = r.gen_range(-10.0..10.0);
    let shifted = MaxPlusFunction::new(next.forms().iter().map(|f| f.add_constant(k)).collect()).unwrap();
    let n_inc = r.gen_range(2..=20);
    let incs = moment_match(&increments(&mut r, n_inc), H);
    let x = state(&mut r);
    let a = build_selection(&next, &m, EPS, H, &x, incs.clone(), (0, 0, 0)).unwrap();
    let b = build_selection(&shifted, &m, EPS, H, &x, incs, (0, 0, 0)).unwrap();
    let base = apply_operator(&m, EPS, H, &x, &a, &next).unwrap();
    let up = apply_operator(&m, EPS, H, &x, &b, &shifted).unwrap();
    (up - base - k * (1.0 - H * m.discount)).abs()
}
