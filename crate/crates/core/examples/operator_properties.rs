//! The one-step sample operator: weights, moment matching, shifts by
//! constants and monotonicity.

use maxplus_hjb::model::{default_epsilon, ControlMode};
use maxplus_hjb::rng::{keyed, Stream};
use rand_distr::{Distribution, Normal};
use maxplus_hjb::scheme::{apply_to_values, moment_match, weight_p};

fn main() -> maxplus_hjb::Result<()> {
    let mode = ControlMode::uncertain_correlation("rho=0.8", 0.4, 0.3, 0.8)?;
    let eps = default_epsilon(2);
    let h = 0.05;
    let x = [50.0, 50.0];

    let w = [0.1, -0.2];
    println!("P1(w) = {:?}", weight_p(1, &mode, eps, h, &x, &w)?.gradient().unwrap().as_slice());
    println!("P2(w) = {:?}", weight_p(2, &mode, eps, h, &x, &w)?.hessian().unwrap().as_slice());

    let mut rng = keyed(7, Stream::Increment, &[0]);
    let normal = Normal::new(0.0, h.sqrt()).unwrap();
    let raw: Vec<Vec<f64>> = (0..40).map(|_| (0..2).map(|_| normal.sample(&mut rng)).collect()).collect();
    let matched = moment_match(&raw, h);
    let mut second = [0.0; 4];
    for w in &matched {
        for i in 0..2 {
            for j in 0..2 {
                second[2 * i + j] += w[i] * w[j] / matched.len() as f64;
            }
        }
    }
    println!("matched second moment / h = {:?}", second.map(|v| v / h));

    let phi = |y: &[f64]| -0.01 * (y[0] - y[1]).powi(2) + 0.02 * y[0];
    let values: Vec<f64> = matched.iter().map(|w| phi(&mode.euler_step(eps, h, &x, w).unwrap())).collect();
    let base = apply_to_values(&mode, eps, h, &x, &matched, &values)?;
    let shifted: Vec<f64> = values.iter().map(|v| v + 2.5).collect();
    let up = apply_to_values(&mode, eps, h, &x, &matched, &shifted)?;
    println!("G(phi) = {base:.6}, G(phi + 2.5) - G(phi) = {:.12}", up - base);

    let bumped: Vec<f64> = values.iter().enumerate().map(|(i, v)| if i % 3 == 0 { v + 1.0 } else { *v }).collect();
    let above = apply_to_values(&mode, eps, h, &x, &matched, &bumped)?;
    println!("raising some values raises the image: {}", above >= base);
    Ok(())
}
