//! Approximates the spread butterfly payoff by a supremum of concave
//! quadratic forms and prints the error along the ridge.
//!
//! cargo run --release --example payoff_approximation -- [n_forms] [c_kink]

use maxplus_hjb::quadform::{approximate_payoff, PayoffApproxConfig, RidgePayoff};

fn main() -> maxplus_hjb::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = PayoffApproxConfig::default();
    if let Some(n) = args.first() {
        cfg.n_forms = n.parse().expect("n_forms");
    }
    if let Some(c) = args.get(1) {
        cfg.c_kink = c.parse().expect("c_kink");
    }

    let payoff = RidgePayoff::spread_butterfly(-5.0, 5.0)?;
    let approx = approximate_payoff(&payoff, &cfg)?;
    println!("forms:            {}", approx.function.len());
    println!("profile error:    {:.6}", approx.profile_error);
    println!("overshoot:        {:.3e}", approx.overshoot);
    println!("transverse loss:  {:.6}", approx.transverse_penalty);
    println!("achieved error:   {:.6} (target {})", approx.achieved_error, cfg.target_eps);

    println!("\n{:>8} {:>10} {:>10}", "x1-x2", "exact", "approx");
    for i in -12..=12 {
        let s = i as f64;
        let x = [50.0 + s / 2.0, 50.0 - s / 2.0];
        let (v, _) = approx.function.sup_evaluate(&x)?;
        println!("{s:>8.1} {:>10.4} {:>10.4}", payoff.eval(&x), v);
    }
    Ok(())
}
