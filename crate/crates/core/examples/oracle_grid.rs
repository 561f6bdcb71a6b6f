//! Reference values of the single-mode problem on the evaluation line, with
//! the quadrature convergence between two node counts.
//!
//! cargo run --release --example oracle_grid -- [rho] [nodes]

use maxplus_hjb::bench::{ConstantModeLaw, EvalGrid, OraclePayoff};
use maxplus_hjb::model::ControlMode;
use maxplus_hjb::quadform::RidgePayoff;

fn main() -> maxplus_hjb::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let rho: f64 = args.first().map_or(-0.8, |s| s.parse().expect("rho"));
    let nodes: usize = args.get(1).map_or(64, |s| s.parse().expect("nodes"));

    let mode = ControlMode::uncertain_correlation(format!("rho={rho}"), 0.4, 0.3, rho)?;
    let law = ConstantModeLaw::from_mode(&mode, 0.25)?;
    let payoff = OraclePayoff::Ridge(RidgePayoff::spread_butterfly(-5.0, 5.0)?);

    let mut worst = 0.0f64;
    println!("{:>5} {:>12} {:>12}", "xi1", "value", "payoff");
    for x in EvalGrid::default().points() {
        let v = law.expectation(&payoff, &x, nodes)?;
        worst = worst.max((v - law.expectation(&payoff, &x, 2 * nodes)?).abs());
        if x[0] as i64 % 5 == 0 {
            println!("{:>5} {v:>12.6} {:>12.6}", x[0], payoff.eval(&x));
        }
    }
    println!("max |{nodes} nodes - {} nodes| = {worst:.3e}", 2 * nodes);
    Ok(())
}
