//! Backward solve with one constant-correlation mode, compared with the
//! quadrature oracle.
//!
//! cargo run --release --example single_mode_solve -- [rho_min|rho_max] [n_in] [n_rg] [n_w] [seed]

use maxplus_hjb::bench::{error_norms, oracle_on_grid, values_on_grid, OraclePayoff};
use maxplus_hjb::config::Config;
use maxplus_hjb::sampling::{SamplePlan, SamplingMethod};
use maxplus_hjb::solver::backward_solve;

fn main() -> maxplus_hjb::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let label = args.first().map_or("rho_max", String::as_str);
    let n = |i: usize, default: usize| args.get(i).map_or(default, |s| s.parse().expect("integer argument"));
    let (n_in, n_rg, n_w) = (n(1, 400), n(2, 2000), n(3, 200));
    let seed = n(4, 1) as u64;

    let run = Config::default().build()?;
    let spec = run.spec.with_modes(&[label])?;
    let plan = SamplePlan::new(n_in, n_rg, 10, n_w, SamplingMethod::SharedProduct)?;
    let result = backward_solve(&spec, &plan, seed, &run.options)?;

    for d in &result.diagnostics {
        println!("t={:.2} forms={} clamped={} underdetermined={} {:.2}s", d.t, d.n_forms, d.n_clamped, d.underdetermined_fits, d.elapsed_secs);
    }
    let values = values_on_grid(&result, 0.0, &run.grid)?;
    let oracle = oracle_on_grid(&spec, label, spec.horizon(), &OraclePayoff::Ridge(run.payoff.clone()), &run.grid, run.oracle_nodes)?;
    let norms = error_norms(&values, &oracle);
    println!("{label} {}: e_inf={:.4} e_1={:.4}", plan.tuple_string(), norms.e_inf, norms.e_1);
    for (x, (v, o)) in run.grid.xi1().iter().zip(values.iter().zip(&oracle)).step_by(5) {
        println!("xi1={x:>4}  value={v:.4}  oracle={o:.4}");
    }
    Ok(())
}
