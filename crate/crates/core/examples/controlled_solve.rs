//! Solves the uncertain-correlation problem with both modes and reports which
//! mode is optimal along the evaluation line.
//!
//! cargo run --release --example controlled_solve -- [n_in] [n_rg] [n_w] [seed]

use maxplus_hjb::bench::values_on_grid;
use maxplus_hjb::config::Config;
use maxplus_hjb::sampling::{SamplePlan, SamplingMethod};
use maxplus_hjb::solver::backward_solve;

fn main() -> maxplus_hjb::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = |i: usize, default: usize| args.get(i).map_or(default, |s| s.parse().expect("integer argument"));
    let (n_in, n_rg, n_w) = (n(0, 300), n(1, 1500), n(2, 150));
    let seed = n(3, 1) as u64;

    let run = Config::default().build()?;
    let plan = SamplePlan::new(n_in, n_rg, 10, n_w, SamplingMethod::SharedProduct)?;
    let controlled = backward_solve(&run.spec, &plan, seed, &run.options)?;
    let mut singles = Vec::new();
    for mode in run.spec.modes() {
        let spec = run.spec.with_modes(&[mode.label.as_str()])?;
        singles.push((mode.label.clone(), values_on_grid(&backward_solve(&spec, &plan, seed, &run.options)?, 0.0, &run.grid)?));
    }
    let values = values_on_grid(&controlled, 0.0, &run.grid)?;

    print!("{:>5} {:>10}", "xi1", "controlled");
    for (label, _) in &singles {
        print!(" {label:>10}");
    }
    println!("  optimal");
    for (i, x) in run.grid.points().iter().enumerate().step_by(4) {
        print!("{:>5} {:>10.4}", x[0], values[i]);
        for (_, v) in &singles {
            print!(" {:>10.4}", v[i]);
        }
        println!("  {}", controlled.argmax_mode(0.0, x)?.unwrap_or("-"));
    }
    Ok(())
}
