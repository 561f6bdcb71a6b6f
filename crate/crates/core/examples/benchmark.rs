//! Accuracy table for a few sample plans and sampling methods, written as CSV.
//!
//! cargo run --release --example benchmark -- [out_dir] [seed]

use std::path::PathBuf;

use maxplus_hjb::bench::{run_benchmark, BenchmarkCase};
use maxplus_hjb::config::{extreme_modes, Config};
use maxplus_hjb::sampling::{SamplePlan, SamplingMethod};

fn main() -> maxplus_hjb::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(args.first().map_or("out/benchmark", String::as_str));
    let seed: u64 = args.get(1).map_or(1, |s| s.parse().expect("seed"));

    let cfg = Config::default();
    let run = cfg.build()?;
    let (low, high) = extreme_modes(&run.spec);
    let plans = [
        SamplePlan::new(300, 3000, 10, 300, SamplingMethod::SharedProduct)?,
        SamplePlan::new(300, 300, 10, 30, SamplingMethod::SharedProduct)?,
        SamplePlan::new(300, 300, 10, 30, SamplingMethod::PrivateProduct)?,
        SamplePlan::new(100, 1000, 10, 100, SamplingMethod::FixedIncrements)?,
    ];
    let mut cases = Vec::new();
    for plan in plans {
        for label in [&high, &low] {
            cases.push(BenchmarkCase {
                id: format!("{label}-{}", plan.tuple_string()),
                modes: vec![label.clone()],
                plan,
                seed,
                grid: run.grid,
                last_steps: None,
            });
        }
    }
    cases.push(BenchmarkCase {
        id: "controlled".into(),
        modes: vec![low.clone(), high.clone()],
        plan: plans[0],
        seed,
        grid: run.grid,
        last_steps: None,
    });

    let report = run_benchmark(&cfg.bench_setup(&run), &cases);
    for c in &report.cases {
        match c.norms {
            Some(n) => println!("{:<40} e_inf={:.4} e_1={:.4} {:.1}s", c.case.id, n.e_inf, n.e_1, c.elapsed_secs),
            None => println!("{:<40} {} {:.1}s", c.case.id, c.status, c.elapsed_secs),
        }
    }
    report.write_all(&dir, &low, &high)?;
    println!("wrote {}", dir.display());
    Ok(())
}
