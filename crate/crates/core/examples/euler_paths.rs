//! Simulates the forward Euler paths of both correlation modes and checks the
//! increment moments.
//!
//! cargo run --release --example euler_paths -- [n_in] [seed] [paths.csv]

use maxplus_hjb::config::Config;
use maxplus_hjb::sampling::{simulate_paths, SamplePlan, SamplingMethod};

fn main() -> maxplus_hjb::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_in: usize = args.first().map_or(2000, |s| s.parse().expect("n_in"));
    let seed: u64 = args.get(1).map_or(1, |s| s.parse().expect("seed"));

    let run = Config::default().build()?;
    let spec = &run.spec;
    let plan = SamplePlan::new(n_in, 10 * (n_in / 10).max(1), 10, (n_in / 10).max(1), SamplingMethod::SharedProduct)?;
    let paths = simulate_paths(spec, &plan, seed)?;
    let h = spec.step();

    println!("modes {}, steps {}, samples {}, epsilon {}", paths.n_modes(), paths.n_steps(), paths.n_in(), spec.epsilon());
    for k in 0..paths.n_steps() {
        let (mean, var) = paths.increment_moments(k);
        println!("k={k}  mean=({:+.4}, {:+.4})  var/h=({:.3}, {:.3})", mean[0], mean[1], var[0] / h, var[1] / h);
    }
    println!("steps with outlying means: {:?}", paths.increment_mean_outliers(h));

    for (m, mode) in spec.modes().iter().enumerate() {
        let k = paths.n_steps();
        let spread: Vec<f64> = (0..paths.n_in()).map(|o| paths.state(m, k, o)[0] - paths.state(m, k, o)[1]).collect();
        let mean = spread.iter().sum::<f64>() / spread.len() as f64;
        let var = spread.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (spread.len() - 1) as f64;
        println!("{}: terminal spread mean {mean:.3}, stddev {:.3}", mode.label, var.sqrt());
    }

    if let Some(path) = args.get(2) {
        let times: Vec<f64> = (0..=spec.n_steps()).map(|k| spec.time(k)).collect();
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        paths.write_csv(&mut file, &times)?;
        println!("wrote {path}");
    }
    Ok(())
}
