use maxplus_hjb::bench::run_benchmark;
use maxplus_hjb::config::{extreme_modes, Config};
use maxplus_hjb::sampling::{simulate_paths, simulate_paths_frozen, SamplePlan, SamplingMethod};
use maxplus_hjb::solver::{backward_solve, SolveOptions};

fn quick_config() -> Config {
    let mut cfg = Config::default();
    cfg.sampling.n_in = 120;
    cfg.sampling.n_rg = 600;
    cfg.sampling.n_w = 60;
    cfg
}

#[test]
fn increments_have_brownian_moments() {
    let run = Config::default().build().unwrap();
    let plan = SamplePlan::new(4000, 4000, 10, 400, SamplingMethod::SharedProduct).unwrap();
    let paths = simulate_paths(&run.spec, &plan, 11).unwrap();
    let h = run.spec.step();
    assert!(paths.increment_mean_outliers(h).is_empty());
    for k in 0..paths.n_steps() {
        let (_, var) = paths.increment_moments(k);
        for v in var {
            // relative sd of a sample variance is sqrt(2/n) ≈ 0.022
            assert!((v / h - 1.0).abs() < 0.12, "k={k}: var/h = {}", v / h);
        }
    }
}

#[test]
fn initial_states_fill_the_box_and_increments_are_shared() {
    let run = Config::default().build().unwrap();
    let plan = SamplePlan::new(500, 5000, 10, 500, SamplingMethod::SharedProduct).unwrap();
    let paths = simulate_paths(&run.spec, &plan, 2).unwrap();
    for omega in 0..paths.n_in() {
        let x = paths.state(0, 0, omega);
        assert!((20.0..=80.0).contains(&x[0]) && (30.0..=70.0).contains(&x[1]));
        assert_eq!(x, paths.state(1, 0, omega));
    }
    let first = simulate_paths(&run.spec, &plan, 2).unwrap();
    assert_eq!(first, paths);
}

#[test]
fn frozen_paths_stay_put() {
    let run = Config::default().build().unwrap();
    let paths = simulate_paths_frozen(&run.spec, 50, 4).unwrap();
    for m in 0..paths.n_modes() {
        for omega in 0..50 {
            let x0 = paths.state(m, 0, omega).to_vec();
            for k in 0..=paths.n_steps() {
                assert_eq!(paths.state(m, k, omega), x0.as_slice());
            }
        }
    }
}

#[test]
fn controlled_value_is_max_of_modes_one_step_before_horizon() {
    let run = quick_config().build().unwrap();
    let opts = SolveOptions { last_steps: Some(1), ..run.options.clone() };
    let both = backward_solve(&run.spec, &run.plan, 3, &opts).unwrap();
    let t = both.first_time();
    let singles: Vec<_> = run
        .spec
        .modes()
        .iter()
        .map(|m| backward_solve(&run.spec.with_modes(&[m.label.as_str()]).unwrap(), &run.plan, 3, &opts).unwrap())
        .collect();
    for x in run.grid.points() {
        let best = singles.iter().map(|s| s.evaluate_value(t, &x).unwrap()).fold(f64::NEG_INFINITY, f64::max);
        let v = both.evaluate_value(t, &x).unwrap();
        assert!((v - best).abs() < 1e-9 * best.abs().max(1.0), "x={x:?}: {v} vs {best}");
    }
}

#[test]
fn cardinality_stays_bounded() {
    let run = quick_config().build().unwrap();
    for method in [1, 2, 3] {
        let mut cfg = quick_config();
        cfg.sampling.method = method;
        if method == 1 {
            cfg.sampling.n_rg = cfg.sampling.n_in;
        }
        let plan = cfg.plan().unwrap();
        let res = backward_solve(&run.spec, &plan, 5, &run.options).unwrap();
        let cap = run.spec.modes().len() * plan.n_in;
        assert!(res.diagnostics.iter().all(|d| d.n_forms <= cap));
    }
}

#[test]
fn benchmark_output_independent_of_thread_count() {
    let cfg = quick_config();
    let run = cfg.build().unwrap();
    let (low, high) = extreme_modes(&run.spec);
    let cases = cfg.cases(&run).unwrap();
    let mut outputs = Vec::new();
    for threads in [1, 3] {
        let mut setup = cfg.bench_setup(&run);
        setup.options.threads = Some(threads);
        let report = run_benchmark(&setup, &cases);
        let (mut table, mut figure) = (Vec::new(), Vec::new());
        report.write_table_csv(&mut table).unwrap();
        report.write_figure_csv(&mut figure, &low, &high).unwrap();
        outputs.push((table, figure));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn failing_case_does_not_stop_the_run() {
    let cfg = quick_config();
    let run = cfg.build().unwrap();
    let good = cfg.cases(&run).unwrap().remove(0);
    let mut bad = good.clone();
    bad.id = "too-few-samples".into();
    bad.plan = SamplePlan::new(10, 100, 10, 10, SamplingMethod::SharedProduct).unwrap();
    let report = run_benchmark(&cfg.bench_setup(&run), &[bad, good]);
    assert_eq!(report.cases[0].status, "error:plan");
    assert_eq!(report.cases[1].status, "ok");
}

#[test]
fn step_cost_grows_with_sample_count() {
    let run = Config::default().build().unwrap();
    let spec = run.spec.with_modes(&["rho_max"]).unwrap();
    let opts = SolveOptions { last_steps: Some(2), threads: Some(1), ..SolveOptions::default() };
    let mut costs = Vec::new();
    for n_in in [250, 500, 1000] {
        let plan = SamplePlan::new(n_in, 200, 10, 20, SamplingMethod::SharedProduct).unwrap();
        let best = (0..2)
            .map(|_| {
                let res = backward_solve(&spec, &plan, 1, &opts).unwrap();
                res.diagnostics.iter().find(|d| d.k == spec.n_steps() - 2).unwrap().elapsed_secs
            })
            .fold(f64::INFINITY, f64::min);
        costs.push(best);
    }
    assert!(costs[0] < costs[1] && costs[1] < costs[2], "{costs:?}");
}

