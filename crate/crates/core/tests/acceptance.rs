//! Acceptance checks, one line per criterion.
//!
//! `ACCEPTANCE_ONLY=5,6,7 cargo test --test acceptance` runs a subset.

mod common;

use std::collections::BTreeSet;
use std::process::Command;
use std::time::Instant;

use maxplus_hjb::bench::{oracle_on_grid, pointwise_stddev, run_benchmark, BenchmarkCase, BenchmarkReport, ConstantModeLaw, OraclePayoff};
use maxplus_hjb::config::{Config, RunConfig};
use maxplus_hjb::model::ControlMode;
use maxplus_hjb::sampling::{SamplePlan, SamplingMethod};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const LOW: &str = "rho_min";
const HIGH: &str = "rho_max";

struct Suite {
    cfg: Config,
    run: RunConfig,
    results: Vec<(usize, bool, String)>,
    max_forms_ratio: f64,
    runs: usize,
}

impl Suite {
    fn record(&mut self, n: usize, pass: bool, detail: String) {
        println!("criterion {n} [{}] {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((n, pass, detail));
    }

    fn case(&self, id: String, label: &str, plan: SamplePlan, seed: u64, last_steps: Option<usize>) -> BenchmarkCase {
        BenchmarkCase {
            id,
            modes: if label == "controlled" { vec![LOW.into(), HIGH.into()] } else { vec![label.into()] },
            plan,
            seed,
            grid: self.run.grid,
            last_steps,
        }
    }

    fn bench(&mut self, cases: &[BenchmarkCase], moment_match: bool) -> BenchmarkReport {
        let mut setup = self.cfg.bench_setup(&self.run);
        setup.options.moment_match = moment_match;
        let report = run_benchmark(&setup, cases);
        for c in &report.cases {
            assert_eq!(c.status, "ok", "{}: {:?}", c.case.id, c.message);
            let cap = c.case.modes.len() * c.case.plan.n_in;
            self.max_forms_ratio = self.max_forms_ratio.max(c.max_forms as f64 / cap as f64);
            self.runs += 1;
        }
        report
    }
}

fn plan(n_in: usize, n_rg: usize, n_x: usize, n_w: usize, method: u32) -> SamplePlan {
    SamplePlan::new(n_in, n_rg, n_x, n_w, SamplingMethod::from_number(method).unwrap()).unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Seed-averaged accuracy at the default plan; returns the per-seed values.
fn accuracy(s: &mut Suite) -> Vec<(String, Vec<Vec<f64>>)> {
    let mut out = Vec::new();
    let mut pass = true;
    let mut detail = Vec::new();
    for (label, max_e1, max_einf) in [(HIGH, 0.25, 0.6), (LOW, 0.5, 1.5)] {
        let cases: Vec<_> = SEEDS.iter().map(|&seed| s.case(format!("{label}-s{seed}"), label, s.run.plan, seed, None)).collect();
        let report = s.bench(&cases, true);
        let norms: Vec<_> = report.cases.iter().map(|c| c.norms.unwrap()).collect();
        let e1 = mean(&norms.iter().map(|n| n.e_1).collect::<Vec<_>>());
        let einf = mean(&norms.iter().map(|n| n.e_inf).collect::<Vec<_>>());
        pass &= e1 <= max_e1 && einf <= max_einf;
        detail.push(format!("{label}: e_1={e1:.4} (<= {max_e1}) e_inf={einf:.4} (<= {max_einf})"));
        out.push((label.to_string(), report.cases.into_iter().map(|c| c.values.unwrap()).collect()));
    }
    s.record(1, pass, detail.join("; "));
    out
}

fn method_ordering(s: &mut Suite) {
    let mut ratios = Vec::new();
    let mut info = Vec::new();
    for &seed in &SEEDS {
        let cases = [
            s.case(format!("m2-s{seed}"), LOW, plan(1000, 1000, 10, 100, 2), seed, None),
            s.case(format!("m3-s{seed}"), LOW, plan(1000, 1000, 10, 100, 3), seed, None),
        ];
        let raw = s.bench(&cases, false);
        let matched = s.bench(&cases, true);
        let e = |r: &BenchmarkReport, i: usize| r.cases[i].norms.unwrap().e_inf;
        ratios.push(e(&raw, 1) / e(&raw, 0));
        info.push(format!("{:.2}", e(&matched, 1) / e(&matched, 0)));
    }
    let wins = ratios.iter().filter(|&&r| r >= 2.0).count();
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    s.record(
        2,
        wins >= 4,
        format!(
            "method3/method2 e_inf ratios without moment matching [{}], {wins}/5 >= 2 (with moment matching: [{}])",
            shown.join(", "),
            info.join(", ")
        ),
    );
}

fn method_one(s: &mut Suite) {
    let mut pass = true;
    let mut detail = Vec::new();
    let n_in = s.run.plan.n_in;
    for label in [HIGH, LOW] {
        let cases = [
            s.case(format!("m1-{label}"), label, plan(n_in, n_in, 10, 100, 1), 1, Some(1)),
            s.case(format!("m2-{label}"), label, s.run.plan, 1, Some(1)),
        ];
        let r = s.bench(&cases, true);
        let (m1, m2) = (r.cases[0].norms.unwrap().e_inf, r.cases[1].norms.unwrap().e_inf);
        pass &= m1 >= 5.0 * m2;
        detail.push(format!("{label}: method1 e_inf={m1:.4} method2 e_inf={m2:.4} ratio={:.1}", m1 / m2));
    }
    s.record(3, pass, format!("at t=T-h, {}", detail.join("; ")));
}

fn controlled_dominance(s: &mut Suite, singles: &[(String, Vec<Vec<f64>>)]) {
    let case = s.case("controlled-s1".into(), "controlled", s.run.plan, 1, None);
    let report = s.bench(&[case], true);
    let controlled = report.cases[0].values.clone().unwrap();
    let sd: Vec<Vec<f64>> = singles.iter().map(|(_, v)| pointwise_stddev(v)).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = 0;
    let mut max_tol = 0.0f64;
    for i in 0..controlled.len() {
        // seed 1 is the first replicate of each single-mode run
        let (j, best) = singles.iter().enumerate().map(|(j, (_, v))| (j, v[0][i])).fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let tol = 3.0 * sd[j][i];
        max_tol = max_tol.max(tol);
        let shortfall = best - tol - controlled[i];
        if shortfall > worst {
            worst = shortfall;
            worst_at = i;
        }
    }
    let xi1 = s.run.grid.xi1()[worst_at];
    s.record(
        4,
        worst <= 0.0,
        format!("max over grid of max(v_low, v_high) - tol - v_controlled = {worst:.4} at xi1={xi1} (tol up to {max_tol:.4})"),
    );
}

fn trials(s: &mut Suite, n: usize, count: u64, tol: f64, f: fn(u64) -> f64, what: &str) {
    let worst = (0..count).map(|seed| f(1000 * n as u64 + seed)).fold(0.0, f64::max);
    s.record(n, worst <= tol, format!("{what}: worst {worst:.2e} over {count} trials (tol {tol:e})"));
}

fn oracle_convergence(s: &mut Suite) {
    let payoff = OraclePayoff::Ridge(s.run.payoff.clone());
    let mut worst = 0.0f64;
    for rho in [-0.8, 0.8] {
        let mode = ControlMode::uncertain_correlation("m", 0.4, 0.3, rho).unwrap();
        let law = ConstantModeLaw::from_mode(&mode, s.run.spec.horizon()).unwrap();
        for x in s.run.grid.points() {
            let a = law.expectation(&payoff, &x, 64).unwrap();
            let b = law.expectation(&payoff, &x, 128).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    let via_spec = oracle_on_grid(&s.run.spec, LOW, s.run.spec.horizon(), &payoff, &s.run.grid, 64).unwrap();
    assert_eq!(via_spec.len(), s.run.grid.points().len());
    s.record(9, worst <= 1e-6, format!("max |64 - 128 nodes| = {worst:.2e} over {} points, rho = -0.8 and 0.8", s.run.grid.points().len()));
}

fn determinism(s: &mut Suite) {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
[mode.rho_min]
sigma1 = 0.4
sigma2 = 0.3
rho = -0.8

[mode.rho_max]
sigma1 = 0.4
sigma2 = 0.3
rho = 0.8

[sampling]
N_in = 200
N_rg = 2000
N_x = 10
N_w = 200

[bench]
seeds = [1, 2]

[[bench.case]]
id = "low"
modes = ["rho_min"]

[[bench.case]]
id = "high"
modes = ["rho_max"]

[[bench.case]]
id = "controlled"
modes = ["rho_min", "rho_max"]

[[bench.case]]
id = "private"
modes = ["rho_min"]
method = 3
N_rg = 200
N_w = 20
"#;
    std::fs::write(dir.path().join("bench.toml"), config).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = format!("out-{threads}");
        let o = Command::new(env!("CARGO_BIN_EXE_maxplus-hjb"))
            .args(["benchmark", "bench.toml", "--threads", threads, "--out-dir", &out])
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let read = |name: &str| std::fs::read(dir.path().join(&out).join(name)).unwrap();
        outputs.push((read("table.csv"), read("figure.csv")));
    }
    let same = outputs[0] == outputs[1];
    let rows = String::from_utf8_lossy(&outputs[0].0).lines().count() - 1;
    s.record(10, same, format!("table.csv and figure.csv byte-identical with 1 and 4 threads ({rows} cases)"));
}

fn main() {
    let only: Option<BTreeSet<usize>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().map_or(true, |s| s.contains(&n));
    let cfg = Config::default();
    let run = cfg.build().unwrap();
    let mut s = Suite {
        cfg,
        run,
        results: Vec::new(),
        max_forms_ratio: 0.0,
        runs: 0,
    };
    let start = Instant::now();

    let singles = if wanted(1) || wanted(4) { Some(accuracy(&mut s)) } else { None };
    if !wanted(1) {
        s.results.retain(|r| r.0 != 1);
    }
    if wanted(2) {
        method_ordering(&mut s);
    }
    if wanted(3) {
        method_one(&mut s);
    }
    if wanted(4) {
        controlled_dominance(&mut s, singles.as_ref().unwrap());
    }
    if wanted(5) {
        trials(&mut s, 5, 100, 1e-8, common::lemma_trial, "held-out relative residual of the fixed-selection image");
    }
    if wanted(6) {
        trials(&mut s, 6, 200, 1e-10, common::distributivity_trial, "argmax selection vs best enumerated selection");
    }
    if wanted(7) {
        trials(&mut s, 7, 100, 1e-10, common::constant_shift_trial, "|G(phi+K) - G(phi) - K(1-h delta)|");
    }
    if wanted(8) {
        let (ratio, runs) = (s.max_forms_ratio, s.runs);
        s.record(8, ratio <= 1.0 && runs > 0, format!("largest card(Z_t)/(M N_in) = {ratio:.3} over {runs} solves"));
    }
    if wanted(9) {
        oracle_convergence(&mut s);
    }
    if wanted(10) {
        determinism(&mut s);
    }

    let failed: Vec<usize> = s.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!("acceptance: {} passed, {} failed in {:.0}s", s.results.len() - failed.len(), failed.len(), start.elapsed().as_secs_f64());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
