//! Acceptance criteria 1 to 10. Each test prints one `criterion N: PASS|FAIL`
//! line and then asserts it.

use std::sync::Arc;
use std::time::{Duration, Instant};

use balloc_core::check::median;
use balloc_core::experiments::{
    self, calibrate_kappa, gap_scaling_report, lower_bound_trials, weighted_lower_bound_trials, ExperimentConfig, MRule,
    ProbeRule, ScalingAxis,
};
use balloc_core::graphs::{conductance_exact, expansion_bounds_hold, graphical_allocation_vector};
use balloc_core::potentials::{gamma_for_weighted, key_lemma_constant, ProofCase};
use balloc_core::processes::{exact_allocation_vector, run, ProbeConfig};
use balloc_core::selftest::{selftest, small_graphs, Scale};
use balloc_core::vectors::Q;
use balloc_core::*;
use rayon::prelude::*;

fn report(criterion: u32, pass: bool, elapsed: Duration, budget: Duration, detail: &str) {
    let within = elapsed <= budget;
    let verdict = if pass && within { "PASS" } else { "FAIL" };
    println!(
        "criterion {criterion}: {verdict} ({detail}; {:.1}s of {:.0}s)",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
    assert!(within, "criterion {criterion} exceeded its {budget:?} budget");
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

#[test]
fn criterion_01_key_lemma_certification() {
    let t = Instant::now();
    let sweep = experiments::key_lemma_sweep(10_000, 2024).unwrap();
    let pass = sweep.failures() == 0 && sweep.by_case.len() == ProofCase::ALL.len();
    let cases: Vec<String> = sweep.by_case.iter().map(|(c, k)| format!("{}:{k}", c.label())).collect();
    let detail = format!(
        "{} failures in {} instances, cases [{}], min relative slack {:.3e}",
        sweep.failures(),
        sweep.results.len(),
        cases.join(" "),
        sweep.min_relative_slack()
    );
    report(1, pass, t.elapsed(), secs(60), &detail);
}

fn distinct(n: usize) -> LoadState {
    LoadState::from_loads((0..n).map(|i| (n - i) as f64).collect()).unwrap()
}

#[test]
fn criterion_02_exact_allocation_vectors() {
    let t = Instant::now();
    let (mut bad, mut total) = (0, 0);
    for n in 2..=32usize {
        let nn = (n * n) as i128;
        let st = distinct(n);
        let two = |i: usize| Q::new(2 * i as i128 + 1, nn);
        let got = exact_allocation_vector(&ProcessSpec::new(ProcessKind::two_choice()), &st).unwrap();
        total += 1;
        bad += usize::from((0..n).any(|i| got[i] != two(i)));
        for (num, den) in [(1i128, 3i128), (1, 2), (3, 4)] {
            let beta = Q::new(num, den);
            let spec = ProcessSpec::new(ProcessKind::OnePlusBeta { beta: num as f64 / den as f64 });
            let got = exact_allocation_vector(&spec, &st).unwrap();
            total += 1;
            bad += usize::from((0..n).any(|i| got[i] != (Q::from_integer(1) - beta) / Q::from_integer(n as i128) + beta * two(i)));
        }
        for k in [1, n / 2, n - 1].into_iter().filter(|&k| k >= 1 && k < n) {
            let spec = ProcessSpec::new(ProcessKind::Quantile { delta: k as f64 / n as f64 });
            let got = exact_allocation_vector(&spec, &st).unwrap();
            let d = Q::new(k as i128, n as i128);
            let nq = Q::from_integer(n as i128);
            total += 1;
            bad += usize::from((0..n).any(|i| got[i] != if i < k { d / nq } else { (Q::from_integer(1) + d) / nq }));
        }
    }
    report(2, bad == 0, t.elapsed(), secs(10), &format!("{bad} mismatches in {total} vectors"));
}

#[test]
fn criterion_03_expansion_lemma() {
    let t = Instant::now();
    let graphs = small_graphs().unwrap();
    let results: Vec<(usize, usize)> = graphs
        .par_iter()
        .enumerate()
        .map(|(gi, g)| {
            let phi = conductance_exact(g).unwrap().phi;
            let n = g.n();
            let mut bad = 0;
            for trial in 0..100 {
                let mut rng = CounterRng::for_trial(3_000 + gi as u64, trial);
                // a uniformly random order of distinct loads
                let mut loads: Vec<f64> = (0..n).map(|i| i as f64).collect();
                for i in (1..n).rev() {
                    loads.swap(i, rng.index(i + 1));
                }
                let st = LoadState::from_loads(loads).unwrap();
                let p = graphical_allocation_vector(g, &st).unwrap();
                bad += usize::from(!expansion_bounds_hold(&p, phi));
            }
            (bad, 100)
        })
        .collect();
    let bad: usize = results.iter().map(|r| r.0).sum();
    let total: usize = results.iter().map(|r| r.1).sum();
    report(3, bad == 0, t.elapsed(), secs(60), &format!("{bad} violations in {total} orders over {} graphs", graphs.len()));
}

#[test]
fn criterion_04_gamma_expectation_bound() {
    let t = Instant::now();
    let n = 256usize;
    let nf = n as f64;
    let mut lines = Vec::new();
    let mut pass = true;
    for kind in [ProcessKind::OnePlusBeta { beta: 1.0 }, ProcessKind::Quantile { delta: 0.5 }] {
        let cond = experiments::default_conditions(&kind, n).unwrap().unwrap();
        let s = experiments::effective_s(&WeightDistribution::unit()).unwrap();
        let gamma = gamma_for_weighted(&cond, cond.c_cap, s).unwrap();
        let bound = 8.0 * key_lemma_constant(&cond) / cond.delta * nf;
        let m_final = (10.0 * nf * nf.ln()).ceil() as u64;
        let probes = ProbeConfig {
            at: vec![n as u64, 10 * n as u64],
            gamma: Some(gamma),
            ..ProbeConfig::final_only()
        };
        let spec = ProcessSpec::new(kind.clone());
        let runs: Vec<Vec<f64>> = (0..30u64)
            .into_par_iter()
            .map(|seed| run(&spec, n, m_final, 4_000 + seed, &probes).unwrap().1.iter().map(|r| r.gamma_total.unwrap()).collect())
            .collect();
        for (j, m) in [n as u64, 10 * n as u64, m_final].iter().enumerate() {
            let mean = runs.iter().map(|r| r[j]).sum::<f64>() / runs.len() as f64;
            pass &= mean <= bound;
            lines.push(format!("{kind} m={m}: mean Γ {mean:.1} vs {bound:.1}"));
        }
    }
    report(4, pass, t.elapsed(), secs(120), &lines.join(", "));
}

fn final_sweep(process: &str, n: Vec<usize>, m: MRule, reps: usize, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(process, n, m);
    c.repetitions = reps;
    c.seed = seed;
    c.probe = ProbeRule::Final;
    c
}

#[test]
fn criterion_05_one_plus_beta_scaling() {
    let t = Instant::now();
    let mut c = final_sweep("one-plus-beta", vec![1024], MRule::PerN(200.0), 50, 5_000);
    c.beta = vec![0.1, 0.2, 0.4, 0.8];
    let fit = gap_scaling_report(&experiments::sweep(&c).unwrap(), ScalingAxis::Beta).unwrap();
    let products: Vec<String> = fit.points.iter().map(|p| format!("β={}:{:.2}", p.axis_value, p.median_gap * p.axis_value)).collect();
    let detail = format!("median gap·β [{}], spread {:.2} (limit 2.5), κ̂ {:.3}", products.join(" "), fit.spread, fit.kappa);
    report(5, fit.spread <= 2.5, t.elapsed(), secs(180), &detail);
}

#[test]
fn criterion_06_logarithmic_family() {
    let t = Instant::now();
    let mut pass = true;
    let mut lines = Vec::new();
    for process in ["twinning:delta=0.5", "penalty:delta=0.5", "reset-memory"] {
        let c = final_sweep(process, vec![256, 1024, 4096], MRule::NLogN(4.0), 50, 6_000);
        let fit = gap_scaling_report(&experiments::sweep(&c).unwrap(), ScalingAxis::LogN).unwrap();
        let ratios: Vec<String> = fit.points.iter().map(|p| format!("{:.2}", p.median_gap / p.predictor)).collect();
        pass &= fit.spread <= 3.0;
        lines.push(format!("{process} gap/ln n [{}] U/L {:.2}", ratios.join(" "), fit.spread));
    }
    report(6, pass, t.elapsed(), secs(300), &lines.join(", "));
}

#[test]
fn criterion_07_lower_bounds() {
    let t = Instant::now();
    let exp = ProcessSpec::new(ProcessKind::two_choice()).with_weights(WeightDistribution::exponential());
    let a = weighted_lower_bound_trials(&exp, 4096, 100, 7_000).unwrap();
    let mut pass = a.pass_fraction() >= 0.95;
    let mut lines = vec![format!("(a) exp weights {:.0}% ≥ ½ ln n", 100.0 * a.pass_fraction())];
    for process in ["twinning:delta=0.5", "penalty:delta=0.5", "reset-memory"] {
        let spec = ProcessSpec::new(process.parse().unwrap());
        let cal = lower_bound_trials(&spec, 256, 1.0, 0.0, 100, 7_100).unwrap();
        let kappa = calibrate_kappa(&cal);
        let held = lower_bound_trials(&spec, 4096, 1.0, kappa, 100, 7_200).unwrap();
        pass &= kappa > 0.0 && held.pass_fraction() >= 0.95;
        lines.push(format!("(b) {process} κ̂ {kappa:.3} held {:.0}%", 100.0 * held.pass_fraction()));
    }
    report(7, pass, t.elapsed(), secs(180), &lines.join(", "));
}

#[test]
fn criterion_08_batched_scaling() {
    let t = Instant::now();
    let mut c = final_sweep("two-choice", vec![1024], MRule::PerBatch(50.0), 30, 8_000);
    c.batch = [1.0, 2.0, 4.0, 8.0].iter().map(|&k| experiments::BatchRule::PerN(k)).collect();
    let fit = gap_scaling_report(&experiments::sweep(&c).unwrap(), ScalingAxis::BOverN).unwrap();
    let medians: Vec<String> = fit.points.iter().map(|p| format!("b={}n:{}", p.axis_value, p.median_gap)).collect();
    let ratio = fit.points[3].median_gap / fit.points[0].median_gap;
    let pass = fit.increasing() && (3.0..=16.0).contains(&ratio);
    let detail = format!("medians [{}], gap(8n)/gap(n) {ratio:.2} (required [3, 16])", medians.join(" "));
    report(8, pass, t.elapsed(), secs(180), &detail);
}

#[test]
fn criterion_09_graphical_weighted_ordering() {
    let t = Instant::now();
    let n = 1024usize;
    let m = (10.0 * n as f64 * (n as f64).ln()).ceil() as u64;
    let median_gap = |kind: GraphKind| {
        let g = Arc::new(RegularGraph::build(kind, n).unwrap());
        let spec = ProcessSpec::new(ProcessKind::Graphical(g)).with_weights(WeightDistribution::exponential());
        median(&experiments::final_gaps(&spec, n, m, 30, 9_000).unwrap())
    };
    let expander = median_gap(GraphKind::RandomRegular { d: 4, seed: 9 });
    let cycle = median_gap(GraphKind::Cycle);
    let detail = format!("median gap expander {expander:.2}, cycle {cycle:.2}, ratio {:.2} (required > 3)", cycle / expander);
    report(9, expander < cycle / 3.0, t.elapsed(), secs(180), &detail);
}

#[test]
fn criterion_10_property_suites() {
    let t = Instant::now();
    let items = selftest(Scale::Full);
    let failed: Vec<String> = items.iter().filter(|i| !i.pass).map(|i| format!("{}/{}: {}", i.module, i.name, i.detail)).collect();
    let dir = tempfile::tempdir().unwrap();
    let mut c = final_sweep("quantile", vec![64, 128], MRule::NLogN(2.0), 8, 10_000);
    c.delta = vec![0.25, 0.5];
    c.probe = ProbeRule::EveryN;
    c.z = vec![1.0];
    let paths = [dir.path().join("a.csv"), dir.path().join("b.csv")];
    for p in &paths {
        experiments::sweep(&c).unwrap().write_csv(p).unwrap();
    }
    let identical = std::fs::read(&paths[0]).unwrap() == std::fs::read(&paths[1]).unwrap();
    let detail = format!(
        "{} of {} selftest items pass{}, rerun CSV byte-identical: {identical}",
        items.len() - failed.len(),
        items.len(),
        if failed.is_empty() { String::new() } else { format!(" [failed {}]", failed.join("; ")) }
    );
    report(10, failed.is_empty() && identical, t.elapsed(), secs(600), &detail);
}
