//! The invariant suite behind the `selftest` command.
//!
//! Every item is deterministic. `Scale::Quick` shrinks trial counts for unit
//! tests; `Scale::Full` runs the counts the properties are stated at.

use num_traits::One;

use crate::check::quantile;
use crate::error::Result;
use crate::experiments::{self, ExperimentConfig, GammaRule, MRule};
use crate::graphs::{
    complete_graph_conductance, conductance_bounds, conductance_exact, expansion_bounds_hold, graphical_allocation_vector,
    GraphKind, RegularGraph,
};
use crate::load::LoadState;
use crate::plot::{render_svg, PlotSpec};
use crate::potentials::{self, builders, expected_drift, potential_with_mode, PotentialMode};
use crate::processes::{
    self, allocation_vector_exact, exact_allocation_vector, exact_step_moments, run, ProbeConfig, ProcessKind, ProcessSpec,
};
use crate::rng::CounterRng;
use crate::table::{Table, Value};
use crate::vectors::{
    self, average_ties, check_c1, check_c2, majorizes, random, worst_case_vector, ConditionParams, ProbabilityVector, Q,
};
use crate::weights::WeightDistribution;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Quick,
    Full,
}

impl Scale {
    fn pick(self, quick: usize, full: usize) -> usize {
        match self {
            Scale::Quick => quick,
            Scale::Full => full,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelftestItem {
    pub module: &'static str,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

type Check = fn(Scale) -> Result<(bool, String)>;

const ITEMS: &[(&str, &str, Check)] = &[
    ("core", "load-conservation", load_conservation),
    ("core", "gap-bounds", gap_bounds),
    ("core", "sorted-index-permutation", sorted_index_permutation),
    ("core", "incremental-order-vs-resort", incremental_order),
    ("vectors", "average-ties-max-entry", average_ties_max_entry),
    ("vectors", "majorization-partial-order", majorization_partial_order),
    ("vectors", "worst-case-majorizes-c1", worst_case_majorizes),
    ("vectors", "worst-case-prefix-equality", worst_case_prefix_equality),
    ("vectors", "d0-d1-implies-c1", d0_d1_implies_c1),
    ("potentials", "key-lemma-certification", key_lemma),
    ("potentials", "majorization-monotonicity", majorization_monotonicity),
    ("potentials", "decreasing-function", decreasing_function),
    ("potentials", "drift-linearity", drift_linearity),
    ("potentials", "log-space-agreement", log_space_agreement),
    ("processes", "two-choice-vector-exact", two_choice_exact),
    ("processes", "one-plus-beta-vector-exact", one_plus_beta_exact),
    ("processes", "quantile-vector-exact", quantile_exact),
    ("processes", "twinning-penalty-first-moments", first_moments),
    ("processes", "balls-per-sample", balls_per_sample),
    ("processes", "two-choice-dominated-by-one-choice", coupled_dominance),
    ("graphs", "expansion-bounds", expansion),
    ("graphs", "complete-graph-conductance", complete_conductance),
    ("graphs", "conductance-sandwich", conductance_sandwich),
    ("weights", "moment-inequality-grid", moment_grid),
    ("weights", "s-constant-bounds", s_constant_bounds),
    ("weights", "unit-mean", unit_mean),
    ("experiments", "aggregation-idempotent", aggregation_idempotent),
    ("experiments", "corollary-gamma-bit-exact", corollary_gamma),
    ("experiments", "count-bins-monotone", count_bins_monotone),
    ("io", "csv-round-trip", csv_round_trip),
    ("io", "deterministic-sweep-csv", deterministic_csv),
    ("io", "deterministic-svg", deterministic_svg),
];

/// Runs every item in order. Errors inside an item count as failures.
pub fn selftest(scale: Scale) -> Vec<SelftestItem> {
    ITEMS
        .iter()
        .map(|&(module, name, f)| {
            let (pass, detail) = f(scale).unwrap_or_else(|e| (false, format!("error: {e}")));
            SelftestItem {
                module,
                name,
                pass,
                detail,
            }
        })
        .collect()
}

pub fn item_names() -> Vec<(&'static str, &'static str)> {
    ITEMS.iter().map(|&(m, n, _)| (m, n)).collect()
}

fn count(bad: usize, total: usize) -> (bool, String) {
    (bad == 0, format!("{bad} violations in {total} trials"))
}

fn distinct_state(n: usize) -> Result<LoadState> {
    LoadState::from_loads((0..n).map(|i| (n - i) as f64).collect())
}

fn load_conservation(s: Scale) -> Result<(bool, String)> {
    let mut rng = CounterRng::new(1, 0);
    let steps = s.pick(2_000, 10_000);
    let mut bad = 0;
    let mut exact = LoadState::new_exact(32)?;
    let mut sum_exact = 0u64;
    let mut float = LoadState::new(32)?;
    let w = WeightDistribution::exponential();
    let mut sum_float = 0.0;
    for _ in 0..steps {
        let k = rng.below(4);
        exact.apply_allocation(rng.index(32), k as f64)?;
        sum_exact += k;
        let x = w.sample(&mut rng);
        float.apply_allocation(rng.index(32), x)?;
        sum_float += x;
        bad += usize::from(exact.total_weight() != sum_exact as f64 || !exact.verify_exact());
        bad += usize::from((float.total_weight() - sum_float).abs() > 1e-9 * sum_float.max(1.0));
    }
    Ok(count(bad, 2 * steps))
}

fn random_states(s: Scale, seed: u64) -> impl Iterator<Item = LoadState> {
    let trials = s.pick(200, 1_000);
    (0..trials).map(move |t| {
        let mut rng = CounterRng::for_trial(seed, t as u64);
        let n = 1 + rng.index(64);
        let mut st = LoadState::new(n).expect("n >= 1");
        let w = WeightDistribution::exponential();
        for _ in 0..rng.index(4 * n + 1) {
            let bin = rng.index(n);
            st.apply_allocation(bin, w.sample(&mut rng)).expect("valid weight");
        }
        st
    })
}

fn gap_bounds(s: Scale) -> Result<(bool, String)> {
    let (mut bad, mut total) = (0, 0);
    for st in random_states(s, 2) {
        total += 1;
        bad += usize::from(!(st.gap() >= 0.0 && st.gap() <= st.max_abs_normalized()));
    }
    Ok(count(bad, total))
}

fn sorted_index_permutation(s: Scale) -> Result<(bool, String)> {
    let (mut bad, mut total) = (0, 0);
    for st in random_states(s, 3) {
        total += 1;
        let mut seen = vec![false; st.n()];
        for &b in st.sorted_index() {
            seen[b] = true;
        }
        let sorted: Vec<f64> = st.sorted_index().iter().map(|&b| st.load(b)).collect();
        bad += usize::from(!seen.iter().all(|&x| x) || sorted.windows(2).any(|w| w[0] < w[1]));
    }
    Ok(count(bad, total))
}

fn incremental_order(s: Scale) -> Result<(bool, String)> {
    let mut rng = CounterRng::new(4, 0);
    let steps = s.pick(2_000, 10_000);
    let mut bad = 0;
    for n in [1, 7, 64] {
        let mut st = LoadState::new(n)?;
        for _ in 0..steps {
            // small integer weights force many ties
            st.apply_allocation(rng.index(n), rng.below(3) as f64)?;
            bad += usize::from(!st.order_is_consistent());
        }
    }
    Ok(count(bad, 3 * steps))
}

fn average_ties_max_entry(s: Scale) -> Result<(bool, String)> {
    let trials = s.pick(500, 5_000);
    let mut bad = 0;
    for t in 0..trials {
        let mut rng = CounterRng::for_trial(5, t as u64);
        let n = 1 + rng.index(32);
        let st = LoadState::from_loads((0..n).map(|_| rng.below(3) as f64).collect())?;
        let p = random::any_vector(n, &mut rng);
        let a = average_ties(&p, &st)?;
        bad += usize::from(a.max_entry() > p.max_entry() + 1e-15);
    }
    Ok(count(bad, trials))
}

fn majorization_partial_order(s: Scale) -> Result<(bool, String)> {
    let trials = s.pick(2_000, 20_000);
    let mut bad = 0;
    for t in 0..trials {
        let mut rng = CounterRng::for_trial(6, t as u64);
        let n = 1 + rng.index(16);
        let v: Vec<ProbabilityVector> = (0..3).map(|_| random::sorted_vector(n, &mut rng)).collect();
        bad += usize::from(!majorizes(&v[0], &v[0])?);
        if majorizes(&v[0], &v[1])? && majorizes(&v[1], &v[0])? {
            let close = v[0].prefix_sums().iter().zip(v[1].prefix_sums()).all(|(a, b)| (a - b).abs() <= 2.0 * vectors::TOL);
            bad += usize::from(!close);
        }
        if majorizes(&v[0], &v[1])? && majorizes(&v[1], &v[2])? {
            // the tolerance composes
            let p = v[0].prefix_sums();
            let r = v[2].prefix_sums();
            bad += usize::from(p.iter().zip(&r).any(|(a, b)| a + 2.0 * vectors::TOL < *b));
        }
    }
    Ok(count(bad, trials))
}

fn random_cond(rng: &mut CounterRng) -> Result<(ConditionParams, usize)> {
    let n = 2 * (2 + rng.index(31));
    let k = 1 + rng.index(n - 1);
    let cond = ConditionParams::new(k as f64 / n as f64, 0.01 + 0.98 * rng.unit(), 2.0)?;
    Ok((cond, n))
}

fn worst_case_majorizes(s: Scale) -> Result<(bool, String)> {
    let trials = s.pick(1_000, 10_000);
    let mut bad = 0;
    for t in 0..trials {
        let mut rng = CounterRng::for_trial(7, t as u64);
        let (cond, n) = random_cond(&mut rng)?;
        let p = random::c1_vector(&cond, n, &mut rng)?;
        bad += usize::from(!check_c1(&p, &cond)? || !majorizes(&worst_case_vector(&cond, n)?, &p)?);
    }
    Ok(count(bad, trials))
}

fn worst_case_prefix_equality(s: Scale) -> Result<(bool, String)> {
    let trials = s.pick(200, 2_000);
    let mut bad = 0;
    for t in 0..trials {
        let mut rng = CounterRng::for_trial(8, t as u64);
        let (cond, n) = random_cond(&mut rng)?;
        let r = worst_case_vector(&cond, n)?;
        let k = cond.quantile_count(n)?;
        bad += usize::from(!check_c1(&r, &cond)?);
        let prefix = r.prefix_sums();
        for (j, ps) in prefix.iter().take(k).enumerate() {
            let want = (1.0 - cond.epsilon) * (j + 1) as f64 / n as f64;
            bad += usize::from((ps - want).abs() > 1e-12);
        }
    }
    Ok(count(bad, trials))
}

fn d0_d1_implies_c1(s: Scale) -> Result<(bool, String)> {
    let trials = s.pick(10_000, 100_000);
    let mut bad = 0;
    for t in 0..trials {
        let mut rng = CounterRng::for_trial(9, t as u64);
        let (cond, n) = random_cond(&mut rng)?;
        let p = if t % 2 == 0 {
            random::d0_d1_vector(&cond, n, &mut rng)?
        } else {
            random::sorted_vector(n, &mut rng)
        };
        bad += usize::from(!vectors::d0_d1_implies_c1_witness(&p, &cond)?);
    }
    Ok(count(bad, trials))
}

fn key_lemma(s: Scale) -> Result<(bool, String)> {
    let sweep = experiments::key_lemma_sweep(s.pick(700, 10_000), 0)?;
    let cases = sweep.by_case.len();
    Ok((
        sweep.failures() == 0 && cases == potentials::ProofCase::ALL.len(),
        format!(
            "{} failures in {} instances over {cases} proof cases, min relative slack {:.3e}",
            sweep.failures(),
            sweep.results.len(),
            sweep.min_relative_slack()
        ),
    ))
}

fn majorization_monotonicity(s: Scale) -> Result<(bool, String)> {
    let trials = s.pick(1_000, 10_000);
    let mut bad = 0;
    for t in 0..trials {
        let mut rng = CounterRng::for_trial(10, t as u64);
        let (cond, n) = random_cond(&mut rng)?;
        let r = worst_case_vector(&cond, n)?;
        let p = random::c1_vector(&cond, n, &mut rng)?;
        let mut c: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
        c.sort_by(|a, b| b.total_cmp(a));
        bad += usize::from(!potentials::majorization_monotone_holds(&r, &p, &c)?);
        let gamma = 10f64.powf(-3.0 * rng.unit());
        let st = builders::random_state(n, gamma, &mut rng)?;
        let (dr, dp) = (expected_drift(&st, &r, gamma)?.dphi, expected_drift(&st, &p, gamma)?.dphi);
        bad += usize::from(dr + 1e-12 * dr.abs().max(dp.abs()).max(1.0) < dp);
    }
    Ok(count(bad, 2 * trials))
}

fn decreasing_function(s: Scale) -> Result<(bool, String)> {
    let grid = s.pick(1_000, 10_000);
    let mut bad = 0;
    for k in [0.1, 1.0, 3.0] {
        let mut prev = f64::INFINITY;
        for i in 1..=grid {
            // compared as ln f, which stays finite as z -> 0
            let z = k * i as f64 / grid as f64;
            let f = z.ln() + k / z;
            bad += usize::from(f >= prev);
            prev = f;
        }
    }
    Ok(count(bad, 3 * grid))
}

fn drift_linearity(s: Scale) -> Result<(bool, String)> {
    let trials = s.pick(300, 3_000);
    let mut bad = 0;
    for t in 0..trials {
        let mut rng = CounterRng::for_trial(11, t as u64);
        let n = 2 + rng.index(63);
        let u = ProbabilityVector::uniform(n)?;
        let p = random::any_vector(n, &mut rng);
        let half = ProbabilityVector::new(u.probs().iter().zip(p.probs()).map(|(a, b)| a + 0.25 * (b - a)).collect())?;
        let full = ProbabilityVector::new(u.probs().iter().zip(p.probs()).map(|(a, b)| a + 0.5 * (b - a)).collect())?;
        let gamma = 10f64.powf(-3.0 * rng.unit());
        let st = builders::random_state(n, gamma, &mut rng)?;
        let d0 = expected_drift(&st, &u, gamma)?.dgamma;
        let d1 = expected_drift(&st, &half, gamma)?.dgamma - d0;
        let d2 = expected_drift(&st, &full, gamma)?.dgamma - d0;
        let scale = potentials::potential(&st, gamma)?.gamma_total;
        bad += usize::from((d2 - 2.0 * d1).abs() > 1e-9 * scale);
    }
    Ok(count(bad, trials))
}

fn log_space_agreement(s: Scale) -> Result<(bool, String)> {
    let trials = s.pick(300, 3_000);
    let mut bad = 0;
    for t in 0..trials {
        let mut rng = CounterRng::for_trial(12, t as u64);
        let n = 1 + rng.index(64);
        let gamma = rng.unit();
        let st = builders::random_state(n, gamma, &mut rng)?;
        let d = potential_with_mode(&st, gamma, PotentialMode::Direct)?;
        let l = potential_with_mode(&st, gamma, PotentialMode::LogSpace)?;
        if d.gamma_total.is_finite() {
            bad += usize::from((d.gamma_total - l.gamma_total).abs() > 1e-9 * d.gamma_total);
        }
    }
    Ok(count(bad, trials))
}

fn exact_matches(spec: &ProcessSpec, ns: impl Iterator<Item = usize>) -> Result<(bool, String)> {
    let (mut bad, mut total) = (0, 0);
    for n in ns {
        let st = distinct_state(n)?;
        total += 1;
        bad += usize::from(exact_allocation_vector(spec, &st)? != allocation_vector_exact(spec, n)?);
    }
    Ok(count(bad, total))
}

fn two_choice_exact(s: Scale) -> Result<(bool, String)> {
    let spec = ProcessSpec::new(ProcessKind::two_choice());
    let (pass, detail) = exact_matches(&spec, 1..=s.pick(24, 64))?;
    // formula cross-check, independent of the vector builder
    let n = 7;
    let v = allocation_vector_exact(&spec, n)?;
    let formula = (1..=n).all(|i| v[i - 1] == Q::new(2 * i as i128 - 1, (n * n) as i128));
    Ok((pass && formula, detail))
}

fn one_plus_beta_exact(s: Scale) -> Result<(bool, String)> {
    let mut all = (true, String::new());
    for beta in [0.0, 1.0 / 3.0, 0.5, 1.0] {
        let (p, d) = exact_matches(&ProcessSpec::new(ProcessKind::OnePlusBeta { beta }), 1..=s.pick(12, 32))?;
        all = (all.0 && p, d);
    }
    Ok(all)
}

fn quantile_exact(s: Scale) -> Result<(bool, String)> {
    let (mut bad, mut total) = (0, 0);
    for n in (4..=s.pick(16, 32)).step_by(4) {
        for delta in [0.25, 0.5, 0.75] {
            let spec = ProcessSpec::new(ProcessKind::Quantile { delta });
            let st = distinct_state(n)?;
            let v = exact_allocation_vector(&spec, &st)?;
            let k = n * (4.0 * delta) as usize / 4;
            let dq = Q::new(k as i128, n as i128);
            let nq = Q::from_integer(n as i128);
            total += 1;
            bad += usize::from(
                (0..n).any(|i| v[i] != if i < k { dq / nq } else { (Q::one() + dq) / nq }),
            );
        }
    }
    Ok(count(bad, total))
}

fn first_moments(s: Scale) -> Result<(bool, String)> {
    let (mut bad, mut total) = (0, 0);
    for n in [4, 8, 16, 32].into_iter().take(s.pick(3, 4)) {
        let st = distinct_state(n)?;
        for delta in [0.25, 0.5, 0.75] {
            let k = (delta * n as f64) as usize;
            let dq = Q::new(k as i128, n as i128);
            let nq = Q::from_integer(n as i128);
            for kind in [ProcessKind::TwinningWithQuantile { delta }, ProcessKind::QuantileWithPenalty { delta }] {
                let m = exact_step_moments(&ProcessSpec::new(kind), &st)?;
                total += 1;
                bad += usize::from(
                    (0..n).any(|r| m.first[r] != if r < k { dq / nq - Q::one() / nq } else { dq / nq }),
                );
            }
        }
    }
    Ok(count(bad, total))
}

fn balls_per_sample(_: Scale) -> Result<(bool, String)> {
    let st = distinct_state(16)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for (k, delta) in [(4, 0.25), (8, 0.5), (12, 0.75)] {
        let dq = Q::new(k, 16);
        let tw = exact_step_moments(&ProcessSpec::new(ProcessKind::TwinningWithQuantile { delta }), &st)?;
        let pe = exact_step_moments(&ProcessSpec::new(ProcessKind::QuantileWithPenalty { delta }), &st)?;
        ok &= tw.balls_per_sample == Q::from_integer(2) - dq && pe.balls_per_sample.is_one();
        detail.push(format!("twinning δ={delta}: {}", tw.balls_per_sample));
    }
    Ok((ok, detail.join("; ")))
}

fn coupled_dominance(s: Scale) -> Result<(bool, String)> {
    let reps = s.pick(60, 200);
    let (n, m) = (64, 64 * 20);
    let gaps = |kind: ProcessKind| -> Result<Vec<f64>> {
        let spec = ProcessSpec::new(kind);
        (0..reps).map(|r| Ok(run(&spec, n, m, r as u64, &ProbeConfig::final_only())?.0.gap())).collect()
    };
    let two = gaps(ProcessKind::two_choice())?;
    let one = gaps(ProcessKind::OneChoice)?;
    let qs = [0.1, 0.25, 0.5, 0.75, 0.9];
    let bad = qs.iter().filter(|&&q| quantile(&two, q) > quantile(&one, q)).count();
    Ok((
        bad == 0,
        format!("median gap {:.3} vs {:.3} over {reps} seeds", quantile(&two, 0.5), quantile(&one, 0.5)),
    ))
}

/// Every built-in family at each admissible size up to 24.
pub fn small_graphs() -> Result<Vec<RegularGraph>> {
    let mut gs = Vec::new();
    for n in 2..=24 {
        gs.push(RegularGraph::build(GraphKind::Complete, n)?);
        if n >= 3 {
            gs.push(RegularGraph::build(GraphKind::Cycle, n)?);
        }
        if n.is_power_of_two() {
            gs.push(RegularGraph::build(GraphKind::Hypercube, n)?);
        }
        let side = (n as f64).sqrt().round() as usize;
        if side >= 3 && side * side == n {
            gs.push(RegularGraph::build(GraphKind::Torus, n)?);
        }
        for d in [3, 4] {
            if n > d && (n * d) % 2 == 0 {
                gs.push(RegularGraph::build(GraphKind::RandomRegular { d, seed: n as u64 }, n)?);
            }
        }
    }
    Ok(gs)
}

fn expansion(s: Scale) -> Result<(bool, String)> {
    let orders = s.pick(20, 100);
    let (mut bad, mut total) = (0, 0);
    for (gi, g) in small_graphs()?.iter().enumerate() {
        if s == Scale::Quick && g.n() > 16 {
            continue;
        }
        let phi = conductance_exact(g)?.phi;
        let n = g.n();
        for t in 0..orders {
            let mut rng = CounterRng::for_trial(13 + gi as u64, t as u64);
            let st = LoadState::from_loads((0..n).map(|_| rng.below(n as u64) as f64).collect())?;
            let p = graphical_allocation_vector(g, &st)?;
            total += 1;
            let mut ok = expansion_bounds_hold(&p, phi) && check_c2(&p, 2.0);
            if n % 2 == 0 {
                ok &= check_c1(&p, &ConditionParams::new(0.5, phi.min(0.999), 2.0)?)?;
            }
            bad += usize::from(!ok);
        }
    }
    Ok(count(bad, total))
}

fn complete_conductance(s: Scale) -> Result<(bool, String)> {
    let mut bad = 0;
    let top = s.pick(12, 16);
    for n in 2..=top {
        let g = RegularGraph::build(GraphKind::Complete, n)?;
        let e = conductance_exact(&g)?;
        let direct = (1..=n / 2)
            .map(|sz| (sz * (n - sz)) as f64 / (sz * (n - 1)) as f64)
            .fold(f64::INFINITY, f64::min);
        bad += usize::from((e.phi - direct).abs() > 1e-12 || (e.phi - complete_graph_conductance(n)).abs() > 1e-12);
    }
    Ok(count(bad, top - 1))
}

fn conductance_sandwich(s: Scale) -> Result<(bool, String)> {
    let (mut bad, mut total) = (0, 0);
    for g in small_graphs()? {
        if s == Scale::Quick && g.n() > 16 {
            continue;
        }
        let e = conductance_exact(&g)?.phi;
        let b = conductance_bounds(&g);
        total += 1;
        bad += usize::from(!(b.lower <= e + 1e-12 && e <= b.upper + 1e-12));
    }
    Ok(count(bad, total))
}

fn built_in_weights() -> Result<Vec<WeightDistribution>> {
    Ok(vec![
        WeightDistribution::unit(),
        WeightDistribution::exponential(),
        WeightDistribution::scaled_geometric(0.5)?,
        WeightDistribution::scaled_poisson(2.0)?,
    ])
}

fn moment_grid(s: Scale) -> Result<(bool, String)> {
    let trials = s.pick(20_000, 200_000);
    let (mut bad, mut total) = (0, 0);
    for (wi, w) in built_in_weights()?.iter().enumerate() {
        for (gi, div) in [2.0, 4.0, 8.0].iter().enumerate() {
            for (li, ell) in [-1.0, -0.5, 0.0, 0.5, 1.0].iter().enumerate() {
                let mut rng = CounterRng::new(14, (wi * 100 + gi * 10 + li) as u64);
                total += 1;
                bad += usize::from(!w.moment_inequality_check(w.zeta() / div, *ell, trials, &mut rng)?.pass);
            }
        }
    }
    Ok(count(bad, total))
}

fn s_constant_bounds(_: Scale) -> Result<(bool, String)> {
    let ws = built_in_weights()?;
    let bad = ws
        .iter()
        .map(|w| Ok(usize::from(!(w.s_constant()? >= 1.0 && w.s_constant()? >= 1.0 / w.zeta()))))
        .sum::<Result<usize>>()?;
    Ok(count(bad, ws.len()))
}

fn unit_mean(_: Scale) -> Result<(bool, String)> {
    let ws = built_in_weights()?;
    let bad = ws.iter().filter(|w| (w.mean() - 1.0).abs() > 1e-12).count();
    Ok(count(bad, ws.len()))
}

fn small_sweep(seed: u64) -> Result<Table> {
    let mut c = ExperimentConfig::new("one-plus-beta", vec![16, 32], MRule::PerN(5.0));
    c.beta = vec![0.25, 0.5, 1.0];
    c.repetitions = 4;
    c.seed = seed;
    c.gamma = Some(GammaRule::Corollary);
    c.z = vec![0.5, 1.0];
    c.weights = WeightDistribution::exponential();
    experiments::sweep(&c)
}

fn aggregation_idempotent(_: Scale) -> Result<(bool, String)> {
    let t = small_sweep(15)?;
    let once = Table::from_csv_str(&t.to_csv_string()?)?;
    let twice = Table::from_csv_str(&once.to_csv_string()?)?;
    let mut ok = true;
    for col in ["gap", "max_abs_y", "gamma_total"] {
        let a = experiments::aggregate(&once, col)?;
        ok &= a == experiments::aggregate(&once, col)? && a == experiments::aggregate(&twice, col)?;
        // written decimals keep 9 significant digits
        for (x, y) in a.iter().zip(experiments::aggregate(&t, col)?) {
            ok &= (x.median - y.median).abs() <= 1e-8 * y.median.abs().max(1e-300);
        }
    }
    Ok((ok, format!("{} rows", t.len())))
}

fn corollary_gamma(_: Scale) -> Result<(bool, String)> {
    let mem = small_sweep(16)?;
    let csv = Table::from_csv_str(&mem.to_csv_string()?)?;
    let mut bad = 0;
    for (t, exact) in [(&mem, true), (&csv, false)] {
        let col = |c: &str| t.column_f64(c);
        let (g, d, e, cc, s) = (col("gamma_value")?, col("cond_delta")?, col("cond_epsilon")?, col("cond_c")?, col("s")?);
        for i in 0..t.len() {
            let want = potentials::gamma_for_weighted(&ConditionParams::new(d[i], e[i], cc[i])?, cc[i], s[i])?;
            let ok = if exact {
                want.to_bits() == g[i].to_bits()
            } else {
                (want - g[i]).abs() <= 1e-8 * want
            };
            bad += usize::from(!ok);
        }
    }
    Ok(count(bad, mem.len() + csv.len()))
}

fn count_bins_monotone(s: Scale) -> Result<(bool, String)> {
    let (mut bad, mut total) = (0, 0);
    for st in random_states(s, 17) {
        let mut prev = (usize::MAX, usize::MAX);
        for i in 1..=20 {
            let c = processes::count_bins_outside(&st, 0.2 * i as f64);
            total += 1;
            bad += usize::from(c.0 > prev.0 || c.1 > prev.1);
            prev = c;
        }
    }
    Ok(count(bad, total))
}

fn csv_round_trip(_: Scale) -> Result<(bool, String)> {
    let t = small_sweep(18)?;
    let text = t.to_csv_string()?;
    let rt = Table::from_csv_str(&text)?;
    let mut ok = rt.columns() == t.columns() && rt.len() == t.len() && rt.to_csv_string()? == text;
    let mut odd = Table::new(["name", "x"]);
    odd.push_row(vec![Value::Text("a,\"b\"\nc".into()), Value::Float(1.0 / 3.0)])?;
    let back = Table::from_csv_str(&odd.to_csv_string()?)?;
    ok &= back.column_text("name")? == vec!["a,\"b\"\nc".to_string()];
    ok &= (back.column_f64("x")?[0] - 1.0 / 3.0).abs() < 1e-9;
    ok &= Table::new(["a", "b"]).to_csv_string()? == "a,b\n";
    Ok((ok, format!("{} rows", t.len())))
}

fn deterministic_csv(_: Scale) -> Result<(bool, String)> {
    let a = small_sweep(19)?.to_csv_string()?;
    let b = small_sweep(19)?.to_csv_string()?;
    Ok((a == b, format!("{} bytes", a.len())))
}

fn deterministic_svg(_: Scale) -> Result<(bool, String)> {
    let t = small_sweep(20)?;
    let spec: PlotSpec = "x=n,y=gap,group=process,scale=log-log".parse()?;
    let a = render_svg(&t, &spec)?;
    Ok((a == render_svg(&t, &spec)?, format!("{} bytes", a.len())))
}
