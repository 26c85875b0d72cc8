//! Hyperbolic cosine potential, its expected drift against an allocation
//! vector, and numerical certification of the drift inequality.

use rayon::prelude::*;

use crate::check::{mean_and_se, CheckResult, InputHasher};
use crate::error::{Error, Result};
use crate::load::LoadState;
use crate::processes::{Process, ProcessSpec};
use crate::rng::CounterRng;
use crate::vectors::{check_c1, ConditionParams, ProbabilityVector};

/// Above this value of `γ|ỹ_i|` the report switches to log-space sums.
pub const LOG_SPACE_THRESHOLD: f64 = 500.0;

const LN_8_3: f64 = 0.980_829_253_011_726_2; // ln(8/3)

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PotentialMode {
    /// Log-space only when some `γ|ỹ_i|` exceeds the threshold.
    #[default]
    Auto,
    Direct,
    LogSpace,
}

/// Per-bin and aggregate overload, underload and total potentials.
///
/// Per-bin vectors are indexed by bin id. In log-space mode per-bin entries
/// may be `inf` or `0`; the `ln_*` aggregates are always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialReport {
    pub gamma: f64,
    pub phi_per_bin: Vec<f64>,
    pub psi_per_bin: Vec<f64>,
    pub phi: f64,
    pub psi: f64,
    pub gamma_total: f64,
    pub ln_phi: f64,
    pub ln_psi: f64,
    pub ln_gamma_total: f64,
    pub log_space: bool,
}

impl PotentialReport {
    pub fn n(&self) -> usize {
        self.phi_per_bin.len()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("gamma = {gamma} not in (0,1]")))
    }
}

fn neumaier(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// `ln Σ e^{a_i}`.
fn log_sum_exp(a: &[f64]) -> f64 {
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + neumaier(a.iter().map(|&x| (x - m).exp())).ln()
}

pub fn potential(state: &LoadState, gamma: f64) -> Result<PotentialReport> {
    potential_with_mode(state, gamma, PotentialMode::Auto)
}

pub fn potential_with_mode(state: &LoadState, gamma: f64, mode: PotentialMode) -> Result<PotentialReport> {
    check_gamma(gamma)?;
    let y = state.normalized_loads();
    let up: Vec<f64> = y.iter().map(|&v| gamma * v).collect();
    let log_space = match mode {
        PotentialMode::Auto => up.iter().any(|a| a.abs() > LOG_SPACE_THRESHOLD),
        PotentialMode::Direct => false,
        PotentialMode::LogSpace => true,
    };
    let phi_per_bin: Vec<f64> = up.iter().map(|a| a.exp()).collect();
    let psi_per_bin: Vec<f64> = up.iter().map(|a| (-a).exp()).collect();
    let (ln_phi, ln_psi, ln_gamma_total, phi, psi, gamma_total);
    if log_space {
        let down: Vec<f64> = up.iter().map(|a| -a).collect();
        ln_phi = log_sum_exp(&up);
        ln_psi = log_sum_exp(&down);
        ln_gamma_total = log_sum_exp(&[ln_phi, ln_psi]);
        phi = ln_phi.exp();
        psi = ln_psi.exp();
        gamma_total = ln_gamma_total.exp();
    } else {
        phi = neumaier(phi_per_bin.iter().copied());
        psi = neumaier(psi_per_bin.iter().copied());
        gamma_total = phi + psi;
        ln_phi = phi.ln();
        ln_psi = psi.ln();
        ln_gamma_total = gamma_total.ln();
    }
    Ok(PotentialReport {
        gamma,
        phi_per_bin,
        psi_per_bin,
        phi,
        psi,
        gamma_total,
        ln_phi,
        ln_psi,
        ln_gamma_total,
        log_space,
    })
}

/// Expected drift terms of the overload, underload and total potentials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Drift {
    pub dphi: f64,
    pub dpsi: f64,
    pub dgamma: f64,
}

fn check_len(p: &ProbabilityVector, state: &LoadState) -> Result<()> {
    if p.len() != state.n() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: state.n(),
        });
    }
    Ok(())
}

/// `ΔΦ̄ = Σ Φ_i (p_i − 1/n) γ` and `ΔΨ̄ = Σ Ψ_i (1/n − p_i) γ` over ranks.
pub fn expected_drift(state: &LoadState, p: &ProbabilityVector, gamma: f64) -> Result<Drift> {
    check_gamma(gamma)?;
    check_len(p, state)?;
    let d = drift_scaled(&state.normalized_sorted(), p.probs(), gamma, 0.0);
    Ok(Drift {
        dphi: d.dphi,
        dpsi: d.dpsi,
        dgamma: d.dphi + d.dpsi,
    })
}

/// Drift terms and `Γ`, all multiplied by `e^{−shift}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledDrift {
    pub dphi: f64,
    pub dpsi: f64,
    pub gamma_total: f64,
    /// Sum of absolute drift terms, for rounding tolerances.
    pub abs_terms: f64,
    pub shift: f64,
}

fn drift_scaled(y_sorted: &[f64], p: &[f64], gamma: f64, shift: f64) -> ScaledDrift {
    let inv_n = 1.0 / p.len() as f64;
    let mut dphi = Vec::with_capacity(p.len());
    let mut dpsi = Vec::with_capacity(p.len());
    let mut g = Vec::with_capacity(2 * p.len());
    for (&y, &pi) in y_sorted.iter().zip(p) {
        let phi = (gamma * y - shift).exp();
        let psi = (-gamma * y - shift).exp();
        dphi.push(phi * (pi - inv_n) * gamma);
        dpsi.push(psi * (inv_n - pi) * gamma);
        g.push(phi);
        g.push(psi);
    }
    let abs_terms = dphi.iter().chain(&dpsi).map(|x| x.abs()).sum();
    ScaledDrift {
        dphi: neumaier(dphi),
        dpsi: neumaier(dpsi),
        gamma_total: neumaier(g),
        abs_terms,
        shift,
    }
}

/// As [`expected_drift`] but scaled by `e^{−M}`, `M = max γ|ỹ_i|`, so no
/// term overflows.
pub fn expected_drift_scaled(state: &LoadState, p: &ProbabilityVector, gamma: f64) -> Result<ScaledDrift> {
    check_gamma(gamma)?;
    check_len(p, state)?;
    let y = state.normalized_sorted();
    let m = y.iter().fold(0.0f64, |a, &v| a.max((gamma * v).abs()));
    Ok(drift_scaled(&y, p.probs(), gamma, m))
}

/// The additive constant `c(δ)` of the drift inequality.
pub fn key_lemma_constant(cond: &ConditionParams) -> f64 {
    key_lemma_constant_for(cond.delta).expect("validated delta")
}

/// `c(δ) = 4·max{1, δ/(1−δ), e^{((1−δ)/2δ)ln(8/3)}·δ/(1−δ), δ·e^{(δ/(2(1−δ)))ln(8/3)}}`.
pub fn key_lemma_constant_for(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!("delta = {delta} not in (0,1)")));
    }
    let r = delta / (1.0 - delta);
    let t3 = ((1.0 - delta) / (2.0 * delta) * LN_8_3).exp() * r;
    let t4 = delta * (delta / (2.0 * (1.0 - delta)) * LN_8_3).exp();
    Ok(4.0 * 1.0f64.max(r).max(t3).max(t4))
}

/// Which branch of the case analysis a sorted load vector falls into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProofCase {
    /// Exactly `δn` bins have nonnegative normalized load.
    Balanced,
    A1,
    A21,
    A22,
    B1,
    B21,
    B22,
}

impl ProofCase {
    pub const ALL: [ProofCase; 7] = [
        ProofCase::Balanced,
        ProofCase::A1,
        ProofCase::A21,
        ProofCase::A22,
        ProofCase::B1,
        ProofCase::B21,
        ProofCase::B22,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ProofCase::Balanced => "balanced",
            ProofCase::A1 => "A.1",
            ProofCase::A21 => "A.2.1",
            ProofCase::A22 => "A.2.2",
            ProofCase::B1 => "B.1",
            ProofCase::B21 => "B.2.1",
            ProofCase::B22 => "B.2.2",
        }
    }

    fn mirrored(self) -> Self {
        match self {
            ProofCase::A1 => ProofCase::B1,
            ProofCase::A21 => ProofCase::B21,
            ProofCase::A22 => ProofCase::B22,
            ProofCase::B1 => ProofCase::A1,
            ProofCase::B21 => ProofCase::A21,
            ProofCase::B22 => ProofCase::A22,
            ProofCase::Balanced => ProofCase::Balanced,
        }
    }
}

/// `z₂` threshold `(1/γ)·((1−δ)/(2δ))·ln(8/3)` of the overloaded branch.
/// The underloaded branch uses the same expression at `1−δ`.
pub fn case_threshold(delta: f64, gamma: f64) -> f64 {
    (1.0 - delta) / (2.0 * delta) * LN_8_3 / gamma
}

// Overloaded-branch classification of a non-increasing vector with k = δn.
fn classify_a(y: &[f64], k: usize, gamma: f64) -> Option<ProofCase> {
    let n = y.len();
    let o = y.iter().filter(|&&v| v >= 0.0).count();
    if o <= k {
        return None;
    }
    if 2 * (o - k) <= n - k {
        return Some(ProofCase::A1);
    }
    let z2 = y[(n + k) / 2];
    let delta = k as f64 / n as f64;
    Some(if z2 <= case_threshold(delta, gamma) {
        ProofCase::A21
    } else {
        ProofCase::A22
    })
}

fn mirror(y: &[f64]) -> Vec<f64> {
    y.iter().rev().map(|v| -v).collect()
}

/// Classifies normalized loads sorted non-increasingly.
pub fn classify_sorted(y: &[f64], k: usize, gamma: f64) -> ProofCase {
    let n = y.len();
    let o = y.iter().filter(|&&v| v >= 0.0).count();
    if o == k {
        return ProofCase::Balanced;
    }
    if o > k {
        return classify_a(y, k, gamma).expect("o > k");
    }
    // |B−| = k − o; thresholds come from the mirrored vector at 1−δ
    let b = k - o;
    if 2 * b <= k {
        return ProofCase::B1;
    }
    let ym = mirror(y);
    let km = n - k;
    let z2 = ym[(n + km) / 2];
    if z2 <= case_threshold(km as f64 / n as f64, gamma) {
        ProofCase::B21
    } else {
        ProofCase::B22
    }
}

pub fn classify(state: &LoadState, cond: &ConditionParams, gamma: f64) -> Result<ProofCase> {
    let k = cond.quantile_count(state.n())?;
    Ok(classify_sorted(&state.normalized_sorted(), k, gamma))
}

/// Outcome of certifying the drift inequality on one input.
#[derive(Clone, Debug, PartialEq)]
pub struct CertResult {
    pub case: ProofCase,
    /// `ΔΓ̄·e^{−shift}`.
    pub value: f64,
    /// `(−Γγεδ/(4n) + cγε)·e^{−shift}`.
    pub bound: f64,
    /// The same with `8n`, the form the multi-step drift bound consumes.
    pub bound_8n: f64,
    pub shift: f64,
    /// Absolute rounding allowance on the scaled values.
    pub tolerance: f64,
    pub pass: bool,
    pub pass_8n: bool,
    pub inputs_hash: u64,
}

impl CertResult {
    pub fn slack(&self) -> f64 {
        self.bound - self.value
    }

    /// Slack relative to the bound's magnitude.
    pub fn relative_slack(&self) -> f64 {
        self.slack() / self.bound.abs().max(self.value.abs()).max(f64::MIN_POSITIVE)
    }

    pub fn to_check(&self) -> CheckResult {
        CheckResult::new(
            format!("key-lemma-4n:{}", self.case.label()),
            self.inputs_hash,
            self.value,
            self.bound,
            self.tolerance,
        )
    }

    pub fn to_check_8n(&self) -> CheckResult {
        CheckResult::new(
            format!("key-lemma-8n:{}", self.case.label()),
            self.inputs_hash,
            self.value,
            self.bound_8n,
            self.tolerance,
        )
    }
}

/// Checks `ΔΓ̄ ≤ −Γγεδ/(4n) + c(δ)γε` (and the `8n` form) in scaled space.
/// A vector violating C1 is an input error, not a failed certificate.
pub fn certify_key_lemma(state: &LoadState, p: &ProbabilityVector, cond: &ConditionParams, gamma: f64) -> Result<CertResult> {
    check_gamma(gamma)?;
    check_len(p, state)?;
    if !check_c1(p, cond)? {
        return Err(Error::PreconditionC1 {
            delta: cond.delta,
            eps: cond.epsilon,
        });
    }
    let y = state.normalized_sorted();
    let k = cond.quantile_count(state.n())?;
    let case = classify_sorted(&y, k, gamma);
    let d = expected_drift_scaled(state, p, gamma)?;
    let n = state.n() as f64;
    let (eps, delta) = (cond.epsilon, cond.delta);
    let c = key_lemma_constant(cond);
    let additive = c * gamma * eps * (-d.shift).exp();
    let drop = d.gamma_total * gamma * eps * delta / n;
    let value = d.dphi + d.dpsi;
    let bound = -drop / 4.0 + additive;
    let bound_8n = -drop / 8.0 + additive;
    let tolerance = 1e-10 * (d.abs_terms + drop + additive);
    let inputs_hash = InputHasher::default()
        .slice(&y)
        .slice(p.probs())
        .f64(delta)
        .f64(eps)
        .f64(gamma)
        .finish();
    Ok(CertResult {
        case,
        value,
        bound,
        bound_8n,
        shift: d.shift,
        tolerance,
        pass: value <= bound + tolerance,
        pass_8n: value <= bound_8n + tolerance,
        inputs_hash,
    })
}

/// `εδ/(16CS)`, the smoothing parameter of the weighted corollary.
pub fn gamma_for_weighted(cond: &ConditionParams, c_cap: f64, s: f64) -> Result<f64> {
    if !(c_cap >= 1.0 && s >= 1.0) {
        return Err(Error::Parameter(format!("need C >= 1 and S >= 1, got C = {c_cap}, S = {s}")));
    }
    Ok(cond.epsilon * cond.delta / (16.0 * c_cap * s))
}

/// Parameters of the one-step drift preconditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftParams {
    pub cond: ConditionParams,
    /// Second-moment scale.
    pub k: f64,
    /// Steps per round.
    pub r: f64,
    pub s: f64,
    pub gamma: f64,
}

impl DriftParams {
    /// `K = 2CS`, `R = 1`, `γ = εδ/(16CS)`.
    pub fn weighted_corollary(cond: ConditionParams, s: f64) -> Result<Self> {
        let gamma = gamma_for_weighted(&cond, cond.c_cap, s)?;
        Ok(Self {
            cond,
            k: 2.0 * cond.c_cap * s,
            r: 1.0,
            s,
            gamma,
        })
    }

    /// `γ ≤ min(1, εδ/(8K))`.
    pub fn gamma_admissible(&self) -> bool {
        self.gamma > 0.0 && self.gamma <= 1.0f64.min(self.cond.epsilon * self.cond.delta / (8.0 * self.k)) * (1.0 + 1e-12)
    }
}

/// Monte-Carlo estimates of one round's expected potential changes against
/// the one-step drift precondition bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftCheck {
    pub phi: CheckResult,
    pub psi: CheckResult,
    pub trials: usize,
    /// Common scale `e^{−shift}` applied to every value and bound.
    pub shift: f64,
}

impl DriftCheck {
    pub fn pass(&self) -> bool {
        self.phi.pass && self.psi.pass
    }
}

const DRIFT_CHUNKS: usize = 64;

/// Simulates one round from `state` `trials` times and compares the mean
/// changes of `Φ` and `Ψ` with
/// `Σ Φ_i((p_i − 1/n)Rγ + KRγ²/n)` and `Σ Ψ_i((1/n − p_i)Rγ + KRγ²/n)`,
/// allowing three standard errors. `p` is indexed by rank.
#[allow(clippy::too_many_arguments)]
pub fn drift_step_bound_check(
    state: &LoadState,
    p: &ProbabilityVector,
    spec: &ProcessSpec,
    gamma: f64,
    k: f64,
    r: f64,
    trials: usize,
    seed: u64,
) -> Result<DriftCheck> {
    check_gamma(gamma)?;
    check_len(p, state)?;
    if trials < 2 {
        return Err(Error::Insufficient(format!("{trials} trials")));
    }
    let n = state.n();
    let nf = n as f64;
    let proc = Process::new(spec, n)?;
    let y = state.normalized_loads();
    let shift = y.iter().fold(0.0f64, |a, &v| a.max((gamma * v).abs()));
    let phi_i: Vec<f64> = y.iter().map(|&v| (gamma * v - shift).exp()).collect();
    let psi_i: Vec<f64> = y.iter().map(|&v| (-gamma * v - shift).exp()).collect();
    let phi: f64 = neumaier(phi_i.iter().copied());
    let psi: f64 = neumaier(psi_i.iter().copied());

    let per_chunk = trials.div_ceil(DRIFT_CHUNKS);
    let samples: Vec<(f64, f64)> = (0..DRIFT_CHUNKS)
        .into_par_iter()
        .flat_map_iter(|c| {
            let lo = (c * per_chunk).min(trials);
            let hi = ((c + 1) * per_chunk).min(trials);
            let mut rng = CounterRng::for_trial(seed, c as u64);
            let mut hits: Vec<(usize, f64)> = Vec::new();
            let (proc, phi_i, psi_i) = (&proc, &phi_i, &psi_i);
            (lo..hi).map(move |_| {
                let out = proc.sample(state, &mut rng);
                hits.clear();
                for &(b, w) in &out.bins_hit {
                    match hits.iter_mut().find(|h| h.0 == b) {
                        Some(h) => h.1 += w,
                        None => hits.push((b, w)),
                    }
                }
                let total = out.total_weight();
                let shift_avg = gamma * total / nf;
                // every bin moves by −W/n; hit bins additionally by their weight
                let mut sp = 0.0;
                let mut ss = 0.0;
                for &(b, w) in &hits {
                    sp += phi_i[b] * (gamma * w).exp_m1();
                    ss += psi_i[b] * (-gamma * w).exp_m1();
                }
                let dphi = phi * (-shift_avg).exp_m1() + (-shift_avg).exp() * sp;
                let dpsi = psi * shift_avg.exp_m1() + shift_avg.exp() * ss;
                (dphi, dpsi)
            })
        })
        .collect();

    let (dphi, dpsi): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    let ranks = state.sorted_index();
    let mut bphi = 0.0;
    let mut bpsi = 0.0;
    let second = k * r * gamma * gamma / nf;
    for (rank, &bin) in ranks.iter().enumerate() {
        let lin = (p.probs()[rank] - 1.0 / nf) * r * gamma;
        bphi += phi_i[bin] * (lin + second);
        bpsi += psi_i[bin] * (-lin + second);
    }
    let hash = InputHasher::default()
        .slice(&y)
        .slice(p.probs())
        .f64(gamma)
        .f64(k)
        .f64(r)
        .u64(trials as u64)
        .u64(seed)
        .finish();
    let (mp, sep) = mean_and_se(&dphi);
    let (ms, ses) = mean_and_se(&dpsi);
    let label = spec.kind.name();
    Ok(DriftCheck {
        phi: CheckResult::new(format!("drift-phi:{label}"), hash, mp, bphi, 3.0 * sep),
        psi: CheckResult::new(format!("drift-psi:{label}"), hash, ms, bpsi, 3.0 * ses),
        trials,
        shift,
    })
}

/// Minimum number of runs accepted by [`gamma_expectation_bound`].
pub const MIN_EXPECTATION_RUNS: usize = 30;

/// Checks the mean of `Γ` over independent runs against `(8c(δ)/δ)·n`.
pub fn gamma_expectation_bound(trace: &[PotentialReport], cond: &ConditionParams) -> Result<CheckResult> {
    gamma_expectation_bound_with(trace, 8.0 * key_lemma_constant(cond) / cond.delta, cond)
}

/// As [`gamma_expectation_bound`] with the bound `factor·n`.
pub fn gamma_expectation_bound_with(trace: &[PotentialReport], factor: f64, cond: &ConditionParams) -> Result<CheckResult> {
    if trace.len() < MIN_EXPECTATION_RUNS {
        return Err(Error::Insufficient(format!(
            "{} runs, at least {MIN_EXPECTATION_RUNS} required",
            trace.len()
        )));
    }
    let n = trace[0].n();
    if trace.iter().any(|r| r.n() != n) {
        return Err(Error::Insufficient("runs with differing n".into()));
    }
    let values: Vec<f64> = trace.iter().map(|r| r.gamma_total).collect();
    let (mean, _) = mean_and_se(&values);
    let hash = InputHasher::default().slice(&values).f64(cond.delta).f64(factor).finish();
    Ok(CheckResult::new("gamma-expectation", hash, mean, factor * n as f64, 0.0))
}

/// Fixed point `b/(1−a)` of `E[X_i | X_{i−1}] ≤ a·X_{i−1} + b`.
pub fn recurrence_bound(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a < 1.0 && b > 0.0) {
        return Err(Error::Parameter(format!("need a in (0,1), b > 0; got a = {a}, b = {b}")));
    }
    Ok(b / (1.0 - a))
}

/// `Σ p_k c_k`.
pub fn weighted_sum(p: &[f64], c: &[f64]) -> f64 {
    neumaier(p.iter().zip(c).map(|(a, b)| a * b))
}

/// If `p` majorizes `q` and `c` is nonnegative and non-increasing, then
/// `Σ p_k c_k ≥ Σ q_k c_k`. Returns whether the implication holds; inputs
/// outside the hypothesis count as holding.
pub fn majorization_monotone_holds(p: &ProbabilityVector, q: &ProbabilityVector, c: &[f64]) -> Result<bool> {
    if c.len() != p.len() {
        return Err(Error::LengthMismatch {
            left: c.len(),
            right: p.len(),
        });
    }
    let hyp = crate::vectors::majorizes(p, q)? && c.iter().all(|&x| x >= 0.0) && c.windows(2).all(|w| w[0] >= w[1]);
    if !hyp {
        return Ok(true);
    }
    let (lhs, rhs) = (weighted_sum(p.probs(), c), weighted_sum(q.probs(), c));
    let scale = c.first().copied().unwrap_or(0.0);
    Ok(lhs + 1e-12 * scale >= rhs)
}

/// `f(z) = z·e^{k/z}`, decreasing on `(0, k]`.
pub fn decreasing_fn(z: f64, k: f64) -> f64 {
    z * (k / z).exp()
}

/// Adversarial and random inputs for the certifier.
pub mod builders {
    use super::*;

    /// Non-increasing normalized loads (summing to zero) that fall in
    /// `case` for quantile count `k = δn` and smoothing `gamma`.
    ///
    /// Nonzero entries only, so the mirrored vector classifies cleanly.
    /// `z2` cases place the threshold entry at `T·(1 ± η)` with `η` drawn
    /// log-uniformly from `[1e-6, 0.5]`.
    pub fn case_vector(case: ProofCase, n: usize, k: usize, gamma: f64, rng: &mut CounterRng) -> Result<Vec<f64>> {
        if k == 0 || k >= n {
            return Err(Error::Parameter(format!("k = {k} not in 1..{n}")));
        }
        match case {
            ProofCase::Balanced => Ok(fill(n, k, None, gamma, rng)),
            ProofCase::A1 | ProofCase::A21 | ProofCase::A22 => overloaded(case, n, k, gamma, rng),
            _ => Ok(mirror(&overloaded(case.mirrored(), n, n - k, gamma, rng)?)),
        }
    }

    fn infeasible(case: ProofCase, n: usize, k: usize) -> Error {
        Error::Parameter(format!("case {} infeasible for n = {n}, k = {k}", case.label()))
    }

    fn overloaded(case: ProofCase, n: usize, k: usize, gamma: f64, rng: &mut CounterRng) -> Result<Vec<f64>> {
        // A.1 iff 2|B+| <= n − k; at least one negative entry is needed
        let (lo, hi) = match case {
            ProofCase::A1 => (1, (n - k) / 2),
            _ => ((n - k) / 2 + 1, n - k - 1),
        };
        let hi = hi.min(n - k - 1);
        if lo > hi {
            return Err(infeasible(case, n, k));
        }
        let b = lo + rng.index(hi - lo + 1);
        let o = k + b;
        let z2 = match case {
            ProofCase::A1 => None,
            _ => {
                let t = case_threshold(k as f64 / n as f64, gamma);
                let eta = (1e-6f64.ln() + rng.unit() * (0.5f64.ln() - 1e-6f64.ln())).exp();
                let z = if case == ProofCase::A21 { t * (1.0 - eta) } else { t * (1.0 + eta) };
                Some(((n + k) / 2, z))
            }
        };
        Ok(fill(n, o, z2, gamma, rng))
    }

    // o positive entries then n − o negative ones balancing the sum; when
    // `z2 = Some((j, z))` the j-th entry (0-based) equals z.
    fn fill(n: usize, o: usize, z2: Option<(usize, f64)>, gamma: f64, rng: &mut CounterRng) -> Vec<f64> {
        // magnitudes from 1e-2/γ to 30/γ, log-uniform
        let scale = (1e-2f64.ln() + rng.unit() * (30f64.ln() - 1e-2f64.ln())).exp() / gamma;
        let mut y = Vec::with_capacity(n);
        match z2 {
            None => {
                for _ in 0..o {
                    y.push(scale * (1e-3 + -(1.0 - rng.unit()).ln()));
                }
            }
            Some((j, z)) => {
                for _ in 0..j {
                    y.push(z + scale * -(1.0 - rng.unit()).ln());
                }
                y.push(z);
                for _ in j + 1..o {
                    y.push(z * (1e-3 + 0.999 * rng.unit()));
                }
            }
        }
        let pos: f64 = y.iter().sum();
        let w: Vec<f64> = (0..n - o).map(|_| 1e-3 + -(1.0 - rng.unit()).ln()).collect();
        let ws: f64 = w.iter().sum();
        y.extend(w.iter().map(|x| -pos * x / ws));
        y.sort_by(|a, b| b.total_cmp(a));
        y
    }

    /// A load state whose normalized loads are `y` up to rounding.
    pub fn state_from_normalized(y: &[f64]) -> Result<LoadState> {
        let m = y.iter().copied().fold(f64::INFINITY, f64::min);
        LoadState::from_loads(y.iter().map(|v| v - m).collect())
    }

    /// Random loads with heavy or light tails at scale `~1/γ`.
    pub fn random_state(n: usize, gamma: f64, rng: &mut CounterRng) -> Result<LoadState> {
        let scale = (1e-2f64.ln() + rng.unit() * (20f64.ln() - 1e-2f64.ln())).exp() / gamma;
        let heavy = rng.bernoulli(0.5);
        let loads = (0..n)
            .map(|_| {
                let e = -(1.0 - rng.unit()).ln();
                scale * if heavy { e * e } else { e }
            })
            .collect();
        LoadState::from_loads(loads)
    }
}
