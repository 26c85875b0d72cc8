//! Probability vectors over rank positions and the conditions imposed on them.
//!
//! Index 0 of a vector is rank 0, the heaviest bin. Formulas in the docs use
//! 1-based ranks `i = 1..n`.

use std::fmt::Write as _;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num};

use crate::error::{Error, Result};
use crate::load::LoadState;
use crate::rng::CounterRng;

/// Absolute tolerance for every sum compared by a condition check.
pub const TOL: f64 = 1e-12;

/// Exact rational type used by the strict checks.
pub type Q = Ratio<i128>;

fn sum_tolerance(n: usize) -> f64 {
    TOL.max(n as f64 * f64::EPSILON)
}

/// A distribution over rank positions.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::NoBins);
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(-TOL..=1.0 + TOL).contains(&p) || !p.is_finite() {
                return Err(Error::InvalidVector(format!("entry {} = {p}", i + 1)));
            }
        }
        let s = neumaier_sum(&probs);
        if (s - 1.0).abs() > sum_tolerance(probs.len()) {
            return Err(Error::InvalidVector(format!("entries sum to {s}")));
        }
        Ok(Self { probs })
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new((0..n).map(f).collect())
    }

    pub fn from_ratios(q: &[Q]) -> Result<Self> {
        Self::new(q.iter().map(q_to_f64).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_fn(n, |_| 1.0 / n as f64)
    }

    /// All mass on rank `rank` (0-based).
    pub fn point_mass(n: usize, rank: usize) -> Result<Self> {
        if rank >= n {
            return Err(Error::BinOutOfRange { bin: rank, n });
        }
        Self::from_fn(n, |i| if i == rank { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_entry(&self) -> f64 {
        self.probs.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn prefix_sums(&self) -> Vec<f64> {
        self.probs
            .iter()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }

    /// Cumulative table used for sampling a rank by inversion.
    pub fn cdf(&self) -> Vec<f64> {
        let mut c = self.prefix_sums();
        if let Some(last) = c.last_mut() {
            *last = f64::INFINITY;
        }
        c
    }

    /// One CSV row with `n` comma-separated decimals (round-trip exact).
    pub fn to_csv_row(&self) -> String {
        let mut s = String::new();
        for (i, p) in self.probs.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{p:?}").unwrap();
        }
        s
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let probs = row
            .trim()
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidVector(format!("{t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(probs)
    }
}

fn neumaier_sum(xs: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

pub fn q_to_f64(q: &Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Quantile, bias and cap of conditions D1, C1 and C2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionParams {
    pub delta: f64,
    pub epsilon: f64,
    pub c_cap: f64,
}

impl ConditionParams {
    pub fn new(delta: f64, epsilon: f64, c_cap: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Parameter(format!("delta = {delta} not in (0,1)")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Parameter(format!("epsilon = {epsilon} not in (0,1)")));
        }
        if !(c_cap >= 1.0 && c_cap.is_finite()) {
            return Err(Error::Parameter(format!("C = {c_cap} must be >= 1")));
        }
        Ok(Self {
            delta,
            epsilon,
            c_cap,
        })
    }

    /// `εδ/(1−δ)`, the excess of the light ranks in the worst-case vector.
    #[inline]
    pub fn eps_tilde(&self) -> f64 {
        self.epsilon * self.delta / (1.0 - self.delta)
    }

    /// `δn` as an integer; errors unless it is within 1e-9 of one.
    pub fn quantile_count(&self, n: usize) -> Result<usize> {
        quantile_count(self.delta, n)
    }
}

/// `δn` as an integer in `1..n`; errors unless it is within 1e-9 of one.
pub fn quantile_count(delta: f64, n: usize) -> Result<usize> {
    let x = delta * n as f64;
    let k = x.round();
    if (x - k).abs() > 1e-9 || k < 1.0 || k >= n as f64 {
        return Err(Error::QuantileNotIntegral { delta, n });
    }
    Ok(k as usize)
}

/// Nearest feasible quantile `k/n` with `1 <= k < n`. Requires `n >= 2`.
pub fn snap_delta(delta: f64, n: usize) -> f64 {
    let k = (delta * n as f64).round().clamp(1.0, (n - 1).max(1) as f64);
    k / n as f64
}

// Generic checks shared by the float and rational routes. `tol` is zero for
// rationals.

fn is_non_decreasing<T: Copy + PartialOrd + Num>(p: &[T], tol: T) -> bool {
    p.windows(2).all(|w| w[0] <= w[1] + tol)
}

fn c1_holds<T: Copy + PartialOrd + Num + FromPrimitive>(p: &[T], k_delta: usize, eps: T, tol: T) -> bool {
    let n = p.len();
    let nn = T::from_usize(n).unwrap();
    let one = T::one();
    let mut prefix = T::zero();
    for (k, &x) in p.iter().enumerate().take(k_delta) {
        prefix = prefix + x;
        let k = T::from_usize(k + 1).unwrap();
        if prefix > (one - eps) * k / nn + tol {
            return false;
        }
    }
    let kd = T::from_usize(k_delta).unwrap();
    let eps_tilde = eps * kd / (nn - kd);
    let mut suffix = T::zero();
    // suffix over 1-based ranks k..n for k = n down to δn+1
    for idx in (k_delta..n).rev() {
        suffix = suffix + p[idx];
        let count = T::from_usize(n - idx).unwrap();
        if suffix + tol < (one + eps_tilde) * count / nn {
            return false;
        }
    }
    true
}

fn majorizes_generic<T: Copy + PartialOrd + Num>(p: &[T], q: &[T], tol: T) -> bool {
    let (mut sp, mut sq) = (T::zero(), T::zero());
    p.iter().zip(q).all(|(&a, &b)| {
        sp = sp + a;
        sq = sq + b;
        sp + tol >= sq
    })
}

/// D0: entries non-decreasing in rank.
pub fn check_d0(p: &ProbabilityVector) -> bool {
    is_non_decreasing(p.probs(), TOL)
}

/// D1: the entry at rank `δn` is at most `(1−ε)/n`.
pub fn check_d1(p: &ProbabilityVector, params: &ConditionParams) -> Result<bool> {
    let n = p.len();
    let k = params.quantile_count(n)?;
    Ok(p.probs[k - 1] <= (1.0 - params.epsilon) / n as f64 + TOL)
}

/// C1: prefix sums up to rank `δn` at most `(1−ε)k/n`, and suffix sums from
/// rank `k > δn` at least `(1+ε̃)(n−k+1)/n`.
pub fn check_c1(p: &ProbabilityVector, params: &ConditionParams) -> Result<bool> {
    let k = params.quantile_count(p.len())?;
    Ok(c1_holds(p.probs(), k, params.epsilon, TOL))
}

/// C2: every entry at most `C/n`.
pub fn check_c2(p: &ProbabilityVector, c_cap: f64) -> bool {
    p.max_entry() <= c_cap / p.len() as f64 + TOL
}

/// `(D0 ∧ D1) ⇒ C1`; must hold for every input.
pub fn d0_d1_implies_c1_witness(p: &ProbabilityVector, params: &ConditionParams) -> Result<bool> {
    if !(check_d0(p) && check_d1(p, params)?) {
        return Ok(true);
    }
    check_c1(p, params)
}

/// Every prefix sum of `p` dominates that of `q`.
pub fn majorizes(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<bool> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(majorizes_generic(p.probs(), q.probs(), TOL))
}

/// The two-level vector `(1−ε)/n` on ranks `1..=δn`, `(1+ε̃)/n` after.
pub fn worst_case_vector(params: &ConditionParams, n: usize) -> Result<ProbabilityVector> {
    let k = params.quantile_count(n)?;
    let lo = (1.0 - params.epsilon) / n as f64;
    // exact complement keeps the sum at 1 despite rounding in eps_tilde
    let hi = (1.0 - k as f64 * lo) / (n - k) as f64;
    ProbabilityVector::from_fn(n, |i| if i < k { lo } else { hi })
}

/// Replaces each block of equal-load ranks by its mean.
pub fn average_ties(p: &ProbabilityVector, state: &LoadState) -> Result<ProbabilityVector> {
    let n = p.len();
    if n != state.n() {
        return Err(Error::LengthMismatch {
            left: n,
            right: state.n(),
        });
    }
    let order = state.sorted_index();
    let mut out = p.probs.clone();
    let mut start = 0;
    while start < n {
        let load = state.load(order[start]);
        let mut end = start + 1;
        while end < n && state.load(order[end]) == load {
            end += 1;
        }
        if end - start > 1 {
            let mean = p.probs[start..end].iter().sum::<f64>() / (end - start) as f64;
            out[start..end].fill(mean);
        }
        start = end;
    }
    ProbabilityVector::new(out)
}

/// Strict rational versions of the checks, for small-n oracles.
pub mod exact {
    use super::*;
    use num_traits::Zero;

    pub fn sums_to_one(p: &[Q]) -> bool {
        p.iter().fold(Q::zero(), |a, &b| a + b) == Q::from_integer(1)
    }

    pub fn check_d0(p: &[Q]) -> bool {
        is_non_decreasing(p, Q::zero())
    }

    pub fn check_d1(p: &[Q], k_delta: usize, eps: Q) -> bool {
        p[k_delta - 1] <= (Q::from_integer(1) - eps) / Q::from_integer(p.len() as i128)
    }

    pub fn check_c1(p: &[Q], k_delta: usize, eps: Q) -> bool {
        c1_holds(p, k_delta, eps, Q::zero())
    }

    pub fn check_c2(p: &[Q], c_cap: Q) -> bool {
        let n = Q::from_integer(p.len() as i128);
        p.iter().all(|&x| x <= c_cap / n)
    }

    pub fn majorizes(p: &[Q], q: &[Q]) -> bool {
        p.len() == q.len() && majorizes_generic(p, q, Q::zero())
    }

    pub fn worst_case_vector(n: usize, k_delta: usize, eps: Q) -> Vec<Q> {
        let nn = Q::from_integer(n as i128);
        let lo = (Q::from_integer(1) - eps) / nn;
        let eps_tilde = eps * Q::from_integer(k_delta as i128) / Q::from_integer((n - k_delta) as i128);
        let hi = (Q::from_integer(1) + eps_tilde) / nn;
        (0..n).map(|i| if i < k_delta { lo } else { hi }).collect()
    }
}

/// Random vectors for property tests.
pub mod random {
    use super::*;

    /// A vector satisfying C1 at `params`: the worst-case vector followed by
    /// random transfers of mass toward lighter ranks, which can only lower
    /// prefix sums and raise suffix sums.
    pub fn c1_vector(params: &ConditionParams, n: usize, rng: &mut CounterRng) -> Result<ProbabilityVector> {
        let mut p = worst_case_vector(params, n)?.probs;
        let moves = rng.index(2 * n + 1);
        for _ in 0..moves {
            let i = rng.index(n);
            let j = i + rng.index(n - i);
            if i == j {
                continue;
            }
            let amt = p[i] * rng.unit();
            p[i] -= amt;
            p[j] += amt;
        }
        ProbabilityVector::new(p)
    }

    /// A non-decreasing vector satisfying D1 at `params`.
    pub fn d0_d1_vector(params: &ConditionParams, n: usize, rng: &mut CounterRng) -> Result<ProbabilityVector> {
        let k = params.quantile_count(n)?;
        let cap = (1.0 - params.epsilon) / n as f64;
        let mut head: Vec<f64> = (0..k).map(|_| cap * rng.unit()).collect();
        head.sort_by(f64::total_cmp);
        let ak = head[k - 1];
        let rest = 1.0 - head.iter().sum::<f64>();
        let m = n - k;
        // every tail entry is at least ak; the surplus is spread increasingly
        let surplus = rest - m as f64 * ak;
        let mut w: Vec<f64> = (0..m).map(|_| rng.unit() + 1e-3).collect();
        w.sort_by(f64::total_cmp);
        let ws: f64 = w.iter().sum();
        head.extend(w.iter().map(|x| ak + surplus * x / ws));
        ProbabilityVector::new(head)
    }

    /// Any probability vector (unsorted, Dirichlet-like weights).
    pub fn any_vector(n: usize, rng: &mut CounterRng) -> ProbabilityVector {
        let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.unit()).ln()).collect();
        let s: f64 = w.iter().sum();
        ProbabilityVector::new(w.iter().map(|x| x / s).collect()).expect("normalized")
    }

    /// A random non-decreasing vector.
    pub fn sorted_vector(n: usize, rng: &mut CounterRng) -> ProbabilityVector {
        let mut p = any_vector(n, rng).probs;
        p.sort_by(f64::total_cmp);
        ProbabilityVector::new(p).expect("normalized")
    }
}
