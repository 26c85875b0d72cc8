//! Allocation processes, their allocation vectors and the seeded run loop.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_rational::Ratio;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::graphs::RegularGraph;
use crate::load::LoadState;
use crate::potentials::potential;
use crate::rng::CounterRng;
use crate::vectors::{average_ties, quantile_count, ProbabilityVector, Q};
use crate::weights::WeightDistribution;

#[derive(Clone, Debug, PartialEq)]
pub enum ProcessKind {
    OneChoice,
    /// `d >= 1` uniform samples, ball to the least loaded.
    DChoice { d: usize },
    /// Two-choice with probability `beta`, one-choice otherwise.
    OnePlusBeta { beta: f64 },
    /// First sample if its rank is beyond `δn`, else a fresh second sample.
    Quantile { delta: f64 },
    /// One ball to a heavy sample, two to a light one.
    TwinningWithQuantile { delta: f64 },
    /// One ball to a light first sample, else two balls to a second sample.
    QuantileWithPenalty { delta: f64 },
    /// Two-step rounds; the second ball compares a fresh sample against the
    /// first ball's bin using round-start loads.
    ResetMemory,
    /// Uniform edge, ball to the lesser-loaded endpoint.
    Graphical(Arc<RegularGraph>),
}

impl ProcessKind {
    pub fn two_choice() -> Self {
        ProcessKind::DChoice { d: 2 }
    }

    /// Canonical name as accepted by [`FromStr`].
    pub fn name(&self) -> String {
        match self {
            ProcessKind::OneChoice => "one-choice".into(),
            ProcessKind::DChoice { d: 2 } => "two-choice".into(),
            ProcessKind::DChoice { d } => format!("d-choice:d={d}"),
            ProcessKind::OnePlusBeta { beta } => format!("one-plus-beta:beta={beta}"),
            ProcessKind::Quantile { delta } => format!("quantile:delta={delta}"),
            ProcessKind::TwinningWithQuantile { delta } => format!("twinning:delta={delta}"),
            ProcessKind::QuantileWithPenalty { delta } => format!("penalty:delta={delta}"),
            ProcessKind::ResetMemory => "reset-memory".into(),
            ProcessKind::Graphical(_) => "graphical".into(),
        }
    }

    fn delta(&self) -> Option<f64> {
        match *self {
            ProcessKind::Quantile { delta }
            | ProcessKind::TwinningWithQuantile { delta }
            | ProcessKind::QuantileWithPenalty { delta } => Some(delta),
            _ => None,
        }
    }

    /// Processes with a fixed integer ball count per step; unit weights only.
    fn unit_only(&self) -> bool {
        matches!(
            self,
            ProcessKind::TwinningWithQuantile { .. } | ProcessKind::QuantileWithPenalty { .. }
        )
    }

    /// Allocates at least one ball per round to a uniformly sampled bin.
    pub fn has_uniform_component(&self) -> bool {
        matches!(
            self,
            ProcessKind::OneChoice
                | ProcessKind::OnePlusBeta { .. }
                | ProcessKind::TwinningWithQuantile { .. }
                | ProcessKind::QuantileWithPenalty { .. }
                | ProcessKind::ResetMemory
        ) || matches!(self, ProcessKind::DChoice { d: 1 })
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ProcessKind {
    type Err = Error;

    /// Parses names such as `two-choice`, `d-choice:d=3`,
    /// `one-plus-beta:beta=0.5`, `quantile:delta=0.5`, `twinning:delta=0.5`,
    /// `penalty:delta=0.5`, `reset-memory`. `graphical` needs a graph and is
    /// rejected here.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let param = |key: &str| -> Result<f64> {
            let a = arg.ok_or_else(|| Error::Config(format!("process {s:?} needs {key}=<value>")))?;
            let v = a
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| Error::Config(format!("process {s:?}: expected {key}=<value>")))?;
            v.parse()
                .map_err(|_| Error::Config(format!("process {s:?}: bad number {v:?}")))
        };
        let no_arg = |k: ProcessKind| match arg {
            None => Ok(k),
            Some(_) => Err(Error::Config(format!("process {name:?} takes no parameter"))),
        };
        let kind = match name {
            "one-choice" => no_arg(ProcessKind::OneChoice)?,
            "two-choice" => no_arg(ProcessKind::two_choice())?,
            "d-choice" => {
                let d = param("d")?;
                if d.fract() != 0.0 || d < 1.0 {
                    return Err(Error::Config(format!("d-choice needs an integer d >= 1, got {d}")));
                }
                ProcessKind::DChoice { d: d as usize }
            }
            "one-plus-beta" => ProcessKind::OnePlusBeta { beta: param("beta")? },
            "quantile" => ProcessKind::Quantile { delta: param("delta")? },
            "twinning" => ProcessKind::TwinningWithQuantile { delta: param("delta")? },
            "penalty" => ProcessKind::QuantileWithPenalty { delta: param("delta")? },
            "reset-memory" => no_arg(ProcessKind::ResetMemory)?,
            "graphical" => {
                return Err(Error::Config("graphical process needs a graph; set `graph`".into()))
            }
            _ => return Err(Error::Config(format!("unknown process {s:?}"))),
        };
        kind.validate_params()?;
        Ok(kind)
    }
}

impl ProcessKind {
    fn validate_params(&self) -> Result<()> {
        match *self {
            ProcessKind::DChoice { d: 0 } => Err(Error::Parameter("d must be >= 1".into())),
            ProcessKind::OnePlusBeta { beta } if !(0.0..=1.0).contains(&beta) => {
                Err(Error::Parameter(format!("beta = {beta} not in [0,1]")))
            }
            _ => match self.delta() {
                Some(d) if !(d > 0.0 && d < 1.0) => Err(Error::Parameter(format!("delta = {d} not in (0,1)"))),
                _ => Ok(()),
            },
        }
    }
}

/// How ties between equally loaded candidates are broken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TieRule {
    /// The candidate with the higher bin id wins.
    #[default]
    HigherIndex,
    /// A uniformly random candidate among the tied ones.
    Random,
}

impl FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "higher-index" => Ok(TieRule::HigherIndex),
            "random" => Ok(TieRule::Random),
            _ => Err(Error::Config(format!("unknown tie rule {s:?}"))),
        }
    }
}

impl fmt::Display for TieRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieRule::HigherIndex => "higher-index",
            TieRule::Random => "random",
        })
    }
}

/// A process together with its weights, tie rule and optional batching.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessSpec {
    pub kind: ProcessKind,
    pub weights: WeightDistribution,
    pub tie_rule: TieRule,
    /// Batch size `b`: each round allocates `b` unit balls from the
    /// process's allocation vector over round-start ranks.
    pub batch: Option<usize>,
}

impl ProcessSpec {
    pub fn new(kind: ProcessKind) -> Self {
        Self {
            kind,
            weights: WeightDistribution::unit(),
            tie_rule: TieRule::HigherIndex,
            batch: None,
        }
    }

    pub fn with_weights(mut self, w: WeightDistribution) -> Self {
        self.weights = w;
        self
    }

    pub fn with_tie_rule(mut self, t: TieRule) -> Self {
        self.tie_rule = t;
        self
    }

    pub fn batched(mut self, b: usize) -> Self {
        self.batch = Some(b);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate_params()?;
        if !self.weights.is_unit() {
            if self.kind.unit_only() {
                return Err(Error::Scope(format!(
                    "{} allocates fixed integer ball counts and is defined for unit weights only",
                    self.kind
                )));
            }
            if self.batch.is_some() {
                return Err(Error::Scope(
                    "the batched setting is defined for unit-weight balls only".into(),
                ));
            }
        }
        if self.batch == Some(0) {
            return Err(Error::Parameter("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Source of the random choices made by a step. Implemented by
/// [`CounterRng`] and by [`ScriptedSampler`] for forced outcomes.
pub trait Sampler {
    /// Uniform in `0..n`.
    fn bin(&mut self, n: usize) -> usize;
    fn coin(&mut self, p: f64) -> bool;
    fn weight(&mut self, w: &WeightDistribution) -> f64;
    /// Uniform in `[0,1)`.
    fn unit(&mut self) -> f64;
}

impl Sampler for CounterRng {
    #[inline]
    fn bin(&mut self, n: usize) -> usize {
        self.index(n)
    }

    #[inline]
    fn coin(&mut self, p: f64) -> bool {
        self.bernoulli(p)
    }

    #[inline]
    fn weight(&mut self, w: &WeightDistribution) -> f64 {
        w.sample(self)
    }

    #[inline]
    fn unit(&mut self) -> f64 {
        CounterRng::unit(self)
    }
}

/// Replays a fixed sequence of choices: each `bin(n)` consumes the next value
/// (must be `< n`), each `coin` consumes `0` for heads or `1` for tails.
/// Weights are 1. Once the script runs out, further queries return 0 and
/// the sampler is marked exhausted.
#[derive(Clone, Debug, Default)]
pub struct ScriptedSampler {
    script: Vec<usize>,
    pos: usize,
    // (arity, branch probabilities for coins) of every query, in order
    queries: Vec<Query>,
    unsupported: bool,
}

#[derive(Clone, Debug)]
enum Query {
    Uniform(usize),
    Coin(f64),
}

impl ScriptedSampler {
    pub fn new(script: Vec<usize>) -> Self {
        Self {
            script,
            ..Self::default()
        }
    }

    /// Script exhausted before the step finished.
    pub fn exhausted(&self) -> bool {
        self.queries.len() > self.script.len()
    }

    fn next(&mut self, q: Query) -> usize {
        self.queries.push(q);
        let v = self.script.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        v
    }
}

impl Sampler for ScriptedSampler {
    fn bin(&mut self, n: usize) -> usize {
        let v = self.next(Query::Uniform(n));
        assert!(v < n, "scripted bin {v} out of range 0..{n}");
        v
    }

    fn coin(&mut self, p: f64) -> bool {
        self.next(Query::Coin(p)) == 0
    }

    fn weight(&mut self, w: &WeightDistribution) -> f64 {
        if !w.is_unit() {
            self.unsupported = true;
        }
        1.0
    }

    fn unit(&mut self) -> f64 {
        self.unsupported = true;
        0.0
    }
}

/// What one step (or round) did.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RoundOutcome {
    /// Each allocated ball as `(bin, weight)`, in allocation order.
    pub bins_hit: Vec<(usize, f64)>,
    /// Process steps making up the round.
    pub steps_consumed: u64,
    pub samples_used: u64,
}

impl RoundOutcome {
    pub fn balls(&self) -> u64 {
        self.bins_hit.len() as u64
    }

    pub fn total_weight(&self) -> f64 {
        self.bins_hit.iter().map(|&(_, w)| w).sum()
    }
}

/// A [`ProcessSpec`] compiled for a fixed number of bins.
#[derive(Clone, Debug)]
pub struct Process {
    spec: ProcessSpec,
    n: usize,
    // rank threshold δn for the quantile family
    k: usize,
    // allocation vector and its inversion table, batched setting only
    vector: Option<ProbabilityVector>,
    cdf: Vec<f64>,
}

impl Process {
    pub fn new(spec: &ProcessSpec, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::NoBins);
        }
        spec.validate()?;
        let k = match spec.kind.delta() {
            Some(delta) => quantile_count(delta, n)?,
            None => 0,
        };
        if let ProcessKind::Graphical(g) = &spec.kind {
            if g.n() != n {
                return Err(Error::LengthMismatch {
                    left: g.n(),
                    right: n,
                });
            }
        }
        let vector = match spec.batch {
            Some(_) => Some(allocation_vector(spec, n)?),
            None => None,
        };
        let cdf = vector.as_ref().map(|p| p.cdf()).unwrap_or_default();
        Ok(Self {
            spec: spec.clone(),
            n,
            k,
            vector,
            cdf,
        })
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Rank threshold `δn` for the quantile family, 0 otherwise.
    pub fn quantile_rank(&self) -> usize {
        self.k
    }

    /// Picks the winner among `cands` (least loaded; ties per rule).
    fn least_loaded<S: Sampler>(&self, state: &LoadState, cands: &[usize], s: &mut S) -> usize {
        let mut best = cands[0];
        for &c in &cands[1..] {
            let (lc, lb) = (state.load(c), state.load(best));
            if lc < lb || (lc == lb && c > best) {
                best = c;
            }
        }
        if self.spec.tie_rule == TieRule::Random {
            let lb = state.load(best);
            let mut tied: Vec<usize> = cands.iter().copied().filter(|&c| state.load(c) == lb).collect();
            tied.sort_unstable();
            tied.dedup();
            if tied.len() > 1 {
                return tied[s.bin(tied.len())];
            }
        }
        best
    }

    /// Samples one round against `state` without modifying it. All decisions
    /// use the loads and ranks of `state`.
    pub fn sample<S: Sampler>(&self, state: &LoadState, s: &mut S) -> RoundOutcome {
        let n = self.n;
        let w = self.spec.weights;
        if let Some(b) = self.spec.batch {
            // random ties: equally loaded ranks share their block's mass
            let averaged;
            let cdf = match (self.spec.tie_rule, &self.vector) {
                (TieRule::Random, Some(p)) => {
                    averaged = average_ties(p, state).expect("lengths match").cdf();
                    &averaged
                }
                _ => &self.cdf,
            };
            let bins_hit = (0..b)
                .map(|_| {
                    let u = s.unit();
                    let r = cdf.partition_point(|&c| c <= u).min(n - 1);
                    (state.bin_at_rank(r), 1.0)
                })
                .collect();
            return RoundOutcome {
                bins_hit,
                steps_consumed: b as u64,
                samples_used: b as u64,
            };
        }
        let single = |bin: usize, weight: f64, samples: u64| RoundOutcome {
            bins_hit: vec![(bin, weight)],
            steps_consumed: 1,
            samples_used: samples,
        };
        match &self.spec.kind {
            ProcessKind::OneChoice => {
                let i = s.bin(n);
                single(i, s.weight(&w), 1)
            }
            ProcessKind::DChoice { d } => {
                let mut cands = [0usize; 8];
                let mut heap;
                let cands: &mut [usize] = if *d <= 8 {
                    &mut cands[..*d]
                } else {
                    heap = vec![0; *d];
                    &mut heap
                };
                for c in cands.iter_mut() {
                    *c = s.bin(n);
                }
                let i = self.least_loaded(state, cands, s);
                single(i, s.weight(&w), *d as u64)
            }
            ProcessKind::OnePlusBeta { beta } => {
                if s.coin(*beta) {
                    let c = [s.bin(n), s.bin(n)];
                    let i = self.least_loaded(state, &c, s);
                    single(i, s.weight(&w), 2)
                } else {
                    let i = s.bin(n);
                    single(i, s.weight(&w), 1)
                }
            }
            ProcessKind::Quantile { .. } => {
                let i1 = s.bin(n);
                if state.rank_of(i1) >= self.k {
                    single(i1, s.weight(&w), 1)
                } else {
                    let i2 = s.bin(n);
                    single(i2, s.weight(&w), 2)
                }
            }
            ProcessKind::TwinningWithQuantile { .. } => {
                let i = s.bin(n);
                let balls = if state.rank_of(i) >= self.k { 2 } else { 1 };
                RoundOutcome {
                    bins_hit: vec![(i, 1.0); balls],
                    steps_consumed: 1,
                    samples_used: 1,
                }
            }
            ProcessKind::QuantileWithPenalty { .. } => {
                let i1 = s.bin(n);
                if state.rank_of(i1) >= self.k {
                    single(i1, 1.0, 1)
                } else {
                    let i2 = s.bin(n);
                    RoundOutcome {
                        bins_hit: vec![(i2, 1.0); 2],
                        steps_consumed: 1,
                        samples_used: 2,
                    }
                }
            }
            ProcessKind::ResetMemory => {
                let i1 = s.bin(n);
                let w1 = s.weight(&w);
                let i2 = s.bin(n);
                let i = self.least_loaded(state, &[i1, i2], s);
                let w2 = s.weight(&w);
                RoundOutcome {
                    bins_hit: vec![(i1, w1), (i, w2)],
                    steps_consumed: 2,
                    samples_used: 2,
                }
            }
            ProcessKind::Graphical(g) => {
                let (u, v) = g.edges()[s.bin(g.edges().len())];
                let i = self.least_loaded(state, &[u as usize, v as usize], s);
                single(i, s.weight(&w), 2)
            }
        }
    }

    /// Samples a round and applies it to `state`.
    pub fn step<S: Sampler>(&self, state: &mut LoadState, s: &mut S) -> Result<RoundOutcome> {
        let out = self.sample(state, s);
        for &(bin, w) in &out.bins_hit {
            state.apply_allocation(bin, w)?;
        }
        Ok(out)
    }

    /// Visits every outcome of one round from `state` with its exact
    /// probability. Requires unit weights and no batching.
    pub fn enumerate(&self, state: &LoadState, mut visit: impl FnMut(Q, &RoundOutcome)) -> Result<()> {
        if !self.spec.weights.is_unit() || self.spec.batch.is_some() {
            return Err(Error::Unsupported(format!(
                "exact enumeration of {} with {} weights{}",
                self.spec.kind,
                self.spec.weights,
                if self.spec.batch.is_some() { " in batches" } else { "" }
            )));
        }
        let mut stack: Vec<(Vec<usize>, Q)> = vec![(Vec::new(), Q::one())];
        while let Some((script, prob)) = stack.pop() {
            let mut s = ScriptedSampler::new(script);
            let out = self.sample(state, &mut s);
            if s.unsupported {
                return Err(Error::Unsupported("enumeration hit a continuous choice".into()));
            }
            if !s.exhausted() {
                visit(prob, &out);
                continue;
            }
            let depth = s.script.len();
            let branches: Vec<Q> = match s.queries[depth] {
                Query::Uniform(k) => vec![Q::new(1, k as i128); k],
                Query::Coin(p) => {
                    let p = rational(p)?;
                    vec![p, Q::one() - p]
                }
            };
            for (j, bp) in branches.into_iter().enumerate().rev() {
                if bp.is_zero() {
                    continue;
                }
                let mut next = s.script.clone();
                next.push(j);
                stack.push((next, prob * bp));
            }
        }
        Ok(())
    }
}

/// Nearest simple fraction to `x` (exact for decimals such as 0.1).
pub fn rational(x: f64) -> Result<Q> {
    Ratio::<i128>::approximate_float(x).ok_or_else(|| Error::Parameter(format!("{x} has no rational approximation")))
}

fn no_vector(kind: &ProcessKind) -> Error {
    Error::Unsupported(format!("{kind} has no time-homogeneous allocation vector"))
}

fn pow_i128(x: i128, d: usize) -> i128 {
    (0..d).fold(1, |a, _| a * x)
}

/// Exact allocation vector of the time-homogeneous processes.
pub fn allocation_vector_exact(spec: &ProcessSpec, n: usize) -> Result<Vec<Q>> {
    if n == 0 {
        return Err(Error::NoBins);
    }
    let nn = n as i128;
    let two_choice = |i: usize| Q::new(2 * i as i128 + 1, nn * nn);
    Ok(match &spec.kind {
        ProcessKind::OneChoice => vec![Q::new(1, nn); n],
        ProcessKind::DChoice { d } => {
            let nd = pow_i128(nn, *d);
            (0..n)
                .map(|i| Q::new(pow_i128(i as i128 + 1, *d) - pow_i128(i as i128, *d), nd))
                .collect()
        }
        ProcessKind::OnePlusBeta { beta } => {
            let b = rational(*beta)?;
            (0..n)
                .map(|i| (Q::one() - b) * Q::new(1, nn) + b * two_choice(i))
                .collect()
        }
        ProcessKind::Quantile { delta } => {
            let k = quantile_count(*delta, n)?;
            let d = Q::new(k as i128, nn);
            (0..n)
                .map(|i| if i < k { d / nn } else { (Q::one() + d) / nn })
                .collect()
        }
        other => return Err(no_vector(other)),
    })
}

/// Allocation vector over ranks for OneChoice, DChoice, OnePlusBeta and
/// Quantile. The other processes are not time-homogeneous or do not allocate
/// one ball per step, and yield [`Error::Unsupported`].
pub fn allocation_vector(spec: &ProcessSpec, n: usize) -> Result<ProbabilityVector> {
    if n == 0 {
        return Err(Error::NoBins);
    }
    let nf = n as f64;
    let two_choice = |i: usize| (2 * i + 1) as f64 / (nf * nf);
    match &spec.kind {
        ProcessKind::OneChoice => ProbabilityVector::uniform(n),
        ProcessKind::DChoice { d } => {
            let d = *d as i32;
            ProbabilityVector::from_fn(n, |i| {
                let (a, b) = ((i + 1) as f64 / nf, i as f64 / nf);
                a.powi(d) - b.powi(d)
            })
        }
        ProcessKind::OnePlusBeta { beta } => {
            ProbabilityVector::from_fn(n, |i| (1.0 - beta) / nf + beta * two_choice(i))
        }
        ProcessKind::Quantile { delta } => {
            let k = quantile_count(*delta, n)?;
            let d = k as f64 / nf;
            ProbabilityVector::from_fn(n, |i| if i < k { d / nf } else { (1.0 + d) / nf })
        }
        other => Err(no_vector(other)),
    }
}

/// The vector the drift analysis compares a process against: the allocation
/// vector where one exists, `Quantile(δ)` for the twinning and penalty
/// variants, and the two-choice vector for reset-memory rounds.
pub fn comparison_vector(spec: &ProcessSpec, n: usize) -> Result<ProbabilityVector> {
    let proxy = match spec.kind {
        ProcessKind::TwinningWithQuantile { delta } | ProcessKind::QuantileWithPenalty { delta } => {
            ProcessSpec::new(ProcessKind::Quantile { delta })
        }
        ProcessKind::ResetMemory => ProcessSpec::new(ProcessKind::two_choice()),
        _ => spec.clone(),
    };
    allocation_vector(&proxy, n)
}

/// Exact per-rank allocation distribution in the current state, by
/// enumerating every sample outcome.
///
/// For the twinning and penalty variants this is the expected ball count per
/// rank divided by the expected number of balls; for reset-memory it is the
/// distribution of the second ball of a round.
pub fn exact_allocation_vector(spec: &ProcessSpec, state: &LoadState) -> Result<Vec<Q>> {
    let proc = Process::new(spec, state.n())?;
    let mut acc = vec![Q::zero(); state.n()];
    let mut balls = Q::zero();
    proc.enumerate(state, |prob, out| match spec.kind {
        ProcessKind::ResetMemory => acc[state.rank_of(out.bins_hit[1].0)] += prob,
        _ => {
            for &(b, _) in &out.bins_hit {
                acc[state.rank_of(b)] += prob;
            }
            balls += prob * Q::from_integer(out.balls() as i128);
        }
    })?;
    if !matches!(spec.kind, ProcessKind::ResetMemory) && balls != Q::one() {
        acc.iter_mut().for_each(|a| *a /= balls);
    }
    Ok(acc)
}

pub fn empirical_allocation_vector(spec: &ProcessSpec, state: &LoadState) -> Result<ProbabilityVector> {
    ProbabilityVector::from_ratios(&exact_allocation_vector(spec, state)?)
}

/// Exact first and second moments of the one-step change of each rank's
/// normalized load, plus the expected balls per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMoments {
    pub first: Vec<Q>,
    pub second: Vec<Q>,
    pub balls_per_sample: Q,
}

pub fn exact_step_moments(spec: &ProcessSpec, state: &LoadState) -> Result<StepMoments> {
    let n = state.n();
    let proc = Process::new(spec, n)?;
    let nn = Q::from_integer(n as i128);
    let mut first = vec![Q::zero(); n];
    let mut second = vec![Q::zero(); n];
    let (mut balls, mut samples) = (Q::zero(), Q::zero());
    let mut per_bin = vec![0i128; n];
    proc.enumerate(state, |prob, out| {
        per_bin.iter_mut().for_each(|a| *a = 0);
        for &(b, _) in &out.bins_hit {
            per_bin[b] += 1;
        }
        let total = Q::from_integer(out.balls() as i128);
        for bin in 0..n {
            let z = Q::from_integer(per_bin[bin]) - total / nn;
            let r = state.rank_of(bin);
            first[r] += prob * z;
            second[r] += prob * z * z;
        }
        balls += prob * total;
        samples += prob * Q::from_integer(out.samples_used as i128);
    })?;
    Ok(StepMoments {
        first,
        second,
        balls_per_sample: balls / samples,
    })
}

/// Which steps of a run emit a probe row.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    /// Probe whenever the ball count reaches a multiple of this (0 disables).
    pub every: u64,
    /// Extra probe points (ball counts), sorted.
    pub at: Vec<u64>,
    /// Smoothing parameter for the Γ column; `None` leaves it empty.
    pub gamma: Option<f64>,
    /// Thresholds `z` for the above/below counts.
    pub z: Vec<f64>,
}

impl ProbeConfig {
    /// Every `n` balls plus the final step.
    pub fn every_n(n: usize) -> Self {
        Self {
            every: n as u64,
            at: Vec::new(),
            gamma: None,
            z: Vec::new(),
        }
    }

    pub fn final_only() -> Self {
        Self {
            every: 0,
            at: Vec::new(),
            gamma: None,
            z: Vec::new(),
        }
    }

    fn next_after(&self, step: u64) -> u64 {
        let by_every = if self.every > 0 {
            (step / self.every + 1) * self.every
        } else {
            u64::MAX
        };
        let by_at = self.at.iter().copied().find(|&a| a > step).unwrap_or(u64::MAX);
        by_every.min(by_at)
    }
}

/// One probe row of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    /// Balls allocated so far.
    pub step: u64,
    pub gap: f64,
    pub max_abs_y: f64,
    pub gamma_value: Option<f64>,
    pub gamma_total: Option<f64>,
    /// Bins with `ỹ >= z`, one per configured threshold.
    pub bins_ge_z: Vec<usize>,
    /// Bins with `ỹ <= −z`, one per configured threshold.
    pub bins_le_negz: Vec<usize>,
    pub seed: u64,
}

pub fn probe(state: &LoadState, probes: &ProbeConfig, seed: u64) -> RunRecord {
    let (above, below): (Vec<_>, Vec<_>) = probes.z.iter().map(|&z| count_bins_outside(state, z)).unzip();
    RunRecord {
        step: state.step(),
        gap: state.gap(),
        max_abs_y: state.max_abs_normalized(),
        gamma_value: probes.gamma,
        gamma_total: probes.gamma.map(|g| potential(state, g).map(|p| p.gamma_total).unwrap_or(f64::NAN)),
        bins_ge_z: above,
        bins_le_negz: below,
        seed,
    }
}

/// Bins with normalized load `>= z` and `<= −z`.
pub fn count_bins_outside(state: &LoadState, z: f64) -> (usize, usize) {
    let avg = state.average();
    let order = state.sorted_index();
    // rank order is non-increasing, so both counts are prefix lengths
    let above = order.partition_point(|&b| state.load(b) - avg >= z);
    let below = order.len() - order.partition_point(|&b| state.load(b) - avg > -z);
    (above, below)
}

/// Runs `spec` on `n` empty bins until at least `m` balls are allocated,
/// probing per `probes`. The final step is always probed. Deterministic in
/// `seed`.
pub fn run(spec: &ProcessSpec, n: usize, m: u64, seed: u64, probes: &ProbeConfig) -> Result<(LoadState, Vec<RunRecord>)> {
    run_with(spec, n, m, seed, probes, |_| {})
}

/// As [`run`], also handing every probed state to `inspect`.
pub fn run_with(
    spec: &ProcessSpec,
    n: usize,
    m: u64,
    seed: u64,
    probes: &ProbeConfig,
    mut inspect: impl FnMut(&LoadState),
) -> Result<(LoadState, Vec<RunRecord>)> {
    let proc = Process::new(spec, n)?;
    let mut state = LoadState::new(n)?;
    let mut rng = CounterRng::new(seed, 0);
    let mut rows = Vec::new();
    let mut next = probes.next_after(0);
    while state.step() < m {
        proc.step(&mut state, &mut rng)?;
        if state.step() >= next && state.step() < m {
            inspect(&state);
            rows.push(probe(&state, probes, seed));
            next = probes.next_after(state.step());
        }
    }
    inspect(&state);
    rows.push(probe(&state, probes, seed));
    Ok((state, rows))
}

/// One round of the batched setting: `b` unit balls drawn i.i.d. from `p`
/// over the round-start ranks, applied after all are drawn.
pub fn batched_round<S: Sampler>(p: &ProbabilityVector, state: &mut LoadState, b: usize, s: &mut S) -> Result<RoundOutcome> {
    if p.len() != state.n() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: state.n(),
        });
    }
    let cdf = p.cdf();
    let n = state.n();
    let bins_hit: Vec<(usize, f64)> = (0..b)
        .map(|_| {
            let u = s.unit();
            let r = cdf.partition_point(|&c| c <= u).min(n - 1);
            (state.bin_at_rank(r), 1.0)
        })
        .collect();
    for &(bin, w) in &bins_hit {
        state.apply_allocation(bin, w)?;
    }
    Ok(RoundOutcome {
        bins_hit,
        steps_consumed: b as u64,
        samples_used: b as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::GraphKind;

    fn distinct(n: usize) -> LoadState {
        // bin i has load (7i mod n) so ranks and ids disagree
        LoadState::from_loads((0..n).map(|i| ((7 * i) % n) as f64).collect()).unwrap()
    }

    fn spec(s: &str) -> ProcessSpec {
        ProcessSpec::new(s.parse().unwrap())
    }

    #[test]
    fn names_round_trip() {
        for s in [
            "one-choice",
            "two-choice",
            "d-choice:d=3",
            "one-plus-beta:beta=0.5",
            "quantile:delta=0.25",
            "twinning:delta=0.5",
            "penalty:delta=0.5",
            "reset-memory",
        ] {
            assert_eq!(s.parse::<ProcessKind>().unwrap().name(), s);
        }
        assert!("graphical".parse::<ProcessKind>().is_err());
        assert!("quantile:delta=1.5".parse::<ProcessKind>().is_err());
        assert!("two-choice:d=2".parse::<ProcessKind>().is_err());
        assert!("d-choice:d=2.5".parse::<ProcessKind>().is_err());
    }

    #[test]
    fn allocation_vector_examples() {
        let p = allocation_vector(&spec("two-choice"), 2).unwrap();
        assert_eq!(p.probs(), &[0.25, 0.75]);
        let p = allocation_vector(&spec("quantile:delta=0.5"), 4).unwrap();
        assert_eq!(p.probs(), &[0.125, 0.125, 0.375, 0.375]);
        let p = allocation_vector(&spec("one-plus-beta:beta=0"), 3).unwrap();
        assert_eq!(p.probs(), &[1.0 / 3.0; 3]);
        for s in ["twinning:delta=0.5", "penalty:delta=0.5", "reset-memory"] {
            assert!(matches!(allocation_vector(&spec(s), 4), Err(Error::Unsupported(_))));
        }
        let g = Arc::new(RegularGraph::build(GraphKind::Complete, 4).unwrap());
        let gs = ProcessSpec::new(ProcessKind::Graphical(g));
        assert!(matches!(allocation_vector(&gs, 4), Err(Error::Unsupported(_))));
    }

    #[test]
    fn forced_two_choice() {
        let p = Process::new(&spec("two-choice"), 2).unwrap();
        let s = LoadState::from_loads(vec![5.0, 0.0]).unwrap();
        let out = p.sample(&s, &mut ScriptedSampler::new(vec![0, 1]));
        assert_eq!(out.bins_hit, vec![(1, 1.0)]);
        let s = LoadState::from_loads(vec![5.0, 5.0]).unwrap();
        let out = p.sample(&s, &mut ScriptedSampler::new(vec![0, 1]));
        assert_eq!(out.bins_hit, vec![(1, 1.0)]);
        let out = p.sample(&s, &mut ScriptedSampler::new(vec![1, 0]));
        assert_eq!(out.bins_hit, vec![(1, 1.0)]);
    }

    #[test]
    fn forced_twinning() {
        let p = Process::new(&spec("twinning:delta=0.5"), 4).unwrap();
        let s = LoadState::from_loads(vec![3.0, 2.0, 1.0, 0.0]).unwrap();
        // bin 3 has rank 4, bin 0 has rank 1
        let out = p.sample(&s, &mut ScriptedSampler::new(vec![3]));
        assert_eq!(out.balls(), 2);
        let out = p.sample(&s, &mut ScriptedSampler::new(vec![0]));
        assert_eq!(out.balls(), 1);
    }

    #[test]
    fn forced_reset_memory_uses_round_start_loads() {
        let p = Process::new(&spec("reset-memory"), 3).unwrap();
        let mut s = LoadState::from_loads(vec![1.0, 0.0, 0.5]).unwrap();
        // ball 1 to bin 1 (lightest), then compare bin 1 with bin 2 on the
        // round-start loads: bin 1 still wins although it just got a ball
        let out = p.step(&mut s, &mut ScriptedSampler::new(vec![1, 2])).unwrap();
        assert_eq!(out.bins_hit, vec![(1, 1.0), (1, 1.0)]);
        assert_eq!(out.steps_consumed, 2);
        assert_eq!(s.loads(), &[1.0, 2.0, 0.5]);
    }

    #[test]
    fn forced_penalty_and_quantile() {
        let s = LoadState::from_loads(vec![3.0, 2.0, 1.0, 0.0]).unwrap();
        let p = Process::new(&spec("penalty:delta=0.5"), 4).unwrap();
        assert_eq!(p.sample(&s, &mut ScriptedSampler::new(vec![2])).bins_hit, vec![(2, 1.0)]);
        assert_eq!(p.sample(&s, &mut ScriptedSampler::new(vec![1, 0])).bins_hit, vec![(0, 1.0); 2]);
        let q = Process::new(&spec("quantile:delta=0.5"), 4).unwrap();
        assert_eq!(q.sample(&s, &mut ScriptedSampler::new(vec![3])).bins_hit, vec![(3, 1.0)]);
        assert_eq!(q.sample(&s, &mut ScriptedSampler::new(vec![0, 1])).bins_hit, vec![(1, 1.0)]);
    }

    #[test]
    fn quantile_needs_integral_threshold() {
        assert!(matches!(
            Process::new(&spec("quantile:delta=0.3"), 8),
            Err(Error::QuantileNotIntegral { .. })
        ));
    }

    #[test]
    fn scope_rules() {
        let e = WeightDistribution::exponential();
        assert!(matches!(spec("twinning:delta=0.5").with_weights(e).validate(), Err(Error::Scope(_))));
        assert!(matches!(spec("two-choice").batched(4).with_weights(e).validate(), Err(Error::Scope(_))));
        assert!(spec("reset-memory").with_weights(e).validate().is_ok());
        assert!(spec("two-choice").batched(0).validate().is_err());
    }

    #[test]
    fn enumeration_matches_formulas() {
        for n in [2, 3, 5, 8, 12] {
            let s = distinct(n);
            for name in ["one-choice", "two-choice", "d-choice:d=3", "one-plus-beta:beta=0.3"] {
                let sp = spec(name);
                assert_eq!(
                    exact_allocation_vector(&sp, &s).unwrap(),
                    allocation_vector_exact(&sp, n).unwrap(),
                    "{name} n={n}"
                );
            }
        }
        for n in [4, 8, 12] {
            let s = distinct(n);
            for d in ["0.25", "0.5", "0.75"] {
                let sp = spec(&format!("quantile:delta={d}"));
                assert_eq!(exact_allocation_vector(&sp, &s).unwrap(), allocation_vector_exact(&sp, n).unwrap());
            }
        }
    }

    #[test]
    fn float_vectors_match_exact() {
        for name in ["two-choice", "d-choice:d=4", "one-plus-beta:beta=0.7", "quantile:delta=0.25"] {
            let sp = spec(name);
            let f = allocation_vector(&sp, 16).unwrap();
            let q = allocation_vector_exact(&sp, 16).unwrap();
            for (a, b) in f.probs().iter().zip(&q) {
                assert!((a - crate::vectors::q_to_f64(b)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_choice_is_tie_invariant() {
        // higher-index ties mean the larger rank wins, so ties do not matter
        let s = LoadState::from_loads(vec![1.0, 1.0, 0.0, 0.0, 2.0]).unwrap();
        let sp = spec("two-choice");
        assert_eq!(exact_allocation_vector(&sp, &s).unwrap(), allocation_vector_exact(&sp, 5).unwrap());
    }

    #[test]
    fn random_ties_average_blocks() {
        let s = LoadState::from_loads(vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let sp = spec("two-choice").with_tie_rule(TieRule::Random);
        let got = empirical_allocation_vector(&sp, &s).unwrap();
        let p = allocation_vector(&spec("two-choice"), 4).unwrap();
        let want = crate::vectors::average_ties(&p, &s).unwrap();
        for (a, b) in got.probs().iter().zip(want.probs()) {
            assert!((a - b).abs() < 1e-15, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn reset_memory_second_ball_is_two_choice() {
        for n in [3, 6, 10] {
            let s = distinct(n);
            assert_eq!(
                exact_allocation_vector(&spec("reset-memory"), &s).unwrap(),
                allocation_vector_exact(&spec("two-choice"), n).unwrap()
            );
        }
    }

    #[test]
    fn graphical_on_complete_graph() {
        let g = Arc::new(RegularGraph::build(GraphKind::Complete, 5).unwrap());
        let s = distinct(5);
        let sp = ProcessSpec::new(ProcessKind::Graphical(g.clone()));
        let e = empirical_allocation_vector(&sp, &s).unwrap();
        let direct = crate::graphs::graphical_allocation_vector(&g, &s).unwrap();
        for (a, b) in e.probs().iter().zip(direct.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
        // Edge sampling excludes self-pairs: rank i wins i−1 of n(n−1)/2 edges.
        for (i, &p) in e.probs().iter().enumerate() {
            assert!((p - i as f64 / 10.0).abs() < 1e-15);
        }
        // two-choice with self-pairs majorizes the edge version
        let tc = allocation_vector(&spec("two-choice"), 5).unwrap();
        assert!(crate::vectors::majorizes(&tc, &e).unwrap());
    }

    #[test]
    fn twinning_and_penalty_moments() {
        for n in [4, 8, 16, 32] {
            let s = distinct(n);
            for delta in [0.25, 0.5, 0.75] {
                let k = (delta * n as f64) as usize;
                let dq = Q::new(k as i128, n as i128);
                let nq = Q::from_integer(n as i128);
                for name in ["twinning", "penalty"] {
                    let m = exact_step_moments(&spec(&format!("{name}:delta={delta}")), &s).unwrap();
                    for r in 0..n {
                        let want = if r < k { dq / nq - Q::one() / nq } else { dq / nq };
                        assert_eq!(m.first[r], want, "{name} n={n} rank={r}");
                        assert!(m.second[r] <= Q::new(5, n as i128));
                        if name == "twinning" && r < k {
                            assert!(m.second[r] <= Q::new(2, n as i128));
                        }
                    }
                    if name == "twinning" {
                        assert_eq!(m.balls_per_sample, Q::from_integer(2) - dq);
                    } else {
                        // 1 + δ balls over 1 + δ samples
                        assert_eq!(m.balls_per_sample, Q::one());
                    }
                }
            }
        }
    }

    #[test]
    fn run_is_deterministic() {
        let sp = spec("two-choice").with_weights(WeightDistribution::exponential());
        let mut probes = ProbeConfig::every_n(16);
        probes.gamma = Some(0.1);
        probes.z = vec![1.0, 2.0];
        let (_, a) = run(&sp, 16, 500, 42, &probes).unwrap();
        let (_, b) = run(&sp, 16, 500, 42, &probes).unwrap();
        assert_eq!(a, b);
        let (_, c) = run(&sp, 16, 500, 43, &probes).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.len(), 500 / 16 + 1);
        assert_eq!(a.last().unwrap().step, 500);
    }

    #[test]
    fn run_zero_balls() {
        let (s, rows) = run(&spec("one-choice"), 4, 0, 1, &ProbeConfig::every_n(4)).unwrap();
        assert_eq!(s.step(), 0);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].gap, 0.0);
    }

    #[test]
    fn twinning_overshoot_recorded() {
        let (s, rows) = run(&spec("twinning:delta=0.5"), 8, 101, 3, &ProbeConfig::final_only()).unwrap();
        assert!(s.step() == 101 || s.step() == 102);
        assert_eq!(rows.last().unwrap().step, s.step());
    }

    #[test]
    fn exact_mode_agrees_over_a_run() {
        let proc = Process::new(&spec("penalty:delta=0.25"), 32).unwrap();
        let mut s = LoadState::new_exact(32).unwrap();
        let mut rng = CounterRng::new(8, 0);
        for _ in 0..5_000 {
            proc.step(&mut s, &mut rng).unwrap();
        }
        assert!(s.verify_exact());
        assert!(s.order_is_consistent());
    }

    #[test]
    fn batched_conserves_balls() {
        let mut s = LoadState::new(16).unwrap();
        let p = allocation_vector(&spec("two-choice"), 16).unwrap();
        let mut rng = CounterRng::new(1, 0);
        for _ in 0..10 {
            let out = batched_round(&p, &mut s, 48, &mut rng).unwrap();
            assert_eq!(out.balls(), 48);
        }
        assert_eq!(s.total_weight(), 480.0);
    }

    #[test]
    fn batched_uniform_counts_are_binomial() {
        // b = n, uniform p: each bin's count is Binomial(n, 1/n)
        let n = 8;
        let p = ProbabilityVector::uniform(n).unwrap();
        let mut rng = CounterRng::new(77, 0);
        let mut hist = [0usize; 5]; // counts 0,1,2,3,>=4 for bin 0
        let rounds = 10_000;
        for _ in 0..rounds {
            let mut s = LoadState::new(n).unwrap();
            batched_round(&p, &mut s, n, &mut rng).unwrap();
            hist[(s.load(0) as usize).min(4)] += 1;
        }
        let pmf = |k: u32| {
            let c = (0..k).fold(1.0, |a, j| a * (n as f64 - j as f64) / (j as f64 + 1.0));
            c * (1.0 / n as f64).powi(k as i32) * (1.0 - 1.0 / n as f64).powi((n as u32 - k) as i32)
        };
        let mut expected: Vec<f64> = (0..4).map(|k| pmf(k) * rounds as f64).collect();
        expected.push(rounds as f64 - expected.iter().sum::<f64>());
        let chi2: f64 = hist.iter().zip(&expected).map(|(&o, e)| (o as f64 - e).powi(2) / e).sum();
        // 4 degrees of freedom, 0.999 quantile is 18.47
        assert!(chi2 < 18.47, "chi2 = {chi2}, hist {hist:?}");
    }

    #[test]
    fn batch_of_one_matches_sequential_distribution() {
        let s = distinct(6);
        let sp = spec("two-choice");
        let p = allocation_vector(&sp, 6).unwrap();
        let proc = Process::new(&sp.clone().batched(1), 6).unwrap();
        let mut rng = CounterRng::new(4, 0);
        let mut counts = [0usize; 6];
        let trials = 60_000;
        for _ in 0..trials {
            let out = proc.sample(&s, &mut rng);
            counts[s.rank_of(out.bins_hit[0].0)] += 1;
        }
        for (r, &c) in counts.iter().enumerate() {
            let pr = p.probs()[r];
            let sd = (trials as f64 * pr * (1.0 - pr)).sqrt();
            assert!((c as f64 - trials as f64 * pr).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn count_bins_outside_examples() {
        let s = LoadState::from_loads(vec![2.0; 4]).unwrap();
        assert_eq!(count_bins_outside(&s, 0.5), (0, 0));
        let s = LoadState::from_loads(vec![4.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(count_bins_outside(&s, 2.0), (1, 0));
        assert_eq!(count_bins_outside(&s, 1.0), (1, 3));
    }
}
