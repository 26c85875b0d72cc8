//! Declarative Monte-Carlo sweeps, scaling fits and lower-bound trials.
//!
//! Config files are flat `key = value` text, one key per line, `#` starts a
//! comment, lists are comma-separated. Unknown keys are errors.
//!
//! Sweep keys:
//!
//! | key | value |
//! |---|---|
//! | `name` | free-form label |
//! | `process` | list of process names, e.g. `two-choice, quantile:delta=0.5` |
//! | `beta`, `delta`, `d` | lists expanding parameterless `one-plus-beta`, `quantile`/`twinning`/`penalty`, `d-choice` |
//! | `n` | list of bin counts |
//! | `m` | `1000`, `200n`, `4nlogn` (natural log) or `50b` |
//! | `repetitions` | default 50 |
//! | `seed` | master seed, default 0 |
//! | `probe` | `every-n` (default), `final`, `every:<k>` or a list of ball counts |
//! | `gamma` | absent, a number, or `corollary` for `εδ/(16CS)` |
//! | `cond_delta`, `cond_epsilon`, `cond_c`, `s` | override the condition parameters and `S` used by `corollary` |
//! | `z` | list of thresholds for the above/below counts |
//! | `weights` | `unit`, `exp1`, `geom:p=<p>`, `poisson:l=<λ>` |
//! | `tie_rule` | `higher-index` or `random` |
//! | `batch`, `batch_over_n` | lists of batch sizes, absolute or as multiples of `n` |
//! | `graph` | `complete`, `cycle`, `hypercube`, `torus`, `random-regular:d=4:seed=7` or `file:<path>` |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::check::{median, quantile, CheckResult};
use crate::error::{Error, Result};
use crate::graphs::{conductance_bounds, conductance_exact, GraphKind, RegularGraph, EXACT_CONDUCTANCE_MAX_N};
use crate::load::LoadState;
use crate::potentials::{self, builders, certify_key_lemma, CertResult, ProofCase};
use crate::processes::{self, run, ProbeConfig, ProcessKind, ProcessSpec, RunRecord, TieRule};
use crate::rng::{mix64, CounterRng};
use crate::table::{Table, Value};
use crate::vectors::{random, worst_case_vector, ConditionParams};
use crate::weights::{WeightDistribution, WeightKind};

pub use crate::processes::count_bins_outside;

/// Default repetitions for gap statistics.
pub const DEFAULT_REPETITIONS: usize = 50;

/// Parsed `key = value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim().to_string();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Errors on any key outside `allowed`.
    pub fn expect_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))))
            .transpose()
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}"))))
                .collect(),
        }
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?.ok_or_else(|| Error::Config(format!("missing key {key:?}")))
    }
}

/// How many balls a run allocates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MRule {
    Absolute(u64),
    PerN(f64),
    /// Multiple of `n ln n`.
    NLogN(f64),
    /// Multiple of the batch size.
    PerBatch(f64),
}

impl MRule {
    pub fn resolve(&self, n: usize, batch: Option<usize>) -> Result<u64> {
        let nf = n as f64;
        let m = match *self {
            MRule::Absolute(m) => return Ok(m),
            MRule::PerN(c) => c * nf,
            MRule::NLogN(c) => c * nf * nf.ln(),
            MRule::PerBatch(c) => {
                let b = batch.ok_or_else(|| Error::Config("m = <k>b needs a batch size".into()))?;
                c * b as f64
            }
        };
        Ok(m.ceil() as u64)
    }
}

impl FromStr for MRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Config(format!("m: cannot parse {s:?}"));
        let coef = |x: &str| -> Result<f64> {
            if x.is_empty() {
                Ok(1.0)
            } else {
                x.parse::<f64>().ok().filter(|c| *c >= 0.0).ok_or_else(bad)
            }
        };
        for suffix in ["nlogn", "nlnn"] {
            if let Some(c) = t.strip_suffix(suffix) {
                return Ok(MRule::NLogN(coef(c)?));
            }
        }
        if let Some(c) = t.strip_suffix('n') {
            return Ok(MRule::PerN(coef(c)?));
        }
        if let Some(c) = t.strip_suffix('b') {
            return Ok(MRule::PerBatch(coef(c)?));
        }
        t.parse().map(MRule::Absolute).map_err(|_| bad())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProbeRule {
    EveryN,
    Every(u64),
    Final,
    Steps(Vec<u64>),
}

impl FromStr for ProbeRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "every-n" => return Ok(ProbeRule::EveryN),
            "final" => return Ok(ProbeRule::Final),
            _ => {}
        }
        if let Some(k) = s.strip_prefix("every:") {
            return k
                .trim()
                .parse()
                .ok()
                .filter(|&k| k > 0)
                .map(ProbeRule::Every)
                .ok_or_else(|| Error::Config(format!("probe: bad interval {k:?}")));
        }
        let steps: Vec<u64> = s
            .split(',')
            .map(|x| x.trim().parse().map_err(|_| Error::Config(format!("probe: cannot parse {x:?}"))))
            .collect::<Result<_>>()?;
        if steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("probe steps must be strictly increasing".into()));
        }
        Ok(ProbeRule::Steps(steps))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaRule {
    Explicit(f64),
    /// `εδ/(16CS)` from the point's condition parameters.
    Corollary,
}

impl FromStr for GammaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "corollary" => Ok(GammaRule::Corollary),
            v => v
                .parse()
                .ok()
                .filter(|g: &f64| *g > 0.0 && *g <= 1.0)
                .map(GammaRule::Explicit)
                .ok_or_else(|| Error::Config(format!("gamma: expected a number in (0,1] or `corollary`, got {v:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GraphSource {
    Kind(GraphKind),
    File(PathBuf),
}

impl GraphSource {
    pub fn build(&self, n: usize) -> Result<RegularGraph> {
        match self {
            GraphSource::Kind(k) => RegularGraph::build(*k, n),
            GraphSource::File(p) => RegularGraph::read(p),
        }
    }
}

impl FromStr for GraphSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().strip_prefix("file:") {
            Some(p) => Ok(GraphSource::File(PathBuf::from(p.trim()))),
            None => s.parse().map(GraphSource::Kind),
        }
    }
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSource::Kind(k) => write!(f, "{k}"),
            GraphSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// Either an absolute batch size or a multiple of `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BatchRule {
    Absolute(usize),
    PerN(f64),
}

impl BatchRule {
    pub fn resolve(&self, n: usize) -> Result<usize> {
        let b = match *self {
            BatchRule::Absolute(b) => b,
            BatchRule::PerN(c) => (c * n as f64).round() as usize,
        };
        if b == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(b)
    }
}

const SWEEP_KEYS: &[&str] = &[
    "name",
    "process",
    "beta",
    "delta",
    "d",
    "n",
    "m",
    "repetitions",
    "seed",
    "probe",
    "gamma",
    "cond_delta",
    "cond_epsilon",
    "cond_c",
    "s",
    "z",
    "weights",
    "tie_rule",
    "batch",
    "batch_over_n",
    "graph",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    /// Process names, possibly parameterless bases expanded by the axes.
    pub processes: Vec<String>,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub d: Vec<usize>,
    pub n: Vec<usize>,
    pub m: MRule,
    pub repetitions: usize,
    pub seed: u64,
    pub probe: ProbeRule,
    pub gamma: Option<GammaRule>,
    pub cond_override: Option<(f64, f64, f64)>,
    pub s_override: Option<f64>,
    pub z: Vec<f64>,
    pub weights: WeightDistribution,
    pub tie_rule: TieRule,
    pub batch: Vec<BatchRule>,
    pub graph: Option<GraphSource>,
}

impl ExperimentConfig {
    pub fn new(process: &str, n: Vec<usize>, m: MRule) -> Self {
        Self {
            name: String::new(),
            processes: vec![process.to_string()],
            beta: Vec::new(),
            delta: Vec::new(),
            d: Vec::new(),
            n,
            m,
            repetitions: DEFAULT_REPETITIONS,
            seed: 0,
            probe: ProbeRule::EveryN,
            gamma: None,
            cond_override: None,
            s_override: None,
            z: Vec::new(),
            weights: WeightDistribution::unit(),
            tie_rule: TieRule::HigherIndex,
            batch: Vec::new(),
            graph: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(&KeyValues::parse(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(&KeyValues::read(path)?)
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.expect_keys(SWEEP_KEYS)?;
        let processes: Vec<String> = kv.list("process")?;
        let cond_override = match (kv.parsed("cond_delta")?, kv.parsed("cond_epsilon")?, kv.parsed("cond_c")?) {
            (None, None, None) => None,
            (Some(d), Some(e), Some(c)) => Some((d, e, c)),
            _ => return Err(Error::Config("cond_delta, cond_epsilon and cond_c go together".into())),
        };
        let mut batch: Vec<BatchRule> = kv.list::<usize>("batch")?.into_iter().map(BatchRule::Absolute).collect();
        batch.extend(kv.list::<f64>("batch_over_n")?.into_iter().map(BatchRule::PerN));
        let cfg = Self {
            name: kv.get("name").unwrap_or_default().to_string(),
            processes,
            beta: kv.list("beta")?,
            delta: kv.list("delta")?,
            d: kv.list("d")?,
            n: kv.list("n")?,
            m: kv.required("m")?,
            repetitions: kv.parsed("repetitions")?.unwrap_or(DEFAULT_REPETITIONS),
            seed: kv.parsed("seed")?.unwrap_or(0),
            probe: kv.parsed("probe")?.unwrap_or(ProbeRule::EveryN),
            gamma: kv.parsed("gamma")?,
            cond_override,
            s_override: kv.parsed("s")?,
            z: kv.list("z")?,
            weights: kv.parsed("weights")?.unwrap_or_else(WeightDistribution::unit),
            tie_rule: kv.parsed("tie_rule")?.unwrap_or_default(),
            batch,
            graph: kv.parsed("graph")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.processes.is_empty() {
            return Err(Error::Config("missing key \"process\"".into()));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(Error::Config("n must list bin counts >= 1".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if self.z.iter().any(|&z| !(z > 0.0)) {
            return Err(Error::Config("thresholds z must be positive".into()));
        }
        if !self.batch.is_empty() && !self.weights.is_unit() {
            return Err(Error::Scope(
                "the batched setting is defined for unit-weight balls only".into(),
            ));
        }
        if let Some(s) = self.s_override {
            if !(s >= 1.0) {
                return Err(Error::Config("s must be >= 1".into()));
            }
        }
        // resolving the points surfaces every remaining error
        self.points().map(|_| ())
    }

    fn expanded_processes(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for p in &self.processes {
            let axis: Option<(&str, Vec<String>)> = match p.as_str() {
                "one-plus-beta" => Some(("beta", self.beta.iter().map(|v| v.to_string()).collect())),
                "quantile" | "twinning" | "penalty" => Some(("delta", self.delta.iter().map(|v| v.to_string()).collect())),
                "d-choice" => Some(("d", self.d.iter().map(|v| v.to_string()).collect())),
                _ => None,
            };
            match axis {
                Some((key, values)) => {
                    if values.is_empty() {
                        return Err(Error::Config(format!("process {p:?} needs the {key:?} list")));
                    }
                    out.extend(values.iter().map(|v| format!("{p}:{key}={v}")));
                }
                None => out.push(p.clone()),
            }
        }
        Ok(out)
    }

    /// The full factorial of process × n × batch, in sweep order.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let batches: Vec<Option<BatchRule>> = if self.batch.is_empty() {
            vec![None]
        } else {
            self.batch.iter().copied().map(Some).collect()
        };
        let mut points = Vec::new();
        for name in self.expanded_processes()? {
            for &n in &self.n {
                let graph = match (name.as_str(), &self.graph) {
                    ("graphical", Some(g)) => Some(Arc::new(g.build(n)?)),
                    ("graphical", None) => return Err(Error::Config("graphical process needs `graph`".into())),
                    _ => None,
                };
                let kind = match &graph {
                    Some(g) => ProcessKind::Graphical(g.clone()),
                    None => name.parse()?,
                };
                for b in &batches {
                    let b = b.map(|r| r.resolve(n)).transpose()?;
                    let mut spec = ProcessSpec::new(kind.clone())
                        .with_weights(self.weights)
                        .with_tie_rule(self.tie_rule);
                    spec.batch = b;
                    processes::Process::new(&spec, n)?;
                    let m = self.m.resolve(n, b)?;
                    let cond = self.point_conditions(&kind, n)?;
                    let s = self.point_s()?;
                    let gamma = match self.gamma {
                        None => None,
                        Some(GammaRule::Explicit(g)) => Some(g),
                        Some(GammaRule::Corollary) => {
                            let cond = cond.ok_or_else(|| {
                                Error::Config(format!("gamma = corollary: no condition parameters for {kind}"))
                            })?;
                            Some(potentials::gamma_for_weighted(&cond, cond.c_cap, s)?)
                        }
                    };
                    points.push(SweepPoint {
                        index: points.len(),
                        spec,
                        n,
                        batch: b,
                        m,
                        cond,
                        s,
                        gamma,
                    });
                }
            }
        }
        Ok(points)
    }

    fn point_conditions(&self, kind: &ProcessKind, n: usize) -> Result<Option<ConditionParams>> {
        match self.cond_override {
            Some((d, e, c)) => ConditionParams::new(d, e, c).map(Some),
            None => default_conditions(kind, n),
        }
    }

    fn point_s(&self) -> Result<f64> {
        match self.s_override {
            Some(s) => Ok(s),
            None => effective_s(&self.weights),
        }
    }

    fn probes(&self, point: &SweepPoint) -> ProbeConfig {
        let mut p = match &self.probe {
            ProbeRule::EveryN => ProbeConfig::every_n(point.n),
            ProbeRule::Every(k) => ProbeConfig {
                every: *k,
                ..ProbeConfig::final_only()
            },
            ProbeRule::Final => ProbeConfig::final_only(),
            ProbeRule::Steps(s) => ProbeConfig {
                at: s.clone(),
                ..ProbeConfig::final_only()
            },
        };
        p.gamma = point.gamma;
        p.z = self.z.clone();
        p
    }
}

/// `S` used by the corollary's smoothing rule: 1 for unit weights, where
/// `e^x <= 1 + x + x²` on `[−1, 1]` already gives the moment bound, and the
/// generic bound otherwise.
pub fn effective_s(w: &WeightDistribution) -> Result<f64> {
    if w.is_unit() {
        Ok(1.0)
    } else {
        w.s_constant()
    }
}

/// Condition parameters under which each process's (comparison) vector
/// satisfies C1 and C2; `None` for one-choice.
pub fn default_conditions(kind: &ProcessKind, n: usize) -> Result<Option<ConditionParams>> {
    let c = match *kind {
        ProcessKind::OneChoice | ProcessKind::DChoice { d: 1 } => return Ok(None),
        ProcessKind::OnePlusBeta { beta: 0.0 } => return Ok(None),
        ProcessKind::OnePlusBeta { beta } => (0.25, beta / 2.0, 2.0),
        ProcessKind::DChoice { d } => (0.25, 0.5, d as f64),
        ProcessKind::ResetMemory => (0.25, 0.5, 2.0),
        ProcessKind::Quantile { delta }
        | ProcessKind::TwinningWithQuantile { delta }
        | ProcessKind::QuantileWithPenalty { delta } => (delta, 1.0 - delta, 2.0),
        ProcessKind::Graphical(ref g) => {
            let phi = if g.n() <= EXACT_CONDUCTANCE_MAX_N {
                conductance_exact(g)?.phi
            } else {
                conductance_bounds(g).lower
            };
            (crate::vectors::snap_delta(0.5, n), phi.min(0.999), 2.0)
        }
    };
    ConditionParams::new(c.0, c.1, c.2).map(Some)
}

/// One cell of a sweep's factorial.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub index: usize,
    pub spec: ProcessSpec,
    pub n: usize,
    pub batch: Option<usize>,
    pub m: u64,
    pub cond: Option<ConditionParams>,
    pub s: f64,
    pub gamma: Option<f64>,
}

impl SweepPoint {
    fn beta(&self) -> f64 {
        match self.spec.kind {
            ProcessKind::OnePlusBeta { beta } => beta,
            _ => f64::NAN,
        }
    }

    fn delta(&self) -> f64 {
        match self.spec.kind {
            ProcessKind::Quantile { delta }
            | ProcessKind::TwinningWithQuantile { delta }
            | ProcessKind::QuantileWithPenalty { delta } => delta,
            _ => f64::NAN,
        }
    }
}

/// Seed of repetition `rep`; shared by every point of a sweep so points are
/// compared on common random numbers. 63 bits, so it is a CSV integer.
pub fn repetition_seed(master: u64, rep: usize) -> u64 {
    mix64(master ^ mix64(rep as u64 ^ 0x5EED)) >> 1
}

/// Columns of a sweep table before the per-threshold counts.
pub const SWEEP_COLUMNS: [&str; 19] = [
    "point", "process", "n", "b", "m", "weights", "beta", "delta", "cond_delta", "cond_epsilon", "cond_c", "s",
    "rep", "seed", "step", "gap", "max_abs_y", "gamma_value", "gamma_total",
];

pub fn sweep_columns(z: &[f64]) -> Vec<String> {
    let mut cols: Vec<String> = SWEEP_COLUMNS.iter().map(|s| s.to_string()).collect();
    cols.extend(z.iter().map(|z| format!("bins_ge_z{}", crate::table::fmt_decimal(*z))));
    cols.extend(z.iter().map(|z| format!("bins_le_negz{}", crate::table::fmt_decimal(*z))));
    cols
}

fn sweep_row(point: &SweepPoint, weights: &WeightDistribution, rep: usize, r: &RunRecord) -> Vec<Value> {
    let (cd, ce, cc) = point
        .cond
        .map(|c| (c.delta, c.epsilon, c.c_cap))
        .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    let mut row: Vec<Value> = vec![
        point.index.into(),
        point.spec.kind.name().into(),
        point.n.into(),
        point.batch.map(Value::from).unwrap_or(Value::Float(f64::NAN)),
        point.m.into(),
        weights.to_string().into(),
        point.beta().into(),
        point.delta().into(),
        cd.into(),
        ce.into(),
        cc.into(),
        point.s.into(),
        rep.into(),
        r.seed.into(),
        r.step.into(),
        r.gap.into(),
        r.max_abs_y.into(),
        r.gamma_value.unwrap_or(f64::NAN).into(),
        r.gamma_total.unwrap_or(f64::NAN).into(),
    ];
    row.extend(r.bins_ge_z.iter().map(|&c| Value::from(c)));
    row.extend(r.bins_le_negz.iter().map(|&c| Value::from(c)));
    row
}

/// Runs every point and repetition, handing each point's rows to `sink` in
/// (point, repetition, step) order. Repetitions run in parallel.
pub fn sweep_with_sink(cfg: &ExperimentConfig, mut sink: impl FnMut(Vec<Value>) -> Result<()>) -> Result<()> {
    cfg.validate()?;
    for point in cfg.points()? {
        let probes = cfg.probes(&point);
        let runs: Vec<Result<Vec<RunRecord>>> = (0..cfg.repetitions)
            .into_par_iter()
            .map(|rep| run(&point.spec, point.n, point.m, repetition_seed(cfg.seed, rep), &probes).map(|(_, rows)| rows))
            .collect();
        for (rep, rows) in runs.into_iter().enumerate() {
            for r in rows? {
                sink(sweep_row(&point, &cfg.weights, rep, &r))?;
            }
        }
    }
    Ok(())
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Table> {
    let mut t = Table::new(sweep_columns(&cfg.z));
    sweep_with_sink(cfg, |row| t.push_row(row))?;
    Ok(t)
}

/// Last probe of every (point, seed) pair: `(point, seed, row index)`.
pub fn final_rows(table: &Table) -> Result<Vec<usize>> {
    let point = table.column_f64("point")?;
    let seed = table.column_text("seed")?;
    let step = table.column_f64("step")?;
    let mut last: BTreeMap<(u64, String), usize> = BTreeMap::new();
    for i in 0..table.len() {
        let key = (point[i] as u64, seed[i].clone());
        match last.get(&key) {
            Some(&j) if step[j] >= step[i] => {}
            _ => {
                last.insert(key, i);
            }
        }
    }
    Ok(last.into_values().collect())
}

/// Median and quantiles of a column per (point, step), recomputed from the
/// raw rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub point: u64,
    pub step: u64,
    pub count: usize,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
}

pub fn aggregate(table: &Table, column: &str) -> Result<Vec<Aggregate>> {
    let point = table.column_f64("point")?;
    let step = table.column_f64("step")?;
    let values = table.column_f64(column)?;
    let mut groups: BTreeMap<(u64, u64), Vec<f64>> = BTreeMap::new();
    for i in 0..table.len() {
        groups.entry((point[i] as u64, step[i] as u64)).or_default().push(values[i]);
    }
    Ok(groups
        .into_iter()
        .map(|((point, step), v)| Aggregate {
            point,
            step,
            count: v.len(),
            median: median(&v),
            q05: quantile(&v, 0.05),
            q95: quantile(&v, 0.95),
        })
        .collect())
}

/// Axis of a gap scaling fit and the predictor it implies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalingAxis {
    /// `ln n / β`.
    Beta,
    /// `ln n / δ`.
    Delta,
    /// `ln n / (1 − δ)`.
    DeltaComplement,
    /// `(b/n) ln n`.
    BOverN,
    /// `ln n`.
    LogN,
}

impl FromStr for ScalingAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(ScalingAxis::Beta),
            "delta" => Ok(ScalingAxis::Delta),
            "one-minus-delta" => Ok(ScalingAxis::DeltaComplement),
            "b_over_n" => Ok(ScalingAxis::BOverN),
            "log_n" => Ok(ScalingAxis::LogN),
            _ => Err(Error::Config(format!("unknown scaling axis {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitPoint {
    pub axis_value: f64,
    pub predictor: f64,
    pub median_gap: f64,
    pub runs: usize,
}

/// Median final gap per axis point fitted against the predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub axis: ScalingAxis,
    pub points: Vec<FitPoint>,
    /// Least squares `gap ≈ κ̂·predictor` through the origin.
    pub kappa: f64,
    pub max_relative_residual: f64,
    /// `max(gap/predictor) / min(gap/predictor)`.
    pub spread: f64,
    /// Ordinary least squares of gap on predictor.
    pub slope: f64,
    pub intercept: f64,
}

impl FitReport {
    /// Median gaps strictly increase along the axis.
    pub fn increasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].median_gap > w[0].median_gap)
    }
}

pub fn gap_scaling_report(table: &Table, axis: ScalingAxis) -> Result<FitReport> {
    let rows = final_rows(table)?;
    let n = table.column_f64("n")?;
    let gap = table.column_f64("gap")?;
    let axis_col = match axis {
        ScalingAxis::Beta => table.column_f64("beta")?,
        ScalingAxis::Delta | ScalingAxis::DeltaComplement => table.column_f64("delta")?,
        ScalingAxis::BOverN => {
            let b = table.column_f64("b")?;
            b.iter().zip(&n).map(|(b, n)| b / n).collect()
        }
        ScalingAxis::LogN => n.clone(),
    };
    // keyed by the bit pattern so equal floats group together
    let mut groups: BTreeMap<u64, (f64, f64, Vec<f64>)> = BTreeMap::new();
    for &i in &rows {
        let a = axis_col[i];
        if !a.is_finite() {
            return Err(Error::Insufficient(format!("row {i} has no value on the {axis:?} axis")));
        }
        let ln = n[i].ln();
        let predictor = match axis {
            ScalingAxis::Beta => ln / a,
            ScalingAxis::Delta => ln / a,
            ScalingAxis::DeltaComplement => ln / (1.0 - a),
            ScalingAxis::BOverN => a * ln,
            ScalingAxis::LogN => ln,
        };
        let e = groups.entry(a.to_bits()).or_insert((a, predictor, Vec::new()));
        if (e.1 - predictor).abs() > 1e-12 * predictor.abs() {
            return Err(Error::Insufficient(format!("axis value {a} mixes several n")));
        }
        e.2.push(gap[i]);
    }
    if groups.len() < 3 {
        return Err(Error::Insufficient(format!("{} axis points, at least 3 required", groups.len())));
    }
    let mut points: Vec<FitPoint> = groups
        .into_values()
        .map(|(a, x, g)| FitPoint {
            axis_value: a,
            predictor: x,
            median_gap: median(&g),
            runs: g.len(),
        })
        .collect();
    points.sort_by(|a, b| a.axis_value.total_cmp(&b.axis_value));
    let sxx: f64 = points.iter().map(|p| p.predictor * p.predictor).sum();
    let sxy: f64 = points.iter().map(|p| p.predictor * p.median_gap).sum();
    let kappa = sxy / sxx;
    let max_relative_residual = points
        .iter()
        .map(|p| ((p.median_gap - kappa * p.predictor) / (kappa * p.predictor)).abs())
        .fold(0.0, f64::max);
    let ratios: Vec<f64> = points.iter().map(|p| p.median_gap / p.predictor).collect();
    let spread = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.predictor).sum::<f64>() / k;
    let my = points.iter().map(|p| p.median_gap).sum::<f64>() / k;
    let cov: f64 = points.iter().map(|p| (p.predictor - mx) * (p.median_gap - my)).sum();
    let var: f64 = points.iter().map(|p| (p.predictor - mx).powi(2)).sum();
    let slope = cov / var;
    Ok(FitReport {
        axis,
        points,
        kappa,
        max_relative_residual,
        spread,
        slope,
        intercept: my - slope * mx,
    })
}

/// Final gaps of `reps` seeded runs of `m` balls on `n` bins.
pub fn final_gaps(spec: &ProcessSpec, n: usize, m: u64, reps: usize, seed: u64) -> Result<Vec<f64>> {
    (0..reps)
        .into_par_iter()
        .map(|rep| run(spec, n, m, repetition_seed(seed, rep), &ProbeConfig::final_only()).map(|(s, _)| s.gap()))
        .collect()
}

/// Gaps of repeated runs against a threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerBoundReport {
    pub n: usize,
    pub m: u64,
    pub threshold: f64,
    pub gaps: Vec<f64>,
}

impl LowerBoundReport {
    pub fn pass_fraction(&self) -> f64 {
        self.gaps.iter().filter(|&&g| g >= self.threshold).count() as f64 / self.gaps.len() as f64
    }

    /// `Gap / ln n` of every run.
    pub fn normalized(&self) -> Vec<f64> {
        let ln = (self.n as f64).ln();
        self.gaps.iter().map(|g| g / ln).collect()
    }
}

/// Runs `m = c_scale·n ln n` balls per repetition and compares the gap with
/// `κ ln n`. Only processes that place a ball uniformly at random in every
/// round qualify.
pub fn lower_bound_trials(spec: &ProcessSpec, n: usize, c_scale: f64, kappa: f64, reps: usize, seed: u64) -> Result<LowerBoundReport> {
    if !spec.kind.has_uniform_component() {
        return Err(Error::Scope(format!(
            "{} does not allocate a ball to a uniformly random bin every round",
            spec.kind
        )));
    }
    let ln = (n as f64).ln();
    let m = (c_scale * n as f64 * ln).ceil() as u64;
    Ok(LowerBoundReport {
        n,
        m,
        threshold: kappa * ln,
        gaps: final_gaps(spec, n, m, reps, seed)?,
    })
}

/// Exponential weights after `m = n` balls against `½ ln n`.
pub fn weighted_lower_bound_trials(spec: &ProcessSpec, n: usize, reps: usize, seed: u64) -> Result<LowerBoundReport> {
    if spec.weights.kind() != WeightKind::Exponential {
        return Err(Error::Scope("the weighted lower bound concerns exponential weights".into()));
    }
    Ok(LowerBoundReport {
        n,
        m: n as u64,
        threshold: 0.5 * (n as f64).ln(),
        gaps: final_gaps(spec, n, n as u64, reps, seed)?,
    })
}

/// `κ̂ = ½ · (5th percentile of Gap/ln n)` from a calibration run.
pub fn calibrate_kappa(calibration: &LowerBoundReport) -> f64 {
    0.5 * quantile(&calibration.normalized(), 0.05)
}

/// Bins above `z` and below `−z` at the end of each repetition.
pub fn height_counts(spec: &ProcessSpec, n: usize, m: u64, z: f64, reps: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if !(z > 0.0) {
        return Err(Error::Parameter(format!("z = {z} must be positive")));
    }
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            run(spec, n, m, repetition_seed(seed, rep), &ProbeConfig::final_only()).map(|(s, _)| count_bins_outside(&s, z))
        })
        .collect()
}

/// Smallest `c₂` with `count ≥ ½ n e^{−c₂ z}` at the 5th percentile of
/// `counts`. Errors when that percentile is zero.
pub fn fit_height_constant(counts: &[usize], n: usize, z: f64) -> Result<f64> {
    let c: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let q = quantile(&c, 0.05);
    if !(q > 0.0) {
        return Err(Error::Insufficient(format!("no bins beyond z = {z} at the 5th percentile")));
    }
    Ok(((n as f64) / (2.0 * q)).ln().max(0.0) / z)
}

/// Summary of a randomized key-lemma certification sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyLemmaSweep {
    pub results: Vec<CertResult>,
    pub by_case: BTreeMap<ProofCase, usize>,
}

impl KeyLemmaSweep {
    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| !r.pass).count()
    }

    pub fn failures_8n(&self) -> usize {
        self.results.iter().filter(|r| !r.pass_8n).count()
    }

    pub fn min_relative_slack(&self) -> f64 {
        self.results.iter().map(|r| r.relative_slack()).fold(f64::INFINITY, f64::min)
    }
}

pub const KEY_LEMMA_DELTAS: [(u32, u32); 4] = [(1, 4), (1, 3), (1, 2), (3, 4)];

/// Instance `i` of the certification sweep: `n` in `4..=256` divisible by
/// the quantile's denominator, `ε` uniform in `[0.05, 0.9]`, `γ`
/// log-uniform in `[1e-3, 1]`; loads built for proof case `i mod 7` (random
/// loads for one instance in eight); C1 vectors cycling through the
/// worst-case vector, random C1 vectors and D0∧D1 vectors.
pub fn key_lemma_instance(seed: u64, i: usize) -> Result<(LoadState, crate::vectors::ProbabilityVector, ConditionParams, f64)> {
    let mut rng = CounterRng::for_trial(seed, i as u64);
    let (num, den) = KEY_LEMMA_DELTAS[rng.index(KEY_LEMMA_DELTAS.len())];
    let lo = 4usize.div_ceil(den as usize);
    let hi = 256 / den as usize;
    let n = den as usize * (lo + rng.index(hi - lo + 1));
    let delta = num as f64 / den as f64;
    let eps = 0.05 + 0.85 * rng.unit();
    let gamma = (1e-3f64.ln() * (1.0 - rng.unit())).exp().min(1.0);
    let cond = ConditionParams::new(delta, eps, 2.0)?;
    let k = cond.quantile_count(n)?;
    let state = if i % 8 == 7 {
        builders::random_state(n, gamma, &mut rng)?
    } else {
        let case = ProofCase::ALL[i % ProofCase::ALL.len()];
        match builders::case_vector(case, n, k, gamma, &mut rng) {
            Ok(y) => builders::state_from_normalized(&y)?,
            Err(_) => builders::random_state(n, gamma, &mut rng)?,
        }
    };
    let p = match i % 3 {
        0 => worst_case_vector(&cond, n)?,
        1 => random::c1_vector(&cond, n, &mut rng)?,
        _ => random::d0_d1_vector(&cond, n, &mut rng)?,
    };
    Ok((state, p, cond, gamma))
}

pub fn key_lemma_sweep(instances: usize, seed: u64) -> Result<KeyLemmaSweep> {
    let results: Vec<CertResult> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let (state, p, cond, gamma) = key_lemma_instance(seed, i)?;
            certify_key_lemma(&state, &p, &cond, gamma)
        })
        .collect::<Result<_>>()?;
    let mut by_case = BTreeMap::new();
    for r in &results {
        *by_case.entry(r.case).or_insert(0) += 1;
    }
    Ok(KeyLemmaSweep { results, by_case })
}

/// Certification results as a table with one row per check.
pub fn checks_table(checks: &[CheckResult]) -> Table {
    let mut t = Table::new(CheckResult::CSV_HEADER);
    for c in checks {
        t.push_row(c.csv_fields().into_iter().map(Value::Text).collect())
            .expect("header width");
    }
    t
}

const DRIFT_KEYS: &[&str] = &[
    "n",
    "delta",
    "epsilon",
    "c",
    "vector",
    "gamma",
    "instances",
    "seed",
    "process",
    "weights",
    "k",
    "r",
    "batch",
    "trials",
    "drift_gamma",
];

/// Source of the probability vectors certified by `drift-check`.
#[derive(Clone, Debug, PartialEq)]
pub enum VectorSource {
    WorstCase,
    RandomC1,
    Process(String),
}

impl FromStr for VectorSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "worst-case" => VectorSource::WorstCase,
            "c1-random" => VectorSource::RandomC1,
            other => VectorSource::Process(other.to_string()),
        })
    }
}

/// Drift certification config.
///
/// Keys: `n` (list), `delta`, `epsilon`, `c`, `vector` (`worst-case`,
/// `c1-random` or a process name whose vector is used), `gamma` (list),
/// `instances` per (n, γ), `seed`; optionally `process`, `weights`, `k`,
/// `r`, `batch`, `trials` and `drift_gamma` for the Monte-Carlo
/// precondition check against the process's comparison vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftCheckConfig {
    pub n: Vec<usize>,
    pub cond: ConditionParams,
    pub vector: VectorSource,
    pub gamma: Vec<f64>,
    pub instances: usize,
    pub seed: u64,
    pub precondition: Option<PreconditionConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreconditionConfig {
    pub spec: ProcessSpec,
    pub k: f64,
    pub r: f64,
    pub trials: usize,
    pub gamma: f64,
}

impl DriftCheckConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(&KeyValues::parse(text)?)
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.expect_keys(DRIFT_KEYS)?;
        let cond = ConditionParams::new(kv.required("delta")?, kv.required("epsilon")?, kv.parsed("c")?.unwrap_or(2.0))?;
        let n: Vec<usize> = kv.list("n")?;
        if n.is_empty() {
            return Err(Error::Config("missing key \"n\"".into()));
        }
        let mut gamma: Vec<f64> = kv.list("gamma")?;
        if gamma.is_empty() {
            gamma = vec![1e-3, 1e-2, 0.1, 1.0];
        }
        if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(Error::Config(format!("gamma {g} not in (0,1]")));
        }
        let precondition = match kv.get("process") {
            None => None,
            Some(name) => {
                let mut spec = ProcessSpec::new(name.parse()?).with_weights(kv.parsed("weights")?.unwrap_or_else(WeightDistribution::unit));
                spec.batch = kv.parsed("batch")?;
                spec.validate()?;
                Some(PreconditionConfig {
                    spec,
                    k: kv.required("k")?,
                    r: kv.parsed("r")?.unwrap_or(1.0),
                    trials: kv.parsed("trials")?.unwrap_or(20_000),
                    gamma: kv.required("drift_gamma")?,
                })
            }
        };
        Ok(Self {
            n,
            cond,
            vector: kv.parsed("vector")?.unwrap_or(VectorSource::WorstCase),
            gamma,
            instances: kv.parsed("instances")?.unwrap_or(100),
            seed: kv.parsed("seed")?.unwrap_or(0),
            precondition,
        })
    }
}

/// Runs the certification sweep and optional precondition checks of a
/// drift config. A vector violating C1 is an error, not a failed check.
pub fn drift_check(cfg: &DriftCheckConfig) -> Result<Vec<CheckResult>> {
    let mut jobs = Vec::new();
    for &n in &cfg.n {
        cfg.cond.quantile_count(n)?;
        for (gi, &gamma) in cfg.gamma.iter().enumerate() {
            for i in 0..cfg.instances {
                jobs.push((n, gi, gamma, i));
            }
        }
    }
    let mut checks: Vec<CheckResult> = jobs
        .into_par_iter()
        .map(|(n, gi, gamma, i)| {
            let mut rng = CounterRng::for_trial(cfg.seed, mix64(((n as u64) << 40) ^ ((gi as u64) << 32) ^ i as u64));
            let p = match &cfg.vector {
                VectorSource::WorstCase => worst_case_vector(&cfg.cond, n)?,
                VectorSource::RandomC1 => random::c1_vector(&cfg.cond, n, &mut rng)?,
                VectorSource::Process(name) => processes::comparison_vector(&ProcessSpec::new(name.parse()?), n)?,
            };
            let k = cfg.cond.quantile_count(n)?;
            let case = ProofCase::ALL[i % ProofCase::ALL.len()];
            let state = match builders::case_vector(case, n, k, gamma, &mut rng) {
                Ok(y) => builders::state_from_normalized(&y)?,
                Err(_) => builders::random_state(n, gamma, &mut rng)?,
            };
            let c = certify_key_lemma(&state, &p, &cfg.cond, gamma)?;
            Ok([c.to_check(), c.to_check_8n()])
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if let Some(pre) = &cfg.precondition {
        for &n in &cfg.n {
            let p = processes::comparison_vector(&ProcessSpec::new(pre.spec.kind.clone()), n)?;
            let mut rng = CounterRng::new(cfg.seed, n as u64);
            let state = builders::random_state(n, pre.gamma, &mut rng)?;
            let d = potentials::drift_step_bound_check(&state, &p, &pre.spec, pre.gamma, pre.k, pre.r, pre.trials, cfg.seed)?;
            checks.push(d.phi);
            checks.push(d.psi);
        }
    }
    Ok(checks)
}

/// Distinct values of a text column, in first-seen order.
pub fn distinct_text(table: &Table, column: &str) -> Result<Vec<String>> {
    let mut seen = BTreeSet::new();
    Ok(table
        .column_text(column)?
        .into_iter()
        .filter(|v| seen.insert(v.clone()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(process: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(process, vec![16], MRule::PerN(4.0));
        c.repetitions = 3;
        c
    }

    #[test]
    fn key_values() {
        let kv = KeyValues::parse("# c\nn = 4, 8\n\nm=10n # trailing\n").unwrap();
        assert_eq!(kv.list::<usize>("n").unwrap(), vec![4, 8]);
        assert_eq!(kv.get("m"), Some("10n"));
        assert!(KeyValues::parse("n = 1\nn = 2").is_err());
        assert!(KeyValues::parse("novalue").is_err());
        assert!(kv.expect_keys(&["n"]).is_err());
    }

    #[test]
    fn m_rules() {
        assert_eq!("1000".parse::<MRule>().unwrap(), MRule::Absolute(1000));
        assert_eq!("200n".parse::<MRule>().unwrap(), MRule::PerN(200.0));
        assert_eq!("4 n ln n".parse::<MRule>().unwrap(), MRule::NLogN(4.0));
        assert_eq!("nlogn".parse::<MRule>().unwrap(), MRule::NLogN(1.0));
        assert_eq!("50b".parse::<MRule>().unwrap(), MRule::PerBatch(50.0));
        assert!("x".parse::<MRule>().is_err());
        assert_eq!(MRule::NLogN(1.0).resolve(8, None).unwrap(), (8.0 * 8f64.ln()).ceil() as u64);
        assert!(MRule::PerBatch(2.0).resolve(8, None).is_err());
        assert_eq!(MRule::PerBatch(2.0).resolve(8, Some(16)).unwrap(), 32);
    }

    #[test]
    fn config_parse_and_unknown_keys() {
        let text = "process = one-plus-beta\nbeta = 0.1, 0.2, 0.4, 0.8\nn = 64\nm = 10n\nrepetitions = 2\nz = 1, 2\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.points().unwrap().len(), 4);
        assert!(ExperimentConfig::parse(&format!("{text}bogus = 1\n")).is_err());
        assert!(ExperimentConfig::parse("process = one-plus-beta\nn = 64\nm = 10n").is_err());
        assert!(ExperimentConfig::parse("process = two-choice\nn = 64\nm = 10n\nrepetitions = 0").is_err());
    }

    #[test]
    fn batched_weighted_rejected_with_scope() {
        let text = "process = two-choice\nn = 64\nm = 10b\nbatch_over_n = 1\nweights = exp1\n";
        assert!(matches!(ExperimentConfig::parse(text), Err(Error::Scope(_))));
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let mut c = small("one-plus-beta");
        c.beta = vec![0.1, 0.2, 0.4, 0.8];
        c.z = vec![1.0];
        c.gamma = Some(GammaRule::Corollary);
        let t = sweep(&c).unwrap();
        // 4 points × 3 reps × (4 probes at every n)
        assert_eq!(t.len(), 4 * 3 * 4);
        assert_eq!(t.columns().len(), SWEEP_COLUMNS.len() + 2);
        let again = sweep(&c).unwrap();
        assert_eq!(t.to_csv_string().unwrap(), again.to_csv_string().unwrap());
        c.seed = 1;
        assert_ne!(t.to_csv_string().unwrap(), sweep(&c).unwrap().to_csv_string().unwrap());
    }

    #[test]
    fn corollary_gamma_recorded_exactly() {
        let mut c = small("one-plus-beta");
        c.beta = vec![0.5];
        c.gamma = Some(GammaRule::Corollary);
        let t = sweep(&c).unwrap();
        let rt = Table::from_csv_str(&t.to_csv_string().unwrap()).unwrap();
        let g = rt.column_f64("gamma_value").unwrap();
        let (d, e, cc, s) = (
            rt.column_f64("cond_delta").unwrap(),
            rt.column_f64("cond_epsilon").unwrap(),
            rt.column_f64("cond_c").unwrap(),
            rt.column_f64("s").unwrap(),
        );
        for i in 0..rt.len() {
            let cond = ConditionParams::new(d[i], e[i], cc[i]).unwrap();
            let want = potentials::gamma_for_weighted(&cond, cc[i], s[i]).unwrap();
            assert_eq!(crate::table::fmt_decimal(want), crate::table::fmt_decimal(g[i]));
        }
        assert_eq!(g[0], 0.25 * 0.25 / (16.0 * 2.0));
    }

    #[test]
    fn aggregation_is_idempotent() {
        let mut c = small("two-choice");
        c.repetitions = 5;
        let t = sweep(&c).unwrap();
        let a = aggregate(&t, "gap").unwrap();
        let rt = Table::from_csv_str(&t.to_csv_string().unwrap()).unwrap();
        assert_eq!(a, aggregate(&rt, "gap").unwrap());
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|x| x.count == 5));
    }

    #[test]
    fn scaling_report_on_synthetic_table() {
        let mut t = Table::new(sweep_columns(&[]));
        for (pi, beta) in [0.1, 0.2, 0.4].iter().enumerate() {
            for rep in 0..3 {
                let gap = 2.0 * (64f64).ln() / beta + rep as f64 * 0.0;
                let mut row: Vec<Value> = vec![Value::Float(f64::NAN); SWEEP_COLUMNS.len()];
                row[0] = pi.into();
                row[2] = 64usize.into();
                row[6] = (*beta).into();
                row[13] = Value::Text(rep.to_string());
                row[14] = 64u64.into();
                row[15] = gap.into();
                t.push_row(row).unwrap();
            }
        }
        let f = gap_scaling_report(&t, ScalingAxis::Beta).unwrap();
        assert!((f.kappa - 2.0).abs() < 1e-12);
        assert!(f.max_relative_residual < 1e-12);
        assert!((f.spread - 1.0).abs() < 1e-12);
        assert!(gap_scaling_report(&t, ScalingAxis::Delta).is_err());
    }

    #[test]
    fn scaling_report_needs_three_points() {
        let mut c = small("one-plus-beta");
        c.beta = vec![0.5, 1.0];
        let t = sweep(&c).unwrap();
        assert!(matches!(gap_scaling_report(&t, ScalingAxis::Beta), Err(Error::Insufficient(_))));
    }

    #[test]
    fn count_bins_monotone_in_z() {
        let (s, _) = run(&ProcessSpec::new(ProcessKind::OneChoice), 64, 640, 3, &ProbeConfig::final_only()).unwrap();
        let mut prev = (usize::MAX, usize::MAX);
        for i in 1..40 {
            let c = count_bins_outside(&s, i as f64 * 0.25);
            assert!(c.0 <= prev.0 && c.1 <= prev.1);
            prev = c;
        }
        let s = builders::state_from_normalized(&[3.0, -1.0, -1.0, -1.0]).unwrap();
        assert_eq!(count_bins_outside(&s, 2.0), (1, 0));
    }

    #[test]
    fn lower_bound_scope() {
        let spec = ProcessSpec::new(ProcessKind::two_choice());
        assert!(matches!(lower_bound_trials(&spec, 16, 1.0, 0.1, 2, 0), Err(Error::Scope(_))));
        assert!(weighted_lower_bound_trials(&spec, 16, 2, 0).is_err());
        let spec = ProcessSpec::new("twinning:delta=0.5".parse().unwrap());
        let r = lower_bound_trials(&spec, 64, 1.0, 0.0, 4, 0).unwrap();
        assert_eq!(r.pass_fraction(), 1.0);
        assert_eq!(r.gaps.len(), 4);
    }

    #[test]
    fn height_constant_fit() {
        let counts = vec![10, 12, 9, 11, 10];
        let c2 = fit_height_constant(&counts, 100, 2.0).unwrap();
        let q = quantile(&[10.0, 12.0, 9.0, 11.0, 10.0], 0.05);
        assert!((0.5 * 100.0 * (-c2 * 2.0f64).exp() - q).abs() < 1e-9);
        assert!(fit_height_constant(&[0, 0, 0], 100, 1.0).is_err());
    }

    #[test]
    fn unit_weights_s_is_one() {
        assert_eq!(effective_s(&WeightDistribution::unit()).unwrap(), 1.0);
        for i in 0..=2000 {
            let x = -1.0 + i as f64 / 1000.0;
            assert!(x.exp() <= 1.0 + x + x * x);
        }
    }

    #[test]
    fn default_conditions_hold() {
        for name in ["two-choice", "one-plus-beta:beta=0.3", "d-choice:d=3", "quantile:delta=0.25", "reset-memory", "twinning:delta=0.5"] {
            let kind: ProcessKind = name.parse().unwrap();
            let cond = default_conditions(&kind, 64).unwrap().unwrap();
            let p = processes::comparison_vector(&ProcessSpec::new(kind), 64).unwrap();
            assert!(crate::vectors::check_c1(&p, &cond).unwrap(), "{name}");
            assert!(crate::vectors::check_c2(&p, cond.c_cap), "{name}");
        }
        assert!(default_conditions(&ProcessKind::OneChoice, 8).unwrap().is_none());
    }

    #[test]
    fn key_lemma_sweep_small() {
        let s = key_lemma_sweep(700, 1).unwrap();
        assert_eq!(s.failures(), 0);
        assert_eq!(s.failures_8n(), 0);
        assert_eq!(s.by_case.len(), ProofCase::ALL.len());
        assert_eq!(s, key_lemma_sweep(700, 1).unwrap());
    }

    #[test]
    fn drift_check_config() {
        let c = DriftCheckConfig::parse("n = 8, 16\ndelta = 0.25\nepsilon = 0.5\nvector = two-choice\ninstances = 7\n").unwrap();
        let checks = drift_check(&c).unwrap();
        assert_eq!(checks.len(), 2 * 4 * 7 * 2);
        assert!(checks.iter().all(|c| c.pass));
        // the one-choice vector has no bias and violates C1
        let c = DriftCheckConfig::parse("n = 8\ndelta = 0.25\nepsilon = 0.5\nvector = one-choice\n").unwrap();
        assert!(matches!(drift_check(&c), Err(Error::PreconditionC1 { .. })));
        let c = DriftCheckConfig::parse(
            "n = 16\ndelta = 0.5\nepsilon = 0.5\nvector = c1-random\ninstances = 2\nprocess = twinning:delta=0.5\nk = 5\ndrift_gamma = 0.05\ntrials = 4000\n",
        )
        .unwrap();
        let checks = drift_check(&c).unwrap();
        assert_eq!(checks.len(), 4 * 2 * 2 + 2);
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    }

    #[test]
    fn graph_config() {
        let text = "process = graphical\ngraph = random-regular:d=4:seed=3\nn = 32\nm = 2n\nrepetitions = 2\nweights = exp1\n";
        let c = ExperimentConfig::parse(text).unwrap();
        let t = sweep(&c).unwrap();
        assert_eq!(distinct_text(&t, "process").unwrap(), vec!["graphical".to_string()]);
        assert!(ExperimentConfig::parse("process = graphical\nn = 32\nm = 2n\n").is_err());
    }
}
