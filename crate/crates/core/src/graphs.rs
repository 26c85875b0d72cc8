//! Regular graphs, conductance and the graphical allocation vector.
//!
//! Vertices are `0..n` in memory and `1..=n` in graph files.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::load::LoadState;
use crate::rng::CounterRng;
use crate::vectors::ProbabilityVector;

/// Largest `n` accepted by [`conductance_exact`].
pub const EXACT_CONDUCTANCE_MAX_N: usize = 24;

const RANDOM_REGULAR_RETRIES: usize = 2_000;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    Complete,
    Cycle,
    /// Requires `n = 2^k`.
    Hypercube,
    RandomRegular { d: usize, seed: u64 },
    /// `k x k` wrap-around grid; requires `n = k^2` with `k >= 3`.
    Torus,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphKind::Complete => f.write_str("complete"),
            GraphKind::Cycle => f.write_str("cycle"),
            GraphKind::Hypercube => f.write_str("hypercube"),
            GraphKind::RandomRegular { d, seed } => write!(f, "random-regular:d={d}:seed={seed}"),
            GraphKind::Torus => f.write_str("torus"),
        }
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    /// `complete`, `cycle`, `hypercube`, `torus` or
    /// `random-regular:d=<d>:seed=<seed>` (seed defaults to 0).
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let name = parts.next().unwrap_or_default();
        let kind = match name {
            "complete" => GraphKind::Complete,
            "cycle" => GraphKind::Cycle,
            "hypercube" => GraphKind::Hypercube,
            "torus" => GraphKind::Torus,
            "random-regular" => {
                let (mut d, mut seed) = (None, 0u64);
                for p in parts.by_ref() {
                    let bad = || Error::Config(format!("graph {s:?}: bad parameter {p:?}"));
                    let (k, v) = p.split_once('=').ok_or_else(bad)?;
                    match k {
                        "d" => d = Some(v.parse().map_err(|_| bad())?),
                        "seed" => seed = v.parse().map_err(|_| bad())?,
                        _ => return Err(bad()),
                    }
                }
                let d = d.ok_or_else(|| Error::Config(format!("graph {s:?} needs d=<degree>")))?;
                return Ok(GraphKind::RandomRegular { d, seed });
            }
            _ => return Err(Error::Config(format!("unknown graph kind {s:?}"))),
        };
        match parts.next() {
            None => Ok(kind),
            Some(_) => Err(Error::Config(format!("graph {name:?} takes no parameters"))),
        }
    }
}

/// A connected `d`-regular simple graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegularGraph {
    n: usize,
    d: usize,
    edges: Vec<(u32, u32)>,
    adj: Vec<Vec<u32>>,
}

impl RegularGraph {
    /// Validates regularity, simplicity and connectivity.
    pub fn from_edges(n: usize, d: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::NoBins);
        }
        let mut adj = vec![Vec::with_capacity(d); n];
        let mut seen = HashSet::with_capacity(edges.len());
        let mut out = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!("edge ({}, {}) out of range", u + 1, v + 1)));
            }
            if u == v {
                return Err(Error::Graph(format!("self-loop at vertex {}", u + 1)));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(Error::Graph(format!("duplicate edge ({}, {})", key.0 + 1, key.1 + 1)));
            }
            adj[u].push(v as u32);
            adj[v].push(u as u32);
            out.push((key.0 as u32, key.1 as u32));
        }
        if let Some(v) = (0..n).find(|&v| adj[v].len() != d) {
            return Err(Error::Graph(format!(
                "vertex {} has degree {}, expected {d}",
                v + 1,
                adj[v].len()
            )));
        }
        let g = Self {
            n,
            d,
            edges: out,
            adj,
        };
        if !g.is_connected() {
            return Err(Error::Graph("graph is disconnected".into()));
        }
        Ok(g)
    }

    pub fn build(kind: GraphKind, n: usize) -> Result<Self> {
        match kind {
            GraphKind::Complete => {
                if n < 2 {
                    return Err(Error::Graph("complete graph needs n >= 2".into()));
                }
                let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
                Self::from_edges(n, n - 1, edges)
            }
            GraphKind::Cycle => {
                if n < 3 {
                    return Err(Error::Graph("cycle needs n >= 3".into()));
                }
                Self::from_edges(n, 2, (0..n).map(|u| (u, (u + 1) % n)).collect())
            }
            GraphKind::Hypercube => {
                if n < 2 || !n.is_power_of_two() {
                    return Err(Error::Graph(format!("hypercube needs n = 2^k, got {n}")));
                }
                let k = n.trailing_zeros() as usize;
                let edges = (0..n)
                    .flat_map(|u| (0..k).map(move |b| (u, u ^ (1 << b))).filter(|&(u, v)| u < v))
                    .collect();
                Self::from_edges(n, k, edges)
            }
            GraphKind::Torus => {
                let k = (n as f64).sqrt().round() as usize;
                if k * k != n || k < 3 {
                    return Err(Error::Graph(format!("torus needs n = k^2 with k >= 3, got {n}")));
                }
                let id = |r: usize, c: usize| (r % k) * k + (c % k);
                let edges = (0..k)
                    .flat_map(|r| (0..k).flat_map(move |c| [(id(r, c), id(r, c + 1)), (id(r, c), id(r + 1, c))]))
                    .collect();
                Self::from_edges(n, 4, edges)
            }
            GraphKind::RandomRegular { d, seed } => random_regular(n, d, seed),
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    /// Each undirected edge once, as `(min, max)`.
    #[inline]
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adj[v]
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.adj[u] {
                let v = v as usize;
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// Number of edges with exactly one endpoint in `set`.
    pub fn cut_size(&self, set: &[bool]) -> usize {
        self.edges
            .iter()
            .filter(|&&(u, v)| set[u as usize] != set[v as usize])
            .count()
    }

    pub fn to_file_string(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.d);
        for &(u, v) in &self.edges {
            writeln!(s, "{} {}", u + 1, v + 1).unwrap();
        }
        s
    }

    /// Parses `n d` followed by one 1-indexed `u v` pair per line. Blank
    /// lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let nums = |lineno: usize, l: &str| -> Result<(usize, usize)> {
            let mut it = l.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => Ok((a, b)),
                _ => Err(Error::Graph(format!("line {}: expected two integers, got {l:?}", lineno + 1))),
            }
        };
        let (i, header) = lines.next().ok_or_else(|| Error::Graph("empty graph file".into()))?;
        let (n, d) = nums(i, header)?;
        let mut edges = Vec::new();
        for (i, l) in lines {
            let (u, v) = nums(i, l)?;
            if u == 0 || v == 0 {
                return Err(Error::Graph(format!("line {}: vertices are 1-indexed", i + 1)));
            }
            edges.push((u - 1, v - 1));
        }
        Self::from_edges(n, d, edges)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&s)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }
}

/// Configuration model, rejecting multigraphs and disconnected outcomes.
fn random_regular(n: usize, d: usize, seed: u64) -> Result<RegularGraph> {
    if d == 0 || d >= n || (n * d) % 2 == 1 {
        return Err(Error::Graph(format!("no simple {d}-regular graph on {n} vertices")));
    }
    let mut rng = CounterRng::new(seed, 0x6772_6170_68);
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    'attempt: for _ in 0..RANDOM_REGULAR_RETRIES {
        for i in (1..stubs.len()).rev() {
            let j = rng.index(i + 1);
            stubs.swap(i, j);
        }
        let mut seen = HashSet::with_capacity(n * d / 2);
        let mut edges = Vec::with_capacity(n * d / 2);
        for pair in stubs.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v || !seen.insert((u.min(v), u.max(v))) {
                continue 'attempt;
            }
            edges.push((u, v));
        }
        match RegularGraph::from_edges(n, d, edges) {
            Ok(g) => return Ok(g),
            Err(Error::Graph(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Graph(format!(
        "no connected simple {d}-regular graph on {n} vertices after {RANDOM_REGULAR_RETRIES} attempts"
    )))
}

/// Exact conductance as a reduced fraction `(cut, |S|·d)` and its value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactConductance {
    pub cut: usize,
    pub size: usize,
    pub phi: f64,
}

/// Minimum of `cut(S)/(|S|·d)` over all `S` with `1 <= |S| <= n/2`, by
/// Gray-code enumeration of every subset.
pub fn conductance_exact(g: &RegularGraph) -> Result<ExactConductance> {
    let n = g.n;
    if n > EXACT_CONDUCTANCE_MAX_N {
        return Err(Error::GraphTooLarge {
            n,
            max: EXACT_CONDUCTANCE_MAX_N,
        });
    }
    let nbr: Vec<u32> = (0..n)
        .map(|v| g.adj[v].iter().fold(0u32, |m, &u| m | (1 << u)))
        .collect();
    let high_bits = n.saturating_sub(10).min(8);
    let low_bits = n - high_bits;
    let half = n / 2;
    // (cut, size) with the smallest cut/size ratio; (1, 0) stands for +inf
    let better = |a: (usize, usize), b: (usize, usize)| a.0 * b.1 < b.0 * a.1;
    let best = (0u32..1 << high_bits)
        .into_par_iter()
        .map(|h| {
            let mut set = h << low_bits;
            let mut cut: usize = (0..n)
                .filter(|&v| set >> v & 1 == 1)
                .map(|v| (nbr[v] & !set).count_ones() as usize)
                .sum();
            let mut best = (1usize, 0usize);
            let consider = |set: u32, cut: usize, best: &mut (usize, usize)| {
                let size = set.count_ones() as usize;
                if size >= 1 && size <= half && better((cut, size), *best) {
                    *best = (cut, size);
                }
            };
            consider(set, cut, &mut best);
            for i in 1u32..1 << low_bits {
                let v = i.trailing_zeros();
                let inside = (nbr[v as usize] & set).count_ones() as usize;
                if set >> v & 1 == 0 {
                    cut = cut + g.d - 2 * inside;
                } else {
                    cut = cut + 2 * inside - g.d;
                }
                set ^= 1 << v;
                consider(set, cut, &mut best);
            }
            best
        })
        .reduce(|| (1, 0), |a, b| if better(b, a) { b } else { a });
    if best.1 == 0 {
        return Err(Error::Graph("conductance needs n >= 2".into()));
    }
    let (cut, size) = best;
    Ok(ExactConductance {
        cut,
        size,
        phi: cut as f64 / (size * g.d) as f64,
    })
}

/// Closed-form conductance of `K_n`: `(n − ⌊n/2⌋)/(n − 1)`.
pub fn complete_graph_conductance(n: usize) -> f64 {
    (n - n / 2) as f64 / (n - 1) as f64
}

/// Two-sided estimate `lower <= φ <= upper`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConductanceBounds {
    pub lower: f64,
    pub upper: f64,
    /// Second eigenvalue of the random-walk matrix, if power iteration
    /// converged.
    pub lambda2: Option<f64>,
    pub iterations: usize,
}

/// Spectral lower bound and sweep-cut upper bound.
///
/// Power iteration runs on the lazy walk `(I + A/d)/2` restricted to vectors
/// orthogonal to the constant vector. When it converges, its eigenvalue
/// estimate `μ` plus the residual bounds the top eigenvalue there, so
/// `1 − (μ + residual)` is the Cheeger lower bound `(1 − λ₂)/2`. Otherwise the
/// lower bound falls back to `2/(dn)`, which holds for any connected graph
/// because every proper cut has at least one edge.
pub fn conductance_bounds(g: &RegularGraph) -> ConductanceBounds {
    let n = g.n;
    let d = g.d as f64;
    let trivial = 2.0 / (d * n as f64);
    if n < 2 {
        return ConductanceBounds {
            lower: 0.0,
            upper: 0.0,
            lambda2: None,
            iterations: 0,
        };
    }
    let mut rng = CounterRng::new(0x5eed, n as u64);
    let mut x: Vec<f64> = (0..n).map(|_| rng.unit() - 0.5).collect();
    let deflate_normalize = |x: &mut [f64]| {
        let mean = x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v -= mean);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
    };
    deflate_normalize(&mut x);
    let apply = |x: &[f64], y: &mut [f64]| {
        for v in 0..n {
            let s: f64 = g.adj[v].iter().map(|&u| x[u as usize]).sum();
            y[v] = 0.5 * x[v] + 0.5 * s / d;
        }
    };
    let mut y = vec![0.0; n];
    let mut mu = 0.0;
    let mut converged = None;
    let mut iterations = 0;
    for it in 1..=POWER_MAX_ITERS {
        iterations = it;
        apply(&x, &mut y);
        mu = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        let residual = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (b - mu * a).powi(2))
            .sum::<f64>()
            .sqrt();
        std::mem::swap(&mut x, &mut y);
        deflate_normalize(&mut x);
        if residual < POWER_TOL {
            converged = Some(residual);
            break;
        }
    }
    let upper = sweep_cut(g, &x);
    let (lower, lambda2) = match converged {
        Some(r) => ((1.0 - (mu + r)).max(trivial), Some(2.0 * mu - 1.0)),
        None => (trivial, None),
    };
    ConductanceBounds {
        lower: lower.min(upper),
        upper,
        lambda2,
        iterations,
    }
}

/// Best ratio among prefixes (from either end) of the vertices sorted by `x`.
fn sweep_cut(g: &RegularGraph, x: &[f64]) -> f64 {
    let n = g.n;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut best = f64::INFINITY;
    for dir in 0..2 {
        if dir == 1 {
            order.reverse();
        }
        let mut inside = vec![false; n];
        let mut cut: isize = 0;
        for (k, &v) in order.iter().take(n / 2).enumerate() {
            let nb_in = g.adj[v].iter().filter(|&&u| inside[u as usize]).count() as isize;
            cut += g.d as isize - 2 * nb_in;
            inside[v] = true;
            best = best.min(cut as f64 / ((k + 1) * g.d) as f64);
        }
    }
    best
}

/// Probability that the rank-`i` bin receives the next ball when a uniform
/// edge is sampled and the lesser-loaded endpoint (higher id on ties) wins.
pub fn graphical_allocation_vector(g: &RegularGraph, state: &LoadState) -> Result<ProbabilityVector> {
    if g.n != state.n() {
        return Err(Error::LengthMismatch {
            left: g.n,
            right: state.n(),
        });
    }
    let mut counts = vec![0usize; g.n];
    for &(u, v) in &g.edges {
        let w = lesser_loaded(state, u as usize, v as usize);
        counts[state.rank_of(w)] += 1;
    }
    let m = g.edges.len() as f64;
    ProbabilityVector::new(counts.iter().map(|&c| c as f64 / m).collect())
}

/// Prefix sums of `p` at most `(1 − φ)k/n` for `k <= n/2`, suffix sums over
/// the last `t <= n/2` ranks at least `(1 + φ)t/n`, and no entry above `2/n`.
///
/// Conductance only constrains sets of at most `n/2` vertices, so for odd
/// `n` the middle rank is covered by neither side.
pub fn expansion_bounds_hold(p: &ProbabilityVector, phi: f64) -> bool {
    let n = p.len();
    let nf = n as f64;
    let tol = 1e-12;
    if p.max_entry() > 2.0 / nf + tol {
        return false;
    }
    let prefix = p.prefix_sums();
    (1..=n).all(|k| {
        let t = n - k + 1;
        if 2 * k <= n {
            prefix[k - 1] <= (1.0 - phi) * k as f64 / nf + tol
        } else if 2 * t > n {
            true
        } else {
            let suffix = 1.0 - if k >= 2 { prefix[k - 2] } else { 0.0 };
            suffix >= (1.0 + phi) * t as f64 / nf - tol
        }
    })
}

/// The endpoint with the smaller load, the higher id on ties. Equivalently
/// the endpoint with the larger rank.
#[inline]
pub fn lesser_loaded(state: &LoadState, u: usize, v: usize) -> usize {
    let (lu, lv) = (state.load(u), state.load(v));
    if lu < lv || (lu == lv && u > v) {
        u
    } else {
        v
    }
}
