//! Load vectors, normalization and rank order.
//!
//! Bins are identified by `0..n`. Ranks are also zero-based: rank 0 is the
//! heaviest bin. Among equal loads the smaller bin id takes the smaller rank,
//! so the rank order is a total order and every rank threshold is well-defined.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
struct ExactTally {
    loads: Vec<u64>,
    total: u64,
}

/// Loads of `n` bins together with their non-increasing order.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadState {
    loads: Vec<f64>,
    total: f64,
    // Neumaier compensation term for `total`.
    comp: f64,
    step: u64,
    sorted: Vec<usize>,
    exact: Option<ExactTally>,
}

impl LoadState {
    /// `n` empty bins.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::NoBins);
        }
        Ok(Self {
            loads: vec![0.0; n],
            total: 0.0,
            comp: 0.0,
            step: 0,
            sorted: (0..n).collect(),
            exact: None,
        })
    }

    /// `n` empty bins that additionally keep integer tallies; only integral
    /// weights are accepted and [`LoadState::verify_exact`] compares the two.
    pub fn new_exact(n: usize) -> Result<Self> {
        let mut s = Self::new(n)?;
        s.exact = Some(ExactTally {
            loads: vec![0; n],
            total: 0,
        });
        Ok(s)
    }

    /// A state with the given loads (any order). The step counter is zero.
    pub fn from_loads(loads: Vec<f64>) -> Result<Self> {
        if loads.is_empty() {
            return Err(Error::NoBins);
        }
        if let Some(&w) = loads.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidWeight(w));
        }
        let mut s = Self {
            total: 0.0,
            comp: 0.0,
            step: 0,
            sorted: (0..loads.len()).collect(),
            loads,
            exact: None,
        };
        for i in 0..s.loads.len() {
            s.add_to_total(s.loads[i]);
        }
        s.resort();
        Ok(s)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.loads.len()
    }

    #[inline]
    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    #[inline]
    pub fn load(&self, bin: usize) -> f64 {
        self.loads[bin]
    }

    #[inline]
    pub fn total_weight(&self) -> f64 {
        self.total + self.comp
    }

    /// Number of balls allocated so far.
    #[inline]
    pub fn step(&self) -> u64 {
        self.step
    }

    #[inline]
    pub fn average(&self) -> f64 {
        self.total_weight() / self.n() as f64
    }

    /// Bin ids in non-increasing load order.
    #[inline]
    pub fn sorted_index(&self) -> &[usize] {
        &self.sorted
    }

    /// Bin holding rank `rank`.
    #[inline]
    pub fn bin_at_rank(&self, rank: usize) -> usize {
        self.sorted[rank]
    }

    /// `a` is ranked before `b`.
    #[inline]
    fn precedes(&self, a: usize, b: usize) -> bool {
        let (la, lb) = (self.loads[a], self.loads[b]);
        la > lb || (la == lb && a < b)
    }

    /// Rank of `bin`, found by binary search over the sorted order.
    #[inline]
    pub fn rank_of(&self, bin: usize) -> usize {
        let r = self.sorted.partition_point(|&j| self.precedes(j, bin));
        debug_assert_eq!(self.sorted[r], bin);
        r
    }

    /// Inverse permutation of [`LoadState::sorted_index`].
    pub fn ranks(&self) -> Vec<usize> {
        let mut rank = vec![0; self.n()];
        for (r, &b) in self.sorted.iter().enumerate() {
            rank[b] = r;
        }
        rank
    }

    /// Adds `weight` to `bin` and moves the bin to its new rank.
    pub fn apply_allocation(&mut self, bin: usize, weight: f64) -> Result<()> {
        let n = self.n();
        if bin >= n {
            return Err(Error::BinOutOfRange { bin, n });
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidWeight(weight));
        }
        if let Some(ex) = &mut self.exact {
            if weight.fract() != 0.0 {
                return Err(Error::NonIntegralWeight(weight));
            }
            ex.loads[bin] += weight as u64;
            ex.total += weight as u64;
        }
        let old = self.rank_of(bin);
        self.loads[bin] += weight;
        self.add_to_total(weight);
        self.step += 1;
        // Loads only grow, so the bin can only move toward rank 0.
        let new = self.sorted[..old].partition_point(|&j| self.precedes(j, bin));
        if new < old {
            self.sorted.copy_within(new..old, new + 1);
            self.sorted[new] = bin;
        }
        Ok(())
    }

    #[inline]
    fn add_to_total(&mut self, w: f64) {
        let t = self.total + w;
        if self.total.abs() >= w.abs() {
            self.comp += (self.total - t) + w;
        } else {
            self.comp += (w - t) + self.total;
        }
        self.total = t;
    }

    fn resort(&mut self) {
        let loads = &self.loads;
        self.sorted.sort_by(|&a, &b| {
            loads[b]
                .partial_cmp(&loads[a])
                .expect("finite loads")
                .then(a.cmp(&b))
        });
    }

    /// Full re-sort oracle: true iff the incrementally maintained order equals
    /// a fresh sort.
    pub fn order_is_consistent(&self) -> bool {
        let mut fresh = self.clone();
        fresh.resort();
        fresh.sorted == self.sorted
    }

    /// Normalized load `x_i - W/n` of `bin`.
    #[inline]
    pub fn normalized(&self, bin: usize) -> f64 {
        self.loads[bin] - self.average()
    }

    /// Normalized loads in bin order.
    pub fn normalized_loads(&self) -> Vec<f64> {
        let avg = self.average();
        self.loads.iter().map(|x| x - avg).collect()
    }

    /// Normalized loads in rank order (non-increasing).
    pub fn normalized_sorted(&self) -> Vec<f64> {
        let avg = self.average();
        self.sorted.iter().map(|&b| self.loads[b] - avg).collect()
    }

    pub fn max_load(&self) -> f64 {
        self.loads[self.sorted[0]]
    }

    pub fn min_load(&self) -> f64 {
        self.loads[self.sorted[self.n() - 1]]
    }

    /// Maximum load minus average load. Never negative.
    pub fn gap(&self) -> f64 {
        (self.max_load() - self.average()).max(0.0)
    }

    /// `max_i |x_i - W/n|`.
    pub fn max_abs_normalized(&self) -> f64 {
        let avg = self.average();
        (self.max_load() - avg).abs().max((self.min_load() - avg).abs())
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Integer loads when in exact mode.
    pub fn exact_loads(&self) -> Option<&[u64]> {
        self.exact.as_ref().map(|e| e.loads.as_slice())
    }

    /// In exact mode: whether the floating loads and total equal the integer
    /// tallies. Always true outside exact mode.
    pub fn verify_exact(&self) -> bool {
        match &self.exact {
            None => true,
            Some(ex) => {
                ex.total as f64 == self.total_weight()
                    && ex
                        .loads
                        .iter()
                        .zip(&self.loads)
                        .all(|(&e, &x)| e as f64 == x)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn new_state_is_empty() {
        let s = LoadState::new(4).unwrap();
        assert_eq!(s.loads(), &[0.0; 4]);
        assert_eq!(s.gap(), 0.0);
        assert_eq!(s.step(), 0);
        assert_eq!(s.sorted_index(), &[0, 1, 2, 3]);

        let one = LoadState::new(1).unwrap();
        assert_eq!(one.ranks(), vec![0]);

        let eight = LoadState::new(8).unwrap();
        assert_eq!(eight.normalized_loads().iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn zero_bins_rejected() {
        assert!(matches!(LoadState::new(0), Err(Error::NoBins)));
    }

    #[test]
    fn allocation_reorders() {
        let mut s = LoadState::new(2).unwrap();
        s.apply_allocation(1, 1.0).unwrap();
        assert_eq!(s.loads(), &[0.0, 1.0]);
        assert_eq!(s.sorted_index(), &[1, 0]);

        let mut s = LoadState::from_loads(vec![3.0, 3.0]).unwrap();
        s.apply_allocation(0, 1.0).unwrap();
        assert_eq!(s.sorted_index(), &[0, 1]);

        let mut s = LoadState::from_loads(vec![5.0, 5.0]).unwrap();
        assert_eq!(s.sorted_index(), &[0, 1]);
        s.apply_allocation(0, 0.0).unwrap();
        assert_eq!(s.sorted_index(), &[0, 1]);
        s.apply_allocation(1, 0.0).unwrap();
        assert_eq!(s.sorted_index(), &[0, 1]);
    }

    #[test]
    fn allocation_errors() {
        let mut s = LoadState::new(3).unwrap();
        assert!(matches!(
            s.apply_allocation(3, 1.0),
            Err(Error::BinOutOfRange { bin: 3, n: 3 })
        ));
        assert!(matches!(s.apply_allocation(0, -1.0), Err(Error::InvalidWeight(_))));
        assert!(matches!(s.apply_allocation(0, f64::NAN), Err(Error::InvalidWeight(_))));
        let mut e = LoadState::new_exact(3).unwrap();
        assert!(matches!(e.apply_allocation(0, 0.5), Err(Error::NonIntegralWeight(_))));
    }

    #[test]
    fn gap_and_max_abs() {
        let s = LoadState::from_loads(vec![2.0; 4]).unwrap();
        assert_eq!(s.gap(), 0.0);
        let s = LoadState::from_loads(vec![4.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.gap(), 3.0);
        assert_eq!(s.max_abs_normalized(), 3.0);
        let s = LoadState::from_loads(vec![3.0, 1.0]).unwrap();
        assert_eq!(s.gap(), 1.0);
        let s = LoadState::from_loads(vec![2.0, 2.0]).unwrap();
        assert_eq!(s.max_abs_normalized(), 0.0);
        let s = LoadState::from_loads(vec![0.0, 4.0]).unwrap();
        assert_eq!(s.max_abs_normalized(), 2.0);
    }

    #[test]
    fn incremental_order_matches_resort() {
        let mut rng = CounterRng::new(11, 0);
        for n in [1usize, 2, 3, 7, 16, 64] {
            let mut s = LoadState::new(n).unwrap();
            for t in 0..10_000 {
                let bin = rng.index(n);
                // mix unit, zero and fractional weights to exercise ties
                let w = match t % 3 {
                    0 => 1.0,
                    1 => 0.0,
                    _ => (rng.below(4) as f64) * 0.5,
                };
                s.apply_allocation(bin, w).unwrap();
                if t % 97 == 0 || n <= 3 {
                    assert!(s.order_is_consistent(), "n={n} t={t}");
                }
            }
            assert!(s.order_is_consistent());
            let ranks = s.ranks();
            for b in 0..n {
                assert_eq!(s.rank_of(b), ranks[b]);
                assert_eq!(s.sorted_index()[ranks[b]], b);
            }
        }
    }

    #[test]
    fn exact_mode_agrees_with_floats() {
        let mut rng = CounterRng::new(2, 0);
        let mut s = LoadState::new_exact(10).unwrap();
        let mut expected = 0u64;
        for _ in 0..5_000 {
            let w = rng.below(3);
            expected += w;
            s.apply_allocation(rng.index(10), w as f64).unwrap();
        }
        assert!(s.verify_exact());
        assert_eq!(s.total_weight(), expected as f64);
        assert_eq!(s.exact_loads().unwrap().iter().sum::<u64>(), expected);
    }

    #[test]
    fn float_conservation_within_tolerance() {
        let mut rng = CounterRng::new(3, 0);
        let mut s = LoadState::new(32).unwrap();
        let mut ws = Vec::new();
        for _ in 0..20_000 {
            let w = -(1.0 - rng.unit()).ln() * 3.7;
            ws.push(w);
            s.apply_allocation(rng.index(32), w).unwrap();
        }
        let sum_loads: f64 = s.loads().iter().sum();
        let w = s.total_weight();
        assert!((w - sum_loads).abs() <= 1e-9 * (1.0 + w.abs()));
        let sum_ws: f64 = ws.iter().sum();
        assert!((w - sum_ws).abs() <= 1e-9 * (1.0 + w.abs()));
        let norm: f64 = s.normalized_loads().iter().sum();
        assert!(norm.abs() <= 1e-9 * (1.0 + w.abs()));
    }
}
