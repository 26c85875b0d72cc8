//! Pass/fail records shared by the certifiers and Monte-Carlo checks.

use std::fmt;

/// Outcome of comparing a measured or computed value against a bound.
///
/// `slack = bound - value`; a check passes when `value <= bound + margin`,
/// where `margin` is the statistical allowance (three standard errors for
/// Monte-Carlo estimates, zero otherwise).
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub label: String,
    pub inputs_hash: u64,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

impl CheckResult {
    pub fn new(label: impl Into<String>, inputs_hash: u64, value: f64, bound: f64, margin: f64) -> Self {
        let pass = value <= bound + margin;
        Self {
            label: label.into(),
            inputs_hash,
            value,
            bound,
            margin,
            pass,
        }
    }

    pub fn slack(&self) -> f64 {
        self.bound - self.value
    }

    pub const CSV_HEADER: [&'static str; 6] = ["label", "inputs_hash", "value", "bound", "slack", "pass"];

    pub fn csv_fields(&self) -> [String; 6] {
        [
            self.label.clone(),
            format!("{:016x}", self.inputs_hash),
            crate::table::fmt_decimal(self.value),
            crate::table::fmt_decimal(self.bound),
            crate::table::fmt_decimal(self.slack()),
            self.pass.to_string(),
        ]
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} (value {:.6e}, bound {:.6e}, slack {:.3e})",
            self.label,
            if self.pass { "pass" } else { "FAIL" },
            self.value,
            self.bound,
            self.slack()
        )
    }
}

/// FNV-1a over the bit patterns of the inputs; stable across platforms.
#[derive(Clone, Copy, Debug)]
pub struct InputHasher(u64);

impl Default for InputHasher {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl InputHasher {
    pub fn u64(mut self, x: u64) -> Self {
        for b in x.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
        self
    }

    pub fn f64(self, x: f64) -> Self {
        self.u64(x.to_bits())
    }

    pub fn slice(mut self, xs: &[f64]) -> Self {
        self = self.u64(xs.len() as u64);
        for &x in xs {
            self = self.f64(x);
        }
        self
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Linear-interpolated quantile of an unsorted sample (`q` in [0,1]).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}
