//! Mean-one weight distributions with a finite moment generating function.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Exp1, Geometric, Poisson};

use crate::check::{mean_and_se, CheckResult, InputHasher};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Largest `mgf(2ζ)` accepted when picking ζ for the discrete families.
const ZETA_MGF_CAP: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightKind {
    Unit,
    /// Exponential with mean 1.
    Exponential,
    /// `p·G` with `G` geometric on `{1, 2, ...}` with success probability `p`.
    ScaledGeometric { p: f64 },
    /// `X/λ` with `X ~ Poisson(λ)`.
    ScaledPoisson { lambda: f64 },
}

/// A weight distribution together with its MGF parameter ζ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightDistribution {
    kind: WeightKind,
    zeta: f64,
}

impl WeightDistribution {
    pub fn unit() -> Self {
        Self {
            kind: WeightKind::Unit,
            zeta: 1.0,
        }
    }

    pub fn exponential() -> Self {
        // 2ζ = 1/2 keeps mgf(2ζ) inside the convergence region z < 1.
        Self {
            kind: WeightKind::Exponential,
            zeta: 0.25,
        }
    }

    pub fn scaled_geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Parameter(format!("geometric p = {p} not in (0,1]")));
        }
        Self::with_dyadic_zeta(WeightKind::ScaledGeometric { p })
    }

    pub fn scaled_poisson(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Parameter(format!("poisson lambda = {lambda} must be positive")));
        }
        Self::with_dyadic_zeta(WeightKind::ScaledPoisson { lambda })
    }

    fn with_dyadic_zeta(kind: WeightKind) -> Result<Self> {
        let mut d = Self { kind, zeta: 1.0 };
        for _ in 0..60 {
            match d.mgf(2.0 * d.zeta) {
                Ok(v) if v <= ZETA_MGF_CAP => return Ok(d),
                _ => d.zeta /= 2.0,
            }
        }
        Err(Error::Parameter(format!("no dyadic zeta found for {kind:?}")))
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn is_unit(&self) -> bool {
        self.kind == WeightKind::Unit
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            WeightKind::Unit | WeightKind::Exponential => 1.0,
            // E[G] = 1/p
            WeightKind::ScaledGeometric { p } => {
                let mean_g = 1.0 / p;
                p * mean_g
            }
            // E[X] = λ
            WeightKind::ScaledPoisson { lambda } => {
                let mean_x = lambda;
                mean_x / lambda
            }
        }
    }

    pub fn sample(&self, rng: &mut CounterRng) -> f64 {
        match self.kind {
            WeightKind::Unit => 1.0,
            WeightKind::Exponential => Exp1.sample(rng),
            WeightKind::ScaledGeometric { p } => {
                if p == 1.0 {
                    return 1.0;
                }
                // rand_distr counts failures before the first success
                let g = Geometric::new(p).expect("validated p").sample(rng) + 1;
                p * g as f64
            }
            WeightKind::ScaledPoisson { lambda } => {
                let x: f64 = Poisson::new(lambda).expect("validated lambda").sample(rng);
                x / lambda
            }
        }
    }

    /// Closed-form `E[e^{zW}]`.
    pub fn mgf(&self, z: f64) -> Result<f64> {
        let diverge = || Error::MgfDivergent {
            dist: self.to_string(),
            z,
        };
        if z == 0.0 {
            return Ok(1.0);
        }
        let v = match self.kind {
            WeightKind::Unit => z.exp(),
            WeightKind::Exponential => {
                if z >= 1.0 {
                    return Err(diverge());
                }
                1.0 / (1.0 - z)
            }
            WeightKind::ScaledGeometric { p } => {
                let q = (1.0 - p) * (z * p).exp();
                if q >= 1.0 {
                    return Err(diverge());
                }
                p * (z * p).exp() / (1.0 - q)
            }
            WeightKind::ScaledPoisson { lambda } => (lambda * ((z / lambda).exp() - 1.0)).exp(),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(diverge())
        }
    }

    /// `E[e^{zW}]` by direct quadrature or series summation. Independent of
    /// [`WeightDistribution::mgf`]; used to cross-check the closed forms.
    pub fn mgf_numeric(&self, z: f64) -> Result<f64> {
        match self.kind {
            WeightKind::Unit => Ok(z.exp()),
            WeightKind::Exponential => {
                if z >= 1.0 {
                    return Err(Error::MgfDivergent {
                        dist: self.to_string(),
                        z,
                    });
                }
                let upper = 80.0 / (1.0 - z);
                Ok(adaptive_simpson(&|w: f64| ((z - 1.0) * w).exp(), 0.0, upper, 1e-12))
            }
            WeightKind::ScaledGeometric { p } => {
                let q = (1.0 - p) * (z * p).exp();
                if q >= 1.0 {
                    return Err(Error::MgfDivergent {
                        dist: self.to_string(),
                        z,
                    });
                }
                let mut sum = 0.0;
                let mut pk = p; // P(G = k)
                for k in 1..200_000u32 {
                    let term = pk * (z * p * k as f64).exp();
                    sum += term;
                    if term < 1e-18 * sum {
                        break;
                    }
                    pk *= 1.0 - p;
                }
                Ok(sum)
            }
            WeightKind::ScaledPoisson { lambda } => {
                let mut sum = 0.0;
                let mut ln_pk = -lambda;
                for k in 0..100_000u32 {
                    if k > 0 {
                        ln_pk += lambda.ln() - (k as f64).ln();
                    }
                    let term = (ln_pk + z * k as f64 / lambda).exp();
                    sum += term;
                    if k as f64 > lambda && term < 1e-18 * sum {
                        break;
                    }
                }
                Ok(sum)
            }
        }
    }

    /// `S = max{((8/ζ)·ln(8/ζ))^4, E e^{ζW} + E e^{2ζW}}`.
    pub fn s_constant(&self) -> Result<f64> {
        let z = self.zeta;
        let a = ((8.0 / z) * (8.0 / z).ln()).powi(4);
        let b = self.mgf(z)? + self.mgf(2.0 * z)?;
        Ok(a.max(b))
    }

    /// Compares `E[e^{γℓW}]` with `1 + ℓγ + Sℓ²γ²`. With `trials = 0` the
    /// left side is the closed form; otherwise it is a Monte-Carlo estimate
    /// and the check allows three standard errors.
    pub fn moment_inequality_check(&self, gamma: f64, ell: f64, trials: usize, rng: &mut CounterRng) -> Result<CheckResult> {
        if !(gamma > 0.0 && gamma <= self.zeta / 2.0 + 1e-15) {
            return Err(Error::Parameter(format!(
                "gamma = {gamma} not in (0, zeta/2] with zeta = {}",
                self.zeta
            )));
        }
        if !(-1.0..=1.0).contains(&ell) {
            return Err(Error::Parameter(format!("ell = {ell} not in [-1,1]")));
        }
        let s = self.s_constant()?;
        let bound = 1.0 + ell * gamma + s * ell * ell * gamma * gamma;
        let hash = InputHasher::default()
            .f64(self.zeta)
            .f64(gamma)
            .f64(ell)
            .u64(trials as u64)
            .finish();
        let label = format!("mgf-moment {self} gamma={gamma} ell={ell}");
        if trials == 0 {
            return Ok(CheckResult::new(label, hash, self.mgf(gamma * ell)?, bound, 0.0));
        }
        let xs: Vec<f64> = (0..trials).map(|_| (gamma * ell * self.sample(rng)).exp()).collect();
        let (mean, se) = mean_and_se(&xs);
        Ok(CheckResult::new(label, hash, mean, bound, 3.0 * se))
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

impl fmt::Display for WeightDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            WeightKind::Unit => write!(f, "unit"),
            WeightKind::Exponential => write!(f, "exp1"),
            WeightKind::ScaledGeometric { p } => write!(f, "geom:p={p}"),
            WeightKind::ScaledPoisson { lambda } => write!(f, "poisson:l={lambda}"),
        }
    }
}

impl FromStr for WeightDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let param = |prefix: &str, key: &str| -> Result<f64> {
            let rest = &s[prefix.len()..];
            let v = rest
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| Error::Config(format!("weights {s:?}: expected {prefix}{key}=<value>")))?;
            v.parse()
                .map_err(|_| Error::Config(format!("weights {s:?}: bad number {v:?}")))
        };
        match s {
            "unit" => Ok(Self::unit()),
            "exp1" => Ok(Self::exponential()),
            _ if s.starts_with("geom:") => Self::scaled_geometric(param("geom:", "p")?),
            _ if s.starts_with("poisson:") => Self::scaled_poisson(param("poisson:", "l")?),
            _ => Err(Error::Config(format!("unknown weight distribution {s:?}"))),
        }
    }
}
