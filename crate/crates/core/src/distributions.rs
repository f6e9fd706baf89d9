//! Two-moment distribution models: fitting, exact moments, sampling and the
//! interarrival density-at-zero factor used by the light-traffic limit.
//!
//! Fitting follows the usual phase-type recipe: deterministic for SCV 0,
//! a mixture of Erlang(k-1) and Erlang(k) with a common phase rate for
//! SCV in (0, 1), exponential for SCV 1 and a two-phase hyperexponential
//! with balanced means for SCV above 1.

use rand::Rng;

use crate::error::{ModelError, Result};
use crate::{lit, Real};

/// Family selected by the SCV of a [`DistributionModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Deterministic,
    Exponential,
    MixedErlang,
    Hyperexponential,
}

impl Family {
    pub fn for_scv<T: Real>(scv: T) -> Family {
        if scv == T::zero() {
            Family::Deterministic
        } else if scv == T::one() {
            Family::Exponential
        } else if scv < T::one() {
            Family::MixedErlang
        } else {
            Family::Hyperexponential
        }
    }
}

/// A (mean, SCV) description of a nonnegative random variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionModel<T> {
    family: Family,
    mean: T,
    scv: T,
}

impl<T: Real> DistributionModel<T> {
    pub fn new(mean: T, scv: T) -> Result<Self> {
        if !mean.is_finite() || !scv.is_finite() {
            return Err(ModelError::InvalidInput(format!(
                "mean and scv must be finite (mean {mean}, scv {scv})"
            )));
        }
        if scv < T::zero() {
            return Err(ModelError::InvalidInput(format!("negative scv {scv}")));
        }
        let family = Family::for_scv(scv);
        if mean < T::zero() || (mean == T::zero() && family != Family::Deterministic) {
            return Err(ModelError::InvalidInput(format!(
                "mean must be positive for a random {family:?} variable, got {mean}"
            )));
        }
        Ok(Self { family, mean, scv })
    }

    pub fn deterministic(value: T) -> Result<Self> {
        Self::new(value, T::zero())
    }

    pub fn exponential(mean: T) -> Result<Self> {
        Self::new(mean, T::one())
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn scv(&self) -> T {
        self.scv
    }

    pub fn variance(&self) -> T {
        self.scv * self.mean * self.mean
    }

    pub fn second_moment(&self) -> T {
        (self.scv + T::one()) * self.mean * self.mean
    }

    /// `E[X^2] / 2E[X]`; zero for a variable that is identically zero.
    pub fn residual_mean(&self) -> T {
        if self.mean == T::zero() {
            T::zero()
        } else {
            self.second_moment() / (lit::<T>(2.0) * self.mean)
        }
    }

    /// Same family and SCV, new mean.
    pub fn with_mean(&self, mean: T) -> Result<Self> {
        Self::new(mean, self.scv)
    }

    pub fn fit(&self) -> FittedDistribution<T> {
        // Validated at construction, so fitting cannot fail.
        fit(self.mean, self.scv).expect("validated distribution model")
    }
}

/// Concrete phase-type parameters reproducing a (mean, SCV) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FittedDistribution<T> {
    Deterministic {
        value: T,
    },
    Exponential {
        rate: T,
    },
    /// Erlang(`phases - 1`) with probability `p`, Erlang(`phases`) otherwise,
    /// all phases at `rate`.
    MixedErlang {
        phases: u32,
        p: T,
        rate: T,
    },
    /// Exponential(`rate1`) with probability `p1`, Exponential(`rate2`)
    /// otherwise; `p1 / rate1 == p2 / rate2`.
    Hyperexponential {
        p1: T,
        rate1: T,
        rate2: T,
    },
}

/// First two moments and the equilibrium residual mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<T> {
    pub mean: T,
    pub second_moment: T,
    pub variance: T,
    pub residual_mean: T,
}

impl<T: Real> Moments<T> {
    pub fn scv(&self) -> T {
        self.variance / (self.mean * self.mean)
    }
}

/// Selects how `E[A] g(0)` is evaluated for the light-traffic correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DensityAtZero {
    /// Two-moment approximation: `2c/(c+1)` above SCV 1, `c^4` otherwise.
    #[default]
    TwoMoment,
    /// Density of the fitted phase-type law at the origin.
    Exact,
}

/// Fits the family dictated by `scv` to the pair (`mean`, `scv`).
pub fn fit<T: Real>(mean: T, scv: T) -> Result<FittedDistribution<T>> {
    if !(scv >= T::zero()) || !scv.is_finite() {
        return Err(ModelError::InvalidInput(format!("scv must be nonnegative, got {scv}")));
    }
    if !(mean >= T::zero()) || !mean.is_finite() {
        return Err(ModelError::InvalidInput(format!("mean must be nonnegative, got {mean}")));
    }
    let one = T::one();
    let two = lit::<T>(2.0);
    Ok(match Family::for_scv(scv) {
        Family::Deterministic => FittedDistribution::Deterministic { value: mean },
        _ if mean == T::zero() => {
            return Err(ModelError::InvalidInput(
                "a random variable with positive scv needs a positive mean".into(),
            ))
        }
        Family::Exponential => FittedDistribution::Exponential { rate: one / mean },
        Family::MixedErlang => {
            let k = (one / scv).ceil().to_u32().unwrap_or(u32::MAX).max(2);
            let kf = lit::<T>(f64::from(k));
            let disc = (kf * (one + scv) - kf * kf * scv).max(T::zero());
            let p = ((kf * scv - disc.sqrt()) / (one + scv)).max(T::zero()).min(one);
            FittedDistribution::MixedErlang {
                phases: k,
                p,
                rate: (kf - p) / mean,
            }
        }
        Family::Hyperexponential => {
            let p1 = (one + ((scv - one) / (scv + one)).sqrt()) / two;
            let p2 = one - p1;
            FittedDistribution::Hyperexponential {
                p1,
                rate1: two * p1 / mean,
                rate2: two * p2 / mean,
            }
        }
    })
}

impl<T: Real> FittedDistribution<T> {
    pub fn moments(&self) -> Result<Moments<T>> {
        let two = lit::<T>(2.0);
        let (mean, second_moment) = match *self {
            FittedDistribution::Deterministic { value } => (value, value * value),
            FittedDistribution::Exponential { rate } => {
                (T::one() / rate, two / (rate * rate))
            }
            FittedDistribution::MixedErlang { phases, p, rate } => {
                let k = lit::<T>(f64::from(phases));
                let km1 = k - T::one();
                let mean = (p * km1 + (T::one() - p) * k) / rate;
                let m2 = (p * km1 * k + (T::one() - p) * k * (k + T::one())) / (rate * rate);
                (mean, m2)
            }
            FittedDistribution::Hyperexponential { p1, rate1, rate2 } => {
                let p2 = T::one() - p1;
                (
                    p1 / rate1 + p2 / rate2,
                    two * p1 / (rate1 * rate1) + two * p2 / (rate2 * rate2),
                )
            }
        };
        if mean == T::zero() {
            return Err(ModelError::ResidualUndefined);
        }
        Ok(Moments {
            mean,
            second_moment,
            variance: second_moment - mean * mean,
            residual_mean: second_moment / (two * mean),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match *self {
            FittedDistribution::Deterministic { value } => value,
            FittedDistribution::Exponential { rate } => standard_exp::<T, R>(rng) / rate,
            FittedDistribution::MixedErlang { phases, p, rate } => {
                let u: f64 = rng.random();
                let n = if lit::<T>(u) < p { phases - 1 } else { phases };
                erlang_unit::<T, R>(n, rng) / rate
            }
            FittedDistribution::Hyperexponential { p1, rate1, rate2 } => {
                let u: f64 = rng.random();
                let rate = if lit::<T>(u) < p1 { rate1 } else { rate2 };
                standard_exp::<T, R>(rng) / rate
            }
        }
    }

    pub fn cdf(&self, x: T) -> T {
        if x < T::zero() {
            return T::zero();
        }
        match *self {
            FittedDistribution::Deterministic { value } => {
                if x >= value {
                    T::one()
                } else {
                    T::zero()
                }
            }
            FittedDistribution::Exponential { rate } => T::one() - (-rate * x).exp(),
            FittedDistribution::MixedErlang { phases, p, rate } => {
                p * erlang_cdf(phases - 1, rate, x) + (T::one() - p) * erlang_cdf(phases, rate, x)
            }
            FittedDistribution::Hyperexponential { p1, rate1, rate2 } => {
                p1 * (T::one() - (-rate1 * x).exp())
                    + (T::one() - p1) * (T::one() - (-rate2 * x).exp())
            }
        }
    }

    /// Density at the origin times the mean, `E[A] g(0)`.
    pub fn density_zero_factor(&self, mode: DensityAtZero) -> T {
        match mode {
            DensityAtZero::TwoMoment => {
                let scv = match self.moments() {
                    Ok(m) => m.scv(),
                    Err(_) => T::zero(),
                };
                two_moment_density_zero_factor(scv)
            }
            DensityAtZero::Exact => match *self {
                FittedDistribution::Deterministic { .. } => T::zero(),
                FittedDistribution::Exponential { .. } => T::one(),
                FittedDistribution::MixedErlang { phases, p, rate } => {
                    if phases == 2 {
                        let mean = (p + (T::one() - p) * lit::<T>(2.0)) / rate;
                        mean * p * rate
                    } else {
                        T::zero()
                    }
                }
                FittedDistribution::Hyperexponential { p1, rate1, rate2 } => {
                    let p2 = T::one() - p1;
                    (p1 / rate1 + p2 / rate2) * (p1 * rate1 + p2 * rate2)
                }
            },
        }
    }
}

/// Two-branch approximation of `E[A] g(0)` from the SCV alone.
pub fn two_moment_density_zero_factor<T: Real>(scv: T) -> T {
    if scv > T::one() {
        lit::<T>(2.0) * scv / (scv + T::one())
    } else {
        scv.powi(4)
    }
}

fn standard_exp<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let u: f64 = rng.random();
    lit::<T>(-(1.0 - u).ln())
}

fn erlang_unit<T: Real, R: Rng + ?Sized>(n: u32, rng: &mut R) -> T {
    let mut acc = 0.0f64;
    for _ in 0..n {
        let u: f64 = rng.random();
        acc -= (1.0 - u).ln();
    }
    lit::<T>(acc)
}

fn erlang_cdf<T: Real>(n: u32, rate: T, x: T) -> T {
    if n == 0 {
        return T::one();
    }
    let z = rate * x;
    let mut term = T::one();
    let mut sum = T::one();
    for i in 1..n {
        term = term * z / lit::<T>(f64::from(i));
        sum = sum + term;
    }
    (T::one() - (-z).exp() * sum).max(T::zero())
}
