//! Exogenous noise families.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF};

use crate::error::{Error, Result};

/// Distribution of one exogenous variable.
///
/// `Gaussian` is parameterised by variance and `Gamma` by shape and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseSpec {
    Bernoulli { p: f64 },
    Gaussian { mean: f64, variance: f64 },
    Gamma { shape: f64, scale: f64 },
    PointMass { value: f64 },
    Logistic { location: f64, scale: f64 },
    Categorical { probs: Vec<f64> },
}

impl NoiseSpec {
    pub fn standard_normal() -> Self {
        NoiseSpec::Gaussian { mean: 0.0, variance: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        match *self {
            NoiseSpec::Bernoulli { p } if !(0.0..=1.0).contains(&p) => {
                bad(format!("Bernoulli p = {p} outside [0, 1]"))
            }
            NoiseSpec::Gaussian { mean, variance } if !mean.is_finite() || !(variance >= 0.0) || !variance.is_finite() => {
                bad(format!("Gaussian({mean}, {variance}) needs finite mean and variance >= 0"))
            }
            NoiseSpec::Gamma { shape, scale } if !(shape > 0.0 && scale > 0.0) => {
                bad(format!("Gamma({shape}, {scale}) needs positive shape and scale"))
            }
            NoiseSpec::PointMass { value } if !value.is_finite() => bad("point mass must be finite".into()),
            NoiseSpec::Logistic { location, scale } if !location.is_finite() || !(scale > 0.0) => {
                bad(format!("Logistic({location}, {scale}) needs positive scale"))
            }
            NoiseSpec::Categorical { ref probs } => {
                let total: f64 = probs.iter().sum();
                if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                    bad("categorical probabilities must be non-negative and sum to 1".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn is_continuous(&self) -> bool {
        match *self {
            NoiseSpec::Gaussian { variance, .. } => variance > 0.0,
            NoiseSpec::Gamma { .. } | NoiseSpec::Logistic { .. } => true,
            _ => false,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < p)),
            NoiseSpec::Gaussian { mean, variance } => {
                if variance == 0.0 {
                    mean
                } else {
                    Normal::new(mean, variance.sqrt()).expect("validated").sample(rng)
                }
            }
            NoiseSpec::Gamma { shape, scale } => Gamma::new(shape, scale).expect("validated").sample(rng),
            NoiseSpec::PointMass { value } => value,
            NoiseSpec::Logistic { location, scale } => {
                let p: f64 = rng.random::<f64>().clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                location + scale * (p / (1.0 - p)).ln()
            }
            NoiseSpec::Categorical { ref probs } => {
                let r: f64 = rng.random();
                let mut acc = 0.0;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if r < acc {
                        return k as f64;
                    }
                }
                (probs.len() - 1) as f64
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseSpec::Bernoulli { p } => p,
            NoiseSpec::Gaussian { mean, .. } => mean,
            NoiseSpec::Gamma { shape, scale } => shape * scale,
            NoiseSpec::PointMass { value } => value,
            NoiseSpec::Logistic { location, .. } => location,
            NoiseSpec::Categorical { ref probs } => probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::Bernoulli { p } => p * (1.0 - p),
            NoiseSpec::Gaussian { variance, .. } => variance,
            NoiseSpec::Gamma { shape, scale } => shape * scale * scale,
            NoiseSpec::PointMass { .. } => 0.0,
            NoiseSpec::Logistic { scale, .. } => scale * scale * std::f64::consts::PI.powi(2) / 3.0,
            NoiseSpec::Categorical { ref probs } => {
                let m = self.mean();
                probs.iter().enumerate().map(|(k, p)| p * (k as f64 - m).powi(2)).sum()
            }
        }
    }

    /// P(U <= x).
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            NoiseSpec::Bernoulli { p } => {
                if x < 0.0 {
                    0.0
                } else if x < 1.0 {
                    1.0 - p
                } else {
                    1.0
                }
            }
            NoiseSpec::Gaussian { mean, variance } => {
                if variance == 0.0 {
                    f64::from(u8::from(x >= mean))
                } else {
                    statrs::distribution::Normal::new(mean, variance.sqrt()).expect("validated").cdf(x)
                }
            }
            NoiseSpec::Gamma { shape, scale } => {
                statrs::distribution::Gamma::new(shape, 1.0 / scale).expect("validated").cdf(x)
            }
            NoiseSpec::PointMass { value } => f64::from(u8::from(x >= value)),
            NoiseSpec::Logistic { location, scale } => 1.0 / (1.0 + (-(x - location) / scale).exp()),
            NoiseSpec::Categorical { ref probs } => {
                if x < 0.0 {
                    return 0.0;
                }
                let upto = (x.floor() as usize).min(probs.len() - 1);
                probs[..=upto].iter().sum::<f64>().min(1.0)
            }
        }
    }

    /// P(U < x).
    pub fn cdf_left(&self, x: f64) -> f64 {
        if self.is_continuous() {
            self.cdf(x)
        } else {
            self.cdf(x.next_down())
        }
    }

    /// Generalised inverse CDF: the smallest `x` with `cdf(x) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match *self {
            NoiseSpec::Bernoulli { p: q } => f64::from(u8::from(p > 1.0 - q)),
            NoiseSpec::Gaussian { mean, variance } => {
                if variance == 0.0 {
                    mean
                } else {
                    statrs::distribution::Normal::new(mean, variance.sqrt()).expect("validated").inverse_cdf(p)
                }
            }
            NoiseSpec::Gamma { shape, scale } => {
                statrs::distribution::Gamma::new(shape, 1.0 / scale).expect("validated").inverse_cdf(p)
            }
            NoiseSpec::PointMass { value } => value,
            NoiseSpec::Logistic { location, scale } => location + scale * (p / (1.0 - p)).ln(),
            NoiseSpec::Categorical { ref probs } => {
                let mut acc = 0.0;
                for (k, q) in probs.iter().enumerate() {
                    acc += q;
                    if acc >= p {
                        return k as f64;
                    }
                }
                (probs.len() - 1) as f64
            }
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Log density for continuous families, log mass for discrete ones.
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            NoiseSpec::Bernoulli { p } => {
                if x == 1.0 {
                    p.ln()
                } else if x == 0.0 {
                    (1.0 - p).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            NoiseSpec::Gaussian { mean, variance } => {
                if variance == 0.0 {
                    if x == mean { 0.0 } else { f64::NEG_INFINITY }
                } else {
                    -0.5 * ((x - mean).powi(2) / variance + (2.0 * std::f64::consts::PI * variance).ln())
                }
            }
            NoiseSpec::Gamma { shape, scale } => {
                statrs::distribution::Gamma::new(shape, 1.0 / scale).expect("validated").ln_pdf(x)
            }
            NoiseSpec::PointMass { value } => {
                if x == value { 0.0 } else { f64::NEG_INFINITY }
            }
            NoiseSpec::Logistic { location, scale } => {
                let z = (x - location) / scale;
                -z - 2.0 * (1.0 + (-z).exp()).ln() - scale.ln()
            }
            NoiseSpec::Categorical { ref probs } => {
                if x >= 0.0 && x.fract() == 0.0 && (x as usize) < probs.len() {
                    probs[x as usize].ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}
