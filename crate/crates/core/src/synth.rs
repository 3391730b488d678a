//! Synthetic loan benchmark with a known ground-truth model.
//!
//! Roles: gender `G` and age `A` are sensitive, education `E`, income `I` and
//! savings `S` are covariates, loan amount `L` and duration `D` are
//! treatments, and `Y = 1` means the loan was repaid. `G = 1` is male.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::expr::{constant, noise, positive, sigmoid, var, Expr};
use crate::noise::NoiseSpec;
use crate::schema::{ColumnSpec, FeatureSchema, Kind, Role};
use crate::scm::{Mechanism, Scm};

pub const GENDER: &str = "G";
pub const AGE: &str = "A";
pub const EDUCATION: &str = "E";
pub const INCOME: &str = "I";
pub const SAVINGS: &str = "S";
pub const AMOUNT: &str = "L";
pub const DURATION: &str = "D";
pub const REPAID: &str = "Y";

pub const FEMALE: f64 = 0.0;
pub const MALE: f64 = 1.0;

/// Which outcome equation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeVariant {
    /// `Y = 1{σ(score) >= 0.5 + γ(1 - G)}`; no exogenous term.
    DeterministicThreshold,
    /// `Y = 1{σ(score + U_Y γ (1 - G)) >= 0.5}`.
    NoisyThreshold,
}

/// How the second argument of each `N(a, b)` in the generating equations is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianParam {
    Variance,
    StdDev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Listed with the other parameters but enters no equation.
    pub eta: f64,
    pub n: usize,
    pub seed: u64,
    pub outcome_variant: OutcomeVariant,
    pub gaussian_param: GaussianParam,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::balanced()
    }
}

impl SynthConfig {
    pub fn balanced() -> Self {
        Self {
            beta: 0.03,
            gamma: 0.5,
            delta: 1.0,
            eta: 5.0,
            n: 5000,
            seed: 0,
            outcome_variant: OutcomeVariant::NoisyThreshold,
            gaussian_param: GaussianParam::StdDev,
        }
    }

    /// Steeper amount/duration penalty, which skews labels toward default.
    pub fn unbalanced() -> Self {
        Self { delta: 2.0, ..Self::balanced() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if self.beta != 0.0 && self.beta != 0.03 {
            return Err(Error::InvalidConfig(format!("beta must be 0 or 0.03, got {}", self.beta)));
        }
        for (name, v) in [("gamma", self.gamma), ("delta", self.delta), ("eta", self.eta)] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    fn gaussian(&self, b: f64) -> NoiseSpec {
        let variance = match self.gaussian_param {
            GaussianParam::Variance => b,
            GaussianParam::StdDev => b * b,
        };
        NoiseSpec::Gaussian { mean: 0.0, variance }
    }
}

pub fn schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        ColumnSpec::new(GENDER, Role::Sensitive, Kind::Binary),
        ColumnSpec::new(AGE, Role::Sensitive, Kind::Continuous),
        ColumnSpec::new(EDUCATION, Role::Covariate, Kind::Continuous),
        ColumnSpec::new(INCOME, Role::Covariate, Kind::Continuous),
        ColumnSpec::new(SAVINGS, Role::Covariate, Kind::Continuous),
        ColumnSpec::new(AMOUNT, Role::Treatment, Kind::Continuous),
        ColumnSpec::new(DURATION, Role::Treatment, Kind::Continuous),
        ColumnSpec::new(REPAID, Role::Outcome, Kind::Binary),
    ])
    .expect("static schema is valid")
}

pub fn build_oracle(config: &SynthConfig) -> Result<Scm> {
    config.validate()?;
    let g = || var(GENDER);
    let a = || var(AGE);
    let i = || var(INCOME);
    let s = || var(SAVINGS);
    let l = || var(AMOUNT);
    let d = || var(DURATION);

    let e_expr = -0.5 + sigmoid(-1.0 + 0.5 * g() + sigmoid(0.1 * a()) + noise());
    let i_expr = -4.0 + 0.1 * (a() + 35.0) + 2.0 * g() + g() * var(EDUCATION) + noise();
    let s_expr = -4.0 + 1.5 * positive(i()) * i() + noise();
    let l_expr = 1.0 + 0.01 * (a() - 5.0) * (5.0 - a()) + 2.0 * (1.0 - g()) + config.beta * s() + noise();
    let d_expr = -1.0 + 0.1 * a() + 3.0 * (1.0 - g()) + l() + noise();

    let alpha = 2.0 * positive(i()) * positive(s()) - 1.0;
    let base: Expr = config.delta * (-l() - d()) + 0.3 * (i() + s() + alpha * i() * s());
    let (y_mech, y_noise) = match config.outcome_variant {
        OutcomeVariant::DeterministicThreshold => (
            Mechanism::threshold(REPAID, sigmoid(base), 0.5 + config.gamma * (1.0 - g())),
            NoiseSpec::PointMass { value: 0.0 },
        ),
        OutcomeVariant::NoisyThreshold => (
            Mechanism::threshold(REPAID, sigmoid(base + noise() * config.gamma * (1.0 - g())), constant(0.5)),
            config.gaussian(5.0),
        ),
    };

    Scm::new(
        schema(),
        vec![
            Mechanism::closed_form(GENDER, noise()),
            Mechanism::closed_form(AGE, -35.0 + noise()),
            Mechanism::closed_form(EDUCATION, e_expr),
            Mechanism::closed_form(INCOME, i_expr),
            Mechanism::closed_form(SAVINGS, s_expr),
            Mechanism::closed_form(AMOUNT, l_expr),
            Mechanism::closed_form(DURATION, d_expr),
            y_mech,
        ],
        vec![
            NoiseSpec::Bernoulli { p: 0.5 },
            NoiseSpec::Gamma { shape: 10.0, scale: 3.5 },
            config.gaussian(0.25),
            config.gaussian(4.0),
            config.gaussian(5.0),
            config.gaussian(10.0),
            config.gaussian(9.0),
            y_noise,
        ],
    )
}

pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    let mut data = build_oracle(config)?.sample(config.n, config.seed)?;
    let p = data.provenance_mut();
    p.source = Some("synthetic loan".into());
    p.history = vec![format!(
        "synthetic beta={} gamma={} delta={} eta={} n={} variant={:?} gaussian={:?}",
        config.beta, config.gamma, config.delta, config.eta, config.n, config.outcome_variant, config.gaussian_param
    )];
    Ok(data)
}
