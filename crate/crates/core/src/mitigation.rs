//! Treatment-fair datasets, fair risk scores under a treatment policy, and
//! stakeholder losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::schema::{Instance, Role};
use crate::scm::{DoSet, Scm};

pub const DEFAULT_SAMPLE_COUNT: usize = 256;
pub const CDF_GRID_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Each row keeps its own treatment.
    Factual,
    /// Treatments drawn jointly, with replacement, from reference rows whose
    /// sensitive value is `group`.
    EmpiricalConditional { group: f64 },
    /// Each row's own counterfactual treatment under `do(S -> group)`.
    SensitiveCounterfactual { group: f64 },
}

/// Distribution of treatments used to marginalise treatment effects out of
/// risk scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentPolicy {
    #[serde(flatten)]
    pub kind: PolicyKind,
    pub sensitive_column: String,
    pub seed: u64,
    pub sample_count: usize,
}

impl TreatmentPolicy {
    pub fn factual(sensitive_column: &str) -> Self {
        Self { kind: PolicyKind::Factual, sensitive_column: sensitive_column.into(), seed: 0, sample_count: 1 }
    }

    pub fn empirical(sensitive_column: &str, group: f64, seed: u64) -> Self {
        Self {
            kind: PolicyKind::EmpiricalConditional { group },
            sensitive_column: sensitive_column.into(),
            seed,
            sample_count: DEFAULT_SAMPLE_COUNT,
        }
    }

    pub fn sensitive_counterfactual(sensitive_column: &str, group: f64) -> Self {
        Self {
            kind: PolicyKind::SensitiveCounterfactual { group },
            sensitive_column: sensitive_column.into(),
            seed: 0,
            sample_count: 1,
        }
    }

    pub fn with_sample_count(mut self, sample_count: usize) -> Self {
        self.sample_count = sample_count;
        self
    }

    /// Binds the policy to reference data.
    pub fn resolve(&self, model: &Scm, reference: &Dataset) -> Result<ResolvedPolicy> {
        if self.sample_count == 0 {
            return Err(Error::InvalidConfig("sample_count must be at least 1".into()));
        }
        let schema = model.schema();
        let s_col = schema.require(&self.sensitive_column)?;
        let pool = match self.kind {
            PolicyKind::EmpiricalConditional { group } => {
                if reference.schema() != schema {
                    return Err(Error::SchemaMismatch("policy reference data does not match the model".into()));
                }
                let t = schema.treatments();
                let rows = reference.rows_where(s_col, group);
                if rows.is_empty() {
                    return Err(Error::EmptyPolicy);
                }
                rows.iter().map(|&i| t.iter().map(|&j| reference.column(j)[i]).collect()).collect()
            }
            _ => Vec::new(),
        };
        Ok(ResolvedPolicy { policy: self.clone(), sensitive: s_col, pool })
    }
}

#[derive(Debug, Clone)]
pub struct ResolvedPolicy {
    policy: TreatmentPolicy,
    sensitive: usize,
    pool: Vec<Vec<f64>>,
}

/// `P(Y = 0 | s, x, do(Z -> z))` with `U_Y` from its prior.
fn default_probability(model: &Scm, row: &Instance, z: &[f64]) -> f64 {
    let mut values = row.0.clone();
    for (&j, v) in model.schema().treatments().iter().zip(z) {
        values[j] = model.schema().column(j).kind.coerce(*v);
    }
    1.0 - model.outcome_probability(&values)
}

/// Monte-Carlo estimate of `E_{z' ~ π}[P(Y = 0 | s^F, x^F, do(Z -> z'))]`.
/// `stream` selects the row's random stream.
pub fn fair_risk_score(row: &Instance, stream: u64, model: &Scm, policy: &ResolvedPolicy) -> Result<f64> {
    let schema = model.schema();
    schema.validate_row(&row.0)?;
    let score = match policy.policy.kind {
        PolicyKind::Factual => default_probability(model, row, &row.select(&schema.treatments())),
        PolicyKind::SensitiveCounterfactual { group } => {
            let cf = model.counterfactual(row, &DoSet::new().set(policy.sensitive, group))?;
            default_probability(model, row, &cf.select(&schema.treatments()))
        }
        PolicyKind::EmpiricalConditional { .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(policy.policy.seed);
            rng.set_stream(stream);
            let n = policy.policy.sample_count;
            let total: f64 = (0..n)
                .map(|_| default_probability(model, row, &policy.pool[rng.random_range(0..policy.pool.len())]))
                .sum();
            total / n as f64
        }
    };
    Ok(score.clamp(0.0, 1.0))
}

/// Fair risk scores of every row of `data`; row `i` uses stream `i`.
pub fn risk_scores(data: &Dataset, model: &Scm, policy: &TreatmentPolicy, reference: &Dataset) -> Result<Vec<f64>> {
    if data.schema() != model.schema() {
        return Err(Error::SchemaMismatch("dataset and model schemas differ".into()));
    }
    let resolved = policy.resolve(model, reference)?;
    (0..data.n_rows()).into_par_iter().map(|i| fair_risk_score(&data.row(i), i as u64, model, &resolved)).collect()
}

/// Empirical CDF `P(score <= t)` on `t = 0, 0.01, ..., 1`.
pub fn risk_cdf(scores: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len().max(1) as f64;
    (0..CDF_GRID_POINTS)
        .map(|i| {
            let t = i as f64 / (CDF_GRID_POINTS - 1) as f64;
            let below = sorted.partition_point(|s| *s <= t);
            (t, if sorted.is_empty() { 0.0 } else { below as f64 / n })
        })
        .collect()
}

/// Two-column CSV of a CDF grid.
pub fn cdf_csv(cdf: &[(f64, f64)]) -> String {
    let mut out = String::from("threshold,cdf\n");
    for (t, f) in cdf {
        out.push_str(&format!("{t},{f}\n"));
    }
    out
}

/// `sup_t |F_a(t) - F_b(t)|` over the pooled sample points.
pub fn kolmogorov_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    a.iter()
        .chain(&b)
        .map(|t| {
            let fa = a.partition_point(|x| x <= t) as f64 / na;
            let fb = b.partition_point(|x| x <= t) as f64 / nb;
            (fa - fb).abs()
        })
        .fold(0.0, f64::max)
}

/// Repayment rates of the intervened group before and after.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonHarmCheck {
    pub factual_rate: f64,
    pub fair_rate: f64,
}

impl NonHarmCheck {
    pub fn holds(&self) -> bool {
        self.fair_rate >= self.factual_rate
    }

    pub fn ensure(&self) -> Result<()> {
        if self.holds() {
            Ok(())
        } else {
            Err(Error::NonHarmViolated { factual: self.factual_rate, fair: self.fair_rate })
        }
    }
}

#[derive(Debug, Clone)]
pub struct FairDataset {
    pub data: Dataset,
    pub non_harm: NonHarmCheck,
    pub intervened_rows: usize,
}

/// Replaces the treatments of `disadvantaged` rows by their counterfactual
/// treatments under `do(S -> advantaged)` and their outcomes by the
/// counterfactual outcome under those treatments. Other columns and all
/// `advantaged` rows are copied unchanged.
pub fn build_fair_dataset(
    data: &Dataset,
    model: &Scm,
    sensitive_column: &str,
    disadvantaged: f64,
    advantaged: f64,
) -> Result<FairDataset> {
    let schema = model.schema();
    if data.schema() != schema {
        return Err(Error::SchemaMismatch("dataset and model schemas differ".into()));
    }
    let s = schema.require(sensitive_column)?;
    let group = |v: f64| -> Result<Vec<usize>> {
        let rows = data.rows_where(s, v);
        if rows.is_empty() {
            return Err(Error::EmptyGroup { column: sensitive_column.into(), value: format!("{v}") });
        }
        Ok(rows)
    };
    let targets = group(disadvantaged)?;
    group(advantaged)?;
    let z_cols = schema.treatments();
    let y = schema.outcome();
    let flip = DoSet::new().set(s, advantaged);
    let replaced: Vec<(Vec<f64>, f64)> = targets
        .par_iter()
        .map(|&i| {
            let row = data.row(i);
            let u = model.abduct(&row)?;
            let z = model.predict(&u, &flip).select(&z_cols);
            let doz = DoSet::new().block(schema, Role::Treatment, &z)?;
            Ok((z, model.predict(&u, &doz).0[y]))
        })
        .collect::<Result<_>>()?;

    let mut out = data.clone();
    let mut factual_hits = 0.0;
    let mut fair_hits = 0.0;
    for (&i, (z, y_cf)) in targets.iter().zip(&replaced) {
        let mut row = data.row(i);
        factual_hits += row.0[y];
        for (&j, v) in z_cols.iter().zip(z) {
            row.0[j] = *v;
        }
        row.0[y] = *y_cf;
        fair_hits += y_cf;
        out.set_row(i, &row)?;
    }
    out.provenance_mut()
        .history
        .push(format!("fair dataset: {sensitive_column} {disadvantaged} treated as {advantaged}"));
    let n = targets.len() as f64;
    Ok(FairDataset {
        data: out,
        non_harm: NonHarmCheck { factual_rate: factual_hits / n, fair_rate: fair_hits / n },
        intervened_rows: targets.len(),
    })
}

/// Applicant-side interest formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "formula", rename_all = "snake_case")]
pub enum EsiFormula {
    /// `y · amount · rate/100 · duration/12`, duration in months.
    RateDuration { rate_percent: f64, duration_column: String },
    /// `annuity · 12 · years − amount`.
    AnnuityAmount { annuity_column: String, duration_years: f64 },
}

impl EsiFormula {
    /// Flat 10% on a monthly duration column.
    pub fn rate_duration(duration_column: &str) -> Self {
        EsiFormula::RateDuration { rate_percent: 10.0, duration_column: duration_column.into() }
    }

    /// Fixed 15-year horizon.
    pub fn annuity_amount(annuity_column: &str) -> Self {
        EsiFormula::AnnuityAmount { annuity_column: annuity_column.into(), duration_years: 15.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupValue {
    pub group: f64,
    pub rows: usize,
    pub value: f64,
}

fn column<'a>(data: &'a Dataset, name: &str) -> Result<&'a [f64]> {
    data.column_named(name)
}

fn per_group(data: &Dataset, group_column: Option<&str>, f: impl Fn(usize) -> f64) -> Result<Vec<GroupValue>> {
    let all: Vec<usize> = (0..data.n_rows()).collect();
    let groups: Vec<(f64, Vec<usize>)> = match group_column {
        None => vec![(f64::NAN, all)],
        Some(g) => {
            let col = data.schema().index_of(g).ok_or_else(|| Error::MissingColumn(g.into()))?;
            data.support(col).into_iter().map(|v| (v, data.rows_where(col, v))).collect()
        }
    };
    Ok(groups
        .into_iter()
        .map(|(group, rows)| {
            let value = if rows.is_empty() { f64::NAN } else { rows.iter().map(|&i| f(i)).sum::<f64>() / rows.len() as f64 };
            GroupValue { group, rows: rows.len(), value }
        })
        .collect())
}

/// `mean((1 − y) · amount)` per group (one entry with `group = NaN` if ungrouped).
pub fn lgd(data: &Dataset, amount_column: &str, group_column: Option<&str>) -> Result<Vec<GroupValue>> {
    let amount = column(data, amount_column)?;
    let y = data.column(data.schema().outcome());
    per_group(data, group_column, |i| (1.0 - y[i]) * amount[i])
}

/// Expected simple interest per group.
pub fn esi(data: &Dataset, amount_column: &str, formula: &EsiFormula, group_column: Option<&str>) -> Result<Vec<GroupValue>> {
    let amount = column(data, amount_column)?;
    let y = data.column(data.schema().outcome());
    match formula {
        EsiFormula::RateDuration { rate_percent, duration_column } => {
            if *rate_percent < 0.0 {
                return Err(Error::NegativeRate(*rate_percent));
            }
            let months = column(data, duration_column)?;
            per_group(data, group_column, |i| y[i] * amount[i] * rate_percent / 100.0 * months[i] / 12.0)
        }
        EsiFormula::AnnuityAmount { annuity_column, duration_years } => {
            let annuity = column(data, annuity_column)?;
            per_group(data, group_column, |i| annuity[i] * 12.0 * duration_years - amount[i])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLoss {
    pub group: f64,
    pub rows: usize,
    pub lgd: f64,
    pub esi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub dataset: String,
    pub groups: Vec<GroupLoss>,
}

impl LossReport {
    pub fn compute(
        tag: &str,
        data: &Dataset,
        amount_column: &str,
        formula: &EsiFormula,
        group_column: &str,
    ) -> Result<Self> {
        let l = lgd(data, amount_column, Some(group_column))?;
        let e = esi(data, amount_column, formula, Some(group_column))?;
        let groups = l
            .into_iter()
            .zip(e)
            .map(|(l, e)| GroupLoss { group: l.group, rows: l.rows, lgd: l.value, esi: e.value })
            .collect();
        Ok(Self { dataset: tag.into(), groups })
    }

    pub fn group(&self, value: f64) -> Option<&GroupLoss> {
        self.groups.iter().find(|g| g.group == value)
    }
}
