//! Building an [`Scm`] from observational data.
//!
//! The additive-noise learner regresses every node on all earlier-block
//! columns plus earlier columns of its own block. Sensitive columns are roots
//! and get empirical marginals. Only block-level counterfactuals are
//! meaningful: the within-block order is just the schema's column order.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::expr::noise;
use crate::metrics::mean;
use crate::noise::NoiseSpec;
use crate::schema::{FeatureSchema, Kind, Role};
use crate::scm::{Mechanism, MechanismForm, Scm};

const IRLS_MAX_ITER: usize = 100;
const IRLS_TOL: f64 = 1e-9;
/// Rows required per fitted coefficient.
const ROWS_PER_COEFFICIENT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    /// Known equations; `fit` returns them unchanged.
    Oracle { model: Box<Scm> },
    AdditiveNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Linear,
    /// Linear terms plus every product of a sensitive parent with another
    /// sensitive or covariate parent (squares of binary columns excluded).
    #[default]
    LinearPlusPairwise,
}

/// Term pruning for additive nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermSelection {
    /// Keep every basis term.
    None,
    /// Backward elimination by Bayesian information criterion.
    #[default]
    Bic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSplit {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for TrainSplit {
    fn default() -> Self {
        Self { train: 0.8, validation: 0.1, test: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub learner: Learner,
    pub basis: Basis,
    #[serde(default)]
    pub selection: TermSelection,
    pub regularization: f64,
    pub train_split: TrainSplit,
    pub seed: u64,
    /// `(parent, child)` edges left out of the candidate parent sets.
    #[serde(default)]
    pub excluded_edges: Vec<(String, String)>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            learner: Learner::AdditiveNoise,
            basis: Basis::default(),
            selection: TermSelection::default(),
            regularization: 1e-6,
            train_split: TrainSplit::default(),
            seed: 0,
            excluded_edges: Vec::new(),
        }
    }
}

impl EstimatorConfig {
    pub fn oracle(model: Scm) -> Self {
        Self { learner: Learner::Oracle { model: Box::new(model) }, ..Self::default() }
    }

    pub fn with_basis(mut self, basis: Basis) -> Self {
        self.basis = basis;
        self
    }

    pub fn with_selection(mut self, selection: TermSelection) -> Self {
        self.selection = selection;
        self
    }

    pub fn with_regularization(mut self, regularization: f64) -> Self {
        self.regularization = regularization;
        self
    }

    pub fn without_edge(mut self, parent: &str, child: &str) -> Self {
        self.excluded_edges.push((parent.into(), child.into()));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.regularization.is_finite() || self.regularization < 0.0 {
            return Err(Error::InvalidConfig("regularization must be finite and non-negative".into()));
        }
        let TrainSplit { train, validation, test } = self.train_split;
        if [train, validation, test].iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::InvalidConfig("split fractions must be positive".into()));
        }
        if (train + validation + test - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("split fractions must sum to 1".into()));
        }
        Ok(())
    }
}

/// Seeded shuffle into train / validation / test partitions.
pub fn split(data: &Dataset, config: &EstimatorConfig) -> Result<(Dataset, Dataset, Dataset)> {
    config.validate()?;
    let n = data.n_rows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_train = (config.train_split.train * n as f64).round() as usize;
    let n_val = ((config.train_split.validation * n as f64).round() as usize).min(n - n_train);
    let (train, rest) = idx.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok((data.subset(train), data.subset(val), data.subset(test)))
}

/// Candidate parents of `column`: every earlier-block column and earlier
/// columns of the same block. Sensitive columns have none.
pub fn candidate_parents(schema: &FeatureSchema, column: usize) -> Vec<usize> {
    let role = schema.column(column).role;
    if role == Role::Sensitive {
        return Vec::new();
    }
    (0..column).filter(|&p| schema.column(p).role.block() <= role.block()).collect()
}

fn basis_terms(schema: &FeatureSchema, parents: &[usize], basis: Basis) -> Vec<Vec<usize>> {
    let mut terms: Vec<Vec<usize>> = parents.iter().map(|&p| vec![p]).collect();
    if basis == Basis::LinearPlusPairwise {
        let of = |role| parents.iter().copied().filter(move |&p| schema.column(p).role == role);
        let sens: Vec<usize> = of(Role::Sensitive).collect();
        for (k, &s) in sens.iter().enumerate() {
            for &t in &sens[k..] {
                if !(t == s && schema.column(s).kind.is_discrete()) {
                    terms.push(vec![s, t]);
                }
            }
            for x in of(Role::Covariate) {
                terms.push(vec![s, x]);
            }
        }
    }
    terms
}

fn design(data: &Dataset, terms: &[Vec<usize>]) -> DMatrix<f64> {
    DMatrix::from_fn(data.n_rows(), terms.len(), |i, k| terms[k].iter().map(|&j| data.column(j)[i]).product())
}

fn underdetermined(schema: &FeatureSchema, column: usize) -> Error {
    Error::Underdetermined { column: schema.column(column).name.clone() }
}

/// Ridge fit on centred columns; the intercept is not penalised.
fn ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Option<(DVector<f64>, f64)> {
    let n = x.nrows() as f64;
    let x_mean = x.row_mean();
    let y_mean = y.mean();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= &x_mean;
    }
    let yc = y.add_scalar(-y_mean);
    let mut gram = xc.transpose() * &xc;
    if lambda == 0.0 && gram.ncols() > 0 {
        let svd = gram.clone().svd(false, false);
        let top = svd.singular_values.max();
        if top <= 0.0 || svd.rank(top * 1e-12) < gram.ncols() {
            return None;
        }
    }
    for k in 0..gram.ncols() {
        gram[(k, k)] += lambda * n;
    }
    let w = gram.cholesky()?.solve(&(xc.transpose() * yc));
    let intercept = y_mean - (x_mean * &w)[0];
    Some((w, intercept))
}

pub(crate) fn sigma(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Penalised logistic regression by Newton steps with step halving. Rows
/// carry `weights` (all 1 when `None`); the penalty scales with their sum.
pub(crate) fn logistic_irls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: Option<&DVector<f64>>,
    lambda: f64,
) -> Option<(DVector<f64>, f64)> {
    let (n, p) = (x.nrows(), x.ncols());
    let ones = DVector::from_element(n, 1.0);
    let weights = weights.unwrap_or(&ones);
    let total = weights.sum();
    let mut xa = DMatrix::from_element(n, p + 1, 1.0);
    xa.view_mut((0, 1), (n, p)).copy_from(x);
    let penalty = |b: &DVector<f64>| 0.5 * lambda * total * b.rows(1, p).norm_squared();
    let objective = |b: &DVector<f64>| {
        let eta = &xa * b;
        let ll: f64 = eta
            .iter()
            .zip(y.iter())
            .zip(weights.iter())
            .map(|((e, t), w)| w * (t * e - e.max(0.0) - (-e.abs()).exp().ln_1p()))
            .sum();
        -ll + penalty(b)
    };
    let mut beta = DVector::zeros(p + 1);
    let mut obj = objective(&beta);
    for _ in 0..IRLS_MAX_ITER {
        let mu = (&xa * &beta).map(sigma);
        let mut grad = xa.transpose() * (&mu - y).component_mul(weights);
        let mut xw = xa.clone();
        for ((mut row, m), w) in xw.row_iter_mut().zip(mu.iter()).zip(weights.iter()) {
            row *= w * (m * (1.0 - m)).max(1e-12);
        }
        let mut hess = xa.transpose() * xw;
        for k in 1..=p {
            grad[k] += lambda * total * beta[k];
            hess[(k, k)] += lambda * total;
        }
        let step = hess.cholesky()?.solve(&grad);
        let mut t = 1.0;
        let mut next = &beta - &step * t;
        let mut next_obj = objective(&next);
        while next_obj > obj && t > 1e-8 {
            t *= 0.5;
            next = &beta - &step * t;
            next_obj = objective(&next);
        }
        let done = (obj - next_obj).abs() <= IRLS_TOL * (1.0 + obj.abs());
        beta = next;
        obj = next_obj;
        if done {
            break;
        }
    }
    beta.iter().all(|b| b.is_finite()).then(|| (beta.rows(1, p).into_owned(), beta[0]))
}

fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len().max(2) - 1) as f64
}

fn root_marginal(data: &Dataset, column: usize) -> Result<NoiseSpec> {
    let values = data.column(column);
    Ok(match data.schema().column(column).kind {
        Kind::Binary => NoiseSpec::Bernoulli { p: mean(values) },
        Kind::Continuous => {
            let variance = sample_variance(values);
            if variance <= 0.0 {
                return Err(underdetermined(data.schema(), column));
            }
            NoiseSpec::Gaussian { mean: mean(values), variance }
        }
        Kind::Categorical { cardinality } => {
            let mut probs = vec![0.0; cardinality];
            for v in values {
                probs[*v as usize] += 1.0 / values.len() as f64;
            }
            NoiseSpec::Categorical { probs }
        }
    })
}

fn fit_node(data: &Dataset, column: usize, config: &EstimatorConfig) -> Result<(Mechanism, NoiseSpec)> {
    let schema = data.schema();
    let spec = schema.column(column);
    let parents: Vec<usize> = candidate_parents(schema, column)
        .into_iter()
        .filter(|&p| {
            !config.excluded_edges.iter().any(|(a, b)| *a == schema.column(p).name && *b == spec.name)
        })
        .collect();
    if parents.is_empty() {
        return Ok((Mechanism::closed_form(&spec.name, noise()), root_marginal(data, column)?));
    }
    let terms = basis_terms(schema, &parents, config.basis);
    if data.n_rows() < ROWS_PER_COEFFICIENT * (terms.len() + 1) {
        return Err(underdetermined(schema, column));
    }
    let x = design(data, &terms);
    let names: Vec<Vec<String>> =
        terms.iter().map(|t| t.iter().map(|&j| schema.column(j).name.clone()).collect()).collect();
    let y = DVector::from_column_slice(data.column(column));
    let lambda = config.regularization;
    match spec.kind {
        Kind::Binary => {
            let (w, b) = logistic_irls(&x, &y, None, lambda).ok_or_else(|| underdetermined(schema, column))?;
            let form = MechanismForm::LearnedThreshold {
                terms: names,
                coefficients: w.iter().copied().collect(),
                intercept: b,
                threshold: 0.0,
            };
            Ok((Mechanism { node: spec.name.clone(), form }, NoiseSpec::Logistic { location: 0.0, scale: 1.0 }))
        }
        Kind::Continuous | Kind::Categorical { .. } => {
            // Codes are floored, so level l is the interval [l, l + 1).
            let shift = if spec.kind.is_discrete() { 0.5 } else { 0.0 };
            let y = y.add_scalar(shift);
            let keep = match config.selection {
                TermSelection::None => (0..terms.len()).collect(),
                TermSelection::Bic => backward_bic(&x, &y, lambda).ok_or_else(|| underdetermined(schema, column))?,
            };
            let x = x.select_columns(&keep);
            let (w, b) = ridge(&x, &y, lambda).ok_or_else(|| underdetermined(schema, column))?;
            let resid = residuals(&x, &y, &w, b);
            let variance = sample_variance(resid.as_slice());
            if !(variance > 0.0) {
                return Err(underdetermined(schema, column));
            }
            let form = MechanismForm::LearnedAdditive {
                terms: keep.iter().map(|&k| names[k].clone()).collect(),
                coefficients: w.iter().copied().collect(),
                intercept: b,
            };
            Ok((Mechanism { node: spec.name.clone(), form }, NoiseSpec::Gaussian { mean: 0.0, variance }))
        }
    }
}

fn residuals(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, b: f64) -> DVector<f64> {
    (y - x * w).add_scalar(-b)
}

/// Gaussian BIC of a ridge fit on the given columns.
fn bic(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, columns: &[usize]) -> Option<f64> {
    let x = x.select_columns(columns);
    let (w, b) = ridge(&x, y, lambda)?;
    let n = y.len() as f64;
    let rss = residuals(&x, y, &w, b).norm_squared().max(f64::MIN_POSITIVE);
    Some(n * (rss / n).ln() + (columns.len() + 1) as f64 * n.ln())
}

/// Backward elimination: drop the term whose removal lowers BIC most, until
/// no removal lowers it.
fn backward_bic(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Option<Vec<usize>> {
    let mut keep: Vec<usize> = (0..x.ncols()).collect();
    let mut best = bic(x, y, lambda, &keep)?;
    while !keep.is_empty() {
        let mut choice = None;
        for k in 0..keep.len() {
            let mut trial = keep.clone();
            trial.remove(k);
            let score = bic(x, y, lambda, &trial)?;
            if score < best {
                best = score;
                choice = Some(k);
            }
        }
        match choice {
            Some(k) => {
                keep.remove(k);
            }
            None => break,
        }
    }
    Some(keep)
}

/// Fits one mechanism per node.
pub fn fit(data: &Dataset, schema: &FeatureSchema, config: &EstimatorConfig) -> Result<Scm> {
    config.validate()?;
    if data.schema() != schema {
        return Err(Error::SchemaMismatch("data does not conform to the schema".into()));
    }
    match &config.learner {
        Learner::Oracle { model } => {
            if model.schema() != schema {
                return Err(Error::SchemaMismatch("oracle model schema differs from the data".into()));
            }
            Ok((**model).clone())
        }
        Learner::AdditiveNoise => {
            let fitted: Vec<(Mechanism, NoiseSpec)> =
                (0..schema.len()).into_par_iter().map(|j| fit_node(data, j, config)).collect::<Result<_>>()?;
            let (mechanisms, noise) = fitted.into_iter().unzip();
            Scm::new(schema.clone(), mechanisms, noise)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFit {
    pub column: String,
    /// Summed over holdout rows.
    pub log_likelihood: f64,
    /// Continuous nodes: abducted noise minus its prior mean. Discrete nodes:
    /// observed code minus its predicted expectation.
    pub residual_mean: f64,
    pub residual_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodnessReport {
    pub rows: usize,
    pub total_log_likelihood: f64,
    pub nodes: Vec<NodeFit>,
}

impl GoodnessReport {
    pub fn node(&self, column: &str) -> Option<&NodeFit> {
        self.nodes.iter().find(|n| n.column == column)
    }
}

/// Per-node fit diagnostics on held-out rows.
pub fn goodness(model: &Scm, holdout: &Dataset) -> Result<GoodnessReport> {
    let schema = model.schema();
    if holdout.schema() != schema {
        return Err(Error::SchemaMismatch("holdout does not conform to the model".into()));
    }
    let per_row: Vec<(Vec<f64>, Vec<f64>)> = holdout
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| {
            let ll = model.node_log_likelihood(row)?;
            let u = model.abduct(row)?;
            let resid = (0..schema.len())
                .map(|j| match schema.column(j).kind {
                    Kind::Continuous => Ok(u.0[j] - model.noise()[j].mean()),
                    Kind::Binary | Kind::Categorical { .. } => {
                        let k = match schema.column(j).kind {
                            Kind::Categorical { cardinality } => cardinality,
                            _ => 2,
                        };
                        let mut expected = 0.0;
                        for level in 1..k {
                            expected += level as f64 * model.level_probability(j, &row.0, level as f64)?;
                        }
                        Ok(row.0[j] - expected)
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((ll, resid))
        })
        .collect::<Result<_>>()?;
    let nodes: Vec<NodeFit> = (0..schema.len())
        .map(|j| {
            let r: Vec<f64> = per_row.iter().map(|(_, r)| r[j]).collect();
            NodeFit {
                column: schema.column(j).name.clone(),
                log_likelihood: per_row.iter().map(|(ll, _)| ll[j]).sum(),
                residual_mean: mean(&r),
                residual_variance: sample_variance(&r),
            }
        })
        .collect();
    Ok(GoodnessReport {
        rows: holdout.n_rows(),
        total_log_likelihood: nodes.iter().map(|n| n.log_likelihood).sum(),
        nodes,
    })
}
