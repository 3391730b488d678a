//! Binary outcome predictors with group-threshold post-processing for
//! demographic parity or equalized odds.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{logistic_irls, sigma};
use crate::metrics::{audit_where, mean, DisparityConfig, DisparityReport};
use crate::schema::Kind;
use crate::scm::Scm;

pub const GRID_STEPS: usize = 500;
pub const DP_TOLERANCE: f64 = 0.02;
pub const EOD_TOLERANCE: f64 = 0.03;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    DemographicParity,
    EqualizedOdds,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::DemographicParity => "demographic_parity",
            Criterion::EqualizedOdds => "equalized_odds",
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Criterion::DemographicParity => DP_TOLERANCE,
            Criterion::EqualizedOdds => EOD_TOLERANCE,
        }
    }
}

/// How one input column becomes model features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum Encoding {
    Standardize { column: String, mean: f64, scale: f64 },
    /// One indicator per code.
    OneHot { column: String, levels: usize },
    Raw { column: String },
}

impl Encoding {
    fn width(&self) -> usize {
        match self {
            Encoding::OneHot { levels, .. } => *levels,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupThreshold {
    pub group: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub objective: String,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub postprocessed: Option<Criterion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub sensitive_column: String,
    pub encodings: Vec<Encoding>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub thresholds: Vec<GroupThreshold>,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub train_fraction: f64,
    pub seed: u64,
    pub regularization: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { train_fraction: DEFAULT_TRAIN_FRACTION, seed: 0, regularization: 1e-4 }
    }
}

/// Row indices of a label-stratified split, each part in ascending order.
pub fn stratified_split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig("train fraction must lie in (0, 1)".into()));
    }
    let y = data.column(data.schema().outcome());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for label in [0.0, 1.0] {
        let mut rows: Vec<usize> = (0..data.n_rows()).filter(|&i| y[i] == label).collect();
        rows.shuffle(&mut rng);
        let k = (train_fraction * rows.len() as f64).round() as usize;
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn group_values(data: &Dataset, sensitive: usize) -> Result<Vec<f64>> {
    let kind = data.schema().column(sensitive).kind;
    if !kind.is_discrete() {
        return Err(Error::InvalidConfig("group thresholds need a discrete sensitive column".into()));
    }
    Ok(data.support(sensitive))
}

impl PredictorModel {
    /// Class-balanced logistic regression on all non-outcome columns of the
    /// training part of a stratified split.
    pub fn train(data: &Dataset, sensitive_column: &str, config: &TrainConfig) -> Result<Self> {
        let schema = data.schema();
        let s = schema.require(sensitive_column)?;
        let (train_rows, test_rows) = stratified_split(data, config.train_fraction, config.seed)?;
        let train = data.subset(&train_rows);
        let y: Vec<f64> = train.column(schema.outcome()).to_vec();
        let positives = y.iter().filter(|v| **v == 1.0).count();
        if positives == 0 || positives == y.len() {
            return Err(Error::Degenerate("the training split holds a single label".into()));
        }

        let mut encodings = Vec::new();
        for j in (0..schema.len()).filter(|&j| j != schema.outcome()) {
            let spec = schema.column(j);
            let column = spec.name.clone();
            encodings.push(match spec.kind {
                Kind::Continuous => {
                    let values = train.column(j);
                    let m = mean(values);
                    let sd = (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
                    Encoding::Standardize { column, mean: m, scale: if sd > 0.0 { sd } else { 1.0 } }
                }
                Kind::Categorical { cardinality } => Encoding::OneHot { column, levels: cardinality },
                Kind::Binary => Encoding::Raw { column },
            });
        }
        let mut model = Self {
            sensitive_column: sensitive_column.into(),
            encodings,
            weights: Vec::new(),
            intercept: 0.0,
            thresholds: group_values(data, s)?.into_iter().map(|group| GroupThreshold { group, threshold: 0.5 }).collect(),
            metadata: TrainingMetadata {
                objective: "class_balanced_log_loss".into(),
                split_seed: config.seed,
                train_fraction: config.train_fraction,
                train_rows: train_rows.len(),
                test_rows: test_rows.len(),
                postprocessed: None,
            },
        };
        let x = model.features(&train)?;
        let n = y.len() as f64;
        let w_pos = n / (2.0 * positives as f64);
        let w_neg = n / (2.0 * (y.len() - positives) as f64);
        let weights = DVector::from_iterator(y.len(), y.iter().map(|v| if *v == 1.0 { w_pos } else { w_neg }));
        let (w, b) = logistic_irls(&x, &DVector::from_vec(y), Some(&weights), config.regularization)
            .ok_or_else(|| Error::Degenerate("logistic fit did not converge".into()))?;
        model.weights = w.iter().copied().collect();
        model.intercept = b;
        Ok(model)
    }

    fn features(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let width: usize = self.encodings.iter().map(Encoding::width).sum();
        let mut x = DMatrix::zeros(data.n_rows(), width);
        let mut k = 0;
        for e in &self.encodings {
            match e {
                Encoding::Standardize { column, mean, scale } => {
                    for (i, v) in data.column_named(column)?.iter().enumerate() {
                        x[(i, k)] = (v - mean) / scale;
                    }
                }
                Encoding::OneHot { column, levels } => {
                    for (i, v) in data.column_named(column)?.iter().enumerate() {
                        let level = *v as usize;
                        if level < *levels {
                            x[(i, k + level)] = 1.0;
                        }
                    }
                }
                Encoding::Raw { column } => {
                    for (i, v) in data.column_named(column)?.iter().enumerate() {
                        x[(i, k)] = *v;
                    }
                }
            }
            k += e.width();
        }
        Ok(x)
    }

    /// `P(Y = 1)` per row.
    pub fn scores(&self, data: &Dataset) -> Result<Vec<f64>> {
        let x = self.features(data)?;
        let w = DVector::from_column_slice(&self.weights);
        Ok((x * w).iter().map(|e| sigma(e + self.intercept)).collect())
    }

    pub fn threshold_for(&self, group: f64) -> f64 {
        self.thresholds.iter().find(|t| t.group == group).map_or(0.5, |t| t.threshold)
    }

    /// Positive decisions: score at or above the row's group threshold.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<bool>> {
        let s = data.column_named(&self.sensitive_column)?;
        Ok(self.scores(data)?.iter().zip(s).map(|(p, g)| *p >= self.threshold_for(*g)).collect())
    }

    /// Training and test parts of `data` under this model's split.
    pub fn split(&self, data: &Dataset) -> Result<(Dataset, Dataset)> {
        let (train, test) = stratified_split(data, self.metadata.train_fraction, self.metadata.split_seed)?;
        Ok((data.subset(&train), data.subset(&test)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.thresholds.iter().any(|t| !(0.0..=1.0).contains(&t.threshold)) {
            return Err(Error::InvalidModel("thresholds must lie in [0, 1]".into()));
        }
        let bad_scale = model.encodings.iter().any(|e| matches!(e, Encoding::Standardize { scale, .. } if *scale == 0.0));
        if bad_scale {
            return Err(Error::InvalidModel("standardization scales must be nonzero".into()));
        }
        Ok(model)
    }
}

/// Per-group counts of positive decisions at every grid threshold.
struct GroupCurve {
    positives: usize,
    negatives: usize,
    /// `tp[i]`, `fp[i]`: decisions at threshold `i / GRID_STEPS`.
    tp: Vec<usize>,
    fp: Vec<usize>,
}

impl GroupCurve {
    fn new(scores: &[f64], labels: &[f64]) -> Self {
        let mut pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, y)| **y == 1.0).map(|(s, _)| *s).collect();
        let mut neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, y)| **y != 1.0).map(|(s, _)| *s).collect();
        pos.sort_by(f64::total_cmp);
        neg.sort_by(f64::total_cmp);
        let at_least = |v: &[f64], t: f64| v.len() - v.partition_point(|s| *s < t);
        let grid = (0..=GRID_STEPS).map(grid_point);
        Self {
            positives: pos.len(),
            negatives: neg.len(),
            tp: grid.clone().map(|t| at_least(&pos, t)).collect(),
            fp: grid.map(|t| at_least(&neg, t)).collect(),
        }
    }

    fn rate(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    fn positive_rate(&self, i: usize) -> f64 {
        Self::rate(self.tp[i] + self.fp[i], self.positives + self.negatives)
    }

    fn tpr(&self, i: usize) -> f64 {
        Self::rate(self.tp[i], self.positives)
    }

    fn fpr(&self, i: usize) -> f64 {
        Self::rate(self.fp[i], self.negatives)
    }
}

fn grid_point(i: usize) -> f64 {
    i as f64 / GRID_STEPS as f64
}

fn constraint_gap(criterion: Criterion, a: &GroupCurve, i: usize, b: &GroupCurve, j: usize) -> f64 {
    match criterion {
        Criterion::DemographicParity => (a.positive_rate(i) - b.positive_rate(j)).abs(),
        Criterion::EqualizedOdds => (a.tpr(i) - b.tpr(j)).abs().max((a.fpr(i) - b.fpr(j)).abs()),
    }
}

/// Picks per-group thresholds on the model's training split that maximise
/// balanced accuracy subject to the criterion's gap tolerance. Ties go to
/// higher accuracy, then lower thresholds. Weights are left untouched.
pub fn postprocess(model: &PredictorModel, data: &Dataset, criterion: Criterion) -> Result<PredictorModel> {
    let (train, _) = model.split(data)?;
    let s = train.column_named(&model.sensitive_column)?;
    let y = train.column(train.schema().outcome());
    let groups = group_values(&train, train.schema().require(&model.sensitive_column)?)?;
    if groups.len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "threshold search needs exactly two groups, found {}",
            groups.len()
        )));
    }
    let scores = model.scores(&train)?;
    let curve = |g: f64| {
        let rows: Vec<usize> = (0..train.n_rows()).filter(|&i| s[i] == g).collect();
        GroupCurve::new(
            &rows.iter().map(|&i| scores[i]).collect::<Vec<_>>(),
            &rows.iter().map(|&i| y[i]).collect::<Vec<_>>(),
        )
    };
    let (a, b) = (curve(groups[0]), curve(groups[1]));
    let (positives, negatives) = (a.positives + b.positives, a.negatives + b.negatives);
    let total = (positives + negatives) as f64;

    // (balanced accuracy, accuracy, i, j) of the best feasible pair, and
    // (gap, i, j) of the least-violating pair.
    let mut best: Option<(f64, f64, usize, usize)> = None;
    let mut closest = (f64::INFINITY, 0, 0);
    for i in 0..=GRID_STEPS {
        for j in 0..=GRID_STEPS {
            let gap = constraint_gap(criterion, &a, i, &b, j);
            if gap < closest.0 {
                closest = (gap, i, j);
            }
            if gap > criterion.tolerance() {
                continue;
            }
            let tp = a.tp[i] + b.tp[j];
            let tn = negatives - a.fp[i] - b.fp[j];
            let bal = 0.5 * (GroupCurve::rate(tp, positives) + GroupCurve::rate(tn, negatives));
            let acc = (tp + tn) as f64 / total;
            // Strict improvement keeps the lowest thresholds on ties.
            if best.is_none_or(|(bb, ba, _, _)| bal > bb || (bal == bb && acc > ba)) {
                best = Some((bal, acc, i, j));
            }
        }
    }
    let with = |i: usize, j: usize| {
        let mut m = model.clone();
        m.thresholds = vec![
            GroupThreshold { group: groups[0], threshold: grid_point(i) },
            GroupThreshold { group: groups[1], threshold: grid_point(j) },
        ];
        m.metadata.postprocessed = Some(criterion);
        m
    };
    match best {
        Some((_, _, i, j)) => Ok(with(i, j)),
        None => Err(Error::Infeasible {
            criterion: criterion.name(),
            gap: closest.0,
            best: Box::new(with(closest.1, closest.2)),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub group: f64,
    pub rows: usize,
    pub positive_rate: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorMetrics {
    pub rows: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// Largest pairwise positive-rate difference across groups.
    pub dp_gap: f64,
    /// Largest pairwise `max(|TPR gap|, |FPR gap|)` across groups.
    pub eod_gap: f64,
    pub groups: Vec<GroupRates>,
}

fn rates(decisions: &[bool], labels: &[f64]) -> (f64, f64, f64) {
    let count = |f: &dyn Fn(bool, f64) -> bool| decisions.iter().zip(labels).filter(|(d, y)| f(**d, **y)).count();
    let pos = count(&|_, y| y == 1.0);
    let neg = labels.len() - pos;
    let tp = count(&|d, y| d && y == 1.0);
    let fp = count(&|d, y| d && y != 1.0);
    (
        GroupCurve::rate(tp + fp, labels.len()),
        GroupCurve::rate(tp, pos),
        GroupCurve::rate(fp, neg),
    )
}

/// Accuracy and group fairness gaps of `model` on `data`.
pub fn evaluate(model: &PredictorModel, data: &Dataset) -> Result<PredictorMetrics> {
    let decisions = model.predict(data)?;
    let y = data.column(data.schema().outcome());
    let s = data.column_named(&model.sensitive_column)?;
    let correct = decisions.iter().zip(y).filter(|(d, y)| **d == (**y == 1.0)).count();
    let (_, tpr, fpr) = rates(&decisions, y);
    let groups: Vec<GroupRates> = data
        .support(data.schema().require(&model.sensitive_column)?)
        .into_iter()
        .map(|g| {
            let rows: Vec<usize> = (0..data.n_rows()).filter(|&i| s[i] == g).collect();
            let d: Vec<bool> = rows.iter().map(|&i| decisions[i]).collect();
            let l: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let (positive_rate, tpr, fpr) = rates(&d, &l);
            GroupRates { group: g, rows: rows.len(), positive_rate, tpr, fpr }
        })
        .collect();
    let mut dp_gap: f64 = 0.0;
    let mut eod_gap: f64 = 0.0;
    for (k, a) in groups.iter().enumerate() {
        for b in &groups[k + 1..] {
            dp_gap = dp_gap.max((a.positive_rate - b.positive_rate).abs());
            eod_gap = eod_gap.max((a.tpr - b.tpr).abs().max((a.fpr - b.fpr).abs()));
        }
    }
    Ok(PredictorMetrics {
        rows: data.n_rows(),
        accuracy: if data.is_empty() { 0.0 } else { correct as f64 / data.n_rows() as f64 },
        balanced_accuracy: 0.5 * (tpr + 1.0 - fpr),
        dp_gap,
        eod_gap,
        groups,
    })
}

/// Disparity audit over the rows `predictor` accepts.
pub fn audit_under_policy(
    data: &Dataset,
    model: &Scm,
    predictor: &PredictorModel,
    config: &DisparityConfig,
) -> Result<DisparityReport> {
    let accepted = predictor.predict(data)?;
    audit_where(data, model, config, &|i| accepted[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ColumnSpec, FeatureSchema, Instance, Role};

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            ColumnSpec::new("S", Role::Sensitive, Kind::Binary),
            ColumnSpec::new("X", Role::Covariate, Kind::Continuous),
            ColumnSpec::new("C", Role::Treatment, Kind::Categorical { cardinality: 3 }),
            ColumnSpec::new("Y", Role::Outcome, Kind::Binary),
        ])
        .unwrap()
    }

    fn data(rows: impl Iterator<Item = [f64; 4]>) -> Dataset {
        Dataset::from_rows(schema(), &rows.map(|r| Instance(r.to_vec())).collect::<Vec<_>>()).unwrap()
    }

    fn separable() -> Dataset {
        data((0..400).map(|i| {
            let x = (i as f64 - 200.0) / 50.0;
            [(i % 2) as f64, x, (i % 3) as f64, if x > 0.1 { 1.0 } else { 0.0 }]
        }))
    }

    #[test]
    fn separable_data_is_learned() {
        let d = separable();
        let m = PredictorModel::train(&d, "S", &TrainConfig::default()).unwrap();
        let (train, _) = m.split(&d).unwrap();
        assert!(evaluate(&m, &train).unwrap().balanced_accuracy >= 0.99);
        assert_eq!(m.weights.len(), 1 + 1 + 3);
        assert!(m.thresholds.iter().all(|t| t.threshold == 0.5));
    }

    #[test]
    fn split_is_stratified_and_seeded() {
        let d = separable();
        let (a, b) = stratified_split(&d, 0.6, 3).unwrap();
        assert_eq!(a.len() + b.len(), d.n_rows());
        assert_eq!((a.clone(), b), stratified_split(&d, 0.6, 3).unwrap());
        let y = d.column(3);
        let pos = y.iter().filter(|v| **v == 1.0).count() as f64;
        let train_pos = a.iter().filter(|&&i| y[i] == 1.0).count() as f64;
        assert!((train_pos / pos - 0.6).abs() < 0.01);
    }

    #[test]
    fn single_label_is_degenerate() {
        let d = data((0..50).map(|i| [(i % 2) as f64, i as f64, 0.0, 1.0]));
        assert!(matches!(PredictorModel::train(&d, "S", &TrainConfig::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn symmetric_groups_get_equal_thresholds() {
        // Each S = 1 row mirrors an S = 0 row exactly.
        let d = data((0..600).map(|i| {
            let k = i / 2;
            let x = ((k * 37) % 101) as f64 / 25.0 - 2.0;
            [(i % 2) as f64, x, 0.0, if (k * 13) % 7 < 3 + (x > 0.0) as usize * 3 { 1.0 } else { 0.0 }]
        }));
        let m = PredictorModel::train(&d, "S", &TrainConfig { train_fraction: 0.5, ..TrainConfig::default() }).unwrap();
        // Force exact symmetry of scores by removing the group weight.
        let mut m = m;
        m.weights[0] = 0.0;
        let p = postprocess(&m, &d, Criterion::DemographicParity).unwrap();
        let (train, _) = p.split(&d).unwrap();
        let metrics = evaluate(&p, &train).unwrap();
        assert!(metrics.dp_gap <= DP_TOLERANCE);
        assert_eq!(p.weights, m.weights);
    }

    #[test]
    fn infeasible_reports_best_gap() {
        // Group 0 only has negatives with high scores, group 1 only positives
        // with low scores: no threshold pair equalises the error rates.
        let d = data((0..200).map(|i| {
            let g = (i % 2) as f64;
            [g, if g == 0.0 { 3.0 } else { -3.0 } + (i as f64) * 1e-3, 0.0, if g == 0.0 { (i % 4 == 0) as u8 as f64 } else { 1.0 - (i % 4 == 1) as u8 as f64 }]
        }));
        let m = PredictorModel::train(&d, "S", &TrainConfig::default()).unwrap();
        match postprocess(&m, &d, Criterion::EqualizedOdds) {
            Err(Error::Infeasible { gap, best, .. }) => {
                assert!(gap > EOD_TOLERANCE);
                assert_eq!(best.metadata.postprocessed, Some(Criterion::EqualizedOdds));
            }
            Ok(p) => {
                let (train, _) = p.split(&d).unwrap();
                assert!(evaluate(&p, &train).unwrap().eod_gap <= EOD_TOLERANCE);
            }
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let d = separable();
        let m = PredictorModel::train(&d, "S", &TrainConfig::default()).unwrap();
        assert_eq!(PredictorModel::from_json(&m.to_json().unwrap()).unwrap(), m);
        let mut bad = m.clone();
        bad.thresholds[0].threshold = 1.5;
        assert!(PredictorModel::from_json(&bad.to_json().unwrap()).is_err());
    }
}
