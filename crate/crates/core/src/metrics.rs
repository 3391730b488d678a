//! Treatment-disparity metrics: total and direct treatment disparity and
//! their effect on the outcome label, plus multi-sensitive aggregates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::schema::{FeatureSchema, Instance, Kind};
use crate::scm::{DoSet, InterventionPlan, Scm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delta {
    /// `z_cf - z_f`.
    #[default]
    Difference,
    AbsDifference,
}

impl Delta {
    pub fn apply(self, counterfactual: f64, factual: f64) -> f64 {
        match self {
            Delta::Difference => counterfactual - factual,
            Delta::AbsDifference => (counterfactual - factual).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    #[default]
    Median,
}

/// Aggregate over the counterfactual treatments of one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Avg,
    Max,
    Var,
    #[default]
    None,
}

/// Aggregate over the label-flip indicators of one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeAggregator {
    /// Indicator of the counterfactual with the largest total |Δ|.
    #[default]
    WorstCase,
    Mean,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipStrategy {
    /// One sensitive column changes, the rest stay factual.
    #[default]
    Single,
    /// All listed sensitive columns change together.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityConfig {
    pub sensitive_column: String,
    /// `(s^F, s')`: audited rows have `s^F`; the intervention sets `s'`.
    pub group_pair: (f64, f64),
    #[serde(default)]
    pub delta: Delta,
    #[serde(default)]
    pub statistic: Statistic,
    #[serde(default)]
    pub aggregator: Aggregator,
    #[serde(default)]
    pub outcome_aggregator: OutcomeAggregator,
    #[serde(default)]
    pub flip: FlipStrategy,
    /// Sensitive columns spanning the value set of multi-sensitive metrics;
    /// empty means just `sensitive_column`.
    #[serde(default)]
    pub multi_columns: Vec<String>,
    /// Divide the average and variance aggregates by `|S| - 1` instead of
    /// `(|S| - 1)|S| / 2`.
    #[serde(default)]
    pub corrected_normalizer: bool,
}

impl DisparityConfig {
    pub fn new(sensitive_column: &str, factual: f64, counterfactual: f64) -> Self {
        Self {
            sensitive_column: sensitive_column.to_string(),
            group_pair: (factual, counterfactual),
            delta: Delta::default(),
            statistic: Statistic::default(),
            aggregator: Aggregator::default(),
            outcome_aggregator: OutcomeAggregator::default(),
            flip: FlipStrategy::default(),
            multi_columns: Vec::new(),
            corrected_normalizer: false,
        }
    }

    pub fn with_statistic(mut self, statistic: Statistic) -> Self {
        self.statistic = statistic;
        self
    }

    pub fn with_delta(mut self, delta: Delta) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_aggregator(mut self, aggregator: Aggregator) -> Self {
        self.aggregator = aggregator;
        self
    }
}

/// Mean and median of a per-row quantity; `value` is the configured statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub value: f64,
}

impl Summary {
    fn of(values: &[f64], statistic: Statistic) -> Self {
        let mean = mean(values);
        let median = median(values);
        let value = match statistic {
            Statistic::Mean => mean,
            Statistic::Median => median,
        };
        Summary { mean, median, value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisparityUnit {
    /// Treatment units.
    Difference,
    /// Percentage of rows whose categorical treatment changes.
    FlipRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentDisparity {
    pub column: String,
    pub unit: DisparityUnit,
    pub ttd: Summary,
    pub dtd: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEffect {
    pub y_factual: u8,
    pub rows: usize,
    /// Percent of rows whose label changes; `None` without rows.
    pub ttd_e: Option<f64>,
    pub dtd_e: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    pub config: DisparityConfig,
    pub audited_rows: usize,
    pub treatments: Vec<TreatmentDisparity>,
    pub effects: Vec<LabelEffect>,
}

impl DisparityReport {
    pub fn treatment(&self, column: &str) -> Option<&TreatmentDisparity> {
        self.treatments.iter().find(|t| t.column == column)
    }

    pub fn effect(&self, y_factual: u8) -> Option<&LabelEffect> {
        self.effects.iter().find(|e| e.y_factual == y_factual)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One line per metric × treatment (or label).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "column", "y_factual", "unit", "mean", "median", "value", "rows"])?;
        let fmt = |v: f64| format!("{v}");
        for t in &self.treatments {
            let unit = match t.unit {
                DisparityUnit::Difference => "difference",
                DisparityUnit::FlipRate => "flip_rate_percent",
            };
            for (name, s) in [("ttd", t.ttd), ("dtd", t.dtd)] {
                w.write_record([
                    name,
                    &t.column,
                    "",
                    unit,
                    &fmt(s.mean),
                    &fmt(s.median),
                    &fmt(s.value),
                    &self.audited_rows.to_string(),
                ])?;
            }
        }
        for e in &self.effects {
            for (name, v) in [("ttd_e", e.ttd_e), ("dtd_e", e.dtd_e)] {
                let v = v.map(fmt).unwrap_or_default();
                w.write_record([name, "", &e.y_factual.to_string(), "percent", &v, &v, &v, &e.rows.to_string()])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Counterfactual quantities of one audited row.
struct RowEffects {
    y: f64,
    z_factual: Vec<f64>,
    z_total: Vec<f64>,
    z_direct: Vec<f64>,
    y_total: f64,
    y_direct: f64,
}

fn treatment_values(schema: &FeatureSchema, row: &Instance) -> Vec<f64> {
    row.select(&schema.treatments())
}

fn row_effects(model: &Scm, row: &Instance, sensitive: &DoSet) -> Result<RowEffects> {
    let schema = model.schema();
    let u = model.abduct(row)?;
    let z_total = treatment_values(schema, &model.predict(&u, sensitive));
    let plan = InterventionPlan::direct_path(schema, sensitive);
    let z_direct = treatment_values(schema, &model.path_specific_counterfactual(row, &plan)?);
    let outcome = schema.outcome();
    let y_under = |z: &[f64]| -> Result<f64> {
        let doset = DoSet::new().block(schema, crate::schema::Role::Treatment, z)?;
        Ok(model.predict(&u, &doset).0[outcome])
    };
    Ok(RowEffects {
        y: row.0[outcome],
        z_factual: treatment_values(schema, row),
        y_total: y_under(&z_total)?,
        y_direct: y_under(&z_direct)?,
        z_total,
        z_direct,
    })
}

fn check_schema(data: &Dataset, model: &Scm) -> Result<()> {
    if data.schema() != model.schema() {
        return Err(Error::SchemaMismatch("dataset and model schemas differ".into()));
    }
    Ok(())
}

/// Rows with `s^F`, validating the pair against the data support.
fn audited_rows(data: &Dataset, config: &DisparityConfig, keep: &dyn Fn(usize) -> bool) -> Result<(usize, Vec<usize>)> {
    let col = data.schema().index_of(&config.sensitive_column).ok_or_else(|| Error::UnknownColumn(config.sensitive_column.clone()))?;
    let (s_f, s_cf) = config.group_pair;
    if s_f == s_cf {
        return Err(Error::InvalidConfig("group pair must name two different values".into()));
    }
    let rows: Vec<usize> = data.rows_where(col, s_f).into_iter().filter(|&i| keep(i)).collect();
    if rows.is_empty() {
        return Err(Error::EmptyGroup { column: config.sensitive_column.clone(), value: format!("{s_f}") });
    }
    let kind = data.schema().column(col).kind;
    let known = if kind.is_discrete() { data.support(col).contains(&s_cf) } else { kind.admits(s_cf) };
    if !known {
        return Err(Error::UnknownValue { column: config.sensitive_column.clone(), value: s_cf });
    }
    Ok((col, rows))
}

fn collect_effects(
    data: &Dataset,
    model: &Scm,
    config: &DisparityConfig,
    keep: &dyn Fn(usize) -> bool,
) -> Result<Vec<RowEffects>> {
    check_schema(data, model)?;
    let (col, rows) = audited_rows(data, config, keep)?;
    let sensitive = DoSet::new().set(col, config.group_pair.1);
    rows.par_iter().map(|&i| row_effects(model, &data.row(i), &sensitive)).collect()
}

fn percent(flags: impl Iterator<Item = bool>) -> Option<f64> {
    let (mut hits, mut n) = (0usize, 0usize);
    for f in flags {
        n += 1;
        hits += usize::from(f);
    }
    (n > 0).then(|| 100.0 * hits as f64 / n as f64)
}

/// Full single-pair audit: disparity per treatment and label effect per factual label.
pub fn audit(data: &Dataset, model: &Scm, config: &DisparityConfig) -> Result<DisparityReport> {
    audit_where(data, model, config, &|_| true)
}

/// [`audit`] restricted to the rows of `data` for which `keep` holds. The
/// counterfactual value is still checked against the whole of `data`.
pub fn audit_where(
    data: &Dataset,
    model: &Scm,
    config: &DisparityConfig,
    keep: &dyn Fn(usize) -> bool,
) -> Result<DisparityReport> {
    let effects = collect_effects(data, model, config, keep)?;
    let schema = model.schema();
    let mut treatments = Vec::new();
    for (k, &j) in schema.treatments().iter().enumerate() {
        let spec = schema.column(j);
        let (unit, ttd, dtd) = if matches!(spec.kind, Kind::Categorical { .. }) {
            let flips = |pick: fn(&RowEffects) -> &Vec<f64>| -> Vec<f64> {
                effects.iter().map(|e| if pick(e)[k] != e.z_factual[k] { 100.0 } else { 0.0 }).collect()
            };
            let (t, d) = (flips(|e| &e.z_total), flips(|e| &e.z_direct));
            let rate = |v: &[f64]| {
                let m = mean(v);
                Summary { mean: m, median: m, value: m }
            };
            (DisparityUnit::FlipRate, rate(&t), rate(&d))
        } else {
            let t: Vec<f64> = effects.iter().map(|e| config.delta.apply(e.z_total[k], e.z_factual[k])).collect();
            let d: Vec<f64> = effects.iter().map(|e| config.delta.apply(e.z_direct[k], e.z_factual[k])).collect();
            (DisparityUnit::Difference, Summary::of(&t, config.statistic), Summary::of(&d, config.statistic))
        };
        treatments.push(TreatmentDisparity { column: spec.name.clone(), unit, ttd, dtd });
    }
    let label_effects = [0u8, 1u8]
        .into_iter()
        .map(|label| {
            let group = || effects.iter().filter(move |e| e.y == f64::from(label));
            LabelEffect {
                y_factual: label,
                rows: group().count(),
                ttd_e: percent(group().map(|e| e.y_total != e.y)),
                dtd_e: percent(group().map(|e| e.y_direct != e.y)),
            }
        })
        .collect();
    Ok(DisparityReport { config: config.clone(), audited_rows: effects.len(), treatments, effects: label_effects })
}

/// Total treatment disparity per treatment column (configured statistic).
pub fn ttd(data: &Dataset, model: &Scm, config: &DisparityConfig) -> Result<Vec<f64>> {
    Ok(audit(data, model, config)?.treatments.iter().map(|t| t.ttd.value).collect())
}

/// Direct treatment disparity per treatment column.
pub fn dtd(data: &Dataset, model: &Scm, config: &DisparityConfig) -> Result<Vec<f64>> {
    Ok(audit(data, model, config)?.treatments.iter().map(|t| t.dtd.value).collect())
}

/// Percent of label changes under the total counterfactual treatment, for
/// `y^F = 0` and `y^F = 1`.
pub fn ttd_e(data: &Dataset, model: &Scm, config: &DisparityConfig) -> Result<[Option<f64>; 2]> {
    let r = audit(data, model, config)?;
    Ok([r.effects[0].ttd_e, r.effects[1].ttd_e])
}

/// As [`ttd_e`] with the direct-path treatment.
pub fn dtd_e(data: &Dataset, model: &Scm, config: &DisparityConfig) -> Result<[Option<f64>; 2]> {
    let r = audit(data, model, config)?;
    Ok([r.effects[0].dtd_e, r.effects[1].dtd_e])
}

/// Normalizer of the average and variance aggregates for a value set of
/// `set_size` elements.
pub fn normalizer(set_size: usize, corrected: bool) -> f64 {
    let s = set_size as f64;
    if corrected {
        s - 1.0
    } else {
        (s - 1.0) * s / 2.0
    }
}

/// Aggregates one row's treatment differences over the counterfactual set.
pub fn aggregate_deltas(deltas: &[f64], aggregator: Aggregator, set_size: usize, corrected: bool) -> Result<f64> {
    if deltas.is_empty() {
        return Err(Error::InvalidConfig("no counterfactual values to aggregate".into()));
    }
    Ok(match aggregator {
        Aggregator::Avg => deltas.iter().map(|d| d.abs()).sum::<f64>() / normalizer(set_size, corrected),
        Aggregator::Max => deltas.iter().map(|d| d.abs()).fold(0.0, f64::max),
        Aggregator::Var => deltas.iter().map(|d| d * d).sum::<f64>() / normalizer(set_size, corrected),
        Aggregator::None => return Err(Error::InvalidConfig("multi-sensitive metrics need an aggregator".into())),
    })
}

/// Aggregates one row's label-flip indicators. `worst` indexes the
/// counterfactual with the largest treatment change.
pub fn aggregate_flips(flips: &[bool], aggregator: OutcomeAggregator, worst: usize) -> f64 {
    let x: Vec<f64> = flips.iter().map(|f| f64::from(u8::from(*f))).collect();
    match aggregator {
        OutcomeAggregator::WorstCase => x[worst],
        OutcomeAggregator::Mean => mean(&x),
        OutcomeAggregator::Variance => {
            let m = mean(&x);
            x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTreatment {
    pub column: String,
    pub ttd: f64,
    pub dtd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelEffect {
    pub y_factual: u8,
    pub rows: usize,
    /// Mean of the per-row aggregate, in percent.
    pub ttd_e: Option<f64>,
    pub dtd_e: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiReport {
    pub config: DisparityConfig,
    /// `|S|` used in the normalizer.
    pub value_set_size: usize,
    pub audited_rows: usize,
    pub treatments: Vec<MultiTreatment>,
    pub effects: Vec<MultiLabelEffect>,
}

/// Counterfactual sensitive assignments for a row, and `|S|`.
fn candidate_assignments(
    columns: &[usize],
    supports: &[Vec<f64>],
    row: &Instance,
    flip: FlipStrategy,
) -> (Vec<DoSet>, usize) {
    match flip {
        FlipStrategy::Single => {
            let mut out = Vec::new();
            for (&c, support) in columns.iter().zip(supports) {
                for &v in support {
                    if v != row.0[c] {
                        out.push(DoSet::new().set(c, v));
                    }
                }
            }
            let n = out.len() + 1;
            (out, n)
        }
        FlipStrategy::Joint => {
            let mut combos: Vec<Vec<f64>> = vec![vec![]];
            for support in supports {
                combos = combos
                    .into_iter()
                    .flat_map(|prefix| {
                        support.iter().map(move |&v| {
                            let mut p = prefix.clone();
                            p.push(v);
                            p
                        })
                    })
                    .collect();
            }
            let total = combos.len();
            let factual: Vec<f64> = columns.iter().map(|&c| row.0[c]).collect();
            let out = combos
                .into_iter()
                .filter(|combo| *combo != factual)
                .map(|combo| DoSet(columns.iter().copied().zip(combo).collect()))
                .collect();
            (out, total)
        }
    }
}

struct MultiRow {
    y: f64,
    /// Per treatment column, aggregated |Δ| for total and direct paths.
    total: Vec<f64>,
    direct: Vec<f64>,
    flip_total: f64,
    flip_direct: f64,
}

/// Multi-sensitive aggregates of total and direct disparity and of the label
/// effects, over rows whose `sensitive_column` equals `group_pair.0`.
pub fn multi_audit(data: &Dataset, model: &Scm, config: &DisparityConfig) -> Result<MultiReport> {
    check_schema(data, model)?;
    if config.aggregator == Aggregator::None {
        return Err(Error::InvalidConfig("multi-sensitive metrics need an aggregator".into()));
    }
    let schema = model.schema();
    let names = if config.multi_columns.is_empty() {
        vec![config.sensitive_column.clone()]
    } else {
        config.multi_columns.clone()
    };
    let columns: Vec<usize> = names.iter().map(|n| schema.require(n)).collect::<Result<_>>()?;
    for &c in &columns {
        if !schema.column(c).kind.is_discrete() {
            return Err(Error::InvalidConfig(format!("`{}` is continuous; value sets need a discrete column", schema.column(c).name)));
        }
    }
    let supports: Vec<Vec<f64>> = columns.iter().map(|&c| data.support(c)).collect();
    let filter_col = schema.require(&config.sensitive_column)?;
    let rows = data.rows_where(filter_col, config.group_pair.0);
    if rows.is_empty() {
        return Err(Error::EmptyGroup { column: config.sensitive_column.clone(), value: format!("{}", config.group_pair.0) });
    }
    let outcome = schema.outcome();
    let set_size = candidate_assignments(&columns, &supports, &data.row(rows[0]), config.flip).1;
    if set_size < 2 {
        return Err(Error::InvalidConfig("the sensitive value set needs at least two values".into()));
    }
    let per_row: Vec<MultiRow> = rows
        .par_iter()
        .map(|&i| {
            let row = data.row(i);
            let (candidates, size) = candidate_assignments(&columns, &supports, &row, config.flip);
            let effects: Vec<RowEffects> =
                candidates.iter().map(|d| row_effects(model, &row, d)).collect::<Result<_>>()?;
            let n_t = schema.treatments().len();
            let agg = |pick: fn(&RowEffects) -> &Vec<f64>| -> Result<Vec<f64>> {
                (0..n_t)
                    .map(|k| {
                        let d: Vec<f64> = effects.iter().map(|e| config.delta.apply(pick(e)[k], e.z_factual[k])).collect();
                        aggregate_deltas(&d, config.aggregator, size, config.corrected_normalizer)
                    })
                    .collect()
            };
            let argmax = |pick: fn(&RowEffects) -> &Vec<f64>| -> usize {
                let size_of = |e: &RowEffects| -> f64 {
                    pick(e).iter().zip(&e.z_factual).map(|(a, b)| (a - b).abs()).sum()
                };
                let mut best = 0;
                for (idx, e) in effects.iter().enumerate() {
                    if size_of(e) > size_of(&effects[best]) {
                        best = idx;
                    }
                }
                best
            };
            let flips_t: Vec<bool> = effects.iter().map(|e| e.y_total != e.y).collect();
            let flips_d: Vec<bool> = effects.iter().map(|e| e.y_direct != e.y).collect();
            Ok(MultiRow {
                y: row.0[outcome],
                total: agg(|e| &e.z_total)?,
                direct: agg(|e| &e.z_direct)?,
                flip_total: aggregate_flips(&flips_t, config.outcome_aggregator, argmax(|e| &e.z_total)),
                flip_direct: aggregate_flips(&flips_d, config.outcome_aggregator, argmax(|e| &e.z_direct)),
            })
        })
        .collect::<Result<_>>()?;

    let treatments = schema
        .treatments()
        .iter()
        .enumerate()
        .map(|(k, &j)| MultiTreatment {
            column: schema.column(j).name.clone(),
            ttd: mean(&per_row.iter().map(|r| r.total[k]).collect::<Vec<_>>()),
            dtd: mean(&per_row.iter().map(|r| r.direct[k]).collect::<Vec<_>>()),
        })
        .collect();
    let effects = [0u8, 1u8]
        .into_iter()
        .map(|label| {
            let group: Vec<&MultiRow> = per_row.iter().filter(|r| r.y == f64::from(label)).collect();
            let pct = |f: fn(&MultiRow) -> f64| {
                (!group.is_empty()).then(|| 100.0 * mean(&group.iter().map(|r| f(r)).collect::<Vec<_>>()))
            };
            MultiLabelEffect {
                y_factual: label,
                rows: group.len(),
                ttd_e: pct(|r| r.flip_total),
                dtd_e: pct(|r| r.flip_direct),
            }
        })
        .collect();
    Ok(MultiReport { config: config.clone(), value_set_size: set_size, audited_rows: per_row.len(), treatments, effects })
}

/// Aggregated total disparity per treatment column.
pub fn ttd_multi(data: &Dataset, model: &Scm, config: &DisparityConfig) -> Result<Vec<f64>> {
    Ok(multi_audit(data, model, config)?.treatments.iter().map(|t| t.ttd).collect())
}

/// Aggregated label-effect percentages for `y^F = 0` and `y^F = 1`.
pub fn ttd_e_multi(data: &Dataset, model: &Scm, config: &DisparityConfig) -> Result<[Option<f64>; 2]> {
    let r = multi_audit(data, model, config)?;
    Ok([r.effects[0].ttd_e, r.effects[1].ttd_e])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{constant, noise, var};
    use crate::noise::NoiseSpec;
    use crate::schema::{ColumnSpec, Role};
    use crate::scm::Mechanism;
    use approx::assert_abs_diff_eq;

    fn gauss() -> NoiseSpec {
        NoiseSpec::Gaussian { mean: 0.0, variance: 1.0 }
    }

    fn schema(s_kind: Kind) -> FeatureSchema {
        FeatureSchema::new(vec![
            ColumnSpec::new("S", Role::Sensitive, s_kind),
            ColumnSpec::new("X", Role::Covariate, Kind::Continuous),
            ColumnSpec::new("Z", Role::Treatment, Kind::Continuous),
            ColumnSpec::new("Y", Role::Outcome, Kind::Binary),
        ])
        .unwrap()
    }

    /// Z = a·S + b·X + U_z with X = 1.5·S + U_x, Y = 1{Z + U_y >= 0} with logistic U_y.
    fn affine(a: f64, b: f64, s_noise: NoiseSpec, s_kind: Kind) -> Scm {
        Scm::new(
            schema(s_kind),
            vec![
                Mechanism::closed_form("S", noise()),
                Mechanism::closed_form("X", 1.5 * var("S") + noise()),
                Mechanism::closed_form("Z", a * var("S") + b * var("X") + noise()),
                Mechanism::threshold("Y", var("Z") + noise(), constant(0.0)),
            ],
            vec![s_noise, gauss(), gauss(), NoiseSpec::Logistic { location: 0.0, scale: 1.0 }],
        )
        .unwrap()
    }

    #[test]
    fn two_row_hand_example() {
        let m = affine(3.0, 0.0, NoiseSpec::Bernoulli { p: 0.5 }, Kind::Binary);
        let d = Dataset::from_rows(
            m.schema().clone(),
            &[Instance(vec![0.0, 0.0, 1.0, 1.0]), Instance(vec![0.0, 0.0, 2.0, 1.0])],
        )
        .unwrap();
        let d = d.concat(&Dataset::from_rows(m.schema().clone(), &[Instance(vec![1.0, 0.0, 0.0, 0.0])]).unwrap()).unwrap();
        let cfg = DisparityConfig::new("S", 0.0, 1.0);
        assert_eq!(ttd(&d, &m, &cfg).unwrap(), vec![3.0]);
        assert_eq!(dtd(&d, &m, &cfg).unwrap(), vec![3.0]);
    }

    #[test]
    fn direct_coefficient_regardless_of_mediation() {
        let m = affine(-2.0, 1.0, NoiseSpec::Bernoulli { p: 0.5 }, Kind::Binary);
        let d = m.sample(2000, 1).unwrap();
        let r = audit(&d, &m, &DisparityConfig::new("S", 0.0, 1.0)).unwrap();
        let z = r.treatment("Z").unwrap();
        assert_abs_diff_eq!(z.dtd.median, -2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(z.dtd.mean, -2.0, epsilon = 1e-9);
        // Mediated part adds 1.5 through X.
        assert_abs_diff_eq!(z.ttd.mean, -0.5, epsilon = 1e-9);
        let rows: usize = r.effects.iter().map(|e| e.rows).sum();
        assert_eq!(rows, r.audited_rows);
        for e in &r.effects {
            for v in [e.ttd_e, e.dtd_e].into_iter().flatten() {
                assert!((0.0..=100.0).contains(&v));
            }
        }
    }

    #[test]
    fn empty_group_and_bad_pair() {
        let m = affine(1.0, 0.0, NoiseSpec::Bernoulli { p: 0.5 }, Kind::Binary);
        let d = Dataset::from_rows(m.schema().clone(), &[Instance(vec![1.0, 0.0, 0.0, 0.0])]).unwrap();
        assert!(matches!(audit(&d, &m, &DisparityConfig::new("S", 0.0, 1.0)), Err(Error::EmptyGroup { .. })));
        assert!(matches!(audit(&d, &m, &DisparityConfig::new("S", 1.0, 1.0)), Err(Error::InvalidConfig(_))));
        assert!(matches!(audit(&d, &m, &DisparityConfig::new("Q", 1.0, 0.0)), Err(Error::UnknownColumn(_))));
    }

    /// Four rows against `Y = 1{Z >= 0}` with Z = 2S + U and a deterministic outcome.
    #[test]
    fn four_row_label_effects() {
        let m = Scm::new(
            schema(Kind::Binary),
            vec![
                Mechanism::closed_form("S", noise()),
                Mechanism::closed_form("X", noise()),
                Mechanism::closed_form("Z", 2.0 * var("S") + noise()),
                Mechanism::threshold("Y", var("Z"), constant(0.0)),
            ],
            vec![NoiseSpec::Bernoulli { p: 0.5 }, gauss(), gauss(), NoiseSpec::PointMass { value: 0.0 }],
        )
        .unwrap();
        // Z shifts by +2 under do(S -> 1): only Z = -1 crosses zero.
        let rows = [
            Instance(vec![0.0, 0.0, -1.0, 0.0]),
            Instance(vec![0.0, 0.0, -3.0, 0.0]),
            Instance(vec![0.0, 0.0, 1.0, 1.0]),
            Instance(vec![0.0, 0.0, 4.0, 1.0]),
        ];
        let d = Dataset::from_rows(m.schema().clone(), &rows).unwrap();
        let d = d.concat(&Dataset::from_rows(m.schema().clone(), &[Instance(vec![1.0, 0.0, 0.0, 1.0])]).unwrap()).unwrap();
        let cfg = DisparityConfig::new("S", 0.0, 1.0);
        assert_eq!(ttd_e(&d, &m, &cfg).unwrap(), [Some(50.0), Some(0.0)]);
        assert_eq!(dtd_e(&d, &m, &cfg).unwrap(), [Some(50.0), Some(0.0)]);
    }

    #[test]
    fn null_path_gives_zero() {
        let m = affine(0.0, 0.0, NoiseSpec::Bernoulli { p: 0.5 }, Kind::Binary);
        let d = m.sample(300, 2).unwrap();
        let r = audit(&d, &m, &DisparityConfig::new("S", 1.0, 0.0)).unwrap();
        let z = r.treatment("Z").unwrap();
        assert_eq!((z.ttd.mean, z.dtd.mean), (0.0, 0.0));
        assert!(r.effects.iter().all(|e| e.ttd_e == Some(0.0) && e.dtd_e == Some(0.0)));
    }

    #[test]
    fn aggregators_follow_printed_constants() {
        // |S| = 3, shifts {+1, +3}.
        assert_abs_diff_eq!(aggregate_deltas(&[1.0, 3.0], Aggregator::Max, 3, false).unwrap(), 3.0);
        assert_abs_diff_eq!(aggregate_deltas(&[1.0, 3.0], Aggregator::Var, 3, false).unwrap(), 10.0 / 3.0);
        assert_abs_diff_eq!(aggregate_deltas(&[1.0, 3.0], Aggregator::Avg, 3, false).unwrap(), 4.0 / 3.0);
        assert_abs_diff_eq!(aggregate_deltas(&[1.0, 3.0], Aggregator::Avg, 3, true).unwrap(), 2.0);
        assert!(aggregate_deltas(&[1.0], Aggregator::None, 2, false).is_err());
        assert_eq!(aggregate_flips(&[false, true], OutcomeAggregator::Mean, 0), 0.5);
        assert_eq!(aggregate_flips(&[false, true], OutcomeAggregator::Variance, 0), 0.25);
        assert_eq!(aggregate_flips(&[false, true], OutcomeAggregator::WorstCase, 1), 1.0);
    }

    #[test]
    fn three_valued_sensitive_attribute() {
        // Z = S + U with S in {0, 1, 2}; from S = 0 the shifts are {+1, +2}.
        let m = affine(1.0, 0.0, NoiseSpec::Categorical { probs: vec![0.3, 0.3, 0.4] }, Kind::Categorical { cardinality: 3 });
        let d = m.sample(400, 6).unwrap();
        let cfg = DisparityConfig::new("S", 0.0, 1.0).with_aggregator(Aggregator::Max);
        let r = multi_audit(&d, &m, &cfg).unwrap();
        assert_eq!(r.value_set_size, 3);
        assert_abs_diff_eq!(r.treatments[0].ttd, 2.0, epsilon = 1e-9);
        let var = multi_audit(&d, &m, &DisparityConfig { aggregator: Aggregator::Var, ..cfg.clone() }).unwrap();
        assert_abs_diff_eq!(var.treatments[0].ttd, 5.0 / 3.0, epsilon = 1e-9);
        let avg = multi_audit(&d, &m, &DisparityConfig { aggregator: Aggregator::Avg, ..cfg }).unwrap();
        assert_abs_diff_eq!(avg.treatments[0].ttd, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn binary_reduction() {
        let m = affine(-2.0, 1.0, NoiseSpec::Bernoulli { p: 0.5 }, Kind::Binary);
        let d = m.sample(500, 3).unwrap();
        let cfg = DisparityConfig::new("S", 0.0, 1.0).with_statistic(Statistic::Mean).with_delta(Delta::AbsDifference);
        let abs_ttd = ttd(&d, &m, &cfg).unwrap();
        for agg in [Aggregator::Max, Aggregator::Avg] {
            let multi = ttd_multi(&d, &m, &cfg.clone().with_aggregator(agg)).unwrap();
            assert_abs_diff_eq!(multi[0], abs_ttd[0], epsilon = 1e-12);
        }
        let single = ttd_e(&d, &m, &cfg).unwrap();
        let multi = ttd_e_multi(&d, &m, &cfg.clone().with_aggregator(Aggregator::Max)).unwrap();
        assert_eq!(single, multi);
    }

    #[test]
    fn joint_flip_enumerates_product() {
        let schema = FeatureSchema::new(vec![
            ColumnSpec::new("S1", Role::Sensitive, Kind::Binary),
            ColumnSpec::new("S2", Role::Sensitive, Kind::Binary),
            ColumnSpec::new("Z", Role::Treatment, Kind::Continuous),
            ColumnSpec::new("Y", Role::Outcome, Kind::Binary),
        ])
        .unwrap();
        let m = Scm::new(
            schema,
            vec![
                Mechanism::closed_form("S1", noise()),
                Mechanism::closed_form("S2", noise()),
                Mechanism::closed_form("Z", var("S1") + 2.0 * var("S2") + noise()),
                Mechanism::closed_form("Y", noise()),
            ],
            vec![NoiseSpec::Bernoulli { p: 0.5 }, NoiseSpec::Bernoulli { p: 0.5 }, gauss(), NoiseSpec::Bernoulli { p: 0.5 }],
        )
        .unwrap();
        let d = m.sample(200, 1).unwrap();
        let mut cfg = DisparityConfig::new("S1", 0.0, 1.0).with_aggregator(Aggregator::Max);
        cfg.multi_columns = vec!["S1".into(), "S2".into()];
        cfg.flip = FlipStrategy::Joint;
        let r = multi_audit(&d, &m, &cfg).unwrap();
        assert_eq!(r.value_set_size, 4);
        // From (0, 0) the largest shift is +3, from (0, 1) it is 2.
        let rows00 = d.rows().filter(|r| r.0[0] == 0.0 && r.0[1] == 0.0).count() as f64;
        let rows01 = d.rows().filter(|r| r.0[0] == 0.0 && r.0[1] == 1.0).count() as f64;
        assert_abs_diff_eq!(r.treatments[0].ttd, (3.0 * rows00 + 2.0 * rows01) / (rows00 + rows01), epsilon = 1e-9);
        cfg.flip = FlipStrategy::Single;
        assert_eq!(multi_audit(&d, &m, &cfg).unwrap().value_set_size, 3);
    }

    #[test]
    fn report_serialisations() {
        let m = affine(1.0, 0.5, NoiseSpec::Bernoulli { p: 0.5 }, Kind::Binary);
        let d = m.sample(100, 4).unwrap();
        let r = audit(&d, &m, &DisparityConfig::new("S", 0.0, 1.0)).unwrap();
        let back: DisparityReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 + 4);
        assert!(csv.starts_with("metric,column,y_factual,unit,mean,median,value,rows"));
    }
}
