use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use treatfair::data::{load_csv, save_csv, Dataset, SchemaConfig};
use treatfair::estimators::{self, Basis, EstimatorConfig, GoodnessReport, TermSelection};
use treatfair::metrics::{
    self, Aggregator, Delta, DisparityConfig, FlipStrategy, MultiReport, OutcomeAggregator, Statistic,
};
use treatfair::mitigation::{self, EsiFormula, LossReport, NonHarmCheck, TreatmentPolicy};
use treatfair::predictors::{self, Criterion, PredictorMetrics, PredictorModel, TrainConfig};
use treatfair::schema::FeatureSchema;
use treatfair::scm::Scm;
use treatfair::synth::{self, GaussianParam, OutcomeVariant, SynthConfig};
use treatfair::{Error, Result};

use crate::output::{ensure_parent, sibling, write_json, write_sidecar, Provenance};
use crate::*;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Audit(a) => audit(a),
        Command::Mitigate(a) => mitigate(a),
        Command::Risk(a) => risk(a),
        Command::Losses(a) => losses(a),
        Command::Predict(a) => predict(a),
    }
}

fn load(input: &DataArgs, prov: &mut Provenance) -> Result<Dataset> {
    let cfg = SchemaConfig::load(&input.schema)?;
    prov.input("schema", &input.schema)?;
    prov.input("data", &input.data)?;
    load_csv(&input.data, &cfg)
}

fn read_json(path: &Path) -> Result<Value> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// The `model` member of a command output, or the whole document.
fn payload(mut doc: Value) -> Value {
    match doc.get_mut("model") {
        Some(inner) => inner.take(),
        None => doc,
    }
}

fn load_model(args: &ModelArgs, data_path: &Path, prov: &mut Provenance) -> Result<Scm> {
    if args.model == "oracle" {
        let path = args.synth_config.clone().unwrap_or_else(|| sibling(data_path, "synth.json"));
        prov.input("synth_config", &path)?;
        let cfg: SynthConfig = serde_json::from_value(read_json(&path)?)?;
        return synth::build_oracle(&cfg);
    }
    let path = PathBuf::from(&args.model);
    prov.input("model", &path)?;
    Ok(serde_json::from_value(payload(read_json(&path)?))?)
}

/// Parses a sensitive value given as a category label or a numeric code.
fn parse_value(schema: &FeatureSchema, column: &str, text: &str) -> Result<f64> {
    let spec = schema.column(schema.require(column)?);
    if let Some(i) = spec.labels.as_ref().and_then(|l| l.iter().position(|x| x == text)) {
        return Ok(i as f64);
    }
    text.parse::<f64>().map_err(|_| Error::InvalidConfig(format!("`{text}` is not a value of `{column}`")))
}

fn sensitive_or_default(schema: &FeatureSchema, name: &Option<String>) -> Result<String> {
    match name {
        Some(n) => {
            schema.require(n)?;
            Ok(n.clone())
        }
        None => {
            let first = schema.sensitive()[0];
            Ok(schema.column(first).name.clone())
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = SynthConfig {
        beta: a.beta,
        gamma: a.gamma,
        delta: a.delta,
        eta: a.eta,
        n: a.n,
        seed: a.seed,
        outcome_variant: match a.variant {
            Variant::Noisy => OutcomeVariant::NoisyThreshold,
            Variant::Deterministic => OutcomeVariant::DeterministicThreshold,
        },
        gaussian_param: match a.gaussian {
            GaussianReading::StdDev => GaussianParam::StdDev,
            GaussianReading::Variance => GaussianParam::Variance,
        },
    };
    let data = synth::generate(&cfg)?;
    ensure_parent(&a.out)?;
    save_csv(&data, &a.out)?;
    SchemaConfig::from_schema(data.schema()).save(sibling(&a.out, "schema.json"))?;
    let prov = Provenance::new("simulate", Some(a.seed));
    write_json(&sibling(&a.out, "synth.json"), &prov, &cfg)?;
    write_sidecar(&a.out, &prov)
}

#[derive(Serialize)]
struct FitOutput<'a> {
    config: &'a EstimatorConfig,
    fit_rows: usize,
    holdout_rows: usize,
    goodness: GoodnessReport,
    model: &'a Scm,
}

fn fit(a: FitArgs) -> Result<()> {
    let mut prov = Provenance::new("fit", Some(a.seed));
    let data = load(&a.input, &mut prov)?;
    let mut cfg = EstimatorConfig {
        seed: a.seed,
        basis: match a.basis {
            BasisArg::Linear => Basis::Linear,
            BasisArg::Pairwise => Basis::LinearPlusPairwise,
        },
        selection: match a.selection {
            SelectionArg::Bic => TermSelection::Bic,
            SelectionArg::None => TermSelection::None,
        },
        regularization: a.regularization,
        ..EstimatorConfig::default()
    };
    for edge in &a.exclude_edges {
        let (parent, child) = edge
            .split_once(':')
            .ok_or_else(|| Error::InvalidConfig(format!("edge `{edge}` is not PARENT:CHILD")))?;
        cfg = cfg.without_edge(parent, child);
    }
    cfg.validate()?;
    let (fit_data, holdout) = if a.all_rows {
        (data.clone(), data)
    } else {
        let (train, _, test) = estimators::split(&data, &cfg)?;
        (train, test)
    };
    let model = estimators::fit(&fit_data, fit_data.schema(), &cfg)?;
    let goodness = estimators::goodness(&model, &holdout)?;
    ensure_parent(&a.out)?;
    let out = FitOutput { config: &cfg, fit_rows: fit_data.n_rows(), holdout_rows: holdout.n_rows(), goodness, model: &model };
    write_json(&a.out, &prov, &out)
}

#[derive(Serialize)]
struct AuditOutput<'a, R: Serialize> {
    predictor_filtered: bool,
    report: &'a R,
}

fn multi_csv(report: &MultiReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "column", "y_factual", "value", "rows"])?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
    for t in &report.treatments {
        w.write_record(["ttd_multi", &t.column, "", &format!("{}", t.ttd), &report.audited_rows.to_string()])?;
        w.write_record(["dtd_multi", &t.column, "", &format!("{}", t.dtd), &report.audited_rows.to_string()])?;
    }
    for e in &report.effects {
        let y = e.y_factual.to_string();
        w.write_record(["ttd_e_multi", "", &y, &opt(e.ttd_e), &e.rows.to_string()])?;
        w.write_record(["dtd_e_multi", "", &y, &opt(e.dtd_e), &e.rows.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn load_predictor(path: &Path, prov: &mut Provenance) -> Result<PredictorModel> {
    prov.input("predictor", path)?;
    PredictorModel::from_json(&payload(read_json(path)?).to_string())
}

fn audit(a: AuditArgs) -> Result<()> {
    let mut prov = Provenance::new("audit", None);
    let data = load(&a.input, &mut prov)?;
    let model = load_model(&a.model, &a.input.data, &mut prov)?;
    let schema = data.schema();
    let sensitive = sensitive_or_default(schema, &a.sensitive)?;
    let factual = parse_value(schema, &sensitive, &a.group_pair[0])?;
    let counterfactual = parse_value(schema, &sensitive, &a.group_pair[1])?;
    let mut cfg = DisparityConfig::new(&sensitive, factual, counterfactual)
        .with_statistic(match a.stats {
            StatArg::Mean => Statistic::Mean,
            StatArg::Median => Statistic::Median,
        })
        .with_delta(match a.delta {
            DeltaArg::Difference => Delta::Difference,
            DeltaArg::Abs => Delta::AbsDifference,
        })
        .with_aggregator(match a.multi {
            MultiArg::None => Aggregator::None,
            MultiArg::Avg => Aggregator::Avg,
            MultiArg::Max => Aggregator::Max,
            MultiArg::Var => Aggregator::Var,
        });
    cfg.flip = match a.flip {
        FlipArg::Single => FlipStrategy::Single,
        FlipArg::Joint => FlipStrategy::Joint,
    };
    cfg.outcome_aggregator = match a.outcome_aggregator {
        OutcomeAggArg::WorstCase => OutcomeAggregator::WorstCase,
        OutcomeAggArg::Mean => OutcomeAggregator::Mean,
        OutcomeAggArg::Variance => OutcomeAggregator::Variance,
    };
    cfg.multi_columns = a.multi_columns.clone();
    cfg.corrected_normalizer = a.corrected_normalizer;

    ensure_parent(&a.out)?;
    let csv_path = sibling(&a.out, "csv");
    if a.multi != MultiArg::None {
        if a.predictor.is_some() {
            return Err(Error::InvalidConfig("--predictor cannot be combined with --multi".into()));
        }
        let report = metrics::multi_audit(&data, &model, &cfg)?;
        write_json(&a.out, &prov, &AuditOutput { predictor_filtered: false, report: &report })?;
        return write_text(&csv_path, &multi_csv(&report)?);
    }
    let report = match &a.predictor {
        Some(path) => {
            let predictor = load_predictor(path, &mut prov)?;
            predictors::audit_under_policy(&data, &model, &predictor, &cfg)?
        }
        None => metrics::audit(&data, &model, &cfg)?,
    };
    write_json(&a.out, &prov, &AuditOutput { predictor_filtered: a.predictor.is_some(), report: &report })?;
    write_text(&csv_path, &report.to_csv()?)
}

#[derive(Serialize)]
struct MitigateOutput {
    sensitive_column: String,
    disadvantaged: f64,
    advantaged: f64,
    intervened_rows: usize,
    non_harm: NonHarmCheck,
    non_harm_holds: bool,
}

fn mitigate(a: MitigateArgs) -> Result<()> {
    let mut prov = Provenance::new("mitigate", None);
    let data = load(&a.input, &mut prov)?;
    let model = load_model(&a.model, &a.input.data, &mut prov)?;
    let sensitive = sensitive_or_default(data.schema(), &a.sensitive)?;
    let disadvantaged = parse_value(data.schema(), &sensitive, &a.disadvantaged)?;
    let advantaged = parse_value(data.schema(), &sensitive, &a.advantaged)?;
    let fair = mitigation::build_fair_dataset(&data, &model, &sensitive, disadvantaged, advantaged)?;
    if a.require_non_harm {
        fair.non_harm.ensure()?;
    }
    ensure_parent(&a.out)?;
    save_csv(&fair.data, &a.out)?;
    let summary = MitigateOutput {
        sensitive_column: sensitive,
        disadvantaged,
        advantaged,
        intervened_rows: fair.intervened_rows,
        non_harm: fair.non_harm,
        non_harm_holds: fair.non_harm.holds(),
    };
    write_json(&sibling(&a.out, "json"), &prov, &summary)
}

#[derive(Serialize)]
struct RiskGroup {
    group: f64,
    rows: usize,
    mean_score: f64,
}

#[derive(Serialize)]
struct RiskOutput {
    policy: TreatmentPolicy,
    rows: usize,
    groups: Vec<RiskGroup>,
    /// Largest pairwise Kolmogorov distance between group score distributions.
    kolmogorov_distance: f64,
}

fn risk(a: RiskArgs) -> Result<()> {
    let mut prov = Provenance::new("risk", Some(a.seed));
    let data = load(&a.input, &mut prov)?;
    let model = load_model(&a.model, &a.input.data, &mut prov)?;
    let schema = data.schema();
    let sensitive = sensitive_or_default(schema, &a.sensitive)?;
    let group = |required: bool| -> Result<f64> {
        match &a.group {
            Some(g) => parse_value(schema, &sensitive, g),
            None if required => Err(Error::InvalidConfig("this policy needs --group".into())),
            None => Ok(0.0),
        }
    };
    let policy = match a.policy {
        PolicyArg::Factual => TreatmentPolicy::factual(&sensitive),
        PolicyArg::Empirical => {
            TreatmentPolicy::empirical(&sensitive, group(true)?, a.seed).with_sample_count(a.samples)
        }
        PolicyArg::Counterfactual => TreatmentPolicy::sensitive_counterfactual(&sensitive, group(true)?),
    };
    let reference = match &a.reference {
        Some(path) => {
            prov.input("reference", path)?;
            load_csv(path, &SchemaConfig::load(&a.input.schema)?)?
        }
        None => data.clone(),
    };
    let scores = mitigation::risk_scores(&data, &model, &policy, &reference)?;

    let s = schema.require(&sensitive)?;
    let mut csv = String::from("group,threshold,cdf\n");
    for (t, f) in mitigation::risk_cdf(&scores) {
        csv.push_str(&format!("all,{t},{f}\n"));
    }
    let mut groups = Vec::new();
    let mut per_group: Vec<Vec<f64>> = Vec::new();
    for v in data.support(s) {
        let g: Vec<f64> = data.rows_where(s, v).into_iter().map(|i| scores[i]).collect();
        for (t, f) in mitigation::risk_cdf(&g) {
            csv.push_str(&format!("{v},{t},{f}\n"));
        }
        groups.push(RiskGroup { group: v, rows: g.len(), mean_score: g.iter().sum::<f64>() / g.len() as f64 });
        per_group.push(g);
    }
    let mut ks: f64 = 0.0;
    for i in 0..per_group.len() {
        for j in i + 1..per_group.len() {
            ks = ks.max(mitigation::kolmogorov_distance(&per_group[i], &per_group[j]));
        }
    }
    ensure_parent(&a.out)?;
    write_text(&a.out, &csv)?;
    let out = RiskOutput { policy, rows: scores.len(), groups, kolmogorov_distance: ks };
    write_json(&sibling(&a.out, "json"), &prov, &out)
}

fn losses(a: LossesArgs) -> Result<()> {
    let mut prov = Provenance::new("losses", None);
    let data = load(&a.input, &mut prov)?;
    let group = sensitive_or_default(data.schema(), &a.group)?;
    let formula = match a.formula {
        FormulaArg::RateDuration => EsiFormula::RateDuration {
            rate_percent: a.rate_percent,
            duration_column: a
                .duration_column
                .clone()
                .ok_or_else(|| Error::InvalidConfig("rate-duration needs --duration-column".into()))?,
        },
        FormulaArg::AnnuityAmount => EsiFormula::AnnuityAmount {
            annuity_column: a
                .annuity_column
                .clone()
                .ok_or_else(|| Error::InvalidConfig("annuity-amount needs --annuity-column".into()))?,
            duration_years: a.years,
        },
    };
    let report = LossReport::compute(&a.tag, &data, &a.amount, &formula, &group)?;
    ensure_parent(&a.out)?;
    write_json(&a.out, &prov, &serde_json::json!({ "group_column": group, "formula": formula, "losses": report }))
}

#[derive(Serialize)]
struct PredictOutput<'a> {
    train_metrics: PredictorMetrics,
    test_metrics: PredictorMetrics,
    model: &'a PredictorModel,
}

fn predict(a: PredictArgs) -> Result<()> {
    let mut prov = Provenance::new("predict", Some(a.seed));
    let data = load(&a.input, &mut prov)?;
    let sensitive = sensitive_or_default(data.schema(), &a.sensitive)?;
    let cfg = TrainConfig { train_fraction: a.train_fraction, seed: a.seed, regularization: a.regularization };
    let mut model = PredictorModel::train(&data, &sensitive, &cfg)?;
    let (train, test) = model.split(&data)?;
    let criterion = match a.criterion {
        CriterionArg::None => None,
        CriterionArg::Dp => Some(Criterion::DemographicParity),
        CriterionArg::Eod => Some(Criterion::EqualizedOdds),
    };
    if let Some(c) = criterion {
        model = predictors::postprocess(&model, &data, c)?;
    }
    let out = PredictOutput {
        train_metrics: predictors::evaluate(&model, &train)?,
        test_metrics: predictors::evaluate(&model, &test)?,
        model: &model,
    };
    ensure_parent(&a.out)?;
    write_json(&a.out, &prov, &out)
}
