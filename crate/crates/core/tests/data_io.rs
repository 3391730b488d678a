use std::path::{Path, PathBuf};

use treatfair::data::{load_csv, read_csv, save_csv, SchemaConfig};
use treatfair::schema::Role;
use treatfair::Error;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn german() -> (treatfair::data::Dataset, SchemaConfig) {
    let cfg = SchemaConfig::load(fixtures().join("german_shaped.schema.json")).unwrap();
    (load_csv(fixtures().join("german_shaped.csv"), &cfg).unwrap(), cfg)
}

#[test]
fn german_shaped_roles_and_missing_rows() {
    let (data, _) = german();
    let schema = data.schema();
    let treatments: Vec<&str> =
        schema.indices_with_role(Role::Treatment).into_iter().map(|i| schema.column(i).name.as_str()).collect();
    assert_eq!(treatments, ["duration", "credit_amount", "installment_rate"]);
    assert_eq!(schema.indices_with_role(Role::Sensitive).len(), 2);
    assert_eq!(schema.column(schema.outcome()).name, "class");
    assert_eq!(data.n_rows(), 239);
    assert_eq!(data.provenance().dropped_rows, 1);
}

#[test]
fn categorical_codes_map_to_indices() {
    let (data, _) = german();
    let savings = data.column_named("savings_status").unwrap();
    assert!(savings.iter().all(|&v| v.fract() == 0.0 && (0.0..5.0).contains(&v)));
    let class = data.column_named("class").unwrap();
    let good = class.iter().filter(|&&v| v == 1.0).count();
    assert!(good > class.len() / 2);
}

#[test]
fn save_load_round_trip_is_identical() {
    let (data, cfg) = german();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    save_csv(&data, &path).unwrap();
    let back = load_csv(&path, &cfg).unwrap();
    assert_eq!(back, data);
    assert_eq!(back.provenance().dropped_rows, 0);

    let again = dir.path().join("again.csv");
    save_csv(&back, &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn header_order_is_preserved() {
    let (data, _) = german();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    save_csv(&data, &path).unwrap();
    let written = std::fs::read_to_string(&path).unwrap();
    let original = std::fs::read_to_string(fixtures().join("german_shaped.csv")).unwrap();
    assert_eq!(written.lines().next(), original.lines().next());
}

#[test]
fn three_row_file_with_one_gap() {
    let cfg = SchemaConfig::from_json(
        r#"{"sensitive":["g"],"covariates":["x"],"treatments":["t"],"outcome":"y","kinds":{"g":"binary"}}"#,
    )
    .unwrap();
    let csv = "g,x,t,y\n0,1.0,3,1\n1,NA,4,0\n1,2.0,5,0\n";
    let data = read_csv(csv.as_bytes(), &cfg).unwrap();
    assert_eq!(data.n_rows(), 2);
    assert_eq!(data.provenance().dropped_rows, 1);
    assert_eq!(data.column_named("t").unwrap(), [3.0, 5.0]);
}

#[test]
fn schema_without_treatment_is_rejected() {
    let cfg = SchemaConfig::from_json(r#"{"sensitive":["g"],"treatments":[],"outcome":"y"}"#).unwrap();
    assert!(matches!(read_csv("g,y\n0,1\n".as_bytes(), &cfg), Err(Error::RoleMissing(_))));
}

#[test]
fn non_binary_outcome_is_rejected() {
    let cfg = SchemaConfig::from_json(r#"{"sensitive":["g"],"treatments":["t"],"outcome":"y","kinds":{"g":"binary"}}"#)
        .unwrap();
    let err = read_csv("g,t,y\n0,1,2\n".as_bytes(), &cfg).unwrap_err();
    assert!(matches!(err, Error::OutcomeNotBinary { .. }), "{err:?}");
}

#[test]
fn unknown_code_is_reported_with_line() {
    let cfg = SchemaConfig::load(fixtures().join("german_shaped.schema.json")).unwrap();
    let text = std::fs::read_to_string(fixtures().join("german_shaped.csv")).unwrap().replacen("A11", "A19", 1);
    match read_csv(text.as_bytes(), &cfg) {
        Err(Error::NonNumericCell { column, value, .. }) => {
            assert_eq!(column, "checking_status");
            assert_eq!(value, "A19");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn schema_config_round_trips_through_schema() {
    let (data, cfg) = german();
    let rebuilt = SchemaConfig::from_schema(data.schema());
    assert_eq!(rebuilt.to_schema().unwrap(), cfg.to_schema().unwrap());
}
