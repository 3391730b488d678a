//! Datasets and their CSV / schema-config boundary.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{ColumnSpec, FeatureSchema, Instance, Kind, Role};

/// Where a dataset came from and what was done to it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<String>,
    pub seed: Option<u64>,
    pub dropped_rows: usize,
    pub history: Vec<String>,
}

/// Column-major table of encoded values conforming to a [`FeatureSchema`].
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: FeatureSchema,
    columns: Vec<Vec<f64>>,
    /// Header order used when writing; a permutation of schema indices.
    output_order: Vec<usize>,
    provenance: Provenance,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.columns == other.columns
    }
}

impl Dataset {
    pub fn new(schema: FeatureSchema, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} columns for a schema of {}",
                columns.len(),
                schema.len()
            )));
        }
        let n = columns.first().map_or(0, Vec::len);
        for (spec, col) in schema.columns().iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::SchemaMismatch(format!("column `{}` has {} rows, expected {n}", spec.name, col.len())));
            }
            if let Some(bad) = col.iter().find(|v| !spec.kind.admits(**v)) {
                return Err(Error::SchemaMismatch(format!(
                    "value {bad} is not a valid {:?} value for `{}`",
                    spec.kind, spec.name
                )));
            }
        }
        let output_order = (0..schema.len()).collect();
        Ok(Self { schema, columns, output_order, provenance: Provenance::default() })
    }

    pub fn from_rows(schema: FeatureSchema, rows: &[Instance]) -> Result<Self> {
        let mut columns = vec![Vec::with_capacity(rows.len()); schema.len()];
        for row in rows {
            if row.0.len() != schema.len() {
                return Err(Error::SchemaMismatch(format!("row of width {} for schema of {}", row.0.len(), schema.len())));
            }
            for (col, v) in columns.iter_mut().zip(&row.0) {
                col.push(*v);
            }
        }
        Self::new(schema, columns)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    pub fn column(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column_named(&self, name: &str) -> Result<&[f64]> {
        let i = self.schema.index_of(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        Ok(&self.columns[i])
    }

    pub fn row(&self, i: usize) -> Instance {
        Instance(self.columns.iter().map(|c| c[i]).collect())
    }

    pub fn rows(&self) -> impl Iterator<Item = Instance> + '_ {
        (0..self.n_rows()).map(|i| self.row(i))
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn output_order(&self) -> &[usize] {
        &self.output_order
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let columns = self.columns.iter().map(|c| indices.iter().map(|&i| c[i]).collect()).collect();
        Dataset {
            schema: self.schema.clone(),
            columns,
            output_order: self.output_order.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> Dataset {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| keep(i)).collect();
        self.subset(&idx)
    }

    /// Indices of rows whose `column` equals `value`.
    pub fn rows_where(&self, column: usize, value: f64) -> Vec<usize> {
        self.columns[column].iter().enumerate().filter(|(_, v)| **v == value).map(|(i, _)| i).collect()
    }

    /// Sorted distinct values of a column.
    pub fn support(&self, column: usize) -> Vec<f64> {
        let mut v = self.columns[column].clone();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Replaces one row; values must be valid for the schema.
    pub fn set_row(&mut self, i: usize, row: &Instance) -> Result<()> {
        self.schema.validate_row(&row.0)?;
        for (col, v) in self.columns.iter_mut().zip(&row.0) {
            col[i] = *v;
        }
        Ok(())
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.schema != other.schema {
            return Err(Error::SchemaMismatch("cannot concatenate datasets with different schemas".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.columns.iter_mut().zip(&other.columns) {
            a.extend_from_slice(b);
        }
        Ok(out)
    }
}

/// Declared kind of a column in a schema config file: `"continuous"`,
/// `"binary"`, `"categorical"` (levels taken from the code map) or
/// `{"categorical": k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KindDecl {
    Named(String),
    Categorical { categorical: usize },
}

/// Role map read from a JSON document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub sensitive: Vec<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    pub treatments: Vec<String>,
    pub outcome: String,
    #[serde(default)]
    pub kinds: BTreeMap<String, KindDecl>,
    #[serde(default)]
    pub categorical_codes: BTreeMap<String, Vec<String>>,
}

impl SchemaConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = File::create(path)?;
        f.write_all(serde_json::to_string_pretty(self)?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// Reconstructs the config describing an existing schema.
    pub fn from_schema(schema: &FeatureSchema) -> Self {
        let names = |role| {
            schema.indices_with_role(role).into_iter().map(|i| schema.column(i).name.clone()).collect()
        };
        let mut kinds = BTreeMap::new();
        let mut codes = BTreeMap::new();
        for c in schema.columns() {
            let decl = match c.kind {
                Kind::Continuous => KindDecl::Named("continuous".into()),
                Kind::Binary => KindDecl::Named("binary".into()),
                Kind::Categorical { cardinality } => KindDecl::Categorical { categorical: cardinality },
            };
            kinds.insert(c.name.clone(), decl);
            if let Some(labels) = &c.labels {
                codes.insert(c.name.clone(), labels.clone());
            }
        }
        SchemaConfig {
            sensitive: names(Role::Sensitive),
            covariates: names(Role::Covariate),
            treatments: names(Role::Treatment),
            outcome: schema.column(schema.outcome()).name.clone(),
            kinds,
            categorical_codes: codes,
        }
    }

    pub fn to_schema(&self) -> Result<FeatureSchema> {
        if self.sensitive.is_empty() {
            return Err(Error::RoleMissing("sensitive"));
        }
        if self.treatments.is_empty() {
            return Err(Error::RoleMissing("treatment"));
        }
        if self.outcome.is_empty() {
            return Err(Error::RoleMissing("outcome"));
        }
        let mut columns = Vec::new();
        let blocks = [
            (Role::Sensitive, self.sensitive.clone()),
            (Role::Covariate, self.covariates.clone()),
            (Role::Treatment, self.treatments.clone()),
            (Role::Outcome, vec![self.outcome.clone()]),
        ];
        for (role, names) in blocks {
            for name in names {
                let labels = self.categorical_codes.get(&name).cloned();
                let kind = match self.kinds.get(&name) {
                    None if role == Role::Outcome => Kind::Binary,
                    None => match &labels {
                        Some(l) => Kind::Categorical { cardinality: l.len() },
                        None => Kind::Continuous,
                    },
                    Some(KindDecl::Categorical { categorical }) => Kind::Categorical { cardinality: *categorical },
                    Some(KindDecl::Named(n)) => match n.as_str() {
                        "continuous" => Kind::Continuous,
                        "binary" => Kind::Binary,
                        "categorical" => Kind::Categorical {
                            cardinality: labels.as_ref().map(Vec::len).ok_or_else(|| {
                                Error::InvalidConfig(format!(
                                    "categorical column `{name}` needs a code list or an explicit level count"
                                ))
                            })?,
                        },
                        other => return Err(Error::InvalidConfig(format!("unknown kind `{other}` for `{name}`"))),
                    },
                };
                if role == Role::Outcome && kind != Kind::Binary {
                    return Err(Error::InvalidConfig(format!("outcome `{name}` must be binary")));
                }
                columns.push(ColumnSpec { name, role, kind, labels });
            }
        }
        for name in self.kinds.keys().chain(self.categorical_codes.keys()) {
            if !columns.iter().any(|c| &c.name == name) {
                return Err(Error::InvalidConfig(format!("`{name}` has a kind or code list but no role")));
            }
        }
        FeatureSchema::new(columns)
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "N/A" | "NaN" | "nan" | "null" | "NULL" | "?")
}

/// Reads a CSV file, keeping only the columns named in `config`.
pub fn load_csv(path: impl AsRef<Path>, config: &SchemaConfig) -> Result<Dataset> {
    let path = path.as_ref();
    let mut data = read_csv(File::open(path)?, config)?;
    data.provenance.source = Some(path.display().to_string());
    Ok(data)
}

/// Like [`load_csv`] over any reader.
pub fn read_csv<R: Read>(reader: R, config: &SchemaConfig) -> Result<Dataset> {
    let schema = config.to_schema()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let header_pos: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let positions: Vec<usize> = schema
        .names()
        .map(|n| header_pos.get(n).copied().ok_or_else(|| Error::UnknownColumn(n.to_string())))
        .collect::<Result<_>>()?;
    let code_maps: Vec<Option<HashMap<&str, usize>>> = schema
        .columns()
        .iter()
        .map(|c| c.labels.as_ref().map(|l| l.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()))
        .collect();
    let outcome = schema.outcome();

    let mut columns = vec![Vec::new(); schema.len()];
    let mut dropped = 0;
    let mut row = vec![0.0; schema.len()];
    for (rec_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let line = rec_idx + 2;
        let cells: Vec<&str> = positions.iter().map(|&p| record.get(p).unwrap_or("")).collect();
        if cells.iter().any(|c| is_missing(c)) {
            dropped += 1;
            continue;
        }
        for (j, cell) in cells.iter().enumerate() {
            let spec = schema.column(j);
            let cell = cell.trim();
            let non_numeric = || Error::NonNumericCell { line, column: spec.name.clone(), value: cell.to_string() };
            let value = match &code_maps[j] {
                Some(map) => *map.get(cell).ok_or_else(non_numeric)? as f64,
                None => cell.parse::<f64>().map_err(|_| non_numeric())?,
            };
            if j == outcome && value != 0.0 && value != 1.0 {
                return Err(Error::OutcomeNotBinary { column: spec.name.clone(), value });
            }
            if !spec.kind.admits(value) {
                return Err(Error::SchemaMismatch(format!(
                    "line {line}: value {value} is not a valid {:?} value for `{}`",
                    spec.kind, spec.name
                )));
            }
            row[j] = value;
        }
        for (col, v) in columns.iter_mut().zip(&row) {
            col.push(*v);
        }
    }

    let mut order: Vec<usize> = (0..schema.len()).collect();
    order.sort_by_key(|&j| positions[j]);
    let mut data = Dataset::new(schema, columns)?;
    data.output_order = order;
    data.provenance.dropped_rows = dropped;
    Ok(data)
}

/// Writes a dataset as CSV with full-precision shortest round-trip decimals.
pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_csv(data, file)
}

pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let order = data.output_order();
    w.write_record(order.iter().map(|&j| data.schema.column(j).name.as_str()))?;
    let mut record: Vec<String> = Vec::with_capacity(order.len());
    for i in 0..data.n_rows() {
        record.clear();
        for &j in order {
            let v = data.columns[j][i];
            let cell = match &data.schema.column(j).labels {
                Some(labels) => labels[v as usize].clone(),
                None => format!("{v}"),
            };
            record.push(cell);
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> SchemaConfig {
        SchemaConfig {
            sensitive: vec!["sex".into()],
            covariates: vec!["income".into()],
            treatments: vec!["amount".into()],
            outcome: "repaid".into(),
            kinds: [("sex".to_string(), KindDecl::Named("binary".into()))].into(),
            categorical_codes: BTreeMap::new(),
        }
    }

    #[test]
    fn drops_rows_with_missing_cells() {
        let csv = "sex,income,amount,repaid\n0,1.5,10,1\n1,,12,0\n1,2.5,8,0\n";
        let d = read_csv(csv.as_bytes(), &config()).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.provenance().dropped_rows, 1);
        assert_eq!(d.column(1), &[1.5, 2.5]);
    }

    #[test]
    fn unknown_column_and_missing_roles() {
        let csv = "sex,income,repaid\n0,1,1\n";
        assert!(matches!(read_csv(csv.as_bytes(), &config()), Err(Error::UnknownColumn(c)) if c == "amount"));
        let mut cfg = config();
        cfg.treatments.clear();
        assert!(matches!(cfg.to_schema(), Err(Error::RoleMissing("treatment"))));
        let mut cfg = config();
        cfg.sensitive.clear();
        assert!(matches!(cfg.to_schema(), Err(Error::RoleMissing("sensitive"))));
    }

    #[test]
    fn non_numeric_and_non_binary_outcome() {
        let csv = "sex,income,amount,repaid\n0,abc,10,1\n";
        assert!(matches!(read_csv(csv.as_bytes(), &config()), Err(Error::NonNumericCell { line: 2, .. })));
        let csv = "sex,income,amount,repaid\n0,1,10,2\n";
        assert!(matches!(read_csv(csv.as_bytes(), &config()), Err(Error::OutcomeNotBinary { .. })));
    }

    #[test]
    fn extra_columns_are_ignored_and_header_order_kept() {
        let csv = "amount,note,repaid,income,sex\n10,x,1,2,0\n";
        let d = read_csv(csv.as_bytes(), &config()).unwrap();
        assert_eq!(d.schema().names().collect::<Vec<_>>(), vec!["sex", "income", "amount", "repaid"]);
        let mut out = Vec::new();
        write_csv(&d, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), "amount,repaid,income,sex");
    }

    #[test]
    fn label_encodes_categoricals() {
        let mut cfg = config();
        cfg.covariates.push("purpose".into());
        cfg.categorical_codes.insert("purpose".into(), vec!["car".into(), "home".into(), "other".into()]);
        let csv = "sex,income,purpose,amount,repaid\n0,1,home,10,1\n1,2,other,3,0\n";
        let d = read_csv(csv.as_bytes(), &cfg).unwrap();
        assert_eq!(d.column_named("purpose").unwrap(), &[1.0, 2.0]);
        let mut out = Vec::new();
        write_csv(&d, &mut out).unwrap();
        let back = read_csv(out.as_slice(), &cfg).unwrap();
        assert_eq!(back, d);
        let bad = "sex,income,purpose,amount,repaid\n0,1,boat,10,1\n";
        assert!(matches!(read_csv(bad.as_bytes(), &cfg), Err(Error::NonNumericCell { .. })));
    }

    #[test]
    fn empty_dataset_writes_header_only() {
        let schema = config().to_schema().unwrap();
        let d = Dataset::new(schema, vec![vec![]; 4]).unwrap();
        let mut out = Vec::new();
        write_csv(&d, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "sex,income,amount,repaid\n");
    }

    #[test]
    fn config_json_round_trip_through_schema() {
        let mut cfg = config();
        cfg.categorical_codes.insert("sex".into(), vec!["female".into(), "male".into()]);
        let schema = cfg.to_schema().unwrap();
        let again = SchemaConfig::from_schema(&schema).to_schema().unwrap();
        assert_eq!(schema, again);
        let parsed = SchemaConfig::from_json(
            r#"{"sensitive":["s"],"treatments":["z"],"outcome":"y","kinds":{"s":{"categorical":3}}}"#,
        )
        .unwrap();
        let s = parsed.to_schema().unwrap();
        assert_eq!(s.column(0).kind, Kind::Categorical { cardinality: 3 });
        assert_eq!(s.column(2).kind, Kind::Binary);
    }
}
