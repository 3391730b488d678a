//! Column roles and kinds for decision datasets.
//!
//! Every dataset is described by a [`FeatureSchema`]: an ordered list of
//! columns, each tagged with a causal role (sensitive attribute, covariate,
//! treatment decision, outcome) and a value kind. The column order doubles
//! as the causal order used by structural models, so all sensitive columns
//! come first, then covariates, then treatments, then the single outcome.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Causal role of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Sensitive,
    Covariate,
    Treatment,
    Outcome,
}

impl Role {
    /// Position of the role's block in the causal order.
    pub fn block(self) -> usize {
        match self {
            Role::Sensitive => 0,
            Role::Covariate => 1,
            Role::Treatment => 2,
            Role::Outcome => 3,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Sensitive => "sensitive",
            Role::Covariate => "covariate",
            Role::Treatment => "treatment",
            Role::Outcome => "outcome",
        };
        f.write_str(s)
    }
}

/// Value kind of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Continuous,
    Binary,
    Categorical { cardinality: usize },
}

impl Kind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, Kind::Continuous)
    }

    /// Clamp to the valid range and floor, for discrete kinds. Continuous
    /// values pass through.
    pub fn coerce(self, value: f64) -> f64 {
        match self {
            Kind::Continuous => value,
            Kind::Binary => value.clamp(0.0, 1.0).floor(),
            Kind::Categorical { cardinality } => {
                value.clamp(0.0, (cardinality.max(1) - 1) as f64).floor()
            }
        }
    }

    /// Whether `value` is a legal encoded value of this kind.
    pub fn admits(self, value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        match self {
            Kind::Continuous => true,
            Kind::Binary => value == 0.0 || value == 1.0,
            Kind::Categorical { cardinality } => {
                value >= 0.0 && value < cardinality as f64 && value.fract() == 0.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub role: Role,
    pub kind: Kind,
    /// Labels of categorical codes, `labels[code]`. Present when the column
    /// was label-encoded on ingestion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, role: Role, kind: Kind) -> Self {
        Self { name: name.into(), role, kind, labels: None }
    }
}

/// Ordered, role-tagged column list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ColumnSpec>", into = "Vec<ColumnSpec>")]
pub struct FeatureSchema {
    columns: Vec<ColumnSpec>,
}

impl TryFrom<Vec<ColumnSpec>> for FeatureSchema {
    type Error = Error;

    fn try_from(columns: Vec<ColumnSpec>) -> Result<Self> {
        FeatureSchema::new(columns)
    }
}

impl From<FeatureSchema> for Vec<ColumnSpec> {
    fn from(schema: FeatureSchema) -> Self {
        schema.columns
    }
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate column `{}`", c.name)));
            }
            if let Kind::Categorical { cardinality } = c.kind {
                if cardinality < 2 {
                    return Err(Error::InvalidSchema(format!(
                        "categorical column `{}` needs at least two levels",
                        c.name
                    )));
                }
                if let Some(labels) = &c.labels {
                    if labels.len() != cardinality {
                        return Err(Error::InvalidSchema(format!(
                            "column `{}` declares {} levels but {} labels",
                            c.name,
                            cardinality,
                            labels.len()
                        )));
                    }
                }
            }
            if c.kind == Kind::Binary && c.labels.as_ref().is_some_and(|l| l.len() != 2) {
                return Err(Error::InvalidSchema(format!("binary column `{}` needs exactly two labels", c.name)));
            }
        }
        if columns.windows(2).any(|w| w[0].role.block() > w[1].role.block()) {
            return Err(Error::InvalidSchema(
                "columns must be ordered sensitive, covariate, treatment, outcome".into(),
            ));
        }
        let count = |r: Role| columns.iter().filter(|c| c.role == r).count();
        if count(Role::Sensitive) == 0 {
            return Err(Error::InvalidSchema("at least one sensitive column is required".into()));
        }
        if count(Role::Treatment) == 0 {
            return Err(Error::InvalidSchema("at least one treatment column is required".into()));
        }
        if count(Role::Outcome) != 1 {
            return Err(Error::InvalidSchema("exactly one outcome column is required".into()));
        }
        let outcome = columns.iter().find(|c| c.role == Role::Outcome).unwrap();
        if outcome.kind != Kind::Binary {
            return Err(Error::InvalidSchema(format!(
                "outcome column `{}` must be binary",
                outcome.name
            )));
        }
        Ok(Self { columns })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, index: usize) -> &ColumnSpec {
        &self.columns[index]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn indices_with_role(&self, role: Role) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sensitive(&self) -> Vec<usize> {
        self.indices_with_role(Role::Sensitive)
    }

    pub fn covariates(&self) -> Vec<usize> {
        self.indices_with_role(Role::Covariate)
    }

    pub fn treatments(&self) -> Vec<usize> {
        self.indices_with_role(Role::Treatment)
    }

    pub fn outcome(&self) -> usize {
        self.columns.iter().position(|c| c.role == Role::Outcome).expect("validated schema")
    }

    /// Checks that `values` is a legal encoded row of this schema.
    pub fn validate_row(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(Error::InvalidInstance(format!(
                "expected {} values, got {}",
                self.columns.len(),
                values.len()
            )));
        }
        for (c, &v) in self.columns.iter().zip(values) {
            if !c.kind.admits(v) {
                return Err(Error::InvalidInstance(format!(
                    "value {v} is not a valid {:?} value for `{}`",
                    c.kind, c.name
                )));
            }
        }
        Ok(())
    }
}

/// One row of values in schema order. Binary columns hold 0/1, categorical
/// columns hold integer codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance(pub Vec<f64>);

impl Instance {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn select(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.0[i]).collect()
    }
}

impl From<Vec<f64>> for Instance {
    fn from(v: Vec<f64>) -> Self {
        Instance(v)
    }
}

/// Abducted exogenous values, one per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousVector(pub Vec<f64>);

impl ExogenousVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}
