//! Structural causal models: sampling, abduction, interventions and
//! path-specific counterfactuals.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::expr::{CompiledExpr, Expr, Solve};
use crate::noise::NoiseSpec;
use crate::schema::{ExogenousVector, FeatureSchema, Instance, Kind, Role};

const BISECT_BOUND: f64 = 1e6;
const BISECT_TOL: f64 = 1e-10;
const ROUND_TRIP_TOL: f64 = 1e-9;

/// Structural equation of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum MechanismForm {
    /// `V = expr(pa, U)`, coerced to the node's kind.
    ClosedForm { expr: Expr },
    /// Binary node `V = 1{score(pa, U) >= threshold(pa, U)}`.
    Threshold { score: Expr, threshold: Expr },
    /// `V = intercept + sum_k coefficients[k] * prod(terms[k]) + U`.
    LearnedAdditive { terms: Vec<Vec<String>>, coefficients: Vec<f64>, intercept: f64 },
    /// Binary node `V = 1{intercept + sum_k coefficients[k] * prod(terms[k]) + U >= threshold}`.
    LearnedThreshold { terms: Vec<Vec<String>>, coefficients: Vec<f64>, intercept: f64, threshold: f64 },
}

fn linear_score(terms: &[Vec<String>], coefficients: &[f64], intercept: f64) -> Expr {
    let mut parts = vec![Expr::Const(intercept)];
    for (term, c) in terms.iter().zip(coefficients) {
        let mut factors = vec![Expr::Const(*c)];
        factors.extend(term.iter().map(|name| Expr::Var(name.clone())));
        parts.push(Expr::Mul(factors));
    }
    parts.push(Expr::Noise);
    Expr::Add(parts)
}

impl MechanismForm {
    /// `(value-or-score, threshold)` expressions.
    fn expressions(&self) -> Result<(Expr, Option<Expr>)> {
        let check = |terms: &[Vec<String>], coefficients: &[f64]| {
            if terms.len() != coefficients.len() {
                return Err(Error::InvalidModel(format!(
                    "{} terms but {} coefficients",
                    terms.len(),
                    coefficients.len()
                )));
            }
            Ok(())
        };
        Ok(match self {
            MechanismForm::ClosedForm { expr } => (expr.clone(), None),
            MechanismForm::Threshold { score, threshold } => (score.clone(), Some(threshold.clone())),
            MechanismForm::LearnedAdditive { terms, coefficients, intercept } => {
                check(terms, coefficients)?;
                (linear_score(terms, coefficients, *intercept), None)
            }
            MechanismForm::LearnedThreshold { terms, coefficients, intercept, threshold } => {
                check(terms, coefficients)?;
                (linear_score(terms, coefficients, *intercept), Some(Expr::Const(*threshold)))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub node: String,
    #[serde(flatten)]
    pub form: MechanismForm,
}

impl Mechanism {
    pub fn closed_form(node: &str, expr: Expr) -> Self {
        Self { node: node.to_string(), form: MechanismForm::ClosedForm { expr } }
    }

    pub fn threshold(node: &str, score: Expr, threshold: Expr) -> Self {
        Self { node: node.to_string(), form: MechanismForm::Threshold { score, threshold } }
    }

    /// Names of the columns the mechanism reads.
    pub fn parents(&self) -> Result<BTreeSet<String>> {
        let (value, thr) = self.form.expressions()?;
        let mut out = value.variables();
        if let Some(t) = thr {
            out.extend(t.variables());
        }
        Ok(out)
    }
}

/// A discrete node is described by a level function `h` and ascending cut
/// points: level `j` holds when `cuts[j-1] <= h < cuts[j]`.
#[derive(Debug, Clone)]
enum Node {
    Continuous(CompiledExpr),
    Levels { h: CompiledExpr, cuts: Vec<f64> },
}

impl Node {
    fn expr(&self) -> &CompiledExpr {
        match self {
            Node::Continuous(e) | Node::Levels { h: e, .. } => e,
        }
    }

    fn level(&self, h: f64) -> f64 {
        match self {
            Node::Continuous(_) => h,
            Node::Levels { cuts, .. } => cuts.iter().take_while(|c| h >= **c).count() as f64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScmDef {
    schema: FeatureSchema,
    mechanisms: Vec<Mechanism>,
    noise: BTreeMap<String, NoiseSpec>,
}

/// Immutable structural causal model over a [`FeatureSchema`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ScmDef", into = "ScmDef")]
pub struct Scm {
    schema: FeatureSchema,
    mechanisms: Vec<Mechanism>,
    noise: Vec<NoiseSpec>,
    nodes: Vec<Node>,
    parents: Vec<BTreeSet<usize>>,
}

impl PartialEq for Scm {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.mechanisms == other.mechanisms && self.noise == other.noise
    }
}

impl TryFrom<ScmDef> for Scm {
    type Error = Error;

    fn try_from(def: ScmDef) -> Result<Self> {
        let mut noise = def.noise;
        let mut specs = Vec::with_capacity(def.schema.len());
        for name in def.schema.names() {
            specs.push(noise.remove(name).ok_or_else(|| Error::InvalidModel(format!("no noise spec for `{name}`")))?);
        }
        if let Some(extra) = noise.keys().next() {
            return Err(Error::InvalidModel(format!("noise spec for unknown column `{extra}`")));
        }
        Scm::new(def.schema, def.mechanisms, specs)
    }
}

impl From<Scm> for ScmDef {
    fn from(m: Scm) -> Self {
        let noise = m.schema.names().map(String::from).zip(m.noise).collect();
        ScmDef { schema: m.schema, mechanisms: m.mechanisms, noise }
    }
}

/// Column assignments for the do-operator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DoSet(pub BTreeMap<usize, f64>);

impl DoSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, column: usize, value: f64) -> Self {
        self.0.insert(column, value);
        self
    }

    pub fn set_named(mut self, schema: &FeatureSchema, name: &str, value: f64) -> Result<Self> {
        self.0.insert(schema.require(name)?, value);
        Ok(self)
    }

    /// Assigns every column of a role block from `values`, in schema order.
    pub fn block(mut self, schema: &FeatureSchema, role: Role, values: &[f64]) -> Result<Self> {
        let cols = schema.indices_with_role(role);
        if cols.len() != values.len() {
            return Err(Error::InvalidInstance(format!(
                "{} values for a {role} block of {} columns",
                values.len(),
                cols.len()
            )));
        }
        self.0.extend(cols.into_iter().zip(values.iter().copied()));
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, column: usize) -> Option<f64> {
        self.0.get(&column).copied()
    }
}

/// Value given to a column within one stage of an [`InterventionPlan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assigned {
    Value(f64),
    /// The column's value in the factual instance.
    Factual,
}

/// Ordered stages of do-assignments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InterventionPlan {
    stages: Vec<Vec<(usize, Assigned)>>,
}

impl InterventionPlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(doset: &DoSet) -> Self {
        Self::new().stage(doset.0.iter().map(|(c, v)| (*c, Assigned::Value(*v))).collect())
    }

    pub fn stage(mut self, assignments: Vec<(usize, Assigned)>) -> Self {
        self.stages.push(assignments);
        self
    }

    /// `[do(S -> s'), do(X -> x^F)]`: isolates the direct sensitive edges into
    /// the treatment block.
    pub fn direct_path(schema: &FeatureSchema, sensitive: &DoSet) -> Self {
        let pin = schema.covariates().into_iter().map(|c| (c, Assigned::Factual)).collect();
        Self::single(sensitive).stage(pin)
    }

    /// `[do(S -> s'), do(X ∪ Z -> factual)]`: isolates the direct `S -> Y` edge.
    pub fn direct_label(schema: &FeatureSchema, sensitive: &DoSet) -> Self {
        let mut cols = schema.covariates();
        cols.extend(schema.treatments());
        Self::single(sensitive).stage(cols.into_iter().map(|c| (c, Assigned::Factual)).collect())
    }

    pub fn stages(&self) -> &[Vec<(usize, Assigned)>] {
        &self.stages
    }
}

/// Consistent region of one node's noise given its parents and value.
struct NodeAbduction {
    u: f64,
    /// Log density (continuous) or log probability (discrete) of the value.
    log_lik: f64,
}

impl Scm {
    pub fn new(schema: FeatureSchema, mechanisms: Vec<Mechanism>, noise: Vec<NoiseSpec>) -> Result<Self> {
        if mechanisms.len() != schema.len() || noise.len() != schema.len() {
            return Err(Error::InvalidModel(format!(
                "{} columns, {} mechanisms, {} noise specs",
                schema.len(),
                mechanisms.len(),
                noise.len()
            )));
        }
        let mut by_node: BTreeMap<&str, &Mechanism> = BTreeMap::new();
        for m in &mechanisms {
            if schema.index_of(&m.node).is_none() {
                return Err(Error::InvalidModel(format!("mechanism for unknown column `{}`", m.node)));
            }
            if by_node.insert(&m.node, m).is_some() {
                return Err(Error::InvalidModel(format!("two mechanisms for `{}`", m.node)));
            }
        }
        let mechanisms: Vec<Mechanism> = schema.names().map(|n| by_node[n].clone()).collect();
        let mut nodes = Vec::with_capacity(schema.len());
        let mut parents = Vec::with_capacity(schema.len());
        for (j, (m, spec)) in mechanisms.iter().zip(schema.columns()).enumerate() {
            noise[j].validate()?;
            let (value, thr) = m.form.expressions()?;
            let value = value.compile(&schema)?;
            let node = match (thr, spec.kind) {
                (Some(t), Kind::Binary) => {
                    let t = t.compile(&schema)?;
                    Node::Levels { h: CompiledExpr::Add(vec![value, CompiledExpr::Neg(Box::new(t))]), cuts: vec![0.0] }
                }
                (Some(_), _) => {
                    return Err(Error::InvalidModel(format!("threshold mechanism on non-binary `{}`", m.node)));
                }
                (None, Kind::Continuous) => Node::Continuous(value),
                (None, Kind::Binary) => Node::Levels { h: value, cuts: vec![1.0] },
                (None, Kind::Categorical { cardinality }) => {
                    Node::Levels { h: value, cuts: (1..cardinality).map(|c| c as f64).collect() }
                }
            };
            let pa = node.expr().parents();
            if let Some(&bad) = pa.iter().find(|&&p| p >= j) {
                return Err(Error::InvalidModel(format!(
                    "`{}` depends on `{}`, which is not earlier in the causal order",
                    m.node,
                    schema.column(bad).name
                )));
            }
            if let Some(&bad) = pa.iter().find(|&&p| schema.column(p).role.block() > spec.role.block()) {
                return Err(Error::InvalidModel(format!(
                    "`{}` depends on later-block column `{}`",
                    m.node,
                    schema.column(bad).name
                )));
            }
            nodes.push(node);
            parents.push(pa);
        }
        Ok(Self { schema, mechanisms, noise, nodes, parents })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn mechanism(&self, column: usize) -> &Mechanism {
        &self.mechanisms[column]
    }

    pub fn noise(&self) -> &[NoiseSpec] {
        &self.noise
    }

    pub fn parents(&self, column: usize) -> &BTreeSet<usize> {
        &self.parents[column]
    }

    /// All strict ancestors of `column`.
    pub fn ancestors(&self, column: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<usize> = self.parents[column].iter().copied().collect();
        while let Some(p) = stack.pop() {
            if out.insert(p) {
                stack.extend(self.parents[p].iter().copied());
            }
        }
        out
    }

    pub fn has_path(&self, from: usize, to: usize) -> bool {
        self.ancestors(to).contains(&from)
    }

    fn eval_node(&self, j: usize, values: &[f64], u: f64) -> f64 {
        let node = &self.nodes[j];
        let raw = node.level(node.expr().eval(values, u));
        self.schema.column(j).kind.coerce(raw)
    }

    /// Evaluates mechanisms in causal order; overridden columns skip their
    /// mechanism and take the (coerced) assigned value.
    pub fn predict(&self, u: &ExogenousVector, overrides: &DoSet) -> Instance {
        let mut values = vec![0.0; self.schema.len()];
        for j in 0..self.schema.len() {
            values[j] = match overrides.get(j) {
                Some(v) => self.schema.column(j).kind.coerce(v),
                None => self.eval_node(j, &values, u.0[j]),
            };
        }
        Instance(values)
    }

    /// Draws one row from a seeded stream.
    fn sample_row(&self, rng: &mut ChaCha8Rng) -> Instance {
        let u = ExogenousVector(self.noise.iter().map(|n| n.sample(rng)).collect());
        self.predict(&u, &DoSet::new())
    }

    /// `n` rows; row `i` uses stream `i` of the seeded generator, so output is
    /// independent of the thread count.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::InvalidConfig("sample size must be at least 1".into()));
        }
        let rows: Vec<Instance> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                self.sample_row(&mut rng)
            })
            .collect();
        let data = Dataset::from_rows(self.schema.clone(), &rows)?;
        Ok(data.with_provenance(Provenance {
            source: Some("scm sample".into()),
            seed: Some(seed),
            dropped_rows: 0,
            history: vec![format!("sample n={n}")],
        }))
    }

    /// Finds `u` with `expr(values, u) = target`.
    fn solve_numeric(&self, expr: &CompiledExpr, values: &[f64], target: f64) -> Solve {
        match expr.solve(values, target) {
            Solve::NoClosedForm => bisect(|u| expr.eval(values, u) - target),
            other => other,
        }
    }

    fn abduct_node(&self, j: usize, values: &[f64]) -> Result<NodeAbduction> {
        let v = values[j];
        let noise = &self.noise[j];
        let name = || self.schema.column(j).name.clone();
        match &self.nodes[j] {
            Node::Continuous(expr) => {
                let u = match self.solve_numeric(expr, values, v) {
                    Solve::Solved { u, .. } => u,
                    Solve::Flat => {
                        let m = noise.median();
                        if (expr.eval(values, m) - v).abs() <= ROUND_TRIP_TOL * v.abs().max(1.0) {
                            return Ok(NodeAbduction { u: m, log_lik: 0.0 });
                        }
                        return Err(Error::Inconsistent { column: name(), value: v });
                    }
                    Solve::Unreachable => return Err(Error::Inconsistent { column: name(), value: v }),
                    Solve::NoClosedForm => return Err(Error::NonInvertible { column: name() }),
                };
                if !u.is_finite() || (expr.eval(values, u) - v).abs() > ROUND_TRIP_TOL * v.abs().max(1.0) {
                    return Err(Error::NonInvertible { column: name() });
                }
                let h = 1e-6 * u.abs().max(1.0);
                let slope = (expr.eval(values, u + h) - expr.eval(values, u - h)) / (2.0 * h);
                let log_lik = if noise.is_continuous() {
                    noise.log_density(u) - slope.abs().ln()
                } else {
                    noise.log_density(u)
                };
                Ok(NodeAbduction { u, log_lik })
            }
            Node::Levels { h, cuts } => {
                let level = v as usize;
                let lo = if level == 0 { f64::NEG_INFINITY } else { cuts[level - 1] };
                let hi = cuts.get(level).copied().unwrap_or(f64::INFINITY);
                let region = self.level_region(h, values, lo, hi, noise);
                let Some((p_lo, p_hi, a, b)) = region else {
                    return Err(Error::Inconsistent { column: name(), value: v });
                };
                let mass = p_hi - p_lo;
                let reproduces = |u: f64| u.is_finite() && self.eval_node(j, values, u) == v;
                let mut u = noise.quantile(0.5 * (p_lo + p_hi));
                if !reproduces(u) {
                    let fallback = match (a.is_finite(), b.is_finite()) {
                        (true, true) => 0.5 * (a + b),
                        (true, false) => a + 1.0,
                        (false, true) => b - 1.0,
                        (false, false) => noise.median(),
                    };
                    if !reproduces(fallback) {
                        return Err(Error::Inconsistent { column: name(), value: v });
                    }
                    u = fallback;
                }
                Ok(NodeAbduction { u, log_lik: mass.max(0.0).ln() })
            }
        }
    }

    /// Noise region where `lo <= h(u) < hi`, as `(P(U below), P(U up to top), a, b)`
    /// with `[a, b]` its end points in noise space. `None` if empty.
    fn level_region(
        &self,
        h: &CompiledExpr,
        values: &[f64],
        lo: f64,
        hi: f64,
        noise: &NoiseSpec,
    ) -> Option<(f64, f64, f64, f64)> {
        // Each bound becomes a half-line in u; `true` in the tuple means "u >= t"
        // (closed) or "u > t" (open) and `false` the mirror.
        #[derive(Clone, Copy)]
        enum Half {
            All,
            Empty,
            Above { t: f64, closed: bool },
            Below { t: f64, closed: bool },
        }
        let median = noise.median();
        let half = |bound: f64, lower: bool| -> Half {
            if !bound.is_finite() {
                return Half::All;
            }
            let holds = |x: f64| if lower { x >= bound } else { x < bound };
            match self.solve_numeric(h, values, bound) {
                Solve::Solved { u, increasing } => match (lower, increasing) {
                    (true, true) => Half::Above { t: u, closed: true },
                    (true, false) => Half::Below { t: u, closed: true },
                    (false, true) => Half::Below { t: u, closed: false },
                    (false, false) => Half::Above { t: u, closed: false },
                },
                Solve::Flat | Solve::Unreachable | Solve::NoClosedForm => {
                    if holds(h.eval(values, median)) {
                        Half::All
                    } else {
                        Half::Empty
                    }
                }
            }
        };
        let mut p_lo = 0.0_f64;
        let mut p_hi = 1.0_f64;
        let mut a = f64::NEG_INFINITY;
        let mut b = f64::INFINITY;
        for part in [half(lo, true), half(hi, false)] {
            match part {
                Half::All => {}
                Half::Empty => return None,
                Half::Above { t, closed } => {
                    let p = if closed { noise.cdf_left(t) } else { noise.cdf(t) };
                    p_lo = p_lo.max(p);
                    a = a.max(t);
                }
                Half::Below { t, closed } => {
                    let p = if closed { noise.cdf(t) } else { noise.cdf_left(t) };
                    p_hi = p_hi.min(p);
                    b = b.min(t);
                }
            }
        }
        (a <= b).then_some((p_lo, p_hi.max(p_lo), a, b))
    }

    /// Infers the exogenous vector that reproduces `instance`.
    pub fn abduct(&self, instance: &Instance) -> Result<ExogenousVector> {
        self.schema.validate_row(&instance.0)?;
        (0..self.schema.len())
            .map(|j| self.abduct_node(j, &instance.0).map(|a| a.u))
            .collect::<Result<Vec<_>>>()
            .map(ExogenousVector)
    }

    /// Abduction, action, prediction.
    pub fn counterfactual(&self, instance: &Instance, doset: &DoSet) -> Result<Instance> {
        self.check_targets(doset.0.keys().copied())?;
        let u = self.abduct(instance)?;
        Ok(self.predict(&u, doset))
    }

    fn check_targets(&self, cols: impl IntoIterator<Item = usize>) -> Result<()> {
        for c in cols {
            if c >= self.schema.len() {
                return Err(Error::InvalidInstance(format!("intervention on column index {c} out of range")));
            }
        }
        Ok(())
    }

    pub fn validate_plan(&self, plan: &InterventionPlan) -> Result<()> {
        let mut earlier: Vec<usize> = Vec::new();
        for (k, stage) in plan.stages.iter().enumerate() {
            let mut seen = BTreeSet::new();
            self.check_targets(stage.iter().map(|(c, _)| *c))?;
            for (c, _) in stage {
                if !seen.insert(*c) {
                    return Err(Error::InvalidInstance(format!(
                        "stage {} assigns `{}` twice",
                        k + 1,
                        self.schema.column(*c).name
                    )));
                }
                if earlier.iter().any(|&e| self.has_path(*c, e)) {
                    return Err(Error::PlanOrderViolation { stage: k + 1, column: self.schema.column(*c).name.clone() });
                }
            }
            earlier.extend(seen);
        }
        Ok(())
    }

    /// Sequential interventions with exogenous splicing: each stage's targets
    /// take the noise abducted from that stage's intervened world; all other
    /// nodes keep the factual noise.
    pub fn path_specific_counterfactual(&self, instance: &Instance, plan: &InterventionPlan) -> Result<Instance> {
        self.validate_plan(plan)?;
        let mut u = self.abduct(instance)?;
        if plan.stages.is_empty() {
            return Ok(self.predict(&u, &DoSet::new()));
        }
        let mut pinned = DoSet::new();
        for stage in &plan.stages {
            let doset = DoSet(
                stage
                    .iter()
                    .map(|(c, a)| {
                        let v = match a {
                            Assigned::Value(v) => *v,
                            Assigned::Factual => instance.0[*c],
                        };
                        (*c, v)
                    })
                    .collect(),
            );
            let world = self.predict(&u, &doset);
            if plan.stages.len() == 1 {
                return Ok(world);
            }
            for &(c, _) in stage {
                u.0[c] = self.abduct_node(c, &world.0)?.u;
            }
            pinned.0.extend(doset.0);
        }
        // The spliced noise reproduces every stage target; pinning them as well
        // keeps assigned values bit-exact.
        Ok(self.predict(&u, &pinned))
    }

    /// Outcome under `do(Z -> z_hat)` with `S`, `X` and `U_Y` held factual.
    pub fn downstream_outcome(&self, instance: &Instance, z_hat: &[f64]) -> Result<f64> {
        let doset = DoSet::new().block(&self.schema, Role::Treatment, z_hat)?;
        Ok(self.counterfactual(instance, &doset)?.0[self.schema.outcome()])
    }

    /// Outcome under `[do(S -> s'), do(X ∪ Z -> factual)]`.
    pub fn direct_sensitive_label_effect(&self, instance: &Instance, sensitive: &DoSet) -> Result<f64> {
        let plan = InterventionPlan::direct_label(&self.schema, sensitive);
        Ok(self.path_specific_counterfactual(instance, &plan)?.0[self.schema.outcome()])
    }

    /// Probability that discrete `column` takes `level` given the parent values
    /// in `values`, with the noise drawn from its prior.
    pub fn level_probability(&self, column: usize, values: &[f64], level: f64) -> Result<f64> {
        match &self.nodes[column] {
            Node::Continuous(_) => {
                Err(Error::InvalidInstance(format!("`{}` is continuous", self.schema.column(column).name)))
            }
            Node::Levels { h, cuts } => {
                if !self.schema.column(column).kind.admits(level) {
                    return Ok(0.0);
                }
                let l = level as usize;
                let lo = if l == 0 { f64::NEG_INFINITY } else { cuts[l - 1] };
                let hi = cuts.get(l).copied().unwrap_or(f64::INFINITY);
                Ok(self
                    .level_region(h, values, lo, hi, &self.noise[column])
                    .map_or(0.0, |(p_lo, p_hi, _, _)| (p_hi - p_lo).clamp(0.0, 1.0)))
            }
        }
    }

    /// `P(Y = 1 | pa(Y))` read from `values`, with `U_Y` from its prior.
    pub fn outcome_probability(&self, values: &[f64]) -> f64 {
        self.level_probability(self.schema.outcome(), values, 1.0).expect("outcome is binary")
    }

    /// Per-node log-likelihood of an instance.
    pub fn node_log_likelihood(&self, instance: &Instance) -> Result<Vec<f64>> {
        self.schema.validate_row(&instance.0)?;
        (0..self.schema.len()).map(|j| self.abduct_node(j, &instance.0).map(|a| a.log_lik)).collect()
    }

    /// `expr(pa, u)` before level cutting and coercion.
    pub fn raw_value(&self, column: usize, values: &[f64], u: f64) -> f64 {
        self.nodes[column].expr().eval(values, u)
    }
}

/// Root of a monotone function on `[-BISECT_BOUND, BISECT_BOUND]`.
fn bisect(f: impl Fn(f64) -> f64) -> Solve {
    let (mut a, mut b) = (-BISECT_BOUND, BISECT_BOUND);
    let (fa, fb) = (f(a), f(b));
    if !(fa.is_finite() && fb.is_finite()) {
        return Solve::NoClosedForm;
    }
    if fa == fb || (fa.signum() == fb.signum() && fa != 0.0 && fb != 0.0) {
        return Solve::NoClosedForm;
    }
    let increasing = fb > fa;
    while b - a > BISECT_TOL * a.abs().max(b.abs()).max(1.0) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Solve::Solved { u: m, increasing };
        }
        if (fm > 0.0) == increasing {
            b = m;
        } else {
            a = m;
        }
    }
    Solve::Solved { u: 0.5 * (a + b), increasing }
}
