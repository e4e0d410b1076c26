//! Batch front-end: a TOML problem file is parsed and validated into a
//! [`ProblemConfig`], which [`run`] turns into traces and verification reports.
//!
//! ```toml
//! [backend]
//! family = "spectral"            # "dense", "spectral" or "translation"
//!
//! [[operators]]
//! label = "A"
//! eigenvalues = [-1.0, -4.0]     # spectral: eigenvalues, optional scale
//!
//! [equation]
//! factors = ["A", "A"]
//!
//! [[initial_data]]
//! values = [1.0, 0.0]
//! [[initial_data]]
//! values = [0.0, 0.0]
//!
//! [forcing]
//! expression = "cos(t) * (i + 1)"
//!
//! [time]
//! t_end = 1.0
//! samples = 11
//! ```
//!
//! Dense operators take `matrix = [[..], ..]` or `diagonal = [..]`; translation
//! operators take `speed` and share `[backend.grid]` (`x0`, `length`,
//! `points`) and `backend.boundary`. Initial data entries may use
//! `profile = { kind = "sin" | "gaussian" | "polynomial" | "zero", .. }` on
//! translation grids (sampled) and spectral backends (projected on the sine
//! basis of `(0, π)`). A `[random]` table replaces operators, factors and
//! initial data with a seeded commuting instance. Optional tables:
//! `[quadrature]`, `[oracle] steps_per_unit`, `[output] path`.
//!
//! Forcing expressions are evaluated in floating point with the variables `t`,
//! `i` (component index), `x` (grid coordinate on translation grids, otherwise
//! equal to `i`) and `pi`, and the functions `sin cos tan exp ln sqrt abs sinh
//! cosh tanh`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use evalexpr::{
    ContextWithMutableFunctions, ContextWithMutableVariables, DefaultNumericTypes, Function, HashMapContext, Node,
    Value,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confluent::{build_confluent_matrix, ConfluentSolver};
use crate::equation::{oracle_solve, FactoredEquation, Forcing, RandomInstance};
use crate::error::Error;
use crate::operators::{Boundary, Family, Grid1d, Operator};
use crate::pde_examples::{project, Profile};
use crate::solver::{
    lemma2_lhs, lemma2_rhs, solve_full, ForcedSolution, HomogeneousSolution, SolutionTrace,
};
use crate::statespace::{QuadratureKind, QuadratureRule, StateVector};

/// Seed used for `[random]` instances when neither the file nor `--seed` sets one.
pub const DEFAULT_SEED: u64 = 20_240_611;

/// Tolerances of the verification suite.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
pub const DERIVATIVE_TOLERANCE: f64 = 1e-4;
pub const ORACLE_TOLERANCE: f64 = 1e-6;
pub const LEMMA2_CHECK_TOLERANCE: f64 = 1e-7;

/// Highest derivative order checked by finite differences at `t = 0`.
pub const MAX_CHECKED_DERIVATIVE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    Schema,
    UnknownProfile,
    DuplicateLabel,
}

/// One configuration problem, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigIssue {
    pub kind: IssueKind,
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            IssueKind::Schema => "schema error",
            IssueKind::UnknownProfile => "unknown profile",
            IssueKind::DuplicateLabel => "duplicate label",
        };
        write!(f, "{kind} at `{}`: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.issues.iter().map(ToString::to_string).collect();
        f.write_str(&lines.join("\n"))
    }
}

impl ConfigError {
    fn single(kind: IssueKind, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            issues: vec![ConfigIssue {
                kind,
                path: path.into(),
                message: message.into(),
            }],
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed CSV: {message}")]
    Csv { path: PathBuf, message: String },
}

// ---------------------------------------------------------------------------
// raw schema

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    backend: RawBackend,
    #[serde(default)]
    operators: Vec<RawOperator>,
    equation: Option<RawEquation>,
    #[serde(default)]
    initial_data: Vec<RawInitial>,
    forcing: Option<RawForcing>,
    time: TimeConfig,
    #[serde(default)]
    quadrature: RawQuadrature,
    #[serde(default)]
    oracle: OracleConfig,
    #[serde(default)]
    output: OutputConfig,
    random: Option<RandomConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBackend {
    family: Family,
    grid: Option<GridConfig>,
    boundary: Option<Boundary>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridConfig {
    #[serde(default)]
    x0: f64,
    length: f64,
    points: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperator {
    label: String,
    eigenvalues: Option<Vec<f64>>,
    scale: Option<f64>,
    matrix: Option<Vec<Vec<f64>>>,
    diagonal: Option<Vec<f64>>,
    speed: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEquation {
    factors: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    values: Option<Vec<f64>>,
    profile: Option<toml::Table>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForcing {
    expression: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub samples: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    #[serde(default = "default_kind")]
    kind: QuadratureKind,
    #[serde(default = "default_panels")]
    panels: usize,
    nodes_per_panel: Option<usize>,
}

fn default_kind() -> QuadratureKind {
    QuadratureKind::GaussLegendre
}

fn default_panels() -> usize {
    QuadratureRule::default().panels
}

impl Default for RawQuadrature {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            panels: default_panels(),
            nodes_per_panel: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_steps")]
    pub steps_per_unit: usize,
}

fn default_steps() -> usize {
    crate::equation::DEFAULT_STEPS_PER_UNIT
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            steps_per_unit: default_steps(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
}

/// `[random]`: a seeded commuting instance of the backend family.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RandomConfig {
    pub dim: usize,
    pub multiplicities: Vec<usize>,
    pub seed: Option<u64>,
    pub rate_range: Option<(f64, f64)>,
    pub min_gap: Option<f64>,
}

// ---------------------------------------------------------------------------
// validated configuration

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorDef {
    Dense(Vec<Vec<f64>>),
    Spectral { eigenvalues: Vec<f64>, scale: f64 },
    Translation { speed: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub label: String,
    pub def: OperatorDef,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Values(Vec<f64>),
    Profile(Profile),
}

/// Compiled forcing expression.
#[derive(Clone)]
pub struct ForcingExpression {
    source: String,
    node: Arc<Node<DefaultNumericTypes>>,
}

impl fmt::Debug for ForcingExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("ForcingExpression").field(&self.source).finish()
    }
}

impl PartialEq for ForcingExpression {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

/// Rewrites integer literals as floats so that `1/2` means one half.
fn floatify(expr: &str) -> String {
    let chars: Vec<char> = expr.chars().collect();
    let mut out = String::with_capacity(expr.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let starts_number = c.is_ascii_digit()
            && (i == 0 || !(chars[i - 1].is_alphanumeric() || chars[i - 1] == '_' || chars[i - 1] == '.'));
        if !starts_number {
            out.push(c);
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        let integer: String = chars[start..i].iter().collect();
        out.push_str(&integer);
        if i < chars.len() && chars[i] == '.' {
            continue;
        }
        out.push_str(".0");
    }
    out
}

fn math_context() -> HashMapContext<DefaultNumericTypes> {
    let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
    type Unary = fn(f64) -> f64;
    let unary: [(&str, Unary); 10] = [
        ("sin", f64::sin),
        ("cos", f64::cos),
        ("tan", f64::tan),
        ("exp", f64::exp),
        ("ln", f64::ln),
        ("sqrt", f64::sqrt),
        ("abs", f64::abs),
        ("sinh", f64::sinh),
        ("cosh", f64::cosh),
        ("tanh", f64::tanh),
    ];
    for (name, f) in unary {
        ctx.set_function(
            name.to_string(),
            Function::new(move |arg: &Value<DefaultNumericTypes>| Ok(Value::Float(f(arg.as_number()?)))),
        )
        .expect("function registration");
    }
    ctx.set_value("pi".into(), Value::Float(std::f64::consts::PI))
        .expect("constant registration");
    ctx
}

impl ForcingExpression {
    pub fn parse(source: &str) -> Result<Self, String> {
        let node = evalexpr::build_operator_tree::<DefaultNumericTypes>(&floatify(source))
            .map_err(|e| e.to_string())?;
        let expr = Self {
            source: source.to_string(),
            node: Arc::new(node),
        };
        expr.eval(0.0, 0, 0.0)?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, t: f64, i: usize, x: f64) -> Result<f64, String> {
        let mut ctx = math_context();
        Self::eval_in(&self.node, &mut ctx, t, i, x)
    }

    fn eval_in(
        node: &Node<DefaultNumericTypes>,
        ctx: &mut HashMapContext<DefaultNumericTypes>,
        t: f64,
        i: usize,
        x: f64,
    ) -> Result<f64, String> {
        for (name, v) in [("t", t), ("i", i as f64), ("x", x)] {
            ctx.set_value(name.into(), Value::Float(v)).map_err(|e| e.to_string())?;
        }
        node.eval_number_with_context(ctx).map_err(|e| e.to_string())
    }

    /// `f(t)_i = expr(t, i, coordinates[i])`; evaluation failures yield NaN,
    /// which the solvers report as non-finite.
    pub fn to_forcing(&self, coordinates: Vec<f64>) -> Forcing {
        let node = Arc::clone(&self.node);
        let ctx = Mutex::new(math_context());
        Forcing::new(move |t| {
            let mut ctx = ctx.lock().expect("forcing context");
            StateVector::from_fn(coordinates.len(), |i| {
                Self::eval_in(&node, &mut ctx, t, i, coordinates[i]).unwrap_or(f64::NAN)
            })
        })
    }
}

/// A fully validated problem file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub family: Family,
    pub grid: Option<Grid1d>,
    pub boundary: Boundary,
    pub operators: Vec<OperatorSpec>,
    pub factors: Vec<String>,
    pub initial_data: Vec<InitialSpec>,
    pub forcing: Option<ForcingExpression>,
    pub time: TimeConfig,
    pub quadrature: QuadratureRule,
    pub oracle: OracleConfig,
    pub output: OutputConfig,
    pub random: Option<RandomConfig>,
}

struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn schema(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.push(IssueKind::Schema, path, message);
    }

    fn push(&mut self, kind: IssueKind, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue {
            kind,
            path: path.into(),
            message: message.into(),
        });
    }
}

const PROFILE_KINDS: [&str; 4] = ["zero", "sin", "gaussian", "polynomial"];

/// Parses and validates a TOML problem file.
pub fn parse_config(text: &str) -> Result<ProblemConfig, ConfigError> {
    let de = toml::Deserializer::parse(text)
        .map_err(|e| ConfigError::single(IssueKind::Schema, "", e.message().to_string()))?;
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().message().to_string();
        ConfigError::single(IssueKind::Schema, if path == "." { String::new() } else { path }, message)
    })?;
    validate(raw)
}

fn validate(raw: RawConfig) -> Result<ProblemConfig, ConfigError> {
    let mut issues = Issues(Vec::new());
    let family = raw.backend.family;

    let grid = match (family, raw.backend.grid) {
        (Family::Translation, Some(g)) => {
            if g.points < 4 || !(g.length > 0.0) || !g.x0.is_finite() {
                issues.schema("backend.grid", "needs points >= 4 and a positive finite length");
                None
            } else {
                Some(Grid1d::periodic(g.x0, g.length, g.points))
            }
        }
        (Family::Translation, None) => {
            issues.schema("backend.grid", "translation backends need a grid");
            None
        }
        (_, Some(_)) => {
            issues.schema("backend.grid", "only translation backends take a grid");
            None
        }
        (_, None) => None,
    };
    let boundary = raw.backend.boundary.unwrap_or(Boundary::Periodic);
    if raw.backend.boundary.is_some() && family != Family::Translation {
        issues.schema("backend.boundary", "only translation backends take a boundary");
    }

    let random = raw.random;
    if let Some(r) = &random {
        if family == Family::Translation {
            issues.schema("random", "random instances use dense or spectral backends");
        }
        if r.dim == 0 || r.multiplicities.is_empty() || r.multiplicities.contains(&0) {
            issues.schema("random", "needs dim > 0 and positive multiplicities");
        }
        if !raw.operators.is_empty() {
            issues.schema("operators", "not allowed together with [random]");
        }
        if raw.equation.is_some() {
            issues.schema("equation", "not allowed together with [random]");
        }
        if !raw.initial_data.is_empty() {
            issues.schema("initial_data", "not allowed together with [random]");
        }
    }

    let mut operators = Vec::with_capacity(raw.operators.len());
    let mut seen = HashSet::new();
    let mut dims = BTreeMap::new();
    for (idx, op) in raw.operators.into_iter().enumerate() {
        let path = format!("operators[{idx}]");
        if op.label.trim().is_empty() {
            issues.schema(format!("{path}.label"), "label must not be empty");
        }
        if !seen.insert(op.label.clone()) {
            issues.push(
                IssueKind::DuplicateLabel,
                format!("{path}.label"),
                format!("`{}` is defined more than once", op.label),
            );
        }
        let def = match family {
            Family::Spectral => match (op.eigenvalues, op.matrix, op.diagonal, op.speed) {
                (Some(ev), None, None, None) if !ev.is_empty() => Some(OperatorDef::Spectral {
                    eigenvalues: ev,
                    scale: op.scale.unwrap_or(1.0),
                }),
                _ => {
                    issues.schema(&path, "spectral operators take a nonempty `eigenvalues` and optional `scale`");
                    None
                }
            },
            Family::Dense => match (op.eigenvalues, op.scale, op.matrix, op.diagonal, op.speed) {
                (None, None, Some(m), None, None) => {
                    let d = m.len();
                    if d == 0 || m.iter().any(|row| row.len() != d) {
                        issues.schema(format!("{path}.matrix"), "must be a nonempty square matrix");
                        None
                    } else {
                        Some(OperatorDef::Dense(m))
                    }
                }
                (None, None, None, Some(diag), None) if !diag.is_empty() => {
                    let d = diag.len();
                    Some(OperatorDef::Dense(
                        (0..d)
                            .map(|i| (0..d).map(|j| if i == j { diag[i] } else { 0.0 }).collect())
                            .collect(),
                    ))
                }
                _ => {
                    issues.schema(&path, "dense operators take exactly one of `matrix` or `diagonal`");
                    None
                }
            },
            Family::Translation => match (op.eigenvalues, op.scale, op.matrix, op.diagonal, op.speed) {
                (None, None, None, None, Some(speed)) if speed.is_finite() => {
                    Some(OperatorDef::Translation { speed })
                }
                _ => {
                    issues.schema(&path, "translation operators take a finite `speed`");
                    None
                }
            },
        };
        if let Some(def) = def {
            let dim = match &def {
                OperatorDef::Dense(m) => m.len(),
                OperatorDef::Spectral { eigenvalues, .. } => eigenvalues.len(),
                OperatorDef::Translation { .. } => grid.map_or(0, |g| g.points),
            };
            dims.insert(idx, dim);
            operators.push(OperatorSpec {
                label: op.label,
                def,
            });
        }
    }
    let dim = dims.values().next().copied();
    if let Some(d) = dim {
        for (idx, other) in &dims {
            if *other != d {
                issues.schema(format!("operators[{idx}]"), format!("dimension {other} differs from {d}"));
            }
        }
    }

    let factors = raw.equation.map(|e| e.factors).unwrap_or_default();
    if random.is_none() {
        if factors.is_empty() {
            issues.schema("equation.factors", "at least one factor is required");
        }
        for (i, f) in factors.iter().enumerate() {
            if !seen.contains(f) {
                issues.schema(format!("equation.factors[{i}]"), format!("undefined label `{f}`"));
            }
        }
        if factors.len() > crate::equation::MAX_ORDER {
            issues.schema("equation.factors", format!("at most {} factors", crate::equation::MAX_ORDER));
        }
    }

    let mut initial_data = Vec::with_capacity(raw.initial_data.len());
    if random.is_none() && raw.initial_data.len() != factors.len() {
        issues.schema(
            "initial_data",
            format!("{} factors need {} entries, found {}", factors.len(), factors.len(), raw.initial_data.len()),
        );
    }
    for (idx, init) in raw.initial_data.into_iter().enumerate() {
        let path = format!("initial_data[{idx}]");
        match (init.values, init.profile) {
            (Some(v), None) => {
                if let Some(d) = dim {
                    if v.len() != d {
                        issues.schema(format!("{path}.values"), format!("expected {d} values, found {}", v.len()));
                    }
                }
                initial_data.push(InitialSpec::Values(v));
            }
            (None, Some(table)) => {
                if family == Family::Dense {
                    issues.schema(&path, "profiles need a translation or spectral backend");
                }
                match table.get("kind").and_then(toml::Value::as_str) {
                    Some(kind) if PROFILE_KINDS.contains(&kind) => {
                        match Profile::deserialize(toml::Value::Table(table)) {
                            Ok(p) => match p.validate() {
                                Ok(()) => initial_data.push(InitialSpec::Profile(p)),
                                Err(e) => issues.schema(format!("{path}.profile"), e.to_string()),
                            },
                            Err(e) => issues.schema(format!("{path}.profile"), e.message().to_string()),
                        }
                    }
                    Some(kind) => issues.push(
                        IssueKind::UnknownProfile,
                        format!("{path}.profile.kind"),
                        format!("`{kind}` is not one of {}", PROFILE_KINDS.join(", ")),
                    ),
                    None => issues.schema(format!("{path}.profile.kind"), "missing profile kind"),
                }
            }
            _ => issues.schema(&path, "give exactly one of `values` or `profile`"),
        }
    }

    let forcing = match raw.forcing {
        Some(f) if f.expression.trim() != "none" => match ForcingExpression::parse(&f.expression) {
            Ok(e) => Some(e),
            Err(msg) => {
                issues.schema("forcing.expression", msg);
                None
            }
        },
        _ => None,
    };

    if !(raw.time.t_end > 0.0) || !raw.time.t_end.is_finite() {
        issues.schema("time.t_end", "must be positive and finite");
    }
    if raw.time.samples == 0 {
        issues.schema("time.samples", "must be at least 1");
    }

    let nodes = raw.quadrature.nodes_per_panel.unwrap_or(match raw.quadrature.kind {
        QuadratureKind::GaussLegendre => QuadratureRule::default().nodes_per_panel,
        QuadratureKind::CompositeSimpson => 3,
    });
    let quadrature = QuadratureRule {
        kind: raw.quadrature.kind,
        panels: raw.quadrature.panels,
        nodes_per_panel: nodes,
    };
    if let Err(e) = quadrature.validate() {
        issues.schema("quadrature", e.to_string());
    }
    if raw.oracle.steps_per_unit == 0 {
        issues.schema("oracle.steps_per_unit", "must be positive");
    }

    if !issues.0.is_empty() {
        return Err(ConfigError { issues: issues.0 });
    }
    Ok(ProblemConfig {
        family,
        grid,
        boundary,
        operators,
        factors,
        initial_data,
        forcing,
        time: raw.time,
        quadrature,
        oracle: raw.oracle,
        output: raw.output,
        random,
    })
}

impl ProblemConfig {
    /// Sample times: `samples` evenly spaced points from 0 to `t_end` inclusive
    /// (just `0` for a single sample).
    pub fn time_grid(&self) -> Vec<f64> {
        let n = self.time.samples;
        if n == 1 {
            return vec![0.0];
        }
        (0..n)
            .map(|k| if k == n - 1 { self.time.t_end } else { self.time.t_end * k as f64 / (n - 1) as f64 })
            .collect()
    }

    fn build_operator(&self, spec: &OperatorSpec) -> crate::Result<Operator> {
        match &spec.def {
            OperatorDef::Dense(rows) => {
                Operator::dense(spec.label.clone(), crate::statespace::DenseMatrix::from_rows(rows)?)
            }
            OperatorDef::Spectral { eigenvalues, scale } => {
                Operator::spectral(spec.label.clone(), eigenvalues.clone(), *scale)
            }
            OperatorDef::Translation { speed } => Operator::translation(
                spec.label.clone(),
                *speed,
                self.grid.expect("validated translation grid"),
                self.boundary,
            ),
        }
    }

    fn coordinates(&self, dim: usize) -> Vec<f64> {
        match self.grid {
            Some(g) => g.coordinates(),
            None => (0..dim).map(|i| i as f64).collect(),
        }
    }

    /// Builds the equation; `seed` overrides the `[random]` seed.
    pub fn build_equation(&self, seed: Option<u64>) -> crate::Result<FactoredEquation> {
        let eq = match &self.random {
            Some(r) => {
                let mut inst = RandomInstance::new(
                    self.family,
                    r.dim,
                    r.multiplicities.clone(),
                    seed.or(r.seed).unwrap_or(DEFAULT_SEED),
                );
                if let Some(range) = r.rate_range {
                    inst.rate_range = range;
                }
                if let Some(gap) = r.min_gap {
                    inst.min_gap = gap;
                }
                inst.build()?
            }
            None => {
                let ops: Vec<Operator> = self
                    .operators
                    .iter()
                    .map(|s| self.build_operator(s))
                    .collect::<crate::Result<_>>()?;
                let by_label = |l: &str| ops.iter().find(|o| o.label() == l).cloned().expect("validated label");
                let factors: Vec<Operator> = self.factors.iter().map(|l| by_label(l)).collect();
                let dim = factors[0].dim();
                let initial = self
                    .initial_data
                    .iter()
                    .map(|s| match s {
                        InitialSpec::Values(v) => StateVector::from(v.clone()),
                        InitialSpec::Profile(p) => match self.grid {
                            Some(g) => p.sample(&g),
                            None => StateVector::from(project(|x| p.eval(x), dim, QuadratureRule::default())),
                        },
                    })
                    .collect();
                FactoredEquation::new(factors, initial)?
            }
        };
        Ok(match &self.forcing {
            Some(f) => {
                let coords = self.coordinates(eq.dim());
                eq.with_forcing(f.to_forcing(coords))
            }
            None => eq,
        })
    }
}

// ---------------------------------------------------------------------------
// CSV

fn csv_header(dim: usize, with_dev: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..dim).map(|i| format!("u_{i}")));
    if with_dev {
        h.push("oracle_dev".into());
    }
    h
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// The trace as CSV: header `t,u_0,…,u_{d−1}[,oracle_dev]`, 17 significant
/// digits, LF line endings.
pub fn format_csv(trace: &SolutionTrace) -> String {
    let dev = trace.diagnostics.oracle_dev.as_ref();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(csv_header(trace.dim(), dev.is_some())).expect("in-memory write");
    for (k, (t, u)) in trace.times.iter().zip(&trace.values).enumerate() {
        let mut row = vec![fmt_f64(*t)];
        row.extend(u.iter().map(|&x| fmt_f64(x)));
        if let Some(d) = dev {
            row.push(fmt_f64(d[k]));
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write_csv(trace: &SolutionTrace, path: &Path) -> Result<(), CliError> {
    if trace.is_empty() {
        return Err(Error::InvalidInput("cannot write an empty trace".into()).into());
    }
    fs::write(path, format_csv(trace)).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a CSV produced by [`format_csv`].
pub fn parse_csv(text: &str) -> Result<SolutionTrace, String> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.first() != Some(&"t") {
        return Err("first column must be `t`".into());
    }
    let with_dev = cols.last() == Some(&"oracle_dev");
    let dim = cols.len() - 1 - usize::from(with_dev);
    if cols != csv_header(dim, with_dev).iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(format!("unexpected header {cols:?}"));
    }
    let (mut times, mut values, mut dev) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let nums = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| format!("row {}: {e}", line + 1)))
            .collect::<Result<Vec<f64>, String>>()?;
        times.push(nums[0]);
        values.push(StateVector::from(&nums[1..=dim]));
        if with_dev {
            dev.push(nums[dim + 1]);
        }
    }
    let trace = SolutionTrace::new(times, values).map_err(|e| e.to_string())?;
    if with_dev {
        trace.with_oracle_dev(dev).map_err(|e| e.to_string())
    } else {
        Ok(trace)
    }
}

// ---------------------------------------------------------------------------
// verification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub tolerance: f64,
    pub observed: f64,
    pub comparison: Comparison,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckRecord {
    pub fn at_most(name: impl Into<String>, tolerance: f64, observed: f64) -> Self {
        Self {
            name: name.into(),
            tolerance,
            observed,
            comparison: Comparison::AtMost,
            pass: observed <= tolerance,
            detail: None,
        }
    }

    pub fn at_least(name: impl Into<String>, tolerance: f64, observed: f64) -> Self {
        Self {
            name: name.into(),
            tolerance,
            observed,
            comparison: Comparison::AtLeast,
            pass: observed >= tolerance,
            detail: None,
        }
    }

    fn failed(name: impl Into<String>, tolerance: f64, err: &Error) -> Self {
        Self {
            name: name.into(),
            tolerance,
            observed: f64::INFINITY,
            comparison: Comparison::AtMost,
            pass: false,
            detail: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckRecord>,
    /// Checks that do not apply to the instance.
    pub notes: Vec<String>,
    pub pass: bool,
    pub timings: Vec<Timing>,
}

impl VerificationReport {
    fn new() -> Self {
        Self {
            pass: true,
            ..Self::default()
        }
    }

    fn record(&mut self, check: CheckRecord) {
        self.pass &= check.pass;
        self.checks.push(check);
    }

    fn timed<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.timings.push(Timing {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn first_failure(&self) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| !c.pass)
    }
}

/// Finite-difference weights for the `order`-th derivative at `x0` on `nodes`.
pub fn finite_difference_weights(x0: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    assert!(n > order, "need more nodes than the derivative order");
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

fn rate_scale(eq: &FactoredEquation) -> crate::Result<f64> {
    let mut scale = 1.0f64;
    for g in eq.groups() {
        scale = scale.max(g.operator.to_matrix()?.norm_inf());
    }
    Ok(scale)
}

fn check_residuals(eq: &FactoredEquation) -> crate::Result<f64> {
    let solver = ConfluentSolver::new(build_confluent_matrix(eq.groups())?)?;
    let matrix = solver.matrix();
    let n = eq.order();
    let d = eq.dim();
    let y = solver.solve(eq.initial_data())?;
    let scale = 1.0 + eq.initial_data().iter().map(StateVector::norm_inf).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for (r, x) in matrix.apply(&y.entries)?.iter().zip(eq.initial_data()) {
        worst = worst.max((r - x).norm_inf() / scale);
    }
    let z = solver.z_vector()?;
    for probe in 0..d.min(4) {
        let v = StateVector::from_fn(d, |i| ((i + 1) as f64 * (probe + 1) as f64).sin());
        let zv = z.entries.iter().map(|zk| zk.apply(&v)).collect::<crate::Result<Vec<_>>>()?;
        for (r, out) in matrix.apply(&zv)?.iter().enumerate() {
            let target = if r == n - 1 { v.clone() } else { StateVector::zeros(d) };
            worst = worst.max((out - &target).norm_inf() / (1.0 + v.norm_inf()));
        }
    }
    Ok(worst)
}

fn check_derivatives(eq: &FactoredEquation) -> crate::Result<f64> {
    let sol = HomogeneousSolution::new(&eq.without_forcing())?;
    let h = 0.05 / rate_scale(eq)?;
    let accuracy = 6;
    let mut worst = 0.0f64;
    let kmax = eq.order().min(MAX_CHECKED_DERIVATIVE + 1);
    let samples: Vec<StateVector> = (0..kmax + accuracy)
        .map(|m| sol.eval(m as f64 * h))
        .collect::<crate::Result<_>>()?;
    for (k, x) in eq.initial_data().iter().enumerate().take(kmax) {
        let nodes: Vec<f64> = (0..k + accuracy).map(|m| m as f64 * h).collect();
        let w = finite_difference_weights(0.0, &nodes, k);
        let mut approx = StateVector::zeros(eq.dim());
        for (wm, s) in w.iter().zip(&samples) {
            approx.axpy(*wm, s);
        }
        worst = worst.max((&approx - x).norm_inf() / x.norm_inf().max(1.0));
    }
    Ok(worst)
}

fn check_oracle(config: &ProblemConfig, eq: &FactoredEquation) -> crate::Result<(SolutionTrace, f64)> {
    let grid = config.time_grid();
    let trace = solve_full(eq, &grid, config.quadrature)?;
    let oracle = oracle_solve(eq, &grid, config.oracle.steps_per_unit)?;
    let dev = trace.relative_deviation(&oracle)?;
    let worst = dev.iter().copied().fold(0.0, f64::max);
    Ok((trace.with_oracle_dev(dev)?, worst))
}

fn lemma2_records(config: &ProblemConfig, eq: &FactoredEquation, report: &mut VerificationReport) {
    let groups = eq.groups();
    if groups.len() < 2 {
        report.notes.push("lemma2: needs two distinct operators".into());
        return;
    }
    let t = config.time.t_end.min(1.0);
    let x = eq.initial_data().iter().find(|v| !v.is_zero()).cloned().unwrap_or_else(|| {
        StateVector::from_fn(eq.dim(), |i| 1.0 / (1 + i) as f64)
    });
    for gi in groups {
        for gj in groups {
            let (a, b) = (&gi.operator, &gj.operator);
            if a.label() == b.label() {
                continue;
            }
            for k in 0..4u32 {
                let name = format!("lemma2[{},{},k={k}]", a.label(), b.label());
                let rhs = match lemma2_rhs(a, b, k, t, &x) {
                    Ok(v) => v,
                    Err(e @ (Error::NotInvertible { .. } | Error::Unsupported(_))) => {
                        report.notes.push(format!("{name}: {e}"));
                        break;
                    }
                    Err(e) => {
                        report.record(CheckRecord::failed(name, LEMMA2_CHECK_TOLERANCE, &e));
                        continue;
                    }
                };
                match lemma2_lhs(a, b, k, t, &x, config.quadrature) {
                    Ok(lhs) => {
                        let scale = lhs.norm_inf().max(rhs.norm_inf()).max(1e-12);
                        report.record(CheckRecord::at_most(
                            name,
                            LEMMA2_CHECK_TOLERANCE,
                            (&lhs - &rhs).norm_inf() / scale,
                        ));
                    }
                    Err(e) => report.record(CheckRecord::failed(name, LEMMA2_CHECK_TOLERANCE, &e)),
                }
            }
        }
    }
}

/// Error ratio between a low-order rule and its panel doubling, which should
/// approach `2^order`; the threshold is that value divided by ten.
fn check_convergence(config: &ProblemConfig, eq: &FactoredEquation) -> crate::Result<(f64, f64)> {
    let forced_eq = eq.with_zero_initial_data();
    let sol = ForcedSolution::new(&forced_eq, config.quadrature)?;
    let t = config.time.t_end;
    let reference = sol.eval(t)?;
    let coarse = match config.quadrature.kind {
        QuadratureKind::GaussLegendre => QuadratureRule::gauss_legendre(2, 2)?,
        QuadratureKind::CompositeSimpson => QuadratureRule::simpson(2)?,
    };
    let threshold = 2f64.powi(coarse.order() as i32) / 10.0;
    let e1 = (&sol.integrate_with(t, &coarse)? - &reference).norm_inf();
    let e2 = (&sol.integrate_with(t, &coarse.refined())? - &reference).norm_inf();
    let floor = 1e-13 * reference.norm_inf().max(1.0);
    let ratio = if e2 <= floor { f64::INFINITY } else { e1 / e2 };
    Ok((ratio, threshold))
}

fn verify(config: &ProblemConfig, eq: &FactoredEquation) -> VerificationReport {
    let mut report = VerificationReport::new();
    report.timed("confluent_residual", |r| {
        r.record(match check_residuals(eq) {
            Ok(v) => CheckRecord::at_most("confluent_residual", RESIDUAL_TOLERANCE, v),
            Err(e) => CheckRecord::failed("confluent_residual", RESIDUAL_TOLERANCE, &e),
        })
    });
    if eq.family() == Family::Translation {
        report
            .notes
            .push("derivative_ic: skipped for translation grids (stiff spectral rates)".into());
        report.notes.push("oracle_equivalence: the RK4 oracle covers dense and spectral backends".into());
    } else {
        report.timed("derivative_ic", |r| {
            r.record(match check_derivatives(eq) {
                Ok(v) => CheckRecord::at_most("derivative_ic", DERIVATIVE_TOLERANCE, v),
                Err(e) => CheckRecord::failed("derivative_ic", DERIVATIVE_TOLERANCE, &e),
            })
        });
        report.timed("oracle_equivalence", |r| {
            r.record(match check_oracle(config, eq) {
                Ok((_, v)) => CheckRecord::at_most("oracle_equivalence", ORACLE_TOLERANCE, v),
                Err(e) => CheckRecord::failed("oracle_equivalence", ORACLE_TOLERANCE, &e),
            })
        });
    }
    report.timed("lemma2", |r| lemma2_records(config, eq, r));
    if eq.forcing().is_some() {
        report.timed("quadrature_convergence", |r| {
            r.record(match check_convergence(config, eq) {
                Ok((ratio, threshold)) => CheckRecord::at_least("quadrature_convergence", threshold, ratio),
                Err(e) => CheckRecord::failed("quadrature_convergence", 0.0, &e),
            })
        });
    } else {
        report.notes.push("quadrature_convergence: the instance has no forcing".into());
    }
    report
}

// ---------------------------------------------------------------------------
// commands

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    Verify,
    CompareOracle,
    Lemma2Check,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Artifacts of one command. Files have already been written when `written`
/// is set; otherwise `csv` is meant for standard output.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub trace: Option<SolutionTrace>,
    pub csv: Option<String>,
    pub report: Option<VerificationReport>,
    pub written: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn pass(&self) -> bool {
        self.report.as_ref().is_none_or(|r| r.pass)
    }
}

/// Pretty-printed JSON form of a report.
pub fn report_json(report: &VerificationReport) -> serde_json::Result<String> {
    serde_json::to_string_pretty(report)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn report_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".report.json");
    out.with_file_name(name)
}

pub fn run(config: &ProblemConfig, command: Command, options: &RunOptions) -> Result<RunOutcome, CliError> {
    let eq = config.build_equation(options.seed)?;
    let out = options.out.clone().or_else(|| config.output.path.clone());
    let mut outcome = RunOutcome::default();
    match command {
        Command::Solve => {
            let trace = solve_full(&eq, &config.time_grid(), config.quadrature)?;
            let csv = format_csv(&trace);
            if let Some(path) = &out {
                write_text(path, &csv)?;
                outcome.written.push(path.clone());
            }
            outcome.csv = Some(csv);
            outcome.trace = Some(trace);
        }
        Command::CompareOracle => {
            let mut report = VerificationReport::new();
            let (trace, worst) = report.timed("oracle_equivalence", |_| check_oracle(config, &eq))?;
            report.record(CheckRecord::at_most("oracle_equivalence", ORACLE_TOLERANCE, worst));
            let csv = format_csv(&trace);
            if let Some(path) = &out {
                write_text(path, &csv)?;
                let rp = report_path(path);
                write_text(&rp, &report_json(&report).expect("report serializes"))?;
                outcome.written.extend([path.clone(), rp]);
            }
            outcome.csv = Some(csv);
            outcome.trace = Some(trace);
            outcome.report = Some(report);
        }
        Command::Verify | Command::Lemma2Check => {
            let report = if command == Command::Verify {
                verify(config, &eq)
            } else {
                let mut r = VerificationReport::new();
                r.timed("lemma2", |r| lemma2_records(config, &eq, r));
                r
            };
            if let Some(path) = &out {
                write_text(path, &report_json(&report).expect("report serializes"))?;
                outcome.written.push(path.clone());
            }
            outcome.report = Some(report);
        }
    }
    Ok(outcome)
}

/// Reads and parses a problem file.
pub fn load_config(path: &Path) -> Result<ProblemConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_config(&text)?)
}
