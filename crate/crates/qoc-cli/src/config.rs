//! Run-configuration schema and strict parsing.
//!
//! Configurations are TOML documents with sections `problem`, `scheme`,
//! `initial_field`, `stopping`, `outputs` and `checks`. Parsing is strict:
//! unknown keys anywhere are errors, as are keys that do not belong to the
//! selected problem kind — a misspelled sweep key must never silently
//! default.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use qoc::problems::{ProblemSpec, DEFAULT_THETA};
use qoc::quantum::SchemeParams;
use qoc::scheme::{StoppingPolicy, DEFAULT_TAIL_WINDOW};

use crate::error::CliError;

/// The set of named certification checks a run can enable.
pub const CHECK_NAMES: [&str; 8] = [
    "monotonicity",
    "bound",
    "gain_identity",
    "summability",
    "gronwall",
    "residual",
    "limit_set",
    "alpha_threshold",
];

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub problem: ProblemSection,
    pub scheme: SchemeSection,
    #[serde(default)]
    pub initial_field: InitialFieldSection,
    pub stopping: StoppingSection,
    pub outputs: OutputsSection,
    #[serde(default)]
    pub checks: ChecksSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: String,
    pub t_final: f64,
    pub n_steps: usize,
    pub theta: Option<f64>,
    pub levels: Option<usize>,
    pub length: Option<f64>,
    pub n_x: Option<usize>,
    /// Custom-kind matrices as nested arrays of [re, im] pairs.
    pub h: Option<Vec<Vec<[f64; 2]>>>,
    pub mu: Option<Vec<Vec<[f64; 2]>>>,
    pub o: Option<Vec<Vec<[f64; 2]>>>,
    pub psi0: Option<Vec<[f64; 2]>>,
}

/// A scalar or a sweep list.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::One(v) => vec![*v],
            Self::Many(vs) => vs.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub alpha: OneOrMany,
    pub delta: OneOrMany,
    pub eta: OneOrMany,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialFieldSection {
    pub kind: String,
    pub value: Option<f64>,
    pub path: Option<String>,
}

impl Default for InitialFieldSection {
    fn default() -> Self {
        Self {
            kind: "zero".to_string(),
            value: None,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingSection {
    pub max_iters: usize,
    pub j_gain_tol: Option<f64>,
    pub field_delta_tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    pub dir: String,
    pub tail_window: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSection {
    #[serde(default)]
    pub enabled: Vec<String>,
}

/// How the initial field of every sweep point is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialField {
    Zero,
    Constant(f64),
    Samples(Vec<f64>),
}

/// A fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub doc: ConfigDoc,
    pub problem: ProblemSpec,
    pub alphas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub etas: Vec<f64>,
    pub initial_field: InitialField,
    pub policy: StoppingPolicy,
    pub output_dir: String,
    pub tail_window: usize,
    pub checks: BTreeSet<String>,
}

impl RunConfig {
    /// Cartesian sweep points in deterministic (delta, eta, alpha) order.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let mut points = Vec::new();
        let mut index = 0;
        for &delta in &self.deltas {
            for &eta in &self.etas {
                for &alpha in &self.alphas {
                    points.push(SweepPoint {
                        index,
                        delta,
                        eta,
                        alpha,
                    });
                    index += 1;
                }
            }
        }
        points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub index: usize,
    pub delta: f64,
    pub eta: f64,
    pub alpha: f64,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        format!("p{:03}", self.index)
    }

    pub fn params(&self) -> Result<SchemeParams, CliError> {
        SchemeParams::new(self.alpha, self.delta, self.eta).map_err(CliError::Domain)
    }
}

fn complex_matrix(rows: &[Vec<[f64; 2]>], what: &str) -> Result<DMatrix<C64>, CliError> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!(
            "problem.{what}: matrix rows must all have length {n}"
        )));
    }
    let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for (i, row) in rows.iter().enumerate() {
        for (j, &[re, im]) in row.iter().enumerate() {
            m[(i, j)] = C64::new(re, im);
        }
    }
    Ok(m)
}

fn reject_unused(kind: &str, fields: &[(&str, bool)]) -> Result<(), CliError> {
    for (name, present) in fields {
        if *present {
            return Err(CliError::Config(format!(
                "problem.{name} is not a parameter of kind \"{kind}\""
            )));
        }
    }
    Ok(())
}

fn problem_spec(p: &ProblemSection) -> Result<ProblemSpec, CliError> {
    let custom_fields = [
        ("h", p.h.is_some()),
        ("mu", p.mu.is_some()),
        ("o", p.o.is_some()),
        ("psi0", p.psi0.is_some()),
    ];
    match p.kind.as_str() {
        "two_level" => {
            reject_unused(
                "two_level",
                &[
                    ("levels", p.levels.is_some()),
                    ("length", p.length.is_some()),
                    ("n_x", p.n_x.is_some()),
                ],
            )?;
            reject_unused("two_level", &custom_fields)?;
            Ok(ProblemSpec::TwoLevel {
                theta: p.theta.unwrap_or(DEFAULT_THETA),
                t_final: p.t_final,
                n_steps: p.n_steps,
            })
        }
        "ladder" => {
            reject_unused(
                "ladder",
                &[
                    ("theta", p.theta.is_some()),
                    ("length", p.length.is_some()),
                    ("n_x", p.n_x.is_some()),
                ],
            )?;
            reject_unused("ladder", &custom_fields)?;
            let levels = p.levels.ok_or_else(|| {
                CliError::Config("problem.levels is required for kind \"ladder\"".into())
            })?;
            Ok(ProblemSpec::Ladder {
                levels,
                t_final: p.t_final,
                n_steps: p.n_steps,
            })
        }
        "box1d" => {
            reject_unused(
                "box1d",
                &[("theta", p.theta.is_some()), ("levels", p.levels.is_some())],
            )?;
            reject_unused("box1d", &custom_fields)?;
            let length = p.length.ok_or_else(|| {
                CliError::Config("problem.length is required for kind \"box1d\"".into())
            })?;
            let n_x = p.n_x.ok_or_else(|| {
                CliError::Config("problem.n_x is required for kind \"box1d\"".into())
            })?;
            Ok(ProblemSpec::Box1d {
                length,
                n_x,
                t_final: p.t_final,
                n_steps: p.n_steps,
            })
        }
        "custom" => {
            reject_unused(
                "custom",
                &[
                    ("theta", p.theta.is_some()),
                    ("levels", p.levels.is_some()),
                    ("length", p.length.is_some()),
                    ("n_x", p.n_x.is_some()),
                ],
            )?;
            let h = p.h.as_ref().ok_or_else(|| {
                CliError::Config("problem.h is required for kind \"custom\"".into())
            })?;
            let mu = p.mu.as_ref().ok_or_else(|| {
                CliError::Config("problem.mu is required for kind \"custom\"".into())
            })?;
            let o = p.o.as_ref().ok_or_else(|| {
                CliError::Config("problem.o is required for kind \"custom\"".into())
            })?;
            let psi0 = p.psi0.as_ref().ok_or_else(|| {
                CliError::Config("problem.psi0 is required for kind \"custom\"".into())
            })?;
            Ok(ProblemSpec::Custom {
                h: complex_matrix(h, "h")?,
                mu: complex_matrix(mu, "mu")?,
                o: complex_matrix(o, "o")?,
                psi0: DVector::from_iterator(
                    psi0.len(),
                    psi0.iter().map(|&[re, im]| C64::new(re, im)),
                ),
                t_final: p.t_final,
                n_steps: p.n_steps,
            })
        }
        other => Err(CliError::Config(format!(
            "problem.kind \"{other}\" is not one of two_level, ladder, box1d, custom"
        ))),
    }
}

/// Parses and validates a configuration document. Unknown keys, unknown
/// check names, empty sweep grids and domain violations (alpha <= 0,
/// delta or eta outside the admissible range [0, 2]) are all errors.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let doc: ConfigDoc = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    let problem = problem_spec(&doc.problem)?;
    // surface construction errors (dims, ranges) at parse time
    problem.build().map_err(CliError::Domain)?;

    let alphas = doc.scheme.alpha.values();
    let deltas = doc.scheme.delta.values();
    let etas = doc.scheme.eta.values();
    for (name, vs) in [("alpha", &alphas), ("delta", &deltas), ("eta", &etas)] {
        if vs.is_empty() {
            return Err(CliError::Config(format!(
                "scheme.{name} sweep list must be non-empty"
            )));
        }
    }
    // every sweep point must be admissible
    for &delta in &deltas {
        for &eta in &etas {
            for &alpha in &alphas {
                SchemeParams::new(alpha, delta, eta).map_err(CliError::Domain)?;
            }
        }
    }

    let initial_field = match doc.initial_field.kind.as_str() {
        "zero" => {
            if doc.initial_field.value.is_some() || doc.initial_field.path.is_some() {
                return Err(CliError::Config(
                    "initial_field.value/path are not parameters of kind \"zero\"".into(),
                ));
            }
            InitialField::Zero
        }
        "constant" => {
            if doc.initial_field.path.is_some() {
                return Err(CliError::Config(
                    "initial_field.path is not a parameter of kind \"constant\"".into(),
                ));
            }
            InitialField::Constant(doc.initial_field.value.ok_or_else(|| {
                CliError::Config("initial_field.value is required for kind \"constant\"".into())
            })?)
        }
        "file" => {
            if doc.initial_field.value.is_some() {
                return Err(CliError::Config(
                    "initial_field.value is not a parameter of kind \"file\"".into(),
                ));
            }
            let path = doc.initial_field.path.clone().ok_or_else(|| {
                CliError::Config("initial_field.path is required for kind \"file\"".into())
            })?;
            InitialField::Samples(read_field_samples(Path::new(&path), doc.problem.n_steps)?)
        }
        other => {
            return Err(CliError::Config(format!(
                "initial_field.kind \"{other}\" is not one of zero, constant, file"
            )))
        }
    };

    let policy = StoppingPolicy {
        max_iters: doc.stopping.max_iters,
        j_gain_tol: doc.stopping.j_gain_tol,
        field_delta_tol: doc.stopping.field_delta_tol,
    };
    for (name, tol) in [
        ("j_gain_tol", policy.j_gain_tol),
        ("field_delta_tol", policy.field_delta_tol),
    ] {
        if let Some(t) = tol {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(CliError::Config(format!(
                    "stopping.{name} = {t} must be finite and non-negative"
                )));
            }
        }
    }

    let mut checks = BTreeSet::new();
    for name in &doc.checks.enabled {
        if !CHECK_NAMES.contains(&name.as_str()) {
            return Err(CliError::Config(format!(
                "checks.enabled contains unknown check \"{name}\" (known: {})",
                CHECK_NAMES.join(", ")
            )));
        }
        checks.insert(name.clone());
    }

    let tail_window = doc.outputs.tail_window.unwrap_or(DEFAULT_TAIL_WINDOW);
    Ok(RunConfig {
        output_dir: doc.outputs.dir.clone(),
        problem,
        alphas,
        deltas,
        etas,
        initial_field,
        policy,
        tail_window,
        checks,
        doc,
    })
}

/// One sample per line; blank lines and lines starting with `#` are skipped.
pub fn read_field_samples(path: &Path, n_steps: usize) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            CliError::Config(format!(
                "{}:{}: \"{line}\" is not a number",
                path.display(),
                lineno + 1
            ))
        })?;
        values.push(v);
    }
    if values.len() != n_steps {
        return Err(CliError::Config(format!(
            "{}: field file has {} samples, problem.n_steps = {n_steps}",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}
