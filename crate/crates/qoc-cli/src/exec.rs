//! Sweep execution: one run plus enabled checks and artifact files per sweep
//! point, points dispatched over a bounded worker pool. Points fail
//! independently; a blow-up at one (delta, eta, alpha) is recorded and the
//! rest of the sweep continues.

use std::fs;
use std::path::{Path, PathBuf};

use qoc::quantum::{ControlField, ControlProblem};
use qoc::scheme::run;

use crate::checks::{compute_verdicts, CheckVerdict};
use crate::config::{InitialField, RunConfig, SweepPoint};
use crate::error::CliError;
use crate::output::{write_field, write_report, write_summary, write_trace, SummaryRow};

#[derive(Debug)]
pub struct PointOutcome {
    pub point: SweepPoint,
    pub iterations: usize,
    pub final_j: f64,
    pub verdicts: Vec<CheckVerdict>,
    /// Run-level failure (non-finite values, sweep blow-up), if any.
    pub run_error: Option<String>,
}

impl PointOutcome {
    pub fn passed(&self) -> bool {
        self.run_error.is_none() && !self.verdicts.iter().any(CheckVerdict::failed)
    }

    pub fn failed_checks(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .verdicts
            .iter()
            .filter(|v| v.failed())
            .map(|v| v.name.clone())
            .collect();
        if let Some(e) = &self.run_error {
            names.push(format!("run_error({e})"));
        }
        names
    }
}

#[derive(Debug)]
pub struct ExecOutcome {
    pub output_dir: PathBuf,
    pub points: Vec<PointOutcome>,
}

impl ExecOutcome {
    pub fn all_passed(&self) -> bool {
        self.points.iter().all(PointOutcome::passed)
    }
}

fn initial_field(config: &RunConfig, problem: &ControlProblem) -> Result<ControlField, CliError> {
    let grid = *problem.grid();
    Ok(match &config.initial_field {
        InitialField::Zero => ControlField::zero(grid),
        InitialField::Constant(c) => ControlField::constant(grid, *c).map_err(CliError::Domain)?,
        InitialField::Samples(values) => {
            ControlField::new(grid, values.clone()).map_err(CliError::Domain)?
        }
    })
}

fn run_point(
    config: &RunConfig,
    problem: &ControlProblem,
    eps0: &ControlField,
    point: &SweepPoint,
    out_dir: &Path,
    config_echo: &serde_json::Value,
) -> Result<PointOutcome, CliError> {
    let params = point.params()?;
    let label = point.label();
    match run(problem, &params, eps0, &config.policy, config.tail_window) {
        Ok(report) => {
            let verdicts = compute_verdicts(&config.checks, &params, problem, &report, point);
            write_trace(&out_dir.join(format!("trace_{label}.csv")), &report)?;
            write_field(
                &out_dir.join(format!("field_{label}.csv")),
                &report.final_eps,
            )?;
            write_report(
                &out_dir.join(format!("report_{label}.json")),
                config_echo,
                point,
                &report,
                &verdicts,
            )?;
            Ok(PointOutcome {
                point: *point,
                iterations: report.records.len() - 1,
                final_j: report.final_j(),
                verdicts,
                run_error: None,
            })
        }
        Err(e) => {
            // record the failure so the sweep stays accountable, keep going
            let doc = serde_json::json!({
                "config": config_echo,
                "point": point,
                "run_error": e.to_string(),
            });
            fs::write(
                out_dir.join(format!("report_{label}.json")),
                serde_json::to_string_pretty(&doc)?,
            )?;
            Ok(PointOutcome {
                point: *point,
                iterations: 0,
                final_j: f64::NAN,
                verdicts: Vec::new(),
                run_error: Some(e.to_string()),
            })
        }
    }
}

/// Executes every sweep point of a configuration, writing artifacts under
/// `output_dir_override` or the configured directory.
pub fn execute(
    config: &RunConfig,
    workers: usize,
    output_dir_override: Option<&Path>,
) -> Result<ExecOutcome, CliError> {
    let out_dir = output_dir_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.output_dir));
    fs::create_dir_all(&out_dir)?;
    let problem = config.problem.build().map_err(CliError::Domain)?;
    let eps0 = initial_field(config, &problem)?;
    let config_echo = serde_json::to_value(&config.doc)?;
    let points = config.sweep_points();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Io(format!("worker pool: {e}")))?;
    let results: Vec<Result<PointOutcome, CliError>> = pool.install(|| {
        use rayon::prelude::*;
        points
            .par_iter()
            .map(|point| run_point(config, &problem, &eps0, point, &out_dir, &config_echo))
            .collect()
    });
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        outcomes.push(r?);
    }

    let rows: Vec<SummaryRow> = outcomes
        .iter()
        .map(|o| SummaryRow {
            point: o.point,
            status: if o.passed() {
                "ok".to_string()
            } else if o.run_error.is_some() {
                "error".to_string()
            } else {
                "check_failed".to_string()
            },
            iterations: o.iterations,
            final_j: o.final_j,
            failed_checks: o.failed_checks(),
        })
        .collect();
    write_summary(&out_dir.join("summary.csv"), &rows)?;
    Ok(ExecOutcome {
        output_dir: out_dir,
        points: outcomes,
    })
}
