//! Artifact writers: per-point iteration traces and final fields as CSV with
//! full-precision decimals, verdict reports as JSON, and the sweep summary.

use std::fs;
use std::io::Write;
use std::path::Path;

use qoc::quantum::ControlField;
use qoc::scheme::RunReport;

use crate::checks::CheckVerdict;
use crate::config::SweepPoint;
use crate::error::CliError;

/// 17 significant decimal digits: round-trips any f64, so verdicts can be
/// recomputed exactly from the emitted traces.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub const TRACE_HEADER: &str =
    "k,J,fluence,eps_l2,eps_sup,d_fwd_l2,d_bwd_l2,gain_lhs,gain_obs,gain_fwd,gain_bwd,identity_residual";

/// One row per iterate. Row k carries the gain decomposition of the step
/// arriving at iterate k (zeros at k = 0); `d_fwd_l2` is
/// `||eps^k - eps_tilde^{k-1}||_2` and `d_bwd_l2` is
/// `||eps_tilde^k - eps^k||_2`.
pub fn write_trace(path: &Path, report: &RunReport) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &report.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.k,
            fmt_f64(r.j_value),
            fmt_f64(r.fluence),
            fmt_f64(r.eps_l2),
            fmt_f64(r.eps_sup),
            fmt_f64(r.delta_fwd_l2),
            fmt_f64(r.delta_bwd_l2),
            fmt_f64(r.gain.lhs),
            fmt_f64(r.gain.observable_term),
            fmt_f64(r.gain.forward_term),
            fmt_f64(r.gain.backward_term),
            fmt_f64(r.gain.identity_residual),
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// `t,eps` rows for the final field, one per interval (left node).
pub fn write_field(path: &Path, field: &ControlField) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("t,eps\n");
    for (j, v) in field.values().iter().enumerate() {
        out.push_str(&format!(
            "{},{}\n",
            fmt_f64(field.grid().node(j)),
            fmt_f64(*v)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Structured verdict document for one sweep point.
pub fn write_report(
    path: &Path,
    config_echo: &serde_json::Value,
    point: &SweepPoint,
    report: &RunReport,
    verdicts: &[CheckVerdict],
) -> Result<(), CliError> {
    let records: Vec<serde_json::Value> = report
        .records
        .iter()
        .map(|r| {
            serde_json::json!({
                "k": r.k,
                "j": r.j_value,
                "fluence": r.fluence,
                "eps_l2": r.eps_l2,
                "eps_sup": r.eps_sup,
                "eps_tilde_l2": r.eps_tilde_l2,
                "eps_tilde_sup": r.eps_tilde_sup,
                "d_fwd_l2": r.delta_fwd_l2,
                "d_bwd_l2": r.delta_bwd_l2,
                "eps_delta_l2": r.eps_delta_l2,
                "gain_lhs": r.gain.lhs,
                "gain_obs": r.gain.observable_term,
                "gain_fwd": r.gain.forward_term,
                "gain_bwd": r.gain.backward_term,
                "identity_residual": r.gain.identity_residual,
                "wall_time_s": r.wall_time_s,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "config": config_echo,
        "point": point,
        "iterations": report.records.len() - 1,
        "stop_reason": format!("{:?}", report.stop_reason),
        "initial_j": report.initial_j(),
        "final_j": report.final_j(),
        "eps0_l2": report.eps0_l2,
        "eps_tilde0_l2": report.eps_tilde0_l2,
        "lambda": (1.0 - point.delta) * (1.0 - point.eta),
        "timings": {
            "total_s": report.total_wall_s,
        },
        "verdicts": verdicts.iter().map(CheckVerdict::to_json).collect::<Vec<_>>(),
        "records": records,
    });
    let mut f = fs::File::create(path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(format!("json: {e}"))
    }
}

pub struct SummaryRow {
    pub point: SweepPoint,
    pub status: String,
    pub iterations: usize,
    pub final_j: f64,
    pub failed_checks: Vec<String>,
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("point,delta,eta,alpha,status,iterations,final_j,failed_checks\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.point.label(),
            fmt_f64(row.point.delta),
            fmt_f64(row.point.eta),
            fmt_f64(row.point.alpha),
            row.status,
            row.iterations,
            fmt_f64(row.final_j),
            row.failed_checks.join(";"),
        ));
    }
    fs::write(path, out)?;
    Ok(())
}
