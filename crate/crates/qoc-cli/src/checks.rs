//! Certification checks evaluated after each run, and their recomputation
//! from emitted trace files.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qoc::analysis::{
    alpha_threshold, bound_m, check_bound, critical_residual, gronwall_check, limit_set_diagnostics,
};
use qoc::quantum::{ControlField, ControlProblem, SchemeParams};
use qoc::scheme::{RunReport, StopReason};
use qoc::QocError;

use crate::config::SweepPoint;
use crate::error::CliError;

/// Per-step monotonicity tolerance, relative to max(1, |J|).
pub const MONOTONICITY_TOL: f64 = 1e-8;
/// Observable gain term may dip this far below zero (PSD observable).
pub const OBS_TERM_TOL: f64 = 1e-10;
/// Quadratic gain terms may dip this far below zero.
pub const QUAD_TERM_TOL: f64 = 1e-12;
/// Slack added to the telescoped summability bound.
pub const SUMMABILITY_SLACK: f64 = 1e-6;
/// Tail diameter below which the limit set is declared a single point.
pub const SINGLETON_THRESHOLD: f64 = 1e-8;
/// Number of randomized field pairs per Gronwall certification.
pub const GRONWALL_PAIRS: usize = 50;
/// Multiple of `alpha * reference increment` allowed for the final residual.
pub const RESIDUAL_FACTOR: f64 = 10.0;

/// Relative allowance of the gain-identity check: the residual may reach
/// this fraction of the largest per-step gain seen in the run. Absorbs the
/// problem-dependent constant in front of the dt^2 defect (stiff Hamiltonians
/// have much larger constants than soft ones at the same dt).
pub const GAIN_IDENTITY_REL: f64 = 1e-4;

/// Absolute gain-identity tolerance: 1e-6 at the reference resolution
/// dt = 5/4000, scaled with the second-order accuracy of the discretization.
pub fn gain_identity_tol(dt: f64) -> f64 {
    (1e-6 * (dt / (5.0 / 4000.0)).powi(2)).max(1e-12)
}

fn gain_identity_run_tol(dt: f64, max_step_gain: f64) -> f64 {
    gain_identity_tol(dt).max(GAIN_IDENTITY_REL * max_step_gain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone)]
pub struct CheckVerdict {
    pub name: String,
    pub status: CheckStatus,
    pub note: String,
    pub numbers: BTreeMap<String, f64>,
}

impl CheckVerdict {
    fn new(name: &str, status: CheckStatus, note: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            status,
            note: note.into(),
            numbers: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.numbers.insert(key.to_string(), value);
        self
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.name,
            "status": match self.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "fail",
                CheckStatus::Skipped => "skipped",
            },
            "note": self.note,
            "numbers": self.numbers,
        })
    }
}

pub fn monotonicity_verdict(report: &RunReport) -> CheckVerdict {
    let mut worst = f64::NEG_INFINITY;
    let mut at = 0usize;
    for w in report.records.windows(2) {
        let drop = (w[0].j_value - w[1].j_value) / w[0].j_value.abs().max(1.0);
        if drop > worst {
            worst = drop;
            at = w[1].k;
        }
    }
    if report.records.len() < 2 {
        return CheckVerdict::new(
            "monotonicity",
            CheckStatus::Skipped,
            "fewer than 2 iterates",
        );
    }
    let status = if worst <= MONOTONICITY_TOL {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    CheckVerdict::new(
        "monotonicity",
        status,
        format!("worst scaled J drop at k = {at}"),
    )
    .with("worst_scaled_drop", worst.max(0.0))
    .with("tolerance", MONOTONICITY_TOL)
}

pub fn bound_verdict(
    params: &SchemeParams,
    problem: &ControlProblem,
    report: &RunReport,
) -> CheckVerdict {
    let norm_o = problem.observable().spectral_norm();
    let norm_mu = problem.dipole().spectral_norm();
    match bound_m(
        params,
        norm_o,
        norm_mu,
        report.eps0_l2,
        report.eps_tilde0_l2,
    ) {
        Ok(m) => {
            let cert = check_bound(report, m);
            let status = if cert.checked_l2 {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            };
            CheckVerdict::new("bound", status, "recorded L2 norms vs M")
                .with("m", cert.m)
                .with("worst_ratio_l2", cert.worst_ratio)
                .with("worst_ratio_sup", cert.worst_ratio_sup)
                .with("checked_sup", if cert.checked_sup { 1.0 } else { 0.0 })
        }
        Err(QocError::BoundUndefinedAtEndpoint) => CheckVerdict::new(
            "bound",
            CheckStatus::Skipped,
            "M is undefined at delta = 2 or eta = 2",
        ),
        Err(e) => CheckVerdict::new("bound", CheckStatus::Fail, e.to_string()),
    }
}

pub fn gain_identity_verdict(report: &RunReport, dt: f64) -> CheckVerdict {
    let mut worst_res = 0.0f64;
    let mut max_gain = 0.0f64;
    for r in &report.records[1..] {
        worst_res = worst_res.max(r.gain.identity_residual.abs());
        max_gain = max_gain.max(r.gain.lhs.abs());
    }
    let tol = gain_identity_run_tol(dt, max_gain);
    // term non-negativity, each against its own tolerance
    let mut terms_ok = true;
    for r in &report.records[1..] {
        if r.gain.observable_term < -OBS_TERM_TOL
            || r.gain.forward_term < -QUAD_TERM_TOL
            || r.gain.backward_term < -QUAD_TERM_TOL
        {
            terms_ok = false;
        }
    }
    if report.records.len() < 2 {
        return CheckVerdict::new(
            "gain_identity",
            CheckStatus::Skipped,
            "fewer than 2 iterates",
        );
    }
    let status = if worst_res <= tol && terms_ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    CheckVerdict::new(
        "gain_identity",
        status,
        "identity residual and term signs over all steps",
    )
    .with("max_abs_residual", worst_res)
    .with("tolerance", tol)
    .with("terms_nonnegative", if terms_ok { 1.0 } else { 0.0 })
}

/// Telescoped series bound: each quadratic series with its parameter inside
/// (0, 2) must not exceed (J_final - J_0) / (alpha * min(active coefficients))
/// plus slack.
pub fn summability_verdict(params: &SchemeParams, report: &RunReport) -> CheckVerdict {
    let delta = params.delta();
    let eta = params.eta();
    let mut coefs = Vec::new();
    if delta > 0.0 && delta < 2.0 {
        coefs.push(2.0 / delta - 1.0);
    }
    if eta > 0.0 && eta < 2.0 {
        coefs.push(2.0 / eta - 1.0);
    }
    if coefs.is_empty() {
        return CheckVerdict::new(
            "summability",
            CheckStatus::Skipped,
            "delta and eta both at endpoints {0, 2}: no controlled series",
        );
    }
    let min_coef = coefs.iter().copied().fold(f64::INFINITY, f64::min);
    let bound =
        (report.final_j() - report.initial_j()) / (params.alpha() * min_coef) + SUMMABILITY_SLACK;
    let sum_fwd: f64 = report.records[1..]
        .iter()
        .map(|r| r.delta_fwd_l2 * r.delta_fwd_l2)
        .sum();
    let sum_bwd: f64 = report.records[..report.records.len() - 1]
        .iter()
        .map(|r| r.delta_bwd_l2 * r.delta_bwd_l2)
        .sum();
    let fwd_ok = delta <= 0.0 || delta >= 2.0 || sum_fwd <= bound;
    let bwd_ok = eta <= 0.0 || eta >= 2.0 || sum_bwd <= bound;
    let status = if fwd_ok && bwd_ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    CheckVerdict::new(
        "summability",
        status,
        "partial sums vs telescoped gain bound",
    )
    .with("sum_fwd_sq", sum_fwd)
    .with("sum_bwd_sq", sum_bwd)
    .with("bound", bound)
}

pub fn gronwall_verdict(
    params: &SchemeParams,
    problem: &ControlProblem,
    report: &RunReport,
    seed: u64,
) -> CheckVerdict {
    let norm_o = problem.observable().spectral_norm();
    let norm_mu = problem.dipole().spectral_norm();
    let m = match bound_m(
        params,
        norm_o,
        norm_mu,
        report.eps0_l2,
        report.eps_tilde0_l2,
    ) {
        Ok(m) => m,
        Err(QocError::BoundUndefinedAtEndpoint) => {
            return CheckVerdict::new(
                "gronwall",
                CheckStatus::Skipped,
                "M is undefined at delta = 2 or eta = 2",
            )
        }
        Err(e) => return CheckVerdict::new("gronwall", CheckStatus::Fail, e.to_string()),
    };
    if m == 0.0 {
        return CheckVerdict::new(
            "gronwall",
            CheckStatus::Skipped,
            "M = 0: only the zero field is admissible",
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = problem.grid().n_steps();
    let cap = 0.999 * m;
    let mut passes = 0usize;
    let mut worst_margin = f64::INFINITY;
    for _ in 0..GRONWALL_PAIRS {
        let mut sample = || -> ControlField {
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(-cap..cap)).collect();
            ControlField::new(*problem.grid(), values).expect("finite samples")
        };
        let a = sample();
        let b = sample();
        if let Ok(c) = gronwall_check(problem, &a, &b, m) {
            if c.passed() {
                passes += 1;
            }
            worst_margin = worst_margin
                .min(c.bound_psi - c.observed_psi)
                .min(c.bound_chi - c.observed_chi);
        }
    }
    let status = if passes == GRONWALL_PAIRS {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    CheckVerdict::new(
        "gronwall",
        status,
        format!("{passes}/{GRONWALL_PAIRS} randomized admissible pairs within both bounds"),
    )
    .with("pairs_passed", passes as f64)
    .with("m", m)
    .with("worst_margin", worst_margin)
}

/// Residual of the final field against `RESIDUAL_FACTOR * alpha * r`, where
/// r is the stopping tolerance when the run stopped on the field increment,
/// and the last observed increment otherwise.
pub fn residual_verdict(
    params: &SchemeParams,
    problem: &ControlProblem,
    report: &RunReport,
) -> CheckVerdict {
    let residual = match critical_residual(problem, &report.final_eps, params.alpha()) {
        Ok(r) => r,
        Err(e) => return CheckVerdict::new("residual", CheckStatus::Fail, e.to_string()),
    };
    let reference = match (report.stop_reason, report.policy.field_delta_tol) {
        (StopReason::FieldDelta, Some(tol)) => tol,
        _ => report.records.last().map(|r| r.eps_delta_l2).unwrap_or(0.0),
    };
    let threshold = RESIDUAL_FACTOR * params.alpha() * reference + 1e-12;
    let status = if residual <= threshold {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    CheckVerdict::new(
        "residual",
        status,
        "Euler-Lagrange residual of the final field",
    )
    .with("residual", residual)
    .with("threshold", threshold)
    .with("reference_increment", reference)
}

pub fn limit_set_verdict(report: &RunReport) -> CheckVerdict {
    match limit_set_diagnostics(report, SINGLETON_THRESHOLD) {
        Ok(d) => {
            let status = if d.singleton_verdict {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            };
            CheckVerdict::new(
                "limit_set",
                status,
                format!("tail of {} iterates", d.window),
            )
            .with("tail_diameter_l2", d.tail_diameter_l2)
            .with("max_consecutive_gap", d.max_consecutive_gap)
            .with("j_spread", d.j_spread)
            .with("singleton_threshold", SINGLETON_THRESHOLD)
        }
        Err(e) => CheckVerdict::new("limit_set", CheckStatus::Skipped, e.to_string()),
    }
}

pub fn alpha_threshold_verdict(
    params: &SchemeParams,
    problem: &ControlProblem,
    report: &RunReport,
) -> CheckVerdict {
    let norm_o = problem.observable().spectral_norm();
    let norm_mu = problem.dipole().spectral_norm();
    let m = match bound_m(
        params,
        norm_o,
        norm_mu,
        report.eps0_l2,
        report.eps_tilde0_l2,
    ) {
        Ok(m) => m,
        Err(QocError::BoundUndefinedAtEndpoint) => {
            return CheckVerdict::new(
                "alpha_threshold",
                CheckStatus::Skipped,
                "M is undefined at delta = 2 or eta = 2",
            )
        }
        Err(e) => return CheckVerdict::new("alpha_threshold", CheckStatus::Fail, e.to_string()),
    };
    match alpha_threshold(norm_o, norm_mu, problem.grid().t_final(), m) {
        Ok(threshold) => {
            let status = if params.alpha() > threshold {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            };
            CheckVerdict::new(
                "alpha_threshold",
                status,
                "alpha vs the guaranteed-convergence threshold",
            )
            .with("alpha", params.alpha())
            .with("threshold", threshold)
            .with("m", m)
        }
        Err(QocError::ThresholdOverflow) => CheckVerdict::new(
            "alpha_threshold",
            CheckStatus::Fail,
            "threshold overflows f64; alpha cannot exceed it",
        ),
        Err(e) => CheckVerdict::new("alpha_threshold", CheckStatus::Fail, e.to_string()),
    }
}

pub fn compute_verdicts(
    enabled: &BTreeSet<String>,
    params: &SchemeParams,
    problem: &ControlProblem,
    report: &RunReport,
    point: &SweepPoint,
) -> Vec<CheckVerdict> {
    let dt = problem.grid().dt();
    let mut out = Vec::new();
    for name in enabled {
        let v = match name.as_str() {
            "monotonicity" => monotonicity_verdict(report),
            "bound" => bound_verdict(params, problem, report),
            "gain_identity" => gain_identity_verdict(report, dt),
            "summability" => summability_verdict(params, report),
            "gronwall" => gronwall_verdict(
                params,
                problem,
                report,
                0x9e37_79b9_7f4a_7c15 ^ point.index as u64,
            ),
            "residual" => residual_verdict(params, problem, report),
            "limit_set" => limit_set_verdict(report),
            "alpha_threshold" => alpha_threshold_verdict(params, problem, report),
            other => CheckVerdict::new(other, CheckStatus::Skipped, "unknown check"),
        };
        out.push(v);
    }
    out
}

/// A parsed trace row (subset of columns needed for recomputation).
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub k: usize,
    pub j_value: f64,
    pub d_fwd_l2: f64,
    pub d_bwd_l2: f64,
    pub gain_lhs: f64,
    pub gain_obs: f64,
    pub gain_fwd: f64,
    pub gain_bwd: f64,
    pub identity_residual: f64,
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>, CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Check("trace file is empty".into()))?;
    if header.trim() != crate::output::TRACE_HEADER {
        return Err(CliError::Check(format!(
            "unexpected trace header: {header}"
        )));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 12 {
            return Err(CliError::Check(format!(
                "trace line {}: expected 12 columns, got {}",
                lineno + 2,
                cols.len()
            )));
        }
        let f = |i: usize| -> Result<f64, CliError> {
            cols[i]
                .parse()
                .map_err(|_| CliError::Check(format!("trace line {}: bad number", lineno + 2)))
        };
        rows.push(TraceRow {
            k: cols[0]
                .parse()
                .map_err(|_| CliError::Check(format!("trace line {}: bad k", lineno + 2)))?,
            j_value: f(1)?,
            d_fwd_l2: f(5)?,
            d_bwd_l2: f(6)?,
            gain_lhs: f(7)?,
            gain_obs: f(8)?,
            gain_fwd: f(9)?,
            gain_bwd: f(10)?,
            identity_residual: f(11)?,
        });
    }
    Ok(rows)
}

/// Recomputes the trace-supported verdicts (monotonicity, gain identity,
/// summability) from an emitted trace and compares them with the verdict
/// statuses recorded in the matching report document. Returns
/// (check name, recomputed pass, reported pass) triples for every
/// recomputable check present in the report.
pub fn recheck_from_trace(
    trace_text: &str,
    report_json: &serde_json::Value,
) -> Result<Vec<(String, bool, bool)>, CliError> {
    let rows = parse_trace(trace_text)?;
    if rows.len() < 2 {
        return Err(CliError::Check("trace has fewer than 2 iterates".into()));
    }
    let point = &report_json["point"];
    let delta = point["delta"]
        .as_f64()
        .ok_or_else(|| CliError::Check("report missing point.delta".into()))?;
    let eta = point["eta"]
        .as_f64()
        .ok_or_else(|| CliError::Check("report missing point.eta".into()))?;
    let alpha = point["alpha"]
        .as_f64()
        .ok_or_else(|| CliError::Check("report missing point.alpha".into()))?;
    let t_final = report_json["config"]["problem"]["t_final"]
        .as_f64()
        .ok_or_else(|| CliError::Check("report missing config.problem.t_final".into()))?;
    let n_steps = report_json["config"]["problem"]["n_steps"]
        .as_u64()
        .ok_or_else(|| CliError::Check("report missing config.problem.n_steps".into()))?
        as usize;
    let dt = t_final / n_steps as f64;

    // monotonicity
    let mut worst = f64::NEG_INFINITY;
    for w in rows.windows(2) {
        worst = worst.max((w[0].j_value - w[1].j_value) / w[0].j_value.abs().max(1.0));
    }
    let mono_pass = worst <= MONOTONICITY_TOL;

    // gain identity
    let max_gain = rows[1..]
        .iter()
        .map(|r| r.gain_lhs.abs())
        .fold(0.0f64, f64::max);
    let tol = gain_identity_run_tol(dt, max_gain);
    let mut gain_pass = true;
    for r in &rows[1..] {
        let recomputed = r.gain_lhs - r.gain_obs - r.gain_fwd - r.gain_bwd;
        if (recomputed - r.identity_residual).abs() > 1e-15_f64.max(1e-9 * r.gain_lhs.abs()) {
            gain_pass = false;
        }
        if r.identity_residual.abs() > tol
            || r.gain_obs < -OBS_TERM_TOL
            || r.gain_fwd < -QUAD_TERM_TOL
            || r.gain_bwd < -QUAD_TERM_TOL
        {
            gain_pass = false;
        }
    }

    // summability
    let mut coefs = Vec::new();
    if delta > 0.0 && delta < 2.0 {
        coefs.push(2.0 / delta - 1.0);
    }
    if eta > 0.0 && eta < 2.0 {
        coefs.push(2.0 / eta - 1.0);
    }
    let summ_pass = if coefs.is_empty() {
        None
    } else {
        let min_coef = coefs.iter().copied().fold(f64::INFINITY, f64::min);
        let bound = (rows.last().unwrap().j_value - rows[0].j_value) / (alpha * min_coef)
            + SUMMABILITY_SLACK;
        let sum_fwd: f64 = rows[1..].iter().map(|r| r.d_fwd_l2 * r.d_fwd_l2).sum();
        let sum_bwd: f64 = rows[..rows.len() - 1]
            .iter()
            .map(|r| r.d_bwd_l2 * r.d_bwd_l2)
            .sum();
        let fwd_ok = !(delta > 0.0 && delta < 2.0) || sum_fwd <= bound;
        let bwd_ok = !(eta > 0.0 && eta < 2.0) || sum_bwd <= bound;
        Some(fwd_ok && bwd_ok)
    };

    let mut out = Vec::new();
    if let Some(verdicts) = report_json["verdicts"].as_array() {
        for v in verdicts {
            let name = v["name"].as_str().unwrap_or_default();
            let reported = v["status"].as_str().unwrap_or_default();
            if reported == "skipped" {
                continue;
            }
            let reported_pass = reported == "pass";
            match name {
                "monotonicity" => out.push((name.to_string(), mono_pass, reported_pass)),
                "gain_identity" => out.push((name.to_string(), gain_pass, reported_pass)),
                "summability" => {
                    if let Some(p) = summ_pass {
                        out.push((name.to_string(), p, reported_pass));
                    }
                }
                _ => {}
            }
        }
    }
    Ok(out)
}
