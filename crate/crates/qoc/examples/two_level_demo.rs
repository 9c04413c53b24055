//! Minimal library walkthrough: optimize the default two-level instance with
//! the Zhu-Rabitz scheme, then certify the run.

use qoc::analysis::{bound_m, check_bound, critical_residual, limit_set_diagnostics};
use qoc::problems::{two_level, DEFAULT_THETA};
use qoc::quantum::{ControlField, SchemeParams};
use qoc::scheme::{run, StoppingPolicy};

fn main() -> qoc::Result<()> {
    let problem = two_level(DEFAULT_THETA, 5.0, 4000)?;
    let params = SchemeParams::new(1.0, 1.0, 1.0)?;
    let eps0 = ControlField::zero(*problem.grid());
    let policy = StoppingPolicy {
        max_iters: 100,
        j_gain_tol: None,
        field_delta_tol: Some(1e-12),
    };
    let report = run(&problem, &params, &eps0, &policy, 20)?;

    println!("k      J            fluence      ||eps||_2    residual");
    for r in report.records.iter().step_by(10) {
        println!(
            "{:<6} {:<12.8} {:<12.8} {:<12.8} {:+.3e}",
            r.k, r.j_value, r.fluence, r.eps_l2, r.gain.identity_residual
        );
    }
    println!(
        "stopped after {} iterations ({:?}), J = {:.8}",
        report.records.len() - 1,
        report.stop_reason,
        report.final_j()
    );

    let m = bound_m(&params, 1.0, 1.0, report.eps0_l2, report.eps_tilde0_l2)?;
    let cert = check_bound(&report, m);
    println!(
        "uniform bound: M = {m:.4}, worst L2 ratio {:.4} (pass = {})",
        cert.worst_ratio, cert.checked_l2
    );
    let diag = limit_set_diagnostics(&report, 1e-8)?;
    println!(
        "tail: diameter {:.3e}, max gap {:.3e}, J spread {:.3e}, singleton = {}",
        diag.tail_diameter_l2, diag.max_consecutive_gap, diag.j_spread, diag.singleton_verdict
    );
    let residual = critical_residual(&problem, &report.final_eps, params.alpha())?;
    println!("critical-point residual of the final field: {residual:.3e}");
    Ok(())
}
