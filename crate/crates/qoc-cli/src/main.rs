use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qoc::analysis::{alpha_threshold, bound_m};
use qoc::quantum::SchemeParams;
use qoc_cli::checks::recheck_from_trace;
use qoc_cli::{execute, parse_config, CliError};

#[derive(Parser)]
#[command(
    name = "qoc",
    about = "Monotonic schemes for bilinear quantum optimal control: runs, sweeps and certification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration: execute every sweep point, write traces, final
    /// fields, verdict reports and a sweep summary. Exits 0 iff every
    /// enabled check passes at every point.
    Run {
        /// Path to the TOML configuration
        config: PathBuf,
        /// Number of sweep points processed concurrently
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Override the configured output directory
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Recompute trace-supported verdicts (monotonicity, gain identity,
    /// summability) from an emitted trace and compare with the report.
    Check {
        /// Path to a trace_<point>.csv
        trace: PathBuf,
        /// Path to the matching report_<point>.json
        report: PathBuf,
    },
    /// Print the uniform field bound M and the guaranteed-convergence
    /// penalty threshold for given operator norms and scheme parameters.
    Threshold {
        #[arg(long)]
        norm_o: f64,
        #[arg(long)]
        norm_mu: f64,
        #[arg(long)]
        t_final: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        /// L2 norm of the initial field
        #[arg(long, default_value_t = 0.0)]
        eps0_l2: f64,
        /// L2 norm of the derived backward field at the bootstrap
        #[arg(long, default_value_t = 0.0)]
        eps_tilde0_l2: f64,
    },
}

fn main() -> ExitCode {
    match run_cli() {
        Ok(ok) => {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run_cli() -> Result<bool, CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            workers,
            output_dir,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| CliError::Io(format!("reading {}: {e}", config.display())))?;
            let parsed = parse_config(&text)?;
            let outcome = execute(&parsed, workers, output_dir.as_deref())?;
            for p in &outcome.points {
                let status = if p.passed() { "ok" } else { "FAILED" };
                let detail = if p.passed() {
                    String::new()
                } else {
                    format!(" [{}]", p.failed_checks().join(", "))
                };
                println!(
                    "{} delta={} eta={} alpha={} iters={} J={:.6}{detail} -> {status}",
                    p.point.label(),
                    p.point.delta,
                    p.point.eta,
                    p.point.alpha,
                    p.iterations,
                    p.final_j,
                );
            }
            println!(
                "artifacts in {} ({} points)",
                outcome.output_dir.display(),
                outcome.points.len()
            );
            Ok(outcome.all_passed())
        }
        Command::Check { trace, report } => {
            let trace_text = std::fs::read_to_string(&trace)
                .map_err(|e| CliError::Io(format!("reading {}: {e}", trace.display())))?;
            let report_json: serde_json::Value = serde_json::from_str(
                &std::fs::read_to_string(&report)
                    .map_err(|e| CliError::Io(format!("reading {}: {e}", report.display())))?,
            )?;
            let results = recheck_from_trace(&trace_text, &report_json)?;
            if results.is_empty() {
                println!("no recomputable verdicts found in report");
                return Ok(true);
            }
            let mut all_match = true;
            for (name, recomputed, reported) in &results {
                let matched = recomputed == reported;
                all_match &= matched;
                println!(
                    "{name}: recomputed={} reported={} {}",
                    verdict_str(*recomputed),
                    verdict_str(*reported),
                    if matched { "match" } else { "MISMATCH" }
                );
            }
            Ok(all_match)
        }
        Command::Threshold {
            norm_o,
            norm_mu,
            t_final,
            alpha,
            delta,
            eta,
            eps0_l2,
            eps_tilde0_l2,
        } => {
            let params = SchemeParams::new(alpha, delta, eta).map_err(CliError::Domain)?;
            let m = bound_m(&params, norm_o, norm_mu, eps0_l2, eps_tilde0_l2)
                .map_err(CliError::Domain)?;
            let threshold =
                alpha_threshold(norm_o, norm_mu, t_final, m).map_err(CliError::Domain)?;
            println!("M = {m:.17e}");
            println!("alpha_threshold = {threshold:.17e}");
            println!("alpha = {alpha:.17e}");
            println!(
                "alpha > threshold: {}",
                if alpha > threshold { "yes" } else { "no" }
            );
            Ok(true)
        }
    }
}

fn verdict_str(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}
