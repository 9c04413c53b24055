//! The monotonic iteration loop: cost evaluation, the bootstrap iterate, one
//! full (forward + backward) sweep pair, and the stopping-controlled driver
//! with per-iteration gain bookkeeping.

use std::collections::VecDeque;
use std::time::Instant;

use crate::error::{QocError, Result};
use crate::propagator::{
    backward_sweep_with_update, forward_sweep_with_update, propagate_fixed, Trajectory,
};
use crate::quantum::{ControlField, ControlProblem, SchemeParams, StateVector};

/// Default number of trailing iterates whose fields are retained for
/// limit-set diagnostics.
pub const DEFAULT_TAIL_WINDOW: usize = 20;

/// One iterate of the scheme: the pair of fields, both trajectories and the
/// cost of the forward field.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub k: usize,
    pub eps: ControlField,
    pub eps_tilde: ControlField,
    pub psi: Trajectory,
    pub chi: Trajectory,
    pub j_value: f64,
    pub fluence: f64,
}

/// The per-step gain decomposition: `J(eps^{k+1}) - J(eps^k)` splits into
/// `<dpsi|O|dpsi>`, `alpha (2/delta - 1) ||eps^{k+1} - eps_tilde^k||^2`,
/// `alpha (2/eta - 1) ||eps_tilde^k - eps^k||^2` and a residual, the
/// discretization defect of the identity. For delta = 0 (resp. eta = 0) the
/// corresponding difference vanishes identically and the term is defined
/// as 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct GainBreakdown {
    pub observable_term: f64,
    pub forward_term: f64,
    pub backward_term: f64,
    pub lhs: f64,
    pub identity_residual: f64,
}

/// Stopping criteria; `None` disables a tolerance. `max_iters` always bounds
/// the run.
#[derive(Debug, Clone, Copy)]
pub struct StoppingPolicy {
    pub max_iters: usize,
    pub j_gain_tol: Option<f64>,
    pub field_delta_tol: Option<f64>,
}

impl StoppingPolicy {
    pub fn max_iters(max_iters: usize) -> Self {
        Self {
            max_iters,
            j_gain_tol: None,
            field_delta_tol: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    JGain,
    FieldDelta,
}

/// Scalar record of one iterate, kept for every iteration of a run.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k: usize,
    pub j_value: f64,
    pub fluence: f64,
    pub eps_l2: f64,
    pub eps_sup: f64,
    pub eps_tilde_l2: f64,
    pub eps_tilde_sup: f64,
    /// ||eps^k - eps_tilde^{k-1}||_2 (0 for the bootstrap record).
    pub delta_fwd_l2: f64,
    /// ||eps_tilde^k - eps^k||_2.
    pub delta_bwd_l2: f64,
    /// ||eps^k - eps^{k-1}||_2 (0 for the bootstrap record).
    pub eps_delta_l2: f64,
    /// Gain decomposition of the step arriving at iterate k (zeros at k = 0).
    pub gain: GainBreakdown,
    pub wall_time_s: f64,
}

/// Full iteration history of one run plus the retained tail of fields.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub params: SchemeParams,
    pub policy: StoppingPolicy,
    pub records: Vec<IterationRecord>,
    /// Last `tail_window` iterates' forward fields, oldest first.
    pub tail: Vec<(usize, ControlField)>,
    pub final_eps: ControlField,
    pub final_eps_tilde: ControlField,
    pub stop_reason: StopReason,
    pub eps0_l2: f64,
    pub eps_tilde0_l2: f64,
    pub total_wall_s: f64,
}

impl RunReport {
    pub fn final_j(&self) -> f64 {
        self.records.last().expect("run has records").j_value
    }

    pub fn initial_j(&self) -> f64 {
        self.records[0].j_value
    }

    /// J values for the iterates retained in the tail, same order as `tail`.
    pub fn tail_j_values(&self) -> Vec<f64> {
        self.tail
            .iter()
            .map(|(k, _)| self.records[*k].j_value)
            .collect()
    }
}

/// J(eps) = <psi(T)|O|psi(T)> - alpha * fluence, with psi(T) obtained from a
/// fixed-field propagation. Returns (J, fluence).
pub fn cost(problem: &ControlProblem, field: &ControlField, alpha: f64) -> Result<(f64, f64)> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(QocError::InvalidParameter {
            name: "alpha",
            value: alpha,
            constraint: "alpha > 0",
        });
    }
    let traj = propagate_fixed(problem, field, None)?;
    terminal_cost(problem, field, alpha, &traj)
}

fn terminal_cost(
    problem: &ControlProblem,
    field: &ControlField,
    alpha: f64,
    psi: &Trajectory,
) -> Result<(f64, f64)> {
    let terminal = StateVector::unnormalized(psi.terminal().clone());
    let observable = problem.observable().expectation(&terminal)?;
    let fluence = field.norm_l2().powi(2);
    Ok((observable - alpha * fluence, fluence))
}

/// Builds iterate k = 0 from a user-supplied initial field: a forward
/// propagation of `eps0` followed by one backward update sweep producing
/// (eps_tilde^0, chi^0). This makes the k = 1 forward sweep well-posed.
pub fn bootstrap(
    problem: &ControlProblem,
    params: &SchemeParams,
    eps0: &ControlField,
) -> Result<IterateState> {
    let psi = propagate_fixed(problem, eps0, None)?;
    let (eps_tilde, chi) = backward_sweep_with_update(problem, params, eps0, &psi)?;
    let (j_value, fluence) = terminal_cost(problem, eps0, params.alpha(), &psi)?;
    Ok(IterateState {
        k: 0,
        eps: eps0.clone(),
        eps_tilde,
        psi,
        chi,
        j_value,
        fluence,
    })
}

/// Advances one full iteration: forward sweep from (eps_tilde^k, chi^k), then
/// backward sweep, and fills the gain decomposition of the step.
pub fn iterate(
    problem: &ControlProblem,
    params: &SchemeParams,
    prev: &IterateState,
) -> Result<(IterateState, GainBreakdown)> {
    let (eps_next, psi_next) =
        forward_sweep_with_update(problem, params, &prev.eps_tilde, &prev.chi)?;
    let (eps_tilde_next, chi_next) =
        backward_sweep_with_update(problem, params, &eps_next, &psi_next)?;
    let (j_next, fluence_next) = terminal_cost(problem, &eps_next, params.alpha(), &psi_next)?;

    let dpsi = psi_next.terminal() - prev.psi.terminal();
    let o_dpsi = problem.observable().matrix() * &dpsi;
    let observable_term = dpsi.dotc(&o_dpsi).re;

    let alpha = params.alpha();
    let forward_term = if params.delta() == 0.0 {
        0.0
    } else {
        alpha * (2.0 / params.delta() - 1.0) * eps_next.l2_distance(&prev.eps_tilde).powi(2)
    };
    let backward_term = if params.eta() == 0.0 {
        0.0
    } else {
        alpha * (2.0 / params.eta() - 1.0) * prev.eps_tilde.l2_distance(&prev.eps).powi(2)
    };
    let lhs = j_next - prev.j_value;
    let gain = GainBreakdown {
        observable_term,
        forward_term,
        backward_term,
        lhs,
        identity_residual: lhs - observable_term - forward_term - backward_term,
    };
    let next = IterateState {
        k: prev.k + 1,
        eps: eps_next,
        eps_tilde: eps_tilde_next,
        psi: psi_next,
        chi: chi_next,
        j_value: j_next,
        fluence: fluence_next,
    };
    Ok((next, gain))
}

fn record_of(
    state: &IterateState,
    prev: Option<&IterateState>,
    gain: GainBreakdown,
    wall: f64,
) -> IterationRecord {
    IterationRecord {
        k: state.k,
        j_value: state.j_value,
        fluence: state.fluence,
        eps_l2: state.eps.norm_l2(),
        eps_sup: state.eps.norm_sup(),
        eps_tilde_l2: state.eps_tilde.norm_l2(),
        eps_tilde_sup: state.eps_tilde.norm_sup(),
        delta_fwd_l2: prev
            .map(|p| state.eps.l2_distance(&p.eps_tilde))
            .unwrap_or(0.0),
        delta_bwd_l2: state.eps_tilde.l2_distance(&state.eps),
        eps_delta_l2: prev.map(|p| state.eps.l2_distance(&p.eps)).unwrap_or(0.0),
        gain,
        wall_time_s: wall,
    }
}

/// Runs the scheme until a stopping criterion fires, recording every iterate
/// and keeping the last `tail_window` fields for limit-set diagnostics.
pub fn run(
    problem: &ControlProblem,
    params: &SchemeParams,
    eps0: &ControlField,
    policy: &StoppingPolicy,
    tail_window: usize,
) -> Result<RunReport> {
    let t_run = Instant::now();
    let t0 = Instant::now();
    let mut current = bootstrap(problem, params, eps0)?;
    if !current.j_value.is_finite() {
        return Err(QocError::NonFiniteCost { iteration: 0 });
    }
    let eps0_l2 = current.eps.norm_l2();
    let eps_tilde0_l2 = current.eps_tilde.norm_l2();
    let mut records = vec![record_of(
        &current,
        None,
        GainBreakdown::default(),
        t0.elapsed().as_secs_f64(),
    )];
    let mut tail: VecDeque<(usize, ControlField)> = VecDeque::new();
    let window = tail_window.max(1);
    tail.push_back((0, current.eps.clone()));
    let mut stop_reason = StopReason::MaxIters;
    for _ in 0..policy.max_iters {
        let t_iter = Instant::now();
        let (next, gain) = iterate(problem, params, &current)?;
        if !next.j_value.is_finite() {
            return Err(QocError::NonFiniteCost { iteration: next.k });
        }
        records.push(record_of(
            &next,
            Some(&current),
            gain,
            t_iter.elapsed().as_secs_f64(),
        ));
        if tail.len() == window {
            tail.pop_front();
        }
        tail.push_back((next.k, next.eps.clone()));
        let rec = records.last().expect("just pushed");
        let stop_field = policy
            .field_delta_tol
            .map(|tol| rec.eps_delta_l2 < tol)
            .unwrap_or(false);
        let stop_gain = policy
            .j_gain_tol
            .map(|tol| gain.lhs.abs() < tol)
            .unwrap_or(false);
        current = next;
        if stop_field {
            stop_reason = StopReason::FieldDelta;
            break;
        }
        if stop_gain {
            stop_reason = StopReason::JGain;
            break;
        }
    }
    Ok(RunReport {
        params: *params,
        policy: *policy,
        records,
        tail: tail.into_iter().collect(),
        final_eps: current.eps,
        final_eps_tilde: current.eps_tilde,
        stop_reason,
        eps0_l2,
        eps_tilde0_l2,
        total_wall_s: t_run.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{HermitianOperator, ObservableOperator, StateVector, TimeGrid};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use num_complex::Complex64 as C64;
    use qoc_testkit::constant_field_terminal;

    fn two_level(theta: f64, t_final: f64, n_steps: usize) -> ControlProblem {
        let h = HermitianOperator::from_real_rows(2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        let mu = HermitianOperator::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let o = ObservableOperator::from_real_rows(2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        let psi0 = StateVector::normalized(DVector::from_vec(vec![
            C64::new(theta.cos(), 0.0),
            C64::new(theta.sin(), 0.0),
        ]))
        .unwrap();
        let grid = TimeGrid::new(t_final, n_steps).unwrap();
        ControlProblem::new(h, mu, o, psi0, grid, None).unwrap()
    }

    fn ground_two_level(t_final: f64, n_steps: usize) -> ControlProblem {
        two_level(0.0f64.max(f64::MIN_POSITIVE), t_final, n_steps)
    }

    #[test]
    fn cost_of_zero_field_from_ground_state() {
        // psi0 = (1, 0) stays stationary, never reaches the target level.
        let problem = ground_two_level(1.0, 500);
        let field = ControlField::zero(*problem.grid());
        let (j, fluence) = cost(&problem, &field, 1.0).unwrap();
        assert_abs_diff_eq!(j, 0.0, epsilon = 1e-12);
        assert_eq!(fluence, 0.0);
    }

    #[test]
    fn cost_with_identity_observable_is_one() {
        let h = HermitianOperator::from_real_rows(2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        let mu = HermitianOperator::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let o = ObservableOperator::from_real_rows(2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let psi0 = StateVector::normalized(DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ]))
        .unwrap();
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let problem = ControlProblem::new(h, mu, o, psi0, grid, None).unwrap();
        let field = ControlField::zero(grid);
        let (j, _) = cost(&problem, &field, 0.3).unwrap();
        assert_abs_diff_eq!(j, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cost_constant_field_against_expm_oracle() {
        // J = |<1| exp(-i (H - mu)) |0>|^2 - 0.1 for eps = 1, T = 1, alpha = 0.1.
        let problem = ground_two_level(1.0, 4000);
        let field = ControlField::constant(*problem.grid(), 1.0).unwrap();
        let (j, fluence) = cost(&problem, &field, 0.1).unwrap();
        let terminal = constant_field_terminal(
            problem.hamiltonian().matrix(),
            problem.dipole().matrix(),
            1.0,
            1.0,
            problem.initial_state().amplitudes(),
        );
        let expected = terminal[1].norm_sqr() - 0.1;
        assert_abs_diff_eq!(fluence, 1.0, epsilon = 1e-12);
        assert!((j - expected).abs() < 1e-6, "J = {j}, oracle = {expected}");
    }

    #[test]
    fn bootstrap_eta_zero_keeps_field() {
        let problem = two_level(std::f64::consts::FRAC_PI_8, 2.0, 200);
        let params = SchemeParams::new(1.0, 1.0, 0.0).unwrap();
        let eps0 = ControlField::constant(*problem.grid(), 0.1).unwrap();
        let state = bootstrap(&problem, &params, &eps0).unwrap();
        assert_eq!(state.eps_tilde.values(), eps0.values());
        assert_eq!(state.k, 0);
    }

    #[test]
    fn bootstrap_from_ground_state_is_degenerate_critical_point() {
        // psi0 = (1, 0): psi(T) = (1, 0) under eps = 0, so chi(T) = O psi(T) = 0
        // and the derived eps_tilde stays identically zero.
        let problem = ground_two_level(1.0, 300);
        let params = SchemeParams::new(1.0, 1.0, 1.0).unwrap();
        let eps0 = ControlField::zero(*problem.grid());
        let state = bootstrap(&problem, &params, &eps0).unwrap();
        for v in state.eps_tilde.values() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-14);
        }
        for j in 0..=300 {
            assert_abs_diff_eq!(state.chi.norm_at(j), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_observable_shrinks_fields() {
        let h = HermitianOperator::from_real_rows(2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        let mu = HermitianOperator::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let o = ObservableOperator::from_real_rows(2, &[0.0, 0.0, 0.0, 0.0]).unwrap();
        let psi0 = StateVector::normalized(DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ]))
        .unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let problem = ControlProblem::new(h, mu, o, psi0, grid, None).unwrap();
        let params = SchemeParams::new(1.0, 1.0, 1.0).unwrap();
        let eps0 = ControlField::constant(grid, 1.0).unwrap();
        let report = run(&problem, &params, &eps0, &StoppingPolicy::max_iters(30), 5).unwrap();
        // only critical point of -alpha int eps^2 is eps = 0
        assert!(report.final_eps.norm_sup() < 1e-6);
    }

    #[test]
    fn iterate_frozen_scheme_is_identity() {
        let problem = two_level(std::f64::consts::FRAC_PI_8, 2.0, 200);
        let params = SchemeParams::new(1.0, 0.0, 0.0).unwrap();
        let eps0 = ControlField::constant(*problem.grid(), 0.3).unwrap();
        let state = bootstrap(&problem, &params, &eps0).unwrap();
        let (next, gain) = iterate(&problem, &params, &state).unwrap();
        assert_eq!(next.eps.values(), eps0.values());
        assert_eq!(next.j_value, state.j_value);
        assert_eq!(gain.lhs, 0.0);
        assert_eq!(gain.forward_term, 0.0);
        assert_eq!(gain.backward_term, 0.0);
    }

    #[test]
    fn iterate_state_cost_recomputable() {
        let problem = two_level(std::f64::consts::FRAC_PI_8, 2.0, 400);
        let params = SchemeParams::new(1.0, 1.0, 1.0).unwrap();
        let eps0 = ControlField::zero(*problem.grid());
        let state = bootstrap(&problem, &params, &eps0).unwrap();
        let (next, _) = iterate(&problem, &params, &state).unwrap();
        let (j, fluence) = cost(&problem, &next.eps, params.alpha()).unwrap();
        assert_abs_diff_eq!(j, next.j_value, epsilon = 1e-12);
        assert_abs_diff_eq!(fluence, next.fluence, epsilon = 1e-12);
    }

    #[test]
    fn zhu_rabitz_gain_coefficients() {
        // delta = eta = 1: both quadratic coefficients are alpha * (2 - 1) = alpha.
        let problem = two_level(std::f64::consts::FRAC_PI_8, 2.0, 400);
        let params = SchemeParams::new(1.0, 1.0, 1.0).unwrap();
        let eps0 = ControlField::zero(*problem.grid());
        let state = bootstrap(&problem, &params, &eps0).unwrap();
        let (next, gain) = iterate(&problem, &params, &state).unwrap();
        let fwd = next.eps.l2_distance(&state.eps_tilde).powi(2);
        let bwd = state.eps_tilde.l2_distance(&state.eps).powi(2);
        assert_abs_diff_eq!(gain.forward_term, fwd, epsilon = 1e-15);
        assert_abs_diff_eq!(gain.backward_term, bwd, epsilon = 1e-15);
    }

    #[test]
    fn first_step_never_decreases_cost() {
        let problem = two_level(std::f64::consts::FRAC_PI_8, 5.0, 2000);
        let params = SchemeParams::new(1.0, 1.0, 0.0).unwrap();
        let eps0 = ControlField::zero(*problem.grid());
        let state = bootstrap(&problem, &params, &eps0).unwrap();
        let (next, gain) = iterate(&problem, &params, &state).unwrap();
        assert!(next.j_value >= state.j_value - 1e-9);
        assert!(gain.observable_term >= -1e-10);
        assert!(gain.forward_term >= -1e-12);
    }

    #[test]
    fn run_with_zero_max_iters_reports_bootstrap_only() {
        let problem = two_level(std::f64::consts::FRAC_PI_8, 1.0, 100);
        let params = SchemeParams::new(1.0, 1.0, 1.0).unwrap();
        let eps0 = ControlField::zero(*problem.grid());
        let report = run(&problem, &params, &eps0, &StoppingPolicy::max_iters(0), 5).unwrap();
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.records[0].k, 0);
        assert_eq!(report.stop_reason, StopReason::MaxIters);
    }

    #[test]
    fn run_monotone_cost_sequence() {
        let problem = two_level(std::f64::consts::FRAC_PI_8, 5.0, 1000);
        let params = SchemeParams::new(1.0, 1.0, 1.0).unwrap();
        let eps0 = ControlField::zero(*problem.grid());
        let report = run(&problem, &params, &eps0, &StoppingPolicy::max_iters(50), 10).unwrap();
        for w in report.records.windows(2) {
            let tol = 1e-9 * w[0].j_value.abs().max(1.0);
            assert!(
                w[1].j_value >= w[0].j_value - tol,
                "J decreased at k = {}: {} -> {}",
                w[1].k,
                w[0].j_value,
                w[1].j_value
            );
        }
        assert!(report.final_j() > report.initial_j());
        // records are index-contiguous from 0
        for (i, r) in report.records.iter().enumerate() {
            assert_eq!(r.k, i);
        }
    }

    #[test]
    fn run_stops_on_field_delta() {
        let problem = two_level(std::f64::consts::FRAC_PI_8, 1.0, 200);
        // large alpha: strongly contracting Krotov regime
        let params = SchemeParams::new(50.0, 1.0, 0.0).unwrap();
        let eps0 = ControlField::zero(*problem.grid());
        let policy = StoppingPolicy {
            max_iters: 100,
            j_gain_tol: None,
            field_delta_tol: Some(1e-9),
        };
        let report = run(&problem, &params, &eps0, &policy, 5).unwrap();
        assert_eq!(report.stop_reason, StopReason::FieldDelta);
        assert!(report.records.len() < 100);
        let last = report.records.last().unwrap();
        assert!(last.eps_delta_l2 < 1e-9);
    }

    #[test]
    fn tail_window_retains_last_fields() {
        let problem = two_level(std::f64::consts::FRAC_PI_8, 1.0, 100);
        let params = SchemeParams::new(1.0, 1.0, 1.0).unwrap();
        let eps0 = ControlField::zero(*problem.grid());
        let report = run(&problem, &params, &eps0, &StoppingPolicy::max_iters(30), 7).unwrap();
        assert_eq!(report.tail.len(), 7);
        let ks: Vec<usize> = report.tail.iter().map(|(k, _)| *k).collect();
        assert_eq!(ks, (24..=30).collect::<Vec<_>>());
    }

    #[test]
    fn run_stops_on_j_gain() {
        let problem = two_level(std::f64::consts::FRAC_PI_8, 1.0, 200);
        let params = SchemeParams::new(50.0, 1.0, 0.0).unwrap();
        let eps0 = ControlField::zero(*problem.grid());
        let policy = StoppingPolicy {
            max_iters: 100,
            j_gain_tol: Some(1e-14),
            field_delta_tol: None,
        };
        let report = run(&problem, &params, &eps0, &policy, 5).unwrap();
        assert_eq!(report.stop_reason, StopReason::JGain);
        let last = report.records.last().unwrap();
        assert!(last.gain.lhs.abs() < 1e-14);
    }
}
