//! Computable certificates for completed runs: the uniform field bound and
//! its runtime check, the large-penalty convergence threshold, Gronwall
//! sensitivity bounds, Euler-Lagrange (critical-point) residuals, and
//! limit-set diagnostics on iterate tails.

use crate::error::{QocError, Result};
use crate::propagator::{midpoint_couplings, propagate_fixed};
use crate::quantum::{ControlField, ControlProblem, SchemeParams, StateVector};
use crate::scheme::RunReport;

/// Verdict of the uniform-bound check against a run's recorded field norms.
///
/// The bound statement is pointwise in time while its derivation controls L2
/// norms; both readings are checked and reported separately.
#[derive(Debug, Clone, Copy)]
pub struct BoundCertificate {
    pub m: f64,
    /// All recorded ||eps^k||_2 and ||eps_tilde^k||_2 are <= M.
    pub checked_l2: bool,
    /// Same for the sup norms.
    pub checked_sup: bool,
    /// max over k of the recorded L2 norms divided by M.
    pub worst_ratio: f64,
    /// max over k of the recorded sup norms divided by M.
    pub worst_ratio_sup: f64,
}

/// Limit-set diagnostics computed on the retained tail of a run.
#[derive(Debug, Clone, Copy)]
pub struct LimitSetDiagnostics {
    /// Number of tail iterates examined.
    pub window: usize,
    /// Max pairwise ||eps^i - eps^j||_2 over the tail.
    pub tail_diameter_l2: f64,
    /// Largest consecutive gap: the finest e for which the tail is an e-string.
    pub max_consecutive_gap: f64,
    /// max - min of J over the tail.
    pub j_spread: f64,
    pub singleton_verdict: bool,
}

/// Pass/fail record of the two Gronwall sensitivity bounds for one field pair.
#[derive(Debug, Clone, Copy)]
pub struct GronwallCheck {
    pub observed_psi: f64,
    pub bound_psi: f64,
    pub observed_chi: f64,
    pub bound_chi: f64,
    pub psi_ok: bool,
    pub chi_ok: bool,
}

impl GronwallCheck {
    pub fn passed(&self) -> bool {
        self.psi_ok && self.chi_ok
    }
}

/// The uniform bound
/// `M = max(||eps0||_2, ||eps_tilde0||_2, max(1, delta/(2-delta), eta/(2-eta)) * ||O|| ||mu|| / alpha)`.
///
/// Undefined at delta = 2 or eta = 2, where the coefficient diverges.
pub fn bound_m(
    params: &SchemeParams,
    norm_o: f64,
    norm_mu: f64,
    eps0_l2: f64,
    eps_tilde0_l2: f64,
) -> Result<f64> {
    if params.delta() >= 2.0 || params.eta() >= 2.0 {
        return Err(QocError::BoundUndefinedAtEndpoint);
    }
    let coef = 1.0f64
        .max(params.delta() / (2.0 - params.delta()))
        .max(params.eta() / (2.0 - params.eta()));
    Ok(eps0_l2
        .max(eps_tilde0_l2)
        .max(coef * norm_o * norm_mu / params.alpha()))
}

/// Checks every recorded iterate of a run against the bound M, in both the
/// L2 and the sup reading. Failures are verdicts, not errors.
pub fn check_bound(report: &RunReport, m: f64) -> BoundCertificate {
    let mut worst_l2 = 0.0f64;
    let mut worst_sup = 0.0f64;
    for r in &report.records {
        worst_l2 = worst_l2.max(r.eps_l2).max(r.eps_tilde_l2);
        worst_sup = worst_sup.max(r.eps_sup).max(r.eps_tilde_sup);
    }
    let worst_ratio = worst_l2 / m;
    let worst_ratio_sup = worst_sup / m;
    BoundCertificate {
        m,
        checked_l2: worst_ratio <= 1.0 + 1e-9,
        checked_sup: worst_ratio_sup <= 1.0 + 1e-9,
        worst_ratio,
        worst_ratio_sup,
    }
}

/// The penalty threshold
/// `alpha* = ||O|| ||mu||^2 T^2 (1 + e^{T ||mu|| M}) e^{2 T ||mu|| M}`
/// above which the Krotov-form scheme (delta = 1, eta = 0) has a unique
/// limit. Errors when the exponentials overflow.
pub fn alpha_threshold(norm_o: f64, norm_mu: f64, t_final: f64, m: f64) -> Result<f64> {
    for (name, v) in [
        ("norm_o", norm_o),
        ("norm_mu", norm_mu),
        ("T", t_final),
        ("M", m),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(QocError::InvalidParameter {
                name,
                value: v,
                constraint: "finite and non-negative",
            });
        }
    }
    let x = t_final * norm_mu * m;
    let value = norm_o * norm_mu * norm_mu * t_final * t_final * (1.0 + x.exp()) * (2.0 * x).exp();
    if !value.is_finite() {
        return Err(QocError::ThresholdOverflow);
    }
    Ok(value)
}

/// Euler-Lagrange residual of a field: propagates psi forward and chi
/// backward from `O psi(T)` with the same field, then returns
/// `|| t -> alpha * eps(t) + Im<chi(t)|mu|psi(t)> ||_2` under the
/// piecewise-constant quadrature, the coupling sampled with the same midpoint
/// stencil the sweeps use.
pub fn critical_residual(
    problem: &ControlProblem,
    field: &ControlField,
    alpha: f64,
) -> Result<f64> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(QocError::InvalidParameter {
            name: "alpha",
            value: alpha,
            constraint: "alpha > 0",
        });
    }
    let psi = propagate_fixed(problem, field, None)?;
    let chi_t = StateVector::unnormalized(problem.observable().matrix() * psi.terminal());
    let chi = propagate_fixed(problem, field, Some(&chi_t))?;
    let couplings = midpoint_couplings(problem, field, &psi, &chi)?;
    let dt = problem.grid().dt();
    let mut acc = 0.0f64;
    for (value, coupling) in field.values().iter().zip(couplings) {
        let r = alpha * value + coupling;
        acc += r * r;
    }
    Ok((acc * dt).sqrt())
}

/// Checks the two Gronwall sensitivity bounds
/// `||dpsi(t)|| <= ||mu|| T e^{T ||mu|| M} ||deps||_1` and
/// `||dchi(t)|| <= ||O|| ||mu|| T (1 + e^{T ||mu|| M}) e^{T ||mu|| M} ||deps||_1`
/// on a concrete pair of fields bounded by M.
pub fn gronwall_check(
    problem: &ControlProblem,
    field_a: &ControlField,
    field_b: &ControlField,
    m: f64,
) -> Result<GronwallCheck> {
    for (name, f) in [("field_a", field_a), ("field_b", field_b)] {
        if f.norm_sup() > m * (1.0 + 1e-12) {
            return Err(QocError::Precondition(format!(
                "{name} exceeds the bound M: sup = {} > M = {m}",
                f.norm_sup()
            )));
        }
    }
    let norm_mu = problem.dipole().spectral_norm();
    let norm_o = problem.observable().spectral_norm();
    let t_final = problem.grid().t_final();
    let deps_l1 = field_a.l1_distance(field_b);

    let psi_a = propagate_fixed(problem, field_a, None)?;
    let psi_b = propagate_fixed(problem, field_b, None)?;
    let chi_a_t = StateVector::unnormalized(problem.observable().matrix() * psi_a.terminal());
    let chi_b_t = StateVector::unnormalized(problem.observable().matrix() * psi_b.terminal());
    let chi_a = propagate_fixed(problem, field_a, Some(&chi_a_t))?;
    let chi_b = propagate_fixed(problem, field_b, Some(&chi_b_t))?;

    let mut observed_psi = 0.0f64;
    let mut observed_chi = 0.0f64;
    for j in 0..=problem.grid().n_steps() {
        observed_psi = observed_psi.max((psi_a.state(j) - psi_b.state(j)).norm());
        observed_chi = observed_chi.max((chi_a.state(j) - chi_b.state(j)).norm());
    }
    let growth = (t_final * norm_mu * m).exp();
    let bound_psi = norm_mu * t_final * growth * deps_l1;
    let bound_chi = norm_o * norm_mu * t_final * (1.0 + growth) * growth * deps_l1;
    Ok(GronwallCheck {
        observed_psi,
        bound_psi,
        observed_chi,
        bound_chi,
        psi_ok: observed_psi <= bound_psi + 1e-12,
        chi_ok: observed_chi <= bound_chi + 1e-12,
    })
}

/// Tail diagnostics: diameter, empirical e-string granularity and J spread
/// over the retained fields of a run.
pub fn limit_set_diagnostics(
    report: &RunReport,
    singleton_threshold: f64,
) -> Result<LimitSetDiagnostics> {
    let tail = &report.tail;
    if tail.len() < 2 {
        return Err(QocError::WindowTooSmall {
            needed: 2,
            got: tail.len(),
        });
    }
    let mut diameter = 0.0f64;
    for i in 0..tail.len() {
        for j in (i + 1)..tail.len() {
            diameter = diameter.max(tail[i].1.l2_distance(&tail[j].1));
        }
    }
    let mut max_gap = 0.0f64;
    for w in tail.windows(2) {
        max_gap = max_gap.max(w[0].1.l2_distance(&w[1].1));
    }
    let j_values = report.tail_j_values();
    let j_max = j_values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let j_min = j_values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    Ok(LimitSetDiagnostics {
        window: tail.len(),
        tail_diameter_l2: diameter,
        max_consecutive_gap: max_gap,
        j_spread: j_max - j_min,
        singleton_verdict: diameter < singleton_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{two_level, DEFAULT_THETA};
    use crate::quantum::ControlField;
    use crate::scheme::{run, StoppingPolicy};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn params(alpha: f64, delta: f64, eta: f64) -> SchemeParams {
        SchemeParams::new(alpha, delta, eta).unwrap()
    }

    #[test]
    fn bound_m_direct_evaluations() {
        // coefficient-dominated case
        let m = bound_m(&params(1.0, 1.0, 1.0), 1.0, 1.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(m, 1.0, epsilon = 0.0);
        // initial-guess-dominated case
        let m = bound_m(&params(0.5, 0.5, 0.5), 1.0, 1.0, 3.0, 0.0).unwrap();
        assert_abs_diff_eq!(m, 3.0, epsilon = 0.0);
        // delta/(2-delta) = 3 at delta = 1.5
        let m = bound_m(&params(1.0, 1.5, 1.0), 1.0, 1.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(m, 3.0, epsilon = 1e-15);
    }

    #[test]
    fn bound_m_endpoint_is_an_error() {
        assert!(matches!(
            bound_m(&params(1.0, 2.0, 1.0), 1.0, 1.0, 0.0, 0.0),
            Err(QocError::BoundUndefinedAtEndpoint)
        ));
        assert!(matches!(
            bound_m(&params(1.0, 1.0, 2.0), 1.0, 1.0, 0.0, 0.0),
            Err(QocError::BoundUndefinedAtEndpoint)
        ));
    }

    #[test]
    fn bound_m_monotonicity_in_inputs() {
        let mut rng = qoc_testkit::seeded_rng(31);
        for _ in 0..100 {
            let delta = rng.random_range(0.0..1.99);
            let eta = rng.random_range(0.0..1.99);
            let alpha = rng.random_range(0.1..5.0);
            let no = rng.random_range(0.1..3.0);
            let nmu = rng.random_range(0.1..3.0);
            let e0 = rng.random_range(0.0..2.0);
            let et0 = rng.random_range(0.0..2.0);
            let base = bound_m(&params(alpha, delta, eta), no, nmu, e0, et0).unwrap();
            // non-increasing in alpha
            let more_alpha = bound_m(&params(alpha * 1.5, delta, eta), no, nmu, e0, et0).unwrap();
            assert!(more_alpha <= base + 1e-14);
            // non-decreasing in ||O||, ||mu||, ||eps0||
            assert!(bound_m(&params(alpha, delta, eta), no * 1.5, nmu, e0, et0).unwrap() >= base);
            assert!(bound_m(&params(alpha, delta, eta), no, nmu * 1.5, e0, et0).unwrap() >= base);
            assert!(bound_m(&params(alpha, delta, eta), no, nmu, e0 + 1.0, et0).unwrap() >= base);
        }
    }

    #[test]
    fn check_bound_frozen_scheme_passes() {
        let problem = two_level(DEFAULT_THETA, 1.0, 100).unwrap();
        let p = params(1.0, 0.0, 0.0);
        let eps0 = ControlField::zero(*problem.grid());
        let report = run(&problem, &p, &eps0, &StoppingPolicy::max_iters(10), 5).unwrap();
        let m = bound_m(&p, 1.0, 1.0, report.eps0_l2, report.eps_tilde0_l2).unwrap();
        let cert = check_bound(&report, m);
        assert!(cert.checked_l2);
        assert!(cert.worst_ratio <= 1.0);
    }

    #[test]
    fn check_bound_adversarial_m_fails() {
        let problem = two_level(DEFAULT_THETA, 5.0, 500).unwrap();
        let p = params(1.0, 1.0, 1.0);
        let eps0 = ControlField::zero(*problem.grid());
        let report = run(&problem, &p, &eps0, &StoppingPolicy::max_iters(20), 5).unwrap();
        let worst = report
            .records
            .iter()
            .map(|r| r.eps_l2.max(r.eps_tilde_l2))
            .fold(0.0f64, f64::max);
        let cert = check_bound(&report, 0.5 * worst);
        assert!(!cert.checked_l2);
        assert_abs_diff_eq!(cert.worst_ratio, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn alpha_threshold_closed_form() {
        let e = std::f64::consts::E;
        let expected = (1.0 + e) * e * e;
        let got = alpha_threshold(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(got, 27.474593022118313, epsilon = 1e-9);
    }

    #[test]
    fn alpha_threshold_decoupled_limit() {
        assert_eq!(alpha_threshold(1.0, 0.0, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn alpha_threshold_monotone_in_t() {
        let mut prev = 0.0;
        for i in 1..20 {
            let t = 0.25 * i as f64;
            let v = alpha_threshold(1.0, 1.0, t, 1.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn alpha_threshold_strictly_increasing_in_each_argument() {
        let mut rng = qoc_testkit::seeded_rng(53);
        for _ in 0..50 {
            let no = rng.random_range(0.1..2.0);
            let nmu = rng.random_range(0.1..2.0);
            let t = rng.random_range(0.1..2.0);
            let m = rng.random_range(0.1..2.0);
            let base = alpha_threshold(no, nmu, t, m).unwrap();
            assert!(alpha_threshold(no * 1.1, nmu, t, m).unwrap() > base);
            assert!(alpha_threshold(no, nmu * 1.1, t, m).unwrap() > base);
            assert!(alpha_threshold(no, nmu, t * 1.1, m).unwrap() > base);
            assert!(alpha_threshold(no, nmu, t, m * 1.1).unwrap() > base);
        }
    }

    #[test]
    fn tail_gap_shrinks_as_stopping_tolerance_tightens() {
        // empirical e-string granularity decreases across runs with tighter
        // field-delta tolerances
        let problem = two_level(DEFAULT_THETA, 1.0, 400).unwrap();
        let alpha = 1.1 * alpha_threshold(1.0, 1.0, 1.0, 1.0).unwrap();
        let p = params(alpha, 1.0, 0.0);
        let eps0 = ControlField::zero(*problem.grid());
        let mut prev_gap = f64::INFINITY;
        for tol in [1e-4, 1e-6, 1e-8] {
            let policy = StoppingPolicy {
                max_iters: 200,
                j_gain_tol: None,
                field_delta_tol: Some(tol),
            };
            // short window so the tail samples the stopping scale, not the
            // initial transient (this regime converges in a handful of steps)
            let report = run(&problem, &p, &eps0, &policy, 3).unwrap();
            let diag = limit_set_diagnostics(&report, 1e-8).unwrap();
            assert!(
                diag.max_consecutive_gap < prev_gap,
                "gap did not shrink at tol {tol:e}: {} vs {prev_gap}",
                diag.max_consecutive_gap
            );
            prev_gap = diag.max_consecutive_gap;
        }
    }

    #[test]
    fn alpha_threshold_overflow_reported() {
        assert!(matches!(
            alpha_threshold(1.0, 1.0, 100.0, 10.0),
            Err(QocError::ThresholdOverflow)
        ));
    }

    #[test]
    fn critical_residual_degenerate_zero_field() {
        // psi0 = (1, 0) stays stationary under eps = 0, so chi(T) = O psi(T)
        // vanishes and the zero field is a critical point of this instance.
        use crate::quantum::{HermitianOperator, ObservableOperator, StateVector, TimeGrid};
        use nalgebra::DVector;
        use num_complex::Complex64 as C64;
        let h = HermitianOperator::from_real_rows(2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        let mu = HermitianOperator::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let o = ObservableOperator::from_real_rows(2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        let psi0 = StateVector::normalized(DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ]))
        .unwrap();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let problem = ControlProblem::new(h, mu, o, psi0, grid, None).unwrap();
        let field = ControlField::zero(grid);
        let r = critical_residual(&problem, &field, 1.0).unwrap();
        assert!(r < 1e-12, "residual {r}");
    }

    #[test]
    fn critical_residual_generic_field_nonzero() {
        let problem = two_level(DEFAULT_THETA, 2.0, 400).unwrap();
        let field = ControlField::constant(*problem.grid(), 0.3).unwrap();
        let r = critical_residual(&problem, &field, 1.0).unwrap();
        assert!(r > 1e-3, "generic field should not be critical: {r}");
    }

    #[test]
    fn gronwall_identical_fields_pass_trivially() {
        let problem = two_level(DEFAULT_THETA, 1.0, 200).unwrap();
        let f = ControlField::constant(*problem.grid(), 0.2).unwrap();
        let check = gronwall_check(&problem, &f, &f, 1.0).unwrap();
        assert_eq!(check.observed_psi, 0.0);
        assert_eq!(check.observed_chi, 0.0);
        assert!(check.passed());
    }

    #[test]
    fn gronwall_constant_offset_within_bound() {
        let problem = two_level(DEFAULT_THETA, 1.0, 500).unwrap();
        let a = ControlField::zero(*problem.grid());
        let b = ControlField::constant(*problem.grid(), 0.1).unwrap();
        let check = gronwall_check(&problem, &a, &b, 1.0).unwrap();
        assert!(check.passed());
        assert!(check.observed_psi < check.bound_psi);
    }

    #[test]
    fn gronwall_precondition_rejects_oversized_fields() {
        let problem = two_level(DEFAULT_THETA, 1.0, 100).unwrap();
        let a = ControlField::zero(*problem.grid());
        let b = ControlField::constant(*problem.grid(), 2.0).unwrap();
        assert!(matches!(
            gronwall_check(&problem, &a, &b, 1.0),
            Err(QocError::Precondition(_))
        ));
    }

    #[test]
    fn gronwall_randomized_pairs_all_pass() {
        let problem = two_level(DEFAULT_THETA, 1.0, 300).unwrap();
        let m = 1.0;
        let mut rng = qoc_testkit::seeded_rng(47);
        for _ in 0..50 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                let vals: Vec<f64> = (0..300).map(|_| rng.random_range(-m..m)).collect();
                ControlField::new(*problem.grid(), vals).unwrap()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let check = gronwall_check(&problem, &a, &b, m).unwrap();
            assert!(
                check.passed(),
                "violation: psi {} vs {}, chi {} vs {}",
                check.observed_psi,
                check.bound_psi,
                check.observed_chi,
                check.bound_chi
            );
        }
    }

    #[test]
    fn limit_set_frozen_scheme_has_zero_diameter() {
        let problem = two_level(DEFAULT_THETA, 1.0, 100).unwrap();
        let p = params(1.0, 0.0, 0.0);
        let eps0 = ControlField::constant(*problem.grid(), 0.4).unwrap();
        let report = run(&problem, &p, &eps0, &StoppingPolicy::max_iters(10), 6).unwrap();
        let diag = limit_set_diagnostics(&report, 1e-8).unwrap();
        assert_eq!(diag.tail_diameter_l2, 0.0);
        assert_eq!(diag.max_consecutive_gap, 0.0);
        assert!(diag.singleton_verdict);
        assert!(diag.max_consecutive_gap <= diag.tail_diameter_l2 + 1e-15);
    }

    #[test]
    fn limit_set_window_too_small() {
        let problem = two_level(DEFAULT_THETA, 1.0, 50).unwrap();
        let p = params(1.0, 1.0, 1.0);
        let eps0 = ControlField::zero(*problem.grid());
        let report = run(&problem, &p, &eps0, &StoppingPolicy::max_iters(0), 5).unwrap();
        assert!(matches!(
            limit_set_diagnostics(&report, 1e-8),
            Err(QocError::WindowTooSmall { .. })
        ));
    }
}
