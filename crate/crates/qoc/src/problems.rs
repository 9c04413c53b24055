//! Built-in, validated control problems at several scales: an analytic
//! two-level system, a nearest-neighbor ladder, and a 1D particle in a box
//! discretized by finite differences.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{QocError, Result};
use crate::quantum::{
    ControlProblem, HermitianOperator, ObservableOperator, StateVector, TimeGrid,
};

/// Default mixing angle for [`two_level`]: far enough from both poles that
/// the zero field is not a critical point of the instance.
pub const DEFAULT_THETA: f64 = std::f64::consts::FRAC_PI_8;

/// Declarative description of a built-in problem; the unit serialized in run
/// configurations.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    TwoLevel {
        theta: f64,
        t_final: f64,
        n_steps: usize,
    },
    Ladder {
        levels: usize,
        t_final: f64,
        n_steps: usize,
    },
    Box1d {
        length: f64,
        n_x: usize,
        t_final: f64,
        n_steps: usize,
    },
    Custom {
        h: DMatrix<C64>,
        mu: DMatrix<C64>,
        o: DMatrix<C64>,
        psi0: DVector<C64>,
        t_final: f64,
        n_steps: usize,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<ControlProblem> {
        match self {
            Self::TwoLevel {
                theta,
                t_final,
                n_steps,
            } => two_level(*theta, *t_final, *n_steps),
            Self::Ladder {
                levels,
                t_final,
                n_steps,
            } => ladder(*levels, *t_final, *n_steps),
            Self::Box1d {
                length,
                n_x,
                t_final,
                n_steps,
            } => box1d(*length, *n_x, *t_final, *n_steps),
            Self::Custom {
                h,
                mu,
                o,
                psi0,
                t_final,
                n_steps,
            } => custom(
                h.clone(),
                mu.clone(),
                o.clone(),
                psi0.clone(),
                *t_final,
                *n_steps,
            ),
        }
    }
}

/// Two-level system: H = diag(0, 1), mu = sigma_x, O = |1><1|,
/// psi0 = (cos theta, sin theta) with theta in (0, pi/2].
///
/// Theta strictly inside the range keeps psi0 away from the ground state, so
/// the zero field is not a (degenerate) critical point of the instance.
pub fn two_level(theta: f64, t_final: f64, n_steps: usize) -> Result<ControlProblem> {
    if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_2) {
        return Err(QocError::InvalidParameter {
            name: "theta",
            value: theta,
            constraint: "theta in (0, pi/2]",
        });
    }
    let h = HermitianOperator::from_real_rows(2, &[0.0, 0.0, 0.0, 1.0])?;
    let mu = HermitianOperator::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0])?;
    let o = ObservableOperator::from_real_rows(2, &[0.0, 0.0, 0.0, 1.0])?;
    let psi0 = StateVector::normalized(DVector::from_vec(vec![
        C64::new(theta.cos(), 0.0),
        C64::new(theta.sin(), 0.0),
    ]))?;
    let grid = TimeGrid::new(t_final, n_steps)?;
    ControlProblem::new(
        h,
        mu,
        o,
        psi0,
        grid,
        Some(format!("two_level theta={theta}")),
    )
}

/// Ladder of n levels: H = diag(0..n-1), nearest-neighbor dipole coupling,
/// O projects on the top level, psi0 is the bottom level. n in [3, 64].
pub fn ladder(levels: usize, t_final: f64, n_steps: usize) -> Result<ControlProblem> {
    if !(3..=64).contains(&levels) {
        return Err(QocError::InvalidParameter {
            name: "levels",
            value: levels as f64,
            constraint: "3 <= levels <= 64",
        });
    }
    let n = levels;
    let mut h = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    let mut mu = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    let mut o = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for i in 0..n {
        h[(i, i)] = C64::new(i as f64, 0.0);
    }
    for i in 0..n - 1 {
        mu[(i, i + 1)] = C64::new(1.0, 0.0);
        mu[(i + 1, i)] = C64::new(1.0, 0.0);
    }
    o[(n - 1, n - 1)] = C64::new(1.0, 0.0);
    let mut psi0 = DVector::from_element(n, C64::new(0.0, 0.0));
    psi0[0] = C64::new(1.0, 0.0);
    let grid = TimeGrid::new(t_final, n_steps)?;
    ControlProblem::new(
        HermitianOperator::new(h)?,
        HermitianOperator::new(mu)?,
        ObservableOperator::new(o)?,
        StateVector::normalized(psi0)?,
        grid,
        Some(format!("ladder levels={levels}")),
    )
}

/// Particle in a box on [0, L] with Dirichlet boundaries, discretized on n_x
/// interior points: H = -(1/2) * three-point Laplacian, mu = diag(x - L/2)
/// (centered dipole in the length gauge), O projects on the first excited
/// eigenvector, psi0 is the ground eigenvector. n_x in [3, 512].
pub fn box1d(length: f64, n_x: usize, t_final: f64, n_steps: usize) -> Result<ControlProblem> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(QocError::InvalidParameter {
            name: "L",
            value: length,
            constraint: "L > 0",
        });
    }
    if !(3..=512).contains(&n_x) {
        return Err(QocError::InvalidParameter {
            name: "n_x",
            value: n_x as f64,
            constraint: "3 <= n_x <= 512",
        });
    }
    let hstep = length / (n_x + 1) as f64;
    let inv_h2 = 1.0 / (hstep * hstep);
    let mut ham = DMatrix::from_element(n_x, n_x, C64::new(0.0, 0.0));
    for i in 0..n_x {
        ham[(i, i)] = C64::new(inv_h2, 0.0);
        if i + 1 < n_x {
            ham[(i, i + 1)] = C64::new(-0.5 * inv_h2, 0.0);
            ham[(i + 1, i)] = C64::new(-0.5 * inv_h2, 0.0);
        }
    }
    let mut mu = DMatrix::from_element(n_x, n_x, C64::new(0.0, 0.0));
    for i in 0..n_x {
        let x = (i + 1) as f64 * hstep;
        mu[(i, i)] = C64::new(x - 0.5 * length, 0.0);
    }
    let (ground, excited) = lowest_two_eigenvectors(&ham);
    let mut o = DMatrix::from_element(n_x, n_x, C64::new(0.0, 0.0));
    for i in 0..n_x {
        for j in 0..n_x {
            o[(i, j)] = excited[i] * excited[j].conj();
        }
    }
    let norm = ground.norm();
    let psi0 = StateVector::normalized(ground / C64::new(norm, 0.0))?;
    let grid = TimeGrid::new(t_final, n_steps)?;
    ControlProblem::new(
        HermitianOperator::new(ham)?,
        HermitianOperator::new(mu)?,
        ObservableOperator::new(o)?,
        psi0,
        grid,
        Some(format!("box1d L={length} n_x={n_x}")),
    )
}

/// Wraps user-supplied matrices, running the full construction validators.
pub fn custom(
    h: DMatrix<C64>,
    mu: DMatrix<C64>,
    o: DMatrix<C64>,
    psi0: DVector<C64>,
    t_final: f64,
    n_steps: usize,
) -> Result<ControlProblem> {
    let grid = TimeGrid::new(t_final, n_steps)?;
    ControlProblem::new(
        HermitianOperator::new(h)?,
        HermitianOperator::new(mu)?,
        ObservableOperator::new(o)?,
        StateVector::normalized(psi0)?,
        grid,
        Some("custom".to_string()),
    )
}

/// Two lowest eigenvectors of a Hermitian matrix, with a deterministic sign
/// convention (largest-magnitude component positive real).
fn lowest_two_eigenvectors(m: &DMatrix<C64>) -> (DVector<C64>, DVector<C64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
    });
    let fix_sign = |v: DVector<C64>| -> DVector<C64> {
        let mut idx = 0;
        let mut best = 0.0;
        for (i, z) in v.iter().enumerate() {
            if z.norm() > best {
                best = z.norm();
                idx = i;
            }
        }
        let phase = v[idx] / C64::new(v[idx].norm(), 0.0);
        v / phase
    };
    let ground = fix_sign(eig.eigenvectors.column(order[0]).into_owned());
    let excited = fix_sign(eig.eigenvectors.column(order[1]).into_owned());
    (ground, excited)
}

/// Lowest eigenvalues of the problem Hamiltonian, ascending. Exposed for
/// spectral-convergence tests of the box discretization.
pub fn hamiltonian_eigenvalues(problem: &ControlProblem) -> Vec<f64> {
    let eig = problem.hamiltonian().matrix().clone().symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    vals
}
