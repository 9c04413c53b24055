//! Domain types for bilinear control problems: operators, states, time grids,
//! sampled control fields and scheme parameters, together with the dense
//! linear-algebra primitives shared by the propagator and the diagnostics.
//!
//! All operators are dense complex matrices in atomic units (hbar = 1).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{QocError, Result};

/// Absolute tolerance on the Hermiticity defect accepted at construction.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted for a positive semi-definite observable.
pub const PSD_TOL: f64 = -1e-10;
/// Tolerance on ||psi|| - 1 for normalized state vectors.
pub const UNIT_NORM_TOL: f64 = 1e-10;

fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > defect {
                defect = d;
            }
        }
    }
    defect
}

/// A validated Hermitian operator (used for the internal Hamiltonian and the
/// dipole coupling).
///
/// The stored matrix is the Hermitian part (A + A^dagger)/2 of the input, so
/// entries satisfy `a_ij == conj(a_ji)` exactly after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    entries: DMatrix<C64>,
}

impl HermitianOperator {
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(QocError::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        if entries.nrows() < 2 {
            return Err(QocError::DimensionTooSmall {
                dim: entries.nrows(),
            });
        }
        let defect = hermiticity_defect(&entries);
        if defect > HERMITICITY_TOL {
            return Err(QocError::NotHermitian {
                defect,
                tol: HERMITICITY_TOL,
            });
        }
        let sym = (&entries + entries.adjoint()) * C64::new(0.5, 0.0);
        Ok(Self { entries: sym })
    }

    /// Convenience constructor from a real matrix in row-major order.
    pub fn from_real_rows(dim: usize, rows: &[f64]) -> Result<Self> {
        let m = DMatrix::from_row_slice(dim, dim, rows).map(|x| C64::new(x, 0.0));
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.entries
    }

    /// Spectral norm: the largest |eigenvalue|, from a dense Hermitian
    /// eigensolve.
    pub fn spectral_norm(&self) -> f64 {
        spectral_norm_of(&self.entries)
    }
}

fn spectral_norm_of(m: &DMatrix<C64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &l| acc.max(l.abs()))
}

/// A validated observable: Hermitian and positive semi-definite.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableOperator {
    op: HermitianOperator,
}

impl ObservableOperator {
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        let op = HermitianOperator::new(entries)?;
        let min_eigenvalue = op
            .matrix()
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |acc, &l| acc.min(l));
        if min_eigenvalue < PSD_TOL {
            return Err(QocError::NotPositiveSemiDefinite { min_eigenvalue });
        }
        Ok(Self { op })
    }

    pub fn from_real_rows(dim: usize, rows: &[f64]) -> Result<Self> {
        let m = DMatrix::from_row_slice(dim, dim, rows).map(|x| C64::new(x, 0.0));
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        self.op.matrix()
    }

    pub fn spectral_norm(&self) -> f64 {
        self.op.spectral_norm()
    }

    /// Re(<psi|O|psi>) for a state vector.
    ///
    /// The imaginary part is guaranteed tiny by Hermiticity; it is asserted
    /// below 1e-12 and discarded.
    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        if psi.dim() != self.dim() {
            return Err(QocError::DimensionMismatch {
                what: "observable expectation",
                expected: self.dim(),
                got: psi.dim(),
            });
        }
        let v = self.matrix() * psi.amplitudes();
        let z = psi.amplitudes().dotc(&v);
        assert!(
            z.im.abs() <= 1e-12,
            "expectation of a Hermitian operator has Im = {:e}",
            z.im
        );
        Ok(z.re)
    }
}

/// A complex state vector. `normalized` marks vectors representing a physical
/// state psi (unit norm is then validated); adjoint states chi are stored
/// unnormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<C64>,
    normalized: bool,
}

impl StateVector {
    /// A normalized state; errors unless ||psi|| = 1 within [`UNIT_NORM_TOL`].
    pub fn normalized(amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(QocError::NotNormalized { norm });
        }
        Ok(Self {
            amplitudes,
            normalized: true,
        })
    }

    /// An unnormalized vector (adjoint states, zero vectors, intermediates).
    pub fn unnormalized(amplitudes: DVector<C64>) -> Self {
        Self {
            amplitudes,
            normalized: false,
        }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self::unnormalized(DVector::from_iterator(
            values.len(),
            values.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }
}

/// Im(<chi|mu|psi>) with the convention <f|F|g> = integral conj(f) F g.
pub fn coupling_term(chi: &StateVector, mu: &HermitianOperator, psi: &StateVector) -> Result<f64> {
    if chi.dim() != mu.dim() || psi.dim() != mu.dim() {
        return Err(QocError::DimensionMismatch {
            what: "coupling term",
            expected: mu.dim(),
            got: if chi.dim() != mu.dim() {
                chi.dim()
            } else {
                psi.dim()
            },
        });
    }
    let v = mu.matrix() * psi.amplitudes();
    Ok(chi.amplitudes().dotc(&v).im)
}

/// Uniform time grid on [0, T] with `n_steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(QocError::InvalidParameter {
                name: "T",
                value: t_final,
                constraint: "T > 0",
            });
        }
        if n_steps == 0 {
            return Err(QocError::InvalidParameter {
                name: "n_steps",
                value: 0.0,
                constraint: "n_steps >= 1",
            });
        }
        Ok(Self {
            t_final,
            n_steps,
            dt: t_final / n_steps as f64,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Node t_j; the last node is exactly T.
    pub fn node(&self, j: usize) -> f64 {
        debug_assert!(j <= self.n_steps);
        if j == self.n_steps {
            self.t_final
        } else {
            j as f64 * self.dt
        }
    }
}

/// A real control sampled on a time grid; `values[j]` holds on [t_j, t_{j+1})
/// (piecewise-constant, left-closed intervals).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl ControlField {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps() {
            return Err(QocError::FieldLengthMismatch {
                expected: grid.n_steps(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(QocError::NonFiniteField { index });
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: TimeGrid) -> Self {
        Self {
            values: vec![0.0; grid.n_steps()],
            grid,
        }
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.n_steps()])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// L2 norm under the piecewise-constant quadrature: sqrt(sum v_j^2 dt).
    pub fn norm_l2(&self) -> f64 {
        let dt = self.grid.dt();
        (self.values.iter().map(|v| v * v).sum::<f64>() * dt).sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        let dt = self.grid.dt();
        self.values.iter().map(|v| v.abs()).sum::<f64>() * dt
    }

    pub fn norm_sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// ||self - other||_2 on a shared grid.
    pub fn l2_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "fields on different grids");
        let dt = self.grid.dt();
        (self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            * dt)
            .sqrt()
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "fields on different grids");
        let dt = self.grid.dt();
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * dt
    }
}

/// One optimization instance: Hamiltonian, dipole, target observable, initial
/// state and time grid.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    h: HermitianOperator,
    mu: HermitianOperator,
    o: ObservableOperator,
    psi0: StateVector,
    grid: TimeGrid,
    metadata: Option<String>,
}

impl ControlProblem {
    pub fn new(
        h: HermitianOperator,
        mu: HermitianOperator,
        o: ObservableOperator,
        psi0: StateVector,
        grid: TimeGrid,
        metadata: Option<String>,
    ) -> Result<Self> {
        let dim = psi0.dim();
        for (what, d) in [
            ("hamiltonian", h.dim()),
            ("dipole", mu.dim()),
            ("observable", o.dim()),
        ] {
            if d != dim {
                return Err(QocError::DimensionMismatch {
                    what,
                    expected: dim,
                    got: d,
                });
            }
        }
        if !psi0.is_normalized() {
            let norm = psi0.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(QocError::NotNormalized { norm });
            }
        }
        Ok(Self {
            h,
            mu,
            o,
            psi0,
            grid,
            metadata,
        })
    }

    pub fn dim(&self) -> usize {
        self.psi0.dim()
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.h
    }

    pub fn dipole(&self) -> &HermitianOperator {
        &self.mu
    }

    pub fn observable(&self) -> &ObservableOperator {
        &self.o
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.psi0
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn metadata(&self) -> Option<&str> {
        self.metadata.as_deref()
    }
}

/// Scheme parameters (alpha, delta, eta) with the admissible ranges alpha > 0
/// and delta, eta in [0, 2].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    alpha: f64,
    delta: f64,
    eta: f64,
}

impl SchemeParams {
    pub fn new(alpha: f64, delta: f64, eta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(QocError::InvalidParameter {
                name: "alpha",
                value: alpha,
                constraint: "alpha > 0",
            });
        }
        if !(0.0..=2.0).contains(&delta) {
            return Err(QocError::InvalidParameter {
                name: "delta",
                value: delta,
                constraint: "the admissible range [0, 2]",
            });
        }
        if !(0.0..=2.0).contains(&eta) {
            return Err(QocError::InvalidParameter {
                name: "eta",
                value: eta,
                constraint: "the admissible range [0, 2]",
            });
        }
        Ok(Self { alpha, delta, eta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Contraction diagnostic lambda = (1 - delta)(1 - eta).
    pub fn lambda(&self) -> f64 {
        (1.0 - self.delta) * (1.0 - self.eta)
    }
}
