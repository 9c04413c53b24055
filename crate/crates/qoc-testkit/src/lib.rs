//! Independent oracles and deterministic random generators used by the test
//! suites. Everything here deliberately avoids the solver's own propagation
//! path: evolution is done through dense eigendecomposition, inner products
//! through explicit complex arithmetic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random Hermitian matrix with entries of order one.
pub fn random_hermitian(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<C64> {
    let mut m = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
    for i in 0..dim {
        m[(i, i)] = C64::new(rng.random_range(-1.0..1.0), 0.0);
        for j in (i + 1)..dim {
            let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// Random unitary from the eigenvectors of a random Hermitian matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<C64> {
    random_hermitian(rng, dim).symmetric_eigen().eigenvectors
}

/// Random complex vector, normalized to unit length.
pub fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> DVector<C64> {
    let v = DVector::from_iterator(
        dim,
        (0..dim).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))),
    );
    let n = v.norm();
    v / C64::new(n, 0.0)
}

/// Im(<chi|mu|psi>) written out in explicit complex arithmetic.
pub fn brute_force_coupling(chi: &DVector<C64>, mu: &DMatrix<C64>, psi: &DVector<C64>) -> f64 {
    let dim = psi.len();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..dim {
        for j in 0..dim {
            acc += chi[i].conj() * mu[(i, j)] * psi[j];
        }
    }
    acc.im
}

/// exp(-i t A) psi for Hermitian A, via dense eigendecomposition.
///
/// This is the constant-field reference propagator the Cayley stepping is
/// checked against.
pub fn expm_evolve(a: &DMatrix<C64>, t: f64, psi: &DVector<C64>) -> DVector<C64> {
    let eig = a.clone().symmetric_eigen();
    let coeffs = eig.eigenvectors.adjoint() * psi;
    let phased = DVector::from_iterator(
        psi.len(),
        coeffs
            .iter()
            .zip(eig.eigenvalues.iter())
            .map(|(c, &l)| c * C64::new(0.0, -l * t).exp()),
    );
    &eig.eigenvectors * phased
}

/// Terminal state under a constant field: exp(-i T (H - eps mu)) psi0.
pub fn constant_field_terminal(
    h: &DMatrix<C64>,
    mu: &DMatrix<C64>,
    eps: f64,
    t_final: f64,
    psi0: &DVector<C64>,
) -> DVector<C64> {
    let a = h - mu * C64::new(eps, 0.0);
    expm_evolve(&a, t_final, psi0)
}
