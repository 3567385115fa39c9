//! Polarization tomography of N-photon two-mode states.
//!
//! A fixed six-detector network (1:3 split into H/V, diagonal, and circular
//! analysis stations with photon-number resolving detectors) measures an
//! N-photon polarization qudit of dimension d = N+1. The crate simulates the
//! coincidence statistics of that network and reconstructs density matrices
//! from (simulated or measured) count records by chi-square-penalized
//! maximum likelihood over a Cholesky-parameterized state, with linear
//! inversion as a diagnostic path and Poissonian bootstrap for fidelity
//! error bars.
//!
//! Start from the runnable examples: `enumerate_events`, `rank_audit`,
//! `povm_completeness`, `simulate_counts`, `reconstruct_state`,
//! `bootstrap_fidelity`, `replicate_experiment`.

pub mod detection;
pub mod error;
pub mod optics;
pub mod pipeline;
pub mod qudit;
pub mod reconstruction;
pub mod simplex;
mod util;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil {
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use rand::Rng;

    use crate::qudit::PolarizationState;

    /// Random density matrix via A A^H / tr, full rank almost surely.
    pub(crate) fn random_state(dim: usize, rng: &mut impl Rng) -> PolarizationState {
        let a = DMatrix::from_fn(dim, dim, |_, _| {
            Complex64::new(
                rng.sample::<f64, _>(rand_distr::StandardNormal),
                rng.sample::<f64, _>(rand_distr::StandardNormal),
            )
        });
        let mut m = &a * a.adjoint();
        let tr = m.trace().re;
        m /= Complex64::new(tr, 0.0);
        // round off the tiny anti-Hermitian residue of the product
        let sym = (&m + m.adjoint()) / Complex64::new(2.0, 0.0);
        PolarizationState::new(sym).expect("constructed state is valid")
    }
}
