//! Density-matrix estimation from a counts record.
//!
//! The primary path minimizes the chi-square penalty
//! `sum_mu (nbar_mu - n_mu)^2 / nbar_mu` over a Cholesky-parameterized state
//! rho = T^H T / tr(T^H T) and a free intensity scalar, multi-started from
//! random points plus a linear-inversion warm start. Linear inversion of the
//! B matrix doubles as a fast diagnostic path, and a Poissonian parametric
//! bootstrap on the measured counts supplies fidelity error bars.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::detection::{poisson_resample, CountsRecord, EfficiencyModel};
use crate::error::{Error, Result};
use crate::optics::{b_matrix, event_probabilities, BMatrix, PovmElement};
use crate::qudit::{
    bloch_reconstruct, fidelity, BlochVector, GeneratorBasis, PolarizationState, StateVector,
};
use crate::simplex::{minimize, SimplexOptions};
use crate::util::derive_seed;

/// Denominator floor in the chi-square penalty; keeps near-empty events from
/// blowing up the sum.
pub const CHI2_COUNT_FLOOR: f64 = 0.5;

/// Eigenvalue threshold below which a linear-inversion estimate is flagged
/// as unphysical.
pub const PHYSICALITY_TOL: f64 = -1e-6;

/// d^2 real parameters encoding a lower-triangular d x d matrix T: the d
/// diagonal entries (non-negative) followed by (re, im) pairs for the
/// strictly-lower entries in row-major order. rho(T) = T^H T / tr(T^H T) is
/// Hermitian, positive semidefinite and unit-trace for any parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyParameters {
    dim: usize,
    values: Vec<f64>,
}

impl CholeskyParameters {
    /// Wraps raw parameter values; diagonal entries are canonicalized to
    /// their absolute value (the state only depends on |T_jj|).
    pub fn new(dim: usize, mut values: Vec<f64>) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidDimension { got: dim, min: 1 });
        }
        if values.len() != dim * dim {
            return Err(Error::CoefficientCount {
                expected: dim * dim,
                got: values.len(),
            });
        }
        for v in values.iter_mut().take(dim) {
            *v = v.abs();
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The lower-triangular factor T.
    pub fn to_lower_triangular(&self) -> DMatrix<Complex64> {
        let d = self.dim;
        let mut t = DMatrix::zeros(d, d);
        for j in 0..d {
            t[(j, j)] = Complex64::new(self.values[j].abs(), 0.0);
        }
        let mut idx = d;
        for row in 1..d {
            for col in 0..row {
                t[(row, col)] = Complex64::new(self.values[idx], self.values[idx + 1]);
                idx += 2;
            }
        }
        t
    }

    /// rho = T^H T / tr(T^H T). Fails only when every parameter is zero.
    pub fn density(&self) -> Result<PolarizationState> {
        let t = self.to_lower_triangular();
        let mut m = t.adjoint() * &t;
        let trace = m.trace().re;
        if !(trace > 0.0) || !trace.is_finite() {
            return Err(Error::DegenerateParameters);
        }
        m /= Complex64::new(trace, 0.0);
        // T^H T is Hermitian up to rounding; symmetrize the residue away
        let sym = (&m + m.adjoint()) / Complex64::new(2.0, 0.0);
        PolarizationState::new(sym)
    }

    /// Factors an existing state: finds T with rho(T) = rho. A small ridge is
    /// added only if the state is numerically rank deficient.
    pub fn from_state(rho: &PolarizationState) -> Result<Self> {
        let d = rho.dim();
        let exchange = DMatrix::from_fn(d, d, |i, j| {
            if i + j == d - 1 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            }
        });
        let reversed = &exchange * rho.matrix() * &exchange;
        let mut ridge = 0.0;
        for _ in 0..6 {
            let mut candidate = reversed.clone();
            for i in 0..d {
                candidate[(i, i)] += Complex64::new(ridge, 0.0);
            }
            if let Some(chol) = candidate.cholesky() {
                let l = chol.l();
                // rho = U U^H with U = J L J upper triangular, so T = U^H
                let u = &exchange * l * &exchange;
                let t = u.adjoint();
                let mut values = Vec::with_capacity(d * d);
                for j in 0..d {
                    values.push(t[(j, j)].re);
                }
                for row in 1..d {
                    for col in 0..row {
                        values.push(t[(row, col)].re);
                        values.push(t[(row, col)].im);
                    }
                }
                return Self::new(d, values);
            }
            ridge = if ridge == 0.0 { 1e-14 } else { ridge * 100.0 };
        }
        Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: rho.min_eigenvalue(),
        })
    }

    /// Standard-normal random parameters.
    pub fn random(dim: usize, rng: &mut impl rand::Rng) -> Self {
        let values = (0..dim * dim)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        Self::new(dim, values).expect("length is dim^2 by construction")
    }
}

/// Bootstrap fidelity statistics against a pure target.
#[derive(Debug, Clone, Serialize)]
pub struct FidelityStats {
    pub mean: f64,
    pub std: f64,
    /// Repetitions that produced an estimate.
    pub completed: usize,
    /// Repetitions excluded because reconstruction failed.
    pub failed: usize,
}

/// Output of [`maxlik_reconstruct`].
#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionResult {
    #[serde(rename = "rho")]
    pub rho_hat: PolarizationState,
    pub chi2: f64,
    #[serde(rename = "intensity")]
    pub intensity_hat: f64,
    pub iterations: u64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<FidelityReport>,
}

/// Fidelity block attached to a result when a target state is supplied.
#[derive(Debug, Clone, Serialize)]
pub struct FidelityReport {
    pub target: StateVector,
    pub mean: f64,
    pub std: f64,
    #[serde(rename = "reps")]
    pub completed: usize,
    pub failed: usize,
}

/// Optimizer settings for the chi-square minimization.
#[derive(Debug, Clone)]
pub struct MaxlikOptions {
    /// Random initializations tried in addition to the linear-inversion
    /// warm start.
    pub random_starts: usize,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub step_tolerance: f64,
    pub seed: u64,
}

impl Default for MaxlikOptions {
    fn default() -> Self {
        Self {
            random_starts: 5,
            max_iterations: 20_000,
            relative_tolerance: 1e-10,
            step_tolerance: 1e-12,
            seed: 0,
        }
    }
}

fn expected_for(
    rho: &PolarizationState,
    intensity: f64,
    elements: &[PovmElement],
    efficiency: &EfficiencyModel,
) -> Result<Vec<f64>> {
    let probabilities = event_probabilities(rho, elements)?;
    elements
        .iter()
        .zip(probabilities)
        .map(|(e, p)| Ok(intensity * efficiency.event_factor(&e.event)? * p))
        .collect()
}

fn penalty(expected: &[f64], elements: &[PovmElement], record: &CountsRecord) -> f64 {
    let mut chi2 = 0.0;
    for (nbar, element) in expected.iter().zip(elements) {
        let n = record.count(&element.event);
        let denom = nbar.max(CHI2_COUNT_FLOOR);
        let r = nbar - n;
        chi2 += r * r / denom;
    }
    chi2
}

/// The chi-square penalty of Eq.-(11) form, summed over all events of the
/// manifold (zero-count events included). Expected counts below
/// [`CHI2_COUNT_FLOOR`] use the floor in the denominator.
pub fn chi2(
    params: &CholeskyParameters,
    intensity: f64,
    record: &CountsRecord,
    elements: &[PovmElement],
    efficiency: &EfficiencyModel,
) -> Result<f64> {
    if !(intensity > 0.0) || !intensity.is_finite() {
        return Err(Error::InvalidEnsembleSize);
    }
    let rho = params.density()?;
    let expected = expected_for(&rho, intensity, elements, efficiency)?;
    Ok(penalty(&expected, elements, record))
}

/// Linear inversion output: generator coefficients, the reconstructed matrix
/// (Hermitian and unit trace, not necessarily positive), and whether it
/// clears the physicality threshold.
#[derive(Debug, Clone)]
pub struct LinearInversion {
    pub bloch: BlochVector,
    pub state: PolarizationState,
    pub physical: bool,
}

/// Inverts the linear system B lambda = P by least squares on the probability
/// estimates P_mu = n_mu / (I eta(mu) K_mu).
pub fn linear_inversion(
    record: &CountsRecord,
    b: &BMatrix,
    elements: &[PovmElement],
    efficiency: &EfficiencyModel,
) -> Result<LinearInversion> {
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let d = b.n_photons() as usize + 1;
    let (rank, sv, _) = b.numerical_rank();
    if rank < d * d {
        return Err(Error::RankDeficient {
            rank,
            required: d * d,
        });
    }
    if b.rows() != elements.len() {
        return Err(Error::DimensionMismatch {
            left: b.rows(),
            right: elements.len(),
        });
    }

    let intensity = record.ensemble_size() as f64;
    let mut rows = Vec::with_capacity(elements.len());
    let mut rhs = Vec::with_capacity(elements.len());
    for (i, element) in elements.iter().enumerate() {
        let scale = intensity * efficiency.event_factor(&element.event)? * element.weight;
        if scale <= 0.0 {
            continue; // dead outcome of a degenerate network carries no information
        }
        rows.push(i);
        rhs.push(record.count(&element.event) / scale);
    }
    let mut system = DMatrix::zeros(rows.len(), d * d);
    for (r, &i) in rows.iter().enumerate() {
        for c in 0..d * d {
            system[(r, c)] = b.matrix()[(i, c)];
        }
    }
    let svd = system.svd(true, true);
    let cutoff = sv[0] * b.rows() as f64 * 1e-12;
    let solution = svd
        .solve(&DVector::from_vec(rhs), cutoff)
        .map_err(|_| Error::RankDeficient {
            rank,
            required: d * d,
        })?;

    let bloch = BlochVector::new(solution.as_slice()[1..].to_vec());
    let basis = GeneratorBasis::new(d)?;
    let state = bloch_reconstruct(&bloch, &basis)?;
    let physical = state.min_eigenvalue() >= PHYSICALITY_TOL;
    Ok(LinearInversion {
        bloch,
        state,
        physical,
    })
}

/// Clamps negative eigenvalues to zero and renormalizes the trace.
fn project_to_physical(state: &PolarizationState) -> PolarizationState {
    let eigen = state.matrix().clone().symmetric_eigen();
    let d = state.dim();
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    let mut trace = 0.0;
    let clamped: Vec<f64> = eigen.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    for &l in &clamped {
        trace += l;
    }
    if trace <= 0.0 {
        return PolarizationState::maximally_mixed(d);
    }
    for (k, &l) in clamped.iter().enumerate() {
        let v = eigen.eigenvectors.column(k);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += v[i] * v[j].conj() * Complex64::new(l / trace, 0.0);
            }
        }
    }
    let sym = (&m + m.adjoint()) / Complex64::new(2.0, 0.0);
    PolarizationState::new(sym).unwrap_or_else(|_| PolarizationState::maximally_mixed(d))
}

fn intensity_guess(
    rho: &PolarizationState,
    elements: &[PovmElement],
    efficiency: &EfficiencyModel,
    total_counts: f64,
) -> Result<f64> {
    let expected_unit = expected_for(rho, 1.0, elements, efficiency)?;
    let detected: f64 = expected_unit.iter().sum();
    if detected > 1e-12 {
        Ok((total_counts / detected).max(1.0))
    } else {
        Ok(total_counts.max(1.0))
    }
}

/// Chi-square maximum-likelihood estimate of the state behind `record`.
///
/// Minimizes [`chi2`] over the Cholesky parameters and a log-parameterized
/// intensity, starting from the linear-inversion point plus
/// `options.random_starts` random points; the best final penalty wins.
/// Non-convergence is reported through the `converged` flag with the
/// best-so-far result, not as an error.
pub fn maxlik_reconstruct(
    record: &CountsRecord,
    elements: &[PovmElement],
    efficiency: &EfficiencyModel,
    options: &MaxlikOptions,
) -> Result<ReconstructionResult> {
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let Some(first) = elements.first() else {
        return Err(Error::EmptyRecord);
    };
    if first.event.total() != record.n_photons() {
        return Err(Error::DimensionMismatch {
            left: first.event.total() as usize,
            right: record.n_photons() as usize,
        });
    }
    let d = record.n_photons() as usize + 1;
    if record.nonzero_events() < d * d {
        log::warn!(
            "record has {} nonzero events but the state has {} parameters; \
             the fit may be underdetermined",
            record.nonzero_events(),
            d * d
        );
    }
    let total_counts = record.total_counts();

    // warm start from linear inversion, projected onto the physical cone
    let warm = GeneratorBasis::new(d)
        .and_then(|basis| b_matrix(record.n_photons(), &basis, elements))
        .and_then(|b| linear_inversion(record, &b, elements, efficiency))
        .map(|inv| project_to_physical(&inv.state))
        .unwrap_or_else(|_| PolarizationState::maximally_mixed(d));

    let mut starts: Vec<CholeskyParameters> = vec![CholeskyParameters::from_state(&warm)?];
    for branch in 0..options.random_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(options.seed, branch as u64));
        starts.push(CholeskyParameters::random(d, &mut rng));
    }

    let simplex_options = SimplexOptions {
        max_iterations: options.max_iterations,
        relative_tolerance: options.relative_tolerance,
        step_tolerance: options.step_tolerance,
    };

    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    let mut iterations: u64 = 0;
    for params in &starts {
        let rho0 = match params.density() {
            Ok(r) => r,
            Err(_) => continue,
        };
        let intensity0 = intensity_guess(&rho0, elements, efficiency, total_counts)?;
        let mut x0 = params.values().to_vec();
        x0.push(intensity0.ln());
        let steps: Vec<f64> = x0
            .iter()
            .enumerate()
            .map(|(i, &v)| if i < d * d { 0.1 * v.abs() + 0.02 } else { 0.02 })
            .collect();

        let objective = |x: &[f64]| -> f64 {
            let params = CholeskyParameters::new(d, x[..d * d].to_vec())
                .expect("coordinate count is fixed");
            let intensity = x[d * d].exp();
            match params.density() {
                Ok(rho) => match expected_for(&rho, intensity, elements, efficiency) {
                    Ok(expected) => penalty(&expected, elements, record),
                    Err(_) => f64::INFINITY,
                },
                Err(_) => f64::INFINITY,
            }
        };

        let result = minimize(objective, &x0, &steps, &simplex_options);
        iterations += result.iterations;
        let better = match &best {
            None => true,
            Some((value, _, _)) => result.value < *value,
        };
        if better {
            best = Some((result.value, result.x, result.converged));
        }
    }

    let (value, x, converged) = best.ok_or(Error::DegenerateParameters)?;
    let params = CholeskyParameters::new(d, x[..d * d].to_vec())?;
    let rho_hat = params.density()?;
    Ok(ReconstructionResult {
        rho_hat,
        chi2: value,
        intensity_hat: x[d * d].exp(),
        iterations,
        converged,
        fidelity: None,
    })
}

/// Parametric bootstrap of the reconstruction fidelity: `reps` rounds of
/// Poisson-resampling the measured counts, re-running the full estimation,
/// and scoring against `target`. Failed repetitions are excluded and counted.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_fidelity(
    record: &CountsRecord,
    target: &StateVector,
    elements: &[PovmElement],
    efficiency: &EfficiencyModel,
    reps: usize,
    seed: u64,
    options: &MaxlikOptions,
) -> Result<FidelityStats> {
    if reps < 2 {
        return Err(Error::TooFewRepetitions { got: reps });
    }
    let mut values = Vec::with_capacity(reps);
    let mut failed = 0usize;
    for k in 0..reps {
        let resampled = poisson_resample(record, derive_seed(seed, k as u64));
        let mut rep_options = options.clone();
        rep_options.seed = derive_seed(seed, 0x8000_0000 + k as u64);
        match maxlik_reconstruct(&resampled, elements, efficiency, &rep_options)
            .and_then(|res| fidelity(target, &res.rho_hat))
        {
            Ok(f) => values.push(f),
            Err(err) => {
                log::warn!("bootstrap repetition {k} failed: {err}");
                failed += 1;
            }
        }
    }
    if values.is_empty() {
        return Err(Error::BootstrapFailed { attempted: reps });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() >= 2 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(FidelityStats {
        mean,
        std,
        completed: values.len(),
        failed,
    })
}
