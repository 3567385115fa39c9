//! State algebra for the N-photon two-mode polarization sector.
//!
//! An N-photon state of two polarization modes is a qudit of dimension
//! d = N + 1. Basis element `m` is the Fock state |N-m, m> with N-m photons
//! horizontal and m vertical. This module provides the SU(d) generator basis,
//! the generator (Bloch) decomposition, fidelity/purity, and the half-wave
//! plate preparation family.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance on Hermiticity and trace checks.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Eigenvalue solvers leave tiny negative residues on rank-deficient states.
pub const PSD_TOL: f64 = -1e-10;
/// Tolerance on state-vector normalization.
pub const NORM_TOL: f64 = 1e-12;

/// Photon occupation of the two polarization modes, |n_h, n_v>.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockBasisIndex {
    pub n_h: u32,
    pub n_v: u32,
}

impl FockBasisIndex {
    /// Basis element m of the N-photon sector: |N-m, m>.
    pub fn from_sector(n: u32, m: usize) -> Self {
        assert!(m as u32 <= n, "sector index out of range");
        Self {
            n_h: n - m as u32,
            n_v: m as u32,
        }
    }

    pub fn total(&self) -> u32 {
        self.n_h + self.n_v
    }

    /// Position within the sector basis (equal to the vertical photon count).
    pub fn sector_index(&self) -> usize {
        self.n_v as usize
    }
}

impl std::fmt::Display for FockBasisIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "|{},{}>", self.n_h, self.n_v)
    }
}

/// Pure state on the sector basis, amplitudes indexed by m.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<Complex64>,
}

impl StateVector {
    /// Wraps amplitudes that are already normalized to within [`NORM_TOL`].
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidDimension { got: 0, min: 1 });
        }
        let v = DVector::from_vec(amplitudes);
        let deviation = (v.norm_squared() - 1.0).abs();
        if deviation > NORM_TOL {
            return Err(Error::NotNormalized { deviation });
        }
        Ok(Self { amplitudes: v })
    }

    /// Normalizes the given amplitudes; fails on a (near-)zero vector.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidDimension { got: 0, min: 1 });
        }
        let mut v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if norm < 1e-300 {
            return Err(Error::ZeroVector);
        }
        v /= Complex64::new(norm, 0.0);
        Ok(Self { amplitudes: v })
    }

    /// The sector basis state |N-m, m>.
    pub fn basis_state(dim: usize, m: usize) -> Self {
        assert!(m < dim, "basis index out of range");
        let mut v = DVector::zeros(dim);
        v[m] = Complex64::new(1.0, 0.0);
        Self { amplitudes: v }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    /// Inner product <self|other>.
    pub fn overlap(&self, other: &Self) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// The rank-one density matrix |psi><psi|.
    pub fn projector(&self) -> PolarizationState {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |i, j| self.amplitudes[i] * self.amplitudes[j].conj());
        PolarizationState { matrix: m }
    }
}

#[derive(Serialize, Deserialize)]
struct VectorRepr {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for StateVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = VectorRepr {
            dim: self.dim(),
            re: self.amplitudes.iter().map(|z| z.re).collect(),
            im: self.amplitudes.iter().map(|z| z.im).collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = VectorRepr::deserialize(deserializer)?;
        if repr.re.len() != repr.dim || repr.im.len() != repr.dim {
            return Err(D::Error::custom("state vector length does not match dim"));
        }
        let amplitudes: Vec<Complex64> = repr
            .re
            .iter()
            .zip(&repr.im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        StateVector::new(amplitudes).map_err(D::Error::custom)
    }
}

/// Density matrix on the (N+1)-dimensional N-photon polarization sector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationState {
    matrix: DMatrix<Complex64>,
}

impl PolarizationState {
    /// Validates Hermiticity, unit trace, and positive semidefiniteness.
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        let state = Self::new_hermitian(matrix)?;
        let min = state.min_eigenvalue();
        if min < PSD_TOL {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: min,
            });
        }
        Ok(state)
    }

    /// Validates Hermiticity and unit trace only. Positivity is the caller's
    /// problem; linear inversion legitimately produces indefinite matrices.
    pub fn new_hermitian(matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::InvalidDimension {
                got: matrix.nrows().min(matrix.ncols()),
                min: 1,
            });
        }
        let mut deviation: f64 = 0.0;
        for i in 0..matrix.nrows() {
            for j in 0..=i {
                deviation = deviation.max((matrix[(i, j)] - matrix[(j, i)].conj()).norm());
            }
        }
        if deviation > HERMITICITY_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let trace_dev = (matrix.trace() - Complex64::new(1.0, 0.0)).norm();
        if trace_dev > HERMITICITY_TOL {
            return Err(Error::NotUnitTrace {
                deviation: trace_dev,
            });
        }
        Ok(Self { matrix })
    }

    /// The maximally mixed state 1/d.
    pub fn maximally_mixed(dim: usize) -> Self {
        let m = DMatrix::from_diagonal_element(dim, dim, Complex64::new(1.0 / dim as f64, 0.0));
        Self { matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// True when the smallest eigenvalue clears [`PSD_TOL`].
    pub fn is_physical(&self) -> bool {
        self.min_eigenvalue() >= PSD_TOL
    }

    /// Tr(rho^2); 1/d for the maximally mixed state, 1 for pure states.
    pub fn purity(&self) -> f64 {
        let mut acc = Complex64::default();
        for i in 0..self.dim() {
            for k in 0..self.dim() {
                acc += self.matrix[(i, k)] * self.matrix[(k, i)];
            }
        }
        acc.re
    }

    /// Expectation value <psi|rho|psi> without any positivity gate.
    pub(crate) fn expectation(&self, psi: &StateVector) -> Complex64 {
        let v = psi.amplitudes();
        let mut acc = Complex64::default();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += v[i].conj() * self.matrix[(i, j)] * v[j];
            }
        }
        acc
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Serialize for PolarizationState {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        let row = |part: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..d)
                .map(|i| (0..d).map(|j| part(&self.matrix[(i, j)])).collect())
                .collect()
        };
        MatrixRepr {
            dim: d,
            re: row(|z| z.re),
            im: row(|z| z.im),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PolarizationState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(deserializer)?;
        let d = repr.dim;
        if repr.re.len() != d
            || repr.im.len() != d
            || repr.re.iter().any(|r| r.len() != d)
            || repr.im.iter().any(|r| r.len() != d)
        {
            return Err(D::Error::custom("density matrix shape does not match dim"));
        }
        let m = DMatrix::from_fn(d, d, |i, j| Complex64::new(repr.re[i][j], repr.im[i][j]));
        PolarizationState::new(m).map_err(D::Error::custom)
    }
}

/// The d^2 - 1 traceless Hermitian generators of SU(d), generalized Gell-Mann
/// set, normalized to Tr(g_a g_b) = 2 delta_ab. Ordering: symmetric pairs,
/// antisymmetric pairs, then diagonal.
#[derive(Debug, Clone)]
pub struct GeneratorBasis {
    dim: usize,
    generators: Vec<DMatrix<Complex64>>,
}

impl GeneratorBasis {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension { got: dim, min: 2 });
        }
        let mut generators = Vec::with_capacity(dim * dim - 1);
        let one = Complex64::new(1.0, 0.0);
        let i_unit = Complex64::new(0.0, 1.0);
        for j in 0..dim {
            for k in (j + 1)..dim {
                let mut m = DMatrix::zeros(dim, dim);
                m[(j, k)] = one;
                m[(k, j)] = one;
                generators.push(m);
            }
        }
        for j in 0..dim {
            for k in (j + 1)..dim {
                let mut m = DMatrix::zeros(dim, dim);
                m[(j, k)] = -i_unit;
                m[(k, j)] = i_unit;
                generators.push(m);
            }
        }
        for l in 1..dim {
            let scale = (2.0 / (l as f64 * (l + 1) as f64)).sqrt();
            let mut m = DMatrix::zeros(dim, dim);
            for j in 0..l {
                m[(j, j)] = Complex64::new(scale, 0.0);
            }
            m[(l, l)] = Complex64::new(-scale * l as f64, 0.0);
            generators.push(m);
        }
        Ok(Self { dim, generators })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of generators, d^2 - 1.
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn generators(&self) -> &[DMatrix<Complex64>] {
        &self.generators
    }
}

/// Expansion coefficients of a state over the generator basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    coefficients: Vec<f64>,
}

impl BlochVector {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Generator coefficients lambda_a = Tr(rho g_a) / 2.
pub fn bloch_decompose(rho: &PolarizationState, basis: &GeneratorBasis) -> Result<BlochVector> {
    if rho.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: basis.dim(),
        });
    }
    let coefficients = basis
        .generators()
        .iter()
        .map(|g| {
            let mut tr = Complex64::default();
            for i in 0..rho.dim() {
                for k in 0..rho.dim() {
                    tr += rho.matrix()[(i, k)] * g[(k, i)];
                }
            }
            // imaginary residue below HERMITICITY_TOL is discarded
            tr.re / 2.0
        })
        .collect();
    Ok(BlochVector { coefficients })
}

/// Inverse of [`bloch_decompose`]: 1/d + sum_a lambda_a g_a. Hermitian with
/// unit trace by construction; positivity is not guaranteed.
pub fn bloch_reconstruct(v: &BlochVector, basis: &GeneratorBasis) -> Result<PolarizationState> {
    let d = basis.dim();
    if v.len() != d * d - 1 {
        return Err(Error::CoefficientCount {
            expected: d * d - 1,
            got: v.len(),
        });
    }
    let mut m = DMatrix::from_diagonal_element(d, d, Complex64::new(1.0 / d as f64, 0.0));
    for (lambda, g) in v.coefficients().iter().zip(basis.generators()) {
        m += g * Complex64::new(*lambda, 0.0);
    }
    PolarizationState::new_hermitian(m)
}

/// Overlap fidelity F = <psi|rho|psi>, clamped to [0, 1].
///
/// Rejects states that fail the positivity check; only physical states have a
/// meaningful fidelity.
pub fn fidelity(target: &StateVector, rho: &PolarizationState) -> Result<f64> {
    if target.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            left: target.dim(),
            right: rho.dim(),
        });
    }
    let min = rho.min_eigenvalue();
    if min < PSD_TOL {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
        });
    }
    let f = rho.expectation(target);
    Ok(f.re.clamp(0.0, 1.0))
}

/// Two-photon state behind a half-wave plate whose fast axis sits at theta/2
/// from horizontal:
///
/// ```text
/// -sqrt(2) cos(theta) sin(theta) |2,0> + cos(2 theta) |1,1>
///                                + sqrt(2) cos(theta) sin(theta) |0,2>
/// ```
///
/// theta = 0 keeps |1,1>; theta = pi/4 yields the two-photon NOON state
/// (-|2,0> + |0,2>)/sqrt(2); theta ~ 0.152 pi yields the equipartition state.
pub fn hwp_state(theta: f64) -> StateVector {
    let cs = theta.cos() * theta.sin();
    let amp = std::f64::consts::SQRT_2 * cs;
    let amplitudes = vec![
        Complex64::new(-amp, 0.0),
        Complex64::new((2.0 * theta).cos(), 0.0),
        Complex64::new(amp, 0.0),
    ];
    StateVector::normalized(amplitudes).expect("hwp amplitudes have unit norm")
}
