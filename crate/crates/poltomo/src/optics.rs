//! The fixed six-detector analysis network and its projective description.
//!
//! The apparatus splits the beam 1:3 over three analysis stations (H/V,
//! diagonal, circular), each terminated by a polarizing beam splitter and two
//! photon-number resolving detectors. A coincidence outcome is the event
//! vector (d1,...,d6) of per-detector photon counts. This module enumerates
//! events, builds the projected state and normalization factor of each event,
//! assembles the rank-one POVM with its weights from the network isometry,
//! and performs the informational-completeness (rank) analysis of the B
//! matrix.

use nalgebra::{DMatrix, SMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qudit::{GeneratorBasis, PolarizationState, StateVector};
use crate::util::{binomial_u128, factorial_f64, factorial_u128};

/// Hard cap on the photon number; M(10) = 3003 events is already well past
/// any practical data volume.
pub const MAX_PHOTON_NUMBER: u32 = 10;

const DETECTORS: usize = 6;

/// Per-detector photon counts (d1,...,d6) of one coincidence outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventVector {
    counts: [u32; 6],
}

impl EventVector {
    pub fn new(counts: [u32; 6]) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u32; 6] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }
}

impl std::fmt::Display for EventVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [a, b, c, d, e, g] = self.counts;
        write!(f, "({a},{b},{c},{d},{e},{g})")
    }
}

/// Number of distinct N-fold coincidence events, C(N+5, 5).
pub fn event_count(n: u32) -> u64 {
    binomial_u128(n + 5, 5) as u64
}

/// All events with total photon number `n`, in lexicographic order.
pub fn enumerate_events(n: u32) -> Result<Vec<EventVector>> {
    if n > MAX_PHOTON_NUMBER {
        return Err(Error::PhotonNumberTooLarge {
            n,
            max: MAX_PHOTON_NUMBER,
        });
    }
    let mut events = Vec::with_capacity(event_count(n) as usize);
    let mut current = [0u32; 6];
    fill_events(n, 0, &mut current, &mut events);
    Ok(events)
}

fn fill_events(remaining: u32, detector: usize, current: &mut [u32; 6], out: &mut Vec<EventVector>) {
    if detector == DETECTORS - 1 {
        current[detector] = remaining;
        out.push(EventVector::new(*current));
        return;
    }
    for k in 0..=remaining {
        current[detector] = k;
        fill_events(remaining - k, detector + 1, current, out);
    }
    current[detector] = 0;
}

/// Gaussian integer, the exact coefficient ring of the detector factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GaussianInt {
    pub re: i64,
    pub im: i64,
}

impl GaussianInt {
    pub const ZERO: Self = Self { re: 0, im: 0 };
    pub const ONE: Self = Self { re: 1, im: 0 };
    pub const I: Self = Self { re: 0, im: 1 };

    pub fn new(re: i64, im: i64) -> Self {
        Self { re, im }
    }

    pub fn mul(self, other: Self) -> Self {
        Self {
            re: self.re * other.re - self.im * other.im,
            im: self.re * other.im + self.im * other.re,
        }
    }

    pub fn add(self, other: Self) -> Self {
        Self {
            re: self.re + other.re,
            im: self.im + other.im,
        }
    }

    /// |z|^2, exact.
    pub fn norm_sq(self) -> u128 {
        (self.re as i128 * self.re as i128 + self.im as i128 * self.im as i128) as u128
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re as f64, self.im as f64)
    }
}

/// The (vertical, horizontal) creation-operator coefficients of the linear
/// factor attached to detector `i` (0-based): V, H, V+H, V-H, iV+H, iV-H.
pub fn detector_factor(detector: usize) -> (GaussianInt, GaussianInt) {
    match detector {
        0 => (GaussianInt::ONE, GaussianInt::ZERO),
        1 => (GaussianInt::ZERO, GaussianInt::ONE),
        2 => (GaussianInt::ONE, GaussianInt::ONE),
        3 => (GaussianInt::ONE, GaussianInt::new(-1, 0)),
        4 => (GaussianInt::I, GaussianInt::ONE),
        5 => (GaussianInt::I, GaussianInt::new(-1, 0)),
        _ => panic!("detector index out of range"),
    }
}

/// Homogeneous polynomial in the two creation operators with exact Gaussian
/// integer coefficients; index j is the power of the vertical operator.
///
/// Products of the detector factors expand without rounding, which matters:
/// the alternating-sign factors cancel exactly and floating-point expansion
/// would not honor those cancellations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreationPolynomial {
    coeffs: Vec<GaussianInt>,
}

impl CreationPolynomial {
    /// The empty product (degree 0, coefficient 1).
    pub fn unit() -> Self {
        Self {
            coeffs: vec![GaussianInt::ONE],
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficient of (vertical)^j (horizontal)^(degree - j).
    pub fn coefficients(&self) -> &[GaussianInt] {
        &self.coeffs
    }

    /// Multiplies by (coef_v * a_V + coef_h * a_H), raising the degree by one.
    pub fn apply_linear_factor(&mut self, coef_v: GaussianInt, coef_h: GaussianInt) {
        let old = std::mem::replace(&mut self.coeffs, vec![GaussianInt::ZERO; 1]);
        self.coeffs = vec![GaussianInt::ZERO; old.len() + 1];
        for (j, c) in old.iter().enumerate() {
            self.coeffs[j] = self.coeffs[j].add(c.mul(coef_h));
            self.coeffs[j + 1] = self.coeffs[j + 1].add(c.mul(coef_v));
        }
    }

    /// Multiplies by the `count`-th power of detector `i`'s factor.
    pub fn apply_detector(&mut self, detector: usize, count: u32) {
        let (cv, ch) = detector_factor(detector);
        for _ in 0..count {
            self.apply_linear_factor(cv, ch);
        }
    }

    /// Exact squared norm of the expanded state: sum_j |c_j|^2 (k-j)! j!
    /// where k is the degree (monomial a_H^(k-j) a_V^j applied to vacuum has
    /// squared norm (k-j)! j!).
    pub fn squared_norm_exact(&self) -> u128 {
        let k = self.degree() as u32;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c.norm_sq() * factorial_u128(k - j as u32) * factorial_u128(j as u32))
            .sum()
    }

    /// Fock amplitudes c_j sqrt((k-j)! j!) on the sector basis |k-j, j>.
    pub fn amplitudes(&self) -> Vec<Complex64> {
        let k = self.degree() as u32;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let w = (factorial_f64(k - j as u32) * factorial_f64(j as u32)).sqrt();
                c.to_complex() * w
            })
            .collect()
    }
}

/// The exact numerator polynomial of the event's projected state.
pub fn event_polynomial(event: &EventVector) -> CreationPolynomial {
    let mut poly = CreationPolynomial::unit();
    for (i, &d) in event.counts().iter().enumerate() {
        poly.apply_detector(i, d);
    }
    poly
}

/// Normalized state the apparatus projects onto when `event` fires.
pub fn projected_state(event: &EventVector) -> Result<StateVector> {
    let n = event.total();
    if n == 0 {
        return Err(Error::EmptyEvent(*event));
    }
    if n > MAX_PHOTON_NUMBER {
        return Err(Error::PhotonNumberTooLarge {
            n,
            max: MAX_PHOTON_NUMBER,
        });
    }
    StateVector::normalized(event_polynomial(event).amplitudes())
}

/// The pair sum N2(di, dj) entering the event normalization factor:
/// a quadruple binomial sum with alternating signs, evaluated in exact
/// integer arithmetic.
pub fn pair_normalization_exact(di: u32, dj: u32) -> u128 {
    let mut acc: i128 = 0;
    for dip in 0..=di {
        for dipp in 0..=di {
            for djp in 0..=dj {
                for djpp in 0..=dj {
                    if dip + djp != dipp + djpp {
                        continue;
                    }
                    let s = dip + djp;
                    let sign = if (djp + djpp) % 2 == 0 { 1i128 } else { -1i128 };
                    let term = binomial_u128(di, dip) as i128
                        * binomial_u128(di, dipp) as i128
                        * binomial_u128(dj, djp) as i128
                        * binomial_u128(dj, djpp) as i128
                        * factorial_u128(di + dj - s) as i128
                        * factorial_u128(s) as i128;
                    acc += sign * term;
                }
            }
        }
    }
    debug_assert!(acc > 0, "pair normalization must be positive");
    acc as u128
}

/// Exact event normalization factor N(mu) = d1! d2! N2(d3,d4) N2(d5,d6).
///
/// After separation into the three paths the photons are distinguishable, so
/// this is the squared norm of the projected-state numerator taken station by
/// station; it is NOT the naive squared norm of the product polynomial when
/// several stations fire at once.
pub fn normalization_factor_exact(event: &EventVector) -> u128 {
    let d = event.counts();
    factorial_u128(d[0])
        * factorial_u128(d[1])
        * pair_normalization_exact(d[2], d[3])
        * pair_normalization_exact(d[4], d[5])
}

/// [`normalization_factor_exact`] as a float.
pub fn normalization_factor(event: &EventVector) -> f64 {
    normalization_factor_exact(event) as f64
}

/// 6x2 complex matrix carrying the creation-operator amplitudes from the two
/// input modes (columns: H, V) to the six detector modes (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkIsometry {
    matrix: SMatrix<Complex64, 6, 2>,
}

impl NetworkIsometry {
    /// Validates the isometry condition V^H V = I to 1e-12.
    pub fn new(matrix: SMatrix<Complex64, 6, 2>) -> Result<Self> {
        let gram = matrix.adjoint() * matrix;
        let mut deviation: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::default()
                };
                deviation = deviation.max((gram[(i, j)] - expected).norm());
            }
        }
        if deviation > 1e-12 {
            return Err(Error::NotIsometry { deviation });
        }
        Ok(Self { matrix })
    }

    /// The fixed 1:3-splitting network: rows (H, V) per detector are
    /// (0,1)/s3, (1,0)/s3, (1,1)/s6, (-1,1)/s6, (1,i)/s6, (-1,i)/s6.
    pub fn standard() -> Self {
        let s3 = 3.0f64.sqrt().recip();
        let s6 = 6.0f64.sqrt().recip();
        let r = |re: f64, im: f64| Complex64::new(re, im);
        let matrix = SMatrix::<Complex64, 6, 2>::from_rows(&[
            [r(0.0, 0.0) * s3, r(1.0, 0.0) * s3].into(),
            [r(1.0, 0.0) * s3, r(0.0, 0.0) * s3].into(),
            [r(1.0, 0.0) * s6, r(1.0, 0.0) * s6].into(),
            [r(-1.0, 0.0) * s6, r(1.0, 0.0) * s6].into(),
            [r(1.0, 0.0) * s6, r(0.0, 1.0) * s6].into(),
            [r(-1.0, 0.0) * s6, r(0.0, 1.0) * s6].into(),
        ]);
        Self { matrix }
    }

    pub fn matrix(&self) -> &SMatrix<Complex64, 6, 2> {
        &self.matrix
    }
}

/// One rank-one POVM element M = weight |psi><psi|.
#[derive(Debug, Clone)]
pub struct PovmElement {
    pub event: EventVector,
    pub weight: f64,
    pub projected_state: StateVector,
}

/// Builds the full N-photon POVM of the network: for each event, the
/// amplitude functional is obtained by substituting the isometry into each
/// sector basis state and collecting the coefficient of the detector Fock
/// pattern. Elements come back in the canonical (lexicographic) event order.
pub fn povm_elements(n: u32, isometry: &NetworkIsometry) -> Result<Vec<PovmElement>> {
    let events = enumerate_events(n)?;
    let v = isometry.matrix();
    let nmax = n as usize;

    // pow[i][0][k] = V_{iH}^k, pow[i][1][k] = V_{iV}^k
    let mut pow = [[[Complex64::default(); MAX_PHOTON_NUMBER as usize + 1]; 2]; 6];
    for (i, p) in pow.iter_mut().enumerate() {
        for (col, pc) in p.iter_mut().enumerate() {
            pc[0] = Complex64::new(1.0, 0.0);
            for k in 1..=nmax {
                pc[k] = pc[k - 1] * v[(i, col)];
            }
        }
    }
    let inv_fact: Vec<f64> = (0..=n).map(|k| factorial_f64(k).recip()).collect();

    let mut elements = Vec::with_capacity(events.len());
    for event in events {
        let d = *event.counts();
        let pattern_weight: f64 = d.iter().map(|&di| factorial_f64(di)).product::<f64>().sqrt();
        let mut amplitudes = Vec::with_capacity(nmax + 1);
        for m in 0..=n {
            // sum over ways to split the pattern between the (N-m) horizontal
            // and m vertical input photons
            let mut sum = Complex64::default();
            split_sum(&d, 0, n - m, m, Complex64::new(1.0, 0.0), &pow, &inv_fact, &mut sum);
            let scale =
                (factorial_f64(n - m) * factorial_f64(m)).sqrt() * pattern_weight;
            amplitudes.push(sum * scale);
        }
        let amp = nalgebra::DVector::from_vec(amplitudes.clone());
        let weight = amp.norm_squared();
        let projected_state = if weight > 1e-300 {
            StateVector::normalized(amplitudes)?
        } else {
            // dead outcome of a degenerate injected network; keep the slot so
            // element order stays aligned with the event enumeration
            StateVector::basis_state(nmax + 1, 0)
        };
        elements.push(PovmElement {
            event,
            weight,
            projected_state,
        });
    }
    Ok(elements)
}

/// Recursive accumulation of
/// sum_{a <= d, sum a = h} prod_i V_iH^{a_i} V_iV^{d_i - a_i} / (a_i! (d_i - a_i)!).
#[allow(clippy::too_many_arguments)]
fn split_sum(
    d: &[u32; 6],
    detector: usize,
    h_left: u32,
    v_left: u32,
    acc: Complex64,
    pow: &[[[Complex64; MAX_PHOTON_NUMBER as usize + 1]; 2]; 6],
    inv_fact: &[f64],
    out: &mut Complex64,
) {
    if detector == DETECTORS {
        if h_left == 0 && v_left == 0 {
            *out += acc;
        }
        return;
    }
    let di = d[detector];
    let lo = di.saturating_sub(v_left);
    let hi = di.min(h_left);
    for a in lo..=hi {
        let b = di - a;
        let factor = pow[detector][0][a as usize]
            * pow[detector][1][b as usize]
            * (inv_fact[a as usize] * inv_fact[b as usize]);
        split_sum(
            d,
            detector + 1,
            h_left - a,
            v_left - b,
            acc * factor,
            pow,
            inv_fact,
            out,
        );
    }
}

/// Event probabilities Pr(mu) = weight * <psi_mu|rho|psi_mu>; they sum to one
/// over a complete POVM.
pub fn event_probabilities(
    rho: &PolarizationState,
    elements: &[PovmElement],
) -> Result<Vec<f64>> {
    let Some(first) = elements.first() else {
        return Ok(Vec::new());
    };
    if rho.dim() != first.projected_state.dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: first.projected_state.dim(),
        });
    }
    Ok(elements
        .iter()
        .map(|e| (e.weight * rho.expectation(&e.projected_state).re).max(0.0))
        .collect())
}

/// The M(N) x d^2 matrix of projector expectation values B_{mu,nu} =
/// <psi_mu|g_nu|psi_mu>, with column 0 the identity.
#[derive(Debug, Clone)]
pub struct BMatrix {
    n_photons: u32,
    matrix: DMatrix<f64>,
}

impl BMatrix {
    pub fn n_photons(&self) -> u32 {
        self.n_photons
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let svd = self.matrix.clone().svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv
    }

    /// Numerical rank at the relative cutoff sigma_max * rows * 1e-12.
    pub fn numerical_rank(&self) -> (usize, Vec<f64>, f64) {
        let sv = self.singular_values();
        let threshold = sv.first().copied().unwrap_or(0.0) * self.rows() as f64 * 1e-12;
        let rank = sv.iter().filter(|&&s| s > threshold).count();
        (rank, sv, threshold)
    }
}

pub fn b_matrix(n: u32, basis: &GeneratorBasis, elements: &[PovmElement]) -> Result<BMatrix> {
    let d = n as usize + 1;
    if basis.dim() != d {
        return Err(Error::DimensionMismatch {
            left: basis.dim(),
            right: d,
        });
    }
    if let Some(first) = elements.first() {
        if first.projected_state.dim() != d {
            return Err(Error::DimensionMismatch {
                left: first.projected_state.dim(),
                right: d,
            });
        }
    }
    let mut matrix = DMatrix::zeros(elements.len(), d * d);
    for (row, element) in elements.iter().enumerate() {
        let psi = &element.projected_state;
        matrix[(row, 0)] = 1.0;
        for (col, g) in basis.generators().iter().enumerate() {
            let mut val = Complex64::default();
            let amps = psi.amplitudes();
            for i in 0..d {
                for j in 0..d {
                    val += amps[i].conj() * g[(i, j)] * amps[j];
                }
            }
            debug_assert!(val.im.abs() <= 1e-12);
            matrix[(row, col + 1)] = val.re;
        }
    }
    Ok(BMatrix {
        n_photons: n,
        matrix,
    })
}

/// Outcome of the informational-completeness analysis for one photon number.
#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub n_photons: u32,
    pub rank: usize,
    /// d^2 = (N+1)^2, the parameter count of the density matrix.
    pub expected: usize,
    pub threshold: f64,
    pub singular_values: Vec<f64>,
}

impl RankReport {
    pub fn passed(&self) -> bool {
        self.rank == self.expected
    }
}

/// Numerical rank of the B matrix of the standard network for `n` photons.
pub fn rank_check(n: u32) -> Result<RankReport> {
    if n < 1 {
        return Err(Error::PhotonNumberTooLarge { n, max: 0 });
    }
    let elements = povm_elements(n, &NetworkIsometry::standard())?;
    let basis = GeneratorBasis::new(n as usize + 1)?;
    let b = b_matrix(n, &basis, &elements)?;
    let (rank, singular_values, threshold) = b.numerical_rank();
    Ok(RankReport {
        n_photons: n,
        rank,
        expected: (n as usize + 1) * (n as usize + 1),
        threshold,
        singular_values,
    })
}

/// Serializable dump of a POVM with its B matrix.
#[derive(Debug, Clone, Serialize)]
pub struct PovmExport {
    #[serde(rename = "N")]
    pub n: u32,
    pub events: Vec<[u32; 6]>,
    pub weights: Vec<f64>,
    pub states: Vec<StateVector>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

impl PovmExport {
    pub fn build(n: u32, elements: &[PovmElement], b: &BMatrix) -> Self {
        Self {
            n,
            events: elements.iter().map(|e| *e.event.counts()).collect(),
            weights: elements.iter().map(|e| e.weight).collect(),
            states: elements.iter().map(|e| e.projected_state.clone()).collect(),
            b: (0..b.rows())
                .map(|r| (0..b.cols()).map(|c| b.matrix()[(r, c)]).collect())
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn event_counts_match_binomial() {
        assert_eq!(event_count(0), 1);
        assert_eq!(event_count(1), 6);
        assert_eq!(event_count(2), 21);
        assert_eq!(event_count(3), 56);
        assert_eq!(event_count(4), 126);
        assert_eq!(event_count(5), 252);
        for n in 0..=10 {
            let events = enumerate_events(n).unwrap();
            assert_eq!(events.len() as u64, event_count(n));
            assert!(events.iter().all(|e| e.total() == n));
        }
    }

    #[test]
    fn events_are_lexicographically_sorted() {
        for n in 0..=5 {
            let events = enumerate_events(n).unwrap();
            assert!(events.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn enumerate_rejects_beyond_cap() {
        assert!(matches!(
            enumerate_events(11),
            Err(Error::PhotonNumberTooLarge { .. })
        ));
    }

    #[test]
    fn single_photon_projected_states_are_stokes_eigenstates() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // (event index, amplitudes on |1,0>, |0,1>)
        let expected = [
            (0, vec![c(0.0, 0.0), c(1.0, 0.0)]), // V
            (1, vec![c(1.0, 0.0), c(0.0, 0.0)]), // H
            (2, vec![c(s, 0.0), c(s, 0.0)]),     // D
            (3, vec![c(-s, 0.0), c(s, 0.0)]),    // A
            (4, vec![c(s, 0.0), c(0.0, s)]),     // L
            (5, vec![c(-s, 0.0), c(0.0, s)]),    // R
        ];
        for (i, amps) in expected {
            let mut counts = [0u32; 6];
            counts[i] = 1;
            let psi = projected_state(&EventVector::new(counts)).unwrap();
            let reference = StateVector::new(amps).unwrap();
            let overlap = reference.overlap(&psi).unwrap().norm();
            assert_abs_diff_eq!(overlap, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn two_photon_diagonal_antidiagonal_pair() {
        // (V+H)(V-H)|0> = (V^2 - H^2)|0> -> (|0,2> - |2,0>)/sqrt(2)
        let psi = projected_state(&EventVector::new([0, 0, 1, 1, 0, 0])).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(psi.amplitudes()[0].re, -s, epsilon = 1e-14);
        assert_abs_diff_eq!(psi.amplitudes()[1].norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(psi.amplitudes()[2].re, s, epsilon = 1e-14);
    }

    #[test]
    fn projected_state_rejects_empty_event() {
        assert!(matches!(
            projected_state(&EventVector::new([0; 6])),
            Err(Error::EmptyEvent(_))
        ));
    }

    #[test]
    fn pair_normalization_small_values() {
        assert_eq!(pair_normalization_exact(0, 0), 1);
        // squared norm of (V+H)|0>
        assert_eq!(pair_normalization_exact(1, 0), 2);
        // squared norm of (V^2-H^2)|0>
        assert_eq!(pair_normalization_exact(1, 1), 4);
        assert_eq!(pair_normalization_exact(2, 0), 8);
        assert_eq!(pair_normalization_exact(2, 1), 16);
    }

    #[test]
    fn normalization_of_plain_hv_event() {
        assert_eq!(
            normalization_factor_exact(&EventVector::new([1, 1, 0, 0, 0, 0])),
            1
        );
    }

    /// Station-by-station expansion oracle: each analysis station acts on its
    /// own pair of path modes, so the squared norm factorizes over stations.
    fn station_norm_oracle(event: &EventVector) -> u128 {
        let d = event.counts();
        let station = |i: usize, j: usize| -> u128 {
            let mut poly = CreationPolynomial::unit();
            poly.apply_detector(i, d[i]);
            poly.apply_detector(j, d[j]);
            poly.squared_norm_exact()
        };
        station(0, 1) * station(2, 3) * station(4, 5)
    }

    #[test]
    fn normalization_matches_station_oracle_n_le_4() {
        let mut checked = 0usize;
        for n in 1..=4 {
            for event in enumerate_events(n).unwrap() {
                assert_eq!(
                    normalization_factor_exact(&event),
                    station_norm_oracle(&event),
                    "event {event}"
                );
                checked += 1;
            }
        }
        assert_eq!(checked, 6 + 21 + 56 + 126);
    }

    /// The naive product norm over shared modes differs once two stations
    /// fire at once; the factor V * (V+H) has squared norm 3, not 2.
    #[test]
    fn cross_station_norm_is_not_the_product_norm() {
        let event = EventVector::new([1, 0, 1, 0, 0, 0]);
        assert_eq!(event_polynomial(&event).squared_norm_exact(), 3);
        assert_eq!(normalization_factor_exact(&event), 2);
    }

    #[test]
    fn standard_network_is_isometry() {
        let iso = NetworkIsometry::standard();
        let gram = iso.matrix().adjoint() * iso.matrix();
        assert_abs_diff_eq!(gram[(0, 0)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gram[(1, 1)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gram[(0, 1)].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn non_isometric_network_is_rejected() {
        let mut m = *NetworkIsometry::standard().matrix();
        m[(0, 0)] = c(0.5, 0.0);
        assert!(matches!(
            NetworkIsometry::new(m),
            Err(Error::NotIsometry { .. })
        ));
    }

    #[test]
    fn single_photon_weights_are_one_third() {
        let elements = povm_elements(1, &NetworkIsometry::standard()).unwrap();
        assert_eq!(elements.len(), 6);
        for e in &elements {
            assert_abs_diff_eq!(e.weight, 1.0 / 3.0, epsilon = 1e-14);
        }
    }

    fn completeness_defect(n: u32) -> f64 {
        let elements = povm_elements(n, &NetworkIsometry::standard()).unwrap();
        let d = n as usize + 1;
        let mut sum = DMatrix::<Complex64>::zeros(d, d);
        for e in &elements {
            let amps = e.projected_state.amplitudes();
            for i in 0..d {
                for j in 0..d {
                    sum[(i, j)] += amps[i] * amps[j].conj() * c(e.weight, 0.0);
                }
            }
        }
        let mut defect: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let expected = if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) };
                defect = defect.max((sum[(i, j)] - expected).norm());
            }
        }
        defect
    }

    #[test]
    fn povm_is_complete_up_to_n5() {
        for n in 0..=5 {
            let defect = completeness_defect(n);
            assert!(defect <= 1e-10, "completeness defect {defect:e} at N = {n}");
        }
    }

    #[test]
    fn povm_states_match_projected_states() {
        for n in 1..=4 {
            for element in povm_elements(n, &NetworkIsometry::standard()).unwrap() {
                let from_expansion = projected_state(&element.event).unwrap();
                let overlap = from_expansion
                    .overlap(&element.projected_state)
                    .unwrap()
                    .norm();
                assert_abs_diff_eq!(overlap, 1.0, epsilon = 1e-10);
            }
        }
    }

    /// Weight, expansion norm, and normalization factor close over
    /// K = 3^-N ||numerator||^2 / N(mu).
    #[test]
    fn weights_tie_to_normalization_factor() {
        for n in 1..=4 {
            for element in povm_elements(n, &NetworkIsometry::standard()).unwrap() {
                let poly = event_polynomial(&element.event);
                let expected = poly.squared_norm_exact() as f64
                    / (3.0f64.powi(n as i32) * normalization_factor(&element.event));
                assert_abs_diff_eq!(element.weight, expected, epsilon = 1e-12);
            }
        }
    }

    /// Relabeling d3<->d4 and d5<->d6 is implemented by the mode map
    /// H -> -H, which multiplies amplitude m by (-1)^(N-m); the POVM maps
    /// onto itself under it, weights included.
    #[test]
    fn povm_set_symmetry_under_station_swap() {
        for n in 1..=4 {
            let elements = povm_elements(n, &NetworkIsometry::standard()).unwrap();
            let index: std::collections::BTreeMap<EventVector, usize> = elements
                .iter()
                .enumerate()
                .map(|(i, e)| (e.event, i))
                .collect();
            for e in &elements {
                let d = e.event.counts();
                let swapped = EventVector::new([d[0], d[1], d[3], d[2], d[5], d[4]]);
                let partner = &elements[index[&swapped]];
                assert_abs_diff_eq!(e.weight, partner.weight, epsilon = 1e-12);
                let mapped: Vec<Complex64> = e
                    .projected_state
                    .amplitudes()
                    .iter()
                    .enumerate()
                    .map(|(m, a)| {
                        if (n as usize - m) % 2 == 0 {
                            *a
                        } else {
                            -*a
                        }
                    })
                    .collect();
                let mapped = StateVector::new(mapped).unwrap();
                let overlap = partner.projected_state.overlap(&mapped).unwrap().norm();
                assert_abs_diff_eq!(overlap, 1.0, epsilon = 1e-10);
            }
        }
    }

    /// Complex conjugation of all amplitudes swaps the two circular-analysis
    /// detectors and fixes the rest.
    #[test]
    fn povm_set_symmetry_under_conjugation() {
        for n in 1..=4 {
            let elements = povm_elements(n, &NetworkIsometry::standard()).unwrap();
            let index: std::collections::BTreeMap<EventVector, usize> = elements
                .iter()
                .enumerate()
                .map(|(i, e)| (e.event, i))
                .collect();
            for e in &elements {
                let d = e.event.counts();
                let swapped = EventVector::new([d[0], d[1], d[2], d[3], d[5], d[4]]);
                let partner = &elements[index[&swapped]];
                assert_abs_diff_eq!(e.weight, partner.weight, epsilon = 1e-12);
                let conj: Vec<Complex64> = e
                    .projected_state
                    .amplitudes()
                    .iter()
                    .map(|a| a.conj())
                    .collect();
                let conj = StateVector::new(conj).unwrap();
                let overlap = partner.projected_state.overlap(&conj).unwrap().norm();
                assert_abs_diff_eq!(overlap, 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn maximally_mixed_single_photon_probabilities() {
        let elements = povm_elements(1, &NetworkIsometry::standard()).unwrap();
        let rho = PolarizationState::maximally_mixed(2);
        let probs = event_probabilities(&rho, &elements).unwrap();
        for p in probs {
            assert_abs_diff_eq!(p, 1.0 / 6.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn hv_pair_coincidence_probability() {
        let elements = povm_elements(2, &NetworkIsometry::standard()).unwrap();
        let rho = StateVector::basis_state(3, 1).projector();
        let probs = event_probabilities(&rho, &elements).unwrap();
        let idx = elements
            .iter()
            .position(|e| e.event == EventVector::new([1, 1, 0, 0, 0, 0]))
            .unwrap();
        assert_abs_diff_eq!(probs[idx], 1.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn probabilities_sum_to_one() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in 1..=4u32 {
            let elements = povm_elements(n, &NetworkIsometry::standard()).unwrap();
            let rho = crate::testutil::random_state(n as usize + 1, &mut rng);
            let total: f64 = event_probabilities(&rho, &elements).unwrap().iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_photon_b_matrix_has_stokes_pattern() {
        let elements = povm_elements(1, &NetworkIsometry::standard()).unwrap();
        let basis = GeneratorBasis::new(2).unwrap();
        let b = b_matrix(1, &basis, &elements).unwrap();
        assert_eq!((b.rows(), b.cols()), (6, 4));
        for r in 0..6 {
            assert_abs_diff_eq!(b.matrix()[(r, 0)], 1.0, epsilon = 1e-14);
            let mut nonzero = 0;
            for col in 1..4 {
                let v = b.matrix()[(r, col)];
                if v.abs() > 1e-12 {
                    nonzero += 1;
                    assert_abs_diff_eq!(v.abs(), 1.0, epsilon = 1e-12);
                }
            }
            assert_eq!(nonzero, 1, "row {r} should touch exactly one generator");
        }
    }

    #[test]
    fn two_photon_b_matrix_shape() {
        let elements = povm_elements(2, &NetworkIsometry::standard()).unwrap();
        let basis = GeneratorBasis::new(3).unwrap();
        let b = b_matrix(2, &basis, &elements).unwrap();
        assert_eq!((b.rows(), b.cols()), (21, 9));
        for r in 0..21 {
            assert_abs_diff_eq!(b.matrix()[(r, 0)], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn rank_is_four_for_single_photon() {
        let report = rank_check(1).unwrap();
        assert_eq!(report.rank, 4);
        assert_eq!(report.expected, 4);
        assert!(report.passed());
    }

    #[test]
    fn rank_matches_parameter_count_for_two_and_three() {
        for n in 2..=3 {
            let report = rank_check(n).unwrap();
            assert_eq!(report.rank, (n as usize + 1).pow(2), "N = {n}");
        }
    }

    proptest! {
        #[test]
        fn prop_projected_states_are_normalized(
            d1 in 0u32..3, d2 in 0u32..3, d3 in 0u32..2,
            d4 in 0u32..2, d5 in 0u32..2, d6 in 0u32..2,
        ) {
            let event = EventVector::new([d1, d2, d3, d4, d5, d6]);
            prop_assume!(event.total() >= 1);
            let psi = projected_state(&event).unwrap();
            prop_assert!((psi.amplitudes().norm_squared() - 1.0).abs() <= 1e-12);
        }
    }
}
