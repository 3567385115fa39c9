//! Photon-number resolving detection: efficiency models, expected counts,
//! and Poissonian count sampling.
//!
//! Only the diagonal efficiencies eta_i(n|n) matter under N-fold coincidence
//! filtering; events with lost photons are simply discarded, so the total of
//! the expected counts falls below the ensemble size whenever any efficiency
//! is below one.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{EventVector, PovmElement};
use crate::qudit::PolarizationState;

/// Per-detector efficiency for registering all n photons that arrive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum EfficiencyModel {
    /// Unit efficiency everywhere.
    Ideal,
    /// Independent photons: eta_i(n) = eta_i^n.
    IndependentPhoton { eta: [f64; 6] },
    /// Explicit table; `eta[i][n-1]` is detector i's efficiency for n
    /// photons. Events beyond the tabulated range are an error.
    Table { eta: Vec<Vec<f64>> },
}

impl EfficiencyModel {
    pub fn ideal() -> Self {
        Self::Ideal
    }

    pub fn independent(eta: [f64; 6]) -> Result<Self> {
        for (i, &e) in eta.iter().enumerate() {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::InvalidEfficiency {
                    detector: i + 1,
                    value: e,
                });
            }
        }
        Ok(Self::IndependentPhoton { eta })
    }

    /// The same single-photon efficiency on all six detectors.
    pub fn uniform(eta: f64) -> Result<Self> {
        Self::independent([eta; 6])
    }

    pub fn table(eta: Vec<Vec<f64>>) -> Result<Self> {
        if eta.len() != 6 {
            return Err(Error::InvalidEfficiencySpec {
                spec: format!("{} rows", eta.len()),
                reason: "efficiency table needs exactly 6 detector rows".into(),
            });
        }
        for (i, row) in eta.iter().enumerate() {
            for &e in row {
                if !(e > 0.0 && e <= 1.0) {
                    return Err(Error::InvalidEfficiency {
                        detector: i + 1,
                        value: e,
                    });
                }
            }
        }
        Ok(Self::Table { eta })
    }

    pub fn is_ideal(&self) -> bool {
        matches!(self, Self::Ideal)
    }

    /// eta_i(n) for detector `i` (0-based); eta_i(0) = 1 always.
    pub fn efficiency(&self, detector: usize, n: u32) -> Result<f64> {
        assert!(detector < 6, "detector index out of range");
        if n == 0 {
            return Ok(1.0);
        }
        match self {
            Self::Ideal => Ok(1.0),
            Self::IndependentPhoton { eta } => Ok(eta[detector].powi(n as i32)),
            Self::Table { eta } => eta[detector]
                .get(n as usize - 1)
                .copied()
                .ok_or(Error::MissingEfficiency {
                    detector: detector + 1,
                    n,
                }),
        }
    }

    /// The event's detection probability prod_i eta_i(d_i).
    pub fn event_factor(&self, event: &EventVector) -> Result<f64> {
        let mut factor = 1.0;
        for (i, &d) in event.counts().iter().enumerate() {
            factor *= self.efficiency(i, d)?;
        }
        Ok(factor)
    }
}

/// One tomography data set: observed counts per event.
///
/// Counts are kept as floats so that exact expected-count records (used as
/// noiseless fixtures) flow through the same code path; measured data are
/// whole numbers and serialize as integers.
#[derive(Debug, Clone, PartialEq)]
pub struct CountsRecord {
    n_photons: u32,
    ensemble_size: u64,
    seed: Option<u64>,
    counts: BTreeMap<EventVector, f64>,
}

impl CountsRecord {
    pub fn new(
        n_photons: u32,
        ensemble_size: u64,
        counts: BTreeMap<EventVector, f64>,
        seed: Option<u64>,
    ) -> Result<Self> {
        if ensemble_size == 0 {
            return Err(Error::InvalidEnsembleSize);
        }
        for (event, &n) in &counts {
            if event.total() != n_photons {
                return Err(Error::EventPhotonMismatch {
                    event: *event,
                    total: event.total(),
                    expected: n_photons,
                });
            }
            if !(n >= 0.0 && n.is_finite()) {
                return Err(Error::NegativeCount {
                    event: *event,
                    value: n,
                });
            }
        }
        Ok(Self {
            n_photons,
            ensemble_size,
            seed,
            counts,
        })
    }

    pub fn n_photons(&self) -> u32 {
        self.n_photons
    }

    pub fn ensemble_size(&self) -> u64 {
        self.ensemble_size
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn counts(&self) -> &BTreeMap<EventVector, f64> {
        &self.counts
    }

    /// Observed count for an event; events absent from the map are zero.
    pub fn count(&self, event: &EventVector) -> f64 {
        self.counts.get(event).copied().unwrap_or(0.0)
    }

    pub fn total_counts(&self) -> f64 {
        self.counts.values().sum()
    }

    pub fn nonzero_events(&self) -> usize {
        self.counts.values().filter(|&&n| n > 0.0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty() || self.total_counts() == 0.0
    }
}

#[derive(Serialize, Deserialize)]
struct CountEntry {
    event: [u32; 6],
    n: serde_json::Number,
}

#[derive(Serialize, Deserialize)]
struct RecordRepr {
    #[serde(rename = "N")]
    n: u32,
    ensemble_size: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    counts: Vec<CountEntry>,
}

impl Serialize for CountsRecord {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let counts = self
            .counts
            .iter()
            .map(|(event, &n)| CountEntry {
                event: *event.counts(),
                // whole counts serialize as integers
                n: if n.fract() == 0.0 && n >= 0.0 && n <= u64::MAX as f64 {
                    serde_json::Number::from(n as u64)
                } else {
                    serde_json::Number::from_f64(n)
                        .unwrap_or_else(|| serde_json::Number::from(0u64))
                },
            })
            .collect();
        RecordRepr {
            n: self.n_photons,
            ensemble_size: self.ensemble_size,
            seed: self.seed,
            counts,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CountsRecord {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = RecordRepr::deserialize(deserializer)?;
        let mut counts = BTreeMap::new();
        for entry in repr.counts {
            let n = entry.n.as_f64().ok_or_else(|| D::Error::custom("bad count"))?;
            counts.insert(EventVector::new(entry.event), n);
        }
        CountsRecord::new(repr.n, repr.ensemble_size, counts, repr.seed).map_err(D::Error::custom)
    }
}

/// Expected counts per event: nbar = I * prod_i eta_i(d_i) * Pr(event|rho).
pub fn expected_counts(
    rho: &PolarizationState,
    elements: &[PovmElement],
    efficiency: &EfficiencyModel,
    ensemble_size: u64,
) -> Result<BTreeMap<EventVector, f64>> {
    if ensemble_size == 0 {
        return Err(Error::InvalidEnsembleSize);
    }
    let probabilities = crate::optics::event_probabilities(rho, elements)?;
    let mut out = BTreeMap::new();
    for (element, p) in elements.iter().zip(probabilities) {
        let factor = efficiency.event_factor(&element.event)?;
        out.insert(element.event, ensemble_size as f64 * factor * p);
    }
    Ok(out)
}

/// Builds the noiseless record whose counts equal the expected counts.
pub fn expected_record(
    rho: &PolarizationState,
    elements: &[PovmElement],
    efficiency: &EfficiencyModel,
    ensemble_size: u64,
) -> Result<CountsRecord> {
    let counts = expected_counts(rho, elements, efficiency, ensemble_size)?;
    let n = elements.first().map(|e| e.event.total()).unwrap_or(0);
    CountsRecord::new(n, ensemble_size, counts, None)
}

fn poisson_draw(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let dist = Poisson::new(mean).expect("positive finite mean");
    dist.sample(rng)
}

/// Draws one synthetic record with independent Poisson counts per event,
/// deterministic in `seed`. Events are visited in canonical order.
pub fn sample_counts(
    rho: &PolarizationState,
    elements: &[PovmElement],
    efficiency: &EfficiencyModel,
    ensemble_size: u64,
    seed: u64,
) -> Result<CountsRecord> {
    let means = expected_counts(rho, elements, efficiency, ensemble_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = means
        .into_iter()
        .map(|(event, mean)| (event, poisson_draw(&mut rng, mean)))
        .collect();
    let n = elements.first().map(|e| e.event.total()).unwrap_or(0);
    CountsRecord::new(n, ensemble_size, counts, Some(seed))
}

/// Parametric bootstrap step: replaces every count by a Poisson variate with
/// the observed count as its mean.
pub fn poisson_resample(record: &CountsRecord, seed: u64) -> CountsRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = record
        .counts
        .iter()
        .map(|(&event, &n)| (event, poisson_draw(&mut rng, n)))
        .collect();
    CountsRecord {
        n_photons: record.n_photons,
        ensemble_size: record.ensemble_size,
        seed: Some(seed),
        counts,
    }
}
