//! End-to-end jobs behind the CLI and the runnable examples: state and
//! efficiency spec parsing, simulate/reconstruct runs with their JSON and CSV
//! artifacts, and the three-state replication suite with published reference
//! values.

use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detection::{sample_counts, CountsRecord, EfficiencyModel};
use crate::error::{Error, Result};
use crate::optics::{povm_elements, NetworkIsometry, PovmElement};
use crate::qudit::{fidelity, hwp_state, PolarizationState, StateVector};
use crate::reconstruction::{
    bootstrap_fidelity, maxlik_reconstruct, FidelityReport, MaxlikOptions, ReconstructionResult,
};
use crate::util::derive_seed;

/// Parses an angle such as `0.25pi` or `0.7853982` (radians).
fn parse_angle(text: &str) -> Option<f64> {
    if let Some(stripped) = text.strip_suffix("pi") {
        stripped
            .trim()
            .parse::<f64>()
            .ok()
            .map(|x| x * std::f64::consts::PI)
    } else {
        text.trim().parse::<f64>().ok()
    }
}

fn named_pure_state(spec: &str, n: u32) -> Result<Option<StateVector>> {
    let require_two_photons = |what: &str| -> Result<()> {
        if n != 2 {
            return Err(Error::InvalidStateSpec {
                spec: what.to_string(),
                reason: format!("named state lives in the two-photon sector, got N = {n}"),
            });
        }
        Ok(())
    };
    let c = |re: f64| Complex64::new(re, 0.0);
    let state = match spec {
        "hv" => {
            require_two_photons(spec)?;
            Some(StateVector::basis_state(3, 1))
        }
        "noon" => {
            require_two_photons(spec)?;
            let s = std::f64::consts::FRAC_1_SQRT_2;
            Some(StateVector::new(vec![c(-s), c(0.0), c(s)])?)
        }
        "equipartition" => {
            require_two_photons(spec)?;
            let t = 1.0 / 3.0f64.sqrt();
            Some(StateVector::new(vec![c(-t), c(t), c(t)])?)
        }
        _ => {
            if let Some(angle) = spec.strip_prefix("hwp:") {
                require_two_photons(spec)?;
                let theta = parse_angle(angle).ok_or_else(|| Error::InvalidStateSpec {
                    spec: spec.to_string(),
                    reason: "could not parse the angle after 'hwp:'".into(),
                })?;
                Some(hwp_state(theta))
            } else {
                None
            }
        }
    };
    Ok(state)
}

/// Resolves a pure-state spec: a named state (`hv`, `noon`, `equipartition`,
/// `hwp:<theta>`, all two-photon) or `@file.json` holding a serialized state
/// vector.
pub fn parse_pure_state_spec(spec: &str, n: u32) -> Result<StateVector> {
    if let Some(state) = named_pure_state(spec, n)? {
        return Ok(state);
    }
    if let Some(path) = spec.strip_prefix('@') {
        let text = std::fs::read_to_string(path)?;
        let state: StateVector = serde_json::from_str(&text)?;
        if state.dim() != n as usize + 1 {
            return Err(Error::DimensionMismatch {
                left: state.dim(),
                right: n as usize + 1,
            });
        }
        return Ok(state);
    }
    Err(Error::InvalidStateSpec {
        spec: spec.to_string(),
        reason: "expected hv | noon | equipartition | hwp:<theta> | @file.json".into(),
    })
}

/// Resolves a state spec for simulation; `@file.json` may hold either a pure
/// state vector or a density matrix.
pub fn parse_state_spec(spec: &str, n: u32) -> Result<PolarizationState> {
    if let Some(state) = named_pure_state(spec, n)? {
        return Ok(state.projector());
    }
    if let Some(path) = spec.strip_prefix('@') {
        let text = std::fs::read_to_string(path)?;
        if let Ok(vector) = serde_json::from_str::<StateVector>(&text) {
            if vector.dim() != n as usize + 1 {
                return Err(Error::DimensionMismatch {
                    left: vector.dim(),
                    right: n as usize + 1,
                });
            }
            return Ok(vector.projector());
        }
        let rho: PolarizationState = serde_json::from_str(&text)?;
        if rho.dim() != n as usize + 1 {
            return Err(Error::DimensionMismatch {
                left: rho.dim(),
                right: n as usize + 1,
            });
        }
        return Ok(rho);
    }
    Err(Error::InvalidStateSpec {
        spec: spec.to_string(),
        reason: "expected hv | noon | equipartition | hwp:<theta> | @file.json".into(),
    })
}

/// Resolves an efficiency spec: `ideal`, a single value for all detectors, a
/// comma list of six values, or `@file.json` with a serialized model.
pub fn parse_efficiency_spec(spec: &str) -> Result<EfficiencyModel> {
    let trimmed = spec.trim();
    if trimmed == "ideal" {
        return Ok(EfficiencyModel::ideal());
    }
    if let Some(path) = trimmed.strip_prefix('@') {
        let text = std::fs::read_to_string(path)?;
        return Ok(serde_json::from_str(&text)?);
    }
    if trimmed.contains(',') {
        let parts: Vec<&str> = trimmed.split(',').collect();
        if parts.len() != 6 {
            return Err(Error::InvalidEfficiencySpec {
                spec: spec.to_string(),
                reason: format!("expected 6 comma-separated values, got {}", parts.len()),
            });
        }
        let mut eta = [0.0; 6];
        for (slot, part) in eta.iter_mut().zip(&parts) {
            *slot = part
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidEfficiencySpec {
                    spec: spec.to_string(),
                    reason: e.to_string(),
                })?;
        }
        return EfficiencyModel::independent(eta);
    }
    let eta = trimmed
        .parse::<f64>()
        .map_err(|_| Error::InvalidEfficiencySpec {
            spec: spec.to_string(),
            reason: "expected ideal | <eta> | six comma-separated values | @file.json".into(),
        })?;
    EfficiencyModel::uniform(eta)
}

/// Effective settings of one simulation run; also the config snapshot schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateJob {
    pub n: u32,
    pub state: String,
    pub eta: String,
    pub ensemble: u64,
    pub seed: u64,
    pub out: PathBuf,
}

/// Replaces the path extension with `config.json`.
pub fn config_snapshot_path(out: &Path) -> PathBuf {
    out.with_extension("config.json")
}

fn write_pretty_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Runs the forward pipeline and writes the record plus a config snapshot
/// next to it.
pub fn run_simulate(job: &SimulateJob) -> Result<CountsRecord> {
    let rho = parse_state_spec(&job.state, job.n)?;
    let efficiency = parse_efficiency_spec(&job.eta)?;
    let elements = povm_elements(job.n, &NetworkIsometry::standard())?;
    let record = sample_counts(&rho, &elements, &efficiency, job.ensemble, job.seed)?;
    write_pretty_json(&job.out, &record)?;
    write_pretty_json(&config_snapshot_path(&job.out), job)?;
    Ok(record)
}

/// Effective settings of one reconstruction run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructJob {
    pub input: PathBuf,
    pub out: PathBuf,
    pub eta: String,
    pub seed: u64,
    pub reps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events_csv: Option<PathBuf>,
}

pub fn read_record(path: &Path) -> Result<CountsRecord> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Bar-chart data of the reconstructed matrix: one row per entry and part.
pub fn write_plot_csv(path: &Path, rho: &PolarizationState) -> Result<()> {
    let d = rho.dim();
    let mut text = String::from("part,row,col,value\n");
    for (part, take) in [("re", 0usize), ("im", 1usize)] {
        for i in 0..d {
            for j in 0..d {
                let z = rho.matrix()[(i, j)];
                let v = if take == 0 { z.re } else { z.im };
                text.push_str(&format!("{part},{i},{j},{v:.6}\n"));
            }
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Per-event comparison of observed and fitted counts.
pub fn write_events_csv(
    path: &Path,
    record: &CountsRecord,
    elements: &[PovmElement],
    rho_hat: &PolarizationState,
    intensity: f64,
    efficiency: &EfficiencyModel,
) -> Result<()> {
    let probabilities = crate::optics::event_probabilities(rho_hat, elements)?;
    let mut text = String::from("d1,d2,d3,d4,d5,d6,n,nbar,residual\n");
    for (element, p) in elements.iter().zip(probabilities) {
        let nbar = intensity * efficiency.event_factor(&element.event)? * p;
        let n = record.count(&element.event);
        let d = element.event.counts();
        text.push_str(&format!(
            "{},{},{},{},{},{},{n},{nbar:.4},{:.4}\n",
            d[0],
            d[1],
            d[2],
            d[3],
            d[4],
            d[5],
            n - nbar
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a record, fits it, optionally bootstraps a fidelity against a
/// target, and writes the result JSON, plot CSV, optional events CSV, and a
/// config snapshot.
pub fn run_reconstruct(job: &ReconstructJob) -> Result<ReconstructionResult> {
    let record = read_record(&job.input)?;
    let efficiency = parse_efficiency_spec(&job.eta)?;
    let elements = povm_elements(record.n_photons(), &NetworkIsometry::standard())?;
    let options = MaxlikOptions {
        seed: job.seed,
        ..Default::default()
    };
    let mut result = maxlik_reconstruct(&record, &elements, &efficiency, &options)?;
    if let Some(target_spec) = &job.target {
        let target = parse_pure_state_spec(target_spec, record.n_photons())?;
        let stats = bootstrap_fidelity(
            &record,
            &target,
            &elements,
            &efficiency,
            job.reps,
            derive_seed(job.seed, 0xb007),
            &options,
        )?;
        result.fidelity = Some(FidelityReport {
            target,
            mean: stats.mean,
            std: stats.std,
            completed: stats.completed,
            failed: stats.failed,
        });
    }
    write_pretty_json(&job.out, &result)?;
    write_plot_csv(&job.out.with_extension("plot.csv"), &result.rho_hat)?;
    if let Some(events_csv) = &job.events_csv {
        write_events_csv(
            events_csv,
            &record,
            &elements,
            &result.rho_hat,
            result.intensity_hat,
            &efficiency,
        )?;
    }
    write_pretty_json(&config_snapshot_path(&job.out), job)?;
    Ok(result)
}

/// Acceptance thresholds of the replication suite.
pub const REPLICATION_MIN_FIDELITY: f64 = 0.99;
pub const REPLICATION_MAX_STD: f64 = 0.01;

/// One prepared state of the reference experiment.
#[derive(Debug, Clone)]
pub struct ReplicationCase {
    pub label: &'static str,
    /// Plate-angle label as quoted in the reference experiment.
    pub theta_label: &'static str,
    pub target: StateVector,
    /// Density matrix published for this preparation (entries as printed).
    pub reference_matrix: [[Complex64; 3]; 3],
    /// Published bootstrap fidelity (mean, std) for this preparation.
    pub reference_fidelity: (f64, f64),
}

fn z(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// The three preparations of the reference experiment with their published
/// reconstructions and fidelities.
pub fn replication_cases() -> Vec<ReplicationCase> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let t = 1.0 / 3.0f64.sqrt();
    vec![
        ReplicationCase {
            label: "hv",
            theta_label: "theta = 0",
            target: StateVector::basis_state(3, 1),
            reference_matrix: [
                [z(0.02, 0.0), z(0.12, -0.03), z(-0.01, 0.0)],
                [z(0.12, 0.03), z(0.96, 0.0), z(-0.06, -0.02)],
                [z(-0.01, 0.0), z(-0.06, 0.02), z(0.03, 0.0)],
            ],
            reference_fidelity: (0.95, 0.03),
        },
        ReplicationCase {
            label: "noon",
            theta_label: "theta = pi/4",
            target: StateVector::new(vec![z(-s, 0.0), z(0.0, 0.0), z(s, 0.0)])
                .expect("unit norm"),
            reference_matrix: [
                [z(0.51, 0.0), z(0.00, -0.01), z(-0.47, 0.03)],
                [z(0.00, 0.01), z(0.03, 0.0), z(0.01, -0.02)],
                [z(-0.47, -0.03), z(0.01, 0.02), z(0.46, 0.0)],
            ],
            reference_fidelity: (0.960, 0.004),
        },
        ReplicationCase {
            label: "equipartition",
            theta_label: "plate at 0.076 pi",
            target: StateVector::new(vec![z(-t, 0.0), z(t, 0.0), z(t, 0.0)])
                .expect("unit norm"),
            reference_matrix: [
                [z(0.34, 0.0), z(-0.35, 0.07), z(-0.27, 0.08)],
                [z(-0.35, -0.07), z(0.37, 0.0), z(0.29, -0.03)],
                [z(-0.27, -0.08), z(0.29, 0.03), z(0.29, 0.0)],
            ],
            reference_fidelity: (0.932, 0.003),
        },
    ]
}

/// Outcome of one replication case.
#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub case: ReplicationCase,
    pub result: ReconstructionResult,
    pub point_fidelity: f64,
    pub bootstrap_mean: f64,
    pub bootstrap_std: f64,
    pub detected_counts: f64,
    pub passed: bool,
}

/// Full report of the replication suite.
#[derive(Debug, Clone)]
pub struct ReplicationReport {
    pub seed: u64,
    pub eta: String,
    pub ensemble: u64,
    pub reps: usize,
    pub outcomes: Vec<CaseOutcome>,
}

impl ReplicationReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

/// Simulates, reconstructs, and bootstraps the three reference preparations
/// at the given ensemble size, checking each against the acceptance
/// thresholds. Deterministic in `seed`.
pub fn run_replication(
    seed: u64,
    eta: &str,
    ensemble: u64,
    reps: usize,
) -> Result<ReplicationReport> {
    let efficiency = parse_efficiency_spec(eta)?;
    let elements = povm_elements(2, &NetworkIsometry::standard())?;
    let mut outcomes = Vec::new();
    for (index, case) in replication_cases().into_iter().enumerate() {
        let rho = case.target.projector();
        let record = sample_counts(
            &rho,
            &elements,
            &efficiency,
            ensemble,
            derive_seed(seed, index as u64),
        )?;
        let options = MaxlikOptions {
            seed: derive_seed(seed, 100 + index as u64),
            ..Default::default()
        };
        let result = maxlik_reconstruct(&record, &elements, &efficiency, &options)?;
        let point_fidelity = fidelity(&case.target, &result.rho_hat)?;
        let stats = bootstrap_fidelity(
            &record,
            &case.target,
            &elements,
            &efficiency,
            reps,
            derive_seed(seed, 200 + index as u64),
            &options,
        )?;
        let passed =
            point_fidelity >= REPLICATION_MIN_FIDELITY && stats.std <= REPLICATION_MAX_STD;
        outcomes.push(CaseOutcome {
            case,
            point_fidelity,
            bootstrap_mean: stats.mean,
            bootstrap_std: stats.std,
            detected_counts: record.total_counts(),
            result,
            passed,
        });
    }
    Ok(ReplicationReport {
        seed,
        eta: eta.to_string(),
        ensemble,
        reps,
        outcomes,
    })
}

fn format_matrix_rows(label: &str, m: &dyn Fn(usize, usize) -> Complex64) -> Vec<String> {
    let mut rows = vec![format!("{label}:")];
    for i in 0..3 {
        let cells: Vec<String> = (0..3)
            .map(|j| {
                let v = m(i, j);
                format!("{:+.2}{:+.2}i", v.re, v.im)
            })
            .collect();
        rows.push(format!("  [ {} ]", cells.join("  ")));
    }
    rows
}

impl fmt::Display for ReplicationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Replication suite: three two-photon preparations, ensemble {}, eta {}, seed {}, {} bootstrap reps",
            self.ensemble, self.eta, self.seed, self.reps
        )?;
        writeln!(
            f,
            "Thresholds: point fidelity >= {REPLICATION_MIN_FIDELITY}, bootstrap std <= {REPLICATION_MAX_STD}"
        )?;
        writeln!(f)?;
        for outcome in &self.outcomes {
            let case = &outcome.case;
            writeln!(
                f,
                "--- {} ({}) --------------------------------------------",
                case.label, case.theta_label
            )?;
            let fitted = outcome.result.rho_hat.matrix();
            for line in format_matrix_rows("reconstructed (this run)", &|i, j| fitted[(i, j)]) {
                writeln!(f, "{line}")?;
            }
            for line in format_matrix_rows("published reference", &|i, j| {
                case.reference_matrix[i][j]
            }) {
                writeln!(f, "{line}")?;
            }
            writeln!(
                f,
                "fidelity to ideal target: {:.4} (bootstrap {:.4} +/- {:.4}, {} reps)",
                outcome.point_fidelity,
                outcome.bootstrap_mean,
                outcome.bootstrap_std,
                self.reps
            )?;
            writeln!(
                f,
                "published experimental fidelity (reference only, includes preparation error): {:.3} +/- {:.3}",
                case.reference_fidelity.0, case.reference_fidelity.1
            )?;
            writeln!(
                f,
                "chi2 = {:.2}, fitted intensity = {:.0}, detected coincidences = {:.0}",
                outcome.result.chi2, outcome.result.intensity_hat, outcome.detected_counts
            )?;
            writeln!(
                f,
                "{}",
                if outcome.passed { "PASS" } else { "FAIL" }
            )?;
            writeln!(f)?;
        }
        writeln!(
            f,
            "overall: {}",
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}
