use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CampaignError, LoadedCampaign, PointRun, ReferencingResult, RefVolts};
use crate::bench::VacConfig;
use crate::dut::{DetectorMode, Verdict};
use crate::netcal::CorrectionSet;
use crate::procedure::{AttemptTrace, NullResult};

/// Per-frequency result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub frequency_ghz: f64,
    pub null: NullResult,
    pub refs: RefVolts,
    pub retries: u32,
    pub error_budget_deg: f64,
    pub corrections: CorrectionSet,
    pub corrections_applied: bool,
    pub vac: VacConfig,
    /// A curve sample hit a VAC rail.
    pub clipped: bool,
    pub attempts: Vec<AttemptTrace>,
    pub finished_at_s: f64,
    pub referencing: ReferencingResult,
    /// The simulated hybrid's shift, for comparison with `referencing.shift_deg`.
    pub ground_truth_shift_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum PointOutcome {
    Ok(Box<MeasurementRecord>),
    Failed { frequency_ghz: f64, kind: String, error: String },
}

impl PointOutcome {
    pub fn frequency_ghz(&self) -> f64 {
        match self {
            PointOutcome::Ok(r) => r.frequency_ghz,
            PointOutcome::Failed { frequency_ghz, .. } => *frequency_ghz,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    /// SHA-256 of the config file text.
    pub config_sha256: String,
    /// SHA-256 of the effective configuration (after overrides) and S-parameter rows.
    pub effective_sha256: String,
    /// Wall-clock creation time. The only field that differs between identical runs.
    pub generated_at_unix: Option<u64>,
}

/// One line of the referencing summary: a frequency and curve type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table4Row {
    pub frequency_ghz: f64,
    pub curve: DetectorMode,
    pub y: u16,
    pub theta_ref: f64,
    pub v_ref: f64,
    pub shift_deg: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub provenance: Provenance,
    pub points: Vec<PointOutcome>,
    pub table: Vec<Table4Row>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl CampaignReport {
    pub fn new(loaded: &LoadedCampaign, runs: &[Result<PointRun, CampaignError>]) -> Self {
        let cfg = &loaded.config;
        // where the files go does not change what is computed
        let mut hashed = cfg.clone();
        hashed.output.dir = None;
        let effective = serde_json::json!({ "config": hashed, "sparams": loaded.sparams });
        let provenance = Provenance {
            generator: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            seed: cfg.seed,
            config_sha256: sha256_hex(loaded.text.as_bytes()),
            effective_sha256: sha256_hex(effective.to_string().as_bytes()),
            generated_at_unix: SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs()),
        };
        let points: Vec<PointOutcome> = runs
            .iter()
            .zip(&cfg.frequencies_ghz)
            .map(|(run, &f)| match run {
                Ok(r) => PointOutcome::Ok(Box::new(r.record.clone())),
                Err(e) => PointOutcome::Failed { frequency_ghz: f, kind: e.kind().to_string(), error: e.to_string() },
            })
            .collect();
        let mut table = Vec::new();
        for p in &points {
            let PointOutcome::Ok(r) = p else { continue };
            let rf = &r.referencing;
            // Q×I first, as in the usual presentation of referencing results
            for c in [&rf.curve_q, &rf.curve_i] {
                table.push(Table4Row {
                    frequency_ghz: r.frequency_ghz,
                    curve: c.mode,
                    y: c.anchor.y,
                    theta_ref: c.anchor.theta_ref_y,
                    v_ref: c.anchor.v_ref_y,
                    shift_deg: rf.shift_deg,
                    verdict: rf.verdict,
                });
            }
        }
        CampaignReport { provenance, points, table }
    }

    /// Every requested frequency produced a record.
    pub fn all_ok(&self) -> bool {
        self.points.iter().all(|p| matches!(p, PointOutcome::Ok(_)))
    }

    pub fn to_json(&self) -> Result<String, CampaignError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// JSON with the wall-clock timestamp removed; identical for identical inputs.
    pub fn deterministic_json(&self) -> Result<String, CampaignError> {
        let mut r = self.clone();
        r.provenance.generated_at_unix = None;
        r.to_json()
    }
}

pub fn render_table4(rows: &[Table4Row]) -> String {
    let mut s = String::from("freq_ghz  curve  y    theta_ref  v_ref  shift    verdict\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<8}  {:<5}  {:<3}  {:>9.3}  {:>5.3}  {:>7.3}  {}",
            r.frequency_ghz, r.curve, r.y, r.theta_ref, r.v_ref, r.shift_deg, r.verdict
        );
    }
    s
}

/// Offline referencing result for one recorded curve pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceReport {
    pub frequency_ghz: f64,
    pub refs: RefVolts,
    pub referencing: ReferencingResult,
}
