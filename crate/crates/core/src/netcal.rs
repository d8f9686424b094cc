//! Signal-distribution network calibration.
//!
//! The connection block between the two generators (ports 1 and 2), the combiner
//! output (port 3) and the detector inputs (ports a and b) is described by four
//! transmission parameters per frequency. From them we derive the generator
//! corrections that keep the null condition found at the combiner valid once the
//! signals are switched to the detector.
//!
//! File format, one row per frequency (`#` starts a comment):
//!
//! ```text
//! freq_ghz  s31_db s31_deg  s32_db s32_deg  sa1_db sa1_deg  sb2_db sb2_deg  [pub_dp_mc pub_dtheta_sc]
//! ```
//!
//! The two trailing columns are optional published correction values used only for
//! comparison reports.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::Route;
use crate::phasor::{wrap_180, Phasor};

/// Frequencies closer than this (1 MHz) are treated as the same calibration point.
pub const FREQ_TOLERANCE_GHZ: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum NetcalError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate frequency {freq_ghz} GHz")]
    DuplicateFrequency { line: usize, freq_ghz: f64 },
    #[error("line {line}: {msg}")]
    Invariant { line: usize, msg: String },
    #[error("no S-parameter row at {0} GHz")]
    UnknownFrequency(f64),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// One transmission parameter: magnitude in dB, phase in degrees on `(-180, 180]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SParam {
    pub mag_db: f64,
    pub phase_deg: f64,
}

impl SParam {
    pub fn new(mag_db: f64, phase_deg: f64) -> Self {
        SParam { mag_db, phase_deg: wrap_180(phase_deg) }
    }

    pub fn identity() -> Self {
        SParam { mag_db: 0.0, phase_deg: 0.0 }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(10f64.powf(self.mag_db / 20.0), self.phase_deg.to_radians())
    }

    pub fn from_complex(z: Complex64) -> Self {
        SParam::new(20.0 * z.norm().log10(), z.arg().to_degrees())
    }

    /// Applies this transmission to an incident wave.
    pub fn transmit(self, input: Phasor) -> Phasor {
        input.gain_db(self.mag_db).rotate(self.phase_deg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SParamSet {
    pub frequency_ghz: f64,
    pub s31: SParam,
    pub s32: SParam,
    pub sa1: SParam,
    pub sb2: SParam,
}

impl SParamSet {
    /// A lossless, zero-delay block.
    pub fn identity(frequency_ghz: f64) -> Self {
        let i = SParam::identity();
        SParamSet { frequency_ghz, s31: i, s32: i, sa1: i, sb2: i }
    }

    fn check_passive(&self, line: usize) -> Result<(), NetcalError> {
        for (name, p) in [("s31", self.s31), ("s32", self.s32), ("sa1", self.sa1), ("sb2", self.sb2)] {
            if !(p.mag_db <= 0.0) || !p.phase_deg.is_finite() {
                return Err(NetcalError::Invariant {
                    line,
                    msg: format!("{name} magnitude {} dB is not passive", p.mag_db),
                });
            }
        }
        Ok(())
    }
}

/// Correction values printed alongside the S-parameters in a reference table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublishedCorrection {
    pub dp_mc: f64,
    pub dtheta_sc: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSet {
    pub frequency_ghz: f64,
    /// Power correction applied to the primary generator, dB. Equal to `-dp_sc`.
    pub dp_mc: f64,
    /// Phase correction applied to the secondary generator, degrees on `(-180, 180]`.
    pub dtheta_sc: f64,
    /// Power at the detector ports relative to the generator setting, `|Sa1|` in dB.
    pub dp: f64,
    /// Un-negated secondary amplitude correction `|S31|+|Sb2|-|S32|-|Sa1|` in dB.
    pub dp_sc: f64,
}

impl CorrectionSet {
    pub fn none(frequency_ghz: f64) -> Self {
        CorrectionSet { frequency_ghz, dp_mc: 0.0, dtheta_sc: 0.0, dp: 0.0, dp_sc: 0.0 }
    }
}

/// Secondary-wave correction factor that keeps the null when switching to the detector.
pub fn correction_factor(sp: &SParamSet) -> Complex64 {
    sp.s31.to_complex() * sp.sb2.to_complex() / (sp.s32.to_complex() * sp.sa1.to_complex())
}

pub fn compute_corrections(sp: &SParamSet) -> CorrectionSet {
    let dp_sc = sp.s31.mag_db + sp.sb2.mag_db - sp.s32.mag_db - sp.sa1.mag_db;
    let dtheta_sc = wrap_180(sp.s31.phase_deg + sp.sb2.phase_deg - sp.s32.phase_deg - sp.sa1.phase_deg);
    CorrectionSet {
        frequency_ghz: sp.frequency_ghz,
        dp_mc: -dp_sc,
        dtheta_sc,
        dp: sp.sa1.mag_db,
        dp_sc,
    }
}

/// Phasors leaving the connection block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NetworkOutput {
    Dut { a: Phasor, b: Phasor },
    Combiner(Phasor),
}

/// Propagates the generator waves (port 1 secondary, port 2 primary) through the block.
pub fn apply_network(sp: &SParamSet, route: Route, port1: Phasor, port2: Phasor) -> NetworkOutput {
    match route {
        Route::Dut => NetworkOutput::Dut { a: sp.sa1.transmit(port1), b: sp.sb2.transmit(port2) },
        Route::Combiner => NetworkOutput::Combiner(
            Phasor::from_complex(
                sp.s31.transmit(port1).to_complex() + sp.s32.transmit(port2).to_complex(),
            ),
        ),
    }
}

/// Looks up the row for `freq_ghz` (within 1 MHz).
pub fn find_row(sets: &[SParamSet], freq_ghz: f64) -> Result<&SParamSet, NetcalError> {
    sets.iter()
        .find(|s| (s.frequency_ghz - freq_ghz).abs() <= FREQ_TOLERANCE_GHZ)
        .ok_or(NetcalError::UnknownFrequency(freq_ghz))
}

/// Parses the S-parameter text format, keeping the optional published columns.
pub fn parse_sparams_annotated(
    text: &str,
) -> Result<Vec<(SParamSet, Option<PublishedCorrection>)>, NetcalError> {
    let mut rows: Vec<(usize, SParamSet, Option<PublishedCorrection>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields = content
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| NetcalError::Parse { line, msg: format!("not a number: {s:?}") })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if fields.len() != 9 && fields.len() != 11 {
            return Err(NetcalError::Parse {
                line,
                msg: format!("expected 9 or 11 columns, found {}", fields.len()),
            });
        }
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(NetcalError::Parse { line, msg: "non-finite value".into() });
        }
        if fields[0] <= 0.0 {
            return Err(NetcalError::Invariant { line, msg: format!("frequency {} GHz", fields[0]) });
        }
        let set = SParamSet {
            frequency_ghz: fields[0],
            s31: SParam::new(fields[1], fields[2]),
            s32: SParam::new(fields[3], fields[4]),
            sa1: SParam::new(fields[5], fields[6]),
            sb2: SParam::new(fields[7], fields[8]),
        };
        set.check_passive(line)?;
        if let Some((_, prev, _)) =
            rows.iter().find(|(_, r, _)| (r.frequency_ghz - set.frequency_ghz).abs() <= FREQ_TOLERANCE_GHZ)
        {
            return Err(NetcalError::DuplicateFrequency { line, freq_ghz: prev.frequency_ghz });
        }
        let published = (fields.len() == 11)
            .then(|| PublishedCorrection { dp_mc: fields[9], dtheta_sc: fields[10] });
        rows.push((line, set, published));
    }
    if rows.is_empty() {
        return Err(NetcalError::Parse { line: 0, msg: "no S-parameter rows".into() });
    }
    rows.sort_by(|a, b| a.1.frequency_ghz.total_cmp(&b.1.frequency_ghz));
    Ok(rows.into_iter().map(|(_, s, p)| (s, p)).collect())
}

pub fn parse_sparams(text: &str) -> Result<Vec<SParamSet>, NetcalError> {
    Ok(parse_sparams_annotated(text)?.into_iter().map(|(s, _)| s).collect())
}

pub fn load_sparams(path: impl AsRef<Path>) -> Result<Vec<SParamSet>, NetcalError> {
    parse_sparams(&read(path.as_ref())?)
}

pub fn load_sparams_annotated(
    path: impl AsRef<Path>,
) -> Result<Vec<(SParamSet, Option<PublishedCorrection>)>, NetcalError> {
    parse_sparams_annotated(&read(path.as_ref())?)
}

fn read(path: &Path) -> Result<String, NetcalError> {
    std::fs::read_to_string(path)
        .map_err(|source| NetcalError::Io { path: path.display().to_string(), source })
}

/// Serializes rows in the format accepted by [`parse_sparams`]. Values round-trip exactly.
pub fn write_sparams(sets: &[SParamSet]) -> String {
    let mut out = String::from("# freq_ghz s31_db s31_deg s32_db s32_deg sa1_db sa1_deg sb2_db sb2_deg\n");
    for s in sets {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            s.frequency_ghz,
            s.s31.mag_db,
            s.s31.phase_deg,
            s.s32.mag_db,
            s.s32.phase_deg,
            s.sa1.mag_db,
            s.sa1.phase_deg,
            s.sb2.mag_db,
            s.sb2.phase_deg
        );
    }
    out
}
