//! Switched dual-multiplier phase detector.
//!
//! Input `a` carries the secondary generator, input `b` the primary. The detector
//! multiplies the direct path (I×I) or the hybrid-shifted path (Q×I) and keeps the
//! low-frequency term. With `Δ = phase(b) - phase(a)`:
//!
//! ```text
//! I×I: gain_i · (A_a·A_b / 2) · r(Δ)                 + offset_i
//! Q×I: gain_q · (A_a·A_b / 2) · r(Δ - hybrid_shift)  + offset_q
//! r(x) = cos x + h2·cos 2x + h3·cos 3x
//! ```
//!
//! The phase shift between the two curves, `θ_Q×I - θ_I×I`, is therefore the hybrid
//! shift itself (+90° in quadrature).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netcal::FREQ_TOLERANCE_GHZ;
use crate::phasor::{wrap_360, Phasor};

#[derive(Debug, Error, PartialEq)]
pub enum DutError {
    #[error("detector model has no entry at {0} GHz")]
    UnknownFrequency(f64),
    #[error("invalid detector entry at {freq_ghz} GHz: {msg}")]
    Invalid { freq_ghz: f64, msg: String },
}

/// Which product the detector outputs (the banana connector position).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorMode {
    IxI,
    QxI,
}

impl fmt::Display for DetectorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            DetectorMode::IxI => "IxI",
            DetectorMode::QxI => "QxI",
        })
    }
}

impl FromStr for DetectorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ixi" | "i" => Ok(DetectorMode::IxI),
            "qxi" | "q" => Ok(DetectorMode::QxI),
            other => Err(format!("unknown detector mode {other:?}")),
        }
    }
}

/// Detector behaviour at one frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DutPoint {
    pub freq_ghz: f64,
    /// Hybrid phase shift of the Q path in degrees, nominally 90.
    #[serde(default = "default_shift")]
    pub hybrid_shift_deg: f64,
    #[serde(default = "default_gain")]
    pub gain_i: f64,
    #[serde(default = "default_gain")]
    pub gain_q: f64,
    #[serde(default)]
    pub offset_i: f64,
    #[serde(default)]
    pub offset_q: f64,
    /// Second-harmonic fraction of the response.
    #[serde(default)]
    pub h2: f64,
    /// Third-harmonic fraction of the response.
    #[serde(default)]
    pub h3: f64,
}

fn default_shift() -> f64 {
    90.0
}

fn default_gain() -> f64 {
    20.0
}

impl DutPoint {
    /// Ideal quadrature detector with equal gains and no offsets.
    pub fn ideal(freq_ghz: f64, gain: f64) -> Self {
        DutPoint {
            freq_ghz,
            hybrid_shift_deg: 90.0,
            gain_i: gain,
            gain_q: gain,
            offset_i: 0.0,
            offset_q: 0.0,
            h2: 0.0,
            h3: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DutError> {
        let bad = |msg: String| Err(DutError::Invalid { freq_ghz: self.freq_ghz, msg });
        if !(self.hybrid_shift_deg > 0.0 && self.hybrid_shift_deg < 180.0) {
            return bad(format!("hybrid shift {} outside (0, 180)", self.hybrid_shift_deg));
        }
        if !(self.gain_i > 0.0 && self.gain_q > 0.0) {
            return bad("gains must be positive".into());
        }
        if !(self.offset_i.is_finite() && self.offset_q.is_finite() && self.h2.is_finite() && self.h3.is_finite()) {
            return bad("non-finite offset or harmonic".into());
        }
        Ok(())
    }

    /// Normalized response `r(x)` for an argument in degrees.
    pub fn response(&self, x_deg: f64) -> f64 {
        let x = x_deg.to_radians();
        x.cos() + self.h2 * (2.0 * x).cos() + self.h3 * (3.0 * x).cos()
    }

    /// Output for a given input phase difference and amplitude product.
    pub fn output(&self, delta_deg: f64, amp_product: f64, mode: DetectorMode) -> f64 {
        match mode {
            DetectorMode::IxI => self.gain_i * amp_product / 2.0 * self.response(delta_deg) + self.offset_i,
            DetectorMode::QxI => {
                self.gain_q * amp_product / 2.0 * self.response(delta_deg - self.hybrid_shift_deg) + self.offset_q
            }
        }
    }

    pub fn detect(&self, input_a: Phasor, input_b: Phasor, mode: DetectorMode) -> f64 {
        let delta = wrap_360(input_b.phase() - input_a.phase());
        self.output(delta, input_a.amplitude() * input_b.amplitude(), mode)
    }
}

/// Per-frequency detector model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DutModel {
    pub points: Vec<DutPoint>,
}

impl DutModel {
    pub fn new(points: Vec<DutPoint>) -> Result<Self, DutError> {
        for p in &points {
            p.validate()?;
        }
        Ok(DutModel { points })
    }

    pub fn point(&self, f_ghz: f64) -> Result<&DutPoint, DutError> {
        self.points
            .iter()
            .find(|p| (p.freq_ghz - f_ghz).abs() <= FREQ_TOLERANCE_GHZ)
            .ok_or(DutError::UnknownFrequency(f_ghz))
    }

    pub fn detect(
        &self,
        f_ghz: f64,
        input_a: Phasor,
        input_b: Phasor,
        mode: DetectorMode,
    ) -> Result<f64, DutError> {
        Ok(self.point(f_ghz)?.detect(input_a, input_b, mode))
    }

    /// The I/Q phase shift the characterization must recover at `f_ghz`.
    pub fn ground_truth_shift(&self, f_ghz: f64) -> Result<f64, DutError> {
        Ok(self.point(f_ghz)?.hybrid_shift_deg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "YES")]
    Yes,
    #[serde(rename = "NO")]
    No,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Verdict::Yes => "YES",
            Verdict::No => "NO",
        })
    }
}

/// Acceptance half-width around quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub beta_max: f64,
}

impl QuadratureSpec {
    pub fn new(beta_max: f64) -> Result<Self, String> {
        if beta_max > 0.0 && beta_max < 90.0 {
            Ok(QuadratureSpec { beta_max })
        } else {
            Err(format!("beta_max {beta_max} outside (0, 90)"))
        }
    }
}

/// YES iff the shift lies in the closed interval `[90 - β_max, 90 + β_max]`.
pub fn quadrature_check(shift_deg: f64, spec: QuadratureSpec) -> Verdict {
    let s = wrap_360(shift_deg);
    if s >= 90.0 - spec.beta_max && s <= 90.0 + spec.beta_max {
        Verdict::Yes
    } else {
        Verdict::No
    }
}
