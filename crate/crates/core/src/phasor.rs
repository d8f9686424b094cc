//! Phasor arithmetic, dBm conversions and the null-technique relations between
//! combiner output power and the amplitude/phase deviation of the secondary
//! generator.
//!
//! Angles are stored in degrees everywhere; radians only appear transiently
//! inside trigonometric evaluation.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PhasorError {
    #[error("invalid deviation pair: {0}")]
    InvalidDeviation(String),
    #[error("no phase deviation produces {ratio_db} dB with s = {s_db} dB")]
    NoSolution { ratio_db: f64, s_db: f64 },
}

/// Wraps an angle in degrees onto `[0, 360)`.
pub fn wrap_360(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid can return exactly 360.0 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Wraps an angle in degrees onto `(-180, 180]`.
pub fn wrap_180(deg: f64) -> f64 {
    let w = wrap_360(deg);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Absolute angular distance between two angles, in `[0, 180]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    wrap_180(a - b).abs()
}

/// A level in decibels that may be exactly minus infinity (a perfect null).
///
/// Ordering puts `NegInfinity` below every finite value.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum Level {
    NegInfinity,
    Finite(f64),
}

/// Power in dBm.
pub type PowerDbm = Level;

impl Level {
    /// Power in dBm from a linear power in milliwatts.
    pub fn from_milliwatts(mw: f64) -> Self {
        if mw <= 0.0 {
            Level::NegInfinity
        } else {
            Level::Finite(10.0 * mw.log10())
        }
    }

    /// dB value of a linear power ratio.
    pub fn from_power_ratio(ratio: f64) -> Self {
        Self::from_milliwatts(ratio)
    }

    pub fn to_milliwatts(self) -> f64 {
        match self {
            Level::NegInfinity => 0.0,
            Level::Finite(db) => 10f64.powf(db / 10.0),
        }
    }

    /// The value as `f64`, with `NegInfinity` mapped to IEEE `-inf`.
    pub fn value(self) -> f64 {
        match self {
            Level::NegInfinity => f64::NEG_INFINITY,
            Level::Finite(v) => v,
        }
    }

    pub fn is_neg_infinity(self) -> bool {
        matches!(self, Level::NegInfinity)
    }

    pub fn max(self, other: Level) -> Level {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Subtracts a finite number of dB.
    pub fn minus_db(self, db: f64) -> Level {
        match self {
            Level::NegInfinity => Level::NegInfinity,
            Level::Finite(v) => Level::Finite(v - db),
        }
    }

    /// `self - other` in dB. `-inf - finite` is `-inf`; anything minus `-inf` is not defined
    /// and returns `None`.
    pub fn ratio_to(self, other: Level) -> Option<Level> {
        match (self, other) {
            (_, Level::NegInfinity) => None,
            (Level::NegInfinity, _) => Some(Level::NegInfinity),
            (Level::Finite(a), Level::Finite(b)) => Some(Level::Finite(a - b)),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match (self, f.precision()) {
            (Level::NegInfinity, _) => "-inf".to_string(),
            (Level::Finite(v), Some(p)) => format!("{v:.p$}"),
            (Level::Finite(v), None) => format!("{v}"),
        };
        // `pad` would treat the precision as a truncation length, so apply the width by hand
        match f.width() {
            Some(w) if f.align() == Some(fmt::Alignment::Left) => write!(f, "{text:<w$}"),
            Some(w) => write!(f, "{text:>w$}"),
            None => f.write_str(&text),
        }
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Level::NegInfinity => serializer.serialize_str("-inf"),
            Level::Finite(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) => Ok(Level::Finite(v)),
            Repr::Text(s) if s == "-inf" => Ok(Level::NegInfinity),
            Repr::Text(s) => Err(serde::de::Error::custom(format!("bad level {s:?}"))),
        }
    }
}

/// Complex amplitude in linear volts with a phase in degrees on `[0, 360)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phasor {
    amplitude: f64,
    phase: f64,
}

impl Phasor {
    /// Builds a phasor. A negative amplitude is folded into a 180° phase flip.
    pub fn new(amplitude: f64, phase_deg: f64) -> Self {
        if amplitude < 0.0 {
            Phasor { amplitude: -amplitude, phase: wrap_360(phase_deg + 180.0) }
        } else {
            Phasor { amplitude, phase: wrap_360(phase_deg) }
        }
    }

    pub fn zero() -> Self {
        Phasor { amplitude: 0.0, phase: 0.0 }
    }

    pub fn from_complex(z: Complex64) -> Self {
        let amplitude = z.norm();
        if amplitude == 0.0 {
            return Phasor::zero();
        }
        Phasor::new(amplitude, z.arg().to_degrees())
    }

    pub fn to_complex(self) -> Complex64 {
        // exact on the axes so that e.g. equal antiphase waves cancel to zero
        let (sin, cos) = match self.phase {
            0.0 => (0.0, 1.0),
            90.0 => (1.0, 0.0),
            180.0 => (0.0, -1.0),
            270.0 => (-1.0, 0.0),
            p => p.to_radians().sin_cos(),
        };
        Complex64::new(self.amplitude * cos, self.amplitude * sin)
    }

    pub fn amplitude(self) -> f64 {
        self.amplitude
    }

    pub fn phase(self) -> f64 {
        self.phase
    }

    /// Rotates by `deg` degrees.
    pub fn rotate(self, deg: f64) -> Self {
        Phasor::new(self.amplitude, self.phase + deg)
    }

    /// Scales the amplitude by `db` decibels (voltage).
    pub fn gain_db(self, db: f64) -> Self {
        Phasor::new(self.amplitude * 10f64.powf(db / 20.0), self.phase)
    }


    /// Power in dBm of a phasor whose amplitude follows [`dbm_to_amplitude`].
    pub fn power_dbm(self) -> PowerDbm {
        Level::from_milliwatts(amplitude_to_milliwatts(self.amplitude))
    }
}

/// Amplitudes multiply, phases add.
impl std::ops::Mul for Phasor {
    type Output = Phasor;

    fn mul(self, other: Phasor) -> Phasor {
        Phasor::new(self.amplitude * other.amplitude, self.phase + other.phase)
    }
}

impl std::ops::Add for Phasor {
    type Output = Phasor;

    fn add(self, other: Phasor) -> Phasor {
        Phasor::from_complex(self.to_complex() + other.to_complex())
    }
}

/// Amplitude and phase deviation of the secondary generator relative to the primary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationPair {
    /// Amplitude ratio `(A + ΔA) / A` in dB.
    pub s: f64,
    /// Phase deviation of the secondary in degrees, `(-180, 180]`.
    pub delta_theta_s: f64,
}

impl DeviationPair {
    pub fn new(s: f64, delta_theta_s: f64) -> Result<Self, PhasorError> {
        if !s.is_finite() {
            return Err(PhasorError::InvalidDeviation(format!("s = {s} is not finite")));
        }
        if !delta_theta_s.is_finite() {
            return Err(PhasorError::InvalidDeviation(format!(
                "delta_theta_s = {delta_theta_s} is not finite"
            )));
        }
        Ok(DeviationPair { s, delta_theta_s: wrap_180(delta_theta_s) })
    }

    /// ΔA for a primary amplitude `a`.
    pub fn delta_amplitude(&self, a: f64) -> f64 {
        (10f64.powf(self.s / 20.0) - 1.0) * a
    }
}

/// Peak amplitude in volts of a generator set to `a` dBm: `10^(a/20 - 1/2)`.
pub fn dbm_to_amplitude(a: f64) -> f64 {
    10f64.powf(a / 20.0 - 0.5)
}

/// Inverse of [`dbm_to_amplitude`] expressed as a linear power in milliwatts.
fn amplitude_to_milliwatts(amplitude: f64) -> f64 {
    10.0 * amplitude * amplitude
}

/// Phasor at the combiner output: the primary contributes at `theta_m`, the secondary
/// at `Δθ_S` with amplitude `A + ΔA`.
pub fn combiner_output(a: f64, dev: DeviationPair, theta_m: f64) -> Phasor {
    let amp = dbm_to_amplitude(a);
    let primary = Phasor::new(amp, theta_m);
    let secondary = Phasor::new(amp + dev.delta_amplitude(amp), dev.delta_theta_s);
    primary + secondary
}

/// Ratio in dB between the minimum (θ_M = 180°) and maximum (θ_M = 0°) combiner power.
pub fn null_ratio_db(a: f64, dev: DeviationPair) -> Level {
    let amp = dbm_to_amplitude(a);
    let da = dev.delta_amplitude(amp);
    let half = (dev.delta_theta_s / 2.0).to_radians();
    // 1 - cos θ = 2 sin²(θ/2) and 1 + cos θ = 2 cos²(θ/2), which avoids cancellation
    let cross = 2.0 * amp * (amp + da);
    let num = da * da + cross * 2.0 * half.sin().powi(2);
    let den = da * da + cross * 2.0 * half.cos().powi(2);
    if num == 0.0 {
        return Level::NegInfinity;
    }
    Level::from_power_ratio(num / den)
}

/// Largest phase deviation, in degrees, compatible with a measured null ratio `r` (dB)
/// and amplitude imbalance `s` (dB). Solved by bisection on `[0°, 90°]`.
pub fn phase_error_bound(r: f64, s: f64) -> Result<f64, PhasorError> {
    let no_solution = || PhasorError::NoSolution { ratio_db: r, s_db: s };
    if !r.is_finite() || !s.is_finite() || r >= 0.0 {
        return Err(no_solution());
    }
    // independent of the absolute level, so evaluate at 0 dBm
    let ratio = |theta: f64| null_ratio_db(0.0, DeviationPair { s, delta_theta_s: theta }).value();
    let (mut lo, mut hi) = (0.0_f64, 90.0_f64);
    if r < ratio(lo) || r > ratio(hi) {
        return Err(no_solution());
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
