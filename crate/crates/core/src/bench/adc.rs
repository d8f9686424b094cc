//! Voltage adjustment circuit (VAC) and the 10-bit converter behind it.

use serde::{Deserialize, Serialize};

use super::clock::BenchClock;
use super::BenchError;

/// Supply rails of the VAC output; anything outside is clamped.
pub const VAC_RAIL_LOW: f64 = 0.0;
pub const VAC_RAIL_HIGH: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcConfig {
    pub full_scale: f64,
    pub bits: u32,
    pub sample_rate_hz: f64,
    pub buffer_len: usize,
    /// When false the converter is ideal: volts pass through unquantized (codes are still reported).
    pub quantize: bool,
}

impl Default for AdcConfig {
    fn default() -> Self {
        AdcConfig { full_scale: 5.0, bits: 10, sample_rate_hz: 2800.0, buffer_len: 280, quantize: true }
    }
}

impl AdcConfig {
    pub fn max_code(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    pub fn lsb(&self) -> f64 {
        self.full_scale / self.max_code() as f64
    }

    pub fn dequantize(&self, code: u32) -> f64 {
        code as f64 * self.lsb()
    }

    /// Volts delivered to the procedure for an input `v`: dequantized code, or the clamped input
    /// itself for an ideal converter.
    pub fn reading(&self, v: f64) -> (u32, f64) {
        let code = adc_sample(self, v);
        if self.quantize {
            (code, self.dequantize(code))
        } else {
            (code, v.clamp(0.0, self.full_scale))
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.full_scale > 0.0) || self.bits == 0 || self.bits > 24 {
            return Err(BenchError::Config(format!("bad converter scale/bits: {self:?}")));
        }
        if !(self.sample_rate_hz > 0.0) || self.buffer_len < 2 {
            return Err(BenchError::Config(format!("bad converter rate/length: {self:?}")));
        }
        Ok(())
    }
}

/// Converter code for `v`: `round(v / full_scale · (2^bits - 1))`, clamped.
pub fn adc_sample(cfg: &AdcConfig, v: f64) -> u32 {
    let max = cfg.max_code();
    if v.is_nan() {
        return 0;
    }
    let code = (v / cfg.full_scale * max as f64).round();
    code.clamp(0.0, max as f64) as u32
}

/// `V_d = (V_ref + V_in)/2 · (1 + R1/(R2 + R3))`, where R2 is the potentiometer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VacConfig {
    pub v_ref: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    /// Travel of the R2 potentiometer.
    pub r2_max: f64,
}

impl Default for VacConfig {
    fn default() -> Self {
        VacConfig { v_ref: 2.5, r1: 10_000.0, r2: 10_000.0, r3: 1_000.0, r2_max: 100_000.0 }
    }
}

impl VacConfig {
    pub fn gain(&self) -> Result<f64, BenchError> {
        let div = self.r2 + self.r3;
        if !(div > 0.0) {
            return Err(BenchError::InvalidDivider);
        }
        Ok(1.0 + self.r1 / div)
    }

    /// Gain range reachable with the potentiometer.
    pub fn gain_range(&self) -> (f64, f64) {
        (1.0 + self.r1 / (self.r2_max + self.r3), 1.0 + self.r1 / self.r3.max(f64::MIN_POSITIVE))
    }

    /// R2 setting producing `gain`, limited to the potentiometer travel.
    pub fn r2_for_gain(&self, gain: f64) -> f64 {
        if gain <= 1.0 {
            return self.r2_max;
        }
        (self.r1 / (gain - 1.0) - self.r3).clamp(0.0, self.r2_max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VacOutput {
    pub volts: f64,
    pub clamped: bool,
}

pub fn vac_transfer(cfg: &VacConfig, v_in: f64) -> Result<VacOutput, BenchError> {
    let raw = (cfg.v_ref + v_in) / 2.0 * cfg.gain()?;
    let volts = raw.clamp(VAC_RAIL_LOW, VAC_RAIL_HIGH);
    Ok(VacOutput { volts, clamped: volts != raw })
}

/// One converter capture buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct AdcBuffer {
    pub codes: Vec<u32>,
    pub volts: Vec<f64>,
    pub start_s: f64,
    pub sample_rate_hz: f64,
}

/// Samples `source(t)` `buffer_len` times at the converter rate, starting at the current clock
/// time, and advances the clock by the buffer duration.
///
/// Fails when the buffer would not cover more than one period of `beat_hz`.
pub fn acquire_buffer(
    cfg: &AdcConfig,
    mut source: impl FnMut(f64) -> f64,
    clock: &mut BenchClock,
    beat_hz: f64,
) -> Result<AdcBuffer, BenchError> {
    cfg.validate()?;
    let span = cfg.buffer_len as f64 / cfg.sample_rate_hz;
    if !(span * beat_hz > 1.0) {
        return Err(BenchError::Config(format!(
            "{} samples at {} Hz cover {:.3} periods of {} Hz, need more than one",
            cfg.buffer_len,
            cfg.sample_rate_hz,
            span * beat_hz,
            beat_hz
        )));
    }
    let start = clock.now();
    let (codes, volts) = (0..cfg.buffer_len)
        .map(|i| cfg.reading(source(start + i as f64 / cfg.sample_rate_hz)))
        .unzip();
    clock.advance(span);
    Ok(AdcBuffer { codes, volts, start_s: start, sample_rate_hz: cfg.sample_rate_hz })
}
