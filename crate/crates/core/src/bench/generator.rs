use serde::{Deserialize, Serialize};

use crate::phasor::{dbm_to_amplitude, wrap_360, Phasor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Primary,
    Secondary,
}

/// Front-panel state of one generator plus the phase accumulated by past frequency trims.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorState {
    pub role: Role,
    pub frequency_hz: f64,
    /// Power setting, dBm.
    pub power: f64,
    /// Phase setting, degrees on `[0, 360)`.
    pub phase_setting: f64,
    /// Operator frequency offset, Hz.
    pub freq_trim: f64,
    /// Actual output level minus the power setting, dB.
    pub level_error_db: f64,
    trim_phase: f64,
    trim_epoch: f64,
}

impl GeneratorState {
    pub fn new(role: Role, frequency_hz: f64, power: f64) -> Self {
        assert!(frequency_hz > 0.0, "generator frequency must be positive");
        GeneratorState {
            role,
            frequency_hz,
            power,
            phase_setting: 0.0,
            freq_trim: 0.0,
            level_error_db: 0.0,
            trim_phase: 0.0,
            trim_epoch: 0.0,
        }
    }

    pub fn set_phase(&mut self, deg: f64) {
        self.phase_setting = wrap_360(deg);
    }

    /// Changes the frequency trim at time `t`, keeping the phase continuous.
    pub fn set_trim(&mut self, t: f64, hz: f64) {
        self.trim_phase = wrap_360(self.trim_ramp(t));
        self.trim_epoch = t;
        self.freq_trim = hz;
    }

    /// Phase accumulated by frequency trims up to time `t`, degrees (unwrapped).
    pub fn trim_ramp(&self, t: f64) -> f64 {
        self.trim_phase + 360.0 * self.freq_trim * (t - self.trim_epoch)
    }

    pub fn amplitude(&self) -> f64 {
        dbm_to_amplitude(self.power + self.level_error_db)
    }
}

/// Deterministic phase drift of the secondary generator relative to the primary.
///
/// `offset(t) = initial + rate(f)·t + wander·sin(2πt / wander_period)`, where the rate
/// scales with the carrier when `proportional` is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftModel {
    /// Drift rate at `ref_frequency_hz`, degrees per second.
    pub rate_at_ref: f64,
    pub ref_frequency_hz: f64,
    pub proportional: bool,
    pub initial_offset: f64,
    /// Amplitude of a slow sinusoidal wander superimposed on the linear drift, degrees.
    pub wander: f64,
    pub wander_period_s: f64,
}

impl Default for DriftModel {
    fn default() -> Self {
        DriftModel {
            rate_at_ref: 0.05,
            ref_frequency_hz: 3e9,
            proportional: true,
            initial_offset: 0.0,
            wander: 0.0,
            wander_period_s: 60.0,
        }
    }
}

impl DriftModel {
    pub fn none() -> Self {
        DriftModel { rate_at_ref: 0.0, ..DriftModel::default() }
    }

    pub fn linear(rate_deg_per_s: f64, ref_frequency_hz: f64) -> Self {
        DriftModel { rate_at_ref: rate_deg_per_s, ref_frequency_hz, ..DriftModel::default() }
    }

    /// Linear drift rate at carrier `frequency_hz`, degrees per second.
    pub fn rate(&self, frequency_hz: f64) -> f64 {
        if self.proportional {
            self.rate_at_ref * frequency_hz / self.ref_frequency_hz
        } else {
            self.rate_at_ref
        }
    }

    pub fn offset(&self, frequency_hz: f64, t: f64) -> f64 {
        let mut off = self.initial_offset + self.rate(frequency_hz) * t;
        if self.wander != 0.0 && self.wander_period_s > 0.0 {
            off += self.wander * (std::f64::consts::TAU * t / self.wander_period_s).sin();
        }
        off
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = [self.rate_at_ref, self.ref_frequency_hz, self.initial_offset, self.wander, self.wander_period_s]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.ref_frequency_hz <= 0.0 || self.wander_period_s <= 0.0 {
            return Err("drift model needs finite values and positive reference frequency/period".into());
        }
        Ok(())
    }
}

/// Phasor leaving a generator at time `t`. Only the secondary drifts.
pub fn generator_phasor(gen: &GeneratorState, drift: &DriftModel, t: f64) -> Phasor {
    let mut phase = gen.phase_setting + gen.trim_ramp(t);
    if gen.role == Role::Secondary {
        phase += drift.offset(gen.frequency_hz, t);
    }
    Phasor::new(gen.amplitude(), phase)
}
