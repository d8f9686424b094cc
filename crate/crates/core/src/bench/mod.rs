//! Discrete-time model of the measurement bench: two generators, the switched
//! connection block, combiner + spectrum analyzer, the detector, VAC and ADC.
//!
//! Every operator action advances the shared clock by its cost *before* it takes
//! effect, so a reading taken by an action sees the bench at the end of the action.

pub mod adc;
pub mod clock;
pub mod generator;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dut::{DetectorMode, DutError, DutPoint};
use crate::netcal::{apply_network, NetworkOutput, SParamSet};
use crate::phasor::{wrap_180, Level, Phasor, PowerDbm};

pub use adc::{acquire_buffer, adc_sample, vac_transfer, AdcBuffer, AdcConfig, VacConfig, VacOutput};
pub use clock::{ActionCosts, ActionKind, BenchClock};
pub use generator::{generator_phasor, DriftModel, GeneratorState, Role};

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("invalid switch state {0}, expected 1 or 2")]
    InvalidSwitchState(u8),
    #[error("VAC divider R2 + R3 must be positive")]
    InvalidDivider,
    #[error("bench configuration: {0}")]
    Config(String),
    #[error("operation needs the switches {expected:?}, they are {actual:?}")]
    WrongRoute { expected: Route, actual: Route },
    #[error(transparent)]
    Dut(#[from] DutError),
}

/// Where the two switches send the generator waves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    /// State 1: port 1 → a, port 2 → b.
    Dut,
    /// State 2: ports 1 and 2 → combiner output 3.
    Combiner,
}

impl Route {
    /// `(source port, destination port)` pairs.
    pub fn descriptor(self) -> [(char, char); 2] {
        match self {
            Route::Dut => [('1', 'a'), ('2', 'b')],
            Route::Combiner => [('1', '3'), ('2', '3')],
        }
    }

    pub fn state(self) -> u8 {
        match self {
            Route::Dut => 1,
            Route::Combiner => 2,
        }
    }
}

pub fn switch_route(state: u8) -> Result<Route, BenchError> {
    match state {
        1 => Ok(Route::Dut),
        2 => Ok(Route::Combiner),
        s => Err(BenchError::InvalidSwitchState(s)),
    }
}

/// Ideal power meter: phasor power, never below the noise floor.
pub fn sa_measure(p: Phasor, noise_floor: f64) -> PowerDbm {
    p.power_dbm().max(Level::Finite(noise_floor))
}

/// Static description of a bench. All keys are optional in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub drift: DriftModel,
    pub costs: ActionCosts,
    pub adc: AdcConfig,
    pub vac: VacConfig,
    /// Spectrum analyzer noise floor, dBm.
    pub noise_floor_dbm: f64,
    /// Power setting of both generators at the start of a point, dBm.
    pub generator_power_dbm: f64,
    /// Output level error of the primary generator, dB.
    pub primary_level_error_db: f64,
    /// Output level error of the secondary generator, dB.
    pub secondary_level_error_db: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            drift: DriftModel::default(),
            costs: ActionCosts::default(),
            adc: AdcConfig::default(),
            vac: VacConfig::default(),
            noise_floor_dbm: -90.0,
            generator_power_dbm: 0.0,
            primary_level_error_db: 0.0,
            secondary_level_error_db: 0.0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        self.drift.validate().map_err(BenchError::Config)?;
        self.costs.validate().map_err(BenchError::Config)?;
        self.adc.validate()?;
        self.vac.gain()?;
        let finite = [
            self.noise_floor_dbm,
            self.generator_power_dbm,
            self.primary_level_error_db,
            self.secondary_level_error_db,
        ];
        if !finite.iter().all(|v| v.is_finite()) {
            return Err(BenchError::Config("levels must be finite".into()));
        }
        Ok(())
    }
}

/// A generator front-panel entry. Several entries made at once cost one action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GenSetting {
    Phase(Role, f64),
    Power(Role, f64),
    Trim(Role, f64),
}

/// One pushbutton capture: a single converter sample of the VAC output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdcReading {
    pub time_s: f64,
    pub code: u32,
    pub volts: f64,
    pub clamped: bool,
}

/// The bench at one test frequency.
#[derive(Clone, Debug)]
pub struct Bench {
    cfg: BenchConfig,
    network: SParamSet,
    dut: DutPoint,
    clock: BenchClock,
    route: Route,
    mode: DetectorMode,
    primary: GeneratorState,
    secondary: GeneratorState,
    /// Secondary phase correction currently dialed in on top of the null setting.
    phase_correction: f64,
}

impl Bench {
    pub fn new(cfg: BenchConfig, network: SParamSet, dut: DutPoint) -> Result<Self, BenchError> {
        cfg.validate()?;
        dut.validate()?;
        let f_hz = network.frequency_ghz * 1e9;
        if !(f_hz > 0.0) {
            return Err(BenchError::Config(format!("bad frequency {} GHz", network.frequency_ghz)));
        }
        let mut primary = GeneratorState::new(Role::Primary, f_hz, cfg.generator_power_dbm);
        primary.level_error_db = cfg.primary_level_error_db;
        primary.set_phase(180.0);
        let mut secondary = GeneratorState::new(Role::Secondary, f_hz, cfg.generator_power_dbm);
        secondary.level_error_db = cfg.secondary_level_error_db;
        Ok(Bench {
            clock: BenchClock::new(cfg.costs),
            cfg,
            network,
            dut,
            route: Route::Combiner,
            mode: DetectorMode::IxI,
            primary,
            secondary,
            phase_correction: 0.0,
        })
    }

    pub fn config(&self) -> &BenchConfig {
        &self.cfg
    }

    pub fn network(&self) -> &SParamSet {
        &self.network
    }

    pub fn dut(&self) -> &DutPoint {
        &self.dut
    }

    pub fn frequency_ghz(&self) -> f64 {
        self.network.frequency_ghz
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    pub fn route(&self) -> Route {
        self.route
    }

    pub fn mode(&self) -> DetectorMode {
        self.mode
    }

    pub fn vac(&self) -> &VacConfig {
        &self.cfg.vac
    }

    pub fn generator(&self, role: Role) -> &GeneratorState {
        match role {
            Role::Primary => &self.primary,
            Role::Secondary => &self.secondary,
        }
    }

    fn generator_mut(&mut self, role: Role) -> &mut GeneratorState {
        match role {
            Role::Primary => &mut self.primary,
            Role::Secondary => &mut self.secondary,
        }
    }

    /// Waits without touching anything.
    pub fn wait(&mut self, dt: f64) -> f64 {
        self.clock.advance(dt)
    }

    /// Presses both switches into `route`. A no-op if already there.
    pub fn press_switches(&mut self, route: Route) {
        if self.route != route {
            self.clock.perform(ActionKind::SwitchPress);
            self.route = route;
        }
    }

    /// Enters one or more generator settings as a single front-panel action.
    pub fn set_generators(&mut self, settings: &[GenSetting]) {
        if settings.is_empty() {
            return;
        }
        let t = self.clock.perform(ActionKind::GeneratorSetting);
        for s in settings {
            match *s {
                GenSetting::Phase(role, deg) => self.generator_mut(role).set_phase(deg),
                GenSetting::Power(role, dbm) => self.generator_mut(role).power = dbm,
                GenSetting::Trim(role, hz) => self.generator_mut(role).set_trim(t, hz),
            }
        }
    }

    /// Dials a secondary phase correction on top of the current setting (or removes it with 0),
    /// together with a primary power setting, as one action.
    pub fn set_corrected(&mut self, phase_correction: f64, primary_power: f64) {
        let base = self.secondary.phase_setting - self.phase_correction;
        self.set_generators(&[
            GenSetting::Phase(Role::Secondary, base + phase_correction),
            GenSetting::Power(Role::Primary, primary_power),
        ]);
        self.phase_correction = phase_correction;
    }

    /// Moves the banana connector to select the detector product.
    pub fn connect_banana(&mut self, mode: DetectorMode) {
        if self.mode != mode {
            self.clock.perform(ActionKind::BananaReconnect);
            self.mode = mode;
        }
    }

    /// Turns the VAC potentiometers (gain and reference).
    pub fn adjust_vac(&mut self, vac: VacConfig) -> Result<(), BenchError> {
        vac.gain()?;
        self.clock.perform(ActionKind::Potentiometer);
        self.cfg.vac = vac;
        Ok(())
    }

    fn outputs_at(&self, t: f64) -> NetworkOutput {
        let port1 = generator_phasor(&self.secondary, &self.cfg.drift, t);
        let port2 = generator_phasor(&self.primary, &self.cfg.drift, t);
        apply_network(&self.network, self.route, port1, port2)
    }

    /// Detector output before the VAC at time `t` (DUT route only).
    pub fn detector_volts_at(&self, t: f64) -> Result<f64, BenchError> {
        match self.outputs_at(t) {
            NetworkOutput::Dut { a, b } => Ok(self.dut.detect(a, b, self.mode)),
            NetworkOutput::Combiner(_) => {
                Err(BenchError::WrongRoute { expected: Route::Dut, actual: Route::Combiner })
            }
        }
    }

    /// VAC output at time `t`.
    pub fn vac_volts_at(&self, t: f64) -> Result<VacOutput, BenchError> {
        vac_transfer(&self.cfg.vac, self.detector_volts_at(t)?)
    }

    /// Pushbutton: captures one converter sample of the VAC output.
    pub fn press_pushbutton(&mut self) -> Result<AdcReading, BenchError> {
        let t = self.clock.perform(ActionKind::Pushbutton);
        let out = self.vac_volts_at(t)?;
        let (code, volts) = self.cfg.adc.reading(out.volts);
        Ok(AdcReading { time_s: t, code, volts, clamped: out.clamped })
    }

    /// Captures a full converter buffer of the VAC output.
    /// Returns the buffer and whether any sample hit a VAC rail.
    pub fn acquire(&mut self, beat_hz: f64) -> Result<(AdcBuffer, bool), BenchError> {
        // validate the route up front so the closure below cannot fail
        self.detector_volts_at(self.clock.now())?;
        let mut clamped = false;
        let this = &*self;
        let mut clock = self.clock.clone();
        let buf = acquire_buffer(
            &self.cfg.adc,
            |t| {
                let out = this.vac_volts_at(t).expect("route checked");
                clamped |= out.clamped;
                out.volts
            },
            &mut clock,
            beat_hz,
        )?;
        self.clock = clock;
        Ok((buf, clamped))
    }

    /// Raw detector output sampled like a scope trace, without the VAC or clock cost.
    pub fn scope_trace(&self, duration_s: f64, points: usize) -> Result<Vec<f64>, BenchError> {
        let t0 = self.clock.now();
        let n = points.max(2);
        (0..n)
            .map(|i| self.detector_volts_at(t0 + duration_s * i as f64 / (n - 1) as f64))
            .collect()
    }

    fn combiner_phasor(&self, t: f64, theta_s: f64, primary: f64) -> Phasor {
        let mut sec = self.secondary.clone();
        sec.set_phase(theta_s);
        let mut prim = self.primary.clone();
        prim.power = primary;
        let p1 = generator_phasor(&sec, &self.cfg.drift, t);
        let p2 = generator_phasor(&prim, &self.cfg.drift, t);
        match apply_network(&self.network, Route::Combiner, p1, p2) {
            NetworkOutput::Combiner(p) => p,
            NetworkOutput::Dut { .. } => unreachable!(),
        }
    }

    /// SA reading at the combiner output with the current settings.
    pub fn read_sa(&mut self) -> Result<PowerDbm, BenchError> {
        if self.route != Route::Combiner {
            return Err(BenchError::WrongRoute { expected: Route::Combiner, actual: self.route });
        }
        let t = self.clock.perform(ActionKind::SaRead);
        Ok(sa_measure(
            self.combiner_phasor(t, self.secondary.phase_setting, self.primary.power),
            self.cfg.noise_floor_dbm,
        ))
    }

    /// What the SA would show right now for a trial secondary phase and primary power.
    ///
    /// Models the operator turning a knob while watching the trace: no settings change
    /// and no time passes.
    pub fn probe(&self, theta_s: f64, primary_power: f64) -> PowerDbm {
        let p = self.combiner_phasor(self.clock.now(), theta_s, primary_power);
        sa_measure(p, self.cfg.noise_floor_dbm)
    }

    /// Ground truth: how far the secondary is from the exact combiner null with the primary
    /// at 180°, in degrees on `(-180, 180]`. Ignores any correction currently dialed in.
    pub fn null_deviation(&self) -> f64 {
        self.null_deviation_at(self.clock.now())
    }

    pub fn null_deviation_at(&self, t: f64) -> f64 {
        let base = self.secondary.phase_setting - self.phase_correction;
        let sec = base + self.secondary.trim_ramp(t) + self.cfg.drift.offset(self.secondary.frequency_hz, t);
        let prim = 180.0 + self.primary.trim_ramp(t);
        wrap_180(self.network.s31.phase_deg + sec - self.network.s32.phase_deg - prim - 180.0)
    }

    /// Ground truth on the detector route: `phase(b) - phase(a) - θ_M` on `(-180, 180]`.
    pub fn dut_phase_error(&self) -> Result<f64, BenchError> {
        match self.outputs_at(self.clock.now()) {
            NetworkOutput::Dut { a, b } => Ok(wrap_180(b.phase() - a.phase() - self.primary.phase_setting)),
            NetworkOutput::Combiner(_) => {
                Err(BenchError::WrongRoute { expected: Route::Dut, actual: Route::Combiner })
            }
        }
    }

    /// Phasors at the detector ports right now (DUT route only).
    pub fn dut_inputs(&self) -> Result<(Phasor, Phasor), BenchError> {
        match self.outputs_at(self.clock.now()) {
            NetworkOutput::Dut { a, b } => Ok((a, b)),
            NetworkOutput::Combiner(_) => {
                Err(BenchError::WrongRoute { expected: Route::Dut, actual: Route::Combiner })
            }
        }
    }
}
