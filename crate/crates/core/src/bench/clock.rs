use serde::{Deserialize, Serialize};

/// Kinds of operator action on the bench, each with its own duration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    SwitchPress,
    /// Any generator front-panel entry: phase, power or frequency (one or several at once).
    GeneratorSetting,
    Pushbutton,
    BananaReconnect,
    Potentiometer,
    SaRead,
}

/// Duration of each action kind, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionCosts {
    pub switch_press: f64,
    pub generator_setting: f64,
    pub pushbutton: f64,
    pub banana_reconnect: f64,
    pub potentiometer: f64,
    pub sa_read: f64,
}

impl Default for ActionCosts {
    fn default() -> Self {
        ActionCosts {
            switch_press: 1.0,
            generator_setting: 1.0,
            pushbutton: 1.0,
            banana_reconnect: 1.0,
            potentiometer: 1.0,
            sa_read: 0.0,
        }
    }
}

impl ActionCosts {
    pub fn uniform(cost: f64) -> Self {
        ActionCosts {
            switch_press: cost,
            generator_setting: cost,
            pushbutton: cost,
            banana_reconnect: cost,
            potentiometer: cost,
            sa_read: 0.0,
        }
    }

    pub fn cost(&self, kind: ActionKind) -> f64 {
        match kind {
            ActionKind::SwitchPress => self.switch_press,
            ActionKind::GeneratorSetting => self.generator_setting,
            ActionKind::Pushbutton => self.pushbutton,
            ActionKind::BananaReconnect => self.banana_reconnect,
            ActionKind::Potentiometer => self.potentiometer,
            ActionKind::SaRead => self.sa_read,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.switch_press,
            self.generator_setting,
            self.pushbutton,
            self.banana_reconnect,
            self.potentiometer,
            self.sa_read,
        ];
        if all.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(())
        } else {
            Err("action costs must be finite and non-negative".into())
        }
    }
}

/// Virtual simulation time in seconds. Never decreases.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchClock {
    now: f64,
    costs: ActionCosts,
}

impl BenchClock {
    pub fn new(costs: ActionCosts) -> Self {
        BenchClock { now: 0.0, costs }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn costs(&self) -> &ActionCosts {
        &self.costs
    }

    /// Advances by the cost of `kind` and returns the new time.
    pub fn perform(&mut self, kind: ActionKind) -> f64 {
        self.advance(self.costs.cost(kind))
    }

    /// Advances by `dt` seconds; negative or NaN durations are ignored.
    pub fn advance(&mut self, dt: f64) -> f64 {
        if dt > 0.0 {
            self.now += dt;
        }
        self.now
    }
}
