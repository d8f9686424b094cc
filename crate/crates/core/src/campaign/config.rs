use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CampaignError;
use crate::bench::BenchConfig;
use crate::dut::{DutModel, DutPoint, QuadratureSpec};
use crate::netcal::{load_sparams, SParamSet};
use crate::procedure::ProcedureConfig;

fn default_frequencies() -> Vec<f64> {
    vec![3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
}

fn default_beta_max() -> f64 {
    40.0
}

fn default_oversample() -> usize {
    crate::curve_ref::DEFAULT_OVERSAMPLE
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Directory for report.json, curve CSVs, reference files and plots.
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: None, plots: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetcalSection {
    /// S-parameter file, relative to the config file. Without one every frequency uses a
    /// lossless, phase-matched connection block.
    pub sparams: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DutSection {
    #[serde(default)]
    pub points: Vec<DutPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSection {
    /// Start every frequency point at a seeded random generator phase offset.
    #[serde(default = "yes")]
    pub initial_offset: bool,
}

impl Default for RandomSection {
    fn default() -> Self {
        RandomSection { initial_offset: true }
    }
}

/// A campaign as read from its TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default = "default_frequencies")]
    pub frequencies_ghz: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_beta_max")]
    pub beta_max: f64,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub procedure: ProcedureConfig,
    #[serde(default)]
    pub netcal: NetcalSection,
    #[serde(default)]
    pub dut: DutSection,
    #[serde(default)]
    pub random: RandomSection,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            frequencies_ghz: default_frequencies(),
            seed: 0,
            beta_max: default_beta_max(),
            oversample: default_oversample(),
            output: OutputSection::default(),
            bench: BenchConfig::default(),
            procedure: ProcedureConfig::default(),
            netcal: NetcalSection::default(),
            dut: DutSection::default(),
            random: RandomSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub line_offset_db: Option<f64>,
    pub beta_max: Option<f64>,
    pub skip_netcal: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self, CampaignError> {
        let cfg: CampaignConfig = toml::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CampaignError> {
        if let Some(v) = o.line_offset_db {
            self.procedure.line_offset_db = v;
        }
        if let Some(v) = o.beta_max {
            self.beta_max = v;
        }
        if o.skip_netcal {
            self.procedure.skip_network_corrections = true;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.output.dir = Some(v.clone());
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let err = |m: String| Err(CampaignError::Config(m));
        if self.frequencies_ghz.is_empty() {
            return err("no frequencies".into());
        }
        if let Some(f) = self.frequencies_ghz.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
            return err(format!("bad frequency {f}"));
        }
        if self.oversample == 0 {
            return err("oversample must be at least 1".into());
        }
        self.quadrature_spec()?;
        self.bench.validate().map_err(|e| CampaignError::Config(e.to_string()))?;
        self.procedure.validate().map_err(|e| CampaignError::Config(e.to_string()))?;
        DutModel::new(self.dut.points.clone()).map_err(|e| CampaignError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn quadrature_spec(&self) -> Result<QuadratureSpec, CampaignError> {
        QuadratureSpec::new(self.beta_max).map_err(CampaignError::Config)
    }

    pub fn dut_model(&self) -> DutModel {
        DutModel { points: self.dut.points.clone() }
    }
}

/// A config file together with everything it references.
#[derive(Clone, Debug)]
pub struct LoadedCampaign {
    pub config: CampaignConfig,
    /// Raw text, hashed into the report provenance.
    pub text: String,
    /// S-parameter rows, or `None` for an ideal connection block.
    pub sparams: Option<Vec<SParamSet>>,
}

impl LoadedCampaign {
    pub fn from_text(text: &str, base_dir: &Path, overrides: &Overrides) -> Result<Self, CampaignError> {
        let mut config = CampaignConfig::from_toml(text)?;
        config.apply(overrides)?;
        let sparams = match &config.netcal.sparams {
            Some(p) => Some(load_sparams(base_dir.join(p))?),
            None => None,
        };
        Ok(LoadedCampaign { config, text: text.to_string(), sparams })
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CampaignError::Io { path: path.display().to_string(), source })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_text(&text, base, overrides)
    }
}
