//! Run configuration. Frequencies are given in Hz and converted to angular
//! frequencies with `ω = 2π f`.

use std::path::{Path, PathBuf};

use cqed_cluster::dynamics::{
    ModelTier, PhysicalParams, DEFAULT_CAVITY_TRUNCATION, DEFAULT_DRIVE_TO_CAVITY_DETUNING, DEFAULT_MODE_TRUNCATION,
    LAB_COUPLING_HZ, LAB_LIFETIME_S, LAB_OMEGA_0_HZ, LAB_OMEGA_1_HZ, TWO_PI,
};
use cqed_cluster::protocol::{FusionMode, ProtocolConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub omega_0_hz: f64,
    pub omega_1_hz: f64,
    pub g_coupling_hz: f64,
    pub n_atoms: usize,
    /// Cavity detuning in units of `g√N`; ignored when `delta_c_hz` is set.
    pub dispersive_ratio: f64,
    pub delta_c_hz: Option<f64>,
    /// Drive detuning in units of the cavity detuning; ignored when
    /// `delta_l_hz` is set.
    pub delta_l_over_delta_c: f64,
    pub delta_l_hz: Option<f64>,
    /// Solve the drive strength from the resonance condition.
    pub auto_resonance: bool,
    /// Drive strength when `auto_resonance` is off.
    pub rabi_hz: Option<f64>,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self {
            omega_0_hz: LAB_OMEGA_0_HZ,
            omega_1_hz: LAB_OMEGA_1_HZ,
            g_coupling_hz: LAB_COUPLING_HZ,
            n_atoms: 10,
            dispersive_ratio: 20.0,
            delta_c_hz: None,
            delta_l_over_delta_c: DEFAULT_DRIVE_TO_CAVITY_DETUNING,
            delta_l_hz: None,
            auto_resonance: true,
            rabi_hz: None,
        }
    }
}

impl ParamsConfig {
    pub fn build(&self) -> Result<PhysicalParams, CliError> {
        self.build_with(self.n_atoms, None)
    }

    /// Parameters for `n_atoms`, optionally overriding the dispersive ratio.
    pub fn build_with(&self, n_atoms: usize, ratio: Option<f64>) -> Result<PhysicalParams, CliError> {
        if n_atoms == 0 {
            return Err(CliError::Config("n_atoms must be at least 1".into()));
        }
        let g = TWO_PI * self.g_coupling_hz;
        let omega_0 = TWO_PI * self.omega_0_hz;
        let omega_1 = TWO_PI * self.omega_1_hz;
        let delta_c = match (ratio, self.delta_c_hz) {
            (Some(r), _) => r * g * (n_atoms as f64).sqrt(),
            (None, Some(hz)) => TWO_PI * hz,
            (None, None) => self.dispersive_ratio * g * (n_atoms as f64).sqrt(),
        };
        let delta_l = match self.delta_l_hz {
            Some(hz) => TWO_PI * hz,
            None => self.delta_l_over_delta_c * delta_c,
        };
        let params = match (self.auto_resonance, self.rabi_hz) {
            (true, Some(_)) => {
                return Err(CliError::Config(
                    "rabi_hz conflicts with auto_resonance; drop one of them".into(),
                ))
            }
            (true, None) => PhysicalParams::from_detunings(omega_0, omega_1, g, n_atoms, delta_c, delta_l, None)?,
            (false, None) => {
                return Err(CliError::Config("rabi_hz is required when auto_resonance is off".into()))
            }
            (false, Some(hz)) => PhysicalParams::new(
                omega_0,
                omega_1,
                omega_0 - delta_c,
                omega_0 - delta_l,
                TWO_PI * hz,
                g,
                n_atoms,
                true,
            )?,
        };
        Ok(params)
    }
}

/// Where a fusion input comes from: a freshly generated chain of `k` nodes
/// or a modes-only snapshot written by `chain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,
}

impl Default for ChainSource {
    fn default() -> Self {
        Self {
            k: Some(2),
            snapshot: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub chain_a: ChainSource,
    pub chain_b: ChainSource,
    pub node_a: usize,
    pub node_b: usize,
    pub trials: usize,
    /// `"+,-"` style outcome path; sampling when absent.
    pub postselect: Option<String>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            chain_a: ChainSource::default(),
            chain_b: ChainSource::default(),
            node_a: 0,
            node_b: 0,
            trials: 10_000,
            postselect: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub ratios: Vec<f64>,
    pub k: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_values: vec![5, 10, 20],
            ratios: vec![10.0, 20.0, 40.0],
            k: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: ParamsConfig,
    pub k: usize,
    pub tier: ModelTier,
    pub mode_truncation: usize,
    pub cavity_truncation: usize,
    pub leakage_bound: f64,
    pub residual_bound: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub zone_overhead_s: f64,
    pub lifetime_s: f64,
    pub fusion: FusionConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let numerics = ProtocolConfig::default();
        Self {
            params: ParamsConfig::default(),
            k: 4,
            tier: ModelTier::AnalyticJC,
            mode_truncation: DEFAULT_MODE_TRUNCATION,
            cavity_truncation: DEFAULT_CAVITY_TRUNCATION,
            leakage_bound: numerics.leakage_bound,
            residual_bound: numerics.residual_bound,
            seed: 0,
            out: PathBuf::from("out"),
            zone_overhead_s: 0.0,
            lifetime_s: LAB_LIFETIME_S,
            fusion: FusionConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trials: Option<usize>,
    pub postselect: Option<String>,
    pub tier: Option<ModelTier>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_json(&text)?
            }
            None => Self::default(),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(out) = &overrides.out {
            config.out = out.clone();
        }
        if let Some(trials) = overrides.trials {
            config.fusion.trials = trials;
        }
        if let Some(path) = &overrides.postselect {
            config.fusion.postselect = Some(path.clone());
        }
        if let Some(tier) = overrides.tier {
            config.tier = tier;
        }
        Ok(config)
    }

    pub fn numerics(&self) -> ProtocolConfig {
        ProtocolConfig {
            mode_truncation: self.mode_truncation,
            cavity_truncation: self.cavity_truncation,
            leakage_bound: self.leakage_bound,
            residual_bound: self.residual_bound,
        }
    }

    pub fn fusion_mode(&self) -> Result<Option<FusionMode>, CliError> {
        match &self.fusion.postselect {
            Some(spec) => Ok(Some(FusionMode::parse_path(spec)?)),
            None => Ok(None),
        }
    }
}
