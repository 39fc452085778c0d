//! Run configuration: every tunable of a rollout in one TOML or JSON file.
//!
//! Unknown keys are rejected and deserialization errors carry the path of
//! the offending field. Every output artifact records [`RunConfig::hash`].

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{ControllerConfig, GrfSolverKind};
use crate::env::{EnvConfig, EnvSetup, HeuristicConfig};
use crate::error::{Error, Result};
use crate::gait::{GaitConfig, GaitName, StanceWindow, FIXED_STEPPING_FREQUENCY};
use crate::model::{RobotModel, NUM_LEGS};
use crate::sim::SimConfig;

/// A gait preset with optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitSection {
    pub preset: GaitName,
    /// Per-leg stance windows in radians; replaces the preset's sequence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stance_windows: Option<[Vec<StanceWindow>; NUM_LEGS]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default_frequency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequency_bounds: Option<[f64; 2]>,
}

impl Default for GaitSection {
    fn default() -> Self {
        GaitSection {
            preset: GaitName::Pronking,
            stance_windows: None,
            default_frequency: None,
            frequency_bounds: None,
        }
    }
}

impl GaitSection {
    pub fn resolve(&self) -> Result<GaitConfig> {
        let mut gait = GaitConfig::preset(self.preset);
        if let Some(w) = &self.stance_windows {
            gait.stance_windows = w.clone();
            gait.name = GaitName::Custom;
        }
        if let Some(f) = self.default_frequency {
            gait.default_frequency = f;
        }
        if let Some(b) = self.frequency_bounds {
            gait.frequency_bounds = b;
        }
        gait.validate()?;
        Ok(gait)
    }
}

/// Ablation flags, each removing one component of the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Pin the stepping frequency.
    pub no_gait: bool,
    /// Drop the policy's swing residuals.
    pub no_swing: bool,
    /// Drop the swing reference trajectory.
    pub no_swing_ref: bool,
    /// Solve stance forces with the constrained QP.
    pub qp_mode: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationVariant {
    NoGait,
    NoSwing,
    NoSwingRef,
    Qp,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::NoGait,
        AblationVariant::NoSwing,
        AblationVariant::NoSwingRef,
        AblationVariant::Qp,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name.replace('-', "_").as_str() {
            "no_gait" => AblationVariant::NoGait,
            "no_swing" => AblationVariant::NoSwing,
            "no_swing_ref" => AblationVariant::NoSwingRef,
            "qp" | "qp_mode" => AblationVariant::Qp,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::NoGait => "no_gait",
            AblationVariant::NoSwing => "no_swing",
            AblationVariant::NoSwingRef => "no_swing_ref",
            AblationVariant::Qp => "qp",
        }
    }

    pub fn overlay(self, ablation: &mut Ablation) {
        match self {
            AblationVariant::NoGait => ablation.no_gait = true,
            AblationVariant::NoSwing => ablation.no_swing = true,
            AblationVariant::NoSwingRef => ablation.no_swing_ref = true,
            AblationVariant::Qp => ablation.qp_mode = true,
        }
    }
}

impl Ablation {
    pub fn apply(&self, setup: &mut EnvSetup) {
        if self.no_gait {
            setup.env.fixed_frequency = Some(FIXED_STEPPING_FREQUENCY);
        }
        if self.no_swing {
            setup.controller.swing_residuals = false;
        }
        if self.no_swing_ref {
            setup.controller.swing_reference = false;
        }
        if self.qp_mode {
            setup.controller.grf_solver = GrfSolverKind::Qp;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub robot: RobotModel,
    pub gait: GaitSection,
    pub controller: ControllerConfig,
    pub sim: SimConfig,
    pub env: EnvConfig,
    pub policy: HeuristicConfig,
    pub ablation: Ablation,
}

fn path_error<E: std::fmt::Display>(err: serde_path_to_error::Error<E>) -> Error {
    let path = err.path().to_string();
    Error::Config {
        path: if path.is_empty() || path == "." { "<root>".into() } else { path },
        message: err.inner().to_string(),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(path_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(path_error)?;
        de.end().map_err(|e| Error::config("<root>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.setup_unchecked()?.validate()
    }

    fn setup_unchecked(&self) -> Result<EnvSetup> {
        let mut setup = EnvSetup {
            model: self.robot.clone(),
            controller: self.controller.clone(),
            gait: self.gait.resolve()?,
            sim: self.sim.clone(),
            env: self.env.clone(),
        };
        self.ablation.apply(&mut setup);
        Ok(setup)
    }

    /// Resolved environment with the ablation flags applied.
    pub fn env_setup(&self) -> Result<EnvSetup> {
        let setup = self.setup_unchecked()?;
        setup.validate()?;
        Ok(setup)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("run config serializes to JSON");
        hex::encode(Sha256::digest(&json))
    }
}
