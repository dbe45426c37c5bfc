use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BridgeModel, ReversionSpec, TimeFn};
use crate::error::{Error, Result};

/// Source rate as written in a model file: `{a0, a1}` or `{a}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SourceConfig {
    Affine { a0: f64, a1: f64 },
    Constant { a: f64 },
}

/// Volatility as written in a model file: `{kappa0, kappa1}` (squared
/// volatility) or `{sigma}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum VolConfig {
    Affine { kappa0: f64, kappa1: f64 },
    Constant { sigma: f64 },
}

/// On-disk model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub m: f64,
    pub source: SourceConfig,
    pub vol: VolConfig,
    pub reversion: ReversionSpec,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid model file: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_model(&self) -> Result<BridgeModel> {
        let source = match self.source {
            SourceConfig::Affine { a0, a1 } => TimeFn::Affine { c0: a0, c1: a1 },
            SourceConfig::Constant { a } => TimeFn::Constant(a),
        };
        let vol_sq = match self.vol {
            VolConfig::Affine { kappa0, kappa1 } => TimeFn::Affine {
                c0: kappa0,
                c1: kappa1,
            },
            VolConfig::Constant { sigma } => TimeFn::Constant(sigma * sigma),
        };
        let model = BridgeModel {
            name: self.name.clone(),
            horizon: self.horizon,
            source,
            vol_sq,
            reversion: self.reversion.clone(),
            m: self.m,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn from_model(model: &BridgeModel) -> Self {
        let source = match model.source {
            TimeFn::Affine { c0, c1 } => SourceConfig::Affine { a0: c0, a1: c1 },
            TimeFn::Constant(a) => SourceConfig::Constant { a },
        };
        let vol = match model.vol_sq {
            TimeFn::Affine { c0, c1 } => VolConfig::Affine {
                kappa0: c0,
                kappa1: c1,
            },
            TimeFn::Constant(s) => VolConfig::Constant { sigma: s.sqrt() },
        };
        Self {
            name: model.name.clone(),
            description: None,
            horizon: model.horizon,
            m: model.m,
            source,
            vol,
            reversion: model.reversion.clone(),
        }
    }
}

impl BridgeModel {
    /// Parses and validates a JSON model description.
    pub fn from_json(text: &str) -> Result<Self> {
        ModelConfig::from_json(text)?.to_model()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ModelConfig::load(path)?.to_model()
    }
}
