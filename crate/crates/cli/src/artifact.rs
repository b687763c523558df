use std::fmt;
use std::path::Path;

use clap::ValueEnum;
use clv_core::average::{MonetizationCurve, RetentionCurve};
use clv_core::btyd::{BgNbdParams, GammaGammaParams, ParetoNbdParams};
use clv_core::markov::{StateSpace, TransitionMatrix};
use clv_core::supervised::{FittedForest, ThreeStageModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Version of the artifact layout; artifacts with another version are refused.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModelKind {
    Basic,
    Retention,
    Monetization,
    #[value(alias = "pareto-nbd")]
    ParetoNbd,
    #[value(alias = "bg-nbd")]
    BgNbd,
    #[value(alias = "gamma-gamma")]
    GammaGamma,
    Markov,
    Forest,
    #[value(alias = "three-stage")]
    ThreeStage,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_possible_value().expect("no skipped variants");
        f.write_str(v.get_name())
    }
}

/// Cohort margin and retention for the basic formula; horizon and discount
/// rate are supplied at prediction time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicModel {
    pub gc: f64,
    pub marketing_cost: f64,
    pub retention: f64,
    pub period_days: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetentionModel {
    pub curve: RetentionCurve<f64>,
    pub arpdau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonetizationModel {
    pub curve: MonetizationCurve<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovModel {
    pub space: StateSpace,
    pub matrix: TransitionMatrix<f64>,
    pub rewards: Vec<f64>,
    pub period_days: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisedModel<M> {
    pub model: M,
    /// Behaviour window and target horizon used for feature extraction.
    pub window_days: f64,
    pub target_days: f64,
    pub categorical: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", content = "params", rename_all = "snake_case")]
pub enum ModelParams {
    Basic(BasicModel),
    Retention(RetentionModel),
    Monetization(MonetizationModel),
    ParetoNbd(ParetoNbdParams<f64>),
    BgNbd(BgNbdParams<f64>),
    GammaGamma(GammaGammaParams<f64>),
    Markov(MarkovModel),
    Forest(SupervisedModel<FittedForest>),
    ThreeStage(SupervisedModel<ThreeStageModel>),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Basic(_) => ModelKind::Basic,
            ModelParams::Retention(_) => ModelKind::Retention,
            ModelParams::Monetization(_) => ModelKind::Monetization,
            ModelParams::ParetoNbd(_) => ModelKind::ParetoNbd,
            ModelParams::BgNbd(_) => ModelKind::BgNbd,
            ModelParams::GammaGamma(_) => ModelKind::GammaGamma,
            ModelParams::Markov(_) => ModelKind::Markov,
            ModelParams::Forest(_) => ModelKind::Forest,
            ModelParams::ThreeStage(_) => ModelKind::ThreeStage,
        }
    }
}

/// Goodness of fit as reported by the fitting routine.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub n_customers: usize,
    pub nll: Option<f64>,
    pub rss: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub penalizer: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    /// SHA-256 of the input files, in argument order.
    pub data_fingerprint: String,
    pub tool_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub model: ModelParams,
    pub fit: FitSummary,
    pub metadata: Metadata,
}

impl ModelArtifact {
    pub fn new(model: ModelParams, fit: FitSummary, seed: u64, data_fingerprint: String) -> Self {
        ModelArtifact {
            schema_version: SCHEMA_VERSION,
            model,
            fit,
            metadata: Metadata { seed, data_fingerprint, tool_version: env!("CARGO_PKG_VERSION").to_string() },
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses an artifact, checking the schema version before the body.
    pub fn from_json(s: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(s);
        de.disable_recursion_limit();
        let value = serde_json::Value::deserialize(&mut de)?;
        de.end()?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(CliError::data(format!(
                    "artifact has schema version {v}, but this build reads version {SCHEMA_VERSION}"
                )))
            }
            None => return Err(CliError::data("artifact has no schema_version field")),
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }
}

/// Hex SHA-256 over the given byte strings.
pub fn fingerprint<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    format!("{:x}", h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_checked() {
        let a = ModelArtifact::new(
            ModelParams::GammaGamma(GammaGammaParams { p: 6.0, q: 4.0, gamma: 0.1 + 0.2 }),
            FitSummary::default(),
            3,
            fingerprint([b"x".as_slice()]),
        );
        let json = a.to_json().unwrap();
        assert_eq!(ModelArtifact::from_json(&json).unwrap(), a);
        let bumped = json.replace("\"schema_version\": 1", "\"schema_version\": 2");
        let err = ModelArtifact::from_json(&bumped).unwrap_err().to_string();
        assert!(err.contains("schema version 2"), "{err}");
    }

    #[test]
    fn kind_names_match_serde() {
        for k in ModelKind::value_variants() {
            assert_eq!(serde_json::to_string(k).unwrap(), format!("\"{k}\""));
        }
    }
}
