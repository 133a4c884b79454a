use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use rust_decimal::Decimal;
use serde::Deserialize;

use qualkg::corpus::CorpusConfig;
use qualkg::cost::{Approach, ApproachCost, CostModel};
use qualkg::llm::HttpConfig;

use crate::failure::Failure;

/// Contents of `--config FILE`. Every section and key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<CorpusConfig>,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub llm: LlmSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub as_is: Option<Effort>,
    pub rag: Option<Effort>,
    pub vkg_llm: Option<Effort>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Effort {
    pub setup_person_days: Option<Number>,
    pub per_component_minutes: Option<Number>,
}

/// TOML numbers and numeric strings, read as exact decimals.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Number {
    fn decimal(&self, key: &str) -> Result<Decimal, Failure> {
        let text = match self {
            Number::Int(i) => i.to_string(),
            Number::Float(f) => f.to_string(),
            Number::Text(s) => s.trim().to_string(),
        };
        Decimal::from_str(&text).map_err(|_| Failure::data("invalid_config", format!("`{key}` is not a number: `{text}`")))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    pub concurrency: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub k: Option<usize>,
    pub subset: Option<usize>,
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_in_flight: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::data("invalid_config", format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::data("invalid_config", format!("{}: {e}", path.display())))
    }

    pub fn cost_model(&self) -> Result<CostModel, Failure> {
        let mut model = CostModel::default();
        let sections = [
            (&self.cost.as_is, &mut model.as_is, Approach::AsIs, "as_is"),
            (&self.cost.rag, &mut model.rag, Approach::Rag, "rag"),
            (&self.cost.vkg_llm, &mut model.vkg, Approach::VkgLlm, "vkg_llm"),
        ];
        for (section, target, name, label) in sections {
            let Some(effort) = section else { continue };
            let setup = match &effort.setup_person_days {
                Some(n) => n.decimal(&format!("cost.{label}.setup_person_days"))?,
                None => target.setup_person_days,
            };
            let minutes = match &effort.per_component_minutes {
                Some(n) => n.decimal(&format!("cost.{label}.per_component_minutes"))?,
                None => target.per_component_minutes,
            };
            *target = ApproachCost::new(name, setup, minutes)?;
        }
        model.validate()?;
        Ok(model)
    }

    /// Environment first, then the `[llm]` section on top.
    pub fn http_config(&self) -> Result<HttpConfig, Failure> {
        let mut cfg = match (&self.llm.endpoint, HttpConfig::from_env()) {
            (_, Ok(cfg)) => cfg,
            (Some(endpoint), Err(_)) => HttpConfig::new(endpoint.clone()),
            (None, Err(e)) => return Err(Failure::Usage(format!("--llm http needs an endpoint: {e}"))),
        };
        if let Some(endpoint) = &self.llm.endpoint {
            cfg.endpoint = endpoint.clone();
        }
        if let Some(model) = &self.llm.model {
            cfg.model = model.clone();
        }
        if let Some(secs) = self.llm.timeout_secs {
            cfg.timeout = Duration::from_secs(secs);
        }
        if let Some(n) = self.llm.max_in_flight {
            cfg.max_in_flight = n;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections() {
        let cfg: FileConfig = toml::from_str(
            r#"
            [corpus]
            n_components = 300
            pn_missing_rate = 0.05

            [cost.vkg_llm]
            setup_person_days = 80
            per_component_minutes = "4.5"

            [limits]
            concurrency = 2
            "#,
        )
        .unwrap();
        let corpus = cfg.corpus.clone().unwrap();
        assert_eq!(corpus.n_components, 300);
        assert_eq!(corpus.n_manufacturers, CorpusConfig::default().n_manufacturers);
        let model = cfg.cost_model().unwrap();
        assert_eq!(model.vkg.setup_person_days, Decimal::from(80));
        assert_eq!(model.vkg.per_component_minutes, Decimal::new(45, 1));
        assert_eq!(model.as_is, ApproachCost::as_is());
        assert_eq!(cfg.limits.concurrency, Some(2));
    }

    #[test]
    fn unknown_keys_and_bad_numbers_are_refused() {
        assert!(toml::from_str::<FileConfig>("[limits]\nspeed = 3\n").is_err());
        let cfg: FileConfig = toml::from_str("[cost.rag]\nsetup_person_days = \"ten\"\n").unwrap();
        assert!(cfg.cost_model().is_err());
        let cfg: FileConfig = toml::from_str("[cost.rag]\nsetup_person_days = -1\n").unwrap();
        assert!(cfg.cost_model().is_err());
    }
}
