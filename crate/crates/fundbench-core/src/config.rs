//! TOML application configuration: run parameters, risk and data knobs,
//! market and LLM provider profiles, the model price table, and paths.
//! Unknown keys are rejected and parse errors carry line/column locations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::domain::{AnalystKind, Ticker};
use crate::llm::{
    HttpLlmConfig, HttpLlmProvider, LlmError, LlmGateway, ModelPrice, ModelProfile, ScriptedStub,
};
use crate::market::{ClockMode, HttpProviderConfig, MarketError, MarketGateway, ProviderProfile};
use crate::metrics::MetricParams;
use crate::workflow::{DataParams, PlannerMode, RiskParams, RunConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config parse error in {path}:\n{message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown provider {0:?}")]
    UnknownProvider(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub run: RunSection,
    #[serde(default)]
    pub risk: RiskParams,
    #[serde(default)]
    pub data: DataParams,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub market: MarketSection,
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub log: LogSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Default run id; the --run-id flag overrides it.
    #[serde(default)]
    pub id: Option<String>,
    pub universe: Vec<Ticker>,
    #[serde(default = "default_initial_cash")]
    pub initial_cash: rust_decimal::Decimal,
    pub start_date: chrono::NaiveDate,
    pub end_date: chrono::NaiveDate,
    #[serde(default = "default_planner_mode")]
    pub planner_mode: PlannerMode,
    pub analysts: Vec<AnalystKind>,
    #[serde(default = "default_memory_size")]
    pub decision_memory_size: usize,
    #[serde(default = "default_true")]
    pub parallel_analysts: bool,
    pub model: ModelProfile,
}

fn default_initial_cash() -> rust_decimal::Decimal {
    rust_decimal::Decimal::from(100_000)
}

fn default_planner_mode() -> PlannerMode {
    PlannerMode::Deterministic
}

fn default_memory_size() -> usize {
    crate::domain::DEFAULT_DECISION_MEMORY_SIZE
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(default = "default_fixtures_dir")]
    pub fixtures: PathBuf,
    #[serde(default = "default_runs_dir")]
    pub runs: PathBuf,
}

fn default_fixtures_dir() -> PathBuf {
    PathBuf::from("fixtures")
}

fn default_runs_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection { fixtures: default_fixtures_dir(), runs: default_runs_dir() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    /// "replay" or the name of an entry under [market.providers].
    #[serde(default = "default_replay")]
    pub provider: String,
    #[serde(default)]
    pub providers: BTreeMap<String, HttpProviderConfig>,
}

fn default_replay() -> String {
    "replay".to_string()
}

impl Default for MarketSection {
    fn default() -> Self {
        MarketSection { provider: default_replay(), providers: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    /// "stub" or the name of an entry under [llm.providers].
    #[serde(default = "default_stub")]
    pub provider: String,
    /// Stub script (JSON Lines), replayed when provider = "stub".
    #[serde(default)]
    pub script: Option<PathBuf>,
    /// Requests per minute; 0 disables rate limiting.
    #[serde(default)]
    pub rate_limit_per_minute: u32,
    #[serde(default)]
    pub providers: BTreeMap<String, HttpLlmConfig>,
    #[serde(default)]
    pub prices: BTreeMap<String, ModelPrice>,
}

fn default_stub() -> String {
    "stub".to_string()
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection {
            provider: default_stub(),
            script: None,
            rate_limit_per_minute: 0,
            providers: BTreeMap::new(),
            prices: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "default_risk_free")]
    pub risk_free_annual: f64,
    #[serde(default = "default_periods")]
    pub periods_per_year: u32,
}

fn default_risk_free() -> f64 {
    0.0429
}

fn default_periods() -> u32 {
    252
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            risk_free_annual: default_risk_free(),
            periods_per_year: default_periods(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSection {
    #[serde(default = "default_log_level")]
    pub level: String,
}

fn default_log_level() -> String {
    "info".to_string()
}

impl Default for LogSection {
    fn default() -> Self {
        LogSection { level: default_log_level() }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: AppConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.run.universe.is_empty() {
            return Err(ConfigError::Invalid("run.universe must be non-empty".into()));
        }
        if self.run.analysts.is_empty() {
            return Err(ConfigError::Invalid("run.analysts must be non-empty".into()));
        }
        if self.run.start_date > self.run.end_date {
            return Err(ConfigError::Invalid(
                "run.start_date must not be after run.end_date".into(),
            ));
        }
        if self.market.provider != "replay"
            && !self.market.providers.contains_key(&self.market.provider)
        {
            return Err(ConfigError::UnknownProvider(self.market.provider.clone()));
        }
        if self.llm.provider != "stub" && !self.llm.providers.contains_key(&self.llm.provider) {
            return Err(ConfigError::UnknownProvider(self.llm.provider.clone()));
        }
        Ok(())
    }

    /// Resolves the run configuration, with CLI overrides applied.
    pub fn run_config(&self, run_id_override: Option<&str>) -> Result<RunConfig, ConfigError> {
        let run_id = run_id_override
            .map(str::to_string)
            .or_else(|| self.run.id.clone())
            .ok_or_else(|| {
                ConfigError::Invalid("no run id: set run.id in config or pass --run-id".into())
            })?;
        Ok(RunConfig {
            run_id,
            universe: self.run.universe.clone(),
            initial_cash: self.run.initial_cash,
            start_date: self.run.start_date,
            end_date: self.run.end_date,
            planner_mode: self.run.planner_mode,
            analyst_set: self.run.analysts.clone(),
            model_profile: self.run.model.clone(),
            decision_memory_size: self.run.decision_memory_size,
            risk: self.risk.clone(),
            data: self.data.clone(),
            parallel_analysts: self.run.parallel_analysts,
        })
    }

    /// Builds the market gateway for the chosen mode: replay serves fixtures;
    /// live requires a configured HTTP provider profile.
    pub fn build_market_gateway(
        &self,
        mode: ClockMode,
        fixtures_override: Option<&Path>,
    ) -> Result<MarketGateway, ConfigError> {
        let profile = match mode {
            ClockMode::Replay => ProviderProfile::Replay {
                fixtures_dir: fixtures_override
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| self.paths.fixtures.clone()),
            },
            ClockMode::Live => {
                let name = &self.market.provider;
                let http = self.market.providers.get(name).ok_or_else(|| {
                    ConfigError::UnknownProvider(format!(
                        "{name} (live mode needs an entry under [market.providers])"
                    ))
                })?;
                ProviderProfile::Http(http.clone())
            }
        };
        Ok(MarketGateway::register_provider(&profile)?)
    }

    /// Builds the LLM gateway: the scripted stub (optionally loaded from a
    /// script file) or a configured HTTP provider.
    pub fn build_llm_gateway(&self) -> Result<LlmGateway, ConfigError> {
        let gateway = if self.llm.provider == "stub" {
            let stub = match &self.llm.script {
                Some(path) => ScriptedStub::from_script_file(path)
                    .map_err(ConfigError::Invalid)?,
                None => ScriptedStub::new(),
            };
            LlmGateway::new(Box::new(stub), self.run.model.clone())
        } else {
            let http_config = self
                .llm
                .providers
                .get(&self.llm.provider)
                .ok_or_else(|| ConfigError::UnknownProvider(self.llm.provider.clone()))?;
            let provider = HttpLlmProvider::new(http_config.clone())?;
            LlmGateway::new(Box::new(provider), self.run.model.clone())
        };
        let gateway = gateway.with_prices(self.llm.prices.clone());
        Ok(if self.llm.rate_limit_per_minute > 0 {
            gateway.with_rate_limit(self.llm.rate_limit_per_minute)
        } else {
            gateway
        })
    }

    pub fn metric_params(&self) -> MetricParams {
        MetricParams {
            risk_free_annual: self.metrics.risk_free_annual,
            periods_per_year: self.metrics.periods_per_year,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rust_decimal_macros::dec;

    const MINIMAL: &str = r#"
[run]
universe = ["AAPL", "CVX"]
start_date = "2025-03-17"
end_date = "2025-04-17"
analysts = ["Technical", "CompanyNews", "Policy", "Insider"]

[run.model]
provider_id = "stub"
model_id = "stub-default"
"#;

    #[test]
    fn minimal_config_gets_engine_defaults() {
        let config = AppConfig::parse(MINIMAL, "test").unwrap();
        assert_eq!(config.run.initial_cash, dec!(100000));
        assert_eq!(config.run.decision_memory_size, 5);
        assert_eq!(config.run.model.temperature, 0.5);
        assert_eq!(config.run.model.max_retries, 3);
        assert_eq!(config.risk.tilt_factor, dec!(0.5));
        assert_eq!(config.risk.max_weight, dec!(0.30));
        assert_eq!(config.data.technical_window, 100);
        assert_eq!(config.data.news_count, 10);
        assert_eq!(config.metrics.risk_free_annual, 0.0429);
        assert_eq!(config.metrics.periods_per_year, 252);
        assert!(config.run.parallel_analysts);

        let rc = config.run_config(Some("demo")).unwrap();
        assert_eq!(rc.run_id, "demo");
        assert_eq!(rc.universe.len(), 2);

        // No id anywhere is an error.
        assert!(matches!(config.run_config(None), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let bad = format!("{MINIMAL}\nmystery_knob = 3\n");
        let err = AppConfig::parse(&bad, "test.toml").unwrap_err();
        let message = err.to_string();
        assert!(message.contains("mystery_knob") || message.contains("unknown field"), "{message}");
        assert!(message.contains("line"), "{message}");
        assert!(message.contains("test.toml"));
    }

    #[test]
    fn unknown_provider_names_are_rejected() {
        let bad = MINIMAL.to_string() + "\n[market]\nprovider = \"bloomberg\"\n";
        assert!(matches!(
            AppConfig::parse(&bad, "test"),
            Err(ConfigError::UnknownProvider(_))
        ));

        let bad = MINIMAL.to_string() + "\n[llm]\nprovider = \"axiom\"\n";
        assert!(matches!(
            AppConfig::parse(&bad, "test"),
            Err(ConfigError::UnknownProvider(_))
        ));
    }

    #[test]
    fn live_mode_requires_http_provider_profile() {
        let config = AppConfig::parse(MINIMAL, "test").unwrap();
        assert!(matches!(
            config.build_market_gateway(ClockMode::Live, None),
            Err(ConfigError::UnknownProvider(_))
        ));
    }

    #[test]
    fn live_llm_requires_credential() {
        let with_provider = MINIMAL.to_string()
            + r#"
[llm]
provider = "remote"

[llm.providers.remote]
endpoint = "https://example.invalid/v1/chat"
api_key_env = "FUNDBENCH_CONFIG_TEST_KEY"
"#;
        let config = AppConfig::parse(&with_provider, "test").unwrap();
        std::env::remove_var("FUNDBENCH_CONFIG_TEST_KEY");
        assert!(matches!(
            config.build_llm_gateway(),
            Err(ConfigError::Llm(LlmError::MissingCredential(_)))
        ));
    }

    #[test]
    fn prices_and_risk_parse_from_strings() {
        let text = MINIMAL.to_string()
            + r#"
[risk]
tilt_factor = "0.5"
max_weight = "0.7433"

[llm.prices."stub-default"]
prompt_per_1k = "0.002"
completion_per_1k = "0.008"
"#;
        let config = AppConfig::parse(&text, "test").unwrap();
        assert_eq!(config.risk.max_weight, dec!(0.7433));
        assert_eq!(config.llm.prices["stub-default"].prompt_per_1k, dec!(0.002));
    }
}
