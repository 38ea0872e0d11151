//! Provider-agnostic LLM client: prompt rendering for every agent role,
//! structured-output parsing with a tolerant fallback, bounded retries, token
//! cost accounting, an internal token-bucket rate limit, and a deterministic
//! scripted stub for offline runs.

mod http;
mod parse;
mod prompts;
mod stub;

pub use http::{HttpLlmConfig, HttpLlmProvider};
pub use parse::{
    parse_decision_response, parse_planner_response, parse_signal_response, ParsedDecision,
};
pub use prompts::{
    render_analyst_prompt, render_manager_prompt, render_planner_prompt, AnalystPayload,
};
pub use stub::{RandomFailure, ScriptedStub, StubCall};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::domain::{AnalystKind, Ticker};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("llm unavailable after {attempts} attempts: {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    #[error("payload mismatch: {kind} analyst given {given}")]
    PayloadMismatch { kind: AnalystKind, given: String },
    #[error("malformed signal response: {0}")]
    MalformedSignalResponse(String),
    #[error("malformed decision response: {0}")]
    MalformedDecisionResponse(String),
    #[error("malformed planner response: {0}")]
    MalformedPlannerResponse(String),
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
}

/// Which agent a completion serves. Part of the call context so scripted
/// providers can key their replays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentRole {
    Planner,
    Analyst(AnalystKind),
    Manager,
}

impl AgentRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentRole::Planner => "planner",
            AgentRole::Manager => "manager",
            AgentRole::Analyst(kind) => kind.as_str(),
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentRole {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded = s.trim().to_ascii_lowercase();
        match folded.as_str() {
            "planner" => Ok(AgentRole::Planner),
            "manager" => Ok(AgentRole::Manager),
            _ => s
                .parse::<AnalystKind>()
                .map(AgentRole::Analyst)
                .map_err(|_| format!("unknown agent role {s:?}")),
        }
    }
}

/// Routing metadata for one completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallContext {
    pub role: AgentRole,
    pub ticker: Option<Ticker>,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One completed exchange, including retry and cost accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatExchange {
    pub system_prompt: String,
    pub user_prompt: String,
    pub response_text: Option<String>,
    pub token_usage: TokenUsage,
    pub cost_estimate: Decimal,
    pub attempts: u32,
}

#[derive(Debug, Clone)]
pub struct RawCompletion {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{0}")]
pub struct ProviderCallError(pub String);

/// One model profile; temperature and retry defaults follow the engine-wide
/// parameter table (temperature 0.5, 3 retries).
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelProfile {
    pub provider_id: String,
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Base delay between retry attempts; doubles per attempt. Zero disables
    /// sleeping (used with the scripted stub).
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
}

fn default_temperature() -> f64 {
    0.5
}

fn default_max_retries() -> u32 {
    3
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_backoff_ms() -> u64 {
    1000
}

impl ModelProfile {
    pub fn stub(model_id: impl Into<String>) -> Self {
        ModelProfile {
            provider_id: "stub".to_string(),
            model_id: model_id.into(),
            temperature: default_temperature(),
            max_retries: default_max_retries(),
            timeout_secs: default_timeout_secs(),
            retry_backoff_ms: 0,
        }
    }
}

/// Per-1k-token prices used for cost estimates.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPrice {
    pub prompt_per_1k: Decimal,
    pub completion_per_1k: Decimal,
}

/// A backend able to answer one completion call. Implementations must be safe
/// under concurrent calls from parallel analyst tasks.
pub trait LlmProvider: Send + Sync {
    fn call(
        &self,
        profile: &ModelProfile,
        ctx: &CallContext,
        system_prompt: &str,
        user_prompt: &str,
    ) -> Result<RawCompletion, ProviderCallError>;
}

/// Simple token bucket; `acquire` blocks until a token is available.
pub struct TokenBucket {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(capacity: u32, refill_per_sec: f64) -> Self {
        TokenBucket {
            capacity: capacity as f64,
            refill_per_sec,
            state: Mutex::new((capacity as f64, Instant::now())),
        }
    }

    fn refill(&self, state: &mut (f64, Instant)) {
        let now = Instant::now();
        let elapsed = now.duration_since(state.1).as_secs_f64();
        state.0 = (state.0 + elapsed * self.refill_per_sec).min(self.capacity);
        state.1 = now;
    }

    pub fn try_acquire(&self) -> bool {
        let mut state = self.state.lock().expect("bucket lock");
        self.refill(&mut state);
        if state.0 >= 1.0 {
            state.0 -= 1.0;
            true
        } else {
            false
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("bucket lock");
                self.refill(&mut state);
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                assert!(
                    self.refill_per_sec > 0.0,
                    "token bucket with zero refill would block forever"
                );
                Duration::from_secs_f64((1.0 - state.0) / self.refill_per_sec)
            };
            std::thread::sleep(wait);
        }
    }
}

/// The unified completion interface: retries up to `max_retries` extra
/// attempts, tracks token usage, and prices the exchange from the model price
/// table (zero with a one-time warning for unlisted models).
pub struct LlmGateway {
    provider: Box<dyn LlmProvider>,
    profile: ModelProfile,
    prices: BTreeMap<String, ModelPrice>,
    bucket: Option<TokenBucket>,
    unpriced_warned: Mutex<BTreeSet<String>>,
}

impl LlmGateway {
    pub fn new(provider: Box<dyn LlmProvider>, profile: ModelProfile) -> Self {
        LlmGateway {
            provider,
            profile,
            prices: BTreeMap::new(),
            bucket: None,
            unpriced_warned: Mutex::new(BTreeSet::new()),
        }
    }

    pub fn with_prices(mut self, prices: BTreeMap<String, ModelPrice>) -> Self {
        self.prices = prices;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.bucket = Some(TokenBucket::new(
            requests_per_minute.max(1),
            requests_per_minute as f64 / 60.0,
        ));
        self
    }

    pub fn profile(&self) -> &ModelProfile {
        &self.profile
    }

    fn cost_for(&self, usage: TokenUsage) -> Decimal {
        match self.prices.get(&self.profile.model_id) {
            Some(price) => {
                let k = Decimal::from(1000);
                Decimal::from(usage.prompt_tokens) / k * price.prompt_per_1k
                    + Decimal::from(usage.completion_tokens) / k * price.completion_per_1k
            }
            None => {
                let mut warned = self.unpriced_warned.lock().expect("warn set lock");
                if warned.insert(self.profile.model_id.clone()) {
                    log::warn!(
                        "no price entry for model {:?}; recording zero cost",
                        self.profile.model_id
                    );
                }
                Decimal::ZERO
            }
        }
    }

    /// Completes a prompt pair. Provider calls per invocation never exceed
    /// max_retries + 1.
    pub fn complete(
        &self,
        ctx: &CallContext,
        system_prompt: &str,
        user_prompt: &str,
    ) -> Result<ChatExchange, LlmError> {
        let max_attempts = self.profile.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 1..=max_attempts {
            if let Some(bucket) = &self.bucket {
                bucket.acquire();
            }
            match self.provider.call(&self.profile, ctx, system_prompt, user_prompt) {
                Ok(raw) => {
                    let usage = raw.usage.unwrap_or_default();
                    return Ok(ChatExchange {
                        system_prompt: system_prompt.to_string(),
                        user_prompt: user_prompt.to_string(),
                        response_text: Some(raw.text),
                        token_usage: usage,
                        cost_estimate: self.cost_for(usage),
                        attempts: attempt,
                    });
                }
                Err(e) => {
                    last_error = e.0;
                    if attempt < max_attempts && self.profile.retry_backoff_ms > 0 {
                        let delay = self.profile.retry_backoff_ms << (attempt - 1);
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
            }
        }
        Err(LlmError::Unavailable {
            attempts: max_attempts,
            last_error,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rust_decimal_macros::dec;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    struct FlakyProvider {
        fail_first: u32,
        calls: Arc<AtomicU32>,
    }

    impl FlakyProvider {
        fn new(fail_first: u32) -> (Self, Arc<AtomicU32>) {
            let calls = Arc::new(AtomicU32::new(0));
            (FlakyProvider { fail_first, calls: calls.clone() }, calls)
        }
    }

    impl LlmProvider for FlakyProvider {
        fn call(
            &self,
            _profile: &ModelProfile,
            _ctx: &CallContext,
            _system: &str,
            _user: &str,
        ) -> Result<RawCompletion, ProviderCallError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(ProviderCallError("transient".into()))
            } else {
                Ok(RawCompletion {
                    text: "ok".into(),
                    usage: Some(TokenUsage { prompt_tokens: 1000, completion_tokens: 500 }),
                })
            }
        }
    }

    fn ctx() -> CallContext {
        CallContext {
            role: AgentRole::Manager,
            ticker: None,
            date: "2025-03-17".parse().unwrap(),
        }
    }

    #[test]
    fn succeeds_first_attempt() {
        let (provider, _) = FlakyProvider::new(0);
        let gw = LlmGateway::new(Box::new(provider), ModelProfile::stub("m"));
        let ex = gw.complete(&ctx(), "s", "u").unwrap();
        assert_eq!(ex.attempts, 1);
        assert_eq!(ex.response_text.as_deref(), Some("ok"));
    }

    #[test]
    fn retries_twice_then_succeeds_on_third_attempt() {
        let (provider, _) = FlakyProvider::new(2);
        let gw = LlmGateway::new(Box::new(provider), ModelProfile::stub("m"));
        let ex = gw.complete(&ctx(), "s", "u").unwrap();
        assert_eq!(ex.attempts, 3);
    }

    #[test]
    fn exhausts_retry_budget_after_max_retries_plus_one() {
        let (provider, _) = FlakyProvider::new(u32::MAX);
        let gw = LlmGateway::new(Box::new(provider), ModelProfile::stub("m"));
        let err = gw.complete(&ctx(), "s", "u").unwrap_err();
        assert_eq!(err, LlmError::Unavailable { attempts: 4, last_error: "transient".into() });
    }

    #[test]
    fn call_count_never_exceeds_bound() {
        for fail_first in [0u32, 1, 3, 10] {
            let (provider, calls) = FlakyProvider::new(fail_first);
            let gw = LlmGateway::new(Box::new(provider), ModelProfile::stub("m"));
            let _ = gw.complete(&ctx(), "s", "u");
            let made = calls.load(Ordering::SeqCst);
            assert!(made <= 4, "fail_first={fail_first} made {made} calls");
        }
    }

    #[test]
    fn prices_known_model_and_zeroes_unknown() {
        let mut prices = BTreeMap::new();
        prices.insert(
            "m".to_string(),
            ModelPrice { prompt_per_1k: dec!(0.002), completion_per_1k: dec!(0.008) },
        );
        let (provider, _) = FlakyProvider::new(0);
        let gw = LlmGateway::new(Box::new(provider), ModelProfile::stub("m")).with_prices(prices);
        let ex = gw.complete(&ctx(), "s", "u").unwrap();
        assert_eq!(ex.cost_estimate, dec!(0.006)); // 1.0k * .002 + 0.5k * .008

        let (provider, _) = FlakyProvider::new(0);
        let gw = LlmGateway::new(Box::new(provider), ModelProfile::stub("unpriced"));
        let ex = gw.complete(&ctx(), "s", "u").unwrap();
        assert_eq!(ex.cost_estimate, Decimal::ZERO);
    }

    #[test]
    fn token_bucket_blocks_when_empty() {
        let bucket = TokenBucket::new(2, 1000.0);
        assert!(bucket.try_acquire());
        assert!(bucket.try_acquire());
        // Third token needs a refill; the fast rate keeps this prompt.
        bucket.acquire();

        let slow = TokenBucket::new(1, 0.000001);
        assert!(slow.try_acquire());
        assert!(!slow.try_acquire());
    }

    #[test]
    fn agent_role_round_trips_through_strings() {
        for role in [
            AgentRole::Planner,
            AgentRole::Manager,
            AgentRole::Analyst(AnalystKind::CompanyNews),
        ] {
            assert_eq!(role.as_str().parse::<AgentRole>().unwrap(), role);
        }
    }
}
