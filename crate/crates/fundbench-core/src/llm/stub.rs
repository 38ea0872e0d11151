//! Deterministic scripted stub provider for offline runs and tests. Responses
//! and failures replay exactly from a script keyed by (role, ticker, date);
//! unscripted calls answer a configurable default (Neutral signal / Hold
//! decision / all analysts). An optional random-failure mode dooms a
//! deterministic, order-independent subset of calls for validity experiments.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use chrono::NaiveDate;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::domain::{AnalystKind, Ticker};

use super::{
    AgentRole, CallContext, LlmProvider, ModelProfile, ProviderCallError, RawCompletion,
    TokenUsage,
};

/// Independent per-call failure probabilities. A doomed call fails on every
/// retry attempt, so it always surfaces as LlmUnavailable to the caller.
/// Draws are a pure hash of (seed, role, ticker, date): deterministic and
/// independent of scheduling order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomFailure {
    pub signal_fail_p: f64,
    pub decision_fail_p: f64,
    pub seed: u64,
}

/// One captured provider call, for tests that assert on rendered prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubCall {
    pub role: AgentRole,
    pub ticker: Option<Ticker>,
    pub date: NaiveDate,
    pub system_prompt: String,
    pub user_prompt: String,
}

#[derive(Debug, Clone)]
enum Outcome {
    Respond(String),
    /// Fail the first `fails` attempts, then answer `response` (or default).
    FailThen {
        fails: u32,
        response: Option<String>,
    },
}

type Key = (String, Option<Ticker>, NaiveDate);

/// Script line wire format: `{role, ticker?, date, response? | fail_times?}`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptLine {
    role: String,
    #[serde(default)]
    ticker: Option<Ticker>,
    date: NaiveDate,
    #[serde(default)]
    response: Option<String>,
    #[serde(default)]
    fail_times: Option<u32>,
}

pub struct ScriptedStub {
    script: HashMap<Key, Outcome>,
    consumed_failures: Mutex<HashMap<Key, u32>>,
    random_failure: Option<RandomFailure>,
    captured: Option<Arc<Mutex<Vec<StubCall>>>>,
}

impl Default for ScriptedStub {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedStub {
    pub fn new() -> Self {
        ScriptedStub {
            script: HashMap::new(),
            consumed_failures: Mutex::new(HashMap::new()),
            random_failure: None,
            captured: None,
        }
    }

    /// Parses JSON Lines of `{role, ticker, date, response | fail_times}`.
    pub fn from_script_lines(lines: &str) -> Result<Self, String> {
        let mut stub = Self::new();
        for (i, line) in lines.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScriptLine =
                serde_json::from_str(line).map_err(|e| format!("script line {}: {e}", i + 1))?;
            // Validate the role early so a typo fails loading, not replay.
            parsed
                .role
                .parse::<AgentRole>()
                .map_err(|e| format!("script line {}: {e}", i + 1))?;
            let key = (
                parsed.role.parse::<AgentRole>().expect("validated").as_str().to_string(),
                parsed.ticker,
                parsed.date,
            );
            let outcome = match parsed.fail_times {
                Some(fails) if fails > 0 => Outcome::FailThen { fails, response: parsed.response },
                _ => match parsed.response {
                    Some(text) => Outcome::Respond(text),
                    None => {
                        return Err(format!(
                            "script line {}: needs response or fail_times",
                            i + 1
                        ))
                    }
                },
            };
            stub.script.insert(key, outcome);
        }
        Ok(stub)
    }

    pub fn from_script_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_script_lines(&text)
    }

    /// Adds one scripted response programmatically.
    pub fn respond(
        mut self,
        role: AgentRole,
        ticker: Option<&Ticker>,
        date: NaiveDate,
        response: impl Into<String>,
    ) -> Self {
        self.script.insert(
            (role.as_str().to_string(), ticker.cloned(), date),
            Outcome::Respond(response.into()),
        );
        self
    }

    /// Fails the first `fails` attempts for the key, then answers `response`
    /// (falls back to the role default when None).
    pub fn fail_then(
        mut self,
        role: AgentRole,
        ticker: Option<&Ticker>,
        date: NaiveDate,
        fails: u32,
        response: Option<String>,
    ) -> Self {
        self.script.insert(
            (role.as_str().to_string(), ticker.cloned(), date),
            Outcome::FailThen { fails, response },
        );
        self
    }

    pub fn with_random_failure(mut self, rf: RandomFailure) -> Self {
        self.random_failure = Some(rf);
        self
    }

    /// Enables prompt capture; see [`ScriptedStub::captured_calls`] and
    /// [`ScriptedStub::capture_handle`].
    pub fn with_capture(mut self) -> Self {
        self.captured = Some(Arc::new(Mutex::new(Vec::new())));
        self
    }

    pub fn captured_calls(&self) -> Vec<StubCall> {
        self.captured
            .as_ref()
            .map(|c| c.lock().expect("capture lock").clone())
            .unwrap_or_default()
    }

    /// Shared handle to the capture buffer, usable after the stub moves into
    /// a gateway.
    pub fn capture_handle(&self) -> Option<Arc<Mutex<Vec<StubCall>>>> {
        self.captured.clone()
    }

    fn default_response(role: AgentRole) -> String {
        match role {
            AgentRole::Planner => {
                let names: Vec<&str> = AnalystKind::ALL.iter().map(|k| k.as_str()).collect();
                serde_json::to_string(&names).expect("static list serializes")
            }
            AgentRole::Analyst(_) => r#"{"signal": "Neutral", "justification": "No strong directional evidence; staying neutral."}"#.to_string(),
            AgentRole::Manager => r#"{"action": "Hold", "shares": 0, "price": 1.0, "justification": "Holding position pending clearer signals."}"#.to_string(),
        }
    }

    /// Order-independent Bernoulli draw for the doomed-call decision.
    fn doom_draw(rf: &RandomFailure, ctx: &CallContext) -> f64 {
        let mut hasher = Sha256::new();
        hasher.update(rf.seed.to_le_bytes());
        hasher.update(ctx.role.as_str().as_bytes());
        hasher.update([0x1f]);
        if let Some(t) = &ctx.ticker {
            hasher.update(t.as_str().as_bytes());
        }
        hasher.update([0x1f]);
        hasher.update(ctx.date.to_string().as_bytes());
        let digest = hasher.finalize();
        let bits = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        bits as f64 / u64::MAX as f64
    }

    fn is_doomed(&self, ctx: &CallContext) -> bool {
        let Some(rf) = &self.random_failure else {
            return false;
        };
        let p = match ctx.role {
            AgentRole::Analyst(_) => rf.signal_fail_p,
            AgentRole::Manager => rf.decision_fail_p,
            AgentRole::Planner => 0.0,
        };
        p > 0.0 && Self::doom_draw(rf, ctx) < p
    }
}

impl LlmProvider for ScriptedStub {
    fn call(
        &self,
        _profile: &ModelProfile,
        ctx: &CallContext,
        system_prompt: &str,
        user_prompt: &str,
    ) -> Result<RawCompletion, ProviderCallError> {
        if let Some(captured) = &self.captured {
            captured.lock().expect("capture lock").push(StubCall {
                role: ctx.role,
                ticker: ctx.ticker.clone(),
                date: ctx.date,
                system_prompt: system_prompt.to_string(),
                user_prompt: user_prompt.to_string(),
            });
        }

        if self.is_doomed(ctx) {
            return Err(ProviderCallError("injected failure (random mode)".into()));
        }

        let key: Key = (ctx.role.as_str().to_string(), ctx.ticker.clone(), ctx.date);
        let text = match self.script.get(&key) {
            Some(Outcome::Respond(text)) => text.clone(),
            Some(Outcome::FailThen { fails, response }) => {
                let mut consumed = self.consumed_failures.lock().expect("failure lock");
                let used = consumed.entry(key.clone()).or_insert(0);
                if *used < *fails {
                    *used += 1;
                    return Err(ProviderCallError(format!(
                        "injected failure {used} of {fails}"
                    )));
                }
                response.clone().unwrap_or_else(|| Self::default_response(ctx.role))
            }
            None => Self::default_response(ctx.role),
        };

        // Deterministic synthetic usage so cost accounting is exercised.
        let usage = TokenUsage {
            prompt_tokens: ((system_prompt.len() + user_prompt.len()) / 4) as u64,
            completion_tokens: (text.len() / 4) as u64,
        };
        Ok(RawCompletion { text, usage: Some(usage) })
    }
}
