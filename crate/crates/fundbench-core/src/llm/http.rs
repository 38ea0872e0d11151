//! Generic live LLM provider over HTTP, declared in configuration: endpoint,
//! auth header, and JSON pointers for the response text and token usage. The
//! request body follows the common chat-completions shape (model, temperature,
//! system+user messages). Retries are handled by the gateway, not here.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    CallContext, LlmError, LlmProvider, ModelProfile, ProviderCallError, RawCompletion,
    TokenUsage,
};

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpLlmConfig {
    pub endpoint: String,
    pub api_key_env: String,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default = "default_auth_value")]
    pub auth_value: String,
    #[serde(default = "default_text_pointer")]
    pub response_text_pointer: String,
    #[serde(default = "default_prompt_tokens_pointer")]
    pub prompt_tokens_pointer: String,
    #[serde(default = "default_completion_tokens_pointer")]
    pub completion_tokens_pointer: String,
    #[serde(default)]
    pub extra_headers: BTreeMap<String, String>,
}

fn default_auth_header() -> String {
    "Authorization".to_string()
}

fn default_auth_value() -> String {
    "Bearer {api_key}".to_string()
}

fn default_text_pointer() -> String {
    "/choices/0/message/content".to_string()
}

fn default_prompt_tokens_pointer() -> String {
    "/usage/prompt_tokens".to_string()
}

fn default_completion_tokens_pointer() -> String {
    "/usage/completion_tokens".to_string()
}

pub struct HttpLlmProvider {
    config: HttpLlmConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpLlmProvider {
    pub fn new(config: HttpLlmConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| LlmError::MissingCredential(config.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| LlmError::Unavailable { attempts: 0, last_error: e.to_string() })?;
        Ok(HttpLlmProvider { config, api_key, client })
    }
}

impl LlmProvider for HttpLlmProvider {
    fn call(
        &self,
        profile: &ModelProfile,
        _ctx: &CallContext,
        system_prompt: &str,
        user_prompt: &str,
    ) -> Result<RawCompletion, ProviderCallError> {
        let body = json!({
            "model": profile.model_id,
            "temperature": profile.temperature,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
        });
        let mut req = self
            .client
            .post(&self.config.endpoint)
            .timeout(Duration::from_secs(profile.timeout_secs))
            .header(
                self.config.auth_header.as_str(),
                self.config.auth_value.replace("{api_key}", &self.api_key),
            )
            .json(&body);
        for (name, value) in &self.config.extra_headers {
            req = req.header(name.as_str(), value.as_str());
        }
        let resp = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| ProviderCallError(e.to_string()))?;
        let value: Value = resp
            .json()
            .map_err(|e| ProviderCallError(format!("invalid JSON body: {e}")))?;
        let text = value
            .pointer(&self.config.response_text_pointer)
            .and_then(Value::as_str)
            .ok_or_else(|| {
                ProviderCallError(format!(
                    "no text at pointer {}",
                    self.config.response_text_pointer
                ))
            })?
            .to_string();
        let tokens_at = |ptr: &str| value.pointer(ptr).and_then(Value::as_u64);
        let usage = match (
            tokens_at(&self.config.prompt_tokens_pointer),
            tokens_at(&self.config.completion_tokens_pointer),
        ) {
            (None, None) => None,
            (p, c) => Some(TokenUsage {
                prompt_tokens: p.unwrap_or(0),
                completion_tokens: c.unwrap_or(0),
            }),
        };
        Ok(RawCompletion { text, usage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{AgentRole, LlmGateway};
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn spawn_server(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind test server");
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().expect("accept");
                let mut buf = vec![0u8; 65536];
                let n = stream.read(&mut buf).unwrap_or(0);
                bodies.push(String::from_utf8_lossy(&buf[..n]).to_string());
                let reason = if status == 200 { "OK" } else { "ERR" };
                let resp = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).expect("write response");
            }
            bodies
        });
        (format!("http://{addr}"), handle)
    }

    fn config(endpoint: String, key_env: &str) -> HttpLlmConfig {
        HttpLlmConfig {
            endpoint,
            api_key_env: key_env.to_string(),
            auth_header: default_auth_header(),
            auth_value: default_auth_value(),
            response_text_pointer: default_text_pointer(),
            prompt_tokens_pointer: default_prompt_tokens_pointer(),
            completion_tokens_pointer: default_completion_tokens_pointer(),
            extra_headers: BTreeMap::new(),
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
    fn missing_credential_errors_at_construction() {
        let cfg = config("http://127.0.0.1:1".to_string(), "FUNDBENCH_TEST_LLM_NO_KEY");
        assert!(matches!(
            HttpLlmProvider::new(cfg),
            Err(LlmError::MissingCredential(v)) if v == "FUNDBENCH_TEST_LLM_NO_KEY"
        ));
    }

    #[test]
    fn gateway_retries_http_provider_then_parses_usage() {
        std::env::set_var("FUNDBENCH_TEST_LLM_KEY", "secret");
        let ok_body = r#"{"choices":[{"message":{"content":"{\"action\":\"Hold\",\"shares\":0,\"price\":1.0,\"justification\":\"wait\"}"}}],"usage":{"prompt_tokens":120,"completion_tokens":40}}"#;
        let (endpoint, handle) = spawn_server(vec![
            (500, "{}".to_string()),
            (200, ok_body.to_string()),
        ]);
        let provider = HttpLlmProvider::new(config(endpoint, "FUNDBENCH_TEST_LLM_KEY")).unwrap();
        let mut profile = ModelProfile::stub("gpt-test");
        profile.provider_id = "http".into();
        profile.retry_backoff_ms = 0;
        let gw = LlmGateway::new(Box::new(provider), profile);
        let ex = gw.complete(&ctx(), "sys", "usr").unwrap();
        let requests = handle.join().unwrap();
        assert_eq!(ex.attempts, 2);
        assert_eq!(ex.token_usage.prompt_tokens, 120);
        assert_eq!(ex.token_usage.completion_tokens, 40);
        assert!(ex.response_text.unwrap().contains("Hold"));
        // Both requests carried the credential and the chat payload.
        assert!(requests.iter().all(|r| r.contains("Bearer secret")));
        assert!(requests[1].contains("\"model\":\"gpt-test\""));
        assert!(requests[1].contains("\"temperature\":0.5"));
    }
}
