//! Chat-completion provider turning a prompt bundle into a composition
//! artifact, with a scripted mock provider for hermetic tests.

use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::prompt::PromptBundle;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("provider error (status {status}): {body}")]
    ProviderError { status: u16, body: String },
    #[error("completion was empty")]
    EmptyCompletion,
    #[error("no code found in completion: {raw_response}")]
    NoCodeFound { raw_response: String },
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmKind {
    Remote,
    Mock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmConfig {
    pub kind: LlmKind,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: usize,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<Vec<String>>,
}

fn default_api_key_env() -> String {
    "LLM_API_KEY".to_string()
}
fn default_max_output_tokens() -> usize {
    4096
}
fn default_timeout() -> u64 {
    120_000
}

impl LlmConfig {
    pub fn mock(script: Vec<String>) -> Self {
        LlmConfig {
            kind: LlmKind::Mock,
            model_id: "mock".to_string(),
            base_url: None,
            api_key_env: default_api_key_env(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            timeout_ms: default_timeout(),
            retries: 0,
            mock_script: Some(script),
        }
    }

    fn validate(&self) -> Result<(), LlmError> {
        match self.kind {
            LlmKind::Remote if self.base_url.is_none() => Err(LlmError::InvalidConfig(
                "remote llm requires base_url".into(),
            )),
            LlmKind::Mock if self.mock_script.is_none() => Err(LlmError::InvalidConfig(
                "mock llm requires mock_script".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionArtifact {
    pub code_text: String,
    pub runtime_label: String,
    pub prompt_digest: String,
    pub model_id: String,
    pub created_at: u64,
    pub raw_response: String,
}

pub struct LlmClient {
    config: LlmConfig,
    script: Mutex<Vec<String>>,
}

impl LlmClient {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let script = config.mock_script.clone().unwrap_or_default();
        Ok(LlmClient {
            config,
            script: Mutex::new(script),
        })
    }

    pub fn generate_composition(
        &self,
        bundle: &PromptBundle,
        runtime_label: &str,
    ) -> Result<CompositionArtifact, LlmError> {
        let raw_response = match self.config.kind {
            LlmKind::Mock => {
                let mut script = self.script.lock().unwrap();
                if script.is_empty() {
                    return Err(LlmError::ScriptExhausted);
                }
                script.remove(0)
            }
            LlmKind::Remote => self.call_chat_api(bundle)?,
        };

        if raw_response.trim().is_empty() {
            return Err(LlmError::EmptyCompletion);
        }
        let code_text = match extract_code_block(&raw_response) {
            Some(code) => code,
            None if looks_like_code(&raw_response) => raw_response.clone(),
            None => {
                return Err(LlmError::NoCodeFound {
                    raw_response: raw_response.clone(),
                })
            }
        };
        if code_text.trim().is_empty() {
            return Err(LlmError::EmptyCompletion);
        }

        Ok(CompositionArtifact {
            code_text,
            runtime_label: runtime_label.to_string(),
            prompt_digest: prompt_digest(bundle),
            model_id: self.config.model_id.clone(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            raw_response,
        })
    }

    fn call_chat_api(&self, bundle: &PromptBundle) -> Result<String, LlmError> {
        let base_url = self.config.base_url.as_deref().expect("validated");
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(self.config.timeout_ms))
            .build();
        let body = serde_json::json!({
            "model": self.config.model_id,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": bundle.user_text}
            ],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        });

        let mut attempt = 0;
        loop {
            let mut request = agent.post(base_url).set("Content-Type", "application/json");
            if let Ok(key) = std::env::var(&self.config.api_key_env) {
                request = request.set("Authorization", &format!("Bearer {key}"));
            }
            match request.send_json(body.clone()) {
                Ok(response) => {
                    let parsed: serde_json::Value =
                        response.into_json().map_err(|e| LlmError::ProviderError {
                            status: 200,
                            body: format!("unparseable response: {e}"),
                        })?;
                    let content = parsed
                        .get("choices")
                        .and_then(|c| c.get(0))
                        .and_then(|c| c.get("message"))
                        .and_then(|m| m.get("content"))
                        .and_then(|c| c.as_str())
                        .ok_or_else(|| LlmError::ProviderError {
                            status: 200,
                            body: "response has no choices[0].message.content".into(),
                        })?;
                    return Ok(content.to_string());
                }
                Err(ureq::Error::Status(status, response)) => {
                    let body = response.into_string().unwrap_or_default();
                    let snippet: String = body.chars().take(200).collect();
                    return Err(LlmError::ProviderError {
                        status,
                        body: snippet,
                    });
                }
                Err(ureq::Error::Transport(t)) => {
                    if attempt >= self.config.retries {
                        return Err(LlmError::ProviderUnreachable(t.to_string()));
                    }
                    // exponential backoff: 500 ms base, factor 2
                    std::thread::sleep(Duration::from_millis(500 * (1 << attempt.min(6))));
                    attempt += 1;
                }
            }
        }
    }
}

pub fn prompt_digest(bundle: &PromptBundle) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bundle.system_text.as_bytes());
    hasher.update([0u8]);
    hasher.update(bundle.user_text.as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Contents of the first fenced block; the fence line's language tag is
/// ignored. Returns None when no complete fence exists.
pub fn extract_code_block(response_text: &str) -> Option<String> {
    let open = response_text.find("```")?;
    let after_fence = &response_text[open + 3..];
    let line_end = after_fence.find('\n')?;
    let body = &after_fence[line_end + 1..];
    let close = body.find("```")?;
    let code = &body[..close];
    Some(code.strip_suffix('\n').unwrap_or(code).to_string())
}

/// Total fallback used by callers of `extract_code_block`: an unfenced
/// response is returned verbatim.
pub fn extract_code_or_text(response_text: &str) -> String {
    extract_code_block(response_text).unwrap_or_else(|| response_text.to_string())
}

fn looks_like_code(text: &str) -> bool {
    text.contains('=')
        || text.contains('(')
        || text.contains('{')
        || text.contains(';')
        || text.starts_with("#!")
        || text.starts_with("import ")
}
