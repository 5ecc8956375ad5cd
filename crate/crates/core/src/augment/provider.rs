//! Completion providers: the HTTP chat-completion client and the
//! deterministic offline mock.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::LanguageCode;
use crate::error::{Error, Result};

/// A chat-completion backend: one (system, user) exchange in, one text
/// out.
pub trait CompletionProvider: Send + Sync {
    /// Stable model/identity string; participates in cache keys.
    fn identity(&self) -> &str;
    fn complete(&self, system: &str, user: &str) -> Result<String>;
}

/// Deterministic offline provider.
///
/// Translation prompts get a language-tagged passthrough of the content;
/// judge prompts answer YES when the screened text contains any of the
/// configured keywords, NO otherwise. Identical inputs always produce
/// identical outputs.
pub struct MockProvider {
    keywords: Vec<String>,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new(keywords: Vec<String>) -> Self {
        MockProvider {
            keywords,
            calls: AtomicUsize::new(0),
        }
    }

    /// Total completions served; used to verify cache idempotence.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn flagged(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        self.keywords.iter().any(|k| lower.contains(k.as_str()))
    }
}

impl Default for MockProvider {
    fn default() -> Self {
        MockProvider::new(vec!["introvert".into(), "extrovert".into()])
    }
}

impl CompletionProvider for MockProvider {
    fn identity(&self) -> &str {
        "mock-deterministic-v1"
    }

    fn complete(&self, system: &str, user: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if system.contains("screening translated text") {
            // CSP: screen the text after the header.
            let text = user.split("Text to screen:\n").nth(1).unwrap_or(user);
            return Ok(if self.flagged(text) { "YES" } else { "NO" }.to_string());
        }
        if system.contains("comparing an original text") {
            // TCP: flag when the translated half introduces a keyword the
            // original does not contain.
            let translated = user.split("Translated text:\n").nth(1).unwrap_or("");
            let original = user
                .split("Original text:\n")
                .nth(1)
                .and_then(|rest| rest.split("\n\nTranslated text:\n").next())
                .unwrap_or("");
            let added = self.flagged(translated) && !self.flagged(original);
            return Ok(if added { "YES" } else { "NO" }.to_string());
        }
        // Translation: tag the content with the target language code. Both
        // templates phrase the target as "into {Language}".
        let lang = LanguageCode::ALL
            .into_iter()
            .find(|l| system.contains(&format!("into {}", l.display_name())))
            .ok_or_else(|| Error::Provider("mock cannot find a target language".into()))?;
        let content = user
            .split("Content to translate:\n")
            .nth(1)
            .unwrap_or(user);
        Ok(format!("[{lang}] {content}"))
    }
}

/// Settings for the HTTP provider. The auth token is read from the
/// environment variable named in `token_env` at request time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    pub base_url: String,
    pub model: String,
    pub token_env: String,
    pub max_retries: usize,
    pub timeout_secs: u64,
    /// Optional sampling temperature; absent fields are left to the
    /// provider's defaults.
    pub temperature: Option<f64>,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        HttpProviderConfig {
            base_url: "http://localhost:8080/v1/chat/completions".into(),
            model: "gpt-4o-2024-08-06".into(),
            token_env: "PROVIDER_API_TOKEN".into(),
            max_retries: 3,
            timeout_secs: 60,
            temperature: None,
        }
    }
}

/// Chat-completion HTTP client with bounded retries.
pub struct HttpProvider {
    cfg: HttpProviderConfig,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

impl HttpProvider {
    pub fn new(cfg: HttpProviderConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Provider(format!("client construction failed: {e}")))?;
        Ok(HttpProvider { cfg, client })
    }

    fn request_once(&self, system: &str, user: &str) -> Result<String> {
        let body = ChatRequest {
            model: &self.cfg.model,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: system,
                },
                ChatMessage {
                    role: "user",
                    content: user,
                },
            ],
            temperature: self.cfg.temperature,
        };
        let mut req = self.client.post(&self.cfg.base_url).json(&body);
        if let Ok(token) = std::env::var(&self.cfg.token_env) {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| Error::Provider(format!("request failed: {e}")))?;
        if !resp.status().is_success() {
            return Err(Error::Provider(format!(
                "provider returned HTTP {}",
                resp.status()
            )));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| Error::Provider(format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Error::Provider("response held no choices".into()))
    }
}

impl CompletionProvider for HttpProvider {
    fn identity(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, system: &str, user: &str) -> Result<String> {
        let mut last = None;
        for attempt in 0..self.cfg.max_retries.max(1) {
            match self.request_once(system, user) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("provider attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                    std::thread::sleep(Duration::from_millis(200 * (attempt as u64 + 1)));
                }
            }
        }
        Err(last.expect("at least one attempt ran"))
    }
}

/// Counting semaphore bounding concurrent in-flight provider requests.
pub struct InflightLimiter {
    capacity: usize,
    state: Mutex<usize>,
    cv: Condvar,
}

impl InflightLimiter {
    pub fn new(capacity: usize) -> Self {
        InflightLimiter {
            capacity: capacity.max(1),
            state: Mutex::new(0),
            cv: Condvar::new(),
        }
    }

    pub fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut inflight = self.state.lock().expect("limiter lock");
        while *inflight >= self.capacity {
            inflight = self.cv.wait(inflight).expect("limiter wait");
        }
        *inflight += 1;
        drop(inflight);
        let out = f();
        let mut inflight = self.state.lock().expect("limiter lock");
        *inflight -= 1;
        drop(inflight);
        self.cv.notify_one();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::prompts::{render_csp, render_prompt};
    use crate::augment::AugmentationMode;
    use crate::corpus::{Sample, TraitLabels, VariantTag};

    fn sample(text: &str) -> Sample {
        Sample {
            group_id: "g1".into(),
            language: LanguageCode::En,
            variant: VariantTag::Regular,
            text: text.into(),
            labels: TraitLabels::new(vec![1, 0, 1, 0, 1]).unwrap(),
        }
    }

    #[test]
    fn mock_translation_is_tagged_passthrough() {
        let provider = MockProvider::default();
        let p = render_prompt(AugmentationMode::Toga, &sample("hello there"), LanguageCode::Fr)
            .unwrap();
        assert_eq!(provider.complete(&p.system, &p.user).unwrap(), "[fr] hello there");
        // PIGA keeps only the content after the personality preamble.
        let p = render_prompt(AugmentationMode::Piga, &sample("hello there"), LanguageCode::Zh)
            .unwrap();
        assert_eq!(provider.complete(&p.system, &p.user).unwrap(), "[zh] hello there");
    }

    #[test]
    fn mock_judge_applies_keyword_rule() {
        let provider = MockProvider::default();
        let p = render_csp(&sample("I am a huge introvert lately")).unwrap();
        assert_eq!(provider.complete(&p.system, &p.user).unwrap(), "YES");
        let p = render_csp(&sample("the weather is nice")).unwrap();
        assert_eq!(provider.complete(&p.system, &p.user).unwrap(), "NO");
    }

    #[test]
    fn mock_is_deterministic() {
        let provider = MockProvider::default();
        let p = render_prompt(AugmentationMode::Toga, &sample("same text"), LanguageCode::Jp)
            .unwrap();
        let a = provider.complete(&p.system, &p.user).unwrap();
        let b = provider.complete(&p.system, &p.user).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn limiter_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Arc;
        let limiter = Arc::new(InflightLimiter::new(2));
        let inflight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|scope| {
            for _ in 0..8 {
                let limiter = Arc::clone(&limiter);
                let inflight = Arc::clone(&inflight);
                let peak = Arc::clone(&peak);
                scope.spawn(move || {
                    limiter.run(|| {
                        let now = inflight.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        std::thread::sleep(std::time::Duration::from_millis(5));
                        inflight.fetch_sub(1, Ordering::SeqCst);
                    });
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
