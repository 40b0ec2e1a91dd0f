use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{CertError, Result};

/// Source language of every corpus sentence.
pub const SOURCE_LANG: &str = "en";

pub trait Translator {
    fn translate(&self, sentence: &str, src: &str, tgt: &str) -> Result<String>;
}

/// Table-driven translator; sentences missing from the table come back
/// unchanged.
#[derive(Clone, Debug, Default)]
pub struct MockTranslator {
    table: HashMap<(String, String, String), String>,
}

impl MockTranslator {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn with(mut self, src: &str, tgt: &str, from: &str, to: &str) -> Self {
        self.table
            .insert((src.to_string(), tgt.to_string(), from.to_string()), to.to_string());
        self
    }
}

impl Translator for MockTranslator {
    fn translate(&self, sentence: &str, src: &str, tgt: &str) -> Result<String> {
        let key = (src.to_string(), tgt.to_string(), sentence.to_string());
        Ok(self.table.get(&key).cloned().unwrap_or_else(|| sentence.to_string()))
    }
}

/// Settings of the remote translation service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpTranslatorConfig {
    pub endpoint: String,
    /// Sent as a bearer token when present.
    pub auth_token: Option<String>,
    pub timeout_secs: f64,
    /// Extra attempts after a failed request.
    pub retries: u32,
}

impl Default for HttpTranslatorConfig {
    fn default() -> Self {
        HttpTranslatorConfig {
            endpoint: String::new(),
            auth_token: None,
            timeout_secs: 30.0,
            retries: 2,
        }
    }
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    text: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    text: String,
}

/// JSON-over-HTTP client: POSTs `{text, source, target}` and expects
/// `{text}` back.
pub struct HttpTranslator {
    config: HttpTranslatorConfig,
    agent: ureq::Agent,
}

impl HttpTranslator {
    pub fn new(config: HttpTranslatorConfig) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(CertError::Config("translator endpoint is empty".into()));
        }
        if !(config.timeout_secs > 0.0 && config.timeout_secs.is_finite()) {
            return Err(CertError::Config(format!(
                "translator timeout must be positive, got {}",
                config.timeout_secs
            )));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .build()
            .into();
        Ok(HttpTranslator { config, agent })
    }

    fn attempt(&self, sentence: &str, src: &str, tgt: &str) -> std::result::Result<String, ureq::Error> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(token) = &self.config.auth_token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(&TranslateRequest {
            text: sentence,
            source: src,
            target: tgt,
        })?;
        let body: TranslateResponse = resp.body_mut().read_json()?;
        Ok(body.text)
    }
}

impl Translator for HttpTranslator {
    fn translate(&self, sentence: &str, src: &str, tgt: &str) -> Result<String> {
        let mut last = None;
        for attempt in 0..=self.config.retries {
            match self.attempt(sentence, src, tgt) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("translation {src}->{tgt} attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                }
            }
        }
        Err(CertError::Translator {
            pivot: if src == SOURCE_LANG {
                tgt.to_string()
            } else {
                src.to_string()
            },
            msg: last.map(|e| e.to_string()).unwrap_or_default(),
        })
    }
}

/// `t(t(x, en, pivot), pivot, en)`. Any failure is reported against `pivot`.
pub fn back_translate(sentence: &str, translator: &dyn Translator, pivot: &str) -> Result<String> {
    let wrap = |e: CertError| match e {
        CertError::Translator { .. } => e,
        other => CertError::Translator {
            pivot: pivot.to_string(),
            msg: other.to_string(),
        },
    };
    let there = translator.translate(sentence, SOURCE_LANG, pivot).map_err(wrap)?;
    translator.translate(&there, pivot, SOURCE_LANG).map_err(wrap)
}
