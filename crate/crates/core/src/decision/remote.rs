//! HTTP client for the scoring service.
//!
//! `POST {endpoint}/v1/score` with a JSON body
//! `{"model", "items": [{"prompt", "continuations"}], "normalize": "sum"|"mean"}`
//! returns `{"results": [{"logprobs": [..]}], "model", "usage"}`, aligned
//! index-for-index with the request. The service prepends one space to each
//! continuation before tokenizing, so clients send bare words.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Normalization, ScoreBatch, ScoreError, ScoreResult, Scorer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_timeout_s() -> u64 {
    120
}
fn default_in_flight() -> usize {
    4
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> RemoteConfig {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            timeout_s: default_timeout_s(),
            max_in_flight: default_in_flight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireItem {
    pub prompt: String,
    pub continuations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequestWire {
    pub model: String,
    pub items: Vec<WireItem>,
    pub normalize: Normalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResult {
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponseWire {
    pub results: Vec<WireResult>,
    pub model: String,
    #[serde(default)]
    pub usage: serde_json::Value,
}

pub struct RemoteScorer {
    config: RemoteConfig,
    url: String,
    client: reqwest::blocking::Client,
}

enum Attempt {
    Retry(String),
    Fail(ScoreError),
}

impl RemoteScorer {
    pub fn new(config: RemoteConfig) -> Result<RemoteScorer, ScoreError> {
        if config.max_in_flight == 0 {
            return Err(ScoreError::InvalidQuery("max_in_flight must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| ScoreError::Protocol(format!("building HTTP client: {e}")))?;
        let url = format!("{}/v1/score", config.endpoint.trim_end_matches('/'));
        Ok(RemoteScorer { config, url, client })
    }

    pub fn request_for(&self, batch: &ScoreBatch) -> ScoreRequestWire {
        ScoreRequestWire {
            model: self.config.model.clone(),
            items: batch
                .queries
                .iter()
                .map(|q| WireItem {
                    prompt: q.prompt.clone(),
                    continuations: q.continuations.clone(),
                })
                .collect(),
            normalize: batch.normalization,
        }
    }

    fn attempt(&self, body: &ScoreRequestWire) -> Result<ScoreResponseWire, Attempt> {
        let response = self
            .client
            .post(&self.url)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(Attempt::Fail(ScoreError::Http {
                status: status.as_u16(),
                body,
            }));
        }
        response
            .json::<ScoreResponseWire>()
            .map_err(|e| Attempt::Fail(ScoreError::Protocol(format!("undecodable response: {e}"))))
    }
}

impl Scorer for RemoteScorer {
    fn score(&self, batch: &ScoreBatch) -> Result<Vec<ScoreResult>, ScoreError> {
        let body = self.request_for(batch);
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(10));
                log::warn!("scorer attempt {attempt} failed ({last}); retrying in {delay} ms");
                thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Ok(response) => return check_response(&body, response),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(message)) => last = message,
            }
        }
        Err(ScoreError::Unreachable {
            attempts,
            message: last,
            prompt: body.items.first().map(|i| i.prompt.clone()).unwrap_or_default(),
        })
    }

    fn max_in_flight(&self) -> usize {
        self.config.max_in_flight
    }

    fn describe(&self) -> String {
        format!("remote({} @ {})", self.config.model, self.config.endpoint)
    }
}

fn check_response(request: &ScoreRequestWire, response: ScoreResponseWire) -> Result<Vec<ScoreResult>, ScoreError> {
    if response.results.len() != request.items.len() {
        return Err(ScoreError::Protocol(format!(
            "{} results for {} items",
            response.results.len(),
            request.items.len()
        )));
    }
    if response.model != request.model {
        return Err(ScoreError::Protocol(format!(
            "response model {:?} differs from requested {:?}",
            response.model, request.model
        )));
    }
    request
        .items
        .iter()
        .zip(response.results)
        .map(|(item, result)| {
            if result.logprobs.len() != item.continuations.len() {
                return Err(ScoreError::Protocol(format!(
                    "{} logprobs for {} continuations",
                    result.logprobs.len(),
                    item.continuations.len()
                )));
            }
            if result.logprobs.iter().any(|x| !x.is_finite()) {
                return Err(ScoreError::Protocol("non-finite logprob".into()));
            }
            Ok(ScoreResult {
                log_likelihoods: result.logprobs,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shapes() {
        let req = ScoreRequestWire {
            model: "m".into(),
            items: vec![WireItem {
                prompt: "2+2=".into(),
                continuations: vec!["4".into(), "5".into()],
            }],
            normalize: Normalization::Mean,
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"model":"m","items":[{"prompt":"2+2=","continuations":["4","5"]}],"normalize":"mean"}"#
        );
        let resp: ScoreResponseWire =
            serde_json::from_str(r#"{"results":[{"logprobs":[-0.5,-2.0]}],"model":"m","usage":{"tokens":4}}"#).unwrap();
        let out = check_response(&req, resp).unwrap();
        assert_eq!(out[0].log_likelihoods, vec![-0.5, -2.0]);
    }

    #[test]
    fn arity_mismatch_is_a_protocol_error() {
        let req = ScoreRequestWire {
            model: "m".into(),
            items: vec![WireItem {
                prompt: "p".into(),
                continuations: vec!["a".into(), "b".into()],
            }],
            normalize: Normalization::Sum,
        };
        let resp = ScoreResponseWire {
            results: vec![WireResult { logprobs: vec![-1.0] }],
            model: "m".into(),
            usage: serde_json::Value::Null,
        };
        assert!(matches!(check_response(&req, resp), Err(ScoreError::Protocol(_))));
    }
}
