//! Client for the JSON-over-HTTP inference protocol.
//!
//! ```text
//! GET  /v1/info           -> {"model_name","language","vocab_size","max_sequence_length"}
//! GET  /v1/vocab          -> {"tokens":[str,...]}
//! POST /v1/tokenize       {"text"} -> {"tokens":[{"id","text","start","end","special"},...]}
//! POST /v1/mask_logprobs  {"token_ids","mask_positions"} -> {"log_probs":[[f64; vocab_size],...]}
//! ```
//!
//! Every returned row is checked for normalization and never renormalized.
//! `null` entries in a log-prob row are read as −∞ since JSON cannot carry
//! infinities.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    check_mask_positions, BackendError, BackendInfo, Distribution, MlmBackend, TokenSequence,
};

#[derive(Debug, Clone)]
pub struct HttpOptions {
    pub max_concurrency: usize,
    pub timeout: Duration,
}

impl Default for HttpOptions {
    fn default() -> Self {
        Self {
            max_concurrency: 4,
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug)]
struct Limiter {
    free: Mutex<usize>,
    cond: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cond.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cond.notify_one();
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    base_url: String,
    client: reqwest::blocking::Client,
    max_concurrency: usize,
    limiter: Limiter,
    info: Mutex<Option<BackendInfo>>,
    vocab: Mutex<Option<Arc<[String]>>>,
}

#[derive(Deserialize)]
struct VocabResponse {
    tokens: Vec<String>,
}

#[derive(Serialize)]
struct TokenizeRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct WireToken {
    id: u32,
    text: String,
    start: usize,
    end: usize,
    special: bool,
}

#[derive(Deserialize)]
struct TokenizeResponse {
    tokens: Vec<WireToken>,
}

#[derive(Serialize)]
struct MaskRequest<'a> {
    token_ids: &'a [u32],
    mask_positions: &'a [usize],
}

#[derive(Deserialize)]
struct MaskResponse {
    log_probs: Vec<Vec<Option<f64>>>,
}

impl HttpBackend {
    pub fn new(base_url: &str, options: HttpOptions) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(options.timeout)
            .build()
            .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
        let max_concurrency = options.max_concurrency.max(1);
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_owned(),
            client,
            max_concurrency,
            limiter: Limiter::new(max_concurrency),
            info: Mutex::new(None),
            vocab: Mutex::new(None),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn call<T: DeserializeOwned>(
        &self,
        endpoint: &str,
        body: Option<&impl Serialize>,
    ) -> Result<T, BackendError> {
        let url = format!("{}{endpoint}", self.base_url);
        let _permit = self.limiter.acquire();
        let request = match body {
            Some(body) => self.client.post(&url).json(body),
            None => self.client.get(&url),
        };
        let response = request
            .send()
            .map_err(|e| BackendError::BackendUnavailable(format!("{url}: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(match status.as_u16() {
                503 => BackendError::BackendUnavailable(format!("{url}: 503 {body}")),
                code => BackendError::Http {
                    endpoint: endpoint.to_owned(),
                    status: code,
                    body,
                },
            });
        }
        let bytes = response
            .bytes()
            .map_err(|e| BackendError::BackendUnavailable(format!("{url}: {e}")))?;
        serde_json::from_slice(&bytes).map_err(|e| BackendError::Protocol {
            endpoint: endpoint.to_owned(),
            message: e.to_string(),
        })
    }

    fn protocol(endpoint: &str, message: impl Into<String>) -> BackendError {
        BackendError::Protocol {
            endpoint: endpoint.to_owned(),
            message: message.into(),
        }
    }
}

impl MlmBackend for HttpBackend {
    fn info(&self) -> Result<BackendInfo, BackendError> {
        let mut cached = self.info.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(info) = cached.as_ref() {
            return Ok(info.clone());
        }
        let info: BackendInfo = self.call("/v1/info", None::<&()>)?;
        info.check().map_err(|m| Self::protocol("/v1/info", m))?;
        *cached = Some(info.clone());
        Ok(info)
    }

    fn tokenize(&self, text: &str) -> Result<TokenSequence, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::EmptyText);
        }
        let info = self.info()?;
        let response: TokenizeResponse =
            match self.call("/v1/tokenize", Some(&TokenizeRequest { text })) {
                Err(BackendError::Http { status: 413, .. }) => {
                    return Err(BackendError::SequenceTooLong {
                        len: text.chars().count(),
                        max: info.max_sequence_length,
                    })
                }
                other => other?,
            };
        let n = response.tokens.len();
        if n > info.max_sequence_length {
            return Err(BackendError::SequenceTooLong {
                len: n,
                max: info.max_sequence_length,
            });
        }
        let mut ids = Vec::with_capacity(n);
        let mut texts = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n);
        let mut special = Vec::with_capacity(n);
        for token in response.tokens {
            if token.id as usize >= info.vocab_size {
                return Err(Self::protocol(
                    "/v1/tokenize",
                    format!("token id {} outside vocab of {}", token.id, info.vocab_size),
                ));
            }
            ids.push(token.id);
            texts.push(token.text);
            offsets.push((token.start, token.end));
            special.push(token.special);
        }
        TokenSequence::new(ids, texts, offsets, special)
            .map_err(|e| Self::protocol("/v1/tokenize", e.to_string()))
    }

    fn mask_distributions(
        &self,
        tokens: &TokenSequence,
        positions: &[usize],
    ) -> Result<Vec<Distribution>, BackendError> {
        check_mask_positions(tokens, positions)?;
        if positions.is_empty() {
            return Ok(Vec::new());
        }
        let vocab_size = self.info()?.vocab_size;
        let request = MaskRequest {
            token_ids: tokens.ids(),
            mask_positions: positions,
        };
        let response: MaskResponse = self.call("/v1/mask_logprobs", Some(&request))?;
        if response.log_probs.len() != positions.len() {
            return Err(Self::protocol(
                "/v1/mask_logprobs",
                format!(
                    "{} rows for {} mask positions",
                    response.log_probs.len(),
                    positions.len()
                ),
            ));
        }
        response
            .log_probs
            .into_iter()
            .enumerate()
            .map(|(index, row)| {
                if row.len() != vocab_size {
                    return Err(Self::protocol(
                        "/v1/mask_logprobs",
                        format!("row {index} has {} entries, vocab is {vocab_size}", row.len()),
                    ));
                }
                let row = row
                    .into_iter()
                    .map(|v| v.unwrap_or(f64::NEG_INFINITY))
                    .collect();
                Distribution::checked(row, index)
            })
            .collect()
    }

    fn vocab(&self) -> Result<Arc<[String]>, BackendError> {
        let mut cached = self.vocab.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(vocab) = cached.as_ref() {
            return Ok(vocab.clone());
        }
        let vocab_size = self.info()?.vocab_size;
        let response: VocabResponse = self.call("/v1/vocab", None::<&()>)?;
        if response.tokens.len() != vocab_size {
            return Err(Self::protocol(
                "/v1/vocab",
                format!(
                    "{} tokens, info reports {vocab_size}",
                    response.tokens.len()
                ),
            ));
        }
        let vocab: Arc<[String]> = response.tokens.into();
        *cached = Some(vocab.clone());
        Ok(vocab)
    }

    fn max_concurrency(&self) -> usize {
        self.max_concurrency
    }
}
