use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{Completion, PromptRequest, Provider, ProviderError};
use crate::corpus::Tokenizer;
use crate::error::{Error, Result};
use crate::store::{sha256_hex, CallOutcome, CallParameters, ManifestEvent, ManifestLog, ModelCallRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub multiplier: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff_ms: 1000,
            multiplier: 2,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = u64::from(self.multiplier).saturating_pow(retry);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct GatewayConfig {
    pub model_name: String,
    pub context_limit: usize,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub tokenizer: Tokenizer,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            model_name: "gpt-3.5-turbo".into(),
            context_limit: 4097,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            tokenizer: Tokenizer::default(),
        }
    }
}

#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) {
        let mut free = self.free.lock().expect("slot lock poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock poisoned");
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.free.lock().expect("slot lock poisoned") += 1;
        self.cv.notify_one();
    }
}

/// Shared front door to a [`Provider`].
pub struct Gateway {
    provider: Arc<dyn Provider>,
    manifest: Arc<ManifestLog>,
    config: GatewayConfig,
    slots: Slots,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, manifest: Arc<ManifestLog>, config: GatewayConfig) -> Self {
        let bound = config.max_in_flight.max(1);
        Gateway {
            provider,
            manifest,
            slots: Slots {
                free: Mutex::new(bound),
                cv: Condvar::new(),
            },
            config,
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn manifest(&self) -> &Arc<ManifestLog> {
        &self.manifest
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    /// Requests currently holding a provider slot.
    pub fn in_flight(&self) -> usize {
        self.in_flight.load(Ordering::SeqCst)
    }

    /// Highest value [`Gateway::in_flight`] has reached.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn count_tokens(&self, text: &str) -> usize {
        self.config.tokenizer.count(text)
    }

    /// Check a request against the context budget without sending it.
    pub fn check_budget(&self, req: &PromptRequest) -> Result<()> {
        let prompt_tokens = self.count_tokens(&req.prompt_text);
        if prompt_tokens + req.max_response_tokens > self.config.context_limit {
            return Err(Error::TokenBudgetExceeded {
                prompt_tokens,
                response_tokens: req.max_response_tokens,
                limit: self.config.context_limit,
            });
        }
        Ok(())
    }

    /// Send one request. The manifest entry, success or failure, is written
    /// before this returns.
    pub fn complete(&self, req: &PromptRequest) -> Result<Completion> {
        let mut req = req.clone();
        if req.model_name.is_empty() {
            req.model_name = self.config.model_name.clone();
        }
        let digest = req.digest();
        let started = Instant::now();
        let (result, attempts) = match self.validate(&req) {
            Ok(()) => self.send_with_retry(&req),
            Err(e) => (Err(e), 0),
        };
        let latency_ms = started.elapsed().as_millis() as u64;

        let (outcome, response_text, truncated) = match &result {
            Ok(reply) => (
                CallOutcome::Ok {
                    truncated: reply.truncated,
                },
                Some(reply.text.clone()),
                reply.truncated,
            ),
            Err(e) => (
                CallOutcome::Failed {
                    error_class: e.class().to_owned(),
                    message: e.to_string(),
                },
                None,
                false,
            ),
        };
        if truncated {
            log::warn!("response to {} ({}) was cut at the token limit", req.purpose, &digest[..12]);
        }
        self.manifest.record(ManifestEvent::ModelCall(ModelCallRecord {
            purpose: req.purpose,
            request_digest: digest.clone(),
            prompt_text: req.prompt_text.clone(),
            parameters: CallParameters {
                model_name: req.model_name.clone(),
                temperature: req.temperature,
                max_response_tokens: req.max_response_tokens,
                seed: req.seed,
            },
            metadata: req.metadata.clone(),
            provider: self.provider.name().to_owned(),
            response_digest: response_text.as_deref().map(|t| sha256_hex(t.as_bytes())),
            response_text,
            outcome,
            attempts,
            latency_ms,
        }))?;

        let reply = result?;
        Ok(Completion {
            request_digest: digest,
            response_text: reply.text,
            latency_ms,
            provider: self.provider.name().to_owned(),
            truncated: reply.truncated,
        })
    }

    /// Send many requests across worker threads, at most `max_in_flight` at a
    /// time. Results come back in input order.
    pub fn complete_batch(&self, requests: &[PromptRequest]) -> Vec<Result<Completion>> {
        let workers = self.config.max_in_flight.max(1).min(requests.len().max(1));
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<Completion>>>> =
            Mutex::new((0..requests.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(req) = requests.get(i) else { break };
                    let r = self.complete(req);
                    results.lock().expect("results lock poisoned")[i] = Some(r);
                });
            }
        });
        results
            .into_inner()
            .expect("results lock poisoned")
            .into_iter()
            .map(|r| r.expect("every request answered"))
            .collect()
    }

    fn validate(&self, req: &PromptRequest) -> Result<()> {
        if !(0.0..=1.0).contains(&req.temperature) {
            return Err(Error::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                req.temperature
            )));
        }
        if req.max_response_tokens == 0 {
            return Err(Error::InvalidRequest("max_response_tokens must be positive".into()));
        }
        self.check_budget(req)
    }

    fn send_with_retry(&self, req: &PromptRequest) -> (Result<super::ProviderReply>, u32) {
        let policy = &self.config.retry;
        let mut attempts = 0;
        loop {
            attempts += 1;
            let outcome = self.send_once(req);
            match outcome {
                Ok(reply) => return (Ok(reply), attempts),
                Err(ProviderError::Fatal(e)) => return (Err(e), attempts),
                Err(e) => {
                    if attempts > policy.max_retries {
                        return (
                            Err(Error::ProviderUnavailable {
                                attempts,
                                last_error: e.to_string(),
                            }),
                            attempts,
                        );
                    }
                    let delay = policy.backoff(attempts - 1);
                    log::info!("retrying {} after {e} (waiting {delay:?})", req.purpose);
                    std::thread::sleep(delay);
                }
            }
        }
    }

    fn send_once(&self, req: &PromptRequest) -> std::result::Result<super::ProviderReply, ProviderError> {
        self.slots.acquire();
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        let out = self.provider.send(req);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        self.slots.release();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ProviderReply, PurposeTag};
    use std::sync::atomic::AtomicU32;

    struct Flaky {
        failures_left: AtomicU32,
        error: fn() -> ProviderError,
        calls: AtomicU32,
    }

    impl Provider for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn send(&self, _req: &PromptRequest) -> std::result::Result<ProviderReply, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self
                .failures_left
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok()
            {
                return Err((self.error)());
            }
            Ok(ProviderReply {
                text: "ok".into(),
                truncated: false,
            })
        }
    }

    fn fast_config() -> GatewayConfig {
        GatewayConfig {
            retry: RetryPolicy {
                max_retries: 3,
                initial_backoff_ms: 1,
                multiplier: 2,
            },
            ..GatewayConfig::default()
        }
    }

    fn gateway(p: Arc<dyn Provider>) -> Gateway {
        Gateway::new(p, Arc::new(ManifestLog::in_memory("t", serde_json::json!({}))), fast_config())
    }

    #[test]
    fn backoff_is_exponential_from_one_second() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(0), Duration::from_secs(1));
        assert_eq!(p.backoff(1), Duration::from_secs(2));
        assert_eq!(p.backoff(2), Duration::from_secs(4));
    }

    #[test]
    fn transient_failures_are_retried() {
        let p = Arc::new(Flaky {
            failures_left: AtomicU32::new(2),
            error: || ProviderError::RateLimited("429".into()),
            calls: AtomicU32::new(0),
        });
        let gw = gateway(p.clone());
        let c = gw.complete(&PromptRequest::new("hi", PurposeTag::Other)).unwrap();
        assert_eq!(c.response_text, "ok");
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
        let m = gw.manifest().snapshot();
        assert_eq!(m.entries.len(), 1);
        assert_eq!(m.entries[0].model_call().unwrap().attempts, 3);
    }

    #[test]
    fn exhausted_retries_give_provider_unavailable() {
        let p = Arc::new(Flaky {
            failures_left: AtomicU32::new(100),
            error: || ProviderError::Transport("reset".into()),
            calls: AtomicU32::new(0),
        });
        let gw = gateway(p.clone());
        let err = gw.complete(&PromptRequest::new("hi", PurposeTag::Other)).unwrap_err();
        assert!(matches!(err, Error::ProviderUnavailable { attempts: 4, .. }));
        assert_eq!(p.calls.load(Ordering::SeqCst), 4);
        let m = gw.manifest().snapshot();
        assert_eq!(m.entries.len(), 1, "failed calls are logged too");
        match &m.entries[0].model_call().unwrap().outcome {
            CallOutcome::Failed { error_class, .. } => assert_eq!(error_class, "ProviderUnavailable"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fatal_errors_are_not_retried() {
        let p = Arc::new(Flaky {
            failures_left: AtomicU32::new(1),
            error: || ProviderError::Fatal(Error::ProviderRejected("400".into())),
            calls: AtomicU32::new(0),
        });
        let gw = gateway(p.clone());
        assert!(gw.complete(&PromptRequest::new("hi", PurposeTag::Other)).is_err());
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn budget_is_checked_before_sending() {
        let p = Arc::new(Flaky {
            failures_left: AtomicU32::new(0),
            error: || ProviderError::Transport(String::new()),
            calls: AtomicU32::new(0),
        });
        let gw = gateway(p.clone());
        // 16000 chars is 4000 tokens under the chars/4 counter
        let req = PromptRequest::new("a".repeat(16000), PurposeTag::Other).with_max_response_tokens(500);
        match gw.complete(&req) {
            Err(Error::TokenBudgetExceeded {
                prompt_tokens,
                response_tokens,
                limit,
            }) => assert_eq!((prompt_tokens, response_tokens, limit), (4000, 500, 4097)),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p.calls.load(Ordering::SeqCst), 0);
        assert_eq!(gw.manifest().len(), 1);
    }

    #[test]
    fn temperature_outside_unit_interval_rejected() {
        let p = Arc::new(Flaky {
            failures_left: AtomicU32::new(0),
            error: || ProviderError::Transport(String::new()),
            calls: AtomicU32::new(0),
        });
        let gw = gateway(p);
        let req = PromptRequest::new("x", PurposeTag::Other).with_temperature(1.5);
        assert!(matches!(gw.complete(&req), Err(Error::InvalidRequest(_))));
    }

    struct Slow {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl Provider for Slow {
        fn name(&self) -> &str {
            "slow"
        }
        fn send(&self, req: &PromptRequest) -> std::result::Result<ProviderReply, ProviderError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            // later requests finish first
            let n: u64 = req.prompt_text.parse().unwrap();
            std::thread::sleep(Duration::from_millis(30 - n));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok(ProviderReply {
                text: format!("answer {n}"),
                truncated: false,
            })
        }
    }

    #[test]
    fn batch_respects_bound_and_input_order() {
        let p = Arc::new(Slow {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let mut cfg = fast_config();
        cfg.max_in_flight = 3;
        let gw = Gateway::new(p.clone(), Arc::new(ManifestLog::in_memory("t", serde_json::json!({}))), cfg);
        let reqs: Vec<_> = (0..12).map(|i| PromptRequest::new(i.to_string(), PurposeTag::Other)).collect();
        let out = gw.complete_batch(&reqs);
        let texts: Vec<_> = out.into_iter().map(|r| r.unwrap().response_text).collect();
        let expected: Vec<_> = (0..12).map(|i| format!("answer {i}")).collect();
        assert_eq!(texts, expected);
        assert!(p.peak.load(Ordering::SeqCst) <= 3);
        assert!(gw.peak_in_flight() <= 3);
        assert!(gw.peak_in_flight() >= 2, "requests should overlap");
        assert_eq!(gw.in_flight(), 0);
        assert_eq!(gw.manifest().len(), 12);
    }
}
