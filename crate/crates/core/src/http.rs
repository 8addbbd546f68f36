//! Blocking JSON-over-HTTP client shared by the remote providers.

use std::thread;
use std::time::Duration;

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Retry/backoff policy for transport failures and retryable statuses
/// (429 and 5xx).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 200,
            max_backoff_ms: 5_000,
            timeout_secs: 60,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(16))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    bearer: Option<String>,
    policy: RetryPolicy,
}

impl JsonClient {
    /// `api_key_env` names an environment variable; the key itself is never
    /// taken from configuration.
    pub fn new(api_key_env: Option<&str>, policy: RetryPolicy) -> Result<Self> {
        let bearer = match api_key_env {
            Some(var) if !var.is_empty() => Some(
                std::env::var(var).map_err(|_| Error::Provider(format!("environment variable {var} is not set")))?,
            ),
            _ => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(policy.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(Self { agent, bearer, policy })
    }

    pub fn post<Req, Resp>(&self, url: &str, body: &Req) -> Result<Resp>
    where
        Req: Serialize + ?Sized,
        Resp: DeserializeOwned,
    {
        let attempts = self.policy.max_attempts.max(1);
        let mut last_err = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.policy.backoff(attempt - 1));
            }
            let mut req = self.agent.post(url).header("Content-Type", "application/json");
            if let Some(key) = &self.bearer {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 200 {
                        return resp
                            .body_mut()
                            .read_json::<Resp>()
                            .map_err(|e| Error::Provider(format!("{url}: bad response body: {e}")));
                    }
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    last_err = format!("{url}: HTTP {status}: {}", text.trim());
                    if status != 429 && status < 500 {
                        return Err(Error::Provider(last_err));
                    }
                }
                Err(e) => last_err = format!("{url}: {e}"),
            }
            warn!("attempt {}/{attempts} failed: {last_err}", attempt + 1);
        }
        Err(Error::Provider(last_err))
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn fast_policy() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 1,
            max_backoff_ms: 2,
            timeout_secs: 5,
        }
    }

    #[test]
    fn retries_server_errors() {
        let (url, seen) = testing::serve(vec![(503, "{}".into()), (200, r#"{"ok":true}"#.into())]);
        let client = JsonClient::new(None, fast_policy()).unwrap();
        let v: serde_json::Value = client.post(&url, &serde_json::json!({"x": 1})).unwrap();
        assert_eq!(v["ok"], true);
        assert_eq!(seen.lock().unwrap().len(), 2);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, seen) = testing::serve(vec![(400, r#"{"error":"bad"}"#.into())]);
        let client = JsonClient::new(None, fast_policy()).unwrap();
        let err = client
            .post::<_, serde_json::Value>(&url, &serde_json::json!({}))
            .unwrap_err();
        assert!(err.to_string().contains("400"));
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn missing_key_env_is_an_error() {
        let err = JsonClient::new(Some("CONTRASIM_TEST_UNSET_KEY_VAR"), fast_policy()).unwrap_err();
        assert!(err.to_string().contains("CONTRASIM_TEST_UNSET_KEY_VAR"));
    }
}
