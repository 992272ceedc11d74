//! Minimal JSON-over-HTTP client with bounded retries.

use std::thread;
use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl HttpClient {
    pub fn new(timeout: Duration, retry: RetryPolicy) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpClient { agent, retry }
    }

    /// POSTs `body` and parses the JSON response. Connection errors, 429 and
    /// 5xx are retried with exponential backoff; other statuses fail at once.
    pub fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
    ) -> Result<Value, String> {
        let mut attempt = 0;
        loop {
            let mut req = self.agent.post(url);
            if let Some(token) = bearer {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            let err = match req.send_json(body) {
                Ok(mut resp) => {
                    return resp
                        .body_mut()
                        .read_json::<Value>()
                        .map_err(|e| format!("invalid JSON response from {url}: {e}"))
                }
                Err(e) => e,
            };
            let retryable = match &err {
                ureq::Error::StatusCode(code) => *code == 429 || *code >= 500,
                _ => true,
            };
            if !retryable || attempt >= self.retry.max_retries {
                return Err(format!("{url}: {err} (after {} attempt(s))", attempt + 1));
            }
            let wait = self.retry.initial_backoff * 2u32.pow(attempt);
            log::warn!("request to {url} failed ({err}); retrying in {wait:?}");
            thread::sleep(wait);
            attempt += 1;
        }
    }
}
