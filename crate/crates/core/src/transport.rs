//! Blocking HTTP transport used by the wiki client and the HTTP backend.
//!
//! The trait exists so tests can substitute canned responses, or a transport
//! that fails on any use to prove a code path stays offline.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Duration;

use serde_json::Value;

use crate::error::{Error, Result};

pub trait Transport: Send + Sync {
    fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<String>;

    fn post_json(&self, url: &str, body: &Value) -> Result<String>;
}

#[derive(Clone, Debug)]
pub struct TransportConfig {
    pub timeout: Duration,
    pub retries: u32,
    pub user_agent: String,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            timeout: Duration::from_secs(30),
            retries: 2,
            user_agent: concat!("kgmcqa/", env!("CARGO_PKG_VERSION")).to_owned(),
        }
    }
}

pub struct HttpTransport {
    agent: ureq::Agent,
    retries: u32,
}

impl HttpTransport {
    pub fn new(config: &TransportConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .user_agent(config.user_agent.as_str())
            .build()
            .into();
        HttpTransport {
            agent,
            retries: config.retries,
        }
    }

    fn with_retries(&self, mut call: impl FnMut() -> std::result::Result<String, ureq::Error>) -> Result<String> {
        let mut attempt = 0;
        loop {
            match call() {
                Ok(body) => return Ok(body),
                Err(ureq::Error::StatusCode(code)) if (400..500).contains(&code) => {
                    return Err(Error::Protocol(format!("HTTP status {code}")));
                }
                Err(e) if attempt < self.retries => {
                    attempt += 1;
                    log::debug!("request failed ({e}), retry {attempt}/{}", self.retries);
                    thread::sleep(Duration::from_millis(200 * u64::from(attempt)));
                }
                Err(e) => return Err(Error::Transport(e.to_string())),
            }
        }
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<String> {
        self.with_retries(|| {
            let mut req = self.agent.get(url);
            for (k, v) in query {
                req = req.query(*k, *v);
            }
            req.call()?.body_mut().read_to_string()
        })
    }

    fn post_json(&self, url: &str, body: &Value) -> Result<String> {
        self.with_retries(|| self.agent.post(url).send_json(body)?.body_mut().read_to_string())
    }
}

/// Refuses every request and counts the attempts.
#[derive(Debug, Default)]
pub struct OfflineTransport {
    attempts: AtomicUsize,
}

impl OfflineTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

impl Transport for OfflineTransport {
    fn get(&self, url: &str, _query: &[(&str, &str)]) -> Result<String> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        Err(Error::Transport(format!("network disabled (GET {url})")))
    }

    fn post_json(&self, url: &str, _body: &Value) -> Result<String> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        Err(Error::Transport(format!("network disabled (POST {url})")))
    }
}
