//! CSV acquisition over HTTP(S).

use std::time::Duration;

use thiserror::Error;

pub const DEFAULT_CAP_BYTES: u64 = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchOptions {
    pub cap_bytes: u64,
    pub timeout: Duration,
    /// Extra attempts after a timeout or connection failure.
    pub retries: u32,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            cap_bytes: DEFAULT_CAP_BYTES,
            timeout: Duration::from_secs(60),
            retries: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("{url}: not found (HTTP 404)")]
    NotFound { url: String },
    #[error("{url}: HTTP status {status}")]
    Status { url: String, status: u16 },
    #[error("{url}: timed out")]
    Timeout { url: String },
    #[error("{url}: body exceeds the {cap} byte cap")]
    CapExceeded { url: String, cap: u64 },
    #[error("{url}: unsupported scheme (use http or https)")]
    Scheme { url: String },
    #[error("{url}: {message}")]
    Transport { url: String, message: String },
}

pub fn is_remote(location: &str) -> bool {
    location.starts_with("http://") || location.starts_with("https://")
}

/// Body of a `200` response to `GET url`, at most `cap_bytes` long.
pub fn fetch_csv(url: &str, options: &FetchOptions) -> Result<Vec<u8>, FetchError> {
    if !is_remote(url) {
        return Err(FetchError::Scheme { url: url.into() });
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(options.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut attempt = 0;
    loop {
        match fetch_once(&agent, url, options.cap_bytes) {
            Err(e @ (FetchError::Timeout { .. } | FetchError::Transport { .. })) if attempt < options.retries => {
                log::warn!("{e}; retrying");
                attempt += 1;
            }
            other => return other,
        }
    }
}

fn fetch_once(agent: &ureq::Agent, url: &str, cap: u64) -> Result<Vec<u8>, FetchError> {
    let map = |e: ureq::Error| match e {
        ureq::Error::Timeout(_) => FetchError::Timeout { url: url.into() },
        ureq::Error::BodyExceedsLimit(_) => FetchError::CapExceeded { url: url.into(), cap },
        other => FetchError::Transport {
            url: url.into(),
            message: other.to_string(),
        },
    };
    let response = agent.get(url).call().map_err(map)?;
    match response.status().as_u16() {
        200 => response.into_body().with_config().limit(cap).read_to_vec().map_err(map),
        404 => Err(FetchError::NotFound { url: url.into() }),
        status => Err(FetchError::Status {
            url: url.into(),
            status,
        }),
    }
}
