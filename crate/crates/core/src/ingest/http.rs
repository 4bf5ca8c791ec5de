//! Rate-limited HTTP with a content-addressed on-disk cache.
//!
//! Cache layout: one file per request key under the cache directory, named by the
//! SHA-256 of the key. Each file holds a one-line JSON header
//! (`{"request_key": ..., "fetched_at": ...}`) followed by the raw payload bytes.
//! Writes go through a temp file and a rename, so concurrent writers of the same key
//! leave one complete entry behind.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Option<Vec<u8>>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        HttpRequest { method: Method::Get, url: url.into(), headers: Vec::new(), body: None }
    }

    pub fn post_json(url: impl Into<String>, body: Vec<u8>) -> Self {
        HttpRequest {
            method: Method::Post,
            url: url.into(),
            headers: vec![("Content-Type".into(), "application/json".into())],
            body: Some(body),
        }
    }

    pub fn header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

#[derive(Debug, Error)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

pub trait Transport: Send + Sync {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Blocking HTTPS transport.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        UreqTransport { agent: ureq::AgentBuilder::new().timeout(timeout).build() }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl Transport for UreqTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut r = match req.method {
            Method::Get => self.agent.get(&req.url),
            Method::Post => self.agent.post(&req.url),
        };
        for (k, v) in &req.headers {
            r = r.set(k, v);
        }
        let result = match &req.body {
            Some(body) => r.send_bytes(body),
            None => r.call(),
        };
        let resp = match result {
            Ok(resp) => resp,
            Err(ureq::Error::Status(_, resp)) => resp,
            Err(e) => return Err(TransportError(e.to_string())),
        };
        let status = resp.status();
        let mut body = Vec::new();
        io::Read::read_to_end(&mut resp.into_reader(), &mut body).map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Replays recorded responses from a directory: a GET for `.../<name>` is answered with
/// `<root>/<name>.json`, and 404 when that file does not exist. Query strings are ignored.
pub struct FileTransport {
    root: PathBuf,
}

impl FileTransport {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FileTransport { root: root.into() }
    }
}

impl Transport for FileTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        if req.method != Method::Get {
            return Ok(HttpResponse { status: 405, body: Vec::new() });
        }
        let path = req.url.split(['?', '#']).next().unwrap_or("");
        let name = path.rsplit('/').next().unwrap_or("");
        // Keep lookups inside the root.
        let name = name.replace(['\\', ':'], "_");
        if name.is_empty() || name.starts_with('.') {
            return Ok(HttpResponse { status: 404, body: Vec::new() });
        }
        match fs::read(self.root.join(format!("{name}.json"))) {
            Ok(body) => Ok(HttpResponse { status: 200, body }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(HttpResponse { status: 404, body: Vec::new() }),
            Err(e) => Err(TransportError(e.to_string())),
        }
    }
}

pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Deterministic clock for tests: `sleep` advances time instantly.
#[derive(Default)]
pub struct FakeClock {
    nanos: AtomicU64,
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }
    fn sleep(&self, d: Duration) {
        self.nanos.fetch_add(d.as_nanos() as u64, Ordering::SeqCst);
    }
}

/// Spaces request starts at least `1 / requests_per_second` apart.
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Duration>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64, clock: Arc<dyn Clock>) -> Self {
        assert!(requests_per_second > 0.0, "requests_per_second must be positive");
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / requests_per_second),
            next_slot: Mutex::new(Duration::ZERO),
            clock,
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Blocks until the caller may issue one request.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next_slot.lock().expect("rate limiter poisoned");
            let now = self.clock.now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            self.clock.sleep(wait);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request_key: String,
    #[serde(skip)]
    pub payload: Vec<u8>,
    /// Seconds since the Unix epoch.
    pub fetched_at: u64,
}

#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(DiskCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, request_key: &str) -> PathBuf {
        self.dir.join(format!("{}.entry", sha256_hex(request_key.as_bytes())))
    }

    pub fn get(&self, request_key: &str) -> io::Result<Option<CacheEntry>> {
        let bytes = match fs::read(self.path_for(request_key)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "cache entry without header"))?;
        let mut entry: CacheEntry =
            serde_json::from_slice(&bytes[..split]).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        if entry.request_key != request_key {
            return Err(io::Error::new(io::ErrorKind::InvalidData, format!("cache key collision for {request_key:?}")));
        }
        entry.payload = bytes[split + 1..].to_vec();
        Ok(Some(entry))
    }

    pub fn put(&self, request_key: &str, payload: &[u8]) -> io::Result<()> {
        static SEQ: AtomicUsize = AtomicUsize::new(0);
        let fetched_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let header =
            serde_json::to_vec(&CacheEntry { request_key: request_key.to_string(), payload: Vec::new(), fetched_at })
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let target = self.path_for(request_key);
        let tmp = target.with_extension(format!("tmp.{}.{}", std::process::id(), SEQ.fetch_add(1, Ordering::Relaxed)));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&header)?;
            f.write_all(b"\n")?;
            f.write_all(payload)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &target)
    }
}

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("unexpected HTTP status {status} for {url}")]
    Status { status: u16, url: String },
    #[error("offline and no cache entry for {0:?}")]
    OfflineMiss(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("cache: {0}")]
    Cache(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, base_backoff: Duration::from_millis(500) }
    }
}

/// Cache-first request execution shared by the metadata and chat-completion clients.
pub struct CachedHttp {
    transport: Arc<dyn Transport>,
    cache: Option<DiskCache>,
    limiter: RateLimiter,
    retry: RetryPolicy,
    offline: bool,
    bypass_cache: bool,
    network_requests: AtomicUsize,
}

impl CachedHttp {
    pub fn new(transport: Arc<dyn Transport>, cache: Option<DiskCache>, limiter: RateLimiter) -> Self {
        CachedHttp {
            transport,
            cache,
            limiter,
            retry: RetryPolicy::default(),
            offline: false,
            bypass_cache: false,
            network_requests: AtomicUsize::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Never touch the transport; cache misses become [`HttpError::OfflineMiss`].
    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    /// Skip cache reads (responses are still written back).
    pub fn bypass_cache(mut self, bypass: bool) -> Self {
        self.bypass_cache = bypass;
        self
    }

    /// Requests that actually left the process.
    pub fn network_requests(&self) -> usize {
        self.network_requests.load(Ordering::SeqCst)
    }

    pub fn execute(&self, request_key: &str, req: &HttpRequest) -> Result<Vec<u8>, HttpError> {
        if let (Some(cache), false) = (&self.cache, self.bypass_cache) {
            if let Some(entry) = cache.get(request_key)? {
                return Ok(entry.payload);
            }
        }
        if self.offline {
            return Err(HttpError::OfflineMiss(request_key.to_string()));
        }
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.limiter.acquire();
            self.network_requests.fetch_add(1, Ordering::SeqCst);
            let retryable = match self.transport.send(req) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    if let Some(cache) = &self.cache {
                        cache.put(request_key, &resp.body)?;
                    }
                    return Ok(resp.body);
                }
                Ok(resp) if resp.status == 404 => return Err(HttpError::NotFound(req.url.clone())),
                Ok(resp) if resp.status == 429 || resp.status >= 500 => HttpError::RateLimited { attempts: attempt },
                Ok(resp) => return Err(HttpError::Status { status: resp.status, url: req.url.clone() }),
                Err(e) => HttpError::Transport(e),
            };
            if attempt >= self.retry.max_attempts {
                return Err(retryable);
            }
            log::warn!("request {request_key:?} failed ({retryable}); retrying");
            self.limiter.clock().sleep(self.retry.base_backoff * 2u32.pow(attempt - 1));
        }
    }
}
