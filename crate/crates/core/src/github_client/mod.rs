//! Client for GitHub's issue-search and issue-comments REST endpoints.
//!
//! A [`Session`] runs either live, over HTTPS with rate accounting, or in
//! replay mode against a recorded fixture directory. Both modes share the
//! same request path, so replayed runs exercise the same pagination,
//! retry and decoding code as live ones.

mod clock;
mod fixture;
mod rate;
mod retry;
mod transport;
pub mod wire;

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use log::{debug, warn};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::Deserialize;
use thiserror::Error;
use url::Url;

pub use clock::{Clock, SimulatedClock, SystemClock};
pub use fixture::{
    Fixture, FixtureEntry, FixtureError, RecordingTransport, ReplayTransport, RequestKey,
    MANIFEST_FILE,
};
pub use rate::{
    ProbeBody, RateGate, RateStatus, Resource, CORE_LIMIT_ANONYMOUS, CORE_LIMIT_AUTHENTICATED,
    SEARCH_LIMIT_ANONYMOUS, SEARCH_LIMIT_AUTHENTICATED, UNLIMITED,
};
pub use retry::RetryPolicy;
pub use transport::{HttpRequest, HttpResponse, ReqwestTransport, Transport, TransportError};

pub const DEFAULT_ENDPOINT: &str = "https://api.github.com";
pub const DEFAULT_USER_AGENT: &str = concat!("issuelens/", env!("CARGO_PKG_VERSION"));
pub const TOKEN_ENV_VAR: &str = "GITHUB_TOKEN";
/// Largest page size the endpoints accept.
pub const MAX_PAGE_SIZE: u32 = 100;
/// The search endpoint never returns more than this many results.
pub const MAX_SEARCH_RESULTS: usize = 1000;
pub const DEFAULT_PARALLELISM: usize = 4;

/// Consecutive rate-limit responses tolerated for one request.
const MAX_RATE_LIMIT_WAITS: u32 = 4;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("GitHub rejected the access token (HTTP 401)")]
    InvalidToken,
    #[error("fixture directory unavailable: {0}")]
    FixtureNotFound(#[from] FixtureError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("search query rejected (HTTP 422): {0}")]
    QueryRejected(String),
    #[error("rate limit exhausted until {reset_at}")]
    RateLimited { reset_at: DateTime<Utc> },
    #[error("network failure after {attempts} attempt(s): {detail}")]
    NetworkFailure { attempts: u32, detail: String },
    #[error("issue {issue_id} is gone (HTTP {status})")]
    IssueGone { issue_id: u64, status: u16 },
    #[error("{url} not found (HTTP {status})")]
    NotFound { url: String, status: u16 },
    #[error("{url} forbidden: {message}")]
    Forbidden { url: String, message: String },
    #[error("{url} answered HTTP {status}")]
    UnexpectedStatus { url: String, status: u16 },
    #[error("decoding response from {url}: {message}")]
    Decode { url: String, message: String },
}

/// One issue hit from the search endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IssueRef {
    pub id: u64,
    pub number: u64,
    pub repo_full_name: String,
    pub title: String,
    pub body: String,
    pub html_url: String,
    pub api_url: String,
    pub comments_url: String,
    pub comment_count: u64,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

/// One unprocessed comment. `body` is kept exactly as received.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawComment {
    pub issue_id: u64,
    pub comment_id: u64,
    pub author_login: String,
    pub body: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SortKey {
    #[default]
    BestMatch,
    Comments,
    Created,
    Updated,
    Reactions,
}

impl SortKey {
    pub const ALL: [SortKey; 5] = [
        SortKey::BestMatch,
        SortKey::Comments,
        SortKey::Created,
        SortKey::Updated,
        SortKey::Reactions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SortKey::BestMatch => "best-match",
            SortKey::Comments => "comments",
            SortKey::Created => "created",
            SortKey::Updated => "updated",
            SortKey::Reactions => "reactions",
        }
    }

    /// Value of the `sort` query parameter; best match means "no parameter".
    fn query_param(self) -> Option<&'static str> {
        match self {
            SortKey::BestMatch => None,
            other => Some(other.as_str()),
        }
    }
}

impl fmt::Display for SortKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SortKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SortKey::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                format!(
                    "unknown sort key {s:?} (expected one of: {})",
                    SortKey::ALL.map(SortKey::as_str).join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SortOrder {
    Asc,
    #[default]
    Desc,
}

impl SortOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            SortOrder::Asc => "asc",
            SortOrder::Desc => "desc",
        }
    }
}

impl fmt::Display for SortOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SortOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asc" => Ok(SortOrder::Asc),
            "desc" => Ok(SortOrder::Desc),
            _ => Err(format!("unknown order {s:?} (expected asc or desc)")),
        }
    }
}

/// Where a session gets its responses from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mode {
    Live,
    Replay(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionMode {
    Live,
    /// Replaying recorded responses; the path is `None` for in-memory fixtures.
    Replay(Option<PathBuf>),
}

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub token: Option<String>,
    pub base_endpoint: String,
    pub user_agent: String,
    pub per_page: u32,
    pub parallelism: usize,
    /// When false, an exhausted budget fails with `RateLimited` instead of
    /// sleeping until the reset.
    pub wait_on_rate_limit: bool,
    pub retry: RetryPolicy,
    pub jitter_seed: u64,
    pub request_timeout: Duration,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            token: None,
            base_endpoint: DEFAULT_ENDPOINT.to_string(),
            user_agent: DEFAULT_USER_AGENT.to_string(),
            per_page: MAX_PAGE_SIZE,
            parallelism: DEFAULT_PARALLELISM,
            wait_on_rate_limit: true,
            retry: RetryPolicy::default(),
            jitter_seed: 0x5eed,
            request_timeout: Duration::from_secs(30),
        }
    }
}

impl SessionOptions {
    pub fn with_token(token: Option<String>) -> Self {
        SessionOptions {
            token,
            ..SessionOptions::default()
        }
    }
}

/// Picks the credential: an explicit value wins over `GITHUB_TOKEN`.
pub fn resolve_token(explicit: Option<&str>, env_value: Option<&str>) -> Option<String> {
    explicit
        .or(env_value)
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
}

/// Opens a session with default options.
pub fn open_session(token: Option<String>, mode: Mode) -> Result<Session, ClientError> {
    Session::open(SessionOptions::with_token(token), mode)
}

pub struct Session {
    token: Option<String>,
    base_endpoint: Url,
    user_agent: String,
    mode: SessionMode,
    per_page: u32,
    parallelism: usize,
    wait_on_rate_limit: bool,
    retry: RetryPolicy,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    gate: Mutex<RateGate>,
    rng: Mutex<StdRng>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .field("base_endpoint", &self.base_endpoint.as_str())
            .field("user_agent", &self.user_agent)
            .field("mode", &self.mode)
            .field("per_page", &self.per_page)
            .field("parallelism", &self.parallelism)
            .finish_non_exhaustive()
    }
}

impl Session {
    pub fn open(options: SessionOptions, mode: Mode) -> Result<Session, ClientError> {
        match mode {
            Mode::Live => {
                let transport = ReqwestTransport::new(options.request_timeout).map_err(|e| {
                    ClientError::NetworkFailure {
                        attempts: 0,
                        detail: e.to_string(),
                    }
                })?;
                Session::live_with(options, Arc::new(transport), Arc::new(SystemClock))
            }
            Mode::Replay(dir) => {
                let transport = ReplayTransport::open(&dir)?;
                let mut session = Session::build(
                    options,
                    SessionMode::Replay(Some(dir)),
                    Arc::new(transport),
                    Arc::new(SimulatedClock::at_epoch()),
                )?;
                session.token = None;
                Ok(session)
            }
        }
    }

    /// A live session over an arbitrary transport and clock. Probes
    /// `/rate_limit` once to validate the credential.
    pub fn live_with(
        options: SessionOptions,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Result<Session, ClientError> {
        let session = Session::build(options, SessionMode::Live, transport, clock)?;
        session.probe()?;
        Ok(session)
    }

    /// A replay session over an in-memory fixture.
    pub fn replay(fixture: Fixture, options: SessionOptions) -> Result<Session, ClientError> {
        Session::build(
            SessionOptions {
                token: None,
                ..options
            },
            SessionMode::Replay(None),
            Arc::new(ReplayTransport::new(fixture)),
            Arc::new(SimulatedClock::at_epoch()),
        )
    }

    fn build(
        options: SessionOptions,
        mode: SessionMode,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Result<Session, ClientError> {
        let base_endpoint =
            Url::parse(options.base_endpoint.trim_end_matches('/')).map_err(|e| {
                ClientError::InvalidArgument(format!(
                    "base endpoint {:?}: {e}",
                    options.base_endpoint
                ))
            })?;
        if options.per_page == 0 || options.per_page > MAX_PAGE_SIZE {
            return Err(ClientError::InvalidArgument(format!(
                "per_page must be in 1..={MAX_PAGE_SIZE}"
            )));
        }
        if options.retry.max_attempts == 0 {
            return Err(ClientError::InvalidArgument(
                "retry budget must allow one attempt".into(),
            ));
        }
        let token = options.token.filter(|t| !t.trim().is_empty());
        Ok(Session {
            gate: Mutex::new(RateGate::new(token.is_some())),
            token,
            base_endpoint,
            user_agent: options.user_agent,
            mode,
            per_page: options.per_page,
            parallelism: options.parallelism.max(1),
            wait_on_rate_limit: options.wait_on_rate_limit,
            retry: options.retry,
            transport,
            clock,
            rng: Mutex::new(StdRng::seed_from_u64(options.jitter_seed)),
        })
    }

    pub fn mode(&self) -> &SessionMode {
        &self.mode
    }

    pub fn is_live(&self) -> bool {
        self.mode == SessionMode::Live
    }

    pub fn has_token(&self) -> bool {
        self.token.is_some()
    }

    pub fn user_agent(&self) -> &str {
        &self.user_agent
    }

    pub fn base_endpoint(&self) -> &Url {
        &self.base_endpoint
    }

    /// Bound on concurrent comment fetches.
    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    fn endpoint(&self, path: &str) -> Url {
        let mut url = self.base_endpoint.clone();
        let base_path = url.path().trim_end_matches('/').to_string();
        url.set_path(&format!("{base_path}{path}"));
        url
    }

    fn request(&self, url: Url) -> HttpRequest {
        let mut headers = vec![
            (
                "Accept".to_string(),
                "application/vnd.github+json".to_string(),
            ),
            ("User-Agent".to_string(), self.user_agent.clone()),
        ];
        if let Some(token) = &self.token {
            headers.push(("Authorization".to_string(), format!("Bearer {token}")));
        }
        HttpRequest { url, headers }
    }

    fn acquire(&self, resource: Resource) -> Result<(), ClientError> {
        if !self.is_live() {
            return Ok(());
        }
        loop {
            let now = self.clock.now();
            let verdict = self
                .gate
                .lock()
                .expect("rate gate poisoned")
                .try_acquire(resource, now);
            match verdict {
                Ok(()) => return Ok(()),
                Err(reset_at) if !self.wait_on_rate_limit => {
                    return Err(ClientError::RateLimited { reset_at })
                }
                Err(reset_at) => {
                    let wait = (reset_at - now).to_std().unwrap_or(Duration::ZERO);
                    debug!("{resource:?} budget exhausted, waiting {wait:?}");
                    self.clock.sleep(wait.max(Duration::from_millis(1)));
                }
            }
        }
    }

    fn backoff(&self, retry: u32) -> Duration {
        let mut rng = self.rng.lock().expect("rng poisoned");
        self.retry.delay(retry, &mut *rng)
    }

    /// How long a 403/429 asks us to wait, if it is a rate-limit answer.
    fn rate_limit_wait(&self, response: &HttpResponse) -> Option<Duration> {
        if let Some(secs) = response
            .header("retry-after")
            .and_then(|v| v.trim().parse::<u64>().ok())
        {
            return Some(Duration::from_secs(secs));
        }
        if response.header("x-ratelimit-remaining").map(str::trim) == Some("0") {
            let reset = response
                .header("x-ratelimit-reset")
                .and_then(|v| v.trim().parse::<i64>().ok())
                .and_then(|s| DateTime::from_timestamp(s, 0));
            let wait = reset
                .and_then(|r| (r - self.clock.now()).to_std().ok())
                .unwrap_or(Duration::ZERO);
            return Some(wait.max(Duration::from_secs(1)));
        }
        (response.status == 429).then_some(Duration::from_secs(60))
    }

    /// Sends one GET through the rate gate and the retry policy.
    fn get(&self, resource: Option<Resource>, url: Url) -> Result<HttpResponse, ClientError> {
        let mut failures = 0u32;
        let mut limit_waits = 0u32;
        loop {
            if let Some(resource) = resource {
                self.acquire(resource)?;
            }
            let request = self.request(url.clone());
            let outcome = self.transport.send(&request);
            let detail = match outcome {
                Err(e) if e.is_transient() => e.to_string(),
                Err(e) => {
                    return Err(ClientError::NetworkFailure {
                        attempts: failures + 1,
                        detail: e.to_string(),
                    })
                }
                Ok(response) => {
                    if self.is_live() {
                        self.gate
                            .lock()
                            .expect("rate gate poisoned")
                            .observe(resource.unwrap_or(Resource::Core), &response);
                    }
                    match response.status {
                        200..=299 => return Ok(response),
                        403 | 429 => match self.rate_limit_wait(&response) {
                            Some(wait) => {
                                limit_waits += 1;
                                let reset_at = self.clock.now()
                                    + chrono::Duration::from_std(wait)
                                        .unwrap_or(chrono::Duration::MAX);
                                if !self.wait_on_rate_limit || limit_waits > MAX_RATE_LIMIT_WAITS {
                                    return Err(ClientError::RateLimited { reset_at });
                                }
                                warn!("rate limited on {url}, retrying in {wait:?}");
                                self.clock.sleep(wait);
                                continue;
                            }
                            None => {
                                return Err(ClientError::Forbidden {
                                    url: url.to_string(),
                                    message: error_message(&response.body),
                                })
                            }
                        },
                        status if retry::is_transient_status(status) => format!("HTTP {status}"),
                        status => return Err(status_error(&url, status, &response.body)),
                    }
                }
            };
            failures += 1;
            if failures >= self.retry.max_attempts {
                return Err(ClientError::NetworkFailure {
                    attempts: failures,
                    detail,
                });
            }
            let delay = self.backoff(failures);
            debug!("transient failure on {url} ({detail}), retry {failures} in {delay:?}");
            self.clock.sleep(delay);
        }
    }

    fn probe(&self) -> Result<RateStatus, ClientError> {
        let url = self.endpoint("/rate_limit");
        let response = self.get(None, url.clone())?;
        let body: ProbeBody = decode(&url, &response.body)?;
        let mut gate = self.gate.lock().expect("rate gate poisoned");
        gate.observe_probe(&body);
        Ok(gate.status(self.clock.now()))
    }

    /// Current budgets. Replay sessions report an unlimited sentinel.
    pub fn check_rate_limit(&self) -> Result<RateStatus, ClientError> {
        if !self.is_live() {
            return Ok(RateStatus::unlimited(self.clock.now()));
        }
        self.probe()
    }

    /// Budgets as tracked locally, without a network round trip.
    pub fn cached_rate_status(&self) -> RateStatus {
        if !self.is_live() {
            return RateStatus::unlimited(self.clock.now());
        }
        self.gate
            .lock()
            .expect("rate gate poisoned")
            .status(self.clock.now())
    }

    /// Runs an issue search, paging transparently, and returns at most
    /// `limit` distinct issues in endpoint order.
    pub fn search_issues(
        &self,
        query: &str,
        limit: usize,
        sort: SortKey,
        order: SortOrder,
    ) -> Result<Vec<IssueRef>, ClientError> {
        if query.trim().is_empty() {
            return Err(ClientError::InvalidArgument("search query is empty".into()));
        }
        if !(1..=MAX_SEARCH_RESULTS).contains(&limit) {
            return Err(ClientError::InvalidArgument(format!(
                "limit {limit} outside 1..={MAX_SEARCH_RESULTS}"
            )));
        }
        let per_page = self.per_page as usize;
        let max_pages = MAX_SEARCH_RESULTS.div_ceil(per_page);
        let mut seen = HashSet::new();
        let mut issues = Vec::new();

        for page in 1..=max_pages {
            let mut url = self.endpoint("/search/issues");
            {
                let mut pairs = url.query_pairs_mut();
                pairs.append_pair("q", query);
                pairs.append_pair("per_page", &per_page.to_string());
                pairs.append_pair("page", &page.to_string());
                if let Some(sort) = sort.query_param() {
                    pairs.append_pair("sort", sort);
                }
                pairs.append_pair("order", order.as_str());
            }
            let response = self.get(Some(Resource::Search), url.clone())?;
            let body: SearchBody = decode(&url, &response.body)?;
            let returned = body.items.len();
            for item in body.items {
                let issue = item.into_issue(&url)?;
                if seen.insert(issue.id) {
                    issues.push(issue);
                    if issues.len() == limit {
                        return Ok(issues);
                    }
                }
            }
            if returned < per_page || (page * per_page) as u64 >= body.total_count {
                break;
            }
        }
        Ok(issues)
    }

    /// All comments of `issue` in ascending creation order.
    pub fn fetch_comments(&self, issue: &IssueRef) -> Result<Vec<RawComment>, ClientError> {
        if issue.comments_url.trim().is_empty() {
            return Err(ClientError::InvalidArgument(format!(
                "issue {} has no comments URL",
                issue.id
            )));
        }
        if issue.comment_count == 0 {
            return Ok(Vec::new());
        }
        let base = Url::parse(&issue.comments_url).map_err(|e| {
            ClientError::InvalidArgument(format!("comments URL {:?}: {e}", issue.comments_url))
        })?;
        let per_page = self.per_page as usize;
        let mut seen = HashSet::new();
        let mut comments = Vec::new();
        for page in 1.. {
            let mut url = base.clone();
            url.query_pairs_mut()
                .append_pair("per_page", &per_page.to_string())
                .append_pair("page", &page.to_string());
            let response = self
                .get(Some(Resource::Core), url.clone())
                .map_err(|e| match e {
                    ClientError::NotFound { status, .. } => ClientError::IssueGone {
                        issue_id: issue.id,
                        status,
                    },
                    other => other,
                })?;
            let items: Vec<WireComment> = decode(&url, &response.body)?;
            let returned = items.len();
            for item in items {
                if seen.insert(item.id) {
                    comments.push(item.into_comment(issue.id));
                }
            }
            if returned < per_page {
                break;
            }
        }
        comments.sort_by_key(|c| c.created_at);
        Ok(comments)
    }
}

fn error_message(body: &str) -> String {
    #[derive(Deserialize)]
    struct ErrorBody {
        message: String,
    }
    serde_json::from_str::<ErrorBody>(body)
        .map(|b| b.message)
        .unwrap_or_else(|_| body.chars().take(200).collect())
}

fn status_error(url: &Url, status: u16, body: &str) -> ClientError {
    match status {
        401 => ClientError::InvalidToken,
        404 | 410 => ClientError::NotFound {
            url: url.to_string(),
            status,
        },
        422 => ClientError::QueryRejected(error_message(body)),
        _ => ClientError::UnexpectedStatus {
            url: url.to_string(),
            status,
        },
    }
}

fn decode<'a, T: Deserialize<'a>>(url: &Url, body: &'a str) -> Result<T, ClientError> {
    serde_json::from_str(body).map_err(|e| ClientError::Decode {
        url: url.to_string(),
        message: e.to_string(),
    })
}

#[derive(Debug, Deserialize)]
struct SearchBody {
    #[serde(default)]
    total_count: u64,
    items: Vec<WireIssue>,
}

#[derive(Debug, Deserialize)]
struct WireIssue {
    id: u64,
    number: u64,
    title: String,
    body: Option<String>,
    html_url: String,
    url: String,
    comments_url: String,
    #[serde(default)]
    comments: u64,
    repository_url: Option<String>,
    created_at: DateTime<Utc>,
    updated_at: DateTime<Utc>,
}

impl WireIssue {
    fn into_issue(self, source: &Url) -> Result<IssueRef, ClientError> {
        if self.id == 0 || self.html_url.is_empty() || self.url.is_empty() {
            return Err(ClientError::Decode {
                url: source.to_string(),
                message: format!("issue {} lacks an id or URLs", self.number),
            });
        }
        let repo_full_name = self
            .repository_url
            .as_deref()
            .and_then(|u| u.split_once("/repos/").map(|(_, name)| name.to_string()))
            .or_else(|| repo_from_html_url(&self.html_url))
            .unwrap_or_default();
        Ok(IssueRef {
            id: self.id,
            number: self.number,
            repo_full_name,
            title: self.title,
            body: self.body.unwrap_or_default(),
            html_url: self.html_url,
            api_url: self.url,
            comments_url: self.comments_url,
            comment_count: self.comments,
            created_at: self.created_at,
            updated_at: self.updated_at,
        })
    }
}

fn repo_from_html_url(html_url: &str) -> Option<String> {
    let url = Url::parse(html_url).ok()?;
    let mut segments = url.path_segments()?;
    let owner = segments.next()?;
    let name = segments.next()?;
    Some(format!("{owner}/{name}"))
}

#[derive(Debug, Deserialize)]
struct WireUser {
    login: String,
}

#[derive(Debug, Deserialize)]
struct WireComment {
    id: u64,
    user: Option<WireUser>,
    body: Option<String>,
    created_at: DateTime<Utc>,
}

impl WireComment {
    fn into_comment(self, issue_id: u64) -> RawComment {
        RawComment {
            issue_id,
            comment_id: self.id,
            author_login: self.user.map_or_else(|| "ghost".to_string(), |u| u.login),
            body: self.body.unwrap_or_default(),
            created_at: self.created_at,
        }
    }
}
