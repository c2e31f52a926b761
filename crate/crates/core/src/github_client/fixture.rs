//! Recorded HTTP fixtures.
//!
//! A fixture directory holds `manifest.json` plus, for every recorded
//! request, the verbatim response body and a `<name>.meta.json` sidecar
//! with the status code and the rate-limit headers:
//!
//! ```text
//! manifest.json
//! search_issues_p1.json
//! search_issues_p1.meta.json
//! ...
//! ```
//!
//! Requests are matched on URL path plus the decoded query parameters,
//! ignoring host and parameter order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use url::Url;

use super::transport::{HttpRequest, HttpResponse, Transport, TransportError};

pub const MANIFEST_FILE: &str = "manifest.json";
const FIXTURE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("fixture directory {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("writing fixture {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RequestKey {
    pub path: String,
    pub query: BTreeMap<String, String>,
}

impl RequestKey {
    pub fn from_url(url: &Url) -> Self {
        RequestKey {
            path: url.path().to_string(),
            query: url.query_pairs().into_owned().collect(),
        }
    }
}

impl std::fmt::Display for RequestKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GET {}", self.path)?;
        for (i, (k, v)) in self.query.iter().enumerate() {
            write!(f, "{}{k}={v}", if i == 0 { '?' } else { '&' })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureEntry {
    pub name: String,
    pub key: RequestKey,
    pub response: HttpResponse,
}

/// An in-memory set of recorded responses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fixture {
    entries: Vec<FixtureEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    entries: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    method: String,
    path: String,
    #[serde(default)]
    query: BTreeMap<String, String>,
    body: String,
    meta: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    status: u16,
    #[serde(default)]
    headers: BTreeMap<String, String>,
}

impl Fixture {
    pub fn new() -> Self {
        Fixture::default()
    }

    pub fn entries(&self) -> &[FixtureEntry] {
        &self.entries
    }

    /// Adds or replaces the response recorded for `key`.
    pub fn insert(&mut self, name: impl Into<String>, key: RequestKey, response: HttpResponse) {
        let name = name.into();
        if let Some(existing) = self.entries.iter_mut().find(|e| e.key == key) {
            existing.response = response;
            return;
        }
        self.entries.push(FixtureEntry {
            name,
            key,
            response,
        });
    }

    /// Convenience for building fixtures in code.
    pub fn respond(
        &mut self,
        path: &str,
        query: &[(&str, &str)],
        response: HttpResponse,
    ) -> &mut Self {
        let name = format!("entry_{:04}", self.entries.len() + 1);
        let key = RequestKey {
            path: path.to_string(),
            query: query
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        };
        self.insert(name, key, response);
        self
    }

    pub fn lookup(&self, key: &RequestKey) -> Option<&HttpResponse> {
        self.entries
            .iter()
            .find(|e| &e.key == key)
            .map(|e| &e.response)
    }

    pub fn load(dir: &Path) -> Result<Self, FixtureError> {
        let unreadable = |reason: String| FixtureError::Unreadable {
            path: dir.to_path_buf(),
            reason,
        };
        if !dir.is_dir() {
            return Err(unreadable("not a directory".into()));
        }
        let manifest_text = fs::read_to_string(dir.join(MANIFEST_FILE))
            .map_err(|e| unreadable(format!("{MANIFEST_FILE}: {e}")))?;
        let manifest: Manifest = serde_json::from_str(&manifest_text)
            .map_err(|e| unreadable(format!("{MANIFEST_FILE}: {e}")))?;
        if manifest.format_version != FIXTURE_FORMAT_VERSION {
            return Err(unreadable(format!(
                "unsupported manifest format_version {}",
                manifest.format_version
            )));
        }

        let mut fixture = Fixture::new();
        for entry in manifest.entries {
            if !entry.method.eq_ignore_ascii_case("GET") {
                return Err(unreadable(format!("unsupported method {}", entry.method)));
            }
            let body = fs::read_to_string(dir.join(&entry.body))
                .map_err(|e| unreadable(format!("{}: {e}", entry.body)))?;
            let meta_text = fs::read_to_string(dir.join(&entry.meta))
                .map_err(|e| unreadable(format!("{}: {e}", entry.meta)))?;
            let meta: Sidecar = serde_json::from_str(&meta_text)
                .map_err(|e| unreadable(format!("{}: {e}", entry.meta)))?;
            let name = entry
                .body
                .strip_suffix(".json")
                .unwrap_or(&entry.body)
                .to_string();
            let response = HttpResponse {
                status: meta.status,
                headers: meta
                    .headers
                    .into_iter()
                    .map(|(k, v)| (k.to_ascii_lowercase(), v))
                    .collect(),
                body,
            };
            fixture.insert(
                name,
                RequestKey {
                    path: entry.path,
                    query: entry.query,
                },
                response,
            );
        }
        Ok(fixture)
    }

    pub fn save(&self, dir: &Path) -> Result<(), FixtureError> {
        let write = |path: PathBuf, contents: &str| {
            fs::write(&path, contents).map_err(|source| FixtureError::Write { path, source })
        };
        fs::create_dir_all(dir).map_err(|source| FixtureError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut manifest = Manifest {
            format_version: FIXTURE_FORMAT_VERSION,
            entries: Vec::with_capacity(self.entries.len()),
        };
        for entry in &self.entries {
            let body = format!("{}.json", entry.name);
            let meta = format!("{}.meta.json", entry.name);
            write(dir.join(&body), &entry.response.body)?;
            let sidecar = Sidecar {
                status: entry.response.status,
                headers: entry.response.headers.clone(),
            };
            write(dir.join(&meta), &to_pretty_json(&sidecar))?;
            manifest.entries.push(ManifestEntry {
                method: "GET".into(),
                path: entry.key.path.clone(),
                query: entry.key.query.clone(),
                body,
                meta,
            });
        }
        write(dir.join(MANIFEST_FILE), &to_pretty_json(&manifest))
    }
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("fixture metadata serializes");
    s.push('\n');
    s
}

/// Answers requests from a [`Fixture`]; never touches the network.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    fixture: Fixture,
}

impl ReplayTransport {
    pub fn new(fixture: Fixture) -> Self {
        ReplayTransport { fixture }
    }

    pub fn open(dir: &Path) -> Result<Self, FixtureError> {
        Fixture::load(dir).map(ReplayTransport::new)
    }
}

impl Transport for ReplayTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let key = RequestKey::from_url(&request.url);
        self.fixture
            .lookup(&key)
            .cloned()
            .ok_or_else(|| TransportError::NoFixture(key.to_string()))
    }
}

/// Wraps another transport and keeps every exchange, so a live run can be
/// saved as a fixture directory afterwards.
pub struct RecordingTransport<T> {
    inner: T,
    recorded: Mutex<Fixture>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        RecordingTransport {
            inner,
            recorded: Mutex::new(Fixture::new()),
        }
    }

    pub fn fixture(&self) -> Fixture {
        self.recorded.lock().expect("recorder poisoned").clone()
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let response = self.inner.send(request)?;
        let key = RequestKey::from_url(&request.url);
        let mut recorded = self.recorded.lock().expect("recorder poisoned");
        let name = entry_name(&key, recorded.entries().len());
        recorded.insert(name, key, response.clone());
        Ok(response)
    }
}

fn entry_name(key: &RequestKey, index: usize) -> String {
    let slug: String = key
        .path
        .trim_matches('/')
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    match key.query.get("page") {
        Some(page) => format!("{:03}_{slug}_p{page}", index + 1),
        None => format!("{:03}_{slug}", index + 1),
    }
}
