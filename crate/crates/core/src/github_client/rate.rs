use std::collections::VecDeque;
use std::time::Duration;

use chrono::{DateTime, Utc};

use super::transport::HttpResponse;

/// Search requests per minute with a token.
pub const SEARCH_LIMIT_AUTHENTICATED: u64 = 30;
/// Search requests per minute without a token.
pub const SEARCH_LIMIT_ANONYMOUS: u64 = 10;
/// Core requests per hour with a token.
pub const CORE_LIMIT_AUTHENTICATED: u64 = 5000;
/// Core requests per hour without a token.
pub const CORE_LIMIT_ANONYMOUS: u64 = 60;

/// Remaining budget reported by replay sessions.
pub const UNLIMITED: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resource {
    Search,
    Core,
}

impl Resource {
    fn from_header(name: &str) -> Option<Resource> {
        match name {
            "search" => Some(Resource::Search),
            "core" => Some(Resource::Core),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateStatus {
    pub search_remaining: u64,
    pub search_reset_at: DateTime<Utc>,
    pub core_remaining: u64,
    pub core_reset_at: DateTime<Utc>,
}

impl RateStatus {
    pub fn unlimited(now: DateTime<Utc>) -> Self {
        RateStatus {
            search_remaining: UNLIMITED,
            search_reset_at: now,
            core_remaining: UNLIMITED,
            core_reset_at: now,
        }
    }
}

/// Sliding-window budget for one resource, corrected by server headers.
#[derive(Debug, Clone)]
struct Window {
    capacity: u64,
    period: chrono::Duration,
    dispatched: VecDeque<DateTime<Utc>>,
    server_remaining: Option<u64>,
    server_reset: Option<DateTime<Utc>>,
}

impl Window {
    fn new(capacity: u64, period: Duration) -> Self {
        Window {
            capacity,
            period: chrono::Duration::from_std(period).expect("period fits"),
            dispatched: VecDeque::new(),
            server_remaining: None,
            server_reset: None,
        }
    }

    fn prune(&mut self, now: DateTime<Utc>) {
        while let Some(&front) = self.dispatched.front() {
            if now - front >= self.period {
                self.dispatched.pop_front();
            } else {
                break;
            }
        }
        if let Some(reset) = self.server_reset {
            if now >= reset {
                self.server_remaining = None;
                self.server_reset = None;
            }
        }
    }

    fn try_acquire(&mut self, now: DateTime<Utc>) -> Result<(), DateTime<Utc>> {
        self.prune(now);
        if let (Some(0), Some(reset)) = (self.server_remaining, self.server_reset) {
            return Err(reset);
        }
        if self.dispatched.len() as u64 >= self.capacity {
            let oldest = *self.dispatched.front().expect("non-empty when full");
            return Err(oldest + self.period);
        }
        self.dispatched.push_back(now);
        if let Some(r) = self.server_remaining.as_mut() {
            *r = r.saturating_sub(1);
        }
        Ok(())
    }

    fn observe(
        &mut self,
        limit: Option<u64>,
        remaining: Option<u64>,
        reset: Option<DateTime<Utc>>,
    ) {
        if let Some(limit) = limit {
            self.capacity = limit;
        }
        if let Some(remaining) = remaining {
            self.server_remaining = Some(remaining);
            self.server_reset = reset;
        }
    }

    fn remaining(&mut self, now: DateTime<Utc>) -> (u64, DateTime<Utc>) {
        self.prune(now);
        let local = self.capacity.saturating_sub(self.dispatched.len() as u64);
        let local_reset = self
            .dispatched
            .front()
            .map_or(now, |&oldest| oldest + self.period);
        match (self.server_remaining, self.server_reset) {
            (Some(server), Some(reset)) => (local.min(server), local_reset.max(reset)),
            (Some(server), None) => (local.min(server), local_reset),
            _ => (local, local_reset),
        }
    }
}

/// The single budget gate shared by every request of a live session.
#[derive(Debug, Clone)]
pub struct RateGate {
    search: Window,
    core: Window,
}

impl RateGate {
    pub fn new(authenticated: bool) -> Self {
        let (search, core) = if authenticated {
            (SEARCH_LIMIT_AUTHENTICATED, CORE_LIMIT_AUTHENTICATED)
        } else {
            (SEARCH_LIMIT_ANONYMOUS, CORE_LIMIT_ANONYMOUS)
        };
        RateGate {
            search: Window::new(search, Duration::from_secs(60)),
            core: Window::new(core, Duration::from_secs(3600)),
        }
    }

    fn window(&mut self, resource: Resource) -> &mut Window {
        match resource {
            Resource::Search => &mut self.search,
            Resource::Core => &mut self.core,
        }
    }

    /// Records a dispatch at `now`, or returns the instant at which a slot
    /// frees up.
    pub fn try_acquire(
        &mut self,
        resource: Resource,
        now: DateTime<Utc>,
    ) -> Result<(), DateTime<Utc>> {
        self.window(resource).try_acquire(now)
    }

    /// Applies `X-RateLimit-*` headers. The `X-RateLimit-Resource` header,
    /// when present, overrides the resource the request was made against.
    pub fn observe(&mut self, resource: Resource, response: &HttpResponse) {
        let resource = response
            .header("x-ratelimit-resource")
            .and_then(Resource::from_header)
            .unwrap_or(resource);
        let number = |name: &str| {
            response
                .header(name)
                .and_then(|v| v.trim().parse::<u64>().ok())
        };
        let reset = number("x-ratelimit-reset").and_then(|s| DateTime::from_timestamp(s as i64, 0));
        self.window(resource).observe(
            number("x-ratelimit-limit"),
            number("x-ratelimit-remaining"),
            reset,
        );
    }

    /// Applies the body of a `GET /rate_limit` probe.
    pub fn observe_probe(&mut self, probe: &ProbeBody) {
        for (resource, entry) in [
            (Resource::Search, &probe.resources.search),
            (Resource::Core, &probe.resources.core),
        ] {
            let reset = DateTime::from_timestamp(entry.reset as i64, 0);
            self.window(resource)
                .observe(Some(entry.limit), Some(entry.remaining), reset);
        }
    }

    pub fn status(&mut self, now: DateTime<Utc>) -> RateStatus {
        let (search_remaining, search_reset_at) = self.search.remaining(now);
        let (core_remaining, core_reset_at) = self.core.remaining(now);
        RateStatus {
            search_remaining,
            search_reset_at,
            core_remaining,
            core_reset_at,
        }
    }
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct ProbeBody {
    pub resources: ProbeResources,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct ProbeResources {
    pub core: ProbeEntry,
    pub search: ProbeEntry,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct ProbeEntry {
    pub limit: u64,
    pub remaining: u64,
    pub reset: u64,
}
