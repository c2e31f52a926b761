mod common;

use std::collections::{BTreeSet, VecDeque};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use common::*;
use issuelens::github_client::{
    ClientError, Clock, Fixture, HttpRequest, HttpResponse, Mode, RecordingTransport,
    ReplayTransport, Session, SessionOptions, SimulatedClock, SortKey, SortOrder, Transport,
    TransportError, UNLIMITED,
};
use proptest::prelude::*;

const PROBE: &str = r#"{"resources":{"core":{"limit":5000,"remaining":4990,"reset":1609462800},"search":{"limit":30,"remaining":30,"reset":1609459260}}}"#;

/// Answers `/rate_limit` with a fixed probe, then pops scripted answers,
/// then falls back to a fixture. Logs every request with its time.
#[derive(Debug)]
struct Scripted {
    clock: Arc<SimulatedClock>,
    probe: HttpResponse,
    script: Mutex<VecDeque<Result<HttpResponse, TransportError>>>,
    fallback: Fixture,
    log: Mutex<Vec<(HttpRequest, DateTime<Utc>)>>,
}

impl Scripted {
    fn requests(&self) -> Vec<(HttpRequest, DateTime<Utc>)> {
        self.log.lock().unwrap().clone()
    }

    fn non_probe(&self) -> Vec<(HttpRequest, DateTime<Utc>)> {
        self.requests()
            .into_iter()
            .filter(|(r, _)| r.url.path() != "/rate_limit")
            .collect()
    }
}

impl Transport for Scripted {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.log
            .lock()
            .unwrap()
            .push((request.clone(), self.clock.now()));
        if request.url.path() == "/rate_limit" {
            return Ok(self.probe.clone());
        }
        if let Some(next) = self.script.lock().unwrap().pop_front() {
            return next;
        }
        ReplayTransport::new(self.fallback.clone()).send(request)
    }
}

struct Harness {
    transport: Arc<Scripted>,
    clock: Arc<SimulatedClock>,
}

impl Harness {
    fn new(script: Vec<Result<HttpResponse, TransportError>>, fallback: Fixture) -> Self {
        Harness::with_probe(HttpResponse::new(200, PROBE), script, fallback)
    }

    fn with_probe(
        probe: HttpResponse,
        script: Vec<Result<HttpResponse, TransportError>>,
        fallback: Fixture,
    ) -> Self {
        let clock = Arc::new(SimulatedClock::at_epoch());
        let transport = Arc::new(Scripted {
            clock: clock.clone(),
            probe,
            script: Mutex::new(script.into()),
            fallback,
            log: Mutex::new(Vec::new()),
        });
        Harness { transport, clock }
    }

    fn session(&self, options: SessionOptions) -> Result<Session, ClientError> {
        Session::live_with(options, self.transport.clone(), self.clock.clone())
    }

    fn token_session(&self) -> Session {
        self.session(SessionOptions::with_token(Some("s3cret".into())))
            .unwrap()
    }
}

fn search_fixture(issues: &[issuelens::github_client::IssueRef], per_page: usize) -> Fixture {
    let mut f = Fixture::new();
    f.add_search("q", SortKey::BestMatch, SortOrder::Desc, per_page, issues);
    f
}

fn search(session: &Session, limit: usize) -> Result<Vec<u64>, ClientError> {
    session
        .search_issues("q", limit, SortKey::BestMatch, SortOrder::Desc)
        .map(|v| v.into_iter().map(|i| i.id).collect())
}

#[test]
fn live_requests_carry_the_credential() {
    let issue = issue_ref(7, "t", "", 1);
    let mut fixture = search_fixture(std::slice::from_ref(&issue), 100);
    fixture.add_comments(&issue, 100, &[raw_comment(7, 70, "hi")]);
    let h = Harness::new(vec![], fixture.clone());
    let session = h.token_session();
    let hits = session
        .search_issues("q", 5, SortKey::BestMatch, SortOrder::Desc)
        .unwrap();
    session.fetch_comments(&hits[0]).unwrap();
    let requests = h.transport.requests();
    assert_eq!(requests.len(), 3);
    for (r, _) in &requests {
        assert_eq!(
            r.header("authorization"),
            Some("Bearer s3cret"),
            "{}",
            r.url
        );
        assert_eq!(r.header("accept"), Some("application/vnd.github+json"));
        assert!(r.header("user-agent").is_some_and(|ua| !ua.is_empty()));
    }

    let anon = Harness::new(vec![], fixture);
    let session = anon.session(SessionOptions::default()).unwrap();
    search(&session, 5).unwrap();
    assert!(anon
        .transport
        .requests()
        .iter()
        .all(|(r, _)| r.header("authorization").is_none()));
}

#[test]
fn replay_sessions_drop_the_token() {
    let options = SessionOptions::with_token(Some("s3cret".into()));
    let session = Session::open(options, Mode::Replay(fixture_dir("tf_function"))).unwrap();
    assert!(!session.has_token());
    assert!(!session.is_live());
    let status = session.check_rate_limit().unwrap();
    assert_eq!(
        (status.search_remaining, status.core_remaining),
        (UNLIMITED, UNLIMITED)
    );
}

#[test]
fn missing_fixture_directory() {
    let err = Session::open(
        SessionOptions::default(),
        Mode::Replay("/nonexistent/fx".into()),
    )
    .unwrap_err();
    assert!(matches!(err, ClientError::FixtureNotFound(_)));
}

#[test]
fn replay_is_deterministic() {
    let collect = || {
        let session = Session::open(
            SessionOptions::default(),
            Mode::Replay(fixture_dir("tf_function")),
        )
        .unwrap();
        let issues = session
            .search_issues("tf.function", 100, SortKey::BestMatch, SortOrder::Desc)
            .unwrap();
        let comments: Vec<_> = issues
            .iter()
            .map(|i| session.fetch_comments(i).ok())
            .collect();
        (issues, comments)
    };
    let first = collect();
    assert_eq!(first.0.len(), 6);
    assert_eq!(first, collect());
}

proptest! {
    #[test]
    fn comment_pages_are_complete(count in 0usize..12, per_page in 1u32..5) {
        let issue = issue_ref(42, "t", "", count.max(1) as u64);
        let comments: Vec<_> = (0..count as u64).map(|k| raw_comment(42, 900 + k, &format!("c{k}"))).collect();
        let mut fixture = Fixture::new();
        fixture.add_comments(&issue, per_page as usize, &comments);
        let options = SessionOptions { per_page, ..SessionOptions::default() };
        let session = Session::replay(fixture, options).unwrap();
        let fetched = session.fetch_comments(&issue).unwrap();
        prop_assert_eq!(fetched, comments);
    }
}

#[test]
fn overlapping_comment_pages_are_deduplicated() {
    let issue = issue_ref(42, "t", "", 3);
    let c = |id, secs| {
        let mut c = raw_comment(42, id, "x");
        c.created_at = ts(secs);
        c
    };
    let mut fixture = Fixture::new();
    fixture.add_comments(&issue, 2, &[c(3, 30), c(1, 10), c(2, 20)]);
    // Page 2 repeats comment 1, as happens when a comment lands mid-paging.
    let page2 = serde_json::json!([issuelens::github_client::wire::comment_json(&c(1, 10))]);
    fixture.respond(
        "/repos/octo/widgets/issues/42/comments",
        &[("per_page", "2"), ("page", "2")],
        HttpResponse::new(200, page2.to_string()),
    );
    let session = Session::replay(
        fixture,
        SessionOptions {
            per_page: 2,
            ..SessionOptions::default()
        },
    )
    .unwrap();
    let ids: Vec<u64> = session
        .fetch_comments(&issue)
        .unwrap()
        .iter()
        .map(|c| c.comment_id)
        .collect();
    assert_eq!(ids, [1, 3]);
}

#[test]
fn deleted_authors_become_ghost() {
    let issue = issue_ref(5, "t", "", 1);
    let body =
        r#"[{"id": 1, "user": null, "body": "orphan", "created_at": "2021-01-01T00:00:00Z"}]"#;
    let mut fixture = Fixture::new();
    fixture.respond(
        "/repos/octo/widgets/issues/5/comments",
        &[("per_page", "100"), ("page", "1")],
        HttpResponse::new(200, body),
    );
    let session = Session::replay(fixture, SessionOptions::default()).unwrap();
    assert_eq!(
        session.fetch_comments(&issue).unwrap()[0].author_login,
        "ghost"
    );
}

#[test]
fn issues_without_comments_need_no_request() {
    let h = Harness::new(vec![], Fixture::new());
    let session = h.token_session();
    assert!(session
        .fetch_comments(&issue_ref(1, "t", "", 0))
        .unwrap()
        .is_empty());
    assert!(h.transport.non_probe().is_empty());
}

#[test]
fn search_paging_respects_the_limit() {
    let issues: Vec<_> = (1..=5).map(|i| issue_ref(i, "t", "", 0)).collect();
    let per_page = 2;
    let options = || SessionOptions {
        per_page,
        ..SessionOptions::default()
    };

    let h = Harness::new(vec![], search_fixture(&issues, 2));
    let session = h.session(options()).unwrap();
    assert_eq!(search(&session, 100).unwrap(), [1, 2, 3, 4, 5]);
    assert_eq!(h.transport.non_probe().len(), 3);

    let h = Harness::new(vec![], search_fixture(&issues, 2));
    let session = h.session(options()).unwrap();
    assert_eq!(search(&session, 3).unwrap(), [1, 2, 3]);
    let pages: Vec<String> = h
        .transport
        .non_probe()
        .iter()
        .map(|(r, _)| {
            r.url
                .query_pairs()
                .find(|(k, _)| k == "page")
                .unwrap()
                .1
                .into_owned()
        })
        .collect();
    assert_eq!(pages, ["1", "2"]);
}

#[test]
fn search_arguments_are_validated() {
    let session = Session::replay(Fixture::new(), SessionOptions::default()).unwrap();
    for (query, limit) in [("q", 0), ("q", 1001), ("  ", 10)] {
        let err = session
            .search_issues(query, limit, SortKey::BestMatch, SortOrder::Desc)
            .unwrap_err();
        assert!(
            matches!(err, ClientError::InvalidArgument(_)),
            "{query:?} {limit}"
        );
    }
}

#[test]
fn sort_parameter_is_omitted_for_best_match() {
    let issue = issue_ref(1, "t", "", 0);
    let mut fixture = Fixture::new();
    fixture.add_search(
        "q",
        SortKey::Comments,
        SortOrder::Asc,
        100,
        std::slice::from_ref(&issue),
    );
    fixture.add_search("q", SortKey::BestMatch, SortOrder::Desc, 100, &[issue]);
    let h = Harness::new(vec![], fixture);
    let session = h.token_session();
    session
        .search_issues("q", 1, SortKey::Comments, SortOrder::Asc)
        .unwrap();
    session
        .search_issues("q", 1, SortKey::BestMatch, SortOrder::Desc)
        .unwrap();
    let queries: Vec<BTreeSet<(String, String)>> = h
        .transport
        .non_probe()
        .iter()
        .map(|(r, _)| {
            r.url
                .query_pairs()
                .map(|(k, v)| (k.into_owned(), v.into_owned()))
                .collect()
        })
        .collect();
    assert!(queries[0].contains(&("sort".into(), "comments".into())));
    assert!(queries[0].contains(&("order".into(), "asc".into())));
    assert!(!queries[1].iter().any(|(k, _)| k == "sort"));
}

fn status(code: u16) -> Result<HttpResponse, TransportError> {
    Ok(HttpResponse::new(code, r#"{"message":"nope"}"#))
}

#[test]
fn server_errors_are_retried_with_backoff_up_to_four_attempts() {
    let h = Harness::new(
        vec![
            status(503),
            status(500),
            status(502),
            status(504),
            status(503),
        ],
        Fixture::new(),
    );
    let session = h.token_session();
    let err = search(&session, 1).unwrap_err();
    assert!(
        matches!(err, ClientError::NetworkFailure { attempts: 4, .. }),
        "{err}"
    );
    let times: Vec<_> = h
        .transport
        .non_probe()
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    assert_eq!(times.len(), 4);
    for (k, pair) in times.windows(2).enumerate() {
        let gap = (pair[1] - pair[0]).num_milliseconds() as f64 / 1000.0;
        let nominal = 2f64.powi(k as i32);
        assert!(
            gap >= nominal * 0.8 - 1e-9 && gap <= nominal * 1.2 + 1e-9,
            "retry {k}: {gap}s"
        );
    }
}

#[test]
fn transient_failures_recover() {
    let issue = issue_ref(1, "t", "", 0);
    let timeout = Err(TransportError::Timeout("slow".into()));
    let h = Harness::new(vec![status(502), timeout], search_fixture(&[issue], 100));
    assert_eq!(search(&h.token_session(), 1).unwrap(), [1]);
    assert_eq!(h.transport.non_probe().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let h = Harness::new(vec![status(422)], Fixture::new());
    assert!(matches!(
        search(&h.token_session(), 1),
        Err(ClientError::QueryRejected(_))
    ));
    assert_eq!(h.transport.non_probe().len(), 1);

    let h = Harness::new(vec![status(404)], Fixture::new());
    let err = h
        .token_session()
        .fetch_comments(&issue_ref(9, "t", "", 2))
        .unwrap_err();
    assert!(
        matches!(
            err,
            ClientError::IssueGone {
                issue_id: 9,
                status: 404
            }
        ),
        "{err}"
    );
    assert_eq!(h.transport.non_probe().len(), 1);

    let h = Harness::new(vec![status(403)], Fixture::new());
    assert!(matches!(
        search(&h.token_session(), 1),
        Err(ClientError::Forbidden { .. })
    ));
    assert_eq!(h.transport.non_probe().len(), 1);
}

#[test]
fn rate_limit_answers_are_waited_out() {
    let issue = issue_ref(1, "t", "", 0);
    let fixture = search_fixture(&[issue], 100);

    let h = Harness::new(vec![status(429)], fixture.clone());
    search(&h.token_session(), 1).unwrap();
    let t: Vec<_> = h
        .transport
        .non_probe()
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    assert_eq!((t[1] - t[0]).num_seconds(), 60);

    let reset = SimulatedClock::at_epoch().now().timestamp() + 90;
    let exhausted = HttpResponse::new(403, r#"{"message":"API rate limit exceeded"}"#)
        .with_header("X-RateLimit-Remaining", "0")
        .with_header("X-RateLimit-Reset", reset.to_string());
    let h = Harness::new(vec![Ok(exhausted)], fixture.clone());
    search(&h.token_session(), 1).unwrap();
    let t: Vec<_> = h
        .transport
        .non_probe()
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    assert!(t[1].timestamp() >= reset);

    let h = Harness::new(
        vec![Ok(
            HttpResponse::new(429, "").with_header("Retry-After", "3")
        )],
        fixture,
    );
    let options = SessionOptions {
        wait_on_rate_limit: false,
        ..SessionOptions::with_token(Some("t".into()))
    };
    let err = search(&h.session(options).unwrap(), 1).unwrap_err();
    assert!(matches!(err, ClientError::RateLimited { .. }), "{err}");
}

#[test]
fn bad_token_is_reported_by_the_probe() {
    let h = Harness::with_probe(
        HttpResponse::new(401, r#"{"message":"Bad credentials"}"#),
        vec![],
        Fixture::new(),
    );
    let err = h
        .session(SessionOptions::with_token(Some("wrong".into())))
        .unwrap_err();
    assert!(matches!(err, ClientError::InvalidToken));
}

#[test]
fn rate_status_comes_from_the_probe_and_local_accounting() {
    let probe = Fixture::load(&fixture_dir("rate_limit_probe")).unwrap();
    let clock = Arc::new(SimulatedClock::at_epoch());
    let session = Session::live_with(
        SessionOptions::with_token(Some("t".into())),
        Arc::new(ReplayTransport::new(probe)),
        clock.clone(),
    )
    .unwrap();
    let status = session.check_rate_limit().unwrap();
    assert_eq!(status.search_remaining, 28);
    assert_eq!(status.core_remaining, 4988);
    assert_eq!(status.search_reset_at.timestamp(), 1_609_459_260);

    let issue = issue_ref(1, "t", "", 0);
    let h = Harness::new(vec![], search_fixture(&[issue], 100));
    let options = SessionOptions {
        wait_on_rate_limit: false,
        ..SessionOptions::with_token(Some("t".into()))
    };
    let session = h.session(options).unwrap();
    for _ in 0..30 {
        search(&session, 1).unwrap();
    }
    let now = h.clock.now();
    let status = session.cached_rate_status();
    assert_eq!(status.search_remaining, 0);
    assert!(status.search_reset_at > now);
    assert!(
        matches!(search(&session, 1), Err(ClientError::RateLimited { reset_at }) if reset_at > now)
    );
}

#[test]
fn recorded_sessions_replay_identically() {
    let probe = Fixture::load(&fixture_dir("rate_limit_probe")).unwrap();
    let mut merged = Fixture::load(&fixture_dir("tf_function")).unwrap();
    for e in probe.entries() {
        merged.insert(e.name.clone(), e.key.clone(), e.response.clone());
    }
    let recorder = Arc::new(RecordingTransport::new(ReplayTransport::new(merged)));
    let session = Session::live_with(
        SessionOptions::with_token(Some("t".into())),
        recorder.clone(),
        Arc::new(SimulatedClock::at_epoch()),
    )
    .unwrap();
    let issues = session
        .search_issues("tf.function", 10, SortKey::BestMatch, SortOrder::Desc)
        .unwrap();
    let comments: Vec<_> = issues
        .iter()
        .map(|i| session.fetch_comments(i).ok())
        .collect();

    let dir = tempfile::tempdir().unwrap();
    recorder.fixture().save(dir.path()).unwrap();
    let replay = Session::open(
        SessionOptions::default(),
        Mode::Replay(dir.path().to_path_buf()),
    )
    .unwrap();
    let again = replay
        .search_issues("tf.function", 10, SortKey::BestMatch, SortOrder::Desc)
        .unwrap();
    assert_eq!(again, issues);
    let again: Vec<_> = again
        .iter()
        .map(|i| replay.fetch_comments(i).ok())
        .collect();
    assert_eq!(again, comments);
}
