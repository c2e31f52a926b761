//! Builds wire-format payloads, mainly for assembling fixtures in code.

use chrono::{DateTime, SecondsFormat, Utc};
use serde_json::{json, Value};

use super::fixture::{Fixture, RequestKey};
use super::transport::HttpResponse;
use super::{IssueRef, RawComment, SortKey, SortOrder};

fn timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn issue_json(issue: &IssueRef) -> Value {
    let repository_url = issue
        .api_url
        .split_once("/repos/")
        .map(|(base, _)| format!("{base}/repos/{}", issue.repo_full_name))
        .unwrap_or_default();
    json!({
        "id": issue.id,
        "number": issue.number,
        "title": issue.title,
        "body": if issue.body.is_empty() { Value::Null } else { Value::from(issue.body.clone()) },
        "state": "open",
        "html_url": issue.html_url,
        "url": issue.api_url,
        "comments_url": issue.comments_url,
        "repository_url": repository_url,
        "comments": issue.comment_count,
        "created_at": timestamp(&issue.created_at),
        "updated_at": timestamp(&issue.updated_at),
    })
}

pub fn comment_json(comment: &RawComment) -> Value {
    json!({
        "id": comment.comment_id,
        "user": { "login": comment.author_login },
        "body": comment.body,
        "created_at": timestamp(&comment.created_at),
    })
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json serializes");
    s.push('\n');
    s
}

fn path_of(url: &str) -> String {
    url::Url::parse(url)
        .map(|u| u.path().to_string())
        .unwrap_or_else(|_| url.to_string())
}

impl Fixture {
    /// Records search result pages for `query` exactly as a session with
    /// page size `per_page` would request them.
    pub fn add_search(
        &mut self,
        query: &str,
        sort: SortKey,
        order: SortOrder,
        per_page: usize,
        issues: &[IssueRef],
    ) -> &mut Self {
        let pages: Vec<&[IssueRef]> = if issues.is_empty() {
            vec![&[]]
        } else {
            issues.chunks(per_page).collect()
        };
        for (i, chunk) in pages.iter().enumerate() {
            let page = (i + 1).to_string();
            let mut query_map = vec![
                ("q".to_string(), query.to_string()),
                ("per_page".to_string(), per_page.to_string()),
                ("page".to_string(), page.clone()),
                ("order".to_string(), order.as_str().to_string()),
            ];
            if let Some(sort) = sort.query_param() {
                query_map.push(("sort".to_string(), sort.to_string()));
            }
            let body = json!({
                "total_count": issues.len(),
                "incomplete_results": false,
                "items": chunk.iter().map(issue_json).collect::<Vec<_>>(),
            });
            let response =
                HttpResponse::new(200, pretty(&body)).with_header("x-ratelimit-resource", "search");
            let key = RequestKey {
                path: "/search/issues".to_string(),
                query: query_map.into_iter().collect(),
            };
            self.insert(format!("search_issues_p{page}"), key, response);
        }
        self
    }

    /// Records every comment page of `issue`, including the empty trailing
    /// page a session requests when the last page is full.
    pub fn add_comments(
        &mut self,
        issue: &IssueRef,
        per_page: usize,
        comments: &[RawComment],
    ) -> &mut Self {
        let mut pages: Vec<&[RawComment]> = comments.chunks(per_page).collect();
        if comments.len().is_multiple_of(per_page) {
            pages.push(&[]);
        }
        for (i, chunk) in pages.iter().enumerate() {
            let body = Value::Array(chunk.iter().map(comment_json).collect());
            let response =
                HttpResponse::new(200, pretty(&body)).with_header("x-ratelimit-resource", "core");
            self.insert(
                format!("comments_{}_p{}", issue.id, i + 1),
                comments_key(issue, per_page, i + 1),
                response,
            );
        }
        self
    }

    /// Makes the first comments page of `issue` answer with `status`.
    pub fn add_comments_status(
        &mut self,
        issue: &IssueRef,
        per_page: usize,
        status: u16,
    ) -> &mut Self {
        let body = pretty(&json!({ "message": "Not Found" }));
        self.insert(
            format!("comments_{}_p1", issue.id),
            comments_key(issue, per_page, 1),
            HttpResponse::new(status, body),
        );
        self
    }
}

fn comments_key(issue: &IssueRef, per_page: usize, page: usize) -> RequestKey {
    RequestKey {
        path: path_of(&issue.comments_url),
        query: [
            ("per_page".to_string(), per_page.to_string()),
            ("page".to_string(), page.to_string()),
        ]
        .into_iter()
        .collect(),
    }
}
