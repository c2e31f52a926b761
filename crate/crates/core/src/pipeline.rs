//! Search → fetch → filter → preprocess → classify.
//!
//! Every searched issue ends up either classified (contributing zero or
//! more result rows) or in the omitted list with exactly one reason.
//! Comment fetches run concurrently; results are sorted afterwards so
//! output never depends on completion order.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{debug, info};
use thiserror::Error;

use crate::classifier::{classify_lines, ModelFile, Prediction, Taxonomy};
use crate::github_client::{
    ClientError, IssueRef, RawComment, Session, SortKey, SortOrder, MAX_SEARCH_RESULTS,
};
use crate::text_prep::{preprocess_comment, PrepConfig, ProcessedLine};

pub const DEFAULT_LIMIT: usize = 100;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid query: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Client(#[from] ClientError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum StrictScope {
    /// An issue matches if any comment or its title/body contains the
    /// query; all of its comments are kept.
    #[default]
    Issue,
    /// Only comments containing the query are kept.
    Comment,
}

impl StrictScope {
    pub fn as_str(self) -> &'static str {
        match self {
            StrictScope::Issue => "issue",
            StrictScope::Comment => "comment",
        }
    }
}

impl std::str::FromStr for StrictScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "issue" | "issue-level" => Ok(StrictScope::Issue),
            "comment" | "comment-level" => Ok(StrictScope::Comment),
            _ => Err(format!(
                "unknown strict scope {s:?} (expected issue or comment)"
            )),
        }
    }
}

/// Everything the user asked for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySpec {
    pub query: String,
    pub limit: usize,
    pub sort: SortKey,
    pub order: SortOrder,
    pub strict_match: bool,
    pub strict_scope: StrictScope,
    /// Result rows in these categories are dropped.
    pub omit_categories: BTreeSet<String>,
    /// An issue must have at least one line in each of these.
    pub require_categories: BTreeSet<String>,
    /// An issue must have no line in any of these.
    pub forbid_categories: BTreeSet<String>,
    pub min_comments: usize,
}

impl QuerySpec {
    pub fn new(query: impl Into<String>) -> Self {
        QuerySpec {
            query: query.into(),
            limit: DEFAULT_LIMIT,
            sort: SortKey::default(),
            order: SortOrder::default(),
            strict_match: true,
            strict_scope: StrictScope::default(),
            omit_categories: BTreeSet::new(),
            require_categories: BTreeSet::new(),
            forbid_categories: BTreeSet::new(),
            min_comments: 1,
        }
    }

    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<(), PipelineError> {
        let invalid = |m: String| Err(PipelineError::InvalidSpec(m));
        if self.query.trim().is_empty() {
            return invalid("query is empty".into());
        }
        if !(1..=MAX_SEARCH_RESULTS).contains(&self.limit) {
            return invalid(format!(
                "limit {} outside 1..={MAX_SEARCH_RESULTS}",
                self.limit
            ));
        }
        if let Some(both) = self
            .require_categories
            .intersection(&self.forbid_categories)
            .next()
        {
            return invalid(format!("category {both:?} is both required and forbidden"));
        }
        for name in self
            .omit_categories
            .iter()
            .chain(&self.require_categories)
            .chain(&self.forbid_categories)
        {
            if !taxonomy.contains(name) {
                return invalid(format!("category {name:?} is not in the model taxonomy"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OmitReason {
    NoStrictMatch,
    NoDiscussion,
    FetchFailed,
    CategoryFiltered,
}

impl OmitReason {
    pub const ALL: [OmitReason; 4] = [
        OmitReason::NoStrictMatch,
        OmitReason::NoDiscussion,
        OmitReason::FetchFailed,
        OmitReason::CategoryFiltered,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OmitReason::NoStrictMatch => "no_strict_match",
            OmitReason::NoDiscussion => "no_discussion",
            OmitReason::FetchFailed => "fetch_failed",
            OmitReason::CategoryFiltered => "category_filtered",
        }
    }
}

impl fmt::Display for OmitReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OmittedIssue {
    pub issue: IssueRef,
    pub reason: OmitReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedRecord {
    pub issue: IssueRef,
    pub line: ProcessedLine,
    pub prediction: Prediction,
}

/// The classified lines of one issue.
#[derive(Debug, Clone, PartialEq)]
pub struct IssueRecords {
    pub issue: IssueRef,
    pub records: Vec<ClassifiedRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunSummary {
    pub issues_searched: usize,
    pub issues_classified: usize,
    pub issues_omitted: usize,
    /// Emitted rows per category, in taxonomy order.
    pub per_category: Vec<(String, usize)>,
    /// Omitted issues per reason, in [`OmitReason::ALL`] order.
    pub per_reason: Vec<(OmitReason, usize)>,
}

impl RunSummary {
    pub fn empty(taxonomy: &Taxonomy) -> Self {
        RunSummary {
            per_category: taxonomy.names().iter().map(|n| (n.clone(), 0)).collect(),
            per_reason: OmitReason::ALL.iter().map(|&r| (r, 0)).collect(),
            ..RunSummary::default()
        }
    }

    pub fn category_count(&self, name: &str) -> usize {
        self.per_category
            .iter()
            .find(|(n, _)| n == name)
            .map_or(0, |(_, c)| *c)
    }

    pub fn reason_count(&self, reason: OmitReason) -> usize {
        self.per_reason
            .iter()
            .find(|(r, _)| *r == reason)
            .map_or(0, |(_, c)| *c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<ClassifiedRecord>,
    pub omitted: Vec<OmittedIssue>,
    pub summary: RunSummary,
}

fn contains_ci(haystack: &str, needle_lower: &str) -> bool {
    haystack.to_lowercase().contains(needle_lower)
}

/// Re-checks a search hit against the verbatim query (punctuation intact,
/// case-insensitive). Returns the comments to keep and whether the issue
/// matched.
pub fn strict_match(
    issue: &IssueRef,
    comments: Vec<RawComment>,
    query: &str,
    scope: StrictScope,
) -> (Vec<RawComment>, bool) {
    let needle = query.to_lowercase();
    match scope {
        StrictScope::Issue => {
            let matched = contains_ci(&issue.title, &needle)
                || contains_ci(&issue.body, &needle)
                || comments.iter().any(|c| contains_ci(&c.body, &needle));
            (comments, matched)
        }
        StrictScope::Comment => {
            let kept: Vec<RawComment> = comments
                .into_iter()
                .filter(|c| contains_ci(&c.body, &needle))
                .collect();
            let matched = !kept.is_empty();
            (kept, matched)
        }
    }
}

pub fn has_discussion(_issue: &IssueRef, comments: &[RawComment], min_comments: usize) -> bool {
    comments.len() >= min_comments
}

/// Applies require/forbid at issue level, then drops rows in omitted
/// categories from the survivors.
pub fn apply_category_filters(
    groups: Vec<IssueRecords>,
    spec: &QuerySpec,
) -> (Vec<IssueRecords>, Vec<OmittedIssue>) {
    let mut surviving = Vec::with_capacity(groups.len());
    let mut omitted = Vec::new();
    for mut group in groups {
        let present: BTreeSet<&str> = group
            .records
            .iter()
            .map(|r| r.prediction.category.as_str())
            .collect();
        let passes = spec
            .require_categories
            .iter()
            .all(|c| present.contains(c.as_str()))
            && !spec
                .forbid_categories
                .iter()
                .any(|c| present.contains(c.as_str()));
        if !passes {
            omitted.push(OmittedIssue {
                issue: group.issue,
                reason: OmitReason::CategoryFiltered,
            });
            continue;
        }
        if !spec.omit_categories.is_empty() {
            group
                .records
                .retain(|r| !spec.omit_categories.contains(&r.prediction.category));
        }
        surviving.push(group);
    }
    (surviving, omitted)
}

enum IssueOutcome {
    Omitted(OmitReason),
    Classified(Vec<ClassifiedRecord>),
}

fn process_issue(
    issue: &IssueRef,
    spec: &QuerySpec,
    session: &Session,
    model: &ModelFile,
    prep: &PrepConfig,
) -> IssueOutcome {
    let comments = match session.fetch_comments(issue) {
        Ok(comments) => comments,
        Err(e) => {
            info!("issue {}: comments unavailable ({e})", issue.id);
            return IssueOutcome::Omitted(OmitReason::FetchFailed);
        }
    };
    if !has_discussion(issue, &comments, spec.min_comments) {
        return IssueOutcome::Omitted(OmitReason::NoDiscussion);
    }
    let comments = if spec.strict_match {
        let (kept, matched) = strict_match(issue, comments, &spec.query, spec.strict_scope);
        if !matched {
            return IssueOutcome::Omitted(OmitReason::NoStrictMatch);
        }
        kept
    } else {
        comments
    };
    let lines: Vec<ProcessedLine> = comments
        .iter()
        .flat_map(|c| preprocess_comment(c, prep))
        .collect();
    debug!("issue {}: {} lines", issue.id, lines.len());
    let records = classify_lines(model, lines)
        .into_iter()
        .map(|(line, prediction)| ClassifiedRecord {
            issue: issue.clone(),
            line,
            prediction,
        })
        .collect();
    IssueOutcome::Classified(records)
}

/// Runs the whole pipeline for one query.
pub fn run(
    spec: &QuerySpec,
    session: &Session,
    model: &ModelFile,
    prep: &PrepConfig,
) -> Result<RunOutput, PipelineError> {
    spec.validate(model.taxonomy())?;
    let issues = session.search_issues(&spec.query, spec.limit, spec.sort, spec.order)?;
    info!("search returned {} issue(s)", issues.len());

    let outcomes: Vec<Mutex<Option<IssueOutcome>>> =
        issues.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = session.parallelism().min(issues.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(issue) = issues.get(i) else { break };
                let outcome = process_issue(issue, spec, session, model, prep);
                *outcomes[i].lock().expect("outcome slot poisoned") = Some(outcome);
            });
        }
    });

    let mut groups = Vec::new();
    let mut omitted = Vec::new();
    for (issue, slot) in issues.iter().zip(outcomes) {
        match slot.into_inner().expect("outcome slot poisoned") {
            Some(IssueOutcome::Classified(records)) => groups.push(IssueRecords {
                issue: issue.clone(),
                records,
            }),
            Some(IssueOutcome::Omitted(reason)) => omitted.push(OmittedIssue {
                issue: issue.clone(),
                reason,
            }),
            None => unreachable!("every issue is processed"),
        }
    }

    let (surviving, filtered) = apply_category_filters(groups, spec);
    omitted.extend(filtered);
    omitted.sort_by_key(|o| o.issue.id);

    let issues_classified = surviving.len();
    let mut records: Vec<ClassifiedRecord> =
        surviving.into_iter().flat_map(|g| g.records).collect();
    records.sort_by(|a, b| {
        (a.issue.id, a.line.comment_id, a.line.line_index).cmp(&(
            b.issue.id,
            b.line.comment_id,
            b.line.line_index,
        ))
    });

    let mut summary = RunSummary::empty(model.taxonomy());
    summary.issues_searched = issues.len();
    summary.issues_classified = issues_classified;
    summary.issues_omitted = omitted.len();
    for record in &records {
        summary.per_category[record.prediction.category_index].1 += 1;
    }
    for o in &omitted {
        let slot = OmitReason::ALL
            .iter()
            .position(|&r| r == o.reason)
            .expect("known reason");
        summary.per_reason[slot].1 += 1;
    }
    Ok(RunOutput {
        records,
        omitted,
        summary,
    })
}
