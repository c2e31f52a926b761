//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{DateTime, Utc};
use issuelens::classifier::{LabeledCorpus, LabeledExample};
use issuelens::github_client::{Fixture, IssueRef, RawComment, SortKey, SortOrder};
use proptest::prelude::*;

pub fn manifest_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture_dir(name: &str) -> PathBuf {
    manifest_dir().join("tests/fixtures").join(name)
}

pub fn golden_dir(name: &str) -> PathBuf {
    manifest_dir().join("tests/golden").join(name)
}

/// Runs the compiled binary in `cwd` with an empty environment apart from
/// `PATH`.
pub fn run_binary(cwd: &Path, args: &[&str], stdin: Option<&str>) -> Output {
    run_binary_env(cwd, args, stdin, &[])
}

/// Like `run_binary` with extra environment variables on top of `PATH`.
pub fn run_binary_env(
    cwd: &Path,
    args: &[&str],
    stdin: Option<&str>,
    env: &[(&str, &str)],
) -> Output {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(env!("CARGO_BIN_EXE_issuelens"))
        .args(args)
        .current_dir(cwd)
        .env_clear()
        .env("PATH", std::env::var_os("PATH").unwrap_or_default())
        .envs(env.iter().copied())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary starts");
    {
        let mut pipe = child.stdin.take().expect("stdin piped");
        if let Some(text) = stdin {
            pipe.write_all(text.as_bytes())
                .expect("stdin accepts input");
        }
    }
    child.wait_with_output().expect("binary finishes")
}

pub fn ts(secs: i64) -> DateTime<Utc> {
    DateTime::from_timestamp(1_600_000_000 + secs, 0).expect("valid timestamp")
}

pub fn issue_ref(id: u64, title: &str, body: &str, comment_count: u64) -> IssueRef {
    let number = id % 100_000;
    IssueRef {
        id,
        number,
        repo_full_name: "octo/widgets".into(),
        title: title.into(),
        body: body.into(),
        html_url: format!("https://github.com/octo/widgets/issues/{number}"),
        api_url: format!("https://api.github.com/repos/octo/widgets/issues/{number}"),
        comments_url: format!("https://api.github.com/repos/octo/widgets/issues/{number}/comments"),
        comment_count,
        created_at: ts(id as i64 % 1000),
        updated_at: ts(id as i64 % 1000 + 5),
    }
}

pub fn raw_comment(issue_id: u64, comment_id: u64, body: &str) -> RawComment {
    RawComment {
        issue_id,
        comment_id,
        author_login: format!("user{}", comment_id % 7),
        body: body.into(),
        created_at: ts(comment_id as i64),
    }
}

/// One generated issue.
#[derive(Debug, Clone)]
pub struct IssueSpec {
    pub title: String,
    pub body: String,
    pub comments: Vec<String>,
    /// The comments endpoint answers 404.
    pub broken: bool,
}

/// A generated search scenario: what the endpoint returns for `query`.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub query: String,
    pub issues: Vec<IssueSpec>,
    pub limit: usize,
    pub per_page: u32,
}

impl Scenario {
    pub fn issue_refs(&self) -> Vec<IssueRef> {
        self.issues
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let count = if spec.broken {
                    spec.comments.len().max(1)
                } else {
                    spec.comments.len()
                };
                issue_ref(10_000 + i as u64, &spec.title, &spec.body, count as u64)
            })
            .collect()
    }

    pub fn comments_of(&self, issue: &IssueRef, spec: &IssueSpec) -> Vec<RawComment> {
        spec.comments
            .iter()
            .enumerate()
            .map(|(j, body)| raw_comment(issue.id, issue.id * 10 + j as u64, body))
            .collect()
    }

    pub fn fixture(&self) -> Fixture {
        let refs = self.issue_refs();
        let per_page = self.per_page as usize;
        let mut f = Fixture::new();
        f.add_search(
            &self.query,
            SortKey::BestMatch,
            SortOrder::Desc,
            per_page,
            &refs,
        );
        for (issue, spec) in refs.iter().zip(&self.issues) {
            if spec.broken {
                f.add_comments_status(issue, per_page, 404);
            } else if !spec.comments.is_empty() {
                f.add_comments(issue, per_page, &self.comments_of(issue, spec));
            }
        }
        f
    }

    /// The issues a run may process: the first `limit` search hits.
    pub fn searched(&self) -> Vec<(IssueRef, IssueSpec)> {
        self.issue_refs()
            .into_iter()
            .zip(self.issues.iter().cloned())
            .take(self.limit)
            .collect()
    }
}

/// Case-insensitive containment, written independently of the pipeline.
pub fn mentions(spec: &IssueSpec, query: &str) -> bool {
    let q: Vec<char> = query.chars().flat_map(char::to_lowercase).collect();
    let hit = |text: &str| {
        let t: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
        q.is_empty() || t.windows(q.len()).any(|w| w == q.as_slice())
    };
    hit(&spec.title) || hit(&spec.body) || spec.comments.iter().any(|c| hit(c))
}

const WORDS: &[&str] = &[
    "fix",
    "crash",
    "thanks",
    "how",
    "use",
    "workaround",
    "expected",
    "reproduce",
    "feature",
    "request",
    "error",
    "graph",
    "retracing",
    "docs",
    "please",
    "close",
    "pr",
    "merged",
    "`snippet`",
    "@someone",
    "https://example.com/x",
    "\"quoted words\"",
    "tf",
    "function",
];

fn text_with(query: String) -> impl Strategy<Value = String> {
    let variants = vec![
        query.clone(),
        query.to_uppercase(),
        query.replace('.', " "),
        format!("x{query}y"),
    ];
    let piece = prop_oneof![
        6 => prop::sample::select(WORDS.to_vec()).prop_map(str::to_string),
        1 => prop::sample::select(variants),
        1 => Just("\n".to_string()),
    ];
    prop::collection::vec(piece, 0..10).prop_map(|parts| parts.join(" "))
}

fn issue_spec(query: String) -> impl Strategy<Value = IssueSpec> {
    (
        text_with(query.clone()),
        text_with(query.clone()),
        prop::collection::vec(text_with(query), 0..5),
        prop::bool::weighted(0.1),
    )
        .prop_map(|(title, body, comments, broken)| IssueSpec {
            title,
            body,
            comments,
            broken,
        })
}

pub fn scenario() -> impl Strategy<Value = Scenario> {
    let query = prop_oneof![
        Just("tf.function".to_string()),
        Just("Graph".to_string()),
        "[a-z]{1,3}\\.[a-z]{1,3}",
        "[a-z]{2,5}",
    ];
    query.prop_flat_map(|query| {
        (
            prop::collection::vec(issue_spec(query.clone()), 0..10),
            1usize..14,
            1u32..5,
        )
            .prop_map(move |(issues, limit, per_page)| Scenario {
                query: query.clone(),
                issues,
                limit,
                per_page,
            })
    })
}

/// A tiny labelled corpus: up to `classes` categories named `c0..`, up to
/// `docs` documents over the words `w0..w{vocab-1}`.
#[derive(Debug, Clone)]
pub struct TinyCorpus {
    pub classes: usize,
    pub vocab: usize,
    pub docs: Vec<(usize, Vec<usize>)>,
    pub query: Vec<usize>,
}

impl TinyCorpus {
    pub fn taxonomy_names(&self) -> Vec<String> {
        (0..self.classes).map(|c| format!("c{c}")).collect()
    }

    pub fn corpus(&self) -> LabeledCorpus {
        LabeledCorpus::new(
            self.docs
                .iter()
                .map(|(c, words)| LabeledExample {
                    tokens: words.iter().map(|w| format!("w{w}")).collect(),
                    category: format!("c{c}"),
                })
                .collect(),
        )
    }

    pub fn query_tokens(&self) -> Vec<String> {
        self.query.iter().map(|w| format!("w{w}")).collect()
    }
}

pub fn tiny_corpus() -> impl Strategy<Value = TinyCorpus> {
    (1usize..=3, 1usize..=5).prop_flat_map(|(classes, vocab)| {
        let doc = (0..classes, prop::collection::vec(0..vocab, 1..=4));
        (
            prop::collection::vec(doc, 1..=6),
            // One extra word index so queries can contain unseen tokens.
            prop::collection::vec(0..vocab + 1, 0..=6),
        )
            .prop_map(move |(docs, query)| TinyCorpus {
                classes,
                vocab,
                docs,
                query,
            })
    })
}

/// Exact naive-Bayes posterior, up to a shared constant, as a fraction
/// `num / den` per class. Only words seen in training count.
pub fn exact_posteriors(tc: &TinyCorpus) -> Vec<(u128, u128)> {
    let seen: BTreeSet<usize> = tc
        .docs
        .iter()
        .flat_map(|(_, w)| w.iter().copied())
        .collect();
    let v = seen.len() as u128;
    let n = tc.docs.len() as u128;
    (0..tc.classes)
        .map(|c| {
            let class_docs: Vec<&Vec<usize>> = tc
                .docs
                .iter()
                .filter(|(k, _)| *k == c)
                .map(|(_, w)| w)
                .collect();
            let n_c = class_docs.len() as u128;
            let total: u128 = class_docs.iter().map(|d| d.len() as u128).sum();
            let mut num = n_c;
            let mut den = n;
            for w in tc.query.iter().filter(|w| seen.contains(w)) {
                let count = class_docs
                    .iter()
                    .flat_map(|d| d.iter())
                    .filter(|x| *x == w)
                    .count() as u128;
                num *= count + 1;
                den *= total + v;
            }
            (num, den)
        })
        .collect()
}

/// Index of the largest fraction; ties go to the lowest index.
pub fn exact_argmax(posteriors: &[(u128, u128)]) -> usize {
    let mut best = 0;
    for (i, &(num, den)) in posteriors.iter().enumerate().skip(1) {
        let (bn, bd) = posteriors[best];
        if num * bd > bn * den {
            best = i;
        }
    }
    best
}

/// Log posterior per class from counts, summed term by term.
pub fn log_posteriors(tc: &TinyCorpus) -> Vec<f64> {
    let seen: BTreeSet<usize> = tc
        .docs
        .iter()
        .flat_map(|(_, w)| w.iter().copied())
        .collect();
    let v = seen.len() as f64;
    let n = tc.docs.len() as f64;
    (0..tc.classes)
        .map(|c| {
            let class_docs: Vec<&Vec<usize>> = tc
                .docs
                .iter()
                .filter(|(k, _)| *k == c)
                .map(|(_, w)| w)
                .collect();
            if class_docs.is_empty() {
                return f64::NEG_INFINITY;
            }
            let total: f64 = class_docs.iter().map(|d| d.len() as f64).sum();
            let mut score = (class_docs.len() as f64 / n).ln();
            for w in tc.query.iter().filter(|w| seen.contains(w)) {
                let count = class_docs
                    .iter()
                    .flat_map(|d| d.iter())
                    .filter(|x| *x == w)
                    .count() as f64;
                score += ((count + 1.0) / (total + v)).ln();
            }
            score
        })
        .collect()
}

/// Macro-averaged F1 over the labels that occur in `truth` or `predicted`.
pub fn macro_f1(truth: &[String], predicted: &[String]) -> f64 {
    let labels: BTreeSet<&String> = truth.iter().chain(predicted).collect();
    let f1s: Vec<f64> = labels
        .iter()
        .map(|label| {
            let pairs = truth.iter().zip(predicted);
            let tp = pairs
                .clone()
                .filter(|(t, p)| t == label && p == label)
                .count() as f64;
            let fp = pairs
                .clone()
                .filter(|(t, p)| t != label && p == label)
                .count() as f64;
            let fn_ = pairs.filter(|(t, p)| t == label && p != label).count() as f64;
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fn_)
            }
        })
        .collect();
    f1s.iter().sum::<f64>() / f1s.len() as f64
}

/// Markdown-ish fragments that stress the tokenizer rules.
pub fn markdownish() -> impl Strategy<Value = String> {
    let fragments = vec![
        "`",
        "``",
        "```",
        "~~~",
        "\n",
        "\n```\n",
        "@",
        "@dev",
        "@a-b",
        "x@y",
        "http://",
        "https://",
        "HTTP://Ex.com/a?b=1",
        "https://x",
        "\"",
        "'",
        "\"hi\"",
        "'yo'",
        "> ",
        ">",
        " ",
        "  ",
        "word",
        "CODE",
        "URL",
        "QUOTE",
        "SCREEN_NAME",
        "@CODE",
        "@URL",
        "(",
        ")",
        ":",
        ".",
        ",",
        "é",
        "tf.function",
        "#12",
        "a_b",
        "\t",
        "\r\n",
    ];
    let piece = prop_oneof![
        4 => prop::sample::select(fragments).prop_map(str::to_string),
        1 => "[a-z@`'\":/ .\n-]{1,6}",
    ];
    prop::collection::vec(piece, 0..40).prop_map(|parts| parts.concat())
}

/// True when `text` contains an `@` that starts a login-shaped mention.
pub fn has_mention(text: &str) -> bool {
    let chars: Vec<char> = text.chars().collect();
    chars.iter().enumerate().any(|(i, &c)| {
        c == '@'
            && (i == 0 || !(chars[i - 1].is_ascii_alphanumeric() || chars[i - 1] == '_'))
            && chars
                .get(i + 1)
                .is_some_and(|n| n.is_ascii_alphanumeric() || *n == '-')
    })
}

pub fn has_scheme_url(text: &str) -> bool {
    let lower = text.to_ascii_lowercase();
    lower.contains("http://") || lower.contains("https://")
}
