//! Command-line front end: argument parsing, the interactive prompt loop
//! and exit-code mapping.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::Parser;
use log::info;
use thiserror::Error;

use crate::classifier::{load_model, ModelFile, Taxonomy};
use crate::github_client::{
    resolve_token, ClientError, Mode, Session, SessionOptions, SortKey, SortOrder,
    MAX_SEARCH_RESULTS, TOKEN_ENV_VAR,
};
use crate::pipeline::{self, PipelineError, QuerySpec, StrictScope, DEFAULT_LIMIT};
use crate::report::{render_summary, write_omitted, write_results};
use crate::text_prep::PrepConfig;

/// Overrides the API root, e.g. for GitHub Enterprise Server.
pub const API_URL_ENV_VAR: &str = "GITHUB_API_URL";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_REJECTED: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError {
    /// The flag at fault, e.g. `--limit`.
    pub flag: Option<String>,
    pub message: String,
}

impl UsageError {
    fn new(flag: &str, message: impl Into<String>) -> Self {
        UsageError {
            flag: Some(flag.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.flag {
            Some(flag) if !self.message.contains(flag.as_str()) => {
                write!(f, "{flag}: {}", self.message)
            }
            _ => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Error)]
pub enum ArgsError {
    #[error("{0}")]
    Usage(#[from] UsageError),
    /// `--help` or `--version`; the text goes to standard output.
    #[error("{0}")]
    Info(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenSource {
    Flag,
    Environment,
    None,
}

#[derive(Clone, PartialEq, Eq)]
pub struct CliConfig {
    /// `None` in interactive mode, where the spec comes from the prompts.
    pub spec: Option<QuerySpec>,
    pub token: Option<String>,
    pub token_source: TokenSource,
    /// `None` selects the bundled baseline model.
    pub model_path: Option<PathBuf>,
    pub output_path: PathBuf,
    pub omitted_path: PathBuf,
    pub fixtures_dir: Option<PathBuf>,
    /// API root for live mode, from `GITHUB_API_URL`.
    pub api_url: Option<String>,
    pub interactive: bool,
    pub include_confidence: bool,
}

impl fmt::Debug for CliConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CliConfig")
            .field("spec", &self.spec)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .field("token_source", &self.token_source)
            .field("model_path", &self.model_path)
            .field("output_path", &self.output_path)
            .field("omitted_path", &self.omitted_path)
            .field("fixtures_dir", &self.fixtures_dir)
            .field("api_url", &self.api_url)
            .field("interactive", &self.interactive)
            .field("include_confidence", &self.include_confidence)
            .finish()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "issuelens",
    version,
    about = "Search GitHub issues and classify every line of their comment threads."
)]
struct Args {
    /// Search query (GitHub issue search syntax).
    #[arg(long, value_name = "S")]
    query: Option<String>,
    /// Maximum number of issues to process (1-1000).
    #[arg(long, value_name = "N", default_value_t = DEFAULT_LIMIT as u64,
          value_parser = clap::value_parser!(u64).range(1..=MAX_SEARCH_RESULTS as u64))]
    limit: u64,
    /// best-match, comments, created, updated or reactions.
    #[arg(long, value_name = "K", default_value = "best-match")]
    sort: SortKey,
    /// asc or desc.
    #[arg(long, value_name = "O", default_value = "desc")]
    order: SortOrder,
    /// Model file (defaults to the bundled baseline).
    #[arg(long, value_name = "P")]
    model: Option<PathBuf>,
    #[arg(long, value_name = "P", default_value = "results.csv")]
    output: PathBuf,
    #[arg(long, value_name = "P", default_value = "omitted.csv")]
    omitted_output: PathBuf,
    /// Drop result lines in this category (repeatable).
    #[arg(long, value_name = "C")]
    omit_category: Vec<String>,
    /// Keep only issues with a line in this category (repeatable).
    #[arg(long, value_name = "C")]
    require_category: Vec<String>,
    /// Drop issues with any line in this category (repeatable).
    #[arg(long, value_name = "C")]
    forbid_category: Vec<String>,
    /// Keep search hits that do not contain the query verbatim.
    #[arg(long)]
    no_strict_match: bool,
    /// issue or comment.
    #[arg(long, value_name = "SCOPE", default_value = "issue")]
    strict_scope: StrictScope,
    /// Minimum number of comments for an issue to count as discussed.
    #[arg(long, value_name = "N", default_value_t = 1)]
    min_comments: usize,
    /// GitHub token; falls back to the GITHUB_TOKEN environment variable.
    #[arg(long, value_name = "T")]
    token: Option<String>,
    /// Replay recorded responses from this directory instead of calling GitHub.
    #[arg(long, value_name = "DIR")]
    fixtures: Option<PathBuf>,
    /// Build the query through prompts.
    #[arg(long, conflicts_with_all = [
        "query", "limit", "sort", "order", "omit_category", "require_category",
        "forbid_category", "no_strict_match", "strict_scope", "min_comments",
    ])]
    interactive: bool,
    /// Add a confidence column to the results file.
    #[arg(long)]
    confidence: bool,
}

fn flag_of(err: &clap::Error) -> Option<String> {
    match err.get(ContextKind::InvalidArg) {
        Some(ContextValue::String(s)) => s.split_whitespace().next().map(str::to_string),
        Some(ContextValue::Strings(v)) => v
            .first()
            .and_then(|s| s.split_whitespace().next())
            .map(str::to_string),
        _ => None,
    }
}

fn usage_from_clap(err: clap::Error) -> ArgsError {
    match err.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ArgsError::Info(err.to_string()),
        _ => {
            let message = err
                .to_string()
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ")
                .to_string();
            ArgsError::Usage(UsageError {
                flag: flag_of(&err),
                message,
            })
        }
    }
}

fn category_set(values: &[String]) -> BTreeSet<String> {
    values.iter().map(|v| v.trim().to_string()).collect()
}

/// Parses `argv` (including the program name). Pure in `argv` and `env`.
pub fn parse_args<I, T>(argv: I, env: &HashMap<String, String>) -> Result<CliConfig, ArgsError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = Args::try_parse_from(argv).map_err(usage_from_clap)?;

    if args.output == args.omitted_output {
        return Err(UsageError::new(
            "--omitted-output",
            "--omitted-output must differ from --output",
        )
        .into());
    }
    if let Some(dup) = args.require_category.iter().find(|r| {
        args.forbid_category
            .iter()
            .any(|f| f.trim().eq_ignore_ascii_case(r.trim()))
    }) {
        return Err(UsageError::new(
            "--forbid-category",
            format!("--forbid-category {dup:?} is also given to --require-category"),
        )
        .into());
    }

    let spec = if args.interactive {
        None
    } else {
        let Some(query) = args.query else {
            return Err(UsageError::new(
                "--query",
                "--query is required unless --interactive is given",
            )
            .into());
        };
        if query.trim().is_empty() {
            return Err(UsageError::new("--query", "--query must not be empty").into());
        }
        Some(QuerySpec {
            query,
            limit: args.limit as usize,
            sort: args.sort,
            order: args.order,
            strict_match: !args.no_strict_match,
            strict_scope: args.strict_scope,
            omit_categories: category_set(&args.omit_category),
            require_categories: category_set(&args.require_category),
            forbid_categories: category_set(&args.forbid_category),
            min_comments: args.min_comments,
        })
    };

    let env_token = env.get(TOKEN_ENV_VAR).map(String::as_str);
    let token = resolve_token(args.token.as_deref(), env_token);
    let token_source = match (&token, args.token.as_deref().map(str::trim)) {
        (None, _) => TokenSource::None,
        (Some(_), Some(t)) if !t.is_empty() => TokenSource::Flag,
        (Some(_), _) => TokenSource::Environment,
    };

    Ok(CliConfig {
        spec,
        token,
        token_source,
        model_path: args.model,
        output_path: args.output,
        omitted_path: args.omitted_output,
        fixtures_dir: args.fixtures,
        api_url: env
            .get(API_URL_ENV_VAR)
            .map(|u| u.trim().to_string())
            .filter(|u| !u.is_empty()),
        interactive: args.interactive,
        include_confidence: args.confidence,
    })
}

/// Maps category names given on the command line onto the model's
/// spelling. Unknown names are usage errors naming the flag.
pub fn resolve_categories(spec: &mut QuerySpec, taxonomy: &Taxonomy) -> Result<(), UsageError> {
    let resolve = |set: &BTreeSet<String>, flag: &str| -> Result<BTreeSet<String>, UsageError> {
        set.iter()
            .map(|name| {
                taxonomy.resolve(name).map(str::to_string).ok_or_else(|| {
                    UsageError::new(
                        flag,
                        format!(
                            "{flag} {name:?} is not a model category (known: {})",
                            taxonomy.names().join(", ")
                        ),
                    )
                })
            })
            .collect()
    };
    spec.omit_categories = resolve(&spec.omit_categories, "--omit-category")?;
    spec.require_categories = resolve(&spec.require_categories, "--require-category")?;
    spec.forbid_categories = resolve(&spec.forbid_categories, "--forbid-category")?;
    Ok(())
}

#[derive(Debug, Error)]
pub enum InteractiveError {
    #[error("aborted")]
    Aborted,
    #[error("terminal I/O failed: {0}")]
    Io(#[from] std::io::Error),
}

struct Prompter<'a> {
    input: &'a mut dyn BufRead,
    output: &'a mut dyn Write,
}

impl Prompter<'_> {
    /// Shows `prompt` and returns the trimmed answer; end of input aborts.
    fn ask(&mut self, prompt: &str) -> Result<String, InteractiveError> {
        write!(self.output, "{prompt}")?;
        self.output.flush()?;
        let mut line = String::new();
        if self.input.read_line(&mut line)? == 0 {
            writeln!(self.output)?;
            return Err(InteractiveError::Aborted);
        }
        Ok(line.trim().to_string())
    }

    /// Repeats `prompt` until `parse` accepts the answer.
    fn ask_until<T>(
        &mut self,
        prompt: &str,
        mut parse: impl FnMut(&str) -> Result<T, String>,
    ) -> Result<T, InteractiveError> {
        loop {
            let answer = self.ask(prompt)?;
            match parse(&answer) {
                Ok(v) => return Ok(v),
                Err(reason) => writeln!(self.output, "  {reason}")?,
            }
        }
    }
}

fn is_none(answer: &str) -> bool {
    answer.is_empty() || answer.eq_ignore_ascii_case("none")
}

fn pick_category<'t>(item: &str, taxonomy: &'t Taxonomy) -> Result<&'t str, String> {
    if let Ok(n) = item.parse::<usize>() {
        if (1..=taxonomy.len()).contains(&n) {
            return Ok(taxonomy.name(n - 1));
        }
        return Err(format!("{n} is not between 1 and {}", taxonomy.len()));
    }
    taxonomy
        .resolve(item)
        .ok_or_else(|| format!("{item:?} is not a category"))
}

fn parse_omissions(answer: &str, taxonomy: &Taxonomy) -> Result<BTreeSet<String>, String> {
    if is_none(answer) {
        return Ok(BTreeSet::new());
    }
    answer
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| pick_category(item, taxonomy).map(str::to_string))
        .collect()
}

type IssueFilters = (BTreeSet<String>, BTreeSet<String>);

fn parse_issue_filters(answer: &str, taxonomy: &Taxonomy) -> Result<IssueFilters, String> {
    let mut require = BTreeSet::new();
    let mut forbid = BTreeSet::new();
    if is_none(answer) {
        return Ok((require, forbid));
    }
    for item in answer.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (target, rest) = match item.as_bytes()[0] {
            b'+' => (&mut require, &item[1..]),
            b'-' => (&mut forbid, &item[1..]),
            _ => return Err(format!("{item:?} needs a + (require) or - (forbid) prefix")),
        };
        target.insert(pick_category(rest.trim(), taxonomy)?.to_string());
    }
    if let Some(both) = require.intersection(&forbid).next() {
        return Err(format!("{both:?} cannot be both required and forbidden"));
    }
    Ok((require, forbid))
}

/// Builds a query spec through a sequence of prompts.
pub fn interactive_session(
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    taxonomy: &Taxonomy,
) -> Result<QuerySpec, InteractiveError> {
    let mut p = Prompter { input, output };

    let query = p.ask_until("Search query: ", |a| {
        if a.is_empty() {
            Err("the query must not be empty".into())
        } else {
            Ok(a.to_string())
        }
    })?;
    let mut spec = QuerySpec::new(query);

    let limit_prompt = format!("Issue limit (1-{MAX_SEARCH_RESULTS}) [{DEFAULT_LIMIT}]: ");
    spec.limit = p.ask_until(&limit_prompt, |a| {
        if a.is_empty() {
            return Ok(DEFAULT_LIMIT);
        }
        match a.parse::<usize>() {
            Ok(n) if (1..=MAX_SEARCH_RESULTS).contains(&n) => Ok(n),
            _ => Err(format!(
                "the limit must be a whole number from 1 to {MAX_SEARCH_RESULTS}"
            )),
        }
    })?;

    writeln!(p.output, "Sort by:")?;
    for (i, key) in SortKey::ALL.iter().enumerate() {
        writeln!(p.output, "  {}) {key}", i + 1)?;
    }
    spec.sort = p.ask_until("Sort choice [1]: ", |a| {
        if a.is_empty() {
            return Ok(SortKey::default());
        }
        match a.parse::<usize>() {
            Ok(n) if (1..=SortKey::ALL.len()).contains(&n) => Ok(SortKey::ALL[n - 1]),
            Ok(_) => Err(format!("pick a number from 1 to {}", SortKey::ALL.len())),
            Err(_) => a.parse::<SortKey>(),
        }
    })?;

    spec.order = p.ask_until("Order (asc/desc) [desc]: ", |a| {
        if a.is_empty() {
            Ok(SortOrder::default())
        } else {
            a.parse::<SortOrder>()
        }
    })?;

    writeln!(p.output, "Categories:")?;
    for (i, name) in taxonomy.names().iter().enumerate() {
        writeln!(p.output, "  {:>2}) {name}", i + 1)?;
    }
    spec.omit_categories = p.ask_until(
        "Omit lines in categories (comma-separated numbers or names) [none]: ",
        |a| parse_omissions(a, taxonomy),
    )?;
    let (require, forbid) = p.ask_until(
        "Issue filters (+N requires, -N forbids, comma-separated) [none]: ",
        |a| parse_issue_filters(a, taxonomy),
    )?;
    spec.require_categories = require;
    spec.forbid_categories = forbid;

    writeln!(
        p.output,
        "Query {:?}, limit {}, sort {}, order {}",
        spec.query, spec.limit, spec.sort, spec.order
    )?;
    let go = p.ask_until("Run this query? [Y/n]: ", |a| {
        match a.to_ascii_lowercase().as_str() {
            "" | "y" | "yes" => Ok(true),
            "n" | "no" | "cancel" | "q" | "quit" => Ok(false),
            _ => Err("answer yes or no".into()),
        }
    })?;
    if go {
        Ok(spec)
    } else {
        Err(InteractiveError::Aborted)
    }
}

fn client_exit_code(err: &ClientError) -> i32 {
    match err {
        ClientError::InvalidToken
        | ClientError::QueryRejected(_)
        | ClientError::Forbidden { .. } => EXIT_REJECTED,
        ClientError::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_IO,
    }
}

/// Runs the tool. Returns the process exit code.
pub fn run_main<I, T>(
    argv: I,
    env: &HashMap<String, String>,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    macro_rules! fail {
        ($code:expr, $($arg:tt)*) => {{
            let _ = writeln!(stderr, "issuelens: {}", format_args!($($arg)*));
            return $code;
        }};
    }

    let config = match parse_args(argv, env) {
        Ok(c) => c,
        Err(ArgsError::Info(text)) => {
            let _ = write!(stdout, "{text}");
            return EXIT_OK;
        }
        Err(ArgsError::Usage(e)) => fail!(EXIT_USAGE, "{e}"),
    };

    let model = match &config.model_path {
        Some(path) => match load_model(path) {
            Ok(m) => m,
            Err(e) => fail!(EXIT_IO, "cannot load model: {e}"),
        },
        None => ModelFile::bundled(),
    };

    let mut spec = match config.spec.clone() {
        Some(spec) => spec,
        None => match interactive_session(stdin, stdout, model.taxonomy()) {
            Ok(spec) => spec,
            Err(InteractiveError::Aborted) => fail!(EXIT_USAGE, "aborted; nothing was run"),
            Err(InteractiveError::Io(e)) => fail!(EXIT_IO, "terminal I/O failed: {e}"),
        },
    };
    if let Err(e) = resolve_categories(&mut spec, model.taxonomy()) {
        fail!(EXIT_USAGE, "{e}");
    }

    let mode = match &config.fixtures_dir {
        Some(dir) => Mode::Replay(dir.clone()),
        None => Mode::Live,
    };
    let mut options = SessionOptions::with_token(config.token.clone());
    if let Some(url) = &config.api_url {
        options.base_endpoint = url.clone();
    }
    let session = match Session::open(options, mode) {
        Ok(s) => s,
        Err(e) => fail!(client_exit_code(&e), "{e}"),
    };
    info!(
        "session ready ({:?}, token from {:?})",
        session.mode(),
        config.token_source
    );

    let started = Instant::now();
    let output = match pipeline::run(&spec, &session, &model, &PrepConfig::default()) {
        Ok(o) => o,
        Err(PipelineError::InvalidSpec(m)) => fail!(EXIT_USAGE, "{m}"),
        Err(PipelineError::Client(e)) => fail!(client_exit_code(&e), "{e}"),
    };
    info!("pipeline finished in {:.2?}", started.elapsed());

    let rows = match write_results(
        &output.records,
        &config.output_path,
        config.include_confidence,
    ) {
        Ok(n) => n,
        Err(e) => fail!(EXIT_IO, "{e}"),
    };
    let omitted = match write_omitted(&output.omitted, &config.omitted_path) {
        Ok(n) => n,
        Err(e) => fail!(EXIT_IO, "{e}"),
    };
    let _ = writeln!(
        stdout,
        "Wrote {rows} line(s) to {}",
        config.output_path.display()
    );
    let _ = writeln!(
        stdout,
        "Wrote {omitted} omitted issue(s) to {}",
        config.omitted_path.display()
    );
    let _ = write!(stdout, "{}", render_summary(&output.summary));
    EXIT_OK
}
