//! Comment cleaning and tokenization.
//!
//! Raw comment markdown goes through four stages: placeholder replacement
//! (code, URLs, mentions, quoted strings), newline splitting, per-line
//! normalization and stop-word removal. Every stage is a pure function of
//! its input and the [`PrepConfig`].

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::github_client::RawComment;

const BUNDLED_STOP_WORDS: &str = include_str!("../assets/stopwords_en.txt");

/// Longest GitHub login.
const MAX_LOGIN_LEN: usize = 39;

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("placeholder {0:?} must be non-empty and consist of A-Z, 0-9 or '_'")]
    BadPlaceholder(String),
    #[error("placeholder {0:?} is used for more than one role")]
    DuplicatePlaceholder(String),
    #[error("placeholder {0:?} also appears in a stop-word list")]
    PlaceholderIsStopWord(String),
    #[error("reading stop-word list {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Immutable preprocessing settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrepConfig {
    stop_words: BTreeSet<String>,
    custom_stop_words: BTreeSet<String>,
    mention_token: String,
    url_token: String,
    quote_token: String,
    code_token: String,
}

impl Default for PrepConfig {
    /// Bundled English stop list, no custom words, default placeholders.
    fn default() -> Self {
        PrepConfig::builder()
            .stop_words(parse_stop_words(BUNDLED_STOP_WORDS))
            .build()
            .expect("bundled configuration is valid")
    }
}

impl PrepConfig {
    pub fn builder() -> PrepConfigBuilder {
        PrepConfigBuilder::default()
    }

    /// Configuration with no stop words at all.
    pub fn without_stop_words() -> Self {
        PrepConfig::builder()
            .build()
            .expect("default placeholders are valid")
    }

    pub fn stop_words(&self) -> &BTreeSet<String> {
        &self.stop_words
    }

    pub fn custom_stop_words(&self) -> &BTreeSet<String> {
        &self.custom_stop_words
    }

    pub fn mention_token(&self) -> &str {
        &self.mention_token
    }

    pub fn url_token(&self) -> &str {
        &self.url_token
    }

    pub fn quote_token(&self) -> &str {
        &self.quote_token
    }

    pub fn code_token(&self) -> &str {
        &self.code_token
    }

    /// All four placeholders.
    pub fn placeholders(&self) -> [&str; 4] {
        [
            &self.mention_token,
            &self.url_token,
            &self.quote_token,
            &self.code_token,
        ]
    }

    pub fn is_placeholder(&self, token: &str) -> bool {
        self.placeholders().contains(&token)
    }

    fn is_stop_word(&self, token: &str) -> bool {
        let lower = token.to_lowercase();
        self.stop_words.contains(&lower) || self.custom_stop_words.contains(&lower)
    }
}

#[derive(Debug, Clone)]
pub struct PrepConfigBuilder {
    stop_words: BTreeSet<String>,
    custom_stop_words: BTreeSet<String>,
    mention_token: String,
    url_token: String,
    quote_token: String,
    code_token: String,
}

impl Default for PrepConfigBuilder {
    fn default() -> Self {
        PrepConfigBuilder {
            stop_words: BTreeSet::new(),
            custom_stop_words: BTreeSet::new(),
            mention_token: "SCREEN_NAME".to_string(),
            url_token: "URL".to_string(),
            quote_token: "QUOTE".to_string(),
            code_token: "CODE".to_string(),
        }
    }
}

impl PrepConfigBuilder {
    pub fn stop_words<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.stop_words = words
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .collect();
        self
    }

    pub fn custom_stop_words<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.custom_stop_words = words
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .collect();
        self
    }

    pub fn mention_token(mut self, token: impl Into<String>) -> Self {
        self.mention_token = token.into();
        self
    }

    pub fn url_token(mut self, token: impl Into<String>) -> Self {
        self.url_token = token.into();
        self
    }

    pub fn quote_token(mut self, token: impl Into<String>) -> Self {
        self.quote_token = token.into();
        self
    }

    pub fn code_token(mut self, token: impl Into<String>) -> Self {
        self.code_token = token.into();
        self
    }

    pub fn build(self) -> Result<PrepConfig, PrepError> {
        let placeholders = [
            &self.mention_token,
            &self.url_token,
            &self.quote_token,
            &self.code_token,
        ];
        let mut seen = BTreeSet::new();
        for p in placeholders {
            if p.is_empty()
                || !p
                    .chars()
                    .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
                || !p.chars().any(|c| c.is_ascii_uppercase())
            {
                return Err(PrepError::BadPlaceholder(p.clone()));
            }
            if !seen.insert(p.as_str()) {
                return Err(PrepError::DuplicatePlaceholder(p.clone()));
            }
            if self.stop_words.contains(p.as_str()) || self.custom_stop_words.contains(p.as_str()) {
                return Err(PrepError::PlaceholderIsStopWord(p.clone()));
            }
        }
        Ok(PrepConfig {
            stop_words: self.stop_words,
            custom_stop_words: self.custom_stop_words,
            mention_token: self.mention_token,
            url_token: self.url_token,
            quote_token: self.quote_token,
            code_token: self.code_token,
        })
    }
}

/// Parses a stop-word list: one word per line, `#` starts a comment line.
pub fn parse_stop_words(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stop_words(path: &Path) -> Result<BTreeSet<String>, PrepError> {
    let text = fs::read_to_string(path).map_err(|source| PrepError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_stop_words(&text))
}

/// The stop list shipped with the crate.
pub fn bundled_stop_words() -> BTreeSet<String> {
    parse_stop_words(BUNDLED_STOP_WORDS)
}

/// One cleaned, tokenized comment line.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProcessedLine {
    pub issue_id: u64,
    pub comment_id: u64,
    pub line_index: usize,
    pub tokens: Vec<String>,
    pub rendered: String,
    pub raw_line: String,
}

// Working text: one entry per char, flagged when it belongs to a placeholder.
// Later rules never match inside protected chars.
#[derive(Debug, Default)]
struct Masked {
    chars: Vec<char>,
    protected: Vec<bool>,
}

impl Masked {
    fn with_capacity(n: usize) -> Self {
        Masked {
            chars: Vec::with_capacity(n),
            protected: Vec::with_capacity(n),
        }
    }

    fn len(&self) -> usize {
        self.chars.len()
    }

    fn push(&mut self, c: char, protected: bool) {
        self.chars.push(c);
        self.protected.push(protected);
    }

    fn push_placeholder(&mut self, token: &str) {
        for c in token.chars() {
            self.push(c, true);
        }
    }

    fn free(&self, i: usize) -> bool {
        i < self.len() && !self.protected[i]
    }

    fn preceded_by_word_char(&self, i: usize) -> bool {
        i > 0 && is_word_char(self.chars[i - 1])
    }

    fn line_end(&self, from: usize) -> usize {
        self.chars[from..]
            .iter()
            .position(|&c| c == '\n')
            .map_or(self.len(), |p| from + p)
    }

    fn into_string(self) -> String {
        self.chars.into_iter().collect()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn is_login_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '-'
}

/// Replaces code, URLs, mentions and quoted strings with placeholder tokens.
///
/// Precedence is code, then URL, then mention, then quote; text already
/// turned into a placeholder is invisible to the later rules. Placeholder
/// words already present in the input are treated the same way, which makes
/// the function idempotent.
pub fn replace_tokens(body: &str, config: &PrepConfig) -> String {
    let stripped = strip_blockquote_markers(body);
    let text = mask_literal_placeholders(&stripped, config);
    let text = replace_code(text, config.code_token());
    let text = replace_urls(text, config.url_token());
    let text = replace_mentions(text, config.mention_token());
    let text = replace_quotes(text, config.quote_token());
    drop_dangling_at_signs(text).into_string()
}

fn strip_blockquote_markers(body: &str) -> String {
    let mut out = String::with_capacity(body.len());
    for (i, line) in body.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let rest = line.trim_start_matches([' ', '\t']);
        if rest.starts_with('>') {
            let mut rest = rest;
            while let Some(r) = rest.strip_prefix('>') {
                rest = r.trim_start_matches([' ', '\t']);
            }
            out.push_str(rest);
        } else {
            out.push_str(line);
        }
    }
    out
}

fn mask_literal_placeholders(text: &str, config: &PrepConfig) -> Masked {
    let chars: Vec<char> = text.chars().collect();
    let mut placeholders: Vec<Vec<char>> = config
        .placeholders()
        .iter()
        .map(|p| p.chars().collect())
        .collect();
    // Longest first so that overlapping names resolve deterministically.
    placeholders.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));

    let mut out = Masked::with_capacity(chars.len());
    let mut i = 0;
    while i < chars.len() {
        if let Some(p) = placeholders.iter().find(|p| chars[i..].starts_with(p)) {
            for &c in p {
                out.push(c, true);
            }
            i += p.len();
        } else {
            out.push(chars[i], false);
            i += 1;
        }
    }
    out
}

fn replace_code(text: Masked, token: &str) -> Masked {
    let mut out = Masked::with_capacity(text.len());
    let mut i = 0;
    let n = text.len();
    while i < n {
        let at_line_start = i == 0 || text.chars[i - 1] == '\n';
        if at_line_start {
            if let Some(end) = fenced_block_end(&text, i) {
                out.push_placeholder(token);
                i = end;
                continue;
            }
        }
        if text.chars[i] == '`' && text.free(i) {
            let run = run_length(&text, i, '`');
            let line_end = text.line_end(i);
            let close = find_closing_run(&text, i + run, line_end, run);
            out.push_placeholder(token);
            i = match close {
                Some(c) => c + run,
                None => line_end,
            };
            continue;
        }
        out.push(text.chars[i], text.protected[i]);
        i += 1;
    }
    out
}

fn run_length(text: &Masked, from: usize, c: char) -> usize {
    text.chars[from..]
        .iter()
        .zip(&text.protected[from..])
        .take_while(|(&ch, &p)| ch == c && !p)
        .count()
}

fn find_closing_run(text: &Masked, from: usize, limit: usize, run: usize) -> Option<usize> {
    let mut j = from;
    while j < limit {
        if text.chars[j] == '`' && text.free(j) {
            let len = run_length(text, j, '`');
            if len == run {
                return Some(j);
            }
            j += len;
        } else {
            j += 1;
        }
    }
    None
}

/// If a fence opens at `start`, returns the index just past the block (the
/// closing fence line, excluding its newline, or the end of text).
fn fenced_block_end(text: &Masked, start: usize) -> Option<usize> {
    let line_end = text.line_end(start);
    let mut i = start;
    while i < line_end && matches!(text.chars[i], ' ' | '\t') {
        i += 1;
    }
    if i >= line_end || !text.free(i) {
        return None;
    }
    let fence_char = text.chars[i];
    if fence_char != '`' && fence_char != '~' {
        return None;
    }
    let run = run_length(text, i, fence_char);
    if run < 3 {
        return None;
    }
    if fence_char == '`' && text.chars[i + run..line_end].contains(&'`') {
        return None;
    }

    let mut line_start = line_end + 1;
    while line_start <= text.len() {
        if line_start == text.len() {
            break;
        }
        let end = text.line_end(line_start);
        if is_closing_fence(text, line_start, end, fence_char, run) {
            return Some(end);
        }
        line_start = end + 1;
    }
    Some(text.len())
}

fn is_closing_fence(text: &Masked, start: usize, end: usize, fence_char: char, run: usize) -> bool {
    let mut i = start;
    while i < end && matches!(text.chars[i], ' ' | '\t') {
        i += 1;
    }
    let len = if i < end {
        run_length(text, i, fence_char)
    } else {
        0
    };
    len >= run && text.chars[i + len..end].iter().all(|c| c.is_whitespace())
}

fn scheme_len_at(text: &Masked, i: usize) -> Option<usize> {
    for scheme in ["https://", "http://"] {
        let len = scheme.len();
        if i + len <= text.len()
            && (i..i + len).all(|k| text.free(k))
            && text.chars[i..i + len]
                .iter()
                .zip(scheme.chars())
                .all(|(a, b)| a.to_ascii_lowercase() == b)
        {
            return Some(len);
        }
    }
    None
}

fn replace_urls(text: Masked, token: &str) -> Masked {
    let mut out = Masked::with_capacity(text.len());
    let mut i = 0;
    while i < text.len() {
        if let Some(len) = scheme_len_at(&text, i) {
            let mut j = i + len;
            while text.free(j) && !text.chars[j].is_whitespace() {
                j += 1;
            }
            out.push_placeholder(token);
            i = j;
            continue;
        }
        out.push(text.chars[i], text.protected[i]);
        i += 1;
    }
    out
}

fn replace_mentions(text: Masked, token: &str) -> Masked {
    let mut out = Masked::with_capacity(text.len());
    let mut i = 0;
    while i < text.len() {
        if text.chars[i] == '@' && text.free(i) && !text.preceded_by_word_char(i) {
            let mut j = i + 1;
            while j - i - 1 < MAX_LOGIN_LEN && text.free(j) && is_login_char(text.chars[j]) {
                j += 1;
            }
            if j > i + 1 {
                out.push_placeholder(token);
                i = j;
                continue;
            }
        }
        out.push(text.chars[i], text.protected[i]);
        i += 1;
    }
    out
}

fn replace_quotes(text: Masked, token: &str) -> Masked {
    let mut out = Masked::with_capacity(text.len());
    let mut i = 0;
    while i < text.len() {
        let c = text.chars[i];
        if (c == '"' || c == '\'') && text.free(i) && !text.preceded_by_word_char(i) {
            let line_end = text.line_end(i);
            let close = (i + 1..line_end).find(|&j| text.chars[j] == c);
            if let Some(j) = close {
                if (i + 1..j).all(|k| !text.protected[k]) {
                    out.push_placeholder(token);
                    i = j + 1;
                    continue;
                }
            }
        }
        out.push(c, text.protected[i]);
        i += 1;
    }
    out
}

/// Removes `@` signs that sit directly in front of a placeholder, where they
/// would otherwise read as a mention of the placeholder word.
fn drop_dangling_at_signs(text: Masked) -> Masked {
    let n = text.len();
    let mut keep = vec![true; n];
    let mut next_protected = false;
    for i in (0..n).rev() {
        if text.chars[i] == '@'
            && !text.protected[i]
            && next_protected
            && !text.preceded_by_word_char(i)
        {
            keep[i] = false;
            continue;
        }
        next_protected = text.protected[i];
    }
    let mut out = Masked::with_capacity(n);
    for i in (0..n).filter(|&i| keep[i]) {
        out.push(text.chars[i], text.protected[i]);
    }
    out
}

/// Splits on `\n`, strips carriage returns and trims each line; blank lines
/// are dropped.
pub fn split_lines(tokenized_body: &str) -> Vec<String> {
    tokenized_body
        .split('\n')
        .map(|l| l.replace('\r', ""))
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

fn keeps_edge_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '/' | '#' | '_')
}

/// Whitespace-splits a line, strips edge punctuation and lowercases every
/// token that is not a placeholder.
pub fn normalize(line: &str, config: &PrepConfig) -> Vec<String> {
    line.split_whitespace()
        .filter_map(|raw| {
            let stripped = raw.trim_matches(|c: char| !keeps_edge_char(c));
            if stripped.is_empty() {
                None
            } else if config.is_placeholder(stripped) {
                Some(stripped.to_string())
            } else {
                Some(stripped.to_lowercase())
            }
        })
        .collect()
}

pub fn remove_stop_words(tokens: Vec<String>, config: &PrepConfig) -> Vec<String> {
    tokens
        .into_iter()
        .filter(|t| config.is_placeholder(t) || !config.is_stop_word(t))
        .collect()
}

/// Full cleaning of one comment into classifier-ready lines.
pub fn preprocess_comment(comment: &RawComment, config: &PrepConfig) -> Vec<ProcessedLine> {
    let replaced = replace_tokens(&comment.body, config);
    split_lines(&replaced)
        .into_iter()
        .filter_map(|raw_line| {
            let tokens = remove_stop_words(normalize(&raw_line, config), config);
            (!tokens.is_empty()).then_some((raw_line, tokens))
        })
        .enumerate()
        .map(|(line_index, (raw_line, tokens))| ProcessedLine {
            issue_id: comment.issue_id,
            comment_id: comment.comment_id,
            line_index,
            rendered: tokens.join(" "),
            tokens,
            raw_line,
        })
        .collect()
}
