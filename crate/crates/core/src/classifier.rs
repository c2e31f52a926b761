//! Linear line classifier and its portable model file.
//!
//! A model scores a token sequence per category as
//! `bias[c] + Σ weights[c][index(t)] · count(t)`, ignoring tokens outside the
//! vocabulary. The model never preprocesses its input; tokens must come out
//! of [`crate::text_prep`] already.
//!
//! The on-disk format is a UTF-8 JSON document with exactly the top-level
//! keys `bias`, `format_version`, `metadata`, `taxonomy`, `vocabulary` and
//! `weights`, written in that (sorted) order with one weight row per line.
//! Numbers use the shortest decimal form that parses back to the same
//! `f64`, so a save/load cycle is lossless and two saves of one model are
//! byte-identical.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

pub const FORMAT_VERSION: u64 = 1;

const BUNDLED_MODEL: &str = include_str!("../assets/baseline_model.json");

/// Scores closer than this (relative) are treated as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Category names of the default taxonomy. This is a subset of the full
/// sixteen-category scheme the bundled model's taxonomy descends from.
pub const DEFAULT_CATEGORIES: [&str; 11] = [
    "Observed Bug Behavior",
    "Workarounds",
    "Motivation",
    "Potential New Issues & Requests",
    "Solution Discussion",
    "Action on Issue",
    "Contribution & Commitment",
    "Usage",
    "Bug Reproduction",
    "Expected Behavior",
    "Social Discussion",
];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model document is not valid JSON: {0}")]
    Parse(String),
    #[error("unsupported model format_version {0}")]
    UnsupportedVersion(String),
    #[error("model field `{field}`: {reason}")]
    SchemaViolation { field: String, reason: String },
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("example labelled {0:?}, which is not in the taxonomy")]
    UnknownCategory(String),
    #[error("smoothing constant must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error("corpus {path}: {reason}")]
    Corpus { path: String, reason: String },
}

impl ModelError {
    fn schema(field: &str, reason: impl Into<String>) -> Self {
        ModelError::SchemaViolation {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

/// Ordered, duplicate-free list of category names. Order decides ties.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Taxonomy {
    categories: Vec<String>,
}

impl Taxonomy {
    pub fn new<I, S>(names: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let categories: Vec<String> = names.into_iter().map(Into::into).collect();
        if categories.is_empty() {
            return Err(ModelError::InvalidTaxonomy("no categories".into()));
        }
        let mut seen = BTreeSet::new();
        for name in &categories {
            if name.trim().is_empty() {
                return Err(ModelError::InvalidTaxonomy("empty category name".into()));
            }
            if !seen.insert(name.to_lowercase()) {
                return Err(ModelError::InvalidTaxonomy(format!(
                    "duplicate category {name:?}"
                )));
            }
        }
        Ok(Taxonomy { categories })
    }

    pub fn default_taxonomy() -> Self {
        Taxonomy::new(DEFAULT_CATEGORIES).expect("default taxonomy is valid")
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.categories
    }

    pub fn name(&self, index: usize) -> &str {
        &self.categories[index]
    }

    /// Exact-name lookup.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }

    /// Case-insensitive lookup returning the canonical spelling.
    pub fn resolve(&self, name: &str) -> Option<&str> {
        let wanted = name.trim().to_lowercase();
        self.categories
            .iter()
            .find(|c| c.to_lowercase() == wanted)
            .map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }
}

/// A validated linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    format_version: u64,
    taxonomy: Taxonomy,
    vocabulary: BTreeMap<String, usize>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    metadata: BTreeMap<String, String>,
}

impl ModelFile {
    pub fn new(
        taxonomy: Taxonomy,
        vocabulary: BTreeMap<String, usize>,
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self, ModelError> {
        let model = ModelFile {
            format_version: FORMAT_VERSION,
            taxonomy,
            vocabulary,
            weights,
            bias,
            metadata,
        };
        model.validate()?;
        Ok(model)
    }

    /// The baseline model shipped with the crate.
    pub fn bundled() -> Self {
        parse_model(BUNDLED_MODEL).expect("bundled model is valid")
    }

    fn validate(&self) -> Result<(), ModelError> {
        let classes = self.taxonomy.len();
        let features = self.vocabulary.len();
        if self.weights.len() != classes {
            return Err(ModelError::schema(
                "weights",
                format!("{} rows for {classes} categories", self.weights.len()),
            ));
        }
        if let Some((c, row)) = self
            .weights
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != features)
        {
            return Err(ModelError::schema(
                "weights",
                format!(
                    "row {c} has {} columns, vocabulary has {features}",
                    row.len()
                ),
            ));
        }
        if self.weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(ModelError::schema("weights", "non-finite value"));
        }
        if self.bias.len() != classes {
            return Err(ModelError::schema(
                "bias",
                format!("length {} for {classes} categories", self.bias.len()),
            ));
        }
        if self.bias.iter().any(|b| !b.is_finite()) {
            return Err(ModelError::schema("bias", "non-finite value"));
        }
        let mut seen = vec![false; features];
        for (token, &index) in &self.vocabulary {
            if index >= features {
                return Err(ModelError::schema(
                    "vocabulary",
                    format!("index {index} of {token:?} outside 0..{features}"),
                ));
            }
            if std::mem::replace(&mut seen[index], true) {
                return Err(ModelError::schema(
                    "vocabulary",
                    format!("index {index} assigned twice"),
                ));
            }
        }
        Ok(())
    }

    pub fn format_version(&self) -> u64 {
        self.format_version
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn vocabulary(&self) -> &BTreeMap<String, usize> {
        &self.vocabulary
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    /// Canonical text form.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n");
        let _ = writeln!(out, "  \"bias\": {},", render_numbers(&self.bias));
        let _ = writeln!(out, "  \"format_version\": {},", self.format_version);
        out.push_str("  \"metadata\": ");
        render_object(
            &mut out,
            self.metadata.iter().map(|(k, v)| (k, json_string(v))),
        );
        out.push_str(",\n");
        let names: Vec<String> = self
            .taxonomy
            .names()
            .iter()
            .map(|n| json_string(n))
            .collect();
        let _ = writeln!(out, "  \"taxonomy\": [{}],", names.join(", "));
        out.push_str("  \"vocabulary\": ");
        render_object(
            &mut out,
            self.vocabulary.iter().map(|(k, v)| (k, v.to_string())),
        );
        out.push_str(",\n");
        out.push_str("  \"weights\": [");
        for (i, row) in self.weights.iter().enumerate() {
            out.push_str(if i == 0 { "\n    " } else { ",\n    " });
            out.push_str(&render_numbers(row));
        }
        out.push_str(if self.weights.is_empty() {
            "]\n"
        } else {
            "\n  ]\n"
        });
        out.push_str("}\n");
        out
    }

    /// Scores every category for an already-preprocessed token list.
    pub fn scores<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut scores = self.bias.clone();
        for token in tokens {
            if let Some(&index) = self.vocabulary.get(token.as_ref()) {
                for (score, row) in scores.iter_mut().zip(&self.weights) {
                    *score += row[index];
                }
            }
        }
        scores
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn json_number(x: f64) -> String {
    serde_json::to_string(&x).expect("finite numbers serialize")
}

fn render_numbers(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|&x| json_number(x)).collect();
    format!("[{}]", parts.join(", "))
}

fn render_object<'a>(out: &mut String, entries: impl Iterator<Item = (&'a String, String)>) {
    let mut empty = true;
    for (key, value) in entries {
        out.push_str(if empty { "{\n" } else { ",\n" });
        let _ = write!(out, "    {}: {}", json_string(key), value);
        empty = false;
    }
    out.push_str(if empty { "{}" } else { "\n  }" });
}

const TOP_LEVEL_FIELDS: [&str; 6] = [
    "bias",
    "format_version",
    "metadata",
    "taxonomy",
    "vocabulary",
    "weights",
];

/// Parses and validates a model document.
pub fn parse_model(text: &str) -> Result<ModelFile, ModelError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    let Value::Object(fields) = root else {
        return Err(ModelError::schema(
            "document",
            "top level must be an object",
        ));
    };
    if let Some(extra) = fields
        .keys()
        .find(|k| !TOP_LEVEL_FIELDS.contains(&k.as_str()))
    {
        return Err(ModelError::schema(extra, "unexpected top-level field"));
    }
    let field = |name: &str| {
        fields
            .get(name)
            .ok_or_else(|| ModelError::schema(name, "missing"))
    };

    let version = field("format_version")?;
    if version.as_u64() != Some(FORMAT_VERSION) {
        return Err(ModelError::UnsupportedVersion(version.to_string()));
    }

    let names = field("taxonomy")?
        .as_array()
        .ok_or_else(|| ModelError::schema("taxonomy", "must be an array of strings"))?
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| ModelError::schema("taxonomy", "must be an array of strings"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let taxonomy =
        Taxonomy::new(names).map_err(|e| ModelError::schema("taxonomy", e.to_string()))?;

    let vocabulary = field("vocabulary")?
        .as_object()
        .ok_or_else(|| ModelError::schema("vocabulary", "must be an object"))?
        .iter()
        .map(|(token, index)| {
            index
                .as_u64()
                .map(|i| (token.clone(), i as usize))
                .ok_or_else(|| {
                    ModelError::schema(
                        "vocabulary",
                        format!("index of {token:?} is not a non-negative integer"),
                    )
                })
        })
        .collect::<Result<BTreeMap<_, _>, _>>()?;

    let weights = field("weights")?
        .as_array()
        .ok_or_else(|| ModelError::schema("weights", "must be an array of arrays"))?
        .iter()
        .map(|row| number_array(row, "weights"))
        .collect::<Result<Vec<_>, _>>()?;

    let bias = number_array(field("bias")?, "bias")?;

    let metadata = field("metadata")?
        .as_object()
        .ok_or_else(|| ModelError::schema("metadata", "must be an object"))?
        .iter()
        .map(|(k, v)| {
            v.as_str()
                .map(|s| (k.clone(), s.to_string()))
                .ok_or_else(|| {
                    ModelError::schema("metadata", format!("value of {k:?} is not a string"))
                })
        })
        .collect::<Result<BTreeMap<_, _>, _>>()?;

    ModelFile::new(taxonomy, vocabulary, weights, bias, metadata)
}

fn number_array(value: &Value, field: &str) -> Result<Vec<f64>, ModelError> {
    value
        .as_array()
        .ok_or_else(|| ModelError::schema(field, "must be an array of numbers"))?
        .iter()
        .map(|v| {
            v.as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ModelError::schema(field, "non-numeric or non-finite value"))
        })
        .collect()
}

pub fn load_model(path: &Path) -> Result<ModelFile, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_model(&text)
}

pub fn save_model(model: &ModelFile, path: &Path) -> Result<(), ModelError> {
    fs::write(path, model.to_canonical_string()).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// One training sentence: tokens are used verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub tokens: Vec<String>,
    pub category: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledCorpus {
    pub examples: Vec<LabeledExample>,
}

impl LabeledCorpus {
    pub fn new(examples: Vec<LabeledExample>) -> Self {
        LabeledCorpus { examples }
    }

    pub fn push(&mut self, category: impl Into<String>, text: &str) {
        self.examples.push(LabeledExample {
            tokens: text.split_whitespace().map(str::to_string).collect(),
            category: category.into(),
        });
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Reads a two-column (`category`, `text`) delimited file with a header
    /// row. Text is whitespace-split without any other processing.
    pub fn from_reader<R: std::io::Read>(
        reader: R,
        delimiter: u8,
        source: &str,
    ) -> Result<Self, ModelError> {
        let corpus_err = |reason: String| ModelError::Corpus {
            path: source.to_string(),
            reason,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| corpus_err(e.to_string()))?
            .clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
                .ok_or_else(|| corpus_err(format!("missing `{name}` column")))
        };
        let (cat_col, text_col) = (column("category")?, column("text")?);
        let mut corpus = LabeledCorpus::default();
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| corpus_err(e.to_string()))?;
            let category = record.get(cat_col).unwrap_or("").trim();
            let text = record.get(text_col).unwrap_or("");
            if text.split_whitespace().next().is_none() {
                return Err(corpus_err(format!("row {} has no tokens", row + 2)));
            }
            corpus.push(category, text);
        }
        Ok(corpus)
    }

    pub fn load(path: &Path, delimiter: u8) -> Result<Self, ModelError> {
        let file = fs::File::open(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        LabeledCorpus::from_reader(file, delimiter, &path.display().to_string())
    }
}

/// Multinomial naive Bayes with add-`alpha` smoothing, expressed as a
/// linear model. The vocabulary is every corpus token in lexicographic
/// order. A category without training examples gets the most negative
/// finite bias so it can never win against a category that has some.
pub fn train_baseline(
    corpus: &LabeledCorpus,
    taxonomy: &Taxonomy,
    alpha: f64,
) -> Result<ModelFile, ModelError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ModelError::BadAlpha(alpha));
    }
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let classes = taxonomy.len();
    let labels = corpus
        .examples
        .iter()
        .map(|ex| {
            taxonomy
                .index_of(&ex.category)
                .ok_or_else(|| ModelError::UnknownCategory(ex.category.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let vocabulary: BTreeMap<String, usize> = corpus
        .examples
        .iter()
        .flat_map(|ex| ex.tokens.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t, i))
        .collect();
    let features = vocabulary.len();

    let mut doc_counts = vec![0usize; classes];
    let mut token_counts = vec![vec![0usize; features]; classes];
    let mut token_totals = vec![0usize; classes];
    for (ex, &c) in corpus.examples.iter().zip(&labels) {
        doc_counts[c] += 1;
        for token in &ex.tokens {
            token_counts[c][vocabulary[token]] += 1;
            token_totals[c] += 1;
        }
    }

    let total_docs = corpus.len() as f64;
    let bias = doc_counts
        .iter()
        .map(|&n| {
            if n == 0 {
                f64::MIN
            } else {
                (n as f64 / total_docs).ln()
            }
        })
        .collect();
    let weights = token_counts
        .iter()
        .zip(&token_totals)
        .map(|(counts, &total)| {
            let denom = total as f64 + alpha * features as f64;
            counts
                .iter()
                .map(|&n| ((n as f64 + alpha) / denom).ln())
                .collect()
        })
        .collect();

    let mut metadata = BTreeMap::new();
    metadata.insert("trainer".to_string(), "multinomial-naive-bayes".to_string());
    metadata.insert("alpha".to_string(), json_number(alpha));
    metadata.insert("training_examples".to_string(), corpus.len().to_string());
    ModelFile::new(taxonomy.clone(), vocabulary, weights, bias, metadata)
}

/// Trains the shipped baseline: default taxonomy, alpha 1.
pub fn bundled_model_from(seed: &LabeledCorpus) -> Result<ModelFile, ModelError> {
    Ok(train_baseline(seed, &Taxonomy::default_taxonomy(), 1.0)?
        .with_metadata(
            "corpus",
            "assets/seed_corpus.csv (hand-written seed sentences)",
        )
        .with_metadata(
            "taxonomy_note",
            "partial: 11 of the 16 categories of the original issue-comment scheme",
        ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub category: String,
    pub category_index: usize,
    /// Log-scale score per taxonomy entry.
    pub scores: Vec<f64>,
    /// Softmax of `scores` at the winning category.
    pub confidence: f64,
}

impl Prediction {
    /// Softmax over all categories.
    pub fn confidences(&self) -> Vec<f64> {
        softmax(&self.scores)
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the best score; scores within a relative 1e-12 of each other
/// count as tied and the lowest index wins.
pub fn argmax(scores: &[f64]) -> usize {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tolerance = TIE_TOLERANCE * max.abs().max(1.0);
    scores
        .iter()
        .position(|&s| max - s <= tolerance)
        .unwrap_or(0)
}

pub fn predict_line<S: AsRef<str>>(model: &ModelFile, tokens: &[S]) -> Prediction {
    let scores = model.scores(tokens);
    let best = argmax(&scores);
    let confidence = softmax(&scores)[best];
    Prediction {
        category: model.taxonomy().name(best).to_string(),
        category_index: best,
        scores,
        confidence,
    }
}

/// Classifies lines in order. Identical token lists share one computation.
pub fn classify_lines(
    model: &ModelFile,
    lines: Vec<crate::text_prep::ProcessedLine>,
) -> Vec<(crate::text_prep::ProcessedLine, Prediction)> {
    let mut memo: HashMap<Vec<String>, Prediction> = HashMap::new();
    lines
        .into_iter()
        .map(|line| {
            let prediction = memo
                .entry(line.tokens.clone())
                .or_insert_with(|| predict_line(model, &line.tokens))
                .clone();
            (line, prediction)
        })
        .collect()
}
