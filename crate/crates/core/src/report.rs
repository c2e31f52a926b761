//! CSV writers and the plain-text run summary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::pipeline::{ClassifiedRecord, OmittedIssue, RunSummary};

pub const RESULTS_HEADER: [&str; 7] = [
    "id",
    "html_url",
    "api_url",
    "comment_id",
    "line_index",
    "comment_line",
    "category",
];
pub const CONFIDENCE_COLUMN: &str = "confidence";
pub const OMITTED_HEADER: [&str; 4] = ["id", "html_url", "api_url", "reason"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn into_io(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

/// Writes result rows to any sink. Returns the number of data rows.
pub fn write_results_to<W: Write>(
    records: &[ClassifiedRecord],
    out: W,
    include_confidence: bool,
) -> io::Result<usize> {
    let mut w = csv_writer(out);
    let mut header = RESULTS_HEADER.to_vec();
    if include_confidence {
        header.push(CONFIDENCE_COLUMN);
    }
    w.write_record(&header).map_err(into_io)?;
    for r in records {
        let mut row = vec![
            r.issue.id.to_string(),
            r.issue.html_url.clone(),
            r.issue.api_url.clone(),
            r.line.comment_id.to_string(),
            r.line.line_index.to_string(),
            r.line.rendered.clone(),
            r.prediction.category.clone(),
        ];
        if include_confidence {
            row.push(format!("{:.4}", r.prediction.confidence));
        }
        w.write_record(&row).map_err(into_io)?;
    }
    w.flush()?;
    Ok(records.len())
}

pub fn write_omitted_to<W: Write>(omitted: &[OmittedIssue], out: W) -> io::Result<usize> {
    let mut w = csv_writer(out);
    w.write_record(OMITTED_HEADER).map_err(into_io)?;
    for o in omitted {
        w.write_record([
            o.issue.id.to_string().as_str(),
            &o.issue.html_url,
            &o.issue.api_url,
            o.reason.as_str(),
        ])
        .map_err(into_io)?;
    }
    w.flush()?;
    Ok(omitted.len())
}

fn with_file<F>(path: &Path, body: F) -> Result<usize, ReportError>
where
    F: FnOnce(&mut io::BufWriter<File>) -> io::Result<usize>,
{
    let wrap = |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = io::BufWriter::new(File::create(path).map_err(wrap)?);
    let n = body(&mut out).map_err(wrap)?;
    out.flush().map_err(wrap)?;
    Ok(n)
}

pub fn write_results(
    records: &[ClassifiedRecord],
    path: &Path,
    include_confidence: bool,
) -> Result<usize, ReportError> {
    with_file(path, |out| {
        write_results_to(records, out, include_confidence)
    })
}

pub fn write_omitted(omitted: &[OmittedIssue], path: &Path) -> Result<usize, ReportError> {
    with_file(path, |out| write_omitted_to(omitted, out))
}

pub fn render_summary(summary: &RunSummary) -> String {
    let width = summary
        .per_category
        .iter()
        .map(|(name, _)| name.chars().count())
        .chain(["issues classified".len()])
        .max()
        .unwrap_or(0);
    let sections: [(&str, Vec<(&str, usize)>); 3] = [
        (
            "Totals",
            vec![
                ("issues searched", summary.issues_searched),
                ("issues classified", summary.issues_classified),
                ("issues omitted", summary.issues_omitted),
            ],
        ),
        (
            "Lines per category",
            summary
                .per_category
                .iter()
                .map(|(n, c)| (n.as_str(), *c))
                .collect(),
        ),
        (
            "Omitted by reason",
            summary
                .per_reason
                .iter()
                .map(|(r, c)| (r.as_str(), *c))
                .collect(),
        ),
    ];
    let mut text = String::new();
    for (title, rows) in sections {
        let _ = writeln!(text, "{title}");
        for (label, value) in rows {
            let _ = writeln!(text, "  {label:<width$}  {value}");
        }
    }
    text
}
