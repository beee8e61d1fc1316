//! Text formats for scores, labels, training counts, rankings and curves.
//!
//! All writers are deterministic: floats use Rust's shortest round-trip
//! representation and records follow a fixed order.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::ErrorCurve;
use crate::model::{ClassId, ContingencyTable, DocId, LabelSet, ScoreMatrix};
use crate::ranking::RankedDoc;

pub const SCORES_HEADER: &str = "doc\tclass\tscore";
pub const ESTIMATES_HEADER: &str = "class\ttp\tfp\tfn";
pub const RANKING_HEADER: &str = "rank\tdoc_id\tutility";
pub const CURVE_HEADER: &str = "n,fraction,value";

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-empty lines with 1-based line numbers. A trailing `\r` is dropped.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.is_empty())
}

fn fields<'a>(path: &Path, line: usize, raw: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = raw.split('\t').collect();
    if parts.len() != n {
        return Err(parse_err(
            path,
            line,
            format!("expected {n} tab-separated fields, found {}", parts.len()),
        ));
    }
    Ok(parts)
}

fn parse_id<T>(path: &Path, line: usize, raw: &str, make: fn(String) -> Result<T>) -> Result<T> {
    make(raw.to_string()).map_err(|e| parse_err(path, line, e.to_string()))
}

fn parse_number(path: &Path, line: usize, raw: &str, what: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what} {raw:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("{what} {raw:?} is not finite")));
    }
    Ok(v)
}

fn expect_header(path: &Path, text: &str, header: &str) -> Result<()> {
    match records(text).next() {
        Some((line, first)) if first != header => Err(parse_err(
            path,
            line,
            format!("expected header {:?}, found {first:?}", header),
        )),
        None => Err(parse_err(path, 1, format!("missing header {header:?}"))),
        _ => Ok(()),
    }
}

/// Parses the scores format; `path` only labels diagnostics.
pub fn parse_scores(text: &str, path: &Path) -> Result<ScoreMatrix> {
    expect_header(path, text, SCORES_HEADER)?;
    let mut seen: HashMap<(DocId, ClassId), usize> = HashMap::new();
    let mut entries = Vec::new();
    for (line, raw) in records(text).skip(1) {
        let f = fields(path, line, raw, 3)?;
        let doc = parse_id(path, line, f[0], DocId::new)?;
        let class = parse_id(path, line, f[1], ClassId::new)?;
        let score = parse_number(path, line, f[2], "score")?;
        if let Some(first) = seen.insert((doc.clone(), class.clone()), line) {
            return Err(parse_err(
                path,
                line,
                format!("duplicate score for ({doc}, {class}), first given on line {first}"),
            ));
        }
        entries.push((doc, class, score));
    }
    ScoreMatrix::from_entries(entries).map_err(|e| match e {
        Error::DataConsistency(m) => Error::DataConsistency(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn load_scores(path: &Path) -> Result<ScoreMatrix> {
    parse_scores(&read_text(path)?, path)
}

pub fn format_scores(matrix: &ScoreMatrix) -> String {
    let mut out = String::new();
    out.push_str(SCORES_HEADER);
    out.push('\n');
    for (d, doc) in matrix.docs().iter().enumerate() {
        for (c, class) in matrix.classes().iter().enumerate() {
            let _ = writeln!(out, "{doc}\t{class}\t{}", matrix.score(d, c));
        }
    }
    out
}

/// Parses the labels format: one positive `doc_id<TAB>class_id` pair per line.
pub fn parse_labels(text: &str, path: &Path) -> Result<LabelSet> {
    let mut labels = LabelSet::new();
    for (line, raw) in records(text) {
        let f = fields(path, line, raw, 2)?;
        let doc = parse_id(path, line, f[0], DocId::new)?;
        let class = parse_id(path, line, f[1], ClassId::new)?;
        labels.insert(doc, class);
    }
    Ok(labels)
}

pub fn load_labels(path: &Path) -> Result<LabelSet> {
    parse_labels(&read_text(path)?, path)
}

pub fn format_labels(labels: &LabelSet) -> String {
    let mut out = String::new();
    for (doc, class) in labels.iter() {
        let _ = writeln!(out, "{doc}\t{class}");
    }
    out
}

/// Parses per-class training counts (`class<TAB>tp<TAB>fp<TAB>fn`).
pub fn parse_estimates(text: &str, path: &Path) -> Result<BTreeMap<ClassId, ContingencyTable>> {
    expect_header(path, text, ESTIMATES_HEADER)?;
    let mut counts = BTreeMap::new();
    for (line, raw) in records(text).skip(1) {
        let f = fields(path, line, raw, 4)?;
        let class = parse_id(path, line, f[0], ClassId::new)?;
        let tp = parse_number(path, line, f[1], "tp")?;
        let fp = parse_number(path, line, f[2], "fp")?;
        let fn_ = parse_number(path, line, f[3], "fn")?;
        let table = ContingencyTable::new(tp, fp, fn_).map_err(|e| parse_err(path, line, e.to_string()))?;
        if counts.insert(class.clone(), table).is_some() {
            return Err(parse_err(path, line, format!("duplicate class {class}")));
        }
    }
    Ok(counts)
}

pub fn load_estimates(path: &Path) -> Result<BTreeMap<ClassId, ContingencyTable>> {
    parse_estimates(&read_text(path)?, path)
}

pub fn format_estimates(counts: &BTreeMap<ClassId, ContingencyTable>) -> String {
    let mut out = String::new();
    out.push_str(ESTIMATES_HEADER);
    out.push('\n');
    for (class, t) in counts {
        let _ = writeln!(out, "{class}\t{}\t{}\t{}", t.tp, t.fp, t.fn_);
    }
    out
}

pub fn format_ranking(ranking: &[RankedDoc]) -> String {
    let mut out = String::new();
    out.push_str(RANKING_HEADER);
    out.push('\n');
    for (r, entry) in ranking.iter().enumerate() {
        let _ = writeln!(out, "{}\t{}\t{}", r + 1, entry.doc, entry.utility);
    }
    out
}

/// Parses a ranking file back into `(doc, utility)` pairs in rank order.
pub fn parse_ranking(text: &str, path: &Path) -> Result<Vec<(DocId, f64)>> {
    expect_header(path, text, RANKING_HEADER)?;
    let mut out = Vec::new();
    for (line, raw) in records(text).skip(1) {
        let f = fields(path, line, raw, 3)?;
        let rank: usize = f[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("rank {:?} is not a positive integer", f[0])))?;
        if rank != out.len() + 1 {
            return Err(parse_err(
                path,
                line,
                format!("expected rank {}, found {rank}", out.len() + 1),
            ));
        }
        let doc = parse_id(path, line, f[1], DocId::new)?;
        out.push((doc, parse_number(path, line, f[2], "utility")?));
    }
    Ok(out)
}

/// A curve indexed by `n = 0..=|Te|` as `n,fraction,value` rows.
pub fn format_curve(values: &[f64]) -> String {
    let total = values.len().saturating_sub(1).max(1) as f64;
    let mut out = String::new();
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for (n, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{n},{},{v}", n as f64 / total);
    }
    out
}

/// A curve sampled on explicit fractions (split runs), `n` being the grid index.
pub fn format_fraction_curve(fractions: &[f64], values: &[f64]) -> String {
    let mut out = String::new();
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for (n, (f, v)) in fractions.iter().zip(values).enumerate() {
        let _ = writeln!(out, "{n},{f},{v}");
    }
    out
}

pub fn format_error_curve(curve: &ErrorCurve) -> String {
    format_curve(&curve.values)
}
