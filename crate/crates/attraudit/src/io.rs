//! Datasets and lexicons on disk, plus the bundled corpora.
//!
//! Dataset files are JSONL or TSV, chosen by extension. Each record has an
//! `id`, a `label` and one field layout: `text`, `premise`/`hypothesis` or
//! `document`/`question`.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use attraudit_core::attack::{LexiconEntry, SynonymLexicon};
use attraudit_core::corpus;
use attraudit_core::text::{tokenize, Field};
use attraudit_core::Instance;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: duplicate id `{id}`")]
    DuplicateId { path: PathBuf, line: usize, id: String },
    #[error("{path}:{line}: label {label} out of range for {classes} classes")]
    Label { path: PathBuf, line: usize, label: usize, classes: usize },
    #[error("{0}: unsupported dataset format (expected .jsonl or .tsv)")]
    Format(PathBuf),
    #[error("unknown bundled source `{0}`")]
    UnknownBundled(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

/// Wire form of one dataset record.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub premise: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    pub label: usize,
}

const LAYOUTS: [&[&str]; 3] = [&["text"], &["premise", "hypothesis"], &["document", "question"]];

impl Record {
    pub fn from_instance(x: &Instance) -> Result<Self, String> {
        let mut r = Record { id: x.id.clone(), label: x.label, ..Default::default() };
        let names: Vec<&str> = x.fields.iter().map(|f| f.name.as_str()).collect();
        if !LAYOUTS.iter().any(|l| *l == names.as_slice()) {
            return Err(format!("instance `{}` has unsupported field layout {names:?}", x.id));
        }
        for f in &x.fields {
            let joined = Some(f.tokens.join(" "));
            match f.name.as_str() {
                "text" => r.text = joined,
                "premise" => r.premise = joined,
                "hypothesis" => r.hypothesis = joined,
                "document" => r.document = joined,
                _ => r.question = joined,
            }
        }
        Ok(r)
    }

    pub fn into_instance(self) -> Result<Instance, String> {
        let present: Vec<(&str, &Option<String>)> = [
            ("text", &self.text),
            ("premise", &self.premise),
            ("hypothesis", &self.hypothesis),
            ("document", &self.document),
            ("question", &self.question),
        ]
        .into_iter()
        .filter(|(_, v)| v.is_some())
        .collect();
        let names: Vec<&str> = present.iter().map(|(n, _)| *n).collect();
        if !LAYOUTS.iter().any(|l| *l == names.as_slice()) {
            return Err(format!(
                "record `{}` has fields {names:?}; expected text, premise+hypothesis or document+question",
                self.id
            ));
        }
        let fields = present
            .iter()
            .map(|(n, v)| Field::new(*n, tokenize(v.as_deref().unwrap())))
            .collect();
        Ok(Instance { id: self.id, fields, label: self.label })
    }
}

enum Format {
    Jsonl,
    Tsv,
}

fn format_of(path: &Path) -> Result<Format, DataError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => Ok(Format::Jsonl),
        Some("tsv") => Ok(Format::Tsv),
        _ => Err(DataError::Format(path.to_path_buf())),
    }
}

fn tsv_builder() -> csv::ReaderBuilder {
    let mut b = csv::ReaderBuilder::new();
    b.delimiter(b'\t').has_headers(true);
    b
}

fn tsv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().delimiter(b'\t').from_writer(w)
}

fn read_records(path: &Path) -> Result<Vec<(usize, Record)>, DataError> {
    let format = format_of(path)?;
    let file = File::open(path).map_err(io_err(path))?;
    let parse = |line: usize, message: String| DataError::Parse { path: path.into(), line, message };
    match format {
        Format::Jsonl => {
            let mut out = Vec::new();
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line_no = i + 1;
                let line = line.map_err(io_err(path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: Record =
                    serde_json::from_str(&line).map_err(|e| parse(line_no, e.to_string()))?;
                out.push((line_no, rec));
            }
            Ok(out)
        }
        Format::Tsv => {
            let mut reader = tsv_builder().from_reader(file);
            let header = reader.headers().map_err(|e| parse(1, e.to_string()))?.clone();
            let names: Vec<&str> = header.iter().collect();
            let layout = LAYOUTS
                .iter()
                .find(|l| {
                    let mut want = vec!["id"];
                    want.extend_from_slice(l);
                    want.push("label");
                    let mut got = names.clone();
                    got.sort_unstable();
                    want.sort_unstable();
                    got == want
                })
                .ok_or_else(|| parse(1, format!("unsupported header {names:?}")))?;
            let col = |n: &str| names.iter().position(|c| *c == n).unwrap();
            let mut out = Vec::new();
            for (i, row) in reader.records().enumerate() {
                // Header is line 1.
                let line_no = i + 2;
                let row = row.map_err(|e| parse(line_no, e.to_string()))?;
                let label_cell = &row[col("label")];
                let label = label_cell
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| parse(line_no, format!("invalid label `{label_cell}`")))?;
                let mut rec = Record { id: row[col("id")].to_string(), label, ..Default::default() };
                for &name in *layout {
                    let v = Some(row[col(name)].to_string());
                    match name {
                        "text" => rec.text = v,
                        "premise" => rec.premise = v,
                        "hypothesis" => rec.hypothesis = v,
                        "document" => rec.document = v,
                        _ => rec.question = v,
                    }
                }
                out.push((line_no, rec));
            }
            Ok(out)
        }
    }
}

/// Loads a dataset file or a `bundled:` source. Duplicate ids are errors;
/// with `classes`, labels must lie in `0..classes`.
pub fn load_dataset(source: &str, classes: Option<usize>) -> Result<Vec<Instance>, DataError> {
    if let Some(name) = source.strip_prefix("bundled:") {
        let data = bundled_dataset(name)?;
        if let Some(c) = classes {
            if let Some(x) = data.iter().find(|x| x.label >= c) {
                return Err(DataError::Label { path: source.into(), line: 0, label: x.label, classes: c });
            }
        }
        return Ok(data);
    }
    load_dataset_file(Path::new(source), classes)
}

pub fn load_dataset_file(path: &Path, classes: Option<usize>) -> Result<Vec<Instance>, DataError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, rec) in read_records(path)? {
        if let Some(c) = classes {
            if rec.label >= c {
                return Err(DataError::Label { path: path.into(), line, label: rec.label, classes: c });
            }
        }
        if !seen.insert(rec.id.clone()) {
            return Err(DataError::DuplicateId { path: path.into(), line, id: rec.id });
        }
        let x = rec
            .into_instance()
            .map_err(|message| DataError::Parse { path: path.into(), line, message })?;
        out.push(x);
    }
    Ok(out)
}

/// Writes instances as JSONL or TSV according to the extension.
pub fn write_dataset(path: &Path, data: &[Instance]) -> anyhow::Result<()> {
    let records = data
        .iter()
        .map(Record::from_instance)
        .collect::<Result<Vec<_>, _>>()
        .map_err(anyhow::Error::msg)?;
    let file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    match format_of(path)? {
        Format::Jsonl => {
            let mut w = file;
            for r in &records {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        Format::Tsv => {
            let columns = tsv_columns(&records);
            if let Some(r) = records.iter().find(|r| tsv_columns(std::slice::from_ref(r)) != columns) {
                anyhow::bail!("record `{}` has a different field layout; TSV needs one layout per file", r.id);
            }
            let mut w = tsv_writer(file);
            w.write_record(&columns)?;
            for r in &records {
                let row: Vec<String> = columns
                    .iter()
                    .map(|c| match *c {
                        "id" => r.id.clone(),
                        "label" => r.label.to_string(),
                        "text" => r.text.clone().unwrap_or_default(),
                        "premise" => r.premise.clone().unwrap_or_default(),
                        "hypothesis" => r.hypothesis.clone().unwrap_or_default(),
                        "document" => r.document.clone().unwrap_or_default(),
                        _ => r.question.clone().unwrap_or_default(),
                    })
                    .collect();
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn tsv_columns(records: &[Record]) -> Vec<&'static str> {
    let layout = records
        .first()
        .map(|r| {
            if r.text.is_some() {
                LAYOUTS[0]
            } else if r.premise.is_some() {
                LAYOUTS[1]
            } else {
                LAYOUTS[2]
            }
        })
        .unwrap_or(LAYOUTS[0]);
    let mut cols = vec!["id"];
    cols.extend_from_slice(layout);
    cols.push("label");
    cols
}

/// Names accepted after `bundled:`.
pub const BUNDLED: &[&str] = &[
    "mini-sentiment/train",
    "mini-sentiment/dev",
    "two-field/train",
    "two-field/dev",
    "planted-key/train",
    "planted-key/dev",
];

pub fn bundled_dataset(name: &str) -> Result<Vec<Instance>, DataError> {
    let (corpus_name, part) =
        name.split_once('/').ok_or_else(|| DataError::UnknownBundled(name.into()))?;
    let split = match corpus_name {
        "mini-sentiment" => corpus::bundled_mini_sentiment(),
        "two-field" => corpus::bundled_two_field(),
        "planted-key" => corpus::bundled_planted_key(),
        _ => return Err(DataError::UnknownBundled(name.into())),
    };
    match part {
        "train" => Ok(split.train),
        "dev" => Ok(split.dev),
        _ => Err(DataError::UnknownBundled(name.into())),
    }
}

/// Loads a synonym lexicon from JSONL (`{"token": .., "synonyms": [{"word": .., "sim": ..}]}`)
/// or `bundled:lexicon`.
pub fn load_lexicon(source: &str, threshold: f64, symmetric: bool) -> anyhow::Result<SynonymLexicon> {
    let entries = if source == "bundled:lexicon" {
        corpus::bundled_lexicon_entries()
    } else if source.starts_with("bundled:") {
        return Err(DataError::UnknownBundled(source.into()).into());
    } else {
        let path = Path::new(source);
        let file = File::open(path).map_err(io_err(path))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: LexiconEntry = serde_json::from_str(&line).map_err(|e| DataError::Parse {
                path: path.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push(e);
        }
        entries
    };
    Ok(SynonymLexicon::new(entries, threshold, symmetric)?)
}

pub fn write_lexicon(path: &Path, lexicon: &SynonymLexicon) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for e in lexicon.entries() {
        serde_json::to_writer(&mut w, &e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes serializable rows as JSON lines.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for r in rows {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// One word per line; blank lines and `#` comments ignored.
pub fn load_word_tags(path: &Path) -> Result<BTreeSet<String>, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = BTreeSet::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        let w = line.trim();
        if !w.is_empty() && !w.starts_with('#') {
            out.insert(w.to_lowercase());
        }
    }
    Ok(out)
}
