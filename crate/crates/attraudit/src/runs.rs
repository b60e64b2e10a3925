//! Run records and their aggregation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use attraudit_core::util::StableHasher;
use attraudit_core::Instance;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::report::{fmt_f64, Table, TableFormat};

pub const RECORD_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunResults {
    /// Experiment family: `train`, `attribute`, `evaluate`, `attack`, `audit`.
    pub experiment: String,
    /// Flat numeric summary.
    pub summary: BTreeMap<String, f64>,
    /// Output files relative to the run directory.
    #[serde(default)]
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub run_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub model_fingerprint: String,
    pub dataset_hash: String,
    pub config: RunConfig,
    pub results: RunResults,
}

/// Content hash of a dataset (ids, fields, tokens and labels).
pub fn dataset_hash(data: &[Instance]) -> String {
    let mut h = StableHasher::new();
    h.u64(data.len() as u64);
    for x in data {
        h.str(&x.id).u64(x.label as u64).u64(x.fields.len() as u64);
        for f in &x.fields {
            h.str(&f.name).u64(f.tokens.len() as u64);
            for t in &f.tokens {
                h.str(t);
            }
        }
    }
    h.finish_hex()[..16].to_string()
}

/// Deterministic run id: command name plus a hash of the resolved config.
pub fn run_id(command: &str, config: &RunConfig) -> String {
    let mut h = StableHasher::new();
    h.str(command).str(&config.to_toml());
    format!("{command}-{}", &h.finish_hex()[..12])
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    /// Records per experiment family, sorted.
    pub families: BTreeMap<String, Vec<RunRecord>>,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn run_count(&self) -> usize {
        self.families.values().map(Vec::len).sum()
    }

    /// One table per family. Each `(fingerprint, dataset hash)` section lists
    /// its runs followed by a `mean` row over that section only.
    pub fn tables(&self) -> BTreeMap<String, Table> {
        let mut out = BTreeMap::new();
        for (family, runs) in &self.families {
            let keys: Vec<String> = runs
                .iter()
                .flat_map(|r| r.results.summary.keys().cloned())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let mut header = vec!["model_fingerprint".to_string(), "dataset_hash".into(), "run_id".into()];
            header.extend(keys.iter().cloned());
            let mut table = Table { header, rows: Vec::new() };
            let mut sections: BTreeMap<(&str, &str), Vec<&RunRecord>> = BTreeMap::new();
            for r in runs {
                sections.entry((&r.model_fingerprint, &r.dataset_hash)).or_default().push(r);
            }
            for ((fp, dh), members) in sections {
                for r in &members {
                    let mut row = vec![fp.to_string(), dh.to_string(), r.run_id.clone()];
                    row.extend(keys.iter().map(|k| r.results.summary.get(k).map(|v| fmt_f64(*v)).unwrap_or_default()));
                    table.rows.push(row);
                }
                let mut row = vec![fp.to_string(), dh.to_string(), "mean".into()];
                for k in &keys {
                    let vals: Vec<f64> = members.iter().filter_map(|r| r.results.summary.get(k).copied()).collect();
                    row.push(if vals.is_empty() {
                        String::new()
                    } else {
                        fmt_f64(attraudit_core::util::mean(vals.iter().copied()))
                    });
                }
                table.rows.push(row);
            }
            out.insert(family.clone(), table);
        }
        out
    }

    /// Writes `summary-<family>.<ext>` files into `out` and returns their names.
    pub fn write(&self, out: &Path, format: TableFormat) -> anyhow::Result<Vec<String>> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let mut names = Vec::new();
        for (family, table) in self.tables() {
            names.push(table.write(out, &format!("summary-{family}"), format)?);
        }
        Ok(names)
    }
}

fn candidate_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            let rec = path.join(RECORD_FILE);
            if rec.is_file() {
                files.push(rec);
            }
        } else if path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Collects run records under `dir` (either `<run>/run.json` or loose
/// `*.json` files). Corrupt records are skipped with a warning. The result
/// does not depend on directory enumeration order.
pub fn aggregate_runs(dir: &Path) -> anyhow::Result<Summary> {
    let mut summary = Summary::default();
    if !dir.exists() {
        return Ok(summary);
    }
    for path in candidate_files(dir)? {
        let parsed = fs::read_to_string(&path)
            .map_err(anyhow::Error::from)
            .and_then(|t| serde_json::from_str::<RunRecord>(&t).map_err(anyhow::Error::from));
        match parsed {
            Ok(r) => summary.families.entry(r.results.experiment.clone()).or_default().push(r),
            Err(e) => summary.warnings.push(format!("skipped {}: {e}", path.display())),
        }
    }
    for runs in summary.families.values_mut() {
        runs.sort_by(|a, b| {
            (&a.model_fingerprint, &a.dataset_hash, &a.run_id, a.timestamp)
                .cmp(&(&b.model_fingerprint, &b.dataset_hash, &b.run_id, b.timestamp))
                .then_with(|| serde_json::to_string(a).unwrap().cmp(&serde_json::to_string(b).unwrap()))
        });
    }
    summary.warnings.sort();
    Ok(summary)
}
