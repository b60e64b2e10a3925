//! Tables and heat maps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use attraudit_core::attribution::AttributionResult;
use attraudit_core::audit::{heat_map, AblationAuditReport, Bucket, HeatMapDoc};
use attraudit_core::perturb::{Direction, MetricMatrix};
use attraudit_core::Instance;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Md,
    Jsonl,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Md => "md",
            TableFormat::Jsonl => "jsonl",
        }
    }
}

/// A rectangular table of already-formatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: impl IntoIterator<Item = impl Into<String>>) {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    pub fn render(&self, format: TableFormat) -> anyhow::Result<String> {
        Ok(match format {
            TableFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.header)?;
                for r in &self.rows {
                    w.write_record(r)?;
                }
                String::from_utf8(w.into_inner()?)?
            }
            TableFormat::Md => {
                let mut s = String::new();
                let _ = writeln!(s, "| {} |", self.header.join(" | "));
                let _ = writeln!(s, "|{}", "---|".repeat(self.header.len()));
                for r in &self.rows {
                    let cells: Vec<String> = r.iter().map(|c| c.replace('|', "\\|")).collect();
                    let _ = writeln!(s, "| {} |", cells.join(" | "));
                }
                s
            }
            TableFormat::Jsonl => {
                let mut s = String::new();
                for r in &self.rows {
                    let obj: serde_json::Map<String, serde_json::Value> = self
                        .header
                        .iter()
                        .zip(r)
                        .map(|(h, c)| {
                            let v = c
                                .parse::<f64>()
                                .ok()
                                .filter(|f| f.is_finite())
                                .and_then(serde_json::Number::from_f64)
                                .map(serde_json::Value::Number)
                                .unwrap_or_else(|| serde_json::Value::String(c.clone()));
                            (h.clone(), v)
                        })
                        .collect();
                    s.push_str(&serde_json::to_string(&obj)?);
                    s.push('\n');
                }
                s
            }
        })
    }

    /// Writes `<stem>.<ext>` in `dir` and returns the file name.
    pub fn write(&self, dir: &Path, stem: &str, format: TableFormat) -> anyhow::Result<String> {
        let name = format!("{stem}.{}", format.extension());
        let path = dir.join(&name);
        fs::write(&path, self.render(format)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(name)
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn arrow(d: Direction) -> &'static str {
    match d {
        Direction::HigherIsBetter => "↑",
        Direction::LowerIsBetter => "↓",
    }
}

/// Methods as rows, metric columns as columns.
pub fn matrix_table(m: &MetricMatrix, format: TableFormat) -> Table {
    let mut header = vec!["method".to_string()];
    for c in &m.columns {
        header.push(if format == TableFormat::Md {
            format!("{} {}", c.name, arrow(c.direction))
        } else {
            c.name.clone()
        });
    }
    let mut t = Table { header, rows: Vec::new() };
    for (i, method) in m.methods.iter().enumerate() {
        let mut row = vec![method.name().to_string()];
        for (c, _) in m.columns.iter().enumerate() {
            let v = m.cells[i][c];
            row.push(if format == TableFormat::Md {
                format!("{v:.4} ({})", m.rank(i, c))
            } else {
                fmt_f64(v)
            });
        }
        t.rows.push(row);
    }
    t
}

/// Per-column direction, winner and full ranking.
pub fn rankings_table(m: &MetricMatrix) -> Table {
    let mut t = Table::new(["column", "direction", "direction_flagged", "winner", "ranking"]);
    for (c, col) in m.columns.iter().enumerate() {
        let ranking: Vec<&str> = m.rankings[c].iter().map(|&i| m.methods[i].name()).collect();
        t.push([
            col.name.clone(),
            match col.direction {
                Direction::HigherIsBetter => "higher".into(),
                Direction::LowerIsBetter => "lower".into(),
            },
            col.direction_flagged.to_string(),
            m.winner(c).name().to_string(),
            ranking.join(" > "),
        ]);
    }
    t
}

pub fn histogram_table(report: &AblationAuditReport) -> Table {
    let mut t = Table::new(["bin_lower", "bin_upper", "count"]);
    for (k, n) in report.histogram.iter().enumerate() {
        let lo = attraudit_core::audit::bin_lower_edge(k);
        t.push([format!("{lo:.1}"), format!("{:.1}", lo + 0.1), n.to_string()]);
    }
    t
}

fn bucket_style(b: Bucket) -> &'static str {
    match b {
        Bucket::VeryNegative => "background:#2166ac;color:#ffffff",
        Bucket::Negative => "background:#92c5de;color:#000000",
        Bucket::Neutral => "background:#f7f7f7;color:#000000",
        Bucket::Positive => "background:#f4a582;color:#000000",
        Bucket::VeryPositive => "background:#b2182b;color:#ffffff",
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Standalone HTML page for one heat map (inline styles only).
pub fn heatmap_html(doc: &HeatMapDoc) -> String {
    let mut s = String::new();
    let title = escape(&format!("{} / {}", doc.id, doc.method));
    let _ = writeln!(s, "<!DOCTYPE html>");
    let _ = writeln!(s, "<html><head><meta charset=\"utf-8\"><title>{title}</title></head>");
    let _ = writeln!(s, "<body style=\"font-family:sans-serif;margin:2em\">");
    let _ = writeln!(s, "<h1 style=\"font-size:1.2em\">{title}</h1>");
    let _ = write!(s, "<p style=\"line-height:2em\">");
    for (i, t) in doc.tokens.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(
            s,
            "<span style=\"{};padding:0.1em 0.2em\" title=\"{:.6}\">{}</span>",
            bucket_style(t.bucket),
            t.score,
            escape(&t.token)
        );
    }
    let _ = writeln!(s, "</p>");
    let _ = write!(s, "<p>");
    for b in Bucket::ALL {
        let _ = write!(s, "<span style=\"{};padding:0.1em 0.4em\">{}</span> ", bucket_style(b), b.label());
    }
    let _ = writeln!(s, "</p>");
    let _ = writeln!(s, "</body></html>");
    s
}

/// Buckets `attr` for `x` and writes the page to `out`.
pub fn render_heatmap(x: &Instance, attr: &AttributionResult, out: &Path) -> anyhow::Result<HeatMapDoc> {
    let doc = heat_map(x, attr.method.name(), &attr.scores)?;
    fs::write(out, heatmap_html(&doc)).with_context(|| format!("writing {}", out.display()))?;
    Ok(doc)
}
