//! The six subcommands and the run harness around them.
//!
//! Every command writes into `<output_dir>/<run_id>/`. A `.lock` file guards
//! the directory while the command runs, a failure leaves a `.failed` marker,
//! and `run.json` is written last, so its presence means all outputs are
//! complete.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use attraudit_core::attack::{
    attack_rank_divergence, attack_subset_divergence, AttackConfig, AttackRecord, SynonymLexicon,
};
use attraudit_core::attribution::{attribute, AttributionResult, Method};
use attraudit_core::audit::field_ablation_audit;
use attraudit_core::infill::{build_infill_model, InfillModel};
use attraudit_core::linear::train_linear_classifier;
use attraudit_core::perturb::{
    budget, degeneracy_check, instance_metrics, MatrixOptions, MetricMatrix, RepMode,
};
use attraudit_core::rationale::train_rationale_model;
use attraudit_core::util::mean;
use attraudit_core::{Classifier, Instance};
use rayon::prelude::*;

use crate::config::{ConfigError, ModelKind, RepChoice, RunConfig};
use crate::io::{load_dataset, load_lexicon, load_word_tags, write_jsonl, DataError};
use crate::model_file::{load_model, save_model, AnyModel};
use crate::report::{histogram_table, matrix_table, rankings_table, render_heatmap, Table};
use crate::runs::{aggregate_runs, dataset_hash, run_id, RunRecord, RunResults, RECORD_FILE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Train,
    Attribute,
    Evaluate,
    Attack,
    Audit,
    /// Aggregate the run records under the given directory.
    Report(PathBuf),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Attribute => "attribute",
            Command::Evaluate => "evaluate",
            Command::Attack => "attack",
            Command::Audit => "audit",
            Command::Report(_) => "report",
        }
    }
}

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config = 2,
    Data = 3,
    Internal = 4,
}

/// Maps an error chain to its exit code.
pub fn classify(err: &anyhow::Error) -> ExitKind {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return ExitKind::Config;
        }
        if cause.is::<DataError>() {
            return ExitKind::Data;
        }
        if let Some(e) = cause.downcast_ref::<attraudit_core::Error>() {
            use attraudit_core::Error::*;
            return match e {
                Config(_) | UnsupportedMethod(_) | UnknownField(_) => ExitKind::Config,
                EmptyData | SingleClass(_) | LabelOutOfRange { .. } | EmptyInstance(_)
                | LengthMismatch { .. } => ExitKind::Data,
                InvalidProbabilities(_) => ExitKind::Internal,
            };
        }
    }
    ExitKind::Internal
}

/// What a finished command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub run_dir: PathBuf,
    pub record: Option<RunRecord>,
    pub warnings: Vec<String>,
}

struct Body {
    fingerprint: String,
    dataset_hash: String,
    summary: BTreeMap<String, f64>,
    outputs: Vec<String>,
}

struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(".lock");
        OpenOptions::new().write(true).create_new(true).open(&path).with_context(|| {
            format!("{} exists: another run is using this directory (remove it if stale)", path.display())
        })?;
        Ok(Lock(path))
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Validates `config`, runs `command` and writes its run record.
pub fn execute(command: &Command, config: &RunConfig) -> anyhow::Result<Outcome> {
    config.validate()?;
    if let Command::Report(dir) = command {
        return report(dir, config);
    }
    let id = run_id(command.name(), config);
    let run_dir = config.output_dir.join(&id);
    fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    let _lock = Lock::acquire(&run_dir)?;
    let failed = run_dir.join(".failed");
    let record_path = run_dir.join(RECORD_FILE);
    for stale in [&failed, &record_path] {
        if stale.exists() {
            fs::remove_file(stale)?;
        }
    }
    let body = match command {
        Command::Train => train(config, &run_dir),
        Command::Attribute => attribute_cmd(config, &run_dir),
        Command::Evaluate => evaluate(config, &run_dir),
        Command::Attack => attack(config, &run_dir),
        Command::Audit => audit(config, &run_dir),
        Command::Report(_) => unreachable!(),
    };
    let body = match body {
        Ok(b) => b,
        Err(e) => {
            let _ = fs::write(&failed, format!("{e:#}\n"));
            return Err(e);
        }
    };
    let record = RunRecord {
        run_id: id,
        timestamp: timestamp(),
        model_fingerprint: body.fingerprint,
        dataset_hash: body.dataset_hash,
        config: config.clone(),
        results: RunResults {
            experiment: command.name().into(),
            summary: body.summary,
            outputs: body.outputs,
        },
    };
    let json = serde_json::to_string_pretty(&record)? + "\n";
    fs::write(&record_path, json).with_context(|| format!("writing {}", record_path.display()))?;
    Ok(Outcome { run_dir, record: Some(record), warnings: Vec::new() })
}

/// `SOURCE_DATE_EPOCH` when set, so reruns can be byte-identical.
fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

fn report(dir: &Path, config: &RunConfig) -> anyhow::Result<Outcome> {
    let summary = aggregate_runs(dir)?;
    let out = config.output_dir.join("summary");
    summary.write(&out, config.format)?;
    Ok(Outcome { run_dir: out, record: None, warnings: summary.warnings })
}

fn load_eval(config: &RunConfig) -> anyhow::Result<Vec<Instance>> {
    let mut data = load_dataset(&config.eval, config.classes)?;
    if let Some(n) = config.limit {
        data.truncate(n);
    }
    if data.is_empty() {
        return Err(DataError::Parse {
            path: config.eval.clone().into(),
            line: 0,
            message: "no instances to process".into(),
        }
        .into());
    }
    Ok(data)
}

fn load_train(config: &RunConfig) -> anyhow::Result<Vec<Instance>> {
    Ok(load_dataset(&config.train, config.classes)?)
}

fn train_model(config: &RunConfig, train: &[Instance], heldout: &[Instance]) -> anyhow::Result<(AnyModel, BTreeMap<String, f64>)> {
    let (model, report) = match config.model.kind {
        ModelKind::Linear => {
            let (m, r) = train_linear_classifier(train, heldout, &config.linear_config())?;
            (AnyModel::Linear(m), r)
        }
        ModelKind::Rationale => {
            let (m, r) = train_rationale_model(train, heldout, &config.rationale_config())?;
            (AnyModel::Rationale(m), r)
        }
    };
    let summary = BTreeMap::from([
        ("train_accuracy".to_string(), report.train_accuracy),
        ("heldout_accuracy".to_string(), report.heldout_accuracy),
        ("train_size".to_string(), report.train_size as f64),
        ("heldout_size".to_string(), report.heldout_size as f64),
    ]);
    Ok((model, summary))
}

/// The model named by `model.path`, or one trained on `train`.
fn obtain_model(config: &RunConfig, train: &[Instance]) -> anyhow::Result<AnyModel> {
    match &config.model.path {
        Some(p) => load_model(p).map_err(|e| {
            anyhow!(DataError::Parse { path: p.clone(), line: 0, message: format!("{e:#}") })
        }),
        None => Ok(train_model(config, train, &[])?.0),
    }
}

fn infill_for(config: &RunConfig, train: &[Instance]) -> anyhow::Result<InfillModel> {
    Ok(build_infill_model(train, config.infill_order, config.marg_cap)?)
}

fn pct(r: f64) -> String {
    let p = r * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("r{}", p.round() as u64)
    } else {
        format!("r{p}")
    }
}

fn methods_error(e: attraudit_core::Error) -> anyhow::Error {
    match e {
        attraudit_core::Error::UnsupportedMethod(m) => {
            ConfigError::new("methods", format!("`{m}` is not available for this model")).into()
        }
        other => other.into(),
    }
}

fn train(config: &RunConfig, dir: &Path) -> anyhow::Result<Body> {
    let train = load_train(config)?;
    let heldout = load_eval(config)?;
    let (model, summary) = train_model(config, &train, &heldout)?;
    save_model(&dir.join("model.json"), &model)?;
    Ok(Body {
        fingerprint: model.fingerprint(),
        dataset_hash: dataset_hash(&train),
        summary,
        outputs: vec!["model.json".into()],
    })
}

fn safe_name(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn attribute_cmd(config: &RunConfig, dir: &Path) -> anyhow::Result<Body> {
    let train = load_train(config)?;
    let eval = load_eval(config)?;
    let model = obtain_model(config, &train)?;
    let infill = infill_for(config, &train)?;
    let per_instance: Vec<Vec<AttributionResult>> = eval
        .par_iter()
        .filter(|x| !x.is_empty())
        .map(|x| {
            config
                .methods
                .iter()
                .map(|&m| attribute(m, &model, x, Some(&infill)).map_err(methods_error))
                .collect::<anyhow::Result<Vec<_>>>()
        })
        .collect::<anyhow::Result<_>>()?;
    let mut outputs = vec!["attributions.jsonl".to_string()];
    write_jsonl(&dir.join("attributions.jsonl"), per_instance.iter().flatten())?;
    if config.heatmaps > 0 {
        let hm = dir.join("heatmaps");
        fs::create_dir_all(&hm)?;
        let nonempty = eval.iter().filter(|x| !x.is_empty());
        for (x, attrs) in nonempty.zip(&per_instance).take(config.heatmaps) {
            for a in attrs {
                let name = format!("{}-{}.html", safe_name(&x.id), a.method.name());
                render_heatmap(x, a, &hm.join(&name))?;
                outputs.push(format!("heatmaps/{name}"));
            }
        }
    }
    let mut summary = BTreeMap::from([("instances".to_string(), per_instance.len() as f64)]);
    for (j, m) in config.methods.iter().enumerate() {
        let top = mean(per_instance.iter().map(|a| a[j].scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
        summary.insert(format!("mean_top_score/{}", m.name()), top);
    }
    Ok(Body { fingerprint: model.fingerprint(), dataset_hash: dataset_hash(&eval), summary, outputs })
}

fn matrix_options(config: &RunConfig, ratio: f64) -> MatrixOptions {
    MatrixOptions {
        strategies: config.strategies.clone(),
        ratio,
        aopc_mode: config.aopc_mode,
        rep_mode: match config.rep_mode {
            RepChoice::Argmax => RepMode::Argmax,
            RepChoice::Sample => RepMode::Sample { seed: config.seed },
        },
    }
}

fn evaluate(config: &RunConfig, dir: &Path) -> anyhow::Result<Body> {
    let train = load_train(config)?;
    let eval = load_eval(config)?;
    let model = obtain_model(config, &train)?;
    let infill = infill_for(config, &train)?;
    let nonempty: Vec<&Instance> = eval.iter().filter(|x| !x.is_empty()).collect();
    let mut summary = BTreeMap::new();
    let mut outputs = Vec::new();
    for &ratio in &config.ratios {
        let options = matrix_options(config, ratio);
        let rows = nonempty
            .par_iter()
            .map(|x| instance_metrics(&model, x, &config.methods, Some(&infill), &options).map_err(methods_error))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let matrix = MetricMatrix::from_rows(&config.methods, &options, &rows)?;
        let tag = pct(ratio);
        outputs.push(matrix_table(&matrix, config.format).write(dir, &format!("matrix-{tag}"), config.format)?);
        outputs.push(rankings_table(&matrix).write(dir, &format!("rankings-{tag}"), config.format)?);
        let curves = format!("curves-{tag}.jsonl");
        write_jsonl(&dir.join(&curves), rows.iter().flat_map(|r| &r.curves))?;
        outputs.push(curves);
        for (m, method) in matrix.methods.iter().enumerate() {
            for (c, col) in matrix.columns.iter().enumerate() {
                summary.insert(format!("{tag}/{}/{}", col.name, method.name()), matrix.cells[m][c]);
            }
        }
        summary.insert(format!("{tag}/rank_reversal"), f64::from(u8::from(matrix.has_rank_reversal())));
        for (method, ok) in matrix.aopc_self_consistency() {
            summary.insert(format!("{tag}/self_consistent/{}", method.name()), f64::from(u8::from(ok)));
        }
    }
    let owned: Vec<Instance> = nonempty.iter().map(|x| (*x).clone()).collect();
    let degeneracy = degeneracy_check(&model, &owned)?;
    summary.insert("degeneracy_checked".into(), degeneracy.checked as f64);
    summary.insert("degeneracy_failures".into(), degeneracy.failures.len() as f64);
    Ok(Body { fingerprint: model.fingerprint(), dataset_hash: dataset_hash(&eval), summary, outputs })
}

fn run_attacks(
    model: &AnyModel,
    data: &[&Instance],
    method: Method,
    infill: &InfillModel,
    lexicon: &SynonymLexicon,
    config: &AttackConfig,
) -> anyhow::Result<Vec<AttackRecord>> {
    data.par_iter()
        .map(|x| match model {
            AnyModel::Rationale(m) => Ok(attack_subset_divergence(m, x, lexicon, config)?),
            _ => attack_rank_divergence(model, x, method, Some(infill), lexicon, config).map_err(methods_error),
        })
        .collect()
}

fn attack(config: &RunConfig, dir: &Path) -> anyhow::Result<Body> {
    let train = load_train(config)?;
    let eval = load_eval(config)?;
    let model = obtain_model(config, &train)?;
    let infill = infill_for(config, &train)?;
    let lexicon = load_lexicon(&config.lexicon, config.similarity_threshold, config.symmetric_lexicon)
        .map_err(|e| ConfigError::new("lexicon", format!("{e:#}")))?;
    let nonempty: Vec<&Instance> = eval.iter().filter(|x| !x.is_empty()).collect();
    let mut summary = BTreeMap::new();
    let mut outputs = Vec::new();
    let mut header = vec!["dataset".to_string()];
    let mut row = vec![config.eval.clone()];
    for &ratio in &config.ratios {
        let ac = AttackConfig { ratio, beam_capacity: config.beam_capacity };
        let records = run_attacks(&model, &nonempty, config.attack_method, &infill, &lexicon, &ac)?;
        let tag = pct(ratio);
        let name = format!("attacks-{tag}.jsonl");
        write_jsonl(&dir.join(&name), &records)?;
        outputs.push(name);
        let objective = mean(records.iter().map(|r| r.objective));
        let violations = records
            .iter()
            .filter(|r| !(r.constraints.same_label && r.constraints.all_subs_in_lexicon && r.constraints.ratio_used <= ratio + 1e-12))
            .count();
        summary.insert(format!("{tag}/mean_objective"), objective);
        summary.insert(format!("{tag}/mean_ratio_used"), mean(records.iter().map(|r| r.constraints.ratio_used)));
        summary.insert(
            format!("{tag}/changed_fraction"),
            mean(records.iter().map(|r| f64::from(u8::from(!r.substitutions.is_empty())))),
        );
        summary.insert(format!("{tag}/constraint_violations"), violations as f64);
        header.push(format!("{}%", &pct(ratio)[1..]));
        row.push(crate::report::fmt_f64(objective));
    }
    let mut table = Table { header, rows: Vec::new() };
    table.rows.push(row);
    outputs.push(table.write(dir, "attack_summary", config.format)?);
    Ok(Body { fingerprint: model.fingerprint(), dataset_hash: dataset_hash(&eval), summary, outputs })
}

fn audit(config: &RunConfig, dir: &Path) -> anyhow::Result<Body> {
    let train = load_train(config)?;
    let eval = load_eval(config)?;
    let model = obtain_model(config, &train)?;
    let report = field_ablation_audit(&model, &eval, &config.audit_field).map_err(|e| match e {
        attraudit_core::Error::UnknownField(f) => {
            anyhow!(ConfigError::new("audit_field", format!("field `{f}` is absent from the eval data")))
        }
        other => other.into(),
    })?;
    fs::write(dir.join("audit.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    write_jsonl(&dir.join("audit_records.jsonl"), &report.records)?;
    let mut outputs = vec!["audit.json".to_string(), "audit_records.jsonl".to_string()];
    outputs.push(histogram_table(&report).write(dir, "audit_histogram", config.format)?);
    let mut summary = BTreeMap::from([
        ("total".to_string(), report.total as f64),
        ("unchanged_fraction".to_string(), report.unchanged_fraction),
        ("small_decrease_fraction".to_string(), report.small_decrease_fraction(0.1)),
    ]);
    if let Some(v) = report.unchanged_fraction_correct {
        summary.insert("unchanged_fraction_correct".into(), v);
    }
    if let Some(v) = report.unchanged_fraction_incorrect {
        summary.insert("unchanged_fraction_incorrect".into(), v);
    }
    if let Some(tags) = &config.tags {
        let words = load_word_tags(tags)?;
        let tagged: BTreeMap<String, bool> = words.into_iter().map(|w| (w, true)).collect();
        let ratio = config.ratios[0];
        let values = eval
            .par_iter()
            .filter(|x| !x.is_empty())
            .map(|x| {
                let loo = attribute(Method::Loo, &model, x, None)?;
                let k = budget(x.len(), ratio);
                Ok(attraudit_core::audit::tag_agreement(x, &loo.scores, &tagged, k))
            })
            .collect::<attraudit_core::Result<Vec<f64>>>()?;
        summary.insert("tag_agreement".into(), mean(values));
    }
    Ok(Body { fingerprint: model.fingerprint(), dataset_hash: dataset_hash(&eval), summary, outputs })
}
