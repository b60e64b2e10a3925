//! Perturbation-based evaluation: modification strategies, AOPC, AUC and the
//! metric matrix that shows how the choice of strategy decides which
//! attribution method "wins".
//!
//! These metrics remove information along an attribution ranking and watch
//! the predicted-class probability. Because the removal itself is an
//! attribution procedure, a metric built on a strategy rewards the method
//! that uses the same strategy; [`degeneracy_check`] makes the extreme case
//! (AOPC with deletion and one token is leave-one-out) explicit.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::{attribute, attribute_loo, AttributionResult, Method};
use crate::error::{Error, Result};
use crate::infill::InfillModel;
use crate::model::Classifier;
use crate::text::{Instance, PAD};
use crate::util::{derive_seed, CompensatedSum};

/// Number of features to modify: `max(1, floor(ratio · len))`, never more
/// than `len`.
pub fn budget(len: usize, ratio: f64) -> usize {
    // The epsilon keeps products such as 0.29 · 100 from flooring one short.
    let raw = libm::floor(ratio * len as f64 + 1e-9) as usize;
    raw.max(1).min(len)
}

/// Positions of the `k` largest scores, descending, ties to the earlier
/// position.
pub fn rank_features(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Del,
    Rep,
    Pad,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::Del, StrategyKind::Rep, StrategyKind::Pad];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Del => "del",
            StrategyKind::Rep => "rep",
            StrategyKind::Pad => "pad",
        }
    }

    /// The attribution methods whose own removal operation is this strategy.
    pub fn matched_methods(self) -> &'static [Method] {
        match self {
            StrategyKind::Del => &[Method::Loo],
            StrategyKind::Rep => &[Method::Marg],
            StrategyKind::Pad => &[Method::Pad, Method::Hedge],
        }
    }

    pub fn matched_to(method: Method) -> Option<StrategyKind> {
        StrategyKind::ALL
            .into_iter()
            .find(|s| s.matched_methods().contains(&method))
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown modification strategy `{s}`")))
    }
}

/// How `rep` picks a replacement from the infill distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum RepMode {
    #[default]
    Argmax,
    /// Draw from the distribution with a stream derived from
    /// `(seed, instance id, position)`.
    Sample { seed: u64 },
}

/// A deterministic rule mapping `(instance, positions)` to a modified instance.
#[derive(Debug, Clone, Copy)]
pub struct ModificationStrategy<'a> {
    pub kind: StrategyKind,
    infill: Option<&'a InfillModel>,
    rep_mode: RepMode,
}

/// Output of [`ModificationStrategy::apply`].
#[derive(Debug, Clone, PartialEq)]
pub struct Modified {
    pub instance: Instance,
    /// True if deletion would have emptied the instance, or no replacement
    /// candidate existed, and [`PAD`] was substituted instead.
    pub pad_fallback: bool,
}

impl<'a> ModificationStrategy<'a> {
    pub fn del() -> Self {
        Self { kind: StrategyKind::Del, infill: None, rep_mode: RepMode::Argmax }
    }

    pub fn pad() -> Self {
        Self { kind: StrategyKind::Pad, infill: None, rep_mode: RepMode::Argmax }
    }

    pub fn rep(infill: &'a InfillModel) -> Self {
        Self { kind: StrategyKind::Rep, infill: Some(infill), rep_mode: RepMode::Argmax }
    }

    pub fn with_rep_mode(mut self, mode: RepMode) -> Self {
        self.rep_mode = mode;
        self
    }

    /// Builds a strategy of the given kind; `rep` needs an infill model.
    pub fn of_kind(kind: StrategyKind, infill: Option<&'a InfillModel>) -> Result<Self> {
        match kind {
            StrategyKind::Del => Ok(Self::del()),
            StrategyKind::Pad => Ok(Self::pad()),
            StrategyKind::Rep => infill
                .map(Self::rep)
                .ok_or_else(|| Error::Config("strategy `rep` needs an infill model".into())),
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn replacement(&self, infill: &InfillModel, x: &Instance, pos: usize) -> Option<String> {
        let cands = infill.candidates(x, pos);
        match self.rep_mode {
            RepMode::Argmax => cands.argmax().map(String::from),
            RepMode::Sample { seed } => {
                let stream = derive_seed(seed, &format!("{}:{pos}", x.id));
                let u: f64 = ChaCha8Rng::seed_from_u64(stream).random();
                let mut acc = 0.0;
                for (w, p) in &cands.words {
                    acc += p;
                    if u < acc {
                        return Some(w.clone());
                    }
                }
                cands.words.last().map(|(w, _)| w.clone())
            }
        }
    }

    /// Applies the strategy to all `positions` at once. Positions refer to
    /// `x`; replacement candidates are computed in the context of `x`.
    pub fn apply(&self, x: &Instance, positions: &[usize]) -> Result<Modified> {
        if positions.is_empty() {
            return Ok(Modified { instance: x.clone(), pad_fallback: false });
        }
        match self.kind {
            StrategyKind::Del => {
                let remaining = (0..x.len()).filter(|p| !positions.contains(p)).count();
                if remaining == 0 {
                    Ok(Modified { instance: padded(x, positions), pad_fallback: true })
                } else {
                    Ok(Modified { instance: x.with_deleted(positions), pad_fallback: false })
                }
            }
            StrategyKind::Pad => Ok(Modified { instance: padded(x, positions), pad_fallback: false }),
            StrategyKind::Rep => {
                let infill = self
                    .infill
                    .ok_or_else(|| Error::Config("strategy `rep` needs an infill model".into()))?;
                let mut out = x.clone();
                let mut fallback = false;
                for &p in positions {
                    match self.replacement(infill, x, p) {
                        Some(w) => out.replace_in_place(p, &w),
                        None => {
                            out.replace_in_place(p, PAD);
                            fallback = true;
                        }
                    }
                }
                Ok(Modified { instance: out, pad_fallback: fallback })
            }
        }
    }
}

fn padded(x: &Instance, positions: &[usize]) -> Instance {
    let mut out = x.clone();
    for &p in positions {
        out.replace_in_place(p, PAD);
    }
    out
}

/// AOPC variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AopcMode {
    /// `p(ŷ|x) − p(ŷ|x̃⁽ᵏ⁾)` with all k features modified jointly.
    #[default]
    SingleStep,
    /// Mean drop over `j = 0..=k` cumulative modifications.
    StepAveraged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub modified_count: usize,
    pub fraction: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub id: String,
    pub strategy: StrategyKind,
    pub method: String,
    pub points: Vec<CurvePoint>,
}

impl PerturbationCurve {
    /// Trapezoidal area over the fraction axis `[0, 1]`.
    pub fn area(&self) -> f64 {
        trapezoid_area(&self.points)
    }
}

pub fn trapezoid_area(points: &[CurvePoint]) -> f64 {
    match points {
        [] => 0.0,
        [only] => only.prob,
        _ => points
            .windows(2)
            .map(|w| (w[1].fraction - w[0].fraction) * 0.5 * (w[0].prob + w[1].prob))
            .sum(),
    }
}

fn check_inputs(x: &Instance, scores: &[f64], ratio: f64) -> Result<()> {
    if scores.len() != x.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: x.len() });
    }
    if x.is_empty() {
        return Err(Error::EmptyInstance(x.id.clone()));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!("ratio must lie in (0, 1], got {ratio}")));
    }
    Ok(())
}

/// Probabilities of the predicted class after cumulatively modifying the
/// first `0..=k` ranked features.
pub fn curve_with_budget<M: Classifier + ?Sized>(
    model: &M,
    x: &Instance,
    scores: &[f64],
    strategy: &ModificationStrategy<'_>,
    k: usize,
    method: &str,
) -> Result<PerturbationCurve> {
    let base = model.predict(x);
    let class = base.argmax();
    let ranked = rank_features(scores, k);
    let mut points = Vec::with_capacity(ranked.len() + 1);
    points.push(CurvePoint { modified_count: 0, fraction: 0.0, prob: base.get(class) });
    for j in 1..=ranked.len() {
        let modified = strategy.apply(x, &ranked[..j])?;
        points.push(CurvePoint {
            modified_count: j,
            fraction: j as f64 / ranked.len() as f64,
            prob: model.predict(&modified.instance).get(class),
        });
    }
    Ok(PerturbationCurve {
        id: x.id.clone(),
        strategy: strategy.kind,
        method: method.into(),
        points,
    })
}

pub fn curve<M: Classifier + ?Sized>(
    model: &M,
    x: &Instance,
    scores: &[f64],
    strategy: &ModificationStrategy<'_>,
    ratio: f64,
    method: &str,
) -> Result<PerturbationCurve> {
    check_inputs(x, scores, ratio)?;
    curve_with_budget(model, x, scores, strategy, budget(x.len(), ratio), method)
}

/// AOPC for one instance with an explicit feature budget.
pub fn aopc_with_budget<M: Classifier + ?Sized>(
    model: &M,
    x: &Instance,
    scores: &[f64],
    strategy: &ModificationStrategy<'_>,
    k: usize,
    mode: AopcMode,
) -> Result<f64> {
    let base = model.predict(x);
    let class = base.argmax();
    let p0 = base.get(class);
    let ranked = rank_features(scores, k);
    match mode {
        AopcMode::SingleStep => {
            let modified = strategy.apply(x, &ranked)?;
            Ok(p0 - model.predict(&modified.instance).get(class))
        }
        AopcMode::StepAveraged => {
            let mut acc = CompensatedSum::default();
            for j in 1..=ranked.len() {
                let modified = strategy.apply(x, &ranked[..j])?;
                acc.add(p0 - model.predict(&modified.instance).get(class));
            }
            Ok(acc.total() / (ranked.len() + 1) as f64)
        }
    }
}

/// Single-instance AOPC at `budget(len, ratio)` features.
pub fn aopc<M: Classifier + ?Sized>(
    model: &M,
    x: &Instance,
    scores: &[f64],
    strategy: &ModificationStrategy<'_>,
    ratio: f64,
) -> Result<f64> {
    check_inputs(x, scores, ratio)?;
    aopc_with_budget(model, x, scores, strategy, budget(x.len(), ratio), AopcMode::SingleStep)
}

/// Single-instance AUC: normalized area under the cumulative curve.
pub fn auc<M: Classifier + ?Sized>(
    model: &M,
    x: &Instance,
    scores: &[f64],
    strategy: &ModificationStrategy<'_>,
    ratio: f64,
) -> Result<f64> {
    Ok(curve(model, x, scores, strategy, ratio, "")?.area())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyFailure {
    pub id: String,
    pub aopc: f64,
    pub top_loo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DegeneracyReport {
    pub checked: usize,
    pub passed: usize,
    pub failures: Vec<DegeneracyFailure>,
}

/// Checks, instance by instance, that AOPC with deletion and a budget of one
/// feature over leave-one-out ranked scores equals the top leave-one-out
/// score bit for bit.
pub fn degeneracy_check<M: Classifier + ?Sized>(
    model: &M,
    dataset: &[Instance],
) -> Result<DegeneracyReport> {
    let mut report = DegeneracyReport::default();
    let del = ModificationStrategy::del();
    for x in dataset.iter().filter(|x| !x.is_empty()) {
        let loo = attribute_loo(model, x)?;
        let value = aopc_with_budget(model, x, &loo.scores, &del, 1, AopcMode::SingleStep)?;
        let top = loo.scores[rank_features(&loo.scores, 1)[0]];
        report.checked += 1;
        if value.to_bits() == top.to_bits() {
            report.passed += 1;
        } else {
            report.failures.push(DegeneracyFailure { id: x.id.clone(), aopc: value, top_loo: top });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Aopc,
    Auc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub metric: Metric,
    pub strategy: StrategyKind,
    pub direction: Direction,
    /// Set on `AUC_pad`, whose "higher is better" direction mirrors the
    /// reference table and is the reverse of the other AUC columns.
    pub direction_flagged: bool,
}

impl ColumnSpec {
    fn new(metric: Metric, strategy: StrategyKind) -> Self {
        let (prefix, direction, flagged) = match (metric, strategy) {
            (Metric::Aopc, _) => ("AOPC", Direction::HigherIsBetter, false),
            (Metric::Auc, StrategyKind::Pad) => ("AUC", Direction::HigherIsBetter, true),
            (Metric::Auc, _) => ("AUC", Direction::LowerIsBetter, false),
        };
        Self {
            name: format!("{prefix}_{}", strategy.name()),
            metric,
            strategy,
            direction,
            direction_flagged: flagged,
        }
    }
}

/// Column layout `AOPC_del, AUC_rep, AOPC_rep, AUC_del, AOPC_pad, AUC_pad`,
/// restricted to the requested strategies.
pub fn column_layout(strategies: &[StrategyKind]) -> Vec<ColumnSpec> {
    use Metric::*;
    use StrategyKind::*;
    [(Aopc, Del), (Auc, Rep), (Aopc, Rep), (Auc, Del), (Aopc, Pad), (Auc, Pad)]
        .into_iter()
        .filter(|(_, s)| strategies.contains(s))
        .map(|(m, s)| ColumnSpec::new(m, s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixOptions {
    pub strategies: Vec<StrategyKind>,
    pub ratio: f64,
    pub aopc_mode: AopcMode,
    pub rep_mode: RepMode,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        Self {
            strategies: StrategyKind::ALL.to_vec(),
            ratio: 0.2,
            aopc_mode: AopcMode::SingleStep,
            rep_mode: RepMode::Argmax,
        }
    }
}

/// Metric values of every method on one instance: `cells[method][column]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMetrics {
    pub cells: Vec<Vec<f64>>,
    pub curves: Vec<PerturbationCurve>,
}

/// Computes every `(method, column)` value for one instance.
pub fn instance_metrics<M: Classifier + ?Sized>(
    model: &M,
    x: &Instance,
    methods: &[Method],
    infill: Option<&InfillModel>,
    options: &MatrixOptions,
) -> Result<InstanceMetrics> {
    let columns = column_layout(&options.strategies);
    let k = budget(x.len(), options.ratio);
    let mut cells = Vec::with_capacity(methods.len());
    let mut curves = Vec::new();
    for &method in methods {
        let attr = attribute(method, model, x, infill)?;
        let mut row = Vec::with_capacity(columns.len());
        for col in &columns {
            let strategy =
                ModificationStrategy::of_kind(col.strategy, infill)?.with_rep_mode(options.rep_mode);
            let value = match col.metric {
                Metric::Aopc => {
                    aopc_with_budget(model, x, &attr.scores, &strategy, k, options.aopc_mode)?
                }
                Metric::Auc => {
                    let c = curve_with_budget(model, x, &attr.scores, &strategy, k, method.name())?;
                    let area = c.area();
                    curves.push(c);
                    area
                }
            };
            row.push(value);
        }
        cells.push(row);
    }
    Ok(InstanceMetrics { cells, curves })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMatrix {
    pub methods: Vec<Method>,
    pub columns: Vec<ColumnSpec>,
    /// `cells[method][column]`: dataset means.
    pub cells: Vec<Vec<f64>>,
    /// `rankings[column]`: method indices from best to worst.
    pub rankings: Vec<Vec<usize>>,
    pub instances: usize,
    pub ratio: f64,
    pub aopc_mode: AopcMode,
}

impl MetricMatrix {
    /// Aggregates per-instance rows (in any order) into dataset means. A single
    /// method is accepted here; [`metric_matrix`] insists on two or more.
    pub fn from_rows(
        methods: &[Method],
        options: &MatrixOptions,
        rows: &[InstanceMetrics],
    ) -> Result<Self> {
        if methods.is_empty() {
            return Err(Error::Config("a metric matrix needs at least one method".into()));
        }
        if rows.is_empty() {
            return Err(Error::EmptyData);
        }
        let columns = column_layout(&options.strategies);
        let mut cells = alloc::vec![alloc::vec![0.0; columns.len()]; methods.len()];
        for (m, row) in cells.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                let mut acc = CompensatedSum::default();
                for r in rows {
                    acc.add(r.cells[m][c]);
                }
                *cell = acc.total() / rows.len() as f64;
            }
        }
        let rankings = columns
            .iter()
            .enumerate()
            .map(|(c, col)| {
                let mut order: Vec<usize> = (0..methods.len()).collect();
                order.sort_by(|&a, &b| {
                    let (va, vb) = (cells[a][c], cells[b][c]);
                    let ord = match col.direction {
                        Direction::HigherIsBetter => vb.total_cmp(&va),
                        Direction::LowerIsBetter => va.total_cmp(&vb),
                    };
                    ord.then(a.cmp(&b))
                });
                order
            })
            .collect();
        Ok(Self {
            methods: methods.to_vec(),
            columns,
            cells,
            rankings,
            instances: rows.len(),
            ratio: options.ratio,
            aopc_mode: options.aopc_mode,
        })
    }

    /// 1-based rank of `method` in column `column`.
    pub fn rank(&self, method: usize, column: usize) -> usize {
        self.rankings[column].iter().position(|&m| m == method).unwrap() + 1
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn winner(&self, column: usize) -> Method {
        self.methods[self.rankings[column][0]]
    }

    /// Winning method per column.
    pub fn manipulation_summary(&self) -> Vec<(String, Method)> {
        (0..self.columns.len())
            .map(|c| (self.columns[c].name.clone(), self.winner(c)))
            .collect()
    }

    /// True when at least two columns are won by different methods.
    pub fn has_rank_reversal(&self) -> bool {
        let mut winners = (0..self.columns.len()).map(|c| self.winner(c));
        match winners.next() {
            Some(first) => winners.any(|w| w != first),
            None => false,
        }
    }

    /// For each method with a matched strategy that is present, whether its
    /// rank in the matched AOPC column is no worse than in every other AOPC
    /// column.
    pub fn aopc_self_consistency(&self) -> Vec<(Method, bool)> {
        let aopc_cols: Vec<usize> = (0..self.columns.len())
            .filter(|&c| self.columns[c].metric == Metric::Aopc)
            .collect();
        let mut out = Vec::new();
        for (m, &method) in self.methods.iter().enumerate() {
            let Some(matched) = StrategyKind::matched_to(method) else { continue };
            let Some(&own) = aopc_cols.iter().find(|&&c| self.columns[c].strategy == matched) else {
                continue;
            };
            let own_rank = self.rank(m, own);
            let ok = aopc_cols.iter().all(|&c| c == own || own_rank <= self.rank(m, c));
            out.push((method, ok));
        }
        out
    }
}

/// Sequential metric matrix over `dataset`.
pub fn metric_matrix<M: Classifier + ?Sized>(
    model: &M,
    dataset: &[Instance],
    methods: &[Method],
    infill: Option<&InfillModel>,
    options: &MatrixOptions,
) -> Result<MetricMatrix> {
    if methods.len() < 2 {
        return Err(Error::Config("a metric matrix needs at least two methods".into()));
    }
    let rows = dataset
        .iter()
        .filter(|x| !x.is_empty())
        .map(|x| instance_metrics(model, x, methods, infill, options))
        .collect::<Result<Vec<_>>>()?;
    MetricMatrix::from_rows(methods, options, &rows)
}

/// Attribution scores for AOPC/AUC must be aligned; this helper exposes the
/// check used internally for callers holding precomputed results.
pub fn check_alignment(x: &Instance, attr: &AttributionResult) -> Result<()> {
    if attr.scores.len() == x.len() {
        Ok(())
    } else {
        Err(Error::LengthMismatch { left: attr.scores.len(), right: x.len() })
    }
}
