//! Answer and retrieval metrics, μ tuning and the benchmark runner.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::engine::{CgSession, Generator, GeneratorConfig, Selector, TurnKey};
use crate::error::{Error, Result};
use crate::model::{CommonGround, Conversation, ConversationContext, Exchange, Passage, Turn};
use crate::reading::{check_mu, Pipeline, Reader};
use crate::retrieval::{Bm25Params, Index};
use crate::setups::{formulate, Services, Setup};

/// Lowercase, drop ASCII punctuation and the articles a/an/the, collapse
/// whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lower: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    lower
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Token-level F1 over normalized multisets.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return if pt.is_empty() && gt.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pt.len() as f64;
    let recall = overlap as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub conversation_id: String,
    pub turn_no: usize,
    pub setup: Setup,
    pub predicted_answer: String,
    pub gold_answer: String,
    pub ranked_passage_ids: Vec<String>,
    pub gold_passage_ids: BTreeSet<String>,
    pub mu: f64,
}

impl EvalRecord {
    /// 1-based rank of the first gold passage.
    pub fn first_gold_rank(&self) -> Option<usize> {
        self.ranked_passage_ids
            .iter()
            .position(|id| self.gold_passage_ids.contains(id))
            .map(|i| i + 1)
    }
}

pub fn mrr(records: &[EvalRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records
        .iter()
        .map(|r| r.first_gold_rank().map_or(0.0, |k| 1.0 / k as f64))
        .sum::<f64>()
        / records.len() as f64
}

pub fn recall_at_k(records: &[EvalRecord], k: usize) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = records
        .iter()
        .filter(|r| r.first_gold_rank().is_some_and(|rank| rank <= k))
        .count();
    hits as f64 / records.len() as f64
}

pub fn mean_f1(records: &[EvalRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records
        .iter()
        .map(|r| token_f1(&r.predicted_answer, &r.gold_answer))
        .sum::<f64>()
        / records.len() as f64
}

pub const DEFAULT_RECALL_KS: [usize; 2] = [10, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1: f64,
    pub mrr: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub n_turns: usize,
    /// Turns with no identifiable gold passage; counted as retrieval misses.
    pub empty_gold_turns: usize,
}

impl MetricsReport {
    pub fn from_records(records: &[EvalRecord], ks: &[usize]) -> Self {
        Self {
            f1: mean_f1(records),
            mrr: mrr(records),
            recall_at: ks.iter().map(|&k| (k, recall_at_k(records, k))).collect(),
            n_turns: records.len(),
            empty_gold_turns: records.iter().filter(|r| r.gold_passage_ids.is_empty()).count(),
        }
    }
}

/// 0.0, 0.05, …, 1.0
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| f64::from(i) / 20.0).collect()
}

/// Grid value with the best validation F1; ties go to the smaller μ.
pub fn tune_mu<F>(mut evaluate: F, grid: &[f64]) -> Result<f64>
where
    F: FnMut(f64) -> Result<Vec<EvalRecord>>,
{
    if grid.is_empty() {
        return Err(Error::argument("empty mu grid"));
    }
    let mut sorted = grid.to_vec();
    for &mu in &sorted {
        check_mu(mu)?;
    }
    sorted.sort_by(f64::total_cmp);
    let mut best = (f64::NEG_INFINITY, sorted[0]);
    for mu in sorted {
        let f1 = mean_f1(&evaluate(mu)?);
        if f1 > best.0 {
            best = (f1, mu);
        }
    }
    Ok(best.1)
}

/// Picks the gold passages of each turn: matching `source_url`, or
/// containing the normalized gold answer as a contiguous token run.
pub struct GoldPassages {
    by_url: HashMap<String, Vec<String>>,
    normalized: Vec<(String, Vec<String>)>,
}

impl GoldPassages {
    pub fn new(passages: &[Passage]) -> Self {
        let mut by_url: HashMap<String, Vec<String>> = HashMap::new();
        for p in passages {
            if let Some(u) = &p.source_url {
                by_url.entry(u.clone()).or_default().push(p.passage_id.clone());
            }
        }
        let normalized = passages
            .iter()
            .map(|p| {
                (
                    p.passage_id.clone(),
                    normalize_answer(&p.text).split_whitespace().map(str::to_string).collect(),
                )
            })
            .collect();
        Self { by_url, normalized }
    }

    pub fn for_turn(&self, turn: &Turn) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Some(ids) = turn.answer_source.as_ref().and_then(|u| self.by_url.get(u)) {
            out.extend(ids.iter().cloned());
        }
        let answer = normalize_answer(turn.answer.as_deref().unwrap_or(""));
        let needle: Vec<&str> = answer.split_whitespace().collect();
        if !needle.is_empty() {
            for (id, tokens) in &self.normalized {
                if tokens.windows(needle.len()).any(|w| w.iter().map(String::as_str).eq(needle.iter().copied())) {
                    out.insert(id.clone());
                }
            }
        }
        out
    }
}

/// Which answers feed later turns' context.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    #[default]
    Gold,
    System,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub params: Bm25Params,
    pub fusion_raw: bool,
    pub history: HistoryMode,
    pub generator: GeneratorConfig,
    pub recall_ks: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            params: Bm25Params::default(),
            fusion_raw: false,
            history: HistoryMode::Gold,
            generator: GeneratorConfig::default(),
            recall_ks: DEFAULT_RECALL_KS.to_vec(),
        }
    }
}

#[derive(Clone)]
pub struct Backends {
    pub generator: Arc<dyn Generator>,
    pub selector: Arc<dyn Selector>,
    pub reader: Arc<dyn Reader>,
    pub services: Services,
}

pub struct Benchmark<'a> {
    pub index: &'a Index,
    pub dataset: &'a [Conversation],
    pub backends: &'a Backends,
    pub config: BenchConfig,
    gold: GoldPassages,
}

/// Per-setup μ values, stored as a key-sorted JSON object.
pub type MuTable = BTreeMap<String, f64>;

pub const FALLBACK_MU: f64 = 0.5;

pub fn load_mu_table(path: impl AsRef<Path>) -> Result<MuTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: MuTable = serde_json::from_str(&text)?;
    for &mu in table.values() {
        check_mu(mu)?;
    }
    Ok(table)
}

pub fn save_mu_table(path: impl AsRef<Path>, table: &MuTable) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(table)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SetupOutcome {
    Ok {
        mu: f64,
        report: MetricsReport,
        comparable: bool,
    },
    Error {
        kind: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<(Setup, SetupOutcome)>,
    pub records: Vec<EvalRecord>,
}

impl<'a> Benchmark<'a> {
    pub fn new(index: &'a Index, dataset: &'a [Conversation], backends: &'a Backends, config: BenchConfig) -> Self {
        let gold = GoldPassages::new(index.passages());
        Self {
            index,
            dataset,
            backends,
            config,
            gold,
        }
    }

    fn pipeline(&self) -> Pipeline<'_> {
        Pipeline {
            index: self.index,
            reader: self.backends.reader.as_ref(),
            params: self.config.params,
            fusion_raw: self.config.fusion_raw,
        }
    }

    /// Records for every μ in `mus`. With gold history the passes share
    /// retrieval and reading; with system history each μ is a full run
    /// because predictions feed later turns.
    pub fn evaluate(&self, setup: Setup, mus: &[f64]) -> Result<Vec<Vec<EvalRecord>>> {
        self.backends.services.check(setup)?;
        self.config.params.validate()?;
        for &mu in mus {
            check_mu(mu)?;
        }
        match self.config.history {
            HistoryMode::Gold => self.evaluate_pass(setup, mus),
            HistoryMode::System => mus
                .iter()
                .map(|&mu| Ok(self.evaluate_pass(setup, &[mu])?.remove(0)))
                .collect(),
        }
    }

    fn evaluate_pass(&self, setup: Setup, mus: &[f64]) -> Result<Vec<Vec<EvalRecord>>> {
        let mut out = vec![Vec::new(); mus.len()];
        let pipeline = self.pipeline();
        for conv in self.dataset {
            let mut session = if setup.uses_cg() {
                Some(
                    CgSession::new(
                        conv.doc.clone(),
                        self.backends.generator.clone(),
                        self.backends.selector.clone(),
                        self.config.generator,
                    )?
                    .with_conversation_id(&conv.conversation_id),
                )
            } else {
                None
            };
            let mut history: Vec<Exchange> = Vec::new();
            for turn in &conv.turns {
                let key = TurnKey::new(&conv.conversation_id, turn.turn_no);
                let ctx = ConversationContext {
                    doc: conv.doc.clone(),
                    history: history.clone(),
                    current_question: turn.question.clone(),
                };
                let cg = match session.as_mut() {
                    Some(s) => s.observe(&turn.question)?.full,
                    None => CommonGround::new(),
                };
                let f = formulate(setup, &ctx, &cg, &self.backends.services, Some(&key))?;
                let outputs = pipeline.run_grid(&f.retriever_query, &f.reader_query, mus)?;
                let gold_ids = self.gold.for_turn(turn);
                let gold_answer = turn.answer.clone().unwrap_or_default();
                for ((records, output), &mu) in out.iter_mut().zip(&outputs).zip(mus) {
                    records.push(EvalRecord {
                        conversation_id: conv.conversation_id.clone(),
                        turn_no: turn.turn_no,
                        setup,
                        predicted_answer: output.answer().to_string(),
                        gold_answer: gold_answer.clone(),
                        ranked_passage_ids: output.ranked_ids(),
                        gold_passage_ids: gold_ids.clone(),
                        mu,
                    });
                }
                let next_answer = match self.config.history {
                    HistoryMode::Gold => gold_answer,
                    HistoryMode::System => outputs[0].answer().to_string(),
                };
                if let Some(s) = session.as_mut() {
                    s.record_answer(next_answer.clone())?;
                }
                history.push(Exchange::new(turn.question.clone(), next_answer));
            }
        }
        Ok(out)
    }

    pub fn tune(&self, setup: Setup, grid: &[f64]) -> Result<f64> {
        if grid.is_empty() {
            return Err(Error::argument("empty mu grid"));
        }
        let runs = self.evaluate(setup, grid)?;
        let by_mu: Vec<(f64, Vec<EvalRecord>)> = grid.iter().copied().zip(runs).collect();
        tune_mu(
            |mu| {
                Ok(by_mu
                    .iter()
                    .find(|(m, _)| *m == mu)
                    .map(|(_, r)| r.clone())
                    .unwrap_or_default())
            },
            grid,
        )
    }

    /// Runs each setup at its μ. A failing setup yields an error row; the
    /// others still run.
    pub fn run(&self, setups: &[Setup], mus: &MuTable) -> BenchReport {
        let mut report = BenchReport::default();
        for &setup in setups {
            let mu = mus.get(setup.as_str()).copied().unwrap_or_else(|| {
                log::warn!("no tuned mu for {setup}; using {FALLBACK_MU}");
                FALLBACK_MU
            });
            let outcome = match self.evaluate(setup, &[mu]) {
                Ok(mut runs) => {
                    let records = runs.remove(0);
                    let comparable = !(setup == Setup::Summary
                        && self.backends.services.summarizer.as_ref().is_some_and(|s| !s.comparable()));
                    let out = SetupOutcome::Ok {
                        mu,
                        report: MetricsReport::from_records(&records, &self.config.recall_ks),
                        comparable,
                    };
                    report.records.extend(records);
                    out
                }
                Err(e) => SetupOutcome::Error {
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                },
            };
            report.rows.push((setup, outcome));
        }
        report
    }
}

impl BenchReport {
    pub fn outcome(&self, setup: Setup) -> Option<&SetupOutcome> {
        self.rows.iter().find(|(s, _)| *s == setup).map(|(_, o)| o)
    }

    pub fn metrics(&self, setup: Setup) -> Option<&MetricsReport> {
        match self.outcome(setup)? {
            SetupOutcome::Ok { report, .. } => Some(report),
            SetupOutcome::Error { .. } => None,
        }
    }

    /// Key-sorted JSON; metric values in [0, 1].
    pub fn to_json(&self) -> Value {
        let setups: serde_json::Map<String, Value> = self
            .rows
            .iter()
            .map(|(s, o)| (s.as_str().to_string(), serde_json::to_value(o).expect("plain data")))
            .collect();
        json!({ "setups": setups })
    }

    /// Aligned text table, metrics ×100 with two decimals.
    pub fn to_table(&self, ks: &[usize]) -> String {
        let mut header = vec!["Approach".to_string(), "F1".into(), "MRR".into()];
        header.extend(ks.iter().map(|k| format!("R@{k}")));
        header.push("mu".into());
        let mut rows = vec![header];
        let mut notes = Vec::new();
        for (setup, outcome) in &self.rows {
            match outcome {
                SetupOutcome::Ok { mu, report, comparable } => {
                    let mut label = setup.label().to_string();
                    if !comparable {
                        label.push('*');
                        notes.push(format!("* {setup}: offline fallback, not comparable"));
                    }
                    let mut row = vec![label, pct(report.f1), pct(report.mrr)];
                    row.extend(ks.iter().map(|k| pct(report.recall_at.get(k).copied().unwrap_or(0.0))));
                    row.push(format!("{mu:.2}"));
                    rows.push(row);
                    if report.empty_gold_turns > 0 {
                        notes.push(format!("{setup}: {} turns without a gold passage", report.empty_gold_turns));
                    }
                }
                SetupOutcome::Error { message, .. } => {
                    rows.push(vec![setup.label().to_string(), format!("error: {message}")]);
                }
            }
        }
        let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
        let widths: Vec<usize> = (0..cols)
            .map(|c| {
                rows.iter()
                    .filter(|r| r.len() == cols)
                    .filter_map(|r| r.get(c))
                    .map(|s| s.chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for row in &rows {
            let mut line = String::new();
            for (c, cell) in row.iter().enumerate() {
                if c > 0 {
                    line.push_str(" | ");
                }
                if row.len() < cols && c == row.len() - 1 {
                    line.push_str(cell);
                } else if c == 0 {
                    let _ = write!(line, "{cell:<w$}", w = widths[c]);
                } else {
                    let _ = write!(line, "{cell:>w$}", w = widths[c]);
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        for n in notes {
            out.push_str(&n);
            out.push('\n');
        }
        out
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}
