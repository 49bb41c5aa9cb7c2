//! Generator, Selector and the per-conversation state machine that stacks
//! generated propositions into a common ground and re-selects each turn.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adapter::{
    AdapterClient, ClassifyPayload, ClassifyResult, GenerateCgPayload, GenerateCgResult, Task,
};
use crate::annotate::{extract_propositions, is_anaphoric, Annotator};
use crate::error::{Error, Result};
use crate::gold::{occurs_in, render_propositions};
use crate::model::{CommonGround, Conversation, ConversationContext, DocumentContext, Exchange, Proposition, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Use the document context.
    pub doc: bool,
    /// Use the question/answer history.
    pub conv: bool,
    pub include_current_question: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            doc: true,
            conv: true,
            include_current_question: true,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.doc && !self.conv {
            return Err(Error::config("generator needs at least one context source (doc, conv)"));
        }
        Ok(())
    }
}

/// Identifies a dataset turn; oracle backends look gold data up by it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TurnKey {
    pub conversation_id: String,
    pub turn_no: usize,
}

impl TurnKey {
    pub fn new(conversation_id: impl Into<String>, turn_no: usize) -> Self {
        Self {
            conversation_id: conversation_id.into(),
            turn_no,
        }
    }
}

pub struct GenerateRequest<'a> {
    pub context: &'a ConversationContext,
    pub config: &'a GeneratorConfig,
    pub key: Option<&'a TurnKey>,
}

pub struct SelectRequest<'a> {
    pub question: &'a str,
    pub key: Option<&'a TurnKey>,
}

pub trait Generator: Send + Sync {
    fn generate(&self, request: &GenerateRequest<'_>) -> Result<Vec<Proposition>>;
}

/// Marks each CG entry selected or retained. Implementations must not add
/// or remove entries.
pub trait Selector: Send + Sync {
    fn select(&self, cg: &CommonGround, request: &SelectRequest<'_>) -> Result<CommonGround>;
}

/// Returns the gold CG of the turn.
#[derive(Debug, Clone, Default)]
pub struct OracleGenerator {
    gold: HashMap<TurnKey, Vec<Proposition>>,
}

impl OracleGenerator {
    pub fn from_conversations(conversations: &[Conversation]) -> Self {
        let gold = conversations
            .iter()
            .flat_map(|c| c.turns.iter())
            .filter_map(|t| {
                t.gold_cg
                    .as_ref()
                    .map(|g| (TurnKey::new(&t.conversation_id, t.turn_no), g.clone()))
            })
            .collect();
        Self { gold }
    }
}

impl Generator for OracleGenerator {
    fn generate(&self, request: &GenerateRequest<'_>) -> Result<Vec<Proposition>> {
        let key = request
            .key
            .ok_or_else(|| Error::config("oracle generator needs a dataset turn"))?;
        let turn = request.context.turn();
        self.gold
            .get(key)
            .map(|props| {
                props
                    .iter()
                    .map(|p| Proposition { origin_turn: turn, ..p.clone() })
                    .collect()
            })
            .ok_or_else(|| {
                Error::config(format!(
                    "no gold CG for conversation {} turn {}",
                    key.conversation_id, key.turn_no
                ))
            })
    }
}

/// Heuristic generator working from noun chunks.
///
/// With the current question: the question's own chunks; when the question
/// is anaphoric, the entity chunks of the previous answer (or, failing that,
/// of the previous question) as antecedents; chunks of the previous turn
/// sharing a content word with the question; and at turn 0 the document
/// title plus the first-sentence chunks that are entities or overlap the
/// question. Without the current question nothing can be focused, so every
/// chunk of the enabled sources is returned.
pub struct RuleGenerator {
    annotator: Arc<dyn Annotator>,
}

impl RuleGenerator {
    pub fn new(annotator: Arc<dyn Annotator>) -> Self {
        Self { annotator }
    }

    fn chunks(&self, text: &str, turn: usize) -> Result<Vec<Proposition>> {
        if text.trim().is_empty() {
            return Ok(Vec::new());
        }
        Ok(extract_propositions(&self.annotator.annotate(text)?, turn))
    }

    fn content_words(&self, text: &str) -> Result<HashSet<String>> {
        if text.trim().is_empty() {
            return Ok(HashSet::new());
        }
        Ok(self.annotator.annotate(text)?.content_words().into_iter().collect())
    }

    fn overlaps(&self, prop: &Proposition, words: &HashSet<String>) -> Result<bool> {
        Ok(self.content_words(&prop.surface)?.iter().any(|w| words.contains(w)))
    }
}

impl Generator for RuleGenerator {
    fn generate(&self, request: &GenerateRequest<'_>) -> Result<Vec<Proposition>> {
        let ctx = request.context;
        let config = request.config;
        config.validate()?;
        let turn = ctx.turn();
        let mut out = CommonGround::new();

        if !config.include_current_question {
            if config.doc {
                if let Some(doc) = &ctx.doc {
                    out.extend(self.chunks(&doc.title, turn)?);
                    out.extend(self.chunks(&doc.first_sentence, turn)?);
                }
            }
            if config.conv {
                for ex in &ctx.history {
                    out.extend(self.chunks(&ex.question, turn)?);
                    out.extend(self.chunks(&ex.answer, turn)?);
                }
            }
            return Ok(out.into_propositions());
        }

        let question = ctx.current_question.as_str();
        let q_words = self.content_words(question)?;
        out.extend(self.chunks(question, turn)?);

        if config.conv {
            if let Some(last) = ctx.last_exchange() {
                let from_answer = self.chunks(&last.answer, turn)?;
                let from_question = self.chunks(&last.question, turn)?;
                if is_anaphoric(question) {
                    let antecedents: Vec<_> = from_answer.iter().filter(|p| p.entity).cloned().collect();
                    if antecedents.is_empty() {
                        out.extend(from_question.iter().filter(|p| p.entity).cloned());
                    } else {
                        out.extend(antecedents);
                    }
                }
                for p in from_question.into_iter().chain(from_answer) {
                    if self.overlaps(&p, &q_words)? {
                        out.insert(p);
                    }
                }
            }
        }

        if config.doc && turn == 0 {
            if let Some(doc) = &ctx.doc {
                out.extend(self.chunks(&doc.title, turn)?);
                for p in self.chunks(&doc.first_sentence, turn)? {
                    if p.entity || self.overlaps(&p, &q_words)? {
                        out.insert(p);
                    }
                }
            }
        }
        Ok(out.into_propositions())
    }
}

/// Generator served over the adapter protocol (`generate_cg`).
pub struct ExternalGenerator {
    client: Arc<AdapterClient>,
    annotator: Arc<dyn Annotator>,
}

impl ExternalGenerator {
    pub fn new(client: Arc<AdapterClient>, annotator: Arc<dyn Annotator>) -> Self {
        Self { client, annotator }
    }
}

impl Generator for ExternalGenerator {
    fn generate(&self, request: &GenerateRequest<'_>) -> Result<Vec<Proposition>> {
        let ctx = request.context;
        let config = request.config;
        config.validate()?;
        let payload = GenerateCgPayload {
            doc: if config.doc { ctx.doc.clone() } else { None },
            history: if config.conv { ctx.history.clone() } else { Vec::new() },
            question: config.include_current_question.then(|| ctx.current_question.clone()),
        };
        let result: GenerateCgResult = self.client.invoke(Task::GenerateCg, &payload)?;
        let turn = ctx.turn();
        let mut props = Vec::new();
        for surface in result.propositions {
            let Ok(p) = Proposition::try_new(surface, turn) else { continue };
            let entity = self
                .annotator
                .annotate(&p.surface)
                .map(|s| s.tokens.iter().any(|t| t.is_entity))
                .unwrap_or(false)
                || crate::annotate::fragment_has_entity(&p.surface);
            props.push(p.with_entity(entity));
        }
        Ok(props)
    }
}

/// Selects the propositions that occur in the turn's gold answer.
#[derive(Debug, Clone, Default)]
pub struct OracleSelector {
    answers: HashMap<TurnKey, String>,
}

impl OracleSelector {
    pub fn from_conversations(conversations: &[Conversation]) -> Self {
        let answers = conversations
            .iter()
            .flat_map(|c| c.turns.iter())
            .map(|t| {
                (
                    TurnKey::new(&t.conversation_id, t.turn_no),
                    t.answer.clone().unwrap_or_default(),
                )
            })
            .collect();
        Self { answers }
    }
}

impl Selector for OracleSelector {
    fn select(&self, cg: &CommonGround, request: &SelectRequest<'_>) -> Result<CommonGround> {
        let key = request
            .key
            .ok_or_else(|| Error::config("oracle selector needs a dataset turn"))?;
        let answer = self.answers.get(key).ok_or_else(|| {
            Error::config(format!(
                "no gold answer for conversation {} turn {}",
                key.conversation_id, key.turn_no
            ))
        })?;
        let mut out = cg.clone();
        for (i, e) in cg.entries().iter().enumerate() {
            let status = if occurs_in(&e.proposition.surface, answer) {
                Status::Selected
            } else {
                Status::Retained
            };
            out.set_status(i, status);
        }
        Ok(out)
    }
}

/// Lexical-overlap selector.
///
/// An entry is selected when the share of its content words found in the
/// question exceeds `threshold`. For anaphoric questions the CG's only
/// entity-bearing entry, if there is exactly one, is selected as well.
pub struct RuleSelector {
    annotator: Arc<dyn Annotator>,
    pub threshold: f64,
}

impl RuleSelector {
    pub fn new(annotator: Arc<dyn Annotator>) -> Self {
        Self {
            annotator,
            threshold: 0.0,
        }
    }

    /// |content(p) ∩ content(q)| / |content(p)|
    pub fn overlap(&self, proposition: &str, question: &str) -> Result<f64> {
        let q: HashSet<String> = self.annotator.annotate(question)?.content_words().into_iter().collect();
        let p: HashSet<String> = self.annotator.annotate(proposition)?.content_words().into_iter().collect();
        if p.is_empty() {
            return Ok(0.0);
        }
        Ok(p.intersection(&q).count() as f64 / p.len() as f64)
    }
}

impl Selector for RuleSelector {
    fn select(&self, cg: &CommonGround, request: &SelectRequest<'_>) -> Result<CommonGround> {
        let mut out = cg.clone();
        for (i, e) in cg.entries().iter().enumerate() {
            let keep = self.overlap(&e.proposition.surface, request.question)? > self.threshold;
            out.set_status(i, if keep { Status::Selected } else { Status::Retained });
        }
        if is_anaphoric(request.question) {
            let entities: Vec<usize> = cg
                .entries()
                .iter()
                .enumerate()
                .filter(|(_, e)| e.proposition.entity)
                .map(|(i, _)| i)
                .collect();
            if let [only] = entities[..] {
                out.set_status(only, Status::Selected);
            }
        }
        Ok(out)
    }
}

/// Selector served over the adapter protocol (`classify`), one request per
/// proposition; entries labelled 1 are kept.
pub struct ExternalSelector {
    client: Arc<AdapterClient>,
}

impl ExternalSelector {
    pub fn new(client: Arc<AdapterClient>) -> Self {
        Self { client }
    }
}

impl Selector for ExternalSelector {
    fn select(&self, cg: &CommonGround, request: &SelectRequest<'_>) -> Result<CommonGround> {
        let digest = render_propositions(cg.full());
        let mut out = cg.clone();
        for (i, e) in cg.entries().iter().enumerate() {
            let result: ClassifyResult = self.client.invoke(
                Task::Classify,
                &ClassifyPayload {
                    proposition: e.proposition.surface.clone(),
                    question: request.question.to_string(),
                    context_digest: digest.clone(),
                },
            )?;
            out.set_status(i, if result.label == 1 { Status::Selected } else { Status::Retained });
        }
        Ok(out)
    }
}

/// Snapshot of both CG views after a turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepViews {
    pub full: CommonGround,
    pub selected: CommonGround,
}

/// One live conversation. Single writer; clone the views to share them.
pub struct CgSession {
    conversation_id: Option<String>,
    doc: Option<DocumentContext>,
    history: Vec<Exchange>,
    cg: CommonGround,
    generator: Arc<dyn Generator>,
    selector: Arc<dyn Selector>,
    config: GeneratorConfig,
    pending_question: Option<String>,
}

impl CgSession {
    pub fn new(
        doc: Option<DocumentContext>,
        generator: Arc<dyn Generator>,
        selector: Arc<dyn Selector>,
        config: GeneratorConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            conversation_id: None,
            doc,
            history: Vec::new(),
            cg: CommonGround::new(),
            generator,
            selector,
            config,
            pending_question: None,
        })
    }

    /// Binds the session to a dataset conversation so oracle backends can
    /// find its gold data.
    pub fn with_conversation_id(mut self, id: impl Into<String>) -> Self {
        self.conversation_id = Some(id.into());
        self
    }

    pub fn turn(&self) -> usize {
        self.history.len()
    }

    pub fn cg(&self) -> &CommonGround {
        &self.cg
    }

    pub fn history(&self) -> &[Exchange] {
        &self.history
    }

    pub fn doc(&self) -> Option<&DocumentContext> {
        self.doc.as_ref()
    }

    /// Context for a question at the current turn.
    pub fn context_for(&self, question: &str) -> ConversationContext {
        ConversationContext {
            doc: self.doc.clone(),
            history: self.history.clone(),
            current_question: question.to_string(),
        }
    }

    /// Runs a full turn: generate, merge, select, obtain the answer from
    /// `answer`, then append the exchange to the history. On error the
    /// session is left as it was before the call.
    pub fn step<F>(&mut self, question: &str, answer: F) -> Result<StepViews>
    where
        F: FnOnce(&StepViews) -> Result<String>,
    {
        let before = self.cg.clone();
        let views = self.observe(question)?;
        match answer(&views) {
            Ok(a) => {
                self.record_answer(a)?;
                Ok(views)
            }
            Err(e) => {
                self.cg = before;
                self.pending_question = None;
                Err(e)
            }
        }
    }

    /// First half of [`CgSession::step`]: updates the CG for `question`.
    pub fn observe(&mut self, question: &str) -> Result<StepViews> {
        if self.pending_question.is_some() {
            return Err(Error::argument("previous question has no answer yet"));
        }
        let turn = self.turn();
        let key = self.conversation_id.as_ref().map(|id| TurnKey::new(id, turn));
        let mut ctx = self.context_for(question);
        if !self.config.include_current_question {
            ctx.current_question.clear();
        }
        let generated = self.generator.generate(&GenerateRequest {
            context: &ctx,
            config: &self.config,
            key: key.as_ref(),
        })?;
        let mut cg = self.cg.clone();
        for p in generated {
            cg.insert(Proposition { origin_turn: turn, ..p });
        }
        let selected = self.selector.select(
            &cg,
            &SelectRequest {
                question,
                key: key.as_ref(),
            },
        )?;
        if selected.normalized_set() != cg.normalized_set() || selected.len() != cg.len() {
            return Err(Error::integrity("selector changed CG membership"));
        }
        self.cg = selected;
        self.pending_question = Some(question.to_string());
        Ok(self.views())
    }

    /// Second half of [`CgSession::step`].
    pub fn record_answer(&mut self, answer: impl Into<String>) -> Result<()> {
        let question = self
            .pending_question
            .take()
            .ok_or_else(|| Error::argument("no question awaiting an answer"))?;
        self.history.push(Exchange::new(question, answer));
        Ok(())
    }

    pub fn views(&self) -> StepViews {
        StepViews {
            full: self.cg.clone(),
            selected: self.cg.selected_view(),
        }
    }
}

impl CommonGround {
    pub(crate) fn extend<I: IntoIterator<Item = Proposition>>(&mut self, props: I) {
        for p in props {
            self.insert(p);
        }
    }

    pub(crate) fn into_propositions(self) -> Vec<Proposition> {
        self.full().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::ReferenceAnnotator;
    use crate::model::Turn;

    fn annotator() -> Arc<dyn Annotator> {
        Arc::new(ReferenceAnnotator::default())
    }

    fn surfaces<'a>(props: impl IntoIterator<Item = &'a Proposition>) -> Vec<String> {
        props.into_iter().map(|p| p.surface.clone()).collect()
    }

    fn rick_barry_ctx() -> ConversationContext {
        ConversationContext {
            doc: None,
            history: vec![Exchange::new(
                "who led the ABA in free-throw percentage in the 1968–69 season?",
                "Rick Barry",
            )],
            current_question: "where did he come from?".into(),
        }
    }

    #[test]
    fn rule_generator_resolves_pronoun_to_last_answer_entity() {
        let gen = RuleGenerator::new(annotator());
        let ctx = rick_barry_ctx();
        let config = GeneratorConfig::default();
        let with_q = gen
            .generate(&GenerateRequest { context: &ctx, config: &config, key: None })
            .unwrap();
        assert_eq!(surfaces(&with_q), ["Rick Barry"]);
    }

    #[test]
    fn without_question_returns_strict_superset() {
        let gen = RuleGenerator::new(annotator());
        let ctx = rick_barry_ctx();
        let with_q = gen
            .generate(&GenerateRequest { context: &ctx, config: &GeneratorConfig::default(), key: None })
            .unwrap();
        let no_q_config = GeneratorConfig {
            include_current_question: false,
            ..GeneratorConfig::default()
        };
        let without = gen
            .generate(&GenerateRequest { context: &ctx, config: &no_q_config, key: None })
            .unwrap();
        assert_eq!(
            surfaces(&without),
            ["the ABA", "free-throw percentage", "the 1968–69 season", "Rick Barry"]
        );
        let w: HashSet<_> = without.iter().collect();
        assert!(with_q.iter().all(|p| w.contains(p)));
        assert!(without.len() > with_q.len());
    }

    #[test]
    fn empty_source_config_is_rejected() {
        let config = GeneratorConfig { doc: false, conv: false, include_current_question: true };
        assert!(config.validate().is_err());
        assert!(CgSession::new(None, Arc::new(OracleGenerator::default()), Arc::new(RuleSelector::new(annotator())), config).is_err());
    }

    #[test]
    fn doc_feeds_first_turn_only() {
        let gen = RuleGenerator::new(annotator());
        let mut ctx = ConversationContext::new(
            Some(DocumentContext::new("Albert Camus", "Albert Camus was a French philosopher.")),
            "When was he born?",
        );
        let config = GeneratorConfig::default();
        let t0 = gen.generate(&GenerateRequest { context: &ctx, config: &config, key: None }).unwrap();
        assert!(surfaces(&t0).contains(&"Albert Camus".to_string()));
        ctx.history.push(Exchange::new("When was he born?", "1913"));
        ctx.current_question = "What did he write?".into();
        let t1 = gen.generate(&GenerateRequest { context: &ctx, config: &config, key: None }).unwrap();
        assert!(!surfaces(&t1).contains(&"Albert Camus".to_string()));
        let conv_only = GeneratorConfig { doc: false, ..config };
        ctx.history.clear();
        ctx.current_question = "When was he born?".into();
        let t0 = gen.generate(&GenerateRequest { context: &ctx, config: &conv_only, key: None }).unwrap();
        assert!(t0.is_empty());
    }

    fn salary_cg() -> CommonGround {
        CommonGround::from_propositions([
            Proposition::new("the average starting salary", 0),
            Proposition::new("a physician assistant", 0),
            Proposition::new("the UK", 0),
            Proposition::new("the US", 1).with_entity(true),
        ])
    }

    #[test]
    fn oracle_selector_keeps_answer_mentions() {
        let mut t = Turn::new("s", 1, "What about in the US?");
        t.answer = Some("The average starting salary for a physician assistant in the US is $95,000.".into());
        let conv = Conversation { conversation_id: "s".into(), doc: None, turns: vec![Turn::new("s", 0, "x"), t] };
        let sel = OracleSelector::from_conversations(&[conv]);
        let key = TurnKey::new("s", 1);
        let out = sel
            .select(&salary_cg(), &SelectRequest { question: "What about in the US?", key: Some(&key) })
            .unwrap();
        let mut selected = surfaces(out.selected());
        selected.sort();
        assert_eq!(selected, ["a physician assistant", "the US", "the average starting salary"]);
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn rule_selector_basics() {
        let sel = RuleSelector::new(annotator());
        let empty = sel.select(&CommonGround::new(), &SelectRequest { question: "anything?", key: None }).unwrap();
        assert!(empty.is_empty());
        let cg = salary_cg();
        let out = sel.select(&cg, &SelectRequest { question: "the UK", key: None }).unwrap();
        assert!(out.selected_set().contains("the uk"));
        let again = sel.select(&out, &SelectRequest { question: "the UK", key: None }).unwrap();
        assert_eq!(out, again);
        assert!((sel.overlap("the US", "What about in the US?").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rule_selector_anaphora_fallback_needs_unique_entity() {
        let sel = RuleSelector::new(annotator());
        let cg = CommonGround::from_propositions([
            Proposition::new("Messi", 0).with_entity(true),
            Proposition::new("position", 1),
        ]);
        let out = sel.select(&cg, &SelectRequest { question: "which position does he play?", key: None }).unwrap();
        assert_eq!(out.selected_set().len(), 2);
        let mut two = cg.clone();
        two.insert(Proposition::new("Ronaldo", 1).with_entity(true));
        let out = sel.select(&two, &SelectRequest { question: "how old is he?", key: None }).unwrap();
        assert!(out.selected_set().is_empty());
    }

    #[test]
    fn session_step_accumulates_and_appends_history() {
        let mut s = CgSession::new(
            None,
            Arc::new(RuleGenerator::new(annotator())),
            Arc::new(RuleSelector::new(annotator())),
            GeneratorConfig::default(),
        )
        .unwrap();
        let v1 = s.step("how old is Messi?", |_| Ok("36 years".into())).unwrap();
        assert_eq!(surfaces(v1.selected.full()), ["Messi"]);
        let v2 = s.step("which position does he play?", |_| Ok("a forward".into())).unwrap();
        assert_eq!(surfaces(v2.full.full()), ["Messi", "position"]);
        assert_eq!(v2.selected.len(), 2);
        assert_eq!(s.history().len(), 2);
        assert!(v1.full.normalized_set().is_subset(&v2.full.normalized_set()));
    }

    #[test]
    fn failed_answer_leaves_session_unchanged() {
        let mut s = CgSession::new(
            None,
            Arc::new(RuleGenerator::new(annotator())),
            Arc::new(RuleSelector::new(annotator())),
            GeneratorConfig::default(),
        )
        .unwrap();
        let err = s.step("how old is Messi?", |_| Err(Error::argument("reader down")));
        assert!(err.is_err());
        assert!(s.cg().is_empty());
        assert_eq!(s.turn(), 0);
        s.step("how old is Messi?", |_| Ok("36".into())).unwrap();
        assert_eq!(s.turn(), 1);
    }

    #[test]
    fn oracle_needs_dataset_key() {
        let mut s = CgSession::new(
            None,
            Arc::new(OracleGenerator::default()),
            Arc::new(OracleSelector::default()),
            GeneratorConfig::default(),
        )
        .unwrap();
        assert!(matches!(s.observe("q").unwrap_err(), Error::Config(_)));
    }
}
