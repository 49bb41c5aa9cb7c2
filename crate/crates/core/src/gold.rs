//! Gold common ground from rewrites, document enrichment, selector training
//! labels and the train/validation split.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::{extract_propositions, Annotator};
use crate::error::{Error, Result};
use crate::model::{read_jsonl, CommonGround, Conversation, DocumentContext, Proposition};

/// Sets each turn's gold CG to the propositions of its rewrite (or of the
/// question when no rewrite is given).
pub fn build_gold_cg(conversation: &Conversation, annotator: &dyn Annotator) -> Result<Conversation> {
    let mut out = conversation.clone();
    for turn in &mut out.turns {
        let sentence = annotator.annotate(turn.rewrite_or_question())?;
        turn.gold_cg = Some(extract_propositions(&sentence, turn.turn_no));
    }
    Ok(out)
}

/// One line of a document-source file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocRecord {
    pub conversation_id: String,
    pub title: String,
    pub first_sentence: String,
}

pub fn load_doc_source(path: impl AsRef<Path>) -> Result<HashMap<String, DocumentContext>> {
    let records: Vec<DocRecord> = read_jsonl(path)?;
    Ok(records
        .into_iter()
        .map(|r| (r.conversation_id, DocumentContext::new(r.title, r.first_sentence)))
        .collect())
}

pub fn enrich_with_doc(conversation: &Conversation, doc_source: &HashMap<String, DocumentContext>) -> Conversation {
    let mut out = conversation.clone();
    if let Some(doc) = doc_source.get(&conversation.conversation_id) {
        out.doc = Some(doc.clone());
    }
    out
}

/// Fraction of turns whose conversation carries a document context.
pub fn doc_coverage(conversations: &[Conversation]) -> f64 {
    let total: usize = conversations.iter().map(|c| c.turns.len()).sum();
    if total == 0 {
        return 0.0;
    }
    let covered: usize = conversations
        .iter()
        .filter(|c| c.doc.is_some())
        .map(|c| c.turns.len())
        .sum();
    covered as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorExample {
    pub proposition: Proposition,
    pub question: String,
    pub context_digest: String,
    pub label: u8,
}

#[derive(Serialize, Deserialize)]
struct SelectorRecord {
    context_digest: String,
    label: u8,
    proposition: String,
    question: String,
}

impl Serialize for SelectorExample {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SelectorRecord {
            context_digest: self.context_digest.clone(),
            label: self.label,
            proposition: self.proposition.surface.clone(),
            question: self.question.clone(),
        }
        .serialize(serializer)
    }
}

/// Lowercased alphanumeric word tokens; every other character separates.
pub fn match_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// True when the proposition's tokens occur contiguously in the answer.
pub fn occurs_in(proposition: &str, answer: &str) -> bool {
    let needle = match_tokens(proposition);
    let hay = match_tokens(answer);
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Comma-joined surfaces in CG order; also the CG rendering used in queries.
pub fn render_propositions<'a, I: IntoIterator<Item = &'a Proposition>>(props: I) -> String {
    props
        .into_iter()
        .map(|p| p.surface.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Gold CG-full at every turn: the running union of per-turn gold CGs.
pub fn gold_cg_full(conversation: &Conversation) -> Vec<CommonGround> {
    let mut cg = CommonGround::new();
    conversation
        .turns
        .iter()
        .map(|turn| {
            for p in turn.gold_cg.iter().flatten() {
                cg.insert(p.clone());
            }
            cg.clone()
        })
        .collect()
}

/// Labels every proposition of CG-full at each turn with whether it occurs
/// in that turn's gold answer. Turns without an answer are skipped.
pub fn build_selector_examples(conversation: &Conversation) -> Vec<SelectorExample> {
    let fulls = gold_cg_full(conversation);
    let mut examples = Vec::new();
    for (turn, full) in conversation.turns.iter().zip(fulls) {
        let Some(answer) = &turn.answer else {
            log::warn!(
                "conversation {} turn {}: no gold answer, skipped",
                conversation.conversation_id,
                turn.turn_no
            );
            continue;
        };
        let digest = render_propositions(full.full());
        for p in full.full() {
            examples.push(SelectorExample {
                proposition: p.clone(),
                question: turn.question.clone(),
                context_digest: digest.clone(),
                label: u8::from(occurs_in(&p.surface, answer)),
            });
        }
    }
    examples
}

/// Conversation-level random split. The validation side gets
/// `round(fraction * N)` conversations, clamped so neither side is empty.
pub fn split_train_validation(
    conversations: &[Conversation],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<Conversation>, Vec<Conversation>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::argument(format!("fraction {fraction} is not in (0, 1)")));
    }
    let n = conversations.len();
    if n < 2 {
        return Err(Error::argument("need at least 2 conversations to split"));
    }
    let n_val = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_val = vec![false; n];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = conversations.iter().cloned().zip(is_val).partition(|(_, v)| *v);
    Ok((
        train.into_iter().map(|(c, _)| c).collect(),
        val.into_iter().map(|(c, _)| c).collect(),
    ))
}
