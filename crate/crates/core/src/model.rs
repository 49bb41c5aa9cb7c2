//! Shared domain types and the canonical JSON-lines dataset format.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separator placed between concatenated context parts.
pub const SEPARATOR: &str = " ||| ";

/// Joins context parts with [`SEPARATOR`]. Empty parts keep their slot.
pub fn render_concatenation<S: AsRef<str>>(parts: &[S]) -> String {
    let mut out = String::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            out.push_str(SEPARATOR);
        }
        out.push_str(part.as_ref());
    }
    out
}

/// Casefold, trim and collapse internal whitespace.
pub fn normalize_surface(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentContext {
    pub title: String,
    pub first_sentence: String,
}

impl DocumentContext {
    pub fn new(title: impl Into<String>, first_sentence: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            first_sentence: first_sentence.into(),
        }
    }

    pub fn render(&self) -> String {
        render_concatenation(&[self.title.as_str(), self.first_sentence.as_str()])
    }
}

/// One unit of common-ground information.
///
/// Two propositions are equal when their normalized forms are equal; the
/// origin turn and entity flag do not take part in comparisons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Proposition {
    pub surface: String,
    pub normalized: String,
    pub origin_turn: usize,
    /// True when the span carries a named-entity mention.
    #[serde(default)]
    pub entity: bool,
}

impl Proposition {
    /// Panics if `surface` is blank; use [`Proposition::try_new`] for untrusted input.
    pub fn new(surface: impl Into<String>, origin_turn: usize) -> Self {
        Self::try_new(surface, origin_turn).expect("proposition surface must be non-empty")
    }

    pub fn try_new(surface: impl Into<String>, origin_turn: usize) -> Result<Self> {
        let surface = surface.into();
        let normalized = normalize_surface(&surface);
        if normalized.is_empty() {
            return Err(Error::argument("proposition surface is empty"));
        }
        Ok(Self {
            surface,
            normalized,
            origin_turn,
            entity: false,
        })
    }

    pub fn with_entity(mut self, entity: bool) -> Self {
        self.entity = entity;
        self
    }
}

impl PartialEq for Proposition {
    fn eq(&self, other: &Self) -> bool {
        self.normalized == other.normalized
    }
}

impl Eq for Proposition {}

impl std::hash::Hash for Proposition {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.normalized.hash(state);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Selected,
    Retained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgEntry {
    pub proposition: Proposition,
    pub status: Status,
}

/// Ordered, deduplicated accumulation of propositions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "CgRepr")]
pub struct CommonGround {
    entries: Vec<CgEntry>,
    #[serde(skip)]
    seen: HashSet<String>,
}

impl CommonGround {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a CG from propositions in order, dropping duplicates.
    pub fn from_propositions<I: IntoIterator<Item = Proposition>>(props: I) -> Self {
        let mut cg = Self::new();
        for p in props {
            cg.insert(p);
        }
        cg
    }

    /// Adds a proposition with status `retained`. Returns false (and leaves the
    /// CG untouched) when its normalized form is already present.
    pub fn insert(&mut self, proposition: Proposition) -> bool {
        if self.seen.contains(&proposition.normalized) {
            return false;
        }
        self.seen.insert(proposition.normalized.clone());
        let pos = self
            .entries
            .iter()
            .rposition(|e| e.proposition.origin_turn <= proposition.origin_turn)
            .map_or(0, |i| i + 1);
        self.entries.insert(
            pos,
            CgEntry {
                proposition,
                status: Status::Retained,
            },
        );
        true
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.seen.contains(normalized)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CgEntry] {
        &self.entries
    }

    pub fn full(&self) -> impl Iterator<Item = &Proposition> {
        self.entries.iter().map(|e| &e.proposition)
    }

    pub fn selected(&self) -> impl Iterator<Item = &Proposition> {
        self.entries
            .iter()
            .filter(|e| e.status == Status::Selected)
            .map(|e| &e.proposition)
    }

    pub fn set_status(&mut self, index: usize, status: Status) {
        self.entries[index].status = status;
    }

    pub fn set_all(&mut self, status: Status) {
        for e in &mut self.entries {
            e.status = status;
        }
    }

    /// Normalized forms of the full view.
    pub fn normalized_set(&self) -> HashSet<String> {
        self.seen.clone()
    }

    /// Normalized forms of the selected view.
    pub fn selected_set(&self) -> HashSet<String> {
        self.selected().map(|p| p.normalized.clone()).collect()
    }

    /// A CG holding only the selected entries (all marked selected).
    pub fn selected_view(&self) -> CommonGround {
        let mut cg = CommonGround::from_propositions(self.selected().cloned());
        cg.set_all(Status::Selected);
        cg
    }
}

#[derive(Deserialize)]
struct CgRepr {
    entries: Vec<CgEntry>,
}

impl From<CgRepr> for CommonGround {
    fn from(repr: CgRepr) -> Self {
        let mut cg = CommonGround::new();
        for entry in repr.entries {
            let key = entry.proposition.normalized.clone();
            if cg.insert(entry.proposition) {
                if let Some(e) = cg.entries.iter_mut().find(|e| e.proposition.normalized == key) {
                    e.status = entry.status;
                }
            }
        }
        cg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub conversation_id: String,
    pub turn_no: usize,
    pub question: String,
    pub rewrite: Option<String>,
    pub answer: Option<String>,
    pub answer_source: Option<String>,
    pub gold_cg: Option<Vec<Proposition>>,
}

impl Turn {
    pub fn new(conversation_id: impl Into<String>, turn_no: usize, question: impl Into<String>) -> Self {
        Self {
            conversation_id: conversation_id.into(),
            turn_no,
            question: question.into(),
            rewrite: None,
            answer: None,
            answer_source: None,
            gold_cg: None,
        }
    }

    /// The rewrite, falling back to the question for self-contained turns.
    pub fn rewrite_or_question(&self) -> &str {
        self.rewrite.as_deref().unwrap_or(&self.question)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub conversation_id: String,
    pub doc: Option<DocumentContext>,
    pub turns: Vec<Turn>,
}

impl Conversation {
    /// Context seen at turn `n`, with gold answers as history.
    pub fn context_at(&self, n: usize) -> ConversationContext {
        let history = self.turns[..n]
            .iter()
            .map(|t| Exchange::new(t.question.clone(), t.answer.clone().unwrap_or_default()))
            .collect();
        ConversationContext {
            doc: self.doc.clone(),
            history,
            current_question: self.turns[n].question.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub question: String,
    pub answer: String,
}

impl Exchange {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            answer: answer.into(),
        }
    }
}

/// Everything a formulation may look at for turn `n`: `doc`, the history
/// `conv[0:n-1]` and the current question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationContext {
    pub doc: Option<DocumentContext>,
    pub history: Vec<Exchange>,
    pub current_question: String,
}

impl ConversationContext {
    pub fn new(doc: Option<DocumentContext>, current_question: impl Into<String>) -> Self {
        Self {
            doc,
            history: Vec::new(),
            current_question: current_question.into(),
        }
    }

    /// Current turn index.
    pub fn turn(&self) -> usize {
        self.history.len()
    }

    pub fn last_exchange(&self) -> Option<&Exchange> {
        self.history.last()
    }

    pub fn render_doc(&self) -> String {
        self.doc.as_ref().map(DocumentContext::render).unwrap_or_default()
    }

    /// `conv[0:n-1]` as one string.
    pub fn render_history(&self) -> String {
        let parts: Vec<&str> = self
            .history
            .iter()
            .flat_map(|e| [e.question.as_str(), e.answer.as_str()])
            .collect();
        render_concatenation(&parts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
}

impl Passage {
    pub fn new(passage_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            passage_id: passage_id.into(),
            text: text.into(),
            source_url: None,
        }
    }
}

/// One line of the canonical dataset file. Field order is alphabetical so
/// serialization is key-sorted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer_source: Option<String>,
    conversation_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    doc_first_sentence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    doc_title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_cg: Option<Vec<String>>,
    question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rewrite: Option<String>,
    turn_no: usize,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Conversation>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), path)
}

/// Parses canonical JSON-lines. `origin` is only used in error messages.
pub fn read_dataset<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<Conversation>> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<(usize, TurnRecord)>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TurnRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let bucket = grouped.entry(record.conversation_id.clone()).or_insert_with(|| {
            order.push(record.conversation_id.clone());
            Vec::new()
        });
        bucket.push((i + 1, record));
    }

    let mut conversations = Vec::with_capacity(order.len());
    for id in order {
        let mut records = grouped.remove(&id).unwrap_or_default();
        records.sort_by_key(|(_, r)| r.turn_no);
        // 1-based external numbering is shifted to 0-based
        let base = records.first().map_or(0, |(_, r)| r.turn_no.min(1));
        let mut doc: Option<Option<DocumentContext>> = None;
        let mut turns = Vec::with_capacity(records.len());
        for (expected, (line, r)) in records.into_iter().enumerate() {
            let turn_no = r.turn_no - base;
            if turn_no < expected {
                return Err(Error::integrity(format!(
                    "line {line}: duplicate turn {} in conversation {id}",
                    r.turn_no
                )));
            }
            if turn_no != expected {
                return Err(Error::integrity(format!(
                    "line {line}: non-consecutive turn {} in conversation {id}",
                    r.turn_no
                )));
            }
            let this_doc = match (r.doc_title, r.doc_first_sentence) {
                (None, None) => None,
                (title, first) => Some(DocumentContext::new(
                    title.unwrap_or_default(),
                    first.unwrap_or_default(),
                )),
            };
            match &doc {
                None => doc = Some(this_doc),
                Some(d) if *d != this_doc => {
                    return Err(Error::integrity(format!(
                        "line {line}: document context differs across turns of conversation {id}"
                    )))
                }
                Some(_) => {}
            }
            let gold_cg = r.gold_cg.map(|props| {
                props
                    .into_iter()
                    .filter_map(|s| Proposition::try_new(s, turn_no).ok())
                    .map(|p| {
                        let entity = crate::annotate::fragment_has_entity(&p.surface);
                        p.with_entity(entity)
                    })
                    .collect()
            });
            turns.push(Turn {
                conversation_id: id.clone(),
                turn_no,
                question: r.question,
                rewrite: r.rewrite,
                answer: r.answer,
                answer_source: r.answer_source,
                gold_cg,
            });
        }
        conversations.push(Conversation {
            conversation_id: id,
            doc: doc.flatten(),
            turns,
        });
    }
    Ok(conversations)
}

pub fn save_dataset(path: impl AsRef<Path>, conversations: &[Conversation]) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_dataset(&mut out, conversations)?;
    out.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(out: &mut W, conversations: &[Conversation]) -> Result<()> {
    for conv in conversations {
        for t in &conv.turns {
            let record = TurnRecord {
                answer: t.answer.clone(),
                answer_source: t.answer_source.clone(),
                conversation_id: conv.conversation_id.clone(),
                doc_first_sentence: conv.doc.as_ref().map(|d| d.first_sentence.clone()),
                doc_title: conv.doc.as_ref().map(|d| d.title.clone()),
                gold_cg: t
                    .gold_cg
                    .as_ref()
                    .map(|g| g.iter().map(|p| p.surface.clone()).collect()),
                question: t.question.clone(),
                rewrite: t.rewrite.clone(),
                turn_no: t.turn_no,
            };
            serde_json::to_writer(&mut *out, &record)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Reads any JSON-lines file of `T`, naming the failing line on error.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(items)
}

/// Writes one key-sorted JSON value per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for item in items {
        let value = serde_json::to_value(item)?;
        serde_json::to_writer(&mut out, &value)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_passages(path: impl AsRef<Path>) -> Result<Vec<Passage>> {
    let passages: Vec<Passage> = read_jsonl(path)?;
    let mut ids = HashSet::new();
    for p in &passages {
        if !ids.insert(p.passage_id.as_str()) {
            return Err(Error::integrity(format!("duplicate passage_id {}", p.passage_id)));
        }
    }
    Ok(passages)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<Conversation>> {
        read_dataset(text.as_bytes(), Path::new("mem.jsonl"))
    }

    #[test]
    fn concatenation_uses_fixed_separator() {
        assert_eq!(render_concatenation(&["A", "B"]), "A ||| B");
        assert_eq!(render_concatenation(&["q only"]), "q only");
        assert_eq!(render_concatenation(&["", "q"]), " ||| q");
    }

    #[test]
    fn normalization_casefolds_and_collapses() {
        assert_eq!(normalize_surface("  The   UK "), "the uk");
        let p = Proposition::new("Gila  River", 0);
        assert_eq!(p, Proposition::new("gila river", 3));
    }

    #[test]
    fn duplicate_insert_keeps_first_origin() {
        let mut cg = CommonGround::new();
        assert!(cg.insert(Proposition::new("Messi", 0)));
        assert!(cg.insert(Proposition::new("position", 1)));
        assert!(!cg.insert(Proposition::new("messi", 1)));
        assert_eq!(cg.len(), 2);
        assert_eq!(cg.entries()[0].proposition.origin_turn, 0);
        assert_eq!(cg.entries()[0].proposition.surface, "Messi");
    }

    #[test]
    fn insertion_keeps_origin_order() {
        let mut cg = CommonGround::new();
        cg.insert(Proposition::new("b", 2));
        cg.insert(Proposition::new("a", 1));
        cg.insert(Proposition::new("c", 2));
        let order: Vec<_> = cg.full().map(|p| p.surface.as_str()).collect();
        assert_eq!(order, ["a", "b", "c"]);
    }

    #[test]
    fn selected_view_is_filtered() {
        let mut cg = CommonGround::from_propositions([
            Proposition::new("the UK", 0),
            Proposition::new("the US", 1),
        ]);
        cg.set_status(1, Status::Selected);
        let sel: Vec<_> = cg.selected().map(|p| p.surface.as_str()).collect();
        assert_eq!(sel, ["the US"]);
        assert_eq!(cg.full().count(), 2);
    }

    #[test]
    fn groups_and_orders_turns() {
        let text = r#"{"conversation_id":"b","question":"q1","turn_no":1}
{"conversation_id":"a","question":"x0","turn_no":0}
{"conversation_id":"b","question":"q0","turn_no":0}
{"conversation_id":"a","question":"x1","turn_no":1}
{"conversation_id":"b","question":"q2","turn_no":2}
{"conversation_id":"a","question":"x2","turn_no":2}
"#;
        let convs = parse(text).unwrap();
        assert_eq!(convs.len(), 2);
        assert_eq!(convs[0].conversation_id, "b");
        let qs: Vec<_> = convs[0].turns.iter().map(|t| t.question.as_str()).collect();
        assert_eq!(qs, ["q0", "q1", "q2"]);
        assert_eq!(convs[1].turns.len(), 3);
    }

    #[test]
    fn gap_in_turns_is_integrity_error() {
        let text = r#"{"conversation_id":"a","question":"x","turn_no":0}
{"conversation_id":"a","question":"y","turn_no":2}
"#;
        let err = parse(text).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
        assert!(err.to_string().contains("non-consecutive turn"));
    }

    #[test]
    fn duplicate_turn_is_integrity_error() {
        let text = r#"{"conversation_id":"a","question":"x","turn_no":0}
{"conversation_id":"a","question":"y","turn_no":0}
"#;
        assert!(parse(text).unwrap_err().to_string().contains("duplicate turn"));
    }

    #[test]
    fn malformed_line_names_line() {
        let text = "{\"conversation_id\":\"a\",\"question\":\"x\",\"turn_no\":0}\n{oops\n";
        match parse(text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse("").unwrap().is_empty());
    }

    #[test]
    fn one_based_numbering_is_shifted() {
        let text = r#"{"conversation_id":"a","question":"x","turn_no":1}
{"conversation_id":"a","question":"y","turn_no":2}
"#;
        let convs = parse(text).unwrap();
        assert_eq!(convs[0].turns[0].turn_no, 0);
        assert_eq!(convs[0].turns[1].turn_no, 1);
    }

    #[test]
    fn inconsistent_doc_rejected() {
        let text = r#"{"conversation_id":"a","doc_title":"A","question":"x","turn_no":0}
{"conversation_id":"a","doc_title":"B","question":"y","turn_no":1}
"#;
        assert!(matches!(parse(text).unwrap_err(), Error::Integrity(_)));
    }

    #[test]
    fn canonical_file_round_trips() {
        let text = r#"{"answer":"36 years","conversation_id":"m","doc_first_sentence":"Lionel Messi is a footballer.","doc_title":"Lionel Messi","gold_cg":["Messi"],"question":"how old is Messi?","turn_no":0}
{"answer":"a forward","answer_source":"http://x","conversation_id":"m","doc_first_sentence":"Lionel Messi is a footballer.","doc_title":"Lionel Messi","gold_cg":["position","Messi"],"question":"which position does he play?","rewrite":"which position does Messi play?","turn_no":1}
"#;
        let convs = parse(text).unwrap();
        let mut out = Vec::new();
        write_dataset(&mut out, &convs).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn context_history_matches_turn_index() {
        let text = r#"{"answer":"a0","conversation_id":"a","question":"x","turn_no":0}
{"answer":"a1","conversation_id":"a","question":"y","turn_no":1}
"#;
        let convs = parse(text).unwrap();
        let ctx = convs[0].context_at(1);
        assert_eq!(ctx.turn(), 1);
        assert_eq!(ctx.history[0], Exchange::new("x", "a0"));
        assert_eq!(ctx.current_question, "y");
    }
}
