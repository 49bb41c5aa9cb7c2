//! Query formulations: what the retriever and the reader see for a turn.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterClient, RewritePayload, RewriteResult, SummarizePayload, SummarizeResult, Task};
use crate::engine::TurnKey;
use crate::error::{Error, Result};
use crate::gold::{gold_cg_full, render_propositions};
use crate::model::{render_concatenation, CommonGround, Conversation, ConversationContext, DocumentContext, Exchange, Proposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    Original,
    Concat,
    Rewrite,
    Summary,
    Cg,
    CgFull,
    CgFullCg,
    RewriteG,
    CgG,
}

impl Setup {
    pub const ALL: [Setup; 9] = [
        Setup::Original,
        Setup::Concat,
        Setup::Rewrite,
        Setup::Summary,
        Setup::Cg,
        Setup::CgFull,
        Setup::CgFullCg,
        Setup::RewriteG,
        Setup::CgG,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Setup::Original => "original",
            Setup::Concat => "concat",
            Setup::Rewrite => "rewrite",
            Setup::Summary => "summary",
            Setup::Cg => "cg",
            Setup::CgFull => "cg_full",
            Setup::CgFullCg => "cg_full_cg",
            Setup::RewriteG => "rewrite_g",
            Setup::CgG => "cg_g",
        }
    }

    /// Needs a live CG session.
    pub fn uses_cg(self) -> bool {
        matches!(self, Setup::Cg | Setup::CgFull | Setup::CgFullCg)
    }

    /// Table row label.
    pub fn label(self) -> &'static str {
        match self {
            Setup::Original => "original",
            Setup::Concat => "concat.",
            Setup::Rewrite => "rewrite",
            Setup::Summary => "summary",
            Setup::Cg => "CG",
            Setup::CgFull => "CG-full",
            Setup::CgFullCg => "CG-full/CG",
            Setup::RewriteG => "rewrite-g",
            Setup::CgG => "CG-g",
        }
    }

    pub fn parse_list(list: &str) -> Result<Vec<Setup>> {
        list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setup::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::argument(format!("unknown setup {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryFormulation {
    pub setup: Setup,
    pub retriever_query: String,
    pub reader_query: String,
}

pub trait Rewriter: Send + Sync {
    fn rewrite(&self, ctx: &ConversationContext, key: Option<&TurnKey>) -> Result<String>;
}

pub trait Summarizer: Send + Sync {
    fn summarize(&self, doc: Option<&DocumentContext>, history: &[Exchange]) -> Result<String>;

    /// False for stand-ins whose output is not comparable to a trained model.
    fn comparable(&self) -> bool {
        true
    }
}

pub struct ExternalRewriter {
    client: Arc<AdapterClient>,
}

impl ExternalRewriter {
    pub fn new(client: Arc<AdapterClient>) -> Self {
        Self { client }
    }
}

impl Rewriter for ExternalRewriter {
    fn rewrite(&self, ctx: &ConversationContext, _key: Option<&TurnKey>) -> Result<String> {
        let r: RewriteResult = self.client.invoke(
            Task::Rewrite,
            &RewritePayload {
                doc: ctx.doc.clone(),
                history: ctx.history.clone(),
                question: ctx.current_question.clone(),
            },
        )?;
        Ok(r.rewrite)
    }
}

pub struct ExternalSummarizer {
    client: Arc<AdapterClient>,
}

impl ExternalSummarizer {
    pub fn new(client: Arc<AdapterClient>) -> Self {
        Self { client }
    }
}

impl Summarizer for ExternalSummarizer {
    fn summarize(&self, doc: Option<&DocumentContext>, history: &[Exchange]) -> Result<String> {
        let r: SummarizeResult = self.client.invoke(
            Task::Summarize,
            &SummarizePayload {
                doc: doc.cloned(),
                history: history.to_vec(),
            },
        )?;
        Ok(r.summary)
    }
}

/// Offline stand-in: the document's first sentence and the last answer.
/// Results from it are not comparable with a trained summarizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct FallbackSummarizer;

impl Summarizer for FallbackSummarizer {
    fn summarize(&self, doc: Option<&DocumentContext>, history: &[Exchange]) -> Result<String> {
        let parts: Vec<&str> = doc
            .map(|d| d.first_sentence.as_str())
            .into_iter()
            .chain(history.last().map(|e| e.answer.as_str()))
            .filter(|s| !s.is_empty())
            .collect();
        Ok(parts.join(" "))
    }

    fn comparable(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
struct GoldTurn {
    rewrite: String,
    cg: Vec<Proposition>,
    cg_full: CommonGround,
}

/// Gold rewrites and gold CGs of a dataset, keyed by turn.
#[derive(Debug, Clone, Default)]
pub struct GoldOracle {
    turns: HashMap<TurnKey, GoldTurn>,
}

impl GoldOracle {
    pub fn from_conversations(conversations: &[Conversation]) -> Self {
        let mut turns = HashMap::new();
        for c in conversations {
            for (t, full) in c.turns.iter().zip(gold_cg_full(c)) {
                turns.insert(
                    TurnKey::new(&c.conversation_id, t.turn_no),
                    GoldTurn {
                        rewrite: t.rewrite_or_question().to_string(),
                        cg: t.gold_cg.clone().unwrap_or_default(),
                        cg_full: full,
                    },
                );
            }
        }
        Self { turns }
    }

    fn get(&self, key: Option<&TurnKey>) -> Result<&GoldTurn> {
        let key = key.ok_or_else(|| Error::config("gold oracle needs a dataset turn"))?;
        self.turns.get(key).ok_or_else(|| {
            Error::config(format!(
                "no gold data for conversation {} turn {}",
                key.conversation_id, key.turn_no
            ))
        })
    }
}

impl Rewriter for GoldOracle {
    fn rewrite(&self, _ctx: &ConversationContext, key: Option<&TurnKey>) -> Result<String> {
        Ok(self.get(key)?.rewrite.clone())
    }
}

pub const DEFAULT_READER_BUDGET: usize = 384;

/// Backing services for the setups that need a model or gold data, plus
/// the reader input budget in whitespace tokens.
#[derive(Clone)]
pub struct Services {
    pub rewriter: Option<Arc<dyn Rewriter>>,
    pub summarizer: Option<Arc<dyn Summarizer>>,
    pub gold: Option<Arc<GoldOracle>>,
    pub reader_budget: usize,
}

impl Default for Services {
    fn default() -> Self {
        Self {
            rewriter: None,
            summarizer: None,
            gold: None,
            reader_budget: DEFAULT_READER_BUDGET,
        }
    }
}

impl Services {
    /// Configuration error if `setup` cannot run with these services.
    pub fn check(&self, setup: Setup) -> Result<()> {
        let missing = match setup {
            Setup::Rewrite if self.rewriter.is_none() => Some("rewriter"),
            Setup::Summary if self.summarizer.is_none() => Some("summarizer"),
            Setup::RewriteG | Setup::CgG if self.gold.is_none() => Some("gold data"),
            _ => None,
        };
        match missing {
            Some(what) => Err(Error::config(format!("setup {setup} needs a {what}"))),
            None => Ok(()),
        }
    }
}

/// Keeps the last `budget` whitespace tokens.
pub fn truncate_left(text: &str, budget: usize) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() <= budget {
        return text.to_string();
    }
    tokens[tokens.len() - budget..].join(" ")
}

/// `p1, p2, … ||| question`
pub fn render_cg<'a, I: IntoIterator<Item = &'a Proposition>>(props: I, question: &str) -> String {
    render_concatenation(&[render_propositions(props), question.to_string()])
}

pub fn formulate(
    setup: Setup,
    ctx: &ConversationContext,
    cg: &CommonGround,
    services: &Services,
    key: Option<&TurnKey>,
) -> Result<QueryFormulation> {
    services.check(setup)?;
    let q = ctx.current_question.as_str();
    let (retriever_query, reader_query) = match setup {
        Setup::Original => (q.to_string(), q.to_string()),
        Setup::Concat => {
            let last = ctx
                .last_exchange()
                .map(|e| render_concatenation(&[e.question.as_str(), e.answer.as_str()]))
                .unwrap_or_default();
            let s = render_concatenation(&[ctx.render_doc(), last, q.to_string()]);
            (s.clone(), s)
        }
        Setup::Rewrite => {
            let r = services.rewriter.as_ref().expect("checked").rewrite(ctx, key)?;
            (r.clone(), r)
        }
        Setup::RewriteG => {
            let r = services.gold.as_ref().expect("checked").rewrite(ctx, key)?;
            (r.clone(), r)
        }
        Setup::Summary => {
            let summ = services
                .summarizer
                .as_ref()
                .expect("checked")
                .summarize(ctx.doc.as_ref(), &ctx.history)?;
            let s = render_concatenation(&[summ.as_str(), q]);
            (s.clone(), s)
        }
        Setup::Cg => {
            let s = render_cg(cg.selected(), q);
            (s.clone(), s)
        }
        Setup::CgFull => {
            let s = render_cg(cg.full(), q);
            (s.clone(), s)
        }
        Setup::CgFullCg => (render_cg(cg.full(), q), render_cg(cg.selected(), q)),
        Setup::CgG => {
            let g = services.gold.as_ref().expect("checked").get(key)?;
            (render_cg(g.cg_full.full(), q), render_cg(&g.cg, q))
        }
    };
    Ok(QueryFormulation {
        setup,
        retriever_query,
        reader_query: truncate_left(&reader_query, services.reader_budget),
    })
}
