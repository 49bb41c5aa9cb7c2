//! Span extraction over retrieved passages and retriever/reader score fusion.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterClient, AdapterError, ReadPayload, ReadResult, ReadSpan, Task};
use crate::annotate::Annotator;
use crate::error::{Error, Result};
use crate::model::Passage;
use crate::retrieval::{min_max, Bm25Params, Index, RankedPassage};

/// Extracts answer spans from one passage. Span offsets are in characters.
pub trait Reader: Send + Sync {
    fn read(&self, passage: &Passage, query: &str) -> Result<Vec<ReadSpan>>;
}

/// Substring of `text` between character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut idx = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let s = idx.nth(start)?;
    let e = if end == start { s } else { idx.nth(end - start - 1)? };
    Some(&text[s..e])
}

fn char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// Byte ranges of sentences: a boundary follows `.`, `!` or `?` when the
/// next non-space character is uppercase or a digit.
pub fn split_sentences(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let mut j = k + 1;
        if j >= chars.len() || !chars[j].1.is_whitespace() {
            continue;
        }
        while j < chars.len() && chars[j].1.is_whitespace() {
            j += 1;
        }
        if j < chars.len() && (chars[j].1.is_uppercase() || chars[j].1.is_ascii_digit()) {
            out.push((start, i + c.len_utf8()));
            start = chars[j].0;
        }
    }
    if text[start..].trim().len() > 0 {
        out.push((start, text.trim_end().len()));
    }
    out.into_iter()
        .map(|(s, e)| {
            let lead = text[s..e].len() - text[s..e].trim_start().len();
            (s + lead, e)
        })
        .filter(|(s, e)| s < e)
        .collect()
}

/// Reference reader with no learned parameters.
///
/// Picks the sentence sharing the most content words with the query
/// (earliest on ties), then the noun chunk of that sentence that shares no
/// word with the query and lies closest to the matched words, preferring one
/// that follows them. With no such
/// chunk the whole sentence is the span. `score` is the fraction of query
/// content words found in the sentence.
pub struct LexicalReader {
    annotator: Arc<dyn Annotator>,
}

impl LexicalReader {
    pub fn new(annotator: Arc<dyn Annotator>) -> Self {
        Self { annotator }
    }

    fn query_words(&self, query: &str) -> Result<HashSet<String>> {
        Ok(self
            .annotator
            .annotate(query)?
            .tokens
            .iter()
            .filter(|t| t.is_content() && t.text.chars().any(char::is_alphanumeric))
            .map(|t| t.text.to_lowercase())
            .collect())
    }
}

impl Reader for LexicalReader {
    fn read(&self, passage: &Passage, query: &str) -> Result<Vec<ReadSpan>> {
        let q = self.query_words(query)?;
        if q.is_empty() {
            return Ok(Vec::new());
        }
        let text = passage.text.as_str();
        let mut best: Option<(usize, (usize, usize), crate::annotate::AnnotatedSentence)> = None;
        for (s, e) in split_sentences(text) {
            let sent = self.annotator.annotate(&text[s..e])?;
            let found: HashSet<String> = sent
                .tokens
                .iter()
                .map(|t| t.text.to_lowercase())
                .filter(|w| q.contains(w))
                .collect();
            if found.len() > best.as_ref().map_or(0, |b| b.0) {
                best = Some((found.len(), (s, e), sent));
            }
        }
        let Some((overlap, (s, e), sent)) = best else {
            return Ok(Vec::new());
        };
        let matched: Vec<usize> = sent
            .tokens
            .iter()
            .filter(|t| q.contains(&t.text.to_lowercase()))
            .map(|t| t.index)
            .collect();
        let novel = sent
            .chunks
            .iter()
            .filter(|&&(cs, ce)| sent.tokens[cs..ce].iter().all(|t| !q.contains(&t.text.to_lowercase())))
            .min_by_key(|&&(cs, ce)| {
                matched
                    .iter()
                    .map(|&m| if m < cs { (cs - m, false) } else { (m.saturating_sub(ce - 1), true) })
                    .min()
                    .unwrap_or((usize::MAX, true))
            });
        let (bs, be) = match novel {
            Some(&chunk) => {
                let (a, b) = sent.span_offsets(chunk);
                (s + a, s + b)
            }
            None => (s, e),
        };
        Ok(vec![ReadSpan {
            text: text[bs..be].to_string(),
            start: char_offset(text, bs),
            end: char_offset(text, be),
            score: overlap as f64 / q.len() as f64,
        }])
    }
}

/// Reader served over the adapter protocol (`read`).
pub struct ExternalReader {
    client: Arc<AdapterClient>,
}

impl ExternalReader {
    pub fn new(client: Arc<AdapterClient>) -> Self {
        Self { client }
    }
}

impl Reader for ExternalReader {
    fn read(&self, passage: &Passage, query: &str) -> Result<Vec<ReadSpan>> {
        let result: ReadResult = self.client.invoke(
            Task::Read,
            &ReadPayload {
                passage_id: passage.passage_id.clone(),
                passage: passage.text.clone(),
                query: query.to_string(),
            },
        )?;
        for span in &result.spans {
            if char_slice(&passage.text, span.start, span.end) != Some(span.text.as_str()) {
                return Err(AdapterError::Malformed(format!(
                    "span {:?} at {}..{} is not in passage {}",
                    span.text, span.start, span.end, passage.passage_id
                ))
                .into());
            }
        }
        Ok(result.spans)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerCandidate {
    pub text: String,
    pub passage_id: String,
    pub passage_rank: usize,
    pub start: usize,
    pub end: usize,
    pub s_ret_norm: f64,
    pub s_rea: f64,
    pub s_rea_norm: f64,
    pub fused: f64,
}

/// Blends retriever and reader scores: `(1 − mu)·s_ret + mu·s_rea`, both
/// min-max normalized over the candidates unless `raw`. Sorted by fused
/// score, then passage rank, then span text.
pub fn fuse(candidates: &[(RankedPassage, ReadSpan)], mu: f64, raw: bool) -> Result<Vec<AnswerCandidate>> {
    check_mu(mu)?;
    let rea: Vec<f64> = candidates.iter().map(|(_, s)| s.score).collect();
    let rea_norm = if raw { rea.clone() } else { min_max(&rea) };
    let mut out: Vec<AnswerCandidate> = candidates
        .iter()
        .zip(rea_norm)
        .map(|((p, s), rn)| {
            let ret = if raw { p.s_ret } else { p.s_ret_norm };
            AnswerCandidate {
                text: s.text.clone(),
                passage_id: p.passage.passage_id.clone(),
                passage_rank: p.rank,
                start: s.start,
                end: s.end,
                s_ret_norm: p.s_ret_norm,
                s_rea: s.score,
                s_rea_norm: rn,
                fused: (1.0 - mu) * ret + mu * rn,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.fused
            .total_cmp(&a.fused)
            .then(a.passage_rank.cmp(&b.passage_rank))
            .then_with(|| a.text.cmp(&b.text))
    });
    Ok(out)
}

pub fn check_mu(mu: f64) -> Result<()> {
    if (0.0..=1.0).contains(&mu) {
        Ok(())
    } else {
        Err(Error::argument(format!("mu must be in [0, 1], got {mu}")))
    }
}

/// Retrieval, reading and fusion for one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub passages: Vec<RankedPassage>,
    pub candidates: Vec<AnswerCandidate>,
}

impl PipelineOutput {
    pub fn answer(&self) -> &str {
        self.candidates.first().map_or("", |c| c.text.as_str())
    }

    pub fn ranked_ids(&self) -> Vec<String> {
        self.passages.iter().map(|p| p.passage.passage_id.clone()).collect()
    }
}

pub struct Pipeline<'a> {
    pub index: &'a Index,
    pub reader: &'a dyn Reader,
    pub params: Bm25Params,
    pub fusion_raw: bool,
}

impl Pipeline<'_> {
    /// Retrieves with `retriever_query`, reads every retrieved passage with
    /// `reader_query`, then fuses.
    pub fn run(&self, retriever_query: &str, reader_query: &str, mu: f64) -> Result<PipelineOutput> {
        check_mu(mu)?;
        let passages = self.index.search(retriever_query, &self.params)?;
        let mut pairs = Vec::new();
        for p in &passages {
            for span in self.reader.read(&p.passage, reader_query)? {
                pairs.push((p.clone(), span));
            }
        }
        Ok(PipelineOutput {
            candidates: fuse(&pairs, mu, self.fusion_raw)?,
            passages,
        })
    }

    /// Reads once, then fuses for every mu; used when tuning.
    pub fn run_grid(&self, retriever_query: &str, reader_query: &str, grid: &[f64]) -> Result<Vec<PipelineOutput>> {
        for &mu in grid {
            check_mu(mu)?;
        }
        let passages = self.index.search(retriever_query, &self.params)?;
        let mut pairs = Vec::new();
        for p in &passages {
            for span in self.reader.read(&p.passage, reader_query)? {
                pairs.push((p.clone(), span));
            }
        }
        grid.iter()
            .map(|&mu| {
                Ok(PipelineOutput {
                    candidates: fuse(&pairs, mu, self.fusion_raw)?,
                    passages: passages.clone(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::ReferenceAnnotator;

    fn reader() -> LexicalReader {
        LexicalReader::new(Arc::new(ReferenceAnnotator::default()))
    }

    #[test]
    fn messi_position_span() {
        let p = Passage::new("p", "Messi plays as a forward for Inter Miami.");
        let spans = reader().read(&p, "which position does Messi play?").unwrap();
        assert_eq!(spans.len(), 1);
        assert!(spans[0].text.contains("forward"));
        assert_eq!(char_slice(&p.text, spans[0].start, spans[0].end), Some(spans[0].text.as_str()));
    }

    #[test]
    fn age_span_from_long_sentence() {
        let p = Passage::new(
            "p",
            "Lionel Messi is 36 years old and was born in Rosario, a city in the Santa Fe province of Argentina.",
        );
        let spans = reader().read(&p, "how old is Messi?").unwrap();
        assert_eq!(spans[0].text, "36 years");
        assert_eq!(spans[0].score, 1.0);
    }

    #[test]
    fn no_overlap_no_candidate() {
        let p = Passage::new("p", "Rosario is a city in Argentina.");
        assert!(reader().read(&p, "which position does Messi play?").unwrap().is_empty());
    }

    #[test]
    fn passage_local_scores() {
        let a = Passage::new("a", "Intro text here. Messi plays as a forward.");
        let b = Passage::new("b", "Messi plays as a forward.");
        let q = "which position does Messi play?";
        assert_eq!(reader().read(&a, q).unwrap()[0].score, reader().read(&b, q).unwrap()[0].score);
    }

    #[test]
    fn sentence_splitting() {
        let t = "Messi plays as a forward for Inter Miami. He is 36 years old.";
        let s: Vec<_> = split_sentences(t).into_iter().map(|(a, b)| &t[a..b]).collect();
        assert_eq!(s, ["Messi plays as a forward for Inter Miami.", "He is 36 years old."]);
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn char_slices() {
        assert_eq!(char_slice("1968–69 season", 5, 7), Some("69"));
        assert_eq!(char_slice("abc", 3, 3), Some(""));
        assert_eq!(char_slice("abc", 2, 4), None);
    }

    fn ranked(id: &str, rank: usize, norm: f64) -> RankedPassage {
        RankedPassage {
            passage: Passage::new(id, "x"),
            s_ret: norm,
            s_ret_norm: norm,
            rank,
        }
    }

    fn span(text: &str, score: f64) -> ReadSpan {
        ReadSpan { text: text.into(), start: 0, end: 1, score }
    }

    #[test]
    fn blend_arithmetic() {
        let c = [(ranked("a", 1, 0.8), span("x", 0.4)), (ranked("b", 2, 0.0), span("y", 0.0))];
        let out = fuse(&c, 0.5, true).unwrap();
        assert!((out[0].fused - 0.6).abs() < 1e-12);
        assert!(fuse(&c, -0.1, false).is_err());
        assert!(fuse(&c, 1.1, false).is_err());
    }

    #[test]
    fn endpoints() {
        let c = [
            (ranked("a", 1, 1.0), span("a", 0.1)),
            (ranked("b", 2, 0.5), span("b", 0.9)),
            (ranked("c", 3, 0.0), span("c", 0.5)),
        ];
        let ids = |mu| fuse(&c, mu, false).unwrap().into_iter().map(|x| x.passage_id).collect::<Vec<_>>();
        assert_eq!(ids(0.0), ["a", "b", "c"]);
        assert_eq!(ids(1.0), ["b", "c", "a"]);
    }
}
