//! Okapi BM25 over an in-memory inverted index.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::LazyLock;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Passage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub top_n: usize,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: 0.82,
            b: 0.68,
            top_n: 20,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::argument(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::argument(format!("b must be in [0, 1], got {}", self.b)));
        }
        if self.top_n == 0 {
            return Err(Error::argument("top_n must be >= 1"));
        }
        Ok(())
    }
}

/// Lucene's default English stop set.
const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if", "in", "into", "is", "it", "no", "not", "of",
    "on", "or", "such", "that", "the", "their", "then", "there", "these", "they", "this", "to", "was", "will", "with",
];

static STOPSET: LazyLock<HashSet<&'static str>> = LazyLock::new(|| STOPWORDS.iter().copied().collect());
static STEMMER: LazyLock<Stemmer> = LazyLock::new(|| Stemmer::create(Algorithm::English));

/// Casefold, replace every non-alphanumeric character by a space, split on
/// whitespace. Stemming and stopword removal are opt-in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Analyzer {
    pub stem: bool,
    pub stopwords: bool,
}

impl Analyzer {
    pub fn analyze(&self, text: &str) -> Vec<String> {
        let folded: String = text
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { ' ' })
            .collect::<String>()
            .to_lowercase();
        folded
            .split_whitespace()
            .filter(|t| !(self.stopwords && STOPSET.contains(t)))
            .map(|t| {
                if self.stem {
                    STEMMER.stem(t).into_owned()
                } else {
                    t.to_string()
                }
            })
            .collect()
    }
}

/// Lucene-style IDF; never negative.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Saturated term-frequency component.
pub fn tf_weight(tf: f64, doc_len: f64, avgdl: f64, params: &Bm25Params) -> f64 {
    tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * doc_len / avgdl))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPassage {
    pub passage: Passage,
    pub s_ret: f64,
    pub s_ret_norm: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    analyzer: Analyzer,
    passages: Vec<Passage>,
    doc_len: Vec<u32>,
    avgdl: f64,
    /// term → (doc, tf), doc ascending.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

const MAGIC: &[u8; 8] = b"CGBM25IX";
const VERSION: u32 = 1;

impl Index {
    pub fn build(passages: Vec<Passage>, analyzer: Analyzer) -> Result<Self> {
        if passages.is_empty() {
            return Err(Error::argument("empty collection"));
        }
        let mut seen = HashSet::new();
        for p in &passages {
            if !seen.insert(p.passage_id.as_str()) {
                return Err(Error::integrity(format!("duplicate passage_id {}", p.passage_id)));
            }
        }
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_len = Vec::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            let terms = analyzer.analyze(&p.text);
            doc_len.push(terms.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in terms {
                *tf.entry(t).or_default() += 1;
            }
            for (t, c) in tf {
                postings.entry(t).or_default().push((i as u32, c));
            }
        }
        let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        let avgdl = total as f64 / passages.len() as f64;
        Ok(Self {
            analyzer,
            passages,
            doc_len,
            avgdl,
            postings,
        })
    }

    pub fn analyzer(&self) -> Analyzer {
        self.analyzer
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn doc_len(&self, doc: usize) -> usize {
        self.doc_len[doc] as usize
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn search(&self, query: &str, params: &Bm25Params) -> Result<Vec<RankedPassage>> {
        params.validate()?;
        let mut qtf: HashMap<String, usize> = HashMap::new();
        for t in self.analyzer.analyze(query) {
            *qtf.entry(t).or_default() += 1;
        }
        let mut scores: HashMap<u32, f64> = HashMap::new();
        let n = self.passages.len();
        // Deterministic accumulation order keeps scores reproducible.
        let mut terms: Vec<_> = qtf.into_iter().collect();
        terms.sort();
        for (term, count) in terms {
            let Some(list) = self.postings.get(&term) else { continue };
            let w = idf(n, list.len()) * count as f64;
            for &(doc, tf) in list {
                let s = w * tf_weight(f64::from(tf), f64::from(self.doc_len[doc as usize]), self.avgdl, params);
                *scores.entry(doc).or_default() += s;
            }
        }
        let scored = scores.into_iter().map(|(d, s)| (d as usize, s)).collect();
        Ok(rank(&self.passages, scored, params.top_n))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        Self::read_from(&mut r).map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData | std::io::ErrorKind::UnexpectedEof => {
                Error::Format(format!("{}: {e}", path.display()))
            }
            _ => Error::io(path, e),
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u8(u8::from(self.analyzer.stem))?;
        w.write_u8(u8::from(self.analyzer.stopwords))?;
        w.write_u64::<LittleEndian>(self.passages.len() as u64)?;
        for (p, &len) in self.passages.iter().zip(&self.doc_len) {
            write_str(w, &p.passage_id)?;
            write_str(w, &p.text)?;
            match &p.source_url {
                Some(u) => {
                    w.write_u8(1)?;
                    write_str(w, u)?;
                }
                None => w.write_u8(0)?,
            }
            w.write_u32::<LittleEndian>(len)?;
        }
        w.write_u64::<LittleEndian>(self.avgdl.to_bits())?;
        w.write_u64::<LittleEndian>(self.postings.len() as u64)?;
        for (term, list) in &self.postings {
            write_str(w, term)?;
            w.write_u32::<LittleEndian>(list.len() as u32)?;
            for &(doc, tf) in list {
                w.write_u32::<LittleEndian>(doc)?;
                w.write_u32::<LittleEndian>(tf)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> std::io::Result<Self> {
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not an index file"));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(bad(&format!("unsupported index version {version}")));
        }
        let analyzer = Analyzer {
            stem: r.read_u8()? != 0,
            stopwords: r.read_u8()? != 0,
        };
        let n = r.read_u64::<LittleEndian>()? as usize;
        let mut passages = Vec::with_capacity(n.min(1 << 20));
        let mut doc_len = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let passage_id = read_str(r)?;
            let text = read_str(r)?;
            let source_url = match r.read_u8()? {
                0 => None,
                1 => Some(read_str(r)?),
                _ => return Err(bad("bad source_url tag")),
            };
            passages.push(Passage {
                passage_id,
                text,
                source_url,
            });
            doc_len.push(r.read_u32::<LittleEndian>()?);
        }
        let avgdl = f64::from_bits(r.read_u64::<LittleEndian>()?);
        let n_terms = r.read_u64::<LittleEndian>()? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let term = read_str(r)?;
            let len = r.read_u32::<LittleEndian>()? as usize;
            let mut list = Vec::with_capacity(len.min(n));
            for _ in 0..len {
                let doc = r.read_u32::<LittleEndian>()?;
                if doc as usize >= n {
                    return Err(bad("posting points past the collection"));
                }
                list.push((doc, r.read_u32::<LittleEndian>()?));
            }
            postings.insert(term, list);
        }
        Ok(Self {
            analyzer,
            passages,
            doc_len,
            avgdl,
            postings,
        })
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Orders positive scores descending (ties by passage_id), keeps `top_n`,
/// assigns ranks and min-max normalizes within the kept list.
fn rank(passages: &[Passage], scored: Vec<(usize, f64)>, top_n: usize) -> Vec<RankedPassage> {
    let mut scored: Vec<_> = scored.into_iter().filter(|&(_, s)| s > 0.0).collect();
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| passages[a.0].passage_id.cmp(&passages[b.0].passage_id))
    });
    scored.truncate(top_n);
    let norm = min_max(&scored.iter().map(|&(_, s)| s).collect::<Vec<_>>());
    scored
        .into_iter()
        .zip(norm)
        .enumerate()
        .map(|(i, ((doc, s), n))| RankedPassage {
            passage: passages[doc].clone(),
            s_ret: s,
            s_ret_norm: n,
            rank: i + 1,
        })
        .collect()
}

/// Min-max normalization into [0, 1]; a constant list maps to all 1.0.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| if hi > lo { (v - lo) / (hi - lo) } else { 1.0 })
        .collect()
}

/// Exhaustive scorer: re-analyzes every passage and scores each query token
/// occurrence independently. Reference for testing [`Index::search`].
pub fn brute_force_search(
    passages: &[Passage],
    analyzer: Analyzer,
    query: &str,
    params: &Bm25Params,
) -> Vec<RankedPassage> {
    let docs: Vec<Vec<String>> = passages.iter().map(|p| analyzer.analyze(&p.text)).collect();
    let n = docs.len();
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n as f64;
    let query = analyzer.analyze(query);
    let scored = docs
        .iter()
        .enumerate()
        .map(|(i, doc)| {
            let mut s = 0.0;
            for q in &query {
                let tf = doc.iter().filter(|t| *t == q).count();
                if tf == 0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.contains(q)).count();
                s += idf(n, df) * tf_weight(tf as f64, doc.len() as f64, avgdl, params);
            }
            (i, s)
        })
        .collect();
    rank(passages, scored, params.top_n)
}
