//! Token-level annotation (coarse POS, entity runs, noun chunks) and
//! proposition extraction.
//!
//! The reference backend is a lexicon + suffix-rule tagger. It knows the
//! closed-class words of English, a list of common verbs with their
//! inflections, and a handful of adjective suffixes; every other word is a
//! noun. Capitalised words that do not start a sentence are proper nouns and
//! entity mentions. Chunks are maximal `DET? ADJ* NOMINAL+` spans.

use std::collections::{HashMap, HashSet};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Proposition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Propn,
    Adj,
    Det,
    Verb,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedToken {
    pub text: String,
    pub index: usize,
    /// Byte offsets into the annotated text.
    pub start: usize,
    pub end: usize,
    pub pos: Pos,
    pub is_entity: bool,
    pub entity_id: Option<usize>,
}

impl AnnotatedToken {
    pub fn is_nominal(&self) -> bool {
        matches!(self.pos, Pos::Noun | Pos::Propn) || self.is_entity
    }

    pub fn is_content(&self) -> bool {
        self.is_nominal() || self.pos == Pos::Adj
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub text: String,
    pub tokens: Vec<AnnotatedToken>,
    /// Half-open token ranges.
    pub chunks: Vec<(usize, usize)>,
}

impl AnnotatedSentence {
    /// Exact source text covered by a token range.
    pub fn span_text(&self, (start, end): (usize, usize)) -> &str {
        &self.text[self.tokens[start].start..self.tokens[end - 1].end]
    }

    pub fn span_offsets(&self, (start, end): (usize, usize)) -> (usize, usize) {
        (self.tokens[start].start, self.tokens[end - 1].end)
    }

    pub fn chunk_has_entity(&self, (start, end): (usize, usize)) -> bool {
        self.tokens[start..end].iter().any(|t| t.is_entity)
    }

    /// Lowercased noun, proper-noun and adjective tokens.
    pub fn content_words(&self) -> Vec<String> {
        self.tokens
            .iter()
            .filter(|t| t.is_content())
            .map(|t| t.text.to_lowercase())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkMode {
    /// `DET? ADJ* NOMINAL+`
    #[default]
    NounChunk,
    /// Runs of nouns, adjectives and entities only; determiners are dropped.
    Strict,
}

pub trait Annotator: Send + Sync {
    fn annotate(&self, text: &str) -> Result<AnnotatedSentence>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceAnnotator {
    pub mode: ChunkMode,
}

impl ReferenceAnnotator {
    pub fn new(mode: ChunkMode) -> Self {
        Self { mode }
    }

    /// Infallible form of [`Annotator::annotate`].
    pub fn tag(&self, text: &str) -> AnnotatedSentence {
        let raw = tokenize(text);
        let mut tokens: Vec<AnnotatedToken> = Vec::with_capacity(raw.len());
        let mut sentence_start = true;
        for (index, (start, end)) in raw.into_iter().enumerate() {
            let word = &text[start..end];
            let (pos, is_entity) = tag_word(word, sentence_start);
            if word.chars().any(char::is_alphanumeric) {
                sentence_start = false;
            } else if matches!(word, "." | "!" | "?") {
                sentence_start = true;
            }
            tokens.push(AnnotatedToken {
                text: word.to_string(),
                index,
                start,
                end,
                pos,
                is_entity,
                entity_id: None,
            });
        }
        apply_context_rules(&mut tokens);
        assign_entity_ids(&mut tokens);
        let chunks = match self.mode {
            ChunkMode::NounChunk => noun_chunks(&tokens),
            ChunkMode::Strict => strict_chunks(&tokens),
        };
        AnnotatedSentence {
            text: text.to_string(),
            tokens,
            chunks,
        }
    }
}

impl Annotator for ReferenceAnnotator {
    fn annotate(&self, text: &str) -> Result<AnnotatedSentence> {
        Ok(self.tag(text))
    }
}

/// One proposition per chunk, in chunk order, deduplicated by normalized form.
pub fn extract_propositions(sentence: &AnnotatedSentence, origin_turn: usize) -> Vec<Proposition> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &chunk in &sentence.chunks {
        let surface = sentence.span_text(chunk);
        let Ok(prop) = Proposition::try_new(surface, origin_turn) else {
            continue;
        };
        if seen.insert(prop.normalized.clone()) {
            out.push(prop.with_entity(sentence.chunk_has_entity(chunk)));
        }
    }
    out
}

/// Entity test for a bare span with no sentence context (gold CG read from
/// file): any capitalised open-class word counts.
pub fn fragment_has_entity(surface: &str) -> bool {
    surface.split_whitespace().any(|w| {
        let w = w.trim_matches(|c: char| !c.is_alphanumeric());
        w.chars().next().is_some_and(char::is_uppercase) && !is_closed_class(&w.to_lowercase())
    })
}

/// True when the text contains a third-person pronoun or demonstrative.
pub fn is_anaphoric(text: &str) -> bool {
    tokenize(text)
        .into_iter()
        .any(|(s, e)| ANAPHORS.contains(text[s..e].to_lowercase().as_str()))
}

/// Whitespace split, then leading/trailing punctuation and a trailing `'s`
/// clitic become their own tokens. Returns byte ranges.
pub fn tokenize(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut pos = 0;
    for piece in text.split_whitespace() {
        let offset = pos + text[pos..].find(piece).expect("piece comes from text");
        pos = offset + piece.len();
        split_piece(piece, offset, &mut out);
    }
    out
}

fn split_piece(piece: &str, offset: usize, out: &mut Vec<(usize, usize)>) {
    let chars: Vec<(usize, char)> = piece.char_indices().collect();
    let mut lo = 0;
    while lo < chars.len() && !chars[lo].1.is_alphanumeric() {
        lo += 1;
    }
    let mut hi = chars.len();
    while hi > lo && !chars[hi - 1].1.is_alphanumeric() {
        hi -= 1;
    }
    let byte = |i: usize| if i < chars.len() { chars[i].0 } else { piece.len() };
    for i in 0..lo {
        out.push((offset + byte(i), offset + byte(i + 1)));
    }
    if lo < hi {
        let core = &piece[byte(lo)..byte(hi)];
        let clitic = ["'s", "’s"]
            .iter()
            .find(|c| core.len() > c.len() && core.to_lowercase().ends_with(*c))
            .map(|c| c.len());
        match clitic {
            Some(n) => {
                let split = byte(hi) - n;
                out.push((offset + byte(lo), offset + split));
                out.push((offset + split, offset + byte(hi)));
            }
            None => out.push((offset + byte(lo), offset + byte(hi))),
        }
    }
    for i in hi.max(lo)..chars.len() {
        out.push((offset + byte(i), offset + byte(i + 1)));
    }
}

fn tag_word(word: &str, sentence_start: bool) -> (Pos, bool) {
    let Some(first) = word.chars().next() else {
        return (Pos::Other, false);
    };
    if !word.chars().any(char::is_alphanumeric) {
        return (Pos::Other, false);
    }
    if first.is_ascii_digit() {
        // numerals behave as pre-nominal modifiers ("the 1968–69 season")
        return (Pos::Adj, false);
    }
    let lower = word.to_lowercase();
    if word == "I" {
        return (Pos::Other, false);
    }
    let letters: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase()) {
        return (Pos::Propn, true);
    }
    if first.is_uppercase() && !sentence_start && !is_closed_class(&lower) {
        return (Pos::Propn, true);
    }
    (lexical_pos(&lower), false)
}

fn lexical_pos(lower: &str) -> Pos {
    if let Some(&pos) = CLOSED_CLASS.get(lower) {
        return pos;
    }
    if ADJECTIVES.contains(lower) {
        return Pos::Adj;
    }
    if VERBS.contains(lower) {
        return Pos::Verb;
    }
    if NOUN_EXCEPTIONS.contains(lower) {
        return Pos::Noun;
    }
    if lower.len() > 4 && lower.ends_with("ly") {
        return Pos::Other;
    }
    const ADJ_SUFFIXES: [&str; 8] = ["ous", "ful", "ive", "able", "ible", "ical", "less", "ional"];
    if ADJ_SUFFIXES.iter().any(|s| lower.len() > s.len() + 2 && lower.ends_with(s)) {
        return Pos::Adj;
    }
    Pos::Noun
}

fn is_closed_class(lower: &str) -> bool {
    CLOSED_CLASS.contains_key(lower)
}

fn apply_context_rules(tokens: &mut [AnnotatedToken]) {
    for i in 0..tokens.len() {
        // verb forms inside a nominal group are nouns ("the average starting salary")
        if tokens[i].pos == Pos::Verb && i > 0 && !AUXILIARIES.contains(tokens[i].text.to_lowercase().as_str()) {
            let prev = tokens[i - 1].pos;
            if prev == Pos::Det || prev == Pos::Adj {
                tokens[i].pos = Pos::Noun;
            }
        }
    }
    // a capitalised sentence-initial word directly before a proper noun joins it
    for i in (0..tokens.len().saturating_sub(1)).rev() {
        let t = &tokens[i];
        let starts_upper = t.text.chars().next().is_some_and(char::is_uppercase);
        if !t.is_entity
            && starts_upper
            && !is_closed_class(&t.text.to_lowercase())
            && tokens[i + 1].pos == Pos::Propn
            && tokens[i + 1].is_entity
        {
            tokens[i].pos = Pos::Propn;
            tokens[i].is_entity = true;
        }
    }
}

fn assign_entity_ids(tokens: &mut [AnnotatedToken]) {
    let mut next = 0;
    let mut prev_entity = false;
    for t in tokens.iter_mut() {
        if t.is_entity {
            if !prev_entity {
                next += 1;
            }
            t.entity_id = Some(next - 1);
        }
        prev_entity = t.is_entity;
    }
}

fn noun_chunks(tokens: &[AnnotatedToken]) -> Vec<(usize, usize)> {
    let mut chunks = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let start = i;
        let mut j = i;
        if tokens[j].pos == Pos::Det {
            j += 1;
        }
        while j < tokens.len() && tokens[j].pos == Pos::Adj && !tokens[j].is_entity {
            j += 1;
        }
        let mut k = j;
        while k < tokens.len() && tokens[k].is_nominal() {
            k += 1;
        }
        if k > j {
            chunks.push((start, k));
            i = k;
        } else {
            i += 1;
        }
    }
    chunks
}

fn strict_chunks(tokens: &[AnnotatedToken]) -> Vec<(usize, usize)> {
    let mut chunks = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if !tokens[i].is_content() {
            i += 1;
            continue;
        }
        let mut k = i;
        while k < tokens.len() && tokens[k].is_content() {
            k += 1;
        }
        if tokens[i..k].iter().any(AnnotatedToken::is_nominal) {
            chunks.push((i, k));
        }
        i = k;
    }
    chunks
}

static ANAPHORS: LazyLock<HashSet<&'static str>> = LazyLock::new(|| {
    [
        "he", "him", "his", "she", "her", "hers", "it", "its", "they", "them", "their", "theirs",
        "this", "that", "these", "those", "there",
    ]
    .into_iter()
    .collect()
});

static AUXILIARIES: LazyLock<HashSet<&'static str>> = LazyLock::new(|| {
    [
        "be", "is", "am", "are", "was", "were", "been", "being", "do", "does", "did", "done",
        "doing", "have", "has", "had", "having", "can", "could", "will", "would", "shall",
        "should", "may", "might", "must",
    ]
    .into_iter()
    .collect()
});

static CLOSED_CLASS: LazyLock<HashMap<&'static str, Pos>> = LazyLock::new(|| {
    let mut m = HashMap::new();
    for w in [
        "a", "an", "the", "this", "that", "these", "those", "my", "your", "his", "her", "its",
        "our", "their", "some", "any", "each", "every", "another", "either", "neither", "no",
    ] {
        m.insert(w, Pos::Det);
    }
    for w in [
        // pronouns and wh-words
        "i", "me", "you", "he", "him", "she", "it", "we", "us", "they", "them", "myself",
        "yourself", "himself", "herself", "itself", "ourselves", "themselves", "mine", "yours",
        "hers", "ours", "theirs", "who", "whom", "whose", "which", "what", "where", "when", "why",
        "how", "there", "here", "someone", "anyone", "everyone", "something", "anything",
        "everything", "nothing", "one",
        // prepositions, conjunctions, particles, adverbs
        "in", "on", "at", "of", "for", "to", "from", "by", "with", "about", "as", "into", "onto",
        "during", "after", "before", "over", "under", "between", "through", "against", "among",
        "without", "within", "since", "until", "till", "than", "upon", "via", "per", "across",
        "behind", "beyond", "near", "around", "along", "toward", "towards", "like", "unlike",
        "and", "or", "but", "nor", "so", "yet", "if", "because", "while", "though", "although",
        "whether", "not", "also", "very", "too", "just", "only", "then", "now", "ever", "never",
        "still", "already", "again", "up", "down", "out", "off", "more", "most", "much", "less",
        "least", "such", "else", "even", "well", "really", "often", "always", "sometimes",
        "usually", "ago", "however", "therefore", "thus", "instead", "rather", "quite", "almost",
        "yes", "ok", "okay", "please", "all", "both", "'s", "’s", "n't", "s", "t",
    ] {
        m.insert(w, Pos::Other);
    }
    for w in AUXILIARIES.iter() {
        m.insert(w, Pos::Verb);
    }
    m
});

static ADJECTIVES: LazyLock<HashSet<&'static str>> = LazyLock::new(|| {
    [
        "old", "new", "young", "good", "bad", "great", "big", "small", "large", "little", "long",
        "short", "high", "low", "average", "first", "second", "third", "last", "best", "better",
        "worst", "worse", "main", "major", "minor", "early", "late", "other", "many", "few",
        "several", "different", "same", "own", "important", "public", "national", "local",
        "real", "full", "free", "true", "false", "whole", "entire", "general", "common", "total",
        "current", "former", "previous", "next", "final", "original", "social", "political",
        "economic", "human", "natural", "possible", "likely", "able", "available", "certain",
        "recent", "similar", "specific", "key", "top", "older", "oldest", "younger", "youngest",
        "bigger", "biggest", "largest", "smallest", "longest", "highest", "lowest", "earliest",
        "latest", "rich", "poor", "hot", "cold", "warm", "easy", "hard", "difficult", "simple",
        "special", "single", "double", "main", "personal", "professional", "international",
        "official", "popular", "famous", "known", "well-known", "average", "typical", "usual",
        "only", "various", "every", "scalable",
    ]
    .into_iter()
    .collect()
});

/// Nouns the suffix rules would otherwise mistag.
static NOUN_EXCEPTIONS: LazyLock<HashSet<&'static str>> = LazyLock::new(|| {
    [
        "family", "supply", "reply", "ally", "fly", "belly", "lily", "rally", "jelly", "assembly",
        "anomaly", "monopoly", "butterfly", "italy", "july", "executive", "native", "detective",
        "objective", "relative", "representative", "archive", "motive", "initiative", "table",
        "cable", "vegetable", "variable", "fable", "stable", "bible", "treaty",
    ]
    .into_iter()
    .collect()
});

static VERBS: LazyLock<HashSet<String>> = LazyLock::new(|| {
    const REGULAR: &[&str] = &[
        "play", "come", "make", "take", "give", "know", "think", "look", "want", "use", "ask",
        "seem", "try", "call", "live", "start", "join", "found", "receive", "learn", "move",
        "happen", "include", "continue", "help", "show", "lose", "pay", "appear", "wait",
        "serve", "expect", "stay", "reach", "kill", "remain", "suggest", "raise", "pass",
        "require", "decide", "pull", "marry", "retire", "sign", "travel", "study", "teach",
        "perform", "compose", "invent", "discover", "create", "produce", "direct", "establish",
        "elect", "appoint", "attend", "graduate", "return", "cause", "describe", "explain",
        "earn", "compare", "differ", "increase", "decrease", "reduce", "prevent", "affect",
        "die", "believe", "belong", "consider", "contain", "happen", "like", "love", "need",
        "prefer", "remember", "open", "close", "finish", "end", "visit", "watch", "listen",
        "talk", "walk", "work", "mention", "manage", "own", "represent", "allow", "add",
        "provide", "develop", "release", "coach", "defeat", "score", "launch", "publish",
        "announce", "acquire", "introduce", "design", "locate", "situate", "mean", "tend",
        "last", "occur", "involve", "achieve", "carry", "claim", "depend", "enter", "fail",
        "form", "improve", "offer", "plan", "stop", "succeed", "support", "consist", "exist",
        "name", "record", "compete", "celebrate", "obtain", "influence", "inspire", "praise",
        "criticize", "criticise", "oppose", "reveal", "hire", "fire", "train", "treat", "cure",
        "inherit", "donate", "collect", "settle", "base", "kick", "bear",
    ];
    const IRREGULAR: &[&str] = &[
        "go", "goes", "went", "gone", "going", "came", "made", "took", "taken", "gave", "given",
        "knew", "known", "thought", "see", "sees", "saw", "seen", "seeing", "find", "finds",
        "found", "tell", "tells", "told", "telling", "leave", "leaves", "left", "leaving",
        "feel", "feels", "felt", "win", "wins", "won", "winning", "write", "writes", "wrote",
        "written", "writing", "born", "bore", "begin", "begins", "began", "begun", "beginning",
        "lead", "leads", "led", "leading", "build", "builds", "built", "building", "become",
        "becomes", "became", "becoming", "get", "gets", "got", "gotten", "getting", "say",
        "says", "said", "saying", "keep", "keeps", "kept", "let", "lets", "put", "puts", "run",
        "runs", "ran", "running", "hold", "holds", "held", "bring", "brings", "brought", "set",
        "sets", "hear", "hears", "heard", "stand", "stands", "stood", "lost", "paid", "meet",
        "meets", "met", "sit", "sits", "sat", "speak", "speaks", "spoke", "spoken", "read",
        "reads", "grow", "grows", "grew", "grown", "buy", "buys", "bought", "send", "sends",
        "sent", "fall", "falls", "fell", "fallen", "cut", "cuts", "sell", "sells", "sold",
        "teach", "taught", "eat", "eats", "ate", "eaten", "drink", "drinks", "drank", "drunk",
        "fight", "fights", "fought", "sing", "sings", "sang", "sung", "draw", "drew", "drawn",
        "drive", "drives", "drove", "driven", "fly", "flew", "flown", "rise", "rose", "risen",
        "spend", "spends", "spent", "understand", "understood", "choose", "chose", "chosen",
        "lie", "lay", "lain", "shoot", "shot", "sink", "sank", "think", "thinks", "thinking",
        "mean", "meant", "bear", "bears", "borne", "stole", "stolen", "forgot", "forgotten",
        "died", "dies", "dying",
    ];
    let mut set: HashSet<String> = IRREGULAR.iter().map(|s| s.to_string()).collect();
    for base in REGULAR {
        for form in inflect(base) {
            set.insert(form);
        }
    }
    set
});

fn inflect(base: &str) -> Vec<String> {
    let mut forms = vec![base.to_string()];
    let last = base.chars().last().unwrap_or('x');
    let before_last = base.chars().rev().nth(1).unwrap_or('a');
    let is_vowel = |c: char| "aeiou".contains(c);
    if last == 'y' && !is_vowel(before_last) {
        let stem = &base[..base.len() - 1];
        forms.push(format!("{stem}ies"));
        forms.push(format!("{stem}ied"));
        forms.push(format!("{base}ing"));
    } else if last == 'e' {
        let stem = &base[..base.len() - 1];
        forms.push(format!("{base}s"));
        forms.push(format!("{base}d"));
        if base.ends_with("ee") || base.ends_with("ie") {
            forms.push(format!("{base}ing"));
        } else {
            forms.push(format!("{stem}ing"));
        }
    } else {
        if base.ends_with('s') || base.ends_with("sh") || base.ends_with("ch") || base.ends_with('x') || base.ends_with('o') {
            forms.push(format!("{base}es"));
        } else {
            forms.push(format!("{base}s"));
        }
        forms.push(format!("{base}ed"));
        forms.push(format!("{base}ing"));
        if !is_vowel(last) && is_vowel(before_last) && !"wxy".contains(last) {
            forms.push(format!("{base}{last}ed"));
            forms.push(format!("{base}{last}ing"));
        }
    }
    forms
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(text: &str) -> Vec<String> {
        let s = ReferenceAnnotator::default().tag(text);
        extract_propositions(&s, 0).into_iter().map(|p| p.surface).collect()
    }

    fn pos_of(s: &AnnotatedSentence, word: &str) -> Pos {
        s.tokens.iter().find(|t| t.text == word).unwrap().pos
    }

    #[test]
    fn messi_position_question() {
        let s = ReferenceAnnotator::default().tag("which position does Messi play?");
        assert_eq!(pos_of(&s, "position"), Pos::Noun);
        assert_eq!(pos_of(&s, "Messi"), Pos::Propn);
        assert!(s.tokens.iter().find(|t| t.text == "Messi").unwrap().is_entity);
        let chunks: Vec<_> = s.chunks.iter().map(|&c| s.span_text(c)).collect();
        assert_eq!(chunks, ["position", "Messi"]);
    }

    #[test]
    fn no_nominals_no_chunks() {
        assert!(ReferenceAnnotator::default().tag("run quickly").chunks.is_empty());
        assert!(surfaces("is it true?").is_empty());
        assert!(surfaces("where did he come from?").is_empty());
    }

    #[test]
    fn determiner_starts_chunk() {
        let s = ReferenceAnnotator::default().tag("the average starting salary");
        assert_eq!(s.chunks, vec![(0, 4)]);
        let tags: Vec<_> = s.tokens.iter().map(|t| t.pos).collect();
        assert_eq!(tags, [Pos::Det, Pos::Adj, Pos::Noun, Pos::Noun]);
    }

    #[test]
    fn salary_question_propositions() {
        assert_eq!(surfaces("how old is Messi?"), ["Messi"]);
        assert_eq!(
            surfaces("What's the average starting salary for a physician assistant in the UK?"),
            ["the average starting salary", "a physician assistant", "the UK"]
        );
    }

    #[test]
    fn history_nominals() {
        assert_eq!(
            surfaces("who led the ABA in free-throw percentage in the 1968–69 season?"),
            ["the ABA", "free-throw percentage", "the 1968–69 season"]
        );
        let s = ReferenceAnnotator::default().tag("Rick Barry");
        assert!(s.tokens.iter().all(|t| t.is_entity));
        assert_eq!(s.tokens[0].entity_id, s.tokens[1].entity_id);
    }

    #[test]
    fn sentence_initial_capital_is_not_entity() {
        let s = ReferenceAnnotator::default().tag("Oslavia");
        assert!(!s.tokens[0].is_entity);
        assert_eq!(s.chunks.len(), 1);
        let s = ReferenceAnnotator::default().tag("He moved. Oslavia was home.");
        assert!(!s.tokens.iter().find(|t| t.text == "Oslavia").unwrap().is_entity);
    }

    #[test]
    fn strict_mode_drops_determiners() {
        let s = ReferenceAnnotator::new(ChunkMode::Strict)
            .tag("What's the average starting salary for a physician assistant in the UK?");
        let props: Vec<_> = extract_propositions(&s, 0).into_iter().map(|p| p.surface).collect();
        assert_eq!(props, ["average starting salary", "physician assistant", "UK"]);
    }

    #[test]
    fn tokens_cover_text() {
        let text = "  \"Hello,\" said Ann's friend (twice).";
        let s = ReferenceAnnotator::default().tag(text);
        let rebuilt: String = s.tokens.iter().map(|t| t.text.as_str()).collect();
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        assert_eq!(rebuilt, compact);
        for (i, t) in s.tokens.iter().enumerate() {
            assert_eq!(t.index, i);
            assert_eq!(&text[t.start..t.end], t.text);
        }
    }

    #[test]
    fn anaphora_detection() {
        assert!(is_anaphoric("which position does he play?"));
        assert!(!is_anaphoric("how old is Messi?"));
    }

    #[test]
    fn fragment_entity_test() {
        assert!(fragment_has_entity("Messi"));
        assert!(fragment_has_entity("the UK"));
        assert!(!fragment_has_entity("position"));
        assert!(!fragment_has_entity("The average"));
    }
}
