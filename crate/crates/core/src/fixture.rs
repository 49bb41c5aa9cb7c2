//! Deterministic evaluation fixture: 15 conversations, 200 passages.
//!
//! Conversation `messi` is the two-turn age/position exchange. Each of the
//! other fourteen asks about one invented person's birthplace, instrument,
//! profession and award, in that order, referring to the person by pronoun
//! after the first mention. The last four carry a document context and
//! open with a pronoun question. Each person has four cumulative passages
//! (fact k first, then the earlier facts); the rest of the collection are
//! distractors that share the attribute vocabulary but never the names or
//! answers.

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::annotate::ReferenceAnnotator;
use crate::error::Result;
use crate::gold::{build_gold_cg, DocRecord};
use crate::model::{save_dataset, write_jsonl, Conversation, DocumentContext, Passage, Turn};

pub const N_PASSAGES: usize = 200;
const SEED: u64 = 20_231_206;

struct Person {
    first: &'static str,
    last: &'static str,
    female: bool,
    city: &'static str,
    instrument: &'static str,
    profession: &'static str,
    award: &'static str,
}

const fn person(
    first: &'static str,
    last: &'static str,
    female: bool,
    city: &'static str,
    instrument: &'static str,
    profession: &'static str,
    award: &'static str,
) -> Person {
    Person {
        first,
        last,
        female,
        city,
        instrument,
        profession,
        award,
    }
}

const PEOPLE: [Person; 14] = [
    person("Tomas", "Verbeek", false, "Leiden", "violin", "a carpenter", "the Orchid Medal"),
    person("Ilse", "Marquardt", true, "Tartu", "cello", "a surveyor", "the Lantern Prize"),
    person("Oren", "Talvik", false, "Ghent", "oboe", "a glassblower", "the Harbor Cup"),
    person("Marisol", "Quenby", true, "Bergen", "harp", "a cartographer", "the Falcon Ribbon"),
    person("Dario", "Fenwick", false, "Porto", "clarinet", "a locksmith", "the Meridian Star"),
    person("Anouk", "Lindqvist", true, "Lyon", "bassoon", "a beekeeper", "the Copper Laurel"),
    person("Felix", "Arkwright", false, "Graz", "trumpet", "a translator", "the Beacon Shield"),
    person("Saskia", "Dunmore", true, "Turku", "flute", "a stonemason", "the Willow Crest"),
    person("Hugo", "Ravensdale", false, "Aarhus", "viola", "a bookbinder", "the Granite Trophy"),
    person("Noor", "Whitlock", true, "Bruges", "tuba", "a watchmaker", "the Sapphire Wreath"),
    person("Emil", "Castellan", false, "Kaunas", "banjo", "a botanist", "the Thistle Plaque"),
    person("Liesel", "Harrowgate", true, "Zadar", "mandolin", "a potter", "the Juniper Badge"),
    person("Tobias", "Penhallow", false, "Trieste", "harpsichord", "a ferryman", "the Cobalt Banner"),
    person("Greta", "Ellingham", true, "Uppsala", "accordion", "a tailor", "the Heron Seal"),
];

/// Document first sentences for the last four people. The first two name a nationality, which puts a second entity in the CG.
const DOC_SENTENCES: [&str; 4] = [
    "{name} is a Dutch musician.",
    "{name} is an Estonian musician.",
    "{name} is a musician from the coast.",
    "{name} is a musician and teacher.",
];

const BIRTHPLACE: [&str; 4] = [
    "A birthplace is the town where a person first lived.",
    "Records of birthplace are kept by local registry offices.",
    "Census forms often ask for a birthplace and a date.",
    "Some travelers visit the birthplace of famous writers.",
];
const INSTRUMENT: [&str; 4] = [
    "An instrument is a device used to make music.",
    "Many schools lend an instrument to every new student.",
    "Tuning an instrument takes patience and a good ear.",
    "A string instrument needs new strings every season.",
];
const PROFESSION: [&str; 4] = [
    "A profession usually requires formal training.",
    "Choosing a profession is a major decision for students.",
    "Every profession has its own set of tools.",
    "Some families pass a profession down through generations.",
];
const AWARD: [&str; 4] = [
    "An award honors outstanding achievement.",
    "The committee announces each award in the spring.",
    "Winning an award can change a career.",
    "An award ceremony often includes long speeches.",
];
const FILLER: [&str; 6] = [
    "The weather was mild that year.",
    "Local markets open early on weekends.",
    "The river runs through the valley.",
    "Libraries hold thousands of books.",
    "Trains connect the coastal towns.",
    "The museum reopened after repairs.",
];

pub struct Fixture {
    /// With documents and gold CG.
    pub conversations: Vec<Conversation>,
    pub passages: Vec<Passage>,
}

impl Fixture {
    /// Conversations as they would arrive before enrichment: no document,
    /// no gold CG.
    pub fn raw_conversations(&self) -> Vec<Conversation> {
        self.conversations
            .iter()
            .map(|c| Conversation {
                conversation_id: c.conversation_id.clone(),
                doc: None,
                turns: c
                    .turns
                    .iter()
                    .map(|t| Turn { gold_cg: None, ..t.clone() })
                    .collect(),
            })
            .collect()
    }

    pub fn doc_records(&self) -> Vec<DocRecord> {
        self.conversations
            .iter()
            .filter_map(|c| {
                c.doc.as_ref().map(|d| DocRecord {
                    conversation_id: c.conversation_id.clone(),
                    title: d.title.clone(),
                    first_sentence: d.first_sentence.clone(),
                })
            })
            .collect()
    }

    /// Writes `dataset.jsonl` (enriched), `raw.jsonl`, `docs.jsonl` and
    /// `passages.jsonl` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        save_dataset(dir.join("dataset.jsonl"), &self.conversations)?;
        save_dataset(dir.join("raw.jsonl"), &self.raw_conversations())?;
        write_jsonl(dir.join("docs.jsonl"), &self.doc_records())?;
        write_jsonl(dir.join("passages.jsonl"), &self.passages)
    }
}

fn url(id: &str) -> String {
    format!("https://fixture.invalid/{id}")
}

fn passage(id: &str, text: String) -> Passage {
    Passage {
        passage_id: id.to_string(),
        text,
        source_url: Some(url(id)),
    }
}

fn turn(conv: &str, n: usize, question: String, rewrite: Option<String>, answer: &str, source: &str) -> Turn {
    let mut t = Turn::new(conv, n, question);
    t.rewrite = rewrite;
    t.answer = Some(answer.to_string());
    t.answer_source = Some(url(source));
    t
}

pub fn build() -> Fixture {
    let annotator = ReferenceAnnotator::default();
    let mut conversations = Vec::new();
    let mut passages = Vec::new();

    conversations.push(Conversation {
        conversation_id: "messi".into(),
        doc: None,
        turns: vec![
            turn("messi", 0, "how old is Messi?".into(), None, "36 years", "messi-age"),
            turn(
                "messi",
                1,
                "which position does he play?".into(),
                Some("which position does Messi play?".into()),
                "a forward",
                "messi-position",
            ),
        ],
    });
    passages.push(passage(
        "messi-age",
        "Lionel Messi is 36 years old and was born in Rosario, a city in the Santa Fe province of Argentina.".into(),
    ));
    passages.push(passage(
        "messi-position",
        "Messi plays as a forward for Inter Miami and is 36 years old.".into(),
    ));

    for (i, p) in PEOPLE.iter().enumerate() {
        let id = format!("p{:02}", i + 1);
        let name = format!("{} {}", p.first, p.last);
        let pron = if p.female { "her" } else { "his" };
        let facts = [
            ("birthplace", p.city.to_string()),
            ("instrument", format!("the {}", p.instrument)),
            ("profession", p.profession.to_string()),
            ("award", p.award.to_string()),
        ];
        let doc = i
            .checked_sub(PEOPLE.len() - DOC_SENTENCES.len())
            .map(|j| DOC_SENTENCES[j])
            .map(|s| DocumentContext::new(name.clone(), s.replace("{name}", &name)));
        let mut turns = Vec::new();
        for (k, (attr, value)) in facts.iter().enumerate() {
            let pid = format!("{id}-{k}");
            let mut text = format!("{name}'s {attr} is {value}.");
            for (a, v) in facts[..k].iter().rev() {
                text.push_str(&format!(" {name}'s {a} is {v}."));
            }
            passages.push(passage(&pid, text));
            let (question, rewrite) = if k == 0 && doc.is_none() {
                (format!("what is the {attr} of {name}?"), None)
            } else {
                (format!("what is {pron} {attr}?"), Some(format!("what is {name}'s {attr}?")))
            };
            turns.push(turn(&id, k, question, rewrite, value, &pid));
        }
        conversations.push(Conversation {
            conversation_id: id,
            doc,
            turns,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let banks = [&BIRTHPLACE, &INSTRUMENT, &PROFESSION, &AWARD];
    let mut d = 0;
    while passages.len() < N_PASSAGES {
        let bank = banks[d % banks.len()];
        let mut sentences: Vec<&str> = bank.choose_multiple(&mut rng, 2).copied().collect();
        sentences.push(FILLER.choose(&mut rng).expect("non-empty"));
        sentences.shuffle(&mut rng);
        let id = format!("d{d:03}");
        passages.push(Passage {
            passage_id: id,
            text: sentences.join(" "),
            source_url: None,
        });
        d += 1;
    }

    let conversations = conversations
        .iter()
        .map(|c| build_gold_cg(c, &annotator).expect("reference annotator is infallible"))
        .collect();
    Fixture {
        conversations,
        passages,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn shape() {
        let f = build();
        assert_eq!(f.conversations.len(), 15);
        assert_eq!(f.passages.len(), N_PASSAGES);
        let ids: HashSet<_> = f.passages.iter().map(|p| &p.passage_id).collect();
        assert_eq!(ids.len(), N_PASSAGES);
        assert_eq!(f.conversations.iter().filter(|c| c.doc.is_some()).count(), 4);
    }

    #[test]
    fn anaphoric_messi_passage_shares_no_word_with_the_question() {
        let f = build();
        let pos = f.passages.iter().find(|p| p.passage_id == "messi-position").unwrap();
        let words: HashSet<String> = crate::gold::match_tokens(&pos.text).into_iter().collect();
        for w in crate::gold::match_tokens("which position does he play?") {
            assert!(!words.contains(&w), "{w}");
        }
    }

    #[test]
    fn distractors_never_mention_answers_or_names() {
        let f = build();
        for d in f.passages.iter().filter(|p| p.source_url.is_none()) {
            let lower = d.text.to_lowercase();
            for p in &PEOPLE {
                for w in [p.first, p.last, p.city, p.instrument] {
                    assert!(!lower.contains(&w.to_lowercase()), "{} contains {w}", d.passage_id);
                }
            }
            assert!(!lower.contains("messi"));
        }
    }

    #[test]
    fn deterministic() {
        let a = build();
        let b = build();
        assert_eq!(a.conversations, b.conversations);
        assert_eq!(a.passages, b.passages);
    }
}
