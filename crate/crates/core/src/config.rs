//! Runtime configuration: backend choice, adapter endpoints, retrieval and
//! service settings. Loaded from key-sorted JSON, then overridden by
//! `CGROUND_*` environment variables.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adapter::{AdapterClient, Endpoint};
use crate::annotate::{Annotator, ChunkMode, ReferenceAnnotator};
use crate::engine::{
    ExternalGenerator, ExternalSelector, Generator, GeneratorConfig, OracleGenerator, OracleSelector, RuleGenerator,
    RuleSelector, Selector,
};
use crate::error::{Error, Result};
use crate::eval::{Backends, BenchConfig, HistoryMode, DEFAULT_RECALL_KS};
use crate::model::Conversation;
use crate::reading::{ExternalReader, LexicalReader, Reader};
use crate::retrieval::{Analyzer, Bm25Params};
use crate::setups::{ExternalRewriter, ExternalSummarizer, FallbackSummarizer, GoldOracle, Services, Setup};

pub const ENV_PREFIX: &str = "CGROUND_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Oracle,
    Rule,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReaderKind {
    Lexical,
    External,
}

/// Adapter endpoint per task: a command line, `cmd:<command line>` or an
/// `http(s)://` URL.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterEndpoints {
    pub generator: Option<String>,
    pub selector: Option<String>,
    pub reader: Option<String>,
    pub rewriter: Option<String>,
    pub summarizer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub adapter_max_in_flight: usize,
    pub adapter_timeout_ms: u64,
    pub adapters: AdapterEndpoints,
    pub annotator: ChunkMode,
    pub bind: String,
    pub bm25: Bm25Params,
    pub dataset: Option<PathBuf>,
    pub fusion_raw: bool,
    pub generator: BackendKind,
    pub generator_sources: GeneratorConfig,
    pub history: HistoryMode,
    pub index: Option<PathBuf>,
    pub mu: f64,
    pub reader: ReaderKind,
    pub reader_budget: usize,
    pub recall_ks: Vec<usize>,
    pub selector: BackendKind,
    pub session_log: Option<PathBuf>,
    pub session_ttl_secs: u64,
    /// Formulation used by the chat REPL and the HTTP service.
    pub setup: Setup,
    pub stem: bool,
    pub stopwords: bool,
    /// Use the offline summary stand-in when no summarizer adapter is set.
    pub summary_fallback: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            adapter_max_in_flight: 4,
            adapter_timeout_ms: 30_000,
            adapters: AdapterEndpoints::default(),
            annotator: ChunkMode::NounChunk,
            bind: "127.0.0.1:8080".into(),
            bm25: Bm25Params::default(),
            dataset: None,
            fusion_raw: false,
            generator: BackendKind::Rule,
            generator_sources: GeneratorConfig::default(),
            history: HistoryMode::Gold,
            index: None,
            mu: 0.5,
            reader: ReaderKind::Lexical,
            reader_budget: crate::setups::DEFAULT_READER_BUDGET,
            recall_ks: DEFAULT_RECALL_KS.to_vec(),
            selector: BackendKind::Rule,
            session_log: None,
            session_ttl_secs: 30 * 60,
            setup: Setup::Cg,
            stem: false,
            stopwords: false,
            summary_fallback: true,
        }
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let config: Config = serde_json::from_value(value).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `CGROUND_<KEY>` overrides; nested keys use `__`, e.g.
    /// `CGROUND_BM25__K1=1.2`. Values are parsed as JSON, falling back to a
    /// plain string.
    pub fn with_env<I: IntoIterator<Item = (String, String)>>(self, vars: I) -> Result<Self> {
        let mut value = serde_json::to_value(&self)?;
        for (key, raw) in vars {
            let Some(rest) = key.strip_prefix(ENV_PREFIX) else { continue };
            let path: Vec<String> = rest.split("__").map(str::to_lowercase).collect();
            let parsed = serde_json::from_str(&raw).unwrap_or(Value::String(raw.clone()));
            let mut slot = &mut value;
            for (i, part) in path.iter().enumerate() {
                let obj = slot
                    .as_object_mut()
                    .ok_or_else(|| Error::config(format!("{key}: {part} is not a section")))?;
                if i + 1 == path.len() {
                    if !obj.contains_key(part) {
                        return Err(Error::config(format!("{key}: unknown setting {part}")));
                    }
                    obj.insert(part.clone(), parsed.clone());
                    break;
                }
                slot = obj
                    .get_mut(part)
                    .ok_or_else(|| Error::config(format!("{key}: unknown section {part}")))?;
                if slot.is_null() {
                    *slot = Value::Object(Default::default());
                }
            }
        }
        Self::from_value(value)
    }

    pub fn with_process_env(self) -> Result<Self> {
        self.with_env(std::env::vars())
    }

    pub fn validate(&self) -> Result<()> {
        self.bm25.validate().map_err(|e| Error::config(e.to_string()))?;
        self.generator_sources.validate()?;
        crate::reading::check_mu(self.mu).map_err(|e| Error::config(e.to_string()))?;
        if self.adapter_max_in_flight == 0 {
            return Err(Error::config("adapter_max_in_flight must be >= 1"));
        }
        if self.recall_ks.contains(&0) {
            return Err(Error::config("recall_ks must be >= 1"));
        }
        Ok(())
    }

    pub fn analyzer(&self) -> Analyzer {
        Analyzer {
            stem: self.stem,
            stopwords: self.stopwords,
        }
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            params: self.bm25,
            fusion_raw: self.fusion_raw,
            history: self.history,
            generator: self.generator_sources,
            recall_ks: self.recall_ks.clone(),
        }
    }

    pub fn annotator(&self) -> Arc<dyn Annotator> {
        Arc::new(ReferenceAnnotator::new(self.annotator))
    }

    /// Instantiates every backend. `dataset` feeds the oracle backends and
    /// the gold setups; without it those fail with a configuration error
    /// when used.
    pub fn backends(&self, dataset: Option<&[Conversation]>) -> Result<Backends> {
        let annotator = self.annotator();
        let mut clients: HashMap<String, Arc<AdapterClient>> = HashMap::new();
        let mut client = |name: &str, spec: &Option<String>| -> Result<Arc<AdapterClient>> {
            let spec = spec
                .as_ref()
                .ok_or_else(|| Error::config(format!("external {name} needs adapters.{name}")))?;
            if let Some(c) = clients.get(spec) {
                return Ok(c.clone());
            }
            let endpoint = Endpoint::parse(spec)?;
            let c = Arc::new(
                AdapterClient::connect(&endpoint, self.adapter_max_in_flight)?
                    .with_timeout(Duration::from_millis(self.adapter_timeout_ms)),
            );
            clients.insert(spec.clone(), c.clone());
            Ok(c)
        };
        let gold = dataset.map(|d| Arc::new(GoldOracle::from_conversations(d)));
        let generator: Arc<dyn Generator> = match self.generator {
            BackendKind::Oracle => Arc::new(OracleGenerator::from_conversations(dataset.unwrap_or_default())),
            BackendKind::Rule => Arc::new(RuleGenerator::new(annotator.clone())),
            BackendKind::External => Arc::new(ExternalGenerator::new(
                client("generator", &self.adapters.generator)?,
                annotator.clone(),
            )),
        };
        let selector: Arc<dyn Selector> = match self.selector {
            BackendKind::Oracle => Arc::new(OracleSelector::from_conversations(dataset.unwrap_or_default())),
            BackendKind::Rule => Arc::new(RuleSelector::new(annotator.clone())),
            BackendKind::External => Arc::new(ExternalSelector::new(client("selector", &self.adapters.selector)?)),
        };
        let reader: Arc<dyn Reader> = match self.reader {
            ReaderKind::Lexical => Arc::new(LexicalReader::new(annotator.clone())),
            ReaderKind::External => Arc::new(ExternalReader::new(client("reader", &self.adapters.reader)?)),
        };
        let rewriter = match &self.adapters.rewriter {
            Some(_) => Some(Arc::new(ExternalRewriter::new(client("rewriter", &self.adapters.rewriter)?)) as _),
            None => None,
        };
        let summarizer = match &self.adapters.summarizer {
            Some(_) => Some(Arc::new(ExternalSummarizer::new(client("summarizer", &self.adapters.summarizer)?)) as _),
            None if self.summary_fallback => Some(Arc::new(FallbackSummarizer) as _),
            None => None,
        };
        Ok(Backends {
            generator,
            selector,
            reader,
            services: Services {
                rewriter,
                summarizer,
                gold,
                reader_budget: self.reader_budget,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_key_sorted() {
        let c = Config::default();
        let text = serde_json::to_string(&serde_json::to_value(&c).unwrap()).unwrap();
        assert!(text.starts_with(r#"{"adapter_max_in_flight":4,"#));
        let back = Config::from_value(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn env_overrides() {
        let vars = [
            ("CGROUND_MU".to_string(), "0.25".to_string()),
            ("CGROUND_BM25__TOP_N".to_string(), "5".to_string()),
            ("CGROUND_SETUP".to_string(), "cg_full".to_string()),
            ("CGROUND_ADAPTERS__READER".to_string(), "python reader.py".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ];
        let c = Config::default().with_env(vars).unwrap();
        assert_eq!(c.mu, 0.25);
        assert_eq!(c.bm25.top_n, 5);
        assert_eq!(c.setup, Setup::CgFull);
        assert_eq!(c.adapters.reader.as_deref(), Some("python reader.py"));
        let bad = Config::default().with_env([("CGROUND_NOPE".to_string(), "1".to_string())]);
        assert!(matches!(bad, Err(Error::Config(_))));
        let bad = Config::default().with_env([("CGROUND_MU".to_string(), "3".to_string())]);
        assert!(bad.is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::from_value(serde_json::json!({"mu": 0.1, "bogus": 1})).is_err());
    }

    #[test]
    fn external_without_endpoint_is_config_error() {
        let c = Config {
            reader: ReaderKind::External,
            ..Config::default()
        };
        assert!(matches!(c.backends(None), Err(Error::Config(_))));
    }
}
