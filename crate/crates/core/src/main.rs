use std::io::{BufReader, IsTerminal};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cground::adapter::{serve_lines, EchoBackend};
use cground::annotate::ReferenceAnnotator;
use cground::config::Config;
use cground::eval::{default_grid, load_mu_table, save_mu_table, Benchmark, MuTable};
use cground::gold::{build_gold_cg, build_selector_examples, doc_coverage, enrich_with_doc, load_doc_source, split_train_validation};
use cground::model::{load_dataset, load_passages, save_dataset, write_jsonl, Conversation, DocumentContext};
use cground::retrieval::Index;
use cground::service::{run_repl, AppState, Assistant, ServerHandle};
use cground::setups::Setup;
use cground::{Error, Result};

#[derive(Parser)]
#[command(name = "cground", version, about = "Common-ground conversational question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attach documents and gold CG to a dataset.
    BuildGoldCg {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        doc_source: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Derive selector training examples from an enriched dataset.
    BuildSelectorData {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Conversation-level train/validation split.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to `<in>.train.jsonl`.
        #[arg(long)]
        train_out: Option<PathBuf>,
        /// Defaults to `<in>.validation.jsonl`.
        #[arg(long)]
        validation_out: Option<PathBuf>,
    },
    /// Build and persist a BM25 index over a passage collection.
    Index {
        #[arg(long)]
        collection: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Evaluate setups and print the results table.
    Bench {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, default_value = "original,concat,rewrite,summary,cg,cg_full,cg_full_cg,rewrite_g,cg_g")]
        setups: String,
        #[arg(long)]
        mu_file: Option<PathBuf>,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print JSON instead of the table.
        #[arg(long)]
        json: bool,
        /// Write per-turn records as JSON lines.
        #[arg(long)]
        emit_records: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Grid-search μ for one setup on a validation set.
    TuneMu {
        #[arg(long)]
        setup: Setup,
        #[arg(long)]
        validation: PathBuf,
        #[arg(long)]
        index: Option<PathBuf>,
        /// Comma-separated μ values; defaults to 0, 0.05, ..., 1.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value = "mu.json")]
        mu_file: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Interactive conversation on stdin.
    Chat {
        #[arg(long)]
        index: Option<PathBuf>,
        #[command(flatten)]
        doc: DocArgs,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// HTTP session API.
    Serve {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        session_log: Option<PathBuf>,
        #[arg(long)]
        session_ttl_secs: Option<u64>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Canned-response adapter on stdin/stdout.
    AdapterEcho {
        #[arg(long)]
        fixtures: PathBuf,
    },
    /// Write the built-in evaluation fixture.
    Fixture {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DocArgs {
    #[arg(long)]
    doc_title: Option<String>,
    #[arg(long)]
    doc_first_sentence: Option<String>,
}

/// Options that override the config file.
#[derive(Args, Default)]
struct Settings {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    selector: Option<String>,
    #[arg(long)]
    reader: Option<String>,
    #[arg(long)]
    annotator: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "default-setup")]
    default_setup: Option<String>,
    #[arg(long)]
    history: Option<String>,
    #[arg(long)]
    fusion_raw: bool,
    #[arg(long)]
    stem: bool,
    #[arg(long)]
    stopwords: bool,
}

impl Settings {
    fn resolve(&self) -> Result<Config> {
        let base = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let mut overrides = Vec::new();
        let mut set = |k: &str, v: String| overrides.push((format!("CGROUND_{k}"), v));
        for (k, v) in [
            ("GENERATOR", &self.generator),
            ("SELECTOR", &self.selector),
            ("READER", &self.reader),
            ("ANNOTATOR", &self.annotator),
            ("SETUP", &self.default_setup),
            ("HISTORY", &self.history),
        ] {
            if let Some(v) = v {
                set(k, serde_json::to_string(v)?);
            }
        }
        if let Some(mu) = self.mu {
            set("MU", mu.to_string());
        }
        for (k, on) in [("FUSION_RAW", self.fusion_raw), ("STEM", self.stem), ("STOPWORDS", self.stopwords)] {
            if on {
                set(k, "true".into());
            }
        }
        base.with_process_env()?.with_env(overrides)
    }
}

fn required(value: Option<PathBuf>, fallback: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value
        .or_else(|| fallback.clone())
        .ok_or_else(|| Error::Argument(format!("--{flag} is required")))
}

fn sibling(input: &Path, suffix: &str) -> PathBuf {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    input.with_file_name(format!("{stem}.{suffix}.jsonl"))
}

fn optional_dataset(path: Option<PathBuf>, config: &Config) -> Result<Option<Vec<Conversation>>> {
    path.or_else(|| config.dataset.clone()).map(load_dataset).transpose()
}

fn parse_grid(grid: Option<&str>) -> Result<Vec<f64>> {
    match grid {
        None => Ok(default_grid()),
        Some(g) => g
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| Error::Argument(format!("grid value {s:?}: {e}"))))
            .collect(),
    }
}

fn doc_context(doc: DocArgs) -> Option<DocumentContext> {
    match (doc.doc_title, doc.doc_first_sentence) {
        (None, None) => None,
        (t, s) => Some(DocumentContext::new(t.unwrap_or_default(), s.unwrap_or_default())),
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{value}");
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildGoldCg {
            input,
            doc_source,
            out,
            settings,
        } => {
            let config = settings.resolve()?;
            let annotator = ReferenceAnnotator::new(config.annotator);
            let docs = doc_source.map(load_doc_source).transpose()?.unwrap_or_default();
            let enriched = load_dataset(&input)?
                .iter()
                .map(|c| build_gold_cg(&enrich_with_doc(c, &docs), &annotator))
                .collect::<Result<Vec<_>>>()?;
            save_dataset(&out, &enriched)?;
            print_json(&json!({
                "conversations": enriched.len(),
                "doc_coverage": doc_coverage(&enriched),
                "out": out,
            }));
        }
        Command::BuildSelectorData { input, out } => {
            let examples: Vec<_> = load_dataset(&input)?.iter().flat_map(build_selector_examples).collect();
            write_jsonl(&out, &examples)?;
            print_json(&json!({ "examples": examples.len(), "out": out }));
        }
        Command::Split {
            input,
            fraction,
            seed,
            train_out,
            validation_out,
        } => {
            let (train, val) = split_train_validation(&load_dataset(&input)?, fraction, seed)?;
            let train_out = train_out.unwrap_or_else(|| sibling(&input, "train"));
            let val_out = validation_out.unwrap_or_else(|| sibling(&input, "validation"));
            save_dataset(&train_out, &train)?;
            save_dataset(&val_out, &val)?;
            print_json(&json!({
                "train": train.len(), "train_out": train_out,
                "validation": val.len(), "validation_out": val_out,
            }));
        }
        Command::Index {
            collection,
            out,
            settings,
        } => {
            let config = settings.resolve()?;
            let index = Index::build(load_passages(&collection)?, config.analyzer())?;
            index.save(&out)?;
            print_json(&json!({
                "passages": index.len(),
                "vocabulary": index.vocabulary_size(),
                "avgdl": index.avgdl(),
                "out": out,
            }));
        }
        Command::Bench {
            dataset,
            index,
            setups,
            mu_file,
            out,
            json,
            emit_records,
            settings,
        } => {
            let config = settings.resolve()?;
            let setups = Setup::parse_list(&setups)?;
            let dataset = load_dataset(required(dataset, &config.dataset, "dataset")?)?;
            let index = Index::load(required(index, &config.index, "index")?)?;
            let mus: MuTable = mu_file.map(load_mu_table).transpose()?.unwrap_or_default();
            let backends = config.backends(Some(&dataset))?;
            let bench = Benchmark::new(&index, &dataset, &backends, config.bench_config());
            let report = bench.run(&setups, &mus);
            if let Some(path) = &out {
                let text = serde_json::to_string_pretty(&report.to_json())? + "\n";
                std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
            }
            if let Some(path) = &emit_records {
                write_jsonl(path, &report.records)?;
            }
            if json {
                print_json(&report.to_json());
            } else {
                print!("{}", report.to_table(&config.recall_ks));
            }
        }
        Command::TuneMu {
            setup,
            validation,
            index,
            grid,
            mu_file,
            settings,
        } => {
            let config = settings.resolve()?;
            let grid = parse_grid(grid.as_deref())?;
            let dataset = load_dataset(&validation)?;
            let index = Index::load(required(index, &config.index, "index")?)?;
            let backends = config.backends(Some(&dataset))?;
            let mu = Benchmark::new(&index, &dataset, &backends, config.bench_config()).tune(setup, &grid)?;
            let mut table = if mu_file.exists() { load_mu_table(&mu_file)? } else { MuTable::new() };
            table.insert(setup.as_str().to_string(), mu);
            save_mu_table(&mu_file, &table)?;
            print_json(&json!({ "setup": setup.as_str(), "mu": mu, "mu_file": mu_file }));
        }
        Command::Chat {
            index,
            doc,
            dataset,
            settings,
        } => {
            let config = settings.resolve()?;
            let index = Index::load(required(index, &config.index, "index")?)?;
            let dataset = optional_dataset(dataset, &config)?;
            let backends = config.backends(dataset.as_deref())?;
            let assistant = Assistant::new(Arc::new(index), backends, &config)?;
            let stdin = std::io::stdin();
            let color = std::io::stdout().is_terminal();
            if stdin.is_terminal() {
                eprintln!("ask a question; :reset starts over, :quit exits");
            }
            run_repl(&assistant, doc_context(doc), stdin.lock(), std::io::stdout().lock(), color)?;
        }
        Command::Serve {
            index,
            bind,
            session_log,
            session_ttl_secs,
            dataset,
            settings,
        } => {
            let config = settings.resolve()?;
            let index = Index::load(required(index, &config.index, "index")?)?;
            let dataset = optional_dataset(dataset, &config)?;
            let backends = config.backends(dataset.as_deref())?;
            let assistant = Assistant::new(Arc::new(index), backends, &config)?;
            let ttl = Duration::from_secs(session_ttl_secs.unwrap_or(config.session_ttl_secs));
            let log = session_log.or(config.session_log.clone());
            let state = AppState::new(Arc::new(assistant), ttl, log.as_deref())?;
            let server = ServerHandle::start(state, bind.as_deref().unwrap_or(&config.bind))?;
            print_json(&json!({ "listening": server.addr.to_string() }));
            server.wait()?;
        }
        Command::AdapterEcho { fixtures } => {
            let echo = EchoBackend::load(&fixtures)?;
            let stdin = std::io::stdin();
            serve_lines(BufReader::new(stdin.lock()), std::io::stdout().lock(), &|r| echo.respond(r))?;
        }
        Command::Fixture { out } => {
            let fixture = cground::fixture::build();
            fixture.write_to(&out)?;
            print_json(&json!({
                "conversations": fixture.conversations.len(),
                "passages": fixture.passages.len(),
                "out": out,
            }));
        }
    }
    Ok(())
}

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", json!({"error": {"kind": kind, "message": message}}));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            return fail("usage", first);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
