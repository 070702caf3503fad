use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tapersona::coding::Dimension;
use tapersona::config::{CorpusSource, PipelineConfig, ProviderKind};
use tapersona::persona::{enumerate_tuples, manual_selection, select_tuples, PairMode, Persona};
use tapersona::pipeline::{build_provider, replay_run, Pipeline, RunStatus, RunSummary};
use tapersona::report::methods_report;
use tapersona::review::DecisionFile;
use tapersona::store::{read_manifest, ArtifactKind, RunStore};
use tapersona::synthetic::write_synthetic_corpus;
use tapersona::trace::{render_trace_table, TraceReport};

/// Exit status when a run stops at the review gate.
const EXIT_AWAITING_DECISION: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "tapersona", version, about = "Thematic analysis of interviews and persona writing with a language model")]
struct Cli {
    /// Directory holding `runs/`.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    #[arg(long, global = true, default_value = "default")]
    run_id: String,
    /// TOML configuration. Only used when the run is created.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["mock", "live"])]
    provider: Option<String>,
    /// Persona seed. Sets the run's seed when the run is created; for
    /// `persona` on an existing run it seeds that one selection.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Canned responses for the mock provider.
    #[arg(long, global = true)]
    mock_fixture: Option<PathBuf>,
    /// Directory of `.txt` transcripts; the synthetic corpus otherwise.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic interview corpus to a directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = tapersona::synthetic::DEFAULT_SEED)]
        corpus_seed: u64,
    },
    /// Load and chunk the corpus.
    Ingest,
    /// Extract codes from every chunk.
    Code {
        #[arg(long)]
        dimension: Option<Dimension>,
    },
    /// Merge duplicate codes.
    Reduce {
        #[arg(long)]
        dimension: Option<Dimension>,
    },
    /// Group reduced codes into baseline themes.
    Theme {
        #[arg(long)]
        dimension: Option<Dimension>,
    },
    /// Run the variability tests and score theme consistency.
    Evaluate {
        #[arg(long)]
        dimension: Option<Dimension>,
    },
    /// Submit review decisions and build the final themes.
    Finalize {
        #[arg(long)]
        dimension: Option<Dimension>,
        /// TOML decision file.
        #[arg(long)]
        decisions: Option<PathBuf>,
    },
    /// List the theme pairs a final theme book allows.
    Tuples {
        #[arg(long)]
        dimension: Dimension,
        #[arg(long, default_value = "unordered_with_repetition")]
        mode: PairMode,
        /// Print every pair, not just the count.
        #[arg(long)]
        list: bool,
    },
    /// Write personas from the final themes.
    Persona {
        #[arg(long)]
        mode: Option<PairMode>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        strict: bool,
        /// Two need theme ids, comma separated, for a manual selection.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        needs: Option<Vec<String>>,
        /// Two challenge theme ids, comma separated, for a manual selection.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        challenges: Option<Vec<String>>,
    },
    /// Trace personas back to the codes of their themes.
    Trace {
        /// Persona digest; every persona of the run if omitted.
        #[arg(long)]
        persona: Option<String>,
    },
    /// Methodology summary of the run in Markdown.
    Report {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage, stopping at the review gate without decisions.
    Run {
        #[arg(long)]
        decisions: Option<PathBuf>,
    },
    /// Regenerate a run from its manifest into `--run-id` and compare digests.
    Replay {
        #[arg(long)]
        from: String,
    },
    /// Serve the review API.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

impl Cli {
    fn overrides_config(&self) -> bool {
        self.config.is_some() || self.provider.is_some() || self.mock_fixture.is_some() || self.corpus.is_some()
    }

    fn build_config(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => PipelineConfig::default(),
        };
        if let Some(p) = &self.provider {
            config.provider = p.parse::<ProviderKind>()?;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(f) = &self.mock_fixture {
            config.mock_fixture = Some(f.clone());
        }
        if let Some(dir) = &self.corpus {
            config.corpus = CorpusSource::Directory { path: dir.clone() };
        }
        Ok(config)
    }

    fn store(&self) -> RunStore {
        RunStore::new(&self.workdir)
    }

    /// The run's pipeline: reopened with its recorded configuration, or
    /// created from the flags.
    fn pipeline(&self) -> Result<Pipeline> {
        let store = self.store();
        if store.run_exists(&self.run_id) && !self.overrides_config() {
            return Ok(Pipeline::resume(store, &self.run_id, None)?);
        }
        let config = self.build_config()?;
        let provider = build_provider(&config)?;
        Ok(Pipeline::start(store, &self.run_id, config, provider)?)
    }
}

fn dims(d: Option<Dimension>) -> Vec<Dimension> {
    d.map_or_else(|| Dimension::ALL.to_vec(), |d| vec![d])
}

fn read_decisions(path: &Path) -> Result<DecisionFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(DecisionFile::from_toml(&text)?)
}

fn print_summary(summary: &RunSummary) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(summary)?);
    Ok(())
}

fn pair(v: &[String]) -> (String, String) {
    (v[0].clone(), v[1].clone())
}

fn print_persona(digest: &str, p: &Persona) {
    println!("persona {digest}");
    println!("  name: {}  country: {}  age: {}", p.name, p.country, p.age_text);
    println!("  goal: {}", p.goal);
    for f in &p.validation {
        println!("  {:?} {}: {}", f.severity, f.rule, f.detail);
    }
}

fn execute(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Synth { out, corpus_seed } => {
            let docs = write_synthetic_corpus(out, *corpus_seed)?;
            println!("wrote {} transcripts to {}", docs.len(), out.display());
        }
        Command::ShowConfig => {
            let store = cli.store();
            let config = if store.run_exists(&cli.run_id) && !cli.overrides_config() {
                PipelineConfig::from_snapshot(&read_manifest(&store.manifest_path(&cli.run_id))?.header.config)?
            } else {
                cli.build_config()?
            };
            print!("{}", config.to_toml());
        }
        Command::Ingest => {
            let mut p = cli.pipeline()?;
            println!("corpus {}", p.ingest()?);
        }
        Command::Code { dimension } => {
            let mut p = cli.pipeline()?;
            for d in dims(*dimension) {
                println!("{d} raw codebook {}", p.code(d)?);
            }
        }
        Command::Reduce { dimension } => {
            let mut p = cli.pipeline()?;
            for d in dims(*dimension) {
                println!("{d} reduced codebook {}", p.reduce(d)?);
            }
        }
        Command::Theme { dimension } => {
            let mut p = cli.pipeline()?;
            for d in dims(*dimension) {
                println!("{d} baseline themes {}", p.theme(d)?);
            }
        }
        Command::Evaluate { dimension } => {
            let mut p = cli.pipeline()?;
            for d in dims(*dimension) {
                let out = p.evaluate(d)?;
                println!("{d} consistency report {}", out[0]);
                for row in &p.consistency_report(d)?.rows {
                    let flag = if row.weak_flag { "  WEAK" } else { "" };
                    println!(
                        "  {:<28} codes {:>2}  score {:.2}{flag}  {}",
                        row.theme_id, row.code_count, row.consistency_score, row.name
                    );
                }
            }
        }
        Command::Finalize { dimension, decisions } => {
            let mut p = cli.pipeline()?;
            let file = decisions.as_deref().map(read_decisions).transpose()?;
            let mut waiting = false;
            for d in dims(*dimension) {
                if p.decision(d)?.is_none() && p.state().get(&format!("finalize:{d}")).is_none() {
                    match file.as_ref().and_then(|f| f.get(d)) {
                        Some(decision) => {
                            p.evaluate(d)?;
                            println!("{d} decision {}", p.submit_decision(decision)?);
                        }
                        None => {
                            eprintln!("{d}: awaiting review decision (resume token: {})", p.run_id());
                            waiting = true;
                            continue;
                        }
                    }
                }
                println!("{d} final themes {}", p.finalize(d)?);
            }
            if waiting {
                return Ok(EXIT_AWAITING_DECISION);
            }
        }
        Command::Tuples { dimension, mode, list } => {
            let p = cli.pipeline()?;
            let book = p.final_book(*dimension)?;
            let pairs = enumerate_tuples(&book, *mode)?;
            println!("{} pairs from {} themes ({mode})", pairs.len(), book.themes.len());
            if *list {
                for (a, b) in &pairs {
                    println!("  {a}  {b}");
                }
            }
        }
        Command::Persona {
            mode,
            count,
            strict,
            needs,
            challenges,
        } => {
            let mut p = cli.pipeline()?;
            let digests = match (needs, challenges) {
                (Some(n), Some(c)) => {
                    let nb = p.final_book(Dimension::Need)?;
                    let cb = p.final_book(Dimension::Challenge)?;
                    let sel = manual_selection(&nb, &cb, pair(n), pair(c), cli.seed.unwrap_or(p.config().seed))?;
                    p.generate_personas(&[sel], "cli", *strict)?
                }
                (None, None) if mode.is_none() && count.is_none() && !*strict && cli.seed.is_none() => p.personas()?,
                (None, None) => {
                    let nb = p.final_book(Dimension::Need)?;
                    let cb = p.final_book(Dimension::Challenge)?;
                    let mode = mode.unwrap_or(p.config().persona.mode);
                    let base = cli.seed.unwrap_or(p.config().seed);
                    let sels = (0..count.unwrap_or(p.config().persona.count) as u64)
                        .map(|i| select_tuples(&nb, &cb, base + i, mode))
                        .collect::<tapersona::Result<Vec<_>>>()?;
                    p.generate_personas(&sels, "cli", *strict)?
                }
                _ => bail!("--needs and --challenges go together"),
            };
            for d in digests {
                print_persona(&d, &p.load(&d)?);
            }
        }
        Command::Trace { persona } => {
            let mut p = cli.pipeline()?;
            let personas = match persona {
                Some(d) => vec![d.clone()],
                None => p.store().list_artifacts(p.run_id(), ArtifactKind::Persona)?,
            };
            if personas.is_empty() {
                bail!("run {} has no personas", p.run_id());
            }
            for d in personas {
                let digest = p.trace(&d)?;
                let report: TraceReport = p.load(&digest)?;
                println!("trace {digest}\n{}", render_trace_table(&report));
            }
        }
        Command::Report { out } => {
            let p = cli.pipeline()?;
            let text = methods_report(&p.manifest().snapshot(), p.templates())?;
            match out {
                Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
        Command::Run { decisions } => {
            let mut p = cli.pipeline()?;
            let file = decisions.as_deref().map(read_decisions).transpose()?;
            let summary = p.run(file.as_ref())?;
            print_summary(&summary)?;
            if let RunStatus::AwaitingDecision { dimensions, resume_token } = &summary.status {
                let names: Vec<String> = dimensions.iter().map(ToString::to_string).collect();
                eprintln!(
                    "awaiting review decision for {}; resume with: tapersona --run-id {resume_token} run --decisions <file>",
                    names.join(", ")
                );
                return Ok(EXIT_AWAITING_DECISION);
            }
        }
        Command::Replay { from } => {
            let report = replay_run(&cli.store(), from, &cli.run_id)?;
            for s in &report.stages {
                println!("{} {}", if s.matches() { "same" } else { "DIFF" }, s.stage);
            }
            if !report.all_match() {
                bail!("replay of {from} did not reproduce every artifact");
            }
            println!("all {} stages reproduced", report.stages.len());
        }
        Command::Serve { port, bind } => {
            let addr = SocketAddr::new(*bind, *port);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(tapersona_review::serve(cli.store(), addr, None))?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
