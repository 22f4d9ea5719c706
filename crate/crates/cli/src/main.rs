//! `insight`: ingest → generate → postprocess → score → emit → stats.
//!
//! Exit status is 0 on success, 1 on a usage error, 2 on a runtime failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use insight_browser::{load_probe_asset, BrowserFactory, BrowserOptions, LaunchedBrowser};
use insight_core::device::{builtin_profiles, extend_from_file};
use insight_core::emit::{emit_corpus, score_episodes, AmbiguityScorer, EmitConfig, EpisodeScore, Emitter, Templates};
use insight_core::fixture::FixtureCorpus;
use insight_core::ingest::{ingest_urls, read_content_sidecar, IngestOptions, RecordStatus, TextFilter, UrlRecord};
use insight_core::jsonl;
use insight_core::pipeline::{read_corpus, run_generate, write_corpus, GenerateConfig};
use insight_core::postprocess::{corpus_stats, filter_episodes, FilterOptions, StatsReport};
use insight_core::{EnvFactory, Limits, PolicyConfig};

/// Kept-corpus report copied next to the postprocessed shards.
const REPORT_FILE: &str = "postprocess-report.json";
const DEFAULT_SHARDS: usize = 16;

#[derive(Parser)]
#[command(name = "insight", version, about = "Build GUI-transition pretraining data from random walks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Fixture,
    Browser,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize, deduplicate and filter a URL list into a manifest.
    Ingest {
        #[arg(long)]
        urls: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the counts report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// `{url, text}` JSONL of known main content for the language and
        /// NSFW filters.
        #[arg(long)]
        content: Option<PathBuf>,
        /// Reject URLs that do not answer an HTTP request.
        #[arg(long)]
        check_reachable: bool,
    },
    /// Record episodes for every accepted manifest URL.
    Generate {
        /// Manifest from `ingest`. Without it, every fixture app is used.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "fixture")]
        backend: Backend,
        #[arg(long, default_value_t = 20)]
        episodes_per_ref: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        max_steps: usize,
        #[arg(long, default_value_t = 30_000)]
        timeout_ms: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = DEFAULT_SHARDS)]
        shards: usize,
        #[arg(long)]
        out: PathBuf,
        /// Fixture app directory for the fixture backend.
        #[arg(long, default_value = "fixtures")]
        fixtures: PathBuf,
        /// Extra device profiles (JSONL) added to the built-in registry.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Input phrase list, one per line.
        #[arg(long)]
        phrases: Option<PathBuf>,
        /// Browser debugging endpoint; without it INSIGHT_BROWSER is launched.
        #[arg(long)]
        endpoint: Option<String>,
        /// Probe asset; defaults to INSIGHT_PROBE or assets/probe.js.
        #[arg(long)]
        probe: Option<PathBuf>,
        /// Reject refs whose first page fails the language or NSFW filter.
        #[arg(long)]
        content_filter: bool,
    },
    /// Drop blank-page, duplicate-page and empty failed episodes.
    Postprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Also drop episodes whose start page repeats an earlier one.
        #[arg(long)]
        dedup_start_pages: bool,
    },
    /// Write per-episode losses.
    Score {
        #[arg(long = "in")]
        input: PathBuf,
        /// `default`, or `file:PATH` to import externally computed losses.
        #[arg(long, default_value = "default")]
        scorer: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit stepwise and reorder pretraining samples.
    Emit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        style_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Print episode, image and domain counts of a corpus.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            urls,
            out,
            report,
            content,
            check_reachable,
        } => {
            let sidecar = content.map(|p| read_content_sidecar(&p)).transpose()?;
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(10)))
                .http_status_as_error(false)
                .build()
                .new_agent();
            let probe = |u: &url::Url| agent.head(u.as_str()).call().is_ok();
            let opts = IngestOptions {
                content: sidecar.as_ref(),
                reachable: if check_reachable { Some(&probe) } else { None },
                ..IngestOptions::new()
            };
            let manifest = ingest_urls(&urls, &opts)?;
            jsonl::write_all(&out, &manifest.records).with_context(|| format!("writing {}", out.display()))?;
            match report {
                Some(p) => write_json(&p, &manifest.report),
                None => print_json(&manifest.report),
            }
        }
        Command::Generate {
            manifest,
            backend,
            episodes_per_ref,
            seed,
            max_steps,
            timeout_ms,
            workers,
            shards,
            out,
            fixtures,
            profiles,
            phrases,
            endpoint,
            probe,
            content_filter,
        } => {
            if workers == 0 || shards == 0 || max_steps == 0 || episodes_per_ref == 0 {
                bail!("--workers, --shards, --max-steps and --episodes-per-ref must be positive");
            }
            let mut registry = builtin_profiles();
            if let Some(p) = profiles {
                extend_from_file(&mut registry, &p)?;
            }
            let policy = match phrases {
                Some(p) => PolicyConfig::with_phrases_file(&p).with_context(|| format!("reading {}", p.display()))?,
                None => PolicyConfig::default(),
            };
            let cfg = GenerateConfig {
                episodes_per_ref,
                seed,
                limits: Limits { max_steps, timeout_ms },
                workers,
                shards,
                policy,
                profiles: registry,
                content_filter: content_filter.then(TextFilter::default),
                stop_after_refs: None,
            };
            let manifest_refs = manifest.map(|m| read_manifest(&m)).transpose()?;
            match backend {
                Backend::Fixture => {
                    let corpus = FixtureCorpus::load_dir(&fixtures)
                        .with_context(|| format!("loading fixtures from {}", fixtures.display()))?;
                    let refs = manifest_refs.unwrap_or_else(|| corpus.start_refs());
                    generate(&corpus, &refs, &out, &cfg)
                }
                Backend::Browser => {
                    let Some(refs) = manifest_refs else {
                        bail!("--backend browser needs --manifest");
                    };
                    let script = load_probe_asset(probe.as_deref())?;
                    let options = BrowserOptions {
                        nav_timeout_ms: timeout_ms,
                        screenshot_dir: Some(out.join("screenshots")),
                        ..BrowserOptions::new(script)
                    };
                    let profile_dir = tempfile::tempdir()?;
                    let _launched;
                    let endpoint = match endpoint {
                        Some(e) => e,
                        None => {
                            let b = LaunchedBrowser::from_env(profile_dir.path(), Duration::from_secs(30))?;
                            let url = b.ws_url.clone();
                            _launched = b;
                            url
                        }
                    };
                    let factory = BrowserFactory::connect(&endpoint, options)?;
                    generate(&factory, &refs, &out, &cfg)
                }
            }
        }
        Command::Postprocess {
            input,
            out,
            report,
            dedup_start_pages,
        } => {
            let episodes = read_corpus(&input)?;
            let (kept, drops) = filter_episodes(episodes, FilterOptions { dedup_start_pages });
            write_corpus(&out, &kept, DEFAULT_SHARDS)?;
            let stats = StatsReport::new(&kept, &drops);
            write_json(&report, &stats)?;
            write_json(&out.join(REPORT_FILE), &stats)?;
            print_json(&stats)
        }
        Command::Score { input, scorer, out } => {
            let episodes = read_corpus(&input)?;
            let scores = if scorer == "default" {
                score_episodes(&episodes, &AmbiguityScorer)
            } else if let Some(path) = scorer.strip_prefix("file:") {
                let imported: Vec<EpisodeScore> =
                    jsonl::read_all(Path::new(path)).with_context(|| format!("reading scores from {path}"))?;
                // validated against the corpus here so a bad file fails early
                insight_core::emit::split_by_score(&episodes, &imported)?;
                imported
            } else {
                bail!("unknown scorer {scorer:?}; use default or file:PATH");
            };
            jsonl::write_all(&out, &scores).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("scored {} episodes", scores.len());
            Ok(())
        }
        Command::Emit {
            input,
            scores,
            style_ratio,
            seed,
            out,
            templates,
        } => {
            if !(0.0..=1.0).contains(&style_ratio) {
                bail!("--style-ratio must be within [0, 1]");
            }
            let episodes = read_corpus(&input)?;
            let scores: Vec<EpisodeScore> =
                jsonl::read_all(&scores).with_context(|| format!("reading {}", scores.display()))?;
            let templates = match templates {
                Some(p) => Templates::from_json(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => Templates::default(),
            };
            let cfg = EmitConfig { style_ratio, seed };
            let (samples, report) = emit_corpus(&episodes, &scores, &cfg, &Emitter::new(templates))?;
            jsonl::write_all(&out, &samples).with_context(|| format!("writing {}", out.display()))?;
            print_json(&report)
        }
        Command::Stats { input } => {
            let kept = read_corpus(&input)?;
            let collected = match fs::read_to_string(input.join(REPORT_FILE)) {
                Ok(text) => serde_json::from_str::<StatsReport>(&text)?.collected,
                Err(_) => kept.len(),
            };
            print_json(&corpus_stats(&kept, collected))
        }
    }
}

fn read_manifest(path: &Path) -> Result<Vec<String>> {
    let records: Vec<UrlRecord> = jsonl::read_all(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let refs: Vec<String> = records
        .into_iter()
        .filter(|r| r.status == RecordStatus::Accepted)
        .map(|r| r.url)
        .collect();
    if refs.is_empty() {
        bail!("manifest {} has no accepted URLs", path.display());
    }
    Ok(refs)
}

fn generate<F: EnvFactory>(factory: &F, refs: &[String], out: &Path, cfg: &GenerateConfig) -> Result<()> {
    let summary = run_generate(factory, refs, out, cfg)?;
    let ledger = insight_core::pipeline::RunLedger::load(&out.join(insight_core::pipeline::LEDGER_FILE))?;
    let failed: BTreeMap<&String, &str> = ledger
        .refs
        .iter()
        .filter_map(|(r, e)| e.last_error.as_deref().map(|err| (r, err)))
        .collect();
    for (r, err) in failed {
        eprintln!("{r}: {err}");
    }
    print_json(&summary)
}
