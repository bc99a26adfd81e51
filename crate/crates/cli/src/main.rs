//! `apicompose`: end-to-end pipeline binary. Exit codes: 0 success, 1 domain
//! error (validation, format, retrieval), 2 usage error, 3 provider or
//! transport error. Every failure prints one machine-parseable JSON object to
//! stderr: {"error": code, "detail": text}.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use apicompose_core::benchgen::{
    builtin_templates, generate_benchmark, generate_composition_scenarios, load_scenarios_file,
    load_templates, write_scenarios_file, CompositionScenario, GenConfig,
};
use apicompose_core::chunking::{chunk_spec, ChunkStrategy};
use apicompose_core::discovery::{
    discover, evaluate_benchmark, load_benchmark, metrics_report_csv, EndpointCatalog,
    DEFAULT_K_VALUES,
};
use apicompose_core::embedding::{
    embed_batch, CacheHandle, EmbeddingError, EmbeddingProviderConfig,
};
use apicompose_core::harness::{run_and_score, start_mock, RunConfig};
use apicompose_core::index::{build_index, load_index, persist_index, IndexEntry};
use apicompose_core::llm::{CompositionArtifact, LlmClient, LlmConfig, LlmError};
use apicompose_core::pipeline::{compose, ComposeOptions};
use apicompose_core::prompt::{CompositionTask, DEFAULT_BUDGET, DEFAULT_TEMPLATE};
use apicompose_core::spec_model::{
    list_endpoints, parse_spec, parse_schema, resolve_refs, FormatHint, ServiceSpec,
};

#[derive(Parser)]
#[command(
    name = "apicompose",
    about = "OpenAPI ingestion, embedding-based endpoint discovery, prompt assembly, \
             composition generation, and validation against invocation-tracking mocks",
    version
)]
struct Cli {
    /// JSON config file with optional `embedding` and `llm` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for the content-addressed embedding cache.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a spec, resolve references, and print a summary.
    Validate { spec: PathBuf },
    /// Print the chunks a spec produces under a strategy.
    Chunk {
        spec: PathBuf,
        #[arg(long, default_value = "endpoint_full")]
        strategy: String,
    },
    /// Chunk and embed specs, then persist a search index.
    Index {
        specs: Vec<PathBuf>,
        #[arg(long, default_value = "endpoint_full")]
        strategy: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank endpoints of an index against a free-text query.
    Discover {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Specs backing the index, needed to expand whole-spec chunks.
        #[arg(long)]
        services: Vec<PathBuf>,
    },
    /// Evaluate a discovery benchmark and report recall/precision/f1.
    Eval {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long, default_value = "endpoint_full")]
        strategy: String,
        #[arg(long, default_value_t = 5)]
        k_chunks: usize,
        /// Report cutoffs, comma separated.
        #[arg(long, value_delimiter = ',')]
        k_values: Vec<usize>,
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Generate a seeded synthetic benchmark with known ground truth.
    Benchgen(BenchgenArgs),
    /// Full pipeline: retrieve documentation for a task and generate code.
    Compose(ComposeArgs),
    /// Serve an invocation-tracking mock for a spec.
    MockServe {
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// Stop automatically after this many milliseconds (for scripts).
        #[arg(long)]
        serve_millis: Option<u64>,
    },
    /// Run a composition artifact against scenario mocks and score it.
    Score(ScoreArgs),
}

#[derive(Args)]
struct BenchgenArgs {
    #[arg(long)]
    seed: u64,
    /// Sector slugs, comma separated; defaults to all built-in sectors.
    #[arg(long, value_delimiter = ',')]
    sectors: Vec<String>,
    #[arg(long, default_value_t = 3)]
    services_per_sector: usize,
    #[arg(long, default_value_t = 10)]
    endpoints_per_service: usize,
    #[arg(long, default_value_t = 5)]
    queries_per_service: usize,
    #[arg(long, default_value_t = 0)]
    scenarios: usize,
    #[arg(long)]
    out: PathBuf,
    /// Alternative domain vocabulary file.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args)]
struct ComposeArgs {
    /// Natural-language task description.
    #[arg(long)]
    task: String,
    /// Input and output schema files (JSON schema documents).
    #[arg(long)]
    input_schema: PathBuf,
    #[arg(long)]
    output_schema: PathBuf,
    #[arg(long, default_value = "python")]
    runtime: String,
    #[arg(long, required = true)]
    services: Vec<PathBuf>,
    #[arg(long, default_value = "endpoint_full")]
    strategy: String,
    #[arg(long, default_value_t = 10)]
    k_chunks: usize,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value = DEFAULT_TEMPLATE)]
    template: String,
    /// Write the generated code here in addition to the JSON report.
    #[arg(long)]
    code_out: Option<PathBuf>,
    /// File whose contents serve as a scripted mock LLM response
    /// (repeatable); overrides the config's llm section.
    #[arg(long)]
    mock_response: Vec<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// File containing the composition code.
    #[arg(long)]
    artifact: PathBuf,
    /// Scenario file produced by benchgen.
    #[arg(long)]
    scenario: PathBuf,
    /// Which scenario to score; defaults to the first.
    #[arg(long)]
    scenario_id: Option<String>,
    /// Command template; `{code_file}` and `{input_file}` are substituted.
    /// The child runs unsandboxed apart from a wall-clock timeout, so only
    /// score code you are prepared to execute.
    #[arg(long)]
    runner: String,
    #[arg(long, default_value = "python")]
    runtime: String,
    /// Input document file; defaults to an empty JSON object.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
}

struct CliError {
    code: &'static str,
    detail: String,
    exit: u8,
}

impl CliError {
    fn domain(code: &'static str, detail: impl ToString) -> Self {
        CliError {
            code,
            detail: detail.to_string(),
            exit: 1,
        }
    }

    fn provider(code: &'static str, detail: impl ToString) -> Self {
        CliError {
            code,
            detail: detail.to_string(),
            exit: 3,
        }
    }
}

impl From<apicompose_core::spec_model::SpecError> for CliError {
    fn from(e: apicompose_core::spec_model::SpecError) -> Self {
        CliError::domain("spec_error", e)
    }
}

impl From<apicompose_core::chunking::ChunkError> for CliError {
    fn from(e: apicompose_core::chunking::ChunkError) -> Self {
        CliError::domain("chunk_error", e)
    }
}

impl From<apicompose_core::index::IndexError> for CliError {
    fn from(e: apicompose_core::index::IndexError) -> Self {
        CliError::domain("index_error", e)
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::ProviderUnreachable(_) | EmbeddingError::ProviderError { .. } => {
                CliError::provider("embedding_provider_error", e)
            }
            other => CliError::domain("embedding_error", other),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::ProviderUnreachable(_) | LlmError::ProviderError { .. } => {
                CliError::provider("llm_provider_error", e)
            }
            other => CliError::domain("llm_error", other),
        }
    }
}

impl From<apicompose_core::discovery::DiscoveryError> for CliError {
    fn from(e: apicompose_core::discovery::DiscoveryError) -> Self {
        use apicompose_core::discovery::DiscoveryError as D;
        match e {
            D::Embedding(inner) => inner.into(),
            other => CliError::domain("benchmark_error", other),
        }
    }
}

impl From<apicompose_core::benchgen::BenchgenError> for CliError {
    fn from(e: apicompose_core::benchgen::BenchgenError) -> Self {
        CliError::domain("benchgen_error", e)
    }
}

impl From<apicompose_core::prompt::PromptError> for CliError {
    fn from(e: apicompose_core::prompt::PromptError) -> Self {
        CliError::domain("prompt_error", e)
    }
}

impl From<apicompose_core::harness::HarnessError> for CliError {
    fn from(e: apicompose_core::harness::HarnessError) -> Self {
        CliError::domain("harness_error", e)
    }
}

impl From<apicompose_core::pipeline::PipelineError> for CliError {
    fn from(e: apicompose_core::pipeline::PipelineError) -> Self {
        use apicompose_core::pipeline::PipelineError as P;
        match e {
            P::Embedding(inner) => inner.into(),
            P::Llm(inner) => inner.into(),
            P::Chunk(inner) => inner.into(),
            P::Index(inner) => inner.into(),
            P::Prompt(inner) => inner.into(),
            P::NoServices => CliError::domain("pipeline_error", P::NoServices),
        }
    }
}

#[derive(Deserialize, Default)]
struct ConfigFile {
    embedding: Option<EmbeddingProviderConfig>,
    llm: Option<LlmConfig>,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::domain("config_error", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::domain("config_error", format!("{}: {e}", path.display())))
}

fn embedding_config(config: &ConfigFile) -> Result<EmbeddingProviderConfig, CliError> {
    let embedding = config
        .embedding
        .clone()
        .unwrap_or_else(|| EmbeddingProviderConfig::hashing(256));
    embedding.validate()?;
    Ok(embedding)
}

fn open_cache(dir: Option<&Path>) -> Result<CacheHandle, CliError> {
    match dir {
        Some(dir) => Ok(CacheHandle::new(dir)?),
        None => Ok(CacheHandle::disabled()),
    }
}

fn read_spec(path: &Path) -> Result<ServiceSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::domain("spec_error", format!("{}: {e}", path.display())))?;
    Ok(resolve_refs(&parse_spec(&text, FormatHint::Auto)?)?)
}

fn parse_strategy(name: &str) -> Result<ChunkStrategy, CliError> {
    ChunkStrategy::from_str(name).map_err(|e| CliError::domain("chunk_error", e))
}

fn read_to_string(path: &Path, code: &'static str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::domain(code, format!("{}: {e}", path.display())))
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": e.code, "detail": e.detail}));
            ExitCode::from(e.exit)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    let cache = open_cache(cli.cache_dir.as_deref())?;

    match cli.command {
        Command::Validate { spec } => {
            let resolved = read_spec(&spec)?;
            print_json(&json!({
                "service_id": resolved.service_id,
                "title": resolved.title,
                "version": resolved.version,
                "endpoint_count": resolved.endpoints.len(),
                "endpoints": list_endpoints(&resolved),
            }));
        }
        Command::Chunk { spec, strategy } => {
            let strategy = parse_strategy(&strategy)?;
            let resolved = read_spec(&spec)?;
            let chunks = chunk_spec(&resolved, strategy)?;
            print_json(&chunks);
        }
        Command::Index {
            specs,
            strategy,
            out,
        } => {
            if specs.is_empty() {
                return Err(CliError::domain("index_error", "no specs given"));
            }
            let strategy = parse_strategy(&strategy)?;
            let embedding = embedding_config(&config)?;
            let mut chunks = Vec::new();
            for path in &specs {
                chunks.extend(chunk_spec(&read_spec(path)?, strategy)?);
            }
            let texts: Vec<String> = chunks
                .iter()
                .map(|c| format!("{}{}", embedding.passage_prefix, c.text))
                .collect();
            let vectors = embed_batch(&texts, &embedding, &cache)?;
            let entries: Vec<IndexEntry> = chunks
                .into_iter()
                .zip(vectors)
                .map(|(chunk, vector)| IndexEntry {
                    chunk_id: chunk.chunk_id,
                    endpoint_id: chunk.endpoint_id,
                    service_id: chunk.service_id,
                    vector,
                })
                .collect();
            let index = build_index(entries, &embedding.model_id, strategy)?;
            persist_index(&index, &out)?;
            print_json(&json!({
                "index": out,
                "entries": index.len(),
                "dims": index.dims,
                "model_id": index.model_id,
                "strategy": index.strategy.as_str(),
            }));
        }
        Command::Discover {
            index,
            query,
            k,
            services,
        } => {
            let index = load_index(&index)?;
            let embedding = embedding_config(&config)?;
            let specs: Vec<ServiceSpec> = services
                .iter()
                .map(|p| read_spec(p))
                .collect::<Result<_, _>>()?;
            let catalog = EndpointCatalog::from_specs(&specs);
            let result = discover(&index, &embedding, &cache, &catalog, "cli", &query, k)?;
            print_json(&result);
        }
        Command::Eval {
            benchmark,
            strategy,
            k_chunks,
            k_values,
            format,
        } => {
            let strategy = parse_strategy(&strategy)?;
            let embedding = embedding_config(&config)?;
            let benchmark = load_benchmark(&benchmark)?;
            let k_values = if k_values.is_empty() {
                DEFAULT_K_VALUES.to_vec()
            } else {
                k_values
            };
            let report =
                evaluate_benchmark(&benchmark, strategy, &embedding, k_chunks, &k_values, &cache)?;
            match format.as_str() {
                "json" => print_json(&report),
                "csv" => print!("{}", metrics_report_csv(&report)),
                other => {
                    return Err(CliError::domain(
                        "format_error",
                        format!("unknown output format `{other}`"),
                    ))
                }
            }
        }
        Command::Benchgen(args) => {
            let templates = match &args.vocab {
                Some(path) => load_templates(path)?,
                None => builtin_templates(),
            };
            let sectors = if args.sectors.is_empty() {
                templates.iter().map(|t| t.sector.clone()).collect()
            } else {
                args.sectors
            };
            let gen = GenConfig {
                seed: args.seed,
                sectors,
                services_per_sector: args.services_per_sector,
                endpoints_per_service: args.endpoints_per_service,
                queries_per_service: args.queries_per_service,
                composition_scenarios: args.scenarios,
            };
            let benchmark = generate_benchmark(&gen, &templates, &args.out)?;
            let scenarios = generate_composition_scenarios(&gen, &benchmark)?;
            if !scenarios.is_empty() {
                write_scenarios_file(&args.out.join("scenarios.json"), &scenarios)?;
            }
            print_json(&json!({
                "out_dir": args.out,
                "services": benchmark.services.len(),
                "queries": benchmark.queries.len(),
                "scenarios": scenarios.len(),
            }));
        }
        Command::Compose(args) => {
            let strategy = parse_strategy(&args.strategy)?;
            let embedding = embedding_config(&config)?;
            let specs: Vec<ServiceSpec> = args
                .services
                .iter()
                .map(|p| read_spec(p))
                .collect::<Result<_, _>>()?;
            let task = CompositionTask {
                task_text: args.task,
                input_schema: read_to_string(&args.input_schema, "schema_error")?,
                output_schema: read_to_string(&args.output_schema, "schema_error")?,
                target_runtime_label: args.runtime,
            };
            let llm_config = if args.mock_response.is_empty() {
                config.llm.clone().ok_or_else(|| {
                    CliError::domain(
                        "config_error",
                        "compose needs an `llm` config section or --mock-response",
                    )
                })?
            } else {
                let script: Vec<String> = args
                    .mock_response
                    .iter()
                    .map(|p| read_to_string(p, "config_error"))
                    .collect::<Result<_, _>>()?;
                LlmConfig::mock(script)
            };
            let client = LlmClient::new(llm_config)?;
            let options = ComposeOptions {
                strategy,
                k_chunks: args.k_chunks,
                budget: args.budget,
                template_id: args.template,
            };
            let outcome = compose(&specs, &task, &options, &embedding, &cache, &client)?;
            if let Some(code_out) = &args.code_out {
                fs::write(code_out, &outcome.artifact.code_text)
                    .map_err(|e| CliError::domain("io_error", e))?;
            }
            print_json(&json!({
                "artifact": outcome.artifact,
                "retrieved_chunk_ids": outcome.retrieved_chunk_ids,
                "included_chunk_ids": outcome.bundle.included_chunk_ids,
                "dropped_chunk_ids": outcome.bundle.dropped_chunk_ids,
                "token_estimate": outcome.bundle.token_estimate,
                "budget": outcome.bundle.budget,
            }));
        }
        Command::MockServe {
            spec,
            port,
            serve_millis,
        } => {
            let resolved = read_spec(&spec)?;
            let mut handle = start_mock(&resolved, port)?;
            print_json(&json!({
                "service_id": handle.service_id,
                "base_url": handle.base_url,
            }));
            use std::io::Write;
            std::io::stdout().flush().ok();
            match serve_millis {
                Some(ms) => std::thread::sleep(Duration::from_millis(ms)),
                None => loop {
                    std::thread::sleep(Duration::from_secs(3600));
                },
            }
            handle.stop();
            print_json(&handle.log());
        }
        Command::Score(args) => {
            let scenarios = load_scenarios_file(&args.scenario)?;
            let scenario: &CompositionScenario = match &args.scenario_id {
                Some(id) => scenarios
                    .iter()
                    .find(|s| &s.scenario_id == id)
                    .ok_or_else(|| {
                        CliError::domain("scenario_error", format!("no scenario `{id}`"))
                    })?,
                None => scenarios
                    .first()
                    .ok_or_else(|| CliError::domain("scenario_error", "scenario file is empty"))?,
            };
            let base = args
                .scenario
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .to_path_buf();
            let specs: Vec<ServiceSpec> = scenario
                .services
                .iter()
                .map(|rel| read_spec(&base.join(rel)))
                .collect::<Result<_, _>>()?;
            let mocks = specs
                .iter()
                .map(|s| start_mock(s, 0))
                .collect::<Result<Vec<_>, _>>()?;

            let code_text = read_to_string(&args.artifact, "artifact_error")?;
            let artifact = CompositionArtifact {
                code_text,
                runtime_label: args.runtime.clone(),
                prompt_digest: String::new(),
                model_id: "external".into(),
                created_at: 0,
                raw_response: String::new(),
            };
            let input_document = match &args.input {
                Some(path) => serde_json::from_str(&read_to_string(path, "input_error")?)
                    .map_err(|e| CliError::domain("input_error", e))?,
                None => json!({}),
            };
            let output_schema_doc: serde_json::Value =
                serde_json::from_str(&scenario.output_schema)
                    .map_err(|e| CliError::domain("scenario_error", e))?;
            let output_schema = parse_schema(&output_schema_doc)?;
            let expected: BTreeSet<String> =
                scenario.expected_endpoint_ids.iter().cloned().collect();

            let mut run = RunConfig::new(&args.runner);
            run.timeout = Duration::from_secs(args.timeout_secs);
            let report = run_and_score(
                &artifact,
                &run,
                &mocks,
                &specs,
                &input_document,
                &expected,
                &output_schema,
            )?;
            print_json(&report);
        }
    }
    Ok(())
}
