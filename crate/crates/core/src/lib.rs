//! Automated service integration toolkit: OpenAPI parsing, documentation
//! chunking, embedding-based endpoint discovery, prompt assembly, LLM-backed
//! composition generation, and a mock-server validation harness.

pub mod benchgen;
pub mod chunking;
pub mod discovery;
pub mod embedding;
pub mod harness;
pub mod index;
pub mod llm;
pub mod pipeline;
pub mod prompt;
pub mod spec_model;
pub mod tokens;

pub use benchgen::{
    builtin_templates, generate_benchmark, generate_composition_scenarios, CompositionScenario,
    DomainTemplate, GenConfig, SplitMix64,
};
pub use chunking::{chunk_spec, Chunk, ChunkStrategy};
pub use discovery::{
    compute_metrics, discover, evaluate_benchmark, load_benchmark, DiscoveryBenchmark,
    DiscoveryQuery, DiscoveryResult, EndpointCatalog, MetricsAtK, MetricsReport, DEFAULT_K_VALUES,
};
pub use embedding::{
    cosine, embed_batch, hash_embed, CacheHandle, EmbeddingProviderConfig, EmbeddingVector,
    ProviderKind,
};
pub use harness::{
    run_and_score, start_mock, static_endpoint_scan, synthesize_example, validate_against_schema,
    InvocationRecord, MockHandle, RunConfig, ValidationReport,
};
pub use index::{
    build_index, load_index, persist_index, search_top_k, Index, IndexEntry, SearchHit,
};
pub use llm::{
    extract_code_block, extract_code_or_text, prompt_digest, CompositionArtifact, LlmClient,
    LlmConfig, LlmKind,
};
pub use pipeline::{compose, retrieve_and_assemble, ComposeOptions, ComposeOutcome};
pub use prompt::{assemble_prompt, CompositionTask, PromptBundle, DEFAULT_BUDGET, DEFAULT_TEMPLATE};
pub use spec_model::{
    list_endpoints, parse_spec, resolve_refs, schema_node_to_json, Endpoint, FormatHint, Method,
    ParamLocation, Parameter, SchemaKind, SchemaNode, ServiceSpec,
};
pub use tokens::{count_tokens, HeuristicCounter, TokenCounter};
