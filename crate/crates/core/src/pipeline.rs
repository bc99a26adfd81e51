//! End-to-end composition pipeline: chunk, embed, retrieve, assemble the
//! prompt, and ask the model for code. Shared by the CLI and by integration
//! tests.

use serde::{Deserialize, Serialize};

use crate::chunking::{chunk_spec, Chunk, ChunkStrategy};
use crate::embedding::{embed_batch, CacheHandle, EmbeddingProviderConfig};
use crate::index::{build_index, search_top_k, IndexEntry};
use crate::llm::{CompositionArtifact, LlmClient};
use crate::prompt::{assemble_prompt, CompositionTask, PromptBundle};
use crate::spec_model::ServiceSpec;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("no service specs given")]
    NoServices,
    #[error(transparent)]
    Chunk(#[from] crate::chunking::ChunkError),
    #[error(transparent)]
    Embedding(#[from] crate::embedding::EmbeddingError),
    #[error(transparent)]
    Index(#[from] crate::index::IndexError),
    #[error(transparent)]
    Prompt(#[from] crate::prompt::PromptError),
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComposeOptions {
    pub strategy: ChunkStrategy,
    /// How many chunks retrieval offers to the prompt assembler.
    pub k_chunks: usize,
    pub budget: usize,
    pub template_id: String,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        ComposeOptions {
            strategy: ChunkStrategy::EndpointFull,
            k_chunks: 10,
            budget: crate::prompt::DEFAULT_BUDGET,
            template_id: crate::prompt::DEFAULT_TEMPLATE.to_string(),
        }
    }
}

pub struct ComposeOutcome {
    /// Chunks offered to the assembler, best first.
    pub retrieved_chunk_ids: Vec<String>,
    pub bundle: PromptBundle,
    pub artifact: CompositionArtifact,
}

/// Retrieve the chunks most relevant to the task text across all given
/// services and generate a composition from them.
pub fn compose(
    specs: &[ServiceSpec],
    task: &CompositionTask,
    options: &ComposeOptions,
    embedding: &EmbeddingProviderConfig,
    cache: &CacheHandle,
    client: &LlmClient,
) -> Result<ComposeOutcome, PipelineError> {
    let (ranked, bundle) = retrieve_and_assemble(specs, task, options, embedding, cache)?;
    let artifact = client.generate_composition(&bundle, &task.target_runtime_label)?;
    Ok(ComposeOutcome {
        retrieved_chunk_ids: ranked,
        bundle,
        artifact,
    })
}

/// The retrieval half of `compose`, usable on its own for prompt inspection.
pub fn retrieve_and_assemble(
    specs: &[ServiceSpec],
    task: &CompositionTask,
    options: &ComposeOptions,
    embedding: &EmbeddingProviderConfig,
    cache: &CacheHandle,
) -> Result<(Vec<String>, PromptBundle), PipelineError> {
    if specs.is_empty() {
        return Err(PipelineError::NoServices);
    }
    let mut chunks: Vec<Chunk> = Vec::new();
    for spec in specs {
        chunks.extend(chunk_spec(spec, options.strategy)?);
    }

    let texts: Vec<String> = chunks
        .iter()
        .map(|c| format!("{}{}", embedding.passage_prefix, c.text))
        .collect();
    let vectors = embed_batch(&texts, embedding, cache)?;
    let entries: Vec<IndexEntry> = chunks
        .iter()
        .zip(vectors)
        .map(|(chunk, vector)| IndexEntry {
            chunk_id: chunk.chunk_id.clone(),
            endpoint_id: chunk.endpoint_id.clone(),
            service_id: chunk.service_id.clone(),
            vector,
        })
        .collect();
    let index = build_index(entries, &embedding.model_id, options.strategy)?;

    let query = format!("{}{}", embedding.query_prefix, task.task_text);
    let query_vec = embed_batch(&[query], embedding, cache)?;
    let hits = search_top_k(&index, &query_vec[0], options.k_chunks)?;

    let ranked: Vec<Chunk> = hits
        .iter()
        .filter_map(|hit| chunks.iter().find(|c| c.chunk_id == hit.chunk_id).cloned())
        .collect();
    let ranked_ids: Vec<String> = ranked.iter().map(|c| c.chunk_id.clone()).collect();
    let bundle = assemble_prompt(task, &ranked, options.budget, &options.template_id)?;
    Ok((ranked_ids, bundle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::LlmConfig;
    use crate::spec_model::{parse_spec, resolve_refs, FormatHint};

    fn pet_spec() -> ServiceSpec {
        let spec = parse_spec(crate::spec_model::tests::PETSTORE_SPEC, FormatHint::Json).unwrap();
        resolve_refs(&spec).unwrap()
    }

    fn task() -> CompositionTask {
        CompositionTask {
            task_text: "List the pets in the store.".into(),
            input_schema: "{}".into(),
            output_schema: "{}".into(),
            target_runtime_label: "python".into(),
        }
    }

    #[test]
    fn compose_with_mock_returns_code_and_prompt() {
        let specs = [pet_spec()];
        let client = LlmClient::new(LlmConfig::mock(vec!["```python\nprint(42)\n```".into()]))
            .unwrap();
        let outcome = compose(
            &specs,
            &task(),
            &ComposeOptions::default(),
            &EmbeddingProviderConfig::hashing(64),
            &CacheHandle::disabled(),
            &client,
        )
        .unwrap();
        assert_eq!(outcome.artifact.code_text, "print(42)");
        assert!(!outcome.retrieved_chunk_ids.is_empty());
        assert!(outcome.bundle.user_text.contains("GET /pets"));
    }

    #[test]
    fn retrieval_is_deterministic() {
        let specs = [pet_spec()];
        let config = EmbeddingProviderConfig::hashing(64);
        let cache = CacheHandle::disabled();
        let options = ComposeOptions::default();
        let a = retrieve_and_assemble(&specs, &task(), &options, &config, &cache).unwrap();
        let b = retrieve_and_assemble(&specs, &task(), &options, &config, &cache).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn empty_spec_list_rejected() {
        let result = retrieve_and_assemble(
            &[],
            &task(),
            &ComposeOptions::default(),
            &EmbeddingProviderConfig::hashing(64),
            &CacheHandle::disabled(),
        );
        assert!(matches!(result, Err(PipelineError::NoServices)));
    }

    #[test]
    fn k_chunks_caps_offered_documentation() {
        let specs = [pet_spec()];
        let mut options = ComposeOptions::default();
        options.k_chunks = 1;
        let (ranked, _) = retrieve_and_assemble(
            &specs,
            &task(),
            &options,
            &EmbeddingProviderConfig::hashing(64),
            &CacheHandle::disabled(),
        )
        .unwrap();
        assert_eq!(ranked.len(), 1);
    }
}
