//! Query-to-endpoints discovery plus benchmark loading and IR metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chunking::{chunk_spec, ChunkStrategy};
use crate::embedding::{embed_batch, CacheHandle, EmbeddingError, EmbeddingProviderConfig};
use crate::index::{build_index, search_top_k, Index, IndexEntry, IndexError};
use crate::spec_model::{parse_spec, resolve_refs, FormatHint, Method, ServiceSpec, SpecError};

pub const DEFAULT_K_VALUES: [usize; 4] = [1, 3, 5, 10];

#[derive(Debug, thiserror::Error)]
pub enum DiscoveryError {
    #[error("format error: {0}")]
    FormatError(String),
    #[error("unknown endpoints: {}", .0.join(", "))]
    UnknownEndpoint(Vec<String>),
    #[error("query `{0}` has an empty expected set")]
    EmptyExpectedSet(String),
    #[error("index model `{index_model}` does not match config model `{config_model}`")]
    ModelMismatch {
        index_model: String,
        config_model: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Chunk(#[from] crate::chunking::ChunkError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryQuery {
    pub query_id: String,
    pub text: String,
    pub expected_endpoint_ids: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct DiscoveryBenchmark {
    pub name: String,
    pub service_files: Vec<PathBuf>,
    pub queries: Vec<DiscoveryQuery>,
    /// Parsed + resolved specs, in `service_files` order.
    pub services: Vec<ServiceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryResult {
    pub query_id: String,
    pub ranked_endpoint_ids: Vec<String>,
    pub scores: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtK {
    pub k: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub full_match: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub benchmark: String,
    pub strategy: ChunkStrategy,
    pub model_id: String,
    pub k_chunks: usize,
    pub k_values: Vec<usize>,
    pub per_query: BTreeMap<String, Vec<MetricsAtK>>,
    pub aggregates: Vec<MetricsAtK>,
}

// -------- benchmark file format --------

#[derive(Serialize, Deserialize)]
struct BenchmarkFile {
    name: String,
    services: Vec<String>,
    queries: Vec<BenchmarkQuery>,
}

#[derive(Serialize, Deserialize)]
struct BenchmarkQuery {
    id: String,
    query: String,
    expected: Vec<String>,
}

fn endpoint_id_shape_ok(id: &str) -> bool {
    match id.split_once(' ') {
        Some((method, path)) => Method::from_str(method).is_ok() && path.starts_with('/'),
        None => false,
    }
}

/// Load and validate a benchmark file; service paths resolve relative to it.
pub fn load_benchmark(path: &Path) -> Result<DiscoveryBenchmark, DiscoveryError> {
    let text = fs::read_to_string(path)
        .map_err(|e| DiscoveryError::FormatError(format!("{}: {e}", path.display())))?;
    let file: BenchmarkFile = serde_json::from_str(&text)
        .map_err(|e| DiscoveryError::FormatError(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let mut services = Vec::new();
    let mut service_files = Vec::new();
    let mut known_endpoints = BTreeSet::new();
    for rel in &file.services {
        let spec_path = base.join(rel);
        let doc = fs::read_to_string(&spec_path)
            .map_err(|e| DiscoveryError::FormatError(format!("{}: {e}", spec_path.display())))?;
        let spec = resolve_refs(&parse_spec(&doc, FormatHint::Auto)?)?;
        for ep in &spec.endpoints {
            known_endpoints.insert(ep.endpoint_id.clone());
        }
        services.push(spec);
        service_files.push(spec_path);
    }

    let mut queries = Vec::new();
    for q in file.queries {
        if q.expected.is_empty() {
            return Err(DiscoveryError::EmptyExpectedSet(q.id));
        }
        let expected: BTreeSet<String> = q.expected.into_iter().collect();
        let unknown: Vec<String> = expected
            .iter()
            .filter(|id| !endpoint_id_shape_ok(id) || !known_endpoints.contains(*id))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            return Err(DiscoveryError::UnknownEndpoint(unknown));
        }
        queries.push(DiscoveryQuery {
            query_id: q.id,
            text: q.query,
            expected_endpoint_ids: expected,
        });
    }

    Ok(DiscoveryBenchmark {
        name: file.name,
        service_files,
        queries,
        services,
    })
}

pub fn write_benchmark_file(
    path: &Path,
    name: &str,
    service_files: &[String],
    queries: &[DiscoveryQuery],
) -> Result<(), DiscoveryError> {
    let file = BenchmarkFile {
        name: name.to_string(),
        services: service_files.to_vec(),
        queries: queries
            .iter()
            .map(|q| BenchmarkQuery {
                id: q.query_id.clone(),
                query: q.text.clone(),
                expected: q.expected_endpoint_ids.iter().cloned().collect(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file).expect("serializable");
    fs::write(path, json + "\n")?;
    Ok(())
}

/// Ordered endpoint ids per service, needed to expand whole-spec chunks.
#[derive(Debug, Clone, Default)]
pub struct EndpointCatalog {
    by_service: BTreeMap<String, Vec<String>>,
}

impl EndpointCatalog {
    pub fn from_specs<'a>(specs: impl IntoIterator<Item = &'a ServiceSpec>) -> Self {
        let mut by_service = BTreeMap::new();
        for spec in specs {
            by_service.insert(
                spec.service_id.clone(),
                spec.endpoints.iter().map(|e| e.endpoint_id.clone()).collect(),
            );
        }
        EndpointCatalog { by_service }
    }

    pub fn endpoints_of(&self, service_id: &str) -> &[String] {
        self.by_service
            .get(service_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Embed the query, retrieve top chunks, and map them to a deduplicated
/// endpoint ranking. Whole-spec chunks expand to all endpoints of their
/// service in document order.
pub fn discover(
    index: &Index,
    config: &EmbeddingProviderConfig,
    cache: &CacheHandle,
    catalog: &EndpointCatalog,
    query_id: &str,
    query_text: &str,
    k_chunks: usize,
) -> Result<DiscoveryResult, DiscoveryError> {
    if index.model_id != config.model_id {
        return Err(DiscoveryError::ModelMismatch {
            index_model: index.model_id.clone(),
            config_model: config.model_id.clone(),
        });
    }
    let query = format!("{}{}", config.query_prefix, query_text);
    let vectors = embed_batch(&[query], config, cache)?;
    let hits = search_top_k(index, &vectors[0], k_chunks)?;

    let mut ranked = Vec::new();
    let mut scores = Vec::new();
    let mut seen = BTreeSet::new();
    for hit in hits {
        match &hit.endpoint_id {
            Some(endpoint_id) => {
                if seen.insert(endpoint_id.clone()) {
                    ranked.push(endpoint_id.clone());
                    scores.push(hit.score);
                }
            }
            None => {
                for endpoint_id in catalog.endpoints_of(&hit.service_id) {
                    if seen.insert(endpoint_id.clone()) {
                        ranked.push(endpoint_id.clone());
                        scores.push(hit.score);
                    }
                }
            }
        }
    }

    Ok(DiscoveryResult {
        query_id: query_id.to_string(),
        ranked_endpoint_ids: ranked,
        scores,
    })
}

/// Standard IR metrics over a ranked list: recall@k, precision@k, f1@k and
/// a full-match indicator (expected set fully contained in top-k).
pub fn compute_metrics(
    ranked: &[String],
    expected: &BTreeSet<String>,
    k_values: &[usize],
) -> Vec<MetricsAtK> {
    k_values
        .iter()
        .map(|&k| {
            let top_k: BTreeSet<&String> = ranked.iter().take(k).collect();
            let found = expected.iter().filter(|e| top_k.contains(e)).count();
            let recall = found as f64 / expected.len() as f64;
            let precision = if ranked.is_empty() {
                0.0
            } else {
                found as f64 / k.min(ranked.len()) as f64
            };
            let f1 = if recall + precision == 0.0 {
                0.0
            } else {
                2.0 * recall * precision / (recall + precision)
            };
            let full_match = if found == expected.len() { 1.0 } else { 0.0 };
            MetricsAtK {
                k,
                recall,
                precision,
                f1,
                full_match,
            }
        })
        .collect()
}

/// Full benchmark evaluation: chunk, embed, index, discover, aggregate.
pub fn evaluate_benchmark(
    benchmark: &DiscoveryBenchmark,
    strategy: ChunkStrategy,
    config: &EmbeddingProviderConfig,
    k_chunks: usize,
    k_values: &[usize],
    cache: &CacheHandle,
) -> Result<MetricsReport, DiscoveryError> {
    let index = build_benchmark_index(benchmark, strategy, config, cache)?;
    let catalog = EndpointCatalog::from_specs(&benchmark.services);

    let mut per_query = BTreeMap::new();
    let mut sums = vec![MetricsAtK { k: 0, recall: 0.0, precision: 0.0, f1: 0.0, full_match: 0.0 }; k_values.len()];
    for query in &benchmark.queries {
        let result = discover(
            &index,
            config,
            cache,
            &catalog,
            &query.query_id,
            &query.text,
            k_chunks,
        )?;
        let metrics = compute_metrics(
            &result.ranked_endpoint_ids,
            &query.expected_endpoint_ids,
            k_values,
        );
        for (sum, m) in sums.iter_mut().zip(&metrics) {
            sum.k = m.k;
            sum.recall += m.recall;
            sum.precision += m.precision;
            sum.f1 += m.f1;
            sum.full_match += m.full_match;
        }
        per_query.insert(query.query_id.clone(), metrics);
    }

    let n = benchmark.queries.len().max(1) as f64;
    let aggregates = sums
        .into_iter()
        .map(|s| MetricsAtK {
            k: s.k,
            recall: s.recall / n,
            precision: s.precision / n,
            f1: s.f1 / n,
            full_match: s.full_match / n,
        })
        .collect();

    Ok(MetricsReport {
        benchmark: benchmark.name.clone(),
        strategy,
        model_id: config.model_id.clone(),
        k_chunks,
        k_values: k_values.to_vec(),
        per_query,
        aggregates,
    })
}

/// Chunk and embed all services of a benchmark and build the search index.
pub fn build_benchmark_index(
    benchmark: &DiscoveryBenchmark,
    strategy: ChunkStrategy,
    config: &EmbeddingProviderConfig,
    cache: &CacheHandle,
) -> Result<Index, DiscoveryError> {
    let mut chunks = Vec::new();
    for spec in &benchmark.services {
        chunks.extend(chunk_spec(spec, strategy)?);
    }
    let texts: Vec<String> = chunks
        .iter()
        .map(|c| format!("{}{}", config.passage_prefix, c.text))
        .collect();
    let vectors = embed_batch(&texts, config, cache)?;
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
    Ok(build_index(entries, &config.model_id, strategy)?)
}

/// CSV rendering of a metrics report: one row per query and k, then
/// aggregate rows keyed `__mean__`.
pub fn metrics_report_csv(report: &MetricsReport) -> String {
    let mut out = String::from("query_id,k,recall,precision,f1,full_match\n");
    for (query_id, metrics) in &report.per_query {
        for m in metrics {
            out.push_str(&format!(
                "{query_id},{},{},{},{},{}\n",
                m.k, m.recall, m.precision, m.f1, m.full_match
            ));
        }
    }
    for m in &report.aggregates {
        out.push_str(&format!(
            "__mean__,{},{},{},{},{}\n",
            m.k, m.recall, m.precision, m.f1, m.full_match
        ));
    }
    out
}
