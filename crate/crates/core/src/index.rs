//! Exact top-k similarity search with deterministic tie-breaking and a
//! persistent on-disk format.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::chunking::ChunkStrategy;
use crate::embedding::EmbeddingVector;

const MAGIC: &str = "APICOMPOSE-INDEX";
const VERSION: &str = "v1";

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("duplicate chunk id: {0}")]
    DuplicateChunkId(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    FormatError(String),
    #[error("unsupported index version: {0}")]
    VersionMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub chunk_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_id: Option<String>,
    pub service_id: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    pub dims: usize,
    pub model_id: String,
    pub strategy: ChunkStrategy,
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub chunk_id: String,
    pub endpoint_id: Option<String>,
    pub service_id: String,
    pub score: f32,
}

impl Index {
    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn build_index(
    entries: Vec<IndexEntry>,
    model_id: &str,
    strategy: ChunkStrategy,
) -> Result<Index, IndexError> {
    if entries.is_empty() {
        return Err(IndexError::EmptyIndex);
    }
    let dims = entries[0].vector.dims();
    let mut seen = BTreeSet::new();
    for entry in &entries {
        if entry.vector.dims() != dims {
            return Err(IndexError::DimensionMismatch {
                expected: dims,
                actual: entry.vector.dims(),
            });
        }
        if !seen.insert(entry.chunk_id.clone()) {
            return Err(IndexError::DuplicateChunkId(entry.chunk_id.clone()));
        }
    }
    let mut entries = entries;
    entries.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
    Ok(Index {
        dims,
        model_id: model_id.to_string(),
        strategy,
        entries,
    })
}

/// Scores are dot products; ties break by ascending chunk id.
pub fn search_top_k(index: &Index, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
    if query.dims() != index.dims {
        return Err(IndexError::DimensionMismatch {
            expected: index.dims,
            actual: query.dims(),
        });
    }
    let mut hits: Vec<SearchHit> = index
        .entries
        .iter()
        .map(|e| SearchHit {
            chunk_id: e.chunk_id.clone(),
            endpoint_id: e.endpoint_id.clone(),
            service_id: e.service_id.clone(),
            score: e.vector.dot(query),
        })
        .collect();
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.chunk_id.cmp(&b.chunk_id))
    });
    hits.truncate(k);
    Ok(hits)
}

#[derive(Serialize, Deserialize)]
struct PersistedEntry {
    chunk_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    endpoint_id: Option<String>,
    service_id: String,
    vector_b64: String,
}

fn encode_vector(vector: &EmbeddingVector) -> String {
    let mut bytes = Vec::with_capacity(vector.dims() * 4);
    for v in &vector.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn decode_vector(b64: &str, dims: usize) -> Result<EmbeddingVector, IndexError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(b64)
        .map_err(|e| IndexError::FormatError(format!("bad vector base64: {e}")))?;
    if bytes.len() != dims * 4 {
        return Err(IndexError::FormatError(format!(
            "vector byte length {} does not match dims {dims}",
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(EmbeddingVector { values })
}

pub fn persist_index(index: &Index, path: &Path) -> Result<(), IndexError> {
    let mut out = format!(
        "{MAGIC} {VERSION} dims={} model={} strategy={}\n",
        index.dims, index.model_id, index.strategy
    );
    for entry in &index.entries {
        let record = PersistedEntry {
            chunk_id: entry.chunk_id.clone(),
            endpoint_id: entry.endpoint_id.clone(),
            service_id: entry.service_id.clone(),
            vector_b64: encode_vector(&entry.vector),
        };
        out.push_str(&serde_json::to_string(&record).expect("serializable"));
        out.push('\n');
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(out.as_bytes())?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<Index, IndexError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| IndexError::FormatError("empty index file".into()))?;

    let rest = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| IndexError::FormatError(format!("bad magic header: {header}")))?
        .trim_start();
    let (version, rest) = rest
        .split_once(' ')
        .ok_or_else(|| IndexError::FormatError("truncated header".into()))?;
    if version != VERSION {
        return Err(IndexError::VersionMismatch(version.to_string()));
    }

    let mut dims: Option<usize> = None;
    let mut model_id: Option<String> = None;
    let mut strategy: Option<ChunkStrategy> = None;
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| IndexError::FormatError(format!("bad header field: {field}")))?;
        match key {
            "dims" => {
                dims = Some(value.parse().map_err(|_| {
                    IndexError::FormatError(format!("bad dims value: {value}"))
                })?)
            }
            "model" => model_id = Some(value.to_string()),
            "strategy" => {
                strategy = Some(value.parse().map_err(|_| {
                    IndexError::FormatError(format!("unknown strategy: {value}"))
                })?)
            }
            other => return Err(IndexError::FormatError(format!("unknown header key: {other}"))),
        }
    }
    let dims = dims.ok_or_else(|| IndexError::FormatError("header missing dims".into()))?;
    let model_id = model_id.ok_or_else(|| IndexError::FormatError("header missing model".into()))?;
    let strategy =
        strategy.ok_or_else(|| IndexError::FormatError("header missing strategy".into()))?;

    let mut entries = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let record: PersistedEntry = serde_json::from_str(line)
            .map_err(|e| IndexError::FormatError(format!("bad entry line: {e}")))?;
        entries.push(IndexEntry {
            chunk_id: record.chunk_id,
            endpoint_id: record.endpoint_id,
            service_id: record.service_id,
            vector: decode_vector(&record.vector_b64, dims)?,
        });
    }
    build_index(entries, &model_id, strategy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::hash_embed;

    fn entry(chunk_id: &str, vector: EmbeddingVector) -> IndexEntry {
        IndexEntry {
            chunk_id: chunk_id.to_string(),
            endpoint_id: Some(format!("GET /{chunk_id}")),
            service_id: "svc".to_string(),
            vector,
        }
    }

    fn unit(dims: usize, axis: usize) -> EmbeddingVector {
        let mut values = vec![0.0; dims];
        values[axis] = 1.0;
        EmbeddingVector { values }
    }

    #[test]
    fn single_entry_index() {
        let ix = build_index(vec![entry("a", unit(8, 0))], "m", ChunkStrategy::EndpointLean).unwrap();
        assert_eq!(ix.len(), 1);
    }

    #[test]
    fn duplicate_chunk_ids_rejected() {
        let result = build_index(
            vec![entry("a", unit(8, 0)), entry("a", unit(8, 1))],
            "m",
            ChunkStrategy::EndpointLean,
        );
        assert!(matches!(result, Err(IndexError::DuplicateChunkId(_))));
    }

    #[test]
    fn mixed_dims_rejected() {
        let result = build_index(
            vec![entry("a", unit(8, 0)), entry("b", unit(16, 1))],
            "m",
            ChunkStrategy::EndpointLean,
        );
        assert!(matches!(result, Err(IndexError::DimensionMismatch { .. })));
    }

    #[test]
    fn entries_stored_sorted_by_chunk_id() {
        let mut entries = Vec::new();
        for i in (0..200).rev() {
            entries.push(entry(&format!("c{i:03}"), hash_embed(&format!("text {i}"), 32)));
        }
        let ix = build_index(entries, "m", ChunkStrategy::EndpointLean).unwrap();
        let ids: Vec<&str> = ix.entries().iter().map(|e| e.chunk_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn exact_match_scores_one() {
        let ix = build_index(
            vec![entry("a", unit(8, 0)), entry("b", unit(8, 1)), entry("c", unit(8, 2))],
            "m",
            ChunkStrategy::EndpointLean,
        )
        .unwrap();
        let hits = search_top_k(&ix, &unit(8, 1), 2).unwrap();
        assert_eq!(hits[0].chunk_id, "b");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn k_larger_than_corpus_returns_all() {
        let ix = build_index(
            vec![entry("a", unit(8, 0)), entry("b", unit(8, 1))],
            "m",
            ChunkStrategy::EndpointLean,
        )
        .unwrap();
        assert_eq!(search_top_k(&ix, &unit(8, 0), 50).unwrap().len(), 2);
    }

    #[test]
    fn ties_break_by_chunk_id() {
        let ix = build_index(
            vec![entry("b", unit(8, 0)), entry("a", unit(8, 0)), entry("c", unit(8, 1))],
            "m",
            ChunkStrategy::EndpointLean,
        )
        .unwrap();
        let hits = search_top_k(&ix, &unit(8, 0), 3).unwrap();
        assert_eq!(hits[0].chunk_id, "a");
        assert_eq!(hits[1].chunk_id, "b");
    }

    #[test]
    fn query_dim_mismatch_rejected() {
        let ix = build_index(vec![entry("a", unit(8, 0))], "m", ChunkStrategy::EndpointLean).unwrap();
        assert!(matches!(
            search_top_k(&ix, &unit(16, 0), 1),
            Err(IndexError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn persist_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.idx");
        let ix = build_index(
            vec![entry("a", hash_embed("alpha", 16)), entry("b", hash_embed("beta", 16))],
            "hashing-16",
            ChunkStrategy::EndpointFull,
        )
        .unwrap();
        persist_index(&ix, &path).unwrap();
        let loaded = load_index(&path).unwrap();
        assert_eq!(ix, loaded);
    }

    #[test]
    fn persisting_twice_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.idx");
        let p2 = dir.path().join("b.idx");
        let ix = build_index(
            vec![entry("z", hash_embed("zeta", 16)), entry("a", hash_embed("alpha", 16))],
            "m",
            ChunkStrategy::EndpointLean,
        )
        .unwrap();
        persist_index(&ix, &p1).unwrap();
        persist_index(&ix, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn corrupted_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.idx");
        std::fs::write(&path, "NOT-AN-INDEX v1 dims=8 model=m strategy=endpoint_lean\n").unwrap();
        assert!(matches!(load_index(&path), Err(IndexError::FormatError(_))));
    }

    #[test]
    fn future_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v99.idx");
        std::fs::write(&path, "APICOMPOSE-INDEX v99 dims=8 model=m strategy=endpoint_lean\n")
            .unwrap();
        assert!(matches!(load_index(&path), Err(IndexError::VersionMismatch(v)) if v == "v99"));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_index(Path::new("/nonexistent/file.idx")),
            Err(IndexError::Io(_))
        ));
    }
}
