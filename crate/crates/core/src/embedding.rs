//! Text embeddings: a deterministic offline hashing embedder, a remote
//! provider client, and a content-addressed on-disk cache.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("provider error (status {status}): {body}")]
    ProviderError { status: u16, body: String },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cache io error: {0}")]
    CacheIo(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f32 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f32 {
        self.values.iter().map(|v| v * v).sum::<f32>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// L2-normalize in place; an all-zero vector stays all-zero.
    pub fn normalize(&mut self) {
        let norm = self.norm();
        if norm > 0.0 {
            for v in &mut self.values {
                *v /= norm;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Remote,
    Hashing,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingProviderConfig {
    pub kind: ProviderKind,
    pub model_id: String,
    pub dims: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_parallel")]
    pub max_parallel_batches: usize,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Optional text prefixes for models that distinguish query/passage modes.
    #[serde(default)]
    pub query_prefix: String,
    #[serde(default)]
    pub passage_prefix: String,
}

fn default_api_key_env() -> String {
    "EMBEDDING_API_KEY".to_string()
}
fn default_batch_size() -> usize {
    32
}
fn default_parallel() -> usize {
    4
}
fn default_timeout() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    2
}

impl EmbeddingProviderConfig {
    pub fn hashing(dims: usize) -> Self {
        EmbeddingProviderConfig {
            kind: ProviderKind::Hashing,
            model_id: format!("hashing-{dims}"),
            dims,
            base_url: None,
            api_key_env: default_api_key_env(),
            batch_size: default_batch_size(),
            max_parallel_batches: default_parallel(),
            timeout_ms: default_timeout(),
            retries: default_retries(),
            query_prefix: String::new(),
            passage_prefix: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        match self.kind {
            ProviderKind::Remote if self.base_url.is_none() => Err(EmbeddingError::InvalidConfig(
                "remote provider requires base_url".into(),
            )),
            ProviderKind::Hashing if self.dims < 8 => Err(EmbeddingError::InvalidConfig(
                "hashing provider requires dims >= 8".into(),
            )),
            _ => Ok(()),
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x00000100000001b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic feature-hashing embedder: unigrams plus adjacent bigrams of
/// the lowercased alphanumeric tokens, signed by the hash's top bit.
pub fn hash_embed(text: &str, dims: usize) -> EmbeddingVector {
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();

    let mut values = vec![0.0f32; dims];
    let mut accumulate = |feature: &str| {
        let h = fnv1a64(feature.as_bytes());
        let idx = (h % dims as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        values[idx] += sign;
    };
    for token in &tokens {
        accumulate(token);
    }
    for pair in tokens.windows(2) {
        accumulate(&format!("{}_{}", pair[0], pair[1]));
    }

    let mut vector = EmbeddingVector { values };
    vector.normalize();
    vector
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f32 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(b) / (na * nb)
    }
}

/// Content-addressed embedding cache: one file per (model, dims, text) key.
#[derive(Debug)]
pub struct CacheHandle {
    dir: Option<PathBuf>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl CacheHandle {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, EmbeddingError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(CacheHandle {
            dir: Some(dir),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    /// A cache that stores nothing; every lookup is a miss.
    pub fn disabled() -> Self {
        CacheHandle {
            dir: None,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    fn key_path(&self, model_id: &str, dims: usize, text: &str) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        let text_digest = Sha256::digest(text.as_bytes());
        let mut hasher = Sha256::new();
        hasher.update(model_id.as_bytes());
        hasher.update([0u8]);
        hasher.update(dims.to_le_bytes());
        hasher.update([0u8]);
        hasher.update(text_digest);
        let key = hasher.finalize();
        let hex: String = key.iter().map(|b| format!("{b:02x}")).collect();
        Some(dir.join(format!("{hex}.vec")))
    }

    pub fn get(&self, model_id: &str, dims: usize, text: &str) -> Option<EmbeddingVector> {
        let path = self.key_path(model_id, dims, text)?;
        match read_vector_file(&path) {
            Some(v) if v.dims() == dims => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Some(v)
            }
            _ => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    pub fn put(
        &self,
        model_id: &str,
        dims: usize,
        text: &str,
        vector: &EmbeddingVector,
    ) -> Result<(), EmbeddingError> {
        let Some(path) = self.key_path(model_id, dims, text) else {
            return Ok(());
        };
        write_vector_file(&path, vector)?;
        Ok(())
    }
}

/// Cache file layout: u32 LE dims then dims little-endian f32 values.
fn read_vector_file(path: &Path) -> Option<EmbeddingVector> {
    let bytes = fs::read(path).ok()?;
    if bytes.len() < 4 {
        return None;
    }
    let dims = u32::from_le_bytes(bytes[0..4].try_into().ok()?) as usize;
    if bytes.len() != 4 + dims * 4 {
        return None;
    }
    let values = bytes[4..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Some(EmbeddingVector { values })
}

fn write_vector_file(path: &Path, vector: &EmbeddingVector) -> std::io::Result<()> {
    let mut bytes = Vec::with_capacity(4 + vector.values.len() * 4);
    bytes.extend_from_slice(&(vector.dims() as u32).to_le_bytes());
    for v in &vector.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
    }
    fs::rename(&tmp, path)
}

/// Embed a list of texts, preserving input order. The cache is consulted
/// before any remote call and populated afterwards.
pub fn embed_batch(
    texts: &[String],
    config: &EmbeddingProviderConfig,
    cache: &CacheHandle,
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    config.validate()?;
    let mut results: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];

    match config.kind {
        ProviderKind::Hashing => {
            for (i, text) in texts.iter().enumerate() {
                let v = match cache.get(&config.model_id, config.dims, text) {
                    Some(v) => v,
                    None => {
                        let v = hash_embed(text, config.dims);
                        cache.put(&config.model_id, config.dims, text, &v)?;
                        v
                    }
                };
                results[i] = Some(v);
            }
        }
        ProviderKind::Remote => {
            let mut pending: Vec<usize> = Vec::new();
            for (i, text) in texts.iter().enumerate() {
                match cache.get(&config.model_id, config.dims, text) {
                    Some(v) => results[i] = Some(v),
                    None => pending.push(i),
                }
            }
            embed_remote(texts, &pending, config, cache, &mut results)?;
        }
    }

    Ok(results.into_iter().map(|v| v.expect("all slots filled")).collect())
}

fn embed_remote(
    texts: &[String],
    pending: &[usize],
    config: &EmbeddingProviderConfig,
    cache: &CacheHandle,
    results: &mut [Option<EmbeddingVector>],
) -> Result<(), EmbeddingError> {
    let batches: Vec<&[usize]> = pending.chunks(config.batch_size.max(1)).collect();
    let outputs: Mutex<Vec<(usize, EmbeddingVector)>> = Mutex::new(Vec::new());
    let failure: Mutex<Option<EmbeddingError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for group in batches.chunks(config.max_parallel_batches.max(1)) {
            let mut handles = Vec::new();
            for batch in group {
                let outputs = &outputs;
                let failure = &failure;
                handles.push(scope.spawn(move || {
                    let batch_texts: Vec<&str> =
                        batch.iter().map(|&i| texts[i].as_str()).collect();
                    match call_embedding_api(&batch_texts, config) {
                        Ok(vectors) => {
                            let mut out = outputs.lock().unwrap();
                            for (&i, v) in batch.iter().zip(vectors) {
                                out.push((i, v));
                            }
                        }
                        Err(e) => {
                            let mut f = failure.lock().unwrap();
                            if f.is_none() {
                                *f = Some(e);
                            }
                        }
                    }
                }));
            }
            for h in handles {
                let _ = h.join();
            }
            if failure.lock().unwrap().is_some() {
                break;
            }
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    for (i, mut v) in outputs.into_inner().unwrap() {
        if v.dims() != config.dims {
            return Err(EmbeddingError::DimensionMismatch {
                expected: config.dims,
                actual: v.dims(),
            });
        }
        v.normalize();
        cache.put(&config.model_id, config.dims, &texts[i], &v)?;
        results[i] = Some(v);
    }
    Ok(())
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f32>,
}

fn call_embedding_api(
    batch: &[&str],
    config: &EmbeddingProviderConfig,
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    let base_url = config.base_url.as_deref().expect("validated");
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_millis(config.timeout_ms))
        .build();

    let mut attempt = 0;
    loop {
        let mut request = agent.post(base_url).set("Content-Type", "application/json");
        if let Ok(key) = std::env::var(&config.api_key_env) {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let body = EmbeddingRequest {
            model: &config.model_id,
            input: batch,
        };
        match request.send_json(serde_json::to_value(&body).expect("serializable")) {
            Ok(response) => {
                let parsed: EmbeddingResponse = response.into_json().map_err(|e| {
                    EmbeddingError::ProviderError {
                        status: 200,
                        body: format!("unparseable response: {e}"),
                    }
                })?;
                let mut data = parsed.data;
                data.sort_by_key(|d| d.index);
                if data.len() != batch.len() {
                    return Err(EmbeddingError::ProviderError {
                        status: 200,
                        body: format!("expected {} embeddings, got {}", batch.len(), data.len()),
                    });
                }
                return Ok(data
                    .into_iter()
                    .map(|d| EmbeddingVector { values: d.embedding })
                    .collect());
            }
            Err(ureq::Error::Status(status, response)) => {
                let body = response.into_string().unwrap_or_default();
                let snippet: String = body.chars().take(200).collect();
                return Err(EmbeddingError::ProviderError {
                    status,
                    body: snippet,
                });
            }
            Err(ureq::Error::Transport(t)) => {
                if attempt >= config.retries {
                    return Err(EmbeddingError::ProviderUnreachable(t.to_string()));
                }
                std::thread::sleep(Duration::from_millis(500 * (1 << attempt.min(6))));
                attempt += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_embeds_to_zero() {
        let v = hash_embed("", 512);
        assert!(v.is_zero());
        assert_eq!(v.dims(), 512);
    }

    #[test]
    fn hash_embed_is_deterministic() {
        let a = hash_embed("List the playlists of a user", 256);
        let b = hash_embed("List the playlists of a user", 256);
        assert_eq!(a, b);
    }

    #[test]
    fn nonzero_vectors_are_unit_norm() {
        for text in ["a", "hello world", "GET /pets/{id} returns one pet"] {
            let v = hash_embed(text, 128);
            assert!((v.norm() - 1.0).abs() < 1e-6, "norm for {text:?}");
        }
    }

    #[test]
    fn shared_tokens_score_higher() {
        let base = hash_embed("list playlists", 512);
        let near = hash_embed("list playlists of the user", 512);
        let far = hash_embed("delete a calendar event", 512);
        assert!(cosine(&base, &near) > cosine(&base, &far));
    }

    #[test]
    fn cache_round_trip_and_stats() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheHandle::new(dir.path()).unwrap();
        let config = EmbeddingProviderConfig::hashing(64);
        let texts = vec!["same text".to_string(), "same text".to_string()];
        let first = embed_batch(&texts, &config, &cache).unwrap();
        assert_eq!(first[0], first[1]);
        assert_eq!(cache.hits(), 1); // second occurrence hits the entry the first stored
        let _ = embed_batch(&texts, &config, &cache).unwrap();
        assert_eq!(cache.hits(), 3);
    }

    #[test]
    fn hashing_kind_ignores_base_url() {
        let mut config = EmbeddingProviderConfig::hashing(64);
        config.base_url = Some("http://127.0.0.1:1".to_string()); // nothing listens here
        let cache = CacheHandle::disabled();
        let out = embed_batch(&[String::from("hello")], &config, &cache).unwrap();
        assert_eq!(out.len(), 1);
        assert!(!out[0].is_zero());
    }

    #[test]
    fn hashing_distribution_is_spread() {
        // 10,000 pseudo-random 5-token texts; no dimension may hold > 5% of mass
        let dims = 128;
        let mut totals = vec![0.0f64; dims];
        let mut state = 0x12345678u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            state >> 33
        };
        for _ in 0..10_000 {
            let text: Vec<String> = (0..5).map(|_| format!("tok{}", next() % 50_000)).collect();
            let v = hash_embed(&text.join(" "), dims);
            for (t, x) in totals.iter_mut().zip(&v.values) {
                *t += (*x as f64) * (*x as f64);
            }
        }
        let total: f64 = totals.iter().sum();
        for (i, t) in totals.iter().enumerate() {
            assert!(t / total < 0.05, "dimension {i} holds {}", t / total);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut remote = EmbeddingProviderConfig::hashing(64);
        remote.kind = ProviderKind::Remote;
        remote.base_url = None;
        assert!(remote.validate().is_err());
        let small = EmbeddingProviderConfig::hashing(4);
        assert!(small.validate().is_err());
    }
}
