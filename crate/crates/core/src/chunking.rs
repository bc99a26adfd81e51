//! Deterministic chunk rendering of resolved service specs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::spec_model::{Endpoint, SchemaKind, SchemaNode, ServiceSpec};
use crate::tokens::count_tokens;

/// Schema outlines are rendered at most this deep.
const OUTLINE_DEPTH: usize = 4;

pub const WHOLE_CHUNK_MARKER: &str = "__whole__";

#[derive(Debug, thiserror::Error)]
pub enum ChunkError {
    #[error("spec `{0}` has no endpoints")]
    EmptySpec(String),
    #[error("unknown chunk strategy: {0}")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkStrategy {
    WholeSpec,
    EndpointFull,
    EndpointLean,
}

impl ChunkStrategy {
    pub const ALL: [ChunkStrategy; 3] = [
        ChunkStrategy::WholeSpec,
        ChunkStrategy::EndpointFull,
        ChunkStrategy::EndpointLean,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ChunkStrategy::WholeSpec => "whole_spec",
            ChunkStrategy::EndpointFull => "endpoint_full",
            ChunkStrategy::EndpointLean => "endpoint_lean",
        }
    }
}

impl fmt::Display for ChunkStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChunkStrategy {
    type Err = ChunkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whole_spec" => Ok(ChunkStrategy::WholeSpec),
            "endpoint_full" => Ok(ChunkStrategy::EndpointFull),
            "endpoint_lean" => Ok(ChunkStrategy::EndpointLean),
            other => Err(ChunkError::UnknownStrategy(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub service_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_id: Option<String>,
    pub strategy: ChunkStrategy,
    pub text: String,
    pub token_estimate: usize,
}

impl Chunk {
    fn new(
        service_id: &str,
        endpoint_id: Option<&str>,
        strategy: ChunkStrategy,
        text: String,
    ) -> Self {
        let anchor = endpoint_id.unwrap_or(WHOLE_CHUNK_MARKER);
        Chunk {
            chunk_id: format!("{service_id}#{anchor}#{strategy}"),
            service_id: service_id.to_string(),
            endpoint_id: endpoint_id.map(str::to_string),
            strategy,
            token_estimate: count_tokens(&text),
            text,
        }
    }
}

pub fn chunk_spec(spec: &ServiceSpec, strategy: ChunkStrategy) -> Result<Vec<Chunk>, ChunkError> {
    match strategy {
        ChunkStrategy::WholeSpec => {
            let mut text = service_header(spec);
            for ep in &spec.endpoints {
                text.push('\n');
                text.push_str(&render_endpoint_full(ep));
            }
            Ok(vec![Chunk::new(&spec.service_id, None, strategy, text)])
        }
        ChunkStrategy::EndpointFull => {
            require_endpoints(spec)?;
            Ok(spec
                .endpoints
                .iter()
                .map(|ep| {
                    let text = format!("{}\n{}", service_header(spec), render_endpoint_full(ep));
                    Chunk::new(&spec.service_id, Some(&ep.endpoint_id), strategy, text)
                })
                .collect())
        }
        ChunkStrategy::EndpointLean => {
            require_endpoints(spec)?;
            Ok(spec
                .endpoints
                .iter()
                .map(|ep| {
                    Chunk::new(
                        &spec.service_id,
                        Some(&ep.endpoint_id),
                        strategy,
                        render_endpoint_lean(ep),
                    )
                })
                .collect())
        }
    }
}

fn require_endpoints(spec: &ServiceSpec) -> Result<(), ChunkError> {
    if spec.endpoints.is_empty() {
        Err(ChunkError::EmptySpec(spec.service_id.clone()))
    } else {
        Ok(())
    }
}

fn service_header(spec: &ServiceSpec) -> String {
    let mut out = format!("Service: {}\n", spec.title);
    if let Some(desc) = &spec.description {
        out.push_str(&format!("Description: {desc}\n"));
    }
    if !spec.base_urls.is_empty() {
        out.push_str(&format!("Base URLs: {}\n", spec.base_urls.join(", ")));
    }
    out
}

fn render_endpoint_full(ep: &Endpoint) -> String {
    let mut out = format!("Endpoint: {} {}\n", ep.method, ep.path);
    if let Some(summary) = &ep.summary {
        out.push_str(&format!("Summary: {summary}\n"));
    }
    if let Some(desc) = &ep.description {
        out.push_str(&format!("Description: {desc}\n"));
    }
    if !ep.parameters.is_empty() {
        out.push_str("Parameters:\n");
        for p in &ep.parameters {
            out.push_str(&format!(
                "  - {} ({}, {}{})\n",
                p.name,
                p.location.as_str(),
                p.schema.kind.as_str(),
                if p.required { ", required" } else { "" }
            ));
        }
    }
    if let Some(req) = &ep.request_schema {
        out.push_str("Request schema:\n");
        render_schema_outline(req, 1, &mut out);
    }
    for (status, schema) in &ep.response_schemas {
        out.push_str(&format!("Response {status} schema:\n"));
        render_schema_outline(schema, 1, &mut out);
    }
    out
}

fn render_endpoint_lean(ep: &Endpoint) -> String {
    let mut out = format!("{} {}\n", ep.method, ep.path);
    if let Some(summary) = &ep.summary {
        out.push_str(&format!("{summary}\n"));
    }
    if let Some(desc) = &ep.description {
        out.push_str(&format!("{desc}\n"));
    }
    if !ep.parameters.is_empty() {
        let names: Vec<&str> = ep.parameters.iter().map(|p| p.name.as_str()).collect();
        out.push_str(&format!("Parameters: {}\n", names.join(", ")));
    }
    out
}

fn schema_type_label(node: &SchemaNode) -> String {
    if let Some(name) = &node.cycle_marker {
        return format!("<recursive:{name}>");
    }
    node.kind.as_str().to_string()
}

fn render_schema_outline(node: &SchemaNode, depth: usize, out: &mut String) {
    if depth > OUTLINE_DEPTH {
        return;
    }
    let indent = "  ".repeat(depth);
    match node.kind {
        SchemaKind::Object => {
            for (name, prop) in &node.properties {
                out.push_str(&format!("{indent}{name}: {}\n", schema_type_label(prop)));
                if matches!(
                    prop.kind,
                    SchemaKind::Object | SchemaKind::Array | SchemaKind::Composite
                ) {
                    render_schema_outline(prop, depth + 1, out);
                }
            }
        }
        SchemaKind::Array => {
            if let Some(items) = &node.items {
                out.push_str(&format!("{indent}items: {}\n", schema_type_label(items)));
                if matches!(
                    items.kind,
                    SchemaKind::Object | SchemaKind::Array | SchemaKind::Composite
                ) {
                    render_schema_outline(items, depth + 1, out);
                }
            }
        }
        SchemaKind::Composite => {
            if let Some(alts) = &node.composite_of {
                for (i, alt) in alts.iter().enumerate() {
                    out.push_str(&format!(
                        "{indent}option {}: {}\n",
                        i + 1,
                        schema_type_label(alt)
                    ));
                    render_schema_outline(alt, depth + 1, out);
                }
            }
        }
        _ => {
            out.push_str(&format!("{indent}{}\n", schema_type_label(node)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec_model::{parse_spec, resolve_refs, FormatHint};

    const PETSTORE_SPEC: &str = crate::spec_model::tests::PETSTORE_SPEC;

    fn petstore() -> ServiceSpec {
        resolve_refs(&parse_spec(PETSTORE_SPEC, FormatHint::Json).unwrap()).unwrap()
    }

    #[test]
    fn endpoint_full_contains_method_path_and_title() {
        let doc = r#"{
            "openapi": "3.0.0", "info": {"title": "Tiny", "version": "1"},
            "paths": {"/ping": {"get": {"responses": {}}}}
        }"#;
        let spec = resolve_refs(&parse_spec(doc, FormatHint::Json).unwrap()).unwrap();
        let chunks = chunk_spec(&spec, ChunkStrategy::EndpointFull).unwrap();
        assert_eq!(chunks.len(), 1);
        assert!(chunks[0].text.contains("GET"));
        assert!(chunks[0].text.contains("/ping"));
        assert!(chunks[0].text.contains("Tiny"));
    }

    #[test]
    fn endpoint_lean_omits_schema_property_names() {
        let spec = petstore();
        let chunks = chunk_spec(&spec, ChunkStrategy::EndpointLean).unwrap();
        assert_eq!(chunks.len(), 3);
        // `name` / `tag` are Pet schema properties; lean chunks must not render
        // schema outlines (GET /pets, GET /pets/{id} have no body fields)
        for chunk in &chunks {
            if chunk.endpoint_id.as_deref() != Some("POST /pets") {
                assert!(!chunk.text.contains("Rex"));
                assert!(!chunk.text.contains("tag"));
            }
        }
    }

    #[test]
    fn whole_spec_chunk_id() {
        let spec = petstore();
        let chunks = chunk_spec(&spec, ChunkStrategy::WholeSpec).unwrap();
        assert_eq!(chunks.len(), 1);
        assert!(chunks[0].chunk_id.ends_with("#__whole__#whole_spec"));
        assert!(chunks[0].endpoint_id.is_none());
    }

    #[test]
    fn endpoint_strategies_yield_one_chunk_per_endpoint() {
        let spec = petstore();
        for strategy in [ChunkStrategy::EndpointFull, ChunkStrategy::EndpointLean] {
            let chunks = chunk_spec(&spec, strategy).unwrap();
            assert_eq!(chunks.len(), spec.endpoints.len());
            for (chunk, ep) in chunks.iter().zip(&spec.endpoints) {
                assert_eq!(chunk.endpoint_id.as_deref(), Some(ep.endpoint_id.as_str()));
                assert!(chunk.text.contains(ep.method.as_str()));
                assert!(chunk.text.contains(&ep.path));
                assert!(!chunk.text.is_empty());
                assert_eq!(chunk.token_estimate, count_tokens(&chunk.text));
            }
        }
    }

    #[test]
    fn lean_never_larger_than_full() {
        let spec = petstore();
        let full = chunk_spec(&spec, ChunkStrategy::EndpointFull).unwrap();
        let lean = chunk_spec(&spec, ChunkStrategy::EndpointLean).unwrap();
        for (f, l) in full.iter().zip(&lean) {
            assert!(l.token_estimate <= f.token_estimate);
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let spec = petstore();
        for strategy in ChunkStrategy::ALL {
            let a = chunk_spec(&spec, strategy).unwrap();
            let b = chunk_spec(&spec, strategy).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_spec_rejected_for_endpoint_strategies() {
        let doc = r#"{"openapi": "3.0.0", "info": {"title": "t", "version": "1"}, "paths": {}}"#;
        let spec = parse_spec(doc, FormatHint::Json).unwrap();
        assert!(matches!(
            chunk_spec(&spec, ChunkStrategy::EndpointFull),
            Err(ChunkError::EmptySpec(_))
        ));
        assert!(chunk_spec(&spec, ChunkStrategy::WholeSpec).is_ok());
    }

    #[test]
    fn recursive_schema_renders_marker() {
        let doc = r##"{
            "openapi": "3.0.0", "info": {"title": "t", "version": "1"},
            "paths": {"/nodes": {"get": {"responses": {"200": {
                "description": "ok",
                "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Node"}}}
            }}}}},
            "components": {"schemas": {"Node": {
                "type": "object",
                "properties": {"children": {"type": "array", "items": {"$ref": "#/components/schemas/Node"}}}
            }}}
        }"##;
        let spec = resolve_refs(&parse_spec(doc, FormatHint::Json).unwrap()).unwrap();
        let chunks = chunk_spec(&spec, ChunkStrategy::EndpointFull).unwrap();
        assert!(chunks[0].text.contains("<recursive:Node>"));
    }
}
