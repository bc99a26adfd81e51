//! Normalized, reference-resolved view of an OpenAPI 3.x document.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Maximum `$ref` chain depth before resolution bails out.
pub const MAX_REF_DEPTH: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("unsupported OpenAPI version: {0}")]
    UnsupportedVersion(String),
    #[error("duplicate endpoint: {0}")]
    DuplicateEndpoint(String),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("reference depth exceeded {MAX_REF_DEPTH} at {0}")]
    DepthExceeded(String),
    #[error("invalid service id: {0}")]
    InvalidServiceId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatHint {
    Json,
    Yaml,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
    Put,
    Patch,
    Delete,
    Head,
    Options,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
            Method::Put => "PUT",
            Method::Patch => "PATCH",
            Method::Delete => "DELETE",
            Method::Head => "HEAD",
            Method::Options => "OPTIONS",
        }
    }
}

impl FromStr for Method {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "GET" => Ok(Method::Get),
            "POST" => Ok(Method::Post),
            "PUT" => Ok(Method::Put),
            "PATCH" => Ok(Method::Patch),
            "DELETE" => Ok(Method::Delete),
            "HEAD" => Ok(Method::Head),
            "OPTIONS" => Ok(Method::Options),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamLocation {
    Path,
    Query,
    Header,
    BodyField,
}

impl ParamLocation {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamLocation::Path => "path",
            ParamLocation::Query => "query",
            ParamLocation::Header => "header",
            ParamLocation::BodyField => "body-field",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaKind {
    Object,
    Array,
    String,
    Number,
    Integer,
    Boolean,
    Null,
    Any,
    Composite,
}

impl SchemaKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemaKind::Object => "object",
            SchemaKind::Array => "array",
            SchemaKind::String => "string",
            SchemaKind::Number => "number",
            SchemaKind::Integer => "integer",
            SchemaKind::Boolean => "boolean",
            SchemaKind::Null => "null",
            SchemaKind::Any => "any",
            SchemaKind::Composite => "composite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaNode {
    pub kind: SchemaKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: BTreeMap<String, SchemaNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Box<SchemaNode>>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub required: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enum_values: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composite_of: Option<Vec<SchemaNode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_marker: Option<String>,
    /// Unresolved `$ref` target, present only between `parse_spec` and `resolve_refs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unresolved_ref: Option<String>,
}

impl SchemaNode {
    pub fn of_kind(kind: SchemaKind) -> Self {
        SchemaNode {
            kind,
            properties: BTreeMap::new(),
            items: None,
            required: BTreeSet::new(),
            description: None,
            example: None,
            enum_values: None,
            composite_of: None,
            cycle_marker: None,
            unresolved_ref: None,
        }
    }

    pub fn any() -> Self {
        Self::of_kind(SchemaKind::Any)
    }

    fn reference(target: &str) -> Self {
        let mut node = Self::any();
        node.unresolved_ref = Some(target.to_string());
        node
    }

    /// True if this subtree still contains an unresolved `$ref` (cycle markers excluded).
    pub fn has_unresolved_ref(&self) -> bool {
        if self.unresolved_ref.is_some() {
            return true;
        }
        self.properties.values().any(|p| p.has_unresolved_ref())
            || self.items.as_ref().is_some_and(|i| i.has_unresolved_ref())
            || self
                .composite_of
                .as_ref()
                .is_some_and(|alts| alts.iter().any(|a| a.has_unresolved_ref()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub location: ParamLocation,
    pub schema: SchemaNode,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub endpoint_id: String,
    pub method: Method,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parameters: Vec<Parameter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_schema: Option<SchemaNode>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub response_schemas: BTreeMap<String, SchemaNode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub service_id: String,
    pub title: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub base_urls: Vec<String>,
    pub endpoints: Vec<Endpoint>,
    /// Hex SHA-256 of the raw document bytes.
    pub source_digest: String,
    /// `components.schemas` table, kept for reference resolution.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub components: BTreeMap<String, SchemaNode>,
}

impl ServiceSpec {
    pub fn endpoint(&self, endpoint_id: &str) -> Option<&Endpoint> {
        self.endpoints.iter().find(|e| e.endpoint_id == endpoint_id)
    }

    /// Replace the derived service id with an explicit one.
    pub fn with_service_id(mut self, service_id: &str) -> Result<Self, SpecError> {
        if !is_valid_service_id(service_id) {
            return Err(SpecError::InvalidServiceId(service_id.to_string()));
        }
        self.service_id = service_id.to_string();
        Ok(self)
    }
}

pub fn is_valid_service_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

/// Lowercase the title, collapse non-alphanumeric runs to `-`, trim dashes.
pub fn slugify(title: &str) -> String {
    let mut out = String::new();
    let mut pending_dash = false;
    for c in title.chars() {
        if c.is_ascii_alphanumeric() {
            if pending_dash && !out.is_empty() {
                out.push('-');
            }
            pending_dash = false;
            out.push(c.to_ascii_lowercase());
        } else {
            pending_dash = true;
        }
    }
    if out.is_empty() {
        "service".to_string()
    } else {
        out
    }
}

const METHOD_KEYS: [&str; 7] = ["get", "post", "put", "patch", "delete", "head", "options"];
const REJECTED_METHOD_KEYS: [&str; 2] = ["trace", "connect"];
const PATH_ITEM_META_KEYS: [&str; 5] = ["parameters", "summary", "description", "servers", "$ref"];

pub fn parse_spec(document_text: &str, format_hint: FormatHint) -> Result<ServiceSpec, SpecError> {
    if document_text.trim().is_empty() {
        return Err(SpecError::MalformedDocument("empty document".into()));
    }
    let doc = parse_value(document_text, format_hint)?;
    let root = doc
        .as_object()
        .ok_or_else(|| SpecError::MalformedDocument("root is not an object".into()))?;

    let version = root
        .get("openapi")
        .and_then(Value::as_str)
        .ok_or_else(|| SpecError::MalformedDocument("missing `openapi` field".into()))?;
    if !version.starts_with("3.") {
        return Err(SpecError::UnsupportedVersion(version.to_string()));
    }

    let info = root.get("info").and_then(Value::as_object);
    let title = info
        .and_then(|i| i.get("title"))
        .and_then(Value::as_str)
        .unwrap_or("service")
        .to_string();
    let info_version = info
        .and_then(|i| i.get("version"))
        .and_then(Value::as_str)
        .unwrap_or("0.0.0")
        .to_string();
    let description = info
        .and_then(|i| i.get("description"))
        .and_then(Value::as_str)
        .map(str::to_string);

    let base_urls = root
        .get("servers")
        .and_then(Value::as_array)
        .map(|servers| {
            servers
                .iter()
                .filter_map(|s| s.get("url").and_then(Value::as_str))
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();

    let components = parse_components(root)?;
    let endpoints = parse_paths(root)?;

    let mut seen = BTreeSet::new();
    for ep in &endpoints {
        if !seen.insert(ep.endpoint_id.clone()) {
            return Err(SpecError::DuplicateEndpoint(ep.endpoint_id.clone()));
        }
    }

    let digest = Sha256::digest(document_text.as_bytes());
    let source_digest = hex_string(&digest);

    Ok(ServiceSpec {
        service_id: slugify(&title),
        title,
        version: info_version,
        description,
        base_urls,
        endpoints,
        source_digest,
        components,
    })
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_value(text: &str, hint: FormatHint) -> Result<Value, SpecError> {
    match hint {
        FormatHint::Json => serde_json::from_str(text)
            .map_err(|e| SpecError::MalformedDocument(format!("json: {e}"))),
        FormatHint::Yaml => serde_yaml::from_str(text)
            .map_err(|e| SpecError::MalformedDocument(format!("yaml: {e}"))),
        FormatHint::Auto => serde_json::from_str(text).or_else(|json_err| {
            serde_yaml::from_str(text).map_err(|yaml_err| {
                SpecError::MalformedDocument(format!(
                    "not parseable as JSON ({json_err}) or YAML ({yaml_err})"
                ))
            })
        }),
    }
}

fn parse_components(root: &serde_json::Map<String, Value>) -> Result<BTreeMap<String, SchemaNode>, SpecError> {
    let mut out = BTreeMap::new();
    if let Some(schemas) = root
        .get("components")
        .and_then(|c| c.get("schemas"))
        .and_then(Value::as_object)
    {
        for (name, raw) in schemas {
            out.insert(name.clone(), parse_schema(raw)?);
        }
    }
    Ok(out)
}

fn parse_paths(root: &serde_json::Map<String, Value>) -> Result<Vec<Endpoint>, SpecError> {
    let mut endpoints = Vec::new();
    let Some(paths) = root.get("paths").and_then(Value::as_object) else {
        return Ok(endpoints);
    };
    for (path, item) in paths {
        if !path.starts_with('/') {
            return Err(SpecError::MalformedDocument(format!(
                "path `{path}` does not start with '/'"
            )));
        }
        let item = item.as_object().ok_or_else(|| {
            SpecError::MalformedDocument(format!("path item `{path}` is not an object"))
        })?;
        let shared_params = item
            .get("parameters")
            .map(|p| parse_parameters(p, path))
            .transpose()?
            .unwrap_or_default();
        for (key, op) in item {
            let key_lower = key.to_ascii_lowercase();
            if REJECTED_METHOD_KEYS.contains(&key_lower.as_str()) {
                return Err(SpecError::MalformedDocument(format!(
                    "unsupported HTTP method `{key}` on `{path}`"
                )));
            }
            if !METHOD_KEYS.contains(&key_lower.as_str()) {
                if PATH_ITEM_META_KEYS.contains(&key_lower.as_str()) || key_lower.starts_with("x-")
                {
                    continue;
                }
                return Err(SpecError::MalformedDocument(format!(
                    "unknown path item key `{key}` on `{path}`"
                )));
            }
            let method = Method::from_str(&key_lower).expect("method key checked above");
            endpoints.push(parse_operation(method, path, op, &shared_params)?);
        }
    }
    Ok(endpoints)
}

fn parse_operation(
    method: Method,
    path: &str,
    op: &Value,
    shared_params: &[Parameter],
) -> Result<Endpoint, SpecError> {
    let op = op.as_object().ok_or_else(|| {
        SpecError::MalformedDocument(format!("operation {method} {path} is not an object"))
    })?;

    let mut parameters = shared_params.to_vec();
    if let Some(raw) = op.get("parameters") {
        let own = parse_parameters(raw, path)?;
        for p in own {
            // operation-level parameters override path-level ones of the same name/location
            parameters.retain(|q| !(q.name == p.name && q.location == p.location));
            parameters.push(p);
        }
    }

    let request_schema = op
        .get("requestBody")
        .map(|rb| parse_request_body(rb, path))
        .transpose()?
        .flatten();

    let mut response_schemas = BTreeMap::new();
    if let Some(responses) = op.get("responses").and_then(Value::as_object) {
        for (status, resp) in responses {
            if let Some(schema) = extract_content_schema(resp)? {
                response_schemas.insert(status.clone(), schema);
            }
        }
    }

    let tags = op
        .get("tags")
        .and_then(Value::as_array)
        .map(|t| {
            t.iter()
                .filter_map(Value::as_str)
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();

    let endpoint = Endpoint {
        endpoint_id: format!("{} {}", method.as_str(), path),
        method,
        path: path.to_string(),
        summary: op.get("summary").and_then(Value::as_str).map(str::to_string),
        description: op
            .get("description")
            .and_then(Value::as_str)
            .map(str::to_string),
        parameters,
        request_schema,
        response_schemas,
        tags,
    };
    check_path_params(&endpoint)?;
    Ok(endpoint)
}

/// Every `{var}` in the path template must have a matching path parameter.
fn check_path_params(endpoint: &Endpoint) -> Result<(), SpecError> {
    for var in path_template_vars(&endpoint.path) {
        let declared = endpoint
            .parameters
            .iter()
            .any(|p| p.location == ParamLocation::Path && p.name == var);
        if !declared {
            return Err(SpecError::MalformedDocument(format!(
                "path variable `{{{var}}}` of `{}` has no path parameter",
                endpoint.endpoint_id
            )));
        }
    }
    Ok(())
}

pub fn path_template_vars(path: &str) -> Vec<String> {
    path.split('/')
        .filter(|seg| seg.starts_with('{') && seg.ends_with('}') && seg.len() > 2)
        .map(|seg| seg[1..seg.len() - 1].to_string())
        .collect()
}

fn parse_parameters(raw: &Value, path: &str) -> Result<Vec<Parameter>, SpecError> {
    let list = raw.as_array().ok_or_else(|| {
        SpecError::MalformedDocument(format!("parameters of `{path}` is not an array"))
    })?;
    let mut out = Vec::new();
    for p in list {
        let obj = p.as_object().ok_or_else(|| {
            SpecError::MalformedDocument(format!("parameter of `{path}` is not an object"))
        })?;
        let name = obj
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| SpecError::MalformedDocument(format!("unnamed parameter on `{path}`")))?;
        let location = match obj.get("in").and_then(Value::as_str) {
            Some("path") => ParamLocation::Path,
            Some("query") => ParamLocation::Query,
            Some("header") | Some("cookie") => ParamLocation::Header,
            other => {
                return Err(SpecError::MalformedDocument(format!(
                    "parameter `{name}` on `{path}` has unsupported location {other:?}"
                )))
            }
        };
        let schema = obj
            .get("schema")
            .map(parse_schema)
            .transpose()?
            .unwrap_or_else(SchemaNode::any);
        let required = obj
            .get("required")
            .and_then(Value::as_bool)
            .unwrap_or(location == ParamLocation::Path);
        out.push(Parameter {
            name: name.to_string(),
            location,
            schema,
            required,
        });
    }
    Ok(out)
}

fn parse_request_body(raw: &Value, path: &str) -> Result<Option<SchemaNode>, SpecError> {
    if raw.get("$ref").is_some() {
        return Err(SpecError::MalformedDocument(format!(
            "requestBody `$ref` on `{path}` is not supported (only schema refs are)"
        )));
    }
    extract_content_schema(raw)
}

fn extract_content_schema(raw: &Value) -> Result<Option<SchemaNode>, SpecError> {
    let Some(content) = raw.get("content").and_then(Value::as_object) else {
        return Ok(None);
    };
    let media = content
        .get("application/json")
        .or_else(|| content.values().next());
    match media.and_then(|m| m.get("schema")) {
        Some(schema) => Ok(Some(parse_schema(schema)?)),
        None => Ok(None),
    }
}

pub fn parse_schema(raw: &Value) -> Result<SchemaNode, SpecError> {
    let obj = match raw {
        Value::Object(o) => o,
        Value::Bool(true) => return Ok(SchemaNode::any()),
        _ => {
            return Err(SpecError::MalformedDocument(format!(
                "schema is not an object: {raw}"
            )))
        }
    };

    if let Some(target) = obj.get("$ref").and_then(Value::as_str) {
        return Ok(SchemaNode::reference(target));
    }

    for combinator in ["allOf", "anyOf", "oneOf"] {
        if let Some(parts) = obj.get(combinator).and_then(Value::as_array) {
            let nodes: Vec<SchemaNode> =
                parts.iter().map(parse_schema).collect::<Result<_, _>>()?;
            let mut node = SchemaNode::of_kind(SchemaKind::Composite);
            node.description = obj
                .get("description")
                .and_then(Value::as_str)
                .map(str::to_string);
            node.composite_of = Some(nodes);
            if combinator == "allOf" {
                // merged into a flat object later, once refs are resolved
                return Ok(mark_all_of(node));
            }
            return Ok(node);
        }
    }

    let kind = match obj.get("type").and_then(Value::as_str) {
        Some("object") => SchemaKind::Object,
        Some("array") => SchemaKind::Array,
        Some("string") => SchemaKind::String,
        Some("number") => SchemaKind::Number,
        Some("integer") => SchemaKind::Integer,
        Some("boolean") => SchemaKind::Boolean,
        Some("null") => SchemaKind::Null,
        Some(other) => {
            return Err(SpecError::MalformedDocument(format!(
                "unknown schema type `{other}`"
            )))
        }
        None => {
            if obj.contains_key("properties") {
                SchemaKind::Object
            } else if obj.contains_key("items") {
                SchemaKind::Array
            } else {
                SchemaKind::Any
            }
        }
    };

    let mut node = SchemaNode::of_kind(kind);
    node.description = obj
        .get("description")
        .and_then(Value::as_str)
        .map(str::to_string);
    node.example = obj.get("example").cloned();
    node.enum_values = obj.get("enum").and_then(Value::as_array).cloned();

    if let Some(props) = obj.get("properties").and_then(Value::as_object) {
        for (name, prop) in props {
            node.properties.insert(name.clone(), parse_schema(prop)?);
        }
    }
    if let Some(required) = obj.get("required").and_then(Value::as_array) {
        for r in required.iter().filter_map(Value::as_str) {
            node.required.insert(r.to_string());
        }
    }
    // the invariant is required ⊆ keys(properties); drop names with no property
    if node.kind == SchemaKind::Object {
        let keys: BTreeSet<String> = node.properties.keys().cloned().collect();
        node.required = node.required.intersection(&keys).cloned().collect();
    }
    if let Some(items) = obj.get("items") {
        node.items = Some(Box::new(parse_schema(items)?));
    }
    Ok(node)
}

/// allOf composites carry this marker in `description` until merged in `resolve_refs`.
const ALL_OF_MARKER: &str = "\u{0}allOf";

fn mark_all_of(mut node: SchemaNode) -> SchemaNode {
    let desc = node.description.take();
    node.description = Some(match desc {
        Some(d) => format!("{ALL_OF_MARKER}{d}"),
        None => ALL_OF_MARKER.to_string(),
    });
    node
}

fn is_all_of(node: &SchemaNode) -> bool {
    node.kind == SchemaKind::Composite
        && node
            .description
            .as_deref()
            .is_some_and(|d| d.starts_with(ALL_OF_MARKER))
}

pub fn resolve_refs(spec: &ServiceSpec) -> Result<ServiceSpec, SpecError> {
    let mut out = spec.clone();
    let components = spec.components.clone();

    let mut resolved_components = BTreeMap::new();
    for (name, schema) in &components {
        resolved_components.insert(
            name.clone(),
            resolve_node(schema, &components, &mut Vec::new(), 0)?,
        );
    }

    for ep in &mut out.endpoints {
        for param in &mut ep.parameters {
            param.schema = resolve_node(&param.schema, &components, &mut Vec::new(), 0)?;
        }
        if let Some(req) = &ep.request_schema {
            ep.request_schema = Some(resolve_node(req, &components, &mut Vec::new(), 0)?);
        }
        let statuses: Vec<String> = ep.response_schemas.keys().cloned().collect();
        for status in statuses {
            let resolved = resolve_node(
                &ep.response_schemas[&status],
                &components,
                &mut Vec::new(),
                0,
            )?;
            ep.response_schemas.insert(status, resolved);
        }
        add_body_field_params(ep);
    }
    out.components = resolved_components;
    Ok(out)
}

/// Top-level properties of an object request body become body-field parameters.
fn add_body_field_params(ep: &mut Endpoint) {
    let Some(req) = &ep.request_schema else {
        return;
    };
    if req.kind != SchemaKind::Object {
        return;
    }
    let existing: BTreeSet<&str> = ep
        .parameters
        .iter()
        .filter(|p| p.location == ParamLocation::BodyField)
        .map(|p| p.name.as_str())
        .collect();
    let mut new_params = Vec::new();
    for (name, schema) in &req.properties {
        if existing.contains(name.as_str()) {
            continue;
        }
        new_params.push(Parameter {
            name: name.clone(),
            location: ParamLocation::BodyField,
            schema: schema.clone(),
            required: req.required.contains(name),
        });
    }
    ep.parameters.extend(new_params);
}

fn ref_name(target: &str) -> String {
    target.rsplit('/').next().unwrap_or(target).to_string()
}

fn resolve_node(
    node: &SchemaNode,
    components: &BTreeMap<String, SchemaNode>,
    active: &mut Vec<String>,
    depth: usize,
) -> Result<SchemaNode, SpecError> {
    if depth > MAX_REF_DEPTH {
        return Err(SpecError::DepthExceeded(
            active.last().cloned().unwrap_or_default(),
        ));
    }

    if let Some(target) = &node.unresolved_ref {
        let name = ref_name(target);
        if !target.starts_with("#/components/schemas/") {
            return Err(SpecError::DanglingReference(format!(
                "{target} (only #/components/schemas/* references are supported)"
            )));
        }
        if active.contains(&name) {
            let mut broken = SchemaNode::any();
            broken.cycle_marker = Some(name);
            return Ok(broken);
        }
        let Some(resolved_target) = components.get(&name) else {
            return Err(SpecError::DanglingReference(target.clone()));
        };
        active.push(name);
        let result = resolve_node(resolved_target, components, active, depth + 1);
        active.pop();
        return result;
    }

    let mut out = node.clone();
    out.properties = BTreeMap::new();
    for (name, prop) in &node.properties {
        out.properties
            .insert(name.clone(), resolve_node(prop, components, active, depth + 1)?);
    }
    if let Some(items) = &node.items {
        out.items = Some(Box::new(resolve_node(items, components, active, depth + 1)?));
    }
    if let Some(alts) = &node.composite_of {
        let resolved: Vec<SchemaNode> = alts
            .iter()
            .map(|a| resolve_node(a, components, active, depth + 1))
            .collect::<Result<_, _>>()?;
        if is_all_of(&out) {
            return Ok(merge_all_of(&out, resolved));
        }
        out.composite_of = Some(resolved);
    }
    Ok(out)
}

/// allOf collapses to an object by property union; later alternatives win on conflict.
fn merge_all_of(marker_node: &SchemaNode, parts: Vec<SchemaNode>) -> SchemaNode {
    let mut merged = SchemaNode::of_kind(SchemaKind::Object);
    let desc = marker_node
        .description
        .as_deref()
        .and_then(|d| d.strip_prefix(ALL_OF_MARKER))
        .filter(|d| !d.is_empty())
        .map(str::to_string);
    merged.description = desc;
    for part in parts {
        for (name, prop) in part.properties {
            merged.properties.insert(name, prop);
        }
        merged.required.extend(part.required);
        if merged.description.is_none() {
            merged.description = part.description;
        }
    }
    let keys: BTreeSet<String> = merged.properties.keys().cloned().collect();
    merged.required = merged.required.intersection(&keys).cloned().collect();
    merged
}

pub fn list_endpoints(spec: &ServiceSpec) -> Vec<String> {
    spec.endpoints.iter().map(|e| e.endpoint_id.clone()).collect()
}

/// Render a resolved schema back into a JSON-schema-style document. Cycle
/// markers and `Any` become the empty (match-anything) schema; composites
/// become `anyOf`.
pub fn schema_node_to_json(node: &SchemaNode) -> Value {
    let mut out = serde_json::Map::new();
    match node.kind {
        SchemaKind::Any => {}
        SchemaKind::Composite => {
            let alts: Vec<Value> = node
                .composite_of
                .as_deref()
                .unwrap_or(&[])
                .iter()
                .map(schema_node_to_json)
                .collect();
            out.insert("anyOf".into(), Value::Array(alts));
        }
        kind => {
            out.insert("type".into(), Value::String(kind.as_str().to_string()));
        }
    }
    if node.cycle_marker.is_none() {
        if !node.properties.is_empty() {
            let props: serde_json::Map<String, Value> = node
                .properties
                .iter()
                .map(|(name, prop)| (name.clone(), schema_node_to_json(prop)))
                .collect();
            out.insert("properties".into(), Value::Object(props));
        }
        if let Some(items) = &node.items {
            out.insert("items".into(), schema_node_to_json(items));
        }
        if !node.required.is_empty() {
            let req: Vec<Value> = node
                .required
                .iter()
                .map(|r| Value::String(r.clone()))
                .collect();
            out.insert("required".into(), Value::Array(req));
        }
    }
    if let Some(desc) = &node.description {
        out.insert("description".into(), Value::String(desc.clone()));
    }
    if let Some(values) = &node.enum_values {
        out.insert("enum".into(), Value::Array(values.clone()));
    }
    if let Some(example) = &node.example {
        out.insert("example".into(), example.clone());
    }
    Value::Object(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    const PING_SPEC: &str = r#"{
        "openapi": "3.0.3",
        "info": {"title": "Ping Service", "version": "1.0.0"},
        "paths": {
            "/ping": {
                "get": {
                    "summary": "Ping",
                    "responses": {"200": {"description": "ok"}}
                }
            }
        }
    }"#;

    pub(crate) const PETSTORE_SPEC: &str = r##"{
        "openapi": "3.0.3",
        "info": {"title": "Pet Store", "version": "1.2.0", "description": "A small pet store."},
        "servers": [{"url": "http://localhost:9000"}],
        "paths": {
            "/pets": {
                "get": {
                    "summary": "List pets",
                    "description": "Returns every pet in the store.",
                    "parameters": [
                        {"name": "limit", "in": "query", "schema": {"type": "integer"}}
                    ],
                    "responses": {
                        "200": {
                            "description": "ok",
                            "content": {"application/json": {"schema": {
                                "type": "array", "items": {"$ref": "#/components/schemas/Pet"}
                            }}}
                        }
                    }
                },
                "post": {
                    "summary": "Create a pet",
                    "requestBody": {
                        "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Pet"}}}
                    },
                    "responses": {"201": {
                        "description": "created",
                        "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Pet"}}}
                    }}
                }
            },
            "/pets/{id}": {
                "get": {
                    "summary": "Get a pet",
                    "parameters": [
                        {"name": "id", "in": "path", "required": true, "schema": {"type": "integer"}}
                    ],
                    "responses": {"200": {
                        "description": "ok",
                        "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Pet"}}}
                    }}
                }
            }
        },
        "components": {"schemas": {
            "Pet": {
                "type": "object",
                "required": ["name"],
                "properties": {
                    "name": {"type": "string", "example": "Rex"},
                    "tag": {"type": "string"}
                }
            }
        }}
    }"##;

    #[test]
    fn single_endpoint_identity() {
        let spec = parse_spec(PING_SPEC, FormatHint::Auto).unwrap();
        assert_eq!(list_endpoints(&spec), vec!["GET /ping"]);
        assert_eq!(spec.service_id, "ping-service");
    }

    #[test]
    fn version_gate_rejects_2_0() {
        let doc = r#"{"openapi": "2.0", "info": {"title": "t", "version": "1"}, "paths": {}}"#;
        match parse_spec(doc, FormatHint::Json) {
            Err(SpecError::UnsupportedVersion(v)) => assert_eq!(v, "2.0"),
            other => panic!("expected UnsupportedVersion, got {other:?}"),
        }
    }

    #[test]
    fn petstore_fixture_three_endpoints_in_document_order() {
        let spec = parse_spec(PETSTORE_SPEC, FormatHint::Json).unwrap();
        assert_eq!(
            list_endpoints(&spec),
            vec!["GET /pets", "POST /pets", "GET /pets/{id}"]
        );
        assert_eq!(spec.title, "Pet Store");
        assert_eq!(spec.base_urls, vec!["http://localhost:9000"]);
    }

    #[test]
    fn empty_paths_gives_no_endpoints() {
        let doc = r#"{"openapi": "3.1.0", "info": {"title": "t", "version": "1"}, "paths": {}}"#;
        let spec = parse_spec(doc, FormatHint::Json).unwrap();
        assert!(list_endpoints(&spec).is_empty());
    }

    #[test]
    fn get_and_post_on_same_path() {
        let doc = r#"{
            "openapi": "3.0.0", "info": {"title": "t", "version": "1"},
            "paths": {"/x": {
                "get": {"responses": {}},
                "post": {"responses": {}}
            }}
        }"#;
        let spec = parse_spec(doc, FormatHint::Json).unwrap();
        assert_eq!(list_endpoints(&spec), vec!["GET /x", "POST /x"]);
    }

    #[test]
    fn trace_method_rejected() {
        let doc = r#"{
            "openapi": "3.0.0", "info": {"title": "t", "version": "1"},
            "paths": {"/x": {"trace": {"responses": {}}}}
        }"#;
        assert!(matches!(
            parse_spec(doc, FormatHint::Json),
            Err(SpecError::MalformedDocument(_))
        ));
    }

    #[test]
    fn yaml_auto_detection() {
        let doc = "openapi: \"3.0.0\"\ninfo:\n  title: Yaml Service\n  version: \"1\"\npaths:\n  /y:\n    get:\n      responses: {}\n";
        let spec = parse_spec(doc, FormatHint::Auto).unwrap();
        assert_eq!(list_endpoints(&spec), vec!["GET /y"]);
    }

    #[test]
    fn parse_is_deterministic() {
        let a = parse_spec(PETSTORE_SPEC, FormatHint::Json).unwrap();
        let b = parse_spec(PETSTORE_SPEC, FormatHint::Json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.source_digest, b.source_digest);
        assert_eq!(a.source_digest.len(), 64);
    }

    #[test]
    fn missing_path_parameter_declaration_rejected() {
        let doc = r#"{
            "openapi": "3.0.0", "info": {"title": "t", "version": "1"},
            "paths": {"/pets/{id}": {"get": {"responses": {}}}}
        }"#;
        assert!(matches!(
            parse_spec(doc, FormatHint::Json),
            Err(SpecError::MalformedDocument(_))
        ));
    }

    #[test]
    fn resolve_inlines_single_ref() {
        let spec = parse_spec(PETSTORE_SPEC, FormatHint::Json).unwrap();
        let resolved = resolve_refs(&spec).unwrap();
        let post = resolved.endpoint("POST /pets").unwrap();
        let req = post.request_schema.as_ref().unwrap();
        assert_eq!(req.kind, SchemaKind::Object);
        assert!(req.properties.contains_key("name"));
        assert!(!req.has_unresolved_ref());
        // body fields became parameters
        let body_fields: Vec<&str> = post
            .parameters
            .iter()
            .filter(|p| p.location == ParamLocation::BodyField)
            .map(|p| p.name.as_str())
            .collect();
        assert_eq!(body_fields, vec!["name", "tag"]);
    }

    #[test]
    fn self_reference_breaks_cycle_with_marker() {
        let doc = r##"{
            "openapi": "3.0.0", "info": {"title": "t", "version": "1"},
            "paths": {"/nodes": {"get": {"responses": {"200": {
                "description": "ok",
                "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Node"}}}
            }}}}},
            "components": {"schemas": {"Node": {
                "type": "object",
                "properties": {
                    "label": {"type": "string"},
                    "children": {"type": "array", "items": {"$ref": "#/components/schemas/Node"}}
                }
            }}}
        }"##;
        let spec = parse_spec(doc, FormatHint::Json).unwrap();
        let resolved = resolve_refs(&spec).unwrap();
        let ep = resolved.endpoint("GET /nodes").unwrap();
        let schema = &ep.response_schemas["200"];
        let children = &schema.properties["children"];
        let items = children.items.as_ref().unwrap();
        assert_eq!(items.cycle_marker.as_deref(), Some("Node"));
    }

    #[test]
    fn ref_chain_fully_inlines() {
        let doc = r##"{
            "openapi": "3.0.0", "info": {"title": "t", "version": "1"},
            "paths": {"/a": {"get": {"responses": {"200": {
                "description": "ok",
                "content": {"application/json": {"schema": {"$ref": "#/components/schemas/A"}}}
            }}}}},
            "components": {"schemas": {
                "A": {"$ref": "#/components/schemas/B"},
                "B": {"$ref": "#/components/schemas/C"},
                "C": {"type": "string"}
            }}
        }"##;
        let spec = parse_spec(doc, FormatHint::Json).unwrap();
        let resolved = resolve_refs(&spec).unwrap();
        let schema = &resolved.endpoint("GET /a").unwrap().response_schemas["200"];
        assert_eq!(schema.kind, SchemaKind::String);
        assert!(!schema.has_unresolved_ref());
    }

    #[test]
    fn dangling_reference_reported() {
        let doc = r##"{
            "openapi": "3.0.0", "info": {"title": "t", "version": "1"},
            "paths": {"/a": {"get": {"responses": {"200": {
                "description": "ok",
                "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Missing"}}}
            }}}}}
        }"##;
        let spec = parse_spec(doc, FormatHint::Json).unwrap();
        assert!(matches!(
            resolve_refs(&spec),
            Err(SpecError::DanglingReference(_))
        ));
    }

    #[test]
    fn resolve_is_idempotent() {
        let spec = parse_spec(PETSTORE_SPEC, FormatHint::Json).unwrap();
        let once = resolve_refs(&spec).unwrap();
        let twice = resolve_refs(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn all_of_merges_by_property_union() {
        let doc = r#"{
            "openapi": "3.0.0", "info": {"title": "t", "version": "1"},
            "paths": {"/a": {"get": {"responses": {"200": {
                "description": "ok",
                "content": {"application/json": {"schema": {"allOf": [
                    {"type": "object", "required": ["id"], "properties": {"id": {"type": "integer"}}},
                    {"type": "object", "properties": {"id": {"type": "string"}, "name": {"type": "string"}}}
                ]}}}
            }}}}}
        }"#;
        let spec = parse_spec(doc, FormatHint::Json).unwrap();
        let resolved = resolve_refs(&spec).unwrap();
        let schema = &resolved.endpoint("GET /a").unwrap().response_schemas["200"];
        assert_eq!(schema.kind, SchemaKind::Object);
        // later alternative wins on conflict
        assert_eq!(schema.properties["id"].kind, SchemaKind::String);
        assert!(schema.properties.contains_key("name"));
        assert!(schema.required.contains("id"));
    }

    #[test]
    fn slugify_cases() {
        assert_eq!(slugify("Pet Store"), "pet-store");
        assert_eq!(slugify("  A--B  "), "a-b");
        assert_eq!(slugify("__"), "service");
        assert!(is_valid_service_id(&slugify("Some API (v2)")));
    }
}
