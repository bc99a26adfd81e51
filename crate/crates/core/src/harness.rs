//! Composition validation: schema-conforming mock services that track
//! invocations, static endpoint scanning of code text, and a subprocess
//! runner that scores generated compositions.

use std::collections::BTreeSet;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::llm::CompositionArtifact;
use crate::spec_model::{Method, SchemaKind, SchemaNode, ServiceSpec};

/// Example synthesis recurses at most this deep.
const SYNTH_DEPTH: usize = 8;
pub const DEFAULT_RUNNER_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("could not bind mock server: {0}")]
    BindError(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvocationRecord {
    pub seq: u64,
    pub method: String,
    pub concrete_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_endpoint_id: Option<String>,
    pub status_returned: u16,
    /// Milliseconds since the mock started.
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub expected_endpoint_ids: BTreeSet<String>,
    pub static_refs: BTreeSet<String>,
    pub invoked_endpoint_ids: BTreeSet<String>,
    pub static_coverage: f64,
    pub dynamic_coverage: f64,
    pub extraneous_invocations: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_schema_valid: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_status: Option<i32>,
    /// Set when the runner failed to spawn or timed out; dynamic fields then
    /// reflect only what was observed before the failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runner_error: Option<String>,
}

// -------- example synthesis --------

/// Schema-directed example value: explicit example first, then first enum
/// value, then a per-type default. Cycle markers render as null.
pub fn synthesize_example(schema: &SchemaNode) -> Value {
    synthesize_at(schema, 0)
}

fn synthesize_at(schema: &SchemaNode, depth: usize) -> Value {
    if depth > SYNTH_DEPTH || schema.cycle_marker.is_some() {
        return Value::Null;
    }
    if let Some(example) = &schema.example {
        return example.clone();
    }
    if let Some(values) = &schema.enum_values {
        if let Some(first) = values.first() {
            return first.clone();
        }
    }
    match schema.kind {
        SchemaKind::String => Value::String("string".into()),
        SchemaKind::Integer => Value::from(0),
        SchemaKind::Number => Value::from(0.0),
        SchemaKind::Boolean => Value::Bool(false),
        SchemaKind::Array => Value::Array(vec![]),
        SchemaKind::Null => Value::Null,
        SchemaKind::Any => Value::Null,
        SchemaKind::Object => {
            let mut map = serde_json::Map::new();
            for name in &schema.required {
                if let Some(prop) = schema.properties.get(name) {
                    map.insert(name.clone(), synthesize_at(prop, depth + 1));
                }
            }
            Value::Object(map)
        }
        SchemaKind::Composite => schema
            .composite_of
            .as_ref()
            .and_then(|alts| alts.first())
            .map(|alt| synthesize_at(alt, depth + 1))
            .unwrap_or(Value::Null),
    }
}

/// Recursive type/required conformance check (not a full JSON Schema
/// validator; mirrors what `synthesize_example` produces).
pub fn validate_against_schema(value: &Value, schema: &SchemaNode) -> bool {
    if schema.cycle_marker.is_some() {
        return true;
    }
    match schema.kind {
        SchemaKind::Any => true,
        SchemaKind::Null => value.is_null(),
        SchemaKind::String => value.is_string(),
        SchemaKind::Boolean => value.is_boolean(),
        SchemaKind::Integer => value.is_i64() || value.is_u64(),
        SchemaKind::Number => value.is_number(),
        SchemaKind::Array => match value {
            Value::Array(items) => match &schema.items {
                Some(item_schema) => items.iter().all(|i| validate_against_schema(i, item_schema)),
                None => true,
            },
            _ => false,
        },
        SchemaKind::Object => match value {
            Value::Object(map) => {
                schema.required.iter().all(|r| map.contains_key(r))
                    && map.iter().all(|(k, v)| match schema.properties.get(k) {
                        Some(prop) => validate_against_schema(v, prop),
                        None => true,
                    })
            }
            _ => false,
        },
        SchemaKind::Composite => match &schema.composite_of {
            Some(alts) => alts.iter().any(|alt| validate_against_schema(value, alt)),
            None => true,
        },
    }
}

// -------- request matching --------

/// Segment-wise path template matching. Literal segments must be equal,
/// `{var}` matches any single non-empty segment. Among multiple matches the
/// one with the most literal segments wins, ties by ascending endpoint id.
pub fn match_request(spec: &ServiceSpec, method: Method, concrete_path: &str) -> Option<String> {
    let concrete: Vec<&str> = split_path(concrete_path);
    let mut best: Option<(usize, &str)> = None;
    for ep in &spec.endpoints {
        if ep.method != method {
            continue;
        }
        let Some(literals) = template_match_score(&ep.path, &concrete) else {
            continue;
        };
        let better = match best {
            None => true,
            Some((best_literals, best_id)) => {
                literals > best_literals
                    || (literals == best_literals && ep.endpoint_id.as_str() < best_id)
            }
        };
        if better {
            best = Some((literals, &ep.endpoint_id));
        }
    }
    best.map(|(_, id)| id.to_string())
}

fn split_path(path: &str) -> Vec<&str> {
    path.trim_start_matches('/')
        .trim_end_matches('/')
        .split('/')
        .filter(|s| !s.is_empty())
        .collect()
}

/// Number of matching literal segments, or None if the template does not match.
fn template_match_score(template: &str, concrete: &[&str]) -> Option<usize> {
    let template_segs = split_path(template);
    if template_segs.len() != concrete.len() {
        return None;
    }
    let mut literals = 0;
    for (t, c) in template_segs.iter().zip(concrete) {
        if t.starts_with('{') && t.ends_with('}') && t.len() > 2 {
            if c.is_empty() {
                return None;
            }
        } else if t == c {
            literals += 1;
        } else {
            return None;
        }
    }
    Some(literals)
}

// -------- mock server --------

pub struct MockHandle {
    pub service_id: String,
    pub base_url: String,
    log: Arc<Mutex<Vec<InvocationRecord>>>,
    stop: Arc<AtomicBool>,
    server: Arc<tiny_http::Server>,
    join: Option<std::thread::JoinHandle<()>>,
}

impl MockHandle {
    pub fn log(&self) -> Vec<InvocationRecord> {
        self.log.lock().unwrap().clone()
    }

    pub fn invoked_endpoint_ids(&self) -> BTreeSet<String> {
        self.log
            .lock()
            .unwrap()
            .iter()
            .filter_map(|r| r.matched_endpoint_id.clone())
            .collect()
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(join) = self.join.take() {
            let _ = join.join();
        }
    }
}

impl Drop for MockHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Start an invocation-tracking mock for a resolved spec. `port` 0 picks an
/// ephemeral port. Matched requests answer with a synthesized example body;
/// unmatched ones get 404. Every request is logged with an increasing seq.
pub fn start_mock(spec: &ServiceSpec, port: u16) -> Result<MockHandle, HarnessError> {
    let server = tiny_http::Server::http(("127.0.0.1", port))
        .map_err(|e| HarnessError::BindError(e.to_string()))?;
    let server = Arc::new(server);
    let actual_port = match server.server_addr() {
        tiny_http::ListenAddr::IP(addr) => addr.port(),
        _ => return Err(HarnessError::BindError("no tcp listen address".into())),
    };

    let log = Arc::new(Mutex::new(Vec::new()));
    let stop = Arc::new(AtomicBool::new(false));
    let service_id = spec.service_id.clone();
    let spec = spec.clone();
    let started = Instant::now();

    let thread_log = Arc::clone(&log);
    let thread_stop = Arc::clone(&stop);
    let thread_server = Arc::clone(&server);
    let join = std::thread::spawn(move || {
        while !thread_stop.load(Ordering::SeqCst) {
            let Ok(Some(request)) = thread_server.recv_timeout(Duration::from_millis(100)) else {
                continue;
            };
            handle_request(&spec, request, &thread_log, started);
        }
    });

    Ok(MockHandle {
        service_id,
        base_url: format!("http://127.0.0.1:{actual_port}"),
        log,
        stop,
        server,
        join: Some(join),
    })
}

fn handle_request(
    spec: &ServiceSpec,
    request: tiny_http::Request,
    log: &Mutex<Vec<InvocationRecord>>,
    started: Instant,
) {
    let method_str = request.method().to_string();
    let url = request.url().to_string();
    let path = url.split(['?', '#']).next().unwrap_or("/").to_string();

    let matched = method_str
        .parse::<Method>()
        .ok()
        .and_then(|m| match_request(spec, m, &path));

    let (status, body) = match &matched {
        Some(endpoint_id) => {
            let ep = spec.endpoint(endpoint_id).expect("matched endpoint exists");
            let (status, schema) = pick_success_response(ep);
            let body = match schema {
                Some(s) => synthesize_example(s),
                None => Value::Null,
            };
            (status, serde_json::to_string(&body).expect("serializable"))
        }
        None => (404, r#"{"error":"no matching endpoint"}"#.to_string()),
    };

    {
        let mut log = log.lock().unwrap();
        let seq = log.len() as u64 + 1;
        log.push(InvocationRecord {
            seq,
            method: method_str,
            concrete_path: path,
            matched_endpoint_id: matched,
            status_returned: status,
            elapsed_ms: started.elapsed().as_millis() as u64,
        });
    }

    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
    let response = tiny_http::Response::from_string(body)
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(response);
}

/// Lowest 2xx status present in the response schemas, defaulting to 200.
fn pick_success_response(ep: &crate::spec_model::Endpoint) -> (u16, Option<&SchemaNode>) {
    let mut best: Option<(u16, &SchemaNode)> = None;
    for (status, schema) in &ep.response_schemas {
        if let Ok(code) = status.parse::<u16>() {
            if (200..300).contains(&code) && best.map_or(true, |(b, _)| code < b) {
                best = Some((code, schema));
            }
        }
    }
    match best {
        Some((code, schema)) => (code, Some(schema)),
        None => (200, None),
    }
}

// -------- static scanning --------

/// Scan string literals in code text for endpoint path references. A literal
/// whose path component matches an endpoint's template counts as a reference
/// to every endpoint sharing that path; an HTTP method token within the 64
/// characters before the literal narrows the set to that method.
pub fn static_endpoint_scan(code_text: &str, specs: &[ServiceSpec]) -> BTreeSet<String> {
    let mut refs = BTreeSet::new();
    for (start, literal) in string_literals(code_text) {
        let Some(path) = literal_path_component(&literal) else {
            continue;
        };
        let method_hint = preceding_method_hint(code_text, start);
        let concrete = split_path(&path);
        for spec in specs {
            for ep in &spec.endpoints {
                let path_matches = ep.path == path
                    || template_match_score(&ep.path, &concrete).is_some();
                if !path_matches {
                    continue;
                }
                if let Some(hint) = method_hint {
                    if ep.method != hint {
                        continue;
                    }
                }
                refs.insert(ep.endpoint_id.clone());
            }
        }
    }
    refs
}

/// (byte offset of opening quote, contents) for every quoted run.
fn string_literals(code: &str) -> Vec<(usize, String)> {
    let bytes = code.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'"' || c == b'\'' {
            let quote = c;
            let start = i;
            let mut j = i + 1;
            let mut literal = String::new();
            let mut closed = false;
            while j < bytes.len() {
                let d = bytes[j];
                if d == b'\\' && j + 1 < bytes.len() {
                    literal.push(bytes[j + 1] as char);
                    j += 2;
                    continue;
                }
                if d == quote {
                    closed = true;
                    break;
                }
                if d == b'\n' {
                    break;
                }
                literal.push(d as char);
                j += 1;
            }
            if closed {
                out.push((start, literal));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Path component of a string literal: URLs lose scheme and authority,
/// interpolated prefixes lose everything before the first `/`.
fn literal_path_component(literal: &str) -> Option<String> {
    let without_query = literal.split(['?', '#']).next().unwrap_or(literal);
    let path = if let Some(idx) = without_query.find("://") {
        let rest = &without_query[idx + 3..];
        match rest.find('/') {
            Some(slash) => &rest[slash..],
            None => return None,
        }
    } else if without_query.starts_with('/') {
        without_query
    } else if let Some(idx) = without_query.find('/') {
        &without_query[idx..]
    } else {
        return None;
    };
    if path.len() < 2 {
        return None;
    }
    Some(path.to_string())
}

fn preceding_method_hint(code: &str, literal_start: usize) -> Option<Method> {
    let window_start = literal_start.saturating_sub(64);
    // stay on char boundaries for safety with non-ascii code text
    let mut ws = window_start;
    while ws < code.len() && !code.is_char_boundary(ws) {
        ws += 1;
    }
    let window = code[ws..literal_start].to_ascii_lowercase();
    let mut best: Option<(usize, Method)> = None;
    for (token, method) in [
        ("get", Method::Get),
        ("post", Method::Post),
        ("put", Method::Put),
        ("patch", Method::Patch),
        ("delete", Method::Delete),
    ] {
        if let Some(pos) = window.rfind(token) {
            // require a word boundary so e.g. `target` does not read as `get`
            let before_ok = pos == 0
                || !window.as_bytes()[pos - 1].is_ascii_alphanumeric();
            let after = pos + token.len();
            let after_ok = after >= window.len()
                || !window.as_bytes()[after].is_ascii_alphanumeric();
            if before_ok && after_ok && best.map_or(true, |(b, _)| pos > b) {
                best = Some((pos, method));
            }
        }
    }
    best.map(|(_, m)| m)
}

// -------- runner --------

pub struct RunConfig<'a> {
    pub runner_command: &'a str,
    pub timeout: Duration,
}

impl<'a> RunConfig<'a> {
    pub fn new(runner_command: &'a str) -> Self {
        RunConfig {
            runner_command,
            timeout: DEFAULT_RUNNER_TIMEOUT,
        }
    }
}

/// Execute a composition artifact against running mocks and assemble a
/// validation report. The runner command template must contain `{code_file}`
/// and `{input_file}`; mock base URLs are exported as
/// `SERVICE_URL_<SERVICE_ID>` env vars.
///
/// The child process is only isolated by being a separate process with a
/// wall-clock timeout; do not run untrusted code without an external sandbox.
pub fn run_and_score(
    artifact: &CompositionArtifact,
    run: &RunConfig,
    mocks: &[MockHandle],
    specs: &[ServiceSpec],
    input_document: &Value,
    expected: &BTreeSet<String>,
    output_schema: &SchemaNode,
) -> Result<ValidationReport, HarnessError> {
    let dir = tempfile::TempDir::new()?;
    let code_file = dir.path().join(format!("composition.{}", file_ext(&artifact.runtime_label)));
    let input_file = dir.path().join("input.json");
    std::fs::write(&code_file, &artifact.code_text)?;
    std::fs::write(&input_file, serde_json::to_string(input_document).expect("serializable"))?;

    let command_line = run
        .runner_command
        .replace("{code_file}", &code_file.to_string_lossy())
        .replace("{input_file}", &input_file.to_string_lossy());
    let mut parts = command_line.split_whitespace();
    let static_refs = static_endpoint_scan(&artifact.code_text, specs);

    let mut report = ValidationReport {
        expected_endpoint_ids: expected.clone(),
        static_refs,
        invoked_endpoint_ids: BTreeSet::new(),
        static_coverage: 0.0,
        dynamic_coverage: 0.0,
        extraneous_invocations: BTreeSet::new(),
        output_schema_valid: None,
        exit_status: None,
        runner_error: None,
    };

    let Some(program) = parts.next() else {
        report.runner_error = Some("empty runner command".into());
        finalize_report(&mut report, mocks);
        return Ok(report);
    };
    let mut command = Command::new(program);
    command.args(parts);
    for mock in mocks {
        command.env(service_url_var(&mock.service_id), &mock.base_url);
    }
    command.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::null());

    let mut child = match command.spawn() {
        Ok(child) => child,
        Err(e) => {
            report.runner_error = Some(format!("spawn failed: {e}"));
            finalize_report(&mut report, mocks);
            return Ok(report);
        }
    };

    let started = Instant::now();
    let timed_out = loop {
        match child.try_wait() {
            Ok(Some(_)) => break false,
            Ok(None) => {
                if started.elapsed() > run.timeout {
                    let _ = child.kill();
                    let _ = child.wait();
                    break true;
                }
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => {
                report.runner_error = Some(format!("wait failed: {e}"));
                break false;
            }
        }
    };

    if timed_out {
        report.runner_error = Some(format!(
            "runner exceeded timeout of {} s",
            run.timeout.as_secs()
        ));
        finalize_report(&mut report, mocks);
        return Ok(report);
    }

    let output = child.wait_with_output()?;
    report.exit_status = output.status.code();
    let stdout = String::from_utf8_lossy(&output.stdout);
    report.output_schema_valid = Some(match serde_json::from_str::<Value>(stdout.trim()) {
        Ok(value) => validate_against_schema(&value, output_schema),
        Err(_) => false,
    });
    finalize_report(&mut report, mocks);
    Ok(report)
}

pub fn service_url_var(service_id: &str) -> String {
    let upper: String = service_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("SERVICE_URL_{upper}")
}

fn file_ext(runtime_label: &str) -> &'static str {
    match runtime_label.to_ascii_lowercase().as_str() {
        "python" | "python3" => "py",
        "javascript" | "node" => "js",
        "bash" | "sh" | "shell" => "sh",
        _ => "txt",
    }
}

fn finalize_report(report: &mut ValidationReport, mocks: &[MockHandle]) {
    let mut invoked = BTreeSet::new();
    for mock in mocks {
        invoked.extend(mock.invoked_endpoint_ids());
    }
    report.invoked_endpoint_ids = invoked;
    let n = report.expected_endpoint_ids.len().max(1) as f64;
    report.static_coverage = report
        .expected_endpoint_ids
        .intersection(&report.static_refs)
        .count() as f64
        / n;
    report.dynamic_coverage = report
        .expected_endpoint_ids
        .intersection(&report.invoked_endpoint_ids)
        .count() as f64
        / n;
    report.extraneous_invocations = report
        .invoked_endpoint_ids
        .difference(&report.expected_endpoint_ids)
        .cloned()
        .collect();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec_model::{parse_spec, resolve_refs, FormatHint};

    fn pets_spec() -> ServiceSpec {
        let doc = r#"{
            "openapi": "3.0.0", "info": {"title": "Pets", "version": "1"},
            "paths": {
                "/pets": {
                    "get": {"responses": {"200": {"description": "ok", "content": {"application/json": {"schema": {
                        "type": "object", "required": ["items"],
                        "properties": {"items": {"type": "array", "items": {"type": "string"}}}
                    }}}}}},
                    "post": {"responses": {"201": {"description": "created"}}}
                },
                "/pets/mine": {"get": {"responses": {}}},
                "/pets/{id}": {"get": {
                    "parameters": [{"name": "id", "in": "path", "required": true, "schema": {"type": "integer"}}],
                    "responses": {}
                }}
            }
        }"#;
        resolve_refs(&parse_spec(doc, FormatHint::Json).unwrap()).unwrap()
    }

    #[test]
    fn example_priority_explicit_example() {
        let mut schema = SchemaNode::of_kind(SchemaKind::String);
        schema.example = Some(Value::String("abc".into()));
        assert_eq!(synthesize_example(&schema), Value::String("abc".into()));
    }

    #[test]
    fn object_type_defaults() {
        let mut schema = SchemaNode::of_kind(SchemaKind::Object);
        schema
            .properties
            .insert("id".into(), SchemaNode::of_kind(SchemaKind::Integer));
        schema.required.insert("id".into());
        assert_eq!(
            synthesize_example(&schema),
            serde_json::json!({"id": 0})
        );
    }

    #[test]
    fn enum_first_value_wins_over_type_default() {
        let mut schema = SchemaNode::of_kind(SchemaKind::String);
        schema.enum_values = Some(vec![Value::String("open".into()), Value::String("closed".into())]);
        assert_eq!(synthesize_example(&schema), Value::String("open".into()));
    }

    #[test]
    fn recursive_schema_terminates_with_null_at_break() {
        let mut node = SchemaNode::of_kind(SchemaKind::Object);
        let mut children = SchemaNode::of_kind(SchemaKind::Array);
        let mut item = SchemaNode::any();
        item.cycle_marker = Some("Node".into());
        children.items = Some(Box::new(item));
        node.properties.insert("children".into(), children);
        node.required.insert("children".into());
        let value = synthesize_example(&node);
        assert_eq!(value, serde_json::json!({"children": []}));
    }

    #[test]
    fn synthesized_examples_validate_against_their_schema() {
        let spec = pets_spec();
        for ep in &spec.endpoints {
            for schema in ep.response_schemas.values() {
                let value = synthesize_example(schema);
                assert!(
                    validate_against_schema(&value, schema),
                    "self-consistency failed for {}",
                    ep.endpoint_id
                );
            }
        }
    }

    #[test]
    fn template_variable_matches_concrete_segment() {
        let spec = pets_spec();
        assert_eq!(
            match_request(&spec, Method::Get, "/pets/7"),
            Some("GET /pets/{id}".to_string())
        );
    }

    #[test]
    fn literal_segment_beats_template() {
        let spec = pets_spec();
        assert_eq!(
            match_request(&spec, Method::Get, "/pets/mine"),
            Some("GET /pets/mine".to_string())
        );
    }

    #[test]
    fn wrong_method_does_not_match() {
        let spec = pets_spec();
        assert_eq!(match_request(&spec, Method::Post, "/pets/7"), None);
    }

    #[test]
    fn scan_url_literal_unique_path() {
        let spec = pets_spec();
        let refs = static_endpoint_scan(r#"x = fetch("http://h:1/pets/7")"#, &[spec]);
        assert_eq!(
            refs.into_iter().collect::<Vec<_>>(),
            vec!["GET /pets/{id}".to_string()]
        );
    }

    #[test]
    fn scan_method_narrowing() {
        let spec = pets_spec();
        let refs = static_endpoint_scan(r#"client.post("/pets")"#, &[spec]);
        assert_eq!(
            refs.into_iter().collect::<Vec<_>>(),
            vec!["POST /pets".to_string()]
        );
    }

    #[test]
    fn scan_without_method_hint_includes_all_methods_on_path() {
        let spec = pets_spec();
        let refs = static_endpoint_scan(r#"path = "/pets""#, &[spec]);
        let ids: Vec<String> = refs.into_iter().collect();
        assert_eq!(ids, vec!["GET /pets".to_string(), "POST /pets".to_string()]);
    }

    #[test]
    fn scan_no_literals_is_empty() {
        let spec = pets_spec();
        assert!(static_endpoint_scan("x = 1 + 2", &[spec]).is_empty());
    }

    #[test]
    fn scan_never_invents_endpoints() {
        let spec = pets_spec();
        let all: BTreeSet<String> = spec.endpoints.iter().map(|e| e.endpoint_id.clone()).collect();
        let refs = static_endpoint_scan(
            r#"a = "/pets"; b = "/unknown/path"; get("/pets/mine")"#,
            &[spec],
        );
        assert!(refs.is_subset(&all));
    }

    #[test]
    fn mock_answers_and_logs() {
        let spec = pets_spec();
        let mut handle = start_mock(&spec, 0).unwrap();
        assert_eq!(handle.service_id, "pets");

        let ok = ureq::get(&format!("{}/pets", handle.base_url)).call().unwrap();
        assert_eq!(ok.status(), 200);
        let body: Value = ok.into_json().unwrap();
        assert!(body.get("items").is_some());

        let missing = ureq::get(&format!("{}/nope", handle.base_url)).call();
        match missing {
            Err(ureq::Error::Status(404, _)) => {}
            other => panic!("expected 404, got {other:?}"),
        }

        let log = handle.log();
        assert_eq!(log.len(), 2);
        assert_eq!(log[0].seq, 1);
        assert_eq!(log[0].matched_endpoint_id.as_deref(), Some("GET /pets"));
        assert_eq!(log[1].seq, 2);
        assert!(log[1].matched_endpoint_id.is_none());
        assert_eq!(log[1].status_returned, 404);
        handle.stop();
    }

    #[test]
    fn concurrent_requests_all_logged_with_sequential_seq() {
        let spec = pets_spec();
        let handle = start_mock(&spec, 0).unwrap();
        let url = format!("{}/pets", handle.base_url);
        std::thread::scope(|scope| {
            for _ in 0..100 {
                let url = url.clone();
                scope.spawn(move || {
                    let _ = ureq::get(&url).call();
                });
            }
        });
        let log = handle.log();
        assert_eq!(log.len(), 100);
        for (i, record) in log.iter().enumerate() {
            assert_eq!(record.seq, i as u64 + 1);
        }
    }

    #[test]
    fn service_url_var_shape() {
        assert_eq!(service_url_var("pet-store"), "SERVICE_URL_PET_STORE");
    }
}
