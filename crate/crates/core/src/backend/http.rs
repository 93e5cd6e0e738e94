//! Chat-completions backend for OpenAI-compatible endpoints.

use std::path::Path;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Map, Value};

use super::{ContentPart, ModelBackend, ModelRequest, RawOutput, RawReply, RequestMode, TokenCounts, TransportError, Turn};

#[derive(Debug, Clone)]
pub struct OpenAiCompatBackend {
    pub name: String,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout: Duration,
}

fn image_url(reference: &str) -> Result<String, TransportError> {
    if reference.starts_with("data:") || reference.starts_with("http://") || reference.starts_with("https://") {
        return Ok(reference.to_string());
    }
    let bytes = std::fs::read(reference)
        .map_err(|e| TransportError::fatal(format!("cannot read page image {reference}: {e}")))?;
    let mime = match Path::new(reference)
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        _ => "image/png",
    };
    Ok(format!(
        "data:{mime};base64,{}",
        base64::engine::general_purpose::STANDARD.encode(bytes)
    ))
}

fn content_parts(parts: &[ContentPart]) -> Result<Vec<Value>, TransportError> {
    parts
        .iter()
        .map(|p| {
            Ok(match p {
                ContentPart::Text { text } => json!({"type": "text", "text": text}),
                ContentPart::Document { markdown, .. } => json!({"type": "text", "text": markdown}),
                ContentPart::Image { reference } => {
                    json!({"type": "image_url", "image_url": {"url": image_url(reference)?}})
                }
            })
        })
        .collect()
}

/// Builds the chat-completions request body.
pub fn chat_request_body(model: &str, request: &ModelRequest) -> Result<Value, TransportError> {
    let mut messages = vec![json!({"role": "system", "content": request.system_prompt})];
    for turn in &request.turns {
        match turn {
            Turn::User { parts } => {
                messages.push(json!({"role": "user", "content": content_parts(parts)?}));
            }
            Turn::Assistant { call } => messages.push(json!({
                "role": "assistant",
                "content": null,
                "tool_calls": [{
                    "id": call.id,
                    "type": "function",
                    "function": {"name": call.name, "arguments": call.arguments.to_string()}
                }]
            })),
            Turn::Tool { call_id, parts, .. } => {
                let text: Vec<&str> = parts
                    .iter()
                    .filter_map(|p| match p {
                        ContentPart::Text { text } => Some(text.as_str()),
                        _ => None,
                    })
                    .collect();
                messages.push(json!({"role": "tool", "tool_call_id": call_id, "content": text.join("\n")}));
                // tool messages cannot carry images; follow with a user message
                let images: Vec<ContentPart> = parts
                    .iter()
                    .filter(|p| matches!(p, ContentPart::Image { .. }))
                    .cloned()
                    .collect();
                if !images.is_empty() {
                    messages.push(json!({"role": "user", "content": content_parts(&images)?}));
                }
            }
        }
    }
    let mut body = Map::new();
    body.insert("model".into(), json!(model));
    body.insert("messages".into(), Value::Array(messages));
    body.insert("temperature".into(), json!(request.temperature));
    if request.mode == RequestMode::ToolLoop {
        let tools: Vec<Value> = request
            .tools
            .iter()
            .map(|t| {
                json!({"type": "function", "function": {
                    "name": t.name, "description": t.description, "parameters": t.parameters
                }})
            })
            .collect();
        body.insert("tools".into(), Value::Array(tools));
        body.insert("tool_choice".into(), json!("required"));
    } else if let Some(schema) = &request.output_schema {
        body.insert(
            "response_format".into(),
            json!({"type": "json_schema", "json_schema": {"name": "output", "schema": schema}}),
        );
    }
    Ok(Value::Object(body))
}

/// Decodes a chat-completions response body into the first choice.
pub fn parse_chat_response(body: &Value) -> Result<RawReply, TransportError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| TransportError::retryable("response has no choices[0].message"))?;
    let usage = body.get("usage").and_then(|u| {
        Some(TokenCounts {
            input: u.get("prompt_tokens")?.as_u64()?,
            output: u.get("completion_tokens")?.as_u64()?,
        })
    });
    if let Some(call) = message.pointer("/tool_calls/0") {
        let name = call
            .pointer("/function/name")
            .and_then(Value::as_str)
            .ok_or_else(|| TransportError::retryable("tool call has no function name"))?;
        let raw_args = call.pointer("/function/arguments").cloned().unwrap_or(Value::Null);
        // unparseable arguments are kept as a string so validation rejects them
        let arguments = match raw_args {
            Value::String(s) => serde_json::from_str(&s).unwrap_or(Value::String(s)),
            other => other,
        };
        return Ok(RawReply {
            output: RawOutput::ToolCall {
                id: call.get("id").and_then(Value::as_str).map(str::to_string),
                name: name.to_string(),
                arguments,
            },
            usage,
        });
    }
    let text = match message.get("content") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(parts)) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        _ => String::new(),
    };
    Ok(RawReply {
        output: RawOutput::Text(text),
        usage,
    })
}

impl ModelBackend for OpenAiCompatBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &ModelRequest) -> Result<RawReply, TransportError> {
        let key = std::env::var(&self.api_key_env)
            .map_err(|_| TransportError::fatal(format!("environment variable {} is not set", self.api_key_env)))?;
        let body = chat_request_body(&self.model, request)?;
        let url = format!("{}/chat/completions", self.endpoint.trim_end_matches('/'));
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut response = agent
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
                    TransportError::retryable(format!("HTTP {code}"))
                }
                ureq::Error::StatusCode(code) => TransportError::fatal(format!("HTTP {code}")),
                other => TransportError::retryable(other.to_string()),
            })?;
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::retryable(e.to_string()))?;
        parse_chat_response(&body)
    }
}
