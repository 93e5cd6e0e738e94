//! Validated, retried, accounted model calls.

use serde_json::Value;
use thiserror::Error;

use super::{
    count_output_tokens, count_request_tokens, CallOutcome, ModelBackend, ModelOutput, ModelRequest,
    RawOutput, RequestMode, ToolCall, TransportError, Turn, UsageLedger, UsageRecord,
};
use crate::clock::Clock;

/// Default number of re-sends after an invalid or failed call.
pub const DEFAULT_RETRY_LIMIT: u32 = 2;

#[derive(Debug, Clone, Error)]
pub enum AttemptFailure {
    #[error("invalid output: {reason}")]
    Invalid { reason: String, raw: String },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, Error)]
pub enum InvokeError {
    #[error("request rejected before sending: {0}")]
    InvalidRequest(String),
    /// `attempts` counts calls actually made; a non-retryable transport
    /// failure ends the loop early.
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: AttemptFailure },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub output: ModelOutput,
    /// Calls made, including the successful one.
    pub attempts: u32,
}

impl Invocation {
    pub fn retries(&self) -> u32 {
        self.attempts - 1
    }
}

pub struct Invoker<'a> {
    pub backend: &'a dyn ModelBackend,
    pub ledger: &'a UsageLedger,
    pub clock: &'a dyn Clock,
    pub retry_limit: u32,
}

/// Pulls a JSON value out of model text, tolerating a fenced code block.
pub fn extract_json_payload(text: &str) -> Option<Value> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    let start = trimmed.find("```")?;
    let after = &trimmed[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    serde_json::from_str(body[..end].trim()).ok()
}

fn schema_errors(schema: &Value, instance: &Value) -> Result<(), String> {
    let validator = jsonschema::validator_for(schema).map_err(|e| format!("unusable schema: {e}"))?;
    let errors: Vec<String> = validator
        .iter_errors(instance)
        .take(5)
        .map(|e| {
            let path = e.instance_path().to_string();
            if path.is_empty() {
                e.to_string()
            } else {
                format!("{path}: {e}")
            }
        })
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors.join("; "))
    }
}

fn raw_text(output: &RawOutput) -> String {
    match output {
        RawOutput::Text(t) => t.clone(),
        RawOutput::ToolCall { name, arguments, .. } => format!("{name}({arguments})"),
    }
}

impl Invoker<'_> {
    /// Sends `request`, retrying on invalid output or transport failure.
    pub fn invoke(&self, request: &ModelRequest) -> Result<Invocation, InvokeError> {
        self.invoke_checked(request, &|_| Ok(()))
    }

    /// Like [`Invoker::invoke`], with an extra caller check applied after
    /// schema validation. A failed check counts as invalid output.
    pub fn invoke_checked(
        &self,
        request: &ModelRequest,
        check: &dyn Fn(&ModelOutput) -> Result<(), String>,
    ) -> Result<Invocation, InvokeError> {
        request.validate().map_err(InvokeError::InvalidRequest)?;
        let mut current = request.clone();
        let mut last = None;
        let mut made = 0;
        for attempt in 0..=self.retry_limit {
            made = attempt + 1;
            let started = self.clock.now();
            let result = self.backend.complete(&current);
            let wall = (self.clock.now() - started).num_milliseconds().max(0) as u64;
            let estimated_input = count_request_tokens(&current);
            let call_id = format!(
                "{}:{}:b{}:t{}:a{}",
                current.tag.doc_id,
                current.tag.agent.as_str(),
                current.tag.batch_id.map_or("-".to_string(), |b| b.to_string()),
                current.tag.turn,
                attempt
            );
            let mut record = UsageRecord {
                call_id,
                doc_id: current.tag.doc_id.clone(),
                agent: current.tag.agent,
                batch_id: current.tag.batch_id,
                turn: current.tag.turn,
                attempt,
                input_tokens: estimated_input,
                output_tokens: 0,
                wall_time_ms: wall,
                outcome: CallOutcome::Structured,
            };
            let failure = match result {
                Err(err) => {
                    record.outcome = CallOutcome::TransportError {
                        message: err.message.clone(),
                    };
                    self.ledger.append(record);
                    let retryable = err.retryable;
                    last = Some(AttemptFailure::Transport(err));
                    if !retryable {
                        break;
                    }
                    continue;
                }
                Ok(reply) => {
                    if let Some(usage) = reply.usage {
                        record.input_tokens = usage.input;
                        record.output_tokens = usage.output;
                    } else {
                        record.output_tokens = count_output_tokens(&reply.output);
                    }
                    match self.validate(&current, &reply.output, attempt, check) {
                        Ok(output) => {
                            record.outcome = match &output {
                                ModelOutput::Structured(_) => CallOutcome::Structured,
                                ModelOutput::ToolCall(c) => CallOutcome::ToolCall {
                                    name: c.name.clone(),
                                },
                            };
                            self.ledger.append(record);
                            return Ok(Invocation {
                                output,
                                attempts: attempt + 1,
                            });
                        }
                        Err(reason) => {
                            record.outcome = CallOutcome::Invalid {
                                reason: reason.clone(),
                            };
                            self.ledger.append(record);
                            AttemptFailure::Invalid {
                                reason,
                                raw: raw_text(&reply.output),
                            }
                        }
                    }
                }
            };
            if let AttemptFailure::Invalid { reason, .. } = &failure {
                current.turns.push(Turn::user_text(format!(
                    "Your previous response was rejected: {reason}. \
                     Respond again and follow the required format exactly."
                )));
            }
            last = Some(failure);
        }
        Err(InvokeError::Exhausted {
            attempts: made,
            last: last.unwrap_or_else(|| TransportError::fatal("no attempt made").into()),
        })
    }

    fn validate(
        &self,
        request: &ModelRequest,
        output: &RawOutput,
        attempt: u32,
        check: &dyn Fn(&ModelOutput) -> Result<(), String>,
    ) -> Result<ModelOutput, String> {
        let validated = match (request.mode, output) {
            (RequestMode::ToolLoop, RawOutput::ToolCall { id, name, arguments }) => {
                let spec = request
                    .tools
                    .iter()
                    .find(|t| &t.name == name)
                    .ok_or_else(|| format!("call to undeclared tool `{name}`"))?;
                schema_errors(&spec.parameters, arguments)
                    .map_err(|e| format!("arguments for `{name}` are invalid: {e}"))?;
                ModelOutput::ToolCall(ToolCall {
                    id: id.clone().unwrap_or_else(|| {
                        format!("call-{}-{}-{}", request.tag.turn, attempt, name)
                    }),
                    name: name.clone(),
                    arguments: arguments.clone(),
                })
            }
            (RequestMode::ToolLoop, RawOutput::Text(_)) => {
                return Err("expected a tool call".into());
            }
            (_, RawOutput::ToolCall { name, .. }) => {
                return Err(format!("unexpected tool call `{name}` in a structured request"));
            }
            (_, RawOutput::Text(text)) => {
                let value = extract_json_payload(text).ok_or("output is not valid JSON")?;
                if let Some(schema) = &request.output_schema {
                    schema_errors(schema, &value)?;
                }
                ModelOutput::Structured(value)
            }
        };
        check(&validated)?;
        Ok(validated)
    }
}
