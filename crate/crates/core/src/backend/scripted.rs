//! Test backends: a reply queue and a closure.

use std::collections::VecDeque;
use std::sync::Mutex;

use super::{ModelBackend, ModelRequest, RawReply, TransportError};

/// Replays a fixed sequence of replies and records every request it saw.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<Result<RawReply, TransportError>>>,
    seen: Mutex<Vec<ModelRequest>>,
}

impl ScriptedBackend {
    pub fn new(replies: Vec<Result<RawReply, TransportError>>) -> Self {
        Self {
            replies: Mutex::new(replies.into()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ModelRequest> {
        self.seen.lock().expect("scripted lock").clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("scripted lock").len()
    }
}

impl ModelBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &ModelRequest) -> Result<RawReply, TransportError> {
        self.seen.lock().expect("scripted lock").push(request.clone());
        self.replies
            .lock()
            .expect("scripted lock")
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::fatal("script exhausted")))
    }
}

/// Answers with a closure; useful when replies depend on the request.
pub struct FnBackend<F> {
    name: String,
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&ModelRequest) -> Result<RawReply, TransportError> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> ModelBackend for FnBackend<F>
where
    F: Fn(&ModelRequest) -> Result<RawReply, TransportError> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &ModelRequest) -> Result<RawReply, TransportError> {
        (self.f)(request)
    }
}
