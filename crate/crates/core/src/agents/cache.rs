//! Per-document record of pages already handed to Agent B.

use std::collections::BTreeSet;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

/// Placeholder sent instead of a page the session has already received.
pub fn cache_pointer(page: u32) -> String {
    format!("[[cached:page={page}]]")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageTransmission {
    pub page: u32,
    pub chars: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CacheStats {
    pub distinct_pages: usize,
    /// Page-content characters sent, summed over every transmission.
    pub transmitted_chars: usize,
    pub pointers_returned: usize,
    pub transmissions: Vec<PageTransmission>,
}

#[derive(Debug, Default)]
struct State {
    provided: BTreeSet<u32>,
    stats: CacheStats,
}

#[derive(Debug)]
pub struct SessionCache {
    pub doc_id: String,
    state: Mutex<State>,
}

impl SessionCache {
    pub fn new(doc_id: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            state: Mutex::new(State::default()),
        }
    }

    /// Returns `content` the first time `page` is claimed and a pointer on
    /// every later claim. Check and insert happen under one lock.
    pub fn claim(&self, page: u32, content: &str) -> String {
        let mut state = self.state.lock().expect("cache lock");
        if state.provided.insert(page) {
            let chars = content.chars().count();
            state.stats.distinct_pages += 1;
            state.stats.transmitted_chars += chars;
            state.stats.transmissions.push(PageTransmission { page, chars });
            content.to_string()
        } else {
            state.stats.pointers_returned += 1;
            cache_pointer(page)
        }
    }

    pub fn contains(&self, page: u32) -> bool {
        self.state.lock().expect("cache lock").provided.contains(&page)
    }

    pub fn provided_pages(&self) -> BTreeSet<u32> {
        self.state.lock().expect("cache lock").provided.clone()
    }

    pub fn stats(&self) -> CacheStats {
        self.state.lock().expect("cache lock").stats.clone()
    }
}
