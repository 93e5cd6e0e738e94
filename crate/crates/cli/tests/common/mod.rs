#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use evtab_cli::commands::{extract, ExtractArgs, ExtractReport};
use evtab_core::clock::{Clock, FixedClock};
use evtab_core::pipeline::PipelineMode;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

pub fn clock() -> Arc<dyn Clock> {
    Arc::new(FixedClock::default())
}

pub fn extract_into(store: &Path, documents: Vec<PathBuf>, mode: Option<PipelineMode>) -> ExtractReport {
    extract(
        &ExtractArgs {
            config: None,
            schema: fixture("trial_schema.json"),
            documents,
            store: store.to_path_buf(),
            mode,
        },
        clock(),
    )
    .expect("extraction starts")
}
