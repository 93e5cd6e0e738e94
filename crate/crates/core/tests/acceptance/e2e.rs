use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use evtab_core::clock::FixedClock;
use evtab_core::docmodel::Modality;
use evtab_core::pipeline::{check_call_identity, DocumentRun};
use evtab_core::reconciler::VerificationLabel;
use evtab_core::store::Store;
use evtab_core::text::is_not_reported;

use super::fixtures::{document, ensure, run_mock, schema};

fn serialize(run: &DocumentRun) -> String {
    let cells = serde_json::to_string_pretty(&run.cells).unwrap();
    let predictions = serde_json::to_string_pretty(&run.predictions).unwrap();
    let manifest = serde_json::to_string_pretty(&run.manifest).unwrap();
    let ledger: String = run.ledger.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    let cache = serde_json::to_string_pretty(&run.cache).unwrap();
    [cells, predictions, manifest, ledger, cache].join("\n")
}

fn stored_files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn check() -> Result<String, String> {
    let doc = document();
    let schema = schema();
    let modalities: BTreeSet<Modality> = doc.chunks.iter().map(|c| c.modality).collect();
    ensure(doc.n_pages == 6 && modalities.len() == 3, || "fixture must have 6 pages and all modalities".into())?;
    ensure(schema.columns.len() == 20 && schema.groups().len() == 3, || "fixture schema must be 20 columns in 3 groups".into())?;

    let first = run_mock(&doc, &schema);
    let second = run_mock(&doc, &schema);
    let (s1, s2) = (serialize(&first), serialize(&second));
    ensure(s1 == s2, || "in-memory run outputs differ between runs".into())?;
    check_call_identity(&first.manifest)?;

    let mut trees = Vec::new();
    for run in [&first, &second] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let store = Store::with_clock(dir.path(), Arc::new(FixedClock::default())).map_err(|e| e.to_string())?;
        store
            .persist_run(&doc, &run.cells, run.manifest.clone(), &run.ledger)
            .map_err(|e| e.to_string())?;
        trees.push(stored_files(dir.path()));
    }
    ensure(trees[0] == trees[1], || "persisted files differ between runs".into())?;
    let bytes: usize = trees[0].iter().map(|(_, b)| b.len()).sum();

    let eligible: Vec<_> = first
        .cells
        .iter()
        .filter(|c| !is_not_reported(&c.final_value) && c.label != VerificationLabel::BothWrong)
        .collect();
    let attributed = eligible.iter().filter(|c| c.attribution.is_some()).count();
    ensure(!eligible.is_empty() && attributed == eligible.len(), || {
        format!("attribution coverage {attributed}/{}", eligible.len())
    })?;
    Ok(format!(
        "{} cells, {} ledger records, {} stored files ({bytes} bytes) identical; coverage {attributed}/{} = 100%",
        first.cells.len(),
        first.ledger.len(),
        trees[0].len(),
        eligible.len()
    ))
}
