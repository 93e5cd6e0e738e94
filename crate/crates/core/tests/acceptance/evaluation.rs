use evtab_core::backend::mock::MockBackend;
use evtab_core::evaluation::{numeric_match, score_run, table1_rows, EvalReport, GoldCell, GoldSet, Prediction, Tolerance};
use evtab_core::pipeline::PipelineMode;
use evtab_core::schema::{Category, ColumnDef, Schema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fixtures::{document, ensure, gold, run_with, schema};

const REPORTED_TOL: f64 = 0.05;
const IDENTITY_TOL: f64 = 1e-9;
const RANDOM_REPORTS: usize = 200;

// (column, category, gold, prediction, expected correct)
const TEN_CELLS: [(&str, Category, &str, &str, bool); 10] = [
    ("hr_os", Category::Numerical, "0.62 (95% CI 0.51–0.76)", "HR 0.62 (0.51-0.76)", true),
    ("median_os", Category::Numerical, "36.5 months", "36.5", true),
    ("randomized", Category::Numerical, "1,150", "1150 patients", true),
    ("high_volume", Category::Numerical, "62%", "62.0%", true),
    ("age_range", Category::Numerical, "10–20", "10 to 20", true),
    ("follow_up", Category::Numerical, "44.0", "40", false),
    ("control_arm", Category::FreeText, "Placebo plus ADT", "placebo plus ADT", true),
    ("blinding", Category::FreeText, "Open label", "open-label", true),
    ("primary_endpoint", Category::FreeText, "Overall survival", "Overall survival", true),
    ("region", Category::FreeText, "North America and Europe", "Not reported", false),
];

// (prediction, gold, match) under the default tolerance
const NUMERIC_ORACLE: [(&str, &str, bool); 30] = [
    // rounding and formatting
    ("62.0", "62", true),
    ("0.621", "0.62", true),
    ("0.63", "0.62", false),
    ("36.5 months", "36.5", true),
    ("36", "36.5", false),
    ("1,234", "1234", true),
    ("1234.4", "1,234", true),
    ("1241", "1,234", false),
    // confidence intervals
    ("0.62 (95% CI 0.51–0.76)", "0.62 (0.51-0.76)", true),
    ("0.62 (95% CI 0.51–0.76)", "0.62 [0.51, 0.76]", true),
    ("0.62", "0.62 (0.51–0.76)", false),
    ("0.62 (0.51–0.77)", "0.62 (0.51–0.76)", false),
    ("HR 0.62; 95% CI, 0.51 to 0.76", "0.62 (0.51–0.76)", true),
    ("0.62 (0.51-0.76)", "0.62 (95% CI 0.51–0.76)", true),
    // ranges and signs
    ("10–20", "10-20", true),
    ("10 to 20", "10–20", true),
    ("10-21", "10-20", false),
    ("range 0.51-0.76", "0.51–0.76", true),
    ("-0.2", "HR −0.2", true),
    ("0.2", "-0.2", false),
    // percentages
    ("62%", "62", true),
    ("0.62", "62%", false),
    ("45.3%", "45.3% (n=120)", false),
    ("120 (45.3%)", "45.3% (n=120)", true),
    ("45.6%", "45.3%", false),
    // sentinel and multiplicity
    ("Not reported", "Not reported", true),
    ("not reported ", "NOT REPORTED", true),
    ("Not reported", "12", false),
    ("12", "Not reported", false),
    ("5", "5 and 5", false),
];

fn ten_cell_fixture() -> (Schema, GoldSet, Vec<Prediction>) {
    let schema = Schema {
        name: "ten".into(),
        version: "1".into(),
        columns: TEN_CELLS
            .iter()
            .map(|(id, category, ..)| ColumnDef {
                id: id.to_string(),
                name: id.replace('_', " "),
                definition: "value; Not reported if absent".into(),
                category: *category,
                group: "g".into(),
            })
            .collect(),
    };
    let gold = GoldSet {
        doc_id: "ten".into(),
        cells: TEN_CELLS
            .iter()
            .map(|(id, _, g, ..)| GoldCell {
                column_id: id.to_string(),
                value: g.to_string(),
                attribution: None,
            })
            .collect(),
    };
    let predictions = TEN_CELLS
        .iter()
        .map(|(id, _, _, p, _)| Prediction {
            column_id: id.to_string(),
            value: p.to_string(),
            failed: false,
            attribution: None,
        })
        .collect();
    (schema, gold, predictions)
}

fn check_identity(report: &EvalReport) -> Result<(), String> {
    report.check_overall_identity()?;
    for (name, s) in report.strata() {
        if let (Some(c), Some(m), Some(o)) = (s.correctness, s.completeness, s.overall) {
            ensure((o - (c + m) / 2.0).abs() <= IDENTITY_TOL, || format!("{}: {name} overall {o}", report.label))?;
        }
    }
    Ok(())
}

pub fn check() -> Result<String, String> {
    // hand-built fixture: 10 gold cells, 9 attempted, 8 correct
    let (schema10, gold10, preds10) = ten_cell_fixture();
    let attempted = TEN_CELLS.iter().filter(|c| c.3 != "Not reported").count();
    let correct = TEN_CELLS.iter().filter(|c| c.4).count();
    assert_eq!((attempted, correct), (9, 8));
    let oracle = (100.0 * 8.0 / 9.0, 100.0 * 9.0 / 10.0);
    let oracle = (oracle.0, oracle.1, (oracle.0 + oracle.1) / 2.0);
    let e = score_run("ten-cell", &[(&gold10, &preds10)], &schema10, None, Tolerance::default()).map_err(|e| e.to_string())?;
    for (v, (id, .., expected)) in e.verdicts.iter().zip(TEN_CELLS.iter()) {
        let is_correct = v.verdict == evtab_core::evaluation::Verdict::Correct;
        ensure(is_correct == *expected, || format!("{id}: verdict {:?}", v.verdict))?;
    }
    let all = &e.report.all;
    let got = (all.correctness.unwrap(), all.completeness.unwrap(), all.overall.unwrap());
    for (g, o, stated, what) in [
        (got.0, oracle.0, 88.9, "correctness"),
        (got.1, oracle.1, 90.0, "completeness"),
        (got.2, oracle.2, 89.4, "overall"),
    ] {
        ensure((g - o).abs() <= IDENTITY_TOL, || format!("{what} {g} vs oracle {o}"))?;
        ensure((g - stated).abs() <= REPORTED_TOL, || format!("{what} {g} vs stated {stated}"))?;
    }
    let row = &table1_rows(std::slice::from_ref(&e.report))[0];
    ensure(
        (row.all_corr, row.all_comp, row.all_ovrl) == (Some(88.9), Some(90.0), Some(89.4)),
        || format!("table row {row:?}"),
    )?;

    // every emitted report: fixture, pipeline modes, random predictions
    let mut reports = vec![e.report.clone()];
    let (doc, schema, gold) = (document(), schema(), gold());
    for mode in [PipelineMode::Full, PipelineMode::AgentAOnly, PipelineMode::ParsedSingle] {
        let run = run_with(&doc, &schema, &MockBackend::new(), mode);
        let ev = score_run(mode.as_str(), &[(&gold, &run.predictions)], &schema, None, Tolerance::default())
            .map_err(|e| e.to_string())?;
        reports.push(ev.report);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let pool: Vec<&str> = TEN_CELLS.iter().flat_map(|c| [c.2, c.3]).chain(["Not reported", "7"]).collect();
    for n in 0..RANDOM_REPORTS {
        let preds: Vec<Prediction> = schema10
            .columns
            .iter()
            .filter_map(|c| {
                let keep = rng.random_bool(0.9);
                let value = pool[rng.random_range(0..pool.len())].to_string();
                let failed = rng.random_bool(0.1);
                keep.then(|| Prediction {
                    column_id: c.id.clone(),
                    value,
                    failed,
                    attribution: None,
                })
            })
            .collect();
        let ev = score_run(&format!("random-{n}"), &[(&gold10, &preds)], &schema10, None, Tolerance::default())
            .map_err(|e| e.to_string())?;
        reports.push(ev.report);
    }
    for r in &reports {
        check_identity(r)?;
    }

    let mut mismatches = Vec::new();
    for (i, (p, g, expected)) in NUMERIC_ORACLE.iter().enumerate() {
        if numeric_match(p, g, Tolerance::default()) != *expected {
            mismatches.push(format!("#{i} {p:?} vs {g:?}"));
        }
    }
    ensure(mismatches.is_empty(), || format!("numeric oracle mismatches: {}", mismatches.join(", ")))?;

    Ok(format!(
        "ten-cell {:.1}/{:.1}/{:.1}; identity held on {} reports; {}/{} numeric oracle cases",
        got.0,
        got.1,
        got.2,
        reports.len(),
        NUMERIC_ORACLE.len(),
        NUMERIC_ORACLE.len()
    ))
}
