use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use evtab_core::docmodel::{Chunk, Modality, ParsedDocument};
use evtab_core::retrieval::{build_index, cosine_similarity, search, EmbeddingVector, HashEmbedder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fixtures::ensure;

const INDEXES: usize = 100;
const MAX_PAGES: u32 = 200;
const DIM: usize = 32;
const K: usize = 5;
const SCORE_TOL: f64 = 1e-9;
const BUDGET: Duration = Duration::from_secs(10);
const PAIRS: usize = 1000;
const COSINE_TOL: f64 = 1e-9;

const WORDS: &[&str] = &[
    "survival", "median", "hazard", "ratio", "placebo", "arm", "phase", "randomized", "months", "interval",
    "progression", "docetaxel", "androgen", "deprivation", "metastatic", "volume", "adverse", "events", "grade",
    "baseline", "age", "region", "endpoint", "secondary", "primary", "follow", "up", "dose", "treatment", "patients",
];

fn random_doc(rng: &mut ChaCha8Rng, n: usize) -> ParsedDocument {
    let n_pages = rng.random_range(1..=MAX_PAGES);
    let chunks = (1..=n_pages)
        .map(|page| {
            let len = rng.random_range(1..30);
            let content: Vec<&str> = (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            Chunk {
                chunk_id: format!("c{page}"),
                page,
                modality: Modality::Text,
                content: content.join(" "),
                bbox: None,
            }
        })
        .collect();
    ParsedDocument {
        doc_id: format!("doc-{n}"),
        title: "random".into(),
        n_pages,
        chunks,
        page_images: BTreeMap::new(),
        source_pdf: None,
    }
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub fn check_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let embedder = HashEmbedder::new(DIM);
    let started = Instant::now();
    let (mut pages, mut ties) = (0usize, 0usize);
    for n in 0..INDEXES {
        let doc = random_doc(&mut rng, n);
        let mut index = build_index(&doc, &embedder).map_err(|e| e.to_string())?;
        ensure(index.dimension == DIM, || format!("index {n} has dimension {}", index.dimension))?;
        pages += index.entries.len();
        // copy some vectors so exact ties occur
        let len = index.entries.len();
        for _ in 0..len / 5 {
            let (from, to) = (rng.random_range(0..len), rng.random_range(0..len));
            index.entries[to].vector = index.entries[from].vector.clone();
        }
        let query = if rng.random_bool(0.5) {
            index.entries[rng.random_range(0..len)].content.clone()
        } else {
            (0..4).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
        };
        let q = embedder.embed_one(&query);
        let mut expected: Vec<(u32, f64)> = index
            .entries
            .iter()
            .map(|e| (e.page, oracle_cosine(&q.0, &e.vector.0)))
            .collect();
        expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        ties += expected.windows(2).take(K).filter(|w| w[0].1 == w[1].1).count();
        expected.truncate(K);

        let hits = search(&index, &query, &embedder, K).map_err(|e| e.to_string())?;
        let got: Vec<u32> = hits.iter().map(|h| h.page).collect();
        let want: Vec<u32> = expected.iter().map(|e| e.0).collect();
        ensure(got == want, || format!("index {n}: pages {got:?}, brute force {want:?}"))?;
        for (h, (_, s)) in hits.iter().zip(&expected) {
            ensure((h.score - s).abs() <= SCORE_TOL, || format!("index {n}: score {} vs {s}", h.score))?;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < BUDGET, || format!("took {elapsed:?}, budget {BUDGET:?}"))?;
    ensure(ties > 0, || "no ties were exercised".into())?;
    Ok(format!("{INDEXES} indexes, {pages} pages, {ties} top-k ties in {elapsed:.2?}"))
}

pub fn check_cosine() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut worst: f64 = 0.0;
    for n in 0..PAIRS {
        let dim = rng.random_range(1..=64);
        let mut draw = || EmbeddingVector((0..dim).map(|_| rng.random_range(-10.0..10.0)).collect());
        let (a, b) = (draw(), draw());
        let k = rng.random_range(0.001..1000.0);
        let scaled = EmbeddingVector(a.0.iter().map(|x| x * k).collect());
        let cos = |x: &EmbeddingVector, y: &EmbeddingVector| cosine_similarity(x, y).map_err(|e| e.to_string());
        let ab = cos(&a, &b)?;
        let checks = [
            ("scale", (cos(&scaled, &b)? - ab).abs()),
            ("symmetry", (cos(&b, &a)? - ab).abs()),
            ("self", (cos(&a, &a)? - 1.0).abs()),
            ("self-scaled", (cos(&a, &scaled)? - 1.0).abs()),
        ];
        for (what, err) in checks {
            worst = worst.max(err);
            ensure(err <= COSINE_TOL, || format!("pair {n}: {what} off by {err:e}"))?;
        }
    }
    Ok(format!("{PAIRS} pairs, worst deviation {worst:.1e}"))
}
