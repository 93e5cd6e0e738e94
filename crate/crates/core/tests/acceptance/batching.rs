use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use evtab_core::schema::{pack_batches, Category, ColumnDef, Schema, DEFAULT_BATCH_LIMIT};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fixtures::ensure;

const SCHEMAS: usize = 500;
const LIMIT: usize = 15;
const BUDGET: Duration = Duration::from_secs(5);

fn random_schema(rng: &mut ChaCha8Rng) -> Schema {
    let groups = rng.random_range(1..=10);
    let mut columns = Vec::new();
    for g in 0..groups {
        for i in 0..rng.random_range(1..=40) {
            columns.push(ColumnDef {
                id: format!("g{g}_c{i}"),
                name: format!("Column {i}"),
                definition: "value; Not reported if absent".into(),
                category: Category::Numerical,
                group: format!("group-{g}"),
            });
        }
    }
    // a third of the schemas list their groups interleaved
    if rng.random_bool(1.0 / 3.0) {
        columns.shuffle(rng);
    }
    Schema {
        name: "random".into(),
        version: "1".into(),
        columns,
    }
}

fn check_one(schema: &Schema) -> Result<(), String> {
    let batches = pack_batches(schema, LIMIT);
    ensure(batches == pack_batches(schema, LIMIT), || "packing is not deterministic".into())?;

    // partition
    let mut seen: Vec<&str> = batches.iter().flat_map(|b| b.columns.iter().map(|c| c.id.as_str())).collect();
    seen.sort_unstable();
    let mut expected: Vec<&str> = schema.columns.iter().map(|c| c.id.as_str()).collect();
    expected.sort_unstable();
    ensure(seen == expected, || "batches do not partition the columns".into())?;

    for (i, b) in batches.iter().enumerate() {
        ensure(b.batch_id == i, || format!("batch {i} has id {}", b.batch_id))?;
        ensure(!b.is_empty() && b.len() <= LIMIT, || format!("batch {i} has {} columns", b.len()))?;
    }

    // contiguity: a group fits in one batch when it can, otherwise it owns a
    // run of consecutive batches; column order within a group is kept
    let mut members: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for c in &schema.columns {
        members.entry(c.group.as_str()).or_default().push(c.id.as_str());
    }
    for (group, ids) in &members {
        let holding: Vec<usize> = batches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.columns.iter().any(|c| c.group == *group))
            .map(|(i, _)| i)
            .collect();
        if ids.len() <= LIMIT {
            ensure(holding.len() == 1, || format!("group {group} ({} cols) spans {holding:?}", ids.len()))?;
        } else {
            ensure(holding.len() == ids.len().div_ceil(LIMIT), || format!("group {group} spans {holding:?}"))?;
            ensure(holding.windows(2).all(|w| w[1] == w[0] + 1), || format!("group {group} is not consecutive"))?;
            for &i in &holding {
                ensure(batches[i].columns.iter().all(|c| c.group == *group), || {
                    format!("oversized group {group} shares batch {i}")
                })?;
            }
        }
        let order: Vec<&str> = holding
            .iter()
            .flat_map(|&i| batches[i].columns.iter().filter(|c| c.group == *group).map(|c| c.id.as_str()))
            .collect();
        ensure(order == *ids, || format!("group {group} lost its column order"))?;
    }
    Ok(())
}

pub fn check() -> Result<String, String> {
    assert_eq!(DEFAULT_BATCH_LIMIT, LIMIT);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let schemas: Vec<Schema> = (0..SCHEMAS).map(|_| random_schema(&mut rng)).collect();
    let started = Instant::now();
    let mut batches = 0;
    for (n, schema) in schemas.iter().enumerate() {
        check_one(schema).map_err(|e| format!("schema {n}: {e}"))?;
        batches += pack_batches(schema, LIMIT).len();
    }
    let elapsed = started.elapsed();
    ensure(elapsed < BUDGET, || format!("took {elapsed:?}, budget {BUDGET:?}"))?;
    Ok(format!("{SCHEMAS} schemas, {batches} batches in {elapsed:.2?}"))
}
