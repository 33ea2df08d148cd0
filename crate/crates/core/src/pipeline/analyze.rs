use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::QASampleRecord;

/// Corpus statistics over domains, operations, levels and languages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub samples: usize,
    pub domains: BTreeMap<String, usize>,
    pub categories: BTreeMap<String, usize>,
    pub subtypes: BTreeMap<String, usize>,
    pub levels: BTreeMap<String, usize>,
    pub languages: BTreeMap<String, usize>,
    pub mean_operations: f64,
    pub mean_distinct_subtypes: f64,
    pub mean_reference_urls: f64,
}

fn mean(total: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total as f64 / n as f64
    }
}

pub fn analyze_dataset(records: &[QASampleRecord]) -> Analysis {
    let mut domains = BTreeMap::new();
    let mut categories = BTreeMap::new();
    let mut subtypes = BTreeMap::new();
    let mut levels = BTreeMap::new();
    let mut languages = BTreeMap::new();
    let (mut ops, mut distinct, mut urls) = (0, 0, 0);
    for r in records {
        *domains.entry(r.domain.label().to_string()).or_insert(0) += 1;
        *languages.entry(r.language.clone()).or_insert(0) += 1;
        let level = r.level.map_or_else(|| "unleveled".to_string(), |l| format!("level {l}"));
        *levels.entry(level).or_insert(0) += 1;
        for l in &r.aggregation_ops {
            *categories.entry(l.category.to_string()).or_insert(0) += 1;
            *subtypes.entry(l.subtype.name().to_string()).or_insert(0) += 1;
        }
        ops += r.aggregation_ops.len();
        distinct += r.aggregation_ops.iter().map(|l| l.subtype).collect::<std::collections::BTreeSet<_>>().len();
        urls += r.reference_urls.len();
    }
    let n = records.len();
    Analysis {
        samples: n,
        domains,
        categories,
        subtypes,
        levels,
        languages,
        mean_operations: mean(ops, n),
        mean_distinct_subtypes: mean(distinct, n),
        mean_reference_urls: mean(urls, n),
    }
}
