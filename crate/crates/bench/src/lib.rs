//! Synthetic inputs shared by the benchmarks.

use webagg_core::aggregation::Decimal;
use webagg_core::web::{FixtureWorld, LinkRecord, PageRecord};

/// A deterministic series with a mild trend and a repeating wobble.
pub fn series(n: usize) -> Vec<Decimal> {
    (0..n)
        .map(|i| Decimal::from(100 + (i as i64) * 3 + ((i as i64 * 7) % 11)))
        .collect()
}

/// `n` pages with overlapping vocabulary, each linking to the next.
pub fn world(n: usize) -> FixtureWorld {
    let words = ["harbor", "river", "season", "revenue", "census", "gallery", "dividend", "merger"];
    let records = (0..n)
        .map(|i| {
            let text: Vec<&str> = (0..40).map(|j| words[(i * 3 + j * 5) % words.len()]).collect();
            let page = PageRecord {
                url: format!("https://site{}.example/p{i}", i % 17),
                title: format!("{} page {i}", words[i % words.len()]),
                text: text.join(" "),
                elements: Vec::new(),
                links: vec![LinkRecord::Internal(format!("https://site{}.example/p{}", (i + 1) % n % 17, (i + 1) % n))],
                attachments: Vec::new(),
                exception: None,
            };
            (i + 1, page)
        })
        .collect();
    FixtureWorld::build(records, Default::default()).expect("synthetic world is valid")
}

/// A model turn with several tool calls.
pub fn action_turn(calls: usize) -> String {
    let lines: Vec<String> = (0..calls)
        .map(|i| format!("Visit(url=\"https://site{i}.example/p{i}\")"))
        .collect();
    format!("Thought: gather every page.\nAction:\n```\n{}\n```", lines.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_are_valid() {
        assert_eq!(series(5).len(), 5);
        assert_eq!(world(50).len(), 50);
        assert!(action_turn(3).contains("p2"));
    }
}
