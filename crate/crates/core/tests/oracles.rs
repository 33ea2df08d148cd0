//! Library functions checked against slow, obviously-correct reimplementations.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use webagg_core::aggregation::stats::median;
use webagg_core::aggregation::{evaluate, Decimal, Env};
use webagg_core::dataset::Domain;
use webagg_core::eval::{pass_at_k, AttemptOutcome, EvalOutcome};
use webagg_core::qc::{balance_targets, dedupe};
use webagg_core::sampler::Verdict;
use webagg_core::synth::CandidateSample;
use webagg_core::web::{is_blacklisted, normalize_url};

fn median_oracle(xs: &[i64]) -> Decimal {
    let mut v = xs.to_vec();
    v.sort();
    let n = v.len();
    if n % 2 == 1 {
        Decimal::from(v[n / 2])
    } else {
        (Decimal::from(v[n / 2 - 1]) + Decimal::from(v[n / 2])) / Decimal::from(2)
    }
}

fn set_literal(xs: &BTreeSet<i64>) -> String {
    let items: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
    format!("{{{}}}", items.join(", "))
}

fn blacklist_oracle(url: &str, keywords: &[String]) -> bool {
    let url: Vec<char> = url.chars().flat_map(char::to_lowercase).collect();
    keywords.iter().any(|k| {
        let k: Vec<char> = k.chars().collect();
        k.is_empty() || (k.len() <= url.len() && (0..=url.len() - k.len()).any(|s| url[s..s + k.len()] == k[..]))
    })
}

fn cand(i: usize, q: &str, a: &str, urls: &[String]) -> CandidateSample {
    CandidateSample {
        id: format!("c{i}"),
        topic: String::new(),
        question: q.into(),
        answer: a.into(),
        reference_urls: urls.to_vec(),
        anchor_url: urls.first().cloned().unwrap_or_default(),
        domain: Domain::Sport,
        language: "en".into(),
        construction_trajectory_id: String::new(),
        extracted_labels: Vec::new(),
        emphasized: Vec::new(),
        seed: 0,
        checklist: None,
    }
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Pairwise comparison against every earlier kept sample.
fn dedupe_oracle(cs: &[CandidateSample]) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, c) in cs.iter().enumerate() {
        let urls = |c: &CandidateSample| c.reference_urls.iter().map(|u| normalize_url(u)).collect::<BTreeSet<_>>();
        let dup = kept.iter().any(|&j| {
            squash(&cs[j].question) == squash(&c.question)
                || (urls(&cs[j]) == urls(c) && squash(&cs[j].answer) == squash(&c.answer))
        });
        if !dup {
            kept.push(i);
        }
    }
    kept
}

fn outcome(task: usize, verdicts: &[bool]) -> EvalOutcome {
    EvalOutcome {
        task_id: format!("t{task}"),
        level: None,
        attempts: verdicts
            .iter()
            .enumerate()
            .map(|(i, c)| AttemptOutcome {
                trajectory_id: format!("t{task}-a{}", i + 1),
                verdict: Verdict {
                    correct: *c,
                    rationale: String::new(),
                },
                exception_retries_used: 0,
                steps: 1,
                tool_call_density: Some(0.0),
                full_coverage: true,
            })
            .collect(),
    }
}

/// Best keep vector with every domain kept at least once, by enumeration.
fn balance_oracle(counts: &[usize], ratio: f64) -> Vec<usize> {
    let mut best = (0, vec![]);
    let mut cur = vec![1; counts.len()];
    'outer: loop {
        let mx = *cur.iter().max().unwrap() as f64;
        let mn = *cur.iter().min().unwrap() as f64;
        let total: usize = cur.iter().sum();
        if mx <= ratio * mn + 1e-9 && total > best.0 {
            best = (total, cur.clone());
        }
        for i in 0..cur.len() {
            if cur[i] < counts[i] {
                cur[i] += 1;
                continue 'outer;
            }
            cur[i] = 1;
        }
        return best.1;
    }
}

proptest! {
    #[test]
    fn median_matches_sorting(xs in prop::collection::vec(-1000i64..1000, 1..40)) {
        let ds: Vec<Decimal> = xs.iter().map(|x| Decimal::from(*x)).collect();
        prop_assert_eq!(median(&ds).unwrap(), median_oracle(&xs));
    }

    #[test]
    fn set_algebra_matches_btreeset(
        a in prop::collection::btree_set(-20i64..20, 0..10),
        b in prop::collection::btree_set(-20i64..20, 0..10),
    ) {
        let env = Env::new();
        let run = |f: &str| evaluate(&format!("{f}({}, {})", set_literal(&a), set_literal(&b)), &env).unwrap().to_string();
        prop_assert_eq!(run("union"), set_literal(&a.union(&b).copied().collect()));
        prop_assert_eq!(run("intersection"), set_literal(&a.intersection(&b).copied().collect()));
        prop_assert_eq!(run("difference"), set_literal(&a.difference(&b).copied().collect()));
    }

    #[test]
    fn blacklist_matches_naive_scan(
        url in "[a-zA-Z0-9./:-]{0,30}",
        keywords in prop::collection::vec("[a-z]{1,4}", 0..4),
    ) {
        prop_assert_eq!(is_blacklisted(&url, &keywords), blacklist_oracle(&url, &keywords));
    }

    #[test]
    fn dedupe_matches_pairwise_scan(
        specs in prop::collection::vec((0usize..4, 0usize..3, 0usize..3, any::<bool>()), 0..12),
    ) {
        let qs = ["How many?", "how  MANY?", "Which one?", "When did it start?"];
        let answers = ["12", " 12 ", "13"];
        let urls = ["https://a.example/x", "https://A.example/x/", "https://b.example/y"];
        let cs: Vec<CandidateSample> = specs
            .iter()
            .enumerate()
            .map(|(i, (q, a, u, two))| {
                let mut refs = vec![urls[*u].to_string()];
                if *two {
                    refs.push(urls[2].to_string());
                }
                cand(i, qs[*q], answers[*a], &refs)
            })
            .collect();
        let (kept, dropped) = dedupe(&cs);
        prop_assert_eq!(&kept, &dedupe_oracle(&cs));
        prop_assert_eq!(kept.len() + dropped.len(), cs.len());
    }

    #[test]
    fn pass_at_k_matches_brute_force(
        rows in prop::collection::vec(prop::collection::vec(any::<bool>(), 4), 1..15),
        k in 1usize..=4,
    ) {
        let outcomes: Vec<EvalOutcome> = rows.iter().enumerate().map(|(i, r)| outcome(i, r)).collect();
        let mut hits = 0;
        for r in &rows {
            let mut any = false;
            for c in r.iter().take(k) {
                any |= *c;
            }
            hits += any as usize;
        }
        prop_assert_eq!(pass_at_k(&outcomes, k).unwrap(), hits as f64 / rows.len() as f64);
    }

    #[test]
    fn balance_targets_are_optimal(
        counts in prop::collection::vec(1usize..=8, 1..=4),
        half_steps in 2u32..=6,
    ) {
        let ratio = half_steps as f64 / 2.0;
        let map: BTreeMap<Domain, usize> = Domain::ALL.iter().copied().zip(counts.iter().copied()).collect();
        let got: Vec<usize> = balance_targets(&map, ratio).values().copied().collect();
        prop_assert_eq!(got, balance_oracle(&counts, ratio));
    }
}

#[test]
fn pass_at_k_rejects_short_rows() {
    assert!(pass_at_k(&[outcome(0, &[true])], 2).is_err());
}
