//! Quality control: leakage and duplicate filtering, the refine gate, the
//! checking agent, and domain balancing.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{run_episode, AgentConfig, Termination, Trajectory};
use crate::dataset::{Domain, Provenance, QASampleRecord, QcFlags};
use crate::gateway::Gateway;
use crate::synth::{answer_leaked, distinct_operations, CandidateSample};
use crate::taxonomy::{canonicalize_label, render_taxonomy, TaxonomyLabel};
use crate::web::{normalize_url, Blacklist, EnvFactory, Toolset};

pub const CHECKER_TAG: &str = "checker";

#[derive(Debug, Error)]
pub enum QcError {
    #[error("checking episode failed: {0}")]
    CheckerFailed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcConfig {
    pub budget: usize,
    pub min_ops_refine: usize,
    pub max_ratio: f64,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self {
            budget: 30,
            min_ops_refine: 3,
            max_ratio: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcReport {
    pub evidence_passed: u8,
    pub question_passed: u8,
    pub answer_passed: u8,
    pub domain: Option<Domain>,
    pub aggregation_operations: Vec<TaxonomyLabel>,
    pub notes: String,
}

impl QcReport {
    pub fn accepted(&self) -> bool {
        self.flags().all_passed() && self.domain.is_some()
    }

    pub fn flags(&self) -> QcFlags {
        QcFlags {
            evidence_passed: self.evidence_passed,
            question_passed: self.question_passed,
            answer_passed: self.answer_passed,
        }
    }

    fn rejected(notes: impl Into<String>) -> Self {
        Self {
            evidence_passed: 0,
            question_passed: 0,
            answer_passed: 0,
            domain: None,
            aggregation_operations: Vec::new(),
            notes: notes.into(),
        }
    }
}

/// Drops samples whose anchor or any reference URL is blacklisted.
/// Returns kept indices and (index, reason) for the rest.
pub fn leakage_filter(samples: &[CandidateSample], blacklist: &Blacklist) -> (Vec<usize>, Vec<(usize, String)>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let hit = std::iter::once(&s.anchor_url)
            .chain(&s.reference_urls)
            .find(|u| blacklist.matches(u));
        match hit {
            Some(u) => dropped.push((i, format!("blacklisted URL {u}"))),
            None => kept.push(i),
        }
    }
    (kept, dropped)
}

pub fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Identity keys of a sample for duplicate detection.
fn dedupe_keys(s: &CandidateSample) -> (String, (BTreeSet<String>, String)) {
    let urls: BTreeSet<String> = s.reference_urls.iter().map(|u| normalize_url(u)).collect();
    (normalize_text(&s.question), (urls, normalize_text(&s.answer)))
}

/// First occurrence wins. A later sample is a duplicate when its normalized
/// question matches an earlier one, or when both its reference URL set and
/// its normalized answer match an earlier one.
pub fn dedupe(samples: &[CandidateSample]) -> (Vec<usize>, Vec<(usize, String)>) {
    let mut questions: BTreeMap<String, usize> = BTreeMap::new();
    let mut evidence: BTreeMap<(BTreeSet<String>, String), usize> = BTreeMap::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let (q, e) = dedupe_keys(s);
        if let Some(&j) = questions.get(&q) {
            dropped.push((i, format!("duplicate question of {}", samples[j].id)));
        } else if let Some(&j) = evidence.get(&e) {
            dropped.push((i, format!("same evidence and answer as {}", samples[j].id)));
        } else {
            questions.insert(q, i);
            evidence.insert(e, i);
            kept.push(i);
        }
    }
    (kept, dropped)
}

/// Rejection reasons from the self-refine gate; empty means pass.
pub fn refine_gate(c: &CandidateSample, min_ops: usize) -> Vec<String> {
    let mut reasons = Vec::new();
    if answer_leaked(&c.question, &c.answer) {
        reasons.push("answer leaked in question".to_string());
    }
    let n = distinct_operations(&c.extracted_labels);
    if n < min_ops {
        reasons.push(format!("{n} aggregation operation(s), {min_ops} required"));
    }
    if let Some(cl) = &c.checklist {
        if !cl.passed() {
            let failed: Vec<&str> = cl
                .criteria
                .iter()
                .filter(|(_, ok)| !**ok)
                .map(|(k, _)| k.name())
                .collect();
            reasons.push(format!("checklist failed: {}", failed.join(", ")));
        }
    }
    reasons
}

pub fn checker_prompt(c: &CandidateSample) -> String {
    format!(
        "You audit one entry of a web research dataset. Browse to verify it; do not trust the text below.\n\n\
         Aggregation operations the dataset uses:\n{taxonomy}\n\
         Evidence\n\
         - URL validity: Visit every evidence URL and confirm it loads.\n\
         - Relevance: each URL holds information needed to answer the question, and together they suffice.\n\n\
         Question\n\
         - Self-contained, needs retrieval, gives nothing away.\n\
         - Needs at least three different aggregation operations.\n\
         - Clues are precise and lead to one answer; the answer is stable over time.\n\n\
         Answer\n\
         - Every value matches the pages. Recompute numeric results with the Compute tool.\n\
         - It is correct, unique and unambiguous, with no precision conflicts between sources.\n\n\
         Question: {q}\nAnswer: {a}\nEvidence_URLs: {urls}\n\n\
         When done, reply with `Final Answer:` and this JSON object:\n\
         {{\"Evidence Passed\": 1 or 0, \"Question Passed\": 1 or 0, \"Answer Passed\": 1 or 0, \
         \"Domain\": \"[USE ONLY ONE WORD OF THE FOLLOWING!] {domains}\", \
         \"Aggregation_Operation\": {{\"type\": [\"Category->Subtype->operation\", \"...\"]}}}}\n",
        taxonomy = render_taxonomy(),
        q = c.question,
        a = c.answer,
        urls = c.reference_urls.join(", "),
        domains = crate::dataset::Domain::label_list(),
    )
}

fn parse_flag(v: Option<&serde_json::Value>) -> Option<u8> {
    match v? {
        serde_json::Value::Number(n) => n.as_u64().filter(|x| *x <= 1).map(|x| x as u8),
        serde_json::Value::Bool(b) => Some(u8::from(*b)),
        serde_json::Value::String(s) => match s.trim() {
            "1" => Some(1),
            "0" => Some(0),
            _ => None,
        },
        _ => None,
    }
}

/// Reads the checker's JSON verdict.
pub fn parse_checker_output(text: &str) -> QcReport {
    let span = match (text.find('{'), text.rfind('}')) {
        (Some(a), Some(b)) if b > a => &text[a..=b],
        _ => return QcReport::rejected("checker output has no JSON object"),
    };
    let v: serde_json::Value = match serde_json::from_str(span) {
        Ok(v) => v,
        Err(e) => return QcReport::rejected(format!("checker output is not valid JSON: {e}")),
    };
    let flags = [
        parse_flag(v.get("Evidence Passed")),
        parse_flag(v.get("Question Passed")),
        parse_flag(v.get("Answer Passed")),
    ];
    let [Some(ev), Some(qu), Some(an)] = flags else {
        return QcReport::rejected("checker output lacks a pass flag");
    };
    let raw_domain = v.get("Domain").and_then(|d| d.as_str()).unwrap_or_default();
    let Ok(domain) = raw_domain.parse::<Domain>() else {
        return QcReport::rejected(format!("domain {raw_domain:?} is outside the closed label set"));
    };
    let op_values = match v.get("Aggregation_Operation") {
        Some(serde_json::Value::Object(o)) => o.get("type").and_then(|t| t.as_array()).cloned().unwrap_or_default(),
        Some(serde_json::Value::Array(a)) => a.clone(),
        _ => Vec::new(),
    };
    let mut ops = Vec::new();
    let mut dropped = 0;
    for s in op_values.iter().filter_map(|x| x.as_str()) {
        match canonicalize_label(s) {
            Ok(l) if !ops.contains(&l) => ops.push(l),
            Ok(_) => {}
            Err(_) => dropped += 1,
        }
    }
    QcReport {
        evidence_passed: ev,
        question_passed: qu,
        answer_passed: an,
        domain: Some(domain),
        aggregation_operations: ops,
        notes: if dropped > 0 {
            format!("{dropped} unrecognized operation label(s) dropped")
        } else {
            String::new()
        },
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub report: QcReport,
    pub trajectory: Option<Trajectory>,
}

/// Probes every reference URL, then runs the checking agent. A dead URL
/// fails the sample without an episode.
pub fn check_sample(
    candidate: &CandidateSample,
    env: &EnvFactory,
    gateway: &Gateway,
    config: &QcConfig,
) -> Result<CheckOutcome, QcError> {
    for u in &candidate.reference_urls {
        if let Err(e) = env.backend.fetch(u) {
            return Ok(CheckOutcome {
                report: QcReport::rejected(format!("reference URL failed to load: {u} ({e})")),
                trajectory: None,
            });
        }
    }
    let mut session = env.session(Toolset::full().without(crate::web::Tool::Screenshot));
    let agent = AgentConfig {
        budget: config.budget,
        model_tag: CHECKER_TAG.into(),
        temperature: 0.0,
        ..AgentConfig::default()
    };
    let traj = run_episode(format!("{}-check", candidate.id), &checker_prompt(candidate), &mut session, gateway, &agent);
    if traj.termination == Termination::FatalError {
        return Err(QcError::CheckerFailed(traj.fatal_reason.clone().unwrap_or_default()));
    }
    let mut report = match &traj.final_answer {
        Some(a) => parse_checker_output(a),
        None => QcReport::rejected("checking episode ran out of steps without a verdict"),
    };
    let unvisited: Vec<&String> = candidate
        .reference_urls
        .iter()
        .filter(|u| !traj.visited_urls.contains(&normalize_url(u)))
        .collect();
    if !unvisited.is_empty() && report.evidence_passed == 1 {
        report.evidence_passed = 0;
        let note = format!("checker did not visit {unvisited:?}");
        report.notes = if report.notes.is_empty() { note } else { format!("{}; {note}", report.notes) };
    }
    Ok(CheckOutcome {
        report,
        trajectory: Some(traj),
    })
}

fn ratio_cap(max_ratio: f64, min_count: usize) -> usize {
    ((max_ratio.max(1.0) * min_count as f64) + 1e-9).floor() as usize
}

/// Per-domain targets: every domain keeps at least its smallest count, and
/// larger ones are capped at floor(max_ratio * smallest).
pub fn balance_targets(counts: &BTreeMap<Domain, usize>, max_ratio: f64) -> BTreeMap<Domain, usize> {
    let Some(&m) = counts.values().filter(|c| **c > 0).min() else {
        return counts.clone();
    };
    let cap = ratio_cap(max_ratio, m);
    counts.iter().map(|(d, n)| (*d, (*n).min(cap))).collect()
}

/// Indices kept after seeded down-sampling, in input order.
pub fn balance_corpus(domains: &[Domain], max_ratio: f64, seed: u64) -> Vec<usize> {
    let mut by_domain: BTreeMap<Domain, Vec<usize>> = BTreeMap::new();
    for (i, d) in domains.iter().enumerate() {
        by_domain.entry(*d).or_default().push(i);
    }
    let counts = by_domain.iter().map(|(d, v)| (*d, v.len())).collect();
    let targets = balance_targets(&counts, max_ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = Vec::new();
    for (d, idx) in &by_domain {
        let t = targets[d];
        if t >= idx.len() {
            kept.extend_from_slice(idx);
        } else {
            kept.extend(rand::seq::index::sample(&mut rng, idx.len(), t).into_iter().map(|j| idx[j]));
        }
    }
    kept.sort_unstable();
    kept
}

pub fn to_record(c: &CandidateSample, report: &QcReport) -> QASampleRecord {
    QASampleRecord {
        id: c.id.clone(),
        topic: c.topic.clone(),
        question: c.question.clone(),
        answer: c.answer.clone(),
        language: c.language.clone(),
        domain: report.domain.unwrap_or(c.domain),
        level: None,
        aggregation_ops: if report.aggregation_operations.is_empty() {
            c.extracted_labels.clone()
        } else {
            report.aggregation_operations.clone()
        },
        reference_urls: c.reference_urls.clone(),
        anchor_url: c.anchor_url.clone(),
        provenance: Provenance {
            seed: c.seed,
            trajectory_id: Some(c.construction_trajectory_id.clone()),
            qc_flags: Some(report.flags()),
            solution: None,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quarantined {
    pub candidate_id: String,
    pub reasons: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<QcReport>,
}

#[derive(Debug, Clone, Default)]
pub struct QcResult {
    pub accepted: Vec<QASampleRecord>,
    pub quarantine: Vec<Quarantined>,
    pub trajectories: Vec<Trajectory>,
}

fn quarantined(c: &CandidateSample, reasons: Vec<String>, report: Option<QcReport>) -> Quarantined {
    Quarantined {
        candidate_id: c.id.clone(),
        reasons,
        report,
    }
}

/// Cheap corpus passes before any browsing: leakage, dedupe, refine gate.
/// Returns the indices that still need a checking episode and the
/// rejections so far, keyed by index.
pub fn prefilter(
    candidates: &[CandidateSample],
    blacklist: &Blacklist,
    config: &QcConfig,
) -> (Vec<usize>, BTreeMap<usize, Quarantined>) {
    let mut rejected = BTreeMap::new();
    let (_, leaked) = leakage_filter(candidates, blacklist);
    for (i, r) in leaked {
        rejected.insert(i, quarantined(&candidates[i], vec![r], None));
    }
    let live: Vec<usize> = (0..candidates.len()).filter(|i| !rejected.contains_key(i)).collect();
    let subset: Vec<CandidateSample> = live.iter().map(|i| candidates[*i].clone()).collect();
    let (_, dups) = dedupe(&subset);
    for (j, r) in dups {
        rejected.insert(live[j], quarantined(&candidates[live[j]], vec![r], None));
    }
    let mut pending = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        if rejected.contains_key(&i) {
            continue;
        }
        let gate = refine_gate(c, config.min_ops_refine);
        if gate.is_empty() {
            pending.push(i);
        } else {
            rejected.insert(i, quarantined(c, gate, None));
        }
    }
    (pending, rejected)
}

/// Applies checker verdicts, then balances the accepted set by domain.
/// `checked` pairs candidate indices with the report or a failure message.
pub fn finalize(
    candidates: &[CandidateSample],
    checked: Vec<(usize, Result<QcReport, String>)>,
    mut rejected: BTreeMap<usize, Quarantined>,
    config: &QcConfig,
    seed: u64,
) -> (Vec<QASampleRecord>, Vec<Quarantined>) {
    let mut passed: Vec<(usize, QcReport)> = Vec::new();
    for (i, res) in checked {
        let c = &candidates[i];
        match res {
            Ok(report) if report.accepted() => passed.push((i, report)),
            Ok(report) => {
                let why = if report.notes.is_empty() {
                    "checker rejected the sample".to_string()
                } else {
                    report.notes.clone()
                };
                rejected.insert(i, quarantined(c, vec![why], Some(report)));
            }
            Err(e) => {
                rejected.insert(i, quarantined(c, vec![e], None));
            }
        }
    }
    passed.sort_by_key(|(i, _)| *i);
    let domains: Vec<Domain> = passed.iter().filter_map(|(_, r)| r.domain).collect();
    let keep: BTreeSet<usize> = balance_corpus(&domains, config.max_ratio, seed).into_iter().collect();
    let mut accepted = Vec::new();
    for (j, (i, report)) in passed.into_iter().enumerate() {
        if keep.contains(&j) {
            accepted.push(to_record(&candidates[i], &report));
        } else {
            let c = &candidates[i];
            rejected.insert(i, quarantined(c, vec!["removed by domain balancing".into()], Some(report)));
        }
    }
    (accepted, rejected.into_values().collect())
}

/// Stages in order: leakage, dedupe, refine gate, checking agent, balance.
pub fn run_qc(
    candidates: &[CandidateSample],
    env: &EnvFactory,
    gateway: &Gateway,
    config: &QcConfig,
    seed: u64,
) -> QcResult {
    let (pending, rejected) = prefilter(candidates, &env.blacklist, config);
    let mut trajectories = Vec::new();
    let mut checked = Vec::new();
    for i in pending {
        match check_sample(&candidates[i], env, gateway, config) {
            Ok(out) => {
                trajectories.extend(out.trajectory);
                checked.push((i, Ok(out.report)));
            }
            Err(e) => checked.push((i, Err(e.to_string()))),
        }
    }
    let (accepted, quarantine) = finalize(candidates, checked, rejected, config, seed);
    QcResult {
        accepted,
        quarantine,
        trajectories,
    }
}
