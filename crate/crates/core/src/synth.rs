//! Task synthesis: anchors, prompt assembly, the exploration episode and
//! the self-refine checklist.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{resume, run_episode, AgentConfig, Termination, Trajectory};
use crate::dataset::{detect_language, Domain};
use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError};
use crate::taxonomy::{extract_operations, render_taxonomy, Subtype, TaxonomyLabel};
use crate::web::{normalize_url, tokenize, Blacklist, EnvSession, Tool, WebBackend};

pub const LABELER_TAG: &str = "labeler";
pub const SYNTHESIZER_TAG: &str = "synthesizer";
pub const REFINER_TAG: &str = "refiner";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no valid domain label for {url}; last reply {reply:?}")]
    UnlabeledDomain { url: String, reply: String },
    #[error("visited {visited} distinct pages, {required} required")]
    MinVisitsNotMet { visited: usize, required: usize },
    #[error("construction trajectory has no Screenshot call")]
    MissingScreenshot,
    #[error("cannot parse synthesized output: {0}")]
    OutputParseError(String),
    #[error("reference URLs never visited: {0:?}")]
    UnvisitedReference(Vec<String>),
    #[error("synthesis episode ended without an answer ({termination:?}): {reason}")]
    EpisodeFailed { termination: Termination, reason: String },
    #[error("invalid synthesis config: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorEntry {
    pub url: String,
    pub source_query: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorPool {
    pub entries: Vec<AnchorEntry>,
    /// URLs dropped because labeling failed, with the reason.
    pub skipped: Vec<(String, String)>,
}

fn domain_prompt(url: &str, snippet: &str) -> (String, String) {
    (
        format!(
            "You assign a topical domain to a web page. Reply with exactly one label from this list and nothing else: {}.",
            Domain::label_list()
        ),
        format!("URL: {url}\nSnippet: {snippet}"),
    )
}

/// Asks for a domain label, retrying once when the reply is not a label.
pub fn label_domain(url: &str, snippet: &str, gateway: &Gateway) -> Result<Domain, SynthError> {
    let (system, user) = domain_prompt(url, snippet);
    let first = gateway.ask(LABELER_TAG, 0.0, &system, &user)?.text;
    if let Ok(d) = first.parse() {
        return Ok(d);
    }
    let req = ChatRequest::new(
        LABELER_TAG,
        vec![
            ChatMessage::system(system),
            ChatMessage::user(user),
            ChatMessage::new(crate::gateway::Role::Assistant, first.clone()),
            ChatMessage::user(format!(
                "{first:?} is not an allowed label. Answer with one of: {}.",
                Domain::label_list()
            )),
        ],
    )
    .with_temperature(0.0);
    let second = gateway.complete(&req)?.text;
    second.parse().map_err(|_| SynthError::UnlabeledDomain {
        url: url.to_string(),
        reply: second,
    })
}

/// Top-`k` hits per query, deduplicated and labeled. Pages whose label
/// cannot be obtained are skipped and reported.
pub fn collect_anchors(
    queries: &[String],
    k: usize,
    web: &dyn WebBackend,
    blacklist: &Blacklist,
    gateway: &Gateway,
) -> AnchorPool {
    let mut pool = AnchorPool::default();
    let mut seen = BTreeSet::new();
    for q in queries.iter().filter(|q| !q.trim().is_empty()) {
        let hits = match web.search(q, k, blacklist) {
            Ok(h) => h,
            Err(e) => {
                log::warn!("anchor search {q:?} failed: {e}");
                continue;
            }
        };
        for hit in hits.into_iter().take(k) {
            let url = normalize_url(&hit.url);
            if blacklist.matches(&url) || !seen.insert(url.clone()) {
                continue;
            }
            match label_domain(&url, &hit.snippet, gateway) {
                Ok(domain) => pool.entries.push(AnchorEntry {
                    url,
                    source_query: q.clone(),
                    domain,
                }),
                Err(e) => pool.skipped.push((url, e.to_string())),
            }
        }
    }
    pool
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub min_visits: usize,
    pub budget: usize,
    pub require_screenshot: bool,
    /// Subtypes drawn into the emphasis slot.
    pub emphasis_slots: usize,
    /// Operations the generation prompt asks for.
    pub min_ops_generation: usize,
    /// Operations the refine gate demands.
    pub min_ops_refine: usize,
    pub max_refine_rounds: usize,
    pub temperature: f32,
    pub language_rule: String,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            min_visits: 7,
            budget: 30,
            require_screenshot: true,
            emphasis_slots: 3,
            min_ops_generation: 1,
            min_ops_refine: 3,
            max_refine_rounds: 2,
            temperature: 0.7,
            language_rule: "Write the question and answer in the same language as the website content.".into(),
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.min_visits < 1 || self.min_visits > self.budget {
            return Err(SynthError::Config(format!(
                "min_visits must lie in 1..={}, got {}",
                self.budget, self.min_visits
            )));
        }
        Ok(())
    }
}

/// Weighted draw without replacement of the emphasis subtypes.
pub fn sample_emphasis(weights: &BTreeMap<Subtype, f64>, slots: usize, seed: u64) -> Vec<Subtype> {
    let items: Vec<(Subtype, f64)> = weights.iter().map(|(k, v)| (*k, *v)).filter(|(_, w)| *w > 0.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match items.choose_multiple_weighted(&mut rng, slots.min(items.len()), |(_, w)| *w) {
        Ok(chosen) => chosen.map(|(s, _)| *s).collect(),
        Err(_) => Vec::new(),
    }
}

fn operations_section(emphasis: &[Subtype], min_ops: usize) -> String {
    let mut s = format!(
        "Aggregation operations (required)\n\
         Incorporate at least {} of the following reasoning operations in your question. \
         The values they act on must be found by browsing, never stated in the question.\n",
        if min_ops == 1 { "one".to_string() } else { min_ops.to_string() }
    );
    if !emphasis.is_empty() {
        let names: Vec<String> = emphasis
            .iter()
            .map(|t| format!("{}->{}", t.category(), t))
            .collect();
        s.push_str(&format!(
            "Prefer these operations, which the collection is short of: {}.\n",
            names.join(", ")
        ));
    }
    s.push_str(&render_taxonomy());
    s.push_str(
        "Use the Compute tool for statistics, correlations, forecasts (single exponential smoothing with a stated alpha grid) \
         and long lists of numbers.\n",
    );
    s
}

pub fn build_synthesis_prompt(anchor: &AnchorEntry, config: &SynthesisConfig, emphasis: &[Subtype]) -> String {
    let mut p = format!(
        "URL:\n{url}\n\n\
         Goal\n\
         Build one hard multi-hop question with a verified reference answer, starting from the URL above. \
         Compute and double-check the answer before you report it. {lang}\n\n\
         Exploration\n\
         - Read the starting page first.\n\
         - Visit and browse at least {n} different websites to gather varied, relevant facts. Follow links and buttons; \
         do not rely on a single search result page.\n",
        url = anchor.url,
        lang = config.language_rule,
        n = config.min_visits,
    );
    if config.require_screenshot {
        p.push_str("- Take at least one Screenshot of a page that holds key evidence.\n");
    }
    p.push_str(
        "- After every action, note briefly what you found.\n\n\
         Question design\n\
         - The question must need facts from several pages; a single search must not answer it.\n\
         - It reads like a real person's request: natural, concise, no arbitrary arithmetic on unrelated numbers.\n\
         - It is self-contained: give precise clues to each entity without naming sources or search queries.\n\
         - It reflects the domain of the starting page.\n\n",
    );
    p.push_str(&operations_section(emphasis, config.min_ops_generation));
    p.push_str(
        "\nAnswer rules\n\
         - The answer is derived by reasoning, not copied from a page.\n\
         - It is short, easy to check, stable over time, and of a clear type (number, date, name, place).\n\n\
         A checker will review your draft against a checklist. If it reports problems, revise the question and answer until they pass.\n\n\
         Output\n\
         Finish with `Final Answer:` followed by this JSON object:\n\
         {\"topic\": \"...\", \"question\": \"...\", \"answer\": \"...\", \"context\": {\"URLs\": [\"url_1\", \"url_2\", \"...\"]}}\n\
         List every page you used under context.URLs.\n",
    );
    p
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub topic: String,
    pub question: String,
    pub answer: String,
    pub reference_urls: Vec<String>,
}

fn json_object_span(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// Parses the final JSON object, tolerating surrounding prose or fences.
pub fn parse_synth_output(text: &str) -> Result<SynthOutput, SynthError> {
    let err = |m: &str| SynthError::OutputParseError(m.to_string());
    let span = json_object_span(text).ok_or_else(|| err("no JSON object found"))?;
    let v: serde_json::Value = serde_json::from_str(span).map_err(|e| SynthError::OutputParseError(e.to_string()))?;
    let field = |k: &str| -> Result<String, SynthError> {
        match v.get(k) {
            Some(serde_json::Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
            Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
            _ => Err(SynthError::OutputParseError(format!("missing or empty field {k}"))),
        }
    };
    let urls: Vec<String> = v
        .pointer("/context/URLs")
        .and_then(|u| u.as_array())
        .ok_or_else(|| err("missing context.URLs"))?
        .iter()
        .filter_map(|u| u.as_str())
        .map(normalize_url)
        .collect();
    if urls.is_empty() {
        return Err(err("context.URLs is empty"));
    }
    let mut dedup = Vec::new();
    for u in urls {
        if !dedup.contains(&u) {
            dedup.push(u);
        }
    }
    Ok(SynthOutput {
        topic: field("topic")?,
        question: field("question")?,
        answer: field("answer")?,
        reference_urls: dedup,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "Self-Containment")]
    SelfContainment,
    #[serde(rename = "Retrieval Necessity")]
    RetrievalNecessity,
    #[serde(rename = "Aggregation Necessity")]
    AggregationNecessity,
    #[serde(rename = "Clarity")]
    Clarity,
    #[serde(rename = "Temporal Stability")]
    TemporalStability,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::SelfContainment,
        Criterion::RetrievalNecessity,
        Criterion::AggregationNecessity,
        Criterion::Clarity,
        Criterion::TemporalStability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::SelfContainment => "Self-Containment",
            Criterion::RetrievalNecessity => "Retrieval Necessity",
            Criterion::AggregationNecessity => "Aggregation Necessity",
            Criterion::Clarity => "Clarity",
            Criterion::TemporalStability => "Temporal Stability",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistResult {
    pub criteria: BTreeMap<Criterion, bool>,
    pub advice: Vec<String>,
}

impl ChecklistResult {
    pub fn passed(&self) -> bool {
        Criterion::ALL.iter().all(|c| self.criteria.get(c).copied().unwrap_or(false))
    }

    pub fn feedback(&self) -> String {
        let failed: Vec<&str> = Criterion::ALL
            .iter()
            .filter(|c| !self.criteria.get(c).copied().unwrap_or(false))
            .map(|c| c.name())
            .collect();
        let mut s = format!("The checklist failed on: {}.", failed.join(", "));
        for a in &self.advice {
            s.push_str("\n- ");
            s.push_str(a);
        }
        s.push_str("\nRevise the question and answer, then give a new Final Answer in the same JSON format.");
        s
    }
}

/// True when the answer's tokens appear contiguously in the question.
pub fn answer_leaked(question: &str, answer: &str) -> bool {
    let q = tokenize(question);
    let a = tokenize(answer);
    !a.is_empty() && q.windows(a.len()).any(|w| w == a.as_slice())
}

pub fn distinct_operations(labels: &[TaxonomyLabel]) -> usize {
    labels.iter().collect::<BTreeSet<_>>().len()
}

fn checklist_prompt(question: &str, answer: &str, urls: &[String], min_ops: usize) -> (String, String) {
    let mut system = String::from(
        "You review a synthesized research question before it enters a dataset. Judge each criterion with 1 (pass) or 0 (fail).\n\
         - Self-Containment: the question can be understood without outside context.\n\
         - Retrieval Necessity: answering needs external sources and the question does not give the answer away.\n",
    );
    system.push_str(&format!(
        "- Aggregation Necessity: the question needs at least {min_ops} different aggregation operations, so direct lookup cannot answer it.\n"
    ));
    system.push_str(
        "- Clarity: the clues are precise and lead to a single answer.\n\
         - Temporal Stability: the answer will not change over time.\n\
         Reply with one JSON object: {\"Self-Containment\": 1, \"Retrieval Necessity\": 1, \"Aggregation Necessity\": 1, \
         \"Clarity\": 1, \"Temporal Stability\": 1, \"Advice\": \"how to improve\"}.\n\nAggregation taxonomy:\n",
    );
    system.push_str(&render_taxonomy());
    let user = format!(
        "Question: {question}\nAnswer: {answer}\nEvidence_URLs: {}\nCheck every criterion and suggest improvements.",
        urls.join(", ")
    );
    (system, user)
}

fn flag(v: &serde_json::Value) -> Option<bool> {
    match v {
        serde_json::Value::Bool(b) => Some(*b),
        serde_json::Value::Number(n) => n.as_i64().map(|i| i == 1),
        serde_json::Value::String(s) => match s.trim().to_lowercase().as_str() {
            "1" | "pass" | "passed" | "yes" | "true" => Some(true),
            "0" | "fail" | "failed" | "no" | "false" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

/// The five-criterion checklist. Local rules can fail a criterion the
/// backend passed, never the reverse.
pub fn self_refine(
    question: &str,
    answer: &str,
    reference_urls: &[String],
    labels: &[TaxonomyLabel],
    min_ops: usize,
    gateway: &Gateway,
) -> Result<ChecklistResult, GatewayError> {
    let (system, user) = checklist_prompt(question, answer, reference_urls, min_ops);
    let reply = gateway.ask(REFINER_TAG, 0.0, &system, &user)?.text;
    let parsed: Option<serde_json::Value> = json_object_span(&reply).and_then(|s| serde_json::from_str(s).ok());
    let mut criteria = BTreeMap::new();
    let mut advice = Vec::new();
    for c in Criterion::ALL {
        let v = parsed.as_ref().and_then(|p| p.get(c.name())).and_then(flag);
        if v.is_none() {
            advice.push(format!("{}: no verdict from the checker", c.name()));
        }
        criteria.insert(c, v.unwrap_or(false));
    }
    if let Some(a) = parsed.as_ref().and_then(|p| p.get("Advice")).and_then(|a| a.as_str()) {
        if !a.trim().is_empty() {
            advice.push(a.trim().to_string());
        }
    }
    if answer_leaked(question, answer) {
        criteria.insert(Criterion::RetrievalNecessity, false);
        advice.push("The answer appears verbatim in the question.".into());
    }
    let n = distinct_operations(labels);
    if n < min_ops {
        criteria.insert(Criterion::AggregationNecessity, false);
        advice.push(format!("Only {n} aggregation operation(s) identified; at least {min_ops} are needed."));
    }
    Ok(ChecklistResult { criteria, advice })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSample {
    pub id: String,
    pub topic: String,
    pub question: String,
    pub answer: String,
    pub reference_urls: Vec<String>,
    pub anchor_url: String,
    pub domain: Domain,
    pub language: String,
    pub construction_trajectory_id: String,
    pub extracted_labels: Vec<TaxonomyLabel>,
    pub emphasized: Vec<Subtype>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checklist: Option<ChecklistResult>,
}

/// Hard constraints re-checkable from the stored trajectory alone.
pub fn check_construction(
    traj: &Trajectory,
    config: &SynthesisConfig,
) -> Result<SynthOutput, SynthError> {
    if traj.termination != Termination::FinalAnswer {
        return Err(SynthError::EpisodeFailed {
            termination: traj.termination,
            reason: traj.fatal_reason.clone().unwrap_or_else(|| "no final answer".into()),
        });
    }
    if traj.visited_urls.len() < config.min_visits {
        return Err(SynthError::MinVisitsNotMet {
            visited: traj.visited_urls.len(),
            required: config.min_visits,
        });
    }
    if config.require_screenshot && traj.count_tool(Tool::Screenshot) == 0 {
        return Err(SynthError::MissingScreenshot);
    }
    let out = parse_synth_output(traj.final_answer.as_deref().unwrap_or_default())?;
    let missing: Vec<String> = out
        .reference_urls
        .iter()
        .filter(|u| !traj.visited_urls.contains(*u))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(SynthError::UnvisitedReference(missing));
    }
    Ok(out)
}

/// A failed synthesis with the exploration trajectory when one was recorded.
pub type SynthFailed = (SynthError, Option<Box<Trajectory>>);

/// One full synthesis: explore, validate, label, then refine until the
/// checklist passes or the round limit is reached.
#[allow(clippy::too_many_arguments)]
pub fn run_synthesis(
    candidate_id: &str,
    anchor: &AnchorEntry,
    config: &SynthesisConfig,
    emphasis: &[Subtype],
    seed: u64,
    session: &mut EnvSession,
    gateway: &Gateway,
) -> Result<(CandidateSample, Trajectory), SynthFailed> {
    config.validate().map_err(|e| (e, None))?;
    let agent = AgentConfig {
        budget: config.budget,
        model_tag: SYNTHESIZER_TAG.into(),
        temperature: config.temperature,
        ..AgentConfig::default()
    };
    let prompt = build_synthesis_prompt(anchor, config, emphasis);
    let traj_id = format!("{candidate_id}-construction");
    let mut traj = run_episode(traj_id.clone(), &prompt, session, gateway, &agent);
    let mut rounds = 0;
    loop {
        let out = match check_construction(&traj, config) {
            Ok(o) => o,
            Err(e) => return Err((e, Some(Box::new(traj)))),
        };
        let labels = match extract_operations(&out.question, gateway) {
            Ok(x) => x.labels,
            Err(e) => return Err((e.into(), Some(Box::new(traj)))),
        };
        let checklist = match self_refine(
            &out.question,
            &out.answer,
            &out.reference_urls,
            &labels,
            config.min_ops_refine,
            gateway,
        ) {
            Ok(c) => c,
            Err(e) => return Err((e.into(), Some(Box::new(traj)))),
        };
        if checklist.passed() || rounds >= config.max_refine_rounds || traj.steps.len() >= config.budget {
            let language = detect_language(&format!("{} {}", out.question, out.answer)).to_string();
            let candidate = CandidateSample {
                id: candidate_id.to_string(),
                topic: out.topic,
                question: out.question,
                answer: out.answer,
                reference_urls: out.reference_urls,
                anchor_url: anchor.url.clone(),
                domain: anchor.domain,
                language,
                construction_trajectory_id: traj_id,
                extracted_labels: labels,
                emphasized: emphasis.to_vec(),
                seed,
                checklist: Some(checklist),
            };
            return Ok((candidate, traj));
        }
        rounds += 1;
        traj = resume(traj, &checklist.feedback(), session, gateway, &agent);
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{make_scripted_backend, Matcher, ResponseScript, RetryPolicy, ScriptEntry};
    use crate::taxonomy::rarity_weights;

    fn gateway(entries: Vec<ScriptEntry>) -> Gateway {
        Gateway::new(
            Arc::new(make_scripted_backend(ResponseScript::new(entries)).unwrap()),
            RetryPolicy::immediate(1),
        )
    }

    #[test]
    fn domain_retry_then_error() {
        let gw = gateway(vec![ScriptEntry::reply(Matcher::Any, "Geography")]);
        assert_eq!(label_domain("u", "s", &gw).unwrap(), Domain::Geography);
        let gw = gateway(vec![
            ScriptEntry::reply(Matcher::Any, "Cooking"),
            ScriptEntry::reply(Matcher::Any, "Cooking"),
        ]);
        assert!(matches!(label_domain("u", "s", &gw), Err(SynthError::UnlabeledDomain { .. })));
        let gw = gateway(vec![
            ScriptEntry::reply(Matcher::Any, "Cooking"),
            ScriptEntry::reply(Matcher::Any, "Finance"),
        ]);
        assert_eq!(label_domain("u", "s", &gw).unwrap(), Domain::Finance);
    }

    fn anchor() -> AnchorEntry {
        AnchorEntry {
            url: "https://herons.example".into(),
            source_query: "herons".into(),
            domain: Domain::Sport,
        }
    }

    #[test]
    fn prompt_contents() {
        let cfg = SynthesisConfig::default();
        let p = build_synthesis_prompt(&anchor(), &cfg, &[Subtype::Predict]);
        assert!(p.contains("Visit and browse at least 7 different websites"));
        assert!(p.contains("Incorporate at least one of the following reasoning operations"));
        assert!(p.contains("Prefer these operations, which the collection is short of: Scientific->Predict."));
        assert!(p.contains("Screenshot"));
        assert_eq!(p, build_synthesis_prompt(&anchor(), &cfg, &[Subtype::Predict]));
    }

    #[test]
    fn emphasis_follows_weights() {
        let mut h: BTreeMap<Subtype, u64> = Subtype::ALL.into_iter().map(|s| (s, 1_000_000)).collect();
        h.insert(Subtype::Predict, 0);
        let w = rarity_weights(&h).unwrap();
        for seed in 0..20 {
            let e = sample_emphasis(&w, 1, seed);
            assert_eq!(e, vec![Subtype::Predict], "seed {seed}");
        }
        let uniform = rarity_weights(&Subtype::ALL.into_iter().map(|s| (s, 0)).collect()).unwrap();
        assert_eq!(sample_emphasis(&uniform, 3, 9), sample_emphasis(&uniform, 3, 9));
        assert_eq!(sample_emphasis(&uniform, 3, 9).len(), 3);
    }

    #[test]
    fn output_parsing() {
        let ok = "```json\n{\"topic\": \"t\", \"question\": \"q?\", \"answer\": 4.5, \"context\": {\"URLs\": [\"https://A.example/\"]}}\n```";
        let o = parse_synth_output(ok).unwrap();
        assert_eq!(o.answer, "4.5");
        assert_eq!(o.reference_urls, ["https://a.example"]);
        assert!(parse_synth_output("{\"topic\": \"t\"").is_err());
        assert!(parse_synth_output("{\"topic\": \"t\", \"question\": \"q\", \"answer\": \"a\", \"context\": {\"URLs\": []}}").is_err());
    }

    #[test]
    fn leak_detection() {
        assert!(answer_leaked("Is the answer Lake Orin or not?", "lake orin"));
        assert!(!answer_leaked("Which lake is deepest?", "Lake Orin"));
        assert!(!answer_leaked("Top 17 players", "7"));
    }

    fn all_pass() -> &'static str {
        r#"{"Self-Containment": 1, "Retrieval Necessity": 1, "Aggregation Necessity": 1, "Clarity": 1, "Temporal Stability": 1, "Advice": ""}"#
    }

    fn three_labels() -> Vec<TaxonomyLabel> {
        vec![
            "Set->Filter".parse().unwrap(),
            "Scientific->Statistic".parse().unwrap(),
            "Element->Math".parse().unwrap(),
        ]
    }

    #[test]
    fn checklist_all_pass() {
        let gw = gateway(vec![ScriptEntry::reply(Matcher::Any, all_pass())]);
        let r = self_refine("Which coach?", "Ada Park", &["u".into()], &three_labels(), 3, &gw).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn checklist_local_failures() {
        let gw = gateway(vec![ScriptEntry::reply(Matcher::Any, all_pass()).persistent()]);
        let r = self_refine("Is it Ada Park?", "Ada Park", &[], &three_labels(), 3, &gw).unwrap();
        assert!(!r.criteria[&Criterion::RetrievalNecessity]);
        let r = self_refine("Which coach?", "Ada Park", &[], &three_labels()[..1], 3, &gw).unwrap();
        assert!(!r.criteria[&Criterion::AggregationNecessity]);
        assert!(r.criteria[&Criterion::Clarity]);
    }
}
