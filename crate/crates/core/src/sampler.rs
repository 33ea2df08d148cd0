//! Solver rollouts, answer judging, rejection sampling and SFT export.

use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{clip_rendered, run_episode, AgentConfig, Termination, Trajectory};
use crate::dataset::{derive_seed, QASampleRecord};
use crate::gateway::{Gateway, GatewayError};
use crate::web::{EnvFactory, Tool, Toolset};

pub const JUDGE_TAG: &str = "judge";
pub const JUDGE_PROMPT_V1: &str = include_str!("../prompts/judge_v1.txt");

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("trajectory {0} did not pass filtering")]
    UnfilteredTrajectory(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub attempts: usize,
    pub toolset: Toolset,
    /// Permits Screenshot and Scroll in the solver toolset.
    pub allow_visual_tools: bool,
    pub agent: AgentConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            attempts: 1,
            toolset: Toolset::solver(),
            allow_visual_tools: false,
            agent: AgentConfig::default(),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.attempts == 0 {
            return Err(SamplerError::Config("attempts must be at least 1".into()));
        }
        if !self.allow_visual_tools {
            for t in [Tool::Screenshot, Tool::Scroll] {
                if self.toolset.contains(t) {
                    return Err(SamplerError::Config(format!("solver toolset must not include {}", t.name())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveAttempt {
    pub sample_id: String,
    pub attempt: usize,
    pub seed: u64,
    pub trajectory: Trajectory,
}

pub fn solver_prompt(question: &str) -> String {
    format!("{question}\n\nFind the answer by browsing, then give it after `Final Answer:` as briefly as possible.")
}

pub fn attempt_id(sample_id: &str, attempt: usize) -> String {
    format!("{sample_id}-a{attempt}")
}

/// Runs `attempts` independent episodes, each in a fresh session.
pub fn solve_task(
    sample: &QASampleRecord,
    env: &EnvFactory,
    gateway: &Gateway,
    config: &SolveConfig,
    base_seed: u64,
) -> Result<Vec<SolveAttempt>, SamplerError> {
    config.validate()?;
    let prompt = solver_prompt(&sample.question);
    Ok((1..=config.attempts)
        .map(|n| {
            let id = attempt_id(&sample.id, n);
            let mut session = env.session(config.toolset.clone());
            let trajectory = run_episode(id.clone(), &prompt, &mut session, gateway, &config.agent);
            SolveAttempt {
                sample_id: sample.id.clone(),
                attempt: n,
                seed: derive_seed(base_seed, &id),
                trajectory,
            }
        })
        .collect())
}

fn normalize_token(tok: &str) -> String {
    let core = tok.trim_end_matches(['.', ',', ';', ':']);
    match Decimal::from_str(core) {
        Ok(d) => d.normalize().to_string(),
        Err(_) => core.to_string(),
    }
}

/// Lowercase, whitespace-collapsed, decimal-normalized form.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace()
        .map(|t| normalize_token(&t.to_lowercase()))
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn judge_prompt(question: &str, reference: &str, prediction: &str) -> String {
    JUDGE_PROMPT_V1
        .replace("{question}", question)
        .replace("{reference}", reference)
        .replace("{prediction}", prediction)
}

pub fn parse_judge_reply(text: &str) -> Verdict {
    let mut lines = text.trim().lines();
    let head = lines.next().unwrap_or_default().trim().trim_matches(|c: char| !c.is_alphabetic());
    let rest = lines.collect::<Vec<_>>().join(" ").trim().to_string();
    match head.to_uppercase().as_str() {
        "CORRECT" => Verdict { correct: true, rationale: rest },
        "INCORRECT" => Verdict { correct: false, rationale: rest },
        _ => Verdict {
            correct: false,
            rationale: format!("unreadable judge reply: {}", text.trim()),
        },
    }
}

pub fn judge_answer(question: &str, reference: &str, prediction: &str, gateway: &Gateway) -> Result<Verdict, SamplerError> {
    if prediction.trim().is_empty() {
        return Ok(Verdict {
            correct: false,
            rationale: "empty prediction".into(),
        });
    }
    if normalize_answer(reference) == normalize_answer(prediction) {
        return Ok(Verdict {
            correct: true,
            rationale: "exact match after normalization".into(),
        });
    }
    let reply = gateway.ask(
        JUDGE_TAG,
        0.0,
        "You are a strict answer grader.",
        &judge_prompt(question, reference, prediction),
    )?;
    Ok(parse_judge_reply(&reply.text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterCounts {
    pub kept: usize,
    pub incorrect: usize,
    pub format: usize,
    pub fatal: usize,
    pub budget_exhausted: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Fatal,
    BudgetExhausted,
    Format,
    Incorrect,
}

/// Why a trajectory is rejected, or None when it is kept. Tool errors in
/// observations never disqualify.
pub fn drop_reason(t: &Trajectory, v: &Verdict) -> Option<DropReason> {
    match t.termination {
        Termination::FatalError => Some(DropReason::Fatal),
        Termination::BudgetExhausted => Some(DropReason::BudgetExhausted),
        Termination::FinalAnswer if t.has_format_error() => Some(DropReason::Format),
        Termination::FinalAnswer if !v.correct => Some(DropReason::Incorrect),
        Termination::FinalAnswer => None,
    }
}

/// Indices of kept trajectories plus per-reason counts.
pub fn filter_trajectories(trajectories: &[Trajectory], verdicts: &[Verdict]) -> (Vec<usize>, FilterCounts) {
    assert_eq!(trajectories.len(), verdicts.len(), "verdicts must align with trajectories");
    let mut kept = Vec::new();
    let mut counts = FilterCounts::default();
    for (i, (t, v)) in trajectories.iter().zip(verdicts).enumerate() {
        match drop_reason(t, v) {
            None => {
                kept.push(i);
                counts.kept += 1;
            }
            Some(DropReason::Fatal) => counts.fatal += 1,
            Some(DropReason::BudgetExhausted) => counts.budget_exhausted += 1,
            Some(DropReason::Format) => counts.format += 1,
            Some(DropReason::Incorrect) => counts.incorrect += 1,
        }
    }
    (kept, counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentRole {
    System,
    Question,
    Thought,
    Action,
    Observation,
    Final,
}

impl SegmentRole {
    pub fn is_masked(self) -> bool {
        matches!(self, SegmentRole::System | SegmentRole::Question | SegmentRole::Observation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub role: SegmentRole,
    pub text: String,
    pub loss_masked: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub segments: Vec<Segment>,
}

impl SftRecord {
    pub fn masked_text(&self) -> String {
        self.segments.iter().filter(|s| s.loss_masked).map(|s| s.text.as_str()).collect()
    }

    pub fn unmasked_text(&self) -> String {
        self.segments.iter().filter(|s| !s.loss_masked).map(|s| s.text.as_str()).collect()
    }
}

fn segment(role: SegmentRole, text: impl Into<String>) -> Segment {
    Segment {
        role,
        text: text.into(),
        loss_masked: role.is_masked(),
    }
}

/// Converts a kept trajectory into masked training segments. Observations
/// are rendered exactly as the model saw them.
pub fn export_sft(
    trajectory: &Trajectory,
    verdict: &Verdict,
    system: Option<&str>,
    truncation_budget: usize,
) -> Result<SftRecord, SamplerError> {
    if drop_reason(trajectory, verdict).is_some() {
        return Err(SamplerError::UnfilteredTrajectory(trajectory.id.clone()));
    }
    let mut segments = Vec::new();
    if let Some(s) = system {
        segments.push(segment(SegmentRole::System, s));
    }
    segments.push(segment(SegmentRole::Question, trajectory.task_prompt.clone()));
    for step in &trajectory.steps {
        if !step.thought.is_empty() {
            segments.push(segment(SegmentRole::Thought, step.thought.clone()));
        }
        for (call, obs) in step.calls.iter().zip(&step.observations) {
            segments.push(segment(SegmentRole::Action, call.raw_text.clone()));
            segments.push(segment(SegmentRole::Observation, clip_rendered(obs, truncation_budget)));
        }
    }
    segments.push(segment(SegmentRole::Final, trajectory.final_answer.clone().unwrap_or_default()));
    Ok(SftRecord {
        id: trajectory.id.clone(),
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("2.00"), normalize_answer("2"));
        assert_eq!(normalize_answer("  The  Answer\tIS 3.50 "), "the answer is 3.5");
        assert_ne!(normalize_answer("2.01"), normalize_answer("2"));
        assert_eq!(normalize_answer("42."), "42");
    }

    #[test]
    fn judge_replies() {
        assert!(parse_judge_reply("CORRECT\nsame value").correct);
        let v = parse_judge_reply("**INCORRECT**\nparaphrase changes the year");
        assert!(!v.correct);
        assert_eq!(v.rationale, "paraphrase changes the year");
        assert!(!parse_judge_reply("maybe").correct);
    }

    #[test]
    fn visual_tools_rejected() {
        let mut c = SolveConfig::default();
        assert!(c.validate().is_ok());
        c.toolset = Toolset::full();
        assert!(matches!(c.validate(), Err(SamplerError::Config(_))));
        c.allow_visual_tools = true;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn judge_prompt_fills_slots() {
        let p = judge_prompt("Q?", "R", "P");
        assert!(p.contains("Q?") && p.contains("\nR\n") && p.contains("\nP\n"));
        assert!(!p.contains('{'));
    }
}
