//! Benchmark runs: repeated attempts with exception retries, pass@k,
//! per-level breakdowns, tool-call density and reference coverage.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{run_episode, AgentConfig, Termination, Trajectory};
use crate::dataset::QASampleRecord;
use crate::gateway::Gateway;
use crate::sampler::{attempt_id, judge_answer, solver_prompt, SamplerError, Verdict};
use crate::web::{normalize_url, EnvFactory, Toolset};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid dataset: {0}")]
    DatasetInvalid(String),
    #[error("task {task} has {have} attempt(s), {need} needed")]
    InsufficientAttempts { task: String, have: usize, need: usize },
    #[error("trajectory {0} has no steps")]
    EmptyTrajectory(String),
    #[error(transparent)]
    Judge(#[from] SamplerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k: usize,
    pub max_exception_retries: usize,
    pub toolset: Toolset,
    pub agent: AgentConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 3,
            max_exception_retries: 2,
            toolset: Toolset::solver(),
            agent: AgentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptOutcome {
    pub trajectory_id: String,
    pub verdict: Verdict,
    pub exception_retries_used: usize,
    pub steps: usize,
    pub tool_call_density: Option<f64>,
    pub full_coverage: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
    pub attempts: Vec<AttemptOutcome>,
}

/// Share of steps with at least one tool call, as a percentage.
pub fn tool_call_density(t: &Trajectory) -> Result<f64, EvalError> {
    if t.steps.is_empty() {
        return Err(EvalError::EmptyTrajectory(t.id.clone()));
    }
    let with_calls = t.steps.iter().filter(|s| !s.calls.is_empty()).count();
    Ok(100.0 * with_calls as f64 / t.steps.len() as f64)
}

/// True when every reference URL was visited, compared after normalization.
pub fn reference_coverage(t: &Trajectory, sample: &QASampleRecord) -> bool {
    sample
        .reference_urls
        .iter()
        .all(|u| t.visited_urls.contains(&normalize_url(u)))
}

/// Fraction of tasks with a correct verdict among the first `k` attempts.
pub fn pass_at_k(outcomes: &[EvalOutcome], k: usize) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for o in outcomes {
        if o.attempts.len() < k {
            return Err(EvalError::InsufficientAttempts {
                task: o.task_id.clone(),
                have: o.attempts.len(),
                need: k,
            });
        }
        if o.attempts[..k].iter().any(|a| a.verdict.correct) {
            hits += 1;
        }
    }
    Ok(hits as f64 / outcomes.len() as f64)
}

fn retry_worthy(t: &Trajectory) -> bool {
    t.termination != Termination::FinalAnswer && t.has_environment_exception()
}

/// One attempt, re-run silently while it ends without an answer after an
/// environment exception.
pub fn run_attempt(
    sample: &QASampleRecord,
    attempt: usize,
    env: &EnvFactory,
    gateway: &Gateway,
    config: &EvalConfig,
) -> Result<(AttemptOutcome, Vec<Trajectory>), EvalError> {
    let prompt = solver_prompt(&sample.question);
    let base = attempt_id(&sample.id, attempt);
    let mut runs = Vec::new();
    loop {
        let retries = runs.len();
        let id = if retries == 0 { base.clone() } else { format!("{base}-r{retries}") };
        let mut session = env.session(config.toolset.clone());
        let t = run_episode(id, &prompt, &mut session, gateway, &config.agent);
        let again = retry_worthy(&t) && retries < config.max_exception_retries;
        runs.push(t);
        if !again {
            break;
        }
    }
    let last = runs.last().expect("at least one run");
    let verdict = match (&last.termination, &last.final_answer) {
        (Termination::FinalAnswer, Some(ans)) => judge_answer(&sample.question, &sample.answer, ans, gateway)?,
        _ => Verdict {
            correct: false,
            rationale: format!("no final answer ({:?})", last.termination),
        },
    };
    let outcome = AttemptOutcome {
        trajectory_id: last.id.clone(),
        verdict,
        exception_retries_used: runs.len() - 1,
        steps: last.steps.len(),
        tool_call_density: tool_call_density(last).ok(),
        full_coverage: reference_coverage(last, sample),
    };
    Ok((outcome, runs))
}

pub fn validate_dataset(dataset: &[QASampleRecord], k: usize) -> Result<(), EvalError> {
    if k == 0 {
        return Err(EvalError::DatasetInvalid("k must be at least 1".into()));
    }
    let mut ids = std::collections::BTreeSet::new();
    for r in dataset {
        r.validate().map_err(|e| EvalError::DatasetInvalid(format!("{}: {e}", r.id)))?;
        if !ids.insert(&r.id) {
            return Err(EvalError::DatasetInvalid(format!("duplicate id {}", r.id)));
        }
    }
    Ok(())
}

pub fn eval_task(
    sample: &QASampleRecord,
    env: &EnvFactory,
    gateway: &Gateway,
    config: &EvalConfig,
) -> Result<(EvalOutcome, Vec<Trajectory>), EvalError> {
    let mut attempts = Vec::with_capacity(config.k);
    let mut trajectories = Vec::new();
    for n in 1..=config.k {
        let (a, runs) = run_attempt(sample, n, env, gateway, config)?;
        attempts.push(a);
        trajectories.extend(runs);
    }
    Ok((
        EvalOutcome {
            task_id: sample.id.clone(),
            level: sample.level,
            attempts,
        },
        trajectories,
    ))
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: EvalReport,
    pub outcomes: Vec<EvalOutcome>,
    pub trajectories: Vec<Trajectory>,
}

/// Tasks run in parallel on the current rayon pool; results keep dataset order.
pub fn run_eval(
    dataset: &[QASampleRecord],
    env: &EnvFactory,
    gateway: &Gateway,
    config: &EvalConfig,
) -> Result<EvalRun, EvalError> {
    validate_dataset(dataset, config.k)?;
    let results: Vec<_> = dataset
        .par_iter()
        .map(|s| eval_task(s, env, gateway, config))
        .collect::<Result<_, _>>()?;
    let mut outcomes = Vec::with_capacity(results.len());
    let mut trajectories = Vec::new();
    for (o, t) in results {
        outcomes.push(o);
        trajectories.extend(t);
    }
    let report = aggregate(&outcomes, config.k)?;
    Ok(EvalRun {
        report,
        outcomes,
        trajectories,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub tasks: usize,
    pub pass_at_1: f64,
    pub pass_at_k: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub attempts: usize,
    pub full_coverage: usize,
    pub correct_with_full_coverage: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: usize,
    pub k: usize,
    pub pass_at_1: f64,
    pub pass_at_k: BTreeMap<usize, f64>,
    pub levels: BTreeMap<u8, LevelStats>,
    pub mean_steps: f64,
    pub tool_call_density: f64,
    pub reference_coverage: CoverageStats,
    pub exception_retries: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn level_stats(outcomes: &[EvalOutcome], k: usize) -> Result<LevelStats, EvalError> {
    let by_k: BTreeMap<usize, f64> = (1..=k)
        .map(|j| Ok((j, pass_at_k(outcomes, j)?)))
        .collect::<Result<_, EvalError>>()?;
    Ok(LevelStats {
        tasks: outcomes.len(),
        pass_at_1: by_k.get(&1).copied().unwrap_or(0.0),
        pass_at_k: by_k,
    })
}

/// Reduces per-task outcomes into the report. Step, density and coverage
/// figures are averaged over every attempt.
pub fn aggregate(outcomes: &[EvalOutcome], k: usize) -> Result<EvalReport, EvalError> {
    let all = level_stats(outcomes, k)?;
    let mut by_level: BTreeMap<u8, Vec<EvalOutcome>> = BTreeMap::new();
    for o in outcomes {
        if let Some(l) = o.level {
            by_level.entry(l).or_default().push(o.clone());
        }
    }
    let levels = by_level
        .iter()
        .map(|(l, os)| Ok((*l, level_stats(os, k)?)))
        .collect::<Result<_, EvalError>>()?;
    let attempts: Vec<&AttemptOutcome> = outcomes.iter().flat_map(|o| &o.attempts[..k]).collect();
    let densities: Vec<f64> = attempts.iter().filter_map(|a| a.tool_call_density).collect();
    let covered: Vec<&&AttemptOutcome> = attempts.iter().filter(|a| a.full_coverage).collect();
    let covered_correct = covered.iter().filter(|a| a.verdict.correct).count();
    Ok(EvalReport {
        tasks: outcomes.len(),
        k,
        pass_at_1: all.pass_at_1,
        pass_at_k: all.pass_at_k,
        levels,
        mean_steps: if attempts.is_empty() {
            0.0
        } else {
            attempts.iter().map(|a| a.steps).sum::<usize>() as f64 / attempts.len() as f64
        },
        tool_call_density: if densities.is_empty() {
            0.0
        } else {
            densities.iter().sum::<f64>() / densities.len() as f64
        },
        reference_coverage: CoverageStats {
            attempts: attempts.len(),
            full_coverage: covered.len(),
            correct_with_full_coverage: covered_correct,
            accuracy: ratio(covered_correct, covered.len()),
        },
        exception_retries: attempts.iter().map(|a| a.exception_retries_used).sum(),
    })
}

impl EvalReport {
    /// Plain-text table: one row per metric, columns Level 1..3 and Avg.
    pub fn table(&self) -> String {
        let cell = |l: u8, f: &dyn Fn(&LevelStats) -> f64| match self.levels.get(&l) {
            Some(s) => format!("{:>8.2}", 100.0 * f(s)),
            None => format!("{:>8}", "-"),
        };
        let mut out = format!("{:<10}{:>8}{:>8}{:>8}{:>8}\n", "Metric", "Level 1", "Level 2", "Level 3", "Avg");
        for j in 1..=self.k {
            let get = |s: &LevelStats| s.pass_at_k.get(&j).copied().unwrap_or(0.0);
            let _ = writeln!(
                out,
                "{:<10}{}{}{}{:>8.2}",
                format!("pass@{j}"),
                cell(1, &get),
                cell(2, &get),
                cell(3, &get),
                100.0 * self.pass_at_k.get(&j).copied().unwrap_or(0.0)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentStep;
    use crate::web::{Tool, ToolCall};

    fn outcome(id: &str, level: Option<u8>, marks: &[bool]) -> EvalOutcome {
        EvalOutcome {
            task_id: id.into(),
            level,
            attempts: marks
                .iter()
                .enumerate()
                .map(|(i, c)| AttemptOutcome {
                    trajectory_id: format!("{id}-a{}", i + 1),
                    verdict: Verdict {
                        correct: *c,
                        rationale: String::new(),
                    },
                    exception_retries_used: 0,
                    steps: 4,
                    tool_call_density: Some(50.0),
                    full_coverage: *c,
                })
                .collect(),
        }
    }

    #[test]
    fn pass_counts() {
        let os = vec![
            outcome("a", Some(1), &[true, false, false]),
            outcome("b", Some(1), &[false, false, true]),
            outcome("c", Some(2), &[false, false, false]),
        ];
        assert_eq!(pass_at_k(&os, 1).unwrap(), 1.0 / 3.0);
        assert_eq!(pass_at_k(&os, 3).unwrap(), 2.0 / 3.0);
        assert!(matches!(pass_at_k(&os, 4), Err(EvalError::InsufficientAttempts { .. })));
        let r = aggregate(&os, 3).unwrap();
        assert_eq!(r.levels[&1].pass_at_k[&3], 1.0);
        assert_eq!(r.reference_coverage.full_coverage, 2);
        assert_eq!(r.reference_coverage.accuracy, 1.0);
        assert!(r.table().contains("pass@3"));
        let r1 = aggregate(&os, 1).unwrap();
        assert_eq!(r1.pass_at_1, r1.pass_at_k[&1]);
    }

    fn traj(calls_per_step: &[usize]) -> Trajectory {
        let steps = calls_per_step
            .iter()
            .enumerate()
            .map(|(i, n)| AgentStep {
                index: i,
                model_output: String::new(),
                thought: String::new(),
                calls: vec![ToolCall::new(Tool::Goback, vec![]); *n],
                observations: vec![],
                format_error: None,
                feedback: None,
            })
            .collect();
        Trajectory {
            schema_version: 1,
            id: "t".into(),
            task_prompt: String::new(),
            steps,
            final_answer: None,
            termination: Termination::FinalAnswer,
            fatal_reason: None,
            visited_urls: Default::default(),
        }
    }

    #[test]
    fn density() {
        assert_eq!(tool_call_density(&traj(&[1, 2, 1, 1, 1, 1, 0, 0, 0, 0])).unwrap(), 60.0);
        assert_eq!(tool_call_density(&traj(&[1, 1])).unwrap(), 100.0);
        assert_eq!(tool_call_density(&traj(&[0, 0, 0])).unwrap(), 0.0);
        assert!(matches!(tool_call_density(&traj(&[])), Err(EvalError::EmptyTrajectory(_))));
    }
}
