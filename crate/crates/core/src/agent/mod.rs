//! ReAct-style episode loop.
//!
//! Each turn the model sees the whole transcript and replies with a thought
//! followed by either a fenced block of tool calls or a final answer.

mod protocol;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatMessage, ChatRequest, Gateway, Role};
use crate::web::{char_window, EnvSession, Observation, Tool, ToolCall, Toolset};

pub use protocol::{parse_model_action, Decision, ParsedTurn, ACTION_MARKER, FINAL_MARKER, THOUGHT_MARKER};

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStep {
    /// 1-based.
    pub index: usize,
    pub model_output: String,
    pub thought: String,
    pub calls: Vec<ToolCall>,
    pub observations: Vec<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_error: Option<String>,
    /// Advice delivered after this step, before the next model turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FinalAnswer,
    BudgetExhausted,
    FatalError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema_version: u32,
    pub id: String,
    pub task_prompt: String,
    pub steps: Vec<AgentStep>,
    pub final_answer: Option<String>,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fatal_reason: Option<String>,
    pub visited_urls: BTreeSet<String>,
}

impl Trajectory {
    pub fn calls(&self) -> impl Iterator<Item = &ToolCall> {
        self.steps.iter().flat_map(|s| s.calls.iter())
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.steps.iter().flat_map(|s| s.observations.iter())
    }

    pub fn count_tool(&self, tool: Tool) -> usize {
        self.calls().filter(|c| c.tool == tool).count()
    }

    pub fn has_format_error(&self) -> bool {
        self.steps.iter().any(|s| s.format_error.is_some())
    }

    pub fn has_environment_exception(&self) -> bool {
        self.observations().any(Observation::is_environment_exception)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub budget: usize,
    pub max_consecutive_format_errors: usize,
    /// Character cap for each rendered observation.
    pub truncation_budget: usize,
    pub model_tag: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
    /// Role-specific instructions appended to the preamble.
    pub instructions: String,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            budget: 30,
            max_consecutive_format_errors: 3,
            truncation_budget: 20_000,
            model_tag: "solver".into(),
            temperature: 0.0,
            max_output_tokens: 4096,
            instructions: String::new(),
        }
    }
}

pub fn system_preamble(toolset: &Toolset, instructions: &str) -> String {
    let mut s = String::from(
        "You are a web research agent. Work step by step. In every turn write a line starting with \
         `Thought:` with your reasoning, then either an `Action:` line followed by a fenced code block \
         containing one tool call per line, or a line starting with `Final Answer:` followed by the answer. \
         Never give both in one turn. A turn with only a thought is allowed.\n\n\
         Tool calls look like Name(param=\"text\", count=3); positional arguments are also accepted.\n\nTools:\n",
    );
    for t in toolset.iter() {
        s.push_str(&format!("- {}: {}\n", t.signature(), t.describe()));
    }
    if !instructions.trim().is_empty() {
        s.push('\n');
        s.push_str(instructions.trim());
        s.push('\n');
    }
    s
}

pub fn clip_rendered(obs: &Observation, budget: usize) -> String {
    let text = obs.render();
    let (clipped, cut) = char_window(&text, 0, budget);
    if cut {
        format!("{clipped}\n[truncated]")
    } else {
        clipped
    }
}

fn format_error_notice(reason: &str) -> String {
    format!(
        "Format error: {reason}. Reply with `Thought:` then either `Action:` and a fenced block of valid tool calls, or `Final Answer:`."
    )
}

/// Chat messages for the next model turn.
pub fn render_messages(
    task_prompt: &str,
    steps: &[AgentStep],
    toolset: &Toolset,
    config: &AgentConfig,
) -> Vec<ChatMessage> {
    let mut msgs = vec![
        ChatMessage::system(system_preamble(toolset, &config.instructions)),
        ChatMessage::user(task_prompt),
    ];
    for step in steps {
        msgs.push(ChatMessage::new(Role::Assistant, step.model_output.clone()));
        if let Some(err) = &step.format_error {
            msgs.push(ChatMessage::user(format_error_notice(err)));
        } else if !step.calls.is_empty() {
            let body = step
                .calls
                .iter()
                .zip(&step.observations)
                .enumerate()
                .map(|(i, (c, o))| {
                    format!("Observation {} for {}:\n{}", i + 1, c.raw_text, clip_rendered(o, config.truncation_budget))
                })
                .collect::<Vec<_>>()
                .join("\n\n");
            msgs.push(ChatMessage::new(Role::Tool, body));
        } else if step.feedback.is_none() {
            msgs.push(ChatMessage::user("Continue."));
        }
        if let Some(fb) = &step.feedback {
            msgs.push(ChatMessage::user(fb.clone()));
        }
    }
    msgs
}

/// The transcript as one string: every message as `[role]` plus content.
pub fn render_context(
    task_prompt: &str,
    steps: &[AgentStep],
    toolset: &Toolset,
    config: &AgentConfig,
) -> String {
    render_messages(task_prompt, steps, toolset, config)
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
                Role::Tool => "tool",
            };
            format!("[{role}]\n{}", m.content)
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn run_episode(
    id: impl Into<String>,
    task_prompt: &str,
    session: &mut EnvSession,
    gateway: &Gateway,
    config: &AgentConfig,
) -> Trajectory {
    let traj = Trajectory {
        schema_version: TRAJECTORY_SCHEMA_VERSION,
        id: id.into(),
        task_prompt: task_prompt.to_string(),
        steps: Vec::new(),
        final_answer: None,
        termination: Termination::BudgetExhausted,
        fatal_reason: None,
        visited_urls: BTreeSet::new(),
    };
    drive(traj, session, gateway, config)
}

/// Continues a finished episode after delivering `feedback` to the model.
/// The step budget covers the whole trajectory, including earlier steps.
pub fn resume(
    mut traj: Trajectory,
    feedback: &str,
    session: &mut EnvSession,
    gateway: &Gateway,
    config: &AgentConfig,
) -> Trajectory {
    if traj.termination == Termination::FatalError {
        return traj;
    }
    if let Some(last) = traj.steps.last_mut() {
        last.feedback = Some(match last.feedback.take() {
            Some(prev) => format!("{prev}\n\n{feedback}"),
            None => feedback.to_string(),
        });
    }
    traj.final_answer = None;
    traj.termination = Termination::BudgetExhausted;
    drive(traj, session, gateway, config)
}

fn drive(mut traj: Trajectory, session: &mut EnvSession, gateway: &Gateway, config: &AgentConfig) -> Trajectory {
    let toolset = session.toolset().clone();
    let budget = config.budget.max(1);
    let mut consecutive_errors = traj
        .steps
        .iter()
        .rev()
        .take_while(|s| s.format_error.is_some())
        .count();
    while traj.steps.len() < budget {
        let messages = render_messages(&traj.task_prompt, &traj.steps, &toolset, config);
        let mut request = ChatRequest::new(config.model_tag.clone(), messages).with_temperature(config.temperature);
        request.max_output_tokens = config.max_output_tokens;
        let reply = match gateway.complete(&request) {
            Ok(r) => r.text,
            Err(e) => {
                traj.termination = Termination::FatalError;
                traj.fatal_reason = Some(e.to_string());
                break;
            }
        };
        let parsed = parse_model_action(&reply, &toolset);
        let mut step = AgentStep {
            index: traj.steps.len() + 1,
            model_output: reply,
            thought: parsed.thought,
            calls: Vec::new(),
            observations: Vec::new(),
            format_error: None,
            feedback: None,
        };
        match parsed.decision {
            Decision::FinalAnswer(answer) => {
                traj.steps.push(step);
                traj.final_answer = Some(answer);
                traj.termination = Termination::FinalAnswer;
                break;
            }
            Decision::FormatError(reason) => {
                step.format_error = Some(reason);
                traj.steps.push(step);
                consecutive_errors += 1;
                if consecutive_errors >= config.max_consecutive_format_errors.max(1) {
                    traj.termination = Termination::FatalError;
                    traj.fatal_reason = Some(format!("{consecutive_errors} consecutive format errors"));
                    break;
                }
            }
            Decision::Act(calls) => {
                consecutive_errors = 0;
                step.observations = calls.iter().map(|c| session.exec_tool(c)).collect();
                step.calls = calls;
                traj.steps.push(step);
            }
        }
    }
    traj.visited_urls = session.visited_urls().clone();
    traj
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{make_scripted_backend, Matcher, ResponseScript, RetryPolicy, ScriptEntry};
    use crate::web::{Blacklist, EnvConfig, FixtureWorld, PageRecord};

    fn session() -> EnvSession {
        let pages = vec![(
            1,
            PageRecord {
                url: "https://a.example".into(),
                title: "A".into(),
                text: "alpha ".repeat(10),
                elements: vec![],
                links: vec![],
                attachments: vec![],
                exception: None,
            },
        )];
        let world = FixtureWorld::build(pages, BTreeMap::new()).unwrap();
        EnvSession::new(Arc::new(world), Toolset::full(), Arc::new(Blacklist::default()), EnvConfig::default())
    }

    fn gateway(replies: &[&str]) -> Gateway {
        let entries = replies.iter().map(|r| ScriptEntry::reply(Matcher::Any, *r)).collect();
        let backend = make_scripted_backend(ResponseScript::new(entries)).unwrap();
        Gateway::new(Arc::new(backend), RetryPolicy::immediate(1))
    }

    const VISIT: &str = "Thought: open it\nAction:\n```\nVisit(\"https://a.example\")\n```";

    #[test]
    fn final_answer_at_step_four() {
        let gw = gateway(&[VISIT, "Thought: hmm", VISIT, "Final Answer: alpha"]);
        let t = run_episode("t1", "q", &mut session(), &gw, &AgentConfig::default());
        assert_eq!(t.steps.len(), 4);
        assert_eq!(t.termination, Termination::FinalAnswer);
        assert_eq!(t.final_answer.as_deref(), Some("alpha"));
        assert!(t.visited_urls.contains("https://a.example"));
        assert!(t.steps.iter().all(|s| s.calls.len() == s.observations.len()));
    }

    #[test]
    fn budget_exhausted() {
        let entries = vec![ScriptEntry::reply(Matcher::Any, "Thought: still thinking").persistent()];
        let gw = Gateway::new(
            Arc::new(make_scripted_backend(ResponseScript::new(entries)).unwrap()),
            RetryPolicy::immediate(1),
        );
        let t = run_episode("t", "q", &mut session(), &gw, &AgentConfig::default());
        assert_eq!(t.steps.len(), 30);
        assert_eq!(t.termination, Termination::BudgetExhausted);
        assert!(t.final_answer.is_none());
    }

    #[test]
    fn three_format_errors_are_fatal() {
        let bad = "Action:\n```\nTeleport(\"x\")\n```";
        let gw = gateway(&[bad, bad, bad, "Final Answer: never"]);
        let t = run_episode("t", "q", &mut session(), &gw, &AgentConfig::default());
        assert_eq!(t.termination, Termination::FatalError);
        assert_eq!(t.steps.len(), 3);
    }

    #[test]
    fn format_error_streak_resets() {
        let bad = "Action:\n```\nTeleport(\"x\")\n```";
        let gw = gateway(&[bad, bad, VISIT, bad, bad, "Final Answer: ok"]);
        let t = run_episode("t", "q", &mut session(), &gw, &AgentConfig::default());
        assert_eq!(t.termination, Termination::FinalAnswer);
        assert!(t.has_format_error());
    }

    #[test]
    fn gateway_failure_is_fatal() {
        let gw = gateway(&[VISIT]);
        let t = run_episode("t", "q", &mut session(), &gw, &AgentConfig::default());
        assert_eq!(t.termination, Termination::FatalError);
        assert_eq!(t.steps.len(), 1);
        assert!(t.fatal_reason.is_some());
    }

    #[test]
    fn resume_delivers_feedback() {
        let gw = gateway(&["Final Answer: draft", "Final Answer: revised"]);
        let cfg = AgentConfig::default();
        let mut s = session();
        let t = run_episode("t", "q", &mut s, &gw, &cfg);
        let t = resume(t, "Make it harder.", &mut s, &gw, &cfg);
        assert_eq!(t.final_answer.as_deref(), Some("revised"));
        assert_eq!(t.steps.len(), 2);
        let ctx = render_context(&t.task_prompt, &t.steps[..1], s.toolset(), &cfg);
        assert!(ctx.ends_with("[user]\nMake it harder."));
    }

    #[test]
    fn empty_context_is_preamble_and_task() {
        let cfg = AgentConfig::default();
        let ctx = render_context("Find X", &[], &Toolset::full(), &cfg);
        assert!(ctx.starts_with("[system]\n"));
        assert!(ctx.ends_with("[user]\nFind X"));
        assert_eq!(ctx, render_context("Find X", &[], &Toolset::full(), &cfg));
    }

    #[test]
    fn long_observation_clipped_in_context() {
        let obs = Observation::new(crate::web::Payload::MatchedStrings(vec!["z".repeat(40_000)]));
        let step = AgentStep {
            index: 1,
            model_output: "x".into(),
            thought: String::new(),
            calls: vec![ToolCall::new(Tool::StrFind, vec![crate::web::ArgValue::Text("z".into())])],
            observations: vec![obs],
            format_error: None,
            feedback: None,
        };
        let cfg = AgentConfig::default();
        let msgs = render_messages("q", &[step], &Toolset::full(), &cfg);
        let tool = &msgs[3].content;
        assert!(tool.ends_with("[truncated]"));
        assert!(tool.chars().count() < 20_100);
    }
}
