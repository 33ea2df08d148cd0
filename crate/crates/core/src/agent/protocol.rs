use std::collections::BTreeMap;

use crate::web::{ArgValue, ParamKind, Tool, ToolCall, Toolset};

pub const THOUGHT_MARKER: &str = "Thought:";
pub const ACTION_MARKER: &str = "Action:";
pub const FINAL_MARKER: &str = "Final Answer:";

/// What the model asked for in one turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    /// Tool calls to run in order. Empty means a pure reasoning step.
    Act(Vec<ToolCall>),
    FinalAnswer(String),
    FormatError(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTurn {
    pub thought: String,
    pub decision: Decision,
}

fn find_marker(text: &str, marker: &str) -> Option<usize> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if trimmed.starts_with(marker) {
            return Some(offset + (line.len() - trimmed.len()));
        }
        offset += line.len();
    }
    None
}

pub fn parse_model_action(text: &str, toolset: &Toolset) -> ParsedTurn {
    let action_at = find_marker(text, ACTION_MARKER);
    let final_at = find_marker(text, FINAL_MARKER);
    let head_end = [action_at, final_at].into_iter().flatten().min().unwrap_or(text.len());
    let head = &text[..head_end];
    let thought = match find_marker(head, THOUGHT_MARKER) {
        Some(i) => head[i + THOUGHT_MARKER.len()..].trim(),
        None => head.trim(),
    }
    .to_string();
    let decision = match (action_at, final_at) {
        (Some(_), Some(_)) => Decision::FormatError("both an action block and a final answer were given".into()),
        (None, Some(f)) => {
            let answer = text[f + FINAL_MARKER.len()..].trim();
            if answer.is_empty() {
                Decision::FormatError("final answer is empty".into())
            } else {
                Decision::FinalAnswer(answer.to_string())
            }
        }
        (Some(a), None) => parse_action_block(&text[a + ACTION_MARKER.len()..], toolset),
        (None, None) => Decision::Act(Vec::new()),
    };
    ParsedTurn { thought, decision }
}

fn parse_action_block(rest: &str, toolset: &Toolset) -> Decision {
    let body = extract_fenced(rest).unwrap_or(rest);
    let mut calls = Vec::new();
    for line in body.lines().map(str::trim).filter(|l| !l.is_empty()) {
        match parse_call(line, toolset) {
            Ok(c) => calls.push(c),
            Err(e) => return Decision::FormatError(e),
        }
    }
    if calls.is_empty() {
        Decision::FormatError("action block contains no tool call".into())
    } else {
        Decision::Act(calls)
    }
}

fn extract_fenced(s: &str) -> Option<&str> {
    let start = s.find("```")?;
    let after = &s[start + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}

#[derive(Debug, Clone, PartialEq)]
enum Lit {
    Str(String),
    Int(i64),
}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
            src,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn string(&mut self, quote: char) -> Result<String, String> {
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return Err(format!("unterminated string in `{}`", self.src)),
                Some(c) if c == quote => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some('\\') => {
                    self.pos += 1;
                    let esc = self.peek().ok_or_else(|| format!("dangling escape in `{}`", self.src))?;
                    self.pos += 1;
                    out.push(match esc {
                        'n' => '\n',
                        't' => '\t',
                        other => other,
                    });
                }
                Some(c) => {
                    self.pos += 1;
                    out.push(c);
                }
            }
        }
    }

    fn literal(&mut self) -> Result<Lit, String> {
        self.skip_ws();
        match self.peek() {
            Some(q @ ('"' | '\'')) => {
                self.pos += 1;
                self.string(q).map(Lit::Str)
            }
            Some(c) if c == '-' || c.is_ascii_digit() => {
                let start = self.pos;
                self.pos += 1;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let s: String = self.chars[start..self.pos].iter().collect();
                s.parse().map(Lit::Int).map_err(|_| format!("bad integer `{s}`"))
            }
            _ => Err(format!("expected a quoted string or integer in `{}`", self.src)),
        }
    }
}

fn parse_call(line: &str, toolset: &Toolset) -> Result<ToolCall, String> {
    let mut cur = Cursor::new(line);
    let name = cur.ident();
    if name.is_empty() {
        return Err(format!("expected a tool call, found `{line}`"));
    }
    let tool: Tool = name.parse().map_err(|_| format!("undefined tool name: {name}"))?;
    if !toolset.contains(tool) {
        return Err(format!("undefined tool name: {name}"));
    }
    if !cur.eat('(') {
        return Err(format!("expected `(` after {name}"));
    }
    let mut positional = Vec::new();
    let mut named: Vec<(String, Lit)> = Vec::new();
    if !cur.eat(')') {
        loop {
            cur.skip_ws();
            let save = cur.pos;
            let key = cur.ident();
            if !key.is_empty() && cur.eat('=') {
                named.push((key, cur.literal()?));
            } else {
                cur.pos = save;
                if !named.is_empty() {
                    return Err(format!("positional argument after named argument in {name}"));
                }
                positional.push(cur.literal()?);
            }
            if cur.eat(')') {
                break;
            }
            if !cur.eat(',') {
                return Err(format!("expected `,` or `)` in `{line}`"));
            }
        }
    }
    cur.skip_ws();
    if cur.peek().is_some() {
        return Err(format!("unexpected text after call: `{line}`"));
    }
    bind_args(tool, positional, named).map(|args| ToolCall {
        tool,
        args,
        raw_text: line.to_string(),
    })
}

fn bind_args(
    tool: Tool,
    positional: Vec<Lit>,
    named: Vec<(String, Lit)>,
) -> Result<BTreeMap<String, ArgValue>, String> {
    let params = tool.params();
    let bad = |why: String| format!("invalid parameters for {}: {why}; expected {}", tool.name(), tool.signature());
    if positional.len() + named.len() != params.len() {
        return Err(bad(format!(
            "got {} argument(s), expected {}",
            positional.len() + named.len(),
            params.len()
        )));
    }
    let mut bound: BTreeMap<String, Lit> = BTreeMap::new();
    for ((p, _), v) in params.iter().zip(positional) {
        bound.insert((*p).to_string(), v);
    }
    for (k, v) in named {
        if !params.iter().any(|(p, _)| *p == k) {
            return Err(bad(format!("unknown parameter {k}")));
        }
        if bound.insert(k.clone(), v).is_some() {
            return Err(bad(format!("parameter {k} given twice")));
        }
    }
    let mut args = BTreeMap::new();
    for (p, kind) in params {
        let v = bound.remove(*p).ok_or_else(|| bad(format!("missing {p}")))?;
        let value = match (kind, v) {
            (ParamKind::Text, Lit::Str(s)) => ArgValue::Text(s),
            (ParamKind::Text, Lit::Int(i)) => ArgValue::Text(i.to_string()),
            (ParamKind::Int, Lit::Int(i)) => ArgValue::Int(i),
            (ParamKind::Int, Lit::Str(s)) => ArgValue::Int(
                s.trim().parse().map_err(|_| bad(format!("{p} must be an integer")))?,
            ),
        };
        args.insert((*p).to_string(), value);
    }
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full() -> Toolset {
        Toolset::full()
    }

    #[test]
    fn two_calls_in_order() {
        let t = parse_model_action(
            "Thought: look it up\nAction:\n```\nSearch(query=\"herons 2019\")\nVisit(\"https://herons.example\")\n```",
            &full(),
        );
        assert_eq!(t.thought, "look it up");
        let Decision::Act(calls) = t.decision else { panic!() };
        assert_eq!(calls.len(), 2);
        assert_eq!(calls[0].tool, Tool::Search);
        assert_eq!(calls[0].text("query"), Some("herons 2019"));
        assert_eq!(calls[1].text("url"), Some("https://herons.example"));
    }

    #[test]
    fn final_answer() {
        let t = parse_model_action("Final Answer: 42", &full());
        assert_eq!(t.decision, Decision::FinalAnswer("42".into()));
        assert_eq!(t.thought, "");
        let t = parse_model_action("Thought: done\nFinal Answer:\n{\"a\": 1}\n", &full());
        assert_eq!(t.decision, Decision::FinalAnswer("{\"a\": 1}".into()));
    }

    #[test]
    fn undefined_tool() {
        let t = parse_model_action("Action:\n```\nTeleport(\"mars\")\n```", &full());
        assert_eq!(t.decision, Decision::FormatError("undefined tool name: Teleport".into()));
    }

    #[test]
    fn tool_outside_toolset_is_undefined() {
        let t = parse_model_action("Action:\n```\nScreenshot(\"a.png\")\n```", &Toolset::solver());
        assert!(matches!(t.decision, Decision::FormatError(ref m) if m.contains("Screenshot")));
    }

    #[test]
    fn arity_and_types() {
        for bad in [
            "Visit()",
            "Visit(\"a\", \"b\")",
            "Scroll(pixels=\"down\")",
            "Click(id=\"x\")",
            "Input(text=\"a\", \"b\")",
            "Visit(\"a\"",
            "Visit(\"a\") trailing",
        ] {
            let t = parse_model_action(&format!("Action:\n```\n{bad}\n```"), &full());
            assert!(matches!(t.decision, Decision::FormatError(_)), "{bad}");
        }
        let t = parse_model_action("Action:\n```\nScroll(-400)\nGoback()\n```", &full());
        let Decision::Act(c) = t.decision else { panic!() };
        assert_eq!(c[0].int("pixels"), Some(-400));
        assert_eq!(c[1].tool, Tool::Goback);
    }

    #[test]
    fn pure_reasoning_and_conflicts() {
        let t = parse_model_action("Thought: the sum is 10, I should double check.", &full());
        assert_eq!(t.decision, Decision::Act(vec![]));
        let t = parse_model_action("Action:\n```\nGoback()\n```\nFinal Answer: x", &full());
        assert!(matches!(t.decision, Decision::FormatError(_)));
        let t = parse_model_action("Action:\n```\n```", &full());
        assert!(matches!(t.decision, Decision::FormatError(_)));
    }

    #[test]
    fn escapes_round_trip_through_canonical_render() {
        let c = ToolCall::new(Tool::StrFind, vec![ArgValue::Text("say \"x\" \\ y".into())]);
        let t = parse_model_action(&format!("Action:\n```\n{}\n```", c.raw_text), &full());
        let Decision::Act(calls) = t.decision else { panic!() };
        assert_eq!(calls[0].args, c.args);
    }
}
