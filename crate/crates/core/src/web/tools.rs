use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The agent's action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tool {
    Search,
    Visit,
    StrFind,
    Input,
    Click,
    Scroll,
    Goback,
    FileRead,
    Screenshot,
    ImageCaption,
    /// Evaluates an aggregation expression.
    Compute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Text,
    Int,
}

impl Tool {
    pub const ALL: [Tool; 11] = [
        Tool::Search,
        Tool::Visit,
        Tool::StrFind,
        Tool::Input,
        Tool::Click,
        Tool::Scroll,
        Tool::Goback,
        Tool::FileRead,
        Tool::Screenshot,
        Tool::ImageCaption,
        Tool::Compute,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tool::Search => "Search",
            Tool::Visit => "Visit",
            Tool::StrFind => "StrFind",
            Tool::Input => "Input",
            Tool::Click => "Click",
            Tool::Scroll => "Scroll",
            Tool::Goback => "Goback",
            Tool::FileRead => "FileRead",
            Tool::Screenshot => "Screenshot",
            Tool::ImageCaption => "ImageCaption",
            Tool::Compute => "Compute",
        }
    }

    pub fn params(self) -> &'static [(&'static str, ParamKind)] {
        use ParamKind::*;
        match self {
            Tool::Search | Tool::StrFind => &[("query", Text)],
            Tool::Visit => &[("url", Text)],
            Tool::Input => &[("text", Text), ("tbox_id", Text)],
            Tool::Click => &[("button_id", Text)],
            Tool::Scroll => &[("pixels", Int)],
            Tool::Goback => &[],
            Tool::FileRead | Tool::Screenshot | Tool::ImageCaption => &[("path", Text)],
            Tool::Compute => &[("expr", Text)],
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Tool::Search => "web search; returns ranked results",
            Tool::Visit => "open a URL; returns page text, interactive elements and links",
            Tool::StrFind => "find a string in the current page text; returns matches with context",
            Tool::Input => "type text into a textbox on the current page",
            Tool::Click => "click a button on the current page",
            Tool::Scroll => "move the text window of the current page by a number of pixels",
            Tool::Goback => "return to the previous page",
            Tool::FileRead => "read an attached file",
            Tool::Screenshot => "capture the current screen to a path",
            Tool::ImageCaption => "describe an image file",
            Tool::Compute => "evaluate an aggregation expression, e.g. std_p([1,2,3])",
        }
    }

    /// `Name(param, ...)` as shown to the model.
    pub fn signature(self) -> String {
        let params: Vec<&str> = self.params().iter().map(|(n, _)| *n).collect();
        format!("{}({})", self.name(), params.join(", "))
    }
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tool {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tool::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("undefined tool name: {s}"))
    }
}

/// The tools registered for one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Toolset(BTreeSet<Tool>);

impl Toolset {
    pub fn new(tools: impl IntoIterator<Item = Tool>) -> Self {
        Self(tools.into_iter().collect())
    }

    pub fn full() -> Self {
        Self::new(Tool::ALL)
    }

    /// Everything except the visual tools; solver trajectories are plain text.
    pub fn solver() -> Self {
        Self::new(
            Tool::ALL
                .into_iter()
                .filter(|t| !matches!(t, Tool::Screenshot | Tool::Scroll)),
        )
    }

    pub fn contains(&self, tool: Tool) -> bool {
        self.0.contains(&tool)
    }

    pub fn iter(&self) -> impl Iterator<Item = Tool> + '_ {
        self.0.iter().copied()
    }

    pub fn without(&self, tool: Tool) -> Self {
        let mut s = self.0.clone();
        s.remove(&tool);
        Self(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgValue {
    Int(i64),
    Text(String),
}

impl ArgValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            ArgValue::Text(s) => Some(s),
            ArgValue::Int(_) => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            ArgValue::Int(n) => Some(*n),
            ArgValue::Text(_) => None,
        }
    }
}

/// One tool invocation. Argument names are canonical parameter names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: Tool,
    pub args: BTreeMap<String, ArgValue>,
    pub raw_text: String,
}

impl ToolCall {
    /// Builds a call from positional arguments, rendering a canonical
    /// `raw_text`.
    pub fn new(tool: Tool, positional: Vec<ArgValue>) -> Self {
        let args: BTreeMap<String, ArgValue> = tool
            .params()
            .iter()
            .zip(positional)
            .map(|((n, _), v)| (n.to_string(), v))
            .collect();
        let raw_text = render_call(tool, &args);
        Self {
            tool,
            args,
            raw_text,
        }
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        self.args.get(name).and_then(ArgValue::as_text)
    }

    pub fn int(&self, name: &str) -> Option<i64> {
        self.args.get(name).and_then(ArgValue::as_int)
    }
}

pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical `Name(param="value", ...)` text in parameter order.
pub fn render_call(tool: Tool, args: &BTreeMap<String, ArgValue>) -> String {
    let parts: Vec<String> = tool
        .params()
        .iter()
        .filter_map(|(n, _)| {
            args.get(*n).map(|v| match v {
                ArgValue::Text(s) => format!("{n}={}", quote(s)),
                ArgValue::Int(i) => format!("{n}={i}"),
            })
        })
        .collect();
    format!("{}({})", tool.name(), parts.join(", "))
}
