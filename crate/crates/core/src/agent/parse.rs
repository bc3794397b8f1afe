//! Turning raw model text into an [`Action`].
//!
//! The grammar is deliberately small: the first fenced code block in the
//! reply holds exactly one action. Anything else is a parse failure, which
//! the loop surfaces as an observation with a reformat hint — model noise
//! must never crash the run.

use std::collections::BTreeMap;

use regex::Regex;

use super::{Action, AgentKind};

/// Skill names recognized in tool-call position (aliases included).
const SKILL_NAMES: [&str; 9] = [
    "lint_verilog",
    "simulate_verilog",
    "parse_verilog",
    "run_openlane",
    "view_openlane_metrics",
    "diagnose_flow",
    "query_opensource_ips",
    "query_docs",
    "query_docs_db",
];

/// Extract the first fenced code block's body.
fn first_fenced_block(text: &str) -> Option<String> {
    let mut in_block = false;
    let mut body: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            if in_block {
                return Some(body.join("\n"));
            }
            in_block = true;
            continue;
        }
        if in_block {
            body.push(line);
        }
    }
    // an unterminated block still counts; models drop closing fences
    in_block.then(|| body.join("\n"))
}

fn parse_call_args(raw: &str) -> BTreeMap<String, String> {
    let arg_re = Regex::new(r#"(?:(\w+)\s*=\s*)?(?:'([^']*)'|"([^"]*)"|([^,()\s][^,()]*))"#)
        .expect("arg regex");
    let mut args = BTreeMap::new();
    let mut position = 0usize;
    for c in arg_re.captures_iter(raw) {
        let value = c
            .get(2)
            .or_else(|| c.get(3))
            .or_else(|| c.get(4))
            .map(|m| m.as_str().trim().to_string())
            .unwrap_or_default();
        if value.is_empty() {
            continue;
        }
        match c.get(1) {
            Some(name) => {
                args.insert(name.as_str().to_string(), value);
            }
            None => {
                args.insert(position.to_string(), value);
                position += 1;
            }
        }
    }
    args
}

/// Parse one action from model output. `Err` carries the reason for the
/// retry hint; callers convert it into a `ParseFailure` observation.
pub fn parse_action(text: &str) -> Result<Action, String> {
    let block = first_fenced_block(text)
        .ok_or_else(|| "no fenced code block found in the reply".to_string())?;
    let block = block.trim();
    if block.is_empty() {
        return Err("the fenced code block is empty".to_string());
    }
    let (first_line, rest) = match block.split_once('\n') {
        Some((f, r)) => (f.trim(), r),
        None => (block, ""),
    };

    if let Some(path) = first_line.strip_prefix("edit ") {
        let path = path.trim();
        if path.is_empty() {
            return Err("edit directive is missing a path".to_string());
        }
        let mut content = rest.to_string();
        if !content.is_empty() && !content.ends_with('\n') {
            content.push('\n');
        }
        return Ok(Action::EditFile {
            path: path.to_string(),
            content,
        });
    }

    if let Some(summary) = first_line.strip_prefix("finish") {
        let summary = summary.trim_start_matches(':').trim();
        return Ok(Action::Finish {
            summary: summary.to_string(),
        });
    }

    if let Some(rest) = first_line.strip_prefix("delegate ") {
        let (kind, instruction) = rest
            .split_once(':')
            .ok_or_else(|| "delegate directive needs `delegate <agent>: <instruction>`".to_string())?;
        let agent: AgentKind = kind.trim().parse()?;
        return Ok(Action::Delegate {
            agent,
            instruction: instruction.trim().to_string(),
        });
    }

    // tool call, optionally wrapped in print(...) as in a Python REPL
    let call_re = Regex::new(r"^(?:\w+\s*(?:,\s*\w+\s*)*=\s*)?(?:print\()?\s*(\w+)\((.*)\)\)?\s*$")
        .expect("call regex");
    if let Some(c) = call_re.captures(first_line) {
        let name = &c[1];
        if SKILL_NAMES.contains(&name) {
            let skill = if name == "query_docs_db" {
                "query_docs".to_string()
            } else {
                name.to_string()
            };
            return Ok(Action::ToolCall {
                skill,
                args: parse_call_args(&c[2]),
            });
        }
    }

    // everything else is a shell command
    Ok(Action::RunShell {
        command: block.to_string(),
    })
}
