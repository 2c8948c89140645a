//! Prompt templates and the request layout shared by every backend.
//!
//! A user message describes the program as a header plus a numbered source
//! listing:
//!
//! ```text
//! PROGRAM <id>
//! ENTRY <function>
//! SOURCE
//!    1 | def f(x):
//!    2 |     return x + 1
//! END SOURCE
//! INPUT [1]
//! ```

use crate::backend::{ChatRequest, Message};
use crate::lang::{parse_literal, Value};
use crate::program::SourceProgram;

pub const EXECUTE: &str = include_str!("../assets/prompts/execute.txt");
pub const COT: &str = include_str!("../assets/prompts/cot.txt");
pub const MUTATE: &str = include_str!("../assets/prompts/mutate.txt");
pub const REFINE: &str = include_str!("../assets/prompts/refine.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Execute,
    Cot,
    Mutate,
    Refine,
}

/// Role named by a template's `# template:` header.
pub fn template_role(text: &str) -> Option<Role> {
    let first = text.lines().next()?.trim().strip_prefix("# template:")?;
    match first.split_whitespace().next()? {
        "execute" => Some(Role::Execute),
        "cot" => Some(Role::Cot),
        "mutate" => Some(Role::Mutate),
        "refine" => Some(Role::Refine),
        _ => None,
    }
}

pub fn program_block(p: &SourceProgram) -> String {
    let mut out = format!("PROGRAM {}\nENTRY {}\nSOURCE\n", p.id, p.entry_point);
    for (i, line) in p.text.lines().enumerate() {
        out.push_str(&format!("{:>4} | {}\n", i + 1, line));
    }
    out.push_str("END SOURCE\n");
    out
}

fn with_input(p: &SourceProgram, input: &[Value]) -> String {
    format!("{}INPUT {}\n", program_block(p), Value::list(input.to_vec()))
}

pub fn execute_request(p: &SourceProgram, input: &[Value]) -> ChatRequest {
    ChatRequest::new(vec![Message::system(EXECUTE), Message::user(with_input(p, input))])
}

pub fn cot_request(p: &SourceProgram, input: &[Value]) -> ChatRequest {
    ChatRequest::new(vec![Message::system(COT), Message::user(with_input(p, input))])
}

pub fn mutate_request(p: &SourceProgram, k: usize) -> ChatRequest {
    let system = MUTATE.replace("{k}", &k.to_string());
    ChatRequest::new(vec![Message::system(system), Message::user(format!("{}VARIANTS {k}\n", program_block(p)))])
}

/// Extends a tracing conversation with the previous answer and feedback.
pub fn refine_request(previous: &ChatRequest, answer: &str, feedback: &str) -> ChatRequest {
    let mut req = previous.clone();
    req.messages.push(Message::assistant(answer));
    req.messages.push(Message::user(REFINE.replace("{feedback}", feedback.trim_end())));
    req
}

/// Program description recovered from a user message.
#[derive(Clone, Debug, PartialEq)]
pub struct ProgramBlock {
    pub id: String,
    pub entry: String,
    pub source: String,
    pub input: Option<Vec<Value>>,
    pub variants: Option<usize>,
}

pub fn parse_program_block(text: &str) -> Option<ProgramBlock> {
    let mut id = None;
    let mut entry = None;
    let mut source = String::new();
    let mut input = None;
    let mut variants = None;
    let mut in_source = false;
    for line in text.lines() {
        if in_source {
            if line.trim() == "END SOURCE" {
                in_source = false;
            } else {
                let (_, code) = line.split_once('|')?;
                source.push_str(code.strip_prefix(' ').unwrap_or(code));
                source.push('\n');
            }
            continue;
        }
        let t = line.trim();
        if let Some(v) = t.strip_prefix("PROGRAM ") {
            id = Some(v.trim().to_string());
        } else if let Some(v) = t.strip_prefix("ENTRY ") {
            entry = Some(v.trim().to_string());
        } else if t == "SOURCE" {
            in_source = true;
        } else if let Some(v) = t.strip_prefix("INPUT ") {
            input = match parse_literal(v).ok()? {
                Value::List(items) => Some(items.as_ref().clone()),
                _ => return None,
            };
        } else if let Some(v) = t.strip_prefix("VARIANTS ") {
            variants = v.trim().parse().ok();
        }
    }
    Some(ProgramBlock { id: id?, entry: entry?, source, input, variants })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_round_trip() {
        let p = SourceProgram::new("t@h", "h", "def f(x):\n\n    return x | 1\n", "f");
        let req = execute_request(&p, &[Value::Int(3)]);
        assert_eq!(template_role(&req.messages[0].content), Some(Role::Execute));
        let b = parse_program_block(&req.messages[1].content).unwrap();
        assert_eq!(b.source, p.text);
        assert_eq!(b.input, Some(vec![Value::Int(3)]));
        assert_eq!(b.id, "t@h");
    }
}
