//! Message templates for proposers, reviewers and the synthesizer.

use serde::{Deserialize, Serialize};

use super::verdict::ReviewVerdict;
use super::Message;
use crate::exec::ExecutionReport;

/// Default per-field cap, in bytes, before content is truncated with a marker.
pub const DEFAULT_FIELD_CAP: usize = 16 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Role {
    pub name: String,
    pub instruction: String,
}

impl Role {
    pub fn new(name: &str, instruction: &str) -> Self {
        Self {
            name: name.to_string(),
            instruction: instruction.to_string(),
        }
    }
}

/// Minimalist, Skeptic and Explorer.
pub fn default_roles() -> Vec<Role> {
    vec![
        Role::new("Minimalist", "Solve with fewest steps. Prioritize simplicity."),
        Role::new("Skeptic", "Verify each step. Prioritize correctness."),
        Role::new("Explorer", "Avoid the obvious. Try unconventional methods."),
    ]
}

/// Cuts `text` to at most `cap` bytes on a char boundary and says so.
pub fn truncate(text: &str, cap: usize) -> String {
    if text.len() <= cap {
        return text.to_string();
    }
    let mut end = cap;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}\n[truncated {} bytes]", &text[..end], text.len() - end)
}

pub fn render_role_prompt(role: &Role, task: &str) -> Vec<Message> {
    vec![
        Message::system(format!(
            "You are the {} solver. {}\nReturn one complete solution. Put the program in a single fenced code block.",
            role.name, role.instruction
        )),
        Message::user(format!("Task:\n{task}")),
    ]
}

/// Looks up `name` among `roles`.
pub fn find_role<'a>(roles: &'a [Role], name: &str) -> Option<&'a Role> {
    roles.iter().find(|r| r.name == name)
}

fn render_report(report: &ExecutionReport, cap: usize) -> String {
    let passed = report.tests.iter().filter(|&&t| t).count();
    let total = report.tests.len();
    let mut out = String::new();
    if report.success && passed == total {
        out.push_str(&format!("Execution succeeded. All {total} tests passed.\n"));
    } else {
        let vector: Vec<&str> = report.tests.iter().map(|&t| if t { "pass" } else { "fail" }).collect();
        out.push_str(&format!(
            "Execution failed. {passed} of {total} tests passed: [{}]\n",
            vector.join(", ")
        ));
    }
    out.push_str(&format!("Output:\n{}\n", truncate(&report.output, cap)));
    if !report.error.is_empty() {
        out.push_str(&format!("Error:\n{}\n", truncate(&report.error, cap)));
    }
    out
}

const VERDICT_CONTRACT: &str = "End your reply with a fenced block in exactly this form:\n```verdict\nverdict: correct | incorrect\nconfidence: <number between 0 and 1>\nrationale: <one line naming the failing step, or why it is sound>\n```";

pub fn render_review_prompt(
    reviewer: &Role,
    task: &str,
    candidate: &str,
    report: Option<&ExecutionReport>,
    cap: usize,
) -> Vec<Message> {
    let evidence = report.map_or_else(
        || "No execution evidence is available.\n".to_string(),
        |r| render_report(r, cap),
    );
    vec![
        Message::system(format!(
            "You are the {} reviewer. {}\nJudge the candidate from the execution evidence, not from its style.\n{VERDICT_CONTRACT}",
            reviewer.name, reviewer.instruction
        )),
        Message::user(format!(
            "Task:\n{task}\n\nCandidate:\n```\n{}\n```\n\nExecution report:\n{}",
            truncate(candidate.trim_end(), cap),
            evidence
        )),
    ]
}

/// One proposal with everything learned about it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisEntry<'a> {
    pub role: &'a str,
    pub candidate: &'a str,
    pub report: Option<&'a ExecutionReport>,
    pub reviews: &'a [ReviewVerdict],
}

/// A previous synthesis and the error trace it produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorAttempt<'a> {
    pub candidate: &'a str,
    pub error: &'a str,
}

pub fn render_synthesis_prompt(
    task: &str,
    entries: &[SynthesisEntry<'_>],
    prior: Option<PriorAttempt<'_>>,
    cap: usize,
) -> Vec<Message> {
    let mut body = format!("Task:\n{task}\n");
    for (i, e) in entries.iter().enumerate() {
        body.push_str(&format!(
            "\nCandidate {} ({}):\n```\n{}\n```\n",
            i + 1,
            e.role,
            truncate(e.candidate.trim_end(), cap)
        ));
        match e.report {
            Some(r) => body.push_str(&render_report(r, cap)),
            None => body.push_str("Not executed.\n"),
        }
        for r in e.reviews {
            let verdict = match r.verdict {
                Some(true) => "correct",
                Some(false) => "incorrect",
                None => "abstained",
            };
            body.push_str(&format!(
                "Review by {}: {verdict} (confidence {:.2}): {}\n",
                r.reviewer,
                r.confidence,
                truncate(&r.rationale, cap)
            ));
        }
    }
    if let Some(p) = prior {
        body.push_str(&format!(
            "\nPrevious attempt:\n```\n{}\n```\nIt failed with:\n{}\nFix the failure while keeping the parts that passed.\n",
            truncate(p.candidate.trim_end(), cap),
            truncate(p.error, cap)
        ));
    }
    vec![
        Message::system(
            "You are the synthesizer. Combine the validated parts of the candidates into one solution, \
             taking each step from a candidate whose evidence supports it. \
             Return the program in a single fenced code block.",
        ),
        Message::user(body),
    ]
}
