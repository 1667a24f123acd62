//! Parsing of the fenced verdict block reviewers are asked to emit.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewVerdict {
    pub reviewer: String,
    /// `None` when the reply could not be parsed; counts as an abstention.
    pub verdict: Option<bool>,
    pub confidence: f64,
    pub rationale: String,
}

impl ReviewVerdict {
    pub fn abstain(reviewer: &str, rationale: &str) -> Self {
        Self {
            reviewer: reviewer.to_string(),
            verdict: None,
            confidence: 0.0,
            rationale: rationale.to_string(),
        }
    }

    pub fn is_positive(&self) -> bool {
        self.verdict == Some(true)
    }
}

/// Reads the last ```verdict block in `reply`. Prose around it is ignored.
pub fn parse_verdict(reviewer: &str, reply: &str) -> ReviewVerdict {
    let Some(block) = last_verdict_block(reply) else {
        log::warn!("reviewer {reviewer}: no verdict block, treating as abstention");
        return ReviewVerdict::abstain(reviewer, "unparseable review");
    };
    let mut verdict = None;
    let mut confidence = None;
    let mut rationale = String::new();
    for line in block.lines() {
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let value = value.trim();
        match key.trim().to_ascii_lowercase().as_str() {
            "verdict" => {
                verdict = match value.to_ascii_lowercase().as_str() {
                    "correct" | "pass" | "yes" | "true" | "1" => Some(true),
                    "incorrect" | "fail" | "no" | "false" | "0" => Some(false),
                    _ => None,
                }
            }
            "confidence" => confidence = value.parse::<f64>().ok().filter(|c| (0.0..=1.0).contains(c)),
            "rationale" => rationale = value.to_string(),
            _ => {}
        }
    }
    if verdict.is_none() {
        log::warn!("reviewer {reviewer}: verdict field missing or invalid, treating as abstention");
        return ReviewVerdict::abstain(reviewer, "unparseable review");
    }
    ReviewVerdict {
        reviewer: reviewer.to_string(),
        verdict,
        confidence: confidence.unwrap_or(0.5),
        rationale,
    }
}

fn last_verdict_block(reply: &str) -> Option<String> {
    let mut found = None;
    let mut current: Option<Vec<&str>> = None;
    for line in reply.lines() {
        let t = line.trim();
        match current.as_mut() {
            Some(body) if t.starts_with("```") => {
                found = Some(body.join("\n"));
                current = None;
            }
            Some(body) => body.push(line),
            None if t.starts_with("```") && t[3..].trim() == "verdict" => current = Some(Vec::new()),
            None => {}
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_block_inside_prose() {
        let reply = "Looks fine overall.\n```verdict\nverdict: correct\nconfidence: 0.9\nrationale: all tests pass\n```\nThanks.";
        let v = parse_verdict("Skeptic", reply);
        assert_eq!(v.verdict, Some(true));
        assert_eq!(v.confidence, 0.9);
        assert_eq!(v.rationale, "all tests pass");
    }

    #[test]
    fn missing_or_bad_block_abstains() {
        assert_eq!(parse_verdict("r", "I think it is right").verdict, None);
        assert_eq!(parse_verdict("r", "```verdict\nverdict: maybe\n```").verdict, None);
        assert_eq!(parse_verdict("r", "```verdict\nverdict: correct\n").verdict, None);
    }

    #[test]
    fn bad_confidence_defaults() {
        let v = parse_verdict("r", "```verdict\nverdict: incorrect\nconfidence: 7\n```");
        assert_eq!(v.verdict, Some(false));
        assert_eq!(v.confidence, 0.5);
    }
}
