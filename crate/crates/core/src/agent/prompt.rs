//! Prompt assembly for the four prompting strategies, and repair prompts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::task::{Granularity, TargetModule, Task};
use super::{EvalResult, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptStrategy {
    ZeroShot,
    Icl,
    Cot,
    IclCot,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 4] = [
        PromptStrategy::ZeroShot,
        PromptStrategy::Icl,
        PromptStrategy::Cot,
        PromptStrategy::IclCot,
    ];

    pub fn token(self) -> &'static str {
        match self {
            PromptStrategy::ZeroShot => "zero_shot",
            PromptStrategy::Icl => "icl",
            PromptStrategy::Cot => "cot",
            PromptStrategy::IclCot => "icl_cot",
        }
    }

    pub fn uses_exemplars(self) -> bool {
        matches!(self, PromptStrategy::Icl | PromptStrategy::IclCot)
    }

    pub fn uses_reasoning(self) -> bool {
        matches!(self, PromptStrategy::Cot | PromptStrategy::IclCot)
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for PromptStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '+'], "_");
        PromptStrategy::ALL
            .into_iter()
            .find(|p| p.token() == norm)
            .ok_or_else(|| format!("unknown strategy `{s}` (expected zero_shot, icl, cot or icl_cot)"))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("task `{0}` has no exemplars but the strategy needs them")]
    NoExemplars(String),
    #[error("architecture specification is empty")]
    EmptyArchSpec,
    #[error("cannot repair a valid candidate")]
    RepairOfValid,
}

pub const SYSTEM_PREAMBLE: &str = "\
You are an expert hardware-simulator engineer. You write small, correct \
programs that model parts of a systolic-array DNN accelerator. Follow the \
architecture specification exactly. Answer with one fenced code block that \
holds a complete, self-contained program.";

pub const REASONING_DIRECTIVE: &str = "\
Before any code, work the problem out step by step in writing: restate the \
inputs, derive every output quantity from them, and check the derivation \
against the examples when there are any. Only then give the program.";

const IO_CONTRACT: &str = "\
The program reads one input document from standard input and prints one \
output document to standard output. Both documents are `key=value` lines, in \
the order shown by the examples. Print nothing else.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub strategy: PromptStrategy,
    pub system_preamble: String,
    pub arch_spec: String,
    pub task_body: String,
    pub exemplar_block: Option<String>,
    pub reasoning_directive: Option<String>,
    pub repair_block: Option<String>,
}

impl Prompt {
    /// Everything after the preamble, which providers send as the user turn.
    pub fn user_text(&self) -> String {
        let mut parts = vec![
            format!("## Architecture specification\n\n{}", self.arch_spec.trim_end()),
            format!("## Task\n\n{}", self.task_body.trim_end()),
        ];
        if let Some(b) = &self.exemplar_block {
            parts.push(format!("## Examples\n\n{}", b.trim_end()));
        }
        if let Some(b) = &self.reasoning_directive {
            parts.push(format!("## Reasoning\n\n{}", b.trim_end()));
        }
        if let Some(b) = &self.repair_block {
            parts.push(format!("## Previous attempt\n\n{}", b.trim_end()));
        }
        parts.join("\n\n") + "\n"
    }

    pub fn render(&self) -> String {
        format!("{}\n\n{}", self.system_preamble.trim_end(), self.user_text())
    }

    pub fn digest(&self) -> String {
        super::digest(&self.render())
    }
}

fn module_name(m: TargetModule) -> &'static str {
    match m {
        TargetModule::Mapping => "mapping",
        TargetModule::Storage => "storage",
        TargetModule::Interconnect => "interconnect",
    }
}

fn granularity_name(g: Granularity) -> &'static str {
    match g {
        Granularity::Function => "function",
        Granularity::Class => "class",
        Granularity::Module => "module",
    }
}

fn with_newline(s: &str) -> String {
    if s.ends_with('\n') {
        s.to_string()
    } else {
        format!("{s}\n")
    }
}

fn exemplar_block(task: &Task) -> String {
    task.exemplars
        .iter()
        .enumerate()
        .map(|(i, e)| {
            format!(
                "Example {}\nInput:\n{}Output:\n{}",
                i + 1,
                with_newline(&e.input),
                with_newline(&e.output)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_prompt(strategy: PromptStrategy, task: &Task, arch_spec: &str) -> Result<Prompt, PromptError> {
    if arch_spec.trim().is_empty() {
        return Err(PromptError::EmptyArchSpec);
    }
    if strategy.uses_exemplars() && task.exemplars.is_empty() {
        return Err(PromptError::NoExemplars(task.task_id.clone()));
    }
    let task_body = format!(
        "{}\n\nTarget module: {}\nGranularity: {}\n\n{}",
        task.description.trim_end(),
        module_name(task.target_module),
        granularity_name(task.granularity),
        IO_CONTRACT
    );
    Ok(Prompt {
        strategy,
        system_preamble: SYSTEM_PREAMBLE.to_string(),
        arch_spec: arch_spec.to_string(),
        task_body,
        exemplar_block: strategy.uses_exemplars().then(|| exemplar_block(task)),
        reasoning_directive: strategy.uses_reasoning().then(|| REASONING_DIRECTIVE.to_string()),
        repair_block: None,
    })
}

/// A fence longer than any backtick run inside `code`.
fn fence_for(code: &str) -> String {
    let longest = code
        .split(|c| c != '`')
        .map(str::len)
        .max()
        .unwrap_or(0);
    "`".repeat(longest.max(2) + 1)
}

/// Replaces any earlier repair block with the latest candidate and its
/// diagnostics.
pub fn repair_prompt(previous: &Prompt, candidate: &str, result: &EvalResult) -> Result<Prompt, PromptError> {
    if result.verdict == Verdict::Valid {
        return Err(PromptError::RepairOfValid);
    }
    let fence = fence_for(candidate);
    let block = format!(
        "Your previous program was rejected with verdict {}.\n\n{fence}\n{}{fence}\n\nDiagnostics:\n{}\n\nFix the program so that every test passes and reply with the complete corrected program in one fenced code block.",
        result.verdict,
        with_newline(candidate),
        result.diagnostics.trim_end()
    );
    Ok(Prompt {
        repair_block: Some(block),
        ..previous.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::task::{Exemplar, TestVector};

    fn task(exemplars: usize) -> Task {
        Task {
            task_id: "t1".into(),
            description: "Compute the thing.".into(),
            target_module: TargetModule::Mapping,
            granularity: Granularity::Function,
            kernel: "fold_cycles".into(),
            exemplars: (0..exemplars)
                .map(|i| Exemplar { input: format!("x={i}\n"), output: format!("y={i}\n") })
                .collect(),
            test_vectors: vec![TestVector { input: "x=9\n".into(), expected: "y=9\n".into() }],
        }
    }

    #[test]
    fn zero_shot_has_no_optional_blocks() {
        let p = build_prompt(PromptStrategy::ZeroShot, &task(2), "ARCH SPEC").unwrap();
        let text = p.render();
        assert!(text.contains("ARCH SPEC") && text.contains("Compute the thing."));
        assert!(!text.contains("## Examples") && !text.contains("## Reasoning"));
        assert!(!text.contains("## Previous attempt"));
    }

    #[test]
    fn icl_lists_exemplars_in_order() {
        let p = build_prompt(PromptStrategy::Icl, &task(2), "A").unwrap();
        let block = p.exemplar_block.as_deref().unwrap();
        let first = block.find("x=0").unwrap();
        let second = block.find("x=1").unwrap();
        assert!(first < second);
        assert!(p.reasoning_directive.is_none());
    }

    #[test]
    fn icl_needs_exemplars() {
        for s in [PromptStrategy::Icl, PromptStrategy::IclCot] {
            assert_eq!(build_prompt(s, &task(0), "A"), Err(PromptError::NoExemplars("t1".into())));
        }
        assert!(build_prompt(PromptStrategy::Cot, &task(0), "A").is_ok());
        assert_eq!(build_prompt(PromptStrategy::Cot, &task(0), "  \n"), Err(PromptError::EmptyArchSpec));
    }

    #[test]
    fn repair_keeps_only_latest_candidate() {
        let p = build_prompt(PromptStrategy::IclCot, &task(1), "A").unwrap();
        let r1 = repair_prompt(&p, "first()", &EvalResult::fail(Verdict::WrongOutput, "diag one")).unwrap();
        let r2 = repair_prompt(&r1, "second()", &EvalResult::fail(Verdict::RuntimeError, "diag two")).unwrap();
        let text = r2.render();
        assert!(text.contains("second()") && text.contains("diag two"));
        assert!(!text.contains("first()") && !text.contains("diag one"));
        assert_eq!(r2.exemplar_block, p.exemplar_block);
        assert_eq!(r2.reasoning_directive, p.reasoning_directive);
    }

    #[test]
    fn repair_of_valid_rejected() {
        let p = build_prompt(PromptStrategy::ZeroShot, &task(0), "A").unwrap();
        assert_eq!(repair_prompt(&p, "x", &EvalResult::valid()), Err(PromptError::RepairOfValid));
    }

    #[test]
    fn fence_outgrows_backticks() {
        assert_eq!(fence_for("plain"), "```");
        assert_eq!(fence_for("a ```` b"), "`````");
    }

    #[test]
    fn strategy_tokens() {
        for s in PromptStrategy::ALL {
            assert_eq!(s.token().parse::<PromptStrategy>().unwrap(), s);
        }
        assert_eq!("ICL+CoT".parse::<PromptStrategy>().unwrap(), PromptStrategy::IclCot);
        assert!("fancy".parse::<PromptStrategy>().is_err());
    }
}
