//! Code-generation agent: prompt construction, candidate generation,
//! sandboxed evaluation, feedback repair and pass@k scoring.

pub mod prompt;
pub mod provider;
pub mod runner;
pub mod sandbox;
pub mod scoring;
pub mod task;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use prompt::{build_prompt, repair_prompt, Prompt, PromptError, PromptStrategy};
pub use provider::{generate, Generation, GenerateError, Provider, ProviderError, RequestContext};
pub use runner::{run_task, run_tasks, AgentError, RunOptions};
pub use sandbox::{evaluate, SandboxError, SandboxProfile};
pub use scoring::{pass_at_k, PassAtKReport, ScoringError};
pub use task::{Granularity, Task, TargetModule, TestVector};

/// Default attempt budget per task.
pub const DEFAULT_BUDGET: u32 = 5;

/// Hex SHA-256 of `text`.
pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    SyntaxError,
    RuntimeError,
    WrongOutput,
    Timeout,
    Valid,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::SyntaxError => "SYNTAX_ERROR",
            Verdict::RuntimeError => "RUNTIME_ERROR",
            Verdict::WrongOutput => "WRONG_OUTPUT",
            Verdict::Timeout => "TIMEOUT",
            Verdict::Valid => "VALID",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalResult {
    pub verdict: Verdict,
    /// Empty exactly when the verdict is `VALID`.
    pub diagnostics: String,
}

impl EvalResult {
    pub fn valid() -> Self {
        EvalResult {
            verdict: Verdict::Valid,
            diagnostics: String::new(),
        }
    }

    pub fn fail(verdict: Verdict, diagnostics: impl Into<String>) -> Self {
        assert_ne!(verdict, Verdict::Valid);
        let mut diagnostics = diagnostics.into();
        if diagnostics.is_empty() {
            diagnostics = verdict.to_string();
        }
        EvalResult { verdict, diagnostics }
    }

    pub fn is_valid(&self) -> bool {
        self.verdict == Verdict::Valid
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub prompt_digest: String,
    pub candidate_digest: String,
    pub result: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub task_id: String,
    pub budget: u32,
    pub attempts: Vec<AttemptRecord>,
    pub succeeded: bool,
    pub attempts_used: u32,
    /// Set when the provider failed and the chain stopped early.
    pub aborted: Option<String>,
}

impl AttemptLog {
    /// Checks the structural invariants of a finished log.
    pub fn check(&self) -> Result<(), String> {
        if self.attempts_used as usize != self.attempts.len() {
            return Err("attempts_used disagrees with the attempt list".into());
        }
        if self.attempts_used > self.budget {
            return Err("attempt budget exceeded".into());
        }
        let last_valid = self.attempts.last().is_some_and(|a| a.result.is_valid());
        if self.succeeded != last_valid {
            return Err("succeeded must match the last verdict".into());
        }
        if let Some((_, earlier)) = self.attempts.split_last() {
            if earlier.iter().any(|a| a.result.is_valid()) {
                return Err("a non-final attempt was valid".into());
            }
        }
        Ok(())
    }
}
