//! The generate, evaluate, repair loop for a single task, and a driver that
//! runs many tasks concurrently.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use super::prompt::{build_prompt, repair_prompt, PromptError, PromptStrategy};
use super::provider::{extract_code, transcript_path, Provider, RequestContext, Transcript};
use super::sandbox::{evaluate_with_outputs, SandboxError, SandboxProfile};
use super::task::Task;
use super::{digest, AttemptLog, AttemptRecord, EvalResult, Verdict};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("attempt budget must be at least 1")]
    ZeroBudget,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub strategy: PromptStrategy,
    pub budget: u32,
    pub arch_spec: String,
    pub profile: SandboxProfile,
    /// Where transcripts and accepted solutions go; nothing is written when
    /// unset.
    pub archive_dir: Option<PathBuf>,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn write(path: &Path, contents: &str) -> Result<(), AgentError> {
    let io = |source| AgentError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}

/// Runs one task's repair chain until a candidate is valid or the budget is
/// spent. A provider failure ends the chain early and is noted in the log.
pub fn run_task(task: &Task, provider: &dyn Provider, opts: &RunOptions) -> Result<AttemptLog, AgentError> {
    if opts.budget == 0 {
        return Err(AgentError::ZeroBudget);
    }
    let mut prompt = build_prompt(opts.strategy, task, &opts.arch_spec)?;
    let mut attempts: Vec<AttemptRecord> = Vec::new();
    let mut last: Option<(String, EvalResult)> = None;
    let mut aborted = None;

    for attempt in 1..=opts.budget {
        if let Some((candidate, result)) = &last {
            prompt = repair_prompt(&prompt, candidate, result)?;
        }
        let ctx = RequestContext { task_id: &task.task_id, attempt };
        let started = now_ms();
        let raw = match provider.complete(&ctx, &prompt) {
            Ok(raw) => raw,
            Err(e) => {
                log::warn!("task {} attempt {attempt}: {e}", task.task_id);
                aborted = Some(e.to_string());
                break;
            }
        };
        if let Some(dir) = &opts.archive_dir {
            let t = Transcript {
                task_id: task.task_id.clone(),
                attempt,
                strategy: opts.strategy.token().to_string(),
                prompt: prompt.render(),
                prompt_digest: prompt.digest(),
                completion: raw.clone(),
                started_unix_ms: started,
                finished_unix_ms: now_ms(),
            };
            let json = serde_json::to_string_pretty(&t).expect("transcript serializes") + "\n";
            write(&transcript_path(dir, &task.task_id, attempt), &json)?;
        }

        let (candidate, eval) = match extract_code(&raw) {
            Ok(code) => {
                let e = evaluate_with_outputs(&code, task, &opts.profile)?;
                (code, e)
            }
            Err(e) => (
                raw.clone(),
                super::sandbox::Evaluation {
                    result: EvalResult::fail(Verdict::SyntaxError, e.to_string()),
                    outputs: vec![],
                },
            ),
        };
        log::info!("task {} attempt {attempt}: {}", task.task_id, eval.result.verdict);
        attempts.push(AttemptRecord {
            prompt_digest: prompt.digest(),
            candidate_digest: digest(&candidate),
            result: eval.result.clone(),
        });

        if eval.result.is_valid() {
            if let Some(dir) = &opts.archive_dir {
                let base = dir.join(&task.task_id);
                write(&base.join(format!("solution.{}", opts.profile.extension)), &candidate)?;
                let outputs: String = eval
                    .outputs
                    .iter()
                    .enumerate()
                    .map(|(i, o)| format!("# vector {}\n{}", i + 1, o))
                    .collect();
                write(&base.join("outputs.txt"), &outputs)?;
            }
            break;
        }
        last = Some((candidate, eval.result));
    }

    let succeeded = attempts.last().is_some_and(|a| a.result.is_valid());
    Ok(AttemptLog {
        task_id: task.task_id.clone(),
        budget: opts.budget,
        attempts_used: attempts.len() as u32,
        attempts,
        succeeded,
        aborted,
    })
}

/// Runs every task, up to `jobs` at a time. Logs come back sorted by task id.
pub fn run_tasks(tasks: &[Task], provider: &dyn Provider, opts: &RunOptions, jobs: usize) -> Result<Vec<AttemptLog>, AgentError> {
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(tasks.len()));
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, tasks.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = tasks.get(i) else { break };
                let r = run_task(task, provider, opts);
                let failed = r.is_err();
                results.lock().unwrap().push(r);
                if failed {
                    next.store(tasks.len(), Ordering::SeqCst);
                }
            });
        }
    });
    let mut logs = results.into_inner().unwrap().into_iter().collect::<Result<Vec<_>, _>>()?;
    logs.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::provider::ScriptedProvider;
    use crate::agent::task::{Granularity, TargetModule, TestVector};
    use std::collections::HashMap;

    const GOOD: &str = "```python\nimport sys\nx = int(sys.stdin.read().split('=')[1])\nprint(f'y={x + 1}')\n```\n";
    const BAD: &str = "```python\nprint('y=0')\n```\n";

    fn task(id: &str) -> Task {
        Task {
            task_id: id.into(),
            description: "Add one.".into(),
            target_module: TargetModule::Mapping,
            granularity: Granularity::Function,
            kernel: "fold_cycles".into(),
            exemplars: vec![],
            test_vectors: vec![TestVector { input: "x=1\n".into(), expected: "y=2\n".into() }],
        }
    }

    fn opts(budget: u32, archive: Option<PathBuf>) -> RunOptions {
        RunOptions {
            strategy: PromptStrategy::ZeroShot,
            budget,
            arch_spec: "spec".into(),
            profile: SandboxProfile { cpu_seconds: 5, ..SandboxProfile::python3() },
            archive_dir: archive,
        }
    }

    fn script(id: &str, failures: usize) -> ScriptedProvider {
        let mut s = vec![BAD.to_string(); failures];
        s.push(GOOD.to_string());
        ScriptedProvider::new(HashMap::from([(id.to_string(), s)]))
    }

    #[test]
    fn first_attempt_success() {
        let p = script("a", 0);
        let log = run_task(&task("a"), &p, &opts(5, None)).unwrap();
        assert!(log.succeeded);
        assert_eq!(log.attempts_used, 1);
        assert!(log.check().is_ok());
    }

    #[test]
    fn repairs_until_valid() {
        let p = script("a", 3);
        let log = run_task(&task("a"), &p, &opts(5, None)).unwrap();
        assert!(log.succeeded);
        assert_eq!((log.attempts_used, p.calls()), (4, 4));
        assert!(log.attempts[..3].iter().all(|a| a.result.verdict == Verdict::WrongOutput));
        assert!(log.check().is_ok());
    }

    #[test]
    fn budget_exhausted() {
        let p = script("a", 9);
        let log = run_task(&task("a"), &p, &opts(5, None)).unwrap();
        assert!(!log.succeeded);
        assert_eq!((log.attempts_used, p.calls()), (5, 5));
    }

    #[test]
    fn provider_failure_aborts() {
        let p = ScriptedProvider::new(HashMap::from([("a".to_string(), vec![BAD.to_string()])]));
        let log = run_task(&task("a"), &p, &opts(3, None)).unwrap();
        assert!(!log.succeeded);
        assert_eq!(log.attempts_used, 1);
        assert!(log.aborted.as_deref().unwrap().contains("attempt 2"));
        assert!(log.check().is_ok());
    }

    #[test]
    fn archives_transcripts_and_solution() {
        let dir = tempfile::tempdir().unwrap();
        let p = script("a", 1);
        run_task(&task("a"), &p, &opts(5, Some(dir.path().to_path_buf()))).unwrap();
        let base = dir.path().join("a");
        assert!(base.join("attempt_1.json").is_file());
        assert!(base.join("attempt_2.json").is_file());
        assert!(!base.join("attempt_3.json").exists());
        assert!(std::fs::read_to_string(base.join("solution.py")).unwrap().contains("x + 1"));
        assert_eq!(std::fs::read_to_string(base.join("outputs.txt")).unwrap(), "# vector 1\ny=2\n");
        let t: Transcript = serde_json::from_str(&std::fs::read_to_string(base.join("attempt_2.json")).unwrap()).unwrap();
        assert!(t.prompt.contains("## Previous attempt"));
    }

    #[test]
    fn many_tasks_sorted() {
        let mut scripts = HashMap::new();
        for id in ["c", "a", "b"] {
            scripts.insert(id.to_string(), vec![GOOD.to_string()]);
        }
        let p = ScriptedProvider::new(scripts);
        let tasks = vec![task("c"), task("a"), task("b")];
        let logs = run_tasks(&tasks, &p, &opts(2, None), 3).unwrap();
        let ids: Vec<_> = logs.iter().map(|l| l.task_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }
}
