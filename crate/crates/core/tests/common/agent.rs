use std::collections::HashMap;
use std::path::{Path, PathBuf};

use simcoder_core::agent::provider::ScriptedProvider;
use simcoder_core::agent::{run_task, Granularity, PromptStrategy, RunOptions, SandboxProfile, TargetModule, Task, TestVector};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden_path(strategy: PromptStrategy) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("tests/golden/prompt_{}.txt", strategy.token()))
}

pub fn sample_task() -> Task {
    Task::load(&fixtures().join("sample_task.json")).unwrap()
}

pub fn sample_arch_spec() -> String {
    std::fs::read_to_string(fixtures().join("arch_spec.md")).unwrap()
}

pub fn sandbox_fixture(name: &str) -> String {
    std::fs::read_to_string(fixtures().join("sandbox").join(name)).unwrap()
}

/// Shell profile; much cheaper to start than an interpreter when only the
/// loop control is under test.
pub fn sh_profile() -> SandboxProfile {
    SandboxProfile {
        extension: "sh".into(),
        compile: None,
        run: vec!["sh".into(), "{src}".into()],
        cpu_seconds: 5,
        memory_mib: 256,
        wall_seconds: None,
    }
}

pub const SH_GOOD: &str = "```sh\nread x\necho \"y=2\"\n```\n";
pub const SH_BAD: &str = "```sh\necho \"y=0\"\n```\n";

pub fn echo_task(id: &str) -> Task {
    Task {
        task_id: id.into(),
        description: "Print y=2.".into(),
        target_module: TargetModule::Mapping,
        granularity: Granularity::Function,
        kernel: "fold_cycles".into(),
        exemplars: vec![],
        test_vectors: vec![TestVector { input: "x=1\n".into(), expected: "y=2\n".into() }],
    }
}

pub fn options(budget: u32, profile: SandboxProfile, archive: Option<PathBuf>) -> RunOptions {
    RunOptions {
        strategy: PromptStrategy::ZeroShot,
        budget,
        arch_spec: "Print y=2.".into(),
        profile,
        archive_dir: archive,
    }
}

/// Runs `f` failing completions followed by a passing one under `budget`;
/// returns whether the task succeeded and how often the provider was called.
pub fn loop_law_case(failures: usize, budget: u32) -> (bool, usize, u32) {
    let mut script = vec![SH_BAD.to_string(); failures];
    script.push(SH_GOOD.to_string());
    let provider = ScriptedProvider::new(HashMap::from([("t".to_string(), script)]));
    let log = run_task(&echo_task("t"), &provider, &options(budget, sh_profile(), None)).unwrap();
    log.check().unwrap();
    (log.succeeded, provider.calls(), log.attempts_used)
}
