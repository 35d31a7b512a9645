mod common;

use std::collections::HashMap;

use common::agent::*;
use proptest::prelude::*;
use simcoder_core::agent::prompt::REASONING_DIRECTIVE;
use simcoder_core::agent::provider::{ReplayProvider, ScriptedProvider};
use simcoder_core::agent::{
    build_prompt, evaluate, pass_at_k, run_task, AttemptLog, PromptStrategy, SandboxProfile, Verdict,
};

#[test]
fn prompts_match_goldens() {
    let task = sample_task();
    let spec = sample_arch_spec();
    let update = std::env::var_os("SIMCODER_UPDATE_GOLDENS").is_some();
    for s in PromptStrategy::ALL {
        let text = build_prompt(s, &task, &spec).unwrap().render();
        let path = golden_path(s);
        if update {
            std::fs::write(&path, &text).unwrap();
        }
        let golden = std::fs::read_to_string(&path).unwrap();
        assert!(golden == text, "{} differs from the rendered {} prompt", path.display(), s.token());
    }
}

#[test]
fn prompts_contain_only_their_blocks() {
    let task = sample_task();
    let spec = sample_arch_spec();
    for s in PromptStrategy::ALL {
        let text = build_prompt(s, &task, &spec).unwrap().render();
        let has_examples = text.contains("## Examples") && task.exemplars.iter().all(|e| text.contains(&e.input));
        let has_reasoning = text.contains("## Reasoning") && text.contains(REASONING_DIRECTIVE);
        assert_eq!(has_examples, s.uses_exemplars(), "{}", s.token());
        assert_eq!(has_reasoning, s.uses_reasoning(), "{}", s.token());
        assert!(!text.contains("## Examples") || s.uses_exemplars());
        assert!(!text.contains("## Reasoning") || s.uses_reasoning());
        assert!(!text.contains("## Previous attempt"));
        assert!(text.contains(spec.trim_end()) && text.contains(&task.description));
        for v in &task.test_vectors {
            assert!(!text.contains(&v.expected), "expected outputs leak into the {} prompt", s.token());
        }
    }
}

fn python(cpu: u64, mem: u64) -> SandboxProfile {
    SandboxProfile {
        cpu_seconds: cpu,
        memory_mib: mem,
        wall_seconds: Some(cpu + 3),
        ..SandboxProfile::python3()
    }
}

#[test]
fn sandbox_contains_fault_injection() {
    let task = sample_task();
    let spin = evaluate(&sandbox_fixture("spin.py"), &task, &python(1, 256)).unwrap();
    assert_eq!(spin.verdict, Verdict::Timeout, "{}", spin.diagnostics);
    let hog = evaluate(&sandbox_fixture("hog.py"), &task, &python(10, 128)).unwrap();
    assert_eq!(hog.verdict, Verdict::RuntimeError, "{}", hog.diagnostics);
    let bad = evaluate(&sandbox_fixture("malformed.py"), &task, &python(5, 256)).unwrap();
    assert_eq!(bad.verdict, Verdict::WrongOutput, "{}", bad.diagnostics);
    let solution = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../bench/solutions/interconnect-fold-cycles.py")).unwrap();
    assert!(evaluate(&solution, &task, &python(5, 256)).unwrap().is_valid());
}

#[test]
fn replay_reproduces_attempt_log() {
    let dir = tempfile::tempdir().unwrap();
    let script = vec![SH_BAD.to_string(), SH_BAD.to_string(), SH_GOOD.to_string()];
    let live = ScriptedProvider::new(HashMap::from([("t".to_string(), script)]));
    let first = run_task(&echo_task("t"), &live, &options(4, sh_profile(), Some(dir.path().to_path_buf()))).unwrap();
    let replay = ReplayProvider::new(dir.path()).unwrap();
    let second = run_task(&echo_task("t"), &replay, &options(4, sh_profile(), None)).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.attempts_used, 3);
}

fn corpus() -> impl Strategy<Value = Vec<AttemptLog>> {
    prop::collection::vec((1..=8u32, proptest::option::of(1..=8u32)), 1..40).prop_map(|entries| {
        entries
            .into_iter()
            .enumerate()
            .map(|(i, (budget, success))| {
                let success = success.filter(|&s| s <= budget);
                AttemptLog {
                    task_id: format!("t{i}"),
                    budget,
                    attempts: vec![],
                    succeeded: success.is_some(),
                    attempts_used: success.unwrap_or(budget),
                    aborted: None,
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loop_law(f in 0..=10usize, budget in 1..=6u32) {
        let (succeeded, calls, used) = loop_law_case(f, budget);
        prop_assert_eq!(succeeded, f < budget as usize);
        prop_assert_eq!(calls, (f + 1).min(budget as usize));
        prop_assert_eq!(used as usize, calls);
    }
}

proptest! {
    #[test]
    fn pass_at_k_non_decreasing(logs in corpus(), k in 1..=8u32, extra in 0..=4u32) {
        let a = pass_at_k(&logs, k).unwrap();
        let b = pass_at_k(&logs, k + extra).unwrap();
        prop_assert!(a.c <= b.c);
        prop_assert!(a.percent() <= b.percent());
        prop_assert!(b.c <= b.n && b.n == logs.len() as u64);
    }
}
