//! Compiles and runs candidate programs in resource-limited subprocesses.
//!
//! Each candidate gets a fresh temporary directory, an empty environment
//! apart from `PATH`, its own session (so a timeout kills the whole process
//! group), and CPU-time and address-space limits.

use std::io::{Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use super::task::{normalize, Task};
use super::{EvalResult, Verdict};

const OUTPUT_CAP: usize = 1 << 20;
const DIAG_CAP: usize = 4000;

fn default_cpu() -> u64 {
    30
}
fn default_mem() -> u64 {
    512
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxProfile {
    /// File extension of the candidate source, without the dot.
    pub extension: String,
    /// Syntax-check command; `{src}` and `{dir}` are substituted.
    #[serde(default)]
    pub compile: Option<Vec<String>>,
    /// Run command, same placeholders.
    pub run: Vec<String>,
    #[serde(default = "default_cpu")]
    pub cpu_seconds: u64,
    #[serde(default = "default_mem")]
    pub memory_mib: u64,
    /// Wall-clock limit per process; defaults to twice the CPU limit plus 5 s.
    #[serde(default)]
    pub wall_seconds: Option<u64>,
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error("sandbox profile: {0}")]
    Profile(String),
}

impl SandboxProfile {
    pub fn parse(text: &str) -> Result<Self, SandboxError> {
        let p: SandboxProfile = toml::from_str(text).map_err(|e| SandboxError::Profile(e.to_string()))?;
        if p.run.is_empty() {
            return Err(SandboxError::Profile("`run` must name a program".into()));
        }
        if p.compile.as_ref().is_some_and(|c| c.is_empty()) {
            return Err(SandboxError::Profile("`compile` must name a program".into()));
        }
        if p.cpu_seconds == 0 || p.memory_mib == 0 {
            return Err(SandboxError::Profile("limits must be positive".into()));
        }
        Ok(p)
    }

    /// Python 3 profile used by the bundled corpus.
    pub fn python3() -> Self {
        SandboxProfile {
            extension: "py".into(),
            compile: Some(vec!["python3".into(), "-m".into(), "py_compile".into(), "{src}".into()]),
            run: vec!["python3".into(), "{src}".into()],
            cpu_seconds: default_cpu(),
            memory_mib: default_mem(),
            wall_seconds: None,
        }
    }

    fn wall(&self) -> Duration {
        Duration::from_secs(self.wall_seconds.unwrap_or(2 * self.cpu_seconds + 5))
    }
}

struct Outcome {
    status: ExitStatus,
    timed_out: bool,
    stdout: String,
    stderr: String,
}

fn drain(mut r: impl Read) -> String {
    let mut kept = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        match r.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                let room = OUTPUT_CAP.saturating_sub(kept.len());
                kept.extend_from_slice(&buf[..n.min(room)]);
            }
        }
    }
    String::from_utf8_lossy(&kept).into_owned()
}

fn run_limited(argv: &[String], dir: &Path, stdin: &str, profile: &SandboxProfile) -> Result<Outcome, SandboxError> {
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .current_dir(dir)
        .env_clear()
        .env("PATH", std::env::var_os("PATH").unwrap_or_else(|| "/usr/local/bin:/usr/bin:/bin".into()))
        .env("LC_ALL", "C.UTF-8")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let cpu = profile.cpu_seconds as libc::rlim_t;
    let mem = (profile.memory_mib as libc::rlim_t).saturating_mul(1 << 20);
    // SAFETY: only async-signal-safe libc calls run between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            let lim = |resource, soft: libc::rlim_t, hard: libc::rlim_t| {
                let r = libc::rlimit { rlim_cur: soft, rlim_max: hard };
                if libc::setrlimit(resource, &r) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                Ok(())
            };
            if libc::setsid() < 0 {
                return Err(std::io::Error::last_os_error());
            }
            lim(libc::RLIMIT_CPU, cpu, cpu + 1)?;
            lim(libc::RLIMIT_AS, mem, mem)?;
            lim(libc::RLIMIT_CORE, 0, 0)?;
            Ok(())
        });
    }
    let mut child = cmd.spawn().map_err(|e| {
        SandboxError::SandboxUnavailable(format!("cannot start `{}`: {e}", argv[0]))
    })?;

    let mut child_in = child.stdin.take().unwrap();
    let input = stdin.to_string();
    let writer = std::thread::spawn(move || {
        let _ = child_in.write_all(input.as_bytes());
    });
    let out = child.stdout.take().unwrap();
    let err = child.stderr.take().unwrap();
    let out_t = std::thread::spawn(move || drain(out));
    let err_t = std::thread::spawn(move || drain(err));

    let wait_err = |e: std::io::Error| SandboxError::SandboxUnavailable(format!("waiting for candidate: {e}"));
    let (status, timed_out) = match child.wait_timeout(profile.wall()).map_err(wait_err)? {
        Some(s) => (s, false),
        None => {
            // SAFETY: the child leads its own process group.
            unsafe {
                libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
            }
            (child.wait().map_err(wait_err)?, true)
        }
    };
    let _ = writer.join();
    Ok(Outcome {
        status,
        timed_out,
        stdout: out_t.join().unwrap_or_default(),
        stderr: err_t.join().unwrap_or_default(),
    })
}

fn substitute(template: &[String], src: &Path, dir: &Path) -> Vec<String> {
    template
        .iter()
        .map(|a| {
            a.replace("{src}", &src.to_string_lossy())
                .replace("{dir}", &dir.to_string_lossy())
        })
        .collect()
}

fn tail(s: &str) -> &str {
    let s = s.trim_end();
    if s.len() <= DIAG_CAP {
        return s;
    }
    let mut start = s.len() - DIAG_CAP;
    while !s.is_char_boundary(start) {
        start += 1;
    }
    &s[start..]
}

fn hit_cpu_limit(status: &ExitStatus) -> bool {
    matches!(status.signal(), Some(libc::SIGXCPU) | Some(libc::SIGKILL))
}

fn describe(status: &ExitStatus) -> String {
    match (status.code(), status.signal()) {
        (Some(c), _) => format!("exit status {c}"),
        (None, Some(s)) => format!("killed by signal {s}"),
        _ => "abnormal termination".into(),
    }
}

/// Result of evaluating a candidate, with the outputs it printed for every
/// vector it got through.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub result: EvalResult,
    pub outputs: Vec<String>,
}

pub fn evaluate(candidate: &str, task: &Task, profile: &SandboxProfile) -> Result<EvalResult, SandboxError> {
    evaluate_with_outputs(candidate, task, profile).map(|e| e.result)
}

pub fn evaluate_with_outputs(candidate: &str, task: &Task, profile: &SandboxProfile) -> Result<Evaluation, SandboxError> {
    let dir = tempfile::Builder::new()
        .prefix("simcoder-sandbox-")
        .tempdir()
        .map_err(|e| SandboxError::SandboxUnavailable(format!("cannot create work directory: {e}")))?;
    let src = dir.path().join(format!("candidate.{}", profile.extension));
    std::fs::write(&src, candidate)
        .map_err(|e| SandboxError::SandboxUnavailable(format!("cannot write candidate: {e}")))?;
    let mut outputs = Vec::new();
    let done = |result, outputs| Ok(Evaluation { result, outputs });

    if candidate.trim().is_empty() {
        return done(EvalResult::fail(Verdict::SyntaxError, "candidate is empty"), outputs);
    }

    if let Some(compile) = &profile.compile {
        let o = run_limited(&substitute(compile, &src, dir.path()), dir.path(), "", profile)?;
        if o.timed_out || !o.status.success() {
            let mut msg = format!("syntax check failed ({})", describe(&o.status));
            for s in [&o.stderr, &o.stdout] {
                if !s.trim().is_empty() {
                    msg.push('\n');
                    msg.push_str(tail(s));
                }
            }
            return done(EvalResult::fail(Verdict::SyntaxError, msg), outputs);
        }
    }

    let argv = substitute(&profile.run, &src, dir.path());
    for (i, v) in task.test_vectors.iter().enumerate() {
        let k = i + 1;
        let o = run_limited(&argv, dir.path(), &v.input, profile)?;
        if o.timed_out || (!o.status.success() && hit_cpu_limit(&o.status)) {
            let why = if o.timed_out {
                format!("wall-clock limit of {}s", profile.wall().as_secs())
            } else {
                format!("CPU limit of {}s", profile.cpu_seconds)
            };
            return done(EvalResult::fail(Verdict::Timeout, format!("test vector {k}: exceeded the {why}")), outputs);
        }
        if !o.status.success() {
            let mut msg = format!("test vector {k}: {}", describe(&o.status));
            if !o.stderr.trim().is_empty() {
                msg.push_str("\nstderr:\n");
                msg.push_str(tail(&o.stderr));
            }
            return done(EvalResult::fail(Verdict::RuntimeError, msg), outputs);
        }
        let actual = normalize(&o.stdout);
        if let Some(line) = actual.iter().find(|l| !l.contains('=')) {
            let msg = format!("test vector {k}: malformed output line `{line}` (expected key=value)");
            return done(EvalResult::fail(Verdict::WrongOutput, msg), outputs);
        }
        if actual != normalize(&v.expected) {
            let msg = format!(
                "test vector {k}: output mismatch\ninput:\n{}\nexpected:\n{}\nactual:\n{}",
                v.input.trim_end(),
                v.expected.trim_end(),
                tail(&o.stdout)
            );
            return done(EvalResult::fail(Verdict::WrongOutput, msg), outputs);
        }
        outputs.push(o.stdout);
    }
    done(EvalResult::valid(), outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::task::{Granularity, TargetModule, TestVector};

    fn task(vectors: &[(&str, &str)]) -> Task {
        Task {
            task_id: "t".into(),
            description: "d".into(),
            target_module: TargetModule::Mapping,
            granularity: Granularity::Function,
            kernel: "fold_cycles".into(),
            exemplars: vec![],
            test_vectors: vectors
                .iter()
                .map(|(i, e)| TestVector { input: i.to_string(), expected: e.to_string() })
                .collect(),
        }
    }

    fn profile() -> SandboxProfile {
        SandboxProfile {
            cpu_seconds: 2,
            memory_mib: 256,
            wall_seconds: Some(4),
            ..SandboxProfile::python3()
        }
    }

    const ECHO_DOUBLE: &str = "import sys\nx = int(sys.stdin.read().split('=')[1])\nprint(f'y={2*x}')\n";

    #[test]
    fn valid_candidate() {
        let r = evaluate(ECHO_DOUBLE, &task(&[("x=2", "y=4"), ("x=5", "y=10\n")]), &profile()).unwrap();
        assert_eq!(r, EvalResult::valid());
    }

    #[test]
    fn second_vector_wrong() {
        let r = evaluate(ECHO_DOUBLE, &task(&[("x=2", "y=4"), ("x=5", "y=11")]), &profile()).unwrap();
        assert_eq!(r.verdict, Verdict::WrongOutput);
        assert!(r.diagnostics.starts_with("test vector 2"), "{}", r.diagnostics);
        assert!(r.diagnostics.contains("y=11") && r.diagnostics.contains("y=10"));
    }

    #[test]
    fn syntax_error() {
        let r = evaluate("def broken(:\n", &task(&[("x=1", "y=2")]), &profile()).unwrap();
        assert_eq!(r.verdict, Verdict::SyntaxError);
        assert!(r.diagnostics.contains("SyntaxError"), "{}", r.diagnostics);
    }

    #[test]
    fn crash_is_runtime_error() {
        let r = evaluate("raise SystemExit(3)\n", &task(&[("x=1", "y=2")]), &profile()).unwrap();
        assert_eq!(r.verdict, Verdict::RuntimeError);
        assert!(r.diagnostics.contains("exit status 3"));
    }

    #[test]
    fn environment_is_scrubbed() {
        std::env::set_var("SIMCODER_SANDBOX_PROBE", "leak");
        let code = "import os\nprint('v=' + os.environ.get('SIMCODER_SANDBOX_PROBE', 'none'))\n";
        let r = evaluate(code, &task(&[("", "v=none")]), &profile()).unwrap();
        assert!(r.is_valid(), "{}", r.diagnostics);
    }

    #[test]
    fn missing_interpreter_is_unavailable() {
        let p = SandboxProfile {
            compile: None,
            run: vec!["/nonexistent/interpreter".into(), "{src}".into()],
            ..profile()
        };
        assert!(matches!(evaluate("x", &task(&[("a=1", "b=1")]), &p), Err(SandboxError::SandboxUnavailable(_))));
    }

    #[test]
    fn profile_parsing() {
        let p = SandboxProfile::parse("extension = \"py\"\nrun = [\"python3\", \"{src}\"]\n").unwrap();
        assert_eq!((p.cpu_seconds, p.memory_mib), (30, 512));
        assert!(p.compile.is_none());
        assert!(SandboxProfile::parse("extension = \"py\"\nrun = []\n").is_err());
        assert!(SandboxProfile::parse("extension = \"py\"\nrun = [\"x\"]\nbogus = 1\n").is_err());
    }
}
