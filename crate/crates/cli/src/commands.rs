use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use simcoder_core::agent::provider::{provider_from_config, ProviderConfig, ReplayProvider};
use simcoder_core::agent::task::{load_manifest, read_manifest};
use simcoder_core::agent::{pass_at_k, run_tasks, PromptStrategy, Provider, RunOptions, SandboxProfile};
use simcoder_core::config::{parse_arch_config, parse_topology_csv, ArchConfig, WorkloadTopology};
use simcoder_core::report::{emit_csv, error_rate};
use simcoder_core::sim::simulate_network;

use crate::error::CliError;
use crate::{AgentArgs, BenchArgs, Cli, Command, ReportArgs, SimulateArgs, TasksArgs};

/// Inputs and settings of one invocation, saved as `run.json`.
#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config_path: Option<&'a Path>,
    topology_paths: Vec<PathBuf>,
    output_dir: &'a Path,
    seed: u64,
    jobs: usize,
    flags: BTreeMap<&'a str, String>,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Bench(a) => bench(cli, a),
        Command::Agent(a) => agent(cli, a),
        Command::Report(a) => report(a),
        Command::Tasks(a) => tasks(a),
    }
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Io(format!("{}: no such file or directory", path.display())))
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

fn write_manifest(m: &RunManifest<'_>) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(m).expect("manifest serializes") + "\n";
    write(m.output_dir, "run.json", &json)
}

fn load_config(path: &Path) -> Result<ArchConfig, CliError> {
    parse_arch_config(&read(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn network_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "network".into())
}

fn load_topology(path: &Path) -> Result<WorkloadTopology, CliError> {
    parse_topology_csv(&network_name(path), &read(path)?)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<(), CliError> {
    require(&a.config)?;
    require(&a.topology)?;
    let config = load_config(&a.config)?;
    let topo = load_topology(&a.topology)?;
    let report = simulate_network(&topo, &config, cli.jobs).map_err(|e| CliError::Simulation(e.to_string()))?;
    write(&a.output_dir, &format!("{}.csv", topo.network_name), &emit_csv(&report))?;
    write_manifest(&RunManifest {
        command: "simulate",
        config_path: Some(&a.config),
        topology_paths: vec![a.topology.clone()],
        output_dir: &a.output_dir,
        seed: cli.seed,
        jobs: cli.jobs,
        flags: BTreeMap::new(),
    })?;
    println!("{}", report.summary_line());
    Ok(())
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<(), CliError> {
    require(&a.config)?;
    require(&a.manifest)?;
    let config = load_config(&a.config)?;
    let paths = read_manifest(&a.manifest).map_err(|e| CliError::io(&a.manifest, e))?;
    if paths.is_empty() {
        return Err(CliError::Parse(format!("{}: manifest lists no topologies", a.manifest.display())));
    }

    let mut summary = String::from("name,total_cycles,wall_clock_s\n");
    let mut failures = String::from("name,stage,message\n");
    let mut failed = 0;
    let mut seen = std::collections::HashSet::new();
    for path in &paths {
        let name = network_name(path);
        let outcome = if !seen.insert(name.clone()) {
            Err(("manifest", "duplicate network name".to_string()))
        } else {
            load_topology(path)
                .map_err(|e| ("parse", e.to_string()))
                .and_then(|t| simulate_network(&t, &config, cli.jobs).map_err(|e| ("simulate", e.to_string())))
        };
        match outcome {
            Ok(report) => {
                write(&a.output_dir, &format!("{name}.csv"), &emit_csv(&report))?;
                let _ = writeln!(summary, "{name},{},{:.6}", report.total_cycles, report.wall_clock);
                println!("{}", report.summary_line());
            }
            Err((stage, msg)) => {
                failed += 1;
                eprintln!("{name}: {stage} failed: {msg}");
                let _ = writeln!(summary, "{name},FAILED,");
                let _ = writeln!(failures, "{},{stage},{}", csv_quote(&name), csv_quote(&msg));
            }
        }
    }
    write(&a.output_dir, "summary.csv", &summary)?;
    if failed > 0 {
        write(&a.output_dir, "failures.csv", &failures)?;
    }
    write_manifest(&RunManifest {
        command: "bench",
        config_path: Some(&a.config),
        topology_paths: paths.clone(),
        output_dir: &a.output_dir,
        seed: cli.seed,
        jobs: cli.jobs,
        flags: BTreeMap::new(),
    })?;
    if failed > 0 {
        return Err(CliError::Failures(format!("{failed} of {} networks failed", paths.len())));
    }
    Ok(())
}

fn agent(cli: &Cli, a: &AgentArgs) -> Result<(), CliError> {
    let strategy: PromptStrategy = a.strategy.parse().map_err(CliError::Usage)?;
    if a.budget == 0 {
        return Err(CliError::Usage("--budget must be at least 1".into()));
    }
    require(&a.tasks)?;
    require(&a.arch_spec)?;
    let tasks = load_manifest(&a.tasks)?;
    if tasks.is_empty() {
        return Err(CliError::Parse(format!("{}: manifest lists no tasks", a.tasks.display())));
    }
    let arch_spec = read(&a.arch_spec)?;
    let profile = match &a.sandbox_profile {
        Some(p) => {
            require(p)?;
            SandboxProfile::parse(&read(p)?)?
        }
        None => SandboxProfile::python3(),
    };

    let provider: Box<dyn Provider> = match (&a.replay, &a.provider_config) {
        (Some(dir), _) => {
            if dir.canonicalize().ok().is_some_and(|d| Some(d) == a.output_dir.canonicalize().ok()) {
                return Err(CliError::Usage("--replay and --output-dir must differ".into()));
            }
            Box::new(ReplayProvider::new(dir)?)
        }
        (None, Some(path)) => {
            require(path)?;
            let mut config = ProviderConfig::parse(&read(path)?)?;
            if let ProviderConfig::Http(h) = &mut config {
                h.seed.get_or_insert(cli.seed);
            }
            provider_from_config(config, path.parent().unwrap_or(Path::new(".")))?
        }
        (None, None) => return Err(CliError::Usage("pass --provider-config or --replay".into())),
    };

    let opts = RunOptions {
        strategy,
        budget: a.budget,
        arch_spec,
        profile,
        archive_dir: Some(a.output_dir.clone()),
    };
    let logs = run_tasks(&tasks, provider.as_ref(), &opts, cli.jobs)?;

    let mut ks = vec![1, a.budget];
    ks.dedup();
    let reports = ks
        .iter()
        .map(|&k| pass_at_k(&logs, k).expect("corpus is non-empty"))
        .collect::<Vec<_>>();

    let mut table = format!("{:<10}", "strategy");
    for r in &reports {
        let _ = write!(table, "  {:>8}", format!("pass@{}", r.k));
    }
    let _ = write!(table, "\n{:<10}", strategy.token());
    for r in &reports {
        let _ = write!(table, "  {:>8}", r.percent().to_string());
    }
    table.push('\n');

    write(&a.output_dir, "attempt_logs.json", &(serde_json::to_string_pretty(&logs).expect("logs serialize") + "\n"))?;
    write(&a.output_dir, "pass_at_k.json", &(serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n"))?;
    write(&a.output_dir, "summary.txt", &table)?;
    let mut flags = BTreeMap::new();
    flags.insert("strategy", strategy.token().to_string());
    flags.insert("budget", a.budget.to_string());
    if let Some(r) = &a.replay {
        flags.insert("replay", r.display().to_string());
    }
    write_manifest(&RunManifest {
        command: "agent",
        config_path: a.provider_config.as_deref(),
        topology_paths: vec![],
        output_dir: &a.output_dir,
        seed: cli.seed,
        jobs: cli.jobs,
        flags,
    })?;
    print!("{table}");

    let aborted: Vec<_> = logs.iter().filter(|l| l.aborted.is_some()).map(|l| l.task_id.as_str()).collect();
    if !aborted.is_empty() {
        return Err(CliError::Provider(format!("provider failed on tasks: {}", aborted.join(", "))));
    }
    Ok(())
}

/// Reads `name,total_cycles[,...]` rows after a header line.
fn read_totals(path: &Path) -> Result<Vec<(String, Option<u64>)>, CliError> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let name = fields.next().unwrap_or("").trim().to_string();
        let total = fields.next().map(str::trim).unwrap_or("");
        let total = if total == "FAILED" {
            None
        } else {
            Some(total.parse::<u64>().map_err(|_| {
                CliError::Parse(format!("{}:{}: bad total_cycles `{total}`", path.display(), i + 1))
            })?)
        };
        rows.push((name, total));
    }
    Ok(rows)
}

fn report(a: &ReportArgs) -> Result<(), CliError> {
    require(&a.summary)?;
    require(&a.reference)?;
    let ours = read_totals(&a.summary)?;
    let reference: BTreeMap<_, _> = read_totals(&a.reference)?.into_iter().collect();
    let mut out = String::from("name,total_cycles,reference_cycles,error_pct\n");
    for (name, total) in &ours {
        let (Some(total), Some(Some(r))) = (total, reference.get(name)) else {
            continue;
        };
        let err = error_rate(*total, *r)
            .map_err(|e| CliError::Parse(format!("{}: {name}: {e}", a.reference.display())))?;
        let pct = err.to_string();
        let _ = writeln!(out, "{name},{total},{r},{}", pct.trim_end_matches('%'));
    }
    print!("{out}");
    if let Some(dir) = &a.output_dir {
        write(dir, "comparison.csv", &out)?;
    }
    Ok(())
}

fn tasks(a: &TasksArgs) -> Result<(), CliError> {
    require(&a.manifest)?;
    let tasks = load_manifest(&a.manifest)?;
    let mut stale = Vec::new();
    let mut regenerated = Vec::new();
    for t in &tasks {
        let fresh = t
            .regenerate()
            .map_err(|e| CliError::Simulation(format!("task `{}`: {e}", t.task_id)))?;
        if &fresh != t {
            stale.push(t.task_id.clone());
        }
        regenerated.push(fresh);
    }
    if a.check {
        if !stale.is_empty() {
            return Err(CliError::Failures(format!("stale expected outputs: {}", stale.join(", "))));
        }
        println!("{} tasks up to date", tasks.len());
        return Ok(());
    }
    let dir = a.output_dir.as_ref().expect("clap requires --output-dir without --check");
    let mut manifest = String::new();
    for t in &regenerated {
        let file = format!("{}.json", t.task_id);
        write(dir, &file, &t.to_json())?;
        manifest.push_str(&file);
        manifest.push('\n');
    }
    write(dir, "manifest.txt", &manifest)?;
    println!("wrote {} tasks to {}", regenerated.len(), dir.display());
    Ok(())
}
