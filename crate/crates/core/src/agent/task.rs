//! Task files and the reference kernels that produce their expected outputs.
//!
//! Input and output documents are plain `key=value` lines. A task names the
//! kernel that answers it, so expected outputs can always be regenerated from
//! the simulator instead of being written by hand.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::{fold_cycles_closed_form, ComputeResult, FoldCycles};
use crate::config::{parse_arch_config, ArchConfig, Dataflow, LayerDescriptor};
use crate::interconnect::{fold_cycles_with_budget, injection_slowdown, LinkBudget};
use crate::mapping::{im2col_dims, plan_folds, tile_footprint, FoldShape, GemmDims};
use crate::memory::{capacity_tile, stalls, MemoryError, TrafficReport};
use crate::sim::{simulate_layer, trace_layer, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetModule {
    Mapping,
    Storage,
    Interconnect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Function,
    Class,
    Module,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestVector {
    pub input: String,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub description: String,
    pub target_module: TargetModule,
    pub granularity: Granularity,
    /// Reference kernel that computes expected outputs.
    pub kernel: String,
    #[serde(default)]
    pub exemplars: Vec<Exemplar>,
    pub test_vectors: Vec<TestVector>,
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("task `{task_id}`: {reason}")]
    Invalid { task_id: String, reason: String },
}

impl Task {
    pub fn validate(&self) -> Result<(), TaskError> {
        let invalid = |reason: &str| TaskError::Invalid {
            task_id: self.task_id.clone(),
            reason: reason.to_string(),
        };
        if self.task_id.is_empty() || self.task_id.contains(['/', '\\']) || self.task_id.starts_with('.') {
            return Err(invalid("task_id must be a plain file name"));
        }
        if self.test_vectors.is_empty() {
            return Err(invalid("no test vectors"));
        }
        if self
            .exemplars
            .iter()
            .any(|e| self.test_vectors.iter().any(|v| normalize(&v.input) == normalize(&e.input)))
        {
            return Err(invalid("an exemplar repeats a test vector input"));
        }
        if !KERNELS.contains(&self.kernel.as_str()) {
            return Err(invalid("unknown kernel"));
        }
        Ok(())
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Task, TaskError> {
        let task: Task = serde_json::from_str(text).map_err(|e| TaskError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        task.validate()?;
        Ok(task)
    }

    pub fn load(path: &Path) -> Result<Task, TaskError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Task::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("task serializes");
        s.push('\n');
        s
    }

    /// Recomputes every expected output and exemplar output from the kernel.
    pub fn regenerate(&self) -> Result<Task, KernelError> {
        let mut task = self.clone();
        for v in &mut task.test_vectors {
            v.expected = run_kernel(&self.kernel, &v.input)?;
        }
        for e in &mut task.exemplars {
            e.output = run_kernel(&self.kernel, &e.input)?;
        }
        Ok(task)
    }
}

/// Reads a manifest: one path per line, relative to the manifest's directory;
/// blank lines and `#` comments are skipped.
pub fn read_manifest(path: &Path) -> std::io::Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

pub fn load_manifest(path: &Path) -> Result<Vec<Task>, TaskError> {
    let paths = read_manifest(path).map_err(|source| TaskError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let tasks = paths.iter().map(|p| Task::load(p)).collect::<Result<Vec<_>, _>>()?;
    let mut ids: Vec<_> = tasks.iter().map(|t| t.task_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(TaskError::Invalid {
            task_id: w[0].to_string(),
            reason: "duplicate task_id in manifest".into(),
        });
    }
    Ok(tasks)
}

/// Trimmed, non-empty lines of a document.
pub fn normalize(doc: &str) -> Vec<&str> {
    doc.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

/// An ordered `key=value` document.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Doc(pub Vec<(String, String)>);

impl Doc {
    pub fn parse(text: &str) -> Result<Doc, String> {
        normalize(text)
            .into_iter()
            .map(|line| {
                line.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .filter(|(k, _)| !k.is_empty())
                    .ok_or_else(|| format!("not a key=value line: `{line}`"))
            })
            .collect::<Result<_, _>>()
            .map(Doc)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn push(&mut self, key: &str, value: impl fmt::Display) {
        self.0.push((key.to_string(), value.to_string()));
    }
}

impl fmt::Display for Doc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.0 {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("unknown kernel `{0}`")]
    Unknown(String),
    #[error("bad input: {0}")]
    BadInput(String),
}

pub const KERNELS: &[&str] = &[
    "im2col_dims",
    "fold_count",
    "fold_plan",
    "tile_footprint",
    "capacity_split",
    "traffic",
    "stalls",
    "layer_cycles",
    "injection_slowdown",
    "fold_cycles",
    "budget_fold_cycles",
    "layer_compute",
];

const CONFIG_KEYS: &[&str] = &[
    "array_rows",
    "array_cols",
    "dataflow",
    "ifmap_sram_kb",
    "filter_sram_kb",
    "ofmap_sram_kb",
    "dram_bandwidth_words_per_cycle",
    "word_size_bytes",
    "row_ports",
    "col_ports",
    "drain_ports",
];

fn bad(e: impl fmt::Display) -> KernelError {
    KernelError::BadInput(e.to_string())
}

fn int(doc: &Doc, key: &str) -> Result<u64, KernelError> {
    doc.get(key)
        .ok_or_else(|| bad(format!("missing `{key}`")))?
        .parse()
        .map_err(|_| bad(format!("`{key}` is not a non-negative integer")))
}

fn ints(doc: &Doc, key: &str) -> Result<Vec<u64>, KernelError> {
    let raw = doc.get(key).ok_or_else(|| bad(format!("missing `{key}`")))?;
    if raw.is_empty() {
        return Ok(vec![]);
    }
    raw.split(',')
        .map(|v| v.trim().parse().map_err(|_| bad(format!("`{key}` holds a non-integer"))))
        .collect()
}

fn layer_of(doc: &Doc) -> Result<LayerDescriptor, KernelError> {
    let l = LayerDescriptor {
        name: doc.get("layer").unwrap_or("layer").to_string(),
        ifmap_h: int(doc, "ifmap_h")?,
        ifmap_w: int(doc, "ifmap_w")?,
        filter_h: int(doc, "filter_h")?,
        filter_w: int(doc, "filter_w")?,
        channels: int(doc, "channels")?,
        num_filters: int(doc, "num_filters")?,
        stride: int(doc, "stride")?,
    };
    l.check().map_err(bad)?;
    Ok(l)
}

/// Builds a config from the config keys present in the document. The fields
/// a kernel does not care about get harmless defaults.
fn config_of(doc: &Doc) -> Result<ArchConfig, KernelError> {
    let mut text = String::new();
    for key in CONFIG_KEYS {
        if let Some(v) = doc.get(key) {
            text.push_str(&format!("{key}={v}\n"));
        }
    }
    for (key, default) in [
        ("array_rows", "1"),
        ("array_cols", "1"),
        ("dataflow", "os"),
        ("ifmap_sram_kb", "1024"),
        ("filter_sram_kb", "1024"),
        ("ofmap_sram_kb", "1024"),
        ("dram_bandwidth_words_per_cycle", "1"),
    ] {
        if doc.get(key).is_none() {
            text.push_str(&format!("{key}={default}\n"));
        }
    }
    parse_arch_config(&text).map_err(bad)
}

fn dataflow_of(doc: &Doc) -> Result<Dataflow, KernelError> {
    doc.get("dataflow").unwrap_or("os").parse().map_err(bad)
}

fn shape_of(doc: &Doc) -> Result<FoldShape, KernelError> {
    let s = FoldShape::new(int(doc, "rows")?, int(doc, "cols")?, int(doc, "t")?);
    if s.rows == 0 || s.cols == 0 || s.t == 0 {
        return Err(bad("rows, cols and t must be positive"));
    }
    Ok(s)
}

fn budget_of(doc: &Doc) -> Result<LinkBudget, KernelError> {
    let p = [int(doc, "row_ports")?, int(doc, "col_ports")?, int(doc, "drain_ports")?];
    if p.contains(&0) {
        return Err(bad("ports must be positive"));
    }
    Ok(LinkBudget::new(p[0], p[1], p[2]))
}

fn push_cycles(out: &mut Doc, c: FoldCycles) {
    out.push("fill", c.fill);
    out.push("stream", c.stream);
    out.push("drain", c.drain);
    out.push("total", c.total);
}

fn join(v: &[u64]) -> String {
    v.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

fn sim_err(e: SimError) -> KernelError {
    bad(e)
}

/// Runs a named reference kernel on an input document.
pub fn run_kernel(kernel: &str, input: &str) -> Result<String, KernelError> {
    let doc = Doc::parse(input).map_err(KernelError::BadInput)?;
    let mut out = Doc::default();
    match kernel {
        "im2col_dims" => {
            let d = im2col_dims(&layer_of(&doc)?);
            out.push("sr", d.sr);
            out.push("sc", d.sc);
            out.push("t", d.t);
        }
        "fold_count" | "fold_plan" => {
            let dims = GemmDims { sr: int(&doc, "sr")?, sc: int(&doc, "sc")?, t: int(&doc, "t")? };
            if dims.sr == 0 || dims.sc == 0 || dims.t == 0 {
                return Err(bad("sr, sc and t must be positive"));
            }
            let plan = plan_folds(dims, &config_of(&doc)?);
            if kernel == "fold_count" {
                out.push("row_folds", plan.row_folds);
                out.push("col_folds", plan.col_folds);
                out.push("folds", plan.folds.len());
            } else {
                for f in &plan.folds {
                    out.push("fold", join(&[f.row_fold, f.col_fold, f.rows_used, f.cols_used, f.t]));
                }
            }
        }
        "tile_footprint" => {
            let layer = layer_of(&doc)?;
            let config = config_of(&doc)?;
            let plan = plan_folds(im2col_dims(&layer), &config);
            for f in &plan.folds {
                let fp = tile_footprint(f, &layer, config.dataflow);
                out.push("fold", join(&[f.row_fold, f.col_fold, fp.ifmap_words, fp.filter_words, fp.ofmap_words]));
            }
        }
        "capacity_split" => {
            let layer = layer_of(&doc)?;
            let config = config_of(&doc)?;
            let plan = plan_folds(im2col_dims(&layer), &config);
            match capacity_tile(&plan, &layer, &config) {
                Ok(tiled) => {
                    for f in &tiled.folds {
                        out.push("fold", join(&[f.row_fold, f.col_fold, f.t_offset, f.t]));
                    }
                }
                Err(MemoryError::InfeasibleTile { buffer, .. }) => out.push("infeasible", buffer),
            }
        }
        "traffic" => {
            let layer = layer_of(&doc)?;
            let config = config_of(&doc)?;
            let t = trace_layer(&layer, &config).map_err(sim_err)?.traffic;
            push_traffic(&mut out, &t);
        }
        "stalls" => {
            let config = config_of(&doc)?;
            let fetch = ints(&doc, "fetch_words")?;
            let cycles = ints(&doc, "fold_cycles")?;
            if fetch.len() != cycles.len() {
                return Err(bad("fetch_words and fold_cycles differ in length"));
            }
            let tr = TrafficReport { fold_fetch_words: fetch, ..Default::default() };
            let per_fold = cycles.iter().map(|&c| FoldCycles::new(0, c, 0)).collect::<Vec<_>>();
            let shapes = vec![FoldShape::new(1, 1, 1); per_fold.len()];
            let comp = ComputeResult::from_folds("k", shapes, per_fold, 1);
            let st = stalls(&tr, &comp, &config);
            out.push("stall_cycles", st.stall_cycles);
            out.push("bound", if st.stall_cycles > 0 { "MEMORY_BOUND" } else { "COMPUTE_BOUND" });
            out.push("per_fold", join(&st.per_fold));
        }
        "layer_cycles" => {
            let r = simulate_layer(&layer_of(&doc)?, &config_of(&doc)?).map_err(sim_err)?;
            out.push("total_cycles", r.total_cycles);
            out.push("compute_cycles", r.compute_cycles);
            out.push("stall_cycles", r.stall_cycles);
        }
        "injection_slowdown" => {
            out.push("slowdown", injection_slowdown(shape_of(&doc)?, dataflow_of(&doc)?, &budget_of(&doc)?));
        }
        "fold_cycles" => {
            let s = shape_of(&doc)?;
            push_cycles(&mut out, fold_cycles_closed_form(s.rows, s.cols, s.t, dataflow_of(&doc)?));
        }
        "budget_fold_cycles" => {
            push_cycles(&mut out, fold_cycles_with_budget(shape_of(&doc)?, dataflow_of(&doc)?, &budget_of(&doc)?));
        }
        "layer_compute" => {
            let c = trace_layer(&layer_of(&doc)?, &config_of(&doc)?).map_err(sim_err)?.compute;
            out.push("compute_cycles", c.total_compute_cycles);
            out.push("mac_count", c.mac_count);
            out.push("folds", c.folds.len());
        }
        other => return Err(KernelError::Unknown(other.to_string())),
    }
    Ok(out.to_string())
}

fn push_traffic(out: &mut Doc, t: &TrafficReport) {
    out.push("dram_ifmap", t.dram_ifmap_reads);
    out.push("dram_filter", t.dram_filter_reads);
    out.push("dram_ofmap", t.dram_ofmap_writes);
    out.push("sram_ifmap", t.sram_ifmap_reads);
    out.push("sram_filter", t.sram_filter_reads);
    out.push("sram_ofmap", t.sram_ofmap_writes);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doc_round_trip() {
        let d = Doc::parse("  a = 1\n\nb=x,y\n").unwrap();
        assert_eq!(d.get("a"), Some("1"));
        assert_eq!(d.to_string(), "a=1\nb=x,y\n");
        assert!(Doc::parse("nonsense").is_err());
    }

    #[test]
    fn im2col_kernel() {
        let out = run_kernel(
            "im2col_dims",
            "ifmap_h=5\nifmap_w=5\nfilter_h=3\nfilter_w=3\nchannels=2\nnum_filters=4\nstride=1\n",
        )
        .unwrap();
        assert_eq!(out, "sr=9\nsc=4\nt=18\n");
    }

    #[test]
    fn fold_kernels() {
        let input = "sr=9\nsc=5\nt=3\narray_rows=4\narray_cols=4\n";
        assert_eq!(run_kernel("fold_count", input).unwrap(), "row_folds=3\ncol_folds=2\nfolds=6\n");
        let plan = run_kernel("fold_plan", input).unwrap();
        assert_eq!(plan.lines().next(), Some("fold=0,0,4,4,3"));
        assert_eq!(plan.lines().last(), Some("fold=2,1,1,1,3"));
    }

    #[test]
    fn cycle_kernels() {
        let out = run_kernel("fold_cycles", "rows=1\ncols=1\nt=1\ndataflow=ws\n").unwrap();
        assert!(out.ends_with("total=2\n"));
        let out = run_kernel(
            "injection_slowdown",
            "rows=8\ncols=8\nt=4\ndataflow=os\nrow_ports=4\ncol_ports=8\ndrain_ports=8\n",
        )
        .unwrap();
        assert_eq!(out, "slowdown=2\n");
    }

    #[test]
    fn stall_kernel() {
        let out = run_kernel("stalls", "dram_bandwidth_words_per_cycle=1\nfetch_words=100,100\nfold_cycles=40,40\n").unwrap();
        assert_eq!(out, "stall_cycles=160\nbound=MEMORY_BOUND\nper_fold=100,60\n");
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(matches!(run_kernel("nope", ""), Err(KernelError::Unknown(_))));
        assert!(matches!(run_kernel("fold_cycles", "rows=0\ncols=1\nt=1\n"), Err(KernelError::BadInput(_))));
        assert!(matches!(run_kernel("im2col_dims", "ifmap_h=1\n"), Err(KernelError::BadInput(_))));
    }

    #[test]
    fn task_validation() {
        let mut t = Task {
            task_id: "t".into(),
            description: "d".into(),
            target_module: TargetModule::Mapping,
            granularity: Granularity::Function,
            kernel: "fold_cycles".into(),
            exemplars: vec![Exemplar { input: "a=1".into(), output: "b=2".into() }],
            test_vectors: vec![TestVector { input: "a=2".into(), expected: String::new() }],
        };
        assert!(t.validate().is_ok());
        t.exemplars[0].input = " a=2 \n".into();
        assert!(t.validate().is_err());
        t.exemplars.clear();
        t.test_vectors.clear();
        assert!(t.validate().is_err());
    }

    #[test]
    fn task_json_round_trip() {
        let t = Task {
            task_id: "x".into(),
            description: "d".into(),
            target_module: TargetModule::Interconnect,
            granularity: Granularity::Module,
            kernel: "fold_cycles".into(),
            exemplars: vec![],
            test_vectors: vec![TestVector { input: "rows=1\ncols=1\nt=1\n".into(), expected: String::new() }],
        };
        let back = Task::from_json(&t.to_json(), Path::new("x.json")).unwrap();
        assert_eq!(back, t);
        let regen = back.regenerate().unwrap();
        assert_eq!(regen.test_vectors[0].expected, "fill=0\nstream=1\ndrain=1\ntotal=2\n");
    }
}
