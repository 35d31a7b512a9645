//! Python bindings: configs, topologies, network simulation, the error and
//! pass@k metrics, fold timing, prompt rendering and the task kernels.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use simcoder_core::agent::task::run_kernel as core_run_kernel;
use simcoder_core::agent::{
    build_prompt as core_build_prompt, pass_at_k as core_pass_at_k, AttemptLog, PromptStrategy, Task,
};
use simcoder_core::compute::fold_cycles_closed_form;
use simcoder_core::config::{self, Dataflow, PortOverrides};
use simcoder_core::interconnect::{fold_cycles_with_budget, LinkBudget};
use simcoder_core::mapping::FoldShape;
use simcoder_core::report::{self, emit_csv, Percent};
use simcoder_core::sim;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(module = "simcoder", frozen)]
pub struct ArchConfig {
    inner: config::ArchConfig,
}

#[pymethods]
impl ArchConfig {
    #[new]
    #[pyo3(signature = (
        array_rows, array_cols, ifmap_sram_kb, filter_sram_kb, ofmap_sram_kb,
        dataflow = "os", dram_bandwidth = 1.0, word_size = 1,
        row_ports = None, col_ports = None, drain_ports = None,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        array_rows: u64,
        array_cols: u64,
        ifmap_sram_kb: f64,
        filter_sram_kb: f64,
        ofmap_sram_kb: f64,
        dataflow: &str,
        dram_bandwidth: f64,
        word_size: u64,
        row_ports: Option<u64>,
        col_ports: Option<u64>,
        drain_ports: Option<u64>,
    ) -> PyResult<Self> {
        let mut doc = format!(
            "array_rows = {array_rows}\narray_cols = {array_cols}\ndataflow = {dataflow}\n\
             ifmap_sram_kb = {ifmap_sram_kb}\nfilter_sram_kb = {filter_sram_kb}\nofmap_sram_kb = {ofmap_sram_kb}\n\
             dram_bandwidth_words_per_cycle = {dram_bandwidth}\nword_size_bytes = {word_size}\n"
        );
        for (key, v) in [("row_ports", row_ports), ("col_ports", col_ports), ("drain_ports", drain_ports)] {
            if let Some(v) = v {
                doc.push_str(&format!("{key} = {v}\n"));
            }
        }
        Self::parse(&doc)
    }

    /// Parses a `key = value` architecture document.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        config::parse_arch_config(text).map(|inner| ArchConfig { inner }).map_err(value_err)
    }

    fn to_document(&self) -> String {
        self.inner.to_document()
    }

    #[getter]
    fn array_rows(&self) -> u64 {
        self.inner.array_rows
    }

    #[getter]
    fn array_cols(&self) -> u64 {
        self.inner.array_cols
    }

    #[getter]
    fn dataflow(&self) -> &'static str {
        self.inner.dataflow.token()
    }

    /// Scratchpad sizes in bytes as `(ifmap, filter, ofmap)`.
    #[getter]
    fn sram_bytes(&self) -> (u64, u64, u64) {
        (self.inner.ifmap_sram, self.inner.filter_sram, self.inner.ofmap_sram)
    }

    #[getter]
    fn dram_bandwidth(&self) -> f64 {
        self.inner.dram_bandwidth
    }

    #[getter]
    fn word_size(&self) -> u64 {
        self.inner.word_size
    }

    fn __eq__(&self, other: &ArchConfig) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "ArchConfig({}x{}, {}, bw={})",
            self.inner.array_rows, self.inner.array_cols, self.inner.dataflow, self.inner.dram_bandwidth
        )
    }
}

#[pyclass(module = "simcoder", frozen)]
pub struct Topology {
    inner: config::WorkloadTopology,
}

fn layer_dict<'py>(py: Python<'py>, l: &config::LayerDescriptor) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("name", &l.name)?;
    d.set_item("ifmap_h", l.ifmap_h)?;
    d.set_item("ifmap_w", l.ifmap_w)?;
    d.set_item("filter_h", l.filter_h)?;
    d.set_item("filter_w", l.filter_w)?;
    d.set_item("channels", l.channels)?;
    d.set_item("num_filters", l.num_filters)?;
    d.set_item("stride", l.stride)?;
    Ok(d)
}

#[pymethods]
impl Topology {
    /// Parses a topology CSV; `name` identifies the network.
    #[staticmethod]
    fn parse(name: &str, text: &str) -> PyResult<Self> {
        config::parse_topology_csv(name, text).map(|inner| Topology { inner }).map_err(value_err)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.network_name
    }

    #[getter]
    fn layers<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner.layers.iter().map(|l| layer_dict(py, l)).collect()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.layers.len()
    }
}

#[pyclass(module = "simcoder", frozen)]
pub struct RunReport {
    inner: report::RunReport,
}

#[pymethods]
impl RunReport {
    #[getter]
    fn network_name(&self) -> &str {
        &self.inner.network_name
    }

    #[getter]
    fn total_cycles(&self) -> u64 {
        self.inner.total_cycles
    }

    #[getter]
    fn wall_clock(&self) -> f64 {
        self.inner.wall_clock
    }

    #[getter]
    fn utilization(&self) -> f64 {
        self.inner.utilization()
    }

    /// Per-layer results as dictionaries.
    #[getter]
    fn layers<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .layers
            .iter()
            .map(|l| {
                let d = PyDict::new(py);
                d.set_item("name", &l.layer_name)?;
                d.set_item("total_cycles", l.total_cycles)?;
                d.set_item("compute_cycles", l.compute_cycles)?;
                d.set_item("stall_cycles", l.stall_cycles)?;
                d.set_item("utilization", l.utilization)?;
                d.set_item("dram_ifmap_reads", l.traffic.dram_ifmap_reads)?;
                d.set_item("dram_filter_reads", l.traffic.dram_filter_reads)?;
                d.set_item("dram_ofmap_writes", l.traffic.dram_ofmap_writes)?;
                Ok(d)
            })
            .collect()
    }

    fn to_csv(&self) -> String {
        emit_csv(&self.inner)
    }

    fn summary_line(&self) -> String {
        self.inner.summary_line()
    }
}

#[pyfunction]
#[pyo3(signature = (topology, config, jobs = 1))]
fn simulate_network(py: Python<'_>, topology: &Topology, config: &ArchConfig, jobs: usize) -> PyResult<RunReport> {
    if jobs == 0 {
        return Err(PyValueError::new_err("jobs must be at least 1"));
    }
    py.detach(|| sim::simulate_network(&topology.inner, &config.inner, jobs))
        .map(|inner| RunReport { inner })
        .map_err(value_err)
}

/// Deviation of `ours` from `reference` in percent, rounded half-up to two
/// decimals.
#[pyfunction]
fn error_rate(ours: u64, reference: u64) -> PyResult<f64> {
    report::error_rate(ours, reference).map(Percent::as_f64).map_err(value_err)
}

/// pass@k over a corpus. Each entry is the attempt at which a task first
/// passed, or `None` if it never did.
#[pyfunction]
fn pass_at_k(first_success: Vec<Option<u32>>, k: u32) -> PyResult<f64> {
    let logs: Vec<AttemptLog> = first_success
        .iter()
        .enumerate()
        .map(|(i, s)| AttemptLog {
            task_id: format!("task{i}"),
            budget: s.unwrap_or(k).max(k),
            attempts: vec![],
            succeeded: s.is_some(),
            attempts_used: s.unwrap_or(k).max(1),
            aborted: None,
        })
        .collect();
    if first_success.contains(&Some(0)) {
        return Err(PyValueError::new_err("attempts are numbered from 1"));
    }
    core_pass_at_k(&logs, k).map(|r| r.percent().as_f64()).map_err(value_err)
}

/// Fill, stream, drain and total cycles of one fold. Port counts default to
/// one per lane.
#[pyfunction]
#[pyo3(signature = (rows, cols, t, dataflow = "os", row_ports = None, col_ports = None, drain_ports = None))]
#[allow(clippy::too_many_arguments)]
fn fold_cycles<'py>(
    py: Python<'py>,
    rows: u64,
    cols: u64,
    t: u64,
    dataflow: &str,
    row_ports: Option<u64>,
    col_ports: Option<u64>,
    drain_ports: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let df: Dataflow = dataflow.parse().map_err(value_err)?;
    if rows == 0 || cols == 0 || t == 0 {
        return Err(PyValueError::new_err("rows, cols and t must be at least 1"));
    }
    let ports = PortOverrides { row: row_ports, col: col_ports, drain: drain_ports };
    let fc = if ports == PortOverrides::default() {
        fold_cycles_closed_form(rows, cols, t, df)
    } else {
        if [row_ports, col_ports, drain_ports].contains(&Some(0)) {
            return Err(PyValueError::new_err("port counts must be at least 1"));
        }
        let budget = LinkBudget::new(row_ports.unwrap_or(rows), col_ports.unwrap_or(cols), drain_ports.unwrap_or(cols));
        fold_cycles_with_budget(FoldShape::new(rows, cols, t), df, &budget)
    };
    let d = PyDict::new(py);
    d.set_item("fill", fc.fill)?;
    d.set_item("stream", fc.stream)?;
    d.set_item("drain", fc.drain)?;
    d.set_item("total", fc.total)?;
    Ok(d)
}

/// Renders the prompt for a task given as JSON text.
#[pyfunction]
fn build_prompt(strategy: &str, task_json: &str, arch_spec: &str) -> PyResult<String> {
    let strategy: PromptStrategy = strategy.parse().map_err(value_err)?;
    let task = Task::from_json(task_json, std::path::Path::new("<python>")).map_err(value_err)?;
    core_build_prompt(strategy, &task, arch_spec).map(|p| p.render()).map_err(value_err)
}

/// Runs a named task kernel on a `key=value` input document.
#[pyfunction]
fn run_kernel(kernel: &str, input: &str) -> PyResult<String> {
    core_run_kernel(kernel, input).map_err(value_err)
}

#[pymodule]
fn simcoder(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ArchConfig>()?;
    m.add_class::<Topology>()?;
    m.add_class::<RunReport>()?;
    m.add_function(wrap_pyfunction!(simulate_network, m)?)?;
    m.add_function(wrap_pyfunction!(error_rate, m)?)?;
    m.add_function(wrap_pyfunction!(pass_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(fold_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(run_kernel, m)?)?;
    Ok(())
}
