//! Architecture specifications and workload topologies.
//!
//! Two on-disk formats are handled here:
//!
//! * the architecture config, a flat `key = value` document with `#` comments;
//! * the topology CSV, one convolution (or GEMM) layer per row.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which operand class stays pinned inside the processing elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dataflow {
    OutputStationary,
    WeightStationary,
    InputStationary,
}

impl Dataflow {
    pub const ALL: [Dataflow; 3] = [
        Dataflow::OutputStationary,
        Dataflow::WeightStationary,
        Dataflow::InputStationary,
    ];

    /// Short token used in config files (`os`, `ws`, `is`).
    pub fn token(self) -> &'static str {
        match self {
            Dataflow::OutputStationary => "os",
            Dataflow::WeightStationary => "ws",
            Dataflow::InputStationary => "is",
        }
    }
}

impl fmt::Display for Dataflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Dataflow {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "os" | "output_stationary" => Ok(Dataflow::OutputStationary),
            "ws" | "weight_stationary" => Ok(Dataflow::WeightStationary),
            "is" | "input_stationary" => Ok(Dataflow::InputStationary),
            _ => Err(ConfigError::UnknownDataflow(s.trim().to_string())),
        }
    }
}

/// Optional edge-port overrides for the interconnect model. `None` means
/// "one port per lane", i.e. the array geometry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortOverrides {
    pub row: Option<u64>,
    pub col: Option<u64>,
    pub drain: Option<u64>,
}

/// Accelerator architecture specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub array_rows: u64,
    pub array_cols: u64,
    /// Scratchpad capacities in bytes.
    pub ifmap_sram: u64,
    pub filter_sram: u64,
    pub ofmap_sram: u64,
    pub dataflow: Dataflow,
    /// Off-chip bandwidth in words per cycle.
    pub dram_bandwidth: f64,
    /// Bytes per word.
    pub word_size: u64,
    pub ports: PortOverrides,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("unknown dataflow `{0}` (expected os, ws or is)")]
    UnknownDataflow(String),
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

const KB: f64 = 1024.0;

impl ArchConfig {
    /// Convenience constructor for tests and bindings; validates like the parser.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        array_rows: u64,
        array_cols: u64,
        ifmap_sram: u64,
        filter_sram: u64,
        ofmap_sram: u64,
        dataflow: Dataflow,
        dram_bandwidth: f64,
        word_size: u64,
    ) -> Result<Self, ConfigError> {
        let cfg = ArchConfig {
            array_rows,
            array_cols,
            ifmap_sram,
            filter_sram,
            ofmap_sram,
            dataflow,
            dram_bandwidth,
            word_size,
            ports: PortOverrides::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: &str| ConfigError::BadValue {
            key: key.to_string(),
            reason: reason.to_string(),
        };
        if self.array_rows < 1 {
            return Err(bad("array_rows", "must be at least 1"));
        }
        if self.array_cols < 1 {
            return Err(bad("array_cols", "must be at least 1"));
        }
        if self.word_size < 1 {
            return Err(bad("word_size_bytes", "must be at least 1"));
        }
        for (key, bytes) in [
            ("ifmap_sram_kb", self.ifmap_sram),
            ("filter_sram_kb", self.filter_sram),
            ("ofmap_sram_kb", self.ofmap_sram),
        ] {
            if bytes < self.word_size {
                return Err(bad(key, "must hold at least one word"));
            }
        }
        if !(self.dram_bandwidth.is_finite() && self.dram_bandwidth > 0.0) {
            return Err(bad("dram_bandwidth_words_per_cycle", "must be a positive number"));
        }
        for (key, port) in [
            ("row_ports", self.ports.row),
            ("col_ports", self.ports.col),
            ("drain_ports", self.ports.drain),
        ] {
            if port == Some(0) {
                return Err(bad(key, "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn num_pes(&self) -> u64 {
        self.array_rows * self.array_cols
    }

    /// Serializes to the `key = value` document accepted by [`parse_arch_config`].
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("array_rows", self.array_rows.to_string());
        line("array_cols", self.array_cols.to_string());
        line("dataflow", self.dataflow.token().to_string());
        line("ifmap_sram_kb", format!("{}", self.ifmap_sram as f64 / KB));
        line("filter_sram_kb", format!("{}", self.filter_sram as f64 / KB));
        line("ofmap_sram_kb", format!("{}", self.ofmap_sram as f64 / KB));
        line(
            "dram_bandwidth_words_per_cycle",
            format!("{}", self.dram_bandwidth),
        );
        line("word_size_bytes", self.word_size.to_string());
        if let Some(p) = self.ports.row {
            line("row_ports", p.to_string());
        }
        if let Some(p) = self.ports.col {
            line("col_ports", p.to_string());
        }
        if let Some(p) = self.ports.drain {
            line("drain_ports", p.to_string());
        }
        out
    }
}

fn parse_count(key: &str, value: &str) -> Result<u64, ConfigError> {
    value.parse::<u64>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        reason: format!("`{value}` is not a non-negative integer ({e})"),
    })
}

fn parse_kb(key: &str, value: &str) -> Result<u64, ConfigError> {
    let bad = |reason: String| ConfigError::BadValue {
        key: key.to_string(),
        reason,
    };
    let kb: f64 = value
        .parse()
        .map_err(|_| bad(format!("`{value}` is not a number")))?;
    if !kb.is_finite() || kb <= 0.0 {
        return Err(bad("must be positive".into()));
    }
    let bytes = kb * KB;
    if bytes.fract() != 0.0 || bytes > u64::MAX as f64 {
        return Err(bad(format!("{kb} KB is not a whole number of bytes")));
    }
    Ok(bytes as u64)
}

fn need<T>(value: Option<T>, key: &str) -> Result<T, ConfigError> {
    value.ok_or_else(|| ConfigError::MissingKey(key.to_string()))
}

/// Parses and validates an architecture config document.
pub fn parse_arch_config(text: &str) -> Result<ArchConfig, ConfigError> {
    let mut rows = None;
    let mut cols = None;
    let mut dataflow = None;
    let mut ifmap = None;
    let mut filter = None;
    let mut ofmap = None;
    let mut bandwidth = None;
    let mut word_size = None;
    let mut ports = PortOverrides::default();
    let mut seen = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: line_no,
                reason: format!("expected `key = value`, found `{line}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                reason: format!("duplicate key on line {line_no}"),
            });
        }
        match key {
            "array_rows" => rows = Some(parse_count(key, value)?),
            "array_cols" => cols = Some(parse_count(key, value)?),
            "dataflow" => dataflow = Some(value.parse::<Dataflow>()?),
            "ifmap_sram_kb" => ifmap = Some(parse_kb(key, value)?),
            "filter_sram_kb" => filter = Some(parse_kb(key, value)?),
            "ofmap_sram_kb" => ofmap = Some(parse_kb(key, value)?),
            "dram_bandwidth_words_per_cycle" => {
                bandwidth = Some(value.parse::<f64>().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    reason: format!("`{value}` is not a number"),
                })?)
            }
            "word_size_bytes" => word_size = Some(parse_count(key, value)?),
            "row_ports" => ports.row = Some(parse_count(key, value)?),
            "col_ports" => ports.col = Some(parse_count(key, value)?),
            "drain_ports" => ports.drain = Some(parse_count(key, value)?),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: line_no,
                    key: key.to_string(),
                })
            }
        }
    }

    let cfg = ArchConfig {
        array_rows: need(rows, "array_rows")?,
        array_cols: need(cols, "array_cols")?,
        dataflow: need(dataflow, "dataflow")?,
        ifmap_sram: need(ifmap, "ifmap_sram_kb")?,
        filter_sram: need(filter, "filter_sram_kb")?,
        ofmap_sram: need(ofmap, "ofmap_sram_kb")?,
        dram_bandwidth: need(bandwidth, "dram_bandwidth_words_per_cycle")?,
        word_size: word_size.unwrap_or(1),
        ports,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// One convolution layer. GEMM and fully-connected layers use 1x1 spatial dims.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub name: String,
    pub ifmap_h: u64,
    pub ifmap_w: u64,
    pub filter_h: u64,
    pub filter_w: u64,
    pub channels: u64,
    pub num_filters: u64,
    pub stride: u64,
}

impl LayerDescriptor {
    /// Checks the shape invariants; returns a human-readable reason on failure.
    pub fn check(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("empty layer name".into());
        }
        if self.name.contains([',', '\n', '\r']) {
            return Err(format!("layer name `{}` contains a separator", self.name));
        }
        for (field, v) in [
            ("ifmap_h", self.ifmap_h),
            ("ifmap_w", self.ifmap_w),
            ("filter_h", self.filter_h),
            ("filter_w", self.filter_w),
            ("channels", self.channels),
            ("num_filters", self.num_filters),
            ("stride", self.stride),
        ] {
            if v < 1 {
                return Err(format!("{field} must be at least 1"));
            }
        }
        if self.filter_h > self.ifmap_h {
            return Err(format!(
                "filter_h {} exceeds ifmap_h {}",
                self.filter_h, self.ifmap_h
            ));
        }
        if self.filter_w > self.ifmap_w {
            return Err(format!(
                "filter_w {} exceeds ifmap_w {}",
                self.filter_w, self.ifmap_w
            ));
        }
        Ok(())
    }

    /// A fully-connected layer expressed as a 1x1 convolution.
    pub fn fully_connected(name: &str, inputs: u64, outputs: u64) -> Self {
        LayerDescriptor {
            name: name.to_string(),
            ifmap_h: 1,
            ifmap_w: 1,
            filter_h: 1,
            filter_w: 1,
            channels: inputs,
            num_filters: outputs,
            stride: 1,
        }
    }
}

/// An ordered network of layers.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WorkloadTopology {
    pub network_name: String,
    pub layers: Vec<LayerDescriptor>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {reason}")]
    BadRow { line: u64, reason: String },
    #[error("duplicate layer name `{0}`")]
    DuplicateLayerName(String),
    #[error("line {line}: column `{column}` is not a non-negative integer")]
    NonNumericField { line: u64, column: &'static str },
    #[error("topology has no header row")]
    MissingHeader,
}

pub const TOPOLOGY_COLUMNS: [&str; 8] = [
    "layer",
    "ifmap_h",
    "ifmap_w",
    "filter_h",
    "filter_w",
    "channels",
    "num_filters",
    "stride",
];

/// Drops trailing empty fields so that `a,b,c,` reads as three columns.
fn significant_fields(record: &csv::StringRecord) -> Vec<&str> {
    let mut fields: Vec<&str> = record.iter().map(str::trim).collect();
    while fields.last().is_some_and(|f| f.is_empty()) {
        fields.pop();
    }
    fields
}

/// Parses a topology CSV. `network_name` is supplied by the caller, usually
/// the file stem.
pub fn parse_topology_csv(network_name: &str, text: &str) -> Result<WorkloadTopology, TopologyError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut topo = WorkloadTopology {
        network_name: network_name.to_string(),
        layers: Vec::new(),
    };
    let mut names = HashSet::new();
    let mut header_seen = false;

    for record in reader.records() {
        let record = record.map_err(|e| TopologyError::BadRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let fields = significant_fields(&record);
        if fields.is_empty() {
            continue;
        }
        if fields.len() != TOPOLOGY_COLUMNS.len() {
            return Err(TopologyError::BadRow {
                line,
                reason: format!(
                    "expected {} columns, found {}",
                    TOPOLOGY_COLUMNS.len(),
                    fields.len()
                ),
            });
        }
        if !header_seen {
            header_seen = true;
            continue;
        }

        let mut nums = [0u64; 7];
        for (i, slot) in nums.iter_mut().enumerate() {
            *slot = fields[i + 1]
                .parse()
                .map_err(|_| TopologyError::NonNumericField {
                    line,
                    column: TOPOLOGY_COLUMNS[i + 1],
                })?;
        }
        let layer = LayerDescriptor {
            name: fields[0].to_string(),
            ifmap_h: nums[0],
            ifmap_w: nums[1],
            filter_h: nums[2],
            filter_w: nums[3],
            channels: nums[4],
            num_filters: nums[5],
            stride: nums[6],
        };
        layer
            .check()
            .map_err(|reason| TopologyError::BadRow { line, reason })?;
        if !names.insert(layer.name.clone()) {
            return Err(TopologyError::DuplicateLayerName(layer.name));
        }
        topo.layers.push(layer);
    }

    if !header_seen {
        return Err(TopologyError::MissingHeader);
    }
    Ok(topo)
}

impl WorkloadTopology {
    pub fn to_csv(&self) -> String {
        let mut out = TOPOLOGY_COLUMNS.join(",");
        out.push('\n');
        for l in &self.layers {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                l.name, l.ifmap_h, l.ifmap_w, l.filter_h, l.filter_w, l.channels, l.num_filters, l.stride
            ));
        }
        out
    }
}
