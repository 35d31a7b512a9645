//! Per-layer and per-run results, the error metric and CSV emission.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::TrafficReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer_name: String,
    pub total_cycles: u64,
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub utilization: f64,
    pub traffic: TrafficReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub network_name: String,
    pub layers: Vec<LayerReport>,
    pub total_cycles: u64,
    /// Seconds spent simulating, parsing excluded.
    pub wall_clock: f64,
}

pub fn aggregate(layers: Vec<LayerReport>, name: &str, wall_clock: f64) -> RunReport {
    RunReport {
        network_name: name.to_string(),
        total_cycles: layers.iter().map(|l| l.total_cycles).sum(),
        layers,
        wall_clock,
    }
}

impl RunReport {
    /// Compute-weighted utilization over all layers.
    pub fn utilization(&self) -> f64 {
        let compute: u64 = self.layers.iter().map(|l| l.compute_cycles).sum();
        if compute == 0 {
            return 0.0;
        }
        let weighted: f64 = self
            .layers
            .iter()
            .map(|l| l.utilization * l.compute_cycles as f64)
            .sum();
        weighted / compute as f64
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} total_cycles={} wall_clock={:.6}",
            self.network_name, self.total_cycles, self.wall_clock
        )
    }
}

/// A percentage held as an integer number of hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent {
    pub hundredths: u64,
}

impl Percent {
    pub fn as_f64(self) -> f64 {
        self.hundredths as f64 / 100.0
    }

    /// `num / den` as a percentage, rounded half-up to two decimals.
    pub fn from_ratio(num: u64, den: u64) -> Percent {
        assert!(den > 0);
        let (num, den) = (num as u128, den as u128);
        Percent {
            hundredths: ((2 * 10_000 * num + den) / (2 * den)) as u64,
        }
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}%", self.hundredths / 100, self.hundredths % 100)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReportError {
    #[error("reference cycle count is zero")]
    DivisionByZeroReference,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Relative deviation of `ours` from `reference`, in percent.
pub fn error_rate(ours: u64, reference: u64) -> Result<Percent, ReportError> {
    if reference == 0 {
        return Err(ReportError::DivisionByZeroReference);
    }
    Ok(Percent::from_ratio(ours.abs_diff(reference), reference))
}

pub const CSV_HEADER: &str =
    "layer,total_cycles,compute_cycles,stall_cycles,utilization,dram_ifmap,dram_filter,dram_ofmap";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-layer CSV with a trailing `TOTAL` row. Wall clock is left out so equal
/// simulations give identical bytes.
pub fn emit_csv(report: &RunReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let mut totals = [0u64; 6];
    for l in &report.layers {
        let row = [
            l.total_cycles,
            l.compute_cycles,
            l.stall_cycles,
            l.traffic.dram_ifmap_reads,
            l.traffic.dram_filter_reads,
            l.traffic.dram_ofmap_writes,
        ];
        for (acc, v) in totals.iter_mut().zip(row) {
            *acc += v;
        }
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            csv_field(&l.layer_name),
            row[0],
            row[1],
            row[2],
            l.utilization,
            row[3],
            row[4],
            row[5]
        ));
    }
    out.push_str(&format!(
        "TOTAL,{},{},{},{},{},{},{}\n",
        totals[0],
        totals[1],
        totals[2],
        report.utilization(),
        totals[3],
        totals[4],
        totals[5]
    ));
    out
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub layer: String,
    pub total_cycles: u64,
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub utilization: f64,
    pub dram_ifmap: u64,
    pub dram_filter: u64,
    pub dram_ofmap: u64,
}

/// Parses [`emit_csv`] output back into layer rows and the `TOTAL` row.
pub fn parse_csv(text: &str) -> Result<(Vec<CsvRow>, CsvRow), ReportError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| ReportError::Malformed { line: 1, reason: e.to_string() })?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(ReportError::Malformed { line: 1, reason: "unexpected header".into() });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ReportError::Malformed { line, reason: e.to_string() })?;
        let bad = |what: &str| ReportError::Malformed { line, reason: format!("bad {what}") };
        let int = |k: usize, what: &str| rec[k].parse::<u64>().map_err(|_| bad(what));
        rows.push(CsvRow {
            layer: rec[0].to_string(),
            total_cycles: int(1, "total_cycles")?,
            compute_cycles: int(2, "compute_cycles")?,
            stall_cycles: int(3, "stall_cycles")?,
            utilization: rec[4].parse().map_err(|_| bad("utilization"))?,
            dram_ifmap: int(5, "dram_ifmap")?,
            dram_filter: int(6, "dram_filter")?,
            dram_ofmap: int(7, "dram_ofmap")?,
        });
    }
    match rows.pop() {
        Some(total) if total.layer == "TOTAL" => Ok((rows, total)),
        _ => Err(ReportError::Malformed { line: 0, reason: "missing TOTAL row".into() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(name: &str, compute: u64, stall: u64) -> LayerReport {
        LayerReport {
            layer_name: name.into(),
            total_cycles: compute + stall,
            compute_cycles: compute,
            stall_cycles: stall,
            utilization: 0.5,
            traffic: TrafficReport {
                dram_ifmap_reads: 3,
                dram_filter_reads: 4,
                dram_ofmap_writes: 5,
                ..Default::default()
            },
        }
    }

    #[test]
    fn empty_aggregate() {
        let r = aggregate(vec![], "n", 0.0);
        assert_eq!(r.total_cycles, 0);
        assert_eq!(emit_csv(&r), format!("{CSV_HEADER}\nTOTAL,0,0,0,0,0,0,0\n"));
    }

    #[test]
    fn totals_and_order() {
        let r = aggregate(vec![layer("b", 100, 0), layer("a", 40, 20)], "n", 0.1);
        assert_eq!(r.total_cycles, 160);
        assert_eq!(r.layers[0].layer_name, "b");
        assert_eq!(r.summary_line(), "n total_cycles=160 wall_clock=0.100000");
    }

    #[test]
    fn table_rows() {
        assert_eq!(error_rate(552624, 552616).unwrap().to_string(), "0.00%");
        assert_eq!(error_rate(1333481, 1338519).unwrap().to_string(), "0.38%");
        assert_eq!(error_rate(4329971, 4367574).unwrap().to_string(), "0.86%");
    }

    #[test]
    fn reference_is_denominator() {
        assert_eq!(error_rate(150, 100).unwrap().hundredths, 5000);
        assert_eq!(error_rate(100, 150).unwrap().hundredths, 3333);
        assert_eq!(error_rate(7, 7).unwrap().hundredths, 0);
        assert_eq!(error_rate(1, 0), Err(ReportError::DivisionByZeroReference));
    }

    #[test]
    fn half_up() {
        assert_eq!(Percent::from_ratio(1, 20000).to_string(), "0.01%");
        assert_eq!(Percent::from_ratio(1, 20001).to_string(), "0.00%");
        assert_eq!(error_rate(20201, 20000).unwrap().to_string(), "1.01%");
    }

    #[test]
    fn csv_round_trip() {
        let mut a = layer("conv,1", 100, 7);
        a.utilization = 0.123456789012345;
        let r = aggregate(vec![a.clone(), layer("fc", 9, 0)], "n", 3.0);
        let text = emit_csv(&r);
        let (rows, total) = parse_csv(&text).unwrap();
        assert_eq!(rows[0].layer, "conv,1");
        assert_eq!(rows[0].utilization, a.utilization);
        assert_eq!(rows[0].stall_cycles, 7);
        assert_eq!(total.total_cycles, 116);
        assert_eq!(total.dram_filter, 8);
        assert_eq!(emit_csv(&r.clone()), text);
    }
}
