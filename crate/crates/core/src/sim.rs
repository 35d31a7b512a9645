//! End-to-end layer and network simulation.

use std::time::Instant;

use thiserror::Error;

use crate::compute::{compute_layer, ComputeResult};
use crate::config::{ArchConfig, LayerDescriptor, WorkloadTopology};
use crate::interconnect::{apply_link_budget, LinkBudget};
use crate::mapping::{im2col_dims, plan_folds};
use crate::memory::{capacity_tile, stalls, total_layer_cycles, traffic, MemoryError, StallReport, TrafficReport};
use crate::report::{aggregate, LayerReport, RunReport};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("layer `{layer}`: {reason}")]
    InvalidLayer { layer: String, reason: String },
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Every intermediate of one layer, for callers that want more than the
/// report row.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub compute: ComputeResult,
    pub traffic: TrafficReport,
    pub stall: StallReport,
}

pub fn trace_layer(layer: &LayerDescriptor, config: &ArchConfig) -> Result<LayerTrace, SimError> {
    layer.check().map_err(|reason| SimError::InvalidLayer {
        layer: layer.name.clone(),
        reason,
    })?;
    let plan = plan_folds(im2col_dims(layer), config);
    let plan = capacity_tile(&plan, layer, config)?;
    let compute = compute_layer(&layer.name, &plan, config);
    let compute = apply_link_budget(&compute, &LinkBudget::for_config(config), config.dataflow, config.num_pes());
    let traffic = traffic(&plan, layer, config);
    let stall = stalls(&traffic, &compute, config);
    Ok(LayerTrace { compute, traffic, stall })
}

pub fn simulate_layer(layer: &LayerDescriptor, config: &ArchConfig) -> Result<LayerReport, SimError> {
    let t = trace_layer(layer, config)?;
    Ok(LayerReport {
        layer_name: layer.name.clone(),
        total_cycles: total_layer_cycles(&t.compute, &t.stall),
        compute_cycles: t.compute.total_compute_cycles,
        stall_cycles: t.stall.stall_cycles,
        utilization: t.compute.utilization,
        traffic: t.traffic,
    })
}

/// Simulates all layers, spreading them over up to `jobs` threads. Layer order
/// in the report always follows the topology.
pub fn simulate_network(topology: &WorkloadTopology, config: &ArchConfig, jobs: usize) -> Result<RunReport, SimError> {
    let start = Instant::now();
    let layers = &topology.layers;
    let jobs = jobs.clamp(1, layers.len().max(1));
    let results: Vec<Result<LayerReport, SimError>> = if jobs == 1 {
        layers.iter().map(|l| simulate_layer(l, config)).collect()
    } else {
        let chunk = layers.len().div_ceil(jobs);
        std::thread::scope(|s| {
            let handles: Vec<_> = layers
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|l| simulate_layer(l, config)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("simulation thread panicked"))
                .collect()
        })
    };
    let layers = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let wall_clock = start.elapsed().as_secs_f64();
    log::debug!("{}: {} layers in {wall_clock:.6}s", topology.network_name, layers.len());
    Ok(aggregate(layers, &topology.network_name, wall_clock))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_topology_csv, Dataflow};

    fn cfg() -> ArchConfig {
        ArchConfig::new(8, 8, 64 * 1024, 64 * 1024, 64 * 1024, Dataflow::OutputStationary, 10.0, 1).unwrap()
    }

    const TOPO: &str = "layer,ifmap_h,ifmap_w,filter_h,filter_w,channels,num_filters,stride\n\
        c1,16,16,3,3,3,8,1\nc2,14,14,3,3,8,16,2\nfc,1,1,1,1,576,10,1\n";

    #[test]
    fn layer_totals_consistent() {
        let topo = parse_topology_csv("t", TOPO).unwrap();
        let r = simulate_network(&topo, &cfg(), 1).unwrap();
        assert_eq!(r.layers.len(), 3);
        for l in &r.layers {
            assert_eq!(l.total_cycles, l.compute_cycles + l.stall_cycles);
            assert!(l.utilization > 0.0 && l.utilization <= 1.0);
        }
        assert_eq!(r.total_cycles, r.layers.iter().map(|l| l.total_cycles).sum::<u64>());
    }

    #[test]
    fn parallel_matches_serial() {
        let topo = parse_topology_csv("t", TOPO).unwrap();
        let a = simulate_network(&topo, &cfg(), 1).unwrap();
        let b = simulate_network(&topo, &cfg(), 4).unwrap();
        assert_eq!(a.layers, b.layers);
    }

    #[test]
    fn empty_network() {
        let topo = WorkloadTopology { network_name: "e".into(), layers: vec![] };
        assert_eq!(simulate_network(&topo, &cfg(), 3).unwrap().total_cycles, 0);
    }
}
