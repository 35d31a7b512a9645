//! Cycle model of the systolic compute array.
//!
//! [`reference`] holds the per-cycle oracle. The closed forms here are what
//! the simulator actually runs; they must agree with the oracle exactly.
//!
//! For a fold of `r` rows, `c` columns and reduction depth `t`:
//!
//! | dataflow | fill          | stream | drain |
//! |----------|---------------|--------|-------|
//! | OS       | `r + c - 2`   | `t`    | `r`   |
//! | WS / IS  | `2r + c - 2`  | `t`    | `0`   |
//!
//! so every dataflow totals `2r + c + t - 2` cycles per fold.

pub mod reference;

use serde::{Deserialize, Serialize};

use crate::config::{ArchConfig, Dataflow};
use crate::mapping::{FoldPlan, FoldShape};

pub use reference::{simulate_fold_reference, simulate_fold_reference_with_budget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct FoldCycles {
    /// Skew-in before the far-corner PE issues its first MAC.
    pub fill: u64,
    /// From the far corner's first MAC through its last.
    pub stream: u64,
    /// Result extraction after the far corner finishes.
    pub drain: u64,
    pub total: u64,
}

impl FoldCycles {
    pub fn new(fill: u64, stream: u64, drain: u64) -> Self {
        FoldCycles {
            fill,
            stream,
            drain,
            total: fill + stream + drain,
        }
    }
}

pub fn fold_cycles_closed_form(rows: u64, cols: u64, t: u64, dataflow: Dataflow) -> FoldCycles {
    debug_assert!(rows >= 1 && cols >= 1 && t >= 1);
    match dataflow {
        Dataflow::OutputStationary => FoldCycles::new(rows + cols - 2, t, rows),
        Dataflow::WeightStationary | Dataflow::InputStationary => {
            FoldCycles::new(2 * rows + cols - 2, t, 0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeResult {
    pub layer_name: String,
    pub total_compute_cycles: u64,
    pub mac_count: u64,
    /// `mac_count / (array PEs * total_compute_cycles)`.
    pub utilization: f64,
    pub folds: Vec<FoldShape>,
    pub per_fold: Vec<FoldCycles>,
}

impl ComputeResult {
    /// Builds a result from per-fold timings, recomputing the aggregates.
    pub fn from_folds(
        layer_name: &str,
        folds: Vec<FoldShape>,
        per_fold: Vec<FoldCycles>,
        num_pes: u64,
    ) -> Self {
        let total_compute_cycles = per_fold.iter().map(|f| f.total).sum();
        let mac_count = folds.iter().map(FoldShape::macs).sum();
        let utilization = if total_compute_cycles == 0 {
            0.0
        } else {
            mac_count as f64 / (num_pes as f64 * total_compute_cycles as f64)
        };
        ComputeResult {
            layer_name: layer_name.to_string(),
            total_compute_cycles,
            mac_count,
            utilization,
            folds,
            per_fold,
        }
    }
}

/// Folds run back to back with no overlap, so layer cycles are the sum of
/// fold cycles.
pub fn compute_layer(layer_name: &str, plan: &FoldPlan, config: &ArchConfig) -> ComputeResult {
    let folds = plan.shapes();
    let per_fold = folds
        .iter()
        .map(|s| fold_cycles_closed_form(s.rows, s.cols, s.t, plan.dataflow))
        .collect();
    ComputeResult::from_folds(layer_name, folds, per_fold, config.num_pes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{plan_folds, GemmDims};

    fn cfg(rows: u64, cols: u64) -> ArchConfig {
        ArchConfig::new(rows, cols, 1 << 16, 1 << 16, 1 << 16, Dataflow::OutputStationary, 8.0, 1)
            .unwrap()
    }

    #[test]
    fn single_pe_single_mac() {
        for df in Dataflow::ALL {
            assert_eq!(simulate_fold_reference(1, 1, 1, df).total, 2, "{df}");
            assert_eq!(fold_cycles_closed_form(1, 1, 1, df).total, 2, "{df}");
        }
    }

    #[test]
    fn single_pe_accumulates_then_drains() {
        for t in 1..20 {
            assert_eq!(simulate_fold_reference(1, 1, t, Dataflow::OutputStationary).total, t + 1);
        }
    }

    #[test]
    fn layer_with_one_tiny_fold() {
        let c = cfg(4, 4);
        let plan = plan_folds(GemmDims { sr: 1, sc: 1, t: 1 }, &c);
        let res = compute_layer("l", &plan, &c);
        assert_eq!(res.total_compute_cycles, fold_cycles_closed_form(1, 1, 1, c.dataflow).total);
        assert_eq!(res.mac_count, 1);
    }

    #[test]
    fn serialized_folds_add_up() {
        let c = cfg(4, 4);
        let plan = plan_folds(GemmDims { sr: 8, sc: 4, t: 2 }, &c);
        assert_eq!(plan.shapes(), vec![FoldShape::new(4, 4, 2); 2]);
        let res = compute_layer("l", &plan, &c);
        assert_eq!(res.total_compute_cycles, 2 * fold_cycles_closed_form(4, 4, 2, c.dataflow).total);
    }

    #[test]
    fn long_reduction_saturates_array() {
        let c = cfg(16, 8);
        let t = 100 * (16 + 8);
        let plan = plan_folds(GemmDims { sr: 16, sc: 8, t }, &c);
        let res = compute_layer("l", &plan, &c);
        assert!(res.utilization >= 0.9, "{}", res.utilization);
        assert!(res.utilization <= 1.0);
    }

    #[test]
    fn reference_conserves_macs() {
        for df in Dataflow::ALL {
            for (r, c, t) in [(1, 1, 1), (3, 5, 2), (6, 2, 7), (4, 4, 4)] {
                let run = reference::run(r, c, t, df, None);
                assert_eq!(run.total_macs(), r * c * t);
                assert!(run.pe_macs.iter().all(|&m| m == t));
            }
        }
    }
}
