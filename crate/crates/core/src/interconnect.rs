//! Edge-port bandwidth between the scratchpads and the PE array.
//!
//! Three edges matter: the west edge (one lane per used row), the north edge
//! (one lane per used column) and the south drain edge (one lane per used
//! column). While an edge carries data it moves one word per lane per array
//! beat; with fewer ports than lanes the beat stretches to
//! `ceil(lanes / ports)` cycles. When several edges are busy in the same
//! beat the slowest one sets the pace.
//!
//! The default budget has one port per lane of the physical array, which
//! makes everything here an identity.

use serde::{Deserialize, Serialize};

use crate::compute::{ComputeResult, FoldCycles};
use crate::config::{ArchConfig, Dataflow};
use crate::mapping::FoldShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinkBudget {
    /// West edge, words per cycle.
    pub row_ports: u64,
    /// North edge, words per cycle.
    pub col_ports: u64,
    /// South edge, words per cycle.
    pub drain_ports: u64,
}

impl LinkBudget {
    pub fn new(row_ports: u64, col_ports: u64, drain_ports: u64) -> Self {
        assert!(row_ports >= 1 && col_ports >= 1 && drain_ports >= 1, "ports must be >= 1");
        LinkBudget {
            row_ports,
            col_ports,
            drain_ports,
        }
    }

    /// Geometry-derived budget, with any overrides from the config applied.
    pub fn for_config(config: &ArchConfig) -> Self {
        LinkBudget::new(
            config.ports.row.unwrap_or(config.array_rows),
            config.ports.col.unwrap_or(config.array_cols),
            config.ports.drain.unwrap_or(config.array_cols),
        )
    }

    pub fn is_unconstrained_for(&self, config: &ArchConfig) -> bool {
        self.row_ports >= config.array_rows
            && self.col_ports >= config.array_cols
            && self.drain_ports >= config.array_cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Edge {
    West,
    North,
    South,
}

#[derive(Debug, Clone, Copy)]
struct Window {
    edge: Edge,
    start: u64,
    end: u64,
}

/// Beat-level schedule of one fold: when each edge is busy and where the
/// phase boundaries fall.
#[derive(Debug, Clone)]
struct Timeline {
    windows: Vec<Window>,
    fill_end: u64,
    stream_end: u64,
    total: u64,
}

fn timeline(shape: FoldShape, dataflow: Dataflow) -> Timeline {
    let FoldShape { rows: r, cols: c, t } = shape;
    match dataflow {
        Dataflow::OutputStationary => Timeline {
            windows: vec![
                Window { edge: Edge::West, start: 0, end: r + t - 1 },
                Window { edge: Edge::North, start: 0, end: c + t - 1 },
                Window { edge: Edge::South, start: r + t - 1, end: 2 * r + c + t - 2 },
            ],
            fill_end: r + c - 2,
            stream_end: r + c + t - 2,
            total: 2 * r + c + t - 2,
        },
        Dataflow::WeightStationary | Dataflow::InputStationary => Timeline {
            windows: vec![
                Window { edge: Edge::North, start: 0, end: r },
                Window { edge: Edge::West, start: r, end: 2 * r + t - 1 },
                Window { edge: Edge::South, start: 2 * r - 1, end: 2 * r + c + t - 2 },
            ],
            fill_end: 2 * r + c - 2,
            stream_end: 2 * r + c + t - 2,
            total: 2 * r + c + t - 2,
        },
    }
}

fn edge_multiplier(edge: Edge, shape: FoldShape, budget: &LinkBudget) -> u64 {
    match edge {
        Edge::West => shape.rows.div_ceil(budget.row_ports),
        Edge::North => shape.cols.div_ceil(budget.col_ports),
        Edge::South => shape.cols.div_ceil(budget.drain_ports),
    }
}

/// Slowdown of the steady-state operand injection for a fold: the worst
/// `ceil(lanes / ports)` over the edges feeding the stream phase.
pub fn injection_slowdown(fold: FoldShape, dataflow: Dataflow, budget: &LinkBudget) -> u64 {
    let west = edge_multiplier(Edge::West, fold, budget);
    match dataflow {
        Dataflow::OutputStationary => west.max(edge_multiplier(Edge::North, fold, budget)),
        Dataflow::WeightStationary | Dataflow::InputStationary => west,
    }
}

/// Fold cycles under a port budget. Each beat costs the largest multiplier
/// among the edges busy in it (at least one cycle); the schedule is piecewise
/// constant so this sums a handful of segments.
pub fn fold_cycles_with_budget(shape: FoldShape, dataflow: Dataflow, budget: &LinkBudget) -> FoldCycles {
    let tl = timeline(shape, dataflow);
    let mut cuts = vec![0, tl.fill_end, tl.stream_end, tl.total];
    for w in &tl.windows {
        cuts.push(w.start);
        cuts.push(w.end);
    }
    cuts.sort_unstable();
    cuts.dedup();

    let mut phases = [0u64; 3];
    for seg in cuts.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        if lo >= tl.total {
            break;
        }
        let cost = tl
            .windows
            .iter()
            .filter(|w| w.start <= lo && hi <= w.end)
            .map(|w| edge_multiplier(w.edge, shape, budget))
            .max()
            .unwrap_or(1)
            .max(1);
        let phase = if lo < tl.fill_end {
            0
        } else if lo < tl.stream_end {
            1
        } else {
            2
        };
        phases[phase] += (hi - lo) * cost;
    }
    FoldCycles::new(phases[0], phases[1], phases[2])
}

/// Re-times every fold of a compute result under `budget`.
pub fn apply_link_budget(
    compute: &ComputeResult,
    budget: &LinkBudget,
    dataflow: Dataflow,
    num_pes: u64,
) -> ComputeResult {
    let per_fold = compute
        .folds
        .iter()
        .map(|&s| fold_cycles_with_budget(s, dataflow, budget))
        .collect();
    ComputeResult::from_folds(&compute.layer_name, compute.folds.clone(), per_fold, num_pes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::{compute_layer, fold_cycles_closed_form, reference};
    use crate::mapping::{plan_folds, GemmDims};

    fn cfg(rows: u64, cols: u64, df: Dataflow) -> ArchConfig {
        ArchConfig::new(rows, cols, 1 << 16, 1 << 16, 1 << 16, df, 8.0, 1).unwrap()
    }

    #[test]
    fn default_budget_is_unit_slowdown() {
        let c = cfg(8, 4, Dataflow::OutputStationary);
        let b = LinkBudget::for_config(&c);
        for df in Dataflow::ALL {
            for s in [FoldShape::new(8, 4, 3), FoldShape::new(1, 1, 9), FoldShape::new(5, 2, 1)] {
                assert_eq!(injection_slowdown(s, df, &b), 1);
            }
        }
    }

    #[test]
    fn halved_rows_double_full_height_folds() {
        let b = LinkBudget::new(4, 8, 8);
        for df in Dataflow::ALL {
            assert_eq!(injection_slowdown(FoldShape::new(8, 8, 5), df, &b), 2);
        }
    }

    #[test]
    fn single_lane_fold_never_slowed() {
        for ports in 1..4 {
            let b = LinkBudget::new(ports, ports, ports);
            for df in Dataflow::ALL {
                assert_eq!(injection_slowdown(FoldShape::new(1, 1, 17), df, &b), 1);
            }
        }
    }

    #[test]
    fn default_budget_is_identity() {
        for df in Dataflow::ALL {
            let c = cfg(6, 4, df);
            let plan = plan_folds(GemmDims { sr: 13, sc: 9, t: 11 }, &c);
            let res = compute_layer("l", &plan, &c);
            let out = apply_link_budget(&res, &LinkBudget::for_config(&c), df, c.num_pes());
            assert_eq!(out, res);
        }
    }

    #[test]
    fn halving_all_ports_doubles_stream() {
        for df in Dataflow::ALL {
            let shape = FoldShape::new(8, 8, 20);
            let base = fold_cycles_closed_form(8, 8, 20, df);
            let slow = fold_cycles_with_budget(shape, df, &LinkBudget::new(4, 4, 4));
            assert_eq!(slow.stream, 2 * base.stream, "{df}");
            let oracle = reference::simulate_fold_reference_with_budget(8, 8, 20, df, &LinkBudget::new(4, 4, 4));
            assert_eq!(slow, oracle, "{df}");
        }
    }
}
