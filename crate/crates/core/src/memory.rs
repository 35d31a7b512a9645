//! Scratchpads and off-chip traffic.
//!
//! Each scratchpad is double buffered, so a tile may use at most half of it.
//! Folds whose footprint does not fit have their reduction depth bisected
//! until every piece does. Reuse policy:
//!
//! * the ifmap tile of a row fold (all of `t`) is fetched once per row fold
//!   when it fits in half the ifmap scratchpad, otherwise each fold fetches
//!   its own slice;
//! * the whole filter matrix is fetched once when it fits in half the filter
//!   scratchpad, otherwise every fold re-fetches its filter slice;
//! * outputs stream to DRAM once and are never re-read.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::ComputeResult;
use crate::config::{ArchConfig, LayerDescriptor};
use crate::mapping::{ifmap_words, tile_footprint, Fold, FoldPlan, Footprint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Buffer {
    Ifmap,
    Filter,
    Ofmap,
}

impl std::fmt::Display for Buffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Buffer::Ifmap => "ifmap",
            Buffer::Filter => "filter",
            Buffer::Ofmap => "ofmap",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MemoryError {
    #[error("layer `{layer}`: a single-step tile does not fit in half of the {buffer} scratchpad")]
    InfeasibleTile { layer: String, buffer: Buffer },
}

fn fits(words: u64, sram_bytes: u64, word_size: u64) -> bool {
    2 * words * word_size <= sram_bytes
}

/// First buffer whose half-capacity `fp` overflows, if any.
pub fn overflowing_buffer(fp: &Footprint, config: &ArchConfig) -> Option<Buffer> {
    let ws = config.word_size;
    if !fits(fp.ifmap_words, config.ifmap_sram, ws) {
        Some(Buffer::Ifmap)
    } else if !fits(fp.filter_words, config.filter_sram, ws) {
        Some(Buffer::Filter)
    } else if !fits(fp.ofmap_words, config.ofmap_sram, ws) {
        Some(Buffer::Ofmap)
    } else {
        None
    }
}

fn bisect(fold: Fold, layer: &LayerDescriptor, config: &ArchConfig, out: &mut Vec<Fold>) -> Result<(), MemoryError> {
    let fp = tile_footprint(&fold, layer, config.dataflow);
    match overflowing_buffer(&fp, config) {
        None => {
            out.push(fold);
            Ok(())
        }
        Some(buffer) if buffer == Buffer::Ofmap || fold.t == 1 => Err(MemoryError::InfeasibleTile {
            layer: layer.name.clone(),
            buffer,
        }),
        Some(_) => {
            let head = fold.t.div_ceil(2);
            bisect(Fold { t: head, ..fold }, layer, config, out)?;
            bisect(
                Fold {
                    t_offset: fold.t_offset + head,
                    t: fold.t - head,
                    ..fold
                },
                layer,
                config,
                out,
            )
        }
    }
}

/// Splits the reduction depth of oversized folds. Sub-folds stay in place
/// (same row/col fold, consecutive reduction slices).
pub fn capacity_tile(plan: &FoldPlan, layer: &LayerDescriptor, config: &ArchConfig) -> Result<FoldPlan, MemoryError> {
    let mut folds = Vec::with_capacity(plan.folds.len());
    for &fold in &plan.folds {
        bisect(fold, layer, config, &mut folds)?;
    }
    Ok(FoldPlan {
        folds,
        ..plan.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrafficReport {
    pub dram_ifmap_reads: u64,
    pub dram_filter_reads: u64,
    pub dram_ofmap_writes: u64,
    pub sram_ifmap_reads: u64,
    pub sram_filter_reads: u64,
    pub sram_ofmap_writes: u64,
    /// DRAM words (ifmap + filter) fetched ahead of each fold, in fold order.
    pub fold_fetch_words: Vec<u64>,
}

impl TrafficReport {
    pub fn dram_reads(&self) -> u64 {
        self.dram_ifmap_reads + self.dram_filter_reads
    }
}

/// DRAM and scratchpad word counts for a capacity-tiled plan.
pub fn traffic(plan: &FoldPlan, layer: &LayerDescriptor, config: &ArchConfig) -> TrafficReport {
    let ws = config.word_size;
    let dims = plan.dims;
    let filter_resident = fits(dims.sc * dims.t, config.filter_sram, ws);

    let mut report = TrafficReport {
        dram_ofmap_writes: dims.sr * dims.sc,
        ..TrafficReport::default()
    };
    let mut current_row_fold = None;
    let mut row_tile_resident = false;

    for fold in &plan.folds {
        let mut fetch = 0;

        if current_row_fold != Some(fold.row_fold) {
            current_row_fold = Some(fold.row_fold);
            let row_tile = ifmap_words(layer, fold.row_offset, fold.rows_used, 0, dims.t);
            row_tile_resident = fits(row_tile, config.ifmap_sram, ws);
            if row_tile_resident {
                fetch += row_tile;
            }
        }
        if !row_tile_resident {
            fetch += ifmap_words(layer, fold.row_offset, fold.rows_used, fold.t_offset, fold.t);
        }
        report.dram_ifmap_reads += fetch;

        let filter_fetch = if !filter_resident || fold.row_fold == 0 {
            fold.cols_used * fold.t
        } else {
            0
        };
        report.dram_filter_reads += filter_fetch;
        fetch += filter_fetch;

        report.sram_ifmap_reads += fold.rows_used * fold.t;
        report.sram_filter_reads += fold.cols_used * fold.t;
        report.sram_ofmap_writes += fold.rows_used * fold.cols_used;
        report.fold_fetch_words.push(fetch);
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bound {
    ComputeBound,
    MemoryBound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StallReport {
    pub stall_cycles: u64,
    pub bound: Bound,
    pub per_fold: Vec<u64>,
}

fn fetch_cycles(words: u64, bandwidth: f64) -> u64 {
    (words as f64 / bandwidth).ceil() as u64
}

/// Prefetch model: fold k+1's operands load while fold k computes, so only
/// the excess fetch time stalls the array. Fold 0 pays its full fetch.
pub fn stalls(traffic: &TrafficReport, compute: &ComputeResult, config: &ArchConfig) -> StallReport {
    assert_eq!(
        traffic.fold_fetch_words.len(),
        compute.per_fold.len(),
        "traffic and compute must describe the same folds"
    );
    let bw = config.dram_bandwidth;
    let per_fold: Vec<u64> = traffic
        .fold_fetch_words
        .iter()
        .enumerate()
        .map(|(k, &words)| {
            let fetch = fetch_cycles(words, bw);
            if k == 0 {
                fetch
            } else {
                fetch.saturating_sub(compute.per_fold[k - 1].total)
            }
        })
        .collect();
    let stall_cycles = per_fold.iter().sum();
    StallReport {
        stall_cycles,
        bound: if stall_cycles > 0 {
            Bound::MemoryBound
        } else {
            Bound::ComputeBound
        },
        per_fold,
    }
}

pub fn total_layer_cycles(compute: &ComputeResult, stall: &StallReport) -> u64 {
    compute.total_compute_cycles + stall.stall_cycles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::{compute_layer, FoldCycles};
    use crate::config::Dataflow;
    use crate::mapping::{im2col_dims, plan_folds, FoldShape};

    fn layer(ih: u64, fh: u64, c: u64, n: u64, s: u64) -> LayerDescriptor {
        LayerDescriptor {
            name: "l".into(),
            ifmap_h: ih,
            ifmap_w: ih,
            filter_h: fh,
            filter_w: fh,
            channels: c,
            num_filters: n,
            stride: s,
        }
    }

    fn cfg(rows: u64, cols: u64, sram: [u64; 3], bw: f64) -> ArchConfig {
        ArchConfig::new(rows, cols, sram[0], sram[1], sram[2], Dataflow::OutputStationary, bw, 1).unwrap()
    }

    #[test]
    fn fitting_plan_unchanged() {
        let l = layer(8, 3, 2, 4, 1);
        let c = cfg(4, 4, [1 << 20; 3], 4.0);
        let plan = plan_folds(im2col_dims(&l), &c);
        assert_eq!(capacity_tile(&plan, &l, &c).unwrap(), plan);
    }

    #[test]
    fn oversized_filter_split_in_half() {
        // 1x1 conv: one fold of 4 cols x t=8. Filter tile = 32 words, half
        // capacity = 16 words, so t splits into two slices of 4.
        let l = LayerDescriptor::fully_connected("fc", 8, 4);
        let c = cfg(4, 4, [1 << 10, 32, 1 << 10], 4.0);
        let plan = plan_folds(im2col_dims(&l), &c);
        let tiled = capacity_tile(&plan, &l, &c).unwrap();
        assert_eq!(tiled.shapes(), vec![FoldShape::new(1, 4, 4); 2]);
        assert_eq!(tiled.folds[1].t_offset, 4);
        for f in &tiled.folds {
            let fp = tile_footprint(f, &l, c.dataflow);
            assert!(2 * fp.filter_words <= c.filter_sram);
        }
        assert_eq!(tiled.total_macs(), plan.total_macs());
    }

    #[test]
    fn one_word_buffers_are_infeasible() {
        let l = LayerDescriptor::fully_connected("tiny", 1, 1);
        let c = cfg(1, 1, [1, 1, 1], 1.0);
        let plan = plan_folds(im2col_dims(&l), &c);
        assert!(matches!(
            capacity_tile(&plan, &l, &c),
            Err(MemoryError::InfeasibleTile { .. })
        ));
    }

    #[test]
    fn identity_layer_traffic() {
        let l = LayerDescriptor::fully_connected("id", 1, 1);
        let c = cfg(4, 4, [1 << 10; 3], 4.0);
        let plan = plan_folds(im2col_dims(&l), &c);
        let t = traffic(&plan, &l, &c);
        assert_eq!(
            (t.dram_ifmap_reads, t.dram_filter_reads, t.dram_ofmap_writes),
            (1, 1, 1)
        );
        assert_eq!(
            (t.sram_ifmap_reads, t.sram_filter_reads, t.sram_ofmap_writes),
            (1, 1, 1)
        );
    }

    #[test]
    fn ifmap_fetched_once_per_row_fold() {
        // 2 col folds share each row fold's ifmap tile.
        let l = layer(5, 3, 1, 8, 1);
        let c = cfg(4, 4, [1 << 10; 3], 4.0);
        let plan = plan_folds(im2col_dims(&l), &c);
        assert_eq!((plan.row_folds, plan.col_folds), (3, 2));
        let t = traffic(&plan, &l, &c);
        let per_row: u64 = (0..plan.row_folds)
            .map(|rf| {
                let f = plan.folds[(rf * 2) as usize];
                ifmap_words(&l, f.row_offset, f.rows_used, 0, 9)
            })
            .sum();
        assert_eq!(t.dram_ifmap_reads, per_row);
        assert_eq!(t.dram_ofmap_writes, 9 * 8);
        assert_eq!(t.dram_filter_reads, 8 * 9);
    }

    #[test]
    fn cold_start_only_with_ample_bandwidth() {
        let l = layer(6, 3, 2, 4, 1);
        let c = cfg(4, 4, [1 << 12; 3], 10_000.0);
        let plan = plan_folds(im2col_dims(&l), &c);
        let tr = traffic(&plan, &l, &c);
        let comp = compute_layer(&l.name, &plan, &c);
        let st = stalls(&tr, &comp, &c);
        assert_eq!(st.stall_cycles, fetch_cycles(tr.fold_fetch_words[0], 10_000.0));
        assert_eq!(st.stall_cycles, 1);
        assert_eq!(st.bound, Bound::MemoryBound);
    }

    #[test]
    fn steady_state_stall_arithmetic() {
        // 100 words at 1 word/cycle against 40 compute cycles: 60 stalls.
        let tr = TrafficReport {
            fold_fetch_words: vec![100, 100, 100],
            ..Default::default()
        };
        let fold = FoldCycles::new(0, 40, 0);
        let comp = ComputeResult::from_folds("l", vec![FoldShape::new(1, 1, 40); 3], vec![fold; 3], 1);
        let c = cfg(1, 1, [16; 3], 1.0);
        let st = stalls(&tr, &comp, &c);
        assert_eq!(st.per_fold, vec![100, 60, 60]);
        assert_eq!(st.stall_cycles, 220);
    }

    #[test]
    fn no_folds_no_stalls() {
        let comp = ComputeResult::from_folds("l", vec![], vec![], 1);
        let c = cfg(1, 1, [16; 3], 1.0);
        let st = stalls(&TrafficReport::default(), &comp, &c);
        assert_eq!(st.stall_cycles, 0);
        assert_eq!(st.bound, Bound::ComputeBound);
    }

    #[test]
    fn layer_total_adds_stalls() {
        let comp = ComputeResult::from_folds("l", vec![FoldShape::new(1, 1, 98)], vec![FoldCycles::new(0, 98, 2)], 1);
        let none = StallReport { stall_cycles: 0, bound: Bound::ComputeBound, per_fold: vec![0] };
        let some = StallReport { stall_cycles: 60, bound: Bound::MemoryBound, per_fold: vec![60] };
        assert_eq!(total_layer_cycles(&comp, &none), 100);
        assert_eq!(total_layer_cycles(&comp, &some), 160);
    }
}
