//! Lowering of convolution layers onto the systolic array.
//!
//! Every layer becomes a GEMM via im2col with "valid" (unpadded) windows:
//! the output matrix has `sr` rows (output pixels) and `sc` columns
//! (filters), and each output is a dot product of depth `t`. The GEMM is then
//! cut into folds no larger than the physical array, visited row-major.
//!
//! Reduction indices follow filter order `(fy, fx, channel)` with the channel
//! varying fastest.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::config::{ArchConfig, Dataflow, LayerDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GemmDims {
    pub sr: u64,
    pub sc: u64,
    pub t: u64,
}

/// Spatial size of the output feature map.
pub fn output_hw(layer: &LayerDescriptor) -> (u64, u64) {
    (
        (layer.ifmap_h - layer.filter_h) / layer.stride + 1,
        (layer.ifmap_w - layer.filter_w) / layer.stride + 1,
    )
}

pub fn im2col_dims(layer: &LayerDescriptor) -> GemmDims {
    let (out_h, out_w) = output_hw(layer);
    GemmDims {
        sr: out_h * out_w,
        sc: layer.num_filters,
        t: layer.filter_h * layer.filter_w * layer.channels,
    }
}

/// Geometry of one pass through the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FoldShape {
    pub rows: u64,
    pub cols: u64,
    pub t: u64,
}

impl FoldShape {
    pub fn new(rows: u64, cols: u64, t: u64) -> Self {
        FoldShape { rows, cols, t }
    }

    pub fn macs(&self) -> u64 {
        self.rows * self.cols * self.t
    }
}

/// A fold together with the slice of the GEMM it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub row_fold: u64,
    pub col_fold: u64,
    /// First output pixel (GEMM row) covered.
    pub row_offset: u64,
    pub rows_used: u64,
    /// First filter (GEMM column) covered.
    pub col_offset: u64,
    pub cols_used: u64,
    /// First reduction index covered; non-zero only after capacity tiling.
    pub t_offset: u64,
    pub t: u64,
}

impl Fold {
    pub fn shape(&self) -> FoldShape {
        FoldShape::new(self.rows_used, self.cols_used, self.t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub row_folds: u64,
    pub col_folds: u64,
    pub folds: Vec<Fold>,
    pub dims: GemmDims,
    pub dataflow: Dataflow,
}

impl FoldPlan {
    pub fn shapes(&self) -> Vec<FoldShape> {
        self.folds.iter().map(Fold::shape).collect()
    }

    pub fn total_macs(&self) -> u64 {
        self.folds.iter().map(|f| f.shape().macs()).sum()
    }
}

/// Tiles the GEMM onto the array. Interior folds use the full array; the last
/// fold in each direction carries the remainder.
pub fn plan_folds(dims: GemmDims, config: &ArchConfig) -> FoldPlan {
    let row_folds = dims.sr.div_ceil(config.array_rows);
    let col_folds = dims.sc.div_ceil(config.array_cols);
    let mut folds = Vec::with_capacity((row_folds * col_folds) as usize);
    for rf in 0..row_folds {
        let row_offset = rf * config.array_rows;
        let rows_used = config.array_rows.min(dims.sr - row_offset);
        for cf in 0..col_folds {
            let col_offset = cf * config.array_cols;
            folds.push(Fold {
                row_fold: rf,
                col_fold: cf,
                row_offset,
                rows_used,
                col_offset,
                cols_used: config.array_cols.min(dims.sc - col_offset),
                t_offset: 0,
                t: dims.t,
            });
        }
    }
    FoldPlan {
        row_folds,
        col_folds,
        folds,
        dims,
        dataflow: config.dataflow,
    }
}

/// Unique operand words touched by one fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Footprint {
    pub ifmap_words: u64,
    pub filter_words: u64,
    pub ofmap_words: u64,
}

/// Word footprint of a fold. Overlapping receptive fields are deduplicated,
/// so `ifmap_words <= rows_used * t`.
///
/// Dataflow changes which operand is pinned but not which elements a fold
/// touches; the parameter is kept so callers don't have to special-case it.
pub fn tile_footprint(fold: &Fold, layer: &LayerDescriptor, _dataflow: Dataflow) -> Footprint {
    Footprint {
        ifmap_words: ifmap_words(
            layer,
            fold.row_offset,
            fold.rows_used,
            fold.t_offset,
            fold.t,
        ),
        filter_words: fold.cols_used * fold.t,
        ofmap_words: fold.rows_used * fold.cols_used,
    }
}

/// Unique ifmap elements read by output pixels `[row_offset, row_offset+rows)`
/// over reduction indices `[t_offset, t_offset+t)`.
pub fn ifmap_words(
    layer: &LayerDescriptor,
    row_offset: u64,
    rows: u64,
    t_offset: u64,
    t: u64,
) -> u64 {
    if rows == 0 || t == 0 {
        return 0;
    }
    let c = layer.channels;
    let (_, out_w) = output_hw(layer);
    let t_end = t_offset + t;
    let first_pos = t_offset / c;
    let last_pos = (t_end - 1) / c;

    // Each filter position contributes a channel interval at some (y, x).
    let mut cover: HashMap<(u64, u64), Vec<(u64, u64)>> = HashMap::new();
    for pos in first_pos..=last_pos {
        let fy = pos / layer.filter_w;
        let fx = pos % layer.filter_w;
        let lo = t_offset.max(pos * c) - pos * c;
        let hi = t_end.min((pos + 1) * c) - pos * c;
        for pixel in row_offset..row_offset + rows {
            let y = (pixel / out_w) * layer.stride + fy;
            let x = (pixel % out_w) * layer.stride + fx;
            cover.entry((y, x)).or_default().push((lo, hi));
        }
    }

    cover
        .into_values()
        .map(|mut spans| {
            spans.sort_unstable();
            let mut total = 0;
            let mut cur: Option<(u64, u64)> = None;
            for (lo, hi) in spans {
                match cur {
                    Some((clo, chi)) if lo <= chi => cur = Some((clo, chi.max(hi))),
                    Some((clo, chi)) => {
                        total += chi - clo;
                        cur = Some((lo, hi));
                    }
                    None => cur = Some((lo, hi)),
                }
            }
            total + cur.map_or(0, |(lo, hi)| hi - lo)
        })
        .sum()
}
