#![allow(dead_code)]

pub mod agent;

use std::collections::HashSet;

use proptest::prelude::*;
use simcoder_core::config::{ArchConfig, Dataflow, LayerDescriptor};

pub fn dataflow() -> impl Strategy<Value = Dataflow> {
    prop::sample::select(Dataflow::ALL.to_vec())
}

/// Valid convolution layers with spatial dims up to `max_hw` and filters up to
/// `max_f`.
pub fn layer(max_hw: u64, max_f: u64, max_c: u64, max_n: u64) -> impl Strategy<Value = LayerDescriptor> {
    (1..=max_hw, 1..=max_hw, 1..=max_c, 1..=max_n, 1..=3u64)
        .prop_flat_map(move |(h, w, c, n, s)| {
            (Just((h, w, c, n, s)), 1..=max_f.min(h), 1..=max_f.min(w))
        })
        .prop_map(|((h, w, c, n, s), fh, fw)| LayerDescriptor {
            name: "l".into(),
            ifmap_h: h,
            ifmap_w: w,
            filter_h: fh,
            filter_w: fw,
            channels: c,
            num_filters: n,
            stride: s,
        })
}

pub fn config(max_dim: u64) -> impl Strategy<Value = ArchConfig> {
    (1..=max_dim, 1..=max_dim, 4..=16u32, 4..=16u32, 4..=16u32, dataflow(), 1..=64u32, 1..=2u64).prop_map(
        |(r, c, i, f, o, df, bw, ws)| {
            ArchConfig::new(r, c, 1 << i, 1 << f, 1 << o, df, bw as f64 / 4.0, ws).unwrap()
        },
    )
}

/// Ifmap elements `(y, x, ch)` read by output pixels `rows` over reduction
/// indices `ts`, enumerated from the convolution definition.
pub fn ifmap_set(
    l: &LayerDescriptor,
    rows: std::ops::Range<u64>,
    ts: std::ops::Range<u64>,
) -> HashSet<(u64, u64, u64)> {
    let out_w = (l.ifmap_w - l.filter_w) / l.stride + 1;
    let mut seen = HashSet::new();
    for p in rows {
        let (oy, ox) = (p / out_w, p % out_w);
        for k in ts.clone() {
            let pos = k / l.channels;
            let (fy, fx) = (pos / l.filter_w, pos % l.filter_w);
            seen.insert((oy * l.stride + fy, ox * l.stride + fx, k % l.channels));
        }
    }
    seen
}
