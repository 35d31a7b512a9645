use proptest::prelude::*;
use simcoder_core::memory::TrafficReport;
use simcoder_core::report::{aggregate, emit_csv, error_rate, parse_csv, LayerReport, ReportError};

/// Half-up two-decimal percentage by schoolbook long division.
fn percent_text(num: u64, den: u64) -> String {
    let whole = num as u128 * 100 / den as u128;
    let mut rem = num as u128 * 100 % den as u128;
    let mut digits = Vec::new();
    for _ in 0..3 {
        rem *= 10;
        digits.push(rem / den as u128);
        rem %= den as u128;
    }
    let mut scaled = whole * 100 + digits[0] * 10 + digits[1];
    if digits[2] >= 5 {
        scaled += 1;
    }
    format!("{}.{:02}%", scaled / 100, scaled % 100)
}

fn layer_report() -> impl Strategy<Value = LayerReport> {
    ("[a-z][a-z0-9_ ,\"]{0,12}", 0..1u64 << 40, 0..1u64 << 40, 0.0..=1.0f64, 0..1u64 << 40, 0..1u64 << 40, 0..1u64 << 40)
        .prop_map(|(name, compute, stall, util, i, f, o)| LayerReport {
            layer_name: name,
            total_cycles: compute + stall,
            compute_cycles: compute,
            stall_cycles: stall,
            utilization: util,
            traffic: TrafficReport {
                dram_ifmap_reads: i,
                dram_filter_reads: f,
                dram_ofmap_writes: o,
                ..TrafficReport::default()
            },
        })
}

proptest! {
    #[test]
    fn self_error_is_zero(x in 1..u64::MAX) {
        prop_assert_eq!(error_rate(x, x).unwrap().to_string(), "0.00%");
    }

    #[test]
    fn reference_is_the_denominator(a in 1..1u64 << 48, b in 1..1u64 << 48) {
        prop_assert_eq!(error_rate(a, b).unwrap().to_string(), percent_text(a.abs_diff(b), b));
        prop_assert_eq!(error_rate(b, a).unwrap().to_string(), percent_text(a.abs_diff(b), a));
    }

    #[test]
    fn csv_round_trips(layers in prop::collection::vec(layer_report(), 0..8)) {
        let run = aggregate(layers.clone(), "net", 0.5);
        let text = emit_csv(&run);
        let (rows, total) = parse_csv(&text).unwrap();
        prop_assert_eq!(rows.len(), layers.len());
        for (row, l) in rows.iter().zip(&layers) {
            prop_assert_eq!(&row.layer, &l.layer_name);
            prop_assert_eq!((row.total_cycles, row.compute_cycles, row.stall_cycles), (l.total_cycles, l.compute_cycles, l.stall_cycles));
            prop_assert_eq!(row.utilization.to_bits(), l.utilization.to_bits());
            prop_assert_eq!(
                (row.dram_ifmap, row.dram_filter, row.dram_ofmap),
                (l.traffic.dram_ifmap_reads, l.traffic.dram_filter_reads, l.traffic.dram_ofmap_writes)
            );
        }
        prop_assert_eq!(total.total_cycles, run.total_cycles);
        prop_assert_eq!(total.total_cycles, layers.iter().map(|l| l.total_cycles).sum::<u64>());
        prop_assert_eq!(emit_csv(&aggregate(layers, "net", 9.0)), text);
    }
}

#[test]
fn zero_reference_rejected() {
    assert_eq!(error_rate(5, 0), Err(ReportError::DivisionByZeroReference));
}

#[test]
fn numbers_have_no_grouping() {
    let l = LayerReport {
        layer_name: "big".into(),
        total_cycles: 1_234_567_890,
        compute_cycles: 1_234_567_890,
        stall_cycles: 0,
        utilization: 0.5,
        traffic: TrafficReport::default(),
    };
    let text = emit_csv(&aggregate(vec![l], "n", 0.0));
    assert!(text.contains("big,1234567890,1234567890,0,0.5,0,0,0\n"));
    assert!(text.ends_with("TOTAL,1234567890,1234567890,0,0.5,0,0,0\n"));
}
