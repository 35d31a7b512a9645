mod common;

use proptest::prelude::*;
use simcoder_core::compute::{compute_layer, simulate_fold_reference_with_budget};
use simcoder_core::config::Dataflow;
use simcoder_core::interconnect::{apply_link_budget, fold_cycles_with_budget, LinkBudget};
use simcoder_core::mapping::{im2col_dims, plan_folds, FoldShape};

#[test]
fn budget_matches_arbitrated_reference() {
    for df in Dataflow::ALL {
        for r in 1..=6 {
            for c in 1..=6 {
                for t in 1..=6 {
                    for rp in [1, 2, 4] {
                        for cp in [1, 2, 4] {
                            for dp in [1, 2, 4] {
                                let b = LinkBudget::new(rp, cp, dp);
                                assert_eq!(
                                    fold_cycles_with_budget(FoldShape::new(r, c, t), df, &b),
                                    simulate_fold_reference_with_budget(r, c, t, df, &b),
                                    "{df:?} r={r} c={c} t={t} ports={rp}/{cp}/{dp}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn default_budget_is_bit_exact_identity(l in common::layer(24, 5, 16, 40), cfg in common::config(16)) {
        let plan = plan_folds(im2col_dims(&l), &cfg);
        let base = compute_layer("l", &plan, &cfg);
        let budgeted = apply_link_budget(&base, &LinkBudget::for_config(&cfg), cfg.dataflow, cfg.num_pes());
        prop_assert_eq!(&budgeted, &base);
        prop_assert_eq!(budgeted.utilization.to_bits(), base.utilization.to_bits());
    }

    #[test]
    fn fewer_ports_never_faster(
        r in 1..=32u64, c in 1..=32u64, t in 1..=64u64, df in common::dataflow(),
        p in (1..=32u64, 1..=32u64, 1..=32u64), which in 0..3usize, cut in 1..=31u64,
    ) {
        let before = LinkBudget::new(p.0, p.1, p.2);
        let mut after = before;
        let slot = match which {
            0 => &mut after.row_ports,
            1 => &mut after.col_ports,
            _ => &mut after.drain_ports,
        };
        *slot = slot.saturating_sub(cut).max(1);
        let s = FoldShape::new(r, c, t);
        let a = fold_cycles_with_budget(s, df, &before);
        let b = fold_cycles_with_budget(s, df, &after);
        prop_assert!(b.total >= a.total);
        prop_assert!(b.fill >= a.fill && b.stream >= a.stream && b.drain >= a.drain);
    }
}
