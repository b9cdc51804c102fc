use proptest::prelude::*;
use smartotps::cost::{grid_params, run_lifecycle, CostTable};
use smartotps::payload::{Call, OpType};
use smartotps::protocols::{World, WorldConfig};
use smartotps::TreeParams;

/// Mean cost per transfer straight from ledger receipts of a full run.
fn ledger_ot_cost(params: TreeParams, table: &CostTable) -> f64 {
    let mut w = World::bootstrap(WorldConfig::new(5, params).depth(0)).unwrap();
    w.fund(1_000_000).unwrap();
    let mut total = 0u64;
    let mut count = 0u64;
    for _ in 0..params.ops_per_tree() {
        let r = w.run_operation(OpType::Transfer, "bob", 1).unwrap();
        assert!(r.skipped.is_empty());
        for id in [r.init_tx, r.confirm_tx] {
            total += table.price(&w.ledger.receipt(id).unwrap().trace);
        }
        count += 1;
    }
    assert_eq!(w.wallet_state().next_op_id, params.n - 1);
    let deploy = w
        .ledger
        .blocks()
        .iter()
        .flat_map(|b| &b.receipts)
        .find(|r| matches!(r.tx.call, Call::Deploy { .. }))
        .unwrap();
    total as f64 / count as f64 + table.price(&deploy.trace) as f64 / params.n as f64
}

#[test]
fn lifecycle_cost_matches_ledger_receipts() {
    let table = CostTable::default();
    for (n, p, ns, ls) in [(16, 2, 8, 1), (32, 1, 8, 0), (32, 1, 8, 3), (64, 2, 16, 2), (64, 4, 64, 1), (64, 1, 64, 6)] {
        let params = TreeParams::new(128, n, p, ns, ls).unwrap();
        let model = run_lifecycle(params).unwrap().price(&table).ot_cost;
        let oracle = ledger_ot_cost(params, &table);
        assert!((model - oracle).abs() < 1e-9, "{params}: model {model} ledger {oracle}");
    }
}

#[test]
fn longer_chains_cost_more_to_confirm() {
    let table = CostTable::default();
    for (h, hs, ls) in [(4, 4, 2), (5, 3, 1), (3, 3, 0)] {
        let costs: Vec<f64> = [1u64, 2, 4]
            .iter()
            .map(|&p| run_lifecycle(grid_params(128, h, hs, p, ls).unwrap()).unwrap().price(&table).confirm_mean)
            .collect();
        assert!(costs.windows(2).all(|w| w[1] > w[0]), "H={h}: {costs:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn confirm_hashes_follow_chain_and_proof_length(h in 1u32..6, dhs in 0u32..3, p_exp in 0u32..3, dls in 0u32..4) {
        let hs = h.saturating_sub(dhs).max(1);
        let ls = hs.saturating_sub(dls);
        let params = grid_params(128, h, hs, 1 << p_exp, ls).unwrap();
        let life = run_lifecycle(params).unwrap();
        prop_assert_eq!(life.transfers.len() as u64, params.ops_per_tree());
        for t in &life.transfers {
            let want = u64::from(params.verifier_offset(t.op_id)) + 1 + u64::from(hs - ls);
            prop_assert_eq!(t.confirm.hashes, want);
            prop_assert_eq!(t.init.hashes, 0);
            prop_assert_eq!(t.init.sig_checks, 1);
        }
    }

    #[test]
    fn price_is_additive(a in 0u64..50, b in 0u64..50, c in 0u64..5) {
        let table = CostTable::default();
        let mut x = smartotps::contract::CallTrace { hashes: a, store_read: b, ..Default::default() };
        let base = table.price(&x);
        x.store_new += c;
        prop_assert_eq!(table.price(&x), base + c * table.store_new);
    }
}
