//! Known limits of the protocols, pinned so that changes in behaviour show up.

mod common;

use common::Harness;
use smartotps::crypto::{Digest, Seed, TruncatedHash};
use smartotps::ledger::Transaction;
use smartotps::merkle::{generation_leaves, subtree_layer, MerkleTree};
use smartotps::payload::{Call, OpType};
use smartotps::protocols::{
    ClientTamper, Interceptor, Mode, ProtocolError, Tactics, World, WorldConfig, ADVERSARY,
};
use smartotps::signature::SigningKey;
use smartotps::TreeParams;

fn params() -> TreeParams {
    TreeParams::new(128, 16, 2, 8, 1).unwrap()
}

fn world(cfg: WorldConfig) -> World {
    let mut w = World::bootstrap(cfg.depth(1)).unwrap();
    w.fund(1_000).unwrap();
    w
}

fn send(w: &mut World, sk: &SigningKey, call: Call) -> bool {
    let t = Transaction::new(
        ADVERSARY,
        &w.wallet,
        call,
        w.fee,
        w.ledger.next_nonce(ADVERSARY),
    );
    let t = if t.call.requires_signature() {
        t.sign(sk)
    } else {
        t
    };
    let id = w.ledger.submit(t).unwrap();
    w.wait_included(id).unwrap();
    w.ledger.receipt(id).unwrap().status.is_ok()
}

fn transfer_to(addr: &str, amount: u64) -> Call {
    Call::InitOp {
        op_type: OpType::Transfer,
        addr: addr.into(),
        param: amount,
    }
}

#[test]
fn tampered_recipient_is_caught_on_a_full_display() {
    let mut w =
        world(WorldConfig::new(1, params()).tamper(ClientTamper::Recipient(ADVERSARY.into())));
    let err = w.initiate(OpType::Transfer, "bob", 100).unwrap_err();
    assert!(matches!(err, ProtocolError::Aborted(_)), "{err}");
    assert_eq!(w.wallet_state().next_op_id, 0);
}

#[test]
fn truncated_display_lets_a_rewritten_recipient_through() {
    let cut = transfer_to("bob", 100).encode().find("addr=").unwrap();
    let cfg = WorldConfig::new(1, params())
        .tamper(ClientTamper::Recipient(ADVERSARY.into()))
        .display_limit(cut);
    let mut w = world(cfg);
    let before = w.ledger.balance(ADVERSARY);
    let r = w.run_operation(OpType::Transfer, "bob", 100).unwrap();
    assert!(!w.hw.display().contains("addr="));
    assert_eq!(w.wallet_state().operations[&r.op_id].addr, ADVERSARY);
    assert_eq!(w.ledger.balance(ADVERSARY), before + 100);
    assert_eq!(w.ledger.balance("bob"), 0);
}

/// With P = 2 a stolen key can fill layer 1 of a subtree. Every later OTP
/// of the subtree then lets the holder derive a layer-1 OTP.
#[test]
fn full_layer_one_fill_blocks_the_guarded_client() {
    let mut w = world(WorldConfig::new(2, params()));
    let sk = w.hw.compromise();
    for _ in 0..4 {
        assert!(send(&mut w, &sk, transfer_to(ADVERSARY, 100)));
    }
    let err = w.run_operation(OpType::Transfer, "bob", 10).unwrap_err();
    assert!(
        matches!(err, ProtocolError::Exposed { op_id: 7, .. }),
        "{err}"
    );
    // Slots 4..6 were burnt on placeholders before the subtree slot refused.
    assert_eq!(w.wallet_state().next_op_id, 7);
    assert!((4..7).all(|i| w.own_ops().contains(&i)));
    assert_eq!(w.wallet_state().balance, 1_000);
}

#[test]
fn full_layer_one_fill_leaks_on_an_unguarded_reveal() {
    let mut w = world(WorldConfig::new(2, params()));
    let sk = w.hw.compromise();
    for _ in 0..4 {
        assert!(send(&mut w, &sk, transfer_to(ADVERSARY, 100)));
    }
    let obs = Interceptor::new(
        ADVERSARY,
        &w.wallet,
        w.params(),
        Some(sk),
        Tactics {
            derive_lower: true,
            ..Tactics::default()
        },
    );
    w.ledger.add_observer(Box::new(obs));
    let (_, op) = w.initiate(OpType::Transfer, "bob", 10).unwrap();
    assert_eq!(op, 4);
    let before = w.ledger.balance(ADVERSARY);
    w.confirm(op).unwrap();
    // The derived layer-1 OTP of op 0 lands first; the window then still
    // admits the user's layer-2 confirmation.
    assert!(!w.wallet_state().operations[&0].pending);
    assert_eq!(w.ledger.balance(ADVERSARY), before + 100);
    assert_eq!(w.ledger.balance("bob"), 10);
}

#[test]
fn flooded_replacement_lists_make_the_client_withhold_the_otp() {
    let mut w = world(WorldConfig::new(3, params()));
    w.drive_to(15).unwrap();
    let sk = w.hw.compromise();
    let junk = Digest::from_slice(&[9; 16]).unwrap();
    for _ in 0..=w.params().len_max {
        assert!(send(
            &mut w,
            &sk,
            Call::NewRoot1 {
                h_root_and_otp: junk
            }
        ));
    }
    let root = w.wallet_state().root;
    let err = w.run_new_root(Mode::Secure).unwrap_err();
    assert!(
        matches!(err, ProtocolError::Aborted(ref m) if m.contains("exceed")),
        "{err}"
    );
    assert_eq!(w.wallet_state().root, root);
    assert_eq!(w.wallet_state().next_op_id, 15);
}

#[test]
fn flooded_lists_are_only_cleared_by_a_reveal() {
    let mut h = Harness::new(params(), 21);
    h.drive_to(15).unwrap();
    let junk = Digest::from_slice(&[9; 16]).unwrap();
    for _ in 0..=h.params.len_max {
        h.exec(Call::NewRoot1 {
            h_root_and_otp: junk,
        })
        .unwrap();
    }
    let root = h.wallet.root;
    assert!(!h.new_root());
    assert_eq!(h.wallet.root, root);
    assert!(h.wallet.l1.is_empty() && h.wallet.l2.is_empty());
    assert_eq!(h.wallet.next_op_id, 15);
}

#[test]
fn preseeded_foreign_root_makes_the_client_withhold_the_otp() {
    let mut w = world(WorldConfig::new(4, params()));
    w.drive_to(15).unwrap();
    let sk = w.hw.compromise();
    let r_adv = w.foreign_tree("mallory-root").unwrap().root();
    assert!(send(&mut w, &sk, Call::NewRoot2 { r_new: r_adv }));
    let root = w.wallet_state().root;
    let err = w.run_new_root(Mode::Secure).unwrap_err();
    assert!(
        matches!(err, ProtocolError::Aborted(ref m) if m.contains("foreign root")),
        "{err}"
    );
    assert_eq!(w.wallet_state().root, root);
}

/// Why the client refuses: once the OTP is public, an earlier L2 entry wins
/// the first-match scan as soon as its commitment is added to L1.
#[test]
fn preseeded_foreign_root_wins_after_the_reveal() {
    let p = params();
    let mut h = Harness::new(p, 22);
    h.drive_to(15).unwrap();
    let adv_leaves = generation_leaves(&Seed::new([0xee; 16]), &p, 1).unwrap();
    let adv_tree = MerkleTree::build(&p.hasher(), adv_leaves).unwrap();
    let (cs, pi_sr) = subtree_layer(&adv_tree, &p, 0).unwrap();
    h.exec(Call::NewRoot2 {
        r_new: adv_tree.root(),
    })
    .unwrap();

    let otp = h.otp(15);
    let leaves = generation_leaves(&h.seed, &p, 1).unwrap();
    let stages = h.client.build_new_root_stages(15, leaves, otp).unwrap();
    h.exec(stages.stage1.clone()).unwrap();
    h.exec(stages.stage2.clone()).unwrap();
    // Front-run after seeing stage 3 in the mempool.
    let commit = p
        .hasher()
        .hash_parts(&[adv_tree.root().as_bytes(), otp.as_bytes()]);
    h.exec(Call::NewRoot1 {
        h_root_and_otp: commit,
    })
    .unwrap();
    let Call::NewRoot3 { proof, .. } = &stages.stage3 else {
        unreachable!()
    };
    h.exec(Call::NewRoot3 {
        otp,
        proof: proof.clone(),
        cs,
        pi_sr,
    })
    .unwrap();
    assert_eq!(h.wallet.root, adv_tree.root());
    // The user's own stage 3 now fails: the slot has moved on.
    assert!(h.exec(stages.stage3).is_err());
}
