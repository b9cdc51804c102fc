//! Built-in adversarial scenarios. Each one drives fresh worlds from a run
//! seed and reports a list of named checks.

use std::fmt::Write as _;

use crate::crypto::{Digest, TruncatedHash};
use crate::error::Error;
use crate::ledger::{LedgerSim, Transaction, TxStatus, DEFAULT_GENESIS_TIME};
use crate::merkle::{subtree_layer, MerkleProof, MerkleTree};
use crate::params::TreeParams;
use crate::payload::{Call, OpType};
use crate::signature::SigningKey;

use super::{
    initiated_by, ClientTamper, Interceptor, Mode, ProtocolError, Tactics, World, WorldConfig,
    ADVERSARY, DEFAULT_ADVERSARY_FUNDS, USER,
};

pub const SCENARIOS: &[&str] = &[
    "theorem1",
    "theorem2",
    "theorem3",
    "theorem4",
    "theorem5",
    "theorem6",
    "depletion",
    "dos-pending",
    "fork-replay",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioReport {
    pub name: String,
    pub checks: Vec<Check>,
    /// Event logs of every world the scenario ran, in order.
    pub log: String,
    pub state_hashes: Vec<String>,
}

impl ScenarioReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            checks: Vec::new(),
            log: String::new(),
            state_hashes: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    fn absorb(&mut self, label: &str, ledger: &LedgerSim) {
        let _ = writeln!(self.log, "== {} / {label}", self.name);
        self.log.push_str(&ledger.event_log());
        let hash = ledger.state_hash();
        let _ = writeln!(self.log, "state {hash}");
        self.state_hashes.push(hash);
    }

    fn audits(&mut self, ledger: &LedgerSim) {
        let sig = ledger.audit_signatures();
        let cons = ledger.audit_conservation();
        self.check(
            "ledger audits",
            sig.is_ok() && cons.is_ok(),
            format!("signatures: {sig:?}, conservation: {cons:?}"),
        );
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = format!("scenario {}\n", self.name);
        for c in &self.checks {
            let _ = writeln!(
                out,
                "  [{}] {}: {}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        let _ = writeln!(
            out,
            "result {}",
            if self.passed() { "pass" } else { "fail" }
        );
        out
    }
}

pub fn default_params() -> TreeParams {
    TreeParams::new(128, 16, 2, 8, 1).expect("valid")
}

pub fn run(name: &str, seed: u64) -> Result<ScenarioReport, Error> {
    let r = match name {
        "theorem1" => theorem1(seed),
        "theorem2" => theorem2(seed),
        "theorem3" => theorem3(seed),
        "theorem4" => theorem4(seed),
        "theorem5" => theorem5(seed),
        "theorem6" => theorem6(seed),
        "depletion" => depletion(seed),
        "dos-pending" => dos_pending(seed),
        "fork-replay" => fork_replay(seed),
        other => {
            return Err(Error::Refused(format!(
                "unknown scenario {other:?}; known: {}",
                SCENARIOS.join(", ")
            )))
        }
    };
    r.map_err(|e| Error::Refused(format!("scenario {name} stopped: {e}")))
}

pub fn run_suite(seed: u64) -> Result<Vec<ScenarioReport>, Error> {
    SCENARIOS.iter().map(|n| run(n, seed)).collect()
}

type Outcome = Result<ScenarioReport, ProtocolError>;

fn adversary_tx(w: &World, sk: Option<&SigningKey>, call: Call, fee: u64) -> Transaction {
    let t = Transaction::new(
        ADVERSARY,
        &w.wallet,
        call,
        fee,
        w.ledger.next_nonce(ADVERSARY),
    );
    match sk {
        Some(sk) => t.sign(sk),
        None => t,
    }
}

/// Submit and mine one adversary transaction; returns its status.
fn adversary_send(
    w: &mut World,
    sk: Option<&SigningKey>,
    call: Call,
) -> Result<TxStatus, ProtocolError> {
    let tx = adversary_tx(w, sk, call, w.fee);
    let id = w.ledger.submit(tx)?;
    w.wait_included(id)?;
    Ok(w.ledger.receipt(id).expect("mined").status.clone())
}

/// Successful confirmations sent by the adversary, split into those that
/// executed one of its own operations and the rest.
fn adversary_confirms(w: &World) -> (usize, usize) {
    let own = initiated_by(&w.ledger, &w.wallet, ADVERSARY);
    let mut mine = 0;
    let mut other = 0;
    for r in w.ledger.blocks().iter().flat_map(|b| b.receipts.iter()) {
        if r.tx.sender != ADVERSARY || !r.status.is_ok() {
            continue;
        }
        if let Call::ConfirmOp { op_id, .. } = r.tx.call {
            if own.contains(&op_id) {
                mine += 1;
            } else {
                other += 1;
            }
        }
    }
    (mine, other)
}

fn adversary_attempts(w: &World, fn_name: &str) -> usize {
    w.ledger
        .blocks()
        .iter()
        .flat_map(|b| b.receipts.iter())
        .filter(|r| r.tx.sender == ADVERSARY && r.tx.call.name() == fn_name)
        .count()
}

fn reason(status: &TxStatus) -> String {
    match status {
        TxStatus::Ok => "executed".into(),
        TxStatus::Reverted(r) => format!("reverted: {r}"),
        TxStatus::Dropped(r) => format!("dropped: {r}"),
    }
}

fn steal_and_watch(w: &mut World, tactics: Tactics) -> SigningKey {
    let sk = w.hw.compromise();
    let obs = Interceptor::new(ADVERSARY, &w.wallet, w.params(), Some(sk.clone()), tactics);
    w.ledger.add_observer(Box::new(obs));
    sk
}

fn init_call(op_type: OpType, addr: &str, param: u64) -> Call {
    Call::InitOp {
        op_type,
        addr: addr.to_string(),
        param,
    }
}

/// Stolen SK_U: initiation works, confirmation does not, including with
/// intercepted OTPs paired with other operations or walked down their chain.
fn theorem1(seed: u64) -> Outcome {
    let mut rep = ScenarioReport::new("theorem1");
    let mut w = World::bootstrap(WorldConfig::new(seed, default_params()))?;
    w.fund(1_000)?;
    let sk = steal_and_watch(
        &mut w,
        Tactics {
            cross_pair: true,
            derive_lower: true,
            ..Tactics::default()
        },
    );

    let st = adversary_send(
        &mut w,
        Some(&sk),
        init_call(OpType::Transfer, ADVERSARY, 500),
    )?;
    rep.check("adversary initiates with SK_U", st.is_ok(), reason(&st));
    let guess = Digest::from_slice(&[0x5a; 16])?;
    let proof = MerkleProof::new(vec![guess; w.params().cache_proof_len() as usize]);
    let st = adversary_send(
        &mut w,
        None,
        Call::ConfirmOp {
            op_id: 0,
            otp: guess,
            proof,
        },
    )?;
    rep.check("guessed OTP rejected", !st.is_ok(), reason(&st));

    let mut skipped = Vec::new();
    for _ in 0..5 {
        let r = w.run_operation(OpType::Transfer, "bob", 100)?;
        skipped.extend(r.skipped);
    }
    rep.check(
        "user transfers complete",
        w.ledger.balance("bob") == 500,
        format!("bob={} skipped slots {skipped:?}", w.ledger.balance("bob")),
    );
    let attempts = adversary_attempts(&w, "confirm_op");
    let (own, _) = adversary_confirms(&w);
    rep.check(
        "intercepted OTPs never confirm the adversary's operation",
        own == 0 && attempts > 1,
        format!("{attempts} confirmation attempts, {own} succeeded"),
    );
    let ws = w.wallet_state();
    rep.check(
        "adversary operation left pending and below the window",
        ws.operations[&0].pending && !ws.confirmable().contains(&0),
        format!(
            "current_layer={} next_op_id={}",
            ws.current_layer, ws.next_op_id
        ),
    );
    rep.check(
        "honest funds intact",
        ws.balance == 500 && w.ledger.balance(ADVERSARY) == DEFAULT_ADVERSARY_FUNDS,
        format!(
            "wallet={} mallory={}",
            ws.balance,
            w.ledger.balance(ADVERSARY)
        ),
    );
    rep.audits(&w.ledger);
    rep.absorb("main", &w.ledger);
    Ok(rep)
}

/// Stolen SK_U at a subtree boundary: depletion stops at the reserved slot,
/// and an intercepted subtree OTP only installs the valid next sublayer.
fn theorem2(seed: u64) -> Outcome {
    let mut rep = ScenarioReport::new("theorem2");
    let params = TreeParams::new(128, 16, 1, 8, 1)?;
    let mut w = World::bootstrap(WorldConfig::new(seed, params))?;
    w.fund(1_000)?;
    let sk = steal_and_watch(
        &mut w,
        Tactics {
            forge_subtree: true,
            copy_subtree: true,
            cross_pair: true,
            ..Tactics::default()
        },
    );
    let mut inits = 0;
    let last = loop {
        let st = adversary_send(&mut w, Some(&sk), init_call(OpType::Transfer, ADVERSARY, 1))?;
        if !st.is_ok() {
            break st;
        }
        inits += 1;
    };
    rep.check(
        "depletion stops at the reserved slot",
        inits == params.ns - 1 && reason(&last).contains("reserved"),
        format!("{inits} initiations, then {}", reason(&last)),
    );
    let (layer, pi_sr) = subtree_layer(
        &MerkleTree::build(&params.hasher(), w.client.leaves().to_vec())?,
        &params,
        1,
    )?;
    let guess = Digest::from_slice(&[0x33; 16])?;
    let st = adversary_send(
        &mut w,
        None,
        Call::NextSubtree {
            next_layer: layer.clone(),
            otp: guess,
            pi_otp: MerkleProof::new(vec![guess; params.h() as usize]),
            pi_sr,
        },
    )?;
    rep.check(
        "subtree introduction without the OTP rejected",
        !st.is_ok(),
        reason(&st),
    );

    w.run_next_subtree()?;
    let forged: Vec<_> = w
        .ledger
        .blocks()
        .iter()
        .flat_map(|b| b.receipts.iter())
        .filter(|r| r.tx.sender == ADVERSARY && r.tx.call.name() == "next_subtree")
        .map(|r| (r.tx.call.clone(), r.status.clone()))
        .collect();
    let forged_rejected = forged.iter().any(|(c, s)| {
        matches!(c, Call::NextSubtree { next_layer, .. } if *next_layer != layer)
            && matches!(s, TxStatus::Reverted(r) if r.contains("not subtree"))
    });
    rep.check(
        "intercepted OTP with a forged sublayer reverts",
        forged_rejected,
        format!("{} adversary subtree transactions", forged.len()),
    );
    let ws = w.wallet_state();
    rep.check(
        "installed sublayer is the valid subtree 1",
        ws.sub_layer.delta == 1 && ws.sub_layer.nodes == layer,
        format!("delta={}", ws.sub_layer.delta),
    );
    rep.check(
        "adversary's pending operations expired with their subtree",
        initiated_by(&w.ledger, &w.wallet, ADVERSARY)
            .iter()
            .all(|id| !ws.confirmable().contains(id)),
        format!("confirmable={:?}", ws.confirmable()),
    );
    let r = w.run_operation(OpType::Transfer, "bob", 40)?;
    rep.check(
        "user operates in the new subtree",
        r.op_id == params.ns && w.ledger.balance("bob") == 40,
        format!("op_id={}", r.op_id),
    );
    let (own, _) = adversary_confirms(&w);
    rep.check(
        "honest funds intact",
        own == 0
            && w.wallet_state().balance == 960
            && w.ledger.balance(ADVERSARY) == DEFAULT_ADVERSARY_FUNDS,
        format!(
            "wallet={} mallory={}",
            w.wallet_state().balance,
            w.ledger.balance(ADVERSARY)
        ),
    );
    rep.audits(&w.ledger);
    rep.absorb("main", &w.ledger);
    Ok(rep)
}

/// Stolen SK_U during parent-root replacement: the adversary sees the
/// stage-3 OTP and appends its own pair, but the user's pair matches first.
fn theorem3(seed: u64) -> Outcome {
    let mut rep = ScenarioReport::new("theorem3");
    let params = TreeParams::new(128, 4, 1, 4, 0)?;
    let mut w = World::bootstrap(WorldConfig::new(seed, params))?;
    w.fund(1_000)?;
    w.drive_to(params.n - 1)?;
    let adv_tree = w.foreign_tree("mallory-root")?;
    let (cs, pi_sr) = subtree_layer(&adv_tree, &params, 0)?;
    let r_adv = adv_tree.root();
    steal_and_watch(
        &mut w,
        Tactics {
            race_root: Some((r_adv, cs, pi_sr)),
            ..Tactics::default()
        },
    );
    let (r_user, _) = w.auth.new_parent_preview(params.n - 1)?;
    let old_root = w.wallet_state().root;
    w.run_new_root(Mode::Insecure)?;

    let adv3: Vec<_> = w
        .ledger
        .blocks()
        .iter()
        .flat_map(|b| b.receipts.iter())
        .filter(|r| r.tx.sender == ADVERSARY && r.tx.call.name() == "new_root_stage3")
        .collect();
    let adv_lost = adv3
        .iter()
        .any(|r| matches!(&r.status, TxStatus::Reverted(why) if why.contains("inconsistent with the new root")));
    let user_won = w
        .ledger
        .blocks()
        .iter()
        .flat_map(|b| b.receipts.iter())
        .any(|r| {
            r.tx.sender == USER
                && r.events
                    .iter()
                    .any(|e| e.contains(&format!("root={r_user} l2=0 l1=0")))
        });
    rep.check(
        "adversary front-ran stage 3 with its own pair appended",
        adversary_attempts(&w, "new_root_stage1") == 1
            && adversary_attempts(&w, "new_root_stage2") == 1
            && !adv3.is_empty(),
        format!("{} adversary stage-3 calls", adv3.len()),
    );
    rep.check(
        "first match is the user's pair",
        adv_lost && user_won,
        adv3.iter()
            .map(|r| reason(&r.status))
            .collect::<Vec<_>>()
            .join("; "),
    );
    let ws = w.wallet_state();
    rep.check(
        "user's root installed",
        ws.root == r_user && ws.root != r_adv && ws.root != old_root,
        format!("root={}", ws.root),
    );
    let r = w.run_operation(OpType::Transfer, "bob", 25)?;
    rep.check(
        "new parent tree usable",
        r.op_id == params.n && w.client.eta() == 1,
        format!("op_id={}", r.op_id),
    );
    rep.check(
        "honest funds intact",
        w.ledger.balance(ADVERSARY) == DEFAULT_ADVERSARY_FUNDS
            && w.wallet_state().balance + w.ledger.balance("bob") == 1_000,
        format!(
            "wallet={} bob={}",
            w.wallet_state().balance,
            w.ledger.balance("bob")
        ),
    );
    rep.audits(&w.ledger);
    rep.absorb("main", &w.ledger);
    Ok(rep)
}

/// Client tampered with after bootstrapping: it rewrites the recipient,
/// the hardware wallet shows it, and the user declines.
fn theorem4(seed: u64) -> Outcome {
    let mut rep = ScenarioReport::new("theorem4");
    let mut w = World::bootstrap(WorldConfig::new(seed, default_params()))?;
    w.fund(1_000)?;
    w.run_operation(OpType::Transfer, "bob", 10)?;
    w.tamper = ClientTamper::Recipient(ADVERSARY.into());
    let signed_before = w.hw.signatures_made();
    let submitted_before = w.ledger.submissions().len();
    let res = w.run_operation(OpType::Transfer, "bob", 300);
    rep.check(
        "user declines on the hardware-wallet display",
        matches!(res, Err(ProtocolError::Aborted(_))),
        format!("{res:?}"),
    );
    rep.check(
        "display showed the rewritten recipient",
        w.hw.display().contains(&format!("addr={ADVERSARY}\n")),
        w.hw.display().lines().take(4).collect::<Vec<_>>().join(" "),
    );
    rep.check(
        "nothing signed or submitted",
        w.hw.signatures_made() == signed_before && w.ledger.submissions().len() == submitted_before,
        format!("signatures={}", w.hw.signatures_made()),
    );
    w.tamper = ClientTamper::None;
    w.run_operation(OpType::Transfer, "bob", 300)?;
    rep.check(
        "honest funds intact",
        w.ledger.balance("bob") == 310
            && w.wallet_state().balance == 690
            && w.ledger.balance(ADVERSARY) == DEFAULT_ADVERSARY_FUNDS,
        format!(
            "bob={} wallet={}",
            w.ledger.balance("bob"),
            w.wallet_state().balance
        ),
    );
    rep.audits(&w.ledger);
    rep.absorb("main", &w.ledger);
    Ok(rep)
}

/// Client tampered with during insecure bootstrapping: a forged root or key
/// is caught by comparing displays, and nothing is deployed.
fn theorem5(seed: u64) -> Outcome {
    let mut rep = ScenarioReport::new("theorem5");
    let params = default_params();
    for (label, tamper) in [
        ("forged root", ClientTamper::ForgeRoot),
        ("forged key", ClientTamper::ForgeKey),
    ] {
        let cfg = WorldConfig::new(seed, params)
            .mode(Mode::Insecure)
            .tamper(tamper);
        let ledger = LedgerSim::new(DEFAULT_GENESIS_TIME, &[(USER, 1_000), (ADVERSARY, 1_000)]);
        match World::bootstrap_on(cfg, ledger) {
            Ok(w) => {
                rep.check(
                    &format!("{label}: deployment aborted"),
                    false,
                    "deployed".to_string(),
                );
                rep.absorb(label, &w.ledger);
            }
            Err(f) => {
                rep.check(
                    &format!("{label}: deployment aborted"),
                    matches!(f.error, ProtocolError::Aborted(_))
                        && f.ledger.state().wallets.is_empty(),
                    format!(
                        "{}; wallets on chain: {}",
                        f.error,
                        f.ledger.state().wallets.len()
                    ),
                );
                rep.absorb(label, &f.ledger);
            }
        }
    }
    let honest = World::bootstrap(WorldConfig::new(seed, params).mode(Mode::Insecure))?;
    let secure = World::bootstrap(WorldConfig::new(seed, params))?;
    rep.check(
        "honest insecure bootstrap matches the secure one",
        honest.wallet == secure.wallet && honest.wallet_state() == secure.wallet_state(),
        format!("contract_id={}", honest.wallet),
    );
    let leaves = honest.client.leaves();
    let leaked = (0..params.n)
        .map(|i| honest.auth.get_otp(i))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|otp| leaves.contains(otp))
        .count();
    let pk = honest.hw.public();
    let id = honest
        .params()
        .hasher()
        .hash_parts(&[pk.as_bytes(), honest.wallet_state().root.as_bytes()]);
    rep.check(
        "transferred leaves reveal no OTP; contract id binds PK and R",
        leaked == 0 && id.to_hex() == honest.wallet,
        format!("{leaked} OTPs among {} leaves", leaves.len()),
    );
    rep.absorb("honest", &honest.ledger);
    Ok(rep)
}

/// Stolen authenticator: every OTP is known, but without SK_U nothing changes.
fn theorem6(seed: u64) -> Outcome {
    let mut rep = ScenarioReport::new("theorem6");
    let params = default_params();
    let mut w = World::bootstrap(WorldConfig::new(seed, params))?;
    w.fund(1_000)?;
    w.run_operation(OpType::Transfer, "bob", 100)?;
    let before = serde_json::to_string(w.wallet_state()).expect("serializes");
    let balances = (w.ledger.balance(USER), w.ledger.balance("bob"));

    let own_key = SigningKey::for_party(seed, ADVERSARY);
    let next = w.wallet_state().next_op_id;
    let next_otp = w.auth.get_otp(next)?;
    let tree = MerkleTree::build(&params.hasher(), w.auth.export_leaves()?.leaves)?;
    let cache = |op: u64| tree.proof_between(0, params.beta(op), params.cache_proof_len());
    let attempts = vec![
        (
            "unsigned initiation",
            None,
            init_call(OpType::Transfer, ADVERSARY, 900),
        ),
        (
            "initiation signed with the adversary's key",
            Some(&own_key),
            init_call(OpType::Transfer, ADVERSARY, 900),
        ),
        (
            "confirmation of a never-initiated operation",
            None,
            Call::ConfirmOp {
                op_id: next,
                otp: next_otp,
                proof: cache(next)?,
            },
        ),
        (
            "replayed confirmation of a finished operation",
            None,
            Call::ConfirmOp {
                op_id: 0,
                otp: w.auth.get_otp(0)?,
                proof: cache(0)?,
            },
        ),
        (
            "unsigned root replacement",
            None,
            Call::NewRoot1 {
                h_root_and_otp: next_otp,
            },
        ),
        ("last-resort sweep", None, Call::SendToLastResort),
    ];
    for (label, sk, call) in attempts {
        let st = adversary_send(&mut w, sk, call)?;
        rep.check(label, !st.is_ok(), reason(&st));
    }
    let after = serde_json::to_string(w.wallet_state()).expect("serializes");
    rep.check(
        "wallet state unchanged",
        before == after,
        format!("{} bytes compared", after.len()),
    );
    rep.check(
        "honest funds intact",
        (w.ledger.balance(USER), w.ledger.balance("bob")) == balances
            && w.ledger.balance(ADVERSARY) == DEFAULT_ADVERSARY_FUNDS,
        format!("user={} bob={}", balances.0, balances.1),
    );
    rep.audits(&w.ledger);
    rep.absorb("main", &w.ledger);
    Ok(rep)
}

/// Use every OTP of one parent tree, including one subtree introduction and
/// one root replacement, then operate under the new root.
fn depletion(seed: u64) -> Outcome {
    let mut rep = ScenarioReport::new("depletion");
    let params = default_params();
    let mut w = World::bootstrap(WorldConfig::new(seed, params))?;
    w.fund(10_000)?;
    let old_otps = (0..params.n)
        .map(|i| w.auth.get_otp(i))
        .collect::<Result<Vec<_>, _>>()?;
    let old_root = w.wallet_state().root;
    let mut ids = Vec::new();
    while w.wallet_state().next_op_id < params.n - 1 {
        ids.push(w.run_operation(OpType::Transfer, "bob", 1)?.op_id);
    }
    let expected: Vec<u64> = (0..params.n - 1)
        .filter(|i| !params.is_subtree_slot(*i))
        .collect();
    rep.check(
        "every regular OTP used once",
        ids == expected && w.ledger.balance("bob") == expected.len() as u64,
        format!("ops {ids:?}"),
    );
    rep.check(
        "subtree introduced at the reserved slot",
        w.wallet_state().sub_layer.delta == params.subtrees() - 1,
        format!("delta={}", w.wallet_state().sub_layer.delta),
    );
    w.run_new_root(Mode::Secure)?;
    let ws = w.wallet_state();
    rep.check(
        "parent root replaced with the last OTP",
        ws.root != old_root
            && ws.next_op_id == params.n
            && w.client.eta() == 1
            && w.auth.eta() == 1,
        format!("next_op_id={} root={}", ws.next_op_id, ws.root),
    );

    let (_, op) = w.initiate(OpType::Transfer, "bob", 7)?;
    let mut rejected = Vec::new();
    let fresh_proof = w.client.cache_proof(op)?;
    let old_tree = MerkleTree::build(&params.hasher(), {
        let k = w.auth.reveal_seed();
        crate::merkle::generation_leaves(&k, &params, 0)?
    })?;
    let old_proof = old_tree.proof_between(0, params.beta(op), params.cache_proof_len())?;
    for (otp, proof) in [
        (old_otps[(op % params.n) as usize], fresh_proof),
        (old_otps[(op % params.n) as usize], old_proof),
    ] {
        let st = adversary_send(
            &mut w,
            None,
            Call::ConfirmOp {
                op_id: op,
                otp,
                proof,
            },
        )?;
        rejected.push(!st.is_ok());
    }
    rep.check(
        "pre-rotation OTP rejected",
        rejected == [true, true],
        format!("op_id={op} with new and old proofs"),
    );
    w.confirm(op)?;
    rep.check(
        "post-rotation operation verifies against the new root",
        w.ledger.balance("bob") == expected.len() as u64 + 7,
        format!("bob={}", w.ledger.balance("bob")),
    );
    rep.audits(&w.ledger);
    rep.absorb("main", &w.ledger);
    Ok(rep)
}

/// An SK_U holder floods pending operations; none of them can be confirmed
/// and the user keeps operating.
fn dos_pending(seed: u64) -> Outcome {
    let mut rep = ScenarioReport::new("dos-pending");
    let params = default_params();
    let mut w = World::bootstrap(WorldConfig::new(seed, params))?;
    w.fund(1_000)?;
    let sk = steal_and_watch(
        &mut w,
        Tactics {
            cross_pair: true,
            derive_lower: true,
            ..Tactics::default()
        },
    );
    let flood = params.ns / params.p - 1;
    for _ in 0..flood {
        adversary_send(
            &mut w,
            Some(&sk),
            init_call(OpType::Transfer, ADVERSARY, 100),
        )?;
    }
    let pending = initiated_by(&w.ledger, &w.wallet, ADVERSARY);
    rep.check(
        "adversary creates pending operations",
        pending.len() as u64 == flood,
        format!("{pending:?}"),
    );
    let mut skipped = Vec::new();
    for _ in 0..6 {
        skipped.extend(w.run_operation(OpType::Transfer, "bob", 10)?.skipped);
    }
    let (own, _) = adversary_confirms(&w);
    rep.check(
        "adversary consumes zero confirmable operations",
        own == 0,
        format!(
            "{} confirmation attempts",
            adversary_attempts(&w, "confirm_op")
        ),
    );
    rep.check(
        "user operations still succeed",
        w.ledger.balance("bob") == 60,
        format!("bob={} skipped {skipped:?}", w.ledger.balance("bob")),
    );
    let ws = w.wallet_state();
    rep.check(
        "flooded operations are dead",
        pending.iter().all(|id| !ws.confirmable().contains(id)),
        format!("confirmable={:?}", ws.confirmable()),
    );
    rep.check(
        "honest funds intact",
        ws.balance == 940 && w.ledger.balance(ADVERSARY) == DEFAULT_ADVERSARY_FUNDS,
        format!("wallet={}", ws.balance),
    );
    rep.audits(&w.ledger);
    rep.absorb("main", &w.ledger);
    Ok(rep)
}

/// An initiation orphaned by a reorg is re-included before the OTP goes out;
/// and an OTP revealed too early can be replayed on a competing branch.
fn fork_replay(seed: u64) -> Outcome {
    let mut rep = ScenarioReport::new("fork-replay");
    let params = default_params();

    let mut w = World::bootstrap(WorldConfig::new(seed, params))?;
    w.fund(1_000)?;
    let base = w.ledger.head_height();
    let init = w.submit_init(OpType::Transfer, "bob", 100)?;
    w.ledger.mine_block();
    let b = w.ledger.fork(base)?;
    w.ledger.mine_on(b, vec![])?;
    w.ledger.mine_on(b, vec![])?;
    w.ledger.reorg(b)?;
    let orphaned = w.ledger.confirmations(init).is_none() && w.ledger.is_pending(init);
    rep.check(
        "reorg orphans the initiation; client sees it absent",
        orphaned && w.wallet_state().next_op_id == 0,
        format!("confirmations={:?}", w.ledger.confirmations(init)),
    );
    w.wait_depth(init, w.client.confirmation_depth())?;
    let op = w.accept_init(init)?;
    w.confirm(op)?;
    rep.check(
        "re-included and confirmed once after the full wait",
        w.ledger.balance("bob") == 100 && w.wallet_state().balance == 900,
        format!("op_id={op}"),
    );
    rep.audits(&w.ledger);
    rep.absorb("orphaned init", &w.ledger);

    for depth in [0u64, 12] {
        let mut w = World::bootstrap(WorldConfig::new(seed + 1 + depth, params).depth(depth))?;
        w.fund(1_000)?;
        let sk = w.hw.compromise();
        let init = w.submit_init(OpType::Transfer, "bob", 100)?;
        w.wait_depth(init, depth)?;
        let op = w.accept_init(init)?;
        // The adversary may rewrite at most the last 12 blocks.
        let fork_at = w.ledger.head_height() - (depth + 1).min(12);
        let branch = w.ledger.fork(fork_at)?;
        let hijack = Transaction::new(
            ADVERSARY,
            &w.wallet,
            init_call(OpType::Transfer, ADVERSARY, 100),
            w.fee,
            w.ledger.next_nonce(ADVERSARY),
        )
        .sign(&sk);
        w.ledger.mine_on(branch, vec![hijack])?;
        let (confirm_tx, _) = w.confirm(op)?;
        let Some(Call::ConfirmOp { otp, proof, .. }) =
            w.ledger.receipt(confirm_tx).map(|r| r.tx.call.clone())
        else {
            return Err(ProtocolError::Timeout("user confirmation".into()));
        };
        let replay = Transaction::new(
            ADVERSARY,
            &w.wallet,
            Call::ConfirmOp {
                op_id: op,
                otp,
                proof,
            },
            w.fee,
            w.ledger.next_nonce(ADVERSARY) + 1,
        );
        w.ledger.mine_on(branch, vec![replay])?;
        while w.ledger.branch_height(branch) <= Some(w.ledger.head_height()) {
            w.ledger.mine_on(branch, vec![])?;
        }
        w.ledger.reorg(branch)?;
        w.ledger.clear_observers();
        let mallory = w.ledger.balance(ADVERSARY);
        if depth == 0 {
            rep.check(
                "without the wait the OTP is replayed on the other branch",
                mallory == DEFAULT_ADVERSARY_FUNDS + 100,
                format!("fork at {fork_at}, mallory={mallory}"),
            );
        } else {
            rep.check(
                "after 12 confirmations a 12-deep reorg cannot redirect the OTP",
                mallory == DEFAULT_ADVERSARY_FUNDS
                    && w.wallet_state().balance + w.ledger.balance("bob") == 1_000,
                format!(
                    "fork at {fork_at}, mallory={mallory}, bob={}",
                    w.ledger.balance("bob")
                ),
            );
        }
        rep.absorb(&format!("depth {depth}"), &w.ledger);
    }
    Ok(rep)
}
