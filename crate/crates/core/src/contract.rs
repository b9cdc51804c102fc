//! The wallet contract as a deterministic state machine.
//!
//! Every call runs against a scratch copy of the state and is committed only
//! on success, so a revert leaves no trace. Calls are metered: hash
//! evaluations come from a counting hasher, storage accesses are recorded
//! by the call bodies against a simple word-level layout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, MeteredHasher, TruncatedHash};
use crate::merkle::{
    derive_node_in_cache, derive_root_hash, expected_idx_in_cache, reduce_mt,
    subtree_consistency_at, MerkleProof,
};
use crate::params::TreeParams;
use crate::payload::{AccountId, Call, OpType};
use crate::signature::{PublicKey, Signature};

pub const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationRecord {
    pub addr: AccountId,
    pub param: u64,
    pub pending: bool,
    pub op_type: OpType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtreeLayer {
    pub nodes: Vec<Digest>,
    pub delta: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalletState {
    pub params: TreeParams,
    pub root: Digest,
    pub pk: PublicKey,
    pub owner: AccountId,
    pub next_op_id: u64,
    pub operations: BTreeMap<u64, OperationRecord>,
    pub sub_layer: SubtreeLayer,
    pub current_layer: u32,
    pub l1: Vec<Digest>,
    pub l2: Vec<Digest>,
    pub balance: u64,
    pub daily_limit: u64,
    pub spent_today: u64,
    pub day_index: u64,
    pub last_resort_addr: Option<AccountId>,
    pub last_resort_timeout: u64,
    pub last_activity: u64,
    pub contract_id: Digest,
    pub destroyed: bool,
}

/// Primitive counts of one call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallTrace {
    pub hashes: u64,
    pub hash_words: u64,
    pub store_new: u64,
    pub store_update: u64,
    pub store_read: u64,
    pub sig_checks: u64,
    pub payload_bytes: u64,
}

impl std::ops::AddAssign for CallTrace {
    fn add_assign(&mut self, o: Self) {
        self.hashes += o.hashes;
        self.hash_words += o.hash_words;
        self.store_new += o.store_new;
        self.store_update += o.store_update;
        self.store_read += o.store_read;
        self.sig_checks += o.sig_checks;
        self.payload_bytes += o.payload_bytes;
    }
}

/// Transaction data the contract can see.
#[derive(Clone, Copy, Debug)]
pub struct TxContext<'a> {
    pub sender: &'a str,
    pub signed_message: &'a [u8],
    pub signature: Option<&'a Signature>,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credit {
    pub to: AccountId,
    pub amount: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub credits: Vec<Credit>,
    pub events: Vec<String>,
    pub trace: CallTrace,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Revert {
    pub reason: String,
    pub trace: CallTrace,
}

impl std::fmt::Display for Revert {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.reason)
    }
}

struct Meter {
    h: MeteredHasher,
    trace: CallTrace,
}

impl Meter {
    fn new(params: &TreeParams, call: Option<&Call>) -> Self {
        Self {
            h: MeteredHasher::new(params.hasher()),
            trace: CallTrace {
                payload_bytes: call.map_or(0, Call::payload_bytes),
                ..CallTrace::default()
            },
        }
    }

    fn read(&mut self, n: u64) {
        self.trace.store_read += n;
    }

    fn write_new(&mut self, n: u64) {
        self.trace.store_new += n;
    }

    fn update(&mut self, n: u64) {
        self.trace.store_update += n;
    }

    fn finish(mut self) -> CallTrace {
        self.trace.hashes = self.h.evaluations();
        self.trace.hash_words = self.h.words();
        self.trace
    }
}

type Step<T> = Result<T, String>;

fn ensure(cond: bool, reason: impl FnOnce() -> String) -> Step<()> {
    if cond {
        Ok(())
    } else {
        Err(reason())
    }
}

/// Fixed words written at deployment besides the cached sublayer:
/// root, key, owner, next id, layer watermark, subtree index, activity, id.
const DEPLOY_FIXED_WORDS: u64 = 8;

impl WalletState {
    /// Deploy a wallet. `owner` is the deploying account.
    #[allow(clippy::too_many_arguments)]
    pub fn deploy(
        params: TreeParams,
        root: Digest,
        pk: PublicKey,
        owner: &str,
        sub_layer: Vec<Digest>,
        pi_sr: &MerkleProof,
        timestamp: u64,
        payload: Option<&Call>,
    ) -> Result<(WalletState, CallTrace), Revert> {
        let mut m = Meter::new(&params, payload);
        let result = (|| -> Step<WalletState> {
            params.validate().map_err(|e| e.to_string())?;
            ensure(sub_layer.len() == params.cache_len(), || {
                format!("sublayer must have {} nodes", params.cache_len())
            })?;
            ensure(root.len() == params.digest_bytes(), || {
                "root width mismatch".into()
            })?;
            let sub_root = reduce_mt(&m.h, &sub_layer).map_err(|e| e.to_string())?;
            ensure(
                subtree_consistency_at(&m.h, &sub_root, pi_sr, &root, &params, 0),
                || "cached sublayer is inconsistent with the root".into(),
            )?;
            let contract_id = m.h.hash_parts(&[pk.as_bytes(), root.as_bytes()]);
            m.write_new(DEPLOY_FIXED_WORDS + sub_layer.len() as u64);
            Ok(WalletState {
                params,
                root,
                pk,
                owner: owner.to_string(),
                next_op_id: 0,
                operations: BTreeMap::new(),
                sub_layer: SubtreeLayer {
                    nodes: sub_layer,
                    delta: 0,
                },
                current_layer: 1,
                l1: Vec::new(),
                l2: Vec::new(),
                balance: 0,
                daily_limit: 0,
                spent_today: 0,
                day_index: timestamp / SECONDS_PER_DAY,
                last_resort_addr: None,
                last_resort_timeout: 0,
                last_activity: timestamp,
                contract_id,
                destroyed: false,
            })
        })();
        let trace = m.finish();
        match result {
            Ok(state) => Ok((state, trace)),
            Err(reason) => Err(Revert { reason, trace }),
        }
    }

    pub fn address(&self) -> AccountId {
        self.contract_id.to_hex()
    }

    /// Execute a non-deploy call atomically.
    pub fn execute(&mut self, call: &Call, ctx: &TxContext<'_>) -> Result<Outcome, Revert> {
        let mut scratch = self.clone();
        let mut m = Meter::new(&self.params, Some(call));
        let mut out = Outcome::default();
        let result = scratch.dispatch(call, ctx, &mut m, &mut out);
        let trace = m.finish();
        match result {
            Ok(()) => {
                *self = scratch;
                out.trace = trace;
                Ok(out)
            }
            Err(reason) => Err(Revert { reason, trace }),
        }
    }

    fn dispatch(
        &mut self,
        call: &Call,
        ctx: &TxContext<'_>,
        m: &mut Meter,
        out: &mut Outcome,
    ) -> Step<()> {
        ensure(!self.destroyed, || "wallet has been closed".into())?;
        m.read(1);
        match call {
            Call::Deploy { .. } | Call::Pay { .. } => {
                Err(format!("{} is not a wallet call", call.name()))
            }
            Call::Deposit { amount } => {
                m.read(1);
                m.update(1);
                self.balance = self
                    .balance
                    .checked_add(*amount)
                    .ok_or_else(|| "balance overflow".to_string())?;
                out.events.push(format!("deposit amount={amount}"));
                Ok(())
            }
            Call::InitOp {
                op_type,
                addr,
                param,
            } => self.init_op(*op_type, addr, *param, ctx, m, out),
            Call::ConfirmOp { op_id, otp, proof } => {
                self.confirm_op(*op_id, otp, proof, ctx, m, out)
            }
            Call::NextSubtree {
                next_layer,
                otp,
                pi_otp,
                pi_sr,
            } => self.next_subtree(next_layer, otp, pi_otp, pi_sr, ctx, m, out),
            Call::NewRoot1 { h_root_and_otp } => {
                self.check_signature(ctx, m)?;
                self.check_root_slot(m)?;
                m.read(1);
                m.write_new(1);
                m.update(1);
                self.l1.push(*h_root_and_otp);
                out.events
                    .push(format!("new_root_stage1 h_root_and_otp={h_root_and_otp}"));
                Ok(())
            }
            Call::NewRoot2 { r_new } => {
                self.check_signature(ctx, m)?;
                self.check_root_slot(m)?;
                m.read(1);
                m.write_new(1);
                m.update(1);
                self.l2.push(*r_new);
                out.events.push(format!("new_root_stage2 r_new={r_new}"));
                Ok(())
            }
            Call::NewRoot3 {
                otp,
                proof,
                cs,
                pi_sr,
            } => self.new_root_stage3(otp, proof, cs, pi_sr, ctx, m, out),
            Call::SendToLastResort => self.send_to_last_resort(ctx, m, out),
        }
    }

    fn check_signature(&self, ctx: &TxContext<'_>, m: &mut Meter) -> Step<()> {
        m.read(1);
        m.trace.sig_checks += 1;
        let ok = ctx
            .signature
            .is_some_and(|sig| self.pk.verify(ctx.signed_message, sig));
        ensure(ok, || "missing or invalid owner signature".into())
    }

    fn check_root_slot(&self, m: &mut Meter) -> Step<()> {
        m.read(1);
        ensure(self.params.is_root_slot(self.next_op_id), || {
            format!(
                "operation {} is not the last of the parent tree",
                self.next_op_id
            )
        })
    }

    fn init_op(
        &mut self,
        op_type: OpType,
        addr: &str,
        param: u64,
        ctx: &TxContext<'_>,
        m: &mut Meter,
        out: &mut Outcome,
    ) -> Step<()> {
        self.check_signature(ctx, m)?;
        m.read(1);
        let p = &self.params;
        ensure(self.next_op_id % p.ns != p.ns - 1, || {
            format!(
                "operation {} is reserved for introducing the next tree",
                self.next_op_id
            )
        })?;
        if op_type == OpType::SetLastResortAddress {
            m.read(1);
            ensure(addr != self.owner, || {
                "last resort address must differ from the owner".into()
            })?;
        }
        let op_id = self.next_op_id;
        self.operations.insert(
            op_id,
            OperationRecord {
                addr: addr.to_string(),
                param,
                pending: true,
                op_type,
            },
        );
        m.write_new(2);
        self.next_op_id += 1;
        m.update(1);
        out.events.push(format!(
            "init_op op_id={op_id} type={op_type} addr={addr} param={param}"
        ));
        Ok(())
    }

    /// OTP check against the cached sublayer, or against the root when the
    /// proof has full height.
    fn verify_otp(&self, otp: &Digest, proof: &MerkleProof, op_id: u64, m: &mut Meter) -> Step<()> {
        let p = &self.params;
        if proof.len() == p.cache_proof_len() as usize {
            let node =
                derive_node_in_cache(&m.h, otp, proof, op_id, p).map_err(|e| e.to_string())?;
            let idx = expected_idx_in_cache(op_id % p.subtree_leaves(), p.hs(), p.ls);
            m.read(1);
            ensure(node == self.sub_layer.nodes[idx as usize], || {
                format!("OTP does not verify for operation {op_id}")
            })
        } else {
            let root = derive_root_hash(&m.h, otp, proof, op_id, p).map_err(|e| e.to_string())?;
            m.read(1);
            ensure(root == self.root, || {
                format!("OTP does not verify for operation {op_id}")
            })
        }
    }

    fn confirm_op(
        &mut self,
        op_id: u64,
        otp: &Digest,
        proof: &MerkleProof,
        ctx: &TxContext<'_>,
        m: &mut Meter,
        out: &mut Outcome,
    ) -> Step<()> {
        m.read(2);
        let record = self
            .operations
            .get(&op_id)
            .cloned()
            .ok_or_else(|| format!("operation {op_id} does not exist"))?;
        ensure(record.pending, || {
            format!("operation {op_id} is not pending")
        })?;
        m.read(1);
        let p = self.params;
        ensure(op_id / p.ns == self.next_op_id / p.ns, || {
            format!("operation {op_id} belongs to an expired subtree")
        })?;
        m.read(1);
        let layer = p.layer_of(op_id);
        ensure(layer >= self.current_layer, || {
            format!(
                "operation {op_id} is in layer {layer}, below the window at {}",
                self.current_layer
            )
        })?;
        ensure(proof.len() == p.cache_proof_len() as usize, || {
            format!("proof must have {} siblings", p.cache_proof_len())
        })?;
        self.verify_otp(otp, proof, op_id, m)?;

        match record.op_type {
            OpType::Transfer => {
                m.read(3);
                ensure(record.param <= self.balance, || {
                    format!(
                        "transfer of {} exceeds balance {}",
                        record.param, self.balance
                    )
                })?;
                let day = ctx.timestamp / SECONDS_PER_DAY;
                if day != self.day_index {
                    self.day_index = day;
                    self.spent_today = 0;
                }
                if self.daily_limit > 0 {
                    ensure(self.spent_today + record.param <= self.daily_limit, || {
                        format!(
                            "transfer of {} exceeds the daily allowance ({} of {} spent)",
                            record.param, self.spent_today, self.daily_limit
                        )
                    })?;
                }
                self.spent_today += record.param;
                self.balance -= record.param;
                m.update(2);
                out.credits.push(Credit {
                    to: record.addr.clone(),
                    amount: record.param,
                });
            }
            OpType::SetDailyLimit => {
                self.daily_limit = record.param;
                m.update(1);
            }
            OpType::SetLastResortTimeout => {
                self.last_resort_timeout = record.param;
                m.update(1);
            }
            OpType::SetLastResortAddress => {
                self.last_resort_addr = Some(record.addr.clone());
                m.update(1);
            }
        }
        if let Some(r) = self.operations.get_mut(&op_id) {
            r.pending = false;
        }
        self.current_layer = layer;
        self.last_activity = ctx.timestamp;
        m.update(3);
        out.events
            .push(format!("confirm_op op_id={op_id} type={}", record.op_type));
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn next_subtree(
        &mut self,
        next_layer: &[Digest],
        otp: &Digest,
        pi_otp: &MerkleProof,
        pi_sr: &MerkleProof,
        ctx: &TxContext<'_>,
        m: &mut Meter,
        out: &mut Outcome,
    ) -> Step<()> {
        let p = self.params;
        m.read(1);
        ensure(!p.is_root_slot(self.next_op_id), || {
            "the last operation of a parent tree cannot introduce a subtree".into()
        })?;
        ensure(self.next_op_id % p.ns == p.ns - 1, || {
            format!("operation {} is not the last of a subtree", self.next_op_id)
        })?;
        m.read(1);
        ensure(next_layer.len() == self.sub_layer.nodes.len(), || {
            "sublayer length mismatch".into()
        })?;
        m.read(1);
        let root =
            derive_root_hash(&m.h, otp, pi_otp, self.next_op_id, &p).map_err(|e| e.to_string())?;
        ensure(root == self.root, || {
            "OTP does not verify against the parent root".into()
        })?;
        let delta = self.sub_layer.delta + 1;
        let sub_root = reduce_mt(&m.h, next_layer).map_err(|e| e.to_string())?;
        ensure(
            subtree_consistency_at(&m.h, &sub_root, pi_sr, &self.root, &p, delta),
            || format!("sublayer is not subtree {delta} of the parent root"),
        )?;
        self.sub_layer = SubtreeLayer {
            nodes: next_layer.to_vec(),
            delta,
        };
        self.next_op_id += 1;
        self.current_layer = 1;
        self.last_activity = ctx.timestamp;
        m.update(next_layer.len() as u64 + 4);
        out.events.push(format!("next_subtree delta={delta}"));
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn new_root_stage3(
        &mut self,
        otp: &Digest,
        proof: &MerkleProof,
        cs: &[Digest],
        pi_sr: &MerkleProof,
        ctx: &TxContext<'_>,
        m: &mut Meter,
        out: &mut Outcome,
    ) -> Step<()> {
        self.check_root_slot(m)?;
        let p = self.params;
        self.verify_otp(otp, proof, self.next_op_id, m)?;
        m.read(2);
        if self.l1.len() > p.len_max || self.l2.len() > p.len_max {
            self.l1.clear();
            self.l2.clear();
            m.update(2);
            out.events.push("new_root_stage3 lists_cleared".into());
            return Ok(());
        }
        let mut found = None;
        'scan: for (i, r_new) in self.l2.iter().enumerate() {
            m.read(1);
            let h_root_and_otp = m.h.hash_parts(&[r_new.as_bytes(), otp.as_bytes()]);
            for (j, entry) in self.l1.iter().enumerate() {
                m.read(1);
                if h_root_and_otp == *entry {
                    found = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((i, j)) = found else {
            out.events.push("new_root_stage3 no_match".into());
            return Ok(());
        };
        let r_new = self.l2[i];
        ensure(cs.len() == p.cache_len(), || {
            "new sublayer has the wrong length".into()
        })?;
        let sub_root = reduce_mt(&m.h, cs).map_err(|e| e.to_string())?;
        ensure(
            subtree_consistency_at(&m.h, &sub_root, pi_sr, &r_new, &p, 0),
            || "new sublayer is inconsistent with the new root".into(),
        )?;
        self.root = r_new;
        self.sub_layer = SubtreeLayer {
            nodes: cs.to_vec(),
            delta: 0,
        };
        self.l1.clear();
        self.l2.clear();
        self.next_op_id += 1;
        self.current_layer = 1;
        self.last_activity = ctx.timestamp;
        m.update(cs.len() as u64 + 7);
        out.events
            .push(format!("new_root_stage3 root={r_new} l2={i} l1={j}"));
        Ok(())
    }

    fn send_to_last_resort(
        &mut self,
        ctx: &TxContext<'_>,
        m: &mut Meter,
        out: &mut Outcome,
    ) -> Step<()> {
        m.read(3);
        let addr = self
            .last_resort_addr
            .clone()
            .ok_or_else(|| "no last resort address set".to_string())?;
        ensure(self.last_resort_timeout > 0, || {
            "no last resort timeout set".into()
        })?;
        let idle = ctx.timestamp.saturating_sub(self.last_activity);
        ensure(idle > self.last_resort_timeout, || {
            format!(
                "wallet idle for {idle}s, timeout is {}s",
                self.last_resort_timeout
            )
        })?;
        let amount = self.balance;
        self.balance = 0;
        self.destroyed = true;
        m.update(2);
        out.credits.push(Credit {
            to: addr.clone(),
            amount,
        });
        out.events
            .push(format!("send_to_last_resort to={addr} amount={amount}"));
        Ok(())
    }

    /// Pending operations that can still be confirmed.
    pub fn confirmable(&self) -> Vec<u64> {
        let p = &self.params;
        self.operations
            .iter()
            .filter(|(id, r)| {
                r.pending
                    && **id / p.ns == self.next_op_id / p.ns
                    && p.layer_of(**id) >= self.current_layer
            })
            .map(|(id, _)| *id)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::authenticator::Authenticator;
    use crate::client::ClientStore;
    use crate::crypto::Seed;
    use crate::signature::SigningKey;

    const T0: u64 = 1_700_000_000;

    struct Rig {
        auth: Authenticator,
        client: ClientStore,
        sk: SigningKey,
        wallet: WalletState,
        now: u64,
    }

    impl Rig {
        fn new(params: TreeParams) -> Self {
            let k = Seed::new([3; 16]);
            let auth = Authenticator::new(k.clone(), params);
            let client = ClientStore::bootstrap_secure(k, params).unwrap();
            let sk = SigningKey::for_party(1, "owner");
            let (layer, pi_sr) = client.current_layer().unwrap();
            let (mut wallet, _) = WalletState::deploy(
                params,
                client.root(),
                sk.public(),
                "owner",
                layer,
                &pi_sr,
                T0,
                None,
            )
            .unwrap();
            wallet.balance = 100;
            Self {
                auth,
                client,
                sk,
                wallet,
                now: T0,
            }
        }

        fn call(&mut self, call: &Call, signer: Option<&SigningKey>) -> Result<Outcome, Revert> {
            self.now += 15;
            let msg = call.encode().into_bytes();
            let sig = signer.map(|s| s.sign(&msg));
            let ctx = TxContext {
                sender: "owner",
                signed_message: &msg,
                signature: sig.as_ref(),
                timestamp: self.now,
            };
            self.wallet.execute(call, &ctx)
        }

        fn init(&mut self, op_type: OpType, addr: &str, param: u64) -> Result<Outcome, Revert> {
            let sk = self.sk.clone();
            self.call(
                &Call::InitOp {
                    op_type,
                    addr: addr.into(),
                    param,
                },
                Some(&sk),
            )
        }

        fn confirm(&mut self, op_id: u64) -> Result<Outcome, Revert> {
            let otp = self.auth.get_otp(op_id).unwrap();
            let c = self.client.build_confirm(op_id, otp).unwrap();
            self.call(&c, None)
        }
    }

    fn params() -> TreeParams {
        TreeParams::new(128, 16, 2, 8, 1).unwrap()
    }

    #[test]
    fn deploy_sets_contract_id() {
        let r = Rig::new(params());
        let expect = params()
            .hasher()
            .hash_parts(&[r.sk.public().as_bytes(), r.client.root().as_bytes()]);
        assert_eq!(r.wallet.contract_id, expect);
        assert_eq!(r.client.expected_contract_id(&r.sk.public()), expect);
    }

    #[test]
    fn forged_sublayer_reverts_deploy() {
        let r = Rig::new(params());
        let (mut layer, pi_sr) = r.client.current_layer().unwrap();
        layer[0] = layer[0].flip_bit(5);
        let res = WalletState::deploy(
            params(),
            r.client.root(),
            r.sk.public(),
            "o",
            layer,
            &pi_sr,
            T0,
            None,
        );
        assert!(res.is_err());
    }

    #[test]
    fn degenerate_deploy() {
        let p = TreeParams::new(128, 8, 2, 8, 0).unwrap();
        let r = Rig::new(p);
        assert_eq!(r.wallet.sub_layer.nodes, vec![r.client.root()]);
    }

    #[test]
    fn transfer_round_trip() {
        let mut r = Rig::new(params());
        let out = r.init(OpType::Transfer, "bob", 5).unwrap();
        assert_eq!(
            out.events,
            vec!["init_op op_id=0 type=transfer addr=bob param=5"]
        );
        let out = r.confirm(0).unwrap();
        assert_eq!(
            out.credits,
            vec![Credit {
                to: "bob".into(),
                amount: 5
            }]
        );
        assert_eq!(r.wallet.balance, 95);
        assert!(r.confirm(0).is_err());
    }

    #[test]
    fn unsigned_or_foreign_init_reverts() {
        let mut r = Rig::new(params());
        let c = Call::InitOp {
            op_type: OpType::Transfer,
            addr: "eve".into(),
            param: 1,
        };
        assert!(r.call(&c, None).is_err());
        let eve = SigningKey::for_party(1, "eve");
        assert!(r.call(&c, Some(&eve)).is_err());
        assert_eq!(r.wallet.next_op_id, 0);
    }

    #[test]
    fn reserved_slot_refuses_init() {
        let mut r = Rig::new(params());
        for _ in 0..7 {
            r.init(OpType::SetDailyLimit, "x", 0).unwrap();
        }
        assert_eq!(r.wallet.next_op_id, 7);
        let err = r.init(OpType::Transfer, "bob", 1).unwrap_err();
        assert!(err.reason.contains("reserved"));
    }

    #[test]
    fn cross_paired_otp_rejected() {
        let mut r = Rig::new(params());
        r.init(OpType::Transfer, "bob", 1).unwrap();
        r.init(OpType::Transfer, "bob", 1).unwrap();
        let otp = r.auth.get_otp(1).unwrap();
        let c = r.client.build_confirm(0, otp).unwrap();
        assert!(r.call(&c, None).is_err());
    }

    #[test]
    fn sliding_window() {
        let mut r = Rig::new(params());
        for _ in 0..5 {
            r.init(OpType::Transfer, "bob", 1).unwrap();
        }
        // ops 0..3 are layer 1, op 4 is layer 2.
        r.confirm(4).unwrap();
        let err = r.confirm(0).unwrap_err();
        assert!(err.reason.contains("below the window"));
    }

    #[test]
    fn daily_limit_rolls_over() {
        let mut r = Rig::new(params());
        r.init(OpType::SetDailyLimit, "x", 10).unwrap();
        r.confirm(0).unwrap();
        r.init(OpType::Transfer, "bob", 8).unwrap();
        r.init(OpType::Transfer, "bob", 8).unwrap();
        r.confirm(1).unwrap();
        assert!(r.confirm(2).unwrap_err().reason.contains("daily"));
        r.now += SECONDS_PER_DAY;
        r.confirm(2).unwrap();
        assert_eq!(r.wallet.balance, 84);
    }

    #[test]
    fn transfer_over_balance_reverts_atomically() {
        let mut r = Rig::new(params());
        r.init(OpType::Transfer, "bob", 1000).unwrap();
        let before = r.wallet.clone();
        assert!(r.confirm(0).is_err());
        assert_eq!(r.wallet, before);
    }

    #[test]
    fn last_resort() {
        let mut r = Rig::new(params());
        assert!(r.init(OpType::SetLastResortAddress, "owner", 0).is_err());
        r.init(OpType::SetLastResortAddress, "vault", 0).unwrap();
        r.init(OpType::SetLastResortTimeout, "x", 1000).unwrap();
        r.confirm(0).unwrap();
        r.confirm(1).unwrap();
        let last = r.wallet.last_activity;
        r.now = last + 1000 - 16;
        assert!(r.call(&Call::SendToLastResort, None).is_err());
        r.now = last + 1000 - 15;
        assert!(r.call(&Call::SendToLastResort, None).is_err());
        r.now = last + 1000 - 14;
        let out = r.call(&Call::SendToLastResort, None).unwrap();
        assert_eq!(
            out.credits,
            vec![Credit {
                to: "vault".into(),
                amount: 100
            }]
        );
        assert!(r.wallet.destroyed);
        assert!(r.call(&Call::Deposit { amount: 1 }, None).is_err());
    }

    #[test]
    fn activity_postpones_last_resort() {
        let mut r = Rig::new(params());
        r.init(OpType::SetLastResortAddress, "vault", 0).unwrap();
        r.init(OpType::SetLastResortTimeout, "x", 200).unwrap();
        r.init(OpType::Transfer, "bob", 1).unwrap();
        r.confirm(0).unwrap();
        r.confirm(1).unwrap();
        r.now += 90;
        r.confirm(2).unwrap();
        r.now += 90;
        assert!(r.call(&Call::SendToLastResort, None).is_err());
    }

    #[test]
    fn next_subtree_flow() {
        let mut r = Rig::new(params());
        for _ in 0..7 {
            r.init(OpType::SetDailyLimit, "x", 0).unwrap();
        }
        let stale = r
            .client
            .build_next_subtree(7, r.auth.get_otp(7).unwrap())
            .unwrap();
        // Previous subtree's sublayer with its own proof is refused.
        let Call::NextSubtree { otp, pi_otp, .. } = stale.clone() else {
            panic!()
        };
        let (old_layer, old_pi) = r.client.current_layer().unwrap();
        let forged = Call::NextSubtree {
            next_layer: old_layer,
            otp,
            pi_otp,
            pi_sr: old_pi,
        };
        assert!(r.call(&forged, None).is_err());
        r.call(&stale, None).unwrap();
        r.client.advance_subtree();
        assert_eq!(r.wallet.sub_layer.delta, 1);
        assert_eq!(r.wallet.next_op_id, 8);
        assert!(r.call(&stale, None).is_err());
        // Pending ops of subtree 0 are dead.
        assert!(r.wallet.confirmable().is_empty());
        r.init(OpType::Transfer, "bob", 2).unwrap();
        r.confirm(8).unwrap();
    }

    #[test]
    fn confirm_hash_count_matches_closed_form() {
        let mut r = Rig::new(params());
        for _ in 0..7 {
            r.init(OpType::SetDailyLimit, "x", 0).unwrap();
        }
        for op in [0u64, 5] {
            let out = r.confirm(op).unwrap();
            let p = params();
            let expect = (p.verifier_offset(op) + 1 + p.cache_proof_len()) as u64;
            assert_eq!(out.trace.hashes, expect);
        }
    }
}
