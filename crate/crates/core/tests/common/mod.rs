//! Contract-level driver shared by the integration tests. Calls go straight
//! to a `WalletState` without a ledger, so every step is deterministic and
//! cheap to clone.

#![allow(dead_code)]

use sha3::{Digest as _, Sha3_256};
use smartotps::authenticator::Authenticator;
use smartotps::client::ClientStore;
use smartotps::contract::{Outcome, Revert, TxContext, WalletState};
use smartotps::crypto::{Digest, Seed};
use smartotps::ledger::{Transaction, DEFAULT_BLOCK_TIME, DEFAULT_GENESIS_TIME};
use smartotps::payload::{Call, OpType};
use smartotps::signature::SigningKey;
use smartotps::TreeParams;

pub const OWNER: &str = "owner";

pub struct Harness {
    pub params: TreeParams,
    pub seed: Seed,
    pub auth: Authenticator,
    pub client: ClientStore,
    pub wallet: WalletState,
    pub sk: SigningKey,
    pub now: u64,
    nonce: u64,
}

impl Harness {
    pub fn new(params: TreeParams, seed_byte: u8) -> Self {
        let seed = Seed::new([seed_byte; 16]);
        let auth = Authenticator::new(seed.clone(), params);
        let client = ClientStore::bootstrap_secure(seed.clone(), params).unwrap();
        let sk = SigningKey::for_party(u64::from(seed_byte), OWNER);
        let deploy = client.deploy_call(sk.public()).unwrap();
        let Call::Deploy {
            root,
            sub_layer,
            pi_sr,
            ..
        } = &deploy
        else {
            unreachable!()
        };
        let (mut wallet, _) = WalletState::deploy(
            params,
            *root,
            sk.public(),
            OWNER,
            sub_layer.clone(),
            pi_sr,
            DEFAULT_GENESIS_TIME,
            Some(&deploy),
        )
        .unwrap();
        wallet.balance = 1_000_000;
        Self {
            params,
            seed,
            auth,
            client,
            wallet,
            sk,
            now: DEFAULT_GENESIS_TIME,
            nonce: 0,
        }
    }

    fn run_on(&mut self, target: Option<&mut WalletState>, call: Call) -> Result<Outcome, Revert> {
        self.nonce += 1;
        self.now += DEFAULT_BLOCK_TIME;
        let addr = self.wallet.address();
        let mut tx = Transaction::new(OWNER, &addr, call, 0, self.nonce);
        if tx.call.requires_signature() {
            tx = tx.sign(&self.sk);
        }
        let msg = tx.signing_bytes();
        let ctx = TxContext {
            sender: &tx.sender,
            signed_message: &msg,
            signature: tx.signature.as_ref(),
            timestamp: self.now,
        };
        match target {
            Some(w) => w.execute(&tx.call, &ctx),
            None => self.wallet.execute(&tx.call, &ctx),
        }
    }

    pub fn exec(&mut self, call: Call) -> Result<Outcome, Revert> {
        self.run_on(None, call)
    }

    /// Run `call` against a copy of the wallet, leaving the real one alone.
    pub fn probe(&mut self, call: Call) -> (Result<Outcome, Revert>, WalletState) {
        let mut w = self.wallet.clone();
        let r = self.run_on(Some(&mut w), call);
        (r, w)
    }

    /// Run several calls in order against a copy of the wallet.
    pub fn probe_seq(&mut self, calls: Vec<Call>) -> WalletState {
        let mut w = self.wallet.clone();
        for call in calls {
            let _ = self.run_on(Some(&mut w), call);
        }
        w
    }

    pub fn otp(&self, op_id: u64) -> Digest {
        self.auth.get_otp(op_id).unwrap()
    }

    pub fn init(&mut self) -> u64 {
        let op_id = self.wallet.next_op_id;
        self.exec(Call::InitOp {
            op_type: OpType::Transfer,
            addr: "bob".into(),
            param: 1,
        })
        .unwrap_or_else(|r| panic!("init {op_id}: {r}"));
        op_id
    }

    /// A confirmation of `op_id` carrying an arbitrary OTP and the cache proof of `proof_for`.
    pub fn confirm_call(&self, op_id: u64, otp: Digest, proof_for: u64) -> Call {
        Call::ConfirmOp {
            op_id,
            otp,
            proof: self.client.cache_proof(proof_for).unwrap(),
        }
    }

    pub fn confirm(&mut self, op_id: u64) -> Result<Outcome, Revert> {
        let call = self.confirm_call(op_id, self.otp(op_id), op_id);
        self.exec(call)
    }

    pub fn next_subtree(&mut self) -> Result<Outcome, Revert> {
        let op_id = self.wallet.next_op_id;
        let call = self
            .client
            .build_next_subtree(op_id, self.otp(op_id))
            .unwrap();
        let r = self.exec(call);
        if r.is_ok() {
            self.client.advance_subtree();
        }
        r
    }

    /// Confirm every regular slot before `target`, introducing subtrees on the way.
    pub fn drive_to(&mut self, target: u64) -> Result<(), Revert> {
        while self.wallet.next_op_id < target {
            let next = self.wallet.next_op_id;
            if self.params.is_subtree_slot(next) {
                self.next_subtree()?;
            } else {
                self.init();
                self.confirm(next)?;
            }
        }
        Ok(())
    }

    /// All three stages of a root replacement using the given OTP for the
    /// commitment and the reveal. Returns whether the root changed.
    pub fn new_root_with(&mut self, otp: Digest) -> bool {
        let op_id = self.wallet.next_op_id;
        let stages = self
            .client
            .build_new_root_stages_secure_with_otp(op_id, &self.seed, otp);
        let before = self.wallet.root;
        for call in [
            stages.stage1.clone(),
            stages.stage2.clone(),
            stages.stage3.clone(),
        ] {
            if self.exec(call).is_err() {
                return false;
            }
        }
        let changed = self.wallet.root != before;
        if changed {
            self.client.install_generation(stages);
            self.auth.advance_generation();
        }
        changed
    }

    pub fn new_root(&mut self) -> bool {
        let otp = self.otp(self.wallet.next_op_id);
        self.new_root_with(otp)
    }
}

trait StagesWithOtp {
    fn build_new_root_stages_secure_with_otp(
        &self,
        op_id: u64,
        k: &Seed,
        otp: Digest,
    ) -> smartotps::client::NewRootStages;
}

impl StagesWithOtp for ClientStore {
    fn build_new_root_stages_secure_with_otp(
        &self,
        op_id: u64,
        k: &Seed,
        otp: Digest,
    ) -> smartotps::client::NewRootStages {
        let leaves =
            smartotps::merkle::generation_leaves(k, self.params(), self.eta() + 1).unwrap();
        self.build_new_root_stages(op_id, leaves, otp).unwrap()
    }
}

/// SHA3-256 truncated to `bytes`, computed without the crate's hasher.
pub fn sha3_trunc(bytes: usize, parts: &[&[u8]]) -> Vec<u8> {
    let mut h = Sha3_256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize()[..bytes].to_vec()
}

pub fn clear_lsb(d: &[u8]) -> Vec<u8> {
    let mut v = d.to_vec();
    *v.last_mut().unwrap() &= !1;
    v
}

/// Recursive Merkle root over raw byte leaves.
pub fn oracle_root(leaves: &[Vec<u8>]) -> Vec<u8> {
    if leaves.len() == 1 {
        return leaves[0].clone();
    }
    let (l, r) = leaves.split_at(leaves.len() / 2);
    let (l, r) = (oracle_root(l), oracle_root(r));
    sha3_trunc(l.len(), &[&clear_lsb(&l), &clear_lsb(&r)])
}

/// Siblings of leaf `idx`, leaf to top, each tagged with its side in the LSB.
pub fn oracle_path(leaves: &[Vec<u8>], idx: usize) -> Vec<Vec<u8>> {
    if leaves.len() == 1 {
        return Vec::new();
    }
    let half = leaves.len() / 2;
    let (l, r) = leaves.split_at(half);
    let (mut path, sib, right) = if idx < half {
        (oracle_path(l, idx), oracle_root(r), true)
    } else {
        (oracle_path(r, idx - half), oracle_root(l), false)
    };
    let mut sib = clear_lsb(&sib);
    *sib.last_mut().unwrap() |= right as u8;
    path.push(sib);
    path
}

/// Chain element at `to` from the element at `from`, step `j` hashing `be32(j) || d`.
pub fn oracle_chain(bytes: usize, d: &[u8], from: u32, to: u32) -> Vec<u8> {
    (from + 1..=to).fold(d.to_vec(), |cur, j| {
        sha3_trunc(bytes, &[&j.to_be_bytes(), &cur])
    })
}
