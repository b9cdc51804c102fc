//! End-to-end protocol runs across authenticator, client, hardware wallet,
//! user and ledger.

mod adversary;
pub mod scenarios;
pub mod script;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::authenticator::Authenticator;
use crate::client::{ClientStore, NewRootStages, DEFAULT_CONFIRMATION_DEPTH};
use crate::contract::WalletState;
use crate::crypto::{mnemonic_decode, mnemonic_encode, Digest, Seed};
use crate::error::Error;
use crate::ledger::{LedgerSim, Transaction, TxId, TxStatus, DEFAULT_GENESIS_TIME};
use crate::merkle::{generation_leaves, reduce_mt, LeafFile, MerkleTree};
use crate::params::TreeParams;
use crate::payload::{AccountId, Call, OpType};
use crate::signature::{party_rng, PublicKey, SigningKey};

pub use adversary::{initiated_by, Interceptor, Tactics};

pub const USER: &str = "user";
pub const ADVERSARY: &str = "mallory";
pub const DEFAULT_FEE: u64 = 10;
pub const DEFAULT_USER_FUNDS: u64 = 1_000_000;
pub const DEFAULT_ADVERSARY_FUNDS: u64 = 1_000;

/// Blocks to wait for a transaction to be included before giving up.
const INCLUSION_PATIENCE: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Secure,
    Insecure,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Secure => "secure",
            Mode::Insecure => "insecure",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "secure" => Ok(Mode::Secure),
            "insecure" => Ok(Mode::Insecure),
            other => Err(Error::Parse(format!(
                "mode must be secure or insecure, got {other:?}"
            ))),
        }
    }
}

/// How a compromised client deviates from the protocol.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum ClientTamper {
    #[default]
    None,
    /// Rewrites the recipient of every operation it initiates.
    Recipient(AccountId),
    /// Replaces the authenticator's leaves with its own during insecure bootstrapping.
    ForgeRoot,
    /// Deploys with the adversary's public key.
    ForgeKey,
}

#[derive(Debug, ThisError)]
pub enum ProtocolError {
    #[error("aborted: {0}")]
    Aborted(String),
    #[error("{stage} reverted: {reason}")]
    Reverted { stage: &'static str, reason: String },
    #[error("revealing the OTP of operation {op_id} would expose pending foreign operations {foreign:?}")]
    Exposed { op_id: u64, foreign: Vec<u64> },
    #[error("gave up waiting for {0}")]
    Timeout(String),
    #[error(transparent)]
    Core(#[from] Error),
}

pub struct BootstrapFailure {
    pub ledger: LedgerSim,
    pub error: ProtocolError,
}

/// Signing device with a display. The key never leaves it except through
/// [`HardwareWallet::compromise`], which models theft.
pub struct HardwareWallet {
    sk: SigningKey,
    display_limit: Option<usize>,
    display: String,
    signed: u64,
}

impl HardwareWallet {
    pub fn new(sk: SigningKey) -> Self {
        Self {
            sk,
            display_limit: None,
            display: String::new(),
            signed: 0,
        }
    }

    /// Show at most `limit` bytes of each transaction.
    pub fn with_display_limit(mut self, limit: Option<usize>) -> Self {
        self.display_limit = limit;
        self
    }

    pub fn public(&self) -> PublicKey {
        self.sk.public()
    }

    pub fn display(&self) -> &str {
        &self.display
    }

    pub fn signatures_made(&self) -> u64 {
        self.signed
    }

    /// The adversary walks away with the key.
    pub fn compromise(&self) -> SigningKey {
        self.sk.clone()
    }

    /// Display `tx`, ask `confirm`, and sign only on approval.
    pub fn sign(
        &mut self,
        tx: Transaction,
        confirm: impl FnOnce(&str) -> bool,
    ) -> Option<Transaction> {
        let mut text = tx.call.encode();
        if let Call::Deploy {
            params, root, pk, ..
        } = &tx.call
        {
            let id = crate::crypto::TruncatedHash::hash_parts(
                &params.hasher(),
                &[pk.as_bytes(), root.as_bytes()],
            );
            text.push_str(&format!("contract_id={id}\n"));
        }
        text.push_str(&format!(
            "sender={}\nto={}\nnonce={}\nfee={}\n",
            tx.sender, tx.to, tx.nonce, tx.fee
        ));
        if let Some(limit) = self.display_limit {
            text.truncate(limit.min(text.len()));
        }
        self.display = text;
        if !confirm(&self.display) {
            return None;
        }
        self.signed += 1;
        Some(tx.sign(&self.sk))
    }
}

/// The human: compares displays and carries values between air-gapped devices.
#[derive(Clone, Debug)]
pub struct UserModel {
    pub compares: bool,
    pub via_mnemonic: bool,
    carried: u64,
}

impl Default for UserModel {
    fn default() -> Self {
        Self {
            compares: true,
            via_mnemonic: true,
            carried: 0,
        }
    }
}

impl UserModel {
    /// Approve unless a fully visible `key=value` line contradicts `expected`.
    /// Fields cut off by the display are taken on trust.
    pub fn approve(&mut self, shown: &str, expected: &[(String, String)]) -> bool {
        if !self.compares {
            return true;
        }
        let complete = match shown.rfind('\n') {
            Some(end) => &shown[..end],
            None => "",
        };
        for line in complete.lines() {
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            if let Some((_, want)) = expected.iter().find(|(ek, _)| ek == k) {
                if want != v {
                    return false;
                }
            }
        }
        true
    }

    /// Move a value from one device to another by reading it off one
    /// display and typing it into the other.
    pub fn carry(&mut self, d: &Digest) -> Result<Digest, Error> {
        self.carried += 1;
        if self.via_mnemonic {
            mnemonic_decode(&mnemonic_encode(d)?)
        } else {
            Ok(*d)
        }
    }

    pub fn values_carried(&self) -> u64 {
        self.carried
    }
}

fn expected_fields(call: &Call) -> Vec<(String, String)> {
    call.encode()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[derive(Clone, Debug)]
pub struct WorldConfig {
    pub run_seed: u64,
    pub params: TreeParams,
    pub mode: Mode,
    pub tamper: ClientTamper,
    pub display_limit: Option<usize>,
    pub user: UserModel,
    pub confirmation_depth: u64,
    pub fee: u64,
    pub user_funds: u64,
    pub adversary_funds: u64,
}

impl WorldConfig {
    pub fn new(run_seed: u64, params: TreeParams) -> Self {
        Self {
            run_seed,
            params,
            mode: Mode::Secure,
            tamper: ClientTamper::None,
            display_limit: None,
            user: UserModel::default(),
            confirmation_depth: DEFAULT_CONFIRMATION_DEPTH,
            fee: DEFAULT_FEE,
            user_funds: DEFAULT_USER_FUNDS,
            adversary_funds: DEFAULT_ADVERSARY_FUNDS,
        }
    }

    pub fn mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn tamper(mut self, tamper: ClientTamper) -> Self {
        self.tamper = tamper;
        self
    }

    pub fn display_limit(mut self, limit: usize) -> Self {
        self.display_limit = Some(limit);
        self
    }

    pub fn depth(mut self, depth: u64) -> Self {
        self.confirmation_depth = depth;
        self
    }

    pub fn authenticator_seed(&self) -> Seed {
        Seed::random(&mut party_rng(self.run_seed, "authenticator"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpReceipt {
    pub op_id: u64,
    pub init_tx: TxId,
    pub confirm_tx: TxId,
    /// The confirmation was executed by someone else's transaction first.
    pub front_run: bool,
    /// Placeholder operations initiated to step past exposed slots.
    pub skipped: Vec<u64>,
}

/// All parties of one deployment plus the ledger they share.
pub struct World {
    pub ledger: LedgerSim,
    pub auth: Authenticator,
    pub client: ClientStore,
    pub hw: HardwareWallet,
    pub user: UserModel,
    pub tamper: ClientTamper,
    pub mode: Mode,
    pub wallet: AccountId,
    pub fee: u64,
    pub run_seed: u64,
    own_ops: BTreeSet<u64>,
}

impl World {
    /// Bootstrap and deploy. Fails with [`ProtocolError::Aborted`] when the
    /// user's display comparison catches a forgery; nothing is deployed then.
    pub fn bootstrap(cfg: WorldConfig) -> Result<World, ProtocolError> {
        let ledger = LedgerSim::new(
            DEFAULT_GENESIS_TIME,
            &[(USER, cfg.user_funds), (ADVERSARY, cfg.adversary_funds)],
        );
        Self::bootstrap_on(cfg, ledger).map_err(|f| f.error)
    }

    /// Bootstrap on an existing ledger, which is handed back on failure.
    #[allow(clippy::result_large_err)]
    pub fn bootstrap_on(
        cfg: WorldConfig,
        mut ledger: LedgerSim,
    ) -> Result<World, BootstrapFailure> {
        let params = cfg.params;
        let auth = Authenticator::new(cfg.authenticator_seed(), params);
        let mut hw = HardwareWallet::new(SigningKey::for_party(cfg.run_seed, USER))
            .with_display_limit(cfg.display_limit);
        let mut user = cfg.user.clone();
        ledger.note(format!("bootstrap mode={} params={params}", cfg.mode));

        let client = match Self::bootstrap_client(&cfg, &auth, &mut user) {
            Ok(c) => c,
            Err(error) => return Err(BootstrapFailure { ledger, error }),
        };
        let pk = match cfg.tamper {
            ClientTamper::ForgeKey => SigningKey::for_party(cfg.run_seed, ADVERSARY).public(),
            _ => hw.public(),
        };
        let call = match client.deploy_call(pk) {
            Ok(c) => c,
            Err(e) => {
                return Err(BootstrapFailure {
                    ledger,
                    error: e.into(),
                })
            }
        };
        let expected = [
            (
                "root".to_string(),
                auth.display_root().map(|r| r.to_hex()).unwrap_or_default(),
            ),
            ("pk".to_string(), hw.public().to_hex()),
        ];
        let tx = Transaction::new(USER, "", call, cfg.fee, ledger.next_nonce(USER));
        let Some(tx) = hw.sign(tx, |shown| user.approve(shown, &expected)) else {
            ledger.note(
                "bootstrap aborted: wallet display disagrees with authenticator or device key",
            );
            let error = ProtocolError::Aborted(
                "deployment payload does not match the authenticator root or the device key".into(),
            );
            return Err(BootstrapFailure { ledger, error });
        };
        let mut world = World {
            ledger,
            auth,
            client,
            hw,
            user,
            tamper: cfg.tamper.clone(),
            mode: cfg.mode,
            wallet: String::new(),
            fee: cfg.fee,
            run_seed: cfg.run_seed,
            own_ops: BTreeSet::new(),
        };
        world.client.set_confirmation_depth(cfg.confirmation_depth);
        match world.deploy(tx, pk) {
            Ok(()) => Ok(world),
            Err(error) => Err(BootstrapFailure {
                ledger: world.ledger,
                error,
            }),
        }
    }

    fn bootstrap_client(
        cfg: &WorldConfig,
        auth: &Authenticator,
        user: &mut UserModel,
    ) -> Result<ClientStore, ProtocolError> {
        let params = cfg.params;
        match cfg.mode {
            Mode::Secure => {
                let words = auth.display_seed();
                Ok(ClientStore::bootstrap_secure_mnemonic(&words, params)?)
            }
            Mode::Insecure => {
                let mut file = auth.export_leaves()?;
                if cfg.tamper == ClientTamper::ForgeRoot {
                    let k = Seed::random(&mut party_rng(cfg.run_seed, "forged-leaves"));
                    file = LeafFile::new(&params, 0, generation_leaves(&k, &params, 0)?);
                }
                user.carried += 1;
                Ok(ClientStore::bootstrap_insecure(&file, params)?)
            }
        }
    }

    fn deploy(&mut self, tx: Transaction, pk: PublicKey) -> Result<(), ProtocolError> {
        let id = self.ledger.submit(tx)?;
        self.wait_included(id)?;
        let r = self.ledger.receipt(id).expect("included");
        if let TxStatus::Reverted(reason) | TxStatus::Dropped(reason) = &r.status {
            return Err(ProtocolError::Reverted {
                stage: "deploy",
                reason: reason.clone(),
            });
        }
        let expected = self.client.expected_contract_id(&pk);
        self.wallet = expected.to_hex();
        if self.ledger.wallet(&self.wallet).is_none() {
            return Err(ProtocolError::Aborted(
                "deployed contract id does not match h(PK || R)".into(),
            ));
        }
        self.client.set_contract_id(expected);
        self.ledger
            .note(format!("deployed contract_id={}", self.wallet));
        Ok(())
    }

    pub fn params(&self) -> TreeParams {
        *self.client.params()
    }

    pub fn wallet_state(&self) -> &WalletState {
        self.ledger.wallet(&self.wallet).expect("wallet deployed")
    }

    pub fn own_ops(&self) -> &BTreeSet<u64> {
        &self.own_ops
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.ledger.note(line);
    }

    fn nonce(&self) -> u64 {
        self.ledger.next_nonce(USER)
    }

    pub fn wait_included(&mut self, id: TxId) -> Result<(), ProtocolError> {
        for _ in 0..INCLUSION_PATIENCE {
            if self.ledger.receipt(id).is_some() {
                return Ok(());
            }
            self.ledger.mine_block();
        }
        Err(ProtocolError::Timeout(format!("inclusion of tx {id}")))
    }

    /// Mine until `id` is `depth` blocks deep. A reorg that orphans it puts
    /// it back in the mempool; the wait notices and starts over.
    pub fn wait_depth(&mut self, id: TxId, depth: u64) -> Result<(), ProtocolError> {
        let mut seen = false;
        for _ in 0..(depth + INCLUSION_PATIENCE) * 4 {
            match self.ledger.confirmations(id) {
                Some(c) if c >= depth => return Ok(()),
                Some(_) => seen = true,
                None if self.ledger.is_pending(id) => {
                    if seen {
                        seen = false;
                        self.note(format!(
                            "tx {id} orphaned by a reorg; waiting for re-inclusion"
                        ));
                    }
                }
                None => return Err(ProtocolError::Timeout(format!("tx {id} left the mempool"))),
            }
            self.ledger.mine_block();
        }
        Err(ProtocolError::Timeout(format!(
            "{depth} confirmations of tx {id}"
        )))
    }

    fn submit_status(&mut self, tx: Transaction) -> Result<(TxId, TxStatus), ProtocolError> {
        let id = self.ledger.submit(tx)?;
        self.wait_included(id)?;
        Ok((
            id,
            self.ledger.receipt(id).expect("included").status.clone(),
        ))
    }

    pub fn fund(&mut self, amount: u64) -> Result<TxId, ProtocolError> {
        let tx = Transaction::new(
            USER,
            &self.wallet,
            Call::Deposit { amount },
            self.fee,
            self.nonce(),
        );
        match self.submit_status(tx)? {
            (id, TxStatus::Ok) => Ok(id),
            (_, TxStatus::Reverted(r) | TxStatus::Dropped(r)) => Err(ProtocolError::Reverted {
                stage: "deposit",
                reason: r,
            }),
        }
    }

    fn tampered(&self, call: Call) -> Call {
        match (&self.tamper, call) {
            (ClientTamper::Recipient(to), Call::InitOp { op_type, param, .. }) => Call::InitOp {
                op_type,
                addr: to.clone(),
                param,
            },
            (_, call) => call,
        }
    }

    /// Sign `call` on the hardware wallet after the user checks it against
    /// `intent`, then submit.
    fn signed_submit(&mut self, intent: &Call, call: Call) -> Result<TxId, ProtocolError> {
        let expected = expected_fields(intent);
        let tx = Transaction::new(USER, &self.wallet, call, self.fee, self.nonce());
        let user = &mut self.user;
        let tx = self
            .hw
            .sign(tx, |shown| user.approve(shown, &expected))
            .ok_or_else(|| {
                ProtocolError::Aborted(format!("user declined to sign {}", intent.name()))
            })?;
        Ok(self.ledger.submit(tx)?)
    }

    /// Sign and submit an initiation without waiting.
    pub fn submit_init(
        &mut self,
        op_type: OpType,
        addr: &str,
        param: u64,
    ) -> Result<TxId, ProtocolError> {
        let intent = Call::InitOp {
            op_type,
            addr: addr.to_string(),
            param,
        };
        let call = self.tampered(intent.clone());
        self.signed_submit(&intent, call)
    }

    /// Stage 1 of an operation: signed initiation, waited to confirmation depth.
    pub fn initiate(
        &mut self,
        op_type: OpType,
        addr: &str,
        param: u64,
    ) -> Result<(TxId, u64), ProtocolError> {
        let id = self.submit_init(op_type, addr, param)?;
        self.wait_depth(id, self.client.confirmation_depth())?;
        let op_id = self.accept_init(id)?;
        self.note(format!(
            "initiated op_id={op_id} type={op_type} addr={addr} param={param}"
        ));
        Ok((id, op_id))
    }

    /// Operation ID assigned by a mined initiation of ours.
    pub fn accept_init(&mut self, id: TxId) -> Result<u64, ProtocolError> {
        let r = self.ledger.receipt(id).ok_or_else(|| {
            ProtocolError::Timeout(format!("tx {id} is not on the canonical chain"))
        })?;
        let op_id = match &r.status {
            TxStatus::Ok => r
                .events
                .iter()
                .find_map(|e| e.strip_prefix("init_op op_id="))
                .and_then(|s| s.split(' ').next())
                .and_then(|s| s.parse::<u64>().ok())
                .expect("init event carries the op id"),
            TxStatus::Reverted(reason) | TxStatus::Dropped(reason) => {
                return Err(ProtocolError::Reverted {
                    stage: "init_op",
                    reason: reason.clone(),
                })
            }
        };
        self.own_ops.insert(op_id);
        Ok(op_id)
    }

    /// Pending operations someone else initiated whose OTPs follow from the
    /// OTP of `op_id` (same chain, earlier iteration layer).
    pub fn exposure(&self, op_id: u64) -> Vec<u64> {
        let p = self.params();
        self.wallet_state()
            .confirmable()
            .into_iter()
            .filter(|x| {
                !self.own_ops.contains(x)
                    && p.generation(*x) == p.generation(op_id)
                    && p.beta(*x) == p.beta(op_id)
                    && p.layer_of(*x) < p.layer_of(op_id)
            })
            .collect()
    }

    /// Stage 2: the user carries the OTP from the authenticator to the client.
    pub fn confirm(&mut self, op_id: u64) -> Result<(TxId, bool), ProtocolError> {
        let otp = self.auth.get_otp(op_id)?;
        let otp = self.user.carry(&otp)?;
        self.confirm_with(op_id, otp)
    }

    /// Confirm with an OTP typed in by the user. The second value is true
    /// when another transaction confirmed the operation first.
    pub fn confirm_with(&mut self, op_id: u64, otp: Digest) -> Result<(TxId, bool), ProtocolError> {
        let call = self.client.build_confirm(op_id, otp)?;
        let tx = Transaction::new(USER, &self.wallet, call, self.fee, self.nonce());
        let (id, status) = self.submit_status(tx)?;
        let done = self
            .wallet_state()
            .operations
            .get(&op_id)
            .is_some_and(|r| !r.pending);
        match status {
            TxStatus::Ok => Ok((id, false)),
            _ if done => {
                self.note(format!(
                    "op_id={op_id} was confirmed by another transaction first"
                ));
                Ok((id, true))
            }
            TxStatus::Reverted(reason) | TxStatus::Dropped(reason) => {
                Err(ProtocolError::Reverted {
                    stage: "confirm_op",
                    reason,
                })
            }
        }
    }

    /// Next operation ID, handling subtree and parent-tree boundaries first.
    fn prepare_slot(&mut self) -> Result<u64, ProtocolError> {
        let p = self.params();
        let next = self.wallet_state().next_op_id;
        if p.is_root_slot(next) {
            self.run_new_root(self.mode)?;
        } else if p.is_subtree_slot(next) {
            self.run_next_subtree()?;
        }
        Ok(self.wallet_state().next_op_id)
    }

    /// A harmless operation that only consumes an ID.
    fn placeholder(&self) -> (OpType, String, u64) {
        (
            OpType::SetDailyLimit,
            String::new(),
            self.wallet_state().daily_limit,
        )
    }

    /// Full operation: initiate, wait, confirm. Slots whose OTP would let a
    /// front-runner derive the OTP of a foreign pending operation are
    /// consumed by placeholders first.
    pub fn run_operation(
        &mut self,
        op_type: OpType,
        addr: &str,
        param: u64,
    ) -> Result<OpReceipt, ProtocolError> {
        let mut skipped = Vec::new();
        let limit = self.params().ns * 2 + 2;
        for _ in 0..limit {
            let slot = self.prepare_slot()?;
            if !self.exposure(slot).is_empty() {
                let (t, a, v) = self.placeholder();
                let (_, id) = self.initiate(t, &a, v)?;
                self.note(format!("skipped exposed slot op_id={id}"));
                skipped.push(id);
                continue;
            }
            let (init_tx, op_id) = self.initiate(op_type, addr, param)?;
            let foreign = self.exposure(op_id);
            if !foreign.is_empty() {
                return Err(ProtocolError::Exposed { op_id, foreign });
            }
            let (confirm_tx, front_run) = self.confirm(op_id)?;
            return Ok(OpReceipt {
                op_id,
                init_tx,
                confirm_tx,
                front_run,
                skipped,
            });
        }
        Err(ProtocolError::Timeout("a usable operation slot".into()))
    }

    /// Introduce the next subtree with the OTP of the reserved slot.
    pub fn run_next_subtree(&mut self) -> Result<TxId, ProtocolError> {
        let op_id = self.wallet_state().next_op_id;
        let foreign = self.exposure(op_id);
        if !foreign.is_empty() {
            return Err(ProtocolError::Exposed { op_id, foreign });
        }
        let otp = self.user.carry(&self.auth.get_otp(op_id)?)?;
        let call = self.client.build_next_subtree(op_id, otp)?;
        let delta = self.client.delta() + 1;
        let tx = Transaction::new(USER, &self.wallet, call, self.fee, self.nonce());
        let (id, status) = self.submit_status(tx)?;
        if self.wallet_state().sub_layer.delta != delta {
            let reason = match status {
                TxStatus::Reverted(r) | TxStatus::Dropped(r) => r,
                TxStatus::Ok => "subtree not installed".into(),
            };
            return Err(ProtocolError::Reverted {
                stage: "next_subtree",
                reason,
            });
        }
        self.client.advance_subtree();
        self.note(format!("subtree delta={delta} installed"));
        Ok(id)
    }

    /// Replace the parent tree. Stages 1 and 2 are signed and buried before
    /// the OTP is revealed in stage 3.
    pub fn run_new_root(&mut self, mode: Mode) -> Result<TxId, ProtocolError> {
        let op_id = self.wallet_state().next_op_id;
        let p = self.params();
        if !p.is_root_slot(op_id) {
            return Err(Error::Refused(format!(
                "operation {op_id} is not the last of a parent tree"
            ))
            .into());
        }
        let (r_shown, h_shown) = self.auth.new_parent_preview(op_id)?;
        let (r_new, h_root_and_otp, secure_stages, next_file) = match mode {
            Mode::Secure => {
                let words = self.auth.display_seed();
                let k = Seed::from_slice(mnemonic_decode(&words)?.as_bytes())?;
                self.user.carried += 1;
                let stages = self.client.build_new_root_stages_secure(op_id, k)?;
                (stages.r_new, stages.h_root_and_otp, Some(stages), None)
            }
            Mode::Insecure => {
                let file = self.auth.export_next_leaves()?;
                self.user.carried += 1;
                let r = reduce_mt(&p.hasher(), &file.leaves)?;
                let h = self.user.carry(&h_shown)?;
                (r, h, None, Some(file))
            }
        };
        let depth = self.client.confirmation_depth();
        let s1 = Call::NewRoot1 { h_root_and_otp };
        let shown1 = Call::NewRoot1 {
            h_root_and_otp: h_shown,
        };
        let id1 = self.signed_submit(&shown1, s1)?;
        let s2 = Call::NewRoot2 { r_new };
        let shown2 = Call::NewRoot2 { r_new: r_shown };
        let id2 = self.signed_submit(&shown2, s2)?;
        self.wait_depth(id1, depth)?;
        self.wait_depth(id2, depth)?;
        for id in [id1, id2] {
            if let TxStatus::Reverted(reason) | TxStatus::Dropped(reason) =
                &self.ledger.receipt(id).expect("mined").status
            {
                return Err(ProtocolError::Reverted {
                    stage: "new_root_stage1/2",
                    reason: reason.clone(),
                });
            }
        }
        let foreign = self.exposure(op_id);
        if !foreign.is_empty() {
            return Err(ProtocolError::Exposed { op_id, foreign });
        }
        // Once the OTP is public, whoever holds the earliest L2 entry can pair
        // it with a fresh L1 entry, and oversized lists are only cleared after
        // the OTP check. Reveal only when our pair is guaranteed to match first.
        let w = self.wallet_state();
        if w.l1.len() > p.len_max || w.l2.len() > p.len_max {
            return Err(ProtocolError::Aborted(format!(
                "replacement lists exceed {} entries; revealing the OTP would only clear them",
                p.len_max
            )));
        }
        if w.l2.first() != Some(&r_new) || !w.l1.contains(&h_root_and_otp) {
            return Err(ProtocolError::Aborted(
                "a foreign root precedes ours in the replacement list".into(),
            ));
        }
        let stages: NewRootStages = match (secure_stages, next_file) {
            (Some(s), _) => s,
            (None, Some(file)) => {
                let otp = self.user.carry(&self.auth.get_otp(op_id)?)?;
                self.client
                    .build_new_root_stages_insecure(op_id, &file, otp)?
            }
            _ => unreachable!(),
        };
        let tx = Transaction::new(
            USER,
            &self.wallet,
            stages.stage3.clone(),
            self.fee,
            self.nonce(),
        );
        let (id3, status) = self.submit_status(tx)?;
        if self.wallet_state().root != r_new {
            let reason = match status {
                TxStatus::Reverted(r) | TxStatus::Dropped(r) => r,
                TxStatus::Ok => {
                    let events = &self.ledger.receipt(id3).expect("mined").events;
                    format!("root not replaced ({})", events.join("; "))
                }
            };
            return Err(ProtocolError::Reverted {
                stage: "new_root_stage3",
                reason,
            });
        }
        self.client.install_generation(stages);
        self.auth.advance_generation();
        self.note(format!(
            "parent root replaced eta={} root={r_new}",
            self.client.eta()
        ));
        Ok(id3)
    }

    /// Run placeholder operations until `next_op_id` reaches `target`.
    pub fn drive_to(&mut self, target: u64) -> Result<(), ProtocolError> {
        while self.wallet_state().next_op_id < target {
            let next = self.wallet_state().next_op_id;
            let p = self.params();
            if p.is_root_slot(next) || p.is_subtree_slot(next) {
                if next + 1 > target {
                    break;
                }
                self.prepare_slot()?;
                continue;
            }
            let (t, a, v) = self.placeholder();
            self.run_operation(t, &a, v)?;
        }
        Ok(())
    }

    /// Fresh tree over next-generation leaves derived from another seed,
    /// as an adversary would present it.
    pub fn foreign_tree(&self, party: &str) -> Result<MerkleTree, Error> {
        let p = self.params();
        let k = Seed::random(&mut party_rng(self.run_seed, party));
        MerkleTree::build(
            &p.hasher(),
            generation_leaves(&k, &p, self.client.eta() + 1)?,
        )
    }
}
