//! A simulated blockchain: fee-ordered mempool, explicit block production,
//! forks and reorgs, and mempool observers for adversaries.
//!
//! Every branch keeps a state snapshot per height, so forking is a prefix
//! copy and a reorg is a pointer switch plus mempool bookkeeping.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::contract::{CallTrace, TxContext, WalletState};
use crate::crypto::HashKind;
use crate::error::Error;
use crate::payload::{AccountId, Call};
use crate::signature::{PublicKey, Signature, SigningKey};

pub const DEFAULT_BLOCK_TIME: u64 = 15;
pub const DEFAULT_GENESIS_TIME: u64 = 1_700_000_000;

pub type TxId = u64;
pub type BranchId = usize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: AccountId,
    pub to: AccountId,
    pub call: Call,
    pub fee: u64,
    pub nonce: u64,
    pub signature: Option<Signature>,
}

impl Transaction {
    pub fn new(sender: &str, to: &str, call: Call, fee: u64, nonce: u64) -> Self {
        Self {
            sender: sender.to_string(),
            to: to.to_string(),
            call,
            fee,
            nonce,
            signature: None,
        }
    }

    /// Bytes covered by the signature: everything except the signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        format!(
            "sender={}\nto={}\nnonce={}\nfee={}\n{}",
            self.sender,
            self.to,
            self.nonce,
            self.fee,
            self.call.encode()
        )
        .into_bytes()
    }

    pub fn sign(mut self, sk: &SigningKey) -> Self {
        self.signature = Some(sk.sign(&self.signing_bytes()));
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxStatus {
    Ok,
    Reverted(String),
    /// Not executed at all (stale nonce).
    Dropped(String),
}

impl TxStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, TxStatus::Ok)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_id: TxId,
    pub tx: Transaction,
    pub status: TxStatus,
    pub trace: CallTrace,
    pub events: Vec<String>,
    /// Key the wallet checked the signature against, for the audit.
    pub sig_key: Option<PublicKey>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: u64,
    pub height: u64,
    pub timestamp: u64,
    pub receipts: Vec<Receipt>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    pub accounts: BTreeMap<AccountId, u64>,
    pub wallets: BTreeMap<AccountId, WalletState>,
    pub nonces: BTreeMap<AccountId, u64>,
}

impl ChainState {
    pub fn balance(&self, account: &str) -> u64 {
        self.accounts
            .get(account)
            .copied()
            .or_else(|| self.wallets.get(account).map(|w| w.balance))
            .unwrap_or(0)
    }

    pub fn supply(&self) -> u64 {
        self.accounts.values().sum::<u64>() + self.wallets.values().map(|w| w.balance).sum::<u64>()
    }
}

#[derive(Clone, Debug)]
struct Branch {
    blocks: Vec<Block>,
    states: Vec<ChainState>,
}

impl Branch {
    fn head(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }
}

/// What a submission looked like when it entered the mempool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Submission {
    pub tx_id: TxId,
    pub sender: AccountId,
    pub call: &'static str,
    /// For confirmations: depth of the matching initiation at submit time.
    pub init_confirmations: Option<u64>,
}

/// Sees every submission before it is mined and may inject transactions.
pub trait MempoolObserver {
    fn name(&self) -> &str;
    fn on_submit(&mut self, tx: &Transaction, ledger: &LedgerSim) -> Vec<Transaction>;
}

pub struct LedgerSim {
    branches: Vec<Branch>,
    canonical: BranchId,
    mempool: Vec<(TxId, Transaction)>,
    next_tx_id: TxId,
    next_block_id: u64,
    block_time: u64,
    time_skip: u64,
    observers: Vec<Box<dyn MempoolObserver>>,
    log: Vec<String>,
    submissions: Vec<Submission>,
    supply: u64,
}

impl LedgerSim {
    pub fn new(genesis_time: u64, accounts: &[(&str, u64)]) -> Self {
        let mut state = ChainState::default();
        for (name, bal) in accounts {
            state.accounts.insert(name.to_string(), *bal);
        }
        let supply = state.supply();
        let genesis = Block {
            id: 0,
            height: 0,
            timestamp: genesis_time,
            receipts: Vec::new(),
        };
        let mut log = Vec::new();
        for (name, bal) in accounts {
            log.push(format!("genesis account={name} balance={bal}"));
        }
        Self {
            branches: vec![Branch {
                blocks: vec![genesis],
                states: vec![state],
            }],
            canonical: 0,
            mempool: Vec::new(),
            next_tx_id: 0,
            next_block_id: 1,
            block_time: DEFAULT_BLOCK_TIME,
            time_skip: 0,
            observers: Vec::new(),
            log,
            submissions: Vec::new(),
            supply,
        }
    }

    pub fn set_block_time(&mut self, secs: u64) {
        self.block_time = secs;
    }

    pub fn block_time(&self) -> u64 {
        self.block_time
    }

    pub fn add_observer(&mut self, obs: Box<dyn MempoolObserver>) {
        self.log.push(format!("observer name={}", obs.name()));
        self.observers.push(obs);
    }

    pub fn clear_observers(&mut self) {
        self.observers.clear();
    }

    fn canon(&self) -> &Branch {
        &self.branches[self.canonical]
    }

    pub fn head_height(&self) -> u64 {
        self.canon().head()
    }

    pub fn head_timestamp(&self) -> u64 {
        self.canon().blocks.last().unwrap().timestamp
    }

    pub fn state(&self) -> &ChainState {
        self.canon().states.last().unwrap()
    }

    pub fn wallet(&self, addr: &str) -> Option<&WalletState> {
        self.state().wallets.get(addr)
    }

    pub fn balance(&self, account: &str) -> u64 {
        self.state().balance(account)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.canon().blocks
    }

    pub fn canonical_branch(&self) -> BranchId {
        self.canonical
    }

    pub fn branch_height(&self, branch: BranchId) -> Option<u64> {
        self.branches.get(branch).map(Branch::head)
    }

    pub fn mempool(&self) -> impl Iterator<Item = &Transaction> {
        self.mempool.iter().map(|(_, tx)| tx)
    }

    pub fn is_pending(&self, tx_id: TxId) -> bool {
        self.mempool.iter().any(|(id, _)| *id == tx_id)
    }

    /// Append a free-form line to the event log.
    pub fn note(&mut self, line: impl Into<String>) {
        self.log.push(format!("note {}", line.into()));
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn events(&self) -> &[String] {
        &self.log
    }

    pub fn event_log(&self) -> String {
        self.log.iter().map(|l| format!("{l}\n")).collect()
    }

    pub fn submissions(&self) -> &[Submission] {
        &self.submissions
    }

    /// Smallest nonce above everything mined or queued for `sender`.
    pub fn next_nonce(&self, sender: &str) -> u64 {
        let mined = self.state().nonces.get(sender).copied().unwrap_or(0);
        let queued = self
            .mempool
            .iter()
            .filter(|(_, t)| t.sender == sender)
            .map(|(_, t)| t.nonce)
            .max()
            .unwrap_or(0);
        mined.max(queued) + 1
    }

    /// Queue a transaction and let observers react to it.
    pub fn submit(&mut self, tx: Transaction) -> Result<TxId, Error> {
        let id = self.enqueue(tx.clone())?;
        let mut observers = std::mem::take(&mut self.observers);
        let mut injected = Vec::new();
        for obs in observers.iter_mut() {
            for t in obs.on_submit(&tx, self) {
                injected.push((obs.name().to_string(), t));
            }
        }
        self.observers = observers;
        for (who, t) in injected {
            match self.enqueue(t) {
                Ok(_) => {}
                Err(e) => self
                    .log
                    .push(format!("inject-refused observer={who} reason=\"{e}\"")),
            }
        }
        Ok(id)
    }

    /// Queue without notifying observers.
    pub fn submit_quiet(&mut self, tx: Transaction) -> Result<TxId, Error> {
        self.enqueue(tx)
    }

    fn enqueue(&mut self, tx: Transaction) -> Result<TxId, Error> {
        let mined = self.state().nonces.get(&tx.sender).copied().unwrap_or(0);
        if tx.nonce <= mined {
            return Err(Error::Refused(format!(
                "nonce {} of {} already used (last {mined})",
                tx.nonce, tx.sender
            )));
        }
        if self
            .mempool
            .iter()
            .any(|(_, t)| t.sender == tx.sender && t.nonce == tx.nonce)
        {
            return Err(Error::Refused(format!(
                "nonce {} of {} already queued",
                tx.nonce, tx.sender
            )));
        }
        let id = self.next_tx_id;
        self.next_tx_id += 1;
        let init_confirmations = match &tx.call {
            Call::ConfirmOp { op_id, .. } => self
                .init_receipt(&tx.to, *op_id)
                .map(|(tx_id, _)| self.confirmations(tx_id).unwrap_or(0)),
            _ => None,
        };
        self.submissions.push(Submission {
            tx_id: id,
            sender: tx.sender.clone(),
            call: tx.call.name(),
            init_confirmations,
        });
        self.log.push(format!(
            "submit id={id} from={} to={} fn={} fee={} nonce={}",
            tx.sender,
            short(&tx.to),
            tx.call.name(),
            tx.fee,
            tx.nonce
        ));
        self.mempool.push((id, tx));
        Ok(id)
    }

    /// Add extra seconds to the next block's timestamp.
    pub fn advance_time(&mut self, secs: u64) {
        self.time_skip += secs;
        self.log.push(format!("advance-time secs={secs}"));
    }

    /// Mine the mempool onto the canonical chain.
    pub fn mine_block(&mut self) -> u64 {
        let mut pending = std::mem::take(&mut self.mempool);
        pending.sort_by(|(ia, a), (ib, b)| b.fee.cmp(&a.fee).then(ia.cmp(ib)));
        let branch = self.canonical;
        self.append_block(branch, pending)
    }

    pub fn mine_blocks(&mut self, n: u64) -> u64 {
        for _ in 0..n {
            self.mine_block();
        }
        self.head_height()
    }

    /// Mine a block with exactly `txs` (fee ordered) on any branch.
    /// The mempool is untouched.
    pub fn mine_on(&mut self, branch: BranchId, txs: Vec<Transaction>) -> Result<u64, Error> {
        if branch >= self.branches.len() {
            return Err(Error::Refused(format!("unknown branch {branch}")));
        }
        let mut with_ids: Vec<(TxId, Transaction)> = txs
            .into_iter()
            .map(|t| {
                let id = self.next_tx_id;
                self.next_tx_id += 1;
                (id, t)
            })
            .collect();
        with_ids.sort_by(|(ia, a), (ib, b)| b.fee.cmp(&a.fee).then(ia.cmp(ib)));
        Ok(self.append_block(branch, with_ids))
    }

    fn append_block(&mut self, branch: BranchId, txs: Vec<(TxId, Transaction)>) -> u64 {
        let (height, timestamp, mut state) = {
            let b = &self.branches[branch];
            let parent = b.blocks.last().unwrap();
            (
                parent.height + 1,
                parent.timestamp + self.block_time + self.time_skip,
                b.states.last().unwrap().clone(),
            )
        };
        self.time_skip = 0;
        let receipts: Vec<Receipt> = txs
            .into_iter()
            .map(|(id, tx)| apply_tx(&mut state, id, tx, timestamp))
            .collect();
        let block = Block {
            id: self.next_block_id,
            height,
            timestamp,
            receipts,
        };
        self.next_block_id += 1;
        self.log.push(format!(
            "block h={height} ts={timestamp} branch={branch} txs={}",
            block.receipts.len()
        ));
        for r in &block.receipts {
            self.log.push(receipt_line(height, r));
        }
        let b = &mut self.branches[branch];
        b.blocks.push(block);
        b.states.push(state);
        height
    }

    /// Start a branch sharing the canonical chain up to `from_height`.
    pub fn fork(&mut self, from_height: u64) -> Result<BranchId, Error> {
        let head = self.head_height();
        if from_height >= head {
            return Err(Error::Refused(format!(
                "fork point {from_height} must be below the head {head}"
            )));
        }
        let keep = from_height as usize + 1;
        let canon = self.canon();
        let branch = Branch {
            blocks: canon.blocks[..keep].to_vec(),
            states: canon.states[..keep].to_vec(),
        };
        self.branches.push(branch);
        let id = self.branches.len() - 1;
        self.log
            .push(format!("fork branch={id} from={from_height}"));
        Ok(id)
    }

    /// Make a strictly longer branch canonical. Transactions only in the old
    /// chain go back to the mempool.
    pub fn reorg(&mut self, branch: BranchId) -> Result<(), Error> {
        let Some(new) = self.branches.get(branch) else {
            return Err(Error::Refused(format!("unknown branch {branch}")));
        };
        let old = self.canon();
        if new.head() <= old.head() {
            return Err(Error::Refused(format!(
                "branch {branch} (height {}) is not longer than the canonical chain (height {})",
                new.head(),
                old.head()
            )));
        }
        let common = old
            .blocks
            .iter()
            .zip(&new.blocks)
            .take_while(|(a, b)| a.id == b.id)
            .count();
        let included: BTreeSet<TxId> = new.blocks[common..]
            .iter()
            .flat_map(|b| b.receipts.iter().map(|r| r.tx_id))
            .collect();
        let orphans: Vec<(TxId, Transaction)> = old.blocks[common..]
            .iter()
            .flat_map(|b| b.receipts.iter())
            .filter(|r| !matches!(r.status, TxStatus::Dropped(_)) && !included.contains(&r.tx_id))
            .map(|r| (r.tx_id, r.tx.clone()))
            .collect();
        let old_id = self.canonical;
        self.canonical = branch;
        self.mempool.retain(|(id, _)| !included.contains(id));
        let n = orphans.len();
        for (id, tx) in orphans {
            if !self.mempool.iter().any(|(i, _)| *i == id) {
                self.mempool.push((id, tx));
            }
        }
        self.log.push(format!(
            "reorg from={old_id} to={branch} common={} orphaned={n}",
            common as u64 - 1
        ));
        Ok(())
    }

    fn locate(&self, tx_id: TxId) -> Option<(&Block, &Receipt)> {
        self.canon()
            .blocks
            .iter()
            .find_map(|b| b.receipts.iter().find(|r| r.tx_id == tx_id).map(|r| (b, r)))
    }

    pub fn receipt(&self, tx_id: TxId) -> Option<&Receipt> {
        self.locate(tx_id).map(|(_, r)| r)
    }

    /// Blocks on top of the one holding `tx_id`; `None` when it is not on
    /// the canonical chain.
    pub fn confirmations(&self, tx_id: TxId) -> Option<u64> {
        self.locate(tx_id)
            .map(|(b, _)| self.head_height() - b.height)
    }

    /// The successful `init_op` that created `op_id` in wallet `addr`.
    pub fn init_receipt(&self, addr: &str, op_id: u64) -> Option<(TxId, &Receipt)> {
        let tag = format!("init_op op_id={op_id} ");
        self.canon()
            .blocks
            .iter()
            .rev()
            .flat_map(|b| b.receipts.iter().rev())
            .find(|r| {
                r.tx.to == addr && r.status.is_ok() && r.events.iter().any(|e| e.starts_with(&tag))
            })
            .map(|r| (r.tx_id, r))
    }

    /// Digest over the canonical head state.
    pub fn state_hash(&self) -> String {
        let body =
            serde_json::to_string(&(self.head_height(), self.head_timestamp(), self.state()))
                .expect("state serializes");
        hex::encode(HashKind::Sha3_256.hash256(&[body.as_bytes()]))
    }

    pub fn total_supply(&self) -> u64 {
        self.supply
    }

    /// Token conservation on every snapshot of every branch.
    pub fn audit_conservation(&self) -> Result<(), String> {
        for (bi, b) in self.branches.iter().enumerate() {
            for (h, s) in b.states.iter().enumerate() {
                if s.supply() != self.supply {
                    return Err(format!(
                        "branch {bi} height {h}: supply {} != {}",
                        s.supply(),
                        self.supply
                    ));
                }
            }
        }
        Ok(())
    }

    /// Every successful signed call verified under the wallet's key at the time.
    pub fn audit_signatures(&self) -> Result<(), String> {
        let b = self.canon();
        for (h, block) in b.blocks.iter().enumerate().skip(1) {
            let before = &b.states[h - 1];
            for r in block
                .receipts
                .iter()
                .filter(|r| r.status.is_ok() && r.tx.call.requires_signature())
            {
                let wallet_pk = before.wallets.get(&r.tx.to).map(|w| w.pk);
                let ok = match (&r.tx.signature, r.sig_key, wallet_pk) {
                    (Some(sig), Some(k), Some(pk)) => {
                        k == pk && pk.verify(&r.tx.signing_bytes(), sig)
                    }
                    _ => false,
                };
                if !ok {
                    return Err(format!(
                        "tx {} at height {h} lacks a valid owner signature",
                        r.tx_id
                    ));
                }
            }
        }
        Ok(())
    }

    /// Confirmations from `sender` were only submitted once the initiation
    /// was `depth` blocks deep.
    pub fn audit_confirm_wait(&self, sender: &str, depth: u64) -> Result<(), String> {
        for s in self
            .submissions
            .iter()
            .filter(|s| s.sender == sender && s.call == "confirm_op")
        {
            match s.init_confirmations {
                Some(c) if c >= depth => {}
                other => {
                    return Err(format!(
                        "confirmation tx {} submitted with initiation depth {:?} < {depth}",
                        s.tx_id, other
                    ))
                }
            }
        }
        Ok(())
    }
}

fn short(addr: &str) -> &str {
    if addr.len() > 12 {
        &addr[..12]
    } else {
        addr
    }
}

fn receipt_line(height: u64, r: &Receipt) -> String {
    let mut line = format!(
        "tx id={} h={height} from={} fn={} fee={} nonce={}",
        r.tx_id,
        r.tx.sender,
        r.tx.call.name(),
        r.tx.fee,
        r.tx.nonce
    );
    match &r.status {
        TxStatus::Ok => line.push_str(" status=ok"),
        TxStatus::Reverted(why) => {
            let _ = write!(line, " status=revert reason=\"{why}\"");
        }
        TxStatus::Dropped(why) => {
            let _ = write!(line, " status=dropped reason=\"{why}\"");
        }
    }
    for e in &r.events {
        let _ = write!(line, " | {e}");
    }
    line
}

fn apply_tx(state: &mut ChainState, tx_id: TxId, tx: Transaction, timestamp: u64) -> Receipt {
    let mut receipt = Receipt {
        tx_id,
        status: TxStatus::Ok,
        trace: CallTrace::default(),
        events: Vec::new(),
        sig_key: None,
        tx,
    };
    let tx = &receipt.tx;
    let last = state.nonces.get(&tx.sender).copied().unwrap_or(0);
    if tx.nonce <= last {
        receipt.status = TxStatus::Dropped(format!("stale nonce {} (last {last})", tx.nonce));
        return receipt;
    }
    state.nonces.insert(tx.sender.clone(), tx.nonce);
    let signed = tx.signing_bytes();
    let ctx = TxContext {
        sender: &tx.sender,
        signed_message: &signed,
        signature: tx.signature.as_ref(),
        timestamp,
    };
    let result: Result<(), String> = match &tx.call {
        Call::Deploy {
            params,
            root,
            pk,
            sub_layer,
            pi_sr,
        } => WalletState::deploy(
            *params,
            *root,
            *pk,
            &tx.sender,
            sub_layer.clone(),
            pi_sr,
            timestamp,
            Some(&tx.call),
        )
        .map_err(|r| r.reason)
        .and_then(|(w, trace)| {
            receipt.trace = trace;
            let addr = w.address();
            if state.wallets.contains_key(&addr) {
                return Err(format!("wallet {addr} already exists"));
            }
            receipt.events.push(format!("deploy contract_id={addr}"));
            state.wallets.insert(addr, w);
            Ok(())
        }),
        Call::Pay { to, amount } => {
            let have = state.accounts.get(&tx.sender).copied().unwrap_or(0);
            if have < *amount {
                Err(format!("insufficient funds: {have} < {amount}"))
            } else if state.wallets.contains_key(to) {
                Err("use deposit to fund a wallet".into())
            } else {
                state.accounts.insert(tx.sender.clone(), have - amount);
                *state.accounts.entry(to.clone()).or_insert(0) += amount;
                receipt.events.push(format!("pay to={to} amount={amount}"));
                Ok(())
            }
        }
        call => {
            let have = state.accounts.get(&tx.sender).copied().unwrap_or(0);
            let deposit = match call {
                Call::Deposit { amount } => *amount,
                _ => 0,
            };
            match state.wallets.get_mut(&tx.to) {
                None => Err(format!("no wallet at {}", short(&tx.to))),
                Some(_) if have < deposit => Err(format!("insufficient funds: {have} < {deposit}")),
                Some(wallet) => {
                    let pk = wallet.pk;
                    match wallet.execute(call, &ctx) {
                        Ok(out) => {
                            receipt.trace = out.trace;
                            receipt.events = out.events;
                            if call.requires_signature() {
                                receipt.sig_key = Some(pk);
                            }
                            if deposit > 0 {
                                state.accounts.insert(tx.sender.clone(), have - deposit);
                            }
                            for c in out.credits {
                                *state.accounts.entry(c.to).or_insert(0) += c.amount;
                            }
                            Ok(())
                        }
                        Err(rev) => {
                            receipt.trace = rev.trace;
                            Err(rev.reason)
                        }
                    }
                }
            }
        }
    };
    if let Err(why) = result {
        receipt.status = TxStatus::Reverted(why);
    }
    receipt
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ledger() -> LedgerSim {
        LedgerSim::new(DEFAULT_GENESIS_TIME, &[("alice", 100), ("bob", 50)])
    }

    fn pay(from: &str, to: &str, amount: u64, fee: u64, nonce: u64) -> Transaction {
        Transaction::new(
            from,
            "",
            Call::Pay {
                to: to.into(),
                amount,
            },
            fee,
            nonce,
        )
    }

    #[test]
    fn empty_block() {
        let mut l = ledger();
        assert_eq!(l.mine_block(), 1);
        assert!(l.blocks()[1].receipts.is_empty());
        assert_eq!(
            l.head_timestamp(),
            DEFAULT_GENESIS_TIME + DEFAULT_BLOCK_TIME
        );
    }

    #[test]
    fn fee_priority_then_submission_order() {
        let mut l = ledger();
        let a = l.submit(pay("alice", "carol", 1, 1, 1)).unwrap();
        let b = l.submit(pay("bob", "carol", 1, 9, 1)).unwrap();
        let c = l.submit(pay("alice", "carol", 1, 1, 2)).unwrap();
        l.mine_block();
        let order: Vec<TxId> = l.blocks()[1].receipts.iter().map(|r| r.tx_id).collect();
        assert_eq!(order, vec![b, a, c]);
    }

    #[test]
    fn nonce_replay_rejected() {
        let mut l = ledger();
        let tx = pay("alice", "bob", 1, 1, 1);
        l.submit(tx.clone()).unwrap();
        assert!(l.submit(tx.clone()).is_err());
        l.mine_block();
        assert!(l.submit(tx).is_err());
        assert_eq!(l.next_nonce("alice"), 2);
    }

    #[test]
    fn confirmations_count_blocks_on_top() {
        let mut l = ledger();
        let id = l.submit(pay("alice", "bob", 1, 1, 1)).unwrap();
        assert_eq!(l.confirmations(id), None);
        l.mine_block();
        assert_eq!(l.confirmations(id), Some(0));
        l.mine_blocks(12);
        assert_eq!(l.confirmations(id), Some(12));
    }

    #[test]
    fn reorg_orphans_transactions() {
        let mut l = ledger();
        l.mine_block();
        let id = l.submit(pay("alice", "bob", 5, 1, 1)).unwrap();
        l.mine_block();
        assert_eq!(l.balance("bob"), 55);
        let b = l.fork(1).unwrap();
        l.mine_on(b, vec![]).unwrap();
        assert!(l.reorg(b).is_err());
        l.mine_on(b, vec![]).unwrap();
        l.reorg(b).unwrap();
        assert_eq!(l.confirmations(id), None);
        assert_eq!(l.balance("bob"), 50);
        assert_eq!(l.mempool_len(), 1);
        l.mine_block();
        assert_eq!(l.balance("bob"), 55);
        assert!(l.confirmations(id).is_some());
        l.audit_conservation().unwrap();
    }

    #[test]
    fn fork_then_reorg_without_changes_keeps_state() {
        let mut l = ledger();
        l.submit(pay("alice", "bob", 5, 1, 1)).unwrap();
        l.mine_block();
        l.mine_block();
        let at = l.canon().states[1].clone();
        let b = l.fork(1).unwrap();
        assert_eq!(l.branches[b].states.last().unwrap(), &at);
        assert!(l.fork(l.head_height()).is_err());
    }

    #[test]
    fn reverted_transfer_keeps_supply() {
        let mut l = ledger();
        l.submit(pay("alice", "bob", 500, 1, 1)).unwrap();
        l.mine_block();
        assert!(matches!(
            l.blocks()[1].receipts[0].status,
            TxStatus::Reverted(_)
        ));
        assert_eq!(l.state().supply(), 150);
        l.audit_conservation().unwrap();
    }

    struct Copycat;

    impl MempoolObserver for Copycat {
        fn name(&self) -> &str {
            "copycat"
        }

        fn on_submit(&mut self, tx: &Transaction, ledger: &LedgerSim) -> Vec<Transaction> {
            if tx.sender == "bob" {
                return vec![];
            }
            vec![pay(
                "bob",
                "bob-cold",
                1,
                tx.fee + 1,
                ledger.next_nonce("bob"),
            )]
        }
    }

    #[test]
    fn observer_front_runs() {
        let mut l = ledger();
        l.add_observer(Box::new(Copycat));
        let a = l.submit(pay("alice", "carol", 1, 3, 1)).unwrap();
        l.mine_block();
        let r = &l.blocks()[1].receipts;
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].tx.sender, "bob");
        assert_eq!(r[1].tx_id, a);
        assert!(l.event_log().contains("observer name=copycat"));
    }

    #[test]
    fn advance_time_shifts_next_block() {
        let mut l = ledger();
        l.advance_time(100);
        l.mine_block();
        assert_eq!(l.head_timestamp(), DEFAULT_GENESIS_TIME + 115);
        l.mine_block();
        assert_eq!(l.head_timestamp(), DEFAULT_GENESIS_TIME + 130);
    }
}
