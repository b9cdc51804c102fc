//! Mempool adversary: watches the user's transactions and reacts with
//! higher-fee transactions of its own.

use crate::crypto::{chain_extend, Digest, TruncatedHash};
use crate::ledger::{LedgerSim, MempoolObserver, Transaction};
use crate::merkle::MerkleProof;
use crate::params::TreeParams;
use crate::payload::{AccountId, Call};
use crate::signature::SigningKey;

#[derive(Clone, Debug, Default)]
pub struct Tactics {
    /// Pair an intercepted OTP with the adversary's own pending operations.
    pub cross_pair: bool,
    /// Walk an intercepted OTP down its chain to earlier iteration layers.
    pub derive_lower: bool,
    /// Resubmit an intercepted subtree OTP with a forged sublayer.
    pub forge_subtree: bool,
    /// Resubmit an intercepted subtree introduction unchanged.
    pub copy_subtree: bool,
    /// Answer a stage-3 root replacement with the adversary's own root:
    /// `(R_adv, cached sublayer, pi_sr)`.
    pub race_root: Option<(Digest, Vec<Digest>, MerkleProof)>,
}

pub struct Interceptor {
    name: String,
    sender: AccountId,
    wallet: AccountId,
    params: TreeParams,
    sk: Option<SigningKey>,
    tactics: Tactics,
}

impl Interceptor {
    pub fn new(
        sender: &str,
        wallet: &str,
        params: TreeParams,
        sk: Option<SigningKey>,
        tactics: Tactics,
    ) -> Self {
        Self {
            name: format!("interceptor:{sender}"),
            sender: sender.to_string(),
            wallet: wallet.to_string(),
            params,
            sk,
            tactics,
        }
    }

    /// Confirmations for own pending operations using a revealed OTP of `revealed`.
    fn exploit_otp(
        &self,
        ledger: &LedgerSim,
        revealed: u64,
        otp: &Digest,
        proof: &MerkleProof,
    ) -> Vec<Call> {
        let p = &self.params;
        let Some(w) = ledger.wallet(&self.wallet) else {
            return vec![];
        };
        let cache_proof = MerkleProof::new(
            proof.siblings[..(p.cache_proof_len() as usize).min(proof.len())].to_vec(),
        );
        let mut out = Vec::new();
        for x in initiated_by(ledger, &self.wallet, &self.sender) {
            if !w.operations.get(&x).is_some_and(|r| r.pending) || x == revealed {
                continue;
            }
            let same_chain =
                p.generation(x) == p.generation(revealed) && p.beta(x) == p.beta(revealed);
            if self.tactics.derive_lower && same_chain && p.layer_of(x) < p.layer_of(revealed) {
                if let Ok(d) = chain_extend(&p.hasher(), otp, p.alpha(revealed), p.alpha(x)) {
                    out.push(Call::ConfirmOp {
                        op_id: x,
                        otp: d,
                        proof: cache_proof.clone(),
                    });
                }
            } else if self.tactics.cross_pair {
                out.push(Call::ConfirmOp {
                    op_id: x,
                    otp: *otp,
                    proof: cache_proof.clone(),
                });
            }
        }
        out
    }
}

impl MempoolObserver for Interceptor {
    fn name(&self) -> &str {
        &self.name
    }

    fn on_submit(&mut self, tx: &Transaction, ledger: &LedgerSim) -> Vec<Transaction> {
        if tx.sender == self.sender || tx.to != self.wallet {
            return vec![];
        }
        let Some(w) = ledger.wallet(&self.wallet) else {
            return vec![];
        };
        let next = w.next_op_id;
        let mut calls = Vec::new();
        match &tx.call {
            Call::ConfirmOp { op_id, otp, proof } => {
                calls.extend(self.exploit_otp(ledger, *op_id, otp, proof));
            }
            Call::NextSubtree {
                next_layer,
                otp,
                pi_otp,
                pi_sr,
            } => {
                calls.extend(self.exploit_otp(ledger, next, otp, pi_otp));
                if self.tactics.forge_subtree {
                    let mut forged = next_layer.clone();
                    forged[0] = forged[0].flip_bit(7);
                    calls.push(Call::NextSubtree {
                        next_layer: forged,
                        otp: *otp,
                        pi_otp: pi_otp.clone(),
                        pi_sr: pi_sr.clone(),
                    });
                }
                if self.tactics.copy_subtree {
                    calls.push(tx.call.clone());
                }
            }
            Call::NewRoot3 { otp, proof, .. } => {
                calls.extend(self.exploit_otp(ledger, next, otp, proof));
                if let Some((r_adv, cs, pi_sr)) = &self.tactics.race_root {
                    let h = self
                        .params
                        .hasher()
                        .hash_parts(&[r_adv.as_bytes(), otp.as_bytes()]);
                    calls.push(Call::NewRoot1 { h_root_and_otp: h });
                    calls.push(Call::NewRoot2 { r_new: *r_adv });
                    calls.push(Call::NewRoot3 {
                        otp: *otp,
                        proof: proof.clone(),
                        cs: cs.clone(),
                        pi_sr: pi_sr.clone(),
                    });
                }
            }
            _ => {}
        }
        let base_nonce = ledger.next_nonce(&self.sender);
        let n = calls.len() as u64;
        calls
            .into_iter()
            .enumerate()
            .map(|(i, call)| {
                let i = i as u64;
                let signed = call.requires_signature();
                let t = Transaction::new(
                    &self.sender,
                    &self.wallet,
                    call,
                    tx.fee + n - i,
                    base_nonce + i,
                );
                match (&self.sk, signed) {
                    (Some(sk), true) => t.sign(sk),
                    _ => t,
                }
            })
            .collect()
    }
}

/// Operation IDs created by successful `init_op` calls from `sender`.
pub fn initiated_by(ledger: &LedgerSim, wallet: &str, sender: &str) -> Vec<u64> {
    ledger
        .blocks()
        .iter()
        .flat_map(|b| b.receipts.iter())
        .filter(|r| r.tx.sender == sender && r.tx.to == wallet && r.status.is_ok())
        .flat_map(|r| r.events.iter())
        .filter_map(|e| e.strip_prefix("init_op op_id="))
        .filter_map(|s| s.split(' ').next()?.parse().ok())
        .collect()
}
