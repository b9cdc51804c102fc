//! Contract call payloads and their canonical `key=value` text form.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, HashKind};
use crate::error::Error;
use crate::merkle::MerkleProof;
use crate::params::TreeParams;
use crate::signature::PublicKey;

pub type AccountId = String;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpType {
    Transfer,
    SetDailyLimit,
    SetLastResortTimeout,
    SetLastResortAddress,
}

impl OpType {
    pub fn as_str(self) -> &'static str {
        match self {
            OpType::Transfer => "transfer",
            OpType::SetDailyLimit => "daily-limit",
            OpType::SetLastResortTimeout => "lr-timeout",
            OpType::SetLastResortAddress => "lr-address",
        }
    }
}

impl fmt::Display for OpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transfer" => Ok(OpType::Transfer),
            "daily-limit" => Ok(OpType::SetDailyLimit),
            "lr-timeout" => Ok(OpType::SetLastResortTimeout),
            "lr-address" => Ok(OpType::SetLastResortAddress),
            other => Err(Error::Parse(format!("unknown operation type {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Call {
    Deploy {
        params: TreeParams,
        root: Digest,
        pk: PublicKey,
        sub_layer: Vec<Digest>,
        pi_sr: MerkleProof,
    },
    /// Move tokens from the sender's account into the wallet.
    Deposit {
        amount: u64,
    },
    /// Plain account-to-account payment.
    Pay {
        to: AccountId,
        amount: u64,
    },
    InitOp {
        op_type: OpType,
        addr: AccountId,
        param: u64,
    },
    ConfirmOp {
        op_id: u64,
        otp: Digest,
        proof: MerkleProof,
    },
    NextSubtree {
        next_layer: Vec<Digest>,
        otp: Digest,
        pi_otp: MerkleProof,
        pi_sr: MerkleProof,
    },
    NewRoot1 {
        h_root_and_otp: Digest,
    },
    NewRoot2 {
        r_new: Digest,
    },
    NewRoot3 {
        otp: Digest,
        proof: MerkleProof,
        cs: Vec<Digest>,
        pi_sr: MerkleProof,
    },
    SendToLastResort,
}

fn digest_list(list: &[Digest]) -> String {
    list.iter()
        .map(Digest::to_hex)
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_digest_list(s: &str) -> Result<Vec<Digest>, Error> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(Digest::from_hex).collect()
}

impl Call {
    pub fn name(&self) -> &'static str {
        match self {
            Call::Deploy { .. } => "deploy",
            Call::Deposit { .. } => "deposit",
            Call::Pay { .. } => "pay",
            Call::InitOp { .. } => "init_op",
            Call::ConfirmOp { .. } => "confirm_op",
            Call::NextSubtree { .. } => "next_subtree",
            Call::NewRoot1 { .. } => "new_root_stage1",
            Call::NewRoot2 { .. } => "new_root_stage2",
            Call::NewRoot3 { .. } => "new_root_stage3",
            Call::SendToLastResort => "send_to_last_resort",
        }
    }

    /// Calls the wallet authenticates with the owner's signature.
    pub fn requires_signature(&self) -> bool {
        matches!(
            self,
            Call::InitOp { .. } | Call::NewRoot1 { .. } | Call::NewRoot2 { .. }
        )
    }

    /// Calldata size: a 4-byte selector plus 32-byte ABI words, with
    /// dynamic arrays costing an offset and a length word.
    pub fn payload_bytes(&self) -> u64 {
        let dynamic = |len: usize| 2 + len as u64;
        let words = match self {
            Call::Deploy {
                sub_layer, pi_sr, ..
            } => 7 + dynamic(sub_layer.len()) + dynamic(pi_sr.len()),
            Call::Deposit { .. } => 1,
            Call::Pay { .. } => 2,
            Call::InitOp { .. } => 3,
            Call::ConfirmOp { proof, .. } => 2 + dynamic(proof.len()),
            Call::NextSubtree {
                next_layer,
                pi_otp,
                pi_sr,
                ..
            } => 1 + dynamic(next_layer.len()) + dynamic(pi_otp.len()) + dynamic(pi_sr.len()),
            Call::NewRoot1 { .. } | Call::NewRoot2 { .. } => 1,
            Call::NewRoot3 {
                proof, cs, pi_sr, ..
            } => 1 + dynamic(proof.len()) + dynamic(cs.len()) + dynamic(pi_sr.len()),
            Call::SendToLastResort => 0,
        };
        4 + 32 * words
    }

    /// Canonical text form: one `key=value` per line, `fn` first.
    pub fn encode(&self) -> String {
        let mut kv: Vec<(&str, String)> = vec![("fn", self.name().to_string())];
        match self {
            Call::Deploy {
                params,
                root,
                pk,
                sub_layer,
                pi_sr,
            } => {
                kv.push(("params", params.to_string()));
                kv.push(("len_max", params.len_max.to_string()));
                kv.push(("hash", hash_name(params.hash).into()));
                kv.push(("root", root.to_hex()));
                kv.push(("pk", pk.to_hex()));
                kv.push(("sub_layer", digest_list(sub_layer)));
                kv.push(("pi_sr", pi_sr.to_hex_list()));
            }
            Call::Deposit { amount } => kv.push(("amount", amount.to_string())),
            Call::Pay { to, amount } => {
                kv.push(("to", to.clone()));
                kv.push(("amount", amount.to_string()));
            }
            Call::InitOp {
                op_type,
                addr,
                param,
            } => {
                kv.push(("type", op_type.to_string()));
                kv.push(("addr", addr.clone()));
                kv.push(("param", param.to_string()));
            }
            Call::ConfirmOp { op_id, otp, proof } => {
                kv.push(("op_id", op_id.to_string()));
                kv.push(("otp", otp.to_hex()));
                kv.push(("proof", proof.to_hex_list()));
            }
            Call::NextSubtree {
                next_layer,
                otp,
                pi_otp,
                pi_sr,
            } => {
                kv.push(("next_layer", digest_list(next_layer)));
                kv.push(("otp", otp.to_hex()));
                kv.push(("pi_otp", pi_otp.to_hex_list()));
                kv.push(("pi_sr", pi_sr.to_hex_list()));
            }
            Call::NewRoot1 { h_root_and_otp } => {
                kv.push(("h_root_and_otp", h_root_and_otp.to_hex()))
            }
            Call::NewRoot2 { r_new } => kv.push(("r_new", r_new.to_hex())),
            Call::NewRoot3 {
                otp,
                proof,
                cs,
                pi_sr,
            } => {
                kv.push(("otp", otp.to_hex()));
                kv.push(("proof", proof.to_hex_list()));
                kv.push(("cs", digest_list(cs)));
                kv.push(("pi_sr", pi_sr.to_hex_list()));
            }
            Call::SendToLastResort => {}
        }
        kv.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn decode(text: &str) -> Result<Self, Error> {
        let mut map = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got {line:?}")))?;
            if map
                .insert(k.trim().to_string(), v.trim().to_string())
                .is_some()
            {
                return Err(Error::Parse(format!("duplicate key {k:?}")));
            }
        }
        let get = |k: &str| -> Result<&str, Error> {
            map.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Parse(format!("missing key {k:?}")))
        };
        let num = |k: &str| -> Result<u64, Error> {
            get(k)?
                .parse()
                .map_err(|e| Error::Parse(format!("bad integer for {k}: {e}")))
        };
        let dig = |k: &str| Digest::from_hex(get(k)?);
        let proof = |k: &str| MerkleProof::from_hex_list(get(k)?);
        let call = match get("fn")? {
            "deploy" => {
                let hash = match get("hash")? {
                    "sha3-256" => HashKind::Sha3_256,
                    "keccak256" => HashKind::Keccak256,
                    other => return Err(Error::Parse(format!("unknown hash {other:?}"))),
                };
                let params = get("params")?
                    .parse::<TreeParams>()?
                    .with_len_max(num("len_max")? as usize)?
                    .with_hash(hash);
                Call::Deploy {
                    params,
                    root: dig("root")?,
                    pk: PublicKey::from_hex(get("pk")?)?,
                    sub_layer: parse_digest_list(get("sub_layer")?)?,
                    pi_sr: proof("pi_sr")?,
                }
            }
            "deposit" => Call::Deposit {
                amount: num("amount")?,
            },
            "pay" => Call::Pay {
                to: get("to")?.to_string(),
                amount: num("amount")?,
            },
            "init_op" => Call::InitOp {
                op_type: get("type")?.parse()?,
                addr: get("addr")?.to_string(),
                param: num("param")?,
            },
            "confirm_op" => Call::ConfirmOp {
                op_id: num("op_id")?,
                otp: dig("otp")?,
                proof: proof("proof")?,
            },
            "next_subtree" => Call::NextSubtree {
                next_layer: parse_digest_list(get("next_layer")?)?,
                otp: dig("otp")?,
                pi_otp: proof("pi_otp")?,
                pi_sr: proof("pi_sr")?,
            },
            "new_root_stage1" => Call::NewRoot1 {
                h_root_and_otp: dig("h_root_and_otp")?,
            },
            "new_root_stage2" => Call::NewRoot2 {
                r_new: dig("r_new")?,
            },
            "new_root_stage3" => Call::NewRoot3 {
                otp: dig("otp")?,
                proof: proof("proof")?,
                cs: parse_digest_list(get("cs")?)?,
                pi_sr: proof("pi_sr")?,
            },
            "send_to_last_resort" => Call::SendToLastResort,
            other => return Err(Error::Parse(format!("unknown function {other:?}"))),
        };
        Ok(call)
    }
}

fn hash_name(kind: HashKind) -> &'static str {
    match kind {
        HashKind::Sha3_256 => "sha3-256",
        HashKind::Keccak256 => "keccak256",
    }
}
