//! Merkle aggregation of chain ends, proofs with parity-in-LSB, and the
//! cached-sublayer index arithmetic.
//!
//! Proof siblings carry their side in the least significant bit (1 = the
//! sibling is the right child). Because that bit is overwritten, interior
//! nodes are computed over LSB-cleared children: `node(l, r) =
//! h(clear_lsb(l) || clear_lsb(r))`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::crypto::{chain_extend, prf, Digest, Hasher, Seed, TruncatedHash};
use crate::error::Error;
use crate::exec;
use crate::params::TreeParams;

pub fn node_hash<H: TruncatedHash + ?Sized>(h: &H, left: &Digest, right: &Digest) -> Digest {
    let l = left.with_lsb(false);
    let r = right.with_lsb(false);
    h.hash_parts(&[l.as_bytes(), r.as_bytes()])
}

/// PRF input of chain `beta` in generation `eta`.
pub fn chain_input(params: &TreeParams, eta: u64, beta: u64) -> Result<u64, Error> {
    if beta >= params.leaves() {
        return Err(Error::Domain(format!(
            "leaf index {beta} out of range 0..{}",
            params.leaves()
        )));
    }
    eta.checked_mul(params.leaves())
        .and_then(|x| x.checked_add(beta))
        .filter(|x| *x <= u32::MAX as u64)
        .ok_or_else(|| Error::Domain(format!("generation {eta} exhausts the PRF domain")))
}

/// The chain element at position P for chain `beta` of generation `eta`.
pub fn leaf_of_chain<H: TruncatedHash + ?Sized>(
    h: &H,
    k: &Seed,
    params: &TreeParams,
    eta: u64,
    beta: u64,
) -> Result<Digest, Error> {
    let start = prf(h, k, chain_input(params, eta, beta)?)?;
    chain_extend(h, &start, 0, params.p as u32)
}

/// All N/P leaves of generation `eta`, computed in parallel when enabled.
pub fn generation_leaves(k: &Seed, params: &TreeParams, eta: u64) -> Result<Vec<Digest>, Error> {
    chain_input(params, eta, params.leaves() - 1)?;
    let h = params.hasher();
    exec::map_range(params.leaves(), |beta| {
        leaf_of_chain(&h, k, params, eta, beta)
    })
    .into_iter()
    .collect()
}

/// Sequential [`generation_leaves`].
pub fn generation_leaves_seq(
    k: &Seed,
    params: &TreeParams,
    eta: u64,
) -> Result<Vec<Digest>, Error> {
    let h = params.hasher();
    exec::map_range_seq(params.leaves(), |beta| {
        leaf_of_chain(&h, k, params, eta, beta)
    })
    .into_iter()
    .collect()
}

fn check_pow2(n: usize) -> Result<u32, Error> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Domain(format!(
            "node count {n} is not a power of two"
        )));
    }
    Ok(n.trailing_zeros())
}

/// Pairwise reduction of a power-of-two node list to its root.
pub fn reduce_mt<H: TruncatedHash + ?Sized>(h: &H, nodes: &[Digest]) -> Result<Digest, Error> {
    check_pow2(nodes.len())?;
    let mut level = nodes.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| node_hash(h, &pair[0], &pair[1]))
            .collect();
    }
    Ok(level[0])
}

/// A full tree snapshot. `levels[0]` are the leaves, the last level is the root.
#[derive(Clone, Debug)]
pub struct MerkleTree {
    levels: Vec<Vec<Digest>>,
}

impl MerkleTree {
    pub fn build(h: &Hasher, leaves: Vec<Digest>) -> Result<Self, Error> {
        Self::build_with(leaves, |level| {
            let level = level.as_slice();
            exec::map_range((level.len() / 2) as u64, |i| {
                let i = i as usize;
                node_hash(h, &level[2 * i], &level[2 * i + 1])
            })
        })
    }

    pub fn build_seq(h: &Hasher, leaves: Vec<Digest>) -> Result<Self, Error> {
        Self::build_with(leaves, |level| {
            level
                .chunks(2)
                .map(|p| node_hash(h, &p[0], &p[1]))
                .collect()
        })
    }

    fn build_with<F>(leaves: Vec<Digest>, reduce: F) -> Result<Self, Error>
    where
        F: Fn(&Vec<Digest>) -> Vec<Digest>,
    {
        let height = check_pow2(leaves.len())?;
        let mut levels = Vec::with_capacity(height as usize + 1);
        levels.push(leaves);
        while levels.last().map_or(0, Vec::len) > 1 {
            let next = reduce(levels.last().unwrap());
            levels.push(next);
        }
        Ok(Self { levels })
    }

    pub fn height(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    pub fn root(&self) -> Digest {
        self.levels[self.levels.len() - 1][0]
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.levels[0]
    }

    /// Nodes at `level` counted upward from the leaves.
    pub fn level(&self, level: u32) -> &[Digest] {
        &self.levels[level as usize]
    }

    /// Proof for node `idx` at `from_level`, climbing up to (excluding) `to_level`.
    pub fn proof_between(
        &self,
        from_level: u32,
        idx: u64,
        to_level: u32,
    ) -> Result<MerkleProof, Error> {
        if from_level > to_level || to_level > self.height() {
            return Err(Error::Domain(format!(
                "invalid proof span {from_level}..{to_level} in tree of height {}",
                self.height()
            )));
        }
        let width = self.levels[from_level as usize].len() as u64;
        if idx >= width {
            return Err(Error::Domain(format!(
                "node index {idx} out of range 0..{width}"
            )));
        }
        let siblings = (from_level..to_level)
            .map(|lvl| {
                let pos = idx >> (lvl - from_level);
                let sibling_is_right = pos & 1 == 0;
                self.levels[lvl as usize][(pos ^ 1) as usize].with_lsb(sibling_is_right)
            })
            .collect();
        Ok(MerkleProof { siblings })
    }

    /// Leaf proof stopping `stop_depth` levels below the root.
    pub fn proof(&self, idx: u64, stop_depth: u32) -> Result<MerkleProof, Error> {
        if stop_depth > self.height() {
            return Err(Error::Domain(format!(
                "stop depth {stop_depth} exceeds height"
            )));
        }
        self.proof_between(0, idx, self.height() - stop_depth)
    }
}

/// Proof for leaf `idx` ending `stop_depth` levels below the root.
pub fn gen_proof(
    h: &Hasher,
    leaves: &[Digest],
    idx: u64,
    stop_depth: u32,
) -> Result<MerkleProof, Error> {
    MerkleTree::build(h, leaves.to_vec())?.proof(idx, stop_depth)
}

/// Siblings ordered leaf-to-top; each sibling's LSB is its parity.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub siblings: Vec<Digest>,
}

impl MerkleProof {
    pub fn new(siblings: Vec<Digest>) -> Self {
        Self { siblings }
    }

    pub fn len(&self) -> usize {
        self.siblings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.siblings.is_empty()
    }

    pub fn fold<H: TruncatedHash + ?Sized>(&self, h: &H, start: &Digest) -> Digest {
        self.siblings.iter().fold(*start, |acc, s| {
            if s.lsb() {
                node_hash(h, &acc, s)
            } else {
                node_hash(h, s, &acc)
            }
        })
    }

    pub fn to_hex_list(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.siblings.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{s}");
        }
        out
    }

    pub fn from_hex_list(s: &str) -> Result<Self, Error> {
        if s.trim().is_empty() {
            return Ok(Self::default());
        }
        let siblings = s
            .split(',')
            .map(Digest::from_hex)
            .collect::<Result<_, _>>()?;
        Ok(Self { siblings })
    }
}

/// Bit `i` is set when sibling `i` is on the right.
pub fn derive_idx(proof: &MerkleProof) -> u64 {
    proof
        .siblings
        .iter()
        .enumerate()
        .filter(|(_, s)| s.lsb())
        .fold(0u64, |acc, (i, _)| acc | (1u64 << i))
}

pub fn derive_idx_in_cache(proof: &MerkleProof) -> u64 {
    derive_idx(proof)
}

/// What [`derive_idx`] yields for a proof of position `idx`: the complement
/// of `idx` within `len` bits.
pub fn parity_pattern(idx: u64, len: u32) -> u64 {
    !idx & low_mask(len)
}

fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// The bit-clearing loop: clears bits `hs - ls .. hs` of `child_leaf_id`,
/// leaving the leaf's position below its cached node.
pub fn expected_idx_in_cache_loop(child_leaf_id: u64, hs: u32, ls: u32) -> u64 {
    let mask: u64 = 0xFFFF_FFFF;
    let mut ret = child_leaf_id;
    for i in hs - ls..hs {
        ret &= mask ^ (1u64 << i);
    }
    ret
}

/// Closed form: the cached node above `child_leaf_id`.
pub fn expected_idx_in_cache(child_leaf_id: u64, hs: u32, ls: u32) -> u64 {
    child_leaf_id >> (hs - ls)
}

/// Chain extension from the OTP at `op_id` up to its leaf.
fn resolve_chain<H: TruncatedHash + ?Sized>(
    h: &H,
    otp: &Digest,
    op_id: u64,
    params: &TreeParams,
) -> Result<Digest, Error> {
    chain_extend(h, otp, params.alpha(op_id), params.p as u32)
}

/// Rebuild the parent root from an OTP and a full-height proof.
pub fn derive_root_hash<H: TruncatedHash + ?Sized>(
    h: &H,
    otp: &Digest,
    proof: &MerkleProof,
    op_id: u64,
    params: &TreeParams,
) -> Result<Digest, Error> {
    let height = params.h();
    if proof.len() != height as usize {
        return Err(Error::Refused(format!(
            "proof length {} does not match tree height {height}",
            proof.len()
        )));
    }
    if derive_idx(proof) != parity_pattern(params.beta(op_id), height) {
        return Err(Error::Refused(format!(
            "proof does not authenticate the leaf of operation {op_id}"
        )));
    }
    let leaf = resolve_chain(h, otp, op_id, params)?;
    Ok(proof.fold(h, &leaf))
}

/// Rebuild the cached-sublayer node above the leaf of `op_id`.
pub fn derive_node_in_cache<H: TruncatedHash + ?Sized>(
    h: &H,
    otp: &Digest,
    proof: &MerkleProof,
    op_id: u64,
    params: &TreeParams,
) -> Result<Digest, Error> {
    let len = params.cache_proof_len();
    if proof.len() != len as usize {
        return Err(Error::Refused(format!(
            "cache proof length {} does not match {len}",
            proof.len()
        )));
    }
    let child = op_id % params.subtree_leaves();
    let eci = expected_idx_in_cache_loop(child, params.hs(), params.ls);
    if derive_idx_in_cache(proof) != parity_pattern(eci, len) {
        return Err(Error::Refused(format!(
            "cache proof does not authenticate the leaf of operation {op_id}"
        )));
    }
    let leaf = resolve_chain(h, otp, op_id, params)?;
    Ok(proof.fold(h, &leaf))
}

/// Fold `pi_sr` from the subtree root and compare with the parent root.
pub fn subtree_consistency<H: TruncatedHash + ?Sized>(
    h: &H,
    sub_root: &Digest,
    pi_sr: &MerkleProof,
    parent_root: &Digest,
) -> bool {
    pi_sr.fold(h, sub_root) == *parent_root
}

/// [`subtree_consistency`] that also pins the subtree index `delta`.
pub fn subtree_consistency_at<H: TruncatedHash + ?Sized>(
    h: &H,
    sub_root: &Digest,
    pi_sr: &MerkleProof,
    parent_root: &Digest,
    params: &TreeParams,
    delta: u64,
) -> bool {
    let len = params.h() - params.hs();
    pi_sr.len() == len as usize
        && derive_idx(pi_sr) == parity_pattern(delta, len)
        && subtree_consistency(h, sub_root, pi_sr, parent_root)
}

/// Cached sublayer of subtree `delta` and its root proof.
pub fn subtree_layer(
    tree: &MerkleTree,
    params: &TreeParams,
    delta: u64,
) -> Result<(Vec<Digest>, MerkleProof), Error> {
    if delta >= params.subtrees() {
        return Err(Error::Domain(format!("subtree {delta} out of range")));
    }
    let level = params.hs() - params.ls;
    let width = params.cache_len() as u64;
    let nodes =
        tree.level(level)[(delta * width) as usize..((delta + 1) * width) as usize].to_vec();
    let pi_sr = tree.proof_between(params.hs(), delta, params.h())?;
    Ok((nodes, pi_sr))
}

/// The leaf-export file exchanged between authenticator and client.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeafFile {
    pub s_bits: u32,
    pub n: u64,
    pub p: u64,
    pub ns: u64,
    pub eta: u64,
    pub leaves: Vec<Digest>,
}

const LEAF_MAGIC: &str = "smartotps-leaves v1";

impl LeafFile {
    pub fn new(params: &TreeParams, eta: u64, leaves: Vec<Digest>) -> Self {
        Self {
            s_bits: params.s_bits,
            n: params.n,
            p: params.p,
            ns: params.ns,
            eta,
            leaves,
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{LEAF_MAGIC} S={} N={} P={} NS={} eta={}\n",
            self.s_bits, self.n, self.p, self.ns, self.eta
        );
        for leaf in &self.leaves {
            out.push_str(&leaf.to_hex());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty leaf file".into()))?;
        let fields = header
            .strip_prefix(LEAF_MAGIC)
            .ok_or_else(|| Error::Parse(format!("bad leaf file header {header:?}")))?;
        let get = |key: &str| -> Result<u64, Error> {
            fields
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .ok_or_else(|| Error::Parse(format!("leaf file header lacks {key}")))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad {key} in leaf file header: {e}")))
        };
        let (s_bits, n, p, ns, eta) = (get("S")?, get("N")?, get("P")?, get("NS")?, get("eta")?);
        let leaves = lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                Digest::from_hex(l).map_err(|e| Error::Parse(format!("leaf line {}: {e}", i + 2)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if leaves.iter().any(|l| l.bits() as u64 != s_bits) {
            return Err(Error::Parse("leaf width does not match header S".into()));
        }
        let expected = n.checked_div(p).unwrap_or(0);
        if p == 0 || leaves.len() as u64 != expected {
            return Err(Error::Parse(format!(
                "leaf file holds {} leaves, header implies {expected}",
                leaves.len()
            )));
        }
        Ok(Self {
            s_bits: s_bits as u32,
            n,
            p,
            ns,
            eta,
            leaves,
        })
    }

    /// Error unless the header agrees with `params`.
    pub fn check_params(&self, params: &TreeParams) -> Result<(), Error> {
        if (self.s_bits, self.n, self.p, self.ns) != (params.s_bits, params.n, params.p, params.ns)
        {
            return Err(Error::Params(format!(
                "leaf file is for S={} N={} P={} NS={}, expected S={} N={} P={} NS={}",
                self.s_bits, self.n, self.p, self.ns, params.s_bits, params.n, params.p, params.ns
            )));
        }
        Ok(())
    }
}
