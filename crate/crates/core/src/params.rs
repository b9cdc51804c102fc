//! Scheme parameters and the operation-ID index arithmetic shared by the
//! authenticator, the client and the contract.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::{HashKind, Hasher};
use crate::error::Error;

pub const DEFAULT_LEN_MAX: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    /// OTP and hash output width in bits.
    pub s_bits: u32,
    /// OTPs per parent tree.
    pub n: u64,
    /// Hash chain length.
    pub p: u64,
    /// OTPs per subtree.
    pub ns: u64,
    /// Depth of the cached sublayer inside a subtree.
    pub ls: u32,
    /// Bound on the root-replacement lists.
    pub len_max: usize,
    #[serde(default)]
    pub hash: HashKind,
}

impl TreeParams {
    pub fn new(s_bits: u32, n: u64, p: u64, ns: u64, ls: u32) -> Result<Self, Error> {
        let params = Self {
            s_bits,
            n,
            p,
            ns,
            ls,
            len_max: DEFAULT_LEN_MAX,
            hash: HashKind::default(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_len_max(mut self, len_max: usize) -> Result<Self, Error> {
        self.len_max = len_max;
        self.validate()?;
        Ok(self)
    }

    pub fn with_hash(mut self, hash: HashKind) -> Self {
        self.hash = hash;
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        Hasher::new(self.hash, self.s_bits)?;
        let bad = |msg: String| Err(Error::Params(msg));
        if self.p == 0 || self.ns == 0 || self.n == 0 {
            return bad("N, P and N_S must be positive".into());
        }
        if !self.ns.is_multiple_of(self.p) {
            return bad(format!("P={} must divide N_S={}", self.p, self.ns));
        }
        if !self.n.is_multiple_of(self.ns) {
            return bad(format!("N_S={} must divide N={}", self.ns, self.n));
        }
        if !(self.n / self.p).is_power_of_two() || !(self.ns / self.p).is_power_of_two() {
            return bad("N/P and N_S/P must be powers of two".into());
        }
        if self.n > u32::MAX as u64 {
            return bad("N must fit the 32-bit PRF domain".into());
        }
        if self.ls > self.hs() {
            return bad(format!("L_S={} exceeds H_S={}", self.ls, self.hs()));
        }
        if self.len_max == 0 {
            return bad("LEN_MAX must be at least 1".into());
        }
        Ok(())
    }

    pub fn hasher(&self) -> Hasher {
        Hasher::new(self.hash, self.s_bits).expect("validated")
    }

    pub fn digest_bytes(&self) -> usize {
        self.s_bits as usize / 8
    }

    /// Leaves in the parent tree, `N/P`.
    pub fn leaves(&self) -> u64 {
        self.n / self.p
    }

    /// Leaves per subtree, `N_S/P`.
    pub fn subtree_leaves(&self) -> u64 {
        self.ns / self.p
    }

    pub fn subtrees(&self) -> u64 {
        self.n / self.ns
    }

    /// Parent tree height `log2(N/P)`.
    pub fn h(&self) -> u32 {
        self.leaves().trailing_zeros()
    }

    /// Subtree height `log2(N_S/P)`.
    pub fn hs(&self) -> u32 {
        self.subtree_leaves().trailing_zeros()
    }

    pub fn cache_len(&self) -> usize {
        1usize << self.ls
    }

    /// Length of a proof against the cached sublayer.
    pub fn cache_proof_len(&self) -> u32 {
        self.hs() - self.ls
    }

    /// Parent-tree generation an absolute operation ID belongs to.
    pub fn generation(&self, op_id: u64) -> u64 {
        op_id / self.n
    }

    /// Number of hashes the authenticator applies to the PRF output.
    pub fn alpha(&self, op_id: u64) -> u32 {
        (self.p - self.verifier_offset(op_id) as u64 - 1) as u32
    }

    /// `a(i)`; the verifier applies `a(i) + 1` chain steps.
    pub fn verifier_offset(&self, op_id: u64) -> u32 {
        (((op_id % self.ns) * self.p) / self.ns) as u32
    }

    /// Leaf (chain) index within the parent tree.
    pub fn beta(&self, op_id: u64) -> u64 {
        let i = op_id % self.n;
        (i / self.ns) * self.subtree_leaves() + (i % self.subtree_leaves())
    }

    /// 1-based iteration layer; layer 1 is consumed first.
    pub fn layer_of(&self, op_id: u64) -> u32 {
        self.verifier_offset(op_id) + 1
    }

    /// Subtree index within the parent tree.
    pub fn subtree_of(&self, op_id: u64) -> u64 {
        (op_id % self.n) / self.ns
    }

    /// Leaf index relative to its subtree.
    pub fn leaf_in_subtree(&self, op_id: u64) -> u64 {
        op_id % self.subtree_leaves()
    }

    /// The slot reserved for introducing the next subtree.
    pub fn is_subtree_slot(&self, op_id: u64) -> bool {
        op_id % self.ns == self.ns - 1 && !self.is_root_slot(op_id)
    }

    /// The slot reserved for replacing the parent root.
    pub fn is_root_slot(&self, op_id: u64) -> bool {
        op_id % self.n == self.n - 1
    }

    /// Operation IDs usable by ordinary operations in one parent tree.
    pub fn ops_per_tree(&self) -> u64 {
        self.n - self.subtrees()
    }
}

impl fmt::Display for TreeParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.s_bits, self.n, self.p, self.ns, self.ls
        )
    }
}

impl FromStr for TreeParams {
    type Err = Error;

    /// `S,N,P,NS,LS`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(Error::Parse(format!("expected S,N,P,NS,LS, got {s:?}")));
        }
        let num = |i: usize| -> Result<u64, Error> {
            parts[i]
                .parse::<u64>()
                .map_err(|e| Error::Parse(format!("bad parameter {:?}: {e}", parts[i])))
        };
        TreeParams::new(num(0)? as u32, num(1)?, num(2)?, num(3)?, num(4)? as u32)
    }
}
