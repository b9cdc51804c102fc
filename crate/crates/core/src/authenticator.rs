//! The air-gapped authenticator device.

use crate::crypto::{chain_extend, mnemonic_encode, prf, Digest, Seed, TruncatedHash};
use crate::error::Error;
use crate::merkle::{chain_input, generation_leaves, reduce_mt, LeafFile};
use crate::params::TreeParams;

pub struct Authenticator {
    k: Seed,
    params: TreeParams,
    eta: u64,
}

impl Authenticator {
    pub fn new(k: Seed, params: TreeParams) -> Self {
        Self { k, params, eta: 0 }
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn eta(&self) -> u64 {
        self.eta
    }

    /// OTP for an absolute operation ID of the current generation.
    pub fn get_otp(&self, op_id: u64) -> Result<Digest, Error> {
        if self.params.generation(op_id) != self.eta {
            return Err(Error::Domain(format!(
                "operation {op_id} is outside parent tree {} (ids {}..{})",
                self.eta,
                self.eta * self.params.n,
                (self.eta + 1) * self.params.n
            )));
        }
        let h = self.params.hasher();
        let x = chain_input(&self.params, self.eta, self.params.beta(op_id))?;
        let start = prf(&h, &self.k, x)?;
        chain_extend(&h, &start, 0, self.params.alpha(op_id))
    }

    fn leaves(&self, eta: u64) -> Result<Vec<Digest>, Error> {
        generation_leaves(&self.k, &self.params, eta)
    }

    pub fn export_leaves(&self) -> Result<LeafFile, Error> {
        Ok(LeafFile::new(
            &self.params,
            self.eta,
            self.leaves(self.eta)?,
        ))
    }

    pub fn display_root(&self) -> Result<Digest, Error> {
        reduce_mt(&self.params.hasher(), &self.leaves(self.eta)?)
    }

    /// The seed as mnemonic words, shown only during secure bootstrapping
    /// and secure root replacement.
    pub fn display_seed(&self) -> Vec<String> {
        mnemonic_encode(&self.k.as_digest()).expect("128-bit seeds always encode")
    }

    pub fn reveal_seed(&self) -> Seed {
        self.k.clone()
    }

    /// Next generation's root and `h(R_new || OTP_opID)`.
    pub fn new_parent_preview(&self, op_id: u64) -> Result<(Digest, Digest), Error> {
        if !self.params.is_root_slot(op_id) {
            return Err(Error::Refused(format!(
                "operation {op_id} is not the last of a parent tree"
            )));
        }
        let otp = self.get_otp(op_id)?;
        let h = self.params.hasher();
        let r_new = reduce_mt(&h, &self.leaves(self.eta + 1)?)?;
        Ok((r_new, h.hash_parts(&[r_new.as_bytes(), otp.as_bytes()])))
    }

    /// Leaves of the next generation for the insecure root-replacement path.
    pub fn export_next_leaves(&self) -> Result<LeafFile, Error> {
        Ok(LeafFile::new(
            &self.params,
            self.eta + 1,
            self.leaves(self.eta + 1)?,
        ))
    }

    pub fn advance_generation(&mut self) {
        self.eta += 1;
    }
}
