//! The client: keeps the public leaves, builds proofs and assembles the
//! calls of every protocol.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crypto::{mnemonic_decode, Digest, Seed, TruncatedHash};
use crate::error::Error;
use crate::merkle::{generation_leaves, subtree_layer, LeafFile, MerkleProof, MerkleTree};
use crate::params::TreeParams;
use crate::payload::Call;
use crate::signature::PublicKey;

pub const DEFAULT_CONFIRMATION_DEPTH: u64 = 12;
pub const LEAF_FILE: &str = "leaves.txt";
pub const META_FILE: &str = "client.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Secure,
    Insecure,
}

#[derive(Clone, Debug)]
pub struct ClientStore {
    params: TreeParams,
    eta: u64,
    delta: u64,
    tree: MerkleTree,
    contract_id: Option<Digest>,
    confirmation_depth: u64,
    provenance: Provenance,
}

/// The sidecar persisted next to the leaf file.
#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    params: TreeParams,
    eta: u64,
    delta: u64,
    contract_id: Option<Digest>,
    confirmation_depth: u64,
    provenance: Provenance,
}

/// The three calls of a parent-root replacement plus what the client
/// installs once they succeed.
#[derive(Clone, Debug)]
pub struct NewRootStages {
    pub r_new: Digest,
    pub h_root_and_otp: Digest,
    pub stage1: Call,
    pub stage2: Call,
    pub stage3: Call,
    new_tree: MerkleTree,
}

impl ClientStore {
    fn from_leaves(
        params: TreeParams,
        eta: u64,
        leaves: Vec<Digest>,
        provenance: Provenance,
    ) -> Result<Self, Error> {
        if leaves.len() as u64 != params.leaves() {
            return Err(Error::Params(format!(
                "expected {} leaves, got {}",
                params.leaves(),
                leaves.len()
            )));
        }
        Ok(Self {
            params,
            eta,
            delta: 0,
            tree: MerkleTree::build(&params.hasher(), leaves)?,
            contract_id: None,
            confirmation_depth: DEFAULT_CONFIRMATION_DEPTH,
            provenance,
        })
    }

    /// Derive the leaves from the seed. The seed is consumed and dropped.
    pub fn bootstrap_secure(k: Seed, params: TreeParams) -> Result<Self, Error> {
        let leaves = generation_leaves(&k, &params, 0)?;
        drop(k);
        Self::from_leaves(params, 0, leaves, Provenance::Secure)
    }

    pub fn bootstrap_secure_mnemonic<S: AsRef<str>>(
        words: &[S],
        params: TreeParams,
    ) -> Result<Self, Error> {
        let d = mnemonic_decode(words)?;
        Self::bootstrap_secure(Seed::from_slice(d.as_bytes())?, params)
    }

    pub fn bootstrap_insecure(file: &LeafFile, params: TreeParams) -> Result<Self, Error> {
        file.check_params(&params)?;
        Self::from_leaves(params, file.eta, file.leaves.clone(), Provenance::Insecure)
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn eta(&self) -> u64 {
        self.eta
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn root(&self) -> Digest {
        self.tree.root()
    }

    pub fn leaves(&self) -> &[Digest] {
        self.tree.leaves()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn contract_id(&self) -> Option<Digest> {
        self.contract_id
    }

    pub fn set_contract_id(&mut self, id: Digest) {
        self.contract_id = Some(id);
    }

    pub fn confirmation_depth(&self) -> u64 {
        self.confirmation_depth
    }

    pub fn set_confirmation_depth(&mut self, depth: u64) {
        self.confirmation_depth = depth;
    }

    /// `h(PK || R)` for this store's root.
    pub fn expected_contract_id(&self, pk: &PublicKey) -> Digest {
        self.params
            .hasher()
            .hash_parts(&[pk.as_bytes(), self.root().as_bytes()])
    }

    /// Cached sublayer of the current subtree and its proof to the root.
    pub fn current_layer(&self) -> Result<(Vec<Digest>, MerkleProof), Error> {
        subtree_layer(&self.tree, &self.params, self.delta)
    }

    pub fn deploy_call(&self, pk: PublicKey) -> Result<Call, Error> {
        let (sub_layer, pi_sr) = self.current_layer()?;
        Ok(Call::Deploy {
            params: self.params,
            root: self.root(),
            pk,
            sub_layer,
            pi_sr,
        })
    }

    fn check_current(&self, op_id: u64) -> Result<(), Error> {
        if self.params.generation(op_id) != self.eta || self.params.subtree_of(op_id) != self.delta
        {
            return Err(Error::Refused(format!(
                "operation {op_id} is not in the current subtree {} of parent tree {}",
                self.delta, self.eta
            )));
        }
        Ok(())
    }

    /// Proof from the leaf of `op_id` to its cached-sublayer node.
    pub fn cache_proof(&self, op_id: u64) -> Result<MerkleProof, Error> {
        self.tree
            .proof_between(0, self.params.beta(op_id), self.params.cache_proof_len())
    }

    /// Proof from the leaf of `op_id` to the parent root.
    pub fn full_proof(&self, op_id: u64) -> Result<MerkleProof, Error> {
        self.tree.proof(self.params.beta(op_id), 0)
    }

    pub fn build_confirm(&self, op_id: u64, otp: Digest) -> Result<Call, Error> {
        self.check_current(op_id)?;
        Ok(Call::ConfirmOp {
            op_id,
            otp,
            proof: self.cache_proof(op_id)?,
        })
    }

    pub fn build_next_subtree(&self, op_id: u64, otp: Digest) -> Result<Call, Error> {
        self.check_current(op_id)?;
        if !self.params.is_subtree_slot(op_id) {
            return Err(Error::Refused(format!(
                "operation {op_id} is not a subtree introduction slot"
            )));
        }
        let (next_layer, pi_sr) = subtree_layer(&self.tree, &self.params, self.delta + 1)?;
        Ok(Call::NextSubtree {
            next_layer,
            otp,
            pi_otp: self.full_proof(op_id)?,
            pi_sr,
        })
    }

    /// Record that the contract accepted the next subtree.
    pub fn advance_subtree(&mut self) {
        self.delta += 1;
    }

    pub fn build_new_root_stages(
        &self,
        op_id: u64,
        new_leaves: Vec<Digest>,
        otp: Digest,
    ) -> Result<NewRootStages, Error> {
        self.check_current(op_id)?;
        if !self.params.is_root_slot(op_id) {
            return Err(Error::Refused(format!(
                "operation {op_id} is not the last of a parent tree"
            )));
        }
        if new_leaves.len() as u64 != self.params.leaves() {
            return Err(Error::Params("new leaf set has the wrong size".into()));
        }
        let h = self.params.hasher();
        let new_tree = MerkleTree::build(&h, new_leaves)?;
        let r_new = new_tree.root();
        let h_root_and_otp = h.hash_parts(&[r_new.as_bytes(), otp.as_bytes()]);
        let (cs, pi_sr) = subtree_layer(&new_tree, &self.params, 0)?;
        Ok(NewRootStages {
            r_new,
            h_root_and_otp,
            stage1: Call::NewRoot1 { h_root_and_otp },
            stage2: Call::NewRoot2 { r_new },
            stage3: Call::NewRoot3 {
                otp,
                proof: self.full_proof(op_id)?,
                cs,
                pi_sr,
            },
            new_tree,
        })
    }

    /// New-root stages from the seed (secure environment). The seed is dropped.
    pub fn build_new_root_stages_secure(
        &self,
        op_id: u64,
        k: Seed,
    ) -> Result<NewRootStages, Error> {
        let h = self.params.hasher();
        let x = crate::merkle::chain_input(&self.params, self.eta, self.params.beta(op_id))?;
        let start = crate::crypto::prf(&h, &k, x)?;
        let otp = crate::crypto::chain_extend(&h, &start, 0, self.params.alpha(op_id))?;
        let leaves = generation_leaves(&k, &self.params, self.eta + 1)?;
        drop(k);
        self.build_new_root_stages(op_id, leaves, otp)
    }

    /// New-root stages from an exported leaf file (insecure environment).
    pub fn build_new_root_stages_insecure(
        &self,
        op_id: u64,
        file: &LeafFile,
        otp: Digest,
    ) -> Result<NewRootStages, Error> {
        file.check_params(&self.params)?;
        if file.eta != self.eta + 1 {
            return Err(Error::Params(format!(
                "leaf file is for generation {}, expected {}",
                file.eta,
                self.eta + 1
            )));
        }
        self.build_new_root_stages(op_id, file.leaves.clone(), otp)
    }

    /// Switch to the next parent tree after stage 3 succeeded.
    pub fn install_generation(&mut self, stages: NewRootStages) {
        self.tree = stages.new_tree;
        self.eta += 1;
        self.delta = 0;
    }

    pub fn save(&self, dir: &Path) -> Result<(), Error> {
        fs::create_dir_all(dir)?;
        let file = LeafFile::new(&self.params, self.eta, self.leaves().to_vec());
        fs::write(dir.join(LEAF_FILE), file.render())?;
        let meta = Meta {
            params: self.params,
            eta: self.eta,
            delta: self.delta,
            contract_id: self.contract_id,
            confirmation_depth: self.confirmation_depth,
            provenance: self.provenance,
        };
        let line = serde_json::to_string(&meta).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(dir.join(META_FILE), line + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, Error> {
        let meta: Meta = serde_json::from_str(&fs::read_to_string(dir.join(META_FILE))?)
            .map_err(|e| Error::Parse(format!("bad client metadata: {e}")))?;
        meta.params.validate()?;
        let file = LeafFile::parse(&fs::read_to_string(dir.join(LEAF_FILE))?)?;
        file.check_params(&meta.params)?;
        if file.eta != meta.eta {
            return Err(Error::Parse(
                "leaf file generation disagrees with metadata".into(),
            ));
        }
        let mut store = Self::from_leaves(meta.params, meta.eta, file.leaves, meta.provenance)?;
        store.delta = meta.delta;
        store.contract_id = meta.contract_id;
        store.confirmation_depth = meta.confirmation_depth;
        Ok(store)
    }
}
