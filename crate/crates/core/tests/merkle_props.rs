use proptest::prelude::*;
use smartotps::authenticator::Authenticator;
use smartotps::client::ClientStore;
use smartotps::crypto::{Digest, HashKind, Hasher, Seed};
use smartotps::merkle::{derive_idx, derive_node_in_cache, derive_root_hash, parity_pattern, MerkleTree};
use smartotps::TreeParams;

fn tree(seed: u64, height: u32) -> MerkleTree {
    let h = Hasher::new(HashKind::Sha3_256, 128).unwrap();
    let leaves = (0..1u64 << height)
        .map(|i| {
            let mut b = [0u8; 16];
            b[..8].copy_from_slice(&seed.to_be_bytes());
            b[8..].copy_from_slice(&i.to_be_bytes());
            Digest::from_slice(&b).unwrap()
        })
        .collect();
    MerkleTree::build(&h, leaves).unwrap()
}

fn params_strategy() -> impl Strategy<Value = TreeParams> {
    (0u32..4, 0u32..4, 0u32..3, 0u32..4).prop_filter_map("valid", |(p_exp, hs, extra, dls)| {
        let p = 1u64 << p_exp;
        let h = hs + extra;
        let ls = hs.saturating_sub(dls);
        TreeParams::new(128, p << h, p, p << hs, ls).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn proofs_fold_to_the_root(seed: u64, height in 0u32..8, idx: u64) {
        let t = tree(seed, height);
        let h = Hasher::new(HashKind::Sha3_256, 128).unwrap();
        let idx = idx % (1 << height);
        let proof = t.proof(idx, 0).unwrap();
        prop_assert_eq!(proof.fold(&h, &t.leaves()[idx as usize]), t.root());
        prop_assert_eq!(derive_idx(&proof), parity_pattern(idx, height));
    }

    #[test]
    fn any_hashed_bit_of_a_sibling_matters(seed: u64, height in 1u32..7, idx: u64, which: usize, bit in 0usize..127) {
        let t = tree(seed, height);
        let h = Hasher::new(HashKind::Sha3_256, 128).unwrap();
        let idx = idx % (1 << height);
        let mut proof = t.proof(idx, 0).unwrap();
        let which = which % proof.len();
        // Bit 120 (low bit of the last byte) is the parity tag, so skip it.
        let bit = if bit >= 120 { bit + 1 } else { bit };
        proof.siblings[which] = proof.siblings[which].flip_bit(bit);
        prop_assert_ne!(proof.fold(&h, &t.leaves()[idx as usize]), t.root());
    }

    #[test]
    fn every_otp_reaches_the_root_and_its_cached_node(params in params_strategy(), k: [u8; 16]) {
        let auth = Authenticator::new(Seed::new(k), params);
        let client = ClientStore::bootstrap_secure(Seed::new(k), params).unwrap();
        let h = params.hasher();
        let (layer, _) = client.current_layer().unwrap();
        for op in 0..params.n {
            let otp = auth.get_otp(op).unwrap();
            prop_assert!(!client.leaves().contains(&otp));
            let root = derive_root_hash(&h, &otp, &client.full_proof(op).unwrap(), op, &params).unwrap();
            prop_assert_eq!(root, client.root());
            if params.subtree_of(op) == 0 {
                let node = derive_node_in_cache(&h, &otp, &client.cache_proof(op).unwrap(), op, &params).unwrap();
                prop_assert!(layer.contains(&node));
            }
        }
    }
}
