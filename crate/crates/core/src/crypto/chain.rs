//! PRF and domain-separated hash chains.
//!
//! Chain position 0 holds the PRF output; element `j` is the hash of
//! element `j - 1` tagged with `j`, so every step uses its own hash function.

use super::digest::{Digest, Seed, TruncatedHash};
use crate::error::Error;

/// `F_k(x) = h(k || be32(x))`.
pub fn prf<H: TruncatedHash + ?Sized>(h: &H, k: &Seed, x: u64) -> Result<Digest, Error> {
    let x =
        u32::try_from(x).map_err(|_| Error::Domain(format!("prf input {x} exceeds 2^32 - 1")))?;
    Ok(h.hash_parts(&[k.as_bytes(), &x.to_be_bytes()]))
}

/// One chain step producing the element at position `j`.
pub fn chain_step<H: TruncatedHash + ?Sized>(h: &H, d: &Digest, j: u32) -> Result<Digest, Error> {
    if j == 0 {
        return Err(Error::Domain(
            "chain position 0 is the PRF output and has no predecessor".into(),
        ));
    }
    Ok(h.hash_parts(&[&j.to_be_bytes(), d.as_bytes()]))
}

/// Walk a chain from position `from` (holding `d`) up to position `to`.
pub fn chain_extend<H: TruncatedHash + ?Sized>(
    h: &H,
    d: &Digest,
    from: u32,
    to: u32,
) -> Result<Digest, Error> {
    if from > to {
        return Err(Error::Domain(format!(
            "cannot extend chain backwards ({from} > {to})"
        )));
    }
    let mut cur = *d;
    for j in from + 1..=to {
        cur = chain_step(h, &cur, j)?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{HashKind, Hasher, MeteredHasher};

    fn hasher() -> Hasher {
        Hasher::new(HashKind::Sha3_256, 128).unwrap()
    }

    fn seed(b: u8) -> Seed {
        Seed::new([b; 16])
    }

    #[test]
    fn prf_matches_definition() {
        let h = hasher();
        let k = seed(7);
        let mut input = k.as_bytes().to_vec();
        input.extend_from_slice(&5u32.to_be_bytes());
        assert_eq!(prf(&h, &k, 5).unwrap(), h.hash(&input));
    }

    #[test]
    fn prf_separates_points_and_keys() {
        let h = hasher();
        assert_ne!(prf(&h, &seed(1), 0).unwrap(), prf(&h, &seed(1), 1).unwrap());
        assert_ne!(prf(&h, &seed(1), 3).unwrap(), prf(&h, &seed(2), 3).unwrap());
        assert_eq!(prf(&h, &seed(1), 3).unwrap(), prf(&h, &seed(1), 3).unwrap());
    }

    #[test]
    fn prf_domain() {
        let h = hasher();
        assert!(prf(&h, &seed(0), u32::MAX as u64).is_ok());
        assert!(prf(&h, &seed(0), 1 << 32).is_err());
    }

    #[test]
    fn chain_step_tags_target_position() {
        let h = hasher();
        let d = h.hash(b"start");
        let mut input = 3u32.to_be_bytes().to_vec();
        input.extend_from_slice(d.as_bytes());
        assert_eq!(chain_step(&h, &d, 3).unwrap(), h.hash(&input));
        assert_ne!(
            chain_step(&h, &d, 1).unwrap(),
            chain_step(&h, &d, 2).unwrap()
        );
        assert!(chain_step(&h, &d, 0).is_err());
    }

    #[test]
    fn chain_extend_composes() {
        let h = hasher();
        let d = h.hash(b"x");
        assert_eq!(chain_extend(&h, &d, 4, 4).unwrap(), d);
        let two = chain_step(&h, &chain_step(&h, &d, 1).unwrap(), 2).unwrap();
        assert_eq!(chain_extend(&h, &d, 0, 2).unwrap(), two);
        let split = chain_extend(&h, &chain_extend(&h, &d, 0, 3).unwrap(), 3, 5).unwrap();
        assert_eq!(split, chain_extend(&h, &d, 0, 5).unwrap());
        assert!(chain_extend(&h, &d, 3, 2).is_err());
    }

    #[test]
    fn chain_extend_costs_exactly_the_distance() {
        let m = MeteredHasher::new(hasher());
        let d = hasher().hash(b"y");
        chain_extend(&m, &d, 2, 9).unwrap();
        assert_eq!(m.evaluations(), 7);
    }
}
