use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha3::Digest as _;

use crate::error::Error;

/// Largest supported digest width in bytes (a full 256-bit hash).
pub const MAX_DIGEST_BYTES: usize = 32;

/// Output of the truncated hash: `len` meaningful bytes, zero padded.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest {
    len: u8,
    bytes: [u8; MAX_DIGEST_BYTES],
}

impl Digest {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, Error> {
        if bytes.len() < 16 || bytes.len() > MAX_DIGEST_BYTES {
            return Err(Error::Domain(format!(
                "digest must be 16..=32 bytes, got {}",
                bytes.len()
            )));
        }
        let mut out = [0u8; MAX_DIGEST_BYTES];
        out[..bytes.len()].copy_from_slice(bytes);
        Ok(Self {
            len: bytes.len() as u8,
            bytes: out,
        })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bits(&self) -> u32 {
        self.len as u32 * 8
    }

    /// Least significant bit, reading the digest as a big-endian integer.
    pub fn lsb(&self) -> bool {
        self.bytes[self.len as usize - 1] & 1 == 1
    }

    pub fn with_lsb(mut self, bit: bool) -> Self {
        let last = self.len as usize - 1;
        self.bytes[last] = (self.bytes[last] & !1) | bit as u8;
        self
    }

    pub fn flip_bit(mut self, bit: usize) -> Self {
        let byte = bit / 8;
        assert!(byte < self.len as usize, "bit index out of range");
        self.bytes[byte] ^= 1 << (bit % 8);
        self
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.as_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, Error> {
        let raw =
            hex::decode(s.trim()).map_err(|e| Error::Parse(format!("bad hex digest: {e}")))?;
        Self::from_slice(&raw)
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// The 128-bit secret from which every OTP of a wallet is derived.
#[derive(Clone, PartialEq, Eq)]
pub struct Seed([u8; 16]);

impl Seed {
    pub const LEN: usize = 16;

    pub fn new(bytes: [u8; 16]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, Error> {
        let arr: [u8; 16] = bytes
            .try_into()
            .map_err(|_| Error::Domain(format!("seed must be 16 bytes, got {}", bytes.len())))?;
        Ok(Self(arr))
    }

    pub fn random<R: rand::RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    /// The seed viewed as a 128-bit digest, for mnemonic transport.
    pub fn as_digest(&self) -> Digest {
        Digest::from_slice(&self.0).expect("16 bytes is a valid digest width")
    }
}

impl Drop for Seed {
    fn drop(&mut self) {
        for b in self.0.iter_mut() {
            // Volatile so the wipe is not optimised away.
            unsafe { std::ptr::write_volatile(b, 0) };
        }
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Seed(..)")
    }
}

/// Underlying 256-bit hash function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HashKind {
    #[default]
    Sha3_256,
    Keccak256,
}

impl HashKind {
    pub fn hash256(self, parts: &[&[u8]]) -> [u8; 32] {
        match self {
            HashKind::Sha3_256 => {
                let mut h = sha3::Sha3_256::new();
                for p in parts {
                    h.update(p);
                }
                h.finalize().into()
            }
            HashKind::Keccak256 => {
                let mut h = sha3::Keccak256::new();
                for p in parts {
                    h.update(p);
                }
                h.finalize().into()
            }
        }
    }
}

/// Anything that can evaluate the truncated hash `h(.)`.
///
/// Implemented by [`Hasher`] and by [`MeteredHasher`], which additionally
/// counts evaluations for the cost model.
pub trait TruncatedHash {
    fn out_bytes(&self) -> usize;

    /// Hash the concatenation of `parts`.
    fn hash_parts(&self, parts: &[&[u8]]) -> Digest;

    fn hash(&self, data: &[u8]) -> Digest {
        self.hash_parts(&[data])
    }
}

/// A 256-bit hash truncated to its first `S/8` bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hasher {
    kind: HashKind,
    out_bytes: u8,
}

impl Hasher {
    pub fn new(kind: HashKind, s_bits: u32) -> Result<Self, Error> {
        if !s_bits.is_multiple_of(8) || !(128..=256).contains(&s_bits) {
            return Err(Error::Params(format!(
                "S must be a multiple of 8 in 128..=256, got {s_bits}"
            )));
        }
        Ok(Self {
            kind,
            out_bytes: (s_bits / 8) as u8,
        })
    }

    pub fn kind(&self) -> HashKind {
        self.kind
    }

    pub fn s_bits(&self) -> u32 {
        self.out_bytes as u32 * 8
    }
}

impl TruncatedHash for Hasher {
    fn out_bytes(&self) -> usize {
        self.out_bytes as usize
    }

    fn hash_parts(&self, parts: &[&[u8]]) -> Digest {
        let full = self.kind.hash256(parts);
        Digest::from_slice(&full[..self.out_bytes as usize])
            .expect("width validated at construction")
    }
}

/// Counts hash evaluations and 32-byte input words.
#[derive(Debug)]
pub struct MeteredHasher {
    inner: Hasher,
    evaluations: Cell<u64>,
    words: Cell<u64>,
}

impl MeteredHasher {
    pub fn new(inner: Hasher) -> Self {
        Self {
            inner,
            evaluations: Cell::new(0),
            words: Cell::new(0),
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.get()
    }

    pub fn words(&self) -> u64 {
        self.words.get()
    }
}

impl TruncatedHash for MeteredHasher {
    fn out_bytes(&self) -> usize {
        self.inner.out_bytes()
    }

    fn hash_parts(&self, parts: &[&[u8]]) -> Digest {
        let len: usize = parts.iter().map(|p| p.len()).sum();
        self.evaluations.set(self.evaluations.get() + 1);
        self.words
            .set(self.words.get() + len.div_ceil(32).max(1) as u64);
        self.inner.hash_parts(parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha3_empty_vector_truncated() {
        // FIPS 202 SHA3-256("") = a7ffc6f8bf1ed76651c14756a061d662f580ff4de43b49fa82d80a4b80f8434a
        let h = Hasher::new(HashKind::Sha3_256, 128).unwrap();
        assert_eq!(h.hash(b"").to_hex(), "a7ffc6f8bf1ed76651c14756a061d662");
        let full = Hasher::new(HashKind::Sha3_256, 256).unwrap();
        assert_eq!(
            full.hash(b"").to_hex(),
            "a7ffc6f8bf1ed76651c14756a061d662f580ff4de43b49fa82d80a4b80f8434a"
        );
    }

    #[test]
    fn keccak_empty_vector_truncated() {
        let h = Hasher::new(HashKind::Keccak256, 160).unwrap();
        // Keccak-256("") = c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470
        assert_eq!(
            h.hash(b"").to_hex(),
            "c5d2460186f7233c927e7db2dcc703c0e500b653"
        );
    }

    #[test]
    fn truncated_hash_is_deterministic_and_separates_inputs() {
        let h = Hasher::new(HashKind::Sha3_256, 128).unwrap();
        assert_eq!(h.hash(b"x"), h.hash(b"x"));
        assert_ne!(h.hash(&[0]), h.hash(&[1]));
        assert_eq!(h.hash(b"abc").len(), 16);
        assert_eq!(h.hash_parts(&[b"ab", b"c"]), h.hash(b"abc"));
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(Hasher::new(HashKind::Sha3_256, 120).is_err());
        assert!(Hasher::new(HashKind::Sha3_256, 130).is_err());
        assert!(Hasher::new(HashKind::Sha3_256, 264).is_err());
    }

    #[test]
    fn lsb_manipulation() {
        let d = Digest::from_slice(&[0xAB; 16]).unwrap();
        assert!(d.lsb());
        assert!(!d.with_lsb(false).lsb());
        assert_eq!(d.with_lsb(false).as_bytes()[15], 0xAA);
        assert_eq!(d.with_lsb(true), d);
    }

    #[test]
    fn hex_round_trip() {
        let h = Hasher::new(HashKind::Sha3_256, 192).unwrap();
        let d = h.hash(b"round");
        assert_eq!(Digest::from_hex(&d.to_hex()).unwrap(), d);
        assert!(Digest::from_hex("zz").is_err());
    }

    #[test]
    fn metered_hasher_counts() {
        let m = MeteredHasher::new(Hasher::new(HashKind::Sha3_256, 128).unwrap());
        m.hash(&[0u8; 20]);
        m.hash(&[0u8; 48]);
        assert_eq!(m.evaluations(), 2);
        assert_eq!(m.words(), 3);
    }
}
