mod chain;
mod digest;
mod mnemonic;

pub use chain::{chain_extend, chain_step, prf};
pub use digest::{Digest, HashKind, Hasher, MeteredHasher, Seed, TruncatedHash, MAX_DIGEST_BYTES};
pub use mnemonic::{mnemonic_decode, mnemonic_decode_str, mnemonic_encode, Wordlist, WORDLIST_LEN};
