//! BIP-39 style word encoding used to move digests between air-gapped parties.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use sha2::{Digest as _, Sha256};

use super::digest::Digest;
use crate::error::Error;

const ENGLISH: &str = include_str!("../../data/english.txt");
pub const WORDLIST_LEN: usize = 2048;

pub struct Wordlist {
    words: Vec<String>,
    index: HashMap<String, u16>,
}

impl Wordlist {
    /// Parse a wordlist file: one word per line, exactly 2048 lines.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let words: Vec<String> = text.lines().map(|l| l.trim().to_string()).collect();
        if words.len() != WORDLIST_LEN {
            return Err(Error::Parse(format!(
                "wordlist must have {WORDLIST_LEN} lines, found {}",
                words.len()
            )));
        }
        let mut index = HashMap::with_capacity(WORDLIST_LEN);
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() {
                return Err(Error::Parse(format!("wordlist line {} is empty", i + 1)));
            }
            if index.insert(w.clone(), i as u16).is_some() {
                return Err(Error::Parse(format!("duplicate word {w:?}")));
            }
        }
        Ok(Self { words, index })
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The standard English list shipped with the crate.
    pub fn english() -> &'static Wordlist {
        static LIST: OnceLock<Wordlist> = OnceLock::new();
        LIST.get_or_init(|| Wordlist::parse(ENGLISH).expect("bundled wordlist is valid"))
    }

    pub fn word(&self, i: u16) -> &str {
        &self.words[i as usize]
    }

    pub fn position(&self, word: &str) -> Option<u16> {
        self.index.get(word).copied()
    }

    pub fn encode(&self, d: &Digest) -> Result<Vec<String>, Error> {
        let bits = d.bits();
        if !bits.is_multiple_of(32) {
            return Err(Error::Domain(format!(
                "mnemonic encoding needs S in {{128,160,192,224,256}}, got {bits}"
            )));
        }
        let cs_bits = (bits / 32) as usize;
        let checksum = Sha256::digest(d.as_bytes());
        let mut stream = BitWriter::default();
        for byte in d.as_bytes() {
            stream.push(*byte as u32, 8);
        }
        stream.push((checksum[0] >> (8 - cs_bits)) as u32, cs_bits);
        Ok(stream
            .groups_of_11()
            .into_iter()
            .map(|g| self.word(g).to_string())
            .collect())
    }

    pub fn decode<S: AsRef<str>>(&self, words: &[S]) -> Result<Digest, Error> {
        let total_bits = words.len() * 11;
        // 33 bits per 3 words: S + S/32 = 33 S / 32.
        if !words.len().is_multiple_of(3) || !(12..=24).contains(&words.len()) {
            return Err(Error::Parse(format!(
                "mnemonic must have 12, 15, 18, 21 or 24 words, got {}",
                words.len()
            )));
        }
        let data_bits = total_bits * 32 / 33;
        let cs_bits = total_bits - data_bits;
        let mut acc = BitReader::default();
        for w in words {
            let w = w.as_ref();
            let idx = self
                .position(&w.to_lowercase())
                .ok_or_else(|| Error::Parse(format!("unknown mnemonic word {w:?}")))?;
            acc.push(idx as u32, 11);
        }
        let bytes = acc.take_bytes(data_bits / 8);
        let cs = acc.take_bits(cs_bits);
        let expected = Sha256::digest(&bytes)[0] >> (8 - cs_bits);
        if cs as u8 != expected {
            return Err(Error::Checksum("mnemonic checksum mismatch".into()));
        }
        Digest::from_slice(&bytes)
    }
}

/// Encode with the bundled English list.
pub fn mnemonic_encode(d: &Digest) -> Result<Vec<String>, Error> {
    Wordlist::english().encode(d)
}

/// Decode with the bundled English list.
pub fn mnemonic_decode<S: AsRef<str>>(words: &[S]) -> Result<Digest, Error> {
    Wordlist::english().decode(words)
}

/// Parse whitespace separated words.
pub fn mnemonic_decode_str(phrase: &str) -> Result<Digest, Error> {
    let words: Vec<&str> = phrase.split_whitespace().collect();
    mnemonic_decode(&words)
}

#[derive(Default)]
struct BitWriter {
    bits: Vec<bool>,
}

impl BitWriter {
    fn push(&mut self, value: u32, width: usize) {
        for i in (0..width).rev() {
            self.bits.push((value >> i) & 1 == 1);
        }
    }

    fn groups_of_11(&self) -> Vec<u16> {
        self.bits
            .chunks(11)
            .map(|c| c.iter().fold(0u16, |acc, b| (acc << 1) | *b as u16))
            .collect()
    }
}

#[derive(Default)]
struct BitReader {
    bits: Vec<bool>,
    pos: usize,
}

impl BitReader {
    fn push(&mut self, value: u32, width: usize) {
        for i in (0..width).rev() {
            self.bits.push((value >> i) & 1 == 1);
        }
    }

    fn take_bits(&mut self, n: usize) -> u32 {
        let v = self.bits[self.pos..self.pos + n]
            .iter()
            .fold(0u32, |acc, b| (acc << 1) | *b as u32);
        self.pos += n;
        v
    }

    fn take_bytes(&mut self, n: usize) -> Vec<u8> {
        (0..n).map(|_| self.take_bits(8) as u8).collect()
    }
}
