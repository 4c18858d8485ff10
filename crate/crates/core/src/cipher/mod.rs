//! Block-cipher abstraction: real DES and the scaled-down Feistel family,
//! plus two-key triple encryption over either.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod des;
mod feistel;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CipherError {
    #[error("block value {value:#x} does not fit in {width} bits")]
    InvalidBlock { value: u64, width: u32 },
    #[error("key value {value:#x} does not fit in {width} bits")]
    InvalidKey { value: u64, width: u32 },
    #[error("invalid cipher parameters: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CipherFamily {
    Des,
    MiniFeistel,
}

/// One instance of the cipher family: block width `b`, key width `k`, and
/// (for the scaled cipher) the round count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CipherSpec {
    pub family: CipherFamily,
    pub block_bits: u32,
    pub key_bits: u32,
    pub rounds: u32,
    #[serde(skip_serializing)]
    pub has_complementation: bool,
}

/// A `b`-bit block value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Block(pub u64);

/// A canonical `k`-bit cipher key. DES keys carry no parity bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CipherKey(pub u64);

/// The pair (K1, K2) of a two-key triple encryption key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TwoKey {
    pub k1: CipherKey,
    pub k2: CipherKey,
}

/// Bitwise complement restricted to the low `width` bits.
pub fn complement(x: u64, width: u32) -> u64 {
    !x & mask(width)
}

pub(crate) fn mask(width: u32) -> u64 {
    if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

impl CipherSpec {
    pub fn des() -> Self {
        CipherSpec {
            family: CipherFamily::Des,
            block_bits: 64,
            key_bits: 56,
            rounds: 16,
            has_complementation: true,
        }
    }

    pub fn mini_feistel(block_bits: u32, key_bits: u32, rounds: u32) -> Result<Self, CipherError> {
        if !(16..=64).contains(&block_bits) || !block_bits.is_multiple_of(2) {
            return Err(CipherError::InvalidSpec(format!(
                "block_bits must be even and within 16..=64, got {block_bits}"
            )));
        }
        if !(8..=56).contains(&key_bits) {
            return Err(CipherError::InvalidSpec(format!(
                "key_bits must be within 8..=56, got {key_bits}"
            )));
        }
        if rounds < 2 {
            return Err(CipherError::InvalidSpec(format!(
                "rounds must be at least 2, got {rounds}"
            )));
        }
        Ok(CipherSpec {
            family: CipherFamily::MiniFeistel,
            block_bits,
            key_bits,
            rounds,
            has_complementation: true,
        })
    }

    /// The workbench default used throughout the experiments: attack plus
    /// brute-force ground truth complete in seconds to minutes.
    pub fn toy() -> Self {
        Self::mini_feistel(20, 12, 8).expect("default profile is valid")
    }

    pub fn block_mask(&self) -> u64 {
        mask(self.block_bits)
    }

    pub fn key_mask(&self) -> u64 {
        mask(self.key_bits)
    }

    pub fn check_block(&self, b: Block) -> Result<u64, CipherError> {
        if b.0 <= self.block_mask() {
            Ok(b.0)
        } else {
            Err(CipherError::InvalidBlock { value: b.0, width: self.block_bits })
        }
    }

    pub fn check_key(&self, k: CipherKey) -> Result<u64, CipherError> {
        if k.0 <= self.key_mask() {
            Ok(k.0)
        } else {
            Err(CipherError::InvalidKey { value: k.0, width: self.key_bits })
        }
    }

    pub fn encrypt(&self, key: CipherKey, p: Block) -> Result<Block, CipherError> {
        Ok(Block(self.encrypt_raw(self.check_key(key)?, self.check_block(p)?)))
    }

    pub fn decrypt(&self, key: CipherKey, c: Block) -> Result<Block, CipherError> {
        Ok(Block(self.decrypt_raw(self.check_key(key)?, self.check_block(c)?)))
    }

    /// e_{K1}(d_{K2}(e_{K1}(p))): two-key triple encryption.
    pub fn tdea2_encrypt(&self, kk: TwoKey, p: Block) -> Result<Block, CipherError> {
        let k1 = self.check_key(kk.k1)?;
        let k2 = self.check_key(kk.k2)?;
        Ok(Block(self.tdea2_encrypt_raw(k1, k2, self.check_block(p)?)))
    }

    pub fn tdea2_decrypt(&self, kk: TwoKey, c: Block) -> Result<Block, CipherError> {
        let k1 = self.check_key(kk.k1)?;
        let k2 = self.check_key(kk.k2)?;
        Ok(Block(self.tdea2_decrypt_raw(k1, k2, self.check_block(c)?)))
    }

    #[inline]
    pub(crate) fn encrypt_raw(&self, key: u64, p: u64) -> u64 {
        debug_assert!(key <= self.key_mask() && p <= self.block_mask());
        match self.family {
            CipherFamily::Des => des::encrypt(key, p),
            CipherFamily::MiniFeistel => {
                feistel::encrypt(self.block_bits, self.key_bits, self.rounds, key, p)
            }
        }
    }

    #[inline]
    pub(crate) fn decrypt_raw(&self, key: u64, c: u64) -> u64 {
        debug_assert!(key <= self.key_mask() && c <= self.block_mask());
        match self.family {
            CipherFamily::Des => des::decrypt(key, c),
            CipherFamily::MiniFeistel => {
                feistel::decrypt(self.block_bits, self.key_bits, self.rounds, key, c)
            }
        }
    }

    pub(crate) fn tdea2_encrypt_raw(&self, k1: u64, k2: u64, p: u64) -> u64 {
        self.encrypt_raw(k1, self.decrypt_raw(k2, self.encrypt_raw(k1, p)))
    }

    pub(crate) fn tdea2_decrypt_raw(&self, k1: u64, k2: u64, c: u64) -> u64 {
        self.decrypt_raw(k1, self.encrypt_raw(k2, self.decrypt_raw(k1, c)))
    }

    pub fn complement_block(&self, b: Block) -> Block {
        Block(complement(b.0, self.block_bits))
    }

    pub fn complement_key(&self, k: CipherKey) -> CipherKey {
        CipherKey(complement(k.0, self.key_bits))
    }
}

impl TwoKey {
    pub fn new(k1: u64, k2: u64) -> Self {
        TwoKey { k1: CipherKey(k1), k2: CipherKey(k2) }
    }

    pub fn complement(&self, spec: &CipherSpec) -> Self {
        TwoKey { k1: spec.complement_key(self.k1), k2: spec.complement_key(self.k2) }
    }
}

// Deserialization goes through the validating constructors so that a config
// file cannot produce an out-of-range spec.
impl<'de> Deserialize<'de> for CipherSpec {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Wire {
            family: CipherFamily,
            #[serde(default)]
            block_bits: Option<u32>,
            #[serde(default)]
            key_bits: Option<u32>,
            #[serde(default)]
            rounds: Option<u32>,
        }
        let w = Wire::deserialize(deserializer)?;
        match w.family {
            CipherFamily::Des => Ok(CipherSpec::des()),
            CipherFamily::MiniFeistel => {
                let b = w.block_bits.ok_or_else(|| serde::de::Error::missing_field("block_bits"))?;
                let k = w.key_bits.ok_or_else(|| serde::de::Error::missing_field("key_bits"))?;
                let r = w.rounds.ok_or_else(|| serde::de::Error::missing_field("rounds"))?;
                CipherSpec::mini_feistel(b, k, r).map_err(serde::de::Error::custom)
            }
        }
    }
}

/// The DES known-answer fixture shipped with the crate, as
/// (key-with-parity, plaintext, ciphertext) hex triples.
pub const DES_KAT: &str = include_str!("../../data/des_kat.txt");

/// Parses the shipped fixture into canonical-key vectors.
pub fn des_kat_vectors() -> Vec<(CipherKey, Block, Block)> {
    DES_KAT
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let mut fields = line.split_whitespace();
            let mut next = || {
                u64::from_str_radix(fields.next().expect("three fields per line"), 16)
                    .expect("hex field")
            };
            let key64 = next();
            let pt = next();
            let ct = next();
            (CipherKey(des::strip_parity(key64)), Block(pt), Block(ct))
        })
        .collect()
}
