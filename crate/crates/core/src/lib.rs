//! Meet-in-the-middle key recovery against two-key triple encryption.
//!
//! The workbench pairs real DES with a scaled-down Feistel family so the
//! full attack, its multi-key, complementation and partial-plaintext
//! enhancements, and the matching attack on the ANSI Retail MAC can be run
//! to completion on a desk machine and checked against both closed-form
//! cost predictions and an exhaustive ground-truth oracle.

pub mod analysis;
pub mod aseq;
pub mod cipher;
pub mod corpus;
pub mod engine;
pub mod files;
pub mod mac;

pub use cipher::{Block, CipherFamily, CipherKey, CipherSpec, TwoKey};
pub use corpus::{CorpusManifest, KeyLabel, PcRecord, TableOne};
pub use engine::{AttackConfig, AttackReport, Variant, VerificationPolicy};
