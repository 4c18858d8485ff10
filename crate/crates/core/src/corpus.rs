//! Known-plaintext corpora: generation under one or many triple-encryption
//! keys, expansion of partially known plaintexts into mostly-false pair
//! sets, and the immutable plaintext-indexed lookup table shared by every
//! attack iteration.

use std::collections::HashMap;
use std::collections::HashSet;
use std::hash::{BuildHasherDefault, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::cipher::{mask, Block, CipherError, CipherSpec, TwoKey};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{w} unknown plaintext bits exceed the configured maximum {w_max}")]
    TooManyUnknownBits { w: u32, w_max: u32 },
    #[error(transparent)]
    Cipher(#[from] CipherError),
}

/// Opaque label identifying which triple-encryption key produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyLabel(pub u32);

/// One (plaintext, ciphertext) pair attributed to key label `s`.
///
/// Records expanded from a single partial observation share a `group`; all
/// but one of them carry a false plaintext. Fully known records form
/// singleton groups. Candidate verification never uses a pair from the
/// group that produced the candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcRecord {
    pub p: Block,
    pub c: Block,
    pub s: KeyLabel,
    pub from_partial: bool,
    pub group: u32,
}

/// A ciphertext whose plaintext is only partly known: `mask` has 1-bits at
/// the known positions and `known_bits` holds their values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartialObservation {
    pub c: Block,
    pub known_bits: Block,
    pub mask: Block,
    pub s: KeyLabel,
}

/// A pair reserved for candidate-key verification. `mask` is all-ones for a
/// fully known pair; otherwise only the masked bits are checkable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReservedPair {
    pub group: u32,
    pub known_bits: u64,
    pub mask: u64,
    pub c: u64,
}

/// Experiment-side ground truth: the generating keys, the per-label pairs
/// reserved for verification, and the corpus shape. The `keys` field exists
/// so results can be checked against the truth; the attack itself only
/// reads the reserved pairs.
#[derive(Debug, Clone)]
pub struct CorpusManifest {
    pub spec: CipherSpec,
    pub seed: u64,
    pub keys: Vec<(KeyLabel, TwoKey)>,
    pub reserved: Vec<(KeyLabel, Vec<ReservedPair>)>,
    /// Number of genuine pairs: every observation hides exactly one.
    pub genuine_pairs: u64,
}

impl CorpusManifest {
    pub fn key_of(&self, label: KeyLabel) -> Option<TwoKey> {
        self.keys.iter().find(|(l, _)| *l == label).map(|(_, k)| *k)
    }

    pub fn reserved_of(&self, label: KeyLabel) -> Option<&[ReservedPair]> {
        self.reserved
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, pairs)| pairs.as_slice())
    }

    pub fn labels(&self) -> impl Iterator<Item = KeyLabel> + '_ {
        self.keys.iter().map(|(l, _)| *l)
    }
}

/// Smallest usable subset size: two pairs to check candidates against plus
/// one the candidate may have come from.
pub const MIN_PAIRS_PER_LABEL: usize = 3;

/// Up to this many pairs per label are set aside for verification, so that
/// a third check pair can be configured and the producing pair skipped.
pub const RESERVED_PER_LABEL: usize = 4;

/// Default cap on unknown bits per observation; keeps the expanded table
/// within desk-scale storage.
pub const DEFAULT_W_MAX: u32 = 16;

fn sample_distinct_keys(
    spec: &CipherSpec,
    rng: &mut ChaCha12Rng,
    num_keys: usize,
) -> Result<Vec<TwoKey>, CorpusError> {
    let kmask = spec.key_mask();
    let space = (kmask as u128 + 1).saturating_mul(kmask as u128 + 1);
    if num_keys as u128 > space {
        return Err(CorpusError::Config(format!(
            "cannot sample {num_keys} distinct keys from a 2^{} key space",
            2 * spec.key_bits
        )));
    }
    let mut seen = HashSet::new();
    let mut keys = Vec::with_capacity(num_keys);
    while keys.len() < num_keys {
        let kk = TwoKey::new(rng.gen::<u64>() & kmask, rng.gen::<u64>() & kmask);
        if seen.insert((kk.k1, kk.k2)) {
            keys.push(kk);
        }
    }
    Ok(keys)
}

fn sample_distinct_plaintexts(
    spec: &CipherSpec,
    rng: &mut ChaCha12Rng,
    count: usize,
) -> Result<Vec<u64>, CorpusError> {
    let bmask = spec.block_mask();
    if count as u128 > bmask as u128 + 1 {
        return Err(CorpusError::Config(format!(
            "cannot sample {count} distinct plaintexts from a 2^{} block space",
            spec.block_bits
        )));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = rng.gen::<u64>() & bmask;
        if seen.insert(p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Generates `num_keys * pairs_per_key` genuine records, plaintexts sampled
/// uniformly without replacement per key, keys distinct. Deterministic for a
/// given seed. The first [`RESERVED_PER_LABEL`] records of each label double
/// as that label's verification pairs (they stay in the table; checking
/// skips the pair a candidate came from).
pub fn generate_corpus(
    spec: &CipherSpec,
    num_keys: usize,
    pairs_per_key: usize,
    seed: u64,
) -> Result<(Vec<PcRecord>, CorpusManifest), CorpusError> {
    if num_keys == 0 {
        return Err(CorpusError::Config("num_keys must be at least 1".into()));
    }
    if pairs_per_key < MIN_PAIRS_PER_LABEL {
        return Err(CorpusError::Config(format!(
            "pairs_per_key must be at least {MIN_PAIRS_PER_LABEL} so candidates can be verified, got {pairs_per_key}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let keys = sample_distinct_keys(spec, &mut rng, num_keys)?;

    let mut records = Vec::with_capacity(num_keys * pairs_per_key);
    let mut manifest_keys = Vec::with_capacity(num_keys);
    let mut reserved = Vec::with_capacity(num_keys);
    let mut group = 0u32;
    for (idx, kk) in keys.into_iter().enumerate() {
        let label = KeyLabel(idx as u32);
        manifest_keys.push((label, kk));
        let mut label_reserved = Vec::with_capacity(RESERVED_PER_LABEL);
        for p in sample_distinct_plaintexts(spec, &mut rng, pairs_per_key)? {
            let c = spec.tdea2_encrypt(kk, Block(p))?;
            if label_reserved.len() < RESERVED_PER_LABEL {
                label_reserved.push(ReservedPair {
                    group,
                    known_bits: p,
                    mask: spec.block_mask(),
                    c: c.0,
                });
            }
            records.push(PcRecord { p: Block(p), c, s: label, from_partial: false, group });
            group += 1;
        }
        reserved.push((label, label_reserved));
    }
    let manifest = CorpusManifest {
        spec: *spec,
        seed,
        keys: manifest_keys,
        reserved,
        genuine_pairs: (num_keys * pairs_per_key) as u64,
    };
    Ok((records, manifest))
}

/// Expands a partial observation into the 2^w pairs covering every
/// completion of the unknown bits. Exactly one of them is the true pair;
/// all are flagged as coming from partial knowledge.
pub fn expand_partial(
    spec: &CipherSpec,
    obs: &PartialObservation,
    w_max: u32,
    group: u32,
) -> Result<Vec<PcRecord>, CorpusError> {
    let bmask = spec.block_mask();
    spec.check_block(obs.c)?;
    if obs.mask.0 & !bmask != 0 || obs.known_bits.0 & !bmask != 0 {
        return Err(CorpusError::Config("observation wider than the block".into()));
    }
    if obs.known_bits.0 & !obs.mask.0 != 0 {
        return Err(CorpusError::Config(
            "known_bits has value bits outside the known-position mask".into(),
        ));
    }
    let unknown = !obs.mask.0 & bmask;
    let w = unknown.count_ones();
    if w > w_max {
        return Err(CorpusError::TooManyUnknownBits { w, w_max });
    }
    let positions: Vec<u32> = (0..spec.block_bits).filter(|i| unknown >> i & 1 == 1).collect();
    let mut out = Vec::with_capacity(1usize << w);
    for m in 0..(1u64 << w) {
        let mut p = obs.known_bits.0;
        for (bit, pos) in positions.iter().enumerate() {
            p |= ((m >> bit) & 1) << pos;
        }
        out.push(PcRecord {
            p: Block(p),
            c: obs.c,
            s: obs.s,
            from_partial: true,
            group,
        });
    }
    Ok(out)
}

/// Corpus where a fraction of each label's pairs is only partially known:
/// those plaintexts keep their known bits and the remaining `w` positions
/// (chosen per observation) are enumerated via [`expand_partial`].
/// Verification pairs prefer fully known records, topping up from the
/// observations themselves (masked checking only) when fewer than
/// [`RESERVED_PER_LABEL`] records are fully known.
pub fn generate_partial_corpus(
    spec: &CipherSpec,
    num_keys: usize,
    pairs_per_key: usize,
    partial_fraction: f64,
    w: u32,
    w_max: u32,
    seed: u64,
) -> Result<(Vec<PcRecord>, CorpusManifest), CorpusError> {
    if !(0.0..=1.0).contains(&partial_fraction) {
        return Err(CorpusError::Config(format!(
            "partial_fraction must be within [0, 1], got {partial_fraction}"
        )));
    }
    if w > w_max {
        return Err(CorpusError::TooManyUnknownBits { w, w_max });
    }
    if w >= spec.block_bits {
        return Err(CorpusError::Config(format!(
            "w = {w} leaves no known bits in a {}-bit block",
            spec.block_bits
        )));
    }
    let (base, mut manifest) = generate_corpus(spec, num_keys, pairs_per_key, seed)?;
    let num_partial = (pairs_per_key as f64 * partial_fraction).round() as usize;
    let num_full = pairs_per_key - num_partial;

    // Positions rng is separate from the corpus rng only through the stream
    // position; reseed for clarity.
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x70ac_71a1);
    let mut records = Vec::new();
    let mut reserved = Vec::new();
    let mut group = 0u32;
    for (label_idx, chunk) in base.chunks(pairs_per_key).enumerate() {
        let label = KeyLabel(label_idx as u32);
        let mut label_reserved = Vec::new();
        for (i, rec) in chunk.iter().enumerate() {
            if i < num_full {
                let full = PcRecord { group, ..*rec };
                if label_reserved.len() < RESERVED_PER_LABEL {
                    label_reserved.push(ReservedPair {
                        group,
                        known_bits: full.p.0,
                        mask: spec.block_mask(),
                        c: full.c.0,
                    });
                }
                records.push(full);
                group += 1;
            } else {
                let mut obs_mask = spec.block_mask();
                let mut dropped = 0;
                while dropped < w {
                    let pos = rng.gen_range(0..spec.block_bits);
                    if obs_mask >> pos & 1 == 1 {
                        obs_mask &= !(1 << pos);
                        dropped += 1;
                    }
                }
                let obs = PartialObservation {
                    c: rec.c,
                    known_bits: Block(rec.p.0 & obs_mask),
                    mask: Block(obs_mask),
                    s: label,
                };
                if label_reserved.len() < RESERVED_PER_LABEL {
                    label_reserved.push(ReservedPair {
                        group,
                        known_bits: obs.known_bits.0,
                        mask: obs_mask,
                        c: obs.c.0,
                    });
                }
                records.extend(expand_partial(spec, &obs, w_max, group)?);
                group += 1;
            }
        }
        reserved.push((label, label_reserved));
    }
    manifest.reserved = reserved;
    Ok((records, manifest))
}

/// Multiplicative hasher for block values; the default SipHash costs more
/// than a scaled cipher call in the lookup-heavy loops.
#[derive(Default)]
pub struct BlockHash(u64);

impl Hasher for BlockHash {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, _bytes: &[u8]) {
        unreachable!("table keys are u64 values");
    }

    #[inline]
    fn write_u64(&mut self, x: u64) {
        let mut z = x.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z ^= z >> 29;
        z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        self.0 = z ^ (z >> 32);
    }
}

type BlockHashBuilder = BuildHasherDefault<BlockHash>;

/// One match returned by a Table-1 lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableOneEntry {
    pub c: u64,
    pub s: KeyLabel,
    pub from_partial: bool,
    pub group: u32,
}

/// The attack's shared lookup structure: every record indexed by plaintext.
/// Immutable after build; duplicate plaintexts keep all their entries in
/// record order.
pub struct TableOne {
    map: HashMap<u64, Vec<TableOneEntry>, BlockHashBuilder>,
    n_total: usize,
}

impl TableOne {
    pub fn lookup(&self, p: u64) -> &[TableOneEntry] {
        self.map.get(&p).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.n_total
    }

    pub fn is_empty(&self) -> bool {
        self.n_total == 0
    }
}

/// Builds Table 1 from the record list in expected O(n).
pub fn build_table1(records: &[PcRecord]) -> TableOne {
    let mut map: HashMap<u64, Vec<TableOneEntry>, BlockHashBuilder> =
        HashMap::with_capacity_and_hasher(records.len(), BlockHashBuilder::default());
    for rec in records {
        map.entry(rec.p.0).or_default().push(TableOneEntry {
            c: rec.c.0,
            s: rec.s,
            from_partial: rec.from_partial,
            group: rec.group,
        });
    }
    TableOne { map, n_total: records.len() }
}

/// Number of unknown bits of an observation under `spec`.
pub fn unknown_bits(spec: &CipherSpec, obs: &PartialObservation) -> u32 {
    (!obs.mask.0 & mask(spec.block_bits)).count_ones()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> CipherSpec {
        CipherSpec::toy()
    }

    #[test]
    fn corpus_counts_single_key() {
        let (records, manifest) = generate_corpus(&toy(), 1, 8, 7).unwrap();
        assert_eq!(records.len(), 8);
        assert!(records.iter().all(|r| r.s == KeyLabel(0)));
        assert_eq!(manifest.keys.len(), 1);
        assert_eq!(manifest.genuine_pairs, 8);
        assert_eq!(manifest.reserved_of(KeyLabel(0)).unwrap().len(), RESERVED_PER_LABEL);
    }

    #[test]
    fn corpus_counts_multi_key() {
        let (records, manifest) = generate_corpus(&toy(), 4, 8, 7).unwrap();
        assert_eq!(records.len(), 32);
        for l in 0..4 {
            assert_eq!(records.iter().filter(|r| r.s == KeyLabel(l)).count(), 8);
        }
        assert_eq!(manifest.keys.len(), 4);
        let mut keys: Vec<_> = manifest.keys.iter().map(|(_, k)| *k).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 4, "generating keys must be distinct");
    }

    #[test]
    fn records_verify_under_held_keys() {
        let spec = toy();
        let (records, manifest) = generate_corpus(&spec, 3, 6, 99).unwrap();
        for rec in &records {
            let kk = manifest.key_of(rec.s).unwrap();
            assert_eq!(spec.tdea2_encrypt(kk, rec.p).unwrap(), rec.c);
            assert!(!rec.from_partial);
        }
    }

    #[test]
    fn corpus_is_reproducible() {
        let (a, ma) = generate_corpus(&toy(), 2, 5, 1234).unwrap();
        let (b, mb) = generate_corpus(&toy(), 2, 5, 1234).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma.keys, mb.keys);
        let (c, _) = generate_corpus(&toy(), 2, 5, 1235).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_pairs_is_a_config_error() {
        assert!(matches!(generate_corpus(&toy(), 1, 2, 0), Err(CorpusError::Config(_))));
        assert!(matches!(generate_corpus(&toy(), 0, 8, 0), Err(CorpusError::Config(_))));
    }

    #[test]
    fn expand_with_full_mask_returns_the_pair_itself() {
        let spec = toy();
        let obs = PartialObservation {
            c: Block(0x12345),
            known_bits: Block(0x54321),
            mask: Block(spec.block_mask()),
            s: KeyLabel(0),
        };
        let recs = expand_partial(&spec, &obs, 16, 9).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].p, Block(0x54321));
        assert_eq!(recs[0].c, Block(0x12345));
        assert!(recs[0].from_partial);
    }

    #[test]
    fn expand_w13_yields_8192_pairs() {
        let spec = toy();
        let obs_mask = spec.block_mask() & !((1u64 << 13) - 1);
        let obs = PartialObservation {
            c: Block(0xabcde),
            known_bits: Block(0x80000 & obs_mask),
            mask: Block(obs_mask),
            s: KeyLabel(1),
        };
        let recs = expand_partial(&spec, &obs, 16, 0).unwrap();
        assert_eq!(recs.len(), 8192);
        let mut plaintexts: Vec<u64> = recs.iter().map(|r| r.p.0).collect();
        plaintexts.sort_unstable();
        plaintexts.dedup();
        assert_eq!(plaintexts.len(), 8192, "completions must be distinct");
        assert!(recs.iter().all(|r| r.c == obs.c && r.s == obs.s && r.from_partial));
    }

    #[test]
    fn expand_contains_exactly_one_true_plaintext() {
        let spec = toy();
        let kk = TwoKey::new(0x9a1, 0x37f);
        let p_true = Block(0x4_f00d & spec.block_mask());
        let c = spec.tdea2_encrypt(kk, p_true).unwrap();
        let obs_mask = spec.block_mask() & !0b1111_0110; // w = 6
        let obs = PartialObservation {
            c,
            known_bits: Block(p_true.0 & obs_mask),
            mask: Block(obs_mask),
            s: KeyLabel(0),
        };
        let recs = expand_partial(&spec, &obs, 16, 0).unwrap();
        assert_eq!(recs.len(), 64);
        let trues = recs
            .iter()
            .filter(|r| spec.tdea2_encrypt(kk, r.p).unwrap() == r.c)
            .count();
        assert_eq!(trues, 1);
        assert_eq!(recs.iter().filter(|r| r.p == p_true).count(), 1);
    }

    #[test]
    fn expand_refuses_oversized_w() {
        let spec = toy();
        let obs = PartialObservation {
            c: Block(1),
            known_bits: Block(0),
            mask: Block(0), // every bit unknown: w = 20
            s: KeyLabel(0),
        };
        assert!(matches!(
            expand_partial(&spec, &obs, 16, 0),
            Err(CorpusError::TooManyUnknownBits { w: 20, w_max: 16 })
        ));
    }

    #[test]
    fn table1_lookup_matches_linear_scan() {
        let spec = toy();
        let (mut records, _) = generate_corpus(&spec, 3, 50, 2024).unwrap();
        // Plant a duplicate plaintext under a different label.
        let dup = PcRecord {
            p: records[0].p,
            c: Block(0xfffff),
            s: KeyLabel(2),
            from_partial: false,
            group: 9999,
        };
        records.push(dup);
        let table = build_table1(&records);
        assert_eq!(table.len(), records.len());

        let mut queries: Vec<u64> = records.iter().map(|r| r.p.0).collect();
        queries.extend(0..64u64); // mostly absent plaintexts
        for q in queries {
            let expected: Vec<TableOneEntry> = records
                .iter()
                .filter(|r| r.p.0 == q)
                .map(|r| TableOneEntry { c: r.c.0, s: r.s, from_partial: r.from_partial, group: r.group })
                .collect();
            assert_eq!(table.lookup(q), expected.as_slice());
        }
    }

    #[test]
    fn table1_lookup_of_absent_plaintext_is_empty() {
        let (records, _) = generate_corpus(&toy(), 1, 4, 5).unwrap();
        let table = build_table1(&records);
        let absent = (0..1u64 << 20)
            .find(|p| records.iter().all(|r| r.p.0 != *p))
            .unwrap();
        assert!(table.lookup(absent).is_empty());
    }

    #[test]
    fn partial_corpus_shape_and_truth() {
        let spec = toy();
        let w = 4;
        let (records, manifest) =
            generate_partial_corpus(&spec, 1, 16, 0.5, w, DEFAULT_W_MAX, 11).unwrap();
        // 8 full + 8 observations of 2^4 completions each.
        assert_eq!(records.len(), 8 + 8 * 16);
        assert_eq!(manifest.genuine_pairs, 16);
        let kk = manifest.key_of(KeyLabel(0)).unwrap();
        let genuine = records
            .iter()
            .filter(|r| spec.tdea2_encrypt(kk, r.p).unwrap() == r.c)
            .count();
        assert_eq!(genuine, 16, "each observation hides exactly one true pair");
        // Reserved pairs come from the fully known half.
        for pair in manifest.reserved_of(KeyLabel(0)).unwrap() {
            assert_eq!(pair.mask, spec.block_mask());
        }
        // A fraction (1 - 2^-w) of expanded records is false.
        let expanded: Vec<_> = records.iter().filter(|r| r.from_partial).collect();
        let false_count =
            expanded.iter().filter(|r| spec.tdea2_encrypt(kk, r.p).unwrap() != r.c).count();
        assert_eq!(false_count, expanded.len() - 8);
    }

    #[test]
    fn all_partial_corpus_reserves_masked_pairs() {
        let spec = toy();
        let (_, manifest) =
            generate_partial_corpus(&spec, 1, 6, 1.0, 3, DEFAULT_W_MAX, 21).unwrap();
        let reserved = manifest.reserved_of(KeyLabel(0)).unwrap();
        assert_eq!(reserved.len(), RESERVED_PER_LABEL);
        assert!(reserved.iter().all(|r| r.mask != spec.block_mask()));
    }
}
