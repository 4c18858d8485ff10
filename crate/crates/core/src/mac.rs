//! The ANSI Retail MAC (ISO/IEC 9797-1 MAC algorithm 3) over the cipher
//! abstraction, and meet-in-the-middle key recovery against it.
//!
//! The MAC is a single-key CBC chain under K1 with a final decrypt-encrypt
//! under K2, so its last block is two-key triple encryption of the final
//! chaining value and the block attack carries over with the directions
//! inverted: the trial value plays d_{K1}(M), Table 2 is built with
//! encryptions e_i(a), and the outer scan uses e_j(a).

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::analysis;
use crate::aseq::ASequence;
use crate::cipher::{complement, Block, CipherError, CipherKey, CipherSpec, TwoKey};
use crate::corpus::KeyLabel;
use crate::engine::{
    drive_iterations, AttackConfig, AttackReport, EngineError, IterationOutcome, Recovered,
    TableTwo, TableTwoEntry,
};

#[derive(Debug, Error)]
pub enum MacError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("message of {q} blocks exceeds the configured bound 2^{r}")]
    TooLong { q: usize, r: u32 },
    #[error(transparent)]
    Cipher(#[from] CipherError),
}

/// A padded message of q b-bit blocks, q >= 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MacMessage {
    blocks: Vec<Block>,
}

impl MacMessage {
    pub fn new(blocks: Vec<Block>) -> Result<Self, MacError> {
        if blocks.is_empty() {
            return Err(MacError::Config("a message needs at least one block".into()));
        }
        Ok(MacMessage { blocks })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn q(&self) -> usize {
        self.blocks.len()
    }
}

/// Pads a raw byte string with a single 1 bit followed by zero bits up to
/// the next block boundary and splits it into b-bit blocks (injective).
/// Refuses messages longer than 2^max_blocks_log2 blocks.
pub fn pad_and_split(
    raw: &[u8],
    spec: &CipherSpec,
    max_blocks_log2: u32,
) -> Result<MacMessage, MacError> {
    let b = spec.block_bits as usize;
    let data_bits = raw.len() * 8 + 1;
    let q = data_bits.div_ceil(b);
    if max_blocks_log2 < 63 && q as u64 > 1u64 << max_blocks_log2 {
        return Err(MacError::TooLong { q, r: max_blocks_log2 });
    }
    let mut blocks = Vec::with_capacity(q);
    let mut acc = 0u64;
    let mut filled = 0;
    let mut push_bit = |blocks: &mut Vec<Block>, bit: u64| {
        acc = (acc << 1) | bit;
        filled += 1;
        if filled == b {
            blocks.push(Block(acc));
            acc = 0;
            filled = 0;
        }
    };
    for byte in raw {
        for i in (0..8).rev() {
            push_bit(&mut blocks, (byte >> i) as u64 & 1);
        }
    }
    push_bit(&mut blocks, 1);
    while blocks.len() < q {
        push_bit(&mut blocks, 0);
    }
    MacMessage::new(blocks)
}

/// Zero-padding variant kept for interoperability experiments. Not
/// injective: inputs differing only in trailing zero bytes collide.
pub fn zero_pad_and_split(
    raw: &[u8],
    spec: &CipherSpec,
    max_blocks_log2: u32,
) -> Result<MacMessage, MacError> {
    let b = spec.block_bits as usize;
    let data_bits = (raw.len() * 8).max(1);
    let q = data_bits.div_ceil(b);
    if max_blocks_log2 < 63 && q as u64 > 1u64 << max_blocks_log2 {
        return Err(MacError::TooLong { q, r: max_blocks_log2 });
    }
    let mut bits = Vec::with_capacity(q * b);
    for byte in raw {
        for i in (0..8).rev() {
            bits.push((byte >> i) & 1);
        }
    }
    bits.resize(q * b, 0);
    let blocks = bits
        .chunks(b)
        .map(|chunk| Block(chunk.iter().fold(0u64, |acc, &bit| (acc << 1) | bit as u64)))
        .collect();
    MacMessage::new(blocks)
}

/// The CBC chain H_q under a single key: H_1 = e_K(D_1),
/// H_l = e_K(D_l xor H_{l-1}). Costs exactly q cipher calls.
pub(crate) fn chain_raw(spec: &CipherSpec, k1: u64, blocks: &[Block]) -> u64 {
    chain_counted(spec, k1, blocks).0
}

fn chain_counted(spec: &CipherSpec, k1: u64, blocks: &[Block]) -> (u64, u64) {
    let mut h = 0u64;
    let mut ops = 0u64;
    for (i, d) in blocks.iter().enumerate() {
        let x = if i == 0 { d.0 } else { d.0 ^ h };
        h = spec.encrypt_raw(k1, x);
        ops += 1;
    }
    (h, ops)
}

pub(crate) fn retail_mac_raw(spec: &CipherSpec, k1: u64, k2: u64, blocks: &[Block]) -> u64 {
    let h_q = chain_raw(spec, k1, blocks);
    spec.encrypt_raw(k1, spec.decrypt_raw(k2, h_q))
}

/// M = e_{K1}(d_{K2}(H_q)), untruncated.
pub fn retail_mac(
    spec: &CipherSpec,
    kk: TwoKey,
    msg: &MacMessage,
) -> Result<Block, CipherError> {
    let k1 = spec.check_key(kk.k1)?;
    let k2 = spec.check_key(kk.k2)?;
    for block in &msg.blocks {
        spec.check_block(*block)?;
    }
    Ok(Block(retail_mac_raw(spec, k1, k2, &msg.blocks)))
}

/// One message/MAC record attributed to key label `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacRecord {
    pub msg: MacMessage,
    pub m: Block,
    pub s: KeyLabel,
    pub from_partial: bool,
    pub group: u32,
}

/// A genuine message/MAC pair reserved for candidate verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReservedMacPair {
    pub group: u32,
    pub msg: MacMessage,
    pub m: u64,
}

#[derive(Debug, Clone)]
pub struct MacManifest {
    pub spec: CipherSpec,
    pub seed: u64,
    /// Messages are bounded by 2^max_blocks_log2 blocks.
    pub max_blocks_log2: u32,
    pub keys: Vec<(KeyLabel, TwoKey)>,
    pub reserved: Vec<(KeyLabel, Vec<ReservedMacPair>)>,
    pub genuine_pairs: u64,
}

impl MacManifest {
    pub fn key_of(&self, label: KeyLabel) -> Option<TwoKey> {
        self.keys.iter().find(|(l, _)| *l == label).map(|(_, k)| *k)
    }

    pub fn reserved_of(&self, label: KeyLabel) -> Option<&[ReservedMacPair]> {
        self.reserved
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, pairs)| pairs.as_slice())
    }
}

/// Generates `num_keys * msgs_per_key` message/MAC records with distinct
/// random messages of 1..=2^max_blocks_log2 blocks per key. Deterministic
/// for a given seed; the first few messages of each label double as the
/// label's verification pairs.
pub fn generate_mac_corpus(
    spec: &CipherSpec,
    num_keys: usize,
    msgs_per_key: usize,
    max_blocks_log2: u32,
    seed: u64,
) -> Result<(Vec<MacRecord>, MacManifest), MacError> {
    if num_keys == 0 {
        return Err(MacError::Config("num_keys must be at least 1".into()));
    }
    if msgs_per_key < crate::corpus::MIN_PAIRS_PER_LABEL {
        return Err(MacError::Config(format!(
            "msgs_per_key must be at least {} so candidates can be verified, got {msgs_per_key}",
            crate::corpus::MIN_PAIRS_PER_LABEL
        )));
    }
    if max_blocks_log2 > 10 {
        return Err(MacError::Config(format!(
            "max_blocks_log2 = {max_blocks_log2} would allow unreasonably long messages"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let kmask = spec.key_mask();
    let bmask = spec.block_mask();
    let q_max = 1usize << max_blocks_log2;

    let mut keys = Vec::with_capacity(num_keys);
    let mut seen_keys = HashSet::new();
    while keys.len() < num_keys {
        let kk = TwoKey::new(rng.gen::<u64>() & kmask, rng.gen::<u64>() & kmask);
        if seen_keys.insert((kk.k1, kk.k2)) {
            keys.push(kk);
        }
    }

    let mut records = Vec::with_capacity(num_keys * msgs_per_key);
    let mut manifest_keys = Vec::with_capacity(num_keys);
    let mut reserved = Vec::with_capacity(num_keys);
    let mut group = 0u32;
    for (idx, kk) in keys.into_iter().enumerate() {
        let label = KeyLabel(idx as u32);
        manifest_keys.push((label, kk));
        let mut label_reserved = Vec::new();
        let mut seen_msgs = HashSet::new();
        while seen_msgs.len() < msgs_per_key {
            let q = rng.gen_range(1..=q_max);
            let blocks: Vec<Block> = (0..q).map(|_| Block(rng.gen::<u64>() & bmask)).collect();
            if !seen_msgs.insert(blocks.clone()) {
                continue;
            }
            let msg = MacMessage::new(blocks)?;
            let m = retail_mac(spec, kk, &msg)?;
            if label_reserved.len() < crate::corpus::RESERVED_PER_LABEL {
                label_reserved.push(ReservedMacPair { group, msg: msg.clone(), m: m.0 });
            }
            records.push(MacRecord { msg, m, s: label, from_partial: false, group });
            group += 1;
        }
        reserved.push((label, label_reserved));
    }
    let manifest = MacManifest {
        spec: *spec,
        seed,
        max_blocks_log2,
        keys: manifest_keys,
        reserved,
        genuine_pairs: (num_keys * msgs_per_key) as u64,
    };
    Ok((records, manifest))
}

/// A message whose MAC is known but some bits of one block are not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialMacObservation {
    pub blocks: Vec<Block>,
    pub block_index: usize,
    pub known_bits: Block,
    pub mask: Block,
    pub m: Block,
    pub s: KeyLabel,
}

/// Expands a partially known message into the 2^w candidate records
/// covering every completion of the unknown bits; exactly one is genuine.
pub fn expand_partial_mac(
    spec: &CipherSpec,
    obs: &PartialMacObservation,
    w_max: u32,
    group: u32,
) -> Result<Vec<MacRecord>, MacError> {
    if obs.block_index >= obs.blocks.len() {
        return Err(MacError::Config("block_index out of range".into()));
    }
    let bmask = spec.block_mask();
    if obs.known_bits.0 & !obs.mask.0 != 0 {
        return Err(MacError::Config(
            "known_bits has value bits outside the known-position mask".into(),
        ));
    }
    let unknown = !obs.mask.0 & bmask;
    let w = unknown.count_ones();
    if w > w_max {
        return Err(MacError::Config(format!(
            "{w} unknown message bits exceed the configured maximum {w_max}"
        )));
    }
    let positions: Vec<u32> = (0..spec.block_bits).filter(|i| unknown >> i & 1 == 1).collect();
    let mut out = Vec::with_capacity(1usize << w);
    for mval in 0..(1u64 << w) {
        let mut block = obs.known_bits.0;
        for (bit, pos) in positions.iter().enumerate() {
            block |= ((mval >> bit) & 1) << pos;
        }
        let mut blocks = obs.blocks.clone();
        blocks[obs.block_index] = Block(block);
        out.push(MacRecord {
            msg: MacMessage::new(blocks)?,
            m: obs.m,
            s: obs.s,
            from_partial: true,
            group,
        });
    }
    Ok(out)
}

struct MacT1Record {
    blocks: Vec<Block>,
    s: KeyLabel,
    group: u32,
}

/// Records indexed by MAC value. Immutable after build.
pub struct MacTableOne {
    records: Vec<MacT1Record>,
    map: std::collections::HashMap<
        u64,
        Vec<u32>,
        std::hash::BuildHasherDefault<crate::corpus::BlockHash>,
    >,
}

impl MacTableOne {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn hits(&self, m: u64) -> &[u32] {
        self.map.get(&m).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Largest message length in blocks.
    pub fn max_q(&self) -> usize {
        self.records.iter().map(|r| r.blocks.len()).max().unwrap_or(0)
    }
}

pub fn build_mac_table1(records: &[MacRecord]) -> MacTableOne {
    let mut table = MacTableOne {
        records: Vec::with_capacity(records.len()),
        map: std::collections::HashMap::with_capacity_and_hasher(records.len(), Default::default()),
    };
    for rec in records {
        let idx = table.records.len() as u32;
        table.records.push(MacT1Record {
            blocks: rec.msg.blocks().to_vec(),
            s: rec.s,
            group: rec.group,
        });
        table.map.entry(rec.m.0).or_default().push(idx);
    }
    table
}

fn verify_mac_candidate(
    spec: &CipherSpec,
    kk: TwoKey,
    s: KeyLabel,
    manifest: &MacManifest,
    exclude_group: Option<u32>,
    check_pairs: usize,
    ops: &mut u64,
) -> Result<bool, EngineError> {
    let reserved = manifest.reserved_of(s).ok_or(EngineError::MissingReservedPairs(s.0))?;
    let mut used = 0;
    for pair in reserved.iter().filter(|p| Some(p.group) != exclude_group) {
        *ops += pair.msg.q() as u64 + 2;
        if retail_mac_raw(spec, kk.k1.0, kk.k2.0, pair.msg.blocks()) != pair.m {
            return Ok(false);
        }
        used += 1;
        if used == check_pairs {
            return Ok(true);
        }
    }
    Err(EngineError::MissingReservedPairs(s.0))
}

struct MacIteration<'a> {
    spec: &'a CipherSpec,
    t1: &'a MacTableOne,
    manifest: &'a MacManifest,
    use_complement: bool,
    check_pairs: usize,
}

impl MacIteration<'_> {
    /// Table 2 for the MAC attack: candidate inner keys are found through
    /// e_i(a) hits on the MAC column, and the stored middle value is the
    /// chain output H_q recomputed under the candidate. Flagged entries
    /// store the chain under the complemented key, scanned via the
    /// complemented lookup.
    fn build(&self, a: Block) -> (TableTwo, u64, u64, u64, u64) {
        let spec = self.spec;
        let mut ops = 0u64;
        let mut chain_ops = 0u64;
        let mut max_chain = 0u64;
        let mut violations = 0u64;
        let mut entries = Vec::new();
        let mut add = |entries: &mut Vec<TableTwoEntry>, key: u64, rec: &MacT1Record, f: bool| {
            let q = rec.blocks.len() as u64;
            let (h_q, spent) = chain_counted(spec, key, &rec.blocks);
            chain_ops += spent;
            max_chain = max_chain.max(spent);
            if spent > q + 1 {
                violations += 1;
            }
            entries.push(TableTwoEntry {
                b_val: h_q,
                i: CipherKey(key),
                s: rec.s,
                f,
                group: rec.group,
            });
        };
        for i in 0..=spec.key_mask() {
            let m_i = spec.encrypt_raw(i, a.0);
            ops += 1;
            for &idx in self.t1.hits(m_i) {
                add(&mut entries, i, &self.t1.records[idx as usize], false);
            }
            if self.use_complement {
                let i_bar = complement(i, spec.key_bits);
                for &idx in self.t1.hits(complement(m_i, spec.block_bits)) {
                    add(&mut entries, i_bar, &self.t1.records[idx as usize], true);
                }
            }
        }
        ops += chain_ops;
        (TableTwo::from_unsorted(entries), ops, chain_ops, max_chain, violations)
    }

    fn scan(&self, a: Block, t2: &TableTwo) -> Result<(u64, u64, Option<Recovered>), EngineError> {
        let spec = self.spec;
        let mut ops = 0u64;
        let mut tested = 0u64;
        for j in 0..=spec.key_mask() {
            let b_j = spec.encrypt_raw(j, a.0);
            ops += 1;
            for entry in t2.lookup(b_j).iter().filter(|e| !e.f) {
                let kk = TwoKey { k1: entry.i, k2: CipherKey(j) };
                tested += 1;
                if verify_mac_candidate(
                    spec, kk, entry.s, self.manifest, Some(entry.group), self.check_pairs,
                    &mut ops,
                )? {
                    return Ok((ops, tested, Some(Recovered { key: kk, label: entry.s })));
                }
            }
            if self.use_complement {
                let j_bar = complement(j, spec.key_bits);
                for entry in t2.lookup(complement(b_j, spec.block_bits)).iter().filter(|e| e.f) {
                    let kk = TwoKey { k1: entry.i, k2: CipherKey(j_bar) };
                    tested += 1;
                    if verify_mac_candidate(
                        spec, kk, entry.s, self.manifest, Some(entry.group), self.check_pairs,
                        &mut ops,
                    )? {
                        return Ok((ops, tested, Some(Recovered { key: kk, label: entry.s })));
                    }
                }
            }
        }
        Ok((ops, tested, None))
    }

    fn run(&self, a: Block) -> Result<IterationOutcome, EngineError> {
        let (t2, build_ops, chain_ops, max_chain, violations) = self.build(a);
        let (scan_ops, tested, success) = self.scan(a, &t2)?;
        Ok(IterationOutcome {
            a,
            table2_size: t2.len(),
            candidates_tested: tested,
            cipher_ops: build_ops + scan_ops,
            chain_ops,
            max_chain_ops_per_hit: max_chain,
            chain_budget_violations: violations,
            success,
        })
    }
}

fn validate_mac(config: &AttackConfig, manifest: &MacManifest) -> Result<(), EngineError> {
    if config.spec != manifest.spec {
        return Err(EngineError::SpecMismatch);
    }
    if config.variant.uses_complement() && !config.spec.has_complementation {
        return Err(EngineError::ComplementUnsupported);
    }
    if config.max_iterations == 0 {
        return Err(EngineError::Config("max_iterations must be at least 1".into()));
    }
    if config.check_pairs == 0 {
        return Err(EngineError::Config("check_pairs must be at least 1".into()));
    }
    for (label, pairs) in &manifest.reserved {
        if pairs.len() < config.check_pairs {
            return Err(EngineError::MissingReservedPairs(label.0));
        }
    }
    Ok(())
}

/// Runs one MAC-attack iteration at a planted trial value.
pub fn run_mac_iteration(
    a: Block,
    t1: &MacTableOne,
    manifest: &MacManifest,
    config: &AttackConfig,
) -> Result<IterationOutcome, EngineError> {
    let iter = MacIteration {
        spec: &config.spec,
        t1,
        manifest,
        use_complement: config.variant.uses_complement(),
        check_pairs: config.check_pairs,
    };
    iter.run(a)
}

/// The key-recovery attack against the Retail MAC. Verification always
/// compares the full MAC value (MACs are known exactly even when message
/// bits are not), so the verification policy setting has no effect here.
pub fn mac_attack(
    config: &AttackConfig,
    t1: &MacTableOne,
    manifest: &MacManifest,
) -> Result<AttackReport, EngineError> {
    validate_mac(config, manifest)?;
    let spec = config.spec;
    let seq = ASequence::new(spec.block_bits, config.a_seed);
    let max_iterations = config.max_iterations.min(seq.period());
    let start = Instant::now();

    let iter = MacIteration {
        spec: &spec,
        t1,
        manifest,
        use_complement: config.variant.uses_complement(),
        check_pairs: config.check_pairs,
    };
    let run = |idx: u64| iter.run(Block(seq.nth(idx)));
    let totals = if config.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| EngineError::Config(format!("thread pool: {e}")))?;
        pool.install(|| drive_iterations(max_iterations, config.threads, run))?
    } else {
        drive_iterations(max_iterations, 1, run)?
    };

    let prediction = analysis::predict_cost(&analysis::PredictParams {
        n: manifest.genuine_pairs,
        key_bits: spec.key_bits,
        block_bits: spec.block_bits,
        variant: config.variant,
        unknown_bits: 0,
        message_blocks_log2: manifest.max_blocks_log2,
    });

    Ok(AttackReport {
        spec,
        variant: config.variant,
        policy: config.policy,
        a_seed: config.a_seed,
        threads: config.threads,
        table1_entries: t1.len() as u64,
        genuine_pairs: manifest.genuine_pairs,
        max_iterations,
        iterations_used: totals.iterations_used,
        outcome: totals.success,
        total_cipher_ops: totals.total_cipher_ops,
        total_candidates_tested: totals.total_candidates,
        table2_sizes: totals.table2_sizes,
        total_chain_ops: totals.total_chain_ops,
        max_chain_ops_per_hit: totals.max_chain_ops_per_hit,
        chain_budget_violations: totals.chain_budget_violations,
        message_blocks_log2: Some(manifest.max_blocks_log2),
        predicted_iterations: prediction.expected_iterations,
        predicted_cipher_ops: prediction.expected_cipher_ops,
        predicted_table2_size: analysis::expected_table2_size(
            t1.len() as u64,
            &spec,
            config.variant.uses_complement(),
        ),
        elapsed: start.elapsed(),
    })
}
