//! The meet-in-the-middle attack loop against two-key triple encryption.
//!
//! Each iteration fixes a trial value `a` for the internal block e_{K1}(P),
//! builds a per-iteration table of candidate inner keys from Table-1 hits,
//! then scans the outer key space for matches. Key labels make corpora
//! generated under many keys usable at no extra cost; the complementation
//! flag lets one iteration test `a` and its bitwise complement at once;
//! mostly-false pairs from partial plaintext knowledge are weeded out by
//! candidate verification against reserved pairs.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis;
use crate::aseq::ASequence;
use crate::cipher::{complement, Block, CipherKey, CipherSpec, TwoKey};
use crate::corpus::{CorpusManifest, KeyLabel, TableOne};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("corpus and attack configuration use different cipher parameters")]
    SpecMismatch,
    #[error("complement variant requires a cipher with the complementation property")]
    ComplementUnsupported,
    #[error("label {0} does not have enough reserved pairs for verification")]
    MissingReservedPairs(u32),
    #[error("full-bit verification requires fully known reserved pairs (label {0})")]
    MaskedReservedPair(u32),
    #[error("attack configuration error: {0}")]
    Config(String),
}

/// Which enhancements of the attack are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Basic,
    MultiKey,
    Complement,
    Partial,
    ComplementPartial,
}

impl Variant {
    pub fn uses_complement(&self) -> bool {
        matches!(self, Variant::Complement | Variant::ComplementPartial)
    }

    pub fn uses_partial(&self) -> bool {
        matches!(self, Variant::Partial | Variant::ComplementPartial)
    }
}

/// How candidate keys are checked against reserved pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerificationPolicy {
    /// Re-encrypt the reserved plaintext and demand exact equality.
    FullBit,
    /// Decrypt the reserved ciphertext and compare only the known bits.
    MaskedBit,
}

#[derive(Debug, Clone, Copy)]
pub struct AttackConfig {
    pub spec: CipherSpec,
    pub variant: Variant,
    pub max_iterations: u64,
    pub a_seed: u64,
    pub threads: usize,
    pub policy: VerificationPolicy,
    /// Reserved pairs each candidate must reproduce. Two suffice unless
    /// 2^-2b is non-negligible for the chosen block width.
    pub check_pairs: usize,
}

impl AttackConfig {
    pub fn new(spec: CipherSpec, variant: Variant) -> Self {
        let period = ASequence::new(spec.block_bits, 0).period();
        AttackConfig {
            spec,
            variant,
            max_iterations: period,
            a_seed: 0,
            threads: 1,
            policy: VerificationPolicy::FullBit,
            check_pairs: 2,
        }
    }

    pub fn validate(&self, manifest: &CorpusManifest) -> Result<(), EngineError> {
        if self.spec != manifest.spec {
            return Err(EngineError::SpecMismatch);
        }
        if self.variant.uses_complement() && !self.spec.has_complementation {
            return Err(EngineError::ComplementUnsupported);
        }
        if self.max_iterations == 0 {
            return Err(EngineError::Config("max_iterations must be at least 1".into()));
        }
        if self.check_pairs == 0 {
            return Err(EngineError::Config("check_pairs must be at least 1".into()));
        }
        for (label, pairs) in &manifest.reserved {
            if pairs.len() < self.check_pairs {
                return Err(EngineError::MissingReservedPairs(label.0));
            }
        }
        Ok(())
    }
}

/// One entry of the per-iteration table: a middle value `b_val` together
/// with the inner-key candidate that produced it. Complemented entries
/// (f = 1) already store the complemented key, so the scan can use the
/// stored key directly. `group` identifies the Table-1 record behind the
/// entry so verification can avoid it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableTwoEntry {
    pub b_val: u64,
    pub i: CipherKey,
    pub s: KeyLabel,
    pub f: bool,
    pub group: u32,
}

/// Per-iteration multimap from middle values to candidate entries, rebuilt
/// for every trial value and discarded afterwards.
pub struct TableTwo {
    entries: Vec<TableTwoEntry>,
}

impl TableTwo {
    pub(crate) fn from_unsorted(mut entries: Vec<TableTwoEntry>) -> Self {
        entries.sort_by_key(|e| e.b_val);
        TableTwo { entries }
    }

    pub fn lookup(&self, b_val: u64) -> &[TableTwoEntry] {
        let lo = self.entries.partition_point(|e| e.b_val < b_val);
        let hi = self.entries.partition_point(|e| e.b_val <= b_val);
        &self.entries[lo..hi]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TableTwoEntry] {
        &self.entries
    }
}

/// The successful result of an iteration: a recovered key pair and the
/// label of the corpus subset it reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recovered {
    pub key: TwoKey,
    pub label: KeyLabel,
}

#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub a: Block,
    pub table2_size: usize,
    pub candidates_tested: u64,
    pub cipher_ops: u64,
    /// Cipher calls spent recomputing MAC chains (zero for block attacks).
    pub chain_ops: u64,
    pub max_chain_ops_per_hit: u64,
    /// Hits whose chain recomputation exceeded its q+1 budget.
    pub chain_budget_violations: u64,
    pub success: Option<Recovered>,
}

/// Builds Table 2 for the trial value `a`: for every inner key i, decrypt
/// `a`, look the result up among the known plaintexts, and record the
/// middle value d_i(c) for each hit. With the complement enhancement the
/// complemented plaintext is looked up as well and the entry stores the
/// complemented middle value d_{î}(c) under the complemented key, flagged
/// f = 1.
///
/// Returns the table and the number of cipher calls spent: exactly 2^k for
/// the trial decryptions plus one per table hit.
pub fn build_table2(
    a: Block,
    t1: &TableOne,
    spec: &CipherSpec,
    use_complement: bool,
    parallel: bool,
) -> (TableTwo, u64) {
    let key_count = spec.key_mask() as u128 + 1;
    let collect = |range: std::ops::Range<u64>| -> (Vec<TableTwoEntry>, u64) {
        let mut ops = 0u64;
        let mut entries = Vec::new();
        for i in range {
            let p_i = spec.decrypt_raw(i, a.0);
            ops += 1;
            for hit in t1.lookup(p_i) {
                ops += 1;
                entries.push(TableTwoEntry {
                    b_val: spec.decrypt_raw(i, hit.c),
                    i: CipherKey(i),
                    s: hit.s,
                    f: false,
                    group: hit.group,
                });
            }
            if use_complement {
                let i_bar = complement(i, spec.key_bits);
                for hit in t1.lookup(complement(p_i, spec.block_bits)) {
                    ops += 1;
                    entries.push(TableTwoEntry {
                        b_val: spec.decrypt_raw(i_bar, hit.c),
                        i: CipherKey(i_bar),
                        s: hit.s,
                        f: true,
                        group: hit.group,
                    });
                }
            }
        }
        (entries, ops)
    };

    let (entries, ops) = if parallel && key_count > 1 << 12 {
        let chunk = 1u64 << 12;
        let chunks: Vec<(u64, u64)> = (0..key_count as u64)
            .step_by(chunk as usize)
            .map(|lo| (lo, (lo + chunk).min(key_count as u64)))
            .collect();
        let parts: Vec<(Vec<TableTwoEntry>, u64)> =
            chunks.into_par_iter().map(|(lo, hi)| collect(lo..hi)).collect();
        let mut entries = Vec::new();
        let mut ops = 0;
        for (part, part_ops) in parts {
            entries.extend(part);
            ops += part_ops;
        }
        (entries, ops)
    } else {
        collect(0..key_count as u64)
    };
    (TableTwo::from_unsorted(entries), ops)
}

/// Checks a candidate key pair against `check_pairs` reserved pairs of its
/// label, skipping any pair originating from `exclude_group` (a candidate
/// always reproduces the pair it came from, so that pair has no power).
pub fn verify_candidate(
    spec: &CipherSpec,
    kk: TwoKey,
    s: KeyLabel,
    manifest: &CorpusManifest,
    policy: VerificationPolicy,
    exclude_group: Option<u32>,
    check_pairs: usize,
) -> Result<bool, EngineError> {
    let mut ops = 0;
    verify_with_ops(spec, kk, s, manifest, policy, exclude_group, check_pairs, &mut ops)
}

#[allow(clippy::too_many_arguments)]
fn verify_with_ops(
    spec: &CipherSpec,
    kk: TwoKey,
    s: KeyLabel,
    manifest: &CorpusManifest,
    policy: VerificationPolicy,
    exclude_group: Option<u32>,
    check_pairs: usize,
    ops: &mut u64,
) -> Result<bool, EngineError> {
    let reserved = manifest.reserved_of(s).ok_or(EngineError::MissingReservedPairs(s.0))?;
    let mut used = 0;
    for pair in reserved.iter().filter(|p| Some(p.group) != exclude_group) {
        match policy {
            VerificationPolicy::FullBit => {
                if pair.mask != spec.block_mask() {
                    return Err(EngineError::MaskedReservedPair(s.0));
                }
                *ops += 3;
                if spec.tdea2_encrypt_raw(kk.k1.0, kk.k2.0, pair.known_bits) != pair.c {
                    return Ok(false);
                }
            }
            VerificationPolicy::MaskedBit => {
                *ops += 3;
                let p = spec.tdea2_decrypt_raw(kk.k1.0, kk.k2.0, pair.c);
                if (p ^ pair.known_bits) & pair.mask != 0 {
                    return Ok(false);
                }
            }
        }
        used += 1;
        if used == check_pairs {
            return Ok(true);
        }
    }
    Err(EngineError::MissingReservedPairs(s.0))
}

/// Scans the outer key space against Table 2. For every key j the value
/// B_j = d_j(a) is looked up among the direct entries; with the complement
/// enhancement the complemented value is looked up among the f = 1 entries,
/// yielding the candidate (stored i, complement(j)). The first verified
/// candidate wins and the scan stops.
#[allow(clippy::too_many_arguments)]
pub fn scan_k2(
    a: Block,
    t2: &TableTwo,
    manifest: &CorpusManifest,
    spec: &CipherSpec,
    use_complement: bool,
    policy: VerificationPolicy,
    check_pairs: usize,
    parallel: bool,
) -> Result<IterationOutcome, EngineError> {
    let key_count = spec.key_mask() as u128 + 1;

    // Scans one key range; stops at its first verified candidate.
    type RangeScan = Result<(u64, u64, Option<Recovered>), EngineError>;
    let scan_range = |range: std::ops::Range<u64>| -> RangeScan {
        let mut ops = 0u64;
        let mut tested = 0u64;
        for j in range {
            let b_j = spec.decrypt_raw(j, a.0);
            ops += 1;
            for entry in t2.lookup(b_j).iter().filter(|e| !e.f) {
                let kk = TwoKey { k1: entry.i, k2: CipherKey(j) };
                tested += 1;
                if verify_with_ops(
                    spec, kk, entry.s, manifest, policy, Some(entry.group), check_pairs, &mut ops,
                )? {
                    return Ok((ops, tested, Some(Recovered { key: kk, label: entry.s })));
                }
            }
            if use_complement {
                let j_bar = complement(j, spec.key_bits);
                for entry in t2.lookup(complement(b_j, spec.block_bits)).iter().filter(|e| e.f) {
                    let kk = TwoKey { k1: entry.i, k2: CipherKey(j_bar) };
                    tested += 1;
                    if verify_with_ops(
                        spec, kk, entry.s, manifest, policy, Some(entry.group), check_pairs,
                        &mut ops,
                    )? {
                        return Ok((ops, tested, Some(Recovered { key: kk, label: entry.s })));
                    }
                }
            }
        }
        Ok((ops, tested, None))
    };

    let (ops, tested, success) = if parallel && key_count > 1 << 12 {
        let chunk = 1u64 << 12;
        let chunks: Vec<(u64, u64)> = (0..key_count as u64)
            .step_by(chunk as usize)
            .map(|lo| (lo, (lo + chunk).min(key_count as u64)))
            .collect();
        let parts: Vec<RangeScan> =
            chunks.into_par_iter().map(|(lo, hi)| scan_range(lo..hi)).collect();
        let mut ops = 0;
        let mut tested = 0;
        let mut success = None;
        // Chunks are reduced in key order, so the first success seen is the
        // one the sequential scan would have stopped at.
        for part in parts {
            let (part_ops, part_tested, part_success) = part?;
            ops += part_ops;
            tested += part_tested;
            if success.is_none() {
                success = part_success;
            }
        }
        (ops, tested, success)
    } else {
        scan_range(0..key_count as u64)?
    };

    Ok(IterationOutcome {
        a,
        table2_size: t2.len(),
        candidates_tested: tested,
        cipher_ops: ops,
        chain_ops: 0,
        max_chain_ops_per_hit: 0,
        chain_budget_violations: 0,
        success,
    })
}

/// Runs one complete iteration (table build plus scan) at the given trial
/// value. Exposed for planted-value tests and single-iteration experiments;
/// `parallel` engages key-range partitioning inside the iteration.
pub fn run_iteration(
    a: Block,
    t1: &TableOne,
    manifest: &CorpusManifest,
    config: &AttackConfig,
    parallel: bool,
) -> Result<IterationOutcome, EngineError> {
    let use_complement = config.variant.uses_complement();
    let (t2, build_ops) = build_table2(a, t1, &config.spec, use_complement, parallel);
    let mut outcome = scan_k2(
        a,
        &t2,
        manifest,
        &config.spec,
        use_complement,
        config.policy,
        config.check_pairs,
        parallel,
    )?;
    outcome.cipher_ops += build_ops;
    Ok(outcome)
}

/// Attack report: what was recovered, the exact work spent, and the
/// analytic predictions for comparison. `elapsed` is informational only and
/// deliberately kept out of the serialized report.
#[derive(Debug, Clone)]
pub struct AttackReport {
    pub spec: CipherSpec,
    pub variant: Variant,
    pub policy: VerificationPolicy,
    pub a_seed: u64,
    pub threads: usize,
    pub table1_entries: u64,
    pub genuine_pairs: u64,
    pub max_iterations: u64,
    pub iterations_used: u64,
    pub outcome: Option<Recovered>,
    pub total_cipher_ops: u64,
    pub total_candidates_tested: u64,
    pub table2_sizes: Vec<u32>,
    pub total_chain_ops: u64,
    pub max_chain_ops_per_hit: u64,
    pub chain_budget_violations: u64,
    /// Message-length bound log2(q_max) for MAC attacks; absent otherwise.
    pub message_blocks_log2: Option<u32>,
    pub predicted_iterations: f64,
    pub predicted_cipher_ops: f64,
    pub predicted_table2_size: f64,
    pub elapsed: Duration,
}

impl AttackReport {
    pub fn table2_mean(&self) -> f64 {
        if self.table2_sizes.is_empty() {
            0.0
        } else {
            self.table2_sizes.iter().map(|&s| s as f64).sum::<f64>()
                / self.table2_sizes.len() as f64
        }
    }

    pub fn table2_max(&self) -> u32 {
        self.table2_sizes.iter().copied().max().unwrap_or(0)
    }
}

pub(crate) struct RunTotals {
    pub iterations_used: u64,
    pub total_cipher_ops: u64,
    pub total_candidates: u64,
    pub table2_sizes: Vec<u32>,
    pub total_chain_ops: u64,
    pub max_chain_ops_per_hit: u64,
    pub chain_budget_violations: u64,
    pub success: Option<Recovered>,
}

/// Shared iteration driver. Single-threaded mode evaluates trial values in
/// sequence order; multi-threaded mode evaluates fixed-size chunks of the
/// same order in parallel and keeps the lowest-index success, so both modes
/// recover the same key after the same number of iterations. Work counters
/// cover iterations up to and including the successful one.
pub(crate) fn drive_iterations<F>(
    max_iterations: u64,
    threads: usize,
    run: F,
) -> Result<RunTotals, EngineError>
where
    F: Fn(u64) -> Result<IterationOutcome, EngineError> + Sync,
{
    let mut totals = RunTotals {
        iterations_used: 0,
        total_cipher_ops: 0,
        total_candidates: 0,
        table2_sizes: Vec::new(),
        total_chain_ops: 0,
        max_chain_ops_per_hit: 0,
        chain_budget_violations: 0,
        success: None,
    };
    let mut absorb = |idx: u64, outcome: IterationOutcome| -> bool {
        totals.iterations_used = idx + 1;
        totals.total_cipher_ops += outcome.cipher_ops;
        totals.total_candidates += outcome.candidates_tested;
        totals.table2_sizes.push(outcome.table2_size as u32);
        totals.total_chain_ops += outcome.chain_ops;
        totals.max_chain_ops_per_hit = totals.max_chain_ops_per_hit.max(outcome.max_chain_ops_per_hit);
        totals.chain_budget_violations += outcome.chain_budget_violations;
        if let Some(found) = outcome.success {
            totals.success = Some(found);
            true
        } else {
            false
        }
    };

    if threads <= 1 {
        for idx in 0..max_iterations {
            if absorb(idx, run(idx)?) {
                break;
            }
        }
    } else {
        let chunk = (threads as u64) * 4;
        let mut base = 0;
        'outer: while base < max_iterations {
            let hi = (base + chunk).min(max_iterations);
            let outcomes: Vec<Result<IterationOutcome, EngineError>> =
                (base..hi).into_par_iter().map(&run).collect();
            for (off, outcome) in outcomes.into_iter().enumerate() {
                if absorb(base + off as u64, outcome?) {
                    break 'outer;
                }
            }
            base = hi;
        }
    }
    Ok(totals)
}

/// Runs the attack: iterates trial values from the seeded full-period
/// sequence, stopping at the first verified candidate key. Exhausting
/// `max_iterations` is reported, not an error.
pub fn attack(
    config: &AttackConfig,
    t1: &TableOne,
    manifest: &CorpusManifest,
) -> Result<AttackReport, EngineError> {
    config.validate(manifest)?;
    let spec = config.spec;
    let seq = ASequence::new(spec.block_bits, config.a_seed);
    let max_iterations = config.max_iterations.min(seq.period());
    let start = Instant::now();

    let run = |idx: u64| run_iteration(Block(seq.nth(idx)), t1, manifest, config, false);
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
        message_blocks_log2: 0,
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
        message_blocks_log2: None,
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
