//! Analytic cost prediction, the exhaustive ground-truth oracle for toy
//! parameters, and the statistical experiment harness comparing observed
//! attack behaviour against the predictions.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::cipher::{CipherSpec, TwoKey};
use crate::corpus::{build_table1, generate_corpus, generate_partial_corpus, CorpusError, PcRecord};
use crate::engine::{attack, AttackConfig, EngineError, Variant, VerificationPolicy};
use crate::mac::{build_mac_table1, generate_mac_corpus, mac_attack, MacError, MacRecord};

/// Hard cap on oracle key width: 2^28 key pairs keep ground-truth runs in
/// the sub-minute range.
pub const ORACLE_MAX_DOUBLE_KEY_BITS: u32 = 28;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(
        "brute-force oracle is limited to 2*key_bits <= {ORACLE_MAX_DOUBLE_KEY_BITS}, got {0} key bits"
    )]
    OracleInfeasible(u32),
    #[error("the oracle needs at least two records to be meaningful")]
    OracleNeedsRecords,
    #[error("experiment configuration error: {0}")]
    Config(String),
    #[error("trial {trial}: recovered key is not in the oracle's consistent set")]
    OracleMismatch { trial: u32 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Mac(#[from] MacError),
}

#[derive(Debug, Clone, Copy)]
pub struct PredictParams {
    /// Number of genuine pairs (observations), not expanded table entries.
    pub n: u64,
    pub key_bits: u32,
    pub block_bits: u32,
    pub variant: Variant,
    /// Unknown plaintext bits per observation (partial variants).
    pub unknown_bits: u32,
    /// log2 of the message-length bound (MAC attack storage).
    pub message_blocks_log2: u32,
}

/// Exact expected costs; every quantity is a real number computed from the
/// closed-form expectations, with powers of two kept exact.
#[derive(Debug, Clone)]
pub struct CostPrediction {
    pub variant: Variant,
    pub expected_iterations: f64,
    pub expected_cipher_ops: f64,
    pub expected_table2_size: f64,
    /// Table-1 entries: n, or n*2^w after partial expansion.
    pub table1_storage_entries: u128,
    /// Stored block payload: two blocks per entry, or the n*2^r message
    /// blocks bound for the MAC table.
    pub table1_storage_blocks: u128,
    pub table1_storage_bytes: u128,
    /// Set when the mostly-false expansion stops being negligible
    /// (n * 2^w approaching the inner key space).
    pub validity_warning: Option<String>,
}

fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

/// Expected per-iteration Table-2 size for a table of `entries` records:
/// only 2^k of the 2^b blocks are looked up, doubled when the complement
/// flag makes two lookups per key.
pub fn expected_table2_size(entries: u64, spec: &CipherSpec, use_complement: bool) -> f64 {
    let factor = if use_complement { 2.0 } else { 1.0 };
    entries as f64 * pow2(spec.key_bits as i32 - spec.block_bits as i32) * factor
}

/// Closed-form attack costs. Iterations halve under the complement variant;
/// partial knowledge multiplies storage by 2^w while leaving the iteration
/// count untouched; the MAC table stores whole messages.
pub fn predict_cost(params: &PredictParams) -> CostPrediction {
    let n = params.n.max(1);
    let b = params.block_bits as i32;
    let k = params.key_bits as i32;
    let w = params.unknown_bits;
    let r = params.message_blocks_log2;

    let expected_iterations = if params.variant.uses_complement() {
        pow2(b - 1) / n as f64
    } else {
        pow2(b) / n as f64
    };
    let expected_cipher_ops = expected_iterations * pow2(k + 1);

    let entries: u128 = if params.variant.uses_partial() {
        (n as u128) << w
    } else {
        n as u128
    };
    let is_mac = r > 0;
    let blocks: u128 = if is_mac { (n as u128) << r } else { entries * 2 };
    let block_bytes = (params.block_bits as u128).div_ceil(8);
    let expected_table2 = entries as f64 * pow2(k - b)
        * if params.variant.uses_complement() { 2.0 } else { 1.0 };

    let validity_warning = if params.variant.uses_partial() && k >= 8 && entries > 1u128 << (k - 8)
    {
        Some(format!(
            "n*2^w = {entries} is not far below the 2^{k} inner key space; \
             false-pair workload stops being negligible"
        ))
    } else {
        None
    };

    CostPrediction {
        variant: params.variant,
        expected_iterations,
        expected_cipher_ops,
        expected_table2_size: expected_table2,
        table1_storage_entries: entries,
        table1_storage_blocks: blocks,
        table1_storage_bytes: blocks * block_bytes,
        validity_warning,
    }
}

/// Exhaustively enumerates all 2^(2k) key pairs and returns every one that
/// is consistent with all given records, in key order. Ground truth for
/// acceptance checks; refuse anything beyond toy widths.
pub fn brute_force_oracle(
    spec: &CipherSpec,
    records: &[PcRecord],
) -> Result<Vec<TwoKey>, AnalysisError> {
    if 2 * spec.key_bits > ORACLE_MAX_DOUBLE_KEY_BITS {
        return Err(AnalysisError::OracleInfeasible(spec.key_bits));
    }
    if records.len() < 2 {
        return Err(AnalysisError::OracleNeedsRecords);
    }
    let kmask = spec.key_mask();
    let first = records[0];
    let rest = &records[1..];
    let per_k1: Vec<Vec<TwoKey>> = (0..=kmask)
        .into_par_iter()
        .map(|k1| {
            // tdea2(k1, k2, p0) == c0 is equivalent to d_k2(e_k1(p0)) ==
            // d_k1(c0); hoisting the k1 halves leaves one cipher call per
            // candidate pair.
            let x0 = spec.encrypt_raw(k1, first.p.0);
            let y0 = spec.decrypt_raw(k1, first.c.0);
            let mut found = Vec::new();
            for k2 in 0..=kmask {
                if spec.decrypt_raw(k2, x0) == y0
                    && rest
                        .iter()
                        .all(|r| spec.tdea2_encrypt_raw(k1, k2, r.p.0) == r.c.0)
                {
                    found.push(TwoKey::new(k1, k2));
                }
            }
            found
        })
        .collect();
    Ok(per_k1.into_iter().flatten().collect())
}

/// MAC-side ground truth: every key pair reproducing all message/MAC
/// records.
pub fn mac_brute_force_oracle(
    spec: &CipherSpec,
    records: &[MacRecord],
) -> Result<Vec<TwoKey>, AnalysisError> {
    if 2 * spec.key_bits > ORACLE_MAX_DOUBLE_KEY_BITS {
        return Err(AnalysisError::OracleInfeasible(spec.key_bits));
    }
    if records.len() < 2 {
        return Err(AnalysisError::OracleNeedsRecords);
    }
    let kmask = spec.key_mask();
    let first = &records[0];
    let rest = &records[1..];
    let per_k1: Vec<Vec<TwoKey>> = (0..=kmask)
        .into_par_iter()
        .map(|k1| {
            let h_q = crate::mac::chain_raw(spec, k1, first.msg.blocks());
            let y0 = spec.decrypt_raw(k1, first.m.0);
            let mut found = Vec::new();
            for k2 in 0..=kmask {
                if spec.decrypt_raw(k2, h_q) == y0
                    && rest.iter().all(|r| {
                        crate::mac::retail_mac_raw(spec, k1, k2, r.msg.blocks()) == r.m.0
                    })
                {
                    found.push(TwoKey::new(k1, k2));
                }
            }
            found
        })
        .collect();
    Ok(per_k1.into_iter().flatten().collect())
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub spec: CipherSpec,
    pub variant: Variant,
    pub policy: VerificationPolicy,
    pub trials: u32,
    pub base_seed: u64,
    pub num_keys: usize,
    pub pairs_per_key: usize,
    /// Fraction of each label's pairs that are only partially known.
    pub partial_fraction: f64,
    pub unknown_bits: u32,
    pub w_max: u32,
    /// Attack the Retail MAC instead of block encryption.
    pub mac: bool,
    pub max_blocks_log2: u32,
    pub check_pairs: usize,
    pub oracle_check: bool,
    pub threads: usize,
    pub max_iterations: u64,
}

impl ExperimentConfig {
    pub fn new(spec: CipherSpec, variant: Variant) -> Self {
        ExperimentConfig {
            spec,
            variant,
            policy: VerificationPolicy::FullBit,
            trials: 50,
            base_seed: 0,
            num_keys: 1,
            pairs_per_key: 256,
            partial_fraction: 0.0,
            unknown_bits: 0,
            w_max: crate::corpus::DEFAULT_W_MAX,
            mac: false,
            max_blocks_log2: 3,
            check_pairs: 2,
            oracle_check: true,
            threads: 1,
            max_iterations: u64::MAX,
        }
    }

    fn genuine_pairs(&self) -> u64 {
        (self.num_keys * self.pairs_per_key) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub trial: u32,
    pub iterations: u64,
    pub cipher_ops: u64,
    pub table1_entries: u64,
    pub max_chain_ops_per_hit: u64,
    pub chain_budget_violations: u64,
    pub success: bool,
    pub label: Option<u32>,
    pub oracle_confirmed: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub variant: Variant,
    pub trials: Vec<TrialResult>,
    pub successes: u32,
    pub empirical_mean_iterations: f64,
    pub empirical_median_iterations: f64,
    pub predicted_mean_iterations: f64,
    /// empirical mean / predicted mean.
    pub ratio: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub mean_cipher_ops: f64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}

fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn derive_seed(base: u64, trial: u32, salt: u64) -> u64 {
    let mut z = base ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt.rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn run_block_trial(config: &ExperimentConfig, trial: u32) -> Result<TrialResult, AnalysisError> {
    let corpus_seed = derive_seed(config.base_seed, trial, 1);
    let a_seed = derive_seed(config.base_seed, trial, 2);
    let (records, manifest) = if config.partial_fraction > 0.0 {
        generate_partial_corpus(
            &config.spec,
            config.num_keys,
            config.pairs_per_key,
            config.partial_fraction,
            config.unknown_bits,
            config.w_max,
            corpus_seed,
        )?
    } else {
        generate_corpus(&config.spec, config.num_keys, config.pairs_per_key, corpus_seed)?
    };
    let t1 = build_table1(&records);
    let attack_config = AttackConfig {
        spec: config.spec,
        variant: config.variant,
        max_iterations: config.max_iterations,
        a_seed,
        threads: 1,
        policy: config.policy,
        check_pairs: config.check_pairs,
    };
    let report = attack(&attack_config, &t1, &manifest)?;

    let mut oracle_confirmed = None;
    if let (Some(found), true) = (report.outcome, config.oracle_check) {
        let held = manifest
            .key_of(found.label)
            .ok_or_else(|| AnalysisError::Config("recovered label missing from manifest".into()))?;
        let genuine: Vec<PcRecord> = records
            .iter()
            .filter(|r| r.s == found.label && config.spec.tdea2_encrypt(held, r.p).unwrap() == r.c)
            .copied()
            .collect();
        let consistent = brute_force_oracle(&config.spec, &genuine)?;
        if !consistent.contains(&found.key) {
            return Err(AnalysisError::OracleMismatch { trial });
        }
        oracle_confirmed = Some(true);
    }
    Ok(TrialResult {
        trial,
        iterations: report.iterations_used,
        cipher_ops: report.total_cipher_ops,
        table1_entries: report.table1_entries,
        max_chain_ops_per_hit: report.max_chain_ops_per_hit,
        chain_budget_violations: report.chain_budget_violations,
        success: report.outcome.is_some(),
        label: report.outcome.map(|r| r.label.0),
        oracle_confirmed,
    })
}

fn run_mac_trial(config: &ExperimentConfig, trial: u32) -> Result<TrialResult, AnalysisError> {
    let corpus_seed = derive_seed(config.base_seed, trial, 3);
    let a_seed = derive_seed(config.base_seed, trial, 4);
    let (records, manifest) = generate_mac_corpus(
        &config.spec,
        config.num_keys,
        config.pairs_per_key,
        config.max_blocks_log2,
        corpus_seed,
    )?;
    let t1 = build_mac_table1(&records);
    let attack_config = AttackConfig {
        spec: config.spec,
        variant: config.variant,
        max_iterations: config.max_iterations,
        a_seed,
        threads: 1,
        policy: config.policy,
        check_pairs: config.check_pairs,
    };
    let report = mac_attack(&attack_config, &t1, &manifest)?;

    let mut oracle_confirmed = None;
    if let (Some(found), true) = (report.outcome, config.oracle_check) {
        let genuine: Vec<MacRecord> =
            records.iter().filter(|r| r.s == found.label).cloned().collect();
        let consistent = mac_brute_force_oracle(&config.spec, &genuine)?;
        if !consistent.contains(&found.key) {
            return Err(AnalysisError::OracleMismatch { trial });
        }
        oracle_confirmed = Some(true);
    }
    Ok(TrialResult {
        trial,
        iterations: report.iterations_used,
        cipher_ops: report.total_cipher_ops,
        table1_entries: report.table1_entries,
        max_chain_ops_per_hit: report.max_chain_ops_per_hit,
        chain_budget_violations: report.chain_budget_violations,
        success: report.outcome.is_some(),
        label: report.outcome.map(|r| r.label.0),
        oracle_confirmed,
    })
}

/// Runs `trials` independent attacks on freshly generated corpora (seeds
/// derived from the base seed) and compares iteration counts against the
/// prediction. Every recovered key is cross-checked against the exhaustive
/// oracle; a mismatch is a hard error. Trials run in parallel when
/// `threads > 1`; each trial's attack stays single-threaded so its counters
/// are exact.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, AnalysisError> {
    if config.trials == 0 {
        return Err(AnalysisError::Config("trials must be at least 1".into()));
    }
    if config.mac && config.partial_fraction > 0.0 {
        return Err(AnalysisError::Config(
            "partially known MAC messages are expanded at corpus build time; \
             partial_fraction only applies to block corpora"
                .into(),
        ));
    }
    let run_one = |trial: u32| {
        if config.mac {
            run_mac_trial(config, trial)
        } else {
            run_block_trial(config, trial)
        }
    };
    let trials: Vec<TrialResult> = if config.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| AnalysisError::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(run_one)
                .collect::<Result<Vec<_>, _>>()
        })?
    } else {
        (0..config.trials).map(run_one).collect::<Result<Vec<_>, _>>()?
    };

    let prediction = predict_cost(&PredictParams {
        n: config.genuine_pairs(),
        key_bits: config.spec.key_bits,
        block_bits: config.spec.block_bits,
        variant: config.variant,
        unknown_bits: config.unknown_bits,
        message_blocks_log2: if config.mac { config.max_blocks_log2 } else { 0 },
    });

    let iterations: Vec<f64> = trials.iter().map(|t| t.iterations as f64).collect();
    let successes = trials.iter().filter(|t| t.success).count() as u32;
    let m = mean(&iterations);
    let sd = sample_variance(&iterations).sqrt();
    // 95% interval on the mean; the per-trial distribution is geometric, so
    // this leans on the CLT across trials.
    let (ci_low, ci_high) = if iterations.len() >= 2 && sd > 0.0 {
        let t_crit = StudentsT::new(0.0, 1.0, (iterations.len() - 1) as f64)
            .map(|d| d.inverse_cdf(0.975))
            .unwrap_or(1.96);
        let half = t_crit * sd / (iterations.len() as f64).sqrt();
        (m - half, m + half)
    } else {
        (m, m)
    };

    Ok(ExperimentResult {
        variant: config.variant,
        successes,
        empirical_mean_iterations: m,
        empirical_median_iterations: median(&iterations),
        predicted_mean_iterations: prediction.expected_iterations,
        ratio: m / prediction.expected_iterations,
        ci95_low: ci_low,
        ci95_high: ci_high,
        mean_cipher_ops: mean(&trials.iter().map(|t| t.cipher_ops as f64).collect::<Vec<_>>()),
        trials,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct WelchTest {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub critical_value: f64,
    pub reject_equal_means: bool,
}

/// Welch's two-sample t-test at the 5% level (two-sided).
pub fn welch_test(xs: &[f64], ys: &[f64]) -> WelchTest {
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (vx, vy) = (sample_variance(xs), sample_variance(ys));
    let se2 = vx / nx + vy / ny;
    let t_statistic = if se2 > 0.0 {
        (mean(xs) - mean(ys)) / se2.sqrt()
    } else if mean(xs) == mean(ys) {
        0.0
    } else {
        f64::INFINITY
    };
    let df = if se2 > 0.0 && nx > 1.0 && ny > 1.0 {
        se2 * se2 / ((vx / nx).powi(2) / (nx - 1.0) + (vy / ny).powi(2) / (ny - 1.0))
    } else {
        (nx + ny - 2.0).max(1.0)
    };
    let critical_value = StudentsT::new(0.0, 1.0, df)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.96);
    WelchTest {
        t_statistic,
        degrees_of_freedom: df,
        critical_value,
        reject_equal_means: t_statistic.abs() > critical_value,
    }
}

/// Per-trial iteration counts as CSV for external plotting.
pub fn experiment_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("trial,iterations,cipher_ops,success,label\n");
    for t in &result.trials {
        let label = t.label.map(|l| l.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            t.trial, t.iterations, t.cipher_ops, t.success, label
        ));
    }
    out
}
