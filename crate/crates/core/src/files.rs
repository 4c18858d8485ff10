//! On-disk formats: line-oriented corpus files, TOML manifests carrying the
//! experiment ground truth, and machine-parseable attack/experiment
//! reports. Keys and blocks are hex encoded at the width implied by the
//! cipher parameters. Report files contain no wall-clock data, so a rerun
//! with the same seeds is byte-identical.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{ExperimentResult, TrialResult};
use crate::cipher::{Block, CipherKey, CipherSpec, TwoKey};
use crate::corpus::{CorpusManifest, KeyLabel, PcRecord, ReservedPair};
use crate::engine::{AttackReport, Recovered, Variant, VerificationPolicy};
use crate::mac::{MacManifest, MacMessage, MacRecord, ReservedMacPair};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Format(String),
}

fn hex_width(bits: u32) -> usize {
    bits.div_ceil(4) as usize
}

pub fn hex_value(value: u64, bits: u32) -> String {
    format!("{:0width$x}", value, width = hex_width(bits))
}

fn parse_hex(field: &str, bits: u32, what: &str, line: usize) -> Result<u64, FileError> {
    let value = u64::from_str_radix(field, 16).map_err(|_| FileError::Parse {
        line,
        msg: format!("{what} is not valid hex: {field:?}"),
    })?;
    if value > crate::cipher::mask(bits) {
        return Err(FileError::Parse {
            line,
            msg: format!("{what} {field:?} does not fit in {bits} bits"),
        });
    }
    Ok(value)
}

fn parse_flag(field: &str, line: usize) -> Result<bool, FileError> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(FileError::Parse {
            line,
            msg: format!("partial flag must be 0 or 1, got {other:?}"),
        }),
    }
}

// ---------------------------------------------------------------------------
// Corpus: one record per line, `hex(p) hex(c) label flag`.
// ---------------------------------------------------------------------------

pub fn corpus_to_string(records: &[PcRecord], spec: &CipherSpec) -> String {
    let mut out = String::with_capacity(records.len() * 16);
    out.push_str("# plaintext ciphertext label partial\n");
    for r in records {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            hex_value(r.p.0, spec.block_bits),
            hex_value(r.c.0, spec.block_bits),
            r.s.0,
            r.from_partial as u8
        );
    }
    out
}

/// Parses a corpus file. Group identity is not stored on disk; it is
/// reconstructed from adjacency: every fully known record is its own group
/// and a consecutive run of partial records with the same ciphertext and
/// label is one expansion group (distinct observations cannot share a
/// ciphertext under one key, so runs are unambiguous for generated files).
pub fn corpus_from_str(input: &str, spec: &CipherSpec) -> Result<Vec<PcRecord>, FileError> {
    let mut records: Vec<PcRecord> = Vec::new();
    let mut group = 0u32;
    let mut next_group = 0u32;
    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(FileError::Parse {
                line,
                msg: format!("expected 4 fields (plaintext ciphertext label flag), got {}", fields.len()),
            });
        }
        let p = parse_hex(fields[0], spec.block_bits, "plaintext", line)?;
        let c = parse_hex(fields[1], spec.block_bits, "ciphertext", line)?;
        let s: u32 = fields[2].parse().map_err(|_| FileError::Parse {
            line,
            msg: format!("label is not a decimal integer: {:?}", fields[2]),
        })?;
        let from_partial = parse_flag(fields[3], line)?;

        let same_run = from_partial
            && records.last().is_some_and(|prev: &PcRecord| {
                prev.from_partial && prev.c.0 == c && prev.s.0 == s
            });
        if !same_run {
            group = next_group;
            next_group += 1;
        }
        records.push(PcRecord {
            p: Block(p),
            c: Block(c),
            s: KeyLabel(s),
            from_partial,
            group,
        });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Manifest (TOML): ground truth for experiments.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    seed: u64,
    genuine_pairs: u64,
    spec: CipherSpec,
    labels: Vec<ManifestLabel>,
}

#[derive(Serialize, Deserialize)]
struct ManifestLabel {
    label: u32,
    k1: String,
    k2: String,
    reserved: Vec<ManifestReserved>,
}

#[derive(Serialize, Deserialize)]
struct ManifestReserved {
    group: u32,
    known: String,
    mask: String,
    c: String,
}

const MANIFEST_HEADER: &str =
    "# Experiment ground truth: generating keys and reserved verification pairs.\n\
     # Not available to an attacker; keep alongside the corpus for result checking.\n";

pub fn manifest_to_string(manifest: &CorpusManifest) -> String {
    let spec = &manifest.spec;
    let file = ManifestFile {
        seed: manifest.seed,
        genuine_pairs: manifest.genuine_pairs,
        spec: *spec,
        labels: manifest
            .keys
            .iter()
            .map(|(label, kk)| ManifestLabel {
                label: label.0,
                k1: hex_value(kk.k1.0, spec.key_bits),
                k2: hex_value(kk.k2.0, spec.key_bits),
                reserved: manifest
                    .reserved_of(*label)
                    .unwrap_or(&[])
                    .iter()
                    .map(|r| ManifestReserved {
                        group: r.group,
                        known: hex_value(r.known_bits, spec.block_bits),
                        mask: hex_value(r.mask, spec.block_bits),
                        c: hex_value(r.c, spec.block_bits),
                    })
                    .collect(),
            })
            .collect(),
    };
    format!("{MANIFEST_HEADER}{}", toml::to_string(&file).expect("manifest serializes"))
}

pub fn manifest_from_str(input: &str) -> Result<CorpusManifest, FileError> {
    let file: ManifestFile =
        toml::from_str(input).map_err(|e| FileError::Format(format!("manifest: {e}")))?;
    let spec = file.spec;
    let mut keys = Vec::with_capacity(file.labels.len());
    let mut reserved = Vec::with_capacity(file.labels.len());
    for entry in &file.labels {
        let k1 = parse_hex(&entry.k1, spec.key_bits, "k1", 0)?;
        let k2 = parse_hex(&entry.k2, spec.key_bits, "k2", 0)?;
        keys.push((KeyLabel(entry.label), TwoKey::new(k1, k2)));
        let pairs = entry
            .reserved
            .iter()
            .map(|r| {
                Ok(ReservedPair {
                    group: r.group,
                    known_bits: parse_hex(&r.known, spec.block_bits, "known", 0)?,
                    mask: parse_hex(&r.mask, spec.block_bits, "mask", 0)?,
                    c: parse_hex(&r.c, spec.block_bits, "c", 0)?,
                })
            })
            .collect::<Result<Vec<_>, FileError>>()?;
        reserved.push((KeyLabel(entry.label), pairs));
    }
    Ok(CorpusManifest {
        spec,
        seed: file.seed,
        keys,
        reserved,
        genuine_pairs: file.genuine_pairs,
    })
}

// ---------------------------------------------------------------------------
// MAC corpus: `b1:b2:...:bq hex(mac) label flag` per line.
// ---------------------------------------------------------------------------

pub fn mac_corpus_to_string(records: &[MacRecord], spec: &CipherSpec) -> String {
    let mut out = String::new();
    out.push_str("# message-blocks mac label partial\n");
    for r in records {
        let blocks: Vec<String> =
            r.msg.blocks().iter().map(|b| hex_value(b.0, spec.block_bits)).collect();
        let _ = writeln!(
            out,
            "{} {} {} {}",
            blocks.join(":"),
            hex_value(r.m.0, spec.block_bits),
            r.s.0,
            r.from_partial as u8
        );
    }
    out
}

pub fn mac_corpus_from_str(
    input: &str,
    spec: &CipherSpec,
    max_blocks_log2: u32,
) -> Result<Vec<MacRecord>, FileError> {
    let mut records: Vec<MacRecord> = Vec::new();
    let q_bound = 1u64 << max_blocks_log2.min(63);
    let mut group = 0u32;
    let mut next_group = 0u32;
    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(FileError::Parse {
                line,
                msg: format!("expected 4 fields (blocks mac label flag), got {}", fields.len()),
            });
        }
        let blocks = fields[0]
            .split(':')
            .map(|b| parse_hex(b, spec.block_bits, "message block", line).map(Block))
            .collect::<Result<Vec<_>, _>>()?;
        if blocks.is_empty() || blocks.len() as u64 > q_bound {
            return Err(FileError::Parse {
                line,
                msg: format!(
                    "message must have between 1 and {q_bound} blocks, got {}",
                    blocks.len()
                ),
            });
        }
        let m = parse_hex(fields[1], spec.block_bits, "mac", line)?;
        let s: u32 = fields[2].parse().map_err(|_| FileError::Parse {
            line,
            msg: format!("label is not a decimal integer: {:?}", fields[2]),
        })?;
        let from_partial = parse_flag(fields[3], line)?;
        let same_run = from_partial
            && records.last().is_some_and(|prev: &MacRecord| {
                prev.from_partial && prev.m.0 == m && prev.s.0 == s
            });
        if !same_run {
            group = next_group;
            next_group += 1;
        }
        records.push(MacRecord {
            msg: MacMessage::new(blocks)
                .map_err(|e| FileError::Parse { line, msg: e.to_string() })?,
            m: Block(m),
            s: KeyLabel(s),
            from_partial,
            group,
        });
    }
    Ok(records)
}

#[derive(Serialize, Deserialize)]
struct MacManifestFile {
    seed: u64,
    genuine_pairs: u64,
    max_blocks_log2: u32,
    spec: CipherSpec,
    labels: Vec<MacManifestLabel>,
}

#[derive(Serialize, Deserialize)]
struct MacManifestLabel {
    label: u32,
    k1: String,
    k2: String,
    reserved: Vec<MacManifestReserved>,
}

#[derive(Serialize, Deserialize)]
struct MacManifestReserved {
    group: u32,
    blocks: String,
    m: String,
}

pub fn mac_manifest_to_string(manifest: &MacManifest) -> String {
    let spec = &manifest.spec;
    let file = MacManifestFile {
        seed: manifest.seed,
        genuine_pairs: manifest.genuine_pairs,
        max_blocks_log2: manifest.max_blocks_log2,
        spec: *spec,
        labels: manifest
            .keys
            .iter()
            .map(|(label, kk)| MacManifestLabel {
                label: label.0,
                k1: hex_value(kk.k1.0, spec.key_bits),
                k2: hex_value(kk.k2.0, spec.key_bits),
                reserved: manifest
                    .reserved_of(*label)
                    .unwrap_or(&[])
                    .iter()
                    .map(|r| MacManifestReserved {
                        group: r.group,
                        blocks: r
                            .msg
                            .blocks()
                            .iter()
                            .map(|b| hex_value(b.0, spec.block_bits))
                            .collect::<Vec<_>>()
                            .join(":"),
                        m: hex_value(r.m, spec.block_bits),
                    })
                    .collect(),
            })
            .collect(),
    };
    format!("{MANIFEST_HEADER}{}", toml::to_string(&file).expect("manifest serializes"))
}

pub fn mac_manifest_from_str(input: &str) -> Result<MacManifest, FileError> {
    let file: MacManifestFile =
        toml::from_str(input).map_err(|e| FileError::Format(format!("manifest: {e}")))?;
    let spec = file.spec;
    let mut keys = Vec::with_capacity(file.labels.len());
    let mut reserved = Vec::with_capacity(file.labels.len());
    for entry in &file.labels {
        let k1 = parse_hex(&entry.k1, spec.key_bits, "k1", 0)?;
        let k2 = parse_hex(&entry.k2, spec.key_bits, "k2", 0)?;
        keys.push((KeyLabel(entry.label), TwoKey::new(k1, k2)));
        let pairs = entry
            .reserved
            .iter()
            .map(|r| {
                let blocks = r
                    .blocks
                    .split(':')
                    .map(|b| parse_hex(b, spec.block_bits, "message block", 0).map(Block))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ReservedMacPair {
                    group: r.group,
                    msg: MacMessage::new(blocks)
                        .map_err(|e| FileError::Format(e.to_string()))?,
                    m: parse_hex(&r.m, spec.block_bits, "mac", 0)?,
                })
            })
            .collect::<Result<Vec<_>, FileError>>()?;
        reserved.push((KeyLabel(entry.label), pairs));
    }
    Ok(MacManifest {
        spec,
        seed: file.seed,
        max_blocks_log2: file.max_blocks_log2,
        keys,
        reserved,
        genuine_pairs: file.genuine_pairs,
    })
}

// ---------------------------------------------------------------------------
// Attack report (TOML).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredFile {
    pub k1: String,
    pub k2: String,
    pub label: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub kind: String,
    pub variant: Variant,
    pub policy: VerificationPolicy,
    pub a_seed: u64,
    pub threads: usize,
    pub table1_entries: u64,
    pub genuine_pairs: u64,
    pub max_iterations: u64,
    pub iterations_used: u64,
    pub total_cipher_ops: u64,
    pub total_candidates_tested: u64,
    pub total_chain_ops: u64,
    pub max_chain_ops_per_hit: u64,
    pub chain_budget_violations: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message_blocks_log2: Option<u32>,
    pub predicted_iterations: f64,
    pub predicted_cipher_ops: f64,
    pub predicted_table2_size: f64,
    pub table2_mean: f64,
    pub table2_max: u32,
    pub spec: CipherSpec,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub recovered: Option<RecoveredFile>,
    pub table2_sizes: Vec<u32>,
}

pub fn report_file(report: &AttackReport, kind: &str) -> ReportFile {
    let spec = &report.spec;
    ReportFile {
        kind: kind.to_string(),
        variant: report.variant,
        policy: report.policy,
        a_seed: report.a_seed,
        threads: report.threads,
        table1_entries: report.table1_entries,
        genuine_pairs: report.genuine_pairs,
        max_iterations: report.max_iterations,
        iterations_used: report.iterations_used,
        total_cipher_ops: report.total_cipher_ops,
        total_candidates_tested: report.total_candidates_tested,
        total_chain_ops: report.total_chain_ops,
        max_chain_ops_per_hit: report.max_chain_ops_per_hit,
        chain_budget_violations: report.chain_budget_violations,
        message_blocks_log2: report.message_blocks_log2,
        predicted_iterations: report.predicted_iterations,
        predicted_cipher_ops: report.predicted_cipher_ops,
        predicted_table2_size: report.predicted_table2_size,
        table2_mean: report.table2_mean(),
        table2_max: report.table2_max(),
        spec: *spec,
        recovered: report.outcome.map(|r| RecoveredFile {
            k1: hex_value(r.key.k1.0, spec.key_bits),
            k2: hex_value(r.key.k2.0, spec.key_bits),
            label: r.label.0,
        }),
        table2_sizes: report.table2_sizes.clone(),
    }
}

pub fn report_to_string(report: &AttackReport, kind: &str) -> String {
    toml::to_string(&report_file(report, kind)).expect("report serializes")
}

pub fn report_from_str(input: &str) -> Result<ReportFile, FileError> {
    toml::from_str(input).map_err(|e| FileError::Format(format!("report: {e}")))
}

/// Recovered key from a parsed report, for cross-checking.
pub fn recovered_from_file(file: &ReportFile) -> Result<Option<Recovered>, FileError> {
    file.recovered
        .as_ref()
        .map(|r| {
            Ok(Recovered {
                key: TwoKey {
                    k1: CipherKey(parse_hex(&r.k1, file.spec.key_bits, "k1", 0)?),
                    k2: CipherKey(parse_hex(&r.k2, file.spec.key_bits, "k2", 0)?),
                },
                label: KeyLabel(r.label),
            })
        })
        .transpose()
}

// ---------------------------------------------------------------------------
// Experiment result (TOML).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTrialFile {
    pub trial: u32,
    pub iterations: u64,
    pub cipher_ops: u64,
    pub table1_entries: u64,
    pub max_chain_ops_per_hit: u64,
    pub chain_budget_violations: u64,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oracle_confirmed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub variant: Variant,
    pub trials: u32,
    pub successes: u32,
    pub empirical_mean_iterations: f64,
    pub empirical_median_iterations: f64,
    pub predicted_mean_iterations: f64,
    pub ratio: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub mean_cipher_ops: f64,
    pub per_trial: Vec<ExperimentTrialFile>,
}

pub fn experiment_to_string(result: &ExperimentResult) -> String {
    let file = ExperimentFile {
        variant: result.variant,
        trials: result.trials.len() as u32,
        successes: result.successes,
        empirical_mean_iterations: result.empirical_mean_iterations,
        empirical_median_iterations: result.empirical_median_iterations,
        predicted_mean_iterations: result.predicted_mean_iterations,
        ratio: result.ratio,
        ci95_low: result.ci95_low,
        ci95_high: result.ci95_high,
        mean_cipher_ops: result.mean_cipher_ops,
        per_trial: result
            .trials
            .iter()
            .map(|t: &TrialResult| ExperimentTrialFile {
                trial: t.trial,
                iterations: t.iterations,
                cipher_ops: t.cipher_ops,
                table1_entries: t.table1_entries,
                max_chain_ops_per_hit: t.max_chain_ops_per_hit,
                chain_budget_violations: t.chain_budget_violations,
                success: t.success,
                label: t.label,
                oracle_confirmed: t.oracle_confirmed,
            })
            .collect(),
    };
    toml::to_string(&file).expect("experiment result serializes")
}

pub fn experiment_from_str(input: &str) -> Result<ExperimentFile, FileError> {
    toml::from_str(input).map_err(|e| FileError::Format(format!("experiment result: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, generate_partial_corpus};
    use crate::engine::{attack, AttackConfig};
    use crate::mac::generate_mac_corpus;

    #[test]
    fn corpus_round_trip_preserves_records_and_groups() {
        let spec = CipherSpec::toy();
        let (records, _) = generate_partial_corpus(&spec, 2, 8, 0.5, 4, 16, 5).unwrap();
        let text = corpus_to_string(&records, &spec);
        let parsed = corpus_from_str(&text, &spec).unwrap();
        assert_eq!(records, parsed);
    }

    #[test]
    fn corpus_parse_errors_carry_line_numbers() {
        let spec = CipherSpec::toy();
        let text = "# header\n12345 abcde 0 0\nzzzzz abcde 0 0\n";
        match corpus_from_str(text, &spec) {
            Err(FileError::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("plaintext"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let wide = "fffffff abcde 0 0\n";
        assert!(matches!(
            corpus_from_str(wide, &spec),
            Err(FileError::Parse { line: 1, .. })
        ));
        let missing = "12345 abcde 0\n";
        assert!(matches!(
            corpus_from_str(missing, &spec),
            Err(FileError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let spec = CipherSpec::toy();
        let (_, manifest) = generate_partial_corpus(&spec, 3, 8, 0.25, 4, 16, 6).unwrap();
        let text = manifest_to_string(&manifest);
        assert!(text.starts_with("# Experiment ground truth"));
        let parsed = manifest_from_str(&text).unwrap();
        assert_eq!(parsed.spec, manifest.spec);
        assert_eq!(parsed.seed, manifest.seed);
        assert_eq!(parsed.keys, manifest.keys);
        assert_eq!(parsed.reserved, manifest.reserved);
        assert_eq!(parsed.genuine_pairs, manifest.genuine_pairs);
    }

    #[test]
    fn mac_corpus_and_manifest_round_trip() {
        let spec = CipherSpec::toy();
        let (records, manifest) = generate_mac_corpus(&spec, 2, 6, 3, 7).unwrap();
        let text = mac_corpus_to_string(&records, &spec);
        let parsed = mac_corpus_from_str(&text, &spec, 3).unwrap();
        assert_eq!(records, parsed);

        let mtext = mac_manifest_to_string(&manifest);
        let mparsed = mac_manifest_from_str(&mtext).unwrap();
        assert_eq!(mparsed.keys, manifest.keys);
        assert_eq!(mparsed.reserved, manifest.reserved);
        assert_eq!(mparsed.max_blocks_log2, manifest.max_blocks_log2);
    }

    #[test]
    fn mac_corpus_enforces_block_bound() {
        let spec = CipherSpec::toy();
        let text = "11111:22222:33333 abcde 0 0\n";
        assert!(mac_corpus_from_str(text, &spec, 1).is_err());
        assert!(mac_corpus_from_str(text, &spec, 2).is_ok());
    }

    #[test]
    fn report_round_trip() {
        let spec = CipherSpec::toy();
        let (records, manifest) = generate_corpus(&spec, 1, 256, 8).unwrap();
        let t1 = crate::corpus::build_table1(&records);
        let mut config = AttackConfig::new(spec, Variant::Basic);
        config.a_seed = 9;
        config.max_iterations = 1 << 16;
        let report = attack(&config, &t1, &manifest).unwrap();
        let text = report_to_string(&report, "attack");
        let parsed = report_from_str(&text).unwrap();
        assert_eq!(parsed, report_file(&report, "attack"));
        let recovered = recovered_from_file(&parsed).unwrap();
        assert_eq!(recovered, report.outcome);
        assert!(!text.contains("elapsed"));
    }

    #[test]
    fn experiment_file_round_trip() {
        let result = ExperimentResult {
            variant: Variant::Basic,
            trials: vec![
                TrialResult {
                    trial: 0,
                    iterations: 100,
                    cipher_ops: 819200,
                    table1_entries: 256,
                    max_chain_ops_per_hit: 0,
                    chain_budget_violations: 0,
                    success: true,
                    label: Some(0),
                    oracle_confirmed: Some(true),
                },
                TrialResult {
                    trial: 1,
                    iterations: 7,
                    cipher_ops: 57344,
                    table1_entries: 256,
                    max_chain_ops_per_hit: 0,
                    chain_budget_violations: 0,
                    success: false,
                    label: None,
                    oracle_confirmed: None,
                },
            ],
            successes: 1,
            empirical_mean_iterations: 53.5,
            empirical_median_iterations: 53.5,
            predicted_mean_iterations: 4096.0,
            ratio: 53.5 / 4096.0,
            ci95_low: 1.0,
            ci95_high: 106.0,
            mean_cipher_ops: 438272.0,
        };
        let text = experiment_to_string(&result);
        let parsed = experiment_from_str(&text).unwrap();
        assert_eq!(parsed.per_trial.len(), 2);
        assert_eq!(parsed.per_trial[0].label, Some(0));
        assert_eq!(parsed.per_trial[1].label, None);
        assert_eq!(parsed.predicted_mean_iterations, 4096.0);
    }
}
