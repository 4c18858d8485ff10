//! Config-file schema shared by the subcommands. Every value can come from
//! a TOML file via `--config`; command-line flags override file values.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use mitm2::cipher::{CipherFamily, CipherSpec};
use mitm2::engine::{Variant, VerificationPolicy};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub spec: SpecSection,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecSection {
    pub family: Option<String>,
    pub block_bits: Option<u32>,
    pub key_bits: Option<u32>,
    pub rounds: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub keys: Option<usize>,
    pub pairs_per_key: Option<usize>,
    pub seed: Option<u64>,
    pub partial_fraction: Option<f64>,
    pub unknown_bits: Option<u32>,
    pub w_max: Option<u32>,
    pub mac: Option<bool>,
    pub max_blocks_log2: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub variant: Option<String>,
    pub policy: Option<String>,
    pub max_iterations: Option<u64>,
    pub a_seed: Option<u64>,
    pub threads: Option<usize>,
    pub check_pairs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub trials: Option<u32>,
    pub base_seed: Option<u64>,
    pub oracle_check: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config file {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("config file {}", p.display()))
            }
        }
    }
}

/// Flag wins over file value wins over default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn pick_required<T>(flag: Option<T>, file: Option<T>, field: &str) -> Result<T> {
    flag.or(file).with_context(|| format!("missing required value for {field}"))
}

pub fn parse_family(s: &str) -> Result<CipherFamily> {
    match s {
        "des" => Ok(CipherFamily::Des),
        "mini-feistel" => Ok(CipherFamily::MiniFeistel),
        other => bail!("spec.family must be \"des\" or \"mini-feistel\", got {other:?}"),
    }
}

pub fn parse_variant(s: &str) -> Result<Variant> {
    match s {
        "basic" => Ok(Variant::Basic),
        "multi-key" => Ok(Variant::MultiKey),
        "complement" => Ok(Variant::Complement),
        "partial" => Ok(Variant::Partial),
        "complement-partial" => Ok(Variant::ComplementPartial),
        other => bail!(
            "attack.variant must be one of basic, multi-key, complement, partial, \
             complement-partial; got {other:?}"
        ),
    }
}

pub fn parse_policy(s: &str) -> Result<VerificationPolicy> {
    match s {
        "full-bit" => Ok(VerificationPolicy::FullBit),
        "masked-bit" => Ok(VerificationPolicy::MaskedBit),
        other => bail!("attack.policy must be \"full-bit\" or \"masked-bit\", got {other:?}"),
    }
}

/// Resolves the cipher parameters from flags and config, defaulting to the
/// scaled profile used throughout the experiments.
pub fn resolve_spec(
    family: Option<String>,
    block_bits: Option<u32>,
    key_bits: Option<u32>,
    rounds: Option<u32>,
    section: &SpecSection,
) -> Result<CipherSpec> {
    let family = parse_family(&pick(
        family,
        section.family.clone(),
        "mini-feistel".to_string(),
    ))?;
    match family {
        CipherFamily::Des => Ok(CipherSpec::des()),
        CipherFamily::MiniFeistel => {
            let b = pick(block_bits, section.block_bits, 20);
            let k = pick(key_bits, section.key_bits, 12);
            let r = pick(rounds, section.rounds, 8);
            CipherSpec::mini_feistel(b, k, r)
                .map_err(|e| anyhow::anyhow!("spec.block_bits/key_bits/rounds: {e}"))
        }
    }
}
