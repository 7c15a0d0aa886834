//! Pair files and attack reports.
//!
//! A pair file holds one record per line:
//!
//! ```text
//! <plaintext> <correct> <faulty> [<truth>]
//! ```
//!
//! Blocks are 32 uppercase hex digits. The optional truth field is a compact
//! JSON object describing the injected fault. Lines starting with `#` are
//! comments; a `# seed=N` comment records the campaign seed.

use std::io::{self, BufRead, Write};

use serde::Serialize;
use thiserror::Error;

use crate::aes::{block_from_hex, to_hex, Variant, BLOCK_LEN};
use crate::analyzer::{AttackPair, AttackResult, AttackStatus, LocationMode, SkippedPair};
use crate::fault::{FaultyRun, GroundTruth};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRecord {
    pub plaintext: [u8; BLOCK_LEN],
    pub correct: [u8; BLOCK_LEN],
    pub faulty: [u8; BLOCK_LEN],
    pub truth: Option<GroundTruth>,
}

impl PairRecord {
    pub fn from_run(run: &FaultyRun, with_truth: bool) -> Self {
        PairRecord {
            plaintext: run.plaintext,
            correct: run.correct,
            faulty: run.faulty,
            truth: with_truth.then(|| run.truth.clone()),
        }
    }

    pub fn to_line(&self) -> String {
        let mut line = format!(
            "{} {} {}",
            to_hex(&self.plaintext),
            to_hex(&self.correct),
            to_hex(&self.faulty)
        );
        if let Some(t) = &self.truth {
            line.push(' ');
            line.push_str(&serde_json::to_string(t).expect("truth serializes"));
        }
        line
    }

    pub fn parse(line: &str, line_no: usize) -> Result<Self, FormatError> {
        let err = |reason: String| FormatError::Parse {
            line: line_no,
            reason,
        };
        let mut fields = line.trim().splitn(4, ' ');
        let mut block = |name: &str| {
            let f = fields
                .next()
                .ok_or_else(|| err(format!("missing {name} field")))?;
            block_from_hex(f).map_err(|e| err(format!("{name}: {e}")))
        };
        let plaintext = block("plaintext")?;
        let correct = block("correct ciphertext")?;
        let faulty = block("faulty ciphertext")?;
        let truth = match fields.next().map(str::trim).filter(|s| !s.is_empty()) {
            Some(t) => Some(serde_json::from_str(t).map_err(|e| err(format!("truth: {e}")))?),
            None => None,
        };
        if correct == faulty {
            return Err(err("correct and faulty ciphertexts are identical".into()));
        }
        Ok(PairRecord {
            plaintext,
            correct,
            faulty,
            truth,
        })
    }

    pub fn to_attack_pair(&self, variant: Variant) -> AttackPair {
        AttackPair {
            plaintext: self.plaintext,
            correct: self.correct,
            faulty: self.faulty,
            fault_byte: self
                .truth
                .as_ref()
                .and_then(|t| t.last_mix_input_byte(variant)),
        }
    }
}

/// Contents of a pair file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairFile {
    pub seed: Option<u64>,
    pub records: Vec<PairRecord>,
}

impl PairFile {
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        if let Some(seed) = self.seed {
            writeln!(out, "# seed={seed}")?;
        }
        for r in &self.records {
            writeln!(out, "{}", r.to_line())?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, FormatError> {
        let mut file = PairFile::default();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(seed) = comment.trim().strip_prefix("seed=") {
                    file.seed = seed.trim().parse().ok();
                }
                continue;
            }
            file.records.push(PairRecord::parse(trimmed, i + 1)?);
        }
        Ok(file)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ByteReport {
    pub index: usize,
    pub candidate_count: usize,
    pub value: Option<String>,
    pub pairs_to_converge: Option<usize>,
}

/// The attack outcome as written to disk or standard output (pretty JSON).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttackReport {
    pub status: AttackStatus,
    pub variant: String,
    pub location: LocationMode,
    pub k_last_round_hex: Option<String>,
    pub cipher_key_hex: Option<String>,
    pub last_round_key_only: bool,
    pub per_byte: Vec<ByteReport>,
    pub pairs_used: usize,
    pub pairs_skipped: Vec<SkippedPair>,
    pub duplicates_dropped: usize,
    pub seed: Option<u64>,
}

impl AttackReport {
    pub fn new(result: &AttackResult, location: LocationMode, seed: Option<u64>) -> Self {
        AttackReport {
            status: result.status,
            variant: result.variant.to_string(),
            location,
            k_last_round_hex: result.last_round_key.map(|k| to_hex(&k)),
            cipher_key_hex: result.cipher_key.as_deref().map(to_hex),
            last_round_key_only: result.last_round_key_only(),
            per_byte: result
                .per_byte
                .iter()
                .enumerate()
                .map(|(index, b)| ByteReport {
                    index,
                    candidate_count: b.candidate_count,
                    value: b.value.map(|v| format!("{v:02X}")),
                    pairs_to_converge: b.pairs_to_converge,
                })
                .collect(),
            pairs_used: result.pairs_used,
            pairs_skipped: result.pairs_skipped.clone(),
            duplicates_dropped: result.duplicates_dropped,
            seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
