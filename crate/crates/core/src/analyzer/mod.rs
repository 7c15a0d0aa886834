//! The attack engine.
//!
//! Each correct/faulty pair is turned into candidate sets for the bytes of the
//! last round key it touches ([`analyze_pair`]); a [`CandidateTracker`]
//! intersects those sets across pairs until every byte is pinned down, and
//! [`run_attack`] drives the whole thing and walks the key schedule back.

mod byteset;
mod equations;
mod pattern;
mod strategy;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use byteset::ByteSet;
pub use equations::{
    brute_force_fault_set, fault_candidates, intersect_fault_sets, key_candidates, sbox_inputs,
};
pub use pattern::{
    classify, column_image, differential, split_deep_fault, DiffState, FaultPattern,
    LocationHint, Slot,
};
pub use strategy::{
    AnalysisStrategy, ByteUnion, ColumnJoint, ColumnReport, StrategyRegistry, TupleSet,
};

use crate::aes::{encrypt_state, KeySchedule, State, Variant, BLOCK_LEN};
use crate::fault::FaultyRun;
use crate::key_recovery::recover_key_bytes;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("MixColumns coefficient must be 01, 02 or 03, got {0:02X}")]
    Coefficient(u8),
    #[error("differential byte is zero")]
    ZeroDifferential,
    #[error("{0:02X} is not a possible fault for this differential")]
    NotAFault(u8),
    #[error("intersection of fault sets is empty")]
    EmptyFaultSet,
    #[error("correct and faulty ciphertexts are identical")]
    NoFault,
    #[error("unsupported fault shape, nonzero positions {0:?}")]
    UnsupportedShape(Vec<usize>),
    #[error("byte index {0} is out of range")]
    ByteIndex(usize),
    #[error("fault location byte {byte} is not in column {column} seen in the output")]
    LocationMismatch { byte: usize, column: usize },
    #[error("known-location analysis needs the fault byte index")]
    MissingLocation,
    #[error("no fault hypothesis is consistent with the pair")]
    InconsistentPair,
    #[error("candidate set for key byte {0} became empty")]
    Contradiction(usize),
    #[error("no pairs to analyze")]
    NoPairs,
    #[error("recovered key does not reproduce the correct ciphertext")]
    VerificationFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationMode {
    /// The byte index of every fault at the last MixColumns input is known.
    Known,
    /// Only the output shape is used; all four rows are tried.
    Unknown,
}

/// One correct/faulty ciphertext pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackPair {
    pub plaintext: [u8; BLOCK_LEN],
    pub correct: [u8; BLOCK_LEN],
    pub faulty: [u8; BLOCK_LEN],
    /// Faulted byte at the last MixColumns input, if known.
    pub fault_byte: Option<usize>,
}

impl AttackPair {
    pub fn from_run(run: &FaultyRun, variant: Variant) -> Self {
        AttackPair {
            plaintext: run.plaintext,
            correct: run.correct,
            faulty: run.faulty,
            fault_byte: run.truth.last_mix_input_byte(variant),
        }
    }
}

/// `S`: faults consistent with all four differential bytes of `pattern` when
/// the fault was injected at `row`.
pub fn committed_faults(pattern: &FaultPattern, row: usize) -> Result<ByteSet, AnalysisError> {
    let sets = pattern
        .slots
        .iter()
        .map(|slot| fault_candidates(FaultPattern::coefficient(slot, row), slot.eps_prime))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(sets
        .iter()
        .fold(ByteSet::full(), |acc, s| acc.intersection(s)))
}

/// Candidate sets produced by one pair; `None` for bytes it says nothing about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairReport {
    pub sets: [Option<ByteSet>; BLOCK_LEN],
    pub columns: Vec<ColumnReport>,
}

impl PairReport {
    /// A report carrying only per-byte sets.
    pub fn from_sets(sets: [Option<ByteSet>; BLOCK_LEN]) -> Self {
        PairReport {
            sets,
            columns: Vec::new(),
        }
    }

    pub fn constrained(&self) -> impl Iterator<Item = (usize, &ByteSet)> {
        self.sets
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|s| (i, s)))
    }
}

/// Splits a differential into single-column patterns: one for a four-byte
/// shape, four (with unknown rows) for a sixteen-byte deep fault.
pub fn patterns_for(
    diff: &DiffState,
    location: LocationHint,
) -> Result<Vec<FaultPattern>, AnalysisError> {
    match diff.support().len() {
        4 => Ok(vec![classify(diff, location)?]),
        BLOCK_LEN => split_deep_fault(diff)?
            .iter()
            .map(|d| classify(d, LocationHint::Unknown))
            .collect(),
        _ => Err(AnalysisError::UnsupportedShape(diff.support())),
    }
}

pub fn analyze_pair_with(
    correct: &[u8; BLOCK_LEN],
    faulty: &[u8; BLOCK_LEN],
    location: LocationHint,
    strategy: &dyn AnalysisStrategy,
) -> Result<PairReport, AnalysisError> {
    let diff = differential(correct, faulty)?;
    let mut sets = [None; BLOCK_LEN];
    let mut columns = Vec::new();
    for pattern in patterns_for(&diff, location)? {
        let report = strategy.analyze(&pattern, faulty)?;
        for (pos, set) in report.positions.iter().zip(report.byte_sets) {
            sets[*pos] = Some(set);
        }
        columns.push(report);
    }
    Ok(PairReport { sets, columns })
}

/// [`analyze_pair_with`] using the default `column-joint` strategy. The
/// per-byte sets are the union over surviving row hypotheses and committed
/// faults of the key candidates at each position.
pub fn analyze_pair(
    correct: &[u8; BLOCK_LEN],
    faulty: &[u8; BLOCK_LEN],
    location: LocationHint,
) -> Result<PairReport, AnalysisError> {
    analyze_pair_with(correct, faulty, location, &ColumnJoint)
}

/// Per-byte candidate sets, narrowed by intersection as pairs come in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateTracker {
    sets: [Option<ByteSet>; BLOCK_LEN],
    columns: [Option<TupleSet>; 4],
    pairs_consumed: usize,
    converged_at: [Option<usize>; BLOCK_LEN],
}

impl Default for CandidateTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl CandidateTracker {
    pub fn new() -> Self {
        CandidateTracker {
            sets: [None; BLOCK_LEN],
            columns: Default::default(),
            pairs_consumed: 0,
            converged_at: [None; BLOCK_LEN],
        }
    }

    pub fn set(&self, i: usize) -> Option<&ByteSet> {
        self.sets[i].as_ref()
    }

    pub fn sets(&self) -> &[Option<ByteSet>; BLOCK_LEN] {
        &self.sets
    }

    pub fn pairs_consumed(&self) -> usize {
        self.pairs_consumed
    }

    /// Pairs consumed when byte `i` first became a singleton.
    pub fn converged_at(&self, i: usize) -> Option<usize> {
        self.converged_at[i]
    }

    /// 256 for unconstrained bytes.
    pub fn candidate_count(&self, i: usize) -> usize {
        self.sets[i].map_or(256, |s| s.len())
    }

    pub fn is_converged(&self) -> bool {
        self.sets.iter().all(|s| s.is_some_and(|s| s.len() == 1))
    }

    /// The key bytes, once every set is a singleton.
    pub fn key(&self) -> Option<[u8; BLOCK_LEN]> {
        let mut out = [0u8; BLOCK_LEN];
        for (o, s) in out.iter_mut().zip(&self.sets) {
            *o = s.as_ref()?.single()?;
        }
        Some(out)
    }

    /// Joint candidates for column `c`, if any joint report has been seen.
    pub fn column(&self, c: usize) -> Option<&TupleSet> {
        self.columns[c].as_ref()
    }

    /// Intersects a pair's sets into the tracker. Joint column candidates are
    /// intersected as tuples and then projected onto their bytes. Leaves the
    /// tracker untouched on contradiction.
    pub fn accumulate(&mut self, report: &PairReport) -> Result<(), AnalysisError> {
        let mut sets = self.sets;
        let mut columns = self.columns.clone();
        for col in &report.columns {
            if let Some(t) = &col.tuples {
                let merged = match &columns[col.column] {
                    None => t.clone(),
                    Some(cur) => cur.intersection(t),
                };
                if merged.is_empty() {
                    return Err(AnalysisError::Contradiction(col.positions[0]));
                }
                columns[col.column] = Some(merged);
            }
        }
        let mut narrow = |i: usize, set: &ByteSet| -> Result<(), AnalysisError> {
            let merged = sets[i].map_or(*set, |cur| cur.intersection(set));
            if merged.is_empty() {
                return Err(AnalysisError::Contradiction(i));
            }
            sets[i] = Some(merged);
            Ok(())
        };
        for (i, set) in report.constrained() {
            narrow(i, set)?;
        }
        for (c, joint) in columns.iter().enumerate() {
            if let Some(t) = joint {
                for (pos, proj) in column_image(c).iter().zip(t.project()) {
                    narrow(*pos, &proj)?;
                }
            }
        }
        self.pairs_consumed += 1;
        for (at, set) in self.converged_at.iter_mut().zip(&sets) {
            if at.is_none() && set.is_some_and(|s| s.len() == 1) {
                *at = Some(self.pairs_consumed);
            }
        }
        self.sets = sets;
        self.columns = columns;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackStatus {
    Converged,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ByteAudit {
    pub candidate_count: usize,
    pub value: Option<u8>,
    pub pairs_to_converge: Option<usize>,
    /// Candidate count after each consumed pair.
    pub history: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedPair {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackResult {
    pub status: AttackStatus,
    pub variant: Variant,
    pub last_round_key: Option<[u8; BLOCK_LEN]>,
    /// Present only when the last round key spans the whole final key material
    /// (AES-128) and re-encryption confirmed it.
    pub cipher_key: Option<Vec<u8>>,
    pub per_byte: Vec<ByteAudit>,
    pub pairs_used: usize,
    pub pairs_skipped: Vec<SkippedPair>,
    pub duplicates_dropped: usize,
    pub tracker: CandidateTracker,
}

impl AttackResult {
    /// True when the last round key was found but the cipher key cannot be
    /// derived from it alone.
    pub fn last_round_key_only(&self) -> bool {
        self.status == AttackStatus::Converged && self.cipher_key.is_none()
    }
}

fn hint_for(pair: &AttackPair, mode: LocationMode) -> Result<LocationHint, AnalysisError> {
    match mode {
        LocationMode::Unknown => Ok(LocationHint::Unknown),
        LocationMode::Known => pair
            .fault_byte
            .map(LocationHint::Known)
            .ok_or(AnalysisError::MissingLocation),
    }
}

/// [`run_attack_with`] using the default `column-joint` strategy.
pub fn run_attack(
    pairs: &[AttackPair],
    mode: LocationMode,
    variant: Variant,
) -> Result<AttackResult, AnalysisError> {
    run_attack_with(pairs, mode, variant, &ColumnJoint)
}

/// Runs the attack over `pairs` in order, stopping once every last-round-key
/// byte is known. Duplicate pairs are dropped; unusable ones are skipped and
/// reported. For AES-128 the cipher key is recovered and checked by
/// re-encrypting the first used pair's plaintext.
pub fn run_attack_with(
    pairs: &[AttackPair],
    mode: LocationMode,
    variant: Variant,
    strategy: &dyn AnalysisStrategy,
) -> Result<AttackResult, AnalysisError> {
    if pairs.is_empty() {
        return Err(AnalysisError::NoPairs);
    }
    let mut seen = HashSet::new();
    let unique: Vec<(usize, &AttackPair)> = pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| seen.insert((p.plaintext, p.faulty)))
        .collect();
    let duplicates_dropped = pairs.len() - unique.len();

    let reports: Vec<Result<PairReport, AnalysisError>> = unique
        .par_iter()
        .map(|(_, p)| analyze_pair_with(&p.correct, &p.faulty, hint_for(p, mode)?, strategy))
        .collect();

    let mut tracker = CandidateTracker::new();
    let mut history: Vec<Vec<usize>> = vec![Vec::new(); BLOCK_LEN];
    let mut skipped = Vec::new();
    let mut used: Vec<&AttackPair> = Vec::new();
    for ((index, pair), report) in unique.iter().zip(reports) {
        if tracker.is_converged() {
            break;
        }
        match report {
            Ok(r) => {
                // valid data never contradicts; treat it like any other dud pair
                if let Err(e) = tracker.accumulate(&r) {
                    log::warn!("skipping pair {index}: {e}");
                    skipped.push(SkippedPair {
                        index: *index,
                        reason: e.to_string(),
                    });
                    continue;
                }
                used.push(pair);
                for (i, h) in history.iter_mut().enumerate() {
                    h.push(tracker.candidate_count(i));
                }
                log::debug!(
                    "pair {index}: {} of 16 bytes known",
                    (0..BLOCK_LEN).filter(|&i| tracker.candidate_count(i) == 1).count()
                );
            }
            Err(e) => {
                log::info!("skipping pair {index}: {e}");
                skipped.push(SkippedPair {
                    index: *index,
                    reason: e.to_string(),
                });
            }
        }
    }

    let per_byte = (0..BLOCK_LEN)
        .map(|i| ByteAudit {
            candidate_count: tracker.candidate_count(i),
            value: tracker.set(i).and_then(|s| s.single()),
            pairs_to_converge: tracker.converged_at(i),
            history: std::mem::take(&mut history[i]),
        })
        .collect();

    let last_round_key = tracker.key();
    let mut cipher_key = None;
    if let (Some(k), Variant::Aes128) = (last_round_key, variant) {
        let key = recover_key_bytes(variant, &k).expect("AES-128 final key is one round key");
        let ks = KeySchedule::new(&key).expect("recovered key has the right length");
        let check = used.first().expect("converged implies a used pair");
        if encrypt_state(&ks, &State(check.plaintext)).0 != check.correct {
            return Err(AnalysisError::VerificationFailed);
        }
        cipher_key = Some(key);
    }

    Ok(AttackResult {
        status: if last_round_key.is_some() {
            AttackStatus::Converged
        } else {
            AttackStatus::Partial
        },
        variant,
        last_round_key,
        cipher_key,
        per_byte,
        pairs_used: tracker.pairs_consumed(),
        pairs_skipped: skipped,
        duplicates_dropped,
        tracker,
    })
}
