//! Ways of turning one single-column fault pattern into key-byte candidates.
//!
//! Both strategies solve the same equations and take the union over surviving
//! row hypotheses. They differ in what they keep:
//!
//! * `byte-union` keeps an independent candidate set per key byte.
//! * `column-joint` keeps the 4-byte tuples of the column, each produced by a
//!   single committed fault `ε`, so that later pairs filter whole tuples. Its
//!   per-byte projections equal the `byte-union` sets for a single pair.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::byteset::ByteSet;
use super::equations::key_candidates;
use super::pattern::FaultPattern;
use super::{committed_faults, AnalysisError};
use crate::aes::BLOCK_LEN;
use crate::gf256::GfElem;

/// Candidate key tuples for one column, packed as `b0 | b1 << 8 | b2 << 16 |
/// b3 << 24` where `bk` is the key byte at the column's slot `k`. Sorted and
/// deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TupleSet(Vec<u32>);

impl TupleSet {
    pub fn from_unsorted(mut v: Vec<u32>) -> Self {
        v.sort_unstable();
        v.dedup();
        TupleSet(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, tuple: [u8; 4]) -> bool {
        self.0.binary_search(&u32::from_le_bytes(tuple)).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = [u8; 4]> + '_ {
        self.0.iter().map(|t| t.to_le_bytes())
    }

    pub fn intersection(&self, other: &TupleSet) -> TupleSet {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        TupleSet(out)
    }

    /// Per-slot projections.
    pub fn project(&self) -> [ByteSet; 4] {
        let mut out = [ByteSet::empty(); 4];
        for t in self.iter() {
            for (s, b) in out.iter_mut().zip(t) {
                s.insert(b);
            }
        }
        out
    }
}

/// What one column pattern says about the last round key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnReport {
    pub column: usize,
    /// Output positions, indexed by slot.
    pub positions: [usize; 4],
    pub byte_sets: [ByteSet; 4],
    pub tuples: Option<TupleSet>,
}

pub trait AnalysisStrategy: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn analyze(
        &self,
        pattern: &FaultPattern,
        faulty: &[u8; BLOCK_LEN],
    ) -> Result<ColumnReport, AnalysisError>;
}

/// For each surviving hypothesis and committed fault, the per-slot key
/// candidates.
fn per_fault_candidates(
    pattern: &FaultPattern,
    faulty: &[u8; BLOCK_LEN],
) -> Result<Vec<[ByteSet; 4]>, AnalysisError> {
    let mut out = Vec::new();
    for &row in &pattern.row_hypotheses {
        let s = committed_faults(pattern, row)?;
        for eps in s.iter() {
            let mut sets = [ByteSet::empty(); 4];
            for (slot, set) in pattern.slots.iter().zip(sets.iter_mut()) {
                *set = key_candidates(
                    FaultPattern::coefficient(slot, row),
                    slot.eps_prime,
                    GfElem(eps),
                    GfElem(faulty[slot.position]),
                )?;
            }
            out.push(sets);
        }
    }
    if out.is_empty() {
        return Err(AnalysisError::InconsistentPair);
    }
    Ok(out)
}

fn positions(pattern: &FaultPattern) -> [usize; 4] {
    std::array::from_fn(|k| pattern.slots[k].position)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ByteUnion;

impl AnalysisStrategy for ByteUnion {
    fn name(&self) -> &'static str {
        "byte-union"
    }

    fn analyze(
        &self,
        pattern: &FaultPattern,
        faulty: &[u8; BLOCK_LEN],
    ) -> Result<ColumnReport, AnalysisError> {
        let mut byte_sets = [ByteSet::empty(); 4];
        for sets in per_fault_candidates(pattern, faulty)? {
            for (acc, s) in byte_sets.iter_mut().zip(sets) {
                *acc = acc.union(&s);
            }
        }
        Ok(ColumnReport {
            column: pattern.injected_column,
            positions: positions(pattern),
            byte_sets,
            tuples: None,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ColumnJoint;

impl AnalysisStrategy for ColumnJoint {
    fn name(&self) -> &'static str {
        "column-joint"
    }

    fn analyze(
        &self,
        pattern: &FaultPattern,
        faulty: &[u8; BLOCK_LEN],
    ) -> Result<ColumnReport, AnalysisError> {
        let mut packed = Vec::new();
        for sets in per_fault_candidates(pattern, faulty)? {
            for a in sets[0].iter() {
                for b in sets[1].iter() {
                    for c in sets[2].iter() {
                        for d in sets[3].iter() {
                            packed.push(u32::from_le_bytes([a, b, c, d]));
                        }
                    }
                }
            }
        }
        let tuples = TupleSet::from_unsorted(packed);
        Ok(ColumnReport {
            column: pattern.injected_column,
            positions: positions(pattern),
            byte_sets: tuples.project(),
            tuples: Some(tuples),
        })
    }
}

/// Analysis strategies by name.
#[derive(Debug)]
pub struct StrategyRegistry {
    strategies: BTreeMap<&'static str, Arc<dyn AnalysisStrategy>>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl StrategyRegistry {
    pub const DEFAULT: &'static str = "column-joint";

    pub fn with_builtins() -> Self {
        let mut reg = StrategyRegistry {
            strategies: BTreeMap::new(),
        };
        reg.register(Arc::new(ColumnJoint));
        reg.register(Arc::new(ByteUnion));
        reg
    }

    pub fn register(&mut self, strategy: Arc<dyn AnalysisStrategy>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn AnalysisStrategy>> {
        self.strategies.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.strategies.keys().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::block_from_hex;
    use crate::analyzer::{classify, differential, LocationHint};

    fn reference_pattern(hint: LocationHint) -> (FaultPattern, [u8; 16]) {
        let c = block_from_hex("3925841D02DC09FBDC118597196A0B32").unwrap();
        let f = block_from_hex("DE25841D02DC0962DC11C297193B0B32").unwrap();
        (classify(&differential(&c, &f).unwrap(), hint).unwrap(), f)
    }

    #[test]
    fn joint_projection_equals_byte_union_for_one_pair() {
        for hint in [LocationHint::Known(0), LocationHint::Unknown] {
            let (p, f) = reference_pattern(hint);
            let joint = ColumnJoint.analyze(&p, &f).unwrap();
            let union = ByteUnion.analyze(&p, &f).unwrap();
            assert_eq!(joint.byte_sets, union.byte_sets);
            assert_eq!(joint.positions, [0, 13, 10, 7]);
            // true K10 bytes at positions 0, 13, 10, 7
            assert!(joint.tuples.unwrap().contains([0xD0, 0x63, 0x0C, 0x89]));
        }
    }

    #[test]
    fn tuple_intersection() {
        let a = TupleSet::from_unsorted(vec![5, 1, 3, 3]);
        let b = TupleSet::from_unsorted(vec![3, 4, 5]);
        assert_eq!(a.len(), 3);
        assert_eq!(a.intersection(&b), TupleSet::from_unsorted(vec![3, 5]));
        assert!(a.intersection(&TupleSet::default()).is_empty());
    }

    #[test]
    fn registry_lookup() {
        let reg = StrategyRegistry::with_builtins();
        assert_eq!(reg.names().collect::<Vec<_>>(), ["byte-union", "column-joint"]);
        assert_eq!(reg.get(StrategyRegistry::DEFAULT).unwrap().name(), "column-joint");
        assert!(reg.get("nope").is_none());
    }
}
