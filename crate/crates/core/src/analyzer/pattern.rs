//! Shapes of output differentials.
//!
//! A single-byte difference entering the last MixColumns in column `j`
//! leaves the cipher at the ShiftRows image of that column:
//! `(0, j), (1, j-1), (2, j-2), (3, j-3)` (columns mod 4). Row `k` of that
//! image carries `A_0[k][r]·ε` before the final S-box, where `r` is the row the
//! fault was injected at.

use super::AnalysisError;
use crate::aes::{position, MIX_MATRIX, BLOCK_LEN};
use crate::gf256::GfElem;

/// `correct ⊕ faulty`, byte by byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffState {
    bytes: [u8; BLOCK_LEN],
}

impl DiffState {
    pub fn from_bytes(bytes: [u8; BLOCK_LEN]) -> Self {
        DiffState { bytes }
    }

    pub fn bytes(&self) -> &[u8; BLOCK_LEN] {
        &self.bytes
    }

    pub fn get(&self, i: usize) -> GfElem {
        GfElem(self.bytes[i])
    }

    pub fn support(&self) -> Vec<usize> {
        (0..BLOCK_LEN).filter(|&i| self.bytes[i] != 0).collect()
    }

    /// Keeps only `positions`.
    pub fn restrict(&self, positions: &[usize]) -> DiffState {
        let mut bytes = [0u8; BLOCK_LEN];
        for &p in positions {
            bytes[p] = self.bytes[p];
        }
        DiffState { bytes }
    }
}

pub fn differential(
    correct: &[u8; BLOCK_LEN],
    faulty: &[u8; BLOCK_LEN],
) -> Result<DiffState, AnalysisError> {
    if correct == faulty {
        return Err(AnalysisError::NoFault);
    }
    Ok(DiffState {
        bytes: std::array::from_fn(|i| correct[i] ^ faulty[i]),
    })
}

/// Output positions reached from MixColumns input column `col`, indexed by
/// MixColumns output row.
pub const fn column_image(col: usize) -> [usize; 4] {
    [
        position(0, col),
        position(1, (col + 3) % 4),
        position(2, (col + 2) % 4),
        position(3, (col + 1) % 4),
    ]
}

/// What the analyzer knows about where the fault entered the last MixColumns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocationHint {
    /// Byte index of the faulted state byte at the MixColumns input.
    Known(usize),
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub position: usize,
    pub mix_row: usize,
    pub eps_prime: GfElem,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultPattern {
    pub injected_column: usize,
    pub slots: [Slot; 4],
    pub row_hypotheses: Vec<usize>,
}

impl FaultPattern {
    /// MixColumns coefficient multiplying the fault in `slot` if it was
    /// injected at `row`.
    pub fn coefficient(slot: &Slot, row: usize) -> GfElem {
        GfElem(MIX_MATRIX[slot.mix_row][row])
    }
}

pub fn classify(diff: &DiffState, location: LocationHint) -> Result<FaultPattern, AnalysisError> {
    let support = diff.support();
    if support.len() != 4 {
        return Err(AnalysisError::UnsupportedShape(support));
    }
    let column = (0..4)
        .find(|&c| {
            let mut image = column_image(c).to_vec();
            image.sort_unstable();
            image == support
        })
        .ok_or_else(|| AnalysisError::UnsupportedShape(support.clone()))?;

    let row_hypotheses = match location {
        LocationHint::Unknown => vec![0, 1, 2, 3],
        LocationHint::Known(b) if b >= BLOCK_LEN => return Err(AnalysisError::ByteIndex(b)),
        LocationHint::Known(b) if b / 4 != column => {
            return Err(AnalysisError::LocationMismatch {
                byte: b,
                column,
            })
        }
        LocationHint::Known(b) => vec![b % 4],
    };
    let image = column_image(column);
    let slots = std::array::from_fn(|k| Slot {
        position: image[k],
        mix_row: k,
        eps_prime: diff.get(image[k]),
    });
    Ok(FaultPattern {
        injected_column: column,
        slots,
        row_hypotheses,
    })
}

/// Splits a sixteen-byte differential (a fault one round deeper) into the
/// four single-column patterns it is made of.
pub fn split_deep_fault(diff: &DiffState) -> Result<[DiffState; 4], AnalysisError> {
    let support = diff.support();
    if support.len() != BLOCK_LEN {
        return Err(AnalysisError::UnsupportedShape(support));
    }
    Ok(std::array::from_fn(|c| diff.restrict(&column_image(c))))
}
