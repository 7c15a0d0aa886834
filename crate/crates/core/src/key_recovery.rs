//! Key-schedule inversion: from the last `Nk` words of the expanded key back to
//! the cipher key.
//!
//! The forward expansion gives `w[i] = w[i - Nk] ^ temp(i, w[i - 1])`, so
//! `w[i - Nk] = w[i] ^ temp(i, w[i - 1])`. A sliding window of `Nk` words
//! always contains `w[i - 1]` and `w[i]`, which is enough to walk down to `w[0]`.

use thiserror::Error;

use crate::aes::{schedule_temp, xor_word, Variant, Word};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecoveryError {
    #[error("{variant} needs {expected} final key bytes, got {got}")]
    WordCount {
        variant: Variant,
        expected: usize,
        got: usize,
    },
}

/// The last `Nk` words of an expanded key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalKeyMaterial {
    variant: Variant,
    words: Vec<Word>,
}

impl FinalKeyMaterial {
    pub fn new(variant: Variant, bytes: &[u8]) -> Result<Self, RecoveryError> {
        if bytes.len() != variant.key_len() {
            return Err(RecoveryError::WordCount {
                variant,
                expected: variant.key_len(),
                got: bytes.len(),
            });
        }
        let words = bytes
            .chunks_exact(4)
            .map(|c| [c[0], c[1], c[2], c[3]])
            .collect();
        Ok(FinalKeyMaterial { variant, words })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }
}

pub fn recover_key(fk: &FinalKeyMaterial) -> Vec<u8> {
    let variant = fk.variant;
    let nk = variant.nk();
    let total = 4 * (variant.nr() + 1);

    // window[j] holds w[base + j]
    let mut window: Vec<Word> = fk.words.clone();
    let mut base = total - nk;
    while base > 0 {
        let i = base + nk - 1;
        let prev = window[nk - 2];
        let recovered = xor_word(window[nk - 1], schedule_temp(variant, i, prev));
        window.pop();
        window.insert(0, recovered);
        base -= 1;
    }
    window.concat()
}

/// Convenience wrapper over raw bytes.
pub fn recover_key_bytes(variant: Variant, final_words: &[u8]) -> Result<Vec<u8>, RecoveryError> {
    Ok(recover_key(&FinalKeyMaterial::new(variant, final_words)?))
}
