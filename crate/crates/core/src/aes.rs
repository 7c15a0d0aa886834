//! AES-128/192/256 encryption with a traced mode.
//!
//! The round pipeline is driven by [`run_rounds`], which calls an observer after
//! every step. Plain encryption passes a no-op observer; tracing records every
//! state; the fault injector mutates one byte at a chosen point and lets the
//! pipeline carry on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf256::{sbox_byte, GfElem};

pub const BLOCK_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AesError {
    #[error("key must be 16, 24 or 32 bytes, got {0}")]
    KeyLength(usize),
    #[error("block must be 16 bytes, got {0}")]
    BlockLength(usize),
    #[error("AddRoundKey needs a round key and other steps must not get one")]
    RoundKeyUsage,
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("unknown AES variant '{0}'")]
    Variant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Aes128,
    Aes192,
    Aes256,
}

impl Variant {
    pub fn from_key_len(len: usize) -> Result<Self, AesError> {
        match len {
            16 => Ok(Variant::Aes128),
            24 => Ok(Variant::Aes192),
            32 => Ok(Variant::Aes256),
            n => Err(AesError::KeyLength(n)),
        }
    }

    /// Key length in 32-bit words.
    pub const fn nk(self) -> usize {
        match self {
            Variant::Aes128 => 4,
            Variant::Aes192 => 6,
            Variant::Aes256 => 8,
        }
    }

    /// Number of rounds.
    pub const fn nr(self) -> usize {
        self.nk() + 6
    }

    pub const fn key_len(self) -> usize {
        4 * self.nk()
    }

    pub const fn bits(self) -> u32 {
        32 * self.nk() as u32
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AES-{}", self.bits())
    }
}

impl FromStr for Variant {
    type Err = AesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().trim_start_matches("aes-") {
            "128" => Ok(Variant::Aes128),
            "192" => Ok(Variant::Aes192),
            "256" => Ok(Variant::Aes256),
            _ => Err(AesError::Variant(s.to_string())),
        }
    }
}

/// The 4x4 AES state. Byte `i` sits at row `i % 4`, column `i / 4`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct State(pub [u8; BLOCK_LEN]);

impl State {
    pub fn from_slice(block: &[u8]) -> Result<Self, AesError> {
        let bytes: [u8; BLOCK_LEN] = block
            .try_into()
            .map_err(|_| AesError::BlockLength(block.len()))?;
        Ok(State(bytes))
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.0[4 * col + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.0[4 * col + row] = v;
    }

    pub fn to_bytes(self) -> [u8; BLOCK_LEN] {
        self.0
    }

    pub fn xor(&self, other: &State) -> State {
        let mut out = *self;
        out.0.iter_mut().zip(other.0).for_each(|(a, b)| *a ^= b);
        out
    }

    pub fn to_hex(&self) -> String {
        to_hex(&self.0)
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "State({})", self.to_hex())
    }
}

/// Position of the byte at `(row, col)` in block order.
#[inline]
pub const fn position(row: usize, col: usize) -> usize {
    4 * col + row
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Step {
    AddRoundKey,
    SubBytes,
    ShiftRows,
    MixColumns,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub fn sub_bytes(s: &State) -> State {
    State(s.0.map(sbox_byte))
}

/// Rotates row `r` left by `r`.
pub fn shift_rows(s: &State) -> State {
    let mut out = State::default();
    for row in 0..4 {
        for col in 0..4 {
            out.set(row, col, s.get(row, (col + row) % 4));
        }
    }
    out
}

/// The circulant MixColumns matrix.
pub const MIX_MATRIX: [[u8; 4]; 4] = [
    [0x02, 0x03, 0x01, 0x01],
    [0x01, 0x02, 0x03, 0x01],
    [0x01, 0x01, 0x02, 0x03],
    [0x03, 0x01, 0x01, 0x02],
];

pub const INV_MIX_MATRIX: [[u8; 4]; 4] = [
    [0x0E, 0x0B, 0x0D, 0x09],
    [0x09, 0x0E, 0x0B, 0x0D],
    [0x0D, 0x09, 0x0E, 0x0B],
    [0x0B, 0x0D, 0x09, 0x0E],
];

/// Left-multiplies every column by `matrix`.
pub fn mul_columns(matrix: &[[u8; 4]; 4], s: &State) -> State {
    let mut out = State::default();
    for col in 0..4 {
        for (row, coeffs) in matrix.iter().enumerate() {
            let mut acc = GfElem::ZERO;
            for (k, &c) in coeffs.iter().enumerate() {
                acc += GfElem(c) * GfElem(s.get(k, col));
            }
            out.set(row, col, acc.0);
        }
    }
    out
}

pub fn mix_columns(s: &State) -> State {
    mul_columns(&MIX_MATRIX, s)
}

pub fn add_round_key(s: &State, rk: &State) -> State {
    s.xor(rk)
}

/// Applies exactly one round transformation.
pub fn round_step(step: Step, s: &State, rk: Option<&State>) -> Result<State, AesError> {
    match (step, rk) {
        (Step::AddRoundKey, Some(k)) => Ok(add_round_key(s, k)),
        (Step::SubBytes, None) => Ok(sub_bytes(s)),
        (Step::ShiftRows, None) => Ok(shift_rows(s)),
        (Step::MixColumns, None) => Ok(mix_columns(s)),
        _ => Err(AesError::RoundKeyUsage),
    }
}

pub type Word = [u8; 4];

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36];

pub(crate) fn sub_word(w: Word) -> Word {
    w.map(sbox_byte)
}

pub(crate) fn rot_word(w: Word) -> Word {
    [w[1], w[2], w[3], w[0]]
}

pub(crate) fn xor_word(a: Word, b: Word) -> Word {
    [a[0] ^ b[0], a[1] ^ b[1], a[2] ^ b[2], a[3] ^ b[3]]
}

/// The value XORed into `w[i - nk]` to produce `w[i]` (FIPS-197 key expansion).
pub(crate) fn schedule_temp(variant: Variant, i: usize, prev: Word) -> Word {
    let nk = variant.nk();
    if i.is_multiple_of(nk) {
        let mut t = sub_word(rot_word(prev));
        t[0] ^= RCON[i / nk - 1];
        t
    } else if nk > 6 && i % nk == 4 {
        sub_word(prev)
    } else {
        prev
    }
}

/// The expanded key: `4 * (Nr + 1)` words.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct KeySchedule {
    variant: Variant,
    words: Vec<Word>,
}

impl KeySchedule {
    pub fn new(key: &[u8]) -> Result<Self, AesError> {
        let variant = Variant::from_key_len(key.len())?;
        let nk = variant.nk();
        let total = 4 * (variant.nr() + 1);
        let mut words: Vec<Word> = key
            .chunks_exact(4)
            .map(|c| [c[0], c[1], c[2], c[3]])
            .collect();
        for i in nk..total {
            let temp = schedule_temp(variant, i, words[i - 1]);
            words.push(xor_word(words[i - nk], temp));
        }
        Ok(KeySchedule { variant, words })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// Round key `K_round` as a state.
    pub fn round_key(&self, round: usize) -> State {
        let mut out = State::default();
        for (c, w) in self.words[4 * round..4 * round + 4].iter().enumerate() {
            out.0[4 * c..4 * c + 4].copy_from_slice(w);
        }
        out
    }

    pub fn last_round_key(&self) -> State {
        self.round_key(self.variant.nr())
    }

    /// The last `Nk` words of the schedule, concatenated.
    pub fn final_words(&self) -> Vec<u8> {
        let nk = self.variant.nk();
        self.words[self.words.len() - nk..].concat()
    }
}

pub fn expand_key(key: &[u8]) -> Result<KeySchedule, AesError> {
    KeySchedule::new(key)
}

/// A point in the pipeline: the state right after `step` of `round`.
/// Round 0 only has its initial AddRoundKey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepPoint {
    pub round: usize,
    pub step: Step,
}

impl StepPoint {
    pub const fn new(round: usize, step: Step) -> Self {
        StepPoint { round, step }
    }
}

impl fmt::Display for StepPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.step, self.round)
    }
}

/// Runs the full cipher, handing every intermediate state to `observe`,
/// which may modify it in place.
pub fn run_rounds<F>(ks: &KeySchedule, plaintext: &State, mut observe: F) -> State
where
    F: FnMut(StepPoint, &mut State),
{
    let nr = ks.variant().nr();
    let mut s = add_round_key(plaintext, &ks.round_key(0));
    observe(StepPoint::new(0, Step::AddRoundKey), &mut s);
    for round in 1..=nr {
        s = sub_bytes(&s);
        observe(StepPoint::new(round, Step::SubBytes), &mut s);
        s = shift_rows(&s);
        observe(StepPoint::new(round, Step::ShiftRows), &mut s);
        if round != nr {
            s = mix_columns(&s);
            observe(StepPoint::new(round, Step::MixColumns), &mut s);
        }
        s = add_round_key(&s, &ks.round_key(round));
        observe(StepPoint::new(round, Step::AddRoundKey), &mut s);
    }
    s
}

pub fn encrypt_state(ks: &KeySchedule, plaintext: &State) -> State {
    run_rounds(ks, plaintext, |_, _| {})
}

pub fn encrypt_block(key: &[u8], plaintext: &[u8]) -> Result<[u8; BLOCK_LEN], AesError> {
    let ks = KeySchedule::new(key)?;
    let pt = State::from_slice(plaintext)?;
    Ok(encrypt_state(&ks, &pt).0)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TraceEntry {
    pub point: StepPoint,
    pub state: State,
}

/// Every intermediate state of one encryption, in pipeline order.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct EncryptionTrace {
    entries: Vec<TraceEntry>,
}

impl EncryptionTrace {
    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, round: usize, step: Step) -> Option<&State> {
        self.entries
            .iter()
            .find(|e| e.point == StepPoint::new(round, step))
            .map(|e| &e.state)
    }

    pub fn last(&self) -> Option<&State> {
        self.entries.last().map(|e| &e.state)
    }
}

pub fn encrypt_traced_state(ks: &KeySchedule, plaintext: &State) -> (State, EncryptionTrace) {
    let mut entries = Vec::with_capacity(4 * ks.variant().nr());
    let ct = run_rounds(ks, plaintext, |point, s| {
        entries.push(TraceEntry { point, state: *s })
    });
    (ct, EncryptionTrace { entries })
}

pub fn encrypt_traced(
    key: &[u8],
    plaintext: &[u8],
) -> Result<([u8; BLOCK_LEN], EncryptionTrace), AesError> {
    let ks = KeySchedule::new(key)?;
    let pt = State::from_slice(plaintext)?;
    let (ct, trace) = encrypt_traced_state(&ks, &pt);
    Ok((ct.0, trace))
}

pub fn to_hex(bytes: &[u8]) -> String {
    use fmt::Write;
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02X}");
        s
    })
}

/// Parses contiguous hex; whitespace is ignored.
pub fn from_hex(s: &str) -> Result<Vec<u8>, AesError> {
    let digits: Vec<u8> = s.bytes().filter(|b| !b.is_ascii_whitespace()).collect();
    if !digits.len().is_multiple_of(2) {
        return Err(AesError::Hex(s.to_string()));
    }
    digits
        .chunks_exact(2)
        .map(|pair| {
            std::str::from_utf8(pair)
                .ok()
                .and_then(|p| u8::from_str_radix(p, 16).ok())
                .ok_or_else(|| AesError::Hex(s.to_string()))
        })
        .collect()
}

pub fn block_from_hex(s: &str) -> Result<[u8; BLOCK_LEN], AesError> {
    let v = from_hex(s)?;
    let len = v.len();
    v.try_into().map_err(|_| AesError::BlockLength(len))
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEY: &str = "2B7E151628AED2A6ABF7158809CF4F3C";
    const PT: &str = "3243F6A8885A308D313198A2E0370734";

    fn state(hex: &str) -> State {
        State(block_from_hex(hex).unwrap())
    }

    #[test]
    fn fips_appendix_b() {
        let ct = encrypt_block(&from_hex(KEY).unwrap(), &from_hex(PT).unwrap()).unwrap();
        assert_eq!(to_hex(&ct), "3925841D02DC09FBDC118597196A0B32");
    }

    #[test]
    fn fips_c_vectors_192_256() {
        let pt = from_hex("00112233445566778899AABBCCDDEEFF").unwrap();
        let k192 = from_hex("000102030405060708090A0B0C0D0E0F1011121314151617").unwrap();
        let k256 =
            from_hex("000102030405060708090A0B0C0D0E0F101112131415161718191A1B1C1D1E1F").unwrap();
        assert_eq!(
            to_hex(&encrypt_block(&k192, &pt).unwrap()),
            "DDA97CA4864CDFE06EAF70A0EC0D7191"
        );
        assert_eq!(
            to_hex(&encrypt_block(&k256, &pt).unwrap()),
            "8EA2B7CA516745BFEAFC49904B496089"
        );
        let k128 = from_hex("000102030405060708090A0B0C0D0E0F").unwrap();
        assert_eq!(
            to_hex(&encrypt_block(&k128, &pt).unwrap()),
            "69C4E0D86A7B0430D8CDB78070B4C55A"
        );
    }

    #[test]
    fn round_keys_match_fixture() {
        let ks = expand_key(&from_hex(KEY).unwrap()).unwrap();
        assert_eq!(ks.round_key(10).to_hex(), "D014F9A8C9EE2589E13F0CC8B6630CA6");
        assert_eq!(ks.round_key(9).to_hex(), "AC7766F319FADC2128D12941575C006E");
        assert_eq!(ks.words().len(), 44);
        assert_eq!(ks.words()[..4].concat(), from_hex(KEY).unwrap());
    }

    #[test]
    fn schedule_lengths() {
        for (len, words) in [(16, 44), (24, 52), (32, 60)] {
            let ks = expand_key(&vec![7u8; len]).unwrap();
            assert_eq!(ks.words().len(), words);
            assert_eq!(ks.words()[..len / 4].concat(), vec![7u8; len]);
        }
        assert_eq!(expand_key(&[0u8; 15]), Err(AesError::KeyLength(15)));
    }

    #[test]
    fn round_step_key_usage() {
        let s = State::default();
        assert_eq!(round_step(Step::AddRoundKey, &s, None), Err(AesError::RoundKeyUsage));
        assert_eq!(round_step(Step::SubBytes, &s, Some(&s)), Err(AesError::RoundKeyUsage));
    }

    #[test]
    fn shift_rows_fixture() {
        // "After SubBytes 10" -> "After ShiftRows 10"
        let sub = state("0E58CEEBCB31075F3D327D94AF2E2CB5");
        let shifted = round_step(Step::ShiftRows, &sub, None).unwrap();
        assert_eq!(shifted.to_hex(), "0E317DB5CB322CEB3D2ECE5FAF580794");
        let mut s = sub;
        for _ in 0..4 {
            s = shift_rows(&s);
        }
        assert_eq!(s, sub);
    }

    #[test]
    fn faulty_last_round_fixture() {
        let k10 = state("D014F9A8C9EE2589E13F0CC8B6630CA6");
        let shifted = state("0E317DB5CB322CEB3D2ECE5FAF580794");
        let out = round_step(Step::AddRoundKey, &shifted, Some(&k10)).unwrap();
        assert_eq!(out.to_hex(), "DE25841D02DC0962DC11C297193B0B32");
    }

    #[test]
    fn mix_columns_single_byte() {
        let eps = 0x1E;
        let mut s = State::default();
        s.set(0, 0, eps);
        let out = round_step(Step::MixColumns, &s, None).unwrap();
        let e = GfElem(eps);
        assert_eq!(out.get(0, 0), (GfElem(2) * e).0);
        assert_eq!(out.get(1, 0), eps);
        assert_eq!(out.get(2, 0), eps);
        assert_eq!(out.get(3, 0), (GfElem(3) * e).0);
        assert!(out.0[4..].iter().all(|&b| b == 0));
    }

    #[test]
    fn mix_columns_inverts() {
        let s = state(PT);
        assert_eq!(mul_columns(&INV_MIX_MATRIX, &mix_columns(&s)), s);
    }

    #[test]
    fn trace_fixtures() {
        let (ct, trace) = encrypt_traced(&from_hex(KEY).unwrap(), &from_hex(PT).unwrap()).unwrap();
        assert_eq!(trace.len(), 40);
        assert_eq!(trace.last().unwrap().0, ct);
        let sr9 = trace.get(9, Step::ShiftRows).unwrap();
        assert_eq!(&sr9.0[..4], &[0x87, 0x6E, 0x46, 0xA6]);
        assert_eq!(sr9.to_hex(), "876E46A6F24CE78C4D904AD897ECC395");
        assert!(trace.get(10, Step::MixColumns).is_none());
        assert!(trace.get(8, Step::MixColumns).is_some());
    }

    #[test]
    fn hex_roundtrip_and_errors() {
        assert_eq!(to_hex(&from_hex("00ff10").unwrap()), "00FF10");
        assert!(from_hex("0").is_err());
        assert!(from_hex("zz").is_err());
        assert!(block_from_hex("00").is_err());
    }

    #[test]
    fn variant_parse() {
        assert_eq!("128".parse::<Variant>().unwrap(), Variant::Aes128);
        assert_eq!("AES-256".parse::<Variant>().unwrap(), Variant::Aes256);
        assert!("512".parse::<Variant>().is_err());
        assert_eq!(Variant::Aes192.nr(), 12);
    }
}
