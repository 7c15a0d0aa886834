//! Single-byte fault injection into a running AES computation.
//!
//! A fault is described by *where* it lands ([`Location`] plus a byte index) and
//! *how* the byte is corrupted ([`FaultModel`]). Models are trait objects kept
//! in a [`FaultModelRegistry`] and looked up by name (`xor:1E`, `random`,
//! `stuck00`, `stuckFF`), so new models can be plugged in without touching the
//! injector.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aes::{
    encrypt_state, from_hex, position, run_rounds, AesError, KeySchedule, State, Step, StepPoint, Variant,
    BLOCK_LEN,
};

/// Plaintext re-draws allowed per campaign run when a fault has no effect.
pub const MAX_RETRIES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FaultError {
    #[error("xor fault with a zero difference leaves the state unchanged")]
    ZeroDifference,
    #[error("fault model '{model}' would leave byte {original:02X} unchanged")]
    NoEffect { model: String, original: u8 },
    #[error("byte index {0} is out of range 0..16")]
    ByteIndex(usize),
    #[error("unknown fault model '{0}'")]
    UnknownModel(String),
    #[error("bad argument for fault model '{model}': {reason}")]
    ModelArgument { model: String, reason: String },
    #[error("campaign needs at least one run")]
    EmptyCampaign,
    #[error("run {index}: no effective fault after {attempts} attempts")]
    RetriesExhausted { index: usize, attempts: usize },
    #[error("recorded ground truth does not match the replayed state")]
    TruthMismatch,
    #[error(transparent)]
    Aes(#[from] AesError),
}

impl FaultError {
    /// Errors that a fresh plaintext could avoid.
    pub fn is_retryable(&self) -> bool {
        matches!(self, FaultError::NoEffect { .. })
    }
}

/// How a targeted byte gets corrupted.
pub trait FaultModel: Send + Sync + fmt::Debug {
    /// Name as accepted by the registry, e.g. `xor:1E`.
    fn name(&self) -> String;

    /// Returns the corrupted value. Must differ from `original` or fail.
    fn corrupt(&self, original: u8, rng: &mut dyn RngCore) -> Result<u8, FaultError>;
}

/// XOR a fixed nonzero difference into the byte.
#[derive(Debug, Clone, Copy)]
pub struct XorFault {
    epsilon: u8,
}

impl XorFault {
    pub fn new(epsilon: u8) -> Result<Self, FaultError> {
        if epsilon == 0 {
            return Err(FaultError::ZeroDifference);
        }
        Ok(XorFault { epsilon })
    }
}

impl FaultModel for XorFault {
    fn name(&self) -> String {
        format!("xor:{:02X}", self.epsilon)
    }

    fn corrupt(&self, original: u8, _rng: &mut dyn RngCore) -> Result<u8, FaultError> {
        Ok(original ^ self.epsilon)
    }
}

/// Replace the byte by a uniformly random different value.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomReplace;

impl FaultModel for RandomReplace {
    fn name(&self) -> String {
        "random".to_string()
    }

    fn corrupt(&self, original: u8, rng: &mut dyn RngCore) -> Result<u8, FaultError> {
        // uniform over the 255 values != original
        let offset = rng.gen_range(1..=255u8);
        Ok(original ^ offset)
    }
}

/// Force the byte to a constant, as a line tied to ground or Vcc would.
#[derive(Debug, Clone, Copy)]
pub struct StuckAt {
    value: u8,
}

impl StuckAt {
    pub const fn new(value: u8) -> Self {
        StuckAt { value }
    }
}

impl FaultModel for StuckAt {
    fn name(&self) -> String {
        format!("stuck{:02X}", self.value)
    }

    fn corrupt(&self, original: u8, _rng: &mut dyn RngCore) -> Result<u8, FaultError> {
        if original == self.value {
            return Err(FaultError::NoEffect {
                model: self.name(),
                original,
            });
        }
        Ok(self.value)
    }
}

type ModelFactory =
    Box<dyn Fn(Option<&str>) -> Result<Arc<dyn FaultModel>, FaultError> + Send + Sync>;

/// Fault models by name. A spec string is `name` or `name:argument`.
pub struct FaultModelRegistry {
    factories: BTreeMap<String, ModelFactory>,
}

impl Default for FaultModelRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl fmt::Debug for FaultModelRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

fn no_argument(name: &str, arg: Option<&str>) -> Result<(), FaultError> {
    match arg {
        None => Ok(()),
        Some(a) => Err(FaultError::ModelArgument {
            model: name.to_string(),
            reason: format!("takes no argument, got '{a}'"),
        }),
    }
}

impl FaultModelRegistry {
    pub fn empty() -> Self {
        FaultModelRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("xor", |arg| {
            let hex = arg.ok_or_else(|| FaultError::ModelArgument {
                model: "xor".into(),
                reason: "expected xor:HH".into(),
            })?;
            let bytes = from_hex(hex).ok().filter(|b| b.len() == 1).ok_or_else(|| {
                FaultError::ModelArgument {
                    model: "xor".into(),
                    reason: format!("'{hex}' is not one hex byte"),
                }
            })?;
            Ok(Arc::new(XorFault::new(bytes[0])?))
        });
        reg.register("random", |arg| {
            no_argument("random", arg)?;
            Ok(Arc::new(RandomReplace))
        });
        reg.register("stuck00", |arg| {
            no_argument("stuck00", arg)?;
            Ok(Arc::new(StuckAt::new(0x00)))
        });
        reg.register("stuckFF", |arg| {
            no_argument("stuckFF", arg)?;
            Ok(Arc::new(StuckAt::new(0xFF)))
        });
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(Option<&str>) -> Result<Arc<dyn FaultModel>, FaultError> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, spec: &str) -> Result<Arc<dyn FaultModel>, FaultError> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| FaultError::UnknownModel(spec.to_string()))?;
        factory(arg)
    }
}

/// Where in the pipeline the fault strikes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    /// Right after ShiftRows of round `Nr - 1`.
    PenultimateShiftRows,
    /// Anywhere between MixColumns of rounds `Nr - 2` and `Nr - 1`: one of the
    /// three intermediate states there, picked uniformly.
    LastMixWindow,
    /// Entering MixColumns of round `Nr - 2` (after its ShiftRows). The fault
    /// reaches all sixteen output bytes.
    DeepBeforeMix,
}

impl Location {
    /// Candidate injection points for this location.
    pub fn points(self, variant: Variant) -> Vec<StepPoint> {
        let nr = variant.nr();
        match self {
            Location::PenultimateShiftRows => vec![StepPoint::new(nr - 1, Step::ShiftRows)],
            Location::LastMixWindow => vec![
                StepPoint::new(nr - 2, Step::AddRoundKey),
                StepPoint::new(nr - 1, Step::SubBytes),
                StepPoint::new(nr - 1, Step::ShiftRows),
            ],
            Location::DeepBeforeMix => vec![StepPoint::new(nr - 2, Step::ShiftRows)],
        }
    }

    /// Distance from the end in MixColumns operations: 1 for faults feeding the
    /// last MixColumns, 2 for the deep fault.
    pub fn round_offset(self) -> usize {
        match self {
            Location::PenultimateShiftRows | Location::LastMixWindow => 1,
            Location::DeepBeforeMix => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ByteSelector {
    Fixed(usize),
    Random,
}

#[derive(Debug, Clone)]
pub struct FaultSpec {
    pub location: Location,
    pub byte: ByteSelector,
    pub model: Arc<dyn FaultModel>,
}

impl FaultSpec {
    pub fn new(location: Location, byte: ByteSelector, model: Arc<dyn FaultModel>) -> Self {
        FaultSpec {
            location,
            byte,
            model,
        }
    }

    fn validate(&self) -> Result<(), FaultError> {
        match self.byte {
            ByteSelector::Fixed(b) if b >= BLOCK_LEN => Err(FaultError::ByteIndex(b)),
            _ => Ok(()),
        }
    }
}

/// The fault as it actually happened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub round: usize,
    pub step: Step,
    pub byte_index: usize,
    pub model: String,
    pub original: u8,
    pub value: u8,
}

impl GroundTruth {
    pub fn point(&self) -> StepPoint {
        StepPoint::new(self.round, self.step)
    }

    /// XOR difference introduced at the injection point.
    pub fn epsilon(&self) -> u8 {
        self.original ^ self.value
    }

    /// Index of the faulted byte as it enters the last MixColumns, when the
    /// fault struck inside that window.
    pub fn last_mix_input_byte(&self, variant: Variant) -> Option<usize> {
        let nr = variant.nr();
        let (row, col) = (self.byte_index % 4, self.byte_index / 4);
        match (self.round, self.step) {
            (r, Step::ShiftRows) if r == nr - 1 => Some(self.byte_index),
            (r, Step::SubBytes) if r == nr - 1 => Some(position(row, (col + 4 - row) % 4)),
            (r, Step::AddRoundKey) if r == nr - 2 => Some(position(row, (col + 4 - row) % 4)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultyRun {
    pub plaintext: [u8; BLOCK_LEN],
    pub correct: [u8; BLOCK_LEN],
    pub faulty: [u8; BLOCK_LEN],
    pub truth: GroundTruth,
    pub seed: u64,
}

fn inject_with_schedule(
    ks: &KeySchedule,
    plaintext: &State,
    spec: &FaultSpec,
    seed: u64,
) -> Result<FaultyRun, FaultError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = spec.location.points(ks.variant());
    let point = points[rng.gen_range(0..points.len())];
    let byte_index = match spec.byte {
        ByteSelector::Fixed(b) => b,
        ByteSelector::Random => rng.gen_range(0..BLOCK_LEN),
    };

    let correct = encrypt_state(ks, plaintext);
    let mut outcome: Option<Result<(u8, u8), FaultError>> = None;
    let faulty = run_rounds(ks, plaintext, |p, s| {
        if p == point {
            let original = s.0[byte_index];
            let res = spec.model.corrupt(original, &mut rng);
            if let Ok(v) = res {
                s.0[byte_index] = v;
            }
            outcome = Some(res.map(|v| (original, v)));
        }
    });
    let (original, value) = outcome.expect("injection point lies on the pipeline")?;
    if original == value || faulty == correct {
        return Err(FaultError::NoEffect {
            model: spec.model.name(),
            original,
        });
    }
    Ok(FaultyRun {
        plaintext: plaintext.0,
        correct: correct.0,
        faulty: faulty.0,
        truth: GroundTruth {
            round: point.round,
            step: point.step,
            byte_index,
            model: spec.model.name(),
            original,
            value,
        },
        seed,
    })
}

/// Encrypts `plaintext` once cleanly and once with the fault described by
/// `spec`. Deterministic in `seed`.
pub fn inject(
    key: &[u8],
    plaintext: &[u8],
    spec: &FaultSpec,
    seed: u64,
) -> Result<FaultyRun, FaultError> {
    let ks = KeySchedule::new(key)?;
    let pt = State::from_slice(plaintext)?;
    inject_with_schedule(&ks, &pt, spec, seed)
}

/// Re-runs the faulty encryption from the recorded ground truth.
pub fn replay(key: &[u8], run: &FaultyRun) -> Result<[u8; BLOCK_LEN], FaultError> {
    let ks = KeySchedule::new(key)?;
    let truth = &run.truth;
    let mut matched = false;
    let out = run_rounds(&ks, &State(run.plaintext), |p, s| {
        if p == truth.point() {
            matched = s.0[truth.byte_index] == truth.original;
            s.0[truth.byte_index] = truth.value;
        }
    });
    if !matched {
        return Err(FaultError::TruthMismatch);
    }
    Ok(out.0)
}

/// Difference between the faulty and correct states entering the MixColumns of
/// `round`. Only meaningful for simulated runs; used to check analysis results
/// against ground truth.
pub fn mix_input_difference(
    key: &[u8],
    run: &FaultyRun,
    round: usize,
) -> Result<State, FaultError> {
    let ks = KeySchedule::new(key)?;
    let target = StepPoint::new(round, Step::ShiftRows);
    let truth = &run.truth;
    let mut clean = State::default();
    run_rounds(&ks, &State(run.plaintext), |p, s| {
        if p == target {
            clean = *s;
        }
    });
    let mut dirty = State::default();
    run_rounds(&ks, &State(run.plaintext), |p, s| {
        if p == truth.point() {
            s.0[truth.byte_index] = truth.value;
        }
        if p == target {
            dirty = *s;
        }
    });
    Ok(clean.xor(&dirty))
}

/// Mixes a campaign seed with a run index and attempt number (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: usize, attempt: usize) -> u64 {
    let mut z = master
        .wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((attempt as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The plaintext a campaign run draws from its sub-seed.
pub fn campaign_plaintext(sub_seed: u64) -> [u8; BLOCK_LEN] {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
    rng.set_stream(1);
    let mut pt = [0u8; BLOCK_LEN];
    rng.fill_bytes(&mut pt);
    pt
}

/// `n` faulty runs over fresh random plaintexts, reproducible from `seed`.
/// Runs whose fault has no effect are re-drawn with a new plaintext, up to
/// [`MAX_RETRIES`] times.
pub fn make_campaign(
    key: &[u8],
    n: usize,
    spec: &FaultSpec,
    seed: u64,
) -> Result<Vec<FaultyRun>, FaultError> {
    if n == 0 {
        return Err(FaultError::EmptyCampaign);
    }
    spec.validate()?;
    let ks = KeySchedule::new(key)?;
    (0..n)
        .into_par_iter()
        .map(|index| {
            for attempt in 0..=MAX_RETRIES {
                let sub_seed = derive_seed(seed, index, attempt);
                let pt = State(campaign_plaintext(sub_seed));
                match inject_with_schedule(&ks, &pt, spec, sub_seed) {
                    Ok(run) => return Ok(run),
                    Err(e) if e.is_retryable() => {
                        log::debug!("run {index} attempt {attempt}: {e}");
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(FaultError::RetriesExhausted {
                index,
                attempts: MAX_RETRIES + 1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::{from_hex, to_hex};

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        (
            from_hex("2B7E151628AED2A6ABF7158809CF4F3C").unwrap(),
            from_hex("3243F6A8885A308D313198A2E0370734").unwrap(),
        )
    }

    fn xor_spec(eps: u8, byte: usize) -> FaultSpec {
        FaultSpec::new(
            Location::PenultimateShiftRows,
            ByteSelector::Fixed(byte),
            Arc::new(XorFault::new(eps).unwrap()),
        )
    }

    #[test]
    fn reference_fault_fixture() {
        let (key, pt) = fixture();
        let run = inject(&key, &pt, &xor_spec(0x1E, 0), 0).unwrap();
        assert_eq!(to_hex(&run.faulty), "DE25841D02DC0962DC11C297193B0B32");
        assert_eq!(run.truth.original, 0x87);
        assert_eq!(run.truth.value, 0x99);
        assert_eq!(run.truth.round, 9);
        assert_eq!(replay(&key, &run).unwrap(), run.faulty);
    }

    #[test]
    fn registry_parses_models() {
        let reg = FaultModelRegistry::with_builtins();
        assert_eq!(reg.create("xor:1E").unwrap().name(), "xor:1E");
        assert_eq!(reg.create("random").unwrap().name(), "random");
        assert_eq!(reg.create("stuckFF").unwrap().name(), "stuckFF");
        assert_eq!(reg.create("stuck00").unwrap().name(), "stuck00");
        assert_eq!(reg.create("xor:00").unwrap_err(), FaultError::ZeroDifference);
        assert!(matches!(reg.create("xor:1"), Err(FaultError::ModelArgument { .. })));
        assert!(matches!(reg.create("xor"), Err(FaultError::ModelArgument { .. })));
        assert!(matches!(reg.create("random:5"), Err(FaultError::ModelArgument { .. })));
        assert!(matches!(reg.create("laser"), Err(FaultError::UnknownModel(_))));
        let names: Vec<_> = reg.names().collect();
        assert_eq!(names, ["random", "stuck00", "stuckFF", "xor"]);
    }

    #[test]
    fn registry_accepts_custom_models() {
        #[derive(Debug)]
        struct FlipLow;
        impl FaultModel for FlipLow {
            fn name(&self) -> String {
                "fliplow".into()
            }
            fn corrupt(&self, original: u8, _: &mut dyn RngCore) -> Result<u8, FaultError> {
                Ok(original ^ 1)
            }
        }
        let mut reg = FaultModelRegistry::with_builtins();
        reg.register("fliplow", |_| Ok(Arc::new(FlipLow)));
        let (key, pt) = fixture();
        let spec = FaultSpec::new(
            Location::PenultimateShiftRows,
            ByteSelector::Fixed(3),
            reg.create("fliplow").unwrap(),
        );
        let run = inject(&key, &pt, &spec, 1).unwrap();
        assert_eq!(run.truth.epsilon(), 1);
    }

    #[test]
    fn stuck_at_without_effect_is_rejected() {
        let (key, pt) = fixture();
        // byte 0 after ShiftRows of round 9 is 0x87
        let spec = FaultSpec::new(
            Location::PenultimateShiftRows,
            ByteSelector::Fixed(0),
            Arc::new(StuckAt::new(0x87)),
        );
        let err = inject(&key, &pt, &spec, 0).unwrap_err();
        assert!(err.is_retryable());
    }

    #[test]
    fn bad_byte_index() {
        let (key, pt) = fixture();
        let err = inject(&key, &pt, &xor_spec(1, 16), 0).unwrap_err();
        assert_eq!(err, FaultError::ByteIndex(16));
    }

    #[test]
    fn random_replace_always_changes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for original in 0..=255u8 {
            for _ in 0..8 {
                assert_ne!(RandomReplace.corrupt(original, &mut rng).unwrap(), original);
            }
        }
    }

    #[test]
    fn campaign_base_case_matches_inject() {
        let (key, _) = fixture();
        let spec = FaultSpec::new(
            Location::LastMixWindow,
            ByteSelector::Random,
            Arc::new(RandomReplace),
        );
        let runs = make_campaign(&key, 1, &spec, 42).unwrap();
        let sub = derive_seed(42, 0, 0);
        let single = inject(&key, &campaign_plaintext(sub), &spec, sub).unwrap();
        assert_eq!(runs, vec![single]);
        assert_eq!(make_campaign(&key, 0, &spec, 42), Err(FaultError::EmptyCampaign));
    }

    #[test]
    fn campaign_is_deterministic() {
        let (key, _) = fixture();
        let spec = FaultSpec::new(
            Location::DeepBeforeMix,
            ByteSelector::Random,
            Arc::new(StuckAt::new(0)),
        );
        let a = make_campaign(&key, 20, &spec, 7).unwrap();
        let b = make_campaign(&key, 20, &spec, 7).unwrap();
        assert_eq!(a, b);
        let c = make_campaign(&key, 20, &spec, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mix_input_difference_is_single_byte() {
        let (key, _) = fixture();
        let spec = FaultSpec::new(
            Location::LastMixWindow,
            ByteSelector::Random,
            Arc::new(RandomReplace),
        );
        for run in make_campaign(&key, 30, &spec, 11).unwrap() {
            let d = mix_input_difference(&key, &run, 9).unwrap();
            assert_eq!(d.0.iter().filter(|&&b| b != 0).count(), 1);
        }
    }
}
