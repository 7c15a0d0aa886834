//! Properties of the key-recovery attack against simulated campaigns.

use dfa_core::aes::{expand_key, Variant};
use dfa_core::analyzer::{
    analyze_pair, analyze_pair_with, column_image, run_attack, run_attack_with, AnalysisError,
    AttackPair, AttackStatus, ByteUnion, CandidateTracker, ColumnJoint, LocationHint,
    LocationMode, PairReport,
};
use dfa_core::fault::{make_campaign, ByteSelector, FaultModelRegistry, FaultSpec, FaultyRun, Location};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(location: Location, byte: ByteSelector, model: &str) -> FaultSpec {
    let model = FaultModelRegistry::with_builtins().create(model).unwrap();
    FaultSpec::new(location, byte, model)
}

fn random_key(rng: &mut ChaCha8Rng, variant: Variant) -> Vec<u8> {
    let mut k = vec![0u8; variant.key_len()];
    rng.fill_bytes(&mut k);
    k
}

fn last_round_key(key: &[u8]) -> [u8; 16] {
    expand_key(key).unwrap().last_round_key().0
}

fn hint(run: &FaultyRun, variant: Variant, mode: LocationMode) -> LocationHint {
    match mode {
        LocationMode::Known => LocationHint::Known(run.truth.last_mix_input_byte(variant).unwrap()),
        LocationMode::Unknown => LocationHint::Unknown,
    }
}

fn reports(key: &[u8], runs: &[FaultyRun], mode: LocationMode) -> Vec<PairReport> {
    let variant = Variant::from_key_len(key.len()).unwrap();
    runs.iter()
        .map(|r| analyze_pair(&r.correct, &r.faulty, hint(r, variant, mode)).unwrap())
        .collect()
}

/// The true key byte survives every pair and every accumulation step.
#[test]
fn true_key_is_never_eliminated() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut checked = 0;
    for trial in 0..25 {
        let key = random_key(&mut rng, Variant::Aes128);
        let k10 = last_round_key(&key);
        let s = spec(Location::LastMixWindow, ByteSelector::Random, "random");
        let runs = make_campaign(&key, 40, &s, trial).unwrap();
        for mode in [LocationMode::Known, LocationMode::Unknown] {
            let mut tracker = CandidateTracker::new();
            for report in reports(&key, &runs, mode) {
                for (i, set) in report.constrained() {
                    assert!(set.contains(k10[i]), "pair set misses byte {i}");
                }
                for col in &report.columns {
                    let truth: [u8; 4] = col.positions.map(|p| k10[p]);
                    assert!(col.tuples.as_ref().unwrap().contains(truth));
                }
                tracker.accumulate(&report).unwrap();
                for (i, &k) in k10.iter().enumerate() {
                    if let Some(set) = tracker.set(i) {
                        assert!(set.contains(k));
                    }
                }
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 2000);
}

#[test]
fn deep_faults_keep_the_true_key() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..10 {
        let key = random_key(&mut rng, Variant::Aes128);
        let k10 = last_round_key(&key);
        let s = spec(Location::DeepBeforeMix, ByteSelector::Random, "random");
        for run in make_campaign(&key, 10, &s, trial).unwrap() {
            let report = analyze_pair(&run.correct, &run.faulty, LocationHint::Unknown).unwrap();
            assert_eq!(report.columns.len(), 4);
            assert_eq!(report.constrained().count(), 16);
            for (i, set) in report.constrained() {
                assert!(set.contains(k10[i]));
            }
        }
    }
}

#[test]
fn unknown_location_sets_contain_known_location_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let key = random_key(&mut rng, Variant::Aes128);
    let s = spec(Location::LastMixWindow, ByteSelector::Random, "random");
    let runs = make_campaign(&key, 200, &s, 5).unwrap();
    let known = reports(&key, &runs, LocationMode::Known);
    let unknown = reports(&key, &runs, LocationMode::Unknown);
    for (k, u) in known.iter().zip(&unknown) {
        for i in 0..16 {
            match (k.sets[i], u.sets[i]) {
                (Some(ks), Some(us)) => assert!(ks.is_subset(&us)),
                (None, None) => {}
                other => panic!("byte {i} constrained in one mode only: {other:?}"),
            }
        }
    }
}

#[test]
fn candidate_counts_never_grow() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let key = random_key(&mut rng, Variant::Aes128);
    let s = spec(Location::LastMixWindow, ByteSelector::Random, "random");
    let runs = make_campaign(&key, 60, &s, 9).unwrap();
    let mut tracker = CandidateTracker::new();
    let mut previous = [256usize; 16];
    for report in reports(&key, &runs, LocationMode::Unknown) {
        tracker.accumulate(&report).unwrap();
        for (i, prev) in previous.iter_mut().enumerate() {
            let now = tracker.candidate_count(i);
            assert!(now <= *prev);
            *prev = now;
        }
    }
}

#[test]
fn accumulation_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let key = random_key(&mut rng, Variant::Aes128);
    let s = spec(Location::LastMixWindow, ByteSelector::Random, "random");
    let runs = make_campaign(&key, 12, &s, 13).unwrap();
    let reports = reports(&key, &runs, LocationMode::Unknown);
    let fold = |rs: &[PairReport]| {
        let mut t = CandidateTracker::new();
        for r in rs {
            t.accumulate(r).unwrap();
        }
        (*t.sets(), (0..4).map(|c| t.column(c).cloned()).collect::<Vec<_>>())
    };
    let reference = fold(&reports);
    for _ in 0..10 {
        let mut shuffled = reports.clone();
        shuffled.shuffle(&mut rng);
        assert_eq!(fold(&shuffled), reference);
    }
}

#[test]
fn contradiction_leaves_tracker_untouched() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let key = random_key(&mut rng, Variant::Aes128);
    let other = random_key(&mut rng, Variant::Aes128);
    let s = spec(Location::PenultimateShiftRows, ByteSelector::Fixed(0), "random");
    let mut tracker = CandidateTracker::new();
    for r in reports(&key, &make_campaign(&key, 6, &s, 1).unwrap(), LocationMode::Known) {
        tracker.accumulate(&r).unwrap();
    }
    // Pairs under a different key soon contradict the converged column.
    let foreign = reports(&other, &make_campaign(&other, 6, &s, 2).unwrap(), LocationMode::Known);
    let mut contradicted = false;
    for r in &foreign {
        let before = tracker.clone();
        if let Err(e) = tracker.accumulate(r) {
            assert!(matches!(e, AnalysisError::Contradiction(_)));
            assert_eq!(tracker, before);
            contradicted = true;
        }
    }
    assert!(contradicted, "a foreign pair contradicts");
}

#[test]
fn single_column_campaign_pins_only_that_column() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let key = random_key(&mut rng, Variant::Aes128);
    let k10 = last_round_key(&key);
    let s = spec(Location::PenultimateShiftRows, ByteSelector::Fixed(2), "random");
    let pairs: Vec<AttackPair> = make_campaign(&key, 20, &s, 3)
        .unwrap()
        .iter()
        .map(|r| AttackPair::from_run(r, Variant::Aes128))
        .collect();
    let result = run_attack(&pairs, LocationMode::Unknown, Variant::Aes128).unwrap();
    assert_eq!(result.status, AttackStatus::Partial);
    assert!(result.cipher_key.is_none());
    let column: Vec<usize> = column_image(0).to_vec();
    for (i, audit) in result.per_byte.iter().enumerate() {
        if column.contains(&i) {
            assert_eq!(audit.value, Some(k10[i]), "byte {i}");
        } else {
            assert_eq!(audit.candidate_count, 256, "byte {i}");
            assert_eq!(audit.value, None);
        }
    }
}

#[test]
fn longer_keys_yield_last_round_key_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for variant in [Variant::Aes192, Variant::Aes256] {
        let key = random_key(&mut rng, variant);
        let s = spec(Location::LastMixWindow, ByteSelector::Random, "random");
        let pairs: Vec<AttackPair> = make_campaign(&key, 60, &s, 4)
            .unwrap()
            .iter()
            .map(|r| AttackPair::from_run(r, variant))
            .collect();
        let result = run_attack(&pairs, LocationMode::Unknown, variant).unwrap();
        assert_eq!(result.status, AttackStatus::Converged, "{variant}");
        assert_eq!(result.last_round_key, Some(last_round_key(&key)));
        assert!(result.last_round_key_only());
    }
}

#[test]
fn strategies_agree_on_the_key() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let key = random_key(&mut rng, Variant::Aes128);
    let s = spec(Location::PenultimateShiftRows, ByteSelector::Random, "stuckFF");
    let runs = make_campaign(&key, 80, &s, 8).unwrap();
    let pairs: Vec<AttackPair> = runs.iter().map(|r| AttackPair::from_run(r, Variant::Aes128)).collect();
    let joint = run_attack_with(&pairs, LocationMode::Known, Variant::Aes128, &ColumnJoint).unwrap();
    let union = run_attack_with(&pairs, LocationMode::Known, Variant::Aes128, &ByteUnion).unwrap();
    assert_eq!(joint.cipher_key.as_deref(), Some(key.as_slice()));
    assert_eq!(union.cipher_key.as_deref(), Some(key.as_slice()));
    assert!(joint.pairs_used <= union.pairs_used);

    // One pair: identical per-byte sets.
    let r = &runs[0];
    let h = LocationHint::Known(r.truth.last_mix_input_byte(Variant::Aes128).unwrap());
    let a = analyze_pair_with(&r.correct, &r.faulty, h, &ColumnJoint).unwrap();
    let b = analyze_pair_with(&r.correct, &r.faulty, h, &ByteUnion).unwrap();
    assert_eq!(a.sets, b.sets);
}

#[test]
fn duplicates_and_junk_are_skipped() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let key = random_key(&mut rng, Variant::Aes128);
    let s = spec(Location::LastMixWindow, ByteSelector::Random, "random");
    let mut pairs: Vec<AttackPair> = make_campaign(&key, 40, &s, 6)
        .unwrap()
        .iter()
        .map(|r| AttackPair::from_run(r, Variant::Aes128))
        .collect();
    let mut junk = pairs[0];
    junk.faulty = junk.correct;
    junk.faulty[0] ^= 1;
    junk.faulty[1] ^= 1;
    pairs.insert(0, junk);
    pairs.insert(1, pairs[2]);
    let result = run_attack(&pairs, LocationMode::Unknown, Variant::Aes128).unwrap();
    assert_eq!(result.status, AttackStatus::Converged);
    assert_eq!(result.cipher_key.as_deref(), Some(key.as_slice()));
    assert_eq!(result.duplicates_dropped, 1);
    assert!(result.pairs_skipped.iter().any(|s| s.index == 0));
}

#[test]
fn known_mode_requires_a_location() {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let key = random_key(&mut rng, Variant::Aes128);
    let s = spec(Location::LastMixWindow, ByteSelector::Random, "random");
    let pairs: Vec<AttackPair> = make_campaign(&key, 5, &s, 2)
        .unwrap()
        .iter()
        .map(|r| AttackPair {
            fault_byte: None,
            ..AttackPair::from_run(r, Variant::Aes128)
        })
        .collect();
    let result = run_attack(&pairs, LocationMode::Known, Variant::Aes128).unwrap();
    assert_eq!(result.status, AttackStatus::Partial);
    assert_eq!(result.pairs_skipped.len(), 5);
    assert_eq!(run_attack(&[], LocationMode::Unknown, Variant::Aes128).unwrap_err(), AnalysisError::NoPairs);
}
