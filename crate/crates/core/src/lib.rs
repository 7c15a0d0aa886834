//! Differential fault analysis of AES.
//!
//! * [`gf256`]: field arithmetic, the S-box, and the `E_λ` subspaces.
//! * [`aes`]: AES-128/192/256 with a traced, hookable round pipeline.
//! * [`fault`]: fault models and the injection simulator.
//! * [`analyzer`]: candidate sets for the last round key from faulty pairs.
//! * [`key_recovery`]: walks the key schedule back to the cipher key.
//! * [`formats`]: pair files and attack reports.

pub mod aes;
pub mod analyzer;
pub mod fault;
pub mod formats;
pub mod gf256;
pub mod key_recovery;

pub use aes::{encrypt_block, encrypt_traced, expand_key, KeySchedule, State, Step, Variant};
pub use analyzer::{run_attack, AttackResult, CandidateTracker, LocationMode};
pub use fault::{inject, make_campaign, FaultModel, FaultModelRegistry, FaultSpec, FaultyRun};
pub use gf256::GfElem;
pub use key_recovery::{recover_key, FinalKeyMaterial};
