//! Solving `s(x + c·ε) + s(x) = ε'` for the injected fault `ε` and the S-box
//! input `x`.
//!
//! With `λ = c·(a⁻¹ * ε')`, the faults consistent with one observed
//! differential are exactly `{ (λ·t)⁻¹ : t ∈ E_1* }`, 127 values. For a fixed
//! `ε` the inputs `x = c·ε·t` come from the roots of `t² + t = θ` with
//! `θ = (λ·ε)⁻¹`.

use std::sync::LazyLock;

use super::byteset::ByteSet;
use super::AnalysisError;
use crate::gf256::{in_e1, sbox, solve_quadratic, GfElem, AFFINE_INV, SBOX_CONSTANT};

fn check_inputs(c: GfElem, eps_prime: GfElem) -> Result<(), AnalysisError> {
    if !(1..=3).contains(&c.0) {
        return Err(AnalysisError::Coefficient(c.0));
    }
    if eps_prime.is_zero() {
        return Err(AnalysisError::ZeroDifferential);
    }
    Ok(())
}

/// `c·(a⁻¹ * ε')`
fn lambda(c: GfElem, eps_prime: GfElem) -> GfElem {
    c * AFFINE_INV.apply(eps_prime)
}

fn fault_set_by_formula(c: GfElem, eps_prime: GfElem) -> ByteSet {
    let l = lambda(c, eps_prime);
    (1..=255u8)
        .map(GfElem)
        .filter(|&t| in_e1(t))
        .map(|t| (l * t).inv_or_zero().0)
        .collect()
}

static FAULT_SETS: LazyLock<Vec<ByteSet>> = LazyLock::new(|| {
    let mut table = vec![ByteSet::empty(); 3 * 256];
    for c in 1..=3u8 {
        for e in 1..=255u8 {
            table[(c as usize - 1) * 256 + e as usize] = fault_set_by_formula(GfElem(c), GfElem(e));
        }
    }
    table
});

/// `S_{c,ε'}`: every injected fault `ε` for which some `x` satisfies the
/// equation.
pub fn fault_candidates(c: GfElem, eps_prime: GfElem) -> Result<ByteSet, AnalysisError> {
    check_inputs(c, eps_prime)?;
    Ok(FAULT_SETS[(c.0 as usize - 1) * 256 + eps_prime.0 as usize])
}

/// The same set by direct enumeration over all `(x, ε)`.
pub fn brute_force_fault_set(c: GfElem, eps_prime: GfElem) -> Result<ByteSet, AnalysisError> {
    check_inputs(c, eps_prime)?;
    let mut out = ByteSet::empty();
    for eps in 1..=255u8 {
        let shift = c * GfElem(eps);
        if (0..=255u8).any(|x| sbox(GfElem(x) + shift) + sbox(GfElem(x)) == eps_prime) {
            out.insert(eps);
        }
    }
    Ok(out)
}

/// Intersection of fault sets, one per observed differential byte.
pub fn intersect_fault_sets(sets: &[ByteSet]) -> Result<ByteSet, AnalysisError> {
    let s = sets
        .iter()
        .fold(ByteSet::full(), |acc, s| acc.intersection(s));
    if s.is_empty() {
        return Err(AnalysisError::EmptyFaultSet);
    }
    Ok(s)
}

/// S-box inputs `x` solving the equation for a fixed fault `ε`: two values, or
/// four when `θ = 1` (then `0` and `c·ε` also work).
pub fn sbox_inputs(
    c: GfElem,
    eps_prime: GfElem,
    eps: GfElem,
) -> Result<Vec<GfElem>, AnalysisError> {
    check_inputs(c, eps_prime)?;
    let ce = c * eps;
    let theta = (AFFINE_INV.apply(eps_prime) * ce)
        .inv()
        .map_err(|_| AnalysisError::NotAFault(eps.0))?;
    let (alpha, beta) = solve_quadratic(theta).ok_or(AnalysisError::NotAFault(eps.0))?;
    let mut xs = vec![ce * alpha, ce * beta];
    if theta == GfElem::ONE {
        xs.push(GfElem::ZERO);
        xs.push(ce);
    }
    Ok(xs)
}

/// Candidate last-round-key bytes at a position whose faulty output byte is
/// `faulty_byte`, given the fault `ε`: `s(x) + F[i]` for each solution `x`.
pub fn key_candidates(
    c: GfElem,
    eps_prime: GfElem,
    eps: GfElem,
    faulty_byte: GfElem,
) -> Result<ByteSet, AnalysisError> {
    let xs = sbox_inputs(c, eps_prime, eps)?;
    Ok(xs
        .into_iter()
        .map(|x| {
            if x.is_zero() {
                (SBOX_CONSTANT + faulty_byte).0
            } else {
                (sbox(x) + faulty_byte).0
            }
        })
        .collect())
}
