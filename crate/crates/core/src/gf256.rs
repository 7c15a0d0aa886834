//! Arithmetic in GF(2^8) = GF(2)[x] / (x^8 + x^4 + x^3 + x + 1).
//!
//! Besides the field operations this module holds the affine S-box built
//! from the field inverse, and the GF(2)-subspace machinery the fault
//! analysis relies on: `E_1`, the image of `t -> t^2 + t`, its scaled
//! copies `E_λ = λ·E_1`, and a table-driven solver for `t^2 + t = θ`.
//!
//! Bit `i` of a byte is the coefficient of `x^i` throughout.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign};
use std::sync::LazyLock;

use thiserror::Error;

/// Low byte of the reduction polynomial `x^8 + x^4 + x^3 + x + 1`.
const REDUCTION: u8 = 0x1B;

/// The additive constant of the S-box.
pub const SBOX_CONSTANT: GfElem = GfElem(0x63);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("subspace intersection needs between 1 and 4 scalars, got {0}")]
    BadArity(usize),
}

/// A byte interpreted as an element of GF(2^8).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct GfElem(pub u8);

impl GfElem {
    pub const ZERO: GfElem = GfElem(0);
    pub const ONE: GfElem = GfElem(1);

    #[inline]
    pub const fn value(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Carry-less shift-and-reduce multiplication.
    pub const fn mul(self, rhs: GfElem) -> GfElem {
        let mut a = self.0;
        let mut b = rhs.0;
        let mut acc = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                acc ^= a;
            }
            let carry = a & 0x80;
            a <<= 1;
            if carry != 0 {
                a ^= REDUCTION;
            }
            b >>= 1;
        }
        GfElem(acc)
    }

    pub const fn square(self) -> GfElem {
        self.mul(self)
    }

    pub fn pow(self, mut exp: u32) -> GfElem {
        let mut base = self;
        let mut acc = GfElem::ONE;
        while exp != 0 {
            if exp & 1 != 0 {
                acc *= base;
            }
            base = base.square();
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse, computed as `x^254`.
    pub fn inv(self) -> Result<GfElem, FieldError> {
        if self.is_zero() {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(254))
    }

    /// Inverse with the S-box convention `0 -> 0`.
    pub fn inv_or_zero(self) -> GfElem {
        self.inv().unwrap_or(GfElem::ZERO)
    }

    #[inline]
    pub fn bit(self, i: u32) -> bool {
        (self.0 >> i) & 1 == 1
    }
}

impl fmt::Debug for GfElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "'{:02X}'", self.0)
    }
}

impl fmt::Display for GfElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02X}", self.0)
    }
}

impl From<u8> for GfElem {
    fn from(v: u8) -> Self {
        GfElem(v)
    }
}

impl From<GfElem> for u8 {
    fn from(v: GfElem) -> Self {
        v.0
    }
}

// Addition in GF(2^8) is XOR.
#[allow(clippy::suspicious_arithmetic_impl)]
impl Add for GfElem {
    type Output = GfElem;
    #[inline]
    fn add(self, rhs: GfElem) -> GfElem {
        GfElem(self.0 ^ rhs.0)
    }
}

#[allow(clippy::suspicious_op_assign_impl)]
impl AddAssign for GfElem {
    fn add_assign(&mut self, rhs: GfElem) {
        self.0 ^= rhs.0;
    }
}

impl Mul for GfElem {
    type Output = GfElem;
    #[inline]
    fn mul(self, rhs: GfElem) -> GfElem {
        GfElem::mul(self, rhs)
    }
}

impl MulAssign for GfElem {
    fn mul_assign(&mut self, rhs: GfElem) {
        *self = *self * rhs;
    }
}

pub fn gf_add(a: GfElem, b: GfElem) -> GfElem {
    a + b
}

pub fn gf_mul(a: GfElem, b: GfElem) -> GfElem {
    a * b
}

pub fn gf_inv(a: GfElem) -> Result<GfElem, FieldError> {
    a.inv()
}

/// An 8x8 matrix over GF(2). Row `i` is stored as a mask whose bit `j` is the
/// entry at column `j`; the matrix acts on a byte seen as the column vector
/// `(b0, ..., b7)^T`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct BitMatrix8 {
    rows: [u8; 8],
}

impl BitMatrix8 {
    pub const IDENTITY: BitMatrix8 = BitMatrix8 {
        rows: [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80],
    };

    pub const fn from_rows(rows: [u8; 8]) -> Self {
        BitMatrix8 { rows }
    }

    /// Builds a matrix from rows written left to right as columns 0..7.
    pub fn from_bit_rows(rows: [[u8; 8]; 8]) -> Self {
        let mut out = [0u8; 8];
        for (i, row) in rows.iter().enumerate() {
            for (j, &bit) in row.iter().enumerate() {
                if bit != 0 {
                    out[i] |= 1 << j;
                }
            }
        }
        BitMatrix8 { rows: out }
    }

    pub fn rows(&self) -> [u8; 8] {
        self.rows
    }

    pub fn apply(&self, x: GfElem) -> GfElem {
        let mut out = 0u8;
        for (i, row) in self.rows.iter().enumerate() {
            if (row & x.0).count_ones() & 1 == 1 {
                out |= 1 << i;
            }
        }
        GfElem(out)
    }

    pub fn compose(&self, rhs: &BitMatrix8) -> BitMatrix8 {
        // (self * rhs) column j = self applied to rhs column j
        let mut rows = [0u8; 8];
        for j in 0..8 {
            let col = rhs.column(j);
            let image = self.apply(col);
            for (i, row) in rows.iter_mut().enumerate() {
                if image.bit(i as u32) {
                    *row |= 1 << j;
                }
            }
        }
        BitMatrix8 { rows }
    }

    fn column(&self, j: usize) -> GfElem {
        let mut v = 0u8;
        for (i, row) in self.rows.iter().enumerate() {
            if (row >> j) & 1 == 1 {
                v |= 1 << i;
            }
        }
        GfElem(v)
    }

    /// Gauss-Jordan inversion over GF(2); `None` when singular.
    pub fn inverse(&self) -> Option<BitMatrix8> {
        let mut left = self.rows;
        let mut right = BitMatrix8::IDENTITY.rows;
        for col in 0..8 {
            let pivot = (col..8).find(|&r| (left[r] >> col) & 1 == 1)?;
            left.swap(col, pivot);
            right.swap(col, pivot);
            for r in 0..8 {
                if r != col && (left[r] >> col) & 1 == 1 {
                    left[r] ^= left[col];
                    right[r] ^= right[col];
                }
            }
        }
        Some(BitMatrix8 { rows: right })
    }
}

pub fn apply_linear(m: &BitMatrix8, x: GfElem) -> GfElem {
    m.apply(x)
}

/// The linear part of the S-box affine map.
pub static AFFINE: LazyLock<BitMatrix8> = LazyLock::new(|| {
    BitMatrix8::from_bit_rows([
        [1, 0, 0, 0, 1, 1, 1, 1],
        [1, 1, 0, 0, 0, 1, 1, 1],
        [1, 1, 1, 0, 0, 0, 1, 1],
        [1, 1, 1, 1, 0, 0, 0, 1],
        [1, 1, 1, 1, 1, 0, 0, 0],
        [0, 1, 1, 1, 1, 1, 0, 0],
        [0, 0, 1, 1, 1, 1, 1, 0],
        [0, 0, 0, 1, 1, 1, 1, 1],
    ])
});

pub static AFFINE_INV: LazyLock<BitMatrix8> =
    LazyLock::new(|| AFFINE.inverse().expect("affine matrix is invertible"));

struct SboxTables {
    forward: [u8; 256],
    inverse: [u8; 256],
}

static SBOX: LazyLock<SboxTables> = LazyLock::new(|| {
    let mut forward = [0u8; 256];
    let mut inverse = [0u8; 256];
    for x in 0..=255u8 {
        let y = AFFINE.apply(GfElem(x).inv_or_zero()) + SBOX_CONSTANT;
        forward[x as usize] = y.0;
        inverse[y.0 as usize] = x;
    }
    SboxTables { forward, inverse }
});

/// `s(x) = a * x^-1 + b` for `x != 0`, `s(0) = b`.
#[inline]
pub fn sbox(x: GfElem) -> GfElem {
    GfElem(SBOX.forward[x.0 as usize])
}

#[inline]
pub fn inv_sbox(y: GfElem) -> GfElem {
    GfElem(SBOX.inverse[y.0 as usize])
}

#[inline]
pub fn sbox_byte(x: u8) -> u8 {
    SBOX.forward[x as usize]
}

/// Membership in `E_1 = { t^2 + t }`, which is exactly the bytes with bit 7 equal to bit 5.
#[inline]
pub fn in_e1(x: GfElem) -> bool {
    x.bit(7) == x.bit(5)
}

// θ -> smallest root of t^2 + t = θ; 0 flags "no root" except for θ = 0.
static QUADRATIC_ROOTS: LazyLock<[Option<u8>; 256]> = LazyLock::new(|| {
    let mut table = [None; 256];
    for t in 0..=255u8 {
        let e = GfElem(t);
        let theta = (e.square() + e).0 as usize;
        if table[theta].is_none() {
            table[theta] = Some(t);
        }
    }
    table
});

/// Roots `(α, α + 1)` of `t^2 + t = θ`, with `α` the smaller root, or `None`
/// when `θ ∉ E_1`.
pub fn solve_quadratic(theta: GfElem) -> Option<(GfElem, GfElem)> {
    QUADRATIC_ROOTS[theta.0 as usize].map(|alpha| (GfElem(alpha), GfElem(alpha ^ 1)))
}

/// A GF(2)-subspace of GF(2^8), kept both as a membership bitmap and a basis.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GfSubspace {
    members: [bool; 256],
    basis: Vec<GfElem>,
}

impl GfSubspace {
    /// The span of `generators`.
    pub fn span(generators: &[GfElem]) -> Self {
        let mut basis: Vec<GfElem> = Vec::new();
        let mut reduced: Vec<u8> = Vec::new();
        for &g in generators {
            let mut v = g.0;
            for &b in &reduced {
                v = v.min(v ^ b);
            }
            if v != 0 {
                reduced.push(v);
                reduced.sort_unstable_by(|a, b| b.cmp(a));
                basis.push(g);
            }
        }
        let mut members = [false; 256];
        for mask in 0u32..(1 << basis.len()) {
            let mut v = 0u8;
            for (i, b) in basis.iter().enumerate() {
                if (mask >> i) & 1 == 1 {
                    v ^= b.0;
                }
            }
            members[v as usize] = true;
        }
        GfSubspace { members, basis }
    }

    /// `E_1`, the image of `t -> t^2 + t`.
    pub fn e1() -> Self {
        GfSubspace::e_lambda(GfElem::ONE).expect("one is nonzero")
    }

    /// `E_λ = λ·E_1`.
    pub fn e_lambda(lambda: GfElem) -> Result<Self, FieldError> {
        if lambda.is_zero() {
            return Err(FieldError::ZeroInverse);
        }
        let generators: Vec<GfElem> = (0..=255u8)
            .map(GfElem)
            .filter(|&t| in_e1(t))
            .map(|t| lambda * t)
            .collect();
        Ok(GfSubspace::span(&generators))
    }

    pub fn contains(&self, x: GfElem) -> bool {
        self.members[x.0 as usize]
    }

    pub fn members(&self) -> impl Iterator<Item = GfElem> + '_ {
        (0..=255u8).map(GfElem).filter(|&x| self.contains(x))
    }

    pub fn basis(&self) -> &[GfElem] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn len(&self) -> usize {
        1 << self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn intersect(&self, other: &GfSubspace) -> GfSubspace {
        let common: Vec<GfElem> = self.members().filter(|&x| other.contains(x)).collect();
        GfSubspace::span(&common)
    }
}

/// `x ∈ E_λ` iff `λ^-1 x ∈ E_1`, i.e. iff the linear form
/// `x -> bit7(λ^-1 x) + bit5(λ^-1 x)` vanishes. Returns that form as a bit mask
/// over the coordinates of `x`.
fn e_lambda_form(lambda_inv: GfElem) -> u8 {
    let mut form = 0u8;
    for j in 0..8 {
        let image = lambda_inv * GfElem(1 << j);
        if image.bit(7) != image.bit(5) {
            form |= 1 << j;
        }
    }
    form
}

fn gf2_rank(vectors: &[u8]) -> usize {
    let mut reduced: Vec<u8> = Vec::new();
    for &v in vectors {
        let mut v = v;
        for &b in &reduced {
            v = v.min(v ^ b);
        }
        if v != 0 {
            reduced.push(v);
            reduced.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    reduced.len()
}

/// GF(2)-rank of a list of field elements viewed as bit vectors.
pub fn rank_gf2(elems: &[GfElem]) -> usize {
    let raw: Vec<u8> = elems.iter().map(|e| e.0).collect();
    gf2_rank(&raw)
}

/// Dimension over GF(2) of `E_λ1 ∩ ... ∩ E_λn`, computed as 8 minus the rank of
/// the defining linear forms.
pub fn subspace_dim(lambdas: &[GfElem]) -> Result<usize, FieldError> {
    if lambdas.is_empty() || lambdas.len() > 4 {
        return Err(FieldError::BadArity(lambdas.len()));
    }
    let forms = lambdas
        .iter()
        .map(|l| l.inv().map(e_lambda_form))
        .collect::<Result<Vec<u8>, _>>()?;
    Ok(8 - gf2_rank(&forms))
}
