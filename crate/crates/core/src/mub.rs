//! Mutually unbiased bases and the maximally entangled basis for prime d.
//!
//! The d + 1 bases are the computational basis plus the d "phase" bases
//!
//! ```text
//! |m; b> = d^{-1/2} sum_n omega^{b n^2 - 2 m n} |n>
//! ```
//!
//! and the entangled basis is
//!
//! ```text
//! |c, r; s> = d^{-1/2} sum_n omega^{s n^2 - 2 r n} |n>|c - n>.
//! ```
//!
//! For d = 2 the root is `omega = i` with exponents taken mod 4; for odd primes
//! it is `exp(2 pi i / d)` with exponents mod d. Exponents are reduced in integer
//! arithmetic before any trigonometry happens.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{StateVector, C64};

/// Primes this crate supports; larger d keeps the algebra the same but leaves `MAX_DIM`.
pub const SUPPORTED_PRIMES: [u32; 5] = [2, 3, 5, 7, 11];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MubError {
    #[error("dimension {0} is not a supported prime (expected one of 2, 3, 5, 7, 11)")]
    UnsupportedDimension(u32),
    #[error("residue {value} is out of range for d = {d}")]
    ResidueOutOfRange { value: u32, d: u32 },
    #[error("{0} has no inverse modulo {1}")]
    NoInverse(i64, u32),
}

/// A prime dimension in `SUPPORTED_PRIMES`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct PrimeDim(u32);

impl PrimeDim {
    pub fn new(d: u32) -> Result<Self, MubError> {
        if SUPPORTED_PRIMES.contains(&d) {
            Ok(Self(d))
        } else {
            Err(MubError::UnsupportedDimension(d))
        }
    }

    pub const QUBIT: PrimeDim = PrimeDim(2);

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_usize(self) -> usize {
        self.0 as usize
    }

    /// Reduces any integer into `[0, d)`.
    pub fn reduce(self, x: i64) -> u32 {
        x.rem_euclid(self.0 as i64) as u32
    }

    pub fn check_residue(self, value: u32) -> Result<u32, MubError> {
        if value < self.0 {
            Ok(value)
        } else {
            Err(MubError::ResidueOutOfRange { value, d: self.0 })
        }
    }

    /// All d + 1 basis choices in canonical order: computational first, then phases 0..d.
    pub fn basis_labels(self) -> Vec<BasisLabel> {
        core::iter::once(BasisLabel::Computational)
            .chain((0..self.0).map(BasisLabel::Phase))
            .collect()
    }
}

impl TryFrom<u32> for PrimeDim {
    type Error = MubError;

    fn try_from(d: u32) -> Result<Self, MubError> {
        PrimeDim::new(d)
    }
}

impl From<PrimeDim> for u32 {
    fn from(d: PrimeDim) -> u32 {
        d.0
    }
}

impl fmt::Display for PrimeDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One of the d + 1 measurement bases the King may pick.
///
/// The derived ordering (computational first, then phases ascending) is the
/// tie-break order used when decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BasisLabel {
    Computational,
    Phase(u32),
}

impl BasisLabel {
    pub fn validate(self, d: PrimeDim) -> Result<Self, MubError> {
        if let BasisLabel::Phase(b) = self {
            d.check_residue(b)?;
        }
        Ok(self)
    }

    /// Position in `PrimeDim::basis_labels`.
    pub fn ordinal(self) -> usize {
        match self {
            BasisLabel::Computational => 0,
            BasisLabel::Phase(b) => b as usize + 1,
        }
    }

    /// Pauli name for qubits: z, x, y.
    pub fn pauli_name(self) -> Option<&'static str> {
        match self {
            BasisLabel::Computational => Some("z"),
            BasisLabel::Phase(0) => Some("x"),
            BasisLabel::Phase(1) => Some("y"),
            BasisLabel::Phase(_) => None,
        }
    }
}

/// Coordinates `(c, r; s)` of a maximally entangled basis state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntangledLabel {
    pub c: u32,
    pub r: u32,
    pub s: u32,
}

impl EntangledLabel {
    pub fn new(d: PrimeDim, c: u32, r: u32, s: u32) -> Result<Self, MubError> {
        Ok(Self {
            c: d.check_residue(c)?,
            r: d.check_residue(r)?,
            s: d.check_residue(s)?,
        })
    }

    pub fn validate(self, d: PrimeDim) -> Result<Self, MubError> {
        Self::new(d, self.c, self.r, self.s)
    }

    pub fn outcome(self) -> Outcome {
        Outcome { c: self.c, r: self.r }
    }
}

/// The `(c', r')` pair Alice reads out; the `s` of her basis is fixed by the preparation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Outcome {
    pub c: u32,
    pub r: u32,
}

impl Outcome {
    /// Flat index `c * d + r`.
    pub fn index(self, d: PrimeDim) -> usize {
        (self.c * d.get() + self.r) as usize
    }

    pub fn from_index(d: PrimeDim, index: usize) -> Self {
        let d = d.as_usize();
        Self {
            c: (index / d) as u32,
            r: (index % d) as u32,
        }
    }

    pub fn all(d: PrimeDim) -> impl Iterator<Item = Outcome> {
        (0..d.as_usize() * d.as_usize()).map(move |k| Outcome::from_index(d, k))
    }
}

/// The root of unity used in the phase exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRoot {
    pub omega: C64,
    pub exponent_modulus: u32,
}

impl PhaseRoot {
    /// `omega^k`, with quarter turns evaluated exactly.
    pub fn pow(&self, k: i64) -> C64 {
        let m = self.exponent_modulus as i64;
        let k = k.rem_euclid(m);
        if (4 * k) % m == 0 {
            return match (4 * k) / m {
                0 => C64::new(1.0, 0.0),
                1 => C64::new(0.0, 1.0),
                2 => C64::new(-1.0, 0.0),
                _ => C64::new(0.0, -1.0),
            };
        }
        let theta = 2.0 * PI * k as f64 / m as f64;
        C64::new(theta.cos(), theta.sin())
    }
}

pub fn phase_root(d: PrimeDim) -> PhaseRoot {
    if d.get() == 2 {
        PhaseRoot {
            omega: C64::new(0.0, 1.0),
            exponent_modulus: 4,
        }
    } else {
        let theta = 2.0 * PI / d.get() as f64;
        PhaseRoot {
            omega: C64::new(theta.cos(), theta.sin()),
            exponent_modulus: d.get(),
        }
    }
}

fn chirp_amplitudes(d: PrimeDim, quadratic: u32, linear: u32) -> Vec<C64> {
    let root = phase_root(d);
    let norm = 1.0 / (d.get() as f64).sqrt();
    (0..d.get() as i64)
        .map(|n| root.pow(quadratic as i64 * n * n - 2 * linear as i64 * n) * norm)
        .collect()
}

/// The m-th vector of basis `b`.
pub fn mub_state(d: PrimeDim, b: BasisLabel, m: u32) -> Result<StateVector, MubError> {
    d.check_residue(m)?;
    b.validate(d)?;
    Ok(match b {
        BasisLabel::Computational => {
            StateVector::basis(d.as_usize(), m as usize).expect("d <= MAX_DIM")
        }
        BasisLabel::Phase(b) => StateVector::from_normalized(chirp_amplitudes(d, b, m)),
    })
}

/// All d vectors of basis `b`, ordered by m.
pub fn mub_basis(d: PrimeDim, b: BasisLabel) -> Result<Vec<StateVector>, MubError> {
    (0..d.get()).map(|m| mub_state(d, b, m)).collect()
}

/// `|c, r; s>` on the d^2-dimensional pair space.
pub fn entangled_state(d: PrimeDim, label: EntangledLabel) -> Result<StateVector, MubError> {
    let label = label.validate(d)?;
    let dd = d.as_usize();
    let coeffs = chirp_amplitudes(d, label.s, label.r);
    let mut amplitudes = alloc::vec![C64::new(0.0, 0.0); dd * dd];
    for (n, a) in coeffs.into_iter().enumerate() {
        let partner = d.reduce(label.c as i64 - n as i64) as usize;
        amplitudes[n * dd + partner] = a;
    }
    Ok(StateVector::from_normalized(amplitudes))
}

/// The d^2 states `|c', r'; s>` ordered by `Outcome::index`.
pub fn entangled_basis(d: PrimeDim, s: u32) -> Result<Vec<StateVector>, MubError> {
    d.check_residue(s)?;
    Outcome::all(d)
        .map(|o| entangled_state(d, EntangledLabel { c: o.c, r: o.r, s }))
        .collect()
}

/// Multiplicative inverse in GF(d).
pub fn gf_inverse(x: i64, d: PrimeDim) -> Result<u32, MubError> {
    let p = d.get() as i64;
    let a = x.rem_euclid(p);
    if a == 0 {
        return Err(MubError::NoInverse(x, d.get()));
    }
    // extended Euclid on (a, p)
    let (mut old_r, mut r) = (a, p);
    let (mut old_s, mut s) = (1i64, 0i64);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    Ok(d.reduce(old_s))
}

/// The four two-qubit Bell states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PhiMinus,
        BellState::PsiPlus,
        BellState::PsiMinus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BellState::PhiPlus => "phi+",
            BellState::PhiMinus => "phi-",
            BellState::PsiPlus => "psi+",
            BellState::PsiMinus => "psi-",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    /// The `(c, r; 0)` label of this Bell state.
    pub fn label(self) -> EntangledLabel {
        let (c, r) = match self {
            BellState::PhiPlus => (0, 0),
            BellState::PhiMinus => (0, 1),
            BellState::PsiPlus => (1, 0),
            BellState::PsiMinus => (1, 1),
        };
        EntangledLabel { c, r, s: 0 }
    }

    pub fn from_outcome(o: Outcome) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.label().outcome() == o)
    }

    pub fn coincidence(self) -> Coincidence {
        match self {
            BellState::PhiPlus => Coincidence::DV,
            BellState::PhiMinus => Coincidence::AV,
            BellState::PsiPlus => Coincidence::DH,
            BellState::PsiMinus => Coincidence::AH,
        }
    }
}

/// A two-detector click: control arm in {D, A}, target arm in {H, V}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Coincidence {
    DH,
    DV,
    AH,
    AV,
}

impl Coincidence {
    /// Column order of the qubit truth table.
    pub const ALL: [Coincidence; 4] = [Coincidence::DH, Coincidence::DV, Coincidence::AH, Coincidence::AV];

    pub fn name(self) -> &'static str {
        match self {
            Coincidence::DH => "DH",
            Coincidence::DV => "DV",
            Coincidence::AH => "AH",
            Coincidence::AV => "AV",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(name))
    }

    /// Control-arm outcome: 0 for D, 1 for A.
    pub fn control_bit(self) -> usize {
        matches!(self, Coincidence::AH | Coincidence::AV) as usize
    }

    /// Target-arm outcome: 0 for H, 1 for V.
    pub fn target_bit(self) -> usize {
        matches!(self, Coincidence::DV | Coincidence::AV) as usize
    }

    pub fn from_bits(control: usize, target: usize) -> Self {
        match (control, target) {
            (0, 0) => Coincidence::DH,
            (0, _) => Coincidence::DV,
            (_, 0) => Coincidence::AH,
            _ => Coincidence::AV,
        }
    }

    pub fn bell_state(self) -> BellState {
        BellState::ALL
            .into_iter()
            .find(|b| b.coincidence() == self)
            .expect("dictionary is a bijection")
    }

    pub fn outcome(self) -> Outcome {
        self.bell_state().label().outcome()
    }
}

/// The frozen qubit dictionary: entangled label `(c, r; 0)`, Bell state, coincidence.
pub fn bell_coincidence_dictionary() -> [(EntangledLabel, BellState, Coincidence); 4] {
    BellState::ALL.map(|b| (b.label(), b, b.coincidence()))
}
