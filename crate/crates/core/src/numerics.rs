//! Dense complex linear algebra for small bipartite Hilbert spaces.
//!
//! Everything here works on at most [`MAX_DIM`] basis states, which covers a
//! pair of qudits up to d = 11. Bipartite indices use the row-major Kronecker
//! convention `k = d * n1 + n2`, subsystem 1 being the slow index.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::{Float, Zero};
use thiserror::Error;

pub type C64 = Complex<f64>;

/// Largest Hilbert-space dimension any object in this crate may have (11 x 11).
pub const MAX_DIM: usize = 121;

/// Normalization tolerance for state vectors.
pub const NORM_TOL: f64 = 1e-9;
/// Hermiticity and trace tolerance for density operators and projectors.
pub const OPERATOR_TOL: f64 = 1e-10;
/// Smallest eigenvalue still accepted as positive semidefinite.
pub const POSITIVITY_TOL: f64 = -1e-9;
/// Branches with probability at or below this are reported as zero-branches.
pub const ZERO_BRANCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("dimension {dim} exceeds the supported maximum {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension {0} is not a perfect square")]
    NotBipartite(usize),
    #[error("empty or zero-norm vector cannot be normalized")]
    ZeroNorm,
    #[error("operator is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("operator trace {0} differs from 1")]
    BadTrace(f64),
    #[error("operator has negative eigenvalue {0:e}")]
    NotPositive(f64),
    #[error("operator is not idempotent (deviation {0:e})")]
    NotIdempotent(f64),
    #[error("basis is not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("basis has {found} vectors but the space has dimension {dim}")]
    IncompleteBasis { dim: usize, found: usize },
}

fn check_dim(dim: usize) -> Result<(), NumericsError> {
    if dim == 0 {
        Err(NumericsError::ZeroNorm)
    } else if dim > MAX_DIM {
        Err(NumericsError::DimensionTooLarge { dim, max: MAX_DIM })
    } else {
        Ok(())
    }
}

/// A normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Normalizes `amplitudes` into a state.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self, NumericsError> {
        check_dim(amplitudes.len())?;
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(NumericsError::ZeroNorm);
        }
        Ok(Self {
            amplitudes: amplitudes.into_iter().map(|a| a / norm).collect(),
        })
    }

    /// Standard basis vector `|index>` of a `dim`-dimensional space.
    pub fn basis(dim: usize, index: usize) -> Result<Self, NumericsError> {
        check_dim(dim)?;
        if index >= dim {
            return Err(NumericsError::DimensionMismatch {
                expected: dim,
                found: index + 1,
            });
        }
        let mut amplitudes = vec![C64::zero(); dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes })
    }

    /// Wraps amplitudes that are already normalized by construction.
    pub(crate) fn from_normalized(amplitudes: Vec<C64>) -> Self {
        debug_assert!(
            (amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() - 1.0).abs() < NORM_TOL,
            "state not normalized"
        );
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|self><self|` as a plain matrix.
    pub fn outer(&self) -> Matrix {
        Matrix::outer(&self.amplitudes, &self.amplitudes)
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator(self.outer())
    }

    pub fn projector(&self) -> Projector {
        Projector(self.outer())
    }
}

/// A square complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<C64>,
}

impl Index<(usize, usize)> for Matrix {
    type Output = C64;

    fn index(&self, (row, col): (usize, usize)) -> &C64 {
        &self.data[row * self.dim + col]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (row, col): (usize, usize)) -> &mut C64 {
        &mut self.data[row * self.dim + col]
    }
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![C64::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries; `entries.len()` must be a square.
    pub fn from_row_major(entries: Vec<C64>) -> Result<Self, NumericsError> {
        let dim = isqrt(entries.len()).ok_or(NumericsError::NotBipartite(entries.len()))?;
        check_dim(dim)?;
        Ok(Self { dim, data: entries })
    }

    /// `|u><v|`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        debug_assert_eq!(u.len(), v.len());
        let dim = u.len();
        let mut data = Vec::with_capacity(dim * dim);
        for a in u {
            for b in v {
                data.push(a * b.conj());
            }
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn add(&self, other: &Matrix) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|a| a * factor).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Kronecker product, `self` as the slow index.
    pub fn kron(&self, other: &Matrix) -> Result<Self, NumericsError> {
        let dim = self.dim * other.dim;
        check_dim(dim)?;
        let mut out = Self::zeros(dim);
        for i1 in 0..self.dim {
            for j1 in 0..self.dim {
                let a = self[(i1, j1)];
                if a.is_zero() {
                    continue;
                }
                for i2 in 0..other.dim {
                    for j2 in 0..other.dim {
                        out[(i1 * other.dim + i2, j1 * other.dim + j2)] = a * other[(i2, j2)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Eigenvalues of a Hermitian matrix in ascending order.
    ///
    /// Runs cyclic Jacobi on the real symmetric embedding `[[Re, -Im], [Im, Re]]`,
    /// whose spectrum is the Hermitian spectrum with every value doubled.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let n = self.dim;
        let m = 2 * n;
        let mut a = vec![0.0_f64; m * m];
        for i in 0..n {
            for j in 0..n {
                let z = self[(i, j)];
                // symmetrize so small Hermiticity defects do not stall the sweeps
                let w = (z + self[(j, i)].conj()) * 0.5;
                a[i * m + j] = w.re;
                a[(i + n) * m + (j + n)] = w.re;
                a[(i + n) * m + j] = w.im;
                a[i * m + (j + n)] = -w.im;
            }
        }
        jacobi_symmetric(&mut a, m);
        let mut diag: Vec<f64> = (0..m).map(|i| a[i * m + i]).collect();
        diag.sort_by(|x, y| x.total_cmp(y));
        diag.into_iter().step_by(2).collect()
    }
}

fn jacobi_symmetric(a: &mut [f64], m: usize) {
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..m {
            for q in (p + 1)..m {
                off += a[p * m + q] * a[p * m + q];
            }
        }
        if off <= 1e-30 * total {
            return;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[p * m + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
            }
        }
    }
}

pub(crate) fn isqrt(n: usize) -> Option<usize> {
    let mut r = 0usize;
    while r * r < n {
        r += 1;
    }
    (r * r == n).then_some(r)
}

/// A density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator(Matrix);

impl DensityOperator {
    /// Validates `matrix` against the density-operator invariants.
    pub fn from_matrix(matrix: Matrix) -> Result<Self, NumericsError> {
        check_dim(matrix.dim())?;
        let defect = matrix.hermiticity_defect();
        if defect > OPERATOR_TOL {
            return Err(NumericsError::NotHermitian(defect));
        }
        let trace = matrix.trace();
        if (trace - C64::new(1.0, 0.0)).norm() > OPERATOR_TOL {
            return Err(NumericsError::BadTrace(trace.re));
        }
        let min = matrix.hermitian_eigenvalues()[0];
        if min < POSITIVITY_TOL {
            return Err(NumericsError::NotPositive(min));
        }
        Ok(Self(matrix))
    }

    /// Skips validation; callers guarantee the invariants by construction.
    pub(crate) fn from_matrix_unchecked(matrix: Matrix) -> Self {
        Self(matrix)
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self, NumericsError> {
        check_dim(dim)?;
        Ok(Self(Matrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0))))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.hermitian_eigenvalues()[0]
    }

    /// `<psi|rho|psi>`.
    pub fn expectation(&self, psi: &StateVector) -> f64 {
        let v = self.0.apply(psi.amplitudes());
        psi.inner(&StateVector { amplitudes: v }).re
    }

    /// `weight * self + (1 - weight) * other`, for `weight` in [0, 1].
    pub fn mix(&self, other: &DensityOperator, weight: f64) -> DensityOperator {
        debug_assert!((0.0..=1.0).contains(&weight));
        Self(
            self.0
                .scale(C64::new(weight, 0.0))
                .add(&other.0.scale(C64::new(1.0 - weight, 0.0))),
        )
    }

    /// `sum_k K_k rho K_k^dagger`. Trace preservation is the caller's obligation.
    pub fn conjugate_sum<'a>(&self, kraus: impl IntoIterator<Item = &'a Matrix>) -> Matrix {
        let mut out = Matrix::zeros(self.dim());
        for k in kraus {
            out = out.add(&k.matmul(&self.0).matmul(&k.adjoint()));
        }
        out
    }
}

/// An orthogonal projector.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector(Matrix);

impl Projector {
    pub fn from_matrix(matrix: Matrix) -> Result<Self, NumericsError> {
        let defect = matrix.hermiticity_defect();
        if defect > OPERATOR_TOL {
            return Err(NumericsError::NotHermitian(defect));
        }
        let idem = matrix.matmul(&matrix).max_abs_diff(&matrix);
        if idem > OPERATOR_TOL {
            return Err(NumericsError::NotIdempotent(idem));
        }
        Ok(Self(matrix))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Matrix::identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

/// Kronecker product of two objects of the same kind.
pub trait TensorProduct: Sized {
    fn tensor(&self, other: &Self) -> Result<Self, NumericsError>;
}

impl TensorProduct for Matrix {
    fn tensor(&self, other: &Self) -> Result<Self, NumericsError> {
        self.kron(other)
    }
}

impl TensorProduct for StateVector {
    fn tensor(&self, other: &Self) -> Result<Self, NumericsError> {
        check_dim(self.dim() * other.dim())?;
        let amplitudes = self
            .amplitudes
            .iter()
            .flat_map(|a| other.amplitudes.iter().map(move |b| a * b))
            .collect();
        Ok(Self { amplitudes })
    }
}

impl TensorProduct for DensityOperator {
    fn tensor(&self, other: &Self) -> Result<Self, NumericsError> {
        Ok(Self(self.0.kron(&other.0)?))
    }
}

impl TensorProduct for Projector {
    fn tensor(&self, other: &Self) -> Result<Self, NumericsError> {
        Ok(Self(self.0.kron(&other.0)?))
    }
}

pub fn tensor_product<T: TensorProduct>(a: &T, b: &T) -> Result<T, NumericsError> {
    a.tensor(b)
}

/// Which half of a bipartite system to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    First,
    Second,
}

/// Reduced state of one half of a `d x d` bipartite density operator.
pub fn partial_trace(rho: &DensityOperator, keep: Subsystem) -> Result<DensityOperator, NumericsError> {
    let n = rho.dim();
    let d = isqrt(n).ok_or(NumericsError::NotBipartite(n))?;
    let m = rho.matrix();
    let mut out = Matrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = C64::zero();
            for k in 0..d {
                acc += match keep {
                    Subsystem::First => m[(i * d + k, j * d + k)],
                    Subsystem::Second => m[(k * d + i, k * d + j)],
                };
            }
            out[(i, j)] = acc;
        }
    }
    Ok(DensityOperator(out))
}

/// Checks that `basis` is a complete orthonormal basis of a `dim`-dimensional space.
pub fn check_orthonormal_basis(dim: usize, basis: &[StateVector]) -> Result<(), NumericsError> {
    if basis.len() != dim {
        return Err(NumericsError::IncompleteBasis {
            dim,
            found: basis.len(),
        });
    }
    let mut worst = 0.0_f64;
    for (i, u) in basis.iter().enumerate() {
        if u.dim() != dim {
            return Err(NumericsError::DimensionMismatch {
                expected: dim,
                found: u.dim(),
            });
        }
        for (j, v) in basis.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((u.inner(v) - C64::new(target, 0.0)).norm());
        }
    }
    if worst > NORM_TOL {
        return Err(NumericsError::NotOrthonormal(worst));
    }
    Ok(())
}

/// Born-rule outcome probabilities of `rho` measured in `basis`.
pub fn born_probabilities(rho: &DensityOperator, basis: &[StateVector]) -> Result<Vec<f64>, NumericsError> {
    check_orthonormal_basis(rho.dim(), basis)?;
    Ok(basis
        .iter()
        .map(|psi| rho.expectation(psi).clamp(0.0, 1.0))
        .collect())
}

/// Outcome of a post-selection.
#[derive(Debug, Clone, PartialEq)]
pub enum Branch {
    /// The projected, renormalized state and the probability of landing in it.
    Survived {
        state: DensityOperator,
        probability: f64,
    },
    /// The projector annihilates the state (probability at most [`ZERO_BRANCH_TOL`]).
    Zero { probability: f64 },
}

impl Branch {
    pub fn probability(&self) -> f64 {
        match self {
            Branch::Survived { probability, .. } | Branch::Zero { probability } => *probability,
        }
    }
}

/// Applies `P rho P`, returning the renormalized state and `tr(P rho P)`.
pub fn project_and_renormalize(rho: &DensityOperator, projector: &Projector) -> Result<Branch, NumericsError> {
    if rho.dim() != projector.dim() {
        return Err(NumericsError::DimensionMismatch {
            expected: rho.dim(),
            found: projector.dim(),
        });
    }
    let p = projector.matrix();
    let projected = p.matmul(rho.matrix()).matmul(p);
    let probability = projected.trace().re.max(0.0);
    if probability <= ZERO_BRANCH_TOL {
        return Ok(Branch::Zero { probability });
    }
    Ok(Branch::Survived {
        state: DensityOperator(projected.scale(C64::new(1.0 / probability, 0.0))),
        probability,
    })
}
