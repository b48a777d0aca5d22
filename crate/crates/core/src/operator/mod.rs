//! Dense complex matrices, Hermitian operators and density operators.

mod jacobi;

pub use jacobi::HermitianEigen;

use crate::error::{validation, Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::ops::{Add, Mul, Sub};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Entry-wise Hermiticity tolerance used on construction.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Trace and eigenvalue tolerance for density operators.
pub const STATE_TOL: f64 = 1e-10;
/// Largest tensor-power dimension built without an explicit override.
pub const DEFAULT_TENSOR_CAP: usize = 4096;
/// Eigenvalue cutoff that separates support from kernel.
pub const SUPPORT_CUTOFF: f64 = 1e-10;

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Largest absolute entry.
pub fn max_abs(x: &ComplexMatrix) -> f64 {
    x.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn trace(x: &ComplexMatrix) -> Complex64 {
    x.diagonal().iter().sum()
}

/// `tr[A B]` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        worst = worst.max(m[(i, i)].im.abs());
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn symmetrize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * c(0.5)
}

/// A Hermitian matrix. Construction validates and then symmetrizes, so the
/// stored entries are exactly Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(ComplexMatrix);

impl HermitianOperator {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return validation(format!(
                "operator must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            ));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return validation("operator has non-finite entries");
        }
        let scale = max_abs(&m).max(1.0);
        let defect = hermiticity_defect(&m);
        if defect > HERMITIAN_TOL * scale {
            return validation(format!("operator is not Hermitian (defect {defect:e})"));
        }
        Ok(Self(symmetrize(&m)))
    }

    /// Hermitian part of `m`, for results that are Hermitian by construction
    /// up to rounding.
    pub fn from_hermitian_part(m: &ComplexMatrix) -> Self {
        Self(symmetrize(m))
    }

    pub fn identity(d: usize) -> Self {
        Self(ComplexMatrix::identity(d, d))
    }

    pub fn zeros(d: usize) -> Self {
        Self(ComplexMatrix::zeros(d, d))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut m = ComplexMatrix::zeros(d, d);
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = c(x);
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        trace(&self.0).re
    }

    pub fn eigh(&self) -> HermitianEigen {
        jacobi::eigh(&self.0)
    }

    pub fn eigvals(&self) -> Vec<f64> {
        self.eigh().values
    }

    pub fn min_eig(&self) -> f64 {
        self.eigvals()[0]
    }

    pub fn max_eig(&self) -> f64 {
        *self.eigvals().last().unwrap()
    }

    /// Operator norm, the largest absolute eigenvalue.
    pub fn op_norm(&self) -> f64 {
        let v = self.eigvals();
        v[0].abs().max(v[v.len() - 1].abs())
    }

    /// `tr[self · X]`, real for Hermitian `X`.
    pub fn expectation(&self, x: &ComplexMatrix) -> f64 {
        trace_product(&self.0, x).re
    }

    pub fn scale(&self, a: f64) -> Self {
        Self(&self.0 * c(a))
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(kron(&self.0, &other.0))
    }

    /// `H^p` restricted to eigenvalues above the support cutoff; the kernel
    /// maps to zero. Used for `σ^{-1/2}` style pseudo-powers.
    pub fn support_power(&self, p: f64) -> Self {
        Self::from_hermitian_part(&self.eigh().map(|x| {
            if x > SUPPORT_CUTOFF {
                x.powf(p)
            } else {
                0.0
            }
        }))
    }

    /// Orthogonal projector onto the span of eigenvectors with eigenvalue
    /// above the support cutoff.
    pub fn support_projector(&self) -> Self {
        Self::from_hermitian_part(
            &self
                .eigh()
                .map(|x| if x > SUPPORT_CUTOFF { 1.0 } else { 0.0 }),
        )
    }

    /// Positive part `max(H, 0)`.
    pub fn positive_part(&self) -> Self {
        Self::from_hermitian_part(&self.eigh().map(|x| x.max(0.0)))
    }
}

impl Add for &HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: Self) -> HermitianOperator {
        HermitianOperator(&self.0 + &rhs.0)
    }
}

impl Sub for &HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: Self) -> HermitianOperator {
        HermitianOperator(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, rhs: f64) -> HermitianOperator {
        self.scale(rhs)
    }
}

/// Unit-trace positive semidefinite operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator(HermitianOperator);

impl DensityOperator {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::from_hermitian(HermitianOperator::new(m)?)
    }

    pub fn from_hermitian(h: HermitianOperator) -> Result<Self> {
        let tr = h.trace();
        if (tr - 1.0).abs() > STATE_TOL {
            return validation(format!("state trace is {tr}, expected 1"));
        }
        let lo = h.min_eig();
        if lo < -STATE_TOL {
            return validation(format!("state has negative eigenvalue {lo:e}"));
        }
        Ok(Self(h))
    }

    /// Rescales a PSD operator with positive trace to unit trace.
    pub fn normalized(h: &HermitianOperator) -> Result<Self> {
        let tr = h.trace();
        if tr <= 0.0 || !tr.is_finite() {
            return validation(format!("cannot normalize operator with trace {tr}"));
        }
        Self::from_hermitian(h.scale(1.0 / tr))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self(HermitianOperator::identity(d).scale(1.0 / d as f64))
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) nonzero vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if psi.is_empty() || norm2 <= 0.0 || !norm2.is_finite() {
            return validation("pure state needs a nonzero finite vector");
        }
        let d = psi.len();
        let mut m = ComplexMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = psi[i] * psi[j].conj() / norm2;
            }
        }
        Ok(Self(HermitianOperator::from_hermitian_part(&m)))
    }

    /// Computational basis projector `|k⟩⟨k|`.
    pub fn basis(d: usize, k: usize) -> Self {
        let mut diag = vec![0.0; d];
        diag[k] = 1.0;
        Self(HermitianOperator::from_real_diagonal(&diag))
    }

    pub fn diagonal(p: &[f64]) -> Result<Self> {
        Self::from_hermitian(HermitianOperator::from_real_diagonal(p))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_hermitian(&self) -> &HermitianOperator {
        &self.0
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.0.matrix()
    }

    /// Convex combination `Σ w_i ρ_i`; weights must be a probability vector.
    pub fn mixture(weights: &[f64], states: &[DensityOperator]) -> Result<Self> {
        if weights.len() != states.len() || states.is_empty() {
            return validation("mixture needs one weight per state");
        }
        let d = states[0].dim();
        let mut m = ComplexMatrix::zeros(d, d);
        for (w, s) in weights.iter().zip(states) {
            if s.dim() != d {
                return validation("mixture of states with different dimensions");
            }
            m += s.matrix() * c(*w);
        }
        Self::new(m)
    }
}

impl From<DensityOperator> for HermitianOperator {
    fn from(rho: DensityOperator) -> Self {
        rho.0
    }
}

pub fn eigvals_hermitian(h: &HermitianOperator) -> Vec<f64> {
    h.eigvals()
}

pub fn is_psd(h: &HermitianOperator, tol: f64) -> bool {
    h.min_eig() >= -tol
}

/// Sum of singular values.
pub fn trace_norm(x: &ComplexMatrix) -> f64 {
    if x.nrows() == x.ncols() && hermiticity_defect(x) == 0.0 {
        return jacobi::eigh(x).values.iter().map(|v| v.abs()).sum();
    }
    let gram = x.adjoint() * x;
    jacobi::eigh(&symmetrize(&gram))
        .values
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum()
}

/// Largest singular value.
pub fn operator_norm(x: &ComplexMatrix) -> f64 {
    let gram = x.adjoint() * x;
    jacobi::eigh(&symmetrize(&gram))
        .values
        .last()
        .map_or(0.0, |v| v.max(0.0).sqrt())
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// `A^{⊗m}` under the default dimension cap.
pub fn kron_power(a: &ComplexMatrix, m: usize) -> Result<ComplexMatrix> {
    kron_power_capped(a, m, DEFAULT_TENSOR_CAP)
}

pub fn check_tensor_dim(what: &str, d: usize, m: usize, cap: usize) -> Result<usize> {
    match d.checked_pow(m as u32) {
        Some(n) if n <= cap => Ok(n),
        _ => Err(Error::Resource {
            what: what.to_string(),
            requested: d.checked_pow(m as u32).unwrap_or(usize::MAX),
            cap,
        }),
    }
}

pub fn kron_power_capped(a: &ComplexMatrix, m: usize, cap: usize) -> Result<ComplexMatrix> {
    if m == 0 {
        return validation("tensor power needs m >= 1");
    }
    check_tensor_dim("tensor power", a.nrows().max(a.ncols()), m, cap)?;
    let mut out = a.clone();
    for _ in 1..m {
        out = kron(&out, a);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Trace out the first factor, keep the second.
    First,
    /// Trace out the second factor, keep the first.
    Second,
}

pub fn partial_trace(x: &ComplexMatrix, d1: usize, d2: usize, side: Side) -> Result<ComplexMatrix> {
    if d1 == 0 || d2 == 0 || x.nrows() != d1 * d2 || x.ncols() != d1 * d2 {
        return validation(format!(
            "partial trace expects {}x{} operator, got {}x{}",
            d1 * d2,
            d1 * d2,
            x.nrows(),
            x.ncols()
        ));
    }
    Ok(match side {
        Side::Second => ComplexMatrix::from_fn(d1, d1, |i, j| {
            (0..d2).map(|k| x[(i * d2 + k, j * d2 + k)]).sum()
        }),
        Side::First => ComplexMatrix::from_fn(d2, d2, |i, j| {
            (0..d1).map(|k| x[(k * d2 + i, k * d2 + j)]).sum()
        }),
    })
}

fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Hilbert-Schmidt random state `GG†/tr[GG†]` for a square Ginibre `G`.
pub fn random_density_with<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DensityOperator {
    let g = ginibre(rng, d, d);
    let m = &g * g.adjoint();
    let tr = trace(&m).re;
    DensityOperator(HermitianOperator::from_hermitian_part(&(m / c(tr))))
}

pub fn random_density(d: usize, seed: u64) -> Result<DensityOperator> {
    if d < 2 {
        return validation("random_density needs d >= 2");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(random_density_with(&mut rng, d))
}

pub fn random_pure_with<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DensityOperator {
    let g = ginibre(rng, d, 1);
    let psi: Vec<Complex64> = g.iter().copied().collect();
    DensityOperator::pure(&psi).expect("Gaussian vector is nonzero")
}

/// Random Hermitian matrix with Gaussian entries (GUE up to scaling).
pub fn random_hermitian_with<R: Rng + ?Sized>(rng: &mut R, d: usize) -> HermitianOperator {
    let g = ginibre(rng, d, d);
    HermitianOperator::from_hermitian_part(&g)
}

/// Haar random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary_with<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexMatrix {
    let qr = ginibre(rng, d, d).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            c(1.0)
        };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}
