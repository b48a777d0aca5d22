//! Free sets as finite unions of finitely generated convex sets.

use crate::error::{validation, Result};
use crate::operator::{c, trace_norm, DensityOperator, HermitianOperator};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

/// Default trace-norm tolerance for membership.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

/// Largest generator count solved by exhaustive active-set enumeration.
const EXACT_QP_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn label(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexFreeSet {
    Singleton(DensityOperator),
    Hull(Vec<DensityOperator>),
    /// States diagonal in an orthonormal basis, kept as the basis projectors.
    IncoherentBasis(Vec<DensityOperator>),
}

impl ConvexFreeSet {
    pub fn hull(generators: Vec<DensityOperator>) -> Result<Self> {
        check_dims(&generators)?;
        Ok(Self::Hull(generators))
    }

    /// Incoherent set of an orthonormal basis given as column vectors.
    pub fn incoherent_basis(vectors: &[Vec<Complex64>]) -> Result<Self> {
        let d = vectors.len();
        if d < 2 || vectors.iter().any(|v| v.len() != d) {
            return validation("incoherent basis needs d vectors of length d, d >= 2");
        }
        for (i, a) in vectors.iter().enumerate() {
            for (j, b) in vectors.iter().enumerate() {
                let ip: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (ip - c(want)).norm() > 1e-10 {
                    return validation(format!("basis vectors {i} and {j} are not orthonormal"));
                }
            }
        }
        let projectors = vectors
            .iter()
            .map(|v| DensityOperator::pure(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::IncoherentBasis(projectors))
    }

    pub fn computational_basis(d: usize) -> Self {
        Self::IncoherentBasis((0..d).map(|k| DensityOperator::basis(d, k)).collect())
    }

    /// Qubit states diagonal in the eigenbasis of a Pauli operator.
    pub fn qubit_axis(axis: Axis) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let vecs: [[Complex64; 2]; 2] = match axis {
            Axis::X => [[c(h), c(h)], [c(h), c(-h)]],
            Axis::Y => [
                [c(h), Complex64::new(0.0, h)],
                [c(h), Complex64::new(0.0, -h)],
            ],
            Axis::Z => [[c(1.0), c(0.0)], [c(0.0), c(1.0)]],
        };
        Self::IncoherentBasis(
            vecs.iter()
                .map(|v| DensityOperator::pure(v).unwrap())
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.generators()[0].dim()
    }

    pub fn generators(&self) -> &[DensityOperator] {
        match self {
            Self::Singleton(s) => std::slice::from_ref(s),
            Self::Hull(g) | Self::IncoherentBasis(g) => g,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Singleton(_) => "singleton",
            Self::Hull(_) => "hull",
            Self::IncoherentBasis(_) => "incoherent_basis",
        }
    }

    pub fn barycenter(&self) -> DensityOperator {
        let g = self.generators();
        let w = vec![1.0 / g.len() as f64; g.len()];
        DensityOperator::mixture(&w, g).expect("generators share a dimension")
    }

    /// True iff the support of `rho` lies in the support of the barycenter,
    /// which is the union of the generator supports.
    pub fn support_contains(&self, rho: &DensityOperator) -> bool {
        support_within(rho.as_hermitian(), self.barycenter().as_hermitian())
    }

    /// Closest hull point in Hilbert-Schmidt distance, as simplex weights.
    pub fn closest_weights(&self, eta: &DensityOperator) -> Vec<f64> {
        closest_hull_weights(self.generators(), eta.as_hermitian())
    }

    pub fn membership(&self, eta: &DensityOperator, tol: f64) -> bool {
        if eta.dim() != self.dim() {
            return false;
        }
        let g = self.generators();
        let p = self.closest_weights(eta);
        let mut m = eta.matrix().clone();
        for (w, s) in p.iter().zip(g) {
            m -= s.matrix() * c(*w);
        }
        trace_norm(&m) <= tol
    }

    /// Singleton: `n` copies. Hull: every generator, the barycenter, then
    /// `n` Dirichlet(1, …, 1) mixtures.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<DensityOperator> {
        match self {
            Self::Singleton(s) => vec![s.clone(); n],
            Self::Hull(g) | Self::IncoherentBasis(g) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out = g.clone();
                out.push(self.barycenter());
                for _ in 0..n {
                    let mut w: Vec<f64> = (0..g.len()).map(|_| Exp1.sample(&mut rng)).collect();
                    let total: f64 = w.iter().sum();
                    w.iter_mut().for_each(|x| *x /= total);
                    out.push(DensityOperator::mixture(&w, g).expect("valid mixture"));
                }
                out
            }
        }
    }

    /// Evenly spaced points `p a + (1−p) b`, `p = 0, 1/(n−1), …, 1`, for
    /// two-generator sets; `None` otherwise.
    pub fn segment_grid(&self, n: usize) -> Option<Vec<DensityOperator>> {
        let g = self.generators();
        if g.len() != 2 || n < 2 {
            return None;
        }
        Some(
            (0..n)
                .map(|i| {
                    let p = i as f64 / (n - 1) as f64;
                    DensityOperator::mixture(&[p, 1.0 - p], g).expect("valid mixture")
                })
                .collect(),
        )
    }
}

fn check_dims(states: &[DensityOperator]) -> Result<()> {
    let Some(first) = states.first() else {
        return validation("convex set needs at least one generator");
    };
    if states.iter().any(|s| s.dim() != first.dim()) {
        return validation("generators have different dimensions");
    }
    Ok(())
}

/// `supp(a) ⊆ supp(b)` for PSD operators.
pub fn support_within(a: &HermitianOperator, b: &HermitianOperator) -> bool {
    let p = b.support_projector();
    let outside = &HermitianOperator::identity(b.dim()) - &p;
    let leak = outside.expectation(a.matrix());
    leak <= 1e-9 * a.trace().abs().max(1.0)
}

/// Minimizes `‖Σ p_i G_i − target‖₂` over the probability simplex.
pub(crate) fn closest_hull_weights(
    gens: &[DensityOperator],
    target: &HermitianOperator,
) -> Vec<f64> {
    let n = gens.len();
    if n == 1 {
        return vec![1.0];
    }
    let gram = DMatrix::from_fn(n, n, |i, j| {
        gens[i].as_hermitian().expectation(gens[j].matrix())
    });
    let lin = DVector::from_fn(n, |i, _| {
        gens[i].as_hermitian().expectation(target.matrix())
    });
    if n <= EXACT_QP_LIMIT {
        simplex_qp_exact(&gram, &lin)
    } else {
        simplex_qp_fista(&gram, &lin)
    }
}

fn objective(gram: &DMatrix<f64>, lin: &DVector<f64>, p: &DVector<f64>) -> f64 {
    (p.transpose() * gram * p)[(0, 0)] - 2.0 * lin.dot(p)
}

/// Exhaustive active-set search: the optimum solves the equality-constrained
/// problem on its support, so the best nonnegative subset solution is global.
fn simplex_qp_exact(gram: &DMatrix<f64>, lin: &DVector<f64>) -> Vec<f64> {
    let n = gram.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = idx.len();
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                kkt[(a, b)] = gram[(i, j)];
            }
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
            rhs[a] = lin[i];
        }
        rhs[k] = 1.0;
        let Ok(sol) = kkt.svd(true, true).solve(&rhs, 1e-13) else {
            continue;
        };
        let mut p = DVector::zeros(n);
        for (a, &i) in idx.iter().enumerate() {
            p[i] = sol[a];
        }
        if p.iter().any(|&x| x < -1e-12) || (p.sum() - 1.0).abs() > 1e-9 {
            continue;
        }
        p.iter_mut().for_each(|x| *x = x.max(0.0));
        p /= p.sum();
        let f = objective(gram, lin, &p);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, p));
        }
    }
    best.map(|(_, p)| p.iter().copied().collect())
        .unwrap_or_else(|| vec![1.0 / n as f64; n])
}

pub(crate) fn project_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

fn simplex_qp_fista(gram: &DMatrix<f64>, lin: &DVector<f64>) -> Vec<f64> {
    let n = gram.nrows();
    let lipschitz = 2.0 * gram.norm().max(1e-12);
    let mut p = DVector::from_element(n, 1.0 / n as f64);
    let mut y = p.clone();
    let mut t: f64 = 1.0;
    for _ in 0..20_000 {
        let grad = (gram * &y - lin) * 2.0;
        let mut next: Vec<f64> = (&y - grad / lipschitz).iter().copied().collect();
        project_simplex(&mut next);
        let next = DVector::from_vec(next);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + (&next - &p) * ((t - 1.0) / t_next);
        let moved = (&next - &p).norm();
        p = next;
        t = t_next;
        if moved < 1e-15 {
            break;
        }
    }
    p.iter().copied().collect()
}

/// `F = ∪_k F_k` with a display label per subset.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeSetUnion {
    subsets: Vec<ConvexFreeSet>,
    labels: Vec<String>,
}

impl FreeSetUnion {
    pub fn new(subsets: Vec<ConvexFreeSet>, labels: Vec<String>) -> Result<Self> {
        if subsets.is_empty() {
            return validation("free set union needs at least one subset");
        }
        if labels.len() != subsets.len() {
            return validation("free set union needs one label per subset");
        }
        let d = subsets[0].dim();
        if subsets.iter().any(|s| s.dim() != d) {
            return validation("free subsets have different dimensions");
        }
        Ok(Self { subsets, labels })
    }

    /// Labels `F0`, `F1`, ….
    pub fn unlabeled(subsets: Vec<ConvexFreeSet>) -> Result<Self> {
        let labels = (0..subsets.len()).map(|k| format!("F{k}")).collect();
        Self::new(subsets, labels)
    }

    pub fn single(set: ConvexFreeSet, label: &str) -> Self {
        Self {
            subsets: vec![set],
            labels: vec![label.to_string()],
        }
    }

    /// Union of the x, y and z incoherent qubit sets.
    pub fn qubit_axes() -> Self {
        let axes = [Axis::X, Axis::Y, Axis::Z];
        Self {
            subsets: axes.iter().map(|&a| ConvexFreeSet::qubit_axis(a)).collect(),
            labels: axes.iter().map(|a| a.label().to_string()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.subsets[0].dim()
    }

    pub fn subsets(&self) -> &[ConvexFreeSet] {
        &self.subsets
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ConvexFreeSet)> {
        self.labels.iter().map(String::as_str).zip(&self.subsets)
    }

    pub fn membership(&self, eta: &DensityOperator, tol: f64) -> bool {
        self.subsets.iter().any(|s| s.membership(eta, tol))
    }
}
