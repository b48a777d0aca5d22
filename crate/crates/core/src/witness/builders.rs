//! Constructions of a Hermitian `W_m` on `H^{⊗m}` with
//! `tr[W_m η^{⊗m}] = S_m(A(η))`, where `A(η)` is the shifted operator.

use crate::bloch::{bloch_scale, gellmann_basis, s_values, shifted_hermitian, to_bloch, Mode};
use crate::error::{validation, Error, Result};
use crate::operator::{
    c, check_tensor_dim, kron, random_density_with, random_pure_with, ComplexMatrix,
    DensityOperator, HermitianOperator, DEFAULT_TENSOR_CAP,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Largest number of monomials the least-squares fit will attempt.
pub const DEFAULT_MONOMIAL_CAP: usize = 2000;

/// `S_m` of the shifted operator as a real polynomial in the Bloch
/// coordinates of the probe state.
#[derive(Debug, Clone, Serialize)]
pub struct PolynomialForm {
    pub dim: usize,
    pub degree: usize,
    pub mode: Mode,
    pub s: f64,
    /// Exponent vectors `(n_1, …, n_{d²−1})` with their coefficients.
    pub terms: Vec<(Vec<u32>, f64)>,
    pub fit_residual: f64,
}

impl PolynomialForm {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(n, coef)| {
                coef * n
                    .iter()
                    .zip(x)
                    .map(|(&e, &xj)| xj.powi(e as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Coefficient of one exponent vector, zero if absent.
    pub fn coefficient(&self, exponents: &[u32]) -> f64 {
        self.terms
            .iter()
            .find(|(n, _)| n == exponents)
            .map_or(0.0, |(_, v)| *v)
    }
}

/// Exponent vectors of length `vars` with total degree at most `m`, ordered
/// by degree and then lexicographically (descending in the first variable).
pub fn monomials(vars: usize, m: usize) -> Vec<Vec<u32>> {
    fn rec(vars: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == vars - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            rec(vars, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for deg in 0..=m as u32 {
        rec(vars, deg, &mut Vec::with_capacity(vars), &mut out);
    }
    out
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn check_degree(d: usize, m: usize) -> Result<()> {
    if m < 2 || m > d {
        return validation(format!(
            "witness degree must satisfy 2 <= m <= d = {d}, got {m}"
        ));
    }
    Ok(())
}

pub fn fit_s_polynomial(
    rho: &DensityOperator,
    s: f64,
    m: usize,
    mode: Mode,
    seed: u64,
) -> Result<PolynomialForm> {
    fit_s_polynomial_capped(rho, s, m, mode, seed, DEFAULT_MONOMIAL_CAP)
}

/// Least-squares fit of `η ↦ S_m(shifted(ρ, η, s))` over random probes.
pub fn fit_s_polynomial_capped(
    rho: &DensityOperator,
    s: f64,
    m: usize,
    mode: Mode,
    seed: u64,
    cap: usize,
) -> Result<PolynomialForm> {
    let d = rho.dim();
    check_degree(d, m)?;
    let vars = d * d - 1;
    let count = binomial(vars + m, m);
    if count > cap {
        return Err(Error::Resource {
            what: "monomial fit (use the exact builder instead)".into(),
            requested: count,
            cap,
        });
    }
    shifted_hermitian(rho.as_hermitian(), rho.as_hermitian(), s, mode)?;
    let basis = monomials(vars, m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes: Vec<DensityOperator> = (0..2 * count)
        .map(|_| random_density_with(&mut rng, d))
        .collect();
    probes.extend((0..count / 2 + 8).map(|_| random_pure_with(&mut rng, d)));
    let holdout: Vec<DensityOperator> = (0..20).map(|_| random_density_with(&mut rng, d)).collect();

    let target = |eta: &DensityOperator| -> Result<f64> {
        let a = shifted_hermitian(rho.as_hermitian(), eta.as_hermitian(), s, mode)?;
        Ok(s_values(&a)[m])
    };
    let row = |x: &[f64]| -> Vec<f64> {
        basis
            .iter()
            .map(|n| n.iter().zip(x).map(|(&e, &xj)| xj.powi(e as i32)).product())
            .collect()
    };

    let mut design = DMatrix::zeros(probes.len(), count);
    let mut rhs = DVector::zeros(probes.len());
    for (i, p) in probes.iter().enumerate() {
        let x = to_bloch(p.as_hermitian())?.coords;
        design.row_mut(i).copy_from_slice(&row(&x));
        rhs[i] = target(p)?;
    }
    let coef = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?;

    let mut form = PolynomialForm {
        dim: d,
        degree: m,
        mode,
        s,
        terms: basis.into_iter().zip(coef.iter().copied()).collect(),
        fit_residual: 0.0,
    };
    let mut worst: f64 = 0.0;
    for p in probes.iter().chain(&holdout) {
        let x = to_bloch(p.as_hermitian())?.coords;
        worst = worst.max((form.evaluate(&x) - target(p)?).abs());
    }
    form.fit_residual = worst;
    Ok(form)
}

/// Tensor product of Gell-Mann factors; `None` stands for the identity.
fn kron_factors(factors: &[Option<usize>], basis: &[HermitianOperator], d: usize) -> ComplexMatrix {
    let id = ComplexMatrix::identity(d, d);
    let mut out = ComplexMatrix::from_element(1, 1, c(1.0));
    for f in factors {
        out = kron(&out, f.map_or(&id, |j| basis[j].matrix()));
    }
    out
}

fn term_factors(exponents: &[u32], m: usize) -> Vec<Option<usize>> {
    let mut f: Vec<Option<usize>> = Vec::with_capacity(m);
    for (j, &e) in exponents.iter().enumerate() {
        f.extend(std::iter::repeat_n(Some(j), e as usize));
    }
    f.resize(m, None);
    f
}

fn check_form_dim(form: &PolynomialForm) -> Result<usize> {
    check_tensor_dim(
        "witness operator",
        form.dim,
        form.degree,
        DEFAULT_TENSOR_CAP,
    )
}

/// `Σ (d/(2(d−1)))^{l/2} c · λ_1^{⊗n_1} ⊗ … ⊗ I^{⊗(m−l)}`.
pub fn build_witness_monomial(form: &PolynomialForm) -> Result<HermitianOperator> {
    let n = check_form_dim(form)?;
    let d = form.dim;
    let basis = gellmann_basis(d)?;
    let k = bloch_scale(d);
    let mut w = ComplexMatrix::zeros(n, n);
    for (exps, coef) in &form.terms {
        if *coef == 0.0 {
            continue;
        }
        let l: u32 = exps.iter().sum();
        let factors = term_factors(exps, form.degree);
        w += kron_factors(&factors, &basis.operators, d) * c(coef * k.powi(l as i32));
    }
    Ok(HermitianOperator::from_hermitian_part(&w))
}

/// Rearranges `v` into the next permutation in lexicographic order.
fn next_permutation<T: Ord>(v: &mut [T]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Monomial witness with every term averaged over the distinct orderings of
/// its tensor factors, so the result commutes with factor permutations.
pub fn build_witness_symmetric(form: &PolynomialForm) -> Result<HermitianOperator> {
    let n = check_form_dim(form)?;
    let d = form.dim;
    let basis = gellmann_basis(d)?;
    let k = bloch_scale(d);
    let mut w = ComplexMatrix::zeros(n, n);
    for (exps, coef) in &form.terms {
        if *coef == 0.0 {
            continue;
        }
        let l: u32 = exps.iter().sum();
        // Identity sorts first as `None`.
        let mut factors = term_factors(exps, form.degree);
        factors.sort();
        let mut acc = ComplexMatrix::zeros(n, n);
        let mut count = 0usize;
        loop {
            acc += kron_factors(&factors, &basis.operators, d);
            count += 1;
            if !next_permutation(&mut factors) {
                break;
            }
        }
        w += acc * c(coef * k.powi(l as i32) / count as f64);
    }
    Ok(HermitianOperator::from_hermitian_part(&w))
}

fn permutations(m: usize) -> Vec<(Vec<usize>, f64)> {
    let mut p: Vec<usize> = (0..m).collect();
    let mut out = Vec::new();
    loop {
        let mut inversions = 0;
        for i in 0..m {
            for j in (i + 1)..m {
                if p[i] > p[j] {
                    inversions += 1;
                }
            }
        }
        out.push((p.clone(), if inversions % 2 == 0 { 1.0 } else { -1.0 }));
        if !next_permutation(&mut p) {
            break;
        }
    }
    out
}

fn digits(mut idx: usize, d: usize, m: usize) -> Vec<usize> {
    let mut out = vec![0; m];
    for t in (0..m).rev() {
        out[t] = idx % d;
        idx /= d;
    }
    out
}

/// `Q_k = tr_{last k}[P_anti (I^{⊗(m−k)} ⊗ ρ^{⊗k})]` on `m − k` factors.
fn antisymmetrized_contraction(rho: &ComplexMatrix, m: usize, k: usize) -> ComplexMatrix {
    let d = rho.nrows();
    let keep = m - k;
    let nk = d.pow(keep as u32);
    let nr = d.pow(k as u32);
    let perms = permutations(m);
    let norm = perms.len() as f64;
    let mut q = ComplexMatrix::zeros(nk, nk);
    for a in 0..nk {
        let da = digits(a, d, keep);
        for r in 0..nr {
            let dr = digits(r, d, k);
            let row: Vec<usize> = da.iter().chain(&dr).copied().collect();
            for (perm, sign) in &perms {
                // Row index with factors permuted: slot t reads slot perm[t].
                let pr: Vec<usize> = perm.iter().map(|&t| row[t]).collect();
                // The identity slots force the column digits there.
                let db = &pr[..keep];
                let mut val = c(*sign);
                for t in keep..m {
                    val *= rho[(pr[t], row[t])];
                    if val == c(0.0) {
                        break;
                    }
                }
                if val == c(0.0) {
                    continue;
                }
                let b = db.iter().fold(0, |acc, &x| acc * d + x);
                q[(a, b)] += val;
            }
        }
    }
    q / c(norm)
}

/// Fit-free witness: expands `S_m(aη + bρ) = tr[P_anti (aη + bρ)^{⊗m}]` and
/// contracts the `ρ` slots, padding with identities weighted by
/// `1/probe_trace` (the trace of every probe operator `η`).
pub fn build_witness_exact_hermitian(
    rho: &HermitianOperator,
    s: f64,
    m: usize,
    mode: Mode,
    probe_trace: f64,
) -> Result<HermitianOperator> {
    let d = rho.dim();
    check_degree(d, m)?;
    shifted_hermitian(rho, rho, s, mode)?;
    let n = check_tensor_dim("witness operator", d, m, DEFAULT_TENSOR_CAP)?;
    let (a, b) = match mode {
        Mode::Robustness => ((1.0 + s) / s, -1.0 / s),
        Mode::Weight => (-(1.0 - s) / s, 1.0 / s),
    };
    let mut w = ComplexMatrix::zeros(n, n);
    for k in 0..=m {
        let coef = binomial(m, k) as f64 * a.powi((m - k) as i32) * b.powi(k as i32)
            / probe_trace.powi(k as i32);
        if coef == 0.0 {
            continue;
        }
        let q = antisymmetrized_contraction(rho.matrix(), m, k);
        let pad = d.pow(k as u32);
        w += kron(&q, &ComplexMatrix::identity(pad, pad)) * c(coef);
    }
    Ok(HermitianOperator::from_hermitian_part(&w))
}

pub fn build_witness_exact(
    rho: &DensityOperator,
    s: f64,
    m: usize,
    mode: Mode,
) -> Result<HermitianOperator> {
    build_witness_exact_hermitian(rho.as_hermitian(), s, m, mode, 1.0)
}

/// Coefficients of the two-qubit witness in the Pauli product basis
/// `σ_i ⊗ σ_j` (index 0 is the identity), before the overall factor 1/4.
pub fn qubit_witness_coefficients(r: [f64; 3], s: f64) -> [[f64; 4]; 4] {
    let r2: f64 = r.iter().map(|v| v * v).sum();
    let mut t = [[0.0; 4]; 4];
    t[0][0] = 1.0 - r2 / (s * s);
    for j in 0..3 {
        t[j + 1][j + 1] = -(1.0 + s) * (1.0 + s) / (s * s);
        t[0][j + 1] = (1.0 + s) / (s * s) * r[j];
        t[j + 1][0] = (1.0 + s) / (s * s) * r[j];
    }
    t
}

/// Two-qubit robustness witness with `tr[W η⊗η] = S_2(((1+s)η − ρ)/s)`.
///
/// Built from the Pauli expansion with coefficients
/// [`qubit_witness_coefficients`]; that expansion evaluates to `4 S_2`, so
/// the operator is scaled by 1/4.
pub fn build_qubit_witness(rho: &DensityOperator, s: f64) -> Result<HermitianOperator> {
    if rho.dim() != 2 {
        return validation(format!("qubit witness needs d = 2, got {}", rho.dim()));
    }
    if !(s > 0.0) {
        return validation(format!("qubit witness needs s > 0, got {s}"));
    }
    let x = to_bloch(rho.as_hermitian())?.coords;
    let t = qubit_witness_coefficients([x[0], x[1], x[2]], s);
    let basis = gellmann_basis(2)?;
    let pauli = |i: usize| -> ComplexMatrix {
        if i == 0 {
            ComplexMatrix::identity(2, 2)
        } else {
            basis.operators[i - 1].matrix().clone()
        }
    };
    let mut w = ComplexMatrix::zeros(4, 4);
    for (i, row) in t.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                w += kron(&pauli(i), &pauli(j)) * Complex64::new(v / 4.0, 0.0);
            }
        }
    }
    Ok(HermitianOperator::from_hermitian_part(&w))
}
