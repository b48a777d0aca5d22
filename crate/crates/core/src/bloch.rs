//! Generalized Gell-Mann basis, Bloch coordinates and the `S_m` positivity
//! polynomials.
//!
//! Basis ordering for dimension `d`: the symmetric off-diagonal operators for
//! pairs `j < k` in row-major order, then the antisymmetric ones in the same
//! order, then the `d − 1` diagonal operators. For `d = 2` this gives
//! `(σx, σy, σz)`.

use crate::error::{validation, Result};
use crate::operator::{c, trace, ComplexMatrix, DensityOperator, HermitianOperator};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

/// Default tolerance for `S_m` sign tests.
pub const S_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Robustness,
    Weight,
}

#[derive(Debug)]
pub struct GellMannBasis {
    pub dim: usize,
    pub operators: Vec<HermitianOperator>,
}

static BASIS_CACHE: Mutex<BTreeMap<usize, Arc<GellMannBasis>>> = Mutex::new(BTreeMap::new());

fn build_basis(d: usize) -> GellMannBasis {
    let mut ops = Vec::with_capacity(d * d - 1);
    let mut pairs = Vec::new();
    for j in 0..d {
        for k in (j + 1)..d {
            pairs.push((j, k));
        }
    }
    for &(j, k) in &pairs {
        let mut m = ComplexMatrix::zeros(d, d);
        m[(j, k)] = c(1.0);
        m[(k, j)] = c(1.0);
        ops.push(HermitianOperator::from_hermitian_part(&m));
    }
    for &(j, k) in &pairs {
        let mut m = ComplexMatrix::zeros(d, d);
        m[(j, k)] = Complex64::new(0.0, -1.0);
        m[(k, j)] = Complex64::new(0.0, 1.0);
        ops.push(HermitianOperator::from_hermitian_part(&m));
    }
    for l in 1..d {
        let norm = (2.0 / (l * (l + 1)) as f64).sqrt();
        let mut diag = vec![0.0; d];
        for x in diag.iter_mut().take(l) {
            *x = norm;
        }
        diag[l] = -(l as f64) * norm;
        ops.push(HermitianOperator::from_real_diagonal(&diag));
    }
    GellMannBasis {
        dim: d,
        operators: ops,
    }
}

/// The `d² − 1` generalized Gell-Mann operators, cached per dimension.
pub fn gellmann_basis(d: usize) -> Result<Arc<GellMannBasis>> {
    if d < 2 {
        return validation(format!("Gell-Mann basis needs d >= 2, got {d}"));
    }
    let mut cache = BASIS_CACHE.lock().unwrap_or_else(|e| e.into_inner());
    Ok(cache
        .entry(d)
        .or_insert_with(|| Arc::new(build_basis(d)))
        .clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub dim: usize,
    pub coords: Vec<f64>,
}

/// Scale factor `√(d/(2(d−1)))` between `tr[η λ_j]` and `x_j`.
pub fn bloch_scale(d: usize) -> f64 {
    (d as f64 / (2.0 * (d as f64 - 1.0))).sqrt()
}

pub fn to_bloch(eta: &HermitianOperator) -> Result<BlochVector> {
    let d = eta.dim();
    let tr = eta.trace();
    if (tr - 1.0).abs() > 1e-10 {
        return validation(format!("Bloch coordinates need unit trace, got {tr}"));
    }
    let basis = gellmann_basis(d)?;
    let k = bloch_scale(d);
    let coords = basis
        .operators
        .iter()
        .map(|l| l.expectation(eta.matrix()) * k)
        .collect();
    Ok(BlochVector { dim: d, coords })
}

/// `(1/d)(I + √(d(d−1)/2) Σ x_j λ_j)`; unit trace, not necessarily PSD.
pub fn from_bloch(x: &BlochVector) -> Result<HermitianOperator> {
    let d = x.dim;
    let basis = gellmann_basis(d)?;
    if x.coords.len() != basis.operators.len() {
        return validation(format!(
            "dimension {d} needs {} Bloch coordinates, got {}",
            basis.operators.len(),
            x.coords.len()
        ));
    }
    if x.coords.iter().any(|v| !v.is_finite()) {
        return validation("Bloch coordinates must be finite");
    }
    let k = (d as f64 * (d as f64 - 1.0) / 2.0).sqrt();
    let mut m = ComplexMatrix::identity(d, d);
    for (xj, l) in x.coords.iter().zip(&basis.operators) {
        m += l.matrix() * c(k * xj);
    }
    Ok(HermitianOperator::from_hermitian_part(&(m / c(d as f64))))
}

/// Qubit state from a Bloch vector in the unit ball.
pub fn qubit_state(r: [f64; 3]) -> Result<DensityOperator> {
    let h = from_bloch(&BlochVector {
        dim: 2,
        coords: r.to_vec(),
    })?;
    DensityOperator::from_hermitian(h)
}

/// `[S_0, S_1, …, S_d]` by the Newton recursion
/// `S_m = (1/m) Σ_{l=1..m} (−1)^{l−1} tr[H^l] S_{m−l}`.
pub fn s_values(h: &HermitianOperator) -> Vec<f64> {
    let d = h.dim();
    let mut power_traces = Vec::with_capacity(d);
    let mut power = h.matrix().clone();
    for l in 1..=d {
        power_traces.push(trace(&power).re);
        if l < d {
            power = &power * h.matrix();
        }
    }
    let mut s = vec![1.0];
    for m in 1..=d {
        let mut acc = 0.0;
        for l in 1..=m {
            let sign = if l % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * power_traces[l - 1] * s[m - l];
        }
        s.push(acc / m as f64);
    }
    s
}

pub fn s_poly(h: &HermitianOperator, m: usize) -> Result<f64> {
    if m > h.dim() {
        return validation(format!("S_m needs m <= {}, got {m}", h.dim()));
    }
    Ok(s_values(h)[m])
}

/// `S_1..S_d` of an operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SPolyValues {
    pub values: Vec<f64>,
}

impl SPolyValues {
    pub fn of(h: &HermitianOperator) -> Self {
        Self {
            values: s_values(h)[1..].to_vec(),
        }
    }
}

fn check_s(s: f64, mode: Mode) -> Result<()> {
    match mode {
        Mode::Robustness if !(s > 0.0 && s.is_finite()) => {
            validation(format!("robustness mode needs s > 0, got {s}"))
        }
        Mode::Weight if !(s > 0.0 && s < 1.0) => {
            validation(format!("weight mode needs 0 < s < 1, got {s}"))
        }
        _ => Ok(()),
    }
}

/// Robustness: `((1+s)η − ρ)/s`. Weight: `(ρ − (1−s)η)/s`.
///
/// Works on any pair of equal-dimension Hermitian operators, so it also
/// serves Choi matrices.
pub fn shifted_hermitian(
    rho: &HermitianOperator,
    eta: &HermitianOperator,
    s: f64,
    mode: Mode,
) -> Result<HermitianOperator> {
    check_s(s, mode)?;
    if rho.dim() != eta.dim() {
        return validation("shifted operator needs equal dimensions");
    }
    let m = match mode {
        Mode::Robustness => (eta.matrix() * c(1.0 + s) - rho.matrix()) / c(s),
        Mode::Weight => (rho.matrix() - eta.matrix() * c(1.0 - s)) / c(s),
    };
    Ok(HermitianOperator::from_hermitian_part(&m))
}

pub fn shifted_operator(
    rho: &DensityOperator,
    eta: &DensityOperator,
    s: f64,
    mode: Mode,
) -> Result<HermitianOperator> {
    shifted_hermitian(rho.as_hermitian(), eta.as_hermitian(), s, mode)
}

/// Positivity through the sign of every `S_m`, `m = 1..d`.
pub fn psd_via_s(h: &HermitianOperator, tol: f64) -> bool {
    s_values(h)[1..].iter().all(|&v| v >= -tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{
        eigvals_hermitian, is_psd, random_density, random_density_with, random_pure_with,
        trace_product,
    };
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn elementary_symmetric(vals: &[f64], m: usize) -> f64 {
        // e_m via the product (1 + λ_i t) expansion.
        let mut e = vec![0.0; vals.len() + 1];
        e[0] = 1.0;
        for &v in vals {
            for k in (1..e.len()).rev() {
                e[k] += v * e[k - 1];
            }
        }
        e[m]
    }

    #[test]
    fn qubit_basis_is_pauli() {
        let b = gellmann_basis(2).unwrap();
        let m = |i: usize| b.operators[i].matrix().clone();
        assert_eq!(
            m(0),
            ComplexMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
        );
        assert_eq!(
            m(1),
            ComplexMatrix::from_row_slice(
                2,
                2,
                &[
                    c(0.0),
                    Complex64::new(0.0, -1.0),
                    Complex64::new(0.0, 1.0),
                    c(0.0)
                ]
            )
        );
        assert_eq!(
            m(2),
            ComplexMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
        );
    }

    #[test]
    fn gram_matrix_and_tracelessness() {
        for d in 2..6 {
            let b = gellmann_basis(d).unwrap();
            assert_eq!(b.operators.len(), d * d - 1);
            for (i, li) in b.operators.iter().enumerate() {
                assert!(li.trace().abs() < 1e-12);
                for (j, lj) in b.operators.iter().enumerate() {
                    let g = trace_product(li.matrix(), lj.matrix());
                    let want = if i == j { 2.0 } else { 0.0 };
                    assert!((g - c(want)).norm() < 1e-10, "d={d} ({i},{j})");
                }
            }
        }
        assert!(gellmann_basis(1).is_err());
    }

    #[test]
    fn bloch_coordinates() {
        for d in 2..5 {
            let mixed = DensityOperator::maximally_mixed(d);
            let x = to_bloch(mixed.as_hermitian()).unwrap();
            assert!(x.coords.iter().all(|v| v.abs() < 1e-15));
        }
        let zero = to_bloch(DensityOperator::basis(2, 0).as_hermitian()).unwrap();
        assert_eq!(zero.coords, vec![0.0, 0.0, 1.0]);
        assert!(to_bloch(&HermitianOperator::identity(2)).is_err());
        for d in 2..5 {
            let rho = random_density(d, 99 + d as u64).unwrap();
            let back = from_bloch(&to_bloch(rho.as_hermitian()).unwrap()).unwrap();
            assert!(crate::operator::max_abs(&(back.matrix() - rho.matrix())) < 1e-12);
        }
    }

    #[test]
    fn s_poly_examples() {
        let h = HermitianOperator::from_real_diagonal(&[-0.5, 1.5]);
        assert_eq!(s_poly(&h, 0).unwrap(), 1.0);
        assert!((s_poly(&h, 2).unwrap() + 0.75).abs() < 1e-15);
        assert!(s_poly(&h, 3).is_err());

        let r = [0.3, -0.2, 0.6];
        let q = from_bloch(&BlochVector {
            dim: 2,
            coords: r.to_vec(),
        })
        .unwrap();
        let want = (1.0 - r.iter().map(|v| v * v).sum::<f64>()) / 4.0;
        assert!((s_poly(&q, 2).unwrap() - want).abs() < 1e-14);
        assert!((SPolyValues::of(&q).values[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn shifted_operator_examples() {
        let zero = DensityOperator::basis(2, 0);
        let mixed = DensityOperator::maximally_mixed(2);
        let same = shifted_operator(&zero, &zero, 0.7, Mode::Robustness).unwrap();
        assert!(crate::operator::max_abs(&(same.matrix() - zero.matrix())) < 1e-15);

        let a = shifted_operator(&zero, &mixed, 0.5, Mode::Robustness).unwrap();
        assert_eq!(a, HermitianOperator::from_real_diagonal(&[-0.5, 1.5]));
        assert!(!psd_via_s(&a, S_TOL));

        let rho = DensityOperator::diagonal(&[0.75, 0.25]).unwrap();
        let b = shifted_operator(&rho, &mixed, 0.5, Mode::Weight).unwrap();
        assert_eq!(b, HermitianOperator::from_real_diagonal(&[1.0, 0.0]));

        assert!(shifted_operator(&zero, &mixed, 0.0, Mode::Robustness).is_err());
        assert!(shifted_operator(&zero, &mixed, 1.0, Mode::Weight).is_err());
    }

    #[test]
    fn states_pass_the_s_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 2..6 {
            for _ in 0..50 {
                assert!(psd_via_s(
                    random_density_with(&mut rng, d).as_hermitian(),
                    S_TOL
                ));
            }
        }
    }

    /// Random unit-trace Hermitian `I/d + t·G` with `G` traceless.
    fn random_unit_trace(rng: &mut ChaCha8Rng, d: usize) -> HermitianOperator {
        let g = crate::operator::random_hermitian_with(rng, d);
        let shift = g.trace() / d as f64;
        let traceless = &g - &HermitianOperator::identity(d).scale(shift);
        let t: f64 = rng.random_range(0.0..1.0) / traceless.op_norm().max(1e-12);
        &HermitianOperator::identity(d).scale(1.0 / d as f64)
            + &traceless.scale(t * 1.2 / d as f64 * 2.0)
    }

    #[test]
    fn s_test_matches_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for d in 2..=4 {
            let mut positives = 0;
            for _ in 0..1000 {
                let h = random_unit_trace(&mut rng, d);
                let oracle = is_psd(&h, S_TOL);
                positives += oracle as usize;
                assert_eq!(
                    psd_via_s(&h, S_TOL),
                    oracle,
                    "d={d} eig={:?}",
                    eigvals_hermitian(&h)
                );
            }
            // Both classes are well represented.
            assert!(
                positives > 100 && positives < 900,
                "d={d} positives={positives}"
            );
        }
    }

    #[test]
    fn robustness_ray_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for d in 2..=4 {
            for _ in 0..20 {
                let rho = random_density_with(&mut rng, d);
                let tau = random_pure_with(&mut rng, d);
                let s = rng.random_range(0.2..2.0);
                let mix = |q: f64| {
                    DensityOperator::mixture(
                        &[1.0 / (1.0 + q), q / (1.0 + q)],
                        &[rho.clone(), tau.clone()],
                    )
                    .unwrap()
                };
                for q in [0.3 * s, 0.8 * s, s] {
                    let h = shifted_operator(&rho, &mix(q), s, Mode::Robustness).unwrap();
                    assert!(psd_via_s(&h, S_TOL));
                }
                let h = shifted_operator(&rho, &mix(1.5 * s), s, Mode::Robustness).unwrap();
                assert!(!psd_via_s(&h, S_TOL));
            }
        }
    }

    #[test]
    fn weight_ray_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        for d in 2..=4 {
            for _ in 0..20 {
                let rho = random_density_with(&mut rng, d);
                let tau = random_pure_with(&mut rng, d);
                // Largest q with ρ − qτ ⪰ 0 is 1/⟨ψ|ρ⁻¹|ψ⟩.
                let inv = rho.as_hermitian().support_power(-1.0);
                let q_max = 1.0 / inv.expectation(tau.matrix());
                let s = 0.5 * q_max;
                let eta = |q: f64| {
                    let m = (rho.matrix() - tau.matrix() * c(q)) / c(1.0 - q);
                    DensityOperator::new(m).unwrap()
                };
                for q in [0.25 * q_max, s] {
                    let h = shifted_operator(&rho, &eta(q), s, Mode::Weight).unwrap();
                    assert!(psd_via_s(&h, S_TOL));
                }
                let h = shifted_operator(&rho, &eta(0.9 * q_max), s, Mode::Weight).unwrap();
                assert!(!psd_via_s(&h, S_TOL));
            }
        }
    }

    fn hermitian_strategy(d: usize) -> impl Strategy<Value = HermitianOperator> {
        proptest::collection::vec(-1.0f64..1.0, 2 * d * d).prop_map(move |v| {
            let m = ComplexMatrix::from_fn(d, d, |i, j| {
                Complex64::new(v[2 * (i * d + j)], v[2 * (i * d + j) + 1])
            });
            HermitianOperator::from_hermitian_part(&m)
        })
    }

    proptest! {
        #[test]
        fn s_poly_is_elementary_symmetric(h in (2usize..6).prop_flat_map(hermitian_strategy)) {
            let vals = eigvals_hermitian(&h);
            let norm = h.op_norm();
            for m in 0..=h.dim() {
                let got = s_poly(&h, m).unwrap();
                let want = elementary_symmetric(&vals, m);
                prop_assert!((got - want).abs() < 1e-8 * (1.0 + norm.powi(m as i32)));
            }
        }

        #[test]
        fn bloch_round_trip(coords in proptest::collection::vec(-1.0f64..1.0, 8)) {
            let x = BlochVector { dim: 3, coords };
            let back = to_bloch(&from_bloch(&x).unwrap()).unwrap();
            for (a, b) in x.coords.iter().zip(&back.coords) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
