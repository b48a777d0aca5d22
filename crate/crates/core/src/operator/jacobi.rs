//! Cyclic Jacobi eigensolver for complex Hermitian matrices.
//!
//! Each 2x2 pivot block is first made real by a diagonal phase and then
//! annihilated with the classic real rotation. The sweep order is fixed
//! (row-major over the strict upper triangle), so results are reproducible
//! for a given platform.

use super::ComplexMatrix;
use num_complex::Complex64;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues (ascending) and matching eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `V diag(f(λ)) V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.values.len();
        let mut out = ComplexMatrix::zeros(n, n);
        for (k, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            for i in 0..n {
                let vi = v[i] * w;
                for j in 0..n {
                    out[(i, j)] += vi * v[j].conj();
                }
            }
        }
        out
    }

    /// Max-norm of `H − VΛV†`.
    pub fn residual(&self, h: &ComplexMatrix) -> f64 {
        let rebuilt = self.map(|x| x);
        (h - rebuilt).iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }
}

fn off_diagonal_norm_sq(a: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            acc += a[(i, j)].norm_sqr();
        }
    }
    2.0 * acc
}

/// Diagonalizes `h`, which must be Hermitian (only checked by callers).
pub fn eigh(h: &ComplexMatrix) -> HermitianEigen {
    let n = h.nrows();
    let mut a = h.clone();
    let mut v = ComplexMatrix::identity(n, n);
    for i in 0..n {
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
    }

    let total = a.iter().fold(0.0, |acc, z| acc + z.norm_sqr());
    let threshold = (f64::EPSILON * f64::EPSILON) * total.max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm_sq(&a) <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                // Skip entries that are negligible relative to both diagonals.
                if mag < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
                    a[(p, q)] = Complex64::new(0.0, 0.0);
                    a[(q, p)] = Complex64::new(0.0, 0.0);
                    continue;
                }
                let phase = apq / mag;
                let zeta = (aqq - app) / (2.0 * mag);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                } else {
                    -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G = diag(1, conj(phase)) · [[c, s], [-s, c]]
                let g_pp = Complex64::new(c, 0.0);
                let g_pq = Complex64::new(s, 0.0);
                let g_qp = -phase.conj() * s;
                let g_qq = phase.conj() * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * g_pp + akq * g_qp;
                    a[(k, q)] = akp * g_pq + akq * g_qq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * g_pp + vkq * g_qp;
                    v[(k, q)] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    HermitianEigen { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input_is_untouched() {
        let mut h = ComplexMatrix::zeros(3, 3);
        h[(0, 0)] = Complex64::new(3.0, 0.0);
        h[(1, 1)] = Complex64::new(-1.0, 0.0);
        h[(2, 2)] = Complex64::new(2.0, 0.0);
        let e = eigh(&h);
        assert_eq!(e.values, vec![-1.0, 2.0, 3.0]);
        assert!(e.residual(&h) < 1e-14);
    }

    #[test]
    fn complex_two_by_two() {
        // [[1, i],[−i, 1]] has eigenvalues 0 and 2.
        let h = ComplexMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(1.0, 0.0),
            ],
        );
        let e = eigh(&h);
        assert!((e.values[0] - 0.0).abs() < 1e-14);
        assert!((e.values[1] - 2.0).abs() < 1e-14);
        assert!(e.residual(&h) < 1e-14);
    }
}
