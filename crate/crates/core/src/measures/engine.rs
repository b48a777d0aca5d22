//! Maximizes `λ_min(Σ_i p_i B_i)` over the probability simplex.
//!
//! Each `B_i` may be block diagonal; `λ_min` is then the minimum over the
//! blocks. The problem is solved by a log-barrier interior-point method on
//! `(p, t)` with the constraint `Σ p_i B_i ⪰ t I`, `p_n` eliminated through
//! `Σ p_i = 1`. Every outer iteration yields a primal value (the exact
//! `λ_min` at the current weights) and a dual upper bound from the central
//! path matrix `Z ∝ S⁻¹`, so decisions against a threshold stop as soon as
//! either bound certifies the answer.

use crate::operator::{c, trace, trace_product, ComplexMatrix, HermitianOperator};
use nalgebra::{Cholesky, DMatrix, DVector};

/// One block-diagonal operator, as its diagonal blocks.
pub(crate) type Blocks = Vec<ComplexMatrix>;

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub p: Vec<f64>,
    /// `λ_min` at `p`.
    pub lower: f64,
    /// Upper bound on the maximum over the simplex.
    pub upper: f64,
    /// Unit-trace `Z ⪰ 0` with `max_i tr[Z B_i] = upper`, when available.
    pub dual: Option<Blocks>,
}

const MAX_OUTER: usize = 40;
const MAX_NEWTON: usize = 200;

pub(crate) fn lambda_min(op: &Blocks) -> f64 {
    op.iter()
        .map(|b| HermitianOperator::from_hermitian_part(b).min_eig())
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn combine(gens: &[Blocks], p: &[f64]) -> Blocks {
    let mut out: Blocks = gens[0].iter().map(|b| b * c(p[0])).collect();
    for (g, &w) in gens.iter().zip(p).skip(1) {
        for (o, b) in out.iter_mut().zip(g) {
            *o += b * c(w);
        }
    }
    out
}

fn shifted(op: &Blocks, t: f64) -> Blocks {
    op.iter()
        .map(|b| {
            let mut m = b.clone();
            for i in 0..m.nrows() {
                m[(i, i)] -= c(t);
            }
            m
        })
        .collect()
}

/// Inverse and log-determinant of a block-diagonal positive definite matrix.
fn pd_inverse(op: &Blocks) -> Option<(Blocks, f64)> {
    let mut inv = Vec::with_capacity(op.len());
    let mut logdet = 0.0;
    for b in op {
        let h = (b + b.adjoint()) * c(0.5);
        let chol = Cholesky::new(h)?;
        let l = chol.l_dirty();
        for i in 0..l.nrows() {
            let d = l[(i, i)].re;
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            logdet += 2.0 * d.ln();
        }
        inv.push(chol.inverse());
    }
    Some((inv, logdet))
}

struct Barrier<'a> {
    gens: &'a [Blocks],
    /// `B_i − B_n` for `i < n`.
    diffs: Vec<Blocks>,
    kappa: f64,
}

impl Barrier<'_> {
    fn n(&self) -> usize {
        self.gens.len()
    }

    fn weights(&self, y: &[f64]) -> Vec<f64> {
        let mut p: Vec<f64> = y[..self.n() - 1].to_vec();
        p.push(1.0 - p.iter().sum::<f64>());
        p
    }

    /// Barrier value, or `None` outside the domain.
    fn value(&self, y: &[f64]) -> Option<f64> {
        let p = self.weights(y);
        if p.iter().any(|&w| w <= 0.0) {
            return None;
        }
        let t = y[self.n() - 1];
        let s = shifted(&combine(self.gens, &p), t);
        let (_, logdet) = pd_inverse(&s)?;
        Some(-self.kappa * t - logdet - p.iter().map(|w| w.ln()).sum::<f64>())
    }

    fn newton_direction(&self, y: &[f64]) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = self.n();
        let p = self.weights(y);
        let t = y[n - 1];
        let s = shifted(&combine(self.gens, &p), t);
        let (sinv, _) = pd_inverse(&s)?;
        let pn = p[n - 1];

        // M_i = S⁻¹ D_i per block.
        let m: Vec<Blocks> = self
            .diffs
            .iter()
            .map(|d| sinv.iter().zip(d).map(|(si, di)| si * di).collect())
            .collect();
        let sinv2: Blocks = sinv.iter().map(|si| si * si).collect();

        let dim = n;
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for i in 0..n - 1 {
            let tr_md: f64 = m[i].iter().map(|b| trace(b).re).sum();
            grad[i] = -tr_md - 1.0 / p[i] + 1.0 / pn;
            for j in 0..=i {
                let v: f64 = m[i]
                    .iter()
                    .zip(&m[j])
                    .map(|(a, b)| trace_product(a, b).re)
                    .sum();
                let extra = if i == j { 1.0 / (p[i] * p[i]) } else { 0.0 } + 1.0 / (pn * pn);
                hess[(i, j)] = v + extra;
                hess[(j, i)] = v + extra;
            }
            let v: f64 = sinv2
                .iter()
                .zip(&self.diffs[i])
                .map(|(a, b)| trace_product(a, b).re)
                .sum();
            hess[(i, n - 1)] = -v;
            hess[(n - 1, i)] = -v;
        }
        grad[n - 1] = -self.kappa + sinv.iter().map(|b| trace(b).re).sum::<f64>();
        hess[(n - 1, n - 1)] = sinv2.iter().map(|b| trace(b).re).sum();

        let step = match Cholesky::new(hess.clone()) {
            Some(ch) => ch.solve(&(-&grad)),
            None => {
                let ridge = 1e-12 * hess.diagonal().amax().max(1.0);
                let damped = hess + DMatrix::identity(dim, dim) * ridge;
                Cholesky::new(damped)?.solve(&(-&grad))
            }
        };
        Some((step, grad))
    }

    /// Damped Newton iterations towards the central point for `kappa`.
    fn center(&self, y: &mut Vec<f64>) {
        let mut f = match self.value(y) {
            Some(v) => v,
            None => return,
        };
        for _ in 0..MAX_NEWTON {
            let Some((dir, grad)) = self.newton_direction(y) else {
                return;
            };
            let dec2 = -grad.dot(&dir);
            if !(dec2 > 1e-14) {
                return;
            }
            let dec = dec2.sqrt();
            let mut alpha = if dec < 0.25 { 1.0 } else { 1.0 / (1.0 + dec) };
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = y
                    .iter()
                    .zip(dir.iter())
                    .map(|(a, b)| a + alpha * b)
                    .collect();
                if let Some(ft) = self.value(&trial) {
                    if ft <= f - 0.25 * alpha * dec2 || ft <= f {
                        *y = trial;
                        f = ft;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted || dec2 < 1e-12 {
                return;
            }
        }
    }

    /// `max_i tr[Z B_i]` with `Z = S⁻¹ / tr[S⁻¹]` at the current point.
    fn dual_bound(&self, y: &[f64]) -> Option<(f64, Blocks)> {
        let p = self.weights(y);
        let t = y[self.n() - 1];
        let (sinv, _) = pd_inverse(&shifted(&combine(self.gens, &p), t))?;
        let tr: f64 = sinv.iter().map(|b| trace(b).re).sum();
        if !(tr > 0.0) {
            return None;
        }
        let bound = self
            .gens
            .iter()
            .map(|g| {
                g.iter()
                    .zip(&sinv)
                    .map(|(b, z)| trace_product(b, z).re)
                    .sum::<f64>()
                    / tr
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let z = sinv
            .iter()
            .map(|b| (b + b.adjoint()) * c(0.5 / tr))
            .collect();
        Some((bound, z))
    }
}

/// Solves the max-min-eigenvalue problem. With `threshold`, stops as soon as
/// the primal value reaches it or the dual bound falls below it.
pub(crate) fn maximize_min_eig(gens: &[Blocks], threshold: Option<f64>, gap_tol: f64) -> Solution {
    let n = gens.len();
    if n == 1 {
        let v = lambda_min(&gens[0]);
        // The dual optimum is the projector onto a bottom eigenvector.
        let (k, e) = gens[0]
            .iter()
            .map(|b| HermitianOperator::from_hermitian_part(b).eigh())
            .enumerate()
            .filter(|(_, e)| !e.values.is_empty())
            .min_by(|a, b| a.1.values[0].total_cmp(&b.1.values[0]))
            .expect("nonempty operator");
        let dual = gens[0]
            .iter()
            .enumerate()
            .map(|(j, b)| {
                if j == k {
                    let v = e.vectors.column(0);
                    v * v.adjoint()
                } else {
                    ComplexMatrix::zeros(b.nrows(), b.ncols())
                }
            })
            .collect();
        return Solution {
            p: vec![1.0],
            lower: v,
            upper: v,
            dual: Some(dual),
        };
    }
    let dim: usize = gens[0].iter().map(|b| b.nrows()).sum();
    let nu = (dim + n) as f64;
    let scale = gens
        .iter()
        .flat_map(|g| g.iter())
        .map(crate::operator::max_abs)
        .fold(1e-3, f64::max);

    let uniform = vec![1.0 / n as f64; n];
    let start = lambda_min(&combine(gens, &uniform));
    let mut best = Solution {
        p: uniform.clone(),
        lower: start,
        upper: f64::INFINITY,
        dual: None,
    };

    let diffs = gens[..n - 1]
        .iter()
        .map(|g| g.iter().zip(&gens[n - 1]).map(|(a, b)| a - b).collect())
        .collect();
    let mut barrier = Barrier {
        gens,
        diffs,
        kappa: nu / scale,
    };
    let mut y: Vec<f64> = uniform[..n - 1].to_vec();
    y.push(start - 0.5 * scale);

    for _ in 0..MAX_OUTER {
        barrier.center(&mut y);
        let p = barrier.weights(&y);
        let lower = lambda_min(&combine(gens, &p));
        if lower > best.lower {
            best.p = p;
            best.lower = lower;
        }
        if let Some((u, z)) = barrier.dual_bound(&y) {
            if u < best.upper {
                best.upper = u;
                best.dual = Some(z);
            }
        }
        if let Some(th) = threshold {
            if best.lower >= th || best.upper < th {
                break;
            }
        }
        if best.upper - best.lower < gap_tol {
            break;
        }
        barrier.kappa *= 10.0;
    }
    best
}
