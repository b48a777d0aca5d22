//! Generalized robustness and weight of resource.
//!
//! Both measures reduce to a one-parameter family of feasibility problems:
//! at parameter `s`, is there a point `σ = Σ p_i σ_i` of the convex set with
//! `(1+s)σ − ρ ⪰ 0` (robustness) or `ρ − (1−s)σ ⪰ 0` (weight)? Feasibility is
//! monotone in `s`, so the measure is found by bisection. Single-generator
//! sets have closed forms.

pub(crate) mod engine;

use crate::bloch::{to_bloch, Mode};
use crate::error::{validation, Result};
use crate::free_sets::{ConvexFreeSet, FreeSetUnion};
use crate::operator::{c, ComplexMatrix, DensityOperator, HermitianOperator, SUPPORT_CUTOFF};
use engine::{combine, maximize_min_eig, Blocks};
use serde::{Serialize, Serializer};

/// Absolute slack in the eigenvalue test, per unit trace of `ρ`.
pub const FEASIBILITY_TOL: f64 = 1e-11;
const MAX_BISECTIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureValue {
    Finite(f64),
    Infinite,
}

impl MeasureValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(v),
            Self::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Self::Infinite)
    }

    /// `+∞` for the infinite case.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl Serialize for MeasureValue {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Finite(v) => ser.serialize_f64(*v),
            Self::Infinite => ser.serialize_str("Infinity"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Bisection,
}

/// Method selection: `Auto` uses the closed form when the set has a single
/// generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Auto,
    ClosedForm,
    Bisection,
}

/// A measure value with the free point `σ` and the noise point `τ` that
/// realize it. For robustness `ρ + vτ = (1+v)σ`; for weight
/// `ρ = vτ + (1−v)σ`. `sigma` and `tau` are absent for infinite values.
#[derive(Debug, Clone)]
pub struct MeasureResult<T = DensityOperator> {
    pub value: MeasureValue,
    pub sigma: Option<T>,
    pub tau: Option<T>,
    /// Mixture weights of `sigma` over the generators of the achieving set.
    pub weights: Vec<f64>,
    pub achieving_subset: Option<String>,
    pub tolerance: f64,
    pub method: Method,
}

impl<T> MeasureResult<T> {
    pub(crate) fn map<U>(self, f: impl Fn(T) -> U) -> MeasureResult<U> {
        MeasureResult {
            value: self.value,
            sigma: self.sigma.map(&f),
            tau: self.tau.map(&f),
            weights: self.weights,
            achieving_subset: self.achieving_subset,
            tolerance: self.tolerance,
            method: self.method,
        }
    }

    pub(crate) fn labelled(mut self, label: &str) -> Self {
        self.achieving_subset = Some(label.to_string());
        self
    }
}

/// Result of one feasibility test.
#[derive(Debug, Clone)]
pub struct Feasibility {
    pub feasible: bool,
    pub weights: Vec<f64>,
    /// Best `λ_min` found for the weights.
    pub min_eig: f64,
    pub tau: Option<DensityOperator>,
}

/// A target and convex-set generators in block-diagonal form, compressed to
/// the joint support of all operators.
pub(crate) struct Problem {
    rho: Blocks,
    gens: Vec<Blocks>,
    rho_c: Blocks,
    gens_c: Vec<Blocks>,
    isometries: Vec<ComplexMatrix>,
    norm: f64,
}

fn support_isometry(m: &ComplexMatrix) -> ComplexMatrix {
    let e = HermitianOperator::from_hermitian_part(m).eigh();
    let top = e.values.last().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..e.values.len())
        .filter(|&k| e.values[k] > SUPPORT_CUTOFF * top.max(1.0))
        .collect();
    let mut v = ComplexMatrix::zeros(m.nrows(), keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        v.set_column(dst, &e.vectors.column(src));
    }
    v
}

impl Problem {
    /// `rho` and `gens` must be positive semidefinite block operators with
    /// matching block shapes.
    pub(crate) fn new(rho: Blocks, gens: Vec<Blocks>) -> Self {
        let nblocks = rho.len();
        let mut rho_c = Vec::with_capacity(nblocks);
        let mut gens_c: Vec<Blocks> = vec![Vec::with_capacity(nblocks); gens.len()];
        let mut isometries = Vec::with_capacity(nblocks);
        for k in 0..nblocks {
            let mut total = rho[k].clone();
            for g in &gens {
                total += &g[k];
            }
            let v = support_isometry(&total);
            let squeeze = |m: &ComplexMatrix| v.adjoint() * m * &v;
            rho_c.push(squeeze(&rho[k]));
            for (gc, g) in gens_c.iter_mut().zip(&gens) {
                gc.push(squeeze(&g[k]));
            }
            isometries.push(v);
        }
        let norm = rho
            .iter()
            .map(|b| crate::operator::trace(b).re)
            .sum::<f64>()
            .max(1e-300);
        Self {
            rho,
            gens,
            rho_c,
            gens_c,
            isometries,
            norm,
        }
    }

    pub(crate) fn from_states(rho: &HermitianOperator, gens: &[HermitianOperator]) -> Self {
        Self::new(
            vec![rho.matrix().clone()],
            gens.iter().map(|g| vec![g.matrix().clone()]).collect(),
        )
    }

    fn operators_at(&self, s: f64, mode: Mode) -> Vec<Blocks> {
        self.gens_c
            .iter()
            .map(|g| {
                g.iter()
                    .zip(&self.rho_c)
                    .map(|(sig, rho)| match mode {
                        Mode::Robustness => sig * c(1.0 + s) - rho,
                        Mode::Weight => rho - sig * c(1.0 - s),
                    })
                    .collect()
            })
            .collect()
    }

    /// Decides feasibility at `s`; returns (feasible, weights, best λ_min).
    pub(crate) fn feasible(&self, s: f64, mode: Mode) -> (bool, Vec<f64>, f64) {
        let ops = self.operators_at(s, mode);
        if ops[0].iter().all(|b| b.nrows() == 0) {
            return (true, vec![1.0 / ops.len() as f64; ops.len()], 0.0);
        }
        let threshold = -FEASIBILITY_TOL * self.norm;
        let sol = maximize_min_eig(&ops, Some(threshold), 1e-3 * FEASIBILITY_TOL * self.norm);
        let ok = if sol.lower >= threshold {
            true
        } else if sol.upper < threshold {
            false
        } else {
            0.5 * (sol.lower + sol.upper) >= threshold
        };
        (ok, sol.p, sol.lower)
    }

    fn sigma(&self, p: &[f64]) -> Blocks {
        combine(&self.gens, p)
    }

    /// `τ` from `σ`, made PSD and rescaled to the trace of `ρ`.
    fn tau(&self, sigma: &Blocks, s: f64, mode: Mode) -> Blocks {
        if s <= 0.0 {
            return self.rho.clone();
        }
        let raw: Blocks = sigma
            .iter()
            .zip(&self.rho)
            .map(|(sig, rho)| match mode {
                Mode::Robustness => (sig * c(1.0 + s) - rho) / c(s),
                Mode::Weight => (rho - sig * c(1.0 - s)) / c(s),
            })
            .collect();
        let pos: Blocks = raw
            .iter()
            .map(|b| {
                HermitianOperator::from_hermitian_part(b)
                    .positive_part()
                    .into_matrix()
            })
            .collect();
        let tr: f64 = pos.iter().map(|b| crate::operator::trace(b).re).sum();
        if tr > 0.0 {
            pos.iter().map(|b| b * c(self.norm / tr)).collect()
        } else {
            self.rho.clone()
        }
    }

    fn finish(
        &self,
        value: f64,
        p: Vec<f64>,
        mode: Mode,
        method: Method,
        tol: f64,
    ) -> MeasureResult<Blocks> {
        let sigma = self.sigma(&p);
        let tau = self.tau(&sigma, value, mode);
        MeasureResult {
            value: MeasureValue::Finite(value),
            sigma: Some(sigma),
            tau: Some(tau),
            weights: p,
            achieving_subset: None,
            tolerance: tol,
            method,
        }
    }

    fn infinite(&self, method: Method, tol: f64) -> MeasureResult<Blocks> {
        MeasureResult {
            value: MeasureValue::Infinite,
            sigma: None,
            tau: None,
            weights: vec![],
            achieving_subset: None,
            tolerance: tol,
            method,
        }
    }

    /// `max_k λ_max(σ_k^{-1/2} ρ_k σ_k^{-1/2})` against one generator; `None`
    /// when the support of `ρ` escapes the support of `σ`.
    fn relative_max(rho: &Blocks, sigma: &Blocks) -> Option<f64> {
        let mut best: f64 = 0.0;
        for (r, s) in rho.iter().zip(sigma) {
            let r = HermitianOperator::from_hermitian_part(r);
            let s = HermitianOperator::from_hermitian_part(s);
            if !crate::free_sets::support_within(&r, &s) {
                return None;
            }
            let inv = s.support_power(-0.5);
            let rel =
                HermitianOperator::from_hermitian_part(&(inv.matrix() * r.matrix() * inv.matrix()));
            best = best.max(rel.max_eig());
        }
        Some(best)
    }

    pub(crate) fn robustness_closed_form(&self, gen: usize, tol: f64) -> MeasureResult<Blocks> {
        let mut p = vec![0.0; self.gens.len()];
        p[gen] = 1.0;
        match Self::relative_max(&self.rho, &self.gens[gen]) {
            None => self.infinite(Method::ClosedForm, tol),
            Some(m) => self.finish(
                (m - 1.0).max(0.0),
                p,
                Mode::Robustness,
                Method::ClosedForm,
                tol,
            ),
        }
    }

    pub(crate) fn weight_closed_form(&self, gen: usize, tol: f64) -> MeasureResult<Blocks> {
        let mut p = vec![0.0; self.gens.len()];
        p[gen] = 1.0;
        // Largest c with ρ ⪰ cσ.
        let cstar = match Self::relative_max(&self.gens[gen], &self.rho) {
            None => 0.0,
            Some(m) if m > 0.0 => (1.0 / m).min(1.0),
            Some(_) => 1.0,
        };
        self.finish(1.0 - cstar, p, Mode::Weight, Method::ClosedForm, tol)
    }

    fn bisect(
        &self,
        mut lo: f64,
        mut hi: f64,
        mut hi_p: Vec<f64>,
        mode: Mode,
        tol: f64,
    ) -> (f64, Vec<f64>) {
        for _ in 0..MAX_BISECTIONS {
            if hi - lo < tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (ok, p, _) = self.feasible(mid, mode);
            if ok {
                hi = mid;
                hi_p = p;
            } else {
                lo = mid;
            }
        }
        (hi, hi_p)
    }

    pub(crate) fn robustness_bisection(&self, tol: f64) -> MeasureResult<Blocks> {
        let n = self.gens.len();
        let uniform = vec![1.0 / n as f64; n];
        let bary = self.sigma(&uniform);
        let Some(m) = Self::relative_max(&self.rho, &bary) else {
            return self.infinite(Method::Bisection, tol);
        };
        let (ok0, p0, _) = self.feasible(0.0, Mode::Robustness);
        if ok0 {
            return self.finish(0.0, p0, Mode::Robustness, Method::Bisection, tol);
        }
        let mut hi = (m - 1.0).max(0.0);
        let (mut ok, mut p, _) = self.feasible(hi, Mode::Robustness);
        // The barycenter bound is feasible in exact arithmetic; widen on rounding.
        for _ in 0..MAX_BISECTIONS {
            if ok {
                break;
            }
            hi = hi * 1.5 + tol;
            (ok, p, _) = self.feasible(hi, Mode::Robustness);
        }
        if !ok {
            return self.finish(hi, uniform, Mode::Robustness, Method::Bisection, tol);
        }
        let (value, p) = self.bisect(0.0, hi, p, Mode::Robustness, tol);
        self.finish(value, p, Mode::Robustness, Method::Bisection, tol)
    }

    pub(crate) fn weight_bisection(&self, tol: f64) -> MeasureResult<Blocks> {
        let n = self.gens.len();
        let (ok0, p0, _) = self.feasible(0.0, Mode::Weight);
        if ok0 {
            return self.finish(0.0, p0, Mode::Weight, Method::Bisection, tol);
        }
        let (_, p1, _) = self.feasible(1.0, Mode::Weight);
        let p1 = if p1.len() == n {
            p1
        } else {
            vec![1.0 / n as f64; n]
        };
        let (value, p) = self.bisect(0.0, 1.0, p1, Mode::Weight, tol);
        self.finish(value, p, Mode::Weight, Method::Bisection, tol)
    }

    pub(crate) fn measure(
        &self,
        mode: Mode,
        strategy: Strategy,
        tol: f64,
    ) -> Result<MeasureResult<Blocks>> {
        let closed = match strategy {
            Strategy::Auto => self.gens.len() == 1,
            Strategy::ClosedForm if self.gens.len() == 1 => true,
            Strategy::ClosedForm => return validation("closed form needs a single-generator set"),
            Strategy::Bisection => false,
        };
        Ok(match (mode, closed) {
            (Mode::Robustness, true) => self.robustness_closed_form(0, tol),
            (Mode::Robustness, false) => self.robustness_bisection(tol),
            (Mode::Weight, true) => self.weight_closed_form(0, tol),
            (Mode::Weight, false) => self.weight_bisection(tol),
        })
    }

    /// Dual certificate at an infeasible `s`: a PSD operator `Z` (in the
    /// uncompressed space) with `tr[Z B_i] < 0` for every generator.
    pub(crate) fn dual_certificate(&self, s: f64, mode: Mode) -> Option<Blocks> {
        let ops = self.operators_at(s, mode);
        let sol = maximize_min_eig(
            &ops,
            Some(-FEASIBILITY_TOL * self.norm),
            1e-3 * FEASIBILITY_TOL * self.norm,
        );
        if sol.upper >= 0.0 {
            return None;
        }
        let z = sol.dual?;
        Some(
            z.iter()
                .zip(&self.isometries)
                .map(|(zk, v)| v * zk * v.adjoint())
                .collect(),
        )
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return validation(format!("tolerance must be positive, got {tol}"));
    }
    Ok(())
}

fn state_problem(rho: &DensityOperator, set: &ConvexFreeSet) -> Result<Problem> {
    if rho.dim() != set.dim() {
        return validation(format!(
            "state has dimension {}, free set has {}",
            rho.dim(),
            set.dim()
        ));
    }
    let gens: Vec<HermitianOperator> = set
        .generators()
        .iter()
        .map(|g| g.as_hermitian().clone())
        .collect();
    Ok(Problem::from_states(rho.as_hermitian(), &gens))
}

fn blocks_to_state(b: Blocks) -> DensityOperator {
    let h = HermitianOperator::from_hermitian_part(&b[0]);
    DensityOperator::normalized(&h.positive_part())
        .unwrap_or_else(|_| DensityOperator::maximally_mixed(h.dim()))
}

fn check_mode_s(s: f64, mode: Mode) -> Result<()> {
    let ok = match mode {
        Mode::Robustness => s >= 0.0 && s.is_finite(),
        Mode::Weight => (0.0..=1.0).contains(&s),
    };
    if !ok {
        return validation(format!(
            "parameter s = {s} is out of range for {mode:?} mode"
        ));
    }
    Ok(())
}

/// Decides whether `s` is achievable for `ρ` against one convex subset.
pub fn feasibility(
    s: f64,
    rho: &DensityOperator,
    set: &ConvexFreeSet,
    mode: Mode,
) -> Result<Feasibility> {
    check_mode_s(s, mode)?;
    let prob = state_problem(rho, set)?;
    let (feasible, weights, min_eig) = prob.feasible(s, mode);
    let tau = feasible.then(|| blocks_to_state(prob.tau(&prob.sigma(&weights), s, mode)));
    Ok(Feasibility {
        feasible,
        weights,
        min_eig,
        tau,
    })
}

pub fn robustness_convex(
    rho: &DensityOperator,
    set: &ConvexFreeSet,
    tol: f64,
) -> Result<MeasureResult> {
    robustness_convex_with(rho, set, tol, Strategy::Auto)
}

pub fn robustness_convex_with(
    rho: &DensityOperator,
    set: &ConvexFreeSet,
    tol: f64,
    strategy: Strategy,
) -> Result<MeasureResult> {
    check_tol(tol)?;
    Ok(state_problem(rho, set)?
        .measure(Mode::Robustness, strategy, tol)?
        .map(blocks_to_state))
}

pub fn weight_convex(
    rho: &DensityOperator,
    set: &ConvexFreeSet,
    tol: f64,
) -> Result<MeasureResult> {
    weight_convex_with(rho, set, tol, Strategy::Auto)
}

pub fn weight_convex_with(
    rho: &DensityOperator,
    set: &ConvexFreeSet,
    tol: f64,
    strategy: Strategy,
) -> Result<MeasureResult> {
    check_tol(tol)?;
    Ok(state_problem(rho, set)?
        .measure(Mode::Weight, strategy, tol)?
        .map(blocks_to_state))
}

/// Minimum over labelled results; the first minimizer wins ties.
pub fn min_over<T>(results: Vec<(String, MeasureResult<T>)>) -> MeasureResult<T> {
    let mut best: Option<MeasureResult<T>> = None;
    let mut first_label = None;
    for (label, r) in results {
        first_label.get_or_insert_with(|| label.clone());
        let better = match &best {
            None => true,
            Some(b) => r.value.as_f64() < b.value.as_f64(),
        };
        if better {
            best = Some(r.labelled(&label));
        }
    }
    let mut best = best.expect("union is nonempty");
    if best.value.is_infinite() {
        best.achieving_subset = first_label;
    }
    best
}

/// Per-subset results for a union, in subset order.
pub fn per_subset(
    rho: &DensityOperator,
    union: &FreeSetUnion,
    mode: Mode,
    tol: f64,
) -> Result<Vec<(String, MeasureResult)>> {
    union
        .iter()
        .map(|(label, set)| {
            let r = match mode {
                Mode::Robustness => robustness_convex(rho, set, tol)?,
                Mode::Weight => weight_convex(rho, set, tol)?,
            };
            Ok((label.to_string(), r.labelled(label)))
        })
        .collect()
}

pub fn robustness_union(
    rho: &DensityOperator,
    union: &FreeSetUnion,
    tol: f64,
) -> Result<MeasureResult> {
    Ok(min_over(per_subset(rho, union, Mode::Robustness, tol)?))
}

pub fn weight_union(
    rho: &DensityOperator,
    union: &FreeSetUnion,
    tol: f64,
) -> Result<MeasureResult> {
    Ok(min_over(per_subset(rho, union, Mode::Weight, tol)?))
}

/// Robustness of a qubit with Bloch vector `r` against the incoherent set of
/// a Pauli axis: the length of the Bloch components orthogonal to the axis.
pub fn qubit_axis_robustness(r: [f64; 3], axis: crate::free_sets::Axis) -> f64 {
    use crate::free_sets::Axis;
    let [x, y, z] = r;
    match axis {
        Axis::X => (y * y + z * z).sqrt(),
        Axis::Y => (z * z + x * x).sqrt(),
        Axis::Z => (x * x + y * y).sqrt(),
    }
}

/// The ray parameter `u` with `τ − ρ = u(η − ρ)`, when `τ` lies on the ray
/// from `ρ` through `η` on the side the mode requires (`u > 1` for
/// robustness, `u < 0` for weight).
pub fn ray_parameter(
    rho: &DensityOperator,
    eta: &DensityOperator,
    tau: &DensityOperator,
    mode: Mode,
) -> Result<Option<f64>> {
    let r = to_bloch(rho.as_hermitian())?.coords;
    let x = to_bloch(eta.as_hermitian())?.coords;
    let t = to_bloch(tau.as_hermitian())?.coords;
    let dx: Vec<f64> = x.iter().zip(&r).map(|(a, b)| a - b).collect();
    let dt: Vec<f64> = t.iter().zip(&r).map(|(a, b)| a - b).collect();
    let n2: f64 = dx.iter().map(|v| v * v).sum();
    if n2.sqrt() < 1e-12 {
        return validation("ray parameter is undefined for eta = rho");
    }
    let u = dx.iter().zip(&dt).map(|(a, b)| a * b).sum::<f64>() / n2;
    let off = dx
        .iter()
        .zip(&dt)
        .map(|(a, b)| (b - u * a).abs())
        .fold(0.0, f64::max);
    let scale = 1.0 + u.abs();
    if off > 1e-8 * scale {
        return Ok(None);
    }
    let on_side = match mode {
        Mode::Robustness => u > 1.0,
        Mode::Weight => u < 0.0,
    };
    Ok(on_side.then_some(u))
}

/// The mixing parameter `q` that a ray parameter corresponds to:
/// `η = (ρ + qτ)/(1+q)` (robustness) or `ρ = qτ + (1−q)η` (weight).
pub fn ray_mixing(u: f64, mode: Mode) -> f64 {
    match mode {
        Mode::Robustness => 1.0 / (u - 1.0),
        Mode::Weight => 1.0 / (1.0 - u),
    }
}
