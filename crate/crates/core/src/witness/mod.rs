//! Multicopy witness families.
//!
//! For a base state `ρ` and parameter `s`, the member `W_m` satisfies
//! `tr[W_m η^{⊗m}] = S_m(A)` with `A` the shifted operator of `η`. On `ρ`
//! itself every member is nonnegative; a free state is flagged when some
//! member is negative, which happens for all free states exactly when `s`
//! is below the measure. The shifted form `W̃_m = −C(W_m + Δ_m I)` turns this
//! into the conventional sign pattern.

mod builders;

pub use builders::{
    build_qubit_witness, build_witness_exact, build_witness_exact_hermitian,
    build_witness_monomial, build_witness_symmetric, fit_s_polynomial, fit_s_polynomial_capped,
    monomials, qubit_witness_coefficients, PolynomialForm, DEFAULT_MONOMIAL_CAP,
};

use crate::bloch::Mode;
use crate::error::{validation, Error, Result};
use crate::free_sets::{ConvexFreeSet, FreeSetUnion};
use crate::operator::{
    c, kron_power, trace_product, ComplexMatrix, DensityOperator, HermitianOperator,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Grid size used for two-generator free sets.
pub const SEGMENT_GRID: usize = 1000;
/// Smallest usable sampled shift.
pub const MIN_SHIFT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessBuilder {
    Monomial,
    Symmetric,
    #[default]
    Exact,
    QubitClosedForm,
}

#[derive(Debug, Clone)]
pub struct WitnessMember {
    pub m: usize,
    pub operator: HermitianOperator,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShiftConstants {
    /// `Δ̂_m` in member order.
    pub deltas: Vec<f64>,
    /// Normalization `C = 1 / max_m ‖W_m‖∞`.
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct WitnessFamily {
    pub kind: Mode,
    pub base: HermitianOperator,
    pub s: f64,
    /// Trace of the probe operators (1 for states, `d1` for Choi matrices).
    pub probe_trace: f64,
    pub members: Vec<WitnessMember>,
    pub shift: Option<ShiftConstants>,
}

/// `{2, …, d}`.
pub fn default_range(d: usize) -> Vec<usize> {
    (2..=d).collect()
}

fn check_range(d: usize, ms: &[usize]) -> Result<()> {
    if ms.is_empty() {
        return validation("witness family needs at least one copy number");
    }
    if let Some(&m) = ms.iter().find(|&&m| m < 2 || m > d) {
        return validation(format!("copy number {m} outside 2..={d}"));
    }
    Ok(())
}

impl WitnessFamily {
    pub fn build(
        rho: &DensityOperator,
        s: f64,
        mode: Mode,
        ms: &[usize],
        builder: WitnessBuilder,
        seed: u64,
    ) -> Result<Self> {
        check_range(rho.dim(), ms)?;
        let mut members = Vec::with_capacity(ms.len());
        for &m in ms {
            let operator = match builder {
                WitnessBuilder::Exact => build_witness_exact(rho, s, m, mode)?,
                WitnessBuilder::Monomial => {
                    build_witness_monomial(&fit_s_polynomial(rho, s, m, mode, seed)?)?
                }
                WitnessBuilder::Symmetric => {
                    build_witness_symmetric(&fit_s_polynomial(rho, s, m, mode, seed)?)?
                }
                WitnessBuilder::QubitClosedForm => {
                    if m != 2 || mode != Mode::Robustness {
                        return validation(
                            "the qubit closed form covers robustness witnesses with m = 2 only",
                        );
                    }
                    build_qubit_witness(rho, s)?
                }
            };
            members.push(WitnessMember { m, operator });
        }
        Ok(Self {
            kind: mode,
            base: rho.as_hermitian().clone(),
            s,
            probe_trace: 1.0,
            members,
            shift: None,
        })
    }

    /// Exact-builder family over arbitrary Hermitian base and probes.
    pub fn build_exact_hermitian(
        base: &HermitianOperator,
        s: f64,
        mode: Mode,
        ms: &[usize],
        probe_trace: f64,
    ) -> Result<Self> {
        check_range(base.dim(), ms)?;
        let members = ms
            .iter()
            .map(|&m| {
                Ok(WitnessMember {
                    m,
                    operator: build_witness_exact_hermitian(base, s, m, mode, probe_trace)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: mode,
            base: base.clone(),
            s,
            probe_trace,
            members,
            shift: None,
        })
    }

    pub fn is_shifted(&self) -> bool {
        self.shift.is_some()
    }

    /// `tr[W_m η^{⊗m}]` for every member.
    pub fn evaluate(&self, eta: &HermitianOperator) -> Result<Vec<f64>> {
        self.members
            .iter()
            .map(|w| evaluate_member(&w.operator, eta, w.m))
            .collect()
    }

    /// Whether a probe is flagged: some unshifted member is negative below
    /// `-tol`, or some shifted member is nonnegative.
    pub fn flags(&self, values: &[f64], tol: f64) -> Option<usize> {
        let hit = |v: f64| {
            if self.is_shifted() {
                v >= 0.0
            } else {
                v < -tol
            }
        };
        values
            .iter()
            .position(|&v| hit(v))
            .map(|i| self.members[i].m)
    }

    /// Probe lies in the acceptance region: no member flags it.
    pub fn accepts(&self, eta: &HermitianOperator, tol: f64) -> Result<bool> {
        Ok(self.flags(&self.evaluate(eta)?, tol).is_none())
    }
}

pub fn evaluate_member(w: &HermitianOperator, eta: &HermitianOperator, m: usize) -> Result<f64> {
    let p = kron_power(eta.matrix(), m)?;
    if p.nrows() != w.dim() {
        return validation(format!(
            "probe of dimension {} does not match witness on {} copies",
            eta.dim(),
            m
        ));
    }
    Ok(trace_product(w.matrix(), &p).re)
}

/// Samples standing in for one convex subset: the state itself for
/// singletons, an evenly spaced grid for two-generator sets, generators plus
/// barycenter plus Dirichlet mixtures otherwise.
pub fn free_samples(set: &ConvexFreeSet, budget: usize, seed: u64) -> Vec<DensityOperator> {
    match set {
        ConvexFreeSet::Singleton(s) => vec![s.clone()],
        _ => set
            .segment_grid(SEGMENT_GRID.max(budget))
            .unwrap_or_else(|| set.sample(budget, seed)),
    }
}

/// Labelled free samples for each subset of a union.
pub fn union_samples(
    union: &FreeSetUnion,
    budget: usize,
    seed: u64,
) -> Vec<(String, Vec<HermitianOperator>)> {
    union
        .iter()
        .enumerate()
        .map(|(k, (label, set))| {
            let samples = free_samples(set, budget, seed.wrapping_add(k as u64));
            (
                label.to_string(),
                samples.into_iter().map(HermitianOperator::from).collect(),
            )
        })
        .collect()
}

/// Shifts an unshifted family against explicit free samples.
pub fn shift_with_samples(
    family: &WitnessFamily,
    samples: &[(String, Vec<HermitianOperator>)],
) -> Result<WitnessFamily> {
    if family.is_shifted() {
        return validation("family is already shifted");
    }
    let mut deltas = Vec::with_capacity(family.members.len());
    for w in &family.members {
        let mut min = f64::INFINITY;
        for (_, set) in samples {
            for sigma in set {
                min = min.min(evaluate_member(&w.operator, sigma, w.m)?.abs());
            }
        }
        let delta = 0.5 * min;
        if !(delta >= MIN_SHIFT) {
            return Err(Error::DegenerateShift { m: w.m, value: min });
        }
        deltas.push(delta);
    }
    let max_norm = family
        .members
        .iter()
        .map(|w| w.operator.op_norm())
        .fold(0.0, f64::max);
    if !(max_norm > 0.0) {
        return validation("witness members are all zero");
    }
    let scale = 1.0 / max_norm;
    let members = family
        .members
        .iter()
        .zip(&deltas)
        .map(|(w, &delta)| {
            let n = w.operator.dim();
            let shifted =
                (w.operator.matrix() + ComplexMatrix::identity(n, n) * c(delta)) * c(-scale);
            WitnessMember {
                m: w.m,
                operator: HermitianOperator::from_hermitian_part(&shifted),
            }
        })
        .collect();
    Ok(WitnessFamily {
        members,
        shift: Some(ShiftConstants { deltas, scale }),
        ..family.clone()
    })
}

pub fn shift_family(
    family: &WitnessFamily,
    union: &FreeSetUnion,
    sample_budget: usize,
    seed: u64,
) -> Result<WitnessFamily> {
    shift_with_samples(family, &union_samples(union, sample_budget, seed))
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberValue {
    pub m: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsetVerification {
    pub label: String,
    pub samples: usize,
    /// Samples that no member flags.
    pub undetected: usize,
    /// Count of samples by the least flagging `m` (`"none"` when unflagged).
    pub least_m: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessReport {
    pub kind: Mode,
    pub s: f64,
    pub shifted: bool,
    pub base_values: Vec<MemberValue>,
    /// Unshifted: every base value is nonnegative. Shifted: every base value
    /// is negative.
    pub base_condition: bool,
    pub subsets: Vec<SubsetVerification>,
    /// Base condition holds and every free sample is flagged.
    pub witness: bool,
}

pub fn verify_with_samples(
    family: &WitnessFamily,
    base: &HermitianOperator,
    samples: &[(String, Vec<HermitianOperator>)],
    tol: f64,
) -> Result<WitnessReport> {
    let values = family.evaluate(base)?;
    let base_condition = if family.is_shifted() {
        values.iter().all(|&v| v < 0.0)
    } else {
        values.iter().all(|&v| v >= -tol)
    };
    let base_values = family
        .members
        .iter()
        .zip(&values)
        .map(|(w, &value)| MemberValue { m: w.m, value })
        .collect();
    let mut subsets = Vec::with_capacity(samples.len());
    for (label, set) in samples {
        let mut least_m = BTreeMap::new();
        let mut undetected = 0;
        for sigma in set {
            let key = match family.flags(&family.evaluate(sigma)?, tol) {
                Some(m) => m.to_string(),
                None => {
                    undetected += 1;
                    "none".to_string()
                }
            };
            *least_m.entry(key).or_insert(0) += 1;
        }
        subsets.push(SubsetVerification {
            label: label.clone(),
            samples: set.len(),
            undetected,
            least_m,
        });
    }
    let witness = base_condition && subsets.iter().all(|s| s.undetected == 0);
    Ok(WitnessReport {
        kind: family.kind,
        s: family.s,
        shifted: family.is_shifted(),
        base_values,
        base_condition,
        subsets,
        witness,
    })
}

pub fn verify_family(
    family: &WitnessFamily,
    rho: &DensityOperator,
    union: &FreeSetUnion,
    sample_budget: usize,
    seed: u64,
    tol: f64,
) -> Result<WitnessReport> {
    verify_with_samples(
        family,
        rho.as_hermitian(),
        &union_samples(union, sample_budget, seed),
        tol,
    )
}

/// Options for the witness-based estimate.
#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub builder: WitnessBuilder,
    pub sample_budget: usize,
    pub seed: u64,
    /// Sign tolerance for member values.
    pub sign_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            builder: WitnessBuilder::Exact,
            sample_budget: 500,
            seed: 0,
            sign_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepStep {
    pub s: f64,
    pub witness: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub kind: Mode,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub steps: Vec<SweepStep>,
}

/// Bisection for the largest `s` at which `accept(s)` holds; `accept` must be
/// true below a threshold and false above it. Weight-mode brackets stay in
/// `(0, 1)`.
pub(crate) fn sweep(
    kind: Mode,
    tol: f64,
    mut accept: impl FnMut(f64) -> Result<bool>,
) -> Result<SweepResult> {
    if !(tol > 0.0) {
        return validation("sweep tolerance must be positive");
    }
    let mut steps = Vec::new();
    let mut check = |s: f64, steps: &mut Vec<SweepStep>| -> Result<bool> {
        let ok = accept(s)?;
        steps.push(SweepStep { s, witness: ok });
        Ok(ok)
    };
    let (mut lo, mut hi) = match kind {
        Mode::Weight => (0.0, 1.0),
        Mode::Robustness => {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..40 {
                if !check(hi, &mut steps)? {
                    break;
                }
                lo = hi;
                hi *= 2.0;
            }
            (lo, hi)
        }
    };
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        if check(mid, &mut steps)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SweepResult {
        kind,
        estimate: 0.5 * (lo + hi),
        lower: lo,
        upper: hi,
        steps,
    })
}

/// Largest `s` at which the family is a witness, found by bisection. The
/// answer approximates the robustness (or weight) within `tol` as far as
/// the free samples represent the free set.
pub fn estimate_via_witness(
    rho: &DensityOperator,
    union: &FreeSetUnion,
    mode: Mode,
    tol: f64,
    opts: SweepOptions,
) -> Result<SweepResult> {
    let samples = union_samples(union, opts.sample_budget, opts.seed);
    let ms = default_range(rho.dim());
    sweep(mode, tol, |s| {
        let fam = WitnessFamily::build(rho, s, mode, &ms, opts.builder, opts.seed)?;
        Ok(verify_with_samples(&fam, rho.as_hermitian(), &samples, opts.sign_tol)?.witness)
    })
}

pub fn estimate_robustness_via_witness(
    rho: &DensityOperator,
    union: &FreeSetUnion,
    tol: f64,
    opts: SweepOptions,
) -> Result<SweepResult> {
    estimate_via_witness(rho, union, Mode::Robustness, tol, opts)
}

pub fn estimate_weight_via_witness(
    rho: &DensityOperator,
    union: &FreeSetUnion,
    tol: f64,
    opts: SweepOptions,
) -> Result<SweepResult> {
    estimate_via_witness(rho, union, Mode::Weight, tol, opts)
}
