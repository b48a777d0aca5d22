//! Channel discrimination and channel exclusion: success and error
//! probabilities, Helstrom measurements, witness-derived channel pairs and
//! the advantage of a resource state over free states.

use crate::bloch::Mode;
use crate::channels::{random_channel_with, ChoiOperator};
use crate::error::{validation, Error, Result};
use crate::free_sets::{ConvexFreeSet, FreeSetUnion};
use crate::measures::{
    per_subset, robustness_union, weight_union, MeasureResult, MeasureValue, Problem,
};
use crate::operator::{
    c, kron_power, max_abs, trace, trace_product, ComplexMatrix, DensityOperator, HermitianOperator,
};
use crate::witness::{
    default_range, free_samples, shift_with_samples, WitnessBuilder, WitnessFamily,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

const PRIOR_TOL: f64 = 1e-12;
const EFFECT_TOL: f64 = 1e-10;
const COMPLETENESS_TOL: f64 = 1e-9;
/// Default witness parameter as a fraction of the measured value.
pub const DEFAULT_S_FRACTION: f64 = 0.9;

/// A quantum channel in one of several equivalent descriptions.
#[derive(Debug, Clone)]
pub enum Channel {
    Kraus {
        ops: Vec<ComplexMatrix>,
        d_in: usize,
        d_out: usize,
    },
    Choi(ChoiOperator),
    /// `X ↦ Σ_i tr[E_i X] σ_i` with `Σ E_i = I`.
    MeasurePrepare {
        effects: Vec<HermitianOperator>,
        outputs: Vec<DensityOperator>,
    },
}

impl Channel {
    pub fn kraus(ops: Vec<ComplexMatrix>) -> Result<Self> {
        let Some(first) = ops.first() else {
            return validation("channel needs at least one Kraus operator");
        };
        let (d_out, d_in) = (first.nrows(), first.ncols());
        // Completeness is checked by building the Choi operator.
        crate::channels::choi_from_kraus(&ops, d_in, d_out)?;
        Ok(Self::Kraus { ops, d_in, d_out })
    }

    pub fn identity(d: usize) -> Self {
        Self::Kraus {
            ops: vec![ComplexMatrix::identity(d, d)],
            d_in: d,
            d_out: d,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Self::Kraus { d_in, .. } => *d_in,
            Self::Choi(j) => j.d1(),
            Self::MeasurePrepare { effects, .. } => effects[0].dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Kraus { d_out, .. } => *d_out,
            Self::Choi(j) => j.d2(),
            Self::MeasurePrepare { outputs, .. } => outputs[0].dim(),
        }
    }

    pub fn apply(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        if x.nrows() != self.input_dim() || x.ncols() != self.input_dim() {
            return validation(format!(
                "channel input has dimension {}, got {}",
                self.input_dim(),
                x.nrows()
            ));
        }
        match self {
            Self::Kraus { ops, d_out, .. } => {
                let mut out = ComplexMatrix::zeros(*d_out, *d_out);
                for k in ops {
                    out += k * x * k.adjoint();
                }
                Ok(out)
            }
            Self::Choi(j) => j.apply_matrix(x),
            Self::MeasurePrepare { effects, outputs } => {
                let d = outputs[0].dim();
                let mut out = ComplexMatrix::zeros(d, d);
                for (e, s) in effects.iter().zip(outputs) {
                    out += s.matrix() * trace_product(e.matrix(), x);
                }
                Ok(out)
            }
        }
    }

    pub fn apply_state(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        DensityOperator::new(self.apply(rho.matrix())?)
    }

    pub fn choi(&self) -> Result<ChoiOperator> {
        let d = self.input_dim();
        let dout = self.output_dim();
        let mut m = ComplexMatrix::zeros(d * dout, d * dout);
        for i in 0..d {
            for j in 0..d {
                let mut unit = ComplexMatrix::zeros(d, d);
                unit[(i, j)] = c(1.0);
                let block = self.apply(&unit)?;
                m.view_mut((i * dout, j * dout), (dout, dout))
                    .copy_from(&block);
            }
        }
        ChoiOperator::new(HermitianOperator::from_hermitian_part(&m), d, dout, true)
    }
}

pub(crate) fn check_priors(p: &[f64]) -> Result<()> {
    if p.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return validation("prior probabilities must be nonnegative");
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PRIOR_TOL {
        return validation(format!("prior probabilities sum to {total}"));
    }
    Ok(())
}

pub(crate) fn random_priors<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

#[derive(Debug, Clone)]
pub struct ChannelEnsemble {
    probabilities: Vec<f64>,
    channels: Vec<Channel>,
}

impl ChannelEnsemble {
    pub fn new(probabilities: Vec<f64>, channels: Vec<Channel>) -> Result<Self> {
        if channels.is_empty() || probabilities.len() != channels.len() {
            return validation("ensemble needs one probability per channel");
        }
        check_priors(&probabilities)?;
        let (din, dout) = (channels[0].input_dim(), channels[0].output_dim());
        for ch in &channels {
            if ch.input_dim() != din || ch.output_dim() != dout {
                return validation("ensemble channels have different dimensions");
            }
            let r = ch.choi()?.tp_residual();
            if r > COMPLETENESS_TOL {
                return validation(format!(
                    "ensemble channel is not trace preserving (residual {r:e})"
                ));
            }
        }
        Ok(Self {
            probabilities,
            channels,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// `n` random channels with `d → d` and random priors.
    pub fn random_with<R: Rng + ?Sized>(rng: &mut R, d: usize, n: usize) -> Self {
        let probabilities = random_priors(rng, n);
        let channels = (0..n)
            .map(|_| Channel::Choi(random_channel_with(rng, d, d, 2)))
            .collect();
        Self {
            probabilities,
            channels,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Povm {
    effects: Vec<HermitianOperator>,
}

impl Povm {
    pub fn new(effects: Vec<HermitianOperator>) -> Result<Self> {
        let Some(first) = effects.first() else {
            return validation("measurement needs at least one effect");
        };
        let d = first.dim();
        let mut total = ComplexMatrix::zeros(d, d);
        for e in &effects {
            if e.dim() != d {
                return validation("measurement effects have different dimensions");
            }
            let lo = e.min_eig();
            if lo < -EFFECT_TOL {
                return validation(format!("measurement effect has negative eigenvalue {lo:e}"));
            }
            total += e.matrix();
        }
        for i in 0..d {
            total[(i, i)] -= c(1.0);
        }
        let r = max_abs(&total);
        if r > COMPLETENESS_TOL {
            return validation(format!(
                "measurement effects do not sum to the identity (residual {r:e})"
            ));
        }
        Ok(Self { effects })
    }

    /// `{M, I − M}`.
    pub fn two_outcome(m: HermitianOperator) -> Result<Self> {
        let rest = &HermitianOperator::identity(m.dim()) - &m;
        Self::new(vec![m, rest])
    }

    /// `M_i = S^{-1/2} A_i S^{-1/2}` for random positive `A_i`, `S = Σ A_i`.
    pub fn random_with<R: Rng + ?Sized>(rng: &mut R, d: usize, n: usize) -> Self {
        let parts: Vec<HermitianOperator> = (0..n)
            .map(|_| {
                crate::operator::random_density_with(rng, d)
                    .as_hermitian()
                    .clone()
            })
            .collect();
        let mut total = HermitianOperator::zeros(d);
        for a in &parts {
            total = &total + a;
        }
        let inv = total.support_power(-0.5);
        let effects = parts
            .iter()
            .map(|a| {
                HermitianOperator::from_hermitian_part(&(inv.matrix() * a.matrix() * inv.matrix()))
            })
            .collect();
        Self { effects }
    }

    pub fn effects(&self) -> &[HermitianOperator] {
        &self.effects
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    /// The same effects in reverse order.
    pub fn reversed(&self) -> Self {
        Self {
            effects: self.effects.iter().rev().cloned().collect(),
        }
    }
}

fn weighted_outcomes(
    ensemble: &ChannelEnsemble,
    povm: &Povm,
    input: &ComplexMatrix,
) -> Result<f64> {
    if povm.effects.len() != ensemble.channels.len() {
        return validation(format!(
            "measurement has {} outcomes for {} channels",
            povm.effects.len(),
            ensemble.channels.len()
        ));
    }
    if povm.dim() != ensemble.channels[0].output_dim() {
        return validation("measurement does not act on the channel output");
    }
    let mut total = 0.0;
    for ((p, ch), m) in ensemble
        .probabilities
        .iter()
        .zip(&ensemble.channels)
        .zip(&povm.effects)
    {
        total += p * m.expectation(&ch.apply(input)?);
    }
    Ok(total.clamp(-1e-10, 1.0 + 1e-10))
}

/// `Σ_i p_i tr[M_i Λ_i(input)]`: outcome `i` guesses channel `i`.
pub fn p_succ(ensemble: &ChannelEnsemble, povm: &Povm, input: &DensityOperator) -> Result<f64> {
    weighted_outcomes(ensemble, povm, input.matrix())
}

/// `Σ_i p_i tr[M_i Λ_i(input)]`: outcome `i` excludes channel `i`.
pub fn p_err(ensemble: &ChannelEnsemble, povm: &Povm, input: &DensityOperator) -> Result<f64> {
    weighted_outcomes(ensemble, povm, input.matrix())
}

/// Optimal two-outcome measurement for priors `(q, 1−q)` and its success
/// probability `½(1 + ‖qρ₁ − (1−q)ρ₂‖₁)`.
pub fn helstrom(rho1: &DensityOperator, rho2: &DensityOperator, q: f64) -> Result<(Povm, f64)> {
    if rho1.dim() != rho2.dim() {
        return validation("Helstrom measurement needs states of equal dimension");
    }
    if !(0.0..=1.0).contains(&q) {
        return validation(format!("prior {q} is outside [0, 1]"));
    }
    let diff = HermitianOperator::from_hermitian_part(
        &(rho1.matrix() * c(q) - rho2.matrix() * c(1.0 - q)),
    );
    let e = diff.eigh();
    let d = diff.dim();
    let mut m1 = ComplexMatrix::zeros(d, d);
    for k in (0..d).filter(|&k| e.values[k] > 0.0) {
        let v = e.vectors.column(k);
        m1 += v * v.adjoint();
    }
    let m1 = HermitianOperator::from_hermitian_part(&m1);
    let value =
        q * m1.expectation(rho1.matrix()) + (1.0 - q) * (1.0 - m1.expectation(rho2.matrix()));
    Ok((Povm::two_outcome(m1)?, value))
}

/// The channel pair whose Helstrom bias equals `|tr[WX]|/‖W‖∞`.
pub fn witness_channels(w: &HermitianOperator) -> Result<(Channel, Channel)> {
    let n = w.op_norm();
    if !(n > 0.0) {
        return validation("witness operator is zero");
    }
    let d = w.dim();
    let half = HermitianOperator::identity(d).scale(0.5);
    let part = w.scale(0.5 / n);
    let plus = &half + &part;
    let minus = &half - &part;
    let flags = vec![DensityOperator::basis(2, 0), DensityOperator::basis(2, 1)];
    let one = Channel::MeasurePrepare {
        effects: vec![plus.clone(), minus.clone()],
        outputs: flags.clone(),
    };
    let two = Channel::MeasurePrepare {
        effects: vec![minus, plus],
        outputs: flags,
    };
    Ok((one, two))
}

/// Options shared by the advantage computations.
#[derive(Debug, Clone)]
pub struct AdvantageOptions {
    pub tol: f64,
    pub sample_budget: usize,
    pub seed: u64,
    /// Witness parameter as a fraction of the measured value.
    pub s_fraction: f64,
    /// Copy numbers; `None` uses `{2, …, d}`.
    pub ms: Option<Vec<usize>>,
}

impl Default for AdvantageOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            sample_budget: 200,
            seed: 0,
            s_fraction: DEFAULT_S_FRACTION,
            ms: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CopyBreakdown {
    pub m: usize,
    /// Optimal success (discrimination) or error (exclusion) probability for
    /// the resource state.
    pub resource: f64,
    /// Best value over the free samples for this `m` alone: minimum success
    /// or maximum error.
    pub free_extreme: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdvantageReport {
    pub task: &'static str,
    pub measure: MeasureValue,
    pub s: f64,
    pub ms: Vec<usize>,
    pub samples: usize,
    pub per_m: Vec<CopyBreakdown>,
    /// Discrimination: min over free samples of `max_m p(ρ)/p(σ)`, above 1
    /// for an advantage. Exclusion: max over free samples of
    /// `min_m p(ρ)/p(σ)`, below 1 for an advantage.
    pub ratio: f64,
    pub worst_subset: String,
    pub advantage: bool,
}

/// Discrimination or exclusion probability per copy number for one state.
fn optimal_values(
    channels: &[(Channel, Channel)],
    ms: &[usize],
    eta: &DensityOperator,
    exclusion: bool,
) -> Result<Vec<f64>> {
    channels
        .iter()
        .zip(ms)
        .map(|((one, two), &m)| {
            let input = kron_power(eta.matrix(), m)?;
            let out1 = DensityOperator::from_hermitian(HermitianOperator::from_hermitian_part(
                &one.apply(&input)?,
            ))?;
            let out2 = DensityOperator::from_hermitian(HermitianOperator::from_hermitian_part(
                &two.apply(&input)?,
            ))?;
            let (_, succ) = helstrom(&out1, &out2, 0.5)?;
            Ok(if exclusion { 1.0 - succ } else { succ })
        })
        .collect()
}

fn advantage(
    rho: &DensityOperator,
    union: &FreeSetUnion,
    mode: Mode,
    opts: &AdvantageOptions,
) -> Result<AdvantageReport> {
    if rho.dim() != union.dim() {
        return validation("state and free set have different dimensions");
    }
    let measured = match mode {
        Mode::Robustness => robustness_union(rho, union, opts.tol)?,
        Mode::Weight => weight_union(rho, union, opts.tol)?,
    };
    let s = match measured.value {
        MeasureValue::Finite(v) if v <= opts.tol => {
            return Err(Error::Precondition(format!(
                "state is free: measure {v:e} is within tolerance"
            )));
        }
        MeasureValue::Finite(v) => opts.s_fraction * v,
        // Every positive parameter is below an infinite robustness.
        MeasureValue::Infinite => 1.0,
    };
    let ms = opts.ms.clone().unwrap_or_else(|| default_range(rho.dim()));
    let family = WitnessFamily::build(rho, s, mode, &ms, WitnessBuilder::Exact, opts.seed)?;

    let mut samples: Vec<(String, Vec<DensityOperator>)> = Vec::new();
    for (k, ((label, set), (_, r))) in union
        .iter()
        .zip(per_subset(rho, union, mode, opts.tol)?)
        .enumerate()
    {
        let mut v = free_samples(set, opts.sample_budget, opts.seed.wrapping_add(k as u64));
        if let Some(sigma) = r.sigma {
            v.push(sigma);
        }
        samples.push((label.to_string(), v));
    }
    let hermitian: Vec<(String, Vec<HermitianOperator>)> = samples
        .iter()
        .map(|(l, v)| {
            (
                l.clone(),
                v.iter().map(|s| s.as_hermitian().clone()).collect(),
            )
        })
        .collect();
    let shifted = shift_with_samples(&family, &hermitian)?;

    let channels = shifted
        .members
        .iter()
        .map(|w| {
            let n = w.operator.op_norm();
            let modified =
                &HermitianOperator::identity(w.operator.dim()) - &w.operator.scale(1.0 / n);
            witness_channels(&modified)
        })
        .collect::<Result<Vec<_>>>()?;

    let exclusion = mode == Mode::Weight;
    let resource = optimal_values(&channels, &ms, rho, exclusion)?;
    let mut free_extreme = vec![if exclusion { 0.0 } else { f64::INFINITY }; ms.len()];
    let mut ratio = if exclusion {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    let mut worst_subset = String::new();
    let mut count = 0;
    for (label, set) in &samples {
        for sigma in set {
            count += 1;
            let vals = optimal_values(&channels, &ms, sigma, exclusion)?;
            let ratios = resource
                .iter()
                .zip(&vals)
                .map(|(r, v)| r / v.max(f64::MIN_POSITIVE));
            let r = if exclusion {
                ratios.fold(f64::INFINITY, f64::min)
            } else {
                ratios.fold(f64::NEG_INFINITY, f64::max)
            };
            let worse = if exclusion { r > ratio } else { r < ratio };
            if worse {
                ratio = r;
                worst_subset = label.clone();
            }
            for (e, v) in free_extreme.iter_mut().zip(&vals) {
                *e = if exclusion { e.max(*v) } else { e.min(*v) };
            }
        }
    }
    let per_m = ms
        .iter()
        .zip(resource.iter().zip(&free_extreme))
        .map(|(&m, (&r, &f))| CopyBreakdown {
            m,
            resource: r,
            free_extreme: f,
        })
        .collect();
    Ok(AdvantageReport {
        task: if exclusion {
            "exclusion"
        } else {
            "discrimination"
        },
        measure: measured.value,
        s,
        ms,
        samples: count,
        per_m,
        ratio,
        worst_subset,
        advantage: if exclusion { ratio < 1.0 } else { ratio > 1.0 },
    })
}

/// Multicopy channel-discrimination advantage of a resource state, built
/// from the shifted robustness witness at `s = s_fraction·R`.
pub fn discrimination_advantage(
    rho: &DensityOperator,
    union: &FreeSetUnion,
    opts: &AdvantageOptions,
) -> Result<AdvantageReport> {
    advantage(rho, union, Mode::Robustness, opts)
}

/// Multicopy channel-exclusion advantage of a resource state, built from
/// the shifted weight witness at `s = s_fraction·WoR`.
pub fn exclusion_advantage(
    rho: &DensityOperator,
    union: &FreeSetUnion,
    opts: &AdvantageOptions,
) -> Result<AdvantageReport> {
    advantage(rho, union, Mode::Weight, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// The measure vanishes; every task gives ratio 1.
    Free,
    ClosedForm,
    DualCertificate,
    /// Support mismatch: a free-probability-zero (or resource-probability-zero) effect.
    Support,
    /// The dual certificate could not be extracted.
    Unavailable,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsetWorstCase {
    pub label: String,
    pub measure: MeasureValue,
    /// Ratio reached by the constructed single-copy task.
    pub achieved: MeasureValue,
    pub construction: Construction,
    /// Most extreme ratio over the random tasks.
    pub observed: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstCaseReport {
    pub task: &'static str,
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub subsets: Vec<SubsetWorstCase>,
    pub union_measure: MeasureValue,
    /// Discrimination: `min_k` achieved ratio, to compare with `1 + R`.
    /// Exclusion: `1 − sup_k` achieved ratio, to compare with `WoR`.
    pub achieved: MeasureValue,
    pub violations: usize,
}

fn identity_task(d: usize, effect: HermitianOperator) -> Result<(ChannelEnsemble, Povm)> {
    let ens = ChannelEnsemble::new(
        vec![1.0, 0.0],
        vec![Channel::identity(d), Channel::identity(d)],
    )?;
    Ok((ens, Povm::two_outcome(effect)?))
}

fn rank_one(v: nalgebra::DVectorView<'_, num_complex::Complex64>) -> HermitianOperator {
    let norm = v.norm_squared();
    HermitianOperator::from_hermitian_part(&((v * v.adjoint()) / c(norm)))
}

fn top_vector(h: &HermitianOperator) -> nalgebra::DVector<num_complex::Complex64> {
    let e = h.eigh();
    e.vectors.column(h.dim() - 1).into_owned()
}

/// Effect probing the part of `a` outside the support of `b`.
fn support_gap_effect(a: &HermitianOperator, b: &HermitianOperator) -> HermitianOperator {
    let d = a.dim();
    let outside = &HermitianOperator::identity(d) - &b.support_projector();
    let squeezed =
        HermitianOperator::from_hermitian_part(&(outside.matrix() * a.matrix() * outside.matrix()));
    rank_one(top_vector(&squeezed).as_view())
}

/// Singleton optimal effect: `w = σ^{-1/2} v` with `v` the top eigenvector of
/// `σ^{-1/2} ρ σ^{-1/2}` (robustness), or `w = ρ^{-1/2} v` with `v` the top
/// eigenvector of `ρ^{-1/2} σ ρ^{-1/2}` (weight).
fn relative_effect(num: &HermitianOperator, den: &HermitianOperator) -> HermitianOperator {
    let inv = den.support_power(-0.5);
    let rel = HermitianOperator::from_hermitian_part(&(inv.matrix() * num.matrix() * inv.matrix()));
    let w = inv.matrix() * top_vector(&rel);
    rank_one(w.as_view())
}

fn state_gens(set: &ConvexFreeSet) -> Vec<HermitianOperator> {
    set.generators()
        .iter()
        .map(|g| g.as_hermitian().clone())
        .collect()
}

/// Single-copy task realizing the subset measure, as an effect `M` used with
/// two identity channels, priors `(1, 0)` and measurement `{M, I−M}`.
fn optimal_effect(
    rho: &DensityOperator,
    set: &ConvexFreeSet,
    measured: &MeasureResult,
    mode: Mode,
    tol: f64,
) -> (Option<HermitianOperator>, Construction) {
    let d = rho.dim();
    let r = rho.as_hermitian();
    let value = match measured.value {
        MeasureValue::Finite(v) if v <= tol => {
            return (Some(HermitianOperator::identity(d)), Construction::Free)
        }
        MeasureValue::Finite(v) => v,
        MeasureValue::Infinite => {
            return (
                Some(support_gap_effect(r, set.barycenter().as_hermitian())),
                Construction::Support,
            );
        }
    };
    if let ConvexFreeSet::Singleton(sigma) = set {
        let s = sigma.as_hermitian();
        return match mode {
            Mode::Robustness => (Some(relative_effect(r, s)), Construction::ClosedForm),
            Mode::Weight if crate::free_sets::support_within(s, r) => {
                (Some(relative_effect(s, r)), Construction::ClosedForm)
            }
            Mode::Weight => (Some(support_gap_effect(s, r)), Construction::Support),
        };
    }
    let prob = Problem::from_states(r, &state_gens(set));
    let s_lo = (value - 2.0 * tol).max(0.0);
    match prob.dual_certificate(s_lo, mode) {
        Some(z) => {
            let z = HermitianOperator::from_hermitian_part(&z[0]);
            let top = z.max_eig();
            (Some(z.scale(1.0 / top)), Construction::DualCertificate)
        }
        None => (None, Construction::Unavailable),
    }
}

/// `p(ρ) / max_σ p(σ)` (robustness) or `p(ρ) / min_σ p(σ)` (weight) over the
/// generators, for the identity-channel task with effect `M`.
fn task_ratio(
    rho: &DensityOperator,
    gens: &[DensityOperator],
    effect: HermitianOperator,
    mode: Mode,
) -> Result<MeasureValue> {
    let (ens, povm) = identity_task(rho.dim(), effect)?;
    let num = p_succ(&ens, &povm, rho)?;
    let mut den = match mode {
        Mode::Robustness => 0.0,
        Mode::Weight => f64::INFINITY,
    };
    for g in gens {
        let v = p_succ(&ens, &povm, g)?;
        den = match mode {
            Mode::Robustness => den.max(v),
            Mode::Weight => den.min(v),
        };
    }
    if den <= 1e-14 {
        return Ok(if num <= 1e-14 {
            MeasureValue::Finite(1.0)
        } else {
            MeasureValue::Infinite
        });
    }
    Ok(MeasureValue::Finite(num / den))
}

fn worst_case(
    rho: &DensityOperator,
    union: &FreeSetUnion,
    mode: Mode,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<WorstCaseReport> {
    if rho.dim() != union.dim() {
        return validation("state and free set have different dimensions");
    }
    let d = rho.dim();
    let results = per_subset(rho, union, mode, tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks: Vec<(ChannelEnsemble, Povm)> = (0..trials)
        .map(|t| {
            let n = 2 + t % 2;
            let ens = ChannelEnsemble::random_with(&mut rng, d, n);
            let povm = Povm::random_with(&mut rng, d, n);
            (ens, povm)
        })
        .collect();

    let mut subsets = Vec::with_capacity(results.len());
    for (k, ((label, set), (_, measured))) in union.iter().zip(&results).enumerate() {
        let mut free = free_samples(set, 20, seed.wrapping_add(k as u64));
        if let Some(sigma) = &measured.sigma {
            free.push(sigma.clone());
        }
        let mut observed = match mode {
            Mode::Robustness => 0.0,
            Mode::Weight => f64::INFINITY,
        };
        let mut violations = 0;
        for (ens, povm) in &tasks {
            let p_rho = p_succ(ens, povm, rho)?;
            let vals = free
                .iter()
                .map(|s| p_succ(ens, povm, s))
                .collect::<Result<Vec<f64>>>()?;
            match mode {
                Mode::Robustness => {
                    let best = vals.iter().copied().fold(0.0, f64::max);
                    let ratio = p_rho / best.max(f64::MIN_POSITIVE);
                    observed = observed.max(ratio);
                    if let MeasureValue::Finite(v) = measured.value {
                        if ratio > (1.0 + v) * (1.0 + 10.0 * tol) {
                            violations += 1;
                        }
                    }
                }
                Mode::Weight => {
                    let least = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    observed = observed.min(p_rho / least.max(f64::MIN_POSITIVE));
                    // Dominance against the optimizer, the last sample.
                    let at_opt = *vals.last().expect("optimizer is present");
                    if p_rho < (1.0 - measured.value.as_f64()) * at_opt - 10.0 * tol {
                        violations += 1;
                    }
                }
            }
        }
        let (effect, construction) = optimal_effect(rho, set, measured, mode, tol);
        let achieved = match effect {
            Some(m) => task_ratio(rho, set.generators(), m, mode)?,
            None => MeasureValue::Finite(f64::NAN),
        };
        subsets.push(SubsetWorstCase {
            label: label.to_string(),
            measure: measured.value,
            achieved,
            construction,
            observed,
            violations,
        });
    }

    let union_measure = match mode {
        Mode::Robustness => robustness_union(rho, union, tol)?.value,
        Mode::Weight => weight_union(rho, union, tol)?.value,
    };
    let achieved = match mode {
        Mode::Robustness => subsets
            .iter()
            .map(|s| s.achieved)
            .min_by(|a, b| a.as_f64().total_cmp(&b.as_f64()))
            .expect("union is nonempty"),
        Mode::Weight => {
            let sup = subsets
                .iter()
                .map(|s| s.achieved.as_f64())
                .fold(f64::NEG_INFINITY, f64::max);
            MeasureValue::Finite(1.0 - sup)
        }
    };
    let violations = subsets.iter().map(|s| s.violations).sum();
    Ok(WorstCaseReport {
        task: if mode == Mode::Weight {
            "exclusion"
        } else {
            "discrimination"
        },
        trials,
        seed,
        tolerance: tol,
        subsets,
        union_measure,
        achieved,
        violations,
    })
}

/// Single-copy discrimination: random tasks bounded by `1 + R_k` per subset
/// and constructed tasks reaching it.
pub fn worst_case_discrimination(
    rho: &DensityOperator,
    union: &FreeSetUnion,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<WorstCaseReport> {
    worst_case(rho, union, Mode::Robustness, trials, seed, tol)
}

/// Single-copy exclusion: random tasks bounded by `1 − WoR_k` per subset and
/// constructed tasks reaching it.
pub fn worst_case_exclusion(
    rho: &DensityOperator,
    union: &FreeSetUnion,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<WorstCaseReport> {
    worst_case(rho, union, Mode::Weight, trials, seed, tol)
}

/// `tr[ρ]` of a channel output, for sanity checks.
pub fn output_trace(ch: &Channel, rho: &DensityOperator) -> Result<f64> {
    Ok(trace(&ch.apply(rho.matrix())?).re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::qubit_state;
    use crate::operator::{random_density_with, trace_norm};

    fn z0() -> DensityOperator {
        DensityOperator::basis(2, 0)
    }

    fn singleton_mixed() -> FreeSetUnion {
        FreeSetUnion::single(
            ConvexFreeSet::Singleton(DensityOperator::maximally_mixed(2)),
            "mixed",
        )
    }

    #[test]
    fn trivial_success_probabilities() {
        let ens = ChannelEnsemble::new(
            vec![0.5, 0.5],
            vec![Channel::identity(2), Channel::identity(2)],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let povm = Povm::random_with(&mut rng, 2, 2);
        let rho = random_density_with(&mut rng, 2);
        assert!((p_succ(&ens, &povm, &rho).unwrap() - 0.5).abs() < 1e-12);

        let prep = |k| Channel::MeasurePrepare {
            effects: vec![HermitianOperator::identity(2)],
            outputs: vec![DensityOperator::basis(2, k)],
        };
        let ens = ChannelEnsemble::new(vec![0.5, 0.5], vec![prep(0), prep(1)]).unwrap();
        let proj = Povm::two_outcome(z0().as_hermitian().clone()).unwrap();
        assert!((p_succ(&ens, &proj, &rho).unwrap() - 1.0).abs() < 1e-12);
        assert!(p_err(&ens, &proj.reversed(), &rho).unwrap().abs() < 1e-12);
    }

    #[test]
    fn probabilities_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let ens = ChannelEnsemble::random_with(&mut rng, 3, 3);
            let povm = Povm::random_with(&mut rng, 3, 3);
            let rho = random_density_with(&mut rng, 3);
            let mut brute = 0.0;
            for i in 0..3 {
                let out = ens.channels()[i].apply(rho.matrix()).unwrap();
                brute += ens.probabilities()[i] * trace(&(povm.effects()[i].matrix() * out)).re;
            }
            assert!((p_succ(&ens, &povm, &rho).unwrap() - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn exclusion_complements_discrimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ens = ChannelEnsemble::random_with(&mut rng, 2, 2);
        let povm = Povm::random_with(&mut rng, 2, 2);
        let rho = random_density_with(&mut rng, 2);
        let s = p_succ(&ens, &povm, &rho).unwrap();
        let e = p_err(&ens, &povm.reversed(), &rho).unwrap();
        assert!((s + e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_outcomes_are_rejected() {
        let ens = ChannelEnsemble::new(vec![1.0], vec![Channel::identity(2)]).unwrap();
        let povm = Povm::two_outcome(z0().as_hermitian().clone()).unwrap();
        assert!(matches!(
            p_succ(&ens, &povm, &z0()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn helstrom_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let same = random_density_with(&mut rng, 2);
        assert!((helstrom(&same, &same, 0.5).unwrap().1 - 0.5).abs() < 1e-12);
        assert!(
            (helstrom(&z0(), &DensityOperator::basis(2, 1), 0.5)
                .unwrap()
                .1
                - 1.0)
                .abs()
                < 1e-12
        );
        for &q in &[0.5, 0.3] {
            let a = random_density_with(&mut rng, 3);
            let b = random_density_with(&mut rng, 3);
            let (povm, v) = helstrom(&a, &b, q).unwrap();
            let diff = a.matrix() * c(q) - b.matrix() * c(1.0 - q);
            assert!((v - 0.5 * (1.0 + trace_norm(&diff))).abs() < 1e-10);
            let direct = q * povm.effects()[0].expectation(a.matrix())
                + (1.0 - q) * povm.effects()[1].expectation(b.matrix());
            assert!((v - direct).abs() < 1e-12);
            for _ in 0..1000 {
                let m = Povm::random_with(&mut rng, 3, 2);
                let p = q * m.effects()[0].expectation(a.matrix())
                    + (1.0 - q) * m.effects()[1].expectation(b.matrix());
                assert!(p <= v + 1e-12);
            }
        }
    }

    #[test]
    fn witness_channel_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = crate::operator::random_hermitian_with(&mut rng, 4);
        let (one, two) = witness_channels(&w).unwrap();
        for _ in 0..100 {
            let x = random_density_with(&mut rng, 4);
            let a = one.apply_state(&x).unwrap();
            let b = two.apply_state(&x).unwrap();
            let bias = trace_norm(&(a.matrix() - b.matrix()));
            assert!((bias - 2.0 * w.expectation(x.matrix()).abs() / w.op_norm()).abs() < 1e-12);
        }
        let (one, two) = witness_channels(&HermitianOperator::identity(2)).unwrap();
        let x = random_density_with(&mut rng, 2);
        assert!(
            crate::operator::max_abs(&(one.apply(x.matrix()).unwrap() - z0().matrix())) < 1e-14
        );
        assert!(
            crate::operator::max_abs(
                &(two.apply(x.matrix()).unwrap() - DensityOperator::basis(2, 1).matrix())
            ) < 1e-14
        );
        assert!(witness_channels(&HermitianOperator::zeros(2)).is_err());
    }

    #[test]
    fn discrimination_advantage_pure_vs_mixed() {
        let rep = discrimination_advantage(&z0(), &singleton_mixed(), &AdvantageOptions::default())
            .unwrap();
        assert_eq!(rep.ms, vec![2]);
        assert!(rep.ratio > 1.0 + 1e-4, "ratio {}", rep.ratio);
        let free = discrimination_advantage(
            &DensityOperator::maximally_mixed(2),
            &singleton_mixed(),
            &AdvantageOptions::default(),
        );
        assert!(matches!(free, Err(Error::Precondition(_))));
    }

    #[test]
    fn exclusion_advantage_against_z_basis() {
        let rho = DensityOperator::new(ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(0.75), c(0.2), c(0.2), c(0.25)],
        ))
        .unwrap();
        let union = FreeSetUnion::single(ConvexFreeSet::computational_basis(2), "z");
        let rep = exclusion_advantage(&rho, &union, &AdvantageOptions::default()).unwrap();
        assert!(rep.ratio < 1.0 && rep.ratio >= 0.0, "ratio {}", rep.ratio);
        let free = DensityOperator::diagonal(&[0.6, 0.4]).unwrap();
        assert!(matches!(
            exclusion_advantage(&free, &union, &AdvantageOptions::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn worst_case_singletons() {
        let rep = worst_case_discrimination(&z0(), &singleton_mixed(), 200, 5, 1e-9).unwrap();
        assert!((rep.achieved.as_f64() - 2.0).abs() < 1e-9);
        assert_eq!(rep.violations, 0);

        let rho = DensityOperator::diagonal(&[0.75, 0.25]).unwrap();
        let rep = worst_case_exclusion(&rho, &singleton_mixed(), 200, 6, 1e-9).unwrap();
        assert!((rep.subsets[0].achieved.as_f64() - 0.5).abs() < 1e-9);
        assert!((rep.achieved.as_f64() - 0.5).abs() < 1e-9);
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn worst_case_hull_and_free() {
        let rho = qubit_state([0.3, 0.4, 0.5]).unwrap();
        let tol = 1e-7;
        let rep =
            worst_case_discrimination(&rho, &FreeSetUnion::qubit_axes(), 100, 7, tol).unwrap();
        assert_eq!(rep.violations, 0);
        for s in &rep.subsets {
            assert_eq!(s.construction, Construction::DualCertificate);
            assert!(
                s.achieved.as_f64() >= 1.0 + s.measure.as_f64() - 3.0 * tol,
                "{s:?}"
            );
        }
        assert!((rep.achieved.as_f64() - 1.5).abs() < 1e-5);

        let wor = worst_case_exclusion(&rho, &FreeSetUnion::qubit_axes(), 100, 8, tol).unwrap();
        assert_eq!(wor.violations, 0);
        assert!((wor.achieved.as_f64() - wor.union_measure.as_f64()).abs() < 1e-5);

        let union = FreeSetUnion::unlabeled(vec![
            ConvexFreeSet::computational_basis(2),
            ConvexFreeSet::Singleton(DensityOperator::basis(2, 0)),
        ])
        .unwrap();
        let rep = worst_case_discrimination(&z0(), &union, 50, 9, tol).unwrap();
        assert_eq!(rep.achieved.as_f64(), 1.0);
    }
}
