//! Channels through their Choi operators: robustness over unions of convex
//! channel sets, Choi-space witnesses, the entanglement-assisted state
//! discrimination game and quantum instruments.
//!
//! Convention: `J = Σ_ij |i⟩⟨j| ⊗ Λ(|i⟩⟨j|)` on `H_in ⊗ H_out`, so
//! `Λ(X) = tr_in[(Xᵀ ⊗ I) J]`.

use crate::bloch::Mode;
use crate::error::{validation, Error, Result};
use crate::free_sets::ConvexFreeSet;
use crate::measures::engine::Blocks;
use crate::measures::{min_over, MeasureResult, MeasureValue, Problem, Strategy};
use crate::operator::{
    c, check_tensor_dim, max_abs, partial_trace, random_density_with, ComplexMatrix,
    DensityOperator, HermitianOperator, Side, DEFAULT_TENSOR_CAP,
};
use crate::tasks::Povm;
use crate::witness::{
    free_samples, sweep, verify_with_samples, SweepResult, WitnessFamily, WitnessReport,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Tolerance for positivity and trace preservation of Choi operators.
pub const CHOI_TOL: f64 = 1e-9;
/// Allowed trace-preservation residual of a robustness certificate.
pub const CERTIFICATE_TP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiOperator {
    d1: usize,
    d2: usize,
    matrix: HermitianOperator,
    tp: bool,
}

impl ChoiOperator {
    /// Checks positivity and, when `tp` is set, `tr_out J = I`.
    pub fn new(matrix: HermitianOperator, d1: usize, d2: usize, tp: bool) -> Result<Self> {
        if d1 == 0 || d2 == 0 || matrix.dim() != d1 * d2 {
            return validation(format!(
                "Choi operator of dimension {} does not match {d1}x{d2}",
                matrix.dim()
            ));
        }
        let lo = matrix.min_eig();
        if lo < -CHOI_TOL {
            return validation(format!("Choi operator has negative eigenvalue {lo:e}"));
        }
        let out = Self { d1, d2, matrix, tp };
        if tp {
            let r = out.tp_residual();
            if r > CHOI_TOL {
                return validation(format!(
                    "Choi operator is not trace preserving (residual {r:e})"
                ));
            }
        }
        Ok(out)
    }

    pub fn identity(d: usize) -> Self {
        let mut m = ComplexMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                m[(i * d + i, j * d + j)] = c(1.0);
            }
        }
        Self {
            d1: d,
            d2: d,
            matrix: HermitianOperator::from_hermitian_part(&m),
            tp: true,
        }
    }

    /// The channel `X ↦ tr[X] I/d_out`.
    pub fn completely_depolarizing(d1: usize, d2: usize) -> Self {
        let matrix = HermitianOperator::identity(d1 * d2).scale(1.0 / d2 as f64);
        Self {
            d1,
            d2,
            matrix,
            tp: true,
        }
    }

    pub fn unitary(u: &ComplexMatrix) -> Result<Self> {
        choi_from_kraus(std::slice::from_ref(u), u.ncols(), u.nrows())
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn matrix(&self) -> &HermitianOperator {
        &self.matrix
    }

    pub fn is_tp(&self) -> bool {
        self.tp
    }

    /// `tr_out J`.
    pub fn input_marginal(&self) -> ComplexMatrix {
        partial_trace(self.matrix.matrix(), self.d1, self.d2, Side::Second).expect("shape checked")
    }

    /// `max |tr_out J − I|`.
    pub fn tp_residual(&self) -> f64 {
        let mut m = self.input_marginal();
        for i in 0..self.d1 {
            m[(i, i)] -= c(1.0);
        }
        max_abs(&m)
    }

    /// Largest `|tr[J (λ_i ⊗ I)]|` over the traceless Gell-Mann matrices of
    /// the input space. Vanishes for trace-preserving maps.
    pub fn input_traceless_component(&self) -> Result<f64> {
        let basis = crate::bloch::gellmann_basis(self.d1)?;
        let marg = HermitianOperator::from_hermitian_part(&self.input_marginal());
        Ok(basis
            .operators
            .iter()
            .map(|l| l.expectation(marg.matrix()).abs())
            .fold(0.0, f64::max))
    }

    /// `Λ(X)` for any operator `X` on the input space.
    pub fn apply_matrix(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        if x.nrows() != self.d1 || x.ncols() != self.d1 {
            return validation(format!(
                "channel input has dimension {}, got {}",
                self.d1,
                x.nrows()
            ));
        }
        let (d1, d2) = (self.d1, self.d2);
        let j = self.matrix.matrix();
        Ok(ComplexMatrix::from_fn(d2, d2, |a, b| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..d1 {
                for k in 0..d1 {
                    acc += x[(i, k)] * j[(i * d2 + a, k * d2 + b)];
                }
            }
            acc
        }))
    }

    /// Unit-trace version `J/d1`.
    pub fn normalized_state(&self) -> Result<DensityOperator> {
        DensityOperator::normalized(&self.matrix)
    }

    fn from_state(state: &DensityOperator, d1: usize, d2: usize) -> Self {
        let matrix = state.as_hermitian().scale(d1 as f64);
        let tp = {
            let probe = Self {
                d1,
                d2,
                matrix: matrix.clone(),
                tp: false,
            };
            probe.tp_residual() <= CHOI_TOL
        };
        Self { d1, d2, matrix, tp }
    }
}

/// Choi operator of `X ↦ Σ K X K†`; the Kraus operators must be complete.
pub fn choi_from_kraus(kraus: &[ComplexMatrix], d1: usize, d2: usize) -> Result<ChoiOperator> {
    if kraus.is_empty() {
        return validation("channel needs at least one Kraus operator");
    }
    let mut completeness = ComplexMatrix::zeros(d1, d1);
    for k in kraus {
        if k.nrows() != d2 || k.ncols() != d1 {
            return validation(format!(
                "Kraus operator is {}x{}, expected {d2}x{d1}",
                k.nrows(),
                k.ncols()
            ));
        }
        completeness += k.adjoint() * k;
    }
    for i in 0..d1 {
        completeness[(i, i)] -= c(1.0);
    }
    let r = max_abs(&completeness);
    if r > CHOI_TOL {
        return validation(format!("Kraus operators are not complete (residual {r:e})"));
    }
    let mut m = ComplexMatrix::zeros(d1 * d2, d1 * d2);
    for k in kraus {
        for i in 0..d1 {
            for a in 0..d2 {
                for j in 0..d1 {
                    for b in 0..d2 {
                        m[(i * d2 + a, j * d2 + b)] += k[(a, i)] * k[(b, j)].conj();
                    }
                }
            }
        }
    }
    Ok(ChoiOperator {
        d1,
        d2,
        matrix: HermitianOperator::from_hermitian_part(&m),
        tp: true,
    })
}

pub fn apply_channel(j: &ChoiOperator, rho: &DensityOperator) -> Result<DensityOperator> {
    let out = HermitianOperator::from_hermitian_part(&j.apply_matrix(rho.matrix())?);
    if j.tp {
        DensityOperator::from_hermitian(out)
    } else {
        DensityOperator::normalized(&out)
    }
}

/// Random channel with `k` Kraus operators from a Haar isometry.
pub fn random_channel_with<R: rand::Rng + ?Sized>(
    rng: &mut R,
    d1: usize,
    d2: usize,
    k: usize,
) -> ChoiOperator {
    let n = (d2 * k).max(d1);
    let u = crate::operator::random_unitary_with(rng, n);
    let kraus: Vec<ComplexMatrix> = (0..k)
        .map(|r| {
            ComplexMatrix::from_fn(d2, d1, |a, i| {
                if r * d2 + a < n {
                    u[(r * d2 + a, i)]
                } else {
                    c(0.0)
                }
            })
        })
        .collect();
    // Rows beyond d2·k are dropped only when d1 > d2·k; renormalize then.
    match choi_from_kraus(&kraus, d1, d2) {
        Ok(j) => j,
        Err(_) => {
            let mut s = ComplexMatrix::zeros(d1, d1);
            for kk in &kraus {
                s += kk.adjoint() * kk;
            }
            let inv = HermitianOperator::from_hermitian_part(&s).support_power(-0.5);
            let fixed: Vec<ComplexMatrix> = kraus.iter().map(|kk| kk * inv.matrix()).collect();
            choi_from_kraus(&fixed, d1, d2).expect("renormalized Kraus operators are complete")
        }
    }
}

/// A convex set of trace-preserving channels given by generators.
#[derive(Debug, Clone)]
pub enum ChannelFreeSet {
    Singleton(ChoiOperator),
    Hull(Vec<ChoiOperator>),
}

impl ChannelFreeSet {
    pub fn generators(&self) -> &[ChoiOperator] {
        match self {
            Self::Singleton(j) => std::slice::from_ref(j),
            Self::Hull(g) => g,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        let g = &self.generators()[0];
        (g.d1, g.d2)
    }

    fn validate(&self) -> Result<()> {
        let gens = self.generators();
        if gens.is_empty() {
            return validation("channel hull needs at least one generator");
        }
        let dims = (gens[0].d1, gens[0].d2);
        for g in gens {
            if (g.d1, g.d2) != dims {
                return validation("channel generators have different dimensions");
            }
            if !g.tp {
                return validation("free channels must be trace preserving");
            }
        }
        Ok(())
    }

    /// The same set on normalized Choi states.
    fn as_state_set(&self) -> Result<ConvexFreeSet> {
        let states = self
            .generators()
            .iter()
            .map(ChoiOperator::normalized_state)
            .collect::<Result<Vec<_>>>()?;
        match self {
            Self::Singleton(_) => Ok(ConvexFreeSet::Singleton(
                states.into_iter().next().expect("one generator"),
            )),
            Self::Hull(_) => ConvexFreeSet::hull(states),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelFreeSetUnion {
    subsets: Vec<ChannelFreeSet>,
    labels: Vec<String>,
}

impl ChannelFreeSetUnion {
    pub fn new(subsets: Vec<ChannelFreeSet>, labels: Vec<String>) -> Result<Self> {
        if subsets.is_empty() {
            return validation("channel free-set union is empty");
        }
        if labels.len() != subsets.len() {
            return validation("one label per subset is required");
        }
        for s in &subsets {
            s.validate()?;
        }
        let dims = subsets[0].dims();
        if subsets.iter().any(|s| s.dims() != dims) {
            return validation("channel subsets have different dimensions");
        }
        Ok(Self { subsets, labels })
    }

    pub fn unlabeled(subsets: Vec<ChannelFreeSet>) -> Result<Self> {
        let labels = (0..subsets.len()).map(|k| format!("F{k}")).collect();
        Self::new(subsets, labels)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.subsets[0].dims()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ChannelFreeSet)> {
        self.labels.iter().map(String::as_str).zip(&self.subsets)
    }

    /// Free channel samples per subset: generators, barycenter and random
    /// mixtures (a fine grid for two generators).
    pub fn samples(&self, budget: usize, seed: u64) -> Result<Vec<(String, Vec<ChoiOperator>)>> {
        let (d1, d2) = self.dims();
        self.iter()
            .enumerate()
            .map(|(k, (label, set))| {
                let states =
                    free_samples(&set.as_state_set()?, budget, seed.wrapping_add(k as u64));
                Ok((
                    label.to_string(),
                    states
                        .iter()
                        .map(|s| ChoiOperator::from_state(s, d1, d2))
                        .collect(),
                ))
            })
            .collect()
    }
}

fn choi_blocks(j: &ChoiOperator) -> Blocks {
    vec![j.matrix.matrix().clone()]
}

fn check_dims(j: &ChoiOperator, union: &ChannelFreeSetUnion) -> Result<()> {
    if (j.d1, j.d2) != union.dims() {
        return validation(format!(
            "channel is {}->{}, free set is {}->{}",
            j.d1,
            j.d2,
            union.dims().0,
            union.dims().1
        ));
    }
    Ok(())
}

/// Robustness of one channel against each subset, in subset order.
pub fn channel_robustness_per_subset(
    lambda: &ChoiOperator,
    union: &ChannelFreeSetUnion,
    tol: f64,
) -> Result<Vec<(String, MeasureResult<ChoiOperator>)>> {
    check_dims(lambda, union)?;
    if !lambda.tp {
        return validation("channel robustness needs a trace-preserving channel");
    }
    let (d1, d2) = (lambda.d1, lambda.d2);
    let to_choi = |b: Blocks| {
        let matrix = HermitianOperator::from_hermitian_part(&b[0]);
        let probe = ChoiOperator {
            d1,
            d2,
            matrix,
            tp: false,
        };
        let tp = probe.tp_residual() <= CERTIFICATE_TP_TOL;
        ChoiOperator { tp, ..probe }
    };
    union
        .iter()
        .map(|(label, set)| {
            let prob = Problem::new(
                choi_blocks(lambda),
                set.generators().iter().map(choi_blocks).collect(),
            );
            let r = prob
                .measure(Mode::Robustness, Strategy::Auto, tol)?
                .map(to_choi);
            if let Some(tau) = &r.tau {
                let res = tau.tp_residual();
                if res > CERTIFICATE_TP_TOL {
                    return Err(Error::Numerical(format!(
                        "robustness certificate is not trace preserving ({res:e})"
                    )));
                }
            }
            Ok((label.to_string(), r.labelled(label)))
        })
        .collect()
}

/// `min_k R_{F_k}(Λ)` with `(1+R)J_σ = J_Λ + R J_τ`.
pub fn channel_robustness(
    lambda: &ChoiOperator,
    union: &ChannelFreeSetUnion,
    tol: f64,
) -> Result<MeasureResult<ChoiOperator>> {
    Ok(min_over(channel_robustness_per_subset(lambda, union, tol)?))
}

/// `{2, …, d1·d2}` restricted to tensor dimensions within the cap.
pub fn channel_default_range(d1: usize, d2: usize, cap: usize) -> Vec<usize> {
    (2..=d1 * d2)
        .filter(|&m| check_tensor_dim("channel witness", d1 * d2, m, cap).is_ok())
        .collect()
}

/// Witness family on Choi space: `tr[W_m J_Ξ^{⊗m}] = S_m(((1+s)J_Ξ − J_Λ)/s)`
/// for trace-preserving probes `J_Ξ`.
pub fn channel_witness(lambda: &ChoiOperator, s: f64, ms: &[usize]) -> Result<WitnessFamily> {
    if !(s > 0.0 && s.is_finite()) {
        return validation(format!("witness parameter must be positive, got {s}"));
    }
    let n = lambda.d1 * lambda.d2;
    for &m in ms {
        check_tensor_dim("channel witness", n, m, DEFAULT_TENSOR_CAP)?;
    }
    WitnessFamily::build_exact_hermitian(&lambda.matrix, s, Mode::Robustness, ms, lambda.d1 as f64)
}

fn choi_samples(samples: &[(String, Vec<ChoiOperator>)]) -> Vec<(String, Vec<HermitianOperator>)> {
    samples
        .iter()
        .map(|(l, v)| (l.clone(), v.iter().map(|j| j.matrix.clone()).collect()))
        .collect()
}

/// Verifies the channel witness family at `s` against free channel samples.
pub fn verify_channel_witness(
    lambda: &ChoiOperator,
    union: &ChannelFreeSetUnion,
    s: f64,
    ms: &[usize],
    sample_budget: usize,
    seed: u64,
    sign_tol: f64,
) -> Result<WitnessReport> {
    check_dims(lambda, union)?;
    let family = channel_witness(lambda, s, ms)?;
    let samples = choi_samples(&union.samples(sample_budget, seed)?);
    verify_with_samples(&family, &lambda.matrix, &samples, sign_tol)
}

/// Witness-based estimate of the channel robustness.
pub fn estimate_channel_robustness_via_witness(
    lambda: &ChoiOperator,
    union: &ChannelFreeSetUnion,
    ms: &[usize],
    tol: f64,
    sample_budget: usize,
    seed: u64,
    sign_tol: f64,
) -> Result<SweepResult> {
    check_dims(lambda, union)?;
    let samples = choi_samples(&union.samples(sample_budget, seed)?);
    sweep(Mode::Robustness, tol, |s| {
        let family = channel_witness(lambda, s, ms)?;
        Ok(verify_with_samples(&family, &lambda.matrix, &samples, sign_tol)?.witness)
    })
}

/// `(I ⊗ Λ)(η)` for `η` on `H_in ⊗ H_in`.
pub fn apply_extended(lambda: &ChoiOperator, eta: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (d1, d2) = (lambda.d1, lambda.d2);
    if eta.nrows() != d1 * d1 || eta.ncols() != d1 * d1 {
        return validation(format!("bipartite input must be {0}x{0}", d1 * d1));
    }
    let j = lambda.matrix.matrix();
    Ok(ComplexMatrix::from_fn(d1 * d2, d1 * d2, |r, col| {
        let (a, x) = (r / d2, r % d2);
        let (a2, y) = (col / d2, col % d2);
        let mut acc = Complex64::new(0.0, 0.0);
        for b in 0..d1 {
            for b2 in 0..d1 {
                acc += eta[(a * d1 + b, a2 * d1 + b2)] * j[(b * d2 + x, b2 * d2 + y)];
            }
        }
        acc
    }))
}

/// `Σ_i p_i tr[M_i (I ⊗ Λ)(η_i)]`.
pub fn state_discrimination_game(
    lambda: &ChoiOperator,
    priors: &[f64],
    states: &[DensityOperator],
    povm: &Povm,
) -> Result<f64> {
    if priors.len() != states.len() || povm.effects().len() != states.len() {
        return validation("game needs one prior and one effect per state");
    }
    crate::tasks::check_priors(priors)?;
    if povm.dim() != lambda.d1 * lambda.d2 {
        return validation(format!(
            "measurement must act on dimension {}",
            lambda.d1 * lambda.d2
        ));
    }
    let mut total = 0.0;
    for ((p, eta), m) in priors.iter().zip(states).zip(povm.effects()) {
        total += p * m.expectation(&apply_extended(lambda, eta.matrix())?);
    }
    Ok(total.clamp(-1e-10, 1.0 + 1e-10))
}

#[derive(Debug, Clone, Serialize)]
pub struct GameBoundReport {
    pub trials: usize,
    pub robustness: MeasureValue,
    /// Largest observed `p(Λ) / max_σ p(σ)` over trials.
    pub max_ratio: f64,
    pub violations: usize,
}

/// Random games comparing `Λ` to free channel samples; every ratio must stay
/// below `1 + R` up to `10·tol`.
pub fn state_game_bound_check(
    lambda: &ChoiOperator,
    union: &ChannelFreeSetUnion,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<GameBoundReport> {
    let r = channel_robustness(lambda, union, tol)?;
    let mut free = Vec::new();
    for (_, set) in union.samples(20, seed)? {
        free.extend(set);
    }
    if let Some(sigma) = &r.sigma {
        free.push(sigma.clone());
    }
    let (d1, d2) = (lambda.d1, lambda.d2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    for t in 0..trials {
        let n = 2 + t % 3;
        let priors = crate::tasks::random_priors(&mut rng, n);
        let states: Vec<DensityOperator> = (0..n)
            .map(|_| random_density_with(&mut rng, d1 * d1))
            .collect();
        let povm = Povm::random_with(&mut rng, d1 * d2, n);
        let p = state_discrimination_game(lambda, &priors, &states, &povm)?;
        let mut best: f64 = 0.0;
        for sigma in &free {
            best = best.max(state_discrimination_game(sigma, &priors, &states, &povm)?);
        }
        let ratio = p / best.max(1e-300);
        max_ratio = max_ratio.max(ratio);
        if let MeasureValue::Finite(v) = r.value {
            if ratio > (1.0 + v) * (1.0 + 10.0 * tol) {
                violations += 1;
            }
        }
    }
    Ok(GameBoundReport {
        trials,
        robustness: r.value,
        max_ratio,
        violations,
    })
}

/// A quantum instrument: completely positive maps summing to a channel.
#[derive(Debug, Clone)]
pub struct Instrument {
    elements: Vec<ChoiOperator>,
}

impl Instrument {
    pub fn new(elements: Vec<ChoiOperator>) -> Result<Self> {
        let Some(first) = elements.first() else {
            return validation("instrument needs at least one element");
        };
        let (d1, d2) = (first.d1, first.d2);
        if elements.iter().any(|e| (e.d1, e.d2) != (d1, d2)) {
            return validation("instrument elements have different dimensions");
        }
        let mut total = ComplexMatrix::zeros(d1, d1);
        for e in &elements {
            total += e.input_marginal();
        }
        for i in 0..d1 {
            total[(i, i)] -= c(1.0);
        }
        let r = max_abs(&total);
        if r > CHOI_TOL {
            return validation(format!(
                "instrument elements do not sum to a channel (residual {r:e})"
            ));
        }
        let elements = elements
            .into_iter()
            .map(|e| ChoiOperator { tp: false, ..e })
            .collect();
        Ok(Self { elements })
    }

    /// `E_i(X) = tr[M_i X] σ_i`, with Choi operator `M_iᵀ ⊗ σ_i`.
    pub fn measure_and_prepare(
        effects: &[HermitianOperator],
        outputs: &[DensityOperator],
    ) -> Result<Self> {
        if effects.len() != outputs.len() {
            return validation("one output state per measurement outcome is required");
        }
        let mut elements = Vec::with_capacity(effects.len());
        for (e, out) in effects.iter().zip(outputs) {
            let m = crate::operator::kron(&e.matrix().transpose(), out.matrix());
            elements.push(ChoiOperator::new(
                HermitianOperator::from_hermitian_part(&m),
                e.dim(),
                out.dim(),
                false,
            )?);
        }
        Self::new(elements)
    }

    pub fn elements(&self) -> &[ChoiOperator] {
        &self.elements
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.elements[0].d1, self.elements[0].d2)
    }

    /// `tr[E_i(ρ)]` per outcome.
    pub fn outcome_probabilities(&self, rho: &DensityOperator) -> Result<Vec<f64>> {
        self.elements
            .iter()
            .map(|e| Ok(crate::operator::trace(&e.apply_matrix(rho.matrix())?).re))
            .collect()
    }

    /// `Σ_i p_i E_i`.
    pub fn mixture(weights: &[f64], instruments: &[Instrument]) -> Result<Self> {
        if weights.len() != instruments.len() || instruments.is_empty() {
            return validation("one weight per instrument is required");
        }
        let n = instruments[0].elements.len();
        if instruments
            .iter()
            .any(|i| i.elements.len() != n || i.dims() != instruments[0].dims())
        {
            return validation("instruments have different shapes");
        }
        let (d1, d2) = instruments[0].dims();
        let elements = (0..n)
            .map(|k| {
                let mut m = ComplexMatrix::zeros(d1 * d2, d1 * d2);
                for (w, inst) in weights.iter().zip(instruments) {
                    m += inst.elements[k].matrix.matrix() * c(*w);
                }
                ChoiOperator {
                    d1,
                    d2,
                    matrix: HermitianOperator::from_hermitian_part(&m),
                    tp: false,
                }
            })
            .collect();
        Self::new(elements)
    }
}

/// Choi operator of `ρ ↦ Σ_i |i⟩⟨i| ⊗ E_i(ρ)`, output ordered as flag ⊗ system.
pub fn instrument_to_channel(inst: &Instrument) -> ChoiOperator {
    let (d1, d2) = inst.dims();
    let n = inst.elements.len();
    let dout = n * d2;
    let mut m = ComplexMatrix::zeros(d1 * dout, d1 * dout);
    for (f, e) in inst.elements.iter().enumerate() {
        let j = e.matrix.matrix();
        for a in 0..d1 {
            for x in 0..d2 {
                for b in 0..d1 {
                    for y in 0..d2 {
                        m[(a * dout + f * d2 + x, b * dout + f * d2 + y)] =
                            j[(a * d2 + x, b * d2 + y)];
                    }
                }
            }
        }
    }
    ChoiOperator {
        d1,
        d2: dout,
        matrix: HermitianOperator::from_hermitian_part(&m),
        tp: true,
    }
}

/// Effects `(1−ε)|v_i⟩⟨v_i| + ε I/d` of a noisy measurement in the basis `v_i`.
pub fn basis_effects(basis: &[Vec<Complex64>], noise: f64) -> Result<Vec<HermitianOperator>> {
    if !(0.0..=1.0).contains(&noise) {
        return validation(format!("noise {noise} is outside [0, 1]"));
    }
    let d = basis.len();
    basis
        .iter()
        .map(|v| {
            if v.len() != d {
                return validation("basis must have as many vectors as entries");
            }
            let p = DensityOperator::pure(v)?;
            Ok(&p.as_hermitian().scale(1.0 - noise)
                + &HermitianOperator::identity(d).scale(noise / d as f64))
        })
        .collect()
}

/// A convex set of instruments given by generator instruments; mixtures act
/// jointly on all outcomes.
#[derive(Debug, Clone)]
pub enum InstrumentFreeSet {
    Singleton(Instrument),
    Hull(Vec<Instrument>),
}

impl InstrumentFreeSet {
    pub fn generators(&self) -> &[Instrument] {
        match self {
            Self::Singleton(i) => std::slice::from_ref(i),
            Self::Hull(g) => g,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsetComparison {
    pub label: String,
    pub direct: MeasureValue,
    pub embedded: MeasureValue,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstrumentRobustness {
    /// From the per-outcome positivity constraints.
    pub direct: MeasureValue,
    /// Channel robustness of the flag embedding.
    pub embedded: MeasureValue,
    pub achieving_subset: Option<String>,
    pub subsets: Vec<SubsetComparison>,
    pub tolerance: f64,
}

fn values_agree(a: MeasureValue, b: MeasureValue, slack: f64) -> bool {
    match (a, b) {
        (MeasureValue::Infinite, MeasureValue::Infinite) => true,
        (MeasureValue::Finite(x), MeasureValue::Finite(y)) => (x - y).abs() <= slack,
        _ => false,
    }
}

/// Instrument robustness computed directly and through the flag embedding;
/// fails with a numerical error if the two disagree by more than `5·tol`.
pub fn instrument_robustness(
    inst: &Instrument,
    free: &[(String, InstrumentFreeSet)],
    tol: f64,
) -> Result<InstrumentRobustness> {
    if free.is_empty() {
        return validation("free instrument union is empty");
    }
    let outcomes = inst.elements.len();
    for (label, set) in free {
        if set.generators().is_empty() {
            return validation(format!("free instrument set {label} is empty"));
        }
        for g in set.generators() {
            if g.elements.len() != outcomes {
                return validation(format!(
                    "free instrument in {label} has {} outcomes, expected {outcomes}",
                    g.elements.len()
                ));
            }
            if g.dims() != inst.dims() {
                return validation(format!(
                    "free instrument in {label} has different dimensions"
                ));
            }
        }
    }
    let blocks = |i: &Instrument| -> Blocks {
        i.elements
            .iter()
            .map(|e| e.matrix.matrix().clone())
            .collect()
    };
    let mut direct = Vec::with_capacity(free.len());
    for (label, set) in free {
        let prob = Problem::new(blocks(inst), set.generators().iter().map(blocks).collect());
        direct.push((
            label.clone(),
            prob.measure(Mode::Robustness, Strategy::Auto, tol)?,
        ));
    }
    let channel_sets = free
        .iter()
        .map(|(_, set)| match set {
            InstrumentFreeSet::Singleton(i) => ChannelFreeSet::Singleton(instrument_to_channel(i)),
            InstrumentFreeSet::Hull(g) => {
                ChannelFreeSet::Hull(g.iter().map(instrument_to_channel).collect())
            }
        })
        .collect();
    let labels = free.iter().map(|(l, _)| l.clone()).collect();
    let channel_union = ChannelFreeSetUnion::new(channel_sets, labels)?;
    let embedded =
        channel_robustness_per_subset(&instrument_to_channel(inst), &channel_union, tol)?;

    let subsets: Vec<SubsetComparison> = direct
        .iter()
        .zip(&embedded)
        .map(|((label, a), (_, b))| SubsetComparison {
            label: label.clone(),
            direct: a.value,
            embedded: b.value,
        })
        .collect();
    for s in &subsets {
        if !values_agree(s.direct, s.embedded, 5.0 * tol) {
            return Err(Error::Numerical(format!(
                "instrument robustness paths disagree on {}: {:?} vs {:?}",
                s.label, s.direct, s.embedded
            )));
        }
    }
    let best_direct = min_over(direct);
    let best_embedded = min_over(embedded);
    Ok(InstrumentRobustness {
        direct: best_direct.value,
        embedded: best_embedded.value,
        achieving_subset: best_direct.achieving_subset,
        subsets,
        tolerance: tol,
    })
}
