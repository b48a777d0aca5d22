//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robustness_core::bloch::{psd_via_s, qubit_state, s_poly, shifted_hermitian, Mode};
use robustness_core::channels::{
    apply_channel, basis_effects, channel_default_range, channel_robustness, choi_from_kraus,
    estimate_channel_robustness_via_witness, instrument_robustness, ChannelFreeSet,
    ChannelFreeSetUnion, ChoiOperator, Instrument, InstrumentFreeSet,
};
use robustness_core::free_sets::{Axis, ConvexFreeSet, FreeSetUnion};
use robustness_core::io::{operator_to_json, parse_operator, Operator};
use robustness_core::measures::{
    qubit_axis_robustness, robustness_convex_with, robustness_union, weight_convex_with, Strategy,
};
use robustness_core::operator::{
    is_psd, max_abs, random_density_with, random_hermitian_with, random_unitary_with,
    ComplexMatrix, DEFAULT_TENSOR_CAP,
};
use robustness_core::tasks::{
    discrimination_advantage, worst_case_discrimination, worst_case_exclusion, AdvantageOptions,
};
use robustness_core::witness::{
    estimate_robustness_via_witness, estimate_weight_via_witness, verify_family, SweepOptions,
    WitnessBuilder, WitnessFamily,
};
use robustness_core::{DensityOperator, HermitianOperator};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Option<Duration>);

const BLOCH: [f64; 3] = [0.3, 0.4, 0.5];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn axes() -> FreeSetUnion {
    FreeSetUnion::qubit_axes()
}

fn mixed_singleton() -> FreeSetUnion {
    FreeSetUnion::single(
        ConvexFreeSet::Singleton(DensityOperator::maximally_mixed(2)),
        "mixed",
    )
}

/// Unit-trace Hermitian operators: random states, random Hermitian matrices
/// moved to unit trace, and states pushed slightly past the boundary.
fn unit_trace_operator(rng: &mut ChaCha8Rng, d: usize, k: usize) -> HermitianOperator {
    match k % 3 {
        0 => random_density_with(rng, d).as_hermitian().clone(),
        1 => {
            let h = random_hermitian_with(rng, d);
            let shift = (1.0 - h.trace()) / d as f64;
            let m = h.matrix() + ComplexMatrix::identity(d, d) * Complex64::new(shift, 0.0);
            HermitianOperator::from_hermitian_part(&m)
        }
        _ => {
            let rho = random_density_with(rng, d);
            let h = random_hermitian_with(rng, d);
            let t = h.trace() / d as f64;
            let traceless = h.matrix() - ComplexMatrix::identity(d, d) * Complex64::new(t, 0.0);
            let m = rho.matrix() + traceless * Complex64::new(0.05, 0.0);
            HermitianOperator::from_hermitian_part(&m)
        }
    }
}

fn psd_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut psd = 0;
    let n = 1000;
    for d in [2, 3, 4] {
        for k in 0..n {
            let h = unit_trace_operator(&mut rng, d, k);
            let a = psd_via_s(&h, 1e-9);
            ensure(a == is_psd(&h, 1e-9), || {
                format!("d = {d}, sample {k}: S-values say {a}, eigenvalues disagree")
            })?;
            psd += a as usize;
        }
    }
    Ok(format!("3 x {n} operators, {psd} PSD, 0 disagreements"))
}

fn qubit_axis_values() -> Check {
    let rho = ok(qubit_state(BLOCH))?;
    let want = [0.41f64.sqrt(), 0.34f64.sqrt(), 0.5];
    let mut worst: f64 = 0.0;
    for (((_, set), axis), w) in axes().iter().zip([Axis::X, Axis::Y, Axis::Z]).zip(want) {
        let closed = qubit_axis_robustness(BLOCH, axis);
        let bisect = ok(robustness_convex_with(&rho, set, 1e-8, Strategy::Bisection))?;
        ensure((closed - w).abs() < 1e-6, || {
            format!("{axis:?}: closed form {closed}")
        })?;
        ensure((bisect.value.as_f64() - w).abs() < 1e-5, || {
            format!("{axis:?}: bisection {:?}", bisect.value)
        })?;
        worst = worst.max((bisect.value.as_f64() - w).abs());
    }
    let u = ok(robustness_union(&rho, &axes(), 1e-8))?;
    ensure((u.value.as_f64() - 0.5).abs() < 1e-6, || {
        format!("union value {:?}", u.value)
    })?;
    Ok(format!(
        "axes match, max bisection error {worst:.1e}, union {:.9} on {}",
        u.value.as_f64(),
        u.achieving_subset.unwrap_or_default()
    ))
}

fn witness_iff() -> Check {
    let rho = ok(qubit_state(BLOCH))?;
    let union = axes();
    for (s, want) in [
        (0.30, true),
        (0.45, true),
        (0.49, true),
        (0.51, false),
        (0.60, false),
        (0.90, false),
    ] {
        let fam = ok(WitnessFamily::build(
            &rho,
            s,
            Mode::Robustness,
            &[2],
            WitnessBuilder::Exact,
            0,
        ))?;
        let got = ok(verify_family(&fam, &rho, &union, 500, 0, 1e-9))?.witness;
        ensure(got == want, || format!("s = {s}: witness = {got}"))?;
    }
    let sweep = ok(estimate_robustness_via_witness(
        &rho,
        &union,
        1e-4,
        SweepOptions::default(),
    ))?;
    ensure((sweep.estimate - 0.5).abs() <= 1e-3, || {
        format!("sweep estimate {}", sweep.estimate)
    })?;
    Ok(format!(
        "six decisions correct, sweep {:.6}",
        sweep.estimate
    ))
}

fn two_path() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut evaluations = 0;
    for (d, m) in [(2, 2), (3, 2), (3, 3)] {
        for k in 0..100u64 {
            let rho = random_density_with(&mut rng, d);
            let eta = random_density_with(&mut rng, d);
            let s = 0.2 + 0.6 * (k as f64 / 100.0);
            for mode in [Mode::Robustness, Mode::Weight] {
                let want = ok(s_poly(
                    &ok(shifted_hermitian(
                        rho.as_hermitian(),
                        eta.as_hermitian(),
                        s,
                        mode,
                    ))?,
                    m,
                ))?;
                let mut builders = vec![
                    WitnessBuilder::Monomial,
                    WitnessBuilder::Symmetric,
                    WitnessBuilder::Exact,
                ];
                if (d, m) == (2, 2) && mode == Mode::Robustness {
                    builders.push(WitnessBuilder::QubitClosedForm);
                }
                for b in builders {
                    let fam = ok(WitnessFamily::build(&rho, s, mode, &[m], b, k))?;
                    let got = ok(fam.evaluate(eta.as_hermitian()))?[0];
                    let err = (got - want).abs();
                    ensure(err <= 1e-7, || {
                        format!("(d, m) = ({d}, {m}), {b:?}, {mode:?}: {got} vs {want}")
                    })?;
                    worst = worst.max(err);
                    evaluations += 1;
                }
            }
        }
    }
    Ok(format!(
        "{evaluations} evaluations, max deviation {worst:.1e}"
    ))
}

fn monotone_acceptance() -> Check {
    let rho = ok(qubit_state(BLOCH))?;
    let build = |s| WitnessFamily::build(&rho, s, Mode::Robustness, &[2], WitnessBuilder::Exact, 0);
    let low = ok(build(0.3))?;
    let high = ok(build(0.45))?;
    // Probes spread around the smaller acceptance ball, centred at r/(1+s').
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut accepted, mut violations) = (0, 0);
    for _ in 0..200 {
        let x = loop {
            let u: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            if u.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                break u;
            }
        };
        let mut b: [f64; 3] = std::array::from_fn(|i| BLOCH[i] / 1.3 + 0.4 * x[i]);
        let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            b.iter_mut().for_each(|v| *v /= norm);
        }
        let eta = ok(qubit_state(b))?;
        let a = ok(low.accepts(eta.as_hermitian(), 1e-9))?;
        let b = ok(high.accepts(eta.as_hermitian(), 1e-9))?;
        accepted += a as usize;
        violations += (a && !b) as usize;
    }
    ensure(violations == 0, || {
        format!("{violations} inclusion violations")
    })?;
    ensure(accepted > 0, || "no sample accepted at s' = 0.3".into())?;
    Ok(format!(
        "200 samples, {accepted} accepted at s' = 0.3, 0 violations"
    ))
}

fn advantage() -> Check {
    let opts = AdvantageOptions::default();
    let pure = DensityOperator::basis(2, 0);
    let a = ok(discrimination_advantage(&pure, &mixed_singleton(), &opts))?;
    let b = ok(discrimination_advantage(
        &ok(qubit_state(BLOCH))?,
        &axes(),
        &opts,
    ))?;
    for (name, r) in [("|0><0| vs I/2", &a), ("qubit axes", &b)] {
        ensure(r.ratio >= 1.0 + 1e-4, || {
            format!("{name}: ratio {}", r.ratio)
        })?;
    }
    Ok(format!(
        "ratios {:.6} (|0><0| vs I/2, {} samples), {:.6} (axes, {} samples)",
        a.ratio, a.samples, b.ratio, b.samples
    ))
}

fn singleton_achievability() -> Check {
    let rho = DensityOperator::basis(2, 0);
    let r = ok(worst_case_discrimination(
        &rho,
        &mixed_singleton(),
        1000,
        7,
        1e-9,
    ))?;
    let achieved = r.achieved.as_f64();
    ensure((achieved - 2.0).abs() <= 1e-6, || {
        format!("achieved ratio {achieved}")
    })?;
    ensure(r.violations == 0, || {
        format!("{} bound violations", r.violations)
    })?;
    Ok(format!("achieved {achieved:.9}, 1000 tasks, 0 violations"))
}

fn weight_suite() -> Check {
    let rho = ok(DensityOperator::diagonal(&[0.75, 0.25]))?;
    let union = mixed_singleton();
    let set = &union.subsets()[0];
    let closed = ok(weight_convex_with(&rho, set, 1e-9, Strategy::ClosedForm))?;
    let bisect = ok(weight_convex_with(&rho, set, 1e-8, Strategy::Bisection))?;
    for (name, v) in [("closed form", closed.value), ("bisection", bisect.value)] {
        ensure((v.as_f64() - 0.5).abs() <= 1e-6, || {
            format!("{name}: {v:?}")
        })?;
    }
    let excl = ok(worst_case_exclusion(&rho, &union, 1000, 8, 1e-9))?;
    // `achieved` is 1 minus the achieved error ratio.
    let ratio = 1.0 - excl.achieved.as_f64();
    ensure((ratio - 0.5).abs() <= 1e-5, || {
        format!("exclusion ratio {ratio}")
    })?;
    ensure(excl.violations == 0, || {
        format!("{} bound violations", excl.violations)
    })?;
    let sweep = ok(estimate_weight_via_witness(
        &rho,
        &union,
        1e-4,
        SweepOptions::default(),
    ))?;
    ensure((sweep.estimate - 0.5).abs() <= 1e-3, || {
        format!("weight sweep {}", sweep.estimate)
    })?;
    Ok(format!(
        "WoR {:.9} / {:.9}, exclusion ratio {ratio:.9}, 1000 tasks, sweep {:.6}",
        closed.value.as_f64(),
        bisect.value.as_f64(),
        sweep.estimate
    ))
}

fn axis_basis(axis: Axis) -> Vec<Vec<Complex64>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let r = |x: f64| Complex64::new(x, 0.0);
    match axis {
        Axis::X => vec![vec![r(h), r(h)], vec![r(h), r(-h)]],
        Axis::Y => vec![
            vec![r(h), Complex64::new(0.0, h)],
            vec![r(h), Complex64::new(0.0, -h)],
        ],
        Axis::Z => vec![vec![r(1.0), r(0.0)], vec![r(0.0), r(1.0)]],
    }
}

fn measurement(axis: Axis, noise: f64) -> Result<Instrument, String> {
    let outputs = [DensityOperator::basis(2, 0), DensityOperator::basis(2, 1)];
    ok(Instrument::measure_and_prepare(
        &ok(basis_effects(&axis_basis(axis), noise))?,
        &outputs,
    ))
}

fn channel_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for &(d1, d2) in &[(2, 2), (2, 3), (3, 2)] {
        for _ in 0..50 {
            let u = random_unitary_with(&mut rng, 2 * d2.max(d1));
            let kraus: Vec<ComplexMatrix> = (0..2)
                .map(|r| ComplexMatrix::from_fn(d2, d1, |a, i| u[(r * d2 + a, i)]))
                .collect();
            let total: ComplexMatrix = kraus.iter().map(|k| k.adjoint() * k).sum();
            // Rescale so the Kraus set is trace preserving.
            let norm = total[(0, 0)].re;
            let kraus: Vec<ComplexMatrix> =
                if max_abs(&(&total - ComplexMatrix::identity(d1, d1) * Complex64::new(norm, 0.0)))
                    < 1e-12
                {
                    kraus
                        .iter()
                        .map(|k| k * Complex64::new(norm.sqrt().recip(), 0.0))
                        .collect()
                } else {
                    continue;
                };
            let j = ok(choi_from_kraus(&kraus, d1, d2))?;
            let rho = random_density_with(&mut rng, d1);
            let mut direct = ComplexMatrix::zeros(d2, d2);
            for k in &kraus {
                direct += k * rho.matrix() * k.adjoint();
            }
            worst = worst.max(max_abs(&(ok(apply_channel(&j, &rho))?.matrix() - direct)));
            let back = ok(ok(parse_operator(&operator_to_json(&Operator::Choi(
                j.clone(),
            ))))?
            .into_choi())?;
            worst = worst.max(max_abs(&(back.matrix().matrix() - j.matrix().matrix())));
        }
    }
    ensure(worst <= 1e-10, || {
        format!("Choi round-trip error {worst:.1e}")
    })?;

    let lambda = ChoiOperator::identity(2);
    let union = ok(ChannelFreeSetUnion::new(
        vec![ChannelFreeSet::Singleton(
            ChoiOperator::completely_depolarizing(2, 2),
        )],
        vec!["depolarizing".into()],
    ))?;
    let r = ok(channel_robustness(&lambda, &union, 1e-9))?
        .value
        .as_f64();
    let ms = channel_default_range(2, 2, DEFAULT_TENSOR_CAP);
    let sweep = ok(estimate_channel_robustness_via_witness(
        &lambda, &union, &ms, 1e-4, 200, 0, 1e-9,
    ))?;
    ensure((sweep.estimate - r).abs() <= 1e-3, || {
        format!("channel sweep {} vs robustness {r}", sweep.estimate)
    })?;

    let tol = 1e-7;
    let z = measurement(Axis::Z, 0.2)?;
    let free = vec![(
        "x".to_string(),
        InstrumentFreeSet::Singleton(measurement(Axis::X, 0.2)?),
    )];
    let inst = ok(instrument_robustness(&z, &free, tol))?;
    let (a, b) = (inst.direct.as_f64(), inst.embedded.as_f64());
    ensure(a.is_finite() && (a - b).abs() <= 5.0 * tol, || {
        format!("instrument paths {a} vs {b}")
    })?;
    let sharp = vec![(
        "x".to_string(),
        InstrumentFreeSet::Singleton(measurement(Axis::X, 0.0)?),
    )];
    let inf = ok(instrument_robustness(
        &measurement(Axis::Z, 0.0)?,
        &sharp,
        tol,
    ))?;
    ensure(
        inf.direct.is_infinite() && inf.embedded.is_infinite(),
        || "projective instruments should be infinitely robust on both paths".into(),
    )?;
    Ok(format!(
        "Choi error {worst:.1e}, channel R {r:.9} vs sweep {:.6}, instrument {a:.9} / {b:.9}",
        sweep.estimate
    ))
}

fn scenario(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn determinism() -> Check {
    let axes = scenario("qubit_axes.json");
    let weight = scenario("qubit_axes_weight.json");
    let channel = scenario("identity_channel.json");
    let instrument = scenario("noisy_instrument.json");
    let state = scenario("plus_state.json");
    let runs: Vec<Vec<&str>> = vec![
        vec!["psd-check", "--operator", &state],
        vec!["robustness", "--config", &axes],
        vec!["weight", "--config", &weight],
        vec!["witness-build", "--config", &axes, "--shift"],
        vec!["witness-verify", "--config", &axes],
        vec!["witness-sweep", "--config", &axes],
        vec!["discriminate", "--config", &axes],
        vec!["exclude", "--config", &weight],
        vec!["worst-case", "--config", &axes, "--trials", "200"],
        vec![
            "channel-robustness",
            "--config",
            &channel,
            "--game-trials",
            "50",
        ],
        vec!["instrument-robustness", "--config", &instrument],
        vec!["demo-appendix-d", "--grid", "11"],
    ];
    for args in &runs {
        let run = || {
            let out = Command::new(env!("CARGO_BIN_EXE_qrobust"))
                .arg("--seed")
                .arg("42")
                .args(args)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(out.status.success(), || {
                format!("{}: {}", args[0], String::from_utf8_lossy(&out.stderr))
            })?;
            Ok::<_, String>(out.stdout)
        };
        ensure(run()? == run()?, || format!("{} output differs", args[0]))?;
    }
    Ok(format!(
        "{} subcommands byte-identical across runs",
        runs.len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (
            "1 psd via S-values matches eigenvalues",
            psd_oracle,
            Some(Duration::from_secs(30)),
        ),
        (
            "2 qubit axes robustness",
            qubit_axis_values,
            Some(Duration::from_secs(5)),
        ),
        (
            "3 witness decisions and sweep",
            witness_iff,
            Some(Duration::from_secs(60)),
        ),
        ("4 witness builders vs S_m", two_path, None),
        ("5 monotone acceptance regions", monotone_acceptance, None),
        ("6 multicopy discrimination advantage", advantage, None),
        (
            "7 singleton achievability and bound",
            singleton_achievability,
            None,
        ),
        ("8 weight of resource and exclusion", weight_suite, None),
        ("9 channels and instruments", channel_suite, None),
        ("10 deterministic CLI output", determinism, None),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let result =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(limit)) if elapsed > limit => {
                Err(format!("took {elapsed:.2?}, limit {limit:?}"))
            }
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS  {name} [{elapsed:.2?}]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} [{elapsed:.2?}]: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", 10 - failed, 10);
    if failed > 0 {
        std::process::exit(1);
    }
}
