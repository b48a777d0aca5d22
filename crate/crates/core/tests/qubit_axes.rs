use robustness_core::bloch::{qubit_state, Mode};
use robustness_core::free_sets::{Axis, FreeSetUnion};
use robustness_core::measures::{
    per_subset, qubit_axis_robustness, robustness_convex_with, robustness_union, Strategy,
};
use robustness_core::tasks::{
    discrimination_advantage, worst_case_discrimination, AdvantageOptions,
};
use robustness_core::witness::{
    estimate_robustness_via_witness, verify_family, SweepOptions, WitnessBuilder, WitnessFamily,
};

const R: [f64; 3] = [0.3, 0.4, 0.5];

#[test]
fn per_axis_values_by_closed_form_and_bisection() {
    let rho = qubit_state(R).unwrap();
    let union = FreeSetUnion::qubit_axes();
    let expected = [0.41f64.sqrt(), 0.34f64.sqrt(), 0.5];
    for (((_, set), axis), want) in union.iter().zip([Axis::X, Axis::Y, Axis::Z]).zip(expected) {
        assert!((qubit_axis_robustness(R, axis) - want).abs() < 1e-12);
        let b = robustness_convex_with(&rho, set, 1e-8, Strategy::Bisection).unwrap();
        assert!((b.value.as_f64() - want).abs() < 1e-6);
    }
    let subsets = per_subset(&rho, &union, Mode::Robustness, 1e-8).unwrap();
    assert_eq!(subsets.len(), 3);
    let u = robustness_union(&rho, &union, 1e-8).unwrap();
    assert!((u.value.as_f64() - 0.5).abs() < 1e-6);
    assert_eq!(u.achieving_subset.as_deref(), Some("z"));
}

#[test]
fn witness_decides_below_and_above() {
    let rho = qubit_state(R).unwrap();
    let union = FreeSetUnion::qubit_axes();
    for (s, want) in [(0.30, true), (0.49, true), (0.51, false), (0.9, false)] {
        let fam = WitnessFamily::build(
            &rho,
            s,
            Mode::Robustness,
            &[2],
            WitnessBuilder::QubitClosedForm,
            0,
        )
        .unwrap();
        assert_eq!(
            verify_family(&fam, &rho, &union, 200, 0, 1e-9)
                .unwrap()
                .witness,
            want,
            "s = {s}"
        );
    }
    let sweep =
        estimate_robustness_via_witness(&rho, &union, 1e-4, SweepOptions::default()).unwrap();
    assert!((sweep.estimate - 0.5).abs() < 1e-3);
}

#[test]
fn tasks_show_the_advantage() {
    let rho = qubit_state(R).unwrap();
    let union = FreeSetUnion::qubit_axes();
    let adv = discrimination_advantage(&rho, &union, &AdvantageOptions::default()).unwrap();
    assert!(adv.ratio > 1.0 + 1e-4, "{}", adv.ratio);
    let worst = worst_case_discrimination(&rho, &union, 300, 1, 1e-8).unwrap();
    assert_eq!(worst.violations, 0);
    assert!((worst.achieved.as_f64() - 1.5).abs() < 1e-5);
}
