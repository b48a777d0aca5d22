use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustness_core::bloch::qubit_state;
use robustness_core::free_sets::{ConvexFreeSet, FreeSetUnion};
use robustness_core::measures::{robustness_convex, robustness_union, weight_convex, weight_union};
use robustness_core::operator::{random_density_with, random_unitary_with, DensityOperator};
use robustness_core::tasks::{p_err, p_succ, ChannelEnsemble, Povm};

fn rotate(u: &robustness_core::ComplexMatrix, rho: &DensityOperator) -> DensityOperator {
    DensityOperator::new(u * rho.matrix() * u.adjoint()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn robustness_is_unitarily_invariant(seed in any::<u64>(), d in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density_with(&mut rng, d);
        let gens: Vec<DensityOperator> = (0..2).map(|_| random_density_with(&mut rng, d)).collect();
        let u = random_unitary_with(&mut rng, d);
        let a = robustness_convex(&rho, &ConvexFreeSet::hull(gens.clone()).unwrap(), 1e-8).unwrap();
        let rotated: Vec<DensityOperator> = gens.iter().map(|g| rotate(&u, g)).collect();
        let b = robustness_convex(&rotate(&u, &rho), &ConvexFreeSet::hull(rotated).unwrap(), 1e-8).unwrap();
        prop_assert!((a.value.as_f64() - b.value.as_f64()).abs() < 1e-6);
    }

    #[test]
    fn measures_vanish_together(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gens: Vec<DensityOperator> = (0..3).map(|_| random_density_with(&mut rng, 2)).collect();
        let set = ConvexFreeSet::hull(gens.clone()).unwrap();
        let inside = DensityOperator::mixture(&[0.2, 0.3, 0.5], &gens).unwrap();
        prop_assert!(robustness_convex(&inside, &set, 1e-8).unwrap().value.as_f64() < 1e-7);
        prop_assert!(weight_convex(&inside, &set, 1e-8).unwrap().value.as_f64() < 1e-7);
        let outside = random_density_with(&mut rng, 2);
        let w = weight_convex(&outside, &set, 1e-8).unwrap().value.as_f64();
        prop_assert!((0.0..=1.0).contains(&w));
    }

    #[test]
    fn union_value_is_the_subset_minimum(x in -0.55f64..0.55, y in -0.55f64..0.55, z in -0.55f64..0.55) {
        let rho = qubit_state([x, y, z]).unwrap();
        let union = FreeSetUnion::qubit_axes();
        let all = robustness_union(&rho, &union, 1e-9).unwrap().value.as_f64();
        let expected = [(y * y + z * z).sqrt(), (x * x + z * z).sqrt(), (x * x + y * y).sqrt()]
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        prop_assert!((all - expected).abs() < 1e-7);
        let wor = weight_union(&rho, &union, 1e-9).unwrap().value.as_f64();
        prop_assert!((0.0..=1.0).contains(&wor));
    }

    #[test]
    fn dominance_bounds_every_task(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density_with(&mut rng, 3);
        let sigma = random_density_with(&mut rng, 3);
        let set = ConvexFreeSet::Singleton(sigma.clone());
        let r = robustness_convex(&rho, &set, 1e-9).unwrap().value.as_f64();
        let w = weight_convex(&rho, &set, 1e-9).unwrap().value.as_f64();
        for n in 2..4 {
            let ens = ChannelEnsemble::random_with(&mut rng, 3, n);
            let povm = Povm::random_with(&mut rng, 3, n);
            let (pr, ps) = (p_succ(&ens, &povm, &rho).unwrap(), p_succ(&ens, &povm, &sigma).unwrap());
            prop_assert!(pr <= (1.0 + r) * ps + 1e-9);
            let (er, es) = (p_err(&ens, &povm, &rho).unwrap(), p_err(&ens, &povm, &sigma).unwrap());
            prop_assert!(er >= (1.0 - w) * es - 1e-9);
        }
    }
}
