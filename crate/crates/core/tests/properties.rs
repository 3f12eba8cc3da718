use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use netcert_core::adversary::{behavior_equivalence, make_model, AdversaryKind};
use netcert_core::experiment::{build_reference_model, reference_behavior, Scenario};
use netcert_core::io::{parse_behavior, write_behavior};
use netcert_core::states::random_state;
use netcert_core::tensor::{PureState, SiteLayout};
use netcert_core::tomography::{pt_spectrum_of, pt_spectrum_pure};

fn target(n: usize, seed: u64) -> PureState {
    random_state(SiteLayout::qubits(n), &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conjugated_experiment_is_indistinguishable(seed in any::<u64>(), n in 1usize..=2, fully in any::<bool>()) {
        let psi = target(n, seed);
        let scenario = if fully { Scenario::fully(n) } else { Scenario::network(n) };
        let reference = build_reference_model(&psi, scenario).unwrap();
        let conj = make_model(AdversaryKind::GlobalConjugate, &psi, scenario).unwrap();
        prop_assert!(behavior_equivalence(&reference, &conj).unwrap() < 1e-12);
    }

    #[test]
    fn behavior_files_roundtrip_bit_exactly(seed in any::<u64>(), fully in any::<bool>()) {
        let scenario = if fully { Scenario::fully(2) } else { Scenario::network(2) };
        let b = reference_behavior(&target(2, seed), scenario).unwrap();
        let mut buf = Vec::new();
        write_behavior(&mut buf, &b).unwrap();
        let back = parse_behavior(std::str::from_utf8(&buf).unwrap()).unwrap();
        for (r, s) in b.rows().iter().zip(back.rows()) {
            prop_assert_eq!(&r.inputs, &s.inputs);
            for (x, y) in r.probs.iter().zip(&s.probs) {
                prop_assert_eq!(x.to_bits(), y.to_bits(), "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn pure_pt_spectrum_sums_to_one(raw in prop::collection::vec(0.0f64..1.0, 1..6)) {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let coeffs: Vec<f64> = raw.iter().map(|x| x / norm).collect();
        let v = pt_spectrum_pure(&coeffs).unwrap().values();
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(v.iter().all(|&x| (-0.5 - 1e-12..=1.0 + 1e-12).contains(&x)));
    }

    #[test]
    fn entangled_targets_have_negative_pt(seed in any::<u64>()) {
        let psi = target(3, seed);
        let v = pt_spectrum_of(&psi, &[0]).unwrap().values();
        prop_assert!(*v.last().unwrap() < 0.0);
    }
}
