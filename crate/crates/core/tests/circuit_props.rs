use proptest::prelude::*;
use unet::circuit::{circuit_to_un, random_sqc, un_to_circuit};
use unet::flow::net_flow;
use unet::graph::validate;
use unet::linalg::phase_distance;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_preserves_the_unitary(n in 1usize..=8, gates in 0usize..=6, width in 1usize..=3, seed in any::<u64>()) {
        let c = random_sqc(n, gates, width, 2, seed).unwrap();
        let u = c.matrix().unwrap();
        let (net, rep) = circuit_to_un(&c).unwrap();
        prop_assert!(validate(&net).is_valid_unitary_network());
        prop_assert!(rep.equivalence_residual < 1e-8);
        if n > 1 {
            prop_assert_eq!(net_flow(&net).value().map(|v| v.to_f64()), Some(0.0));
        }
        let (back, rep2) = un_to_circuit(&net).unwrap();
        prop_assert!(rep2.equivalence_residual < 1e-8);
        prop_assert!(phase_distance(&back.matrix().unwrap(), &u) < 1e-8);
    }

    #[test]
    fn qutrit_round_trip(n in 1usize..=4, gates in 0usize..=4, seed in any::<u64>()) {
        let c = random_sqc(n, gates, 2, 3, seed).unwrap();
        let (net, _) = circuit_to_un(&c).unwrap();
        let (back, _) = un_to_circuit(&net).unwrap();
        prop_assert!(phase_distance(&back.matrix().unwrap(), &c.matrix().unwrap()) < 1e-8);
    }
}
