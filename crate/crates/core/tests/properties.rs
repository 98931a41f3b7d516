//! Property-based checks of the model, parser and kernel invariants.

use parrep::model::MAX_EXPLICIT_STATES;
use parrep::parse::{experiment_to_text, network_to_text, parse_experiment, parse_network};
use parrep::ssa::{run_serial, Stepper};
use parrep::{embedded_matrix, fixtures, ConstantObservable, ExplicitChain, PopulationState, RngStream};
use proptest::prelude::*;

const NAMES: [&str; 4] = ["A", "B", "C", "D"];

fn complex(coeffs: &[u32]) -> String {
    let terms: Vec<String> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| if c == 1 { NAMES[i].to_string() } else { format!("{c} {}", NAMES[i]) })
        .collect();
    if terms.is_empty() {
        "0".into()
    } else {
        terms.join(" + ")
    }
}

prop_compose! {
    fn network_text()(species in 1usize..=4)
        (species in Just(species),
         reactions in prop::collection::vec(
             (prop::collection::vec(0u32..=3, species),
              prop::collection::vec(0u32..=3, species),
              1e-3f64..1e3,
              any::<bool>()),
             1..6))
        -> String
    {
        let mut text = format!("species {}\n", NAMES[..species].join(" "));
        for (lhs, rhs, c, fast) in reactions {
            text.push_str(&format!(
                "{} -> {} @ {c}{}\n",
                complex(&lhs),
                complex(&rhs),
                if fast { " fast" } else { "" }
            ));
        }
        text
    }
}

fn random_chain(n: usize) -> impl Strategy<Value = ExplicitChain> {
    prop::collection::vec(prop::collection::vec(0.01f64..10.0, n), n)
        .prop_map(|rows| ExplicitChain::from_rates(&rows).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn network_parse_round_trip(text in network_text()) {
        let net = parse_network(&text).unwrap();
        let again = parse_network(&network_to_text(&net).unwrap()).unwrap();
        prop_assert_eq!(net, again);
    }

    #[test]
    fn experiment_parse_round_trip(
        replicas in 1usize..200,
        n in 1u64..100,
        t in 1e-3f64..1e2,
        seed in any::<u64>(),
        embedded in any::<bool>(),
        fv in any::<bool>(),
    ) {
        let text = if embedded {
            format!(
                "algorithm = embedded-parrep\nreplicas = {replicas}\nn_c = {n}\nn_p = {n}\n\
                 dephasing = {}\ninitial_state = 5 10 10\nobservable f1 = A + 2 B - 1\n\
                 slow_observables = f1\nn_end = {}\nmaster_seed = {seed}\n",
                if fv { "fleming-viot" } else { "rejection" },
                n * 1000
            )
        } else {
            format!(
                "algorithm = ctmc-parrep\nreplicas = {replicas}\nt_c = {t}\nt_p = {t}\n\
                 initial_state = 1 2\nt_end = {}\nmaster_seed = {seed}\n",
                t * 10.0
            )
        };
        let cfg = parse_experiment(&text).unwrap();
        let again = parse_experiment(&experiment_to_text(&cfg)).unwrap();
        prop_assert_eq!(cfg, again);
    }

    #[test]
    fn embedded_rows_are_stochastic(chain in random_chain(5)) {
        let p = embedded_matrix(&chain).unwrap();
        for i in 0..5 {
            prop_assert_eq!(p[(i, i)], 0.0);
            let s: f64 = p.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn propensities_are_pure(x in prop::collection::vec(0i64..50, 4)) {
        let net = fixtures::trimerization();
        let x = PopulationState::new(x).unwrap();
        let a = net.propensities(&x).unwrap();
        let b = net.propensities(&x).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
        prop_assert!(a.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn constant_observable_integrates_to_elapsed_time(seed in any::<u64>(), horizon in 0.1f64..50.0) {
        let net = fixtures::birth_conversion_death();
        let x0 = PopulationState::new(fixtures::CASCADE_INITIAL.to_vec()).unwrap();
        let mut rng = RngStream::new(seed, 0);
        let run = run_serial(&net, &x0, &[ConstantObservable(1.0)], horizon, &mut rng).unwrap();
        prop_assert_eq!(run.accumulator.time_integral[0].to_bits(), run.accumulator.elapsed_time.to_bits());
        prop_assert_eq!(run.accumulator.elapsed_time, horizon);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Every state reached within 10^4 jumps has non-negative propensities
    /// and every jump keeps the counts non-negative.
    #[test]
    fn reachable_states_stay_valid(seed in any::<u64>(), trimer in any::<bool>()) {
        let (net, x0) = if trimer {
            (fixtures::trimerization(), fixtures::TRIMER_INITIAL.to_vec())
        } else {
            (fixtures::birth_conversion_death(), fixtures::CASCADE_INITIAL.to_vec())
        };
        let mut x = PopulationState::new(x0).unwrap();
        let mut rng = RngStream::new(seed, 1);
        let mut stepper = Stepper::new(&net);
        for _ in 0..10_000 {
            prop_assert!(net.propensities(&x).unwrap().iter().all(|&a| a >= 0.0));
            stepper.jump(&mut x, &mut rng).unwrap();
            prop_assert!(x.counts().iter().all(|&c| c >= 0));
        }
    }
}

#[test]
fn explicit_chains_are_capped() {
    assert_eq!(MAX_EXPLICIT_STATES, 10_000);
}
