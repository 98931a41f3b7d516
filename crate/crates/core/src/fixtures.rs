//! Reference models: the two reaction networks used in the numerical
//! experiments and small explicit generators with known spectra.

use nalgebra::DMatrix;

use crate::model::{ExplicitChain, ObservableSpec, Propensity, Reaction, ReactionNetwork};

/// Rate constants `(c1..c5)` of the birth/conversion/death cascade.
pub const CASCADE_RATES: [f64; 5] = [0.1, 100.0, 100.0, 0.01, 0.01];
pub const CASCADE_INITIAL: [i64; 3] = [5, 10, 10];

pub const TRIMER_RATES: [f64; 6] = [0.1, 0.1, 0.1, 0.1, 2.0, 2.0];
pub const TRIMER_INITIAL: [i64; 4] = [3, 30, 30, 30];

/// `0 -> A`, `A -> B`, `B -> A`, `B -> C`, `C -> 0`. The two conversions
/// between `A` and `B` are fast.
pub fn birth_conversion_death() -> ReactionNetwork {
    birth_conversion_death_with(CASCADE_RATES)
}

pub fn birth_conversion_death_with(c: [f64; 5]) -> ReactionNetwork {
    let lin = |rate, species| Propensity::Linear { rate, species };
    let reactions = vec![
        Reaction::new(Propensity::Constant(c[0]), vec![1, 0, 0]),
        Reaction::new(lin(c[1], 0), vec![-1, 1, 0]),
        Reaction::new(lin(c[2], 1), vec![1, -1, 0]),
        Reaction::new(lin(c[3], 1), vec![0, -1, 1]),
        Reaction::new(lin(c[4], 2), vec![0, 0, -1]),
    ];
    ReactionNetwork::new(
        vec!["A".into(), "B".into(), "C".into()],
        reactions,
        vec![true, false, false, true, true],
    )
    .expect("cascade fixture is valid")
}

/// Means of the product-Poisson stationary law of the cascade.
pub fn cascade_stationary_means(c: [f64; 5]) -> [f64; 3] {
    [c[0] * (c[2] + c[3]) / (c[1] * c[3]), c[0] / c[3], c[0] / c[4]]
}

/// `f1 = A + B`, `f2 = C`, `f3 = A`.
pub fn cascade_observables() -> Vec<(String, ObservableSpec)> {
    vec![
        (
            "f1".into(),
            ObservableSpec::LinearCombination(vec![1.0, 1.0, 0.0]),
        ),
        ("f2".into(), ObservableSpec::Coordinate(2)),
        ("f3".into(), ObservableSpec::Coordinate(0)),
    ]
}

/// `S1 <-> S2`, `S1 <-> S3`, `2 S2 + S3 <-> 3 S4`; the last pair is fast.
pub fn trimerization() -> ReactionNetwork {
    let c = TRIMER_RATES;
    let lin = |rate, species| Propensity::Linear { rate, species };
    let reactions = vec![
        Reaction::new(lin(c[0], 0), vec![-1, 1, 0, 0]),
        Reaction::new(lin(c[1], 1), vec![1, -1, 0, 0]),
        Reaction::new(lin(c[2], 0), vec![-1, 0, 1, 0]),
        Reaction::new(lin(c[3], 2), vec![1, 0, -1, 0]),
        Reaction::new(
            Propensity::MassAction {
                rate: c[4],
                reactants: vec![(1, 2), (2, 1)],
            },
            vec![0, -2, -1, 3],
        ),
        Reaction::new(
            Propensity::MassAction {
                rate: c[5],
                reactants: vec![(3, 3)],
            },
            vec![0, 2, 1, -3],
        ),
    ];
    ReactionNetwork::new(
        vec!["S1".into(), "S2".into(), "S3".into(), "S4".into()],
        reactions,
        vec![true, true, true, true, false, false],
    )
    .expect("trimerization fixture is valid")
}

/// Generator on four states where `{0,1,2}` is metastable for the
/// continuous-time chain but not for its jump chain.
pub fn ctmc_metastable_example(eps: f64) -> ExplicitChain {
    #[rustfmt::skip]
    let q = DMatrix::from_row_slice(4, 4, &[
        -1.0,  0.5,       0.5,  0.0,
         0.5, -1.0,       0.5,  0.0,
         0.0,  eps / 2.0, -eps, eps / 2.0,
         0.0,  0.0,       1.0, -1.0,
    ]);
    ExplicitChain::from_generator(q).expect("fixture generator is valid")
}

/// Generator on four states where `{0,1,2}` is metastable for the jump chain
/// but not for the continuous-time chain.
pub fn dtmc_metastable_example(eps: f64) -> ExplicitChain {
    let e = 1.0 / eps;
    #[rustfmt::skip]
    let q = DMatrix::from_row_slice(4, 4, &[
        -e,       e / 2.0,  e / 2.0, 0.0,
         e - 1.0, -e,       1.0,     0.0,
         0.0,     e - 1.0, -e,       1.0,
         0.0,     0.0,      1.0,    -1.0,
    ]);
    ExplicitChain::from_generator(q).expect("fixture generator is valid")
}

/// Five-state chain with two distinct exit targets from `W = {0,1,2}`, so
/// that the exit state is genuinely random.
pub fn two_exit_example() -> ExplicitChain {
    ExplicitChain::from_rates(&[
        vec![0.0, 0.5, 0.5, 0.0, 0.2],
        vec![0.5, 0.0, 0.5, 0.0, 0.0],
        vec![0.0, 0.4, 0.0, 0.1, 0.0],
        vec![0.0, 0.0, 1.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0, 0.0, 0.0],
    ])
    .expect("fixture generator is valid")
}

/// Members of the metastable set shared by the explicit fixtures.
pub const EXAMPLE_SET: [usize; 3] = [0, 1, 2];
