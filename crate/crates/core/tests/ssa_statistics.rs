//! Sampling checks of the Gillespie kernel against exact jump laws.

use parrep::oracle::stationary_distribution;
use parrep::ssa::{run_serial, ssa_jump, Stepper};
use parrep::stats::{batch_means, chi_square_gof, chi_square_independence, mean_se};
use parrep::{
    embedded_matrix, fixtures, ExplicitChain, PopulationState, RngStream, StateFunction,
};

const DRAWS: usize = 1_000_000;

fn cascade_start() -> PopulationState {
    PopulationState::new(fixtures::CASCADE_INITIAL.to_vec()).unwrap()
}

#[test]
fn cascade_channel_and_holding_time() {
    let net = fixtures::birth_conversion_death();
    let x = cascade_start();
    let total = 1500.3;
    let mut rng = RngStream::new(11, 0);
    let mut hits = 0u64;
    let mut holds = Vec::with_capacity(DRAWS);
    for _ in 0..DRAWS {
        let j = ssa_jump(&net, &x, &mut rng).unwrap();
        if j.reaction_index == 2 {
            hits += 1;
            assert_eq!(j.next_state.counts(), &[6, 9, 10]);
        }
        holds.push(j.holding_time);
    }
    let p = 1000.0 / total;
    let freq = hits as f64 / DRAWS as f64;
    let se = (p * (1.0 - p) / DRAWS as f64).sqrt();
    assert!((freq - p).abs() < 4.0 * se, "freq {freq} vs {p}");

    let (m, se) = mean_se(&holds);
    assert!((m - 1.0 / total).abs() < 4.0 * se, "mean holding {m}");
}

#[test]
fn jump_chain_successors_match_embedded_matrix() {
    let chain = fixtures::ctmc_metastable_example(1e-3);
    let p = embedded_matrix(&chain).unwrap();
    assert_eq!(p[(2, 1)], 0.5);
    assert_eq!(p[(2, 3)], 0.5);
    let mut rng = RngStream::new(12, 0);
    let mut stepper = Stepper::new(&chain);
    for from in 0..chain.len() {
        let mut counts = vec![0u64; chain.len()];
        for _ in 0..DRAWS / 4 {
            let mut x = from;
            stepper.step(&mut x, &mut rng).unwrap();
            counts[x] += 1;
        }
        let observed: Vec<u64> = (0..chain.len()).filter(|&y| y != from).map(|y| counts[y]).collect();
        let probs: Vec<f64> = (0..chain.len()).filter(|&y| y != from).map(|y| p[(from, y)]).collect();
        assert_eq!(counts[from], 0);
        let (obs, pr): (Vec<u64>, Vec<f64>) = observed
            .into_iter()
            .zip(probs)
            .filter(|&(_, q)| q > 0.0)
            .unzip();
        if obs.len() > 1 {
            let t = chi_square_gof(&obs, &pr).unwrap();
            assert!(t.passes(1e-3), "state {from}: {t:?}");
        }
    }
}

#[test]
fn holding_time_is_independent_of_destination() {
    let chain = ExplicitChain::from_rates(&[
        vec![0.0, 1.0, 3.0],
        vec![2.0, 0.0, 2.0],
        vec![1.0, 1.0, 0.0],
    ])
    .unwrap();
    let q0 = chain.exit_rate(0);
    let quartiles: Vec<f64> = [0.25f64, 0.5, 0.75].iter().map(|u| -(1.0 - u).ln() / q0).collect();
    let mut table = vec![vec![0u64; 2]; 4];
    let mut rng = RngStream::new(13, 0);
    for _ in 0..200_000 {
        let j = ssa_jump(&chain, &0usize, &mut rng).unwrap();
        let bin = quartiles.iter().filter(|&&q| j.holding_time > q).count();
        table[bin][j.next_state - 1] += 1;
    }
    let t = chi_square_independence(&table).unwrap();
    assert!(t.passes(1e-3), "{t:?}");
    let to_two: u64 = table.iter().map(|r| r[1]).sum();
    let freq = to_two as f64 / 200_000.0;
    assert!((freq - 0.75).abs() < 4.0 * (0.75f64 * 0.25 / 200_000.0).sqrt());
}

#[test]
fn cascade_time_averages_reach_stationary_means() {
    let net = fixtures::birth_conversion_death();
    let obs: Vec<_> = fixtures::cascade_observables().into_iter().map(|(_, o)| o).collect();
    let exact = fixtures::cascade_stationary_means(fixtures::CASCADE_RATES);
    let mut rng = RngStream::new(14, 0);
    let run = run_serial(&net, &cascade_start(), &obs, 2000.0, &mut rng).unwrap();
    let den: Vec<f64> = run.segments.iter().map(|s| s.elapsed_time).collect();
    for (i, want) in [exact[0] + exact[1], exact[2], exact[0]].into_iter().enumerate() {
        let num: Vec<f64> = run.segments.iter().map(|s| s.time_integral[i]).collect();
        let est = run.accumulator.averages()[i];
        let ci = batch_means(est, &num, &den, 20);
        assert!(
            (est - want).abs() < 4.0 * ci.std_error,
            "observable {i}: {est} +- {} vs {want}",
            ci.std_error
        );
    }
}

#[test]
fn two_state_chain_spends_half_its_time_in_each_state() {
    let chain = ExplicitChain::from_rates(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let mut rng = RngStream::new(15, 0);
    let run = run_serial(&chain, &0, &[StateFunction::indicator(2, 0)], 1e5, &mut rng).unwrap();
    let avg = run.accumulator.averages()[0];
    // Variance of the time average is about 1 / (2 q T) for this chain.
    assert!((avg - 0.5).abs() < 4.0 * (1.0f64 / 2e5).sqrt(), "{avg}");
}

#[test]
fn occupation_matches_stationary_law() {
    let chain = ExplicitChain::from_rates(&[
        vec![0.0, 0.7, 0.1, 0.0, 0.4],
        vec![0.3, 0.0, 1.2, 0.2, 0.0],
        vec![0.0, 0.5, 0.0, 0.9, 0.1],
        vec![0.6, 0.0, 0.3, 0.0, 0.8],
        vec![0.2, 0.4, 0.0, 0.5, 0.0],
    ])
    .unwrap();
    let pi = stationary_distribution(&chain).unwrap();
    let obs: Vec<StateFunction> = (0..5).map(|s| StateFunction::indicator(5, s)).collect();
    let mut rng = RngStream::new(16, 0);
    let run = run_serial(&chain, &0, &obs, 2e5, &mut rng).unwrap();
    let den: Vec<f64> = run.segments.iter().map(|s| s.elapsed_time).collect();
    for s in 0..5 {
        let num: Vec<f64> = run.segments.iter().map(|g| g.time_integral[s]).collect();
        let est = run.accumulator.averages()[s];
        let ci = batch_means(est, &num, &den, 20);
        assert!((est - pi[s]).abs() < 4.0 * ci.std_error, "state {s}: {est} vs {}", pi[s]);
    }
}
