//! End-to-end runs of both ParRep engines through the experiment harness.

use std::path::PathBuf;

use parrep::engine::RunReport;
use parrep::harness::{self, confidence_intervals, Experiment};
use parrep::parse::{DephasingKind, Horizon};
use parrep::stats::within;
use parrep::Executor;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load(name: &str, t_end: f64) -> Experiment {
    let mut exp = Experiment::load(&fixture(name)).unwrap();
    exp.config.horizon = Horizon::Time(t_end);
    exp
}

fn agree(a: &RunReport, b: &RunReport, k: f64) {
    let (ca, cb) = (confidence_intervals(a), confidence_intervals(b));
    for (i, (x, y)) in ca.iter().zip(&cb).enumerate() {
        assert!(
            within(x.estimate, x.std_error, y.estimate, y.std_error, k),
            "observable {i}: {} +- {} vs {} +- {}",
            x.estimate,
            x.std_error,
            y.estimate,
            y.std_error
        );
    }
}

#[test]
fn single_replica_runs_agree_with_direct_simulation() {
    let exec = Executor::sequential();
    for cfg in ["cascade_ctmc.cfg", "cascade_embedded.cfg"] {
        let mut exp = load(cfg, 2000.0);
        exp.config.replicas = 1;
        let parrep = exp.run(&exec).unwrap();
        let serial = exp.baseline().unwrap().unwrap();
        assert_eq!(parrep.model, serial.model);
        agree(&parrep, &serial, 4.0);
    }
}

#[test]
fn replicated_runs_agree_with_direct_simulation() {
    let exec = Executor::new(2).unwrap();
    for cfg in ["cascade_ctmc.cfg", "cascade_embedded.cfg"] {
        let exp = load(cfg, 2000.0);
        let parrep = exp.run(&exec).unwrap();
        let serial = exp.baseline().unwrap().unwrap();
        agree(&parrep, &serial, 4.0);
        assert!(parrep.cost.wall() < serial.cost.wall(), "{cfg}: no saving");
    }
}

#[test]
fn dephasing_methods_agree_on_trimerization() {
    let exec = Executor::sequential();
    let mut reports = Vec::new();
    for kind in [DephasingKind::Rejection, DephasingKind::FlemingViot] {
        let mut exp = load("trimer_rej_20.cfg", 200.0);
        exp.config.replicas = 10;
        exp.config.dephasing = kind;
        reports.push(exp.run(&exec).unwrap());
    }
    agree(&reports[0], &reports[1], 4.0);
}

#[test]
fn cycle_records_add_up_to_the_totals() {
    let exp = load("cascade_embedded.cfg", 500.0);
    let r = exp.run(&Executor::sequential()).unwrap();
    let time: f64 = r.cycles.iter().map(|c| c.increment.time).sum();
    let steps: u64 = r.cycles.iter().map(|c| c.increment.steps).sum();
    let wall: u64 = r.cycles.iter().map(|c| c.wall_cost).sum();
    assert!((time - r.accumulator.time).abs() <= 1e-9 * time);
    assert_eq!(steps, r.accumulator.steps);
    assert_eq!(wall, r.cost.wall());
    assert!(r.accumulator.time >= 500.0);
    for (i, c) in r.cycles.iter().enumerate() {
        assert_eq!(c.cycle, i as u64);
        assert!(c.winner <= r.replicas);
    }
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let exp = load("cascade_ctmc.cfg", 100.0);
    let names = exp.observable_names();
    let prov = exp.provenance();
    let mut outputs = Vec::new();
    for workers in [1, 2, 4] {
        let r = exp.run(&Executor::new(workers).unwrap()).unwrap();
        outputs.push((
            harness::summary_csv(&prov, &names, &r).unwrap(),
            harness::cycles_csv(&prov, &names, &r).unwrap(),
        ));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));

    let mut other = load("cascade_ctmc.cfg", 100.0);
    other.config.master_seed = 2;
    let r = other.run(&Executor::sequential()).unwrap();
    assert_ne!(harness::cycles_csv(&other.provenance(), &names, &r).unwrap(), outputs[0].1);
}

#[test]
fn report_files_round_trip_through_csv() {
    let exp = load("cascade_embedded.cfg", 100.0);
    let r = exp.run(&Executor::sequential()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = harness::write_report(dir.path(), &exp.provenance(), &exp.observable_names(), &r).unwrap();
    let text = std::fs::read_to_string(&files.summary).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(body[0].starts_with("observable,estimate,std_error"));
    assert_eq!(body.len(), 1 + exp.observable_names().len());
    let cycles = std::fs::read_to_string(&files.cycles).unwrap();
    assert_eq!(cycles.lines().filter(|l| !l.starts_with('#')).count(), 1 + r.cycles.len());
}
