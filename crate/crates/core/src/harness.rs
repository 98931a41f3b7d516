//! Experiments from configuration files, batch-means summaries and the CSV
//! report format.
//!
//! A run writes two files. `summary.csv` has one row per observable:
//!
//! ```text
//! observable,estimate,std_error,batches,batch_size,integral,time,steps,wall_cost,events
//! ```
//!
//! and `cycles.csv` one row per ParRep cycle:
//!
//! ```text
//! cycle,label,decorrelation_jumps,decorrelation_time,dephase_cost,dephase_restarts,
//! first_exit,stage_time,winner,exit_state,wall_cost,time,steps,<one column per observable>
//! ```
//!
//! Both start with `#` provenance lines (format version, crate version,
//! algorithm, replicas, seed, SHA-256 of the effective configuration). Floats
//! are written in shortest round-trip form, so the files are byte-stable for
//! a fixed configuration and seed.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::engine::{
    run_ctmc_parrep, run_embedded_parrep, run_ssa, virtual_speedup, Problem, RunReport, Settings,
};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::label::MetastableLabeler;
use crate::model::{ObservableSpec, PopulationState, ReactionNetwork};
use crate::parse::{
    experiment_to_text, network_to_text, parse_experiment, parse_network, Algorithm, DephasingKind,
    ExperimentConfig, Horizon, Thresholds,
};
use crate::stats::{batch_means, BatchMeansCI, BATCHES};

/// Version of the CSV layouts.
pub const CSV_FORMAT: u32 = 1;

/// A parsed configuration with its network and resolved observables.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub network: ReactionNetwork,
    pub observables: Vec<(String, ObservableSpec)>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

impl Experiment {
    /// Reads a configuration file. The network path is resolved against the
    /// directory of the configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let config = parse_experiment(&read(path)?)?;
        let rel = config
            .network
            .as_deref()
            .ok_or(Error::MissingField("network"))?;
        let net_path = path.parent().unwrap_or(Path::new(".")).join(rel);
        let network = parse_network(&read(&net_path)?)?;
        Self::new(config, network)
    }

    pub fn new(config: ExperimentConfig, network: ReactionNetwork) -> Result<Self> {
        if config.initial_state.len() != network.species_count() {
            return Err(Error::Dimension {
                expected: network.species_count(),
                got: config.initial_state.len(),
            });
        }
        let observables = config
            .observables
            .iter()
            .map(|(n, e)| Ok((n.clone(), e.resolve(network.species())?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Experiment {
            config,
            network,
            observables,
        })
    }

    pub fn initial_state(&self) -> Result<PopulationState> {
        PopulationState::new(self.config.initial_state.clone())
    }

    pub fn observable_names(&self) -> Vec<String> {
        self.observables.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Configured slow observables, or every configured observable that no
    /// fast reaction changes.
    pub fn labeler(&self) -> Result<MetastableLabeler> {
        let slow: Vec<ObservableSpec> = match &self.config.slow_observables {
            Some(names) => names
                .iter()
                .map(|n| {
                    self.observables
                        .iter()
                        .find(|(m, _)| m == n)
                        .map(|(_, o)| o.clone())
                        .ok_or_else(|| Error::Input(format!("unknown observable `{n}`")))
                })
                .collect::<Result<_>>()?,
            None => {
                let all: Vec<ObservableSpec> = self.observables.iter().map(|(_, o)| o.clone()).collect();
                let picked = MetastableLabeler::default_slow(&self.network, &all);
                if picked.is_empty() {
                    return Err(Error::Input(
                        "no configured observable is invariant under the fast reactions; \
                         set slow_observables"
                            .into(),
                    ));
                }
                picked
            }
        };
        MetastableLabeler::for_network(&self.network, slow)
    }

    pub fn settings(&self) -> Result<Settings> {
        let c = &self.config;
        match (c.algorithm, c.thresholds, c.horizon) {
            (Algorithm::CtmcParRep, Some(Thresholds::Time { t_c, t_p }), Horizon::Time(t)) => {
                let mut s = Settings::ctmc(c.replicas, t_c, t_p, t, c.master_seed);
                s.dephaser = c.dephasing;
                Ok(s)
            }
            (Algorithm::EmbeddedParRep, Some(Thresholds::Steps { n_c, n_p }), h) => Ok(
                Settings::embedded(c.replicas, n_c, n_p, c.dephasing, h, c.master_seed),
            ),
            (a, ..) => Err(Error::Input(format!(
                "configuration does not describe a {} run",
                a.name()
            ))),
        }
    }

    /// Identifies network and observables; reports with different ids are
    /// not compared.
    pub fn model_id(&self) -> Result<String> {
        let mut text = network_to_text(&self.network)?;
        for (n, o) in &self.observables {
            let _ = writeln!(text, "{n} {o:?}");
        }
        Ok(hex(&Sha256::digest(text.as_bytes())))
    }

    /// SHA-256 of the effective configuration. Worker count and output path
    /// do not change results and are left out.
    pub fn config_hash(&self) -> String {
        let mut c = self.config.clone();
        c.workers = None;
        c.output = None;
        hex(&Sha256::digest(experiment_to_text(&c).as_bytes()))
    }

    pub fn run(&self, exec: &Executor) -> Result<RunReport> {
        let x0 = self.initial_state()?;
        let specs: Vec<ObservableSpec> = self.observables.iter().map(|(_, o)| o.clone()).collect();
        let mut report = match self.config.algorithm {
            Algorithm::Ssa => match self.config.horizon {
                Horizon::Time(t) => run_ssa(&self.network, &specs, &x0, t, self.config.master_seed)?,
                Horizon::Steps(_) => return Err(Error::Input("ssa runs need t_end".into())),
            },
            a => {
                let labeler = self.labeler()?;
                let p = Problem {
                    dynamics: &self.network,
                    observables: &specs,
                    labeler: &labeler,
                };
                let s = self.settings()?;
                if a == Algorithm::CtmcParRep {
                    run_ctmc_parrep(p, &x0, &s, exec)?
                } else {
                    run_embedded_parrep(p, &x0, &s, exec)?
                }
            }
        };
        report.model = self.model_id()?;
        Ok(report)
    }

    /// Direct simulation of the same model over the same time horizon, as
    /// the speedup baseline. `None` for step horizons.
    pub fn baseline(&self) -> Result<Option<RunReport>> {
        let Horizon::Time(_) = self.config.horizon else {
            return Ok(None);
        };
        let mut c = self.config.clone();
        c.algorithm = Algorithm::Ssa;
        c.thresholds = None;
        let e = Experiment {
            config: c,
            ..self.clone()
        };
        e.run(&Executor::sequential()).map(Some)
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            algorithm: self.config.algorithm.name().into(),
            replicas: self.config.replicas,
            seed: self.config.master_seed,
            config_sha256: self.config_hash(),
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Header lines of every CSV file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub algorithm: String,
    pub replicas: usize,
    pub seed: u64,
    pub config_sha256: String,
}

impl Provenance {
    fn write(&self, out: &mut Vec<u8>) {
        let _ = writeln!(out, "# format = {CSV_FORMAT}");
        let _ = writeln!(out, "# parrep = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "# algorithm = {}", self.algorithm);
        let _ = writeln!(out, "# replicas = {}", self.replicas);
        let _ = writeln!(out, "# seed = {}", self.seed);
        let _ = writeln!(out, "# config_sha256 = {}", self.config_sha256);
    }
}

/// Batch-means intervals for every observable, in configuration order.
pub fn confidence_intervals(report: &RunReport) -> Vec<BatchMeansCI> {
    let den: Vec<f64> = report.units.iter().map(|u| u.time).collect();
    report
        .estimates()
        .into_iter()
        .enumerate()
        .map(|(i, est)| {
            let num: Vec<f64> = report.units.iter().map(|u| u.integrals[i]).collect();
            batch_means(est, &num, &den, BATCHES)
        })
        .collect()
}

fn csv_writer(out: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: "<csv>".into(),
        message: e.to_string(),
    }
}

/// Summary CSV. With no observables a single row for the constant `1`
/// records `F(1)`.
pub fn summary_csv(prov: &Provenance, names: &[String], report: &RunReport) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    prov.write(&mut out);
    let cis = confidence_intervals(report);
    let acc = &report.accumulator;
    let wall = report.cost.wall().to_string();
    let events = report.cost.events.to_string();
    let mut w = csv_writer(&mut out);
    w.write_record([
        "observable", "estimate", "std_error", "batches", "batch_size", "integral", "time", "steps",
        "wall_cost", "events",
    ])
    .map_err(csv_err)?;
    let time = acc.time.to_string();
    let steps = acc.steps.to_string();
    if names.is_empty() {
        w.write_record(["1", "1", "0", "0", "0", &time, &time, &steps, &wall, &events])
            .map_err(csv_err)?;
    }
    for ((name, ci), integral) in names.iter().zip(&cis).zip(&acc.integrals) {
        w.write_record([
            name.as_str(),
            &ci.estimate.to_string(),
            &ci.std_error.to_string(),
            &ci.batches.to_string(),
            &ci.batch_size.to_string(),
            &integral.to_string(),
            &time,
            &steps,
            &wall,
            &events,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)?;
    drop(w);
    Ok(out)
}

pub fn cycles_csv(prov: &Provenance, names: &[String], report: &RunReport) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    prov.write(&mut out);
    let mut w = csv_writer(&mut out);
    let mut header: Vec<String> = [
        "cycle",
        "label",
        "decorrelation_jumps",
        "decorrelation_time",
        "dephase_cost",
        "dephase_restarts",
        "first_exit",
        "stage_time",
        "winner",
        "exit_state",
        "wall_cost",
        "time",
        "steps",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for c in &report.cycles {
        let mut row = vec![
            c.cycle.to_string(),
            c.label.clone(),
            c.decorrelation_jumps.to_string(),
            c.decorrelation_time.to_string(),
            c.dephase_cost.to_string(),
            c.dephase_restarts.to_string(),
            c.first_exit.to_string(),
            c.stage_time.to_string(),
            c.winner.to_string(),
            c.exit_state.clone(),
            c.wall_cost.to_string(),
            c.increment.time.to_string(),
            c.increment.steps.to_string(),
        ];
        row.extend(c.increment.integrals.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)?;
    drop(w);
    Ok(out)
}

/// Paths written by [`write_report`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportFiles {
    pub summary: PathBuf,
    pub cycles: PathBuf,
}

pub fn write_report(dir: &Path, prov: &Provenance, names: &[String], report: &RunReport) -> Result<ReportFiles> {
    let io = |path: &Path, e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let files = ReportFiles {
        summary: dir.join("summary.csv"),
        cycles: dir.join("cycles.csv"),
    };
    fs::write(&files.summary, summary_csv(prov, names, report)?).map_err(|e| io(&files.summary, e))?;
    fs::write(&files.cycles, cycles_csv(prov, names, report)?).map_err(|e| io(&files.cycles, e))?;
    Ok(files)
}

/// Grid of sweep points. Empty lists keep the configured value; thresholds
/// set `t_c = t_p` or `n_c = n_p`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSpec {
    pub replicas: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub dephasing: Vec<DephasingKind>,
}

/// One row of a sweep table.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub replicas: usize,
    pub threshold: f64,
    pub dephasing: DephasingKind,
    pub intervals: Vec<BatchMeansCI>,
    pub time: f64,
    pub wall_cost: u64,
    /// NaN when there is no time-horizon baseline.
    pub speedup: f64,
}

fn with_threshold(t: Option<Thresholds>, v: f64) -> Result<Option<Thresholds>> {
    match t {
        Some(Thresholds::Time { .. }) => Ok(Some(Thresholds::Time { t_c: v, t_p: v })),
        Some(Thresholds::Steps { .. }) => {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::Input(format!("step threshold {v} is not a whole number")));
            }
            Ok(Some(Thresholds::Steps {
                n_c: v as u64,
                n_p: v as u64,
            }))
        }
        None => Err(Error::Input("direct simulation has no thresholds to sweep".into())),
    }
}

fn threshold_value(t: Option<Thresholds>) -> f64 {
    match t {
        Some(Thresholds::Time { t_c, .. }) => t_c,
        Some(Thresholds::Steps { n_c, .. }) => n_c as f64,
        None => 0.0,
    }
}

/// Runs every point of the grid in the order replicas, threshold, dephasing.
/// The speedup baseline is one direct simulation over the configured
/// horizon with the configured seed.
pub fn sweep(exp: &Experiment, spec: &SweepSpec, exec: &Executor) -> Result<Vec<SweepPoint>> {
    if exp.config.algorithm == Algorithm::Ssa {
        return Err(Error::Input("sweeps need a ParRep algorithm".into()));
    }
    let baseline = exp.baseline()?;
    let reps = if spec.replicas.is_empty() {
        vec![exp.config.replicas]
    } else {
        spec.replicas.clone()
    };
    let thrs = if spec.thresholds.is_empty() {
        vec![threshold_value(exp.config.thresholds)]
    } else {
        spec.thresholds.clone()
    };
    let deph = if spec.dephasing.is_empty() {
        vec![exp.config.dephasing]
    } else {
        spec.dephasing.clone()
    };
    let mut rows = Vec::new();
    for &r in &reps {
        for &t in &thrs {
            for &d in &deph {
                let mut e = exp.clone();
                e.config.replicas = r;
                e.config.thresholds = with_threshold(e.config.thresholds, t)?;
                e.config.dephasing = d;
                log::info!("sweep point R = {r}, threshold = {t}, dephasing = {}", d.name());
                let report = e.run(exec)?;
                let speedup = match &baseline {
                    Some(b) => virtual_speedup(&report, b)?,
                    None => f64::NAN,
                };
                rows.push(SweepPoint {
                    replicas: r,
                    threshold: t,
                    dephasing: d,
                    intervals: confidence_intervals(&report),
                    time: report.accumulator.time,
                    wall_cost: report.cost.wall(),
                    speedup,
                });
            }
        }
    }
    Ok(rows)
}

/// `replicas,threshold,dephasing,<name>_estimate,<name>_std_error,...,time,wall_cost,speedup`
pub fn sweep_csv(prov: &Provenance, names: &[String], rows: &[SweepPoint]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    prov.write(&mut out);
    let mut w = csv_writer(&mut out);
    let mut header = vec!["replicas".to_string(), "threshold".into(), "dephasing".into()];
    for n in names {
        header.push(format!("{n}_estimate"));
        header.push(format!("{n}_std_error"));
    }
    header.extend(["time".into(), "wall_cost".into(), "speedup".into()]);
    w.write_record(&header).map_err(csv_err)?;
    for p in rows {
        let mut row = vec![p.replicas.to_string(), p.threshold.to_string(), p.dephasing.name().into()];
        for ci in &p.intervals {
            row.push(ci.estimate.to_string());
            row.push(ci.std_error.to_string());
        }
        row.extend([p.time.to_string(), p.wall_cost.to_string(), p.speedup.to_string()]);
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)?;
    drop(w);
    Ok(out)
}
