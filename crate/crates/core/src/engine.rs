//! The CTMC-level and embedded-chain ParRep engines.
//!
//! A cycle is decorrelation (serial, on the trajectory stream), dephasing
//! (`R` replicas) and the parallel stage (`R` replicas until the first exit).
//! Every replica draws from its own stream, keyed by cycle and index, and all
//! reductions run in replica order, so a report depends only on the settings
//! and the master seed.

use crate::dephase::{
    fleming_viot_dephase, rejection_dephase, DephaseOutcome, Span, DEFAULT_ENSEMBLE_RESTARTS,
    DEFAULT_JUMP_BUDGET,
};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::label::Labeler;
use crate::model::{Dynamics, Observable};
use crate::parse::{Algorithm, DephasingKind, Horizon};
use crate::rng::{CycleStreams, RngStream, Role};
use crate::ssa::{run_serial, Stepper};

/// Dynamics, observables and metastable sets of one experiment.
pub struct Problem<'a, D, O, L> {
    pub dynamics: &'a D,
    pub observables: &'a [O],
    pub labeler: &'a L,
}

impl<D, O, L> Clone for Problem<'_, D, O, L> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<D, O, L> Copy for Problem<'_, D, O, L> {}

/// `F(f)` per observable, `F(1)` and the step clock gained by one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Increment {
    pub integrals: Vec<f64>,
    pub time: f64,
    pub steps: u64,
}

impl Increment {
    pub fn new(observables: usize) -> Self {
        Increment {
            integrals: vec![0.0; observables],
            time: 0.0,
            steps: 0,
        }
    }

    #[inline]
    fn add<S, O: Observable<S>>(&mut self, observables: &[O], x: &S, dt: f64) {
        for (acc, f) in self.integrals.iter_mut().zip(observables) {
            *acc += f.eval(x) * dt;
        }
        self.time += dt;
    }

    pub fn absorb(&mut self, other: &Increment) {
        for (a, b) in self.integrals.iter_mut().zip(&other.integrals) {
            *a += b;
        }
        self.time += other.time;
        self.steps += other.steps;
    }
}

/// Running totals of a ParRep run. For the CTMC engine `time` is `T_sim`;
/// for the embedded engine it is `F(1)_sim` and `steps` is `N_sim`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParRepAccumulator {
    pub integrals: Vec<f64>,
    pub time: f64,
    pub steps: u64,
}

impl ParRepAccumulator {
    pub fn new(observables: usize) -> Self {
        ParRepAccumulator {
            integrals: vec![0.0; observables],
            time: 0.0,
            steps: 0,
        }
    }

    pub fn add(&mut self, inc: &Increment) {
        for (a, b) in self.integrals.iter_mut().zip(&inc.integrals) {
            *a += b;
        }
        self.time += inc.time;
        self.steps += inc.steps;
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.integrals.iter().map(|v| v / self.time).collect()
    }

    fn reached(&self, horizon: Horizon) -> bool {
        match horizon {
            Horizon::Time(t) => self.time >= t,
            Horizon::Steps(n) => self.steps >= n,
        }
    }
}

/// Outcome of a decorrelation stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Decorrelated<Lb> {
    /// Set the trajectory dwelt in; `None` when the horizon came first.
    pub label: Option<Lb>,
    pub increment: Increment,
    pub jumps: u64,
    pub horizon_reached: bool,
}

/// Serial evolution until the trajectory has spent `t_c` continuous time in
/// one labeled set, counted from the start of the stage. The holding interval
/// straddling the end is cut there and the pending jump discarded. Evolves
/// `x` in place.
pub fn decorrelate_ctmc<D, O, L>(
    p: Problem<'_, D, O, L>,
    x: &mut D::State,
    t_c: f64,
    now: &ParRepAccumulator,
    horizon: Option<f64>,
    rng: &mut RngStream,
) -> Result<Decorrelated<L::Label>>
where
    D: Dynamics,
    O: Observable<D::State>,
    L: Labeler<D::State>,
{
    if !(t_c >= 0.0 && t_c.is_finite()) {
        return Err(Error::Input(format!("t_c must be non-negative, got {t_c}")));
    }
    let mut stepper = Stepper::new(p.dynamics);
    let mut inc = Increment::new(p.observables.len());
    let mut jumps = 0;
    let mut current = p.labeler.label(x);
    let mut dwell_start = 0.0;
    loop {
        let need = if current.is_some() {
            dwell_start + t_c - inc.time
        } else {
            f64::INFINITY
        };
        let remaining = horizon.map_or(f64::INFINITY, |t| t - (now.time + inc.time));
        if need <= 0.0 {
            return Ok(done(current, inc, jumps, false));
        }
        if remaining <= 0.0 {
            return Ok(done(None, inc, jumps, true));
        }
        let dt = stepper.holding(x, rng)?;
        jumps += 1;
        if dt >= need || dt >= remaining {
            let cut = need.min(remaining);
            inc.add(p.observables, x, cut);
            return Ok(if need <= remaining {
                done(current, inc, jumps, false)
            } else {
                done(None, inc, jumps, true)
            });
        }
        inc.add(p.observables, x, dt);
        stepper.complete(x, rng)?;
        let next = p.labeler.label(x);
        if next != current {
            current = next;
            dwell_start = inc.time;
        }
    }
}

fn done<Lb>(label: Option<Lb>, increment: Increment, jumps: u64, horizon_reached: bool) -> Decorrelated<Lb> {
    Decorrelated {
        label,
        increment,
        jumps,
        horizon_reached,
    }
}

/// Serial evolution until the last `n_c` states visited since the start of
/// the stage lie in one labeled set. Holding times are drawn so that
/// `f(X_n) dtau_n` can be accumulated.
pub fn decorrelate_embedded<D, O, L>(
    p: Problem<'_, D, O, L>,
    x: &mut D::State,
    n_c: u64,
    now: &ParRepAccumulator,
    horizon: Option<Horizon>,
    rng: &mut RngStream,
) -> Result<Decorrelated<L::Label>>
where
    D: Dynamics,
    O: Observable<D::State>,
    L: Labeler<D::State>,
{
    let mut stepper = Stepper::new(p.dynamics);
    let mut inc = Increment::new(p.observables.len());
    let mut current = p.labeler.label(x);
    let mut run = u64::from(current.is_some());
    loop {
        if current.is_some() && run >= n_c {
            let jumps = inc.steps;
            return Ok(done(current, inc, jumps, false));
        }
        let over = match horizon {
            Some(Horizon::Time(t)) => now.time + inc.time >= t,
            Some(Horizon::Steps(n)) => now.steps + inc.steps >= n,
            None => false,
        };
        if over {
            let jumps = inc.steps;
            return Ok(done(None, inc, jumps, true));
        }
        let dt = stepper.holding(x, rng)?;
        inc.add(p.observables, x, dt);
        inc.steps += 1;
        stepper.complete(x, rng)?;
        let next = p.labeler.label(x);
        if next.is_some() && next == current {
            run += 1;
        } else {
            run = u64::from(next.is_some());
            current = next;
        }
    }
}

/// Outcome of a parallel stage.
#[derive(Clone, Debug, PartialEq)]
pub struct ParallelStage<S> {
    pub exit_state: S,
    /// `T*` (CTMC) or `N*` (embedded).
    pub first_exit: f64,
    /// 0-based index of the replica whose exit is used (`M` or `K - 1`).
    pub winner: usize,
    /// Contribution to `F(f)`, `F(1)` and, for the embedded engine, the
    /// step clock `R (N* - 1) + K`.
    pub increment: Increment,
    /// Events each replica simulates under the synchronous model.
    pub replica_events: Vec<u64>,
    pub coordinator_epochs: u64,
}

impl<S> ParallelStage<S> {
    pub fn wall_cost(&self) -> u64 {
        self.replica_events.iter().copied().max().unwrap_or(0) + self.coordinator_epochs
    }
}

/// Default number of jumps a replica runs between synchronization points.
pub const DEFAULT_CHUNK: usize = 256;
/// Default cap on jumps per replica in one parallel stage.
pub const DEFAULT_STAGE_BUDGET: u64 = 1_000_000_000;

struct CtmcReplica<'a, D: Dynamics> {
    x: D::State,
    rng: RngStream,
    stepper: Stepper<'a, D>,
    /// Elapsed time after each jump, starting with 0.
    times: Vec<f64>,
    /// Integral before jump `k`, then `f(X_k)`, interleaved per jump.
    log: Vec<f64>,
    cum: Vec<f64>,
    exit: Option<(u64, f64)>,
}

fn check_samples<S, L: Labeler<S>>(labeler: &L, label: &L::Label, samples: &[S]) -> Result<()>
where
    S: std::fmt::Debug,
{
    if samples.is_empty() {
        return Err(Error::Input("parallel stage needs at least one replica".into()));
    }
    match samples.iter().position(|x| !labeler.contains(label, x)) {
        Some(r) => Err(Error::Input(format!(
            "replica {r} starts at {:?}, outside set {label}",
            samples[r]
        ))),
        None => Ok(()),
    }
}

/// Parallel stage of the CTMC engine: replicas run until the first exit
/// time `T*`, each halting once its clock passes the smallest exit time
/// published so far. Integrals are cut at `T*` from each replica's jump log.
#[allow(clippy::too_many_arguments)]
pub fn parallel_stage_ctmc<D, O, L>(
    p: Problem<'_, D, O, L>,
    label: &L::Label,
    samples: Vec<D::State>,
    streams: CycleStreams,
    chunk: usize,
    budget: u64,
    exec: &Executor,
) -> Result<ParallelStage<D::State>>
where
    D: Dynamics,
    O: Observable<D::State>,
    L: Labeler<D::State>,
{
    check_samples(p.labeler, label, &samples)?;
    let m = p.observables.len();
    let r_count = samples.len();
    let mut reps: Vec<CtmcReplica<'_, D>> = samples
        .into_iter()
        .enumerate()
        .map(|(r, x)| CtmcReplica {
            x,
            rng: streams.stream(Role::Parallel, r as u64),
            stepper: Stepper::new(p.dynamics),
            times: vec![0.0],
            log: Vec::new(),
            cum: vec![0.0; m],
            exit: None,
        })
        .collect();
    let chunk = chunk.max(1);
    let mut t_min = f64::INFINITY;
    loop {
        let published = t_min;
        let status = exec.map_mut(&mut reps, |_, rep| -> Result<bool> {
            for _ in 0..chunk {
                let elapsed = *rep.times.last().expect("non-empty");
                if rep.exit.is_some() || elapsed >= published {
                    return Ok(true);
                }
                if rep.times.len() as u64 > budget {
                    return Err(Error::BudgetExceeded {
                        what: "parallel-stage jumps",
                        budget,
                        detail: "no replica left the set".into(),
                    });
                }
                let dt = rep.stepper.holding(&rep.x, &mut rep.rng)?;
                rep.log.extend_from_slice(&rep.cum);
                for (c, f) in rep.cum.iter_mut().zip(p.observables) {
                    let v = f.eval(&rep.x);
                    rep.log.push(v);
                    *c += v * dt;
                }
                rep.stepper.complete(&mut rep.x, &mut rep.rng)?;
                let t = elapsed + dt;
                rep.times.push(t);
                if !p.labeler.contains(label, &rep.x) {
                    rep.exit = Some((rep.times.len() as u64 - 1, t));
                }
            }
            let elapsed = *rep.times.last().expect("non-empty");
            Ok(rep.exit.is_some() || elapsed >= published)
        });
        let mut all = true;
        for s in status {
            all &= s?;
        }
        for rep in &reps {
            if let Some((_, t)) = rep.exit {
                t_min = t_min.min(t);
            }
        }
        if all && t_min.is_finite() {
            break;
        }
    }
    let winner = reps
        .iter()
        .position(|r| r.exit.is_some_and(|(_, t)| t == t_min))
        .expect("some replica exited");
    let t_star = t_min;

    let mut inc = Increment::new(m);
    for rep in &reps {
        let jumps = rep.times.len() - 1;
        let k = rep.times.partition_point(|&t| t <= t_star).clamp(1, jumps) - 1;
        let entry = &rep.log[k * 2 * m..(k + 1) * 2 * m];
        let gap = t_star - rep.times[k];
        for i in 0..m {
            inc.integrals[i] += entry[i] + entry[m + i] * gap;
        }
    }
    inc.time = r_count as f64 * t_star;

    // lockstep replay of the halting rule
    let mut exits: Vec<(u64, f64)> = reps.iter().filter_map(|r| r.exit).collect();
    exits.sort_by_key(|e| e.0);
    let mut replica_events = Vec::with_capacity(r_count);
    for rep in &reps {
        let jumps = rep.times.len() as u64 - 1;
        let mut e = 0;
        let mut m_pub = f64::INFINITY;
        let mut halted = jumps;
        for k in 1..=jumps {
            while e < exits.len() && exits[e].0 <= k {
                m_pub = m_pub.min(exits[e].1);
                e += 1;
            }
            if rep.exit.is_some_and(|(tick, _)| tick == k) || rep.times[k as usize] >= m_pub {
                halted = k;
                break;
            }
        }
        replica_events.push(halted);
    }
    // exits a replica makes after its own halt never happen in lockstep
    let mut ticks: Vec<u64> = reps
        .iter()
        .zip(&replica_events)
        .filter_map(|(rep, &done)| rep.exit.filter(|e| e.0 == done).map(|e| e.0))
        .collect();
    ticks.sort_unstable();
    ticks.dedup();
    let exit_state = reps.swap_remove(winner).x;
    Ok(ParallelStage {
        exit_state,
        first_exit: t_star,
        winner,
        increment: inc,
        replica_events,
        coordinator_epochs: ticks.len() as u64,
    })
}

struct EmbeddedReplica<'a, D: Dynamics> {
    x: D::State,
    rng: RngStream,
    stepper: Stepper<'a, D>,
    steps: u64,
    /// `[integrals..., time]` after each step of the current round, starting
    /// with the value at the start of the round.
    log: Vec<f64>,
    cum: Vec<f64>,
    exited: bool,
}

/// Parallel stage of the embedded engine: replicas step in lockstep until
/// the first epoch `N*` in which one leaves. `K` is the smallest index among
/// the replicas leaving at `N*`.
pub fn parallel_stage_embedded<D, O, L>(
    p: Problem<'_, D, O, L>,
    label: &L::Label,
    samples: Vec<D::State>,
    streams: CycleStreams,
    chunk: usize,
    budget: u64,
    exec: &Executor,
) -> Result<ParallelStage<D::State>>
where
    D: Dynamics,
    O: Observable<D::State>,
    L: Labeler<D::State>,
{
    check_samples(p.labeler, label, &samples)?;
    let m = p.observables.len();
    let width = m + 1;
    let r_count = samples.len();
    let mut reps: Vec<EmbeddedReplica<'_, D>> = samples
        .into_iter()
        .enumerate()
        .map(|(r, x)| EmbeddedReplica {
            x,
            rng: streams.stream(Role::Parallel, r as u64),
            stepper: Stepper::new(p.dynamics),
            steps: 0,
            log: Vec::new(),
            cum: vec![0.0; width],
            exited: false,
        })
        .collect();
    let chunk = chunk.max(1) as u64;
    let mut round_start = 0u64;
    loop {
        if round_start >= budget {
            return Err(Error::BudgetExceeded {
                what: "parallel-stage steps",
                budget,
                detail: "no replica left the set".into(),
            });
        }
        let limit = round_start + chunk;
        let status = exec.map_mut(&mut reps, |_, rep| -> Result<()> {
            rep.log.clear();
            rep.log.extend_from_slice(&rep.cum);
            while rep.steps < limit && !rep.exited {
                let dt = rep.stepper.holding(&rep.x, &mut rep.rng)?;
                for (c, f) in rep.cum.iter_mut().zip(p.observables) {
                    *c += f.eval(&rep.x) * dt;
                }
                rep.cum[m] += dt;
                rep.stepper.complete(&mut rep.x, &mut rep.rng)?;
                rep.steps += 1;
                rep.log.extend_from_slice(&rep.cum);
                rep.exited = !p.labeler.contains(label, &rep.x);
            }
            Ok(())
        });
        for s in status {
            s?;
        }
        let n_star = reps.iter().filter(|r| r.exited).map(|r| r.steps).min();
        if let Some(n_star) = n_star {
            let k = reps
                .iter()
                .position(|r| r.exited && r.steps == n_star)
                .expect("exists");
            let mut inc = Increment::new(m);
            for (r, rep) in reps.iter().enumerate() {
                let upto = if r <= k { n_star } else { n_star - 1 };
                let at = (upto - round_start) as usize * width;
                let entry = &rep.log[at..at + width];
                for i in 0..m {
                    inc.integrals[i] += entry[i];
                }
                inc.time += entry[m];
            }
            inc.steps = r_count as u64 * (n_star - 1) + k as u64 + 1;
            let exit_state = reps.swap_remove(k).x;
            return Ok(ParallelStage {
                exit_state,
                first_exit: n_star as f64,
                winner: k,
                increment: inc,
                replica_events: vec![n_star; r_count],
                coordinator_epochs: 1,
            });
        }
        round_start = limit;
    }
}

/// Event counts under the synchronous model. `wall` is the sum over stages
/// of the slowest replica plus coordinator epochs; `events` counts every
/// simulated event on every replica.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VirtualCost {
    pub decorrelation: u64,
    pub dephasing: u64,
    pub parallel: u64,
    pub coordinator: u64,
    pub events: u64,
}

impl VirtualCost {
    pub fn wall(&self) -> u64 {
        self.decorrelation + self.dephasing + self.parallel + self.coordinator
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleRecord {
    pub cycle: u64,
    /// Set reached by decorrelation, empty if the horizon came first.
    pub label: String,
    pub decorrelation_jumps: u64,
    pub decorrelation_time: f64,
    pub dephase_cost: u64,
    pub dephase_restarts: u64,
    /// `T*` or `N*`; zero for a cycle cut by the horizon.
    pub first_exit: f64,
    /// `R T*` (CTMC) or `R (N* - 1) + K` (embedded).
    pub stage_time: f64,
    /// 1-based winning replica, 0 when there was no parallel stage.
    pub winner: usize,
    pub exit_state: String,
    pub wall_cost: u64,
    /// Everything the cycle added to the accumulator.
    pub increment: Increment,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub replicas: usize,
    /// Identifies the model; reports with different ids are not comparable.
    pub model: String,
    pub accumulator: ParRepAccumulator,
    pub cost: VirtualCost,
    pub cycles: Vec<CycleRecord>,
    /// Consecutive pieces of the run used for batch means: cycles for
    /// ParRep, equal time segments for direct simulation.
    pub units: Vec<Increment>,
    pub final_state: String,
}

impl RunReport {
    pub fn estimates(&self) -> Vec<f64> {
        self.accumulator.estimates()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub replicas: usize,
    pub decorrelation: Span,
    pub dephasing: Span,
    pub dephaser: DephasingKind,
    pub horizon: Horizon,
    pub master_seed: u64,
    pub chunk: usize,
    pub dephase_budget: u64,
    pub ensemble_restarts: u64,
    pub stage_budget: u64,
}

impl Settings {
    pub fn ctmc(replicas: usize, t_c: f64, t_p: f64, t_end: f64, master_seed: u64) -> Self {
        Settings {
            replicas,
            decorrelation: Span::Time(t_c),
            dephasing: Span::Time(t_p),
            dephaser: DephasingKind::Rejection,
            horizon: Horizon::Time(t_end),
            master_seed,
            chunk: DEFAULT_CHUNK,
            dephase_budget: DEFAULT_JUMP_BUDGET,
            ensemble_restarts: DEFAULT_ENSEMBLE_RESTARTS,
            stage_budget: DEFAULT_STAGE_BUDGET,
        }
    }

    pub fn embedded(
        replicas: usize,
        n_c: u64,
        n_p: u64,
        dephaser: DephasingKind,
        horizon: Horizon,
        master_seed: u64,
    ) -> Self {
        Settings {
            decorrelation: Span::Steps(n_c),
            dephasing: Span::Steps(n_p),
            dephaser,
            horizon,
            ..Self::ctmc(replicas, 0.0, 0.0, 0.0, master_seed)
        }
    }

    fn validate(&self, algorithm: Algorithm) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::Input("replicas must be at least 1".into()));
        }
        match (algorithm, self.decorrelation, self.dephasing, self.horizon) {
            (Algorithm::CtmcParRep, Span::Time(_), Span::Time(_), Horizon::Time(t)) => {
                if self.dephaser == DephasingKind::FlemingViot {
                    return Err(Error::Input(
                        "fleming-viot dephasing is only available for embedded-parrep".into(),
                    ));
                }
                if !(t > 0.0) {
                    return Err(Error::Input("t_end must be positive".into()));
                }
                Ok(())
            }
            (Algorithm::EmbeddedParRep, Span::Steps(_), Span::Steps(_), h) => match h {
                Horizon::Time(t) if !(t > 0.0) => Err(Error::Input("t_end must be positive".into())),
                Horizon::Steps(0) => Err(Error::Input("n_end must be positive".into())),
                _ => Ok(()),
            },
            (a, ..) => Err(Error::Input(format!(
                "thresholds and horizon do not match algorithm {}",
                a.name()
            ))),
        }
    }
}

fn dephase<D, O, L>(
    p: Problem<'_, D, O, L>,
    label: &L::Label,
    seed: &D::State,
    s: &Settings,
    streams: CycleStreams,
    exec: &Executor,
) -> Result<DephaseOutcome<D::State>>
where
    D: Dynamics,
    L: Labeler<D::State>,
{
    match (s.dephaser, s.dephasing) {
        // one Fleming-Viot particle is the rejection sampler
        (DephasingKind::FlemingViot, Span::Steps(n)) if s.replicas > 1 => {
            let seeds = vec![seed.clone(); s.replicas];
            fleming_viot_dephase(p.dynamics, p.labeler, label, &seeds, n, streams, s.ensemble_restarts, exec)
        }
        (_, span) => rejection_dephase(
            p.dynamics,
            p.labeler,
            label,
            seed,
            s.replicas,
            span,
            streams,
            s.dephase_budget,
            exec,
        ),
    }
}

fn run_parrep<D, O, L>(
    algorithm: Algorithm,
    p: Problem<'_, D, O, L>,
    x0: &D::State,
    s: &Settings,
    exec: &Executor,
) -> Result<RunReport>
where
    D: Dynamics,
    O: Observable<D::State>,
    L: Labeler<D::State>,
{
    s.validate(algorithm)?;
    let m = p.observables.len();
    let mut acc = ParRepAccumulator::new(m);
    let mut cost = VirtualCost::default();
    let mut cycles = Vec::new();
    let mut trajectory = RngStream::for_role(s.master_seed, 0, Role::Trajectory, 0);
    let mut x = x0.clone();
    let mut cycle = 0u64;
    while !acc.reached(s.horizon) {
        let dec = match (algorithm, s.decorrelation, s.horizon) {
            (Algorithm::CtmcParRep, Span::Time(t_c), Horizon::Time(t_end)) => {
                decorrelate_ctmc(p, &mut x, t_c, &acc, Some(t_end), &mut trajectory)?
            }
            (_, Span::Steps(n_c), h) => decorrelate_embedded(p, &mut x, n_c, &acc, Some(h), &mut trajectory)?,
            _ => unreachable!("validated"),
        };
        acc.add(&dec.increment);
        cost.decorrelation += dec.jumps;
        cost.events += dec.jumps;
        let mut record = CycleRecord {
            cycle,
            label: String::new(),
            decorrelation_jumps: dec.jumps,
            decorrelation_time: dec.increment.time,
            dephase_cost: 0,
            dephase_restarts: 0,
            first_exit: 0.0,
            stage_time: 0.0,
            winner: 0,
            exit_state: String::new(),
            wall_cost: dec.jumps,
            increment: dec.increment,
        };
        let label = match dec.label {
            Some(l) if !dec.horizon_reached => l,
            _ => {
                cycles.push(record);
                break;
            }
        };
        record.label = label.to_string();
        let streams = CycleStreams::new(s.master_seed, cycle);
        let samples = dephase(p, &label, &x, s, streams, exec)?;
        record.dephase_cost = samples.wall_cost();
        record.dephase_restarts = samples.restarts + samples.ensemble_restarts;
        cost.dephasing += samples.wall_cost() - samples.coordinator_epochs;
        cost.coordinator += samples.coordinator_epochs;
        cost.events += samples.total_work();
        let stage = match algorithm {
            Algorithm::CtmcParRep => {
                parallel_stage_ctmc(p, &label, samples.states, streams, s.chunk, s.stage_budget, exec)?
            }
            _ => parallel_stage_embedded(p, &label, samples.states, streams, s.chunk, s.stage_budget, exec)?,
        };
        acc.add(&stage.increment);
        let wall = stage.wall_cost();
        cost.parallel += wall - stage.coordinator_epochs;
        cost.coordinator += stage.coordinator_epochs;
        cost.events += stage.replica_events.iter().sum::<u64>();
        record.first_exit = stage.first_exit;
        record.stage_time = match algorithm {
            Algorithm::CtmcParRep => stage.increment.time,
            _ => stage.increment.steps as f64,
        };
        record.winner = stage.winner + 1;
        record.exit_state = format!("{:?}", stage.exit_state);
        record.wall_cost += record.dephase_cost + wall;
        record.increment.absorb(&stage.increment);
        x = stage.exit_state;
        cycles.push(record);
        cycle += 1;
    }
    Ok(RunReport {
        algorithm,
        replicas: s.replicas,
        model: String::new(),
        accumulator: acc,
        cost,
        units: cycles.iter().map(|c| c.increment.clone()).collect(),
        cycles,
        final_state: format!("{x:?}"),
    })
}

/// CTMC-level ParRep until `T_sim >= T_end`.
pub fn run_ctmc_parrep<D, O, L>(
    p: Problem<'_, D, O, L>,
    x0: &D::State,
    settings: &Settings,
    exec: &Executor,
) -> Result<RunReport>
where
    D: Dynamics,
    O: Observable<D::State>,
    L: Labeler<D::State>,
{
    run_parrep(Algorithm::CtmcParRep, p, x0, settings, exec)
}

/// Embedded-chain ParRep until `N_sim >= N_end` or `F(1)_sim >= T_end`.
pub fn run_embedded_parrep<D, O, L>(
    p: Problem<'_, D, O, L>,
    x0: &D::State,
    settings: &Settings,
    exec: &Executor,
) -> Result<RunReport>
where
    D: Dynamics,
    O: Observable<D::State>,
    L: Labeler<D::State>,
{
    run_parrep(Algorithm::EmbeddedParRep, p, x0, settings, exec)
}

/// Direct simulation wrapped as a report, so it can serve as the speedup
/// baseline and share the output format.
pub fn run_ssa<D, O>(
    dynamics: &D,
    observables: &[O],
    x0: &D::State,
    t_end: f64,
    master_seed: u64,
) -> Result<RunReport>
where
    D: Dynamics,
    O: Observable<D::State>,
{
    let mut rng = RngStream::for_role(master_seed, 0, Role::Trajectory, 0);
    let run = run_serial(dynamics, x0, observables, t_end, &mut rng).map_err(|e| e.error)?;
    let events = run.accumulator.step_count;
    Ok(RunReport {
        algorithm: Algorithm::Ssa,
        replicas: 1,
        model: String::new(),
        accumulator: ParRepAccumulator {
            integrals: run.accumulator.time_integral,
            time: run.accumulator.elapsed_time,
            steps: events,
        },
        cost: VirtualCost {
            decorrelation: events,
            events,
            ..VirtualCost::default()
        },
        cycles: Vec::new(),
        units: run
            .segments
            .into_iter()
            .map(|s| Increment {
                integrals: s.time_integral,
                time: s.elapsed_time,
                steps: s.step_count,
            })
            .collect(),
        final_state: format!("{:?}", run.final_state),
    })
}

/// Serial events per unit of simulated time, divided by ParRep wall cost
/// per unit of simulated time.
pub fn virtual_speedup(parrep: &RunReport, serial: &RunReport) -> Result<f64> {
    if parrep.model != serial.model {
        return Err(Error::Mismatch(format!(
            "models differ: `{}` vs `{}`",
            parrep.model, serial.model
        )));
    }
    if parrep.accumulator.integrals.len() != serial.accumulator.integrals.len() {
        return Err(Error::Mismatch("observable lists differ".into()));
    }
    if !(serial.accumulator.time > 0.0) || parrep.cost.wall() == 0 {
        return Err(Error::Mismatch("empty report".into()));
    }
    let rate = serial.cost.events as f64 / serial.accumulator.time;
    Ok(rate * parrep.accumulator.time / parrep.cost.wall() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::label::{MetastableLabeler, SetLabeler};
    use crate::model::{ConstantObservable, ExplicitChain, ObservableSpec, PopulationState, StateFunction};

    fn cascade_labeler() -> MetastableLabeler {
        MetastableLabeler::new(vec![
            ObservableSpec::LinearCombination(vec![1.0, 1.0, 0.0]),
            ObservableSpec::Coordinate(2),
        ])
        .unwrap()
    }

    fn closed_chain() -> (ExplicitChain, SetLabeler) {
        let chain = ExplicitChain::from_rates(&[
            vec![0.0, 2.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        (chain, SetLabeler::new(3, &[&[0, 1], &[2]]).unwrap())
    }

    #[test]
    fn ctmc_decorrelation_in_closed_set_takes_t_c() {
        let (chain, l) = closed_chain();
        let obs = [ConstantObservable(1.0)];
        let p = Problem { dynamics: &chain, observables: &obs, labeler: &l };
        let mut x = 0;
        let acc = ParRepAccumulator::new(1);
        let d = decorrelate_ctmc(p, &mut x, 3.5, &acc, None, &mut RngStream::new(1, 1)).unwrap();
        assert_eq!(d.label, Some(0));
        assert!((d.increment.time - 3.5).abs() < 1e-12);
        assert_eq!(d.increment.integrals[0], d.increment.time);
        let d = decorrelate_ctmc(p, &mut x, 0.0, &acc, None, &mut RngStream::new(1, 1)).unwrap();
        assert_eq!((d.jumps, d.increment.time), (0, 0.0));
    }

    #[test]
    fn ctmc_decorrelation_stops_at_horizon() {
        let (chain, l) = closed_chain();
        let obs = [ConstantObservable(1.0)];
        let p = Problem { dynamics: &chain, observables: &obs, labeler: &l };
        let mut x = 0;
        let d = decorrelate_ctmc(p, &mut x, 10.0, &ParRepAccumulator::new(1), Some(2.0), &mut RngStream::new(1, 1))
            .unwrap();
        assert!(d.horizon_reached && d.label.is_none());
        assert_eq!(d.increment.time, 2.0);
    }

    #[test]
    fn embedded_decorrelation_counts_states() {
        let (chain, l) = closed_chain();
        let obs: [ConstantObservable; 0] = [];
        let p = Problem { dynamics: &chain, observables: &obs, labeler: &l };
        let acc = ParRepAccumulator::new(0);
        for (n_c, steps) in [(0, 0), (1, 0), (2, 1), (15, 14)] {
            let mut x = 0;
            let d = decorrelate_embedded(p, &mut x, n_c, &acc, None, &mut RngStream::new(1, 1)).unwrap();
            assert_eq!(d.increment.steps, steps, "n_c = {n_c}");
        }
        // state 2 leaves its singleton set at once, then settles in {0, 1}
        let mut x = 2;
        let d = decorrelate_embedded(p, &mut x, 3, &acc, None, &mut RngStream::new(1, 1)).unwrap();
        assert_eq!((d.label, d.increment.steps), (Some(0), 3));
    }

    #[test]
    fn cascade_first_label() {
        let net = fixtures::birth_conversion_death();
        let l = cascade_labeler();
        let obs: Vec<ObservableSpec> = fixtures::cascade_observables().into_iter().map(|o| o.1).collect();
        let p = Problem { dynamics: &net, observables: &obs, labeler: &l };
        // 0.01 time units at rate ~1500 rarely sees a slow reaction
        let mut hits = 0;
        for s in 0..20 {
            let mut x = PopulationState::new(vec![5, 10, 10]).unwrap();
            let d = decorrelate_ctmc(p, &mut x, 0.01, &ParRepAccumulator::new(3), None, &mut RngStream::new(s, 0))
                .unwrap();
            hits += usize::from(d.label.unwrap().to_string() == "(15,10)");
            let mut y = PopulationState::new(vec![5, 10, 10]).unwrap();
            let d = decorrelate_embedded(p, &mut y, 15, &ParRepAccumulator::new(3), None, &mut RngStream::new(s, 0))
                .unwrap();
            hits += usize::from(d.label.unwrap().to_string() == "(15,10)");
        }
        assert!(hits >= 36, "{hits}");
    }

    #[test]
    fn single_replica_stage_is_serial() {
        let chain = fixtures::two_exit_example();
        let l = SetLabeler::new(5, &[&fixtures::EXAMPLE_SET]).unwrap();
        let obs = [ConstantObservable(1.0)];
        let p = Problem { dynamics: &chain, observables: &obs, labeler: &l };
        let e = Executor::sequential();
        let streams = CycleStreams::new(3, 7);
        for chunk in [1, 5, 256] {
            let s = parallel_stage_embedded(p, &0, vec![1], streams, chunk, u64::MAX, &e).unwrap();
            // replay the same stream serially
            let mut rng = streams.stream(Role::Parallel, 0);
            let mut st = Stepper::new(&chain);
            let (mut x, mut n, mut t) = (1usize, 0u64, 0.0);
            while l.label(&x) == Some(0) {
                t += st.jump(&mut x, &mut rng).unwrap().0;
                n += 1;
            }
            assert_eq!(s.increment.steps, n);
            assert_eq!(s.increment.time, t);
            assert_eq!(s.increment.integrals[0], t);
            assert_eq!(s.exit_state, x);
            let c = parallel_stage_ctmc(p, &0, vec![1], streams, chunk, u64::MAX, &e).unwrap();
            assert_eq!(c.first_exit, t);
            assert_eq!(c.increment.time, t);
            assert_eq!(c.replica_events, vec![n]);
        }
    }

    #[test]
    fn stage_results_ignore_chunk_and_workers() {
        let chain = fixtures::two_exit_example();
        let l = SetLabeler::new(5, &[&fixtures::EXAMPLE_SET]).unwrap();
        let obs = [StateFunction::indicator(5, 0), StateFunction(vec![1.0, 2.0, 3.0, 0.0, 0.0])];
        let p = Problem { dynamics: &chain, observables: &obs, labeler: &l };
        let seq = Executor::sequential();
        let par = Executor::new(4).unwrap();
        for cycle in 0..30 {
            let streams = CycleStreams::new(11, cycle);
            let base = parallel_stage_ctmc(p, &0, vec![0, 1, 2, 1], streams, 1, u64::MAX, &seq).unwrap();
            let other = parallel_stage_ctmc(p, &0, vec![0, 1, 2, 1], streams, 64, u64::MAX, &par).unwrap();
            assert_eq!(base, other);
            let contribution = base.increment.time;
            assert!((contribution - 4.0 * base.first_exit).abs() == 0.0);
            let base = parallel_stage_embedded(p, &0, vec![0, 1, 2, 1], streams, 1, u64::MAX, &seq).unwrap();
            let other = parallel_stage_embedded(p, &0, vec![0, 1, 2, 1], streams, 64, u64::MAX, &par).unwrap();
            assert_eq!(base, other);
            let n = base.first_exit as u64;
            assert_eq!(base.increment.steps, 4 * (n - 1) + base.winner as u64 + 1);
            assert!(!l.contains(&0, &base.exit_state));
        }
    }

    #[test]
    fn sample_outside_set_is_rejected() {
        let chain = fixtures::two_exit_example();
        let l = SetLabeler::new(5, &[&fixtures::EXAMPLE_SET]).unwrap();
        let obs: [ConstantObservable; 0] = [];
        let p = Problem { dynamics: &chain, observables: &obs, labeler: &l };
        let e = Executor::sequential();
        assert!(parallel_stage_embedded(p, &0, vec![0, 3], CycleStreams::new(1, 1), 8, 100, &e).is_err());
        assert!(parallel_stage_ctmc(p, &0, vec![4], CycleStreams::new(1, 1), 8, 100, &e).is_err());
    }

    #[test]
    fn short_horizon_is_one_decorrelation() {
        let net = fixtures::birth_conversion_death();
        let l = cascade_labeler();
        let obs: Vec<ObservableSpec> = fixtures::cascade_observables().into_iter().map(|o| o.1).collect();
        let p = Problem { dynamics: &net, observables: &obs, labeler: &l };
        let x0 = PopulationState::new(vec![5, 10, 10]).unwrap();
        let r = run_ctmc_parrep(p, &x0, &Settings::ctmc(4, 1.0, 0.01, 0.001, 1), &Executor::sequential()).unwrap();
        assert_eq!(r.cycles.len(), 1);
        assert_eq!(r.accumulator.time, 0.001);
    }

    #[test]
    fn runs_are_reproducible_and_clock_is_exact() {
        let net = fixtures::birth_conversion_death();
        let l = cascade_labeler();
        let mut obs: Vec<ObservableSpec> = fixtures::cascade_observables().into_iter().map(|o| o.1).collect();
        obs.push(ObservableSpec::Constant(1.0));
        let p = Problem { dynamics: &net, observables: &obs, labeler: &l };
        let x0 = PopulationState::new(vec![5, 10, 10]).unwrap();
        let s = Settings::embedded(6, 15, 15, DephasingKind::FlemingViot, Horizon::Time(30.0), 9);
        let a = run_embedded_parrep(p, &x0, &s, &Executor::sequential()).unwrap();
        let b = run_embedded_parrep(p, &x0, &s, &Executor::new(3).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.accumulator.integrals[3].to_bits(), a.accumulator.time.to_bits());
        assert!(a.accumulator.time >= 30.0);
        let s = Settings::ctmc(6, 0.01, 0.01, 30.0, 9);
        let a = run_ctmc_parrep(p, &x0, &s, &Executor::sequential()).unwrap();
        let b = run_ctmc_parrep(p, &x0, &s, &Executor::new(2).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.cycles.len() > 3);
    }

    #[test]
    fn mismatched_reports() {
        let chain = fixtures::two_exit_example();
        let obs = [ConstantObservable(1.0)];
        let mut a = run_ssa(&chain, &obs, &0, 10.0, 1).unwrap();
        let b = a.clone();
        assert!(virtual_speedup(&a, &b).unwrap() > 0.0);
        a.model = "other".into();
        assert!(matches!(virtual_speedup(&a, &b), Err(Error::Mismatch(_))));
    }

    #[test]
    fn settings_must_match_algorithm() {
        let chain = fixtures::two_exit_example();
        let l = SetLabeler::new(5, &[&fixtures::EXAMPLE_SET]).unwrap();
        let obs: [ConstantObservable; 0] = [];
        let p = Problem { dynamics: &chain, observables: &obs, labeler: &l };
        let e = Executor::sequential();
        let emb = Settings::embedded(2, 5, 5, DephasingKind::Rejection, Horizon::Steps(100), 1);
        assert!(run_ctmc_parrep(p, &0, &emb, &e).is_err());
        let mut fv = Settings::ctmc(2, 1.0, 1.0, 10.0, 1);
        fv.dephaser = DephasingKind::FlemingViot;
        assert!(run_ctmc_parrep(p, &0, &fv, &e).is_err());
    }
}
