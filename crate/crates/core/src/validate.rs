//! Statistical checks of the oracle and the engines on small explicit
//! chains.
//!
//! Every check compares a Monte-Carlo statistic with a value from the
//! linear-algebra oracle and reports the statistic, the threshold and the
//! verdict. Stages are sampled from the exact quasi-stationary laws, so the
//! checks isolate the parallel stage from dephasing error.

use std::fmt;

use crate::engine::{parallel_stage_ctmc, parallel_stage_embedded, ParallelStage, Problem, DEFAULT_CHUNK};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::fixtures;
use crate::label::SetLabeler;
use crate::model::{ExplicitChain, StateFunction};
use crate::oracle::{
    classify, conditional_law_ctmc, conditional_law_dtmc, expected_exit_steps, expected_exit_time,
    expected_exit_times, expected_occupation, qsd_ctmc, qsd_dtmc, tv_distance, Criteria, MetastableSet,
    QsdSolution, Start,
};
use crate::rng::{CycleStreams, RngStream, Role};
use crate::ssa::Stepper;
use crate::stats::{
    chi_square_gof, chi_square_independence, integer_bins, ks_one_sample, ks_two_sample, mean_se,
};

/// Which way a statistic has to fall relative to its threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    AtLeast,
    AtMost,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    /// Acceptance criterion the check belongs to.
    pub criterion: u8,
    pub statistic: f64,
    pub bound: Bound,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckResult {
    pub fn new(criterion: u8, name: impl Into<String>, statistic: f64, bound: Bound, threshold: f64) -> Self {
        let pass = match bound {
            Bound::AtLeast => statistic >= threshold,
            Bound::AtMost => statistic <= threshold,
        };
        CheckResult {
            name: name.into(),
            criterion,
            statistic,
            bound,
            threshold,
            pass,
        }
    }

    pub fn flag(criterion: u8, name: impl Into<String>, ok: bool) -> Self {
        Self::new(criterion, name, f64::from(u8::from(ok)), Bound::AtLeast, 1.0)
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::AtLeast => ">=",
            Bound::AtMost => "<=",
        };
        write!(
            f,
            "{} [{}] {}: {:.6e} {op} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.statistic,
            self.threshold
        )
    }
}

/// Reference eigenvalues of the two four-state examples. Overriding one
/// (for instance to inject a fault) changes only the eigenvalue checks.
#[derive(Clone, Debug, PartialEq)]
pub struct References {
    pub eps: f64,
    values: Vec<(&'static str, f64)>,
}

impl Default for References {
    fn default() -> Self {
        let eps = 1e-3;
        References {
            eps,
            values: vec![
                ("ex1.sigma1", 0.81),
                ("ex1.sigma2", 0.5),
                ("ex1.lambda1", -eps / 2.0),
                ("ex1.lambda2", -0.5),
                ("ex2.sigma1", 1.0 - eps / 5.0),
                ("ex2.sigma2", std::f64::consts::FRAC_1_SQRT_2),
                ("ex2.lambda1", -0.2),
                ("ex2.lambda2", -1.5 / eps),
            ],
        }
    }
}

impl References {
    pub fn names(&self) -> Vec<&'static str> {
        self.values.iter().map(|(n, _)| *n).collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match self.values.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => {
                slot.1 = value;
                Ok(())
            }
            None => Err(Error::Input(format!(
                "unknown reference `{name}`; known: {}",
                self.names().join(", ")
            ))),
        }
    }

    /// Applies `name=value`.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (name, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Input(format!("expected name=value, got `{assignment}`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Input(format!("invalid number in `{assignment}`")))?;
        self.set(name.trim(), value)
    }
}

#[derive(Clone, Debug)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Smaller samples and looser thresholds.
    pub quick: bool,
    pub references: References,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            seed: 1,
            quick: false,
            references: References::default(),
        }
    }
}

impl ValidateOptions {
    fn samples(&self) -> usize {
        if self.quick {
            2_000
        } else {
            10_000
        }
    }

    fn cycles(&self) -> usize {
        if self.quick {
            20_000
        } else {
            100_000
        }
    }

    fn significance(&self) -> f64 {
        if self.quick {
            0.001
        } else {
            0.01
        }
    }

    fn sigmas(&self) -> f64 {
        if self.quick {
            4.0
        } else {
            3.0
        }
    }

    /// Independent master seed per check.
    fn seed_for(&self, check: u64) -> u64 {
        self.seed ^ check.wrapping_mul(0x9e37_79b9_7f4a_7c15)
    }
}

/// An explicit chain with `W` and its oracle quantities.
struct Fixture {
    chain: ExplicitChain,
    w: MetastableSet,
    labeler: SetLabeler,
    nu: QsdSolution,
    mu: QsdSolution,
}

impl Fixture {
    fn new(chain: ExplicitChain) -> Result<Self> {
        let w = MetastableSet::new(&chain, &fixtures::EXAMPLE_SET)?;
        let labeler = SetLabeler::new(chain.len(), &[&fixtures::EXAMPLE_SET])?;
        Ok(Fixture {
            nu: qsd_ctmc(&w)?,
            mu: qsd_dtmc(&w)?,
            chain,
            w,
            labeler,
        })
    }

    fn draw(&self, law: &QsdSolution, rng: &mut RngStream) -> usize {
        self.w.members()[rng.categorical(&law.distribution)]
    }

    fn draws(&self, law: &QsdSolution, n: usize, rng: &mut RngStream) -> Vec<usize> {
        (0..n).map(|_| self.draw(law, rng)).collect()
    }
}

/// Exit time, exit step count and exit state of a serial trajectory.
fn serial_exit(f: &Fixture, mut x: usize, rng: &mut RngStream) -> Result<(f64, u64, usize)> {
    let mut stepper = Stepper::new(&f.chain);
    let (mut t, mut n) = (0.0, 0);
    while f.w.contains(x) {
        t += stepper.jump(&mut x, rng)?.0;
        n += 1;
    }
    Ok((t, n, x))
}

/// Like [`serial_exit`] but without holding times.
fn serial_exit_steps(f: &Fixture, mut x: usize, rng: &mut RngStream) -> Result<(u64, usize)> {
    let mut stepper = Stepper::new(&f.chain);
    let mut n = 0;
    while f.w.contains(x) {
        stepper.step(&mut x, rng)?;
        n += 1;
    }
    Ok((n, x))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Engine {
    Ctmc,
    Embedded,
}

/// `count` parallel stages with `replicas` replicas started from the exact
/// QSD of the engine's clock, one cycle stream per stage.
fn stages(
    f: &Fixture,
    engine: Engine,
    replicas: usize,
    observable: &StateFunction,
    count: usize,
    seed: u64,
    exec: &Executor,
) -> Result<Vec<ParallelStage<usize>>> {
    let obs = std::slice::from_ref(observable);
    let p = Problem {
        dynamics: &f.chain,
        observables: obs,
        labeler: &f.labeler,
    };
    let law = match engine {
        Engine::Ctmc => &f.nu,
        Engine::Embedded => &f.mu,
    };
    let seq = Executor::sequential();
    exec.map(count, |i| {
        let mut rng = RngStream::for_role(seed, i as u64, Role::Check, 0);
        let samples = f.draws(law, replicas, &mut rng);
        let streams = CycleStreams::new(seed, i as u64);
        match engine {
            Engine::Ctmc => parallel_stage_ctmc(p, &0, samples, streams, DEFAULT_CHUNK, u64::MAX, &seq),
            Engine::Embedded => parallel_stage_embedded(p, &0, samples, streams, DEFAULT_CHUNK, u64::MAX, &seq),
        }
    })
    .into_iter()
    .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rel_err(x: f64, reference: f64) -> f64 {
    ((x - reference) / reference).abs()
}

/// Eigenvalues and classification of the two four-state examples.
pub fn eigen_checks(refs: &References) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let eps = refs.eps;
    for (tag, chain, verdict) in [
        ("ex1", fixtures::ctmc_metastable_example(eps), (true, false)),
        ("ex2", fixtures::dtmc_metastable_example(eps), (false, true)),
    ] {
        let w = MetastableSet::new(&chain, &fixtures::EXAMPLE_SET)?;
        let nu = qsd_ctmc(&w)?;
        let mu = qsd_dtmc(&w)?;
        let computed = [
            ("sigma1", mu.dominant),
            ("sigma2", mu.subdominant.map_or(f64::NAN, |s| s.norm())),
            ("lambda1", nu.dominant),
            ("lambda2", nu.subdominant.map_or(f64::NAN, |l| l.re)),
        ];
        for (what, value) in computed {
            let name = format!("{tag}.{what}");
            let reference = refs.get(&name).expect("known reference");
            out.push(CheckResult::new(
                3,
                format!("eigen {name} = {value:.6} vs {reference:.6} (relative error)"),
                rel_err(value, reference),
                Bound::AtMost,
                0.05,
            ));
        }
        let c = classify(&w, &Criteria::default())?;
        out.push(CheckResult::flag(
            3,
            format!(
                "classification {tag}: ctmc {} dtmc {}, expected ctmc {} dtmc {}",
                c.ctmc, c.dtmc, verdict.0, verdict.1
            ),
            (c.ctmc, c.dtmc) == verdict,
        ));
    }
    Ok(out)
}

fn geometric_pmf(sigma1: f64) -> impl Fn(u64) -> f64 {
    move |k| (1.0 - sigma1) * sigma1.powi(k as i32 - 1)
}

/// Upper bin edges at the quartiles of `Exp(rate)`.
fn exp_quartiles(rate: f64) -> [f64; 3] {
    [0.25f64, 0.5, 0.75].map(|q| -(1.0 - q).ln() / rate)
}

fn bin_of(edges: &[f64], v: f64) -> usize {
    edges.iter().take_while(|&&e| v > e).count()
}

/// Quartile edges of a geometric law on `{1, 2, ...}`, deduplicated.
fn geometric_quartiles(sigma1: f64) -> Vec<f64> {
    let mut edges: Vec<f64> = [0.25f64, 0.5, 0.75]
        .iter()
        .map(|q| ((1.0 - q).ln() / sigma1.ln()).ceil().max(1.0))
        .collect();
    edges.dedup();
    edges
}

fn contingency(rows: &[usize], cols: &[usize], nrows: usize, ncols: usize) -> Vec<Vec<u64>> {
    let mut t = vec![vec![0u64; ncols]; nrows];
    for (&r, &c) in rows.iter().zip(cols) {
        t[r][c] += 1;
    }
    t
}

/// Exit laws of the serial chain and of the parallel stages.
pub fn exit_law_checks(opts: &ValidateOptions, exec: &Executor) -> Result<Vec<CheckResult>> {
    let n = opts.samples();
    let sig = opts.significance();
    let ex1 = Fixture::new(fixtures::ctmc_metastable_example(1e-3))?;
    let two = Fixture::new(fixtures::two_exit_example())?;
    let mut out = Vec::new();

    // exit time from nu is Exp(-lambda1)
    let seed = opts.seed_for(1);
    let runs: Vec<(f64, u64, usize)> = exec
        .map(n, |i| {
            let mut rng = RngStream::for_role(seed, i as u64, Role::Check, 0);
            let x = ex1.draw(&ex1.nu, &mut rng);
            serial_exit(&ex1, x, &mut rng)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let rate = -ex1.nu.dominant;
    let t1: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let ks = ks_one_sample(&t1, |t| 1.0 - (-rate * t).exp())?;
    out.push(CheckResult::new(4, "exit time from nu ~ Exp(-lambda1), KS p-value", ks.p_value, Bound::AtLeast, sig));

    // exit step count from mu is Geometric(1 - sigma1)
    let seed = opts.seed_for(2);
    let steps: Vec<u64> = exec
        .map(n, |i| {
            let mut rng = RngStream::for_role(seed, i as u64, Role::Check, 0);
            let x = ex1.draw(&ex1.mu, &mut rng);
            serial_exit_steps(&ex1, x, &mut rng).map(|r| r.0)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let (counts, probs) = integer_bins(&steps, geometric_pmf(ex1.mu.dominant));
    let chi = chi_square_gof(&counts, &probs)?;
    out.push(CheckResult::new(
        4,
        "exit step count from mu ~ Geometric(1 - sigma1), chi-square p-value",
        chi.p_value,
        Bound::AtLeast,
        sig,
    ));

    // exit state independent of exit time / step count (two exit targets)
    let seed = opts.seed_for(3);
    let runs: Vec<(f64, u64, usize)> = exec
        .map(n, |i| {
            let mut rng = RngStream::for_role(seed, i as u64, Role::Check, 0);
            let x = two.draw(&two.nu, &mut rng);
            serial_exit(&two, x, &mut rng)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let edges = exp_quartiles(-two.nu.dominant);
    let tbins: Vec<usize> = runs.iter().map(|r| bin_of(&edges, r.0)).collect();
    let exits: Vec<usize> = runs.iter().map(|r| r.2 - 3).collect();
    let chi = chi_square_independence(&contingency(&exits, &tbins, 2, 4))?;
    out.push(CheckResult::new(
        4,
        "exit state independent of exit time, chi-square p-value",
        chi.p_value,
        Bound::AtLeast,
        sig,
    ));
    let seed = opts.seed_for(4);
    let runs: Vec<(u64, usize)> = exec
        .map(n, |i| {
            let mut rng = RngStream::for_role(seed, i as u64, Role::Check, 0);
            let x = two.draw(&two.mu, &mut rng);
            serial_exit_steps(&two, x, &mut rng)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let edges = geometric_quartiles(two.mu.dominant);
    let nbins: Vec<usize> = runs.iter().map(|r| bin_of(&edges, r.0 as f64)).collect();
    let exits: Vec<usize> = runs.iter().map(|r| r.1 - 3).collect();
    let chi = chi_square_independence(&contingency(&exits, &nbins, 2, edges.len() + 1))?;
    out.push(CheckResult::new(
        4,
        "exit state independent of exit step count, chi-square p-value",
        chi.p_value,
        Bound::AtLeast,
        sig,
    ));

    // R T* has the law of T^1
    let ind = StateFunction::indicator(ex1.chain.len(), 0);
    let st = stages(&ex1, Engine::Ctmc, 4, &ind, n, opts.seed_for(5), exec)?;
    let rt: Vec<f64> = st.iter().map(|s| s.increment.time).collect();
    let ks = ks_two_sample(&rt, &t1)?;
    out.push(CheckResult::new(4, "R T* vs T^1 (R = 4), two-sample KS p-value", ks.p_value, Bound::AtLeast, sig));

    // R (N* - 1) + K is Geometric(1 - sigma1)
    let st = stages(&ex1, Engine::Embedded, 4, &ind, n, opts.seed_for(6), exec)?;
    let steps: Vec<u64> = st.iter().map(|s| s.increment.steps).collect();
    let (counts, probs) = integer_bins(&steps, geometric_pmf(ex1.mu.dominant));
    let chi = chi_square_gof(&counts, &probs)?;
    out.push(CheckResult::new(
        5,
        "R (N* - 1) + K ~ Geometric(1 - sigma1) (R = 4), chi-square p-value",
        chi.p_value,
        Bound::AtLeast,
        sig,
    ));

    // exit state of the stage: same law for R = 1 and R = 4, independent of
    // the stage clock
    let ind2 = StateFunction::indicator(two.chain.len(), 0);
    for (engine, tag, check) in [(Engine::Embedded, "embedded", 7), (Engine::Ctmc, "ctmc", 9)] {
        let one = stages(&two, engine, 1, &ind2, n, opts.seed_for(check), exec)?;
        let four = stages(&two, engine, 4, &ind2, n, opts.seed_for(check + 1), exec)?;
        let mut rows = vec![0usize; n];
        rows.extend(std::iter::repeat_n(1, n));
        let cols: Vec<usize> = one.iter().chain(&four).map(|s| s.exit_state - 3).collect();
        let chi = chi_square_independence(&contingency(&rows, &cols, 2, 2))?;
        out.push(CheckResult::new(
            5,
            format!("{tag} stage exit state, same law for R = 1 and R = 4, chi-square p-value"),
            chi.p_value,
            Bound::AtLeast,
            sig,
        ));
        let exits: Vec<usize> = four.iter().map(|s| s.exit_state - 3).collect();
        let (edges, clock): (Vec<f64>, Vec<f64>) = match engine {
            Engine::Embedded => (
                geometric_quartiles(two.mu.dominant),
                four.iter().map(|s| s.increment.steps as f64).collect(),
            ),
            Engine::Ctmc => (
                exp_quartiles(-two.nu.dominant).to_vec(),
                four.iter().map(|s| s.increment.time).collect(),
            ),
        };
        let bins: Vec<usize> = clock.iter().map(|&v| bin_of(&edges, v)).collect();
        let chi = chi_square_independence(&contingency(&exits, &bins, 2, edges.len() + 1))?;
        out.push(CheckResult::new(
            5,
            format!("{tag} stage exit state independent of stage clock (R = 4), chi-square p-value"),
            chi.p_value,
            Bound::AtLeast,
            sig,
        ));
    }
    Ok(out)
}

/// Mean parallel-stage contribution of an indicator against the oracle.
pub fn unbiasedness_checks(opts: &ValidateOptions, exec: &Executor) -> Result<Vec<CheckResult>> {
    let n = opts.samples();
    let k = opts.sigmas();
    let ex1 = Fixture::new(fixtures::ctmc_metastable_example(1e-3))?;
    let f = StateFunction::indicator(ex1.chain.len(), 0);
    let f_w: Vec<f64> = ex1.w.members().iter().map(|&x| f.0[x]).collect();
    let nu_f = dot(&ex1.nu.distribution, &f_w);
    let ctmc_target = nu_f * expected_exit_time(&ex1.w, Start::Distribution(&ex1.nu.distribution))?;
    let mu_f_q: f64 = ex1
        .mu
        .distribution
        .iter()
        .zip(&f_w)
        .zip(ex1.w.jump_rates())
        .map(|((p, v), q)| p * v / q)
        .sum();
    let steps = expected_exit_steps(&ex1.w)?;
    let mean_steps = dot(&ex1.mu.distribution, &steps);
    let embedded_target = mu_f_q * mean_steps;
    let mut out = Vec::new();
    for (engine, tag, target) in [
        (Engine::Ctmc, "ctmc: nu(f) E[T]", ctmc_target),
        (Engine::Embedded, "embedded: mu(f/q) E[N]", embedded_target),
    ] {
        for r in [1usize, 4] {
            let check = 20 + r as u64 + if engine == Engine::Ctmc { 0 } else { 10 };
            let st = stages(&ex1, engine, r, &f, n, opts.seed_for(check), exec)?;
            let xs: Vec<f64> = st.iter().map(|s| s.increment.integrals[0]).collect();
            let (m, se) = mean_se(&xs);
            out.push(CheckResult::new(
                6,
                format!("{tag} = {target:.6}, mean {m:.6} (R = {r}), |error| / SE"),
                (m - target).abs() / se,
                Bound::AtMost,
                k,
            ));
        }
    }
    Ok(out)
}

/// Decorrelation thresholds for the one-cycle error checks.
pub const DECAY_THRESHOLDS: [u64; 4] = [2, 5, 10, 20];
const DECAY_REPLICAS: usize = 4;

/// One ParRep cycle on the first example, stopped at the first exit from
/// `W`: serial decorrelation, then (if still inside) a parallel stage from
/// the exact QSD. Returns the cycle's contribution to `F(f)`.
fn one_cycle(
    f: &Fixture,
    engine: Engine,
    start: usize,
    threshold: u64,
    obs: &StateFunction,
    seed: u64,
    i: u64,
) -> Result<f64> {
    let mut rng = RngStream::for_role(seed, i, Role::Trajectory, 0);
    let mut stepper = Stepper::new(&f.chain);
    let mut x = start;
    let mut total = 0.0;
    match engine {
        Engine::Ctmc => {
            let mut t = 0.0;
            let t_c = threshold as f64;
            loop {
                let dt = stepper.holding(&x, &mut rng)?;
                if t + dt >= t_c {
                    total += obs.0[x] * (t_c - t);
                    break;
                }
                total += obs.0[x] * dt;
                t += dt;
                stepper.complete(&mut x, &mut rng)?;
                if !f.w.contains(x) {
                    return Ok(total);
                }
            }
        }
        Engine::Embedded => {
            // the stage ends after n_c - 1 steps, with n_c states in W
            for _ in 1..threshold {
                let here = x;
                let (dt, _) = stepper.jump(&mut x, &mut rng)?;
                total += obs.0[here] * dt;
                if !f.w.contains(x) {
                    return Ok(total);
                }
            }
        }
    }
    let law = match engine {
        Engine::Ctmc => &f.nu,
        Engine::Embedded => &f.mu,
    };
    let mut draw = RngStream::for_role(seed, i, Role::Check, 0);
    let samples = f.draws(law, DECAY_REPLICAS, &mut draw);
    let p = Problem {
        dynamics: &f.chain,
        observables: std::slice::from_ref(obs),
        labeler: &f.labeler,
    };
    let streams = CycleStreams::new(seed, i);
    let seq = Executor::sequential();
    let stage = match engine {
        Engine::Ctmc => parallel_stage_ctmc(p, &0, samples, streams, DEFAULT_CHUNK, u64::MAX, &seq)?,
        Engine::Embedded => parallel_stage_embedded(p, &0, samples, streams, DEFAULT_CHUNK, u64::MAX, &seq)?,
    };
    Ok(total + stage.increment.integrals[0])
}

/// One-cycle error against the serial expectation, for each decorrelation
/// threshold: a trend check and a bound check per threshold.
pub fn decay_checks(opts: &ValidateOptions, exec: &Executor) -> Result<Vec<CheckResult>> {
    let ex1 = Fixture::new(fixtures::ctmc_metastable_example(1e-3))?;
    let f = StateFunction::indicator(ex1.chain.len(), 0);
    let f_w: Vec<f64> = ex1.w.members().iter().map(|&x| f.0[x]).collect();
    let u = expected_occupation(&ex1.w, &f_w)?;
    let sup_t = expected_exit_times(&ex1.w)?.into_iter().fold(0.0, f64::max);
    let k = opts.sigmas();
    let n = opts.cycles();
    let mut out = Vec::new();
    for (engine, tag, start) in [(Engine::Embedded, "embedded", 2usize), (Engine::Ctmc, "ctmc", 0usize)] {
        let serial = u[ex1.w.position(start).expect("start in W")];
        let mut errs = Vec::new();
        for (j, &c) in DECAY_THRESHOLDS.iter().enumerate() {
            let seed = opts.seed_for(40 + j as u64 + if engine == Engine::Ctmc { 10 } else { 0 });
            let xs: Vec<f64> = exec
                .map(n, |i| one_cycle(&ex1, engine, start, c, &f, seed, i as u64))
                .into_iter()
                .collect::<Result<_>>()?;
            let (m, se) = mean_se(&xs);
            let err = (m - serial).abs();
            let (law, survival) = match engine {
                Engine::Embedded => conditional_law_dtmc(&ex1.w, start, c.saturating_sub(1))?,
                Engine::Ctmc => conditional_law_ctmc(&ex1.w, start, c as f64)?,
            };
            let target = match engine {
                Engine::Embedded => &ex1.mu.distribution,
                Engine::Ctmc => &ex1.nu.distribution,
            };
            let bound = sup_t * tv_distance(&law, target);
            let exact = survival * (dot(target, &u) - dot(&law, &u));
            out.push(CheckResult::new(
                7,
                format!(
                    "{tag} one-cycle error at threshold {c}: measured {:.3e} vs exact {exact:.3e}, |difference| / SE",
                    m - serial
                ),
                (m - serial - exact).abs() / se,
                Bound::AtMost,
                k,
            ));
            out.push(CheckResult::new(
                7,
                format!(
                    "{tag} one-cycle error at threshold {c}: |{m:.5} - {serial:.5}| = {err:.2e} \
                     vs bound {bound:.2e}, (error - bound) / SE"
                ),
                (err - bound) / se,
                Bound::AtMost,
                k,
            ));
            errs.push((err, se));
        }
        let worst = errs
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) / (w[0].1.hypot(w[1].1)))
            .fold(f64::NEG_INFINITY, f64::max);
        let listed: Vec<String> = errs.iter().map(|e| format!("{:.2e}", e.0)).collect();
        out.push(CheckResult::new(
            7,
            format!(
                "{tag} one-cycle error non-increasing over {:?}: [{}], largest rise / joint SE",
                DECAY_THRESHOLDS,
                listed.join(", ")
            ),
            worst,
            Bound::AtMost,
            k,
        ));
    }
    Ok(out)
}

/// The whole suite in criterion order.
pub fn run_suite(opts: &ValidateOptions, exec: &Executor) -> Result<Vec<CheckResult>> {
    let mut out = eigen_checks(&opts.references)?;
    out.extend(exit_law_checks(opts, exec)?);
    out.extend(unbiasedness_checks(opts, exec)?);
    out.extend(decay_checks(opts, exec)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_checks_pass_and_detect_faults() {
        let refs = References::default();
        assert!(eigen_checks(&refs).unwrap().iter().all(|c| c.pass));
        let mut bad = refs.clone();
        bad.apply("ex1.sigma1 = 0.891").unwrap();
        let failed: Vec<_> = eigen_checks(&bad).unwrap().into_iter().filter(|c| !c.pass).collect();
        assert_eq!(failed.len(), 1);
        assert!(failed[0].name.contains("ex1.sigma1"));
        assert!(bad.apply("nope=1").is_err());
    }

    #[test]
    fn quartile_bins() {
        let e = exp_quartiles(1.0);
        assert_eq!(bin_of(&e, 0.0), 0);
        assert_eq!(bin_of(&e, 10.0), 3);
        let g = geometric_quartiles(0.5);
        assert_eq!(g, vec![1.0, 2.0]);
    }

    #[test]
    fn one_cycle_with_zero_threshold_is_a_stage() {
        let ex1 = Fixture::new(fixtures::ctmc_metastable_example(1e-3)).unwrap();
        let f = StateFunction::indicator(4, 0);
        let v = one_cycle(&ex1, Engine::Embedded, 2, 1, &f, 3, 0).unwrap();
        assert!(v >= 0.0);
    }
}
