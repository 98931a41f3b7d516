//! Dephasing: `R` approximately independent samples from the QSD of a set.

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::label::Labeler;
use crate::model::Dynamics;
use crate::rng::{CycleStreams, RngStream, Role};
use crate::ssa::Stepper;

/// How long a replica must stay inside the set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Span {
    /// Continuous time, summing holding times.
    Time(f64),
    /// Embedded-chain steps.
    Steps(u64),
}

impl Span {
    fn validate(self) -> Result<Self> {
        match self {
            Span::Time(t) if !(t >= 0.0 && t.is_finite()) => {
                Err(Error::Input(format!("dephasing time must be non-negative, got {t}")))
            }
            s => Ok(s),
        }
    }
}

/// Default cap on jumps simulated by one rejection replica.
pub const DEFAULT_JUMP_BUDGET: u64 = 1_000_000;
/// Default cap on full Fleming-Viot ensemble restarts.
pub const DEFAULT_ENSEMBLE_RESTARTS: u64 = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct DephaseOutcome<S> {
    pub states: Vec<S>,
    /// Events simulated by each replica, rejected attempts included.
    pub work: Vec<u64>,
    /// Rejections (rejection sampler) or redistributions (Fleming-Viot).
    pub restarts: u64,
    /// Times every Fleming-Viot particle died in the same epoch.
    pub ensemble_restarts: u64,
    /// Epochs in which the coordinator had to resolve at least one exit.
    pub coordinator_epochs: u64,
}

impl<S> DephaseOutcome<S> {
    /// Synchronous wall-clock proxy: slowest replica plus coordinator epochs.
    pub fn wall_cost(&self) -> u64 {
        self.work.iter().copied().max().unwrap_or(0) + self.coordinator_epochs
    }

    pub fn total_work(&self) -> u64 {
        self.work.iter().sum()
    }
}

fn check_seed<S, L: Labeler<S>>(labeler: &L, label: &L::Label, x: &S) -> Result<()>
where
    S: std::fmt::Debug,
{
    if labeler.contains(label, x) {
        Ok(())
    } else {
        Err(Error::Input(format!("seed {x:?} is not in set {label}")))
    }
}

/// Every replica runs from `seed` and is sent back to `seed` whenever it
/// leaves the set before completing `span`.
#[allow(clippy::too_many_arguments)]
pub fn rejection_dephase<D, L>(
    dynamics: &D,
    labeler: &L,
    label: &L::Label,
    seed: &D::State,
    replicas: usize,
    span: Span,
    streams: CycleStreams,
    budget: u64,
    exec: &Executor,
) -> Result<DephaseOutcome<D::State>>
where
    D: Dynamics,
    L: Labeler<D::State>,
{
    if replicas == 0 {
        return Err(Error::Input("at least one replica is required".into()));
    }
    let span = span.validate()?;
    check_seed(labeler, label, seed)?;
    let runs = exec.map(replicas, |r| {
        let mut rng = streams.stream(Role::Dephase, r as u64);
        rejection_one(dynamics, labeler, label, seed, span, budget, &mut rng).map_err(|e| match e {
            Error::BudgetExceeded { what, budget, detail } => Error::BudgetExceeded {
                what,
                budget,
                detail: format!("replica {r}: {detail}"),
            },
            e => e,
        })
    });
    let mut out = DephaseOutcome {
        states: Vec::with_capacity(replicas),
        work: Vec::with_capacity(replicas),
        restarts: 0,
        ensemble_restarts: 0,
        coordinator_epochs: 0,
    };
    for run in runs {
        let (x, work, restarts) = run?;
        out.states.push(x);
        out.work.push(work);
        out.restarts += restarts;
    }
    Ok(out)
}

fn rejection_one<D, L>(
    d: &D,
    labeler: &L,
    label: &L::Label,
    seed: &D::State,
    span: Span,
    budget: u64,
    rng: &mut RngStream,
) -> Result<(D::State, u64, u64)>
where
    D: Dynamics,
    L: Labeler<D::State>,
{
    let mut stepper = Stepper::new(d);
    let mut x = seed.clone();
    let mut work = 0u64;
    let mut restarts = 0u64;
    let over = |restarts: u64| Error::BudgetExceeded {
        what: "dephasing jumps",
        budget,
        detail: format!("{restarts} rejections, the set may not be metastable"),
    };
    match span {
        Span::Steps(n) => {
            let mut k = 0;
            while k < n {
                if work >= budget {
                    return Err(over(restarts));
                }
                stepper.step(&mut x, rng)?;
                work += 1;
                if labeler.contains(label, &x) {
                    k += 1;
                } else {
                    restarts += 1;
                    x = seed.clone();
                    k = 0;
                }
            }
        }
        Span::Time(t) => {
            let mut s = 0.0;
            loop {
                if work >= budget {
                    return Err(over(restarts));
                }
                let dt = stepper.holding(&x, rng)?;
                work += 1;
                if s + dt >= t {
                    break;
                }
                stepper.complete(&mut x, rng)?;
                s += dt;
                if !labeler.contains(label, &x) {
                    restarts += 1;
                    x = seed.clone();
                    s = 0.0;
                }
            }
        }
    }
    Ok((x, work, restarts))
}

struct Particle<'a, D: Dynamics> {
    x: D::State,
    rng: RngStream,
    stepper: Stepper<'a, D>,
    work: u64,
}

/// Interacting particle sampler. Particles advance one embedded step per
/// epoch; a particle that leaves the set takes over the post-epoch state of
/// a uniformly chosen survivor. When every particle leaves in the same epoch
/// the ensemble restarts from `seeds`.
#[allow(clippy::too_many_arguments)]
pub fn fleming_viot_dephase<D, L>(
    dynamics: &D,
    labeler: &L,
    label: &L::Label,
    seeds: &[D::State],
    steps: u64,
    streams: CycleStreams,
    max_ensemble_restarts: u64,
    exec: &Executor,
) -> Result<DephaseOutcome<D::State>>
where
    D: Dynamics,
    L: Labeler<D::State>,
{
    if seeds.len() < 2 {
        return Err(Error::Input("Fleming-Viot needs at least two replicas".into()));
    }
    for x in seeds {
        check_seed(labeler, label, x)?;
    }
    let mut coordinator = streams.stream(Role::Coordinator, 0);
    let mut particles: Vec<Particle<'_, D>> = seeds
        .iter()
        .enumerate()
        .map(|(r, x)| Particle {
            x: x.clone(),
            rng: streams.stream(Role::Dephase, r as u64),
            stepper: Stepper::new(dynamics),
            work: 0,
        })
        .collect();
    let mut restarts = 0;
    let mut ensemble_restarts = 0;
    let mut coordinator_epochs = 0;
    let mut epoch = 0;
    let mut survivors = Vec::with_capacity(seeds.len());
    while epoch < steps {
        let alive = exec.map_mut(&mut particles, |_, p| {
            p.stepper.step(&mut p.x, &mut p.rng)?;
            p.work += 1;
            Ok::<_, Error>(labeler.contains(label, &p.x))
        });
        survivors.clear();
        for (r, a) in alive.into_iter().enumerate() {
            if a? {
                survivors.push(r);
            }
        }
        if survivors.len() == particles.len() {
            epoch += 1;
            continue;
        }
        coordinator_epochs += 1;
        if survivors.is_empty() {
            ensemble_restarts += 1;
            if ensemble_restarts > max_ensemble_restarts {
                return Err(Error::BudgetExceeded {
                    what: "Fleming-Viot ensemble restarts",
                    budget: max_ensemble_restarts,
                    detail: format!("all {} particles left together", particles.len()),
                });
            }
            for (p, x) in particles.iter_mut().zip(seeds) {
                p.x = x.clone();
            }
            epoch = 0;
            continue;
        }
        for r in 0..particles.len() {
            if survivors.binary_search(&r).is_err() {
                let donor = survivors[coordinator.below(survivors.len())];
                particles[r].x = particles[donor].x.clone();
                restarts += 1;
            }
        }
        epoch += 1;
    }
    Ok(DephaseOutcome {
        work: particles.iter().map(|p| p.work).collect(),
        states: particles.into_iter().map(|p| p.x).collect(),
        restarts,
        ensemble_restarts,
        coordinator_epochs,
    })
}
