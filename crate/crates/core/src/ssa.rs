//! Gillespie kernel: single jumps, embedded steps and serial trajectories.
//!
//! A continuous-time jump consumes exactly two uniforms from the stream, the
//! holding time first and the channel second. An embedded step consumes one.

use crate::error::{Error, Result};
use crate::model::{Dynamics, Observable};
use crate::rng::{pick, RngStream};

#[derive(Clone, Debug, PartialEq)]
pub struct Jump<S> {
    pub next_state: S,
    pub holding_time: f64,
    pub reaction_index: usize,
}

/// Reusable propensity buffer bound to one dynamics.
pub struct Stepper<'a, D: Dynamics> {
    dynamics: &'a D,
    rates: Vec<f64>,
    total: f64,
}

impl<'a, D: Dynamics> Stepper<'a, D> {
    pub fn new(dynamics: &'a D) -> Self {
        Stepper {
            dynamics,
            rates: vec![0.0; dynamics.channels()],
            total: 0.0,
        }
    }

    pub fn dynamics(&self) -> &'a D {
        self.dynamics
    }

    /// Total jump rate `q(x)`; errors when it is zero.
    #[inline]
    pub fn total_rate(&mut self, x: &D::State) -> Result<f64> {
        self.dynamics.rates_into(x, &mut self.rates);
        let q: f64 = self.rates.iter().sum();
        if q > 0.0 && q.is_finite() {
            self.total = q;
            Ok(q)
        } else {
            Err(Error::Absorbing {
                state: format!("{x:?}"),
            })
        }
    }

    /// One continuous-time jump applied in place. Returns the holding time
    /// spent at the old state and the channel fired.
    #[inline]
    pub fn jump(&mut self, x: &mut D::State, rng: &mut RngStream) -> Result<(f64, usize)> {
        let dt = self.holding(x, rng)?;
        let j = self.complete(x, rng)?;
        Ok((dt, j))
    }

    /// First half of [`Stepper::jump`]: draws the holding time at `x`.
    /// Either follow with [`Stepper::complete`] on the same state or drop
    /// the jump.
    #[inline]
    pub fn holding(&mut self, x: &D::State, rng: &mut RngStream) -> Result<f64> {
        let q = self.total_rate(x)?;
        Ok(rng.exponential(q))
    }

    /// Second half of [`Stepper::jump`]: draws the channel and fires it.
    #[inline]
    pub fn complete(&mut self, x: &mut D::State, rng: &mut RngStream) -> Result<usize> {
        let j = pick(&self.rates, rng.uniform() * self.total);
        self.dynamics.fire(x, j)?;
        Ok(j)
    }

    /// One embedded-chain step applied in place; no holding time is drawn.
    #[inline]
    pub fn step(&mut self, x: &mut D::State, rng: &mut RngStream) -> Result<usize> {
        let q = self.total_rate(x)?;
        let j = pick(&self.rates, rng.uniform() * q);
        self.dynamics.fire(x, j)?;
        Ok(j)
    }
}

pub fn ssa_jump<D: Dynamics>(d: &D, x: &D::State, rng: &mut RngStream) -> Result<Jump<D::State>> {
    let mut y = x.clone();
    let (holding_time, reaction_index) = Stepper::new(d).jump(&mut y, rng)?;
    Ok(Jump {
        next_state: y,
        holding_time,
        reaction_index,
    })
}

pub fn embedded_jump<D: Dynamics>(
    d: &D,
    x: &D::State,
    rng: &mut RngStream,
) -> Result<(D::State, usize)> {
    let mut y = x.clone();
    let j = Stepper::new(d).step(&mut y, rng)?;
    Ok((y, j))
}

/// Running sums of `f(X_n) dt_n` per observable plus the clock.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryAccumulator {
    pub time_integral: Vec<f64>,
    pub elapsed_time: f64,
    pub step_count: u64,
}

impl TrajectoryAccumulator {
    pub fn new(observables: usize) -> Self {
        TrajectoryAccumulator {
            time_integral: vec![0.0; observables],
            elapsed_time: 0.0,
            step_count: 0,
        }
    }

    #[inline]
    pub fn add<S, O: Observable<S>>(&mut self, observables: &[O], x: &S, dt: f64) {
        for (acc, f) in self.time_integral.iter_mut().zip(observables) {
            *acc += f.eval(x) * dt;
        }
        self.elapsed_time += dt;
    }

    /// Time averages `integral / elapsed`.
    pub fn averages(&self) -> Vec<f64> {
        self.time_integral
            .iter()
            .map(|v| v / self.elapsed_time)
            .collect()
    }
}

/// Result of a serial run: totals, final state and per-segment integrals for
/// batch-means error bars.
#[derive(Clone, Debug, PartialEq)]
pub struct SerialRun<S> {
    pub accumulator: TrajectoryAccumulator,
    pub final_state: S,
    /// Integrals over consecutive equal-length time segments.
    pub segments: Vec<TrajectoryAccumulator>,
}

/// A serial run that stopped early; carries everything accumulated so far.
#[derive(Debug)]
pub struct Interrupted<S> {
    pub partial: SerialRun<S>,
    pub error: Error,
}

impl<S> std::fmt::Display for Interrupted<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "serial run interrupted at t = {}: {}",
            self.partial.accumulator.elapsed_time, self.error
        )
    }
}

/// Number of equal time segments recorded by [`run_serial`].
pub const SERIAL_SEGMENTS: usize = 200;

/// Direct simulation up to `horizon`. The last holding interval is cut at the
/// horizon, so the elapsed time equals `horizon` exactly.
pub fn run_serial<D: Dynamics, O: Observable<D::State>>(
    d: &D,
    x0: &D::State,
    observables: &[O],
    horizon: f64,
    rng: &mut RngStream,
) -> std::result::Result<SerialRun<D::State>, Box<Interrupted<D::State>>> {
    let mut run = SerialRun {
        accumulator: TrajectoryAccumulator::new(observables.len()),
        final_state: x0.clone(),
        segments: vec![TrajectoryAccumulator::new(observables.len())],
    };
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Box::new(Interrupted {
            partial: run,
            error: Error::Input(format!("horizon must be positive, got {horizon}")),
        }));
    }
    let seg_len = horizon / SERIAL_SEGMENTS as f64;
    let mut stepper = Stepper::new(d);
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut seg_end = seg_len;
    while t < horizon {
        let here = x.clone();
        let (mut dt, _) = match stepper.jump(&mut x, rng) {
            Ok(v) => v,
            Err(error) => {
                run.final_state = here;
                return Err(Box::new(Interrupted {
                    partial: run,
                    error,
                }));
            }
        };
        run.accumulator.step_count += 1;
        let last = t + dt >= horizon;
        if last {
            dt = horizon - t;
        }
        run.accumulator.add(observables, &here, dt);
        // split the interval over segment boundaries
        let mut s = t;
        let end = t + dt;
        while run.segments.len() < SERIAL_SEGMENTS && end > seg_end {
            let seg = run.segments.last_mut().expect("non-empty");
            seg.add(observables, &here, seg_end - s);
            s = seg_end;
            run.segments.push(TrajectoryAccumulator::new(observables.len()));
            seg_end = seg_len * run.segments.len() as f64;
        }
        let seg = run.segments.last_mut().expect("non-empty");
        seg.add(observables, &here, end - s);
        seg.step_count += 1;
        if last {
            run.final_state = here;
            t = horizon;
        } else {
            t = end;
        }
    }
    Ok(run)
}
