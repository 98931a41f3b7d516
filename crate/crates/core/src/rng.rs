//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the run's master seed and
//! selected by a 64-bit stream id, so replicas never share state and any
//! stream can be replayed in isolation. Stream ids are derived from
//! `(cycle, role, index)` by [`stream_id`].

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// What a stream is used for inside a ParRep cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// The serial reference trajectory and the decorrelation stage.
    Trajectory,
    /// One dephasing replica.
    Dephase,
    /// One parallel-stage replica.
    Parallel,
    /// Fleming-Viot donor selection.
    Coordinator,
    /// Monte-Carlo checks and oracle sampling.
    Check,
}

impl Role {
    fn tag(self) -> u64 {
        match self {
            Role::Trajectory => 1,
            Role::Dephase => 2,
            Role::Parallel => 3,
            Role::Coordinator => 4,
            Role::Check => 5,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream id for `(cycle, role, index)`.
pub fn stream_id(cycle: u64, role: Role, index: u64) -> u64 {
    let h = splitmix64(cycle ^ splitmix64(role.tag()));
    splitmix64(h ^ splitmix64(index.wrapping_add(0x5151_5151)))
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
    id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        RngStream { rng, id: stream_id }
    }

    pub fn for_role(master_seed: u64, cycle: u64, role: Role, index: u64) -> Self {
        Self::new(master_seed, stream_id(cycle, role, index))
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * TWO_POW_M53
    }

    /// `Exp(rate)` by inversion of one open uniform; always positive and finite.
    #[inline]
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform_open().ln() / rate
    }

    /// Uniform index in `0..n`. `n` must be positive.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Index drawn from unnormalized non-negative weights.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        pick(weights, self.uniform() * total)
    }
}

/// Stream factory for one cycle of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CycleStreams {
    pub master_seed: u64,
    pub cycle: u64,
}

impl CycleStreams {
    pub fn new(master_seed: u64, cycle: u64) -> Self {
        CycleStreams { master_seed, cycle }
    }

    pub fn stream(&self, role: Role, index: u64) -> RngStream {
        RngStream::for_role(self.master_seed, self.cycle, role, index)
    }
}

/// First index whose cumulative weight exceeds `target`, skipping zero
/// weights. Falls back to the last positive weight when rounding pushes
/// `target` past the total.
#[inline]
pub(crate) fn pick(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = j;
            if target < acc {
                return j;
            }
        }
    }
    last
}
