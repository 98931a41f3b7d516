//! Reaction networks, explicit generator matrices and observables.
//!
//! Both [`ReactionNetwork`] and [`ExplicitChain`] implement [`Dynamics`], the
//! jump-kernel interface the simulation engines are written against. A
//! dynamics exposes a fixed list of channels; at a state `x` channel `j` fires
//! at rate `rates[j]` and moves the state by [`Dynamics::fire`].

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Jump kernel of a continuous-time Markov chain.
pub trait Dynamics: Sync {
    type State: Clone + PartialEq + Send + Sync + fmt::Debug;

    fn channels(&self) -> usize;

    /// Writes the rate of every channel at `x` into `out`, which has length
    /// [`Dynamics::channels`].
    fn rates_into(&self, x: &Self::State, out: &mut [f64]);

    /// Applies channel `channel` to `x` in place.
    fn fire(&self, x: &mut Self::State, channel: usize) -> Result<()>;
}

/// A real-valued function of the state.
pub trait Observable<S>: Sync {
    fn eval(&self, x: &S) -> f64;
}

/// Molecule counts per species.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PopulationState(Vec<i64>);

impl PopulationState {
    pub fn new(counts: Vec<i64>) -> Result<Self> {
        if let Some(i) = counts.iter().position(|&c| c < 0) {
            return Err(Error::Input(format!(
                "species {i} has negative count {}",
                counts[i]
            )));
        }
        Ok(PopulationState(counts))
    }

    pub fn counts(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Debug for PopulationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for PopulationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Propensity law of a single reaction.
#[derive(Clone, Debug, PartialEq)]
pub enum Propensity {
    /// `c`, independent of the state.
    Constant(f64),
    /// `c * x[species]`.
    Linear { rate: f64, species: usize },
    /// `c * prod_i x_i (x_i - 1) ... (x_i - m_i + 1)` over the reactant multiset.
    MassAction {
        rate: f64,
        reactants: Vec<(usize, u32)>,
    },
}

impl Propensity {
    pub fn rate_constant(&self) -> f64 {
        match *self {
            Propensity::Constant(c) => c,
            Propensity::Linear { rate, .. } => rate,
            Propensity::MassAction { rate, .. } => rate,
        }
    }

    /// Reactant multiset as `(species, multiplicity)` pairs.
    pub fn reactants(&self) -> Vec<(usize, u32)> {
        match self {
            Propensity::Constant(_) => Vec::new(),
            Propensity::Linear { species, .. } => vec![(*species, 1)],
            Propensity::MassAction { reactants, .. } => reactants.clone(),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[i64]) -> f64 {
        match self {
            Propensity::Constant(c) => *c,
            Propensity::Linear { rate, species } => rate * x[*species] as f64,
            Propensity::MassAction { rate, reactants } => {
                let mut a = *rate;
                for &(s, m) in reactants {
                    let n = x[s];
                    if n < i64::from(m) {
                        return 0.0;
                    }
                    for k in 0..i64::from(m) {
                        a *= (n - k) as f64;
                    }
                }
                a
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reaction {
    pub propensity: Propensity,
    pub state_change: Vec<i64>,
}

impl Reaction {
    pub fn new(propensity: Propensity, state_change: Vec<i64>) -> Self {
        Reaction {
            propensity,
            state_change,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<String>,
    reactions: Vec<Reaction>,
    slow: Vec<bool>,
}

impl ReactionNetwork {
    pub fn new(species: Vec<String>, reactions: Vec<Reaction>, slow: Vec<bool>) -> Result<Self> {
        let n = species.len();
        if n == 0 {
            return Err(Error::InvalidModel("no species declared".into()));
        }
        if reactions.is_empty() {
            return Err(Error::InvalidModel("network has no reactions".into()));
        }
        if slow.len() != reactions.len() {
            return Err(Error::Dimension {
                expected: reactions.len(),
                got: slow.len(),
            });
        }
        for (j, r) in reactions.iter().enumerate() {
            if r.state_change.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: r.state_change.len(),
                });
            }
            let c = r.propensity.rate_constant();
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidModel(format!(
                    "reaction {} has invalid rate constant {c}",
                    j + 1
                )));
            }
            for (s, m) in r.propensity.reactants() {
                if s >= n {
                    return Err(Error::InvalidModel(format!(
                        "reaction {} references species index {s}",
                        j + 1
                    )));
                }
                if m == 0 {
                    return Err(Error::InvalidModel(format!(
                        "reaction {} has a zero reactant multiplicity",
                        j + 1
                    )));
                }
            }
        }
        Ok(ReactionNetwork {
            species,
            reactions,
            slow,
        })
    }

    /// Same network with every reaction marked slow.
    pub fn all_slow(species: Vec<String>, reactions: Vec<Reaction>) -> Result<Self> {
        let slow = vec![true; reactions.len()];
        Self::new(species, reactions, slow)
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn slow_flags(&self) -> &[bool] {
        &self.slow
    }

    pub fn is_slow(&self, j: usize) -> bool {
        self.slow[j]
    }

    fn check_dim(&self, x: &PopulationState) -> Result<()> {
        if x.dim() != self.species.len() {
            return Err(Error::Dimension {
                expected: self.species.len(),
                got: x.dim(),
            });
        }
        Ok(())
    }

    pub fn propensities(&self, x: &PopulationState) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self
            .reactions
            .iter()
            .map(|r| r.propensity.eval(x.counts()))
            .collect())
    }

    /// `q(x)`: sum of all propensities. Errors when every propensity is zero.
    pub fn total_rate(&self, x: &PopulationState) -> Result<f64> {
        let q: f64 = self.propensities(x)?.iter().sum();
        if q > 0.0 {
            Ok(q)
        } else {
            Err(Error::Absorbing {
                state: x.to_string(),
            })
        }
    }

    pub fn apply_reaction(&self, x: &PopulationState, j: usize) -> Result<PopulationState> {
        self.check_dim(x)?;
        if j >= self.reactions.len() {
            return Err(Error::Input(format!("no reaction with index {j}")));
        }
        let mut y = x.clone();
        self.fire(&mut y, j)?;
        Ok(y)
    }
}

impl Dynamics for ReactionNetwork {
    type State = PopulationState;

    fn channels(&self) -> usize {
        self.reactions.len()
    }

    #[inline]
    fn rates_into(&self, x: &PopulationState, out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(&self.reactions) {
            *o = r.propensity.eval(x.counts());
        }
    }

    fn fire(&self, x: &mut PopulationState, channel: usize) -> Result<()> {
        let eta = &self.reactions[channel].state_change;
        for (s, (&c, &d)) in x.0.iter().zip(eta).enumerate() {
            match c.checked_add(d) {
                Some(v) if v < 0 => {
                    return Err(Error::NegativeCount {
                        reaction: channel,
                        species: s,
                        state: x.to_string(),
                    })
                }
                None => return Err(Error::Overflow { reaction: channel }),
                Some(_) => {}
            }
        }
        for (c, &d) in x.0.iter_mut().zip(eta) {
            *c += d;
        }
        Ok(())
    }
}

/// A finite chain given by a dense generator matrix over states `0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitChain {
    q: DMatrix<f64>,
}

/// Largest explicit chain accepted.
pub const MAX_EXPLICIT_STATES: usize = 10_000;

impl ExplicitChain {
    /// Validates a full generator: non-negative off-diagonals, zero row sums
    /// and `q(x) > 0` on every row.
    pub fn from_generator(q: DMatrix<f64>) -> Result<Self> {
        let n = q.nrows();
        if n == 0 || q.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "generator must be square and non-empty, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if n > MAX_EXPLICIT_STATES {
            return Err(Error::InvalidModel(format!(
                "{n} states exceeds the dense limit of {MAX_EXPLICIT_STATES}"
            )));
        }
        for i in 0..n {
            let mut sum = 0.0;
            let mut scale = 1.0f64;
            for j in 0..n {
                let v = q[(i, j)];
                if !v.is_finite() {
                    return Err(Error::InvalidModel(format!("non-finite rate at ({i},{j})")));
                }
                if i != j && v < 0.0 {
                    return Err(Error::InvalidModel(format!("negative rate q({i},{j}) = {v}")));
                }
                sum += v;
                scale = scale.max(v.abs());
            }
            if sum.abs() > 1e-12 * scale {
                return Err(Error::InvalidModel(format!("row {i} sums to {sum:e}")));
            }
            if q[(i, i)] >= 0.0 {
                return Err(Error::Absorbing {
                    state: i.to_string(),
                });
            }
        }
        Ok(ExplicitChain { q })
    }

    /// Builds a generator from off-diagonal rates; the diagonal is overwritten.
    pub fn from_rates(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut q = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: row.len(),
                });
            }
            let mut out = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if i != j {
                    q[(i, j)] = v;
                    out += v;
                }
            }
            q[(i, i)] = -out;
        }
        Self::from_generator(q)
    }

    pub fn len(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.q.nrows() == 0
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.q[(x, y)]
    }

    /// `q(x) = -q(x,x)`.
    pub fn exit_rate(&self, x: usize) -> f64 {
        -self.q[(x, x)]
    }
}

impl Dynamics for ExplicitChain {
    type State = usize;

    fn channels(&self) -> usize {
        self.q.ncols()
    }

    #[inline]
    fn rates_into(&self, x: &usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = if j == *x { 0.0 } else { self.q[(*x, j)] };
        }
    }

    fn fire(&self, x: &mut usize, channel: usize) -> Result<()> {
        if channel >= self.len() {
            return Err(Error::Input(format!("no state {channel}")));
        }
        *x = channel;
        Ok(())
    }
}

/// Transition matrix of the embedded jump chain: `p(x,y) = q(x,y)/q(x)`,
/// zero diagonal.
pub fn embedded_matrix(chain: &ExplicitChain) -> Result<DMatrix<f64>> {
    let n = chain.len();
    let mut p = DMatrix::zeros(n, n);
    for x in 0..n {
        let qx = chain.exit_rate(x);
        if qx <= 0.0 {
            return Err(Error::Absorbing {
                state: x.to_string(),
            });
        }
        for y in 0..n {
            if y != x {
                p[(x, y)] = chain.rate(x, y) / qx;
            }
        }
    }
    Ok(p)
}

/// Observable of a population state.
#[derive(Clone, Debug, PartialEq)]
pub enum ObservableSpec {
    LinearCombination(Vec<f64>),
    Coordinate(usize),
    Constant(f64),
}

impl ObservableSpec {
    pub fn validate(&self, species: usize) -> Result<()> {
        match self {
            ObservableSpec::LinearCombination(w) if w.len() != species => Err(Error::Dimension {
                expected: species,
                got: w.len(),
            }),
            ObservableSpec::Coordinate(i) if *i >= species => Err(Error::Input(format!(
                "observable coordinate {i} out of range for {species} species"
            ))),
            _ => Ok(()),
        }
    }

    /// Change in the observable produced by a state-change vector. Constant
    /// and linear observables are affine, so this does not depend on the state.
    pub fn increment(&self, eta: &[i64]) -> f64 {
        match self {
            ObservableSpec::LinearCombination(w) => {
                w.iter().zip(eta).map(|(a, &d)| a * d as f64).sum()
            }
            ObservableSpec::Coordinate(i) => eta[*i] as f64,
            ObservableSpec::Constant(_) => 0.0,
        }
    }

    pub fn sup_norm_bound(&self) -> Option<f64> {
        match self {
            ObservableSpec::Constant(c) => Some(c.abs()),
            _ => None,
        }
    }
}

impl Observable<PopulationState> for ObservableSpec {
    #[inline]
    fn eval(&self, x: &PopulationState) -> f64 {
        match self {
            ObservableSpec::LinearCombination(w) => {
                w.iter().zip(x.counts()).map(|(a, &c)| a * c as f64).sum()
            }
            ObservableSpec::Coordinate(i) => x.counts()[*i] as f64,
            ObservableSpec::Constant(c) => *c,
        }
    }
}

/// Constants are observables of any state type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantObservable(pub f64);

impl<S> Observable<S> for ConstantObservable {
    fn eval(&self, _: &S) -> f64 {
        self.0
    }
}

/// Observable on an explicit chain, tabulated per state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateFunction(pub Vec<f64>);

impl StateFunction {
    pub fn indicator(n: usize, state: usize) -> Self {
        let mut v = vec![0.0; n];
        v[state] = 1.0;
        StateFunction(v)
    }
}

impl Observable<usize> for StateFunction {
    #[inline]
    fn eval(&self, x: &usize) -> f64 {
        self.0[*x]
    }
}
