//! Linear-algebra ground truth on explicit chains.
//!
//! Quasi-stationary distributions come from inverse iteration on the
//! restricted generator `Q_W` (resp. `I - P_W`); the subdominant eigenvalue
//! comes from orthogonal iteration on the deflated operator. Exit times,
//! occupation integrals and stationary laws are direct LU solves.

mod sparse;

pub use sparse::{stationary_sparse, truncate_network, SparseChain, SparseStationary};

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{embedded_matrix, ExplicitChain};
use crate::rng::RngStream;
use crate::ssa::Stepper;

/// Iteration cap for every iterative solve in this module.
pub const MAX_ITERATIONS: usize = 100_000;
/// Residual tolerance for eigenvector solves, relative to the matrix scale.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// A subset `W` of an explicit chain with its restricted matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct MetastableSet {
    members: Vec<usize>,
    position: Vec<Option<usize>>,
    q_w: DMatrix<f64>,
    p_w: DMatrix<f64>,
    rates: Vec<f64>,
}

impl MetastableSet {
    pub fn new(chain: &ExplicitChain, members: &[usize]) -> Result<Self> {
        let n = chain.len();
        if members.is_empty() {
            return Err(Error::Input("metastable set is empty".into()));
        }
        if members.len() >= n {
            return Err(Error::Input(
                "metastable set must be a proper subset of the state space".into(),
            ));
        }
        let mut position = vec![None; n];
        for (i, &x) in members.iter().enumerate() {
            if x >= n {
                return Err(Error::Input(format!("state {x} is outside the chain")));
            }
            if position[x].replace(i).is_some() {
                return Err(Error::Input(format!("state {x} listed twice")));
            }
        }
        let p = embedded_matrix(chain)?;
        let m = members.len();
        let q_w = DMatrix::from_fn(m, m, |i, j| chain.rate(members[i], members[j]));
        let p_w = DMatrix::from_fn(m, m, |i, j| p[(members[i], members[j])]);
        let rates = members.iter().map(|&x| chain.exit_rate(x)).collect();
        Ok(MetastableSet {
            members: members.to_vec(),
            position,
            q_w,
            p_w,
            rates,
        })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, state: usize) -> bool {
        self.position.get(state).is_some_and(Option::is_some)
    }

    /// Index of `state` inside `W`.
    pub fn position(&self, state: usize) -> Option<usize> {
        self.position.get(state).copied().flatten()
    }

    pub fn q_w(&self) -> &DMatrix<f64> {
        &self.q_w
    }

    pub fn p_w(&self) -> &DMatrix<f64> {
        &self.p_w
    }

    /// `q(x)` for each member, in member order.
    pub fn jump_rates(&self) -> &[f64] {
        &self.rates
    }

    /// Lifts a law on `W` to the whole state space.
    pub fn lift(&self, law: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.position.len()];
        for (&x, &p) in self.members.iter().zip(law) {
            out[x] = p;
        }
        out
    }
}

/// Quasi-stationary law with its leading eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct QsdSolution {
    /// Distribution over the members of `W`, in member order.
    pub distribution: Vec<f64>,
    /// `lambda_1 < 0` for the generator, `sigma_1` for the jump chain.
    pub dominant: f64,
    /// `lambda_2` (resp. `sigma_2`); `None` when `|W| = 1`.
    pub subdominant: Option<Complex<f64>>,
    pub iterations: usize,
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Forward and backward reachability from member 0.
fn irreducible(adj: &DMatrix<f64>) -> bool {
    let n = adj.nrows();
    for transpose in [false, true] {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let e = if transpose { adj[(v, u)] } else { adj[(u, v)] };
                if u != v && e > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return false;
        }
    }
    true
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of an irreducible transition graph.
fn period(adj: &DMatrix<f64>) -> usize {
    let n = adj.nrows();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if adj[(u, v)] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0;
    for u in 0..n {
        for v in 0..n {
            if adj[(u, v)] > 0.0 {
                let d = (level[u] + 1).abs_diff(level[v]);
                g = gcd(g, d);
            }
        }
    }
    g
}

/// Inverse iteration for the Perron left eigenvector of `a^{-1}`, where the
/// eigenvalue of `a` closest to zero is real and simple. Returns the
/// normalized vector.
fn inverse_iteration_left(
    a: &DMatrix<f64>,
    residual: impl Fn(&DVector<f64>) -> f64,
    scale: f64,
) -> Result<(DVector<f64>, usize)> {
    let n = a.nrows();
    let lu = a.transpose().lu();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut last = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        let y = lu
            .solve(&v)
            .ok_or_else(|| Error::Reducible("restricted matrix is singular".into()))?;
        let s = y.sum();
        if !(s.is_finite() && s != 0.0) {
            return Err(Error::Reducible("restricted matrix is singular".into()));
        }
        v = y / s;
        last = residual(&v);
        if last <= RESIDUAL_TOL * scale.max(1.0) {
            return Ok((v, it));
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: last,
    })
}

/// Right eigenvector for a real simple eigenvalue `theta`, normalized so
/// that `left . right = 1`.
fn right_vector(m: &DMatrix<f64>, theta: f64, left: &DVector<f64>) -> Result<DVector<f64>> {
    let n = m.nrows();
    // shifted inverse iteration; the tiny offset keeps the solve regular
    let shift = theta + 1e-9 * max_abs(m).max(1.0);
    let a = m - DMatrix::identity(n, n) * shift;
    let lu = a.lu();
    let mut v = DVector::from_element(n, 1.0);
    for _ in 0..50 {
        let y = lu
            .solve(&v)
            .ok_or_else(|| Error::Reducible("restricted matrix is singular".into()))?;
        let norm = y.norm();
        if !(norm.is_finite() && norm > 0.0) {
            break;
        }
        let next = y / norm;
        let done = (&next - &v).norm() < 1e-13;
        v = next;
        if done {
            break;
        }
    }
    let dot = left.dot(&v);
    if dot == 0.0 || !dot.is_finite() {
        return Err(Error::Reducible("degenerate right eigenvector".into()));
    }
    Ok(v / dot)
}

/// Orthogonal iteration on `op` with Rayleigh-Ritz projection onto `b`.
/// Returns the Ritz values of `b` on the converged invariant subspace. The
/// block size grows until the subspace residual converges.
fn ritz_values(op: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<Complex<f64>>, usize)> {
    let n = b.nrows();
    let b_norm = b.norm().max(f64::MIN_POSITIVE);
    let mut total = 0;
    let mut worst = f64::INFINITY;
    for k in 2..=n.min(8) {
        let mut v = DMatrix::from_fn(n, k, |i, j| {
            // deterministic, generic start vectors
            let x = ((i + 1) * (j + 3)) as f64;
            (x * 0.7548776662466927).fract() - 0.5 + if j == 0 { 1.0 } else { 0.0 }
        });
        v = v.qr().q();
        let budget = if k == n { 4 } else { MAX_ITERATIONS / 8 };
        for _ in 0..budget {
            total += 1;
            v = (op * &v).qr().q();
            let s = v.transpose() * b * &v;
            let r = (b * &v - &v * &s).norm() / b_norm;
            worst = r;
            if r < 1e-9 || k == n {
                if r < 1e-6 {
                    let eig = s.complex_eigenvalues();
                    return Ok((eig.iter().copied().collect(), total));
                }
                break;
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: total,
        residual: worst,
    })
}

pub fn qsd_ctmc(w: &MetastableSet) -> Result<QsdSolution> {
    let q = w.q_w();
    let n = q.nrows();
    if n == 1 {
        return Ok(QsdSolution {
            distribution: vec![1.0],
            dominant: q[(0, 0)],
            subdominant: None,
            iterations: 0,
        });
    }
    if !irreducible(q) {
        return Err(Error::Reducible("Q_W is not irreducible".into()));
    }
    if q.row_iter().all(|r| r.sum().abs() <= 1e-14 * max_abs(q)) {
        return Err(Error::Reducible("W has no exit".into()));
    }
    let scale = max_abs(q);
    let residual = |v: &DVector<f64>| {
        let lam = (v.transpose() * q).sum();
        (v.transpose() * q - v.transpose() * lam).amax()
    };
    let (nu, it) = inverse_iteration_left(q, residual, scale)?;
    let lambda1 = (nu.transpose() * q).sum();
    let phi = right_vector(q, lambda1, &nu)?;
    // move lambda_1 far to the left, then order the rest by real part via exp
    let d = (0..n).map(|i| q[(i, i)].abs()).fold(0.0, f64::max);
    let target = -8.0 * d;
    let deflated = q - (&phi * nu.transpose()) * (lambda1 - target);
    let op = (&deflated * (4.0 / d)).exp();
    let (ritz, it2) = ritz_values(&op, &deflated)?;
    let lambda2 = ritz
        .into_iter()
        .filter(|z| (z.re - target).abs() > 1e-6 * d)
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .ok_or(Error::NoConvergence {
            iterations: it2,
            residual: f64::NAN,
        })?;
    Ok(QsdSolution {
        distribution: nu.iter().copied().collect(),
        dominant: lambda1,
        subdominant: Some(lambda2),
        iterations: it + it2,
    })
}

pub fn qsd_dtmc(w: &MetastableSet) -> Result<QsdSolution> {
    let p = w.p_w();
    let n = p.nrows();
    if n == 1 {
        return Ok(QsdSolution {
            distribution: vec![1.0],
            dominant: p[(0, 0)],
            subdominant: None,
            iterations: 0,
        });
    }
    if !irreducible(p) {
        return Err(Error::Reducible("P_W is not irreducible".into()));
    }
    if period(p) > 1 {
        return Err(Error::Periodic);
    }
    let a = DMatrix::identity(n, n) - p;
    let residual = |v: &DVector<f64>| {
        let s = (v.transpose() * p).sum();
        (v.transpose() * p - v.transpose() * s).amax()
    };
    let (mu, it) = inverse_iteration_left(&a, residual, 1.0)?;
    let sigma1 = (mu.transpose() * p).sum();
    if sigma1 >= 1.0 - 1e-15 {
        return Err(Error::Reducible("W has no exit".into()));
    }
    let psi = right_vector(p, sigma1, &mu)?;
    let deflated = p - (&psi * mu.transpose()) * sigma1;
    let (ritz, it2) = ritz_values(&deflated, &deflated)?;
    let sigma2 = ritz
        .into_iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .ok_or(Error::NoConvergence {
            iterations: it2,
            residual: f64::NAN,
        })?;
    Ok(QsdSolution {
        distribution: mu.iter().copied().collect(),
        dominant: sigma1,
        subdominant: Some(sigma2),
        iterations: it + it2,
    })
}

/// Ratios comparing the exit rate with the local relaxation rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetastabilityIndex {
    /// `|lambda_1| / |lambda_1 - Re lambda_2|`.
    pub ctmc: f64,
    /// `(|sigma_2| / sigma_1) / sigma_1`.
    pub dtmc: f64,
    pub lambda1: f64,
    pub sigma1: f64,
}

pub fn metastability_index(w: &MetastableSet) -> Result<MetastabilityIndex> {
    let c = qsd_ctmc(w)?;
    let d = qsd_dtmc(w)?;
    let ctmc = match c.subdominant {
        Some(l2) => c.dominant.abs() / (c.dominant - l2.re).abs(),
        None => 1.0,
    };
    let dtmc = match d.subdominant {
        Some(s2) if d.dominant > 0.0 => (s2.norm() / d.dominant) / d.dominant,
        _ => 1.0,
    };
    Ok(MetastabilityIndex {
        ctmc,
        dtmc,
        lambda1: c.dominant,
        sigma1: d.dominant,
    })
}

/// Thresholds for declaring a set metastable. A set qualifies when its exit
/// is slow in absolute terms and the index is below the ratio threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Criteria {
    pub max_exit_rate: f64,
    pub max_ctmc_index: f64,
    pub max_exit_probability: f64,
    pub max_dtmc_index: f64,
}

impl Default for Criteria {
    fn default() -> Self {
        Criteria {
            max_exit_rate: 0.01,
            max_ctmc_index: 0.1,
            max_exit_probability: 0.01,
            max_dtmc_index: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub index: MetastabilityIndex,
    pub ctmc: bool,
    pub dtmc: bool,
}

pub fn classify(w: &MetastableSet, criteria: &Criteria) -> Result<Classification> {
    let index = metastability_index(w)?;
    Ok(Classification {
        index,
        ctmc: index.lambda1.abs() <= criteria.max_exit_rate
            && index.ctmc <= criteria.max_ctmc_index,
        dtmc: 1.0 - index.sigma1 <= criteria.max_exit_probability
            && index.dtmc < criteria.max_dtmc_index,
    })
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<Vec<f64>> {
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Reducible("singular exit-time system".into()))?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x.iter().copied().collect())
    } else {
        Err(Error::Reducible("singular exit-time system".into()))
    }
}

/// `E^x[int_0^T f(X_s) ds]` for every member `x`, solving `Q_W u = -f`.
/// Equals `E^x[sum_{n<N} f(X_n) dtau_n]`.
pub fn expected_occupation(w: &MetastableSet, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != w.len() {
        return Err(Error::Dimension {
            expected: w.len(),
            got: f.len(),
        });
    }
    solve(-w.q_w().clone(), DVector::from_column_slice(f))
}

/// `E^x[T]` for every member.
pub fn expected_exit_times(w: &MetastableSet) -> Result<Vec<f64>> {
    expected_occupation(w, &vec![1.0; w.len()])
}

/// `E^x[N]` for every member, solving `(I - P_W) m = 1`.
pub fn expected_exit_steps(w: &MetastableSet) -> Result<Vec<f64>> {
    let n = w.len();
    solve(
        DMatrix::identity(n, n) - w.p_w(),
        DVector::from_element(n, 1.0),
    )
}

/// Where an exit-time expectation starts.
#[derive(Clone, Copy, Debug)]
pub enum Start<'a> {
    /// A chain state (not a member index).
    State(usize),
    /// A law over the members of `W`.
    Distribution(&'a [f64]),
}

fn weigh(w: &MetastableSet, values: &[f64], start: Start<'_>) -> Result<f64> {
    match start {
        Start::State(x) => w
            .position(x)
            .map(|i| values[i])
            .ok_or_else(|| Error::Input(format!("state {x} is not in W"))),
        Start::Distribution(d) => {
            if d.len() != values.len() {
                return Err(Error::Dimension {
                    expected: values.len(),
                    got: d.len(),
                });
            }
            Ok(d.iter().zip(values).map(|(p, v)| p * v).sum())
        }
    }
}

pub fn expected_exit_time(w: &MetastableSet, start: Start<'_>) -> Result<f64> {
    weigh(w, &expected_exit_times(w)?, start)
}

pub fn expected_exit_step_count(w: &MetastableSet, start: Start<'_>) -> Result<f64> {
    weigh(w, &expected_exit_steps(w)?, start)
}

pub fn stationary_distribution(chain: &ExplicitChain) -> Result<Vec<f64>> {
    let q = chain.generator();
    let n = q.nrows();
    if !irreducible(q) {
        return Err(Error::Reducible("chain is not irreducible".into()));
    }
    let mut a = q.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = solve(a, b)?;
    let mut pi: Vec<f64> = pi.into_iter().map(|p| p.max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    Ok(pi)
}

/// Half the L1 distance between two laws on a common support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "laws must share an index set");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn start_vector(w: &MetastableSet, x: usize) -> Result<DVector<f64>> {
    let i = w
        .position(x)
        .ok_or_else(|| Error::Input(format!("state {x} is not in W")))?;
    let mut v = DVector::zeros(w.len());
    v[i] = 1.0;
    Ok(v)
}

fn normalize(v: DVector<f64>) -> Result<(Vec<f64>, f64)> {
    let s = v.sum();
    if s <= 0.0 {
        return Err(Error::NoSurvivors);
    }
    Ok((v.iter().map(|p| p / s).collect(), s))
}

/// Law of `X(t)` given `T > t` from `x`, with the survival probability.
pub fn conditional_law_ctmc(w: &MetastableSet, x: usize, t: f64) -> Result<(Vec<f64>, f64)> {
    let v = start_vector(w, x)?;
    let e = (w.q_w() * t).exp();
    normalize(e.transpose() * v)
}

/// Law of `X_n` given `N > n` from `x`, with the survival probability.
pub fn conditional_law_dtmc(w: &MetastableSet, x: usize, n: u64) -> Result<(Vec<f64>, f64)> {
    let mut v = start_vector(w, x)?;
    let pt = w.p_w().transpose();
    for _ in 0..n {
        v = &pt * v;
    }
    normalize(v)
}

/// Clock for conditional laws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Clock {
    Time(f64),
    Steps(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalLaw {
    /// Over the members of `W`.
    pub distribution: Vec<f64>,
    pub survivors: usize,
    pub attempts: usize,
}

/// Monte-Carlo estimate of the conditional law at `clock` from `x`, built
/// from `samples` surviving trajectories. Gives up after `1000 * samples`
/// attempts and reports however many survived.
pub fn empirical_conditional_law(
    chain: &ExplicitChain,
    w: &MetastableSet,
    x: usize,
    clock: Clock,
    samples: usize,
    rng: &mut RngStream,
) -> Result<EmpiricalLaw> {
    if !w.contains(x) {
        return Err(Error::Input(format!("state {x} is not in W")));
    }
    let mut counts = vec![0usize; w.len()];
    let mut survivors = 0;
    let mut attempts = 0;
    let cap = samples.saturating_mul(1000).max(1000);
    let mut stepper = Stepper::new(chain);
    while survivors < samples && attempts < cap {
        attempts += 1;
        let mut y = x;
        let alive = match clock {
            Clock::Steps(n) => {
                let mut ok = true;
                for _ in 0..n {
                    stepper.step(&mut y, rng)?;
                    if !w.contains(y) {
                        ok = false;
                        break;
                    }
                }
                ok
            }
            Clock::Time(t) => {
                let mut s = 0.0;
                let mut ok = true;
                loop {
                    let here = y;
                    let (dt, _) = stepper.jump(&mut y, rng)?;
                    if s + dt > t {
                        y = here;
                        break;
                    }
                    s += dt;
                    if !w.contains(y) {
                        ok = false;
                        break;
                    }
                }
                ok
            }
        };
        if alive {
            survivors += 1;
            counts[w.position(y).expect("member")] += 1;
        }
    }
    if survivors == 0 {
        return Err(Error::NoSurvivors);
    }
    Ok(EmpiricalLaw {
        distribution: counts
            .iter()
            .map(|&c| c as f64 / survivors as f64)
            .collect(),
        survivors,
        attempts,
    })
}
