//! Truncated state spaces too large for dense solves.
//!
//! The stationary law is computed by iterative aggregation-disaggregation:
//! an aggregated chain over user-supplied blocks is solved for the block
//! masses, then one block Gauss-Seidel sweep refines the law inside blocks.
//! Blocks that group states linked by fast reactions make this converge in
//! a handful of sweeps.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector, LU, Dyn};

use crate::error::{Error, Result};
use crate::model::{Dynamics, PopulationState, ReactionNetwork};

/// Upper bound on the number of states `truncate_network` will enumerate.
pub const MAX_SPARSE_STATES: usize = 2_000_000;

#[derive(Clone, Debug)]
pub struct SparseChain {
    states: Vec<PopulationState>,
    index: HashMap<PopulationState, usize>,
    transitions: Vec<Vec<(usize, f64)>>,
    exit_rates: Vec<f64>,
    boundary: Vec<bool>,
}

impl SparseChain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &PopulationState {
        &self.states[i]
    }

    pub fn states(&self) -> &[PopulationState] {
        &self.states
    }

    pub fn index_of(&self, x: &PopulationState) -> Option<usize> {
        self.index.get(x).copied()
    }

    /// Off-diagonal rates out of state `i`, merged by target.
    pub fn transitions(&self, i: usize) -> &[(usize, f64)] {
        &self.transitions[i]
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit_rates[i]
    }

    /// Whether some reaction out of state `i` was cut by the truncation.
    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }
}

/// States reachable from `x0` inside the box `0 <= x_k <= caps[k]`.
/// Reactions that would leave the box are dropped, so the truncated chain
/// reflects at the box faces.
pub fn truncate_network(
    net: &ReactionNetwork,
    x0: &PopulationState,
    caps: &[i64],
) -> Result<SparseChain> {
    let d = net.species_count();
    if caps.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: caps.len(),
        });
    }
    let inside = |x: &PopulationState| x.counts().iter().zip(caps).all(|(v, c)| v <= c);
    if x0.dim() != d || !inside(x0) {
        return Err(Error::Input(format!("initial state {x0} is outside the box")));
    }
    let mut chain = SparseChain {
        states: vec![x0.clone()],
        index: HashMap::from([(x0.clone(), 0)]),
        transitions: Vec::new(),
        exit_rates: Vec::new(),
        boundary: Vec::new(),
    };
    let mut rates = vec![0.0; net.channels()];
    let mut queue = VecDeque::from([0usize]);
    let mut pending: Vec<Vec<(usize, f64)>> = vec![Vec::new()];
    let mut cut = vec![false];
    while let Some(i) = queue.pop_front() {
        let x = chain.states[i].clone();
        net.rates_into(&x, &mut rates);
        let mut out: Vec<(usize, f64)> = Vec::new();
        for (j, &a) in rates.iter().enumerate() {
            if a <= 0.0 {
                continue;
            }
            let mut y = x.clone();
            if net.fire(&mut y, j).is_err() || !inside(&y) {
                cut[i] = true;
                continue;
            }
            if y == x {
                continue;
            }
            let k = match chain.index.get(&y) {
                Some(&k) => k,
                None => {
                    let k = chain.states.len();
                    if k >= MAX_SPARSE_STATES {
                        return Err(Error::BudgetExceeded {
                            what: "truncated states",
                            budget: MAX_SPARSE_STATES as u64,
                            detail: format!("box {caps:?}"),
                        });
                    }
                    chain.index.insert(y.clone(), k);
                    chain.states.push(y);
                    pending.push(Vec::new());
                    cut.push(false);
                    queue.push_back(k);
                    k
                }
            };
            match out.iter_mut().find(|(t, _)| *t == k) {
                Some(e) => e.1 += a,
                None => out.push((k, a)),
            }
        }
        pending[i] = out;
    }
    chain.exit_rates = pending
        .iter()
        .map(|row| row.iter().map(|e| e.1).sum())
        .collect();
    chain.transitions = pending;
    chain.boundary = cut;
    Ok(chain)
}

#[derive(Clone, Debug)]
pub struct SparseStationary {
    pub distribution: Vec<f64>,
    pub iterations: usize,
    /// `||pi Q||_1 / sum_i pi_i q_i` at exit.
    pub residual: f64,
    /// Mass on states where the truncation removed a reaction.
    pub boundary_mass: f64,
}

impl SparseStationary {
    pub fn expectation(&self, chain: &SparseChain, f: impl Fn(&PopulationState) -> f64) -> f64 {
        self.distribution
            .iter()
            .zip(chain.states())
            .map(|(p, x)| p * f(x))
            .sum()
    }
}

struct Block {
    members: Vec<usize>,
    lu: LU<f64, Dyn, Dyn>,
}

fn residual(chain: &SparseChain, pi: &[f64]) -> f64 {
    let mut r: Vec<f64> = pi
        .iter()
        .zip(&chain.exit_rates)
        .map(|(p, q)| -p * q)
        .collect();
    for (i, row) in chain.transitions.iter().enumerate() {
        for &(j, a) in row {
            r[j] += pi[i] * a;
        }
    }
    let flow: f64 = pi.iter().zip(&chain.exit_rates).map(|(p, q)| p * q).sum();
    r.iter().map(|v| v.abs()).sum::<f64>() / flow
}

/// Stationary law of a truncated chain. `block_of[i]` assigns state `i` to
/// an aggregation block; any labelling works, but grouping fast-connected
/// states is what makes it fast.
pub fn stationary_sparse(
    chain: &SparseChain,
    block_of: &[usize],
    tol: f64,
    max_iterations: usize,
) -> Result<SparseStationary> {
    let n = chain.len();
    if block_of.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: block_of.len(),
        });
    }
    // renumber blocks densely
    let mut ids = HashMap::new();
    let block: Vec<usize> = block_of
        .iter()
        .map(|b| {
            let next = ids.len();
            *ids.entry(*b).or_insert(next)
        })
        .collect();
    let nb = ids.len();
    let mut local = vec![0usize; n];
    let mut members = vec![Vec::new(); nb];
    for (i, &b) in block.iter().enumerate() {
        local[i] = members[b].len();
        members[b].push(i);
    }
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, row) in chain.transitions.iter().enumerate() {
        for &(j, a) in row {
            incoming[j].push((i, a));
        }
    }
    let blocks: Vec<Block> = members
        .into_iter()
        .map(|m| {
            let k = m.len();
            let mut qt = DMatrix::zeros(k, k);
            for (c, &i) in m.iter().enumerate() {
                qt[(c, c)] = -chain.exit_rates[i];
                for &(j, a) in &chain.transitions[i] {
                    if block[j] == block[i] {
                        qt[(local[j], c)] += a;
                    }
                }
            }
            Block { members: m, lu: qt.lu() }
        })
        .collect();

    let mut pi = vec![1.0 / n as f64; n];
    let mut xi = vec![1.0 / nb as f64; nb];
    let mut last = f64::INFINITY;
    for it in 1..=max_iterations {
        if nb > 1 {
            aggregate(chain, &block, &blocks, &pi, &mut xi)?;
            for b in &blocks {
                let mass: f64 = b.members.iter().map(|&i| pi[i]).sum();
                for &i in &b.members {
                    pi[i] *= xi[block[i]] / mass;
                }
            }
        }
        for (bi, b) in blocks.iter().enumerate() {
            let rhs = DVector::from_iterator(
                b.members.len(),
                b.members.iter().map(|&j| {
                    -incoming[j]
                        .iter()
                        .filter(|(i, _)| block[*i] != bi)
                        .map(|&(i, a)| pi[i] * a)
                        .sum::<f64>()
                }),
            );
            let sol = b
                .lu
                .solve(&rhs)
                .ok_or_else(|| Error::Reducible(format!("block {bi} has no exit")))?;
            for (&i, v) in b.members.iter().zip(sol.iter()) {
                pi[i] = v.max(0.0);
            }
        }
        let s: f64 = pi.iter().sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Reducible("aggregation lost all mass".into()));
        }
        pi.iter_mut().for_each(|p| *p /= s);
        last = residual(chain, &pi);
        if last <= tol {
            let boundary_mass = pi
                .iter()
                .zip(&chain.boundary)
                .filter(|(_, b)| **b)
                .map(|(p, _)| p)
                .sum();
            return Ok(SparseStationary {
                distribution: pi,
                iterations: it,
                residual: last,
                boundary_mass,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        residual: last,
    })
}

/// Block masses from the aggregated chain, by Gauss-Seidel warm-started at
/// `xi`.
fn aggregate(
    chain: &SparseChain,
    block: &[usize],
    blocks: &[Block],
    pi: &[f64],
    xi: &mut [f64],
) -> Result<()> {
    let nb = blocks.len();
    let mut into: Vec<HashMap<usize, f64>> = vec![HashMap::new(); nb];
    let mut out_rate = vec![0.0; nb];
    for (bi, b) in blocks.iter().enumerate() {
        let mass: f64 = b.members.iter().map(|&i| pi[i]).sum();
        for &i in &b.members {
            let w = if mass > 0.0 {
                pi[i] / mass
            } else {
                1.0 / b.members.len() as f64
            };
            for &(j, a) in &chain.transitions[i] {
                let bj = block[j];
                if bj != bi {
                    *into[bj].entry(bi).or_insert(0.0) += w * a;
                    out_rate[bi] += w * a;
                }
            }
        }
    }
    let into: Vec<Vec<(usize, f64)>> = into.into_iter().map(|m| m.into_iter().collect()).collect();
    for _ in 0..100_000 {
        let mut change = 0.0f64;
        for j in 0..nb {
            if out_rate[j] <= 0.0 {
                return Err(Error::Reducible(format!("aggregate block {j} is absorbing")));
            }
            let v = into[j].iter().map(|&(i, a)| xi[i] * a).sum::<f64>() / out_rate[j];
            change = change.max((v - xi[j]).abs() / v.max(1e-300));
            xi[j] = v;
        }
        let s: f64 = xi.iter().sum();
        xi.iter_mut().for_each(|v| *v /= s);
        if change < 1e-12 {
            return Ok(());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;

    #[test]
    fn small_cascade_box() {
        let net = fixtures::birth_conversion_death();
        let x0 = PopulationState::new(vec![1, 1, 1]).unwrap();
        let chain = truncate_network(&net, &x0, &[3, 3, 3]).unwrap();
        assert_eq!(chain.len(), 64);
        assert!(chain.is_boundary(chain.index_of(&PopulationState::new(vec![3, 0, 0]).unwrap()).unwrap()));
        assert!(!chain.is_boundary(chain.index_of(&PopulationState::new(vec![1, 1, 1]).unwrap()).unwrap()));
    }

    #[test]
    fn blocking_does_not_change_the_answer() {
        let net = fixtures::birth_conversion_death();
        let x0 = PopulationState::new(vec![1, 1, 1]).unwrap();
        let chain = truncate_network(&net, &x0, &[6, 6, 6]).unwrap();
        let coarse: Vec<usize> = chain
            .states()
            .iter()
            .map(|x| (x.counts()[0] + x.counts()[1]) as usize * 100 + x.counts()[2] as usize)
            .collect();
        let fine: Vec<usize> = (0..chain.len()).collect();
        let a = stationary_sparse(&chain, &coarse, 1e-11, 500).unwrap();
        let b = stationary_sparse(&chain, &fine, 1e-11, 20_000).unwrap();
        for (p, q) in a.distribution.iter().zip(&b.distribution) {
            assert_relative_eq!(*p, *q, epsilon = 1e-8);
        }
    }

    #[test]
    fn matches_dense_solve() {
        let net = fixtures::birth_conversion_death_with([1.0, 2.0, 3.0, 0.5, 1.5]);
        let x0 = PopulationState::new(vec![0, 0, 0]).unwrap();
        let chain = truncate_network(&net, &x0, &[4, 4, 4]).unwrap();
        let n = chain.len();
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            for &(j, a) in chain.transitions(i) {
                row[j] = a;
            }
        }
        let dense = super::super::stationary_distribution(
            &crate::model::ExplicitChain::from_rates(&rows).unwrap(),
        )
        .unwrap();
        let blocks: Vec<usize> = chain.states().iter().map(|x| x.counts()[2] as usize).collect();
        let s = stationary_sparse(&chain, &blocks, 1e-12, 1000).unwrap();
        for (p, q) in s.distribution.iter().zip(&dense) {
            assert_relative_eq!(*p, *q, epsilon = 1e-9);
        }
    }
}
