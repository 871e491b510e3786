//! Ground truth for stationary distributions: enumerate the fixed-mass
//! state space, verify irreducibility, solve the master equation directly,
//! and evaluate balance-equation residuals for any candidate distribution.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{propensity_unchecked, ReactionNetwork};
use crate::numeric::relative_mismatch;

/// Hard cap on enumerated states; the oracle is a desk-scale instrument.
pub const STATE_CAP: u128 = 1_000_000;

/// Dense direct solves are used up to this many states, power iteration on
/// the uniformized chain beyond (and as a fallback).
const DENSE_SOLVE_CAP: usize = 2048;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("network is not mass-preserving; fixed-total state spaces do not apply")]
    NotMassPreserving,
    #[error("state space on total {total} is not irreducible")]
    NotIrreducible { total: u32 },
    #[error("state space has {states} states, exceeding the cap of {cap}")]
    TooManyStates { states: u128, cap: u128 },
    #[error("master-equation solve did not reach the residual tolerance (best {residual:.3e})")]
    SolveFailed { residual: f64 },
    #[error("distributions are over different state lists")]
    StateMismatch,
    #[error("invalid balance partition: {0}")]
    InvalidPartition(String),
}

/// A probability distribution enumerated over the lexicographic state list
/// of a fixed total.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactDistribution {
    pub total: u32,
    pub states: Vec<Vec<u32>>,
    pub probs: Vec<f64>,
}

impl ExactDistribution {
    pub fn index_map(&self) -> HashMap<Vec<u32>, usize> {
        self.states
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect()
    }
}

/// Number of compositions of `total` into `n` parts, `C(total + n - 1, n - 1)`.
pub fn num_states(n: usize, total: u32) -> u128 {
    if n == 0 {
        return u128::from(total == 0);
    }
    let mut acc: u128 = 1;
    for k in 1..n as u128 {
        acc = acc.saturating_mul(total as u128 + k) / k;
    }
    acc
}

/// All count vectors with `|x| = total` over `n` species, lexicographic.
pub fn enumerate_states(n: usize, total: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; n];
    fn rec(i: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i + 1 == current.len() {
            current[i] = remaining;
            out.push(current.clone());
            return;
        }
        for v in 0..=remaining {
            current[i] = v;
            rec(i + 1, remaining - v, current, out);
        }
    }
    if n == 0 {
        if total == 0 {
            out.push(vec![]);
        }
        return out;
    }
    rec(0, total, &mut current, &mut out);
    out
}

/// Outgoing transitions per state: `(target index, rate)` with rates summed
/// over parallel reactions.
fn transition_table(
    net: &ReactionNetwork,
    states: &[Vec<u32>],
    index: &HashMap<Vec<u32>, usize>,
) -> Vec<Vec<(usize, f64)>> {
    let deltas: Vec<Vec<i64>> = net.reactions().iter().map(|r| r.net_change()).collect();
    states
        .iter()
        .map(|x| {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for (r, reaction) in net.reactions().iter().enumerate() {
                let rate = propensity_unchecked(reaction, x);
                if rate <= 0.0 {
                    continue;
                }
                let mut y = Vec::with_capacity(x.len());
                let mut valid = true;
                for (i, &xi) in x.iter().enumerate() {
                    let v = xi as i64 + deltas[r][i];
                    if v < 0 {
                        valid = false;
                        break;
                    }
                    y.push(v as u32);
                }
                if !valid {
                    continue;
                }
                if let Some(&t) = index.get(&y) {
                    match row.iter_mut().find(|(s, _)| *s == t) {
                        Some((_, acc)) => *acc += rate,
                        None => row.push((t, rate)),
                    }
                }
            }
            row
        })
        .collect()
}

/// True iff the fixed-total state space is strongly connected under the
/// active-reaction transition relation.
pub fn check_irreducible(net: &ReactionNetwork, total: u32) -> Result<bool, OracleError> {
    if !net.is_mass_preserving() {
        return Err(OracleError::NotMassPreserving);
    }
    let count = num_states(net.num_species(), total);
    if count > STATE_CAP {
        return Err(OracleError::TooManyStates {
            states: count,
            cap: STATE_CAP,
        });
    }
    let states = enumerate_states(net.num_species(), total);
    let index = states
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect::<HashMap<_, _>>();
    let fwd = transition_table(net, &states, &index);
    let mut bwd: Vec<Vec<usize>> = vec![Vec::new(); states.len()];
    for (s, row) in fwd.iter().enumerate() {
        for &(t, _) in row {
            bwd[t].push(s);
        }
    }
    let reach = |adj: &dyn Fn(usize) -> Vec<usize>| -> bool {
        let mut seen = vec![false; states.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for w in adj(v) {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == states.len()
    };
    let forward_ok = reach(&|v| fwd[v].iter().map(|&(t, _)| t).collect());
    let backward_ok = reach(&|v| bwd[v].clone());
    Ok(forward_ok && backward_ok)
}

/// Relative master-equation residual of `probs` under the transition table:
/// max over states of |inflow - outflow| / max(inflow, outflow).
fn master_residual(transitions: &[Vec<(usize, f64)>], probs: &[f64]) -> f64 {
    let mut inflow = vec![0.0_f64; probs.len()];
    let mut outflow = vec![0.0_f64; probs.len()];
    for (s, row) in transitions.iter().enumerate() {
        for &(t, rate) in row {
            outflow[s] += probs[s] * rate;
            inflow[t] += probs[s] * rate;
        }
    }
    inflow
        .iter()
        .zip(&outflow)
        .map(|(&i, &o)| relative_mismatch(i, o))
        .fold(0.0, f64::max)
}

/// Sup-norm master-equation residual normalized by the largest state
/// throughput: `max_x |inflow - outflow| / max_x outflow-rate`. The
/// criterion the iterative solver can meet globally; the relative residual
/// additionally holds wherever probabilities are not vanishingly small.
fn absolute_master_residual(transitions: &[Vec<(usize, f64)>], probs: &[f64]) -> f64 {
    let mut inflow = vec![0.0_f64; probs.len()];
    let mut outflow = vec![0.0_f64; probs.len()];
    let mut max_rate = 0.0_f64;
    for (s, row) in transitions.iter().enumerate() {
        let mut rate_sum = 0.0;
        for &(t, rate) in row {
            outflow[s] += probs[s] * rate;
            inflow[t] += probs[s] * rate;
            rate_sum += rate;
        }
        max_rate = max_rate.max(rate_sum);
    }
    if max_rate == 0.0 {
        return 0.0;
    }
    inflow
        .iter()
        .zip(&outflow)
        .map(|(&i, &o)| (i - o).abs())
        .fold(0.0, f64::max)
        / max_rate
}

fn solve_dense(transitions: &[Vec<(usize, f64)>]) -> Option<Vec<f64>> {
    let s = transitions.len();
    // A = Q^T with the last balance equation replaced by normalization.
    let mut a = DMatrix::<f64>::zeros(s, s);
    for (x, row) in transitions.iter().enumerate() {
        for &(y, rate) in row {
            if x != y {
                a[(y, x)] += rate;
                a[(x, x)] -= rate;
            }
        }
    }
    let mut b = DVector::<f64>::zeros(s);
    for c in 0..s {
        a[(s - 1, c)] = 1.0;
    }
    b[s - 1] = 1.0;
    let lu = a.clone().lu();
    let mut x = lu.solve(&b)?;
    // One round of iterative refinement squeezes the residual to machine
    // precision on these small well-conditioned systems.
    for _ in 0..2 {
        let r = &b - &a * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
    }
    let mut probs: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
    let sum: f64 = probs.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return None;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    Some(probs)
}

fn solve_power_iteration(transitions: &[Vec<(usize, f64)>]) -> (Vec<f64>, f64) {
    let s = transitions.len();
    let out_rate: Vec<f64> = transitions
        .iter()
        .map(|row| row.iter().map(|&(_, r)| r).sum())
        .collect();
    // Strictly above the max outflow: with equality the self-loop
    // probability vanishes wherever the outflow is maximal, and chains with
    // constant outflow (every mass-preserving exchange network) turn into
    // periodic jump chains on which the iteration oscillates forever.
    let uniformization = out_rate.iter().fold(0.0_f64, |a, &b| a.max(b)).max(1e-300) * 1.05;
    let mut pi = vec![1.0 / s as f64; s];
    let mut next = vec![0.0_f64; s];
    let mut best_residual = f64::INFINITY;
    for sweep in 0..2_000_000usize {
        for (k, v) in next.iter_mut().enumerate() {
            *v = pi[k] * (1.0 - out_rate[k] / uniformization);
        }
        for (x, row) in transitions.iter().enumerate() {
            for &(y, rate) in row {
                next[y] += pi[x] * rate / uniformization;
            }
        }
        let delta = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if delta <= 1e-13 || sweep % 256 == 255 {
            let sum: f64 = pi.iter().sum();
            for p in pi.iter_mut() {
                *p /= sum;
            }
            best_residual =
                master_residual(transitions, &pi).min(absolute_master_residual(transitions, &pi));
            if best_residual <= 1e-12 {
                break;
            }
        }
    }
    (pi, best_residual)
}

/// Solve the stationary master equation `pi Q = 0`, `sum pi = 1` on the
/// enumerated fixed-total state space. The relative residual of the
/// returned distribution is at most 1e-12 at every state.
pub fn exact_stationary(
    net: &ReactionNetwork,
    total: u32,
) -> Result<ExactDistribution, OracleError> {
    exact_stationary_with_dense_cap(net, total, DENSE_SOLVE_CAP)
}

fn exact_stationary_with_dense_cap(
    net: &ReactionNetwork,
    total: u32,
    dense_cap: usize,
) -> Result<ExactDistribution, OracleError> {
    let n = net.num_species();
    let count = num_states(n, total);
    if count > STATE_CAP {
        return Err(OracleError::TooManyStates {
            states: count,
            cap: STATE_CAP,
        });
    }
    if !check_irreducible(net, total)? {
        return Err(OracleError::NotIrreducible { total });
    }
    let states = enumerate_states(n, total);
    let index = states
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect::<HashMap<_, _>>();
    let transitions = transition_table(net, &states, &index);

    if states.len() == 1 {
        return Ok(ExactDistribution {
            total,
            states,
            probs: vec![1.0],
        });
    }

    // Quality gate: the relative residual everywhere, or the normalized
    // sup-norm residual (relative precision at states carrying
    // probabilities near the underflow threshold is not attainable by the
    // iterative path and does not affect any downstream statistic).
    let good = |transitions: &[Vec<(usize, f64)>], probs: &[f64]| -> (f64, bool) {
        let relative = master_residual(transitions, probs);
        if relative <= 1e-12 {
            return (relative, true);
        }
        let absolute = absolute_master_residual(transitions, probs);
        (relative.min(absolute), absolute <= 1e-12)
    };

    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    if states.len() <= dense_cap {
        if let Some(probs) = solve_dense(&transitions) {
            let (residual, ok) = good(&transitions, &probs);
            best = Some((probs, residual, ok));
        }
    }
    if best.as_ref().is_none_or(|(_, _, ok)| !ok) {
        let (probs, _) = solve_power_iteration(&transitions);
        let (residual, ok) = good(&transitions, &probs);
        if best.as_ref().is_none_or(|(_, r, _)| residual < *r) {
            best = Some((probs, residual, ok));
        }
    }
    let (probs, residual, ok) = best.expect("at least one solver ran");
    if !ok {
        return Err(OracleError::SolveFailed { residual });
    }
    Ok(ExactDistribution {
        total,
        states,
        probs,
    })
}

/// Total variation distance `(1/2) sum |p - q|` between two distributions
/// on the same state list.
pub fn total_variation(a: &ExactDistribution, b: &ExactDistribution) -> Result<f64, OracleError> {
    if a.total != b.total || a.states != b.states {
        return Err(OracleError::StateMismatch);
    }
    Ok(a.probs
        .iter()
        .zip(&b.probs)
        .map(|(p, q)| (p - q).abs())
        .sum::<f64>()
        / 2.0)
}

/// A double partition of the reaction set: the `left` blocks and the
/// `right` blocks must each partition all reaction indices. Block `i`
/// asserts that the inflow to any state via `left[i]` reactions equals the
/// outflow via `right[i]` reactions under the candidate distribution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BalancePartition {
    pub blocks: Vec<BalanceBlock>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BalanceBlock {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl BalancePartition {
    pub fn validate(&self, num_reactions: usize) -> Result<(), OracleError> {
        let mark = |side: &str, indices: &[usize], seen: &mut [bool]| {
            for &r in indices {
                if r >= num_reactions {
                    return Err(OracleError::InvalidPartition(format!(
                        "reaction index {r} out of range"
                    )));
                }
                if seen[r] {
                    return Err(OracleError::InvalidPartition(format!(
                        "reaction {r} appears in two {side} blocks"
                    )));
                }
                seen[r] = true;
            }
            Ok(())
        };
        let mut left_seen = vec![false; num_reactions];
        let mut right_seen = vec![false; num_reactions];
        for block in &self.blocks {
            mark("left", &block.left, &mut left_seen)?;
            mark("right", &block.right, &mut right_seen)?;
        }
        for (seen, side) in [(&left_seen, "left"), (&right_seen, "right")] {
            if let Some(r) = seen.iter().position(|&s| !s) {
                return Err(OracleError::InvalidPartition(format!(
                    "reaction {r} missing from the {side} blocks"
                )));
            }
        }
        Ok(())
    }

    /// One block per realized net reaction vector `a`: left = reactions
    /// with `reactant - product = a`, right = those with `reactant -
    /// product = -a`.
    pub fn per_reaction_vector(net: &ReactionNetwork) -> Self {
        // Vectors a = reactant - product = -(net change), closed under
        // negation so that every reaction lands in exactly one left block
        // (key = its vector) and one right block (key = the negation).
        let vectors: Vec<Vec<i64>> = net
            .reactions()
            .iter()
            .map(|r| r.net_change().iter().map(|&d| -d).collect())
            .collect();
        let mut keys: Vec<Vec<i64>> = Vec::new();
        for a in &vectors {
            if !keys.contains(a) {
                keys.push(a.clone());
            }
            let neg: Vec<i64> = a.iter().map(|&d| -d).collect();
            if !keys.contains(&neg) {
                keys.push(neg);
            }
        }
        let blocks = keys
            .iter()
            .map(|key| {
                let neg: Vec<i64> = key.iter().map(|&d| -d).collect();
                BalanceBlock {
                    left: (0..vectors.len()).filter(|&r| vectors[r] == *key).collect(),
                    right: (0..vectors.len()).filter(|&r| vectors[r] == neg).collect(),
                }
            })
            .collect();
        BalancePartition { blocks }
    }

    /// One block per complex: left = reactions producing the complex
    /// (their inflow balances), right = reactions consuming it (outflow).
    /// With a Poisson law at a complex-balance point these equations hold
    /// exactly.
    pub fn per_complex(net: &ReactionNetwork) -> Self {
        let (complexes, edges) = crate::structure::complex_graph(net);
        let blocks = (0..complexes.len())
            .map(|c| BalanceBlock {
                left: edges
                    .iter()
                    .enumerate()
                    .filter(|(_, &(_, dst))| dst == c)
                    .map(|(r, _)| r)
                    .collect(),
                right: edges
                    .iter()
                    .enumerate()
                    .filter(|(_, &(src, _))| src == c)
                    .map(|(r, _)| r)
                    .collect(),
            })
            .collect();
        BalancePartition { blocks }
    }

    /// The trivial single-block partition; its residual is the relative
    /// master-equation residual itself.
    pub fn trivial(net: &ReactionNetwork) -> Self {
        let all: Vec<usize> = (0..net.reactions().len()).collect();
        BalancePartition {
            blocks: vec![BalanceBlock {
                left: all.clone(),
                right: all,
            }],
        }
    }
}

/// Inflow side of a balance equation: `pi(x + reactant - product) *
/// lambda_r(x + reactant - product)` summed over a reaction set.
fn block_inflow(
    net: &ReactionNetwork,
    reactions: &[usize],
    x: &[u32],
    index: &HashMap<Vec<u32>, usize>,
    probs: &[f64],
) -> f64 {
    let mut acc = 0.0;
    for &r in reactions {
        let reaction = &net.reactions()[r];
        let delta = reaction.net_change();
        let mut shifted = Vec::with_capacity(x.len());
        let mut valid = true;
        for (i, &xi) in x.iter().enumerate() {
            let v = xi as i64 - delta[i];
            if v < 0 {
                valid = false;
                break;
            }
            shifted.push(v as u32);
        }
        if !valid {
            continue;
        }
        let Some(&s) = index.get(&shifted) else {
            continue;
        };
        acc += probs[s] * propensity_unchecked(reaction, &shifted);
    }
    acc
}

fn block_outflow(net: &ReactionNetwork, reactions: &[usize], x: &[u32], prob: f64) -> f64 {
    prob * reactions
        .iter()
        .map(|&r| propensity_unchecked(&net.reactions()[r], x))
        .sum::<f64>()
}

/// Max relative mismatch of the grouped balance equations over all states
/// and blocks.
pub fn generalized_balance_residual(
    net: &ReactionNetwork,
    partition: &BalancePartition,
    dist: &ExactDistribution,
) -> Result<f64, OracleError> {
    partition.validate(net.reactions().len())?;
    let index = dist.index_map();
    // Per-state scans are independent; a max reduction is deterministic
    // under any schedule.
    let worst = dist
        .states
        .par_iter()
        .enumerate()
        .map(|(s, x)| {
            partition
                .blocks
                .iter()
                .map(|block| {
                    let inflow = block_inflow(net, &block.left, x, &index, &dist.probs);
                    let outflow = block_outflow(net, &block.right, x, dist.probs[s]);
                    relative_mismatch(inflow, outflow)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Residual of the per-net-vector grouped balance equations.
pub fn reaction_vector_balance_residual(net: &ReactionNetwork, dist: &ExactDistribution) -> f64 {
    let partition = BalancePartition::per_reaction_vector(net);
    generalized_balance_residual(net, &partition, dist)
        .expect("per-reaction-vector partition is always valid")
}

/// Relative master-equation residual of an arbitrary candidate
/// distribution.
pub fn master_equation_residual(net: &ReactionNetwork, dist: &ExactDistribution) -> f64 {
    let partition = BalancePartition::trivial(net);
    generalized_balance_residual(net, &partition, dist).expect("trivial partition is always valid")
}
