//! Recognition of single-particle-exchange ("autocatalytic") networks and
//! extraction of their stationary parameters.
//!
//! A network qualifies when
//! 1. every reaction has the shape `S_i + (m-1) S_j -> m S_j`,
//! 2. every exchanging pair also exchanges monomolecularly in both
//!    directions,
//! 3. the bidirectional monomolecular exchange graph connects all species,
//! 4. for each target species all incoming rate vectors are proportional
//!    with the same molecularity support, yielding the normalized
//!    higher-order weights `beta`, and
//! 5. the monomolecular rate skeleton is reversible as a Markov kernel,
//!    yielding the positive weights `lambda` via detailed balance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{ComplexVec, Reaction, ReactionNetwork};

/// Relative tolerance used for the proportionality check of condition (4)
/// and the cycle-consistency check of condition (5).
pub const RATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("exchange graph is not connected")]
    NotConnected,
    #[error("monomolecular skeleton violates detailed balance on edge ({i}, {j})")]
    NotReversible { i: usize, j: usize },
    #[error("missing monomolecular rate for ordered pair ({i}, {j})")]
    MissingRate { i: usize, j: usize },
    #[error("transition matrix must be square with zero diagonal and non-negative entries")]
    InvalidMatrix,
    #[error("a chain needs at least 2 sites, got {0}")]
    ChainTooShort(usize),
    #[error("rates must be positive")]
    NonPositiveRate,
}

/// Parameters of a recognized network.
///
/// `lambda` is anchored at `lambda[0] = 1`; it depends only on rate ratios.
/// `beta[i]` lists `(beta_i^2, ..., beta_i^{n_i})` where `n_i` is the
/// highest molecularity of reactions producing `S_i`; molecularities absent
/// from the input are stored as explicit zeros. `pairs` are the unordered
/// exchange pairs and `alpha1` the monomolecular rates per ordered pair.
#[derive(Clone, Debug, PartialEq)]
pub struct AutocatalyticProfile {
    pub lambda: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub pairs: BTreeSet<(usize, usize)>,
    pub alpha1: BTreeMap<(usize, usize), f64>,
}

/// A single failed condition with context.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Violation {
    /// Condition number, 1-5.
    pub condition: u8,
    pub reason: String,
    pub offending: Vec<String>,
}

/// All conditions found violated by the classifier; never empty.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ViolationList {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ViolationList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(
                f,
                "condition ({}): {} [{}]",
                v.condition,
                v.reason,
                v.offending.join("; ")
            )?;
        }
        Ok(())
    }
}

impl AutocatalyticProfile {
    pub fn num_species(&self) -> usize {
        self.lambda.len()
    }

    /// Highest incoming molecularity of species `i` (1 when `beta[i]` is
    /// empty or all zero).
    pub fn molecularity(&self, i: usize) -> u32 {
        let trailing = self.beta[i]
            .iter()
            .rposition(|&b| b > 0.0)
            .map(|p| p + 2)
            .unwrap_or(1);
        trailing as u32
    }

    /// Highest incoming molecularity over all species.
    pub fn max_molecularity(&self) -> u32 {
        (0..self.num_species())
            .map(|i| self.molecularity(i))
            .max()
            .unwrap_or(1)
    }

    /// `beta_i^k` for `k >= 2`; zero when absent.
    pub fn beta_k(&self, i: usize, k: u32) -> f64 {
        debug_assert!(k >= 2);
        self.beta[i].get(k as usize - 2).copied().unwrap_or(0.0)
    }

    /// Rebuild the reaction network encoded by this profile: monomolecular
    /// rates from `alpha1`, higher molecularities from `beta` (one bundle
    /// per exchange direction).
    pub fn synthesize(&self, species: Vec<String>) -> ReactionNetwork {
        let n = self.num_species();
        assert_eq!(species.len(), n);
        let mut reactions = Vec::new();
        for (&(i, j), &a1) in &self.alpha1 {
            let mut reactant = vec![0u32; n];
            reactant[i] = 1;
            let mut product = vec![0u32; n];
            product[j] = 1;
            reactions.push(Reaction {
                reactant: ComplexVec(reactant),
                product: ComplexVec(product),
                rate: a1,
            });
            for (offset, &b) in self.beta[j].iter().enumerate() {
                if b <= 0.0 {
                    continue;
                }
                let m = offset as u32 + 2;
                let mut reactant = vec![0u32; n];
                reactant[i] += 1;
                reactant[j] += m - 1;
                let mut product = vec![0u32; n];
                product[j] = m;
                reactions.push(Reaction {
                    reactant: ComplexVec(reactant),
                    product: ComplexVec(product),
                    rate: a1 * b,
                });
            }
        }
        ReactionNetwork::new(species, reactions).expect("profile synthesis is always valid")
    }

    pub fn default_species_names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("S{i}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ProfileFile::from(self)).expect("profile serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let file: ProfileFile = serde_json::from_str(text)?;
        Ok(file.into())
    }
}

/// JSON wire format: `lambda`, `beta` (array per species), `pairs`, plus
/// the monomolecular rates for reconstruction.
#[derive(Serialize, Deserialize)]
struct ProfileFile {
    lambda: Vec<f64>,
    beta: Vec<Vec<f64>>,
    pairs: Vec<(usize, usize)>,
    alpha1: Vec<Alpha1Entry>,
}

#[derive(Serialize, Deserialize)]
struct Alpha1Entry {
    from: usize,
    to: usize,
    rate: f64,
}

impl From<&AutocatalyticProfile> for ProfileFile {
    fn from(p: &AutocatalyticProfile) -> Self {
        ProfileFile {
            lambda: p.lambda.clone(),
            beta: p.beta.clone(),
            pairs: p.pairs.iter().copied().collect(),
            alpha1: p
                .alpha1
                .iter()
                .map(|(&(from, to), &rate)| Alpha1Entry { from, to, rate })
                .collect(),
        }
    }
}

impl From<ProfileFile> for AutocatalyticProfile {
    fn from(f: ProfileFile) -> Self {
        AutocatalyticProfile {
            lambda: f.lambda,
            beta: f.beta,
            pairs: f.pairs.into_iter().collect(),
            alpha1: f
                .alpha1
                .into_iter()
                .map(|e| ((e.from, e.to), e.rate))
                .collect(),
        }
    }
}

/// One reaction of the exchange form, decomposed.
struct ExchangeReaction {
    source: usize,
    target: usize,
    molecularity: u32,
    rate: f64,
}

/// Try to decompose a reaction as `S_i + (m-1) S_j -> m S_j`.
fn decompose(r: &Reaction) -> Option<ExchangeReaction> {
    let product_support: Vec<usize> = r
        .product
        .0
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(i, _)| i)
        .collect();
    if product_support.len() != 1 {
        return None;
    }
    let target = product_support[0];
    let m = r.product.0[target];
    let mut source = None;
    for (i, &k) in r.reactant.0.iter().enumerate() {
        let expected_j = if i == target { m - 1 } else { 0 };
        if i == target {
            if k != expected_j {
                return None;
            }
        } else if k == 1 {
            if source.replace(i).is_some() {
                return None;
            }
        } else if k != 0 {
            return None;
        }
    }
    let source = source?;
    Some(ExchangeReaction {
        source,
        target,
        molecularity: m,
        rate: r.rate,
    })
}

/// Decide whether `net` is autocatalytic; on success extract the profile,
/// on failure list every violated condition. Classification failure is a
/// value, not an error.
pub fn classify_autocatalytic(
    net: &ReactionNetwork,
) -> Result<AutocatalyticProfile, ViolationList> {
    let n = net.num_species();
    let mut violations: Vec<Violation> = Vec::new();

    if net.reactions().is_empty() {
        return Err(ViolationList {
            violations: vec![Violation {
                condition: 3,
                reason: "network has no reactions".into(),
                offending: vec![],
            }],
        });
    }

    // Condition (1): exchange form.
    let mut groups: BTreeMap<(usize, usize), BTreeMap<u32, f64>> = BTreeMap::new();
    let mut bad_form = Vec::new();
    for (idx, r) in net.reactions().iter().enumerate() {
        match decompose(r) {
            Some(ex) => {
                groups
                    .entry((ex.source, ex.target))
                    .or_default()
                    .insert(ex.molecularity, ex.rate);
            }
            None => bad_form.push(net.reaction_display(idx)),
        }
    }
    if !bad_form.is_empty() {
        violations.push(Violation {
            condition: 1,
            reason: "reactions are not of the form S_i + (m-1) S_j -> m S_j".into(),
            offending: bad_form,
        });
    }

    // Condition (2): both monomolecular directions for every exchanging pair.
    let mut missing_mono = Vec::new();
    for &(i, j) in groups.keys() {
        let fwd = groups.get(&(i, j)).and_then(|g| g.get(&1)).is_some();
        let bwd = groups.get(&(j, i)).and_then(|g| g.get(&1)).is_some();
        if !fwd || !bwd {
            missing_mono.push(format!(
                "pair ({}, {}) lacks {}",
                net.species()[i],
                net.species()[j],
                match (fwd, bwd) {
                    (false, false) => "both monomolecular reactions",
                    (false, true) => "the forward monomolecular reaction",
                    (true, false) => "the backward monomolecular reaction",
                    _ => unreachable!(),
                }
            ));
        }
    }
    missing_mono.dedup();
    if !missing_mono.is_empty() {
        violations.push(Violation {
            condition: 2,
            reason: "mass exchange must be bidirectional with monomolecular reactions".into(),
            offending: missing_mono,
        });
    }

    // Bidirectional monomolecular edges.
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut alpha1: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(i, j), g) in &groups {
        if let (Some(&a_ij), Some(&a_ji)) = (g.get(&1), groups.get(&(j, i)).and_then(|h| h.get(&1)))
        {
            pairs.insert((i.min(j), i.max(j)));
            alpha1.insert((i, j), a_ij);
            alpha1.insert((j, i), a_ji);
        }
    }

    // Condition (3): the exchange graph spans all species in one component.
    let component = reachable_from(0, n, &pairs);
    if component.iter().any(|&v| !v) {
        let isolated: Vec<String> = component
            .iter()
            .enumerate()
            .filter(|(_, &seen)| !seen)
            .map(|(i, _)| net.species()[i].clone())
            .collect();
        violations.push(Violation {
            condition: 3,
            reason: "bidirectional monomolecular exchanges do not form a single linkage class \
                     covering every species"
                .into(),
            offending: isolated,
        });
    }

    // Condition (4): incoming rate vectors proportional per target.
    let mut beta: Vec<Vec<f64>> = vec![Vec::new(); n];
    for target in 0..n {
        let sources: Vec<usize> = groups
            .keys()
            .filter(|&&(_, t)| t == target)
            .map(|&(s, _)| s)
            .collect();
        // Normalize each source's vector by its monomolecular rate; sources
        // without one are already reported under condition (2).
        let mut normalized: Vec<(usize, Vec<f64>)> = Vec::new();
        for &s in &sources {
            let g = &groups[&(s, target)];
            let Some(&a1) = g.get(&1) else { continue };
            let top = *g.keys().max().unwrap();
            let mut v = vec![0.0; top as usize];
            for (&m, &rate) in g {
                v[m as usize - 1] = rate / a1;
            }
            normalized.push((s, v));
        }
        if normalized.is_empty() {
            continue;
        }
        let (_, reference) = &normalized[0];
        let mut mismatched = Vec::new();
        for (s, v) in &normalized[1..] {
            let same_support = v.len() == reference.len()
                && v.iter()
                    .zip(reference)
                    .all(|(&a, &b)| (a == 0.0) == (b == 0.0));
            let proportional = same_support
                && v.iter().zip(reference).all(|(&a, &b)| {
                    a == b || (a - b).abs() <= RATE_TOLERANCE * a.abs().max(b.abs())
                });
            if !proportional {
                mismatched.push(format!(
                    "sources {} and {} feed {} with non-proportional rate vectors",
                    net.species()[normalized[0].0],
                    net.species()[*s],
                    net.species()[target],
                ));
            }
        }
        if mismatched.is_empty() {
            beta[target] = reference[1..].to_vec();
        } else {
            violations.push(Violation {
                condition: 4,
                reason: "incoming rate vectors must share molecularity support and be \
                         proportional"
                    .into(),
                offending: mismatched,
            });
        }
    }

    // Condition (5): reversible monomolecular skeleton.
    let lambda = if violations.iter().any(|v| v.condition == 3) {
        None
    } else {
        match solve_lambda(n, &alpha1, &pairs) {
            Ok(l) => Some(l),
            Err(ClassifyError::NotReversible { i, j }) => {
                violations.push(Violation {
                    condition: 5,
                    reason: "monomolecular rates admit no reversible stationary weight vector \
                             (cycle condition fails)"
                        .into(),
                    offending: vec![format!("edge ({}, {})", net.species()[i], net.species()[j])],
                });
                None
            }
            Err(e) => {
                violations.push(Violation {
                    condition: 5,
                    reason: e.to_string(),
                    offending: vec![],
                });
                None
            }
        }
    };

    match (violations.is_empty(), lambda) {
        (true, Some(lambda)) => Ok(AutocatalyticProfile {
            lambda,
            beta,
            pairs,
            alpha1,
        }),
        _ => Err(ViolationList { violations }),
    }
}

fn reachable_from(start: usize, n: usize, pairs: &BTreeSet<(usize, usize)>) -> Vec<bool> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in pairs {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    if n == 0 {
        return seen;
    }
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Solve the detailed-balance equations `lambda_i a1_{i,j} = lambda_j a1_{j,i}`
/// on a connected exchange graph, anchored at `lambda[0] = 1`. Tree edges fix
/// the values; every non-tree edge is verified within [`RATE_TOLERANCE`].
pub fn solve_lambda(
    n: usize,
    alpha1: &BTreeMap<(usize, usize), f64>,
    pairs: &BTreeSet<(usize, usize)>,
) -> Result<Vec<f64>, ClassifyError> {
    for &(i, j) in pairs {
        for (a, b) in [(i, j), (j, i)] {
            match alpha1.get(&(a, b)) {
                Some(&r) if r > 0.0 => {}
                _ => return Err(ClassifyError::MissingRate { i: a, j: b }),
            }
        }
    }
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in pairs {
        adj[i].push(j);
        adj[j].push(i);
    }
    for neighbors in adj.iter_mut() {
        neighbors.sort_unstable();
    }
    let mut lambda = vec![f64::NAN; n];
    lambda[0] = 1.0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut tree_edges = BTreeSet::new();
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if lambda[j].is_nan() {
                lambda[j] = lambda[i] * alpha1[&(i, j)] / alpha1[&(j, i)];
                tree_edges.insert((i.min(j), i.max(j)));
                queue.push_back(j);
            }
        }
    }
    if lambda.iter().any(|l| l.is_nan()) {
        return Err(ClassifyError::NotConnected);
    }
    for &(i, j) in pairs {
        if tree_edges.contains(&(i, j)) {
            continue;
        }
        let lhs = lambda[i] * alpha1[&(i, j)];
        let rhs = lambda[j] * alpha1[&(j, i)];
        if (lhs - rhs).abs() > RATE_TOLERANCE * lhs.max(rhs) {
            return Err(ClassifyError::NotReversible { i, j });
        }
    }
    Ok(lambda)
}

/// Build the inclusion-process network of a transition matrix `p`: for
/// every ordered pair with `p[i][j] > 0`, emit `S_i -> S_j` at rate
/// `p[i][j] * m / 2` and `S_i + S_j -> 2 S_j` at rate `p[i][j]`.
pub fn build_inclusion_network(p: &[Vec<f64>], m: f64) -> Result<ReactionNetwork, ClassifyError> {
    let n = p.len();
    if p.iter().any(|row| row.len() != n) {
        return Err(ClassifyError::InvalidMatrix);
    }
    if !(m > 0.0) {
        return Err(ClassifyError::NonPositiveRate);
    }
    let mut reactions = Vec::new();
    for (i, row) in p.iter().enumerate() {
        for (j, &pij) in row.iter().enumerate() {
            if pij < 0.0 || (i == j && pij != 0.0) {
                return Err(ClassifyError::InvalidMatrix);
            }
            if pij == 0.0 || i == j {
                continue;
            }
            let mut mono_reactant = vec![0u32; n];
            mono_reactant[i] = 1;
            let mut mono_product = vec![0u32; n];
            mono_product[j] = 1;
            reactions.push(Reaction {
                reactant: ComplexVec(mono_reactant),
                product: ComplexVec(mono_product),
                rate: pij * m / 2.0,
            });
            let mut bi_reactant = vec![0u32; n];
            bi_reactant[i] = 1;
            bi_reactant[j] = 1;
            let mut bi_product = vec![0u32; n];
            bi_product[j] = 2;
            reactions.push(Reaction {
                reactant: ComplexVec(bi_reactant),
                product: ComplexVec(bi_product),
                rate: pij,
            });
        }
    }
    Ok(
        ReactionNetwork::new(AutocatalyticProfile::default_species_names(n), reactions)
            .expect("builder output is always valid"),
    )
}

/// Nearest-neighbour asymmetric inclusion chain: forward hop rate `p`,
/// backward hop rate `q`, with diffusion parameter fixed to `m = 2`.
pub fn build_asip_network(n: usize, p: f64, q: f64) -> Result<ReactionNetwork, ClassifyError> {
    build_asip_network_m(n, p, q, 2.0)
}

pub fn build_asip_network_m(
    n: usize,
    p: f64,
    q: f64,
    m: f64,
) -> Result<ReactionNetwork, ClassifyError> {
    if n < 2 {
        return Err(ClassifyError::ChainTooShort(n));
    }
    if !(p > 0.0) || !(q > 0.0) {
        return Err(ClassifyError::NonPositiveRate);
    }
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n - 1 {
        matrix[i][i + 1] = p;
        matrix[i + 1][i] = q;
    }
    build_inclusion_network(&matrix, m)
}

/// Random profile satisfying all five conditions, for verification runs:
/// a random connected exchange graph, detailed-balanced monomolecular
/// rates generated from random weights, and random proportional bundles.
pub fn random_profile(n: usize, rng: &mut impl Rng) -> AutocatalyticProfile {
    assert!(n >= 2);
    let mut lambda: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let anchor = lambda[0];
    for l in lambda.iter_mut() {
        *l /= anchor;
    }
    let mut pairs = BTreeSet::new();
    for j in 1..n {
        let i = rng.gen_range(0..j);
        pairs.insert((i, j));
    }
    // Occasionally close a cycle to exercise the non-tree-edge check.
    if n >= 3 && rng.gen_bool(0.5) {
        for i in 0..n {
            for j in i + 1..n {
                if !pairs.contains(&(i, j)) {
                    pairs.insert((i, j));
                    break;
                }
            }
            if pairs.len() > n - 1 {
                break;
            }
        }
    }
    let mut alpha1 = BTreeMap::new();
    for &(i, j) in &pairs {
        let c = rng.gen_range(0.5..2.0);
        alpha1.insert((i, j), lambda[j] / c);
        alpha1.insert((j, i), lambda[i] / c);
    }
    let mut beta = Vec::with_capacity(n);
    for _ in 0..n {
        let top: u32 = *[1u32, 2, 2, 3].get(rng.gen_range(0..4)).unwrap();
        beta.push(match top {
            1 => vec![],
            2 => vec![rng.gen_range(0.2..2.0)],
            _ => {
                let b2 = if rng.gen_bool(0.3) {
                    0.0
                } else {
                    rng.gen_range(0.1..1.5)
                };
                vec![b2, rng.gen_range(0.2..2.0)]
            }
        });
    }
    AutocatalyticProfile {
        lambda,
        beta,
        pairs,
        alpha1,
    }
}

/// Random autocatalytic network over `n` species (see [`random_profile`]).
pub fn random_autocatalytic_network(n: usize, rng: &mut impl Rng) -> ReactionNetwork {
    random_profile(n, rng).synthesize(AutocatalyticProfile::default_species_names(n))
}
