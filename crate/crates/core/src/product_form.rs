//! Exact log-space evaluation of the product-form stationary distribution
//! `pi(x) = Z_N^{-1} prod_i f_i(x_i)` on the simplex `|x| = N`, where
//!
//! `f_i(m) = lambda_i^m / m! * prod_{l=1}^m (1 + sum_{k=2}^{n_i} beta_i^k
//! (l-1)(l-2)...(l-k+1))`.
//!
//! Factors grow super-exponentially once `n_i >= 3`, so every accumulation
//! is done on logarithms, with log-sum-exp reductions in a fixed ascending
//! index order for bit-stable results.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autocat::AutocatalyticProfile;
use crate::numeric::logsumexp;
use crate::oracle::{enumerate_states, num_states, ExactDistribution};

#[derive(Debug, Error)]
pub enum ProductFormError {
    #[error("fugacity {phi} is outside the radius of convergence {radius}")]
    FugacityOutsideRadius { phi: f64, radius: f64 },
    #[error("fugacity must be positive")]
    NonPositiveFugacity,
    #[error("volume must be positive")]
    NonPositiveVolume,
    #[error("state space has {states} states, exceeding the cap of {cap}")]
    StateSpaceTooLarge { states: u128, cap: u128 },
    #[error("condensation threshold must lie strictly between 0 and 1, got {0}")]
    InvalidTheta(f64),
}

/// log f_i(m): `m log lambda_i + sum_{l=1}^m [log poly_i(l) - log l]`,
/// accumulated in ascending `l`.
pub fn log_weight(profile: &AutocatalyticProfile, i: usize, m: u32) -> f64 {
    log_weight_table(profile, i, m)[m as usize]
}

/// log f_i(m) for all m = 0..=max in one ascending pass.
pub fn log_weight_table(profile: &AutocatalyticProfile, i: usize, max: u32) -> Vec<f64> {
    let log_lambda = profile.lambda[i].ln();
    let beta = &profile.beta[i];
    let mut out = Vec::with_capacity(max as usize + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for l in 1..=max as i64 {
        let mut poly = 1.0;
        let mut falling = 1.0;
        for (offset, &b) in beta.iter().enumerate() {
            falling *= (l - (offset as i64 + 1)) as f64;
            if falling <= 0.0 {
                // The factor (l - l) zeroes the product; later terms stay
                // zero as well.
                break;
            }
            poly += b * falling;
        }
        acc += poly.ln() - (l as f64).ln();
        out.push(l as f64 * log_lambda + acc);
    }
    out
}

/// The factor value ratio `f_i(m+1) / f_i(m)`; diagnostic probe for the
/// growth classes below.
pub fn growth_ratio(profile: &AutocatalyticProfile, i: usize, m: u32) -> f64 {
    let table = log_weight_table(profile, i, m + 1);
    (table[m as usize + 1] - table[m as usize]).exp()
}

/// Rescale every `beta_i^k` to `beta_i^k / V^{k-1}`, the profile of the
/// volume-scaled transition rates. `lambda` is unchanged.
pub fn scaled_profile(
    profile: &AutocatalyticProfile,
    volume: f64,
) -> Result<AutocatalyticProfile, ProductFormError> {
    if !(volume > 0.0) {
        return Err(ProductFormError::NonPositiveVolume);
    }
    let mut scaled = profile.clone();
    for beta in scaled.beta.iter_mut() {
        for (offset, b) in beta.iter_mut().enumerate() {
            *b /= volume.powi(offset as i32 + 1);
        }
    }
    Ok(scaled)
}

/// Growth class of a single factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Poisson,
    GeometricType,
    SuperExponential,
}

/// Classification of a factor's generating function: Poisson factors have
/// infinite radius of convergence, bimolecular ("geometric type") factors
/// have radius `(lambda beta^2)^{-1}`, three-molecular and higher factors
/// have radius zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorClass {
    pub kind: FactorKind,
    pub radius: f64,
}

pub fn classify_factor(profile: &AutocatalyticProfile, i: usize) -> FactorClass {
    match profile.molecularity(i) {
        1 => FactorClass {
            kind: FactorKind::Poisson,
            radius: f64::INFINITY,
        },
        2 => FactorClass {
            kind: FactorKind::GeometricType,
            radius: 1.0 / (profile.lambda[i] * profile.beta_k(i, 2)),
        },
        _ => FactorClass {
            kind: FactorKind::SuperExponential,
            radius: 0.0,
        },
    }
}

/// Cross-check a classification against the value ratio at a probe point
/// deep enough for the class to be visible: the ratio tends to 0 for
/// Poisson factors, to `1/radius` for geometric-type factors, and diverges
/// for super-exponential ones.
pub fn verify_factor_class(profile: &AutocatalyticProfile, i: usize, class: &FactorClass) -> bool {
    let lambda = profile.lambda[i];
    match class.kind {
        FactorKind::Poisson => {
            let m = 4000.0_f64.max(1000.0 * lambda) as u32;
            growth_ratio(profile, i, m) < 1e-2
        }
        FactorKind::GeometricType => {
            // ratio(m) = radius^-1 (1 + 1/m)/(1 + 1/(beta^2 m)): probe far
            // enough that the finite-m correction is below half a percent.
            let beta2 = profile.beta_k(i, 2);
            let m = 4000.0_f64.max(800.0 * (1.0 + 1.0 / beta2)).min(1e8) as u32;
            let probe_radius = 1.0 / growth_ratio(profile, i, m);
            (probe_radius - class.radius).abs() <= 0.01 * class.radius
        }
        FactorKind::SuperExponential => {
            let top = profile.molecularity(i);
            let scale = lambda * profile.beta_k(i, top);
            let m = 4000.0_f64
                .max((1e3 / scale).powf(1.0 / (top as f64 - 1.0)))
                .min(1e8) as u32;
            growth_ratio(profile, i, m) > 1e2
        }
    }
}

/// Result of [`generating_function_check`]: the truncated power series sum
/// and, for Poisson and geometric-type factors, its closed form.
#[derive(Clone, Copy, Debug)]
pub struct GeneratingFunctionCheck {
    pub truncated_sum: f64,
    pub closed_form: Option<f64>,
}

/// Evaluate `sum_{m<=truncation} phi^m f_i(m)` and the matching closed form
/// `exp(phi lambda_i)` (Poisson) or `(1 - lambda_i beta_i^2 phi)^{-1/beta_i^2}`
/// (geometric type, strictly inside the radius). Super-exponential factors
/// have an empty disc and always error.
pub fn generating_function_check(
    profile: &AutocatalyticProfile,
    i: usize,
    phi: f64,
    truncation: u32,
) -> Result<GeneratingFunctionCheck, ProductFormError> {
    if !(phi > 0.0) {
        return Err(ProductFormError::NonPositiveFugacity);
    }
    let class = classify_factor(profile, i);
    let closed_form = match class.kind {
        FactorKind::Poisson => Some((phi * profile.lambda[i]).exp()),
        FactorKind::GeometricType => {
            if phi >= class.radius {
                return Err(ProductFormError::FugacityOutsideRadius {
                    phi,
                    radius: class.radius,
                });
            }
            let beta2 = profile.beta_k(i, 2);
            Some((1.0 - profile.lambda[i] * beta2 * phi).powf(-1.0 / beta2))
        }
        FactorKind::SuperExponential => {
            return Err(ProductFormError::FugacityOutsideRadius { phi, radius: 0.0 });
        }
    };
    let log_f = log_weight_table(profile, i, truncation);
    let log_phi = phi.ln();
    let terms: Vec<f64> = log_f
        .iter()
        .enumerate()
        .map(|(m, &lf)| m as f64 * log_phi + lf)
        .collect();
    Ok(GeneratingFunctionCheck {
        truncated_sum: logsumexp(&terms).exp(),
        closed_form,
    })
}

/// Condensation event parameters: the mass fraction `theta` of the (C3)
/// event `M(X) >= theta N`, the window `K` of the (C2) event
/// `M(X) >= N - K`, and an optional condensate species index.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CondensationQuery {
    pub theta: f64,
    pub k: u32,
    pub target: Option<usize>,
}

impl CondensationQuery {
    pub fn new(theta: f64, k: u32, target: Option<usize>) -> Result<Self, ProductFormError> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(ProductFormError::InvalidTheta(theta));
        }
        Ok(CondensationQuery { theta, k, target })
    }
}

/// Log-space convolution step: `out[t] = logsumexp_{m<=min(t,cap)}
/// (log_f[m] + acc[t-m])`, ascending in `m`.
fn convolve(acc: &[f64], log_f: &[f64], cap: Option<usize>) -> Vec<f64> {
    let mut out = Vec::with_capacity(acc.len());
    let mut scratch = Vec::with_capacity(acc.len());
    for t in 0..acc.len() {
        let top = cap.map_or(t, |c| c.min(t));
        scratch.clear();
        for m in 0..=top {
            scratch.push(log_f[m] + acc[t - m]);
        }
        out.push(logsumexp(&scratch));
    }
    out
}

fn delta_at_zero(len: usize) -> Vec<f64> {
    let mut v = vec![f64::NEG_INFINITY; len];
    v[0] = 0.0;
    v
}

/// All factor log-values and partition tables for a fixed total `N`.
///
/// `log_f[i][m]` is `log f_i(m)`; `log_z` the log partition function over
/// `|x| = N`; `loo_prefix[i][t]` the log partition function of the network
/// without species `i` at total `t` (computed by an independent convolution
/// pass per species).
#[derive(Clone, Debug)]
pub struct ProductFormTable {
    pub total: u32,
    pub log_f: Vec<Vec<f64>>,
    pub log_z: f64,
    pub loo_prefix: Vec<Vec<f64>>,
    /// `log_suffix[j][t]`: log partition function of species `j..n` at
    /// total `t`; `log_suffix[n]` is the empty-set delta. Drives the
    /// sequential-conditional sampler.
    log_suffix: Vec<Vec<f64>>,
}

impl ProductFormTable {
    pub fn build(profile: &AutocatalyticProfile, total: u32) -> Self {
        let n = profile.num_species();
        let len = total as usize + 1;
        let log_f: Vec<Vec<f64>> = (0..n)
            .map(|i| log_weight_table(profile, i, total))
            .collect();

        let mut full = delta_at_zero(len);
        for lf in &log_f {
            full = convolve(&full, lf, None);
        }
        let log_z = full[total as usize];

        let loo_prefix: Vec<Vec<f64>> = (0..n)
            .map(|skip| {
                let mut acc = delta_at_zero(len);
                for (j, lf) in log_f.iter().enumerate() {
                    if j != skip {
                        acc = convolve(&acc, lf, None);
                    }
                }
                acc
            })
            .collect();

        let mut log_suffix = vec![delta_at_zero(len); n + 1];
        for j in (0..n).rev() {
            log_suffix[j] = convolve(&log_suffix[j + 1], &log_f[j], None);
        }

        ProductFormTable {
            total,
            log_f,
            log_z,
            loo_prefix,
            log_suffix,
        }
    }

    pub fn num_species(&self) -> usize {
        self.log_f.len()
    }

    /// Marginal law of `X_i`: `P(X_i = m) = f_i(m) Z_{-i}(N - m) / Z_N`.
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        assert!(i < self.num_species(), "species index out of range");
        let n_tot = self.total as usize;
        (0..=n_tot)
            .map(|m| (self.log_f[i][m] + self.loo_prefix[i][n_tot - m] - self.log_z).exp())
            .collect()
    }

    /// `P(max_i X_i >= m)`, exact for every threshold.
    ///
    /// Above half the total the per-coordinate events are disjoint and the
    /// tail is a direct sum over the leave-one-out tables, which keeps full
    /// relative precision even for astronomically small tails. At or below
    /// half the total the events overlap; there the complement is computed
    /// from the capped partition function (every factor truncated to
    /// counts `< m`), and the tail itself is order one.
    pub fn max_tail(&self, m: u32) -> f64 {
        assert!(m <= self.total, "threshold exceeds total");
        if m == 0 {
            return 1.0;
        }
        let n_tot = self.total as usize;
        if 2 * m > self.total {
            let mut terms = Vec::new();
            for i in 0..self.num_species() {
                for j in m as usize..=n_tot {
                    terms.push(self.log_f[i][j] + self.loo_prefix[i][n_tot - j]);
                }
            }
            return (logsumexp(&terms) - self.log_z).exp().clamp(0.0, 1.0);
        }
        let cap = m as usize - 1;
        let mut acc = delta_at_zero(n_tot + 1);
        for lf in &self.log_f {
            acc = convolve(&acc, lf, Some(cap));
        }
        let log_z_cap = acc[n_tot];
        (-(log_z_cap - self.log_z).exp_m1()).clamp(0.0, 1.0)
    }

    /// Draw one state from the product-form law by sequential conditionals,
    /// deterministically in `seed`.
    pub fn sample_state(&self, seed: u64) -> Vec<u32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    /// Draw `count` states from one deterministic stream.
    pub fn sample_many(&self, seed: u64, count: usize) -> Vec<Vec<u32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample_with(&mut rng)).collect()
    }

    fn sample_with(&self, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let n = self.num_species();
        let mut state = vec![0u32; n];
        let mut remaining = self.total as usize;
        for j in 0..n {
            if j == n - 1 {
                state[j] = remaining as u32;
                break;
            }
            let norm = self.log_suffix[j][remaining];
            let u: f64 = rng.gen();
            let mut cumulative = 0.0;
            let mut chosen = remaining;
            for m in 0..=remaining {
                cumulative +=
                    (self.log_f[j][m] + self.log_suffix[j + 1][remaining - m] - norm).exp();
                if u < cumulative {
                    chosen = m;
                    break;
                }
            }
            state[j] = chosen as u32;
            remaining -= chosen;
        }
        state
    }
}

/// log Z_N for a single total.
pub fn partition_function(profile: &AutocatalyticProfile, total: u32) -> f64 {
    log_partition_range(profile, total)[total as usize]
}

/// log Z_t for all totals t = 0..=max in one convolution sweep; the final
/// species pass already carries every total.
pub fn log_partition_range(profile: &AutocatalyticProfile, max: u32) -> Vec<f64> {
    let len = max as usize + 1;
    let mut acc = delta_at_zero(len);
    for i in 0..profile.num_species() {
        let lf = log_weight_table(profile, i, max);
        acc = convolve(&acc, &lf, None);
    }
    acc
}

/// Cap on enumerated joint states, shared with the oracle and the CSV
/// exports.
pub const JOINT_STATE_CAP: u128 = 1_000_000;

/// The full product-form law as an enumerated distribution on the
/// lexicographic state list, normalized to machine precision.
pub fn joint_distribution(
    profile: &AutocatalyticProfile,
    total: u32,
) -> Result<ExactDistribution, ProductFormError> {
    let n = profile.num_species();
    let states_count = num_states(n, total);
    if states_count > JOINT_STATE_CAP {
        return Err(ProductFormError::StateSpaceTooLarge {
            states: states_count,
            cap: JOINT_STATE_CAP,
        });
    }
    let log_f: Vec<Vec<f64>> = (0..n)
        .map(|i| log_weight_table(profile, i, total))
        .collect();
    let states = enumerate_states(n, total);
    let log_weights: Vec<f64> = states
        .iter()
        .map(|x| {
            x.iter()
                .enumerate()
                .map(|(i, &m)| log_f[i][m as usize])
                .sum()
        })
        .collect();
    let log_z = logsumexp(&log_weights);
    let mut probs: Vec<f64> = log_weights.iter().map(|&w| (w - log_z).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= sum;
    }
    Ok(ExactDistribution {
        total,
        states,
        probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autocat::random_profile;
    use crate::network::propensity_unchecked;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;
    use std::collections::BTreeSet;

    fn profile(lambda: Vec<f64>, beta: Vec<Vec<f64>>) -> AutocatalyticProfile {
        let n = lambda.len();
        let mut pairs = BTreeSet::new();
        let mut alpha1 = BTreeMap::new();
        for j in 1..n {
            pairs.insert((0, j));
            alpha1.insert((0, j), lambda[j]);
            alpha1.insert((j, 0), lambda[0]);
        }
        AutocatalyticProfile {
            lambda,
            beta,
            pairs,
            alpha1,
        }
    }

    #[test]
    fn log_weight_is_zero_at_zero_count() {
        let p = profile(vec![1.0, 3.0], vec![vec![0.5], vec![]]);
        assert_eq!(log_weight(&p, 0, 0), 0.0);
        assert_eq!(log_weight(&p, 1, 0), 0.0);
    }

    #[test]
    fn log_weight_telescopes_to_one_for_unit_beta2() {
        // lambda = 1, beta^2 = 1: poly(l) = l, so f(m) = m!/m! = 1.
        let p = profile(vec![1.0], vec![vec![1.0]]);
        for m in 0..40 {
            assert!(log_weight(&p, 0, m).abs() < 1e-12, "m = {m}");
        }
    }

    #[test]
    fn log_weight_three_molecular_hand_value() {
        // lambda = 1, beta^2 = 0, beta^3 = 2:
        // poly = (1)(1)(5)(13), f(4) = 65/24.
        let p = profile(vec![1.0], vec![vec![0.0, 2.0]]);
        assert_relative_eq!(
            log_weight(&p, 0, 4),
            (65.0_f64 / 24.0).ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn scaled_profile_examples() {
        let p = profile(vec![1.0, 1.0], vec![vec![0.0, 2.0], vec![]]);
        let same = scaled_profile(&p, 1.0).unwrap();
        assert_eq!(same, p);
        let v10 = scaled_profile(&p, 10.0).unwrap();
        assert_relative_eq!(v10.beta[0][1], 0.02, max_relative = 1e-15);
        assert!(scaled_profile(&p, 0.0).is_err());
    }

    #[test]
    fn scaling_composes_multiplicatively_and_converges_to_poisson() {
        let p = profile(vec![2.0], vec![vec![5.0, 10.0]]);
        let twice = scaled_profile(&scaled_profile(&p, 10.0).unwrap(), 30.0).unwrap();
        let once = scaled_profile(&p, 300.0).unwrap();
        for (a, b) in twice.beta[0].iter().zip(&once.beta[0]) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
        // Large volume drives every factor to the Poisson value lambda^m/m!;
        // the deviation shrinks like beta m^2 / V.
        let mut last_worst = f64::INFINITY;
        for v in [1e6, 1e9, 1e12, 1e15] {
            let scaled = scaled_profile(&p, v).unwrap();
            let table = log_weight_table(&scaled, 0, 100);
            let mut worst = 0.0_f64;
            for m in 0..=100u32 {
                let poisson = m as f64 * 2.0_f64.ln() - crate::numeric::ln_factorial(m as u64);
                worst = worst.max((table[m as usize] - poisson).abs());
            }
            assert!(worst < last_worst || worst == 0.0);
            last_worst = worst;
        }
        assert!(last_worst < 1e-9, "deviation {last_worst} at V = 1e15");
    }

    #[test]
    fn partition_function_single_species_is_the_factor() {
        let p = profile(vec![1.0], vec![vec![0.0, 2.0]]);
        for n in [0u32, 3, 7] {
            assert_relative_eq!(
                partition_function(&p, n),
                log_weight(&p, 0, n),
                max_relative = 1e-13,
            );
        }
    }

    #[test]
    fn partition_function_two_poisson_species_is_binomial() {
        // Z_N = sum 1/(i!(N-i)!) = 2^N/N!.
        let p = profile(vec![1.0, 1.0], vec![vec![], vec![]]);
        let z3 = partition_function(&p, 3).exp();
        assert_relative_eq!(z3, 4.0 / 3.0, max_relative = 1e-13);
        for n in [1u32, 5, 20] {
            let expected = (n as f64) * 2.0_f64.ln() - crate::numeric::ln_factorial(n as u64);
            assert_relative_eq!(partition_function(&p, n), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn partition_function_worked_two_species_case() {
        // f_1 = (1, 1, 2), f_2 = (1, 2, 3): Z_2 = 3 + 2 + 2 = 7.
        let p = profile(vec![1.0, 2.0], vec![vec![3.0], vec![0.5]]);
        assert_relative_eq!(partition_function(&p, 2).exp(), 7.0, max_relative = 1e-13);
    }

    #[test]
    fn marginal_of_worked_case() {
        let p = profile(vec![1.0, 2.0], vec![vec![3.0], vec![0.5]]);
        let table = ProductFormTable::build(&p, 2);
        let marginal = table.marginal(0);
        assert_relative_eq!(marginal[0], 3.0 / 7.0, max_relative = 1e-13);
        assert_relative_eq!(marginal[1], 2.0 / 7.0, max_relative = 1e-13);
        assert_relative_eq!(marginal[2], 2.0 / 7.0, max_relative = 1e-13);
    }

    #[test]
    fn marginal_of_symmetric_poisson_is_binomial() {
        let p = profile(vec![1.0, 1.0], vec![vec![], vec![]]);
        for n in [4u32, 9] {
            let table = ProductFormTable::build(&p, n);
            let marginal = table.marginal(0);
            let binom = |k: u32| -> f64 {
                let ln = crate::numeric::ln_factorial(n as u64)
                    - crate::numeric::ln_factorial(k as u64)
                    - crate::numeric::ln_factorial((n - k) as u64);
                (ln - n as f64 * 2.0_f64.ln()).exp()
            };
            for m in 0..=n {
                assert_relative_eq!(marginal[m as usize], binom(m), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn marginal_of_single_species_is_point_mass() {
        let p = profile(vec![1.0], vec![vec![1.0]]);
        let table = ProductFormTable::build(&p, 6);
        let marginal = table.marginal(0);
        assert_eq!(marginal[6], 1.0);
        assert!(marginal[..6].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn marginals_sum_to_one() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let p = random_profile(3, &mut rng);
            let table = ProductFormTable::build(&p, 18);
            for i in 0..3 {
                let sum: f64 = table.marginal(i).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12, "sum {sum}");
            }
        }
    }

    #[test]
    fn max_tail_trivial_and_binomial_values() {
        let p = profile(vec![1.0, 1.0], vec![vec![], vec![]]);
        let table = ProductFormTable::build(&p, 20);
        assert_eq!(table.max_tail(0), 1.0);
        // P(M >= 18) for Binomial(20, 1/2) on either coordinate:
        // 2 (C(20,0) + C(20,1) + C(20,2)) / 2^20 = 422/2^20.
        assert_relative_eq!(
            table.max_tail(18),
            422.0 / (1u64 << 20) as f64,
            max_relative = 1e-12
        );
    }

    #[test]
    fn max_tail_at_total_is_singleton_mass() {
        // Three-molecular factor with a Poisson partner at N = 4:
        // Z_4 = 4 and pi(X_1 = 4) = (65/24)/4 = 65/96.
        let p = profile(vec![1.0, 1.0], vec![vec![0.0, 2.0], vec![]]);
        let table = ProductFormTable::build(&p, 4);
        assert_relative_eq!(table.log_z.exp(), 4.0, max_relative = 1e-13);
        let singleton_mass: f64 = (0..2)
            .map(|i| (table.log_f[i][4] - table.log_z).exp())
            .sum();
        assert_relative_eq!(table.max_tail(4), singleton_mass, max_relative = 1e-12);
        assert!(table.max_tail(4) > 65.0 / 96.0 - 1e-12);
    }

    #[test]
    fn max_tail_is_non_increasing() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = random_profile(3, &mut rng);
        let table = ProductFormTable::build(&p, 15);
        let mut last = 1.0;
        for m in 0..=15 {
            let tail = table.max_tail(m);
            assert!(tail <= last + 1e-14, "m = {m}: {tail} > {last}");
            last = tail;
        }
    }

    #[test]
    fn normalization_over_full_state_space() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in [2usize, 3] {
            let p = random_profile(n, &mut rng);
            for total in [5u32, 30] {
                let table = ProductFormTable::build(&p, total);
                let states = enumerate_states(n, total);
                let sum: f64 = states
                    .iter()
                    .map(|x| {
                        let logw: f64 = x
                            .iter()
                            .enumerate()
                            .map(|(i, &m)| table.log_f[i][m as usize])
                            .sum();
                        (logw - table.log_z).exp()
                    })
                    .sum();
                assert!((sum - 1.0).abs() < 1e-12, "sum {sum} at n={n} N={total}");
            }
        }
    }

    #[test]
    fn fugacity_rescaling_leaves_probabilities_unchanged() {
        // Multiplying every f_i(m) by phi^m is the same as lambda -> phi
        // lambda. Probabilities on a fixed total are invariant.
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..5 {
            let p = random_profile(3, &mut rng);
            let phi: f64 = rng.gen_range(0.3..3.0);
            let mut rescaled = p.clone();
            for l in rescaled.lambda.iter_mut() {
                *l *= phi;
            }
            let a = joint_distribution(&p, 12).unwrap();
            let b = joint_distribution(&rescaled, 12).unwrap();
            for (x, y) in a.probs.iter().zip(&b.probs) {
                assert!((x - y).abs() <= 1e-12 * x.max(*y).max(1e-30));
            }
        }
    }

    #[test]
    fn claimed_distribution_is_reversible_for_the_chain() {
        // pi(x) q(x, y) = pi(y) q(y, x) for every single-exchange move,
        // where q sums mass-action propensities over the matching bundle.
        use crate::autocat::classify_autocatalytic;
        use crate::autocat::random_autocatalytic_network;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for n in [2usize, 3] {
            for total in [6u32, 15] {
                let net = random_autocatalytic_network(n, &mut rng);
                let profile = classify_autocatalytic(&net).unwrap();
                let dist = joint_distribution(&profile, total).unwrap();
                let index: std::collections::HashMap<Vec<u32>, usize> = dist
                    .states
                    .iter()
                    .cloned()
                    .enumerate()
                    .map(|(k, v)| (v, k))
                    .collect();
                for (s, x) in dist.states.iter().enumerate() {
                    for i in 0..n {
                        for j in 0..n {
                            if i == j || x[i] == 0 {
                                continue;
                            }
                            let mut y = x.clone();
                            y[i] -= 1;
                            y[j] += 1;
                            let t = index[&y];
                            let bundle_rate = |from: usize, to: usize, at: &[u32]| -> f64 {
                                net.reactions()
                                    .iter()
                                    .filter(|r| {
                                        r.net_change().iter().enumerate().all(|(k, &v)| {
                                            v == if k == from {
                                                -1
                                            } else if k == to {
                                                1
                                            } else {
                                                0
                                            }
                                        })
                                    })
                                    .map(|r| propensity_unchecked(r, at))
                                    .sum()
                            };
                            let lhs = dist.probs[s] * bundle_rate(i, j, x);
                            let rhs = dist.probs[t] * bundle_rate(j, i, &y);
                            let scale = lhs.max(rhs);
                            if scale > 0.0 {
                                assert!(
                                    (lhs - rhs).abs() <= 1e-10 * scale,
                                    "x={x:?} i={i} j={j}: {lhs} vs {rhs}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_single_species_trivial() {
        let p = profile(vec![1.0], vec![vec![1.0]]);
        let table = ProductFormTable::build(&p, 9);
        assert_eq!(table.sample_state(3), vec![9]);
        let p2 = profile(vec![1.0, 2.0], vec![vec![3.0], vec![0.5]]);
        let table2 = ProductFormTable::build(&p2, 2);
        assert_eq!(table2.sample_state(123), table2.sample_state(123));
    }

    #[test]
    fn sampling_frequencies_match_worked_marginal() {
        let p = profile(vec![1.0, 2.0], vec![vec![3.0], vec![0.5]]);
        let table = ProductFormTable::build(&p, 2);
        let samples = table.sample_many(7, 1_000_000);
        let mut counts = [0usize; 3];
        for s in &samples {
            counts[s[0] as usize] += 1;
        }
        let expected = [3.0 / 7.0, 2.0 / 7.0, 2.0 / 7.0];
        for m in 0..3 {
            let freq = counts[m] as f64 / samples.len() as f64;
            let std_err = (expected[m] * (1.0 - expected[m]) / samples.len() as f64).sqrt();
            assert!(
                (freq - expected[m]).abs() < 3.0 * std_err,
                "m={m}: freq {freq} vs {} (3se = {})",
                expected[m],
                3.0 * std_err
            );
        }
    }

    #[test]
    fn factor_classification_three_types() {
        let geometric = profile(vec![2.0], vec![vec![0.25]]);
        let class = classify_factor(&geometric, 0);
        assert_eq!(class.kind, FactorKind::GeometricType);
        assert_relative_eq!(class.radius, 2.0, max_relative = 1e-14);
        assert!(verify_factor_class(&geometric, 0, &class));

        let poisson = profile(vec![3.0], vec![vec![]]);
        let class = classify_factor(&poisson, 0);
        assert_eq!(class.kind, FactorKind::Poisson);
        assert_eq!(class.radius, f64::INFINITY);
        assert!(verify_factor_class(&poisson, 0, &class));

        let super_exp = profile(vec![1.0], vec![vec![0.0, 2.0]]);
        let class = classify_factor(&super_exp, 0);
        assert_eq!(class.kind, FactorKind::SuperExponential);
        assert_eq!(class.radius, 0.0);
        // Ratio grows like 2m: ~396 at m = 200, above 1e3 by m = 600.
        let r200 = growth_ratio(&super_exp, 0, 200);
        assert!((r200 - (1.0 + 2.0 * 200.0 * 199.0) / 201.0).abs() < 1e-9);
        assert!(growth_ratio(&super_exp, 0, 600) > 1e3);
        assert!(verify_factor_class(&super_exp, 0, &class));
    }

    #[test]
    fn adaptive_probe_handles_slowly_converging_parameters() {
        // beta^2 = 0.01 needs a probe far beyond m = 4000 to see the
        // geometric ratio; the adaptive verifier accounts for that.
        let slow = profile(vec![1.0], vec![vec![0.01]]);
        let class = classify_factor(&slow, 0);
        assert_eq!(class.kind, FactorKind::GeometricType);
        assert!(verify_factor_class(&slow, 0, &class));
    }

    #[test]
    fn classification_handles_trailing_zero_beta() {
        // Explicit zeros beyond the last positive entry do not change the
        // effective molecularity.
        let p = profile(vec![1.0], vec![vec![0.7, 0.0]]);
        assert_eq!(classify_factor(&p, 0).kind, FactorKind::GeometricType);
    }

    #[test]
    fn generating_function_poisson_matches_exponential() {
        let p = profile(vec![1.0], vec![vec![]]);
        let check = generating_function_check(&p, 0, 1.0, 60).unwrap();
        assert_relative_eq!(check.truncated_sum, 1.0_f64.exp(), max_relative = 1e-12);
        assert_relative_eq!(
            check.closed_form.unwrap(),
            1.0_f64.exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn generating_function_geometric_matches_closed_form() {
        // lambda = 1, beta^2 = 0.5, radius 2, phi = 1 (half the radius):
        // closed form (1 - 0.5)^(-2) = 4.
        let p = profile(vec![1.0], vec![vec![0.5]]);
        let check = generating_function_check(&p, 0, 1.0, 200).unwrap();
        assert_relative_eq!(check.closed_form.unwrap(), 4.0, max_relative = 1e-14);
        assert_relative_eq!(check.truncated_sum, 4.0, max_relative = 1e-8);
        assert!(matches!(
            generating_function_check(&p, 0, 2.0, 100),
            Err(ProductFormError::FugacityOutsideRadius { .. })
        ));
    }

    #[test]
    fn generating_function_super_exponential_always_errors() {
        let p = profile(vec![1.0], vec![vec![0.0, 2.0]]);
        for phi in [0.01, 1.0, 10.0] {
            assert!(matches!(
                generating_function_check(&p, 0, phi, 100),
                Err(ProductFormError::FugacityOutsideRadius { .. })
            ));
        }
        assert!(matches!(
            generating_function_check(&p, 0, 0.0, 100),
            Err(ProductFormError::NonPositiveFugacity)
        ));
    }

    #[test]
    fn condensation_query_validates_theta() {
        assert!(CondensationQuery::new(0.9, 2, None).is_ok());
        assert!(CondensationQuery::new(0.0, 2, None).is_err());
        assert!(CondensationQuery::new(1.0, 2, None).is_err());
    }
}
