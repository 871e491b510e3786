//! Condensation diagnostics: regime prediction from the factor parameters,
//! exact finite-N condensation curves, partition-function asymptotics, and
//! the appendix quotient/bound scans.
//!
//! Regimes, by the highest incoming molecularity `n*` of the profile:
//! Poisson-only profiles (`n* = 1`) never condense; bimolecular profiles
//! with a unique maximizer of `lambda_i beta_i^2` concentrate a mass
//! fraction 1 on that species (weak condensation with a law of large
//! numbers); three-molecular and higher profiles put all mass on the
//! species maximizing `lambda_i beta_i^{n*}`, split `1/k` among exact ties.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autocat::AutocatalyticProfile;
use crate::numeric::logsumexp;
use crate::product_form::{
    log_partition_range, log_weight, log_weight_table, CondensationQuery, ProductFormError,
    ProductFormTable,
};

/// Relative tolerance under which maximal `lambda beta^{n*}` scores are
/// considered tied. The asymptotic `1/k` split assumes exact equality;
/// near-ties are grouped and reported with this caveat.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CondensationError {
    #[error("operation requires regime {expected}, profile classifies as {found}")]
    WrongRegime { expected: Regime, found: Regime },
    #[error("species {0} does not have a positive three-molecular weight")]
    WrongFactorType(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    ProductForm(#[from] ProductFormError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "C3_weak")]
    C3Weak,
    #[serde(rename = "C1_strong")]
    C1Strong,
    #[serde(rename = "unclassified")]
    Unclassified,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::None => "none",
            Regime::C3Weak => "C3_weak",
            Regime::C1Strong => "C1_strong",
            Regime::Unclassified => "unclassified",
        };
        write!(f, "{s}")
    }
}

/// Outcome of [`classify_condensation`]: the regime, the species attaining
/// the maximal score, and the tie count `k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegimeClassification {
    pub regime: Regime,
    pub maximal_set: Vec<usize>,
    pub k: usize,
}

/// Predict the condensation regime from the profile parameters alone.
pub fn classify_condensation(profile: &AutocatalyticProfile) -> RegimeClassification {
    let n = profile.num_species();
    let n_star = profile.max_molecularity();
    if n_star == 1 {
        return RegimeClassification {
            regime: Regime::None,
            maximal_set: vec![],
            k: 0,
        };
    }
    // Scores of the species at top molecularity.
    let scores: Vec<(usize, f64)> = (0..n)
        .filter(|&i| profile.molecularity(i) == n_star)
        .map(|i| (i, profile.lambda[i] * profile.beta_k(i, n_star)))
        .collect();
    let best = scores.iter().map(|&(_, s)| s).fold(0.0, f64::max);
    let maximal_set: Vec<usize> = scores
        .iter()
        .filter(|&&(_, s)| s >= best * (1.0 - TIE_TOLERANCE))
        .map(|&(i, _)| i)
        .collect();
    let k = maximal_set.len();
    let regime = if n_star == 2 {
        if k == 1 {
            Regime::C3Weak
        } else {
            Regime::Unclassified
        }
    } else {
        Regime::C1Strong
    };
    RegimeClassification {
        regime,
        maximal_set,
        k,
    }
}

/// One row of a condensation report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CondensationRow {
    pub total: u32,
    /// `P(M(X) = N)`.
    pub p_exact_max: f64,
    /// `P(M(X) >= N - K)`.
    pub p_within_k: f64,
    /// `P(M(X) >= ceil(theta N))`.
    pub p_theta: f64,
    /// `E[X_{i*}] / N`.
    pub mean_fraction: f64,
    /// `Z_N / (k f(N))`, present in the strong regime.
    pub zn_over_kf: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CondensationReport {
    pub regime: Regime,
    pub maximal_set: Vec<usize>,
    pub k: usize,
    pub theta: f64,
    pub window: u32,
    pub target: usize,
    pub rows: Vec<CondensationRow>,
}

/// Smallest integer `>= x`, robust to the float fuzz of products like
/// `0.9 * 20` landing a few ulp above the exact integer.
fn ceil_threshold(x: f64) -> u32 {
    (x - 1e-9).ceil().max(0.0) as u32
}

fn validate_totals(n_values: &[u32]) -> Result<(), CondensationError> {
    if n_values.is_empty() {
        return Err(CondensationError::InvalidInput("empty total list".into()));
    }
    if n_values[0] == 0 {
        return Err(CondensationError::InvalidInput(
            "totals must be positive".into(),
        ));
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CondensationError::InvalidInput(
            "totals must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Exact finite-N condensation statistics for each requested total.
/// Per-total computations run concurrently; rows keep the input order.
pub fn condensation_curve(
    profile: &AutocatalyticProfile,
    n_values: &[u32],
    query: &CondensationQuery,
) -> Result<CondensationReport, CondensationError> {
    validate_totals(n_values)?;
    let classification = classify_condensation(profile);
    let target = query
        .target
        .or_else(|| classification.maximal_set.first().copied())
        .unwrap_or(0);
    if target >= profile.num_species() {
        return Err(CondensationError::InvalidInput(format!(
            "target species {target} out of range"
        )));
    }
    let strong = classification.regime == Regime::C1Strong;
    let lead = classification.maximal_set.first().copied();
    let rows: Vec<CondensationRow> = n_values
        .par_iter()
        .map(|&total| {
            let table = ProductFormTable::build(profile, total);
            let theta_threshold = ceil_threshold(query.theta * total as f64).min(total);
            let marginal = table.marginal(target);
            let mean: f64 = marginal
                .iter()
                .enumerate()
                .map(|(m, &p)| m as f64 * p)
                .sum();
            let zn_over_kf = if strong {
                let i = lead.expect("strong regime has a maximal species");
                let log_f_n = table.log_f[i][total as usize];
                Some((table.log_z - (classification.k as f64).ln() - log_f_n).exp())
            } else {
                None
            };
            CondensationRow {
                total,
                p_exact_max: table.max_tail(total),
                p_within_k: table.max_tail(total.saturating_sub(query.k)),
                p_theta: table.max_tail(theta_threshold),
                mean_fraction: mean / total as f64,
                zn_over_kf,
            }
        })
        .collect();
    Ok(CondensationReport {
        regime: classification.regime,
        maximal_set: classification.maximal_set,
        k: classification.k,
        theta: query.theta,
        window: query.k,
        target,
        rows,
    })
}

/// `Z_N / (k f(N))` for each total, where `f` is the common maximal factor;
/// approaches 1 from above in the strong regime.
pub fn partition_asymptotics(
    profile: &AutocatalyticProfile,
    n_values: &[u32],
) -> Result<Vec<f64>, CondensationError> {
    validate_totals(n_values)?;
    let classification = classify_condensation(profile);
    if classification.regime != Regime::C1Strong {
        return Err(CondensationError::WrongRegime {
            expected: Regime::C1Strong,
            found: classification.regime,
        });
    }
    let lead = classification.maximal_set[0];
    let max = *n_values.last().unwrap();
    let log_z = log_partition_range(profile, max);
    let log_f = log_weight_table(profile, lead, max);
    let log_k = (classification.k as f64).ln();
    Ok(n_values
        .iter()
        .map(|&n| (log_z[n as usize] - log_k - log_f[n as usize]).exp())
        .collect())
}

/// `P(X_i = N)` on totals `0..=max` in one sweep: `f_i(N) / Z_N`.
pub fn singleton_probability_curve(profile: &AutocatalyticProfile, i: usize, max: u32) -> Vec<f64> {
    let log_z = log_partition_range(profile, max);
    let log_f = log_weight_table(profile, i, max);
    log_f
        .iter()
        .zip(&log_z)
        .map(|(&f, &z)| (f - z).exp())
        .collect()
}

/// Scan results for the three-molecular factor quotient bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundScan {
    pub n_values: Vec<u32>,
    /// Per-N `(N-3) f(N-1) f(1) / f(N)` and its maximum.
    pub q1: Vec<f64>,
    /// Per-N `(N-3)(N-4) f(N-2) f(2) / f(N)`.
    pub q2: Vec<f64>,
    /// Per-N `(N-3)(N-4)(N-5) f(N-3) f(3) / f(N)`.
    pub q3: Vec<f64>,
    pub max_q1: f64,
    pub max_q2: f64,
    pub max_q3: f64,
    /// `f(N-i) f(i) <= f(N-3) f(3)` for all `3 <= i <= N/2`, at every N.
    pub unimodal: bool,
    /// Two-species correction sum `sum_i f_1(i) f_2(N-i) / f_1(N)`, when
    /// the profile has exactly two species.
    pub pair_correction: Option<Vec<f64>>,
}

/// Evaluate the scaled factor quotients, the unimodality inequality, and
/// the paired correction sum over the scanned totals.
pub fn appendix_bound_scan(
    profile: &AutocatalyticProfile,
    species: usize,
    n_values: &[u32],
) -> Result<BoundScan, CondensationError> {
    validate_totals(n_values)?;
    if profile.beta_k(species, 3) <= 0.0 {
        return Err(CondensationError::WrongFactorType(species));
    }
    if n_values[0] < 6 {
        return Err(CondensationError::InvalidInput(
            "quotient prefactors need N >= 6".into(),
        ));
    }
    let max = *n_values.last().unwrap();
    let log_f = log_weight_table(profile, species, max);
    let quotient = |n: u32, gap: u32| -> f64 {
        log_f[(n - gap) as usize] + log_f[gap as usize] - log_f[n as usize]
    };
    let mut q1 = Vec::new();
    let mut q2 = Vec::new();
    let mut q3 = Vec::new();
    let mut unimodal = true;
    for &n in n_values {
        let nf = n as f64;
        q1.push(((nf - 3.0).ln() + quotient(n, 1)).exp());
        q2.push((((nf - 3.0) * (nf - 4.0)).ln() + quotient(n, 2)).exp());
        q3.push((((nf - 3.0) * (nf - 4.0) * (nf - 5.0)).ln() + quotient(n, 3)).exp());
        let anchor = log_f[(n - 3) as usize] + log_f[3];
        for i in 3..=(n / 2) {
            let value = log_f[(n - i) as usize] + log_f[i as usize];
            if value > anchor + 1e-10 {
                unimodal = false;
            }
        }
    }
    let pair_correction = if profile.num_species() == 2 {
        let other = 1 - species;
        let log_g = log_weight_table(profile, other, max);
        Some(
            n_values
                .iter()
                .map(|&n| {
                    let terms: Vec<f64> = (1..n)
                        .map(|i| log_f[(n - i) as usize] + log_g[i as usize])
                        .collect();
                    (logsumexp(&terms) - log_f[n as usize]).exp()
                })
                .collect(),
        )
    } else {
        None
    };
    let fold_max = |v: &[f64]| v.iter().fold(0.0_f64, |a, &b| a.max(b));
    Ok(BoundScan {
        n_values: n_values.to_vec(),
        max_q1: fold_max(&q1),
        max_q2: fold_max(&q2),
        max_q3: fold_max(&q3),
        q1,
        q2,
        q3,
        unimodal,
        pair_correction,
    })
}

/// One row of the law-of-large-numbers diagnostic.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LlnRow {
    pub total: u32,
    /// `E[X_{i*}] / N`.
    pub mean_fraction: f64,
    /// `P(X_{i*} >= ceil((1 - theta) N))`.
    pub tail_probability: f64,
}

/// Exact mean fraction and lower-tail concentration of the condensate
/// coordinate. Meaningful for any profile; in the condensing regimes both
/// columns approach 1.
pub fn lln_diagnostic(
    profile: &AutocatalyticProfile,
    n_values: &[u32],
    target: usize,
    theta: f64,
) -> Result<Vec<LlnRow>, CondensationError> {
    validate_totals(n_values)?;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(ProductFormError::InvalidTheta(theta).into());
    }
    if target >= profile.num_species() {
        return Err(CondensationError::InvalidInput(format!(
            "target species {target} out of range"
        )));
    }
    Ok(n_values
        .par_iter()
        .map(|&total| {
            let table = ProductFormTable::build(profile, total);
            let marginal = table.marginal(target);
            let mean: f64 = marginal
                .iter()
                .enumerate()
                .map(|(m, &p)| m as f64 * p)
                .sum();
            let cut = (ceil_threshold((1.0 - theta) * total as f64) as usize).min(total as usize);
            let tail: f64 = marginal[cut..].iter().sum();
            LlnRow {
                total,
                mean_fraction: mean / total as f64,
                tail_probability: tail,
            }
        })
        .collect())
}

/// Factorization `f_i(m) = mu_i^m w_i(m)` used by the weak-condensation
/// argument in the bimolecular regime: geometric bases `mu_i = lambda_i
/// beta_i^2` for factors with a bimolecular part, `mu_i` slightly below the
/// leading base for Poisson factors.
#[derive(Clone, Debug)]
pub struct FactorDecomposition {
    pub mu: Vec<f64>,
    profile: AutocatalyticProfile,
}

impl FactorDecomposition {
    /// The factorization used in the bimolecular (`n* = 2`) regime. `epsilon`
    /// shifts the Poisson-factor bases strictly below the leading one.
    pub fn weak_regime_split(
        profile: &AutocatalyticProfile,
        epsilon: f64,
    ) -> Result<Self, CondensationError> {
        let classification = classify_condensation(profile);
        if profile.max_molecularity() != 2 {
            return Err(CondensationError::WrongRegime {
                expected: Regime::C3Weak,
                found: classification.regime,
            });
        }
        let lead = classification.maximal_set[0];
        let top = profile.lambda[lead] * profile.beta_k(lead, 2);
        if !(epsilon > 0.0 && epsilon < top) {
            return Err(CondensationError::InvalidInput(format!(
                "epsilon must lie in (0, {top})"
            )));
        }
        let mu = (0..profile.num_species())
            .map(|i| {
                let b2 = profile.beta_k(i, 2);
                if b2 > 0.0 {
                    profile.lambda[i] * b2
                } else {
                    top - epsilon
                }
            })
            .collect();
        Ok(FactorDecomposition {
            mu,
            profile: profile.clone(),
        })
    }

    /// `log w_i(m) = log f_i(m) - m log mu_i`.
    pub fn log_w(&self, i: usize, m: u32) -> f64 {
        log_weight(&self.profile, i, m) - m as f64 * self.mu[i].ln()
    }

    /// Numeric probe of the sub-exponential domination hypothesis: the
    /// smallest constant `c` with `w_j(M-r) w_lead(r) <= c e^{alpha M}
    /// w_lead(M)` over the scanned range. Diagnostic only.
    pub fn domination_constant(&self, j: usize, alpha: f64, m_max: u32) -> f64 {
        let lead = self
            .mu
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty profile");
        let log_w = |i: usize, max: u32| -> Vec<f64> {
            let table = log_weight_table(&self.profile, i, max);
            let log_mu = self.mu[i].ln();
            table
                .iter()
                .enumerate()
                .map(|(m, &f)| f - m as f64 * log_mu)
                .collect()
        };
        let wj = log_w(j, m_max);
        let wl = log_w(lead, m_max);
        let mut worst = f64::NEG_INFINITY;
        for big_m in 1..=m_max as usize {
            for r in 0..=big_m {
                let value = wj[big_m - r] + wl[r] - alpha * big_m as f64 - wl[big_m];
                worst = worst.max(value);
            }
        }
        worst.exp()
    }
}
