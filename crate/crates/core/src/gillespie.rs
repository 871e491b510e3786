//! Stochastic simulation of the reaction-network Markov chain and
//! time-average estimation of the stationary distribution.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::network::{propensity_unchecked, ReactionNetwork};
use crate::oracle::{check_irreducible, enumerate_states, OracleError};
use crate::ExactDistribution;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("burn-in {burn_in} must be smaller than t_max {t_max}")]
    BadTimeWindow { burn_in: f64, t_max: f64 },
    #[error("initial state has {got} entries, network has {expected} species")]
    BadInitialState { got: usize, expected: usize },
    #[error("t_max must be positive")]
    NonPositiveTime,
}

/// One simulated path: `times[k]` is the jump time of event `k` and
/// `states[k]` the state after it; entry 0 is the initial condition at
/// time 0. Times are strictly increasing.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<u32>>,
    pub seed: u64,
}

/// Incremental next-reaction stepper shared by the trajectory recorder and
/// the streaming occupation estimator.
struct Walker<'a> {
    net: &'a ReactionNetwork,
    state: Vec<u32>,
    time: f64,
    rng: ChaCha8Rng,
    propensities: Vec<f64>,
}

impl<'a> Walker<'a> {
    fn new(net: &'a ReactionNetwork, x0: Vec<u32>, rng: ChaCha8Rng) -> Self {
        Walker {
            propensities: vec![0.0; net.reactions().len()],
            net,
            state: x0,
            time: 0.0,
            rng,
        }
    }

    /// Advance one jump; returns false from an absorbing state.
    fn step(&mut self) -> bool {
        let mut total = 0.0;
        for (r, reaction) in self.net.reactions().iter().enumerate() {
            let a = propensity_unchecked(reaction, &self.state);
            self.propensities[r] = a;
            total += a;
        }
        if total <= 0.0 {
            return false;
        }
        // Exponential holding time via inverse CDF on u in (0, 1].
        let u: f64 = 1.0 - self.rng.gen::<f64>();
        self.time += -u.ln() / total;
        let mut threshold: f64 = self.rng.gen::<f64>() * total;
        let mut chosen = self.net.reactions().len() - 1;
        for (r, &a) in self.propensities.iter().enumerate() {
            threshold -= a;
            if threshold < 0.0 {
                chosen = r;
                break;
            }
        }
        let delta = self.net.reactions()[chosen].net_change();
        for (i, d) in delta.iter().enumerate() {
            self.state[i] = (self.state[i] as i64 + d) as u32;
        }
        true
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulate one trajectory up to `t_max` with the standard next-reaction
/// scheme; bit-identical for a fixed seed. Absorbing states simply end the
/// event sequence.
pub fn simulate(
    net: &ReactionNetwork,
    x0: &[u32],
    t_max: f64,
    seed: u64,
) -> Result<Trajectory, SimError> {
    if x0.len() != net.num_species() {
        return Err(SimError::BadInitialState {
            got: x0.len(),
            expected: net.num_species(),
        });
    }
    if !(t_max > 0.0) {
        return Err(SimError::NonPositiveTime);
    }
    let mut walker = Walker::new(net, x0.to_vec(), stream_rng(seed, 0));
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    loop {
        if !walker.step() || walker.time > t_max {
            break;
        }
        times.push(walker.time);
        states.push(walker.state.clone());
    }
    Ok(Trajectory {
        times,
        states,
        seed,
    })
}

/// Time-weighted occupation frequencies over `(burn_in, t_max]`, on the
/// lexicographic state ordering of the initial total mass. Streaming; the
/// trajectory is not stored.
pub fn empirical_stationary(
    net: &ReactionNetwork,
    x0: &[u32],
    t_max: f64,
    burn_in: f64,
    seed: u64,
) -> Result<ExactDistribution, SimError> {
    empirical_stationary_stream(net, x0, t_max, burn_in, seed, 0)
}

/// As [`empirical_stationary`] but on an explicit RNG stream, so batches
/// derived from one master seed are reproducible regardless of scheduling.
pub fn empirical_stationary_stream(
    net: &ReactionNetwork,
    x0: &[u32],
    t_max: f64,
    burn_in: f64,
    seed: u64,
    stream: u64,
) -> Result<ExactDistribution, SimError> {
    if x0.len() != net.num_species() {
        return Err(SimError::BadInitialState {
            got: x0.len(),
            expected: net.num_species(),
        });
    }
    if !(t_max > 0.0) {
        return Err(SimError::NonPositiveTime);
    }
    if !(burn_in < t_max) || burn_in < 0.0 {
        return Err(SimError::BadTimeWindow { burn_in, t_max });
    }
    let total: u32 = x0.iter().sum();
    if !check_irreducible(net, total)? {
        return Err(OracleError::NotIrreducible { total }.into());
    }
    let states = enumerate_states(net.num_species(), total);
    let index = states
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect::<std::collections::HashMap<_, _>>();

    let mut weights = vec![0.0_f64; states.len()];
    let mut walker = Walker::new(net, x0.to_vec(), stream_rng(seed, stream));
    loop {
        let entered = walker.time;
        let current = index[&walker.state];
        let alive = walker.step();
        let left = if alive { walker.time.min(t_max) } else { t_max };
        let lo = entered.max(burn_in);
        if left > lo {
            weights[current] += left - lo;
        }
        if !alive || walker.time > t_max {
            break;
        }
    }
    let sum: f64 = weights.iter().sum();
    let probs = weights.iter().map(|&w| w / sum).collect();
    Ok(ExactDistribution {
        total,
        states,
        probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ComplexVec, Reaction};
    use crate::oracle::{exact_stationary, total_variation};

    fn net2(reactions: Vec<(Vec<u32>, Vec<u32>, f64)>) -> ReactionNetwork {
        ReactionNetwork::new(
            vec!["S1".into(), "S2".into()],
            reactions
                .into_iter()
                .map(|(r, p, rate)| Reaction {
                    reactant: ComplexVec(r),
                    product: ComplexVec(p),
                    rate,
                })
                .collect(),
        )
        .unwrap()
    }

    fn example_a() -> ReactionNetwork {
        net2(vec![
            (vec![1, 0], vec![0, 1], 1.0),
            (vec![0, 1], vec![1, 0], 1.0),
        ])
    }

    #[test]
    fn absorbing_network_yields_single_state() {
        // One-directional S1 -> S2 from (0, 3): nothing can fire.
        let net = net2(vec![(vec![1, 0], vec![0, 1], 1.0)]);
        let traj = simulate(&net, &[0, 3], 10.0, 1).unwrap();
        assert_eq!(traj.times, vec![0.0]);
        assert_eq!(traj.states, vec![vec![0, 3]]);
    }

    #[test]
    fn fixed_seed_reproduces_trajectory_exactly() {
        let net = example_a();
        let a = simulate(&net, &[5, 0], 50.0, 42).unwrap();
        let b = simulate(&net, &[5, 0], 50.0, 42).unwrap();
        assert_eq!(a.times, b.times);
        assert_eq!(a.states, b.states);
        let c = simulate(&net, &[5, 0], 50.0, 43).unwrap();
        assert_ne!(a.times, c.times);
    }

    #[test]
    fn trajectory_times_increase_and_mass_is_conserved() {
        let net = net2(vec![
            (vec![1, 0], vec![0, 1], 1.0),
            (vec![0, 1], vec![1, 0], 1.0),
            (vec![1, 1], vec![2, 0], 1.0),
            (vec![1, 1], vec![0, 2], 1.0),
        ]);
        let traj = simulate(&net, &[7, 3], 20.0, 9).unwrap();
        for w in traj.times.windows(2) {
            assert!(w[1] > w[0]);
        }
        for s in &traj.states {
            assert_eq!(s.iter().sum::<u32>(), 10);
        }
    }

    #[test]
    fn long_run_mean_matches_binomial_law() {
        // Example (A) from (N, 0): stationary X_1 ~ Binomial(N, 1/2),
        // mean N/2, st.dev sqrt(N)/2.
        let n_total = 10u32;
        let net = example_a();
        let traj = simulate(&net, &[n_total, 0], 4000.0, 7).unwrap();
        let mut weighted = 0.0;
        let mut duration = 0.0;
        for k in 0..traj.times.len() - 1 {
            let dt = traj.times[k + 1] - traj.times[k];
            weighted += traj.states[k][0] as f64 * dt;
            duration += dt;
        }
        let mean = weighted / duration;
        // Standard error of the time average is far below the crude jump
        // count bound; 3 * sd / sqrt(#events) is a generous envelope.
        let sd = (n_total as f64).sqrt() / 2.0;
        let se = 3.0 * sd / (traj.times.len() as f64).sqrt() * 3.0;
        assert!(
            (mean - n_total as f64 / 2.0).abs() < se.max(0.3),
            "mean {mean}"
        );
    }

    #[test]
    fn empirical_matches_exact_for_example_a() {
        let net = example_a();
        let exact = exact_stationary(&net, 2).unwrap();
        let emp = empirical_stationary(&net, &[2, 0], 4000.0, 50.0, 11).unwrap();
        let tv = total_variation(&emp, &exact).unwrap();
        assert!(tv < 0.01, "tv {tv}");
    }

    #[test]
    fn empirical_matches_worked_bimolecular_case() {
        let net = net2(vec![
            (vec![1, 0], vec![0, 1], 2.0),
            (vec![0, 1], vec![1, 0], 1.0),
            (vec![1, 1], vec![2, 0], 3.0),
            (vec![1, 1], vec![0, 2], 1.0),
        ]);
        let exact = exact_stationary(&net, 2).unwrap();
        let emp = empirical_stationary(&net, &[2, 0], 6000.0, 50.0, 3).unwrap();
        let tv = total_variation(&emp, &exact).unwrap();
        assert!(tv < 0.01, "tv {tv}");
    }

    #[test]
    fn empirical_matches_exact_on_three_species_network() {
        // Exchange pair composed with a two-complex cycle on a third
        // species; checks the estimator beyond the two-species examples.
        let net = ReactionNetwork::new(
            vec!["S1".into(), "S2".into(), "S3".into()],
            vec![
                Reaction {
                    reactant: ComplexVec(vec![1, 0, 0]),
                    product: ComplexVec(vec![0, 1, 0]),
                    rate: 1.0,
                },
                Reaction {
                    reactant: ComplexVec(vec![0, 1, 0]),
                    product: ComplexVec(vec![1, 0, 0]),
                    rate: 1.0,
                },
                Reaction {
                    reactant: ComplexVec(vec![1, 1, 0]),
                    product: ComplexVec(vec![0, 2, 0]),
                    rate: 1.0,
                },
                Reaction {
                    reactant: ComplexVec(vec![2, 0, 0]),
                    product: ComplexVec(vec![0, 0, 2]),
                    rate: 1.0,
                },
                Reaction {
                    reactant: ComplexVec(vec![0, 0, 2]),
                    product: ComplexVec(vec![1, 0, 1]),
                    rate: 1.0,
                },
                Reaction {
                    reactant: ComplexVec(vec![1, 0, 1]),
                    product: ComplexVec(vec![2, 0, 0]),
                    rate: 1.0,
                },
            ],
        )
        .unwrap();
        let exact = exact_stationary(&net, 6).unwrap();
        let emp = empirical_stationary(&net, &[6, 0, 0], 8000.0, 100.0, 21).unwrap();
        let tv = total_variation(&emp, &exact).unwrap();
        assert!(tv < 0.02, "tv {tv}");
    }

    #[test]
    fn short_window_still_normalizes() {
        let net = example_a();
        let emp = empirical_stationary(&net, &[3, 0], 1.0, 0.9, 5).unwrap();
        let sum: f64 = emp.probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(emp.probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn window_validation() {
        let net = example_a();
        assert!(matches!(
            empirical_stationary(&net, &[3, 0], 1.0, 2.0, 5),
            Err(SimError::BadTimeWindow { .. })
        ));
        assert!(matches!(
            simulate(&net, &[3, 0], 0.0, 5),
            Err(SimError::NonPositiveTime)
        ));
        let one_way = net2(vec![(vec![1, 0], vec![0, 1], 1.0)]);
        assert!(matches!(
            empirical_stationary(&one_way, &[3, 0], 10.0, 1.0, 5),
            Err(SimError::Oracle(OracleError::NotIrreducible { .. }))
        ));
    }

    #[test]
    fn seed_streams_are_independent_but_reproducible() {
        let net = example_a();
        let a = empirical_stationary_stream(&net, &[4, 0], 200.0, 10.0, 1, 0).unwrap();
        let b = empirical_stationary_stream(&net, &[4, 0], 200.0, 10.0, 1, 1).unwrap();
        let a2 = empirical_stationary_stream(&net, &[4, 0], 200.0, 10.0, 1, 0).unwrap();
        assert_eq!(a.probs, a2.probs);
        assert_ne!(a.probs, b.probs);
    }

    #[test]
    fn longer_runs_do_not_get_worse() {
        // Doubling t_max must not significantly increase the mean TV over
        // 20 seed streams.
        let net = example_a();
        let exact = exact_stationary(&net, 4).unwrap();
        let mut deltas = Vec::new();
        for stream in 0..20u64 {
            let short =
                empirical_stationary_stream(&net, &[4, 0], 400.0, 20.0, 99, stream).unwrap();
            let long =
                empirical_stationary_stream(&net, &[4, 0], 800.0, 20.0, 199, stream).unwrap();
            let tv_short = total_variation(&short, &exact).unwrap();
            let tv_long = total_variation(&long, &exact).unwrap();
            deltas.push(tv_long - tv_short);
        }
        let mean: f64 = deltas.iter().sum::<f64>() / deltas.len() as f64;
        let var: f64 =
            deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (deltas.len() - 1) as f64;
        let se = (var / deltas.len() as f64).sqrt();
        assert!(
            mean <= 3.0 * se.max(1e-4),
            "TV increased significantly: mean delta {mean}, se {se}"
        );
    }
}
