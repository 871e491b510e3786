//! Deterministic mass-action ODE: right-hand side evaluation and
//! steady-state location by adaptive time integration.

use thiserror::Error;

use crate::network::{NetworkError, ReactionNetwork};

#[derive(Debug, Error)]
pub enum OdeError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("no steady state within t = {max_time} at tolerance {tol}")]
    NoConvergence { max_time: f64, tol: f64 },
    #[error("initial concentrations must be positive")]
    NonPositiveInitial,
    #[error("tolerance must be positive")]
    NonPositiveTolerance,
}

/// `c^nu` with the convention `0^0 = 1`.
fn monomial(c: &[f64], nu: &[u32]) -> f64 {
    let mut acc = 1.0;
    for (&ci, &k) in c.iter().zip(nu) {
        for _ in 0..k {
            acc *= ci;
        }
    }
    acc
}

/// Mass-action vector field: `sum_r kappa_r c^{nu_r} (nu'_r - nu_r)`.
pub fn ode_rhs(net: &ReactionNetwork, c: &[f64]) -> Result<Vec<f64>, OdeError> {
    if c.len() != net.num_species() {
        return Err(NetworkError::DimensionMismatch {
            got: c.len(),
            expected: net.num_species(),
        }
        .into());
    }
    if let Some(i) = c.iter().position(|&x| x < 0.0) {
        return Err(NetworkError::NegativeConcentration(i).into());
    }
    let mut out = vec![0.0; c.len()];
    for r in net.reactions() {
        let flux = r.rate * monomial(c, &r.reactant.0);
        for (i, (&nu, &nu_p)) in r.reactant.0.iter().zip(&r.product.0).enumerate() {
            out[i] += flux * (nu_p as f64 - nu as f64);
        }
    }
    Ok(out)
}

/// Options for [`find_equilibrium`].
#[derive(Clone, Copy, Debug)]
pub struct EquilibriumOptions {
    /// Give up with `NoConvergence` once integrated time exceeds this.
    pub max_time: f64,
    pub max_steps: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions {
            max_time: 1e7,
            max_steps: 5_000_000,
            abs_tol: 1e-10,
            rel_tol: 1e-8,
        }
    }
}

/// Integrate the mass-action ODE from `c0` until the vector field is small:
/// `||rhs||_inf < tol * (1 + ||c||_inf)`. Uses an embedded Dormand-Prince
/// 5(4) pair with step-size control.
pub fn find_equilibrium(net: &ReactionNetwork, c0: &[f64], tol: f64) -> Result<Vec<f64>, OdeError> {
    find_equilibrium_with(net, c0, tol, EquilibriumOptions::default())
}

pub fn find_equilibrium_with(
    net: &ReactionNetwork,
    c0: &[f64],
    tol: f64,
    opts: EquilibriumOptions,
) -> Result<Vec<f64>, OdeError> {
    if !(tol > 0.0) {
        return Err(OdeError::NonPositiveTolerance);
    }
    if c0.iter().any(|&x| !(x > 0.0)) {
        return Err(OdeError::NonPositiveInitial);
    }
    // Per-step truncation error re-excites the residual at the level of
    // the step tolerances, so they must sit well below the steady-state
    // threshold or the detector never fires.
    let opts = EquilibriumOptions {
        abs_tol: opts.abs_tol.min(tol * 1e-2),
        rel_tol: opts.rel_tol.min(tol * 1e-1),
        ..opts
    };
    let rhs = |c: &[f64]| -> Vec<f64> {
        // Integration may graze the boundary; clamp for evaluation only.
        let clamped: Vec<f64> = c.iter().map(|&x| x.max(0.0)).collect();
        ode_rhs(net, &clamped).expect("dimension checked above")
    };

    let at_steady_state = |c: &[f64], f: &[f64]| -> bool {
        let fmax = f.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        let cmax = c.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        fmax < tol * (1.0 + cmax)
    };

    // Dormand-Prince 5(4) coefficients.
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let n = c0.len();
    let mut c = c0.to_vec();
    let mut t = 0.0;
    let mut f0 = rhs(&c);
    if at_steady_state(&c, &f0) {
        return Ok(c);
    }
    let mut h = 1e-3;
    for _ in 0..opts.max_steps {
        let mut k = vec![f0.clone()];
        for stage in 0..6 {
            let mut y = c.clone();
            for (s, ks) in k.iter().enumerate() {
                let a = A[stage][s];
                if a != 0.0 {
                    for i in 0..n {
                        y[i] += h * a * ks[i];
                    }
                }
            }
            k.push(rhs(&y));
        }
        let mut c5 = c.clone();
        let mut c4 = c.clone();
        for (s, ks) in k.iter().enumerate() {
            for i in 0..n {
                c5[i] += h * B5[s] * ks[i];
                c4[i] += h * B4[s] * ks[i];
            }
        }
        // Error norm relative to mixed tolerance.
        let mut err: f64 = 0.0;
        for i in 0..n {
            let scale = opts.abs_tol + opts.rel_tol * c[i].abs().max(c5[i].abs());
            err = err.max((c5[i] - c4[i]).abs() / scale);
        }
        if err <= 1.0 {
            t += h;
            for x in c5.iter_mut() {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
            c = c5;
            f0 = rhs(&c);
            if at_steady_state(&c, &f0) {
                return Ok(c);
            }
            if t >= opts.max_time {
                return Err(OdeError::NoConvergence {
                    max_time: opts.max_time,
                    tol,
                });
            }
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * factor).min(opts.max_time - t).max(1e-14);
    }
    Err(OdeError::NoConvergence {
        max_time: opts.max_time,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ComplexVec, Reaction, ReactionNetwork};

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

    fn example_a(k1: f64, k2: f64) -> ReactionNetwork {
        net2(vec![
            (vec![1, 0], vec![0, 1], k1),
            (vec![0, 1], vec![1, 0], k2),
        ])
    }

    /// The exchange + three-molecular capture network whose normalized
    /// dynamics reduce to dy/dt = (1-y) - y - y(1-y)^2.
    fn threemolecular_net() -> ReactionNetwork {
        net2(vec![
            (vec![1, 0], vec![0, 1], 1.0),
            (vec![0, 1], vec![1, 0], 1.0),
            (vec![2, 1], vec![3, 0], 1.0),
        ])
    }

    #[test]
    fn rhs_linear_exchange() {
        let net = example_a(1.0, 1.0);
        let (a, b) = (0.3, 0.9);
        let rhs = ode_rhs(&net, &[a, b]).unwrap();
        assert!((rhs[0] - (b - a)).abs() < 1e-15);
        assert!((rhs[1] - (a - b)).abs() < 1e-15);
    }

    #[test]
    fn rhs_conserves_mass_for_mass_preserving_networks() {
        let net = threemolecular_net();
        for c in [[0.2, 0.8], [1.5, 0.0], [0.0, 0.0], [3.0, 4.0]] {
            let rhs = ode_rhs(&net, &c).unwrap();
            let total: f64 = rhs.iter().sum();
            let scale = rhs.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
            assert!(total.abs() <= 1e-14 * scale, "sum {total} at {c:?}");
        }
    }

    #[test]
    fn rhs_matches_scalar_reduction_of_threemolecular_net() {
        let net = threemolecular_net();
        for y in [0.1, 0.42, 0.77] {
            let rhs = ode_rhs(&net, &[1.0 - y, y]).unwrap();
            let expected = (1.0 - y) - y - y * (1.0 - y) * (1.0 - y);
            assert!((rhs[1] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn rhs_rejects_negative_concentration() {
        let net = example_a(1.0, 1.0);
        assert!(ode_rhs(&net, &[-0.1, 0.5]).is_err());
    }

    #[test]
    fn equilibrium_of_symmetric_exchange() {
        let net = example_a(1.0, 1.0);
        let c = find_equilibrium(&net, &[0.2, 0.8], 1e-10).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-8);
        assert!((c[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn equilibrium_matches_bisection_oracle_for_threemolecular_net() {
        // Scalar oracle: root of F(y) = (1-y) - y - y(1-y)^2 in (0,1).
        let f = |y: f64| (1.0 - y) - y - y * (1.0 - y) * (1.0 - y);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);

        let net = threemolecular_net();
        let c = find_equilibrium(&net, &[0.7, 0.3], 1e-10).unwrap();
        assert!(
            (c[1] - root).abs() < 1e-8,
            "integrated {} vs bisection {root}",
            c[1]
        );
        assert!((c[0] + c[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn equilibrium_of_symmetric_cycle() {
        // 2S1 -> 2S3 -> S1+S3 -> 2S1 with unit rates, total mass 2.
        let net = ReactionNetwork::new(
            vec!["S1".into(), "S3".into()],
            vec![
                Reaction {
                    reactant: ComplexVec(vec![2, 0]),
                    product: ComplexVec(vec![0, 2]),
                    rate: 1.0,
                },
                Reaction {
                    reactant: ComplexVec(vec![0, 2]),
                    product: ComplexVec(vec![1, 1]),
                    rate: 1.0,
                },
                Reaction {
                    reactant: ComplexVec(vec![1, 1]),
                    product: ComplexVec(vec![2, 0]),
                    rate: 1.0,
                },
            ],
        )
        .unwrap();
        let c = find_equilibrium(&net, &[1.6, 0.4], 1e-10).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-7, "{c:?}");
        assert!((c[1] - 1.0).abs() < 1e-7, "{c:?}");
    }

    #[test]
    fn no_convergence_reported_for_drifting_system() {
        // Pure drift S1 -> S2 never reaches a positive steady state from
        // tight tolerance in bounded time... it actually converges to
        // (0, total); use an absurdly small max_time to force the error.
        let net = net2(vec![(vec![1, 0], vec![0, 1], 1.0)]);
        let err = find_equilibrium_with(
            &net,
            &[1.0, 1.0],
            1e-14,
            EquilibriumOptions {
                max_time: 1e-6,
                ..Default::default()
            },
        );
        assert!(matches!(err, Err(OdeError::NoConvergence { .. })));
    }
}
