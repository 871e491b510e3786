//! Detailed-balance and complex-balance residuals for the deterministic
//! model, evaluated at a candidate positive point.

use thiserror::Error;

use crate::network::ReactionNetwork;
use crate::numeric::relative_mismatch;
use crate::structure::complex_graph;

#[derive(Debug, Error)]
pub enum BalanceError {
    #[error("reaction {index} ({display}) has no reverse reaction")]
    NotReversible { index: usize, display: String },
    #[error("balance point must be positive in every coordinate")]
    NonPositivePoint,
}

fn monomial(a: &[f64], nu: &[u32]) -> f64 {
    let mut acc = 1.0;
    for (&ai, &k) in a.iter().zip(nu) {
        for _ in 0..k {
            acc *= ai;
        }
    }
    acc
}

/// Max relative mismatch of `kappa_fwd a^nu = kappa_bwd a^nu'` over all
/// reversible reaction pairs. Errors with `NotReversible` if any reaction
/// lacks a reverse.
pub fn detailed_balance_residual(net: &ReactionNetwork, a: &[f64]) -> Result<f64, BalanceError> {
    if a.iter().any(|&x| !(x > 0.0)) {
        return Err(BalanceError::NonPositivePoint);
    }
    let mut worst = 0.0_f64;
    for (index, r) in net.reactions().iter().enumerate() {
        let rev = net
            .reverse_of(index)
            .ok_or_else(|| BalanceError::NotReversible {
                index,
                display: net.reaction_display(index),
            })?;
        let fwd_flux = r.rate * monomial(a, &r.reactant.0);
        let bwd = &net.reactions()[rev];
        let bwd_flux = bwd.rate * monomial(a, &bwd.reactant.0);
        worst = worst.max(relative_mismatch(fwd_flux, bwd_flux));
    }
    Ok(worst)
}

/// Max over complexes of the relative mismatch between outgoing flux
/// `sum_{nu -> nu'} kappa a^nu` and incoming flux `sum_{nu' -> nu} kappa a^nu'`.
pub fn complex_balance_residual(net: &ReactionNetwork, a: &[f64]) -> Result<f64, BalanceError> {
    if a.iter().any(|&x| !(x > 0.0)) {
        return Err(BalanceError::NonPositivePoint);
    }
    let (complexes, edges) = complex_graph(net);
    let mut outflow = vec![0.0_f64; complexes.len()];
    let mut inflow = vec![0.0_f64; complexes.len()];
    for (r, &(src, dst)) in net.reactions().iter().zip(&edges) {
        let flux = r.rate * monomial(a, &r.reactant.0);
        outflow[src] += flux;
        inflow[dst] += flux;
    }
    Ok(outflow
        .iter()
        .zip(&inflow)
        .map(|(&o, &i)| relative_mismatch(o, i))
        .fold(0.0, f64::max))
}
