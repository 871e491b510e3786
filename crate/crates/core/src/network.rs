//! Core reaction-network representation and stochastic mass-action rates.
//!
//! A network is a list of named species and a list of reactions
//! `reactant -> product` with a positive rate constant. Complexes are dense
//! coefficient vectors over the species, reactions are ordered pairs of
//! complexes, and the stochastic model assigns each reaction the intensity
//! `kappa * x!/(x - reactant)!` on integer count vectors.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or evaluating a network.
#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("malformed network JSON: {0}")]
    MalformedJson(String),
    #[error("species {0:?} is declared more than once")]
    DuplicateSpecies(String),
    #[error("reaction {index} references unknown species {name:?}")]
    UnknownSpecies { index: usize, name: String },
    #[error("reaction {index} has non-positive rate {rate}")]
    NonPositiveRate { index: usize, rate: f64 },
    #[error("reaction {index} has an empty reactant or product complex")]
    EmptyComplex { index: usize },
    #[error("reaction {index} is a self-loop (reactant equals product)")]
    SelfLoop { index: usize },
    #[error("reactions {first} and {second} duplicate the same reactant/product pair")]
    DuplicateReaction { first: usize, second: usize },
    #[error("reaction index {0} out of range")]
    BadReactionIndex(usize),
    #[error("state vector has {got} entries, network has {expected} species")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("negative concentration at species index {0}")]
    NegativeConcentration(usize),
}

/// A complex: stoichiometric coefficients per species, dense over the
/// network's species ordering.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ComplexVec(pub Vec<u32>);

impl ComplexVec {
    pub fn zeros(n: usize) -> Self {
        ComplexVec(vec![0; n])
    }

    /// Total number of molecules in the complex (its molecularity when used
    /// as a reactant).
    pub fn molecularity(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_empty_complex(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Coefficient for species `i`.
    pub fn coeff(&self, i: usize) -> u32 {
        self.0[i]
    }
}

/// A single reaction with mass-action rate constant.
#[derive(Clone, Debug, PartialEq)]
pub struct Reaction {
    pub reactant: ComplexVec,
    pub product: ComplexVec,
    pub rate: f64,
}

impl Reaction {
    /// Net species change `product - reactant` as signed integers.
    pub fn net_change(&self) -> Vec<i64> {
        self.reactant
            .0
            .iter()
            .zip(&self.product.0)
            .map(|(&r, &p)| p as i64 - r as i64)
            .collect()
    }

    pub fn is_mass_preserving(&self) -> bool {
        self.reactant.molecularity() == self.product.molecularity()
    }
}

/// A reaction network: species names plus reactions over them.
#[derive(Clone, Debug, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<String>,
    reactions: Vec<Reaction>,
}

/// Wire format for the shared network JSON file.
#[derive(Serialize, Deserialize)]
struct NetworkFile {
    species: Vec<String>,
    reactions: Vec<ReactionFile>,
}

#[derive(Serialize, Deserialize)]
struct ReactionFile {
    reactant: BTreeMap<String, u32>,
    product: BTreeMap<String, u32>,
    rate: f64,
}

impl ReactionNetwork {
    /// Validating constructor used by both the parser and the programmatic
    /// builders.
    pub fn new(species: Vec<String>, reactions: Vec<Reaction>) -> Result<Self, NetworkError> {
        let n = species.len();
        let mut seen = HashSet::new();
        for name in &species {
            if !seen.insert(name.clone()) {
                return Err(NetworkError::DuplicateSpecies(name.clone()));
            }
        }
        let mut pairs: Vec<(&ComplexVec, &ComplexVec)> = Vec::with_capacity(reactions.len());
        for (index, r) in reactions.iter().enumerate() {
            if r.reactant.0.len() != n || r.product.0.len() != n {
                return Err(NetworkError::DimensionMismatch {
                    got: r.reactant.0.len().max(r.product.0.len()),
                    expected: n,
                });
            }
            if !(r.rate > 0.0) || !r.rate.is_finite() {
                return Err(NetworkError::NonPositiveRate {
                    index,
                    rate: r.rate,
                });
            }
            if r.reactant.is_empty_complex() || r.product.is_empty_complex() {
                return Err(NetworkError::EmptyComplex { index });
            }
            if r.reactant == r.product {
                return Err(NetworkError::SelfLoop { index });
            }
            if let Some(first) = pairs
                .iter()
                .position(|(re, pr)| **re == r.reactant && **pr == r.product)
            {
                return Err(NetworkError::DuplicateReaction {
                    first,
                    second: index,
                });
            }
            pairs.push((&r.reactant, &r.product));
        }
        Ok(ReactionNetwork { species, reactions })
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    /// Every reaction preserves the total molecule count.
    pub fn is_mass_preserving(&self) -> bool {
        self.reactions.iter().all(Reaction::is_mass_preserving)
    }

    /// Whether for every reaction the reversed reaction is present.
    pub fn is_reversible(&self) -> bool {
        self.reactions.iter().all(|r| {
            self.reactions
                .iter()
                .any(|s| s.reactant == r.product && s.product == r.reactant)
        })
    }

    /// Index of the reverse of reaction `r`, if present.
    pub fn reverse_of(&self, r: usize) -> Option<usize> {
        let fwd = &self.reactions[r];
        self.reactions
            .iter()
            .position(|s| s.reactant == fwd.product && s.product == fwd.reactant)
    }

    /// Human-readable rendering of a reaction, e.g. `2 S1 + S2 -> 3 S1`.
    pub fn reaction_display(&self, index: usize) -> String {
        let r = &self.reactions[index];
        format!(
            "{} -> {}",
            self.complex_display(&r.reactant),
            self.complex_display(&r.product)
        )
    }

    pub fn complex_display(&self, c: &ComplexVec) -> String {
        let mut parts = Vec::new();
        for (i, &k) in c.0.iter().enumerate() {
            match k {
                0 => {}
                1 => parts.push(self.species[i].clone()),
                _ => parts.push(format!("{} {}", k, self.species[i])),
            }
        }
        if parts.is_empty() {
            "0".to_string()
        } else {
            parts.join(" + ")
        }
    }
}

impl fmt::Display for ReactionNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.reactions.len() {
            writeln!(
                f,
                "{}  (rate {})",
                self.reaction_display(i),
                self.reactions[i].rate
            )?;
        }
        Ok(())
    }
}

fn complex_from_map(
    map: &BTreeMap<String, u32>,
    species: &[String],
    index: usize,
) -> Result<ComplexVec, NetworkError> {
    let mut v = vec![0u32; species.len()];
    for (name, &count) in map {
        let i =
            species
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| NetworkError::UnknownSpecies {
                    index,
                    name: name.clone(),
                })?;
        v[i] = count;
    }
    Ok(ComplexVec(v))
}

/// Parse a network from the shared JSON document format.
pub fn parse_network(text: &str) -> Result<ReactionNetwork, NetworkError> {
    let file: NetworkFile =
        serde_json::from_str(text).map_err(|e| NetworkError::MalformedJson(e.to_string()))?;
    let mut reactions = Vec::with_capacity(file.reactions.len());
    for (index, r) in file.reactions.iter().enumerate() {
        reactions.push(Reaction {
            reactant: complex_from_map(&r.reactant, &file.species, index)?,
            product: complex_from_map(&r.product, &file.species, index)?,
            rate: r.rate,
        });
    }
    ReactionNetwork::new(file.species, reactions)
}

/// Serialize a network back to the shared JSON format. Round-trips exactly
/// through [`parse_network`].
pub fn serialize_network(net: &ReactionNetwork) -> String {
    let to_map = |c: &ComplexVec| -> BTreeMap<String, u32> {
        c.0.iter()
            .enumerate()
            .filter(|(_, &k)| k > 0)
            .map(|(i, &k)| (net.species[i].clone(), k))
            .collect()
    };
    let file = NetworkFile {
        species: net.species.clone(),
        reactions: net
            .reactions
            .iter()
            .map(|r| ReactionFile {
                reactant: to_map(&r.reactant),
                product: to_map(&r.product),
                rate: r.rate,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("network serialization cannot fail")
}

/// Stochastic mass-action intensity of reaction `r` at count vector `x`:
/// `kappa * x!/(x - reactant)!` when `x >= reactant` componentwise, else 0.
pub fn propensity(net: &ReactionNetwork, x: &[u32], r: usize) -> Result<f64, NetworkError> {
    let reaction = net
        .reactions
        .get(r)
        .ok_or(NetworkError::BadReactionIndex(r))?;
    if x.len() != net.num_species() {
        return Err(NetworkError::DimensionMismatch {
            got: x.len(),
            expected: net.num_species(),
        });
    }
    Ok(propensity_unchecked(reaction, x))
}

/// Falling-factorial intensity without index validation; used in the hot
/// loops of the oracle and the simulator.
pub fn propensity_unchecked(reaction: &Reaction, x: &[u32]) -> f64 {
    let mut acc = reaction.rate;
    for (i, &nu) in reaction.reactant.0.iter().enumerate() {
        if x[i] < nu {
            return 0.0;
        }
        for k in 0..nu {
            acc *= (x[i] - k) as f64;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_species(reactions: Vec<(Vec<u32>, Vec<u32>, f64)>) -> ReactionNetwork {
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

    #[test]
    fn parses_example_a() {
        let text = r#"{
            "species": ["S1", "S2"],
            "reactions": [
                {"reactant": {"S1": 1}, "product": {"S2": 1}, "rate": 1.0},
                {"reactant": {"S2": 1}, "product": {"S1": 1}, "rate": 1.0}
            ]
        }"#;
        let net = parse_network(text).unwrap();
        assert_eq!(net.num_species(), 2);
        assert_eq!(net.reactions().len(), 2);
        assert!(net.is_reversible());
    }

    #[test]
    fn rejects_non_positive_rate() {
        let text = r#"{
            "species": ["S1", "S2"],
            "reactions": [
                {"reactant": {"S1": 1}, "product": {"S2": 1}, "rate": -1.0}
            ]
        }"#;
        assert!(matches!(
            parse_network(text),
            Err(NetworkError::NonPositiveRate { .. })
        ));
    }

    #[test]
    fn rejects_self_loop() {
        let text = r#"{
            "species": ["S1"],
            "reactions": [
                {"reactant": {"S1": 1}, "product": {"S1": 1}, "rate": 1.0}
            ]
        }"#;
        assert!(matches!(
            parse_network(text),
            Err(NetworkError::SelfLoop { .. })
        ));
    }

    #[test]
    fn rejects_duplicate_reaction_instead_of_merging() {
        let text = r#"{
            "species": ["S1", "S2"],
            "reactions": [
                {"reactant": {"S1": 1}, "product": {"S2": 1}, "rate": 1.0},
                {"reactant": {"S1": 1}, "product": {"S2": 1}, "rate": 2.0}
            ]
        }"#;
        assert!(matches!(
            parse_network(text),
            Err(NetworkError::DuplicateReaction {
                first: 0,
                second: 1
            })
        ));
    }

    #[test]
    fn rejects_unknown_species_and_malformed_json() {
        let text = r#"{
            "species": ["S1"],
            "reactions": [
                {"reactant": {"S9": 1}, "product": {"S1": 1}, "rate": 1.0}
            ]
        }"#;
        assert!(matches!(
            parse_network(text),
            Err(NetworkError::UnknownSpecies { .. })
        ));
        assert!(matches!(
            parse_network("not json"),
            Err(NetworkError::MalformedJson(_))
        ));
    }

    #[test]
    fn serialize_round_trips_example_c() {
        // Example (C): monomolecular exchange plus both bimolecular captures.
        let net = two_species(vec![
            (vec![1, 0], vec![0, 1], 1.0),
            (vec![0, 1], vec![1, 0], 1.0),
            (vec![1, 1], vec![2, 0], 1.0),
            (vec![1, 1], vec![0, 2], 1.0),
        ]);
        let doc = serialize_network(&net);
        let back = parse_network(&doc).unwrap();
        assert_eq!(net, back);
        assert_eq!(back.reactions().len(), 4);
    }

    #[test]
    fn serialize_handles_empty_reaction_list() {
        let net = ReactionNetwork::new(vec!["S1".into()], vec![]).unwrap();
        let doc = serialize_network(&net);
        let back = parse_network(&doc).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn propensity_examples() {
        // S1 + S2 -> 2 S2 with kappa = 1 at x = (2, 1).
        let net = two_species(vec![(vec![1, 1], vec![0, 2], 1.0)]);
        assert_eq!(propensity(&net, &[2, 1], 0).unwrap(), 2.0);

        // S1 -> S2 with kappa = 3 at x = (0, 5): inactive.
        let net = two_species(vec![(vec![1, 0], vec![0, 1], 3.0)]);
        assert_eq!(propensity(&net, &[0, 5], 0).unwrap(), 0.0);

        // 2 S1 + S2 -> 3 S1 with kappa = 2 at x = (4, 2): 2 * (4*3) * 2 = 48.
        let net = two_species(vec![(vec![2, 1], vec![3, 0], 2.0)]);
        assert_eq!(propensity(&net, &[4, 2], 0).unwrap(), 48.0);

        assert!(matches!(
            propensity(&net, &[4, 2], 7),
            Err(NetworkError::BadReactionIndex(7))
        ));
    }

    /// Naive oracle: kappa * prod_i x_i! / (x_i - nu_i)! via explicit
    /// factorials, independent of the falling-factorial loop.
    fn propensity_factorial_oracle(reaction: &Reaction, x: &[u32]) -> f64 {
        fn fact(n: u32) -> f64 {
            (1..=n as u64).map(|k| k as f64).product()
        }
        let mut acc = reaction.rate;
        for (i, &nu) in reaction.reactant.0.iter().enumerate() {
            if x[i] < nu {
                return 0.0;
            }
            acc *= fact(x[i]) / fact(x[i] - nu);
        }
        acc
    }

    #[test]
    fn propensity_agrees_with_factorial_oracle_on_small_states() {
        // All states with |x| <= 8 over 3 species, assorted reactions.
        let net = ReactionNetwork::new(
            vec!["A".into(), "B".into(), "C".into()],
            vec![
                Reaction {
                    reactant: ComplexVec(vec![1, 0, 0]),
                    product: ComplexVec(vec![0, 1, 0]),
                    rate: 1.5,
                },
                Reaction {
                    reactant: ComplexVec(vec![2, 1, 0]),
                    product: ComplexVec(vec![3, 0, 0]),
                    rate: 0.7,
                },
                Reaction {
                    reactant: ComplexVec(vec![1, 1, 1]),
                    product: ComplexVec(vec![0, 0, 3]),
                    rate: 2.0,
                },
            ],
        )
        .unwrap();
        for a in 0..=8u32 {
            for b in 0..=(8 - a) {
                for c in 0..=(8 - a - b) {
                    let x = [a, b, c];
                    for (r, reaction) in net.reactions().iter().enumerate() {
                        let got = propensity(&net, &x, r).unwrap();
                        let want = propensity_factorial_oracle(reaction, &x);
                        assert!(
                            (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                            "mismatch at {x:?} reaction {r}: {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn display_renders_coefficients() {
        let net = two_species(vec![(vec![2, 1], vec![3, 0], 2.0)]);
        assert_eq!(net.reaction_display(0), "2 S1 + S2 -> 3 S1");
    }

    mod round_trip {
        use super::*;
        use proptest::prelude::*;

        fn arb_network() -> impl Strategy<Value = ReactionNetwork> {
            let complex = prop::collection::vec(0u32..4, 3);
            let reaction = (complex.clone(), complex, 1e-6f64..1e6).prop_filter_map(
                "valid reaction",
                |(r, p, rate)| {
                    let reactant = ComplexVec(r);
                    let product = ComplexVec(p);
                    (!reactant.is_empty_complex()
                        && !product.is_empty_complex()
                        && reactant != product)
                        .then_some(Reaction {
                            reactant,
                            product,
                            rate,
                        })
                },
            );
            prop::collection::vec(reaction, 0..6).prop_filter_map("no duplicates", |reactions| {
                ReactionNetwork::new(vec!["A".into(), "B".into(), "C".into()], reactions).ok()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]
            #[test]
            fn serialize_then_parse_is_identity(net in arb_network()) {
                let doc = serialize_network(&net);
                let back = parse_network(&doc).unwrap();
                prop_assert_eq!(net, back);
            }
        }
    }
}
