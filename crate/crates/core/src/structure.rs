//! Structural analysis: complexes, linkage classes, stoichiometric rank,
//! deficiency, and reversibility flags.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::network::{ComplexVec, ReactionNetwork};

/// Summary of the network's static structure.
///
/// `deficiency = num_complexes - linkage_classes - stoich_dim`, a
/// non-negative integer for any network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralReport {
    pub num_complexes: usize,
    /// Connected components of the undirected reaction graph, as sets of
    /// complex indices into the deduplicated complex list.
    pub linkage_classes: Vec<Vec<usize>>,
    /// Rank of the span of `product - reactant` over the rationals.
    pub stoich_dim: usize,
    pub deficiency: usize,
    pub weakly_reversible: bool,
    pub reversible: bool,
    pub mass_preserving: bool,
    pub max_molecularity: u32,
}

/// Deduplicated complexes (exact coefficient equality) plus the reaction
/// graph as pairs of complex indices.
pub fn complex_graph(net: &ReactionNetwork) -> (Vec<ComplexVec>, Vec<(usize, usize)>) {
    let mut complexes: Vec<ComplexVec> = Vec::new();
    let mut index: HashMap<ComplexVec, usize> = HashMap::new();
    let mut intern = |c: &ComplexVec, complexes: &mut Vec<ComplexVec>| -> usize {
        if let Some(&i) = index.get(c) {
            i
        } else {
            let i = complexes.len();
            complexes.push(c.clone());
            index.insert(c.clone(), i);
            i
        }
    };
    let mut edges = Vec::with_capacity(net.reactions().len());
    for r in net.reactions() {
        let a = intern(&r.reactant, &mut complexes);
        let b = intern(&r.product, &mut complexes);
        edges.push((a, b));
    }
    (complexes, edges)
}

/// Connected components of an undirected graph given as edges over
/// `0..n`, each component sorted, components ordered by smallest member.
fn connected_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut comp = vec![usize::MAX; n];
    let mut components = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        comp[start] = id;
        while let Some(v) = stack.pop() {
            members.push(v);
            for &w in &adj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = id;
                    stack.push(w);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

/// Tarjan strongly connected components; returns the component id per node.
fn strongly_connected(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
    }
    struct Tarjan<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<usize>,
        lowlink: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next_index: usize,
        comp: Vec<usize>,
        next_comp: usize,
    }
    impl Tarjan<'_> {
        // Iterative DFS to avoid recursion limits on long chains.
        fn run(&mut self, root: usize) {
            let mut call_stack: Vec<(usize, usize)> = vec![(root, 0)];
            self.index[root] = self.next_index;
            self.lowlink[root] = self.next_index;
            self.next_index += 1;
            self.stack.push(root);
            self.on_stack[root] = true;
            while let Some(&mut (v, ref mut edge_pos)) = call_stack.last_mut() {
                if *edge_pos < self.adj[v].len() {
                    let w = self.adj[v][*edge_pos];
                    *edge_pos += 1;
                    if self.index[w] == usize::MAX {
                        self.index[w] = self.next_index;
                        self.lowlink[w] = self.next_index;
                        self.next_index += 1;
                        self.stack.push(w);
                        self.on_stack[w] = true;
                        call_stack.push((w, 0));
                    } else if self.on_stack[w] {
                        self.lowlink[v] = self.lowlink[v].min(self.index[w]);
                    }
                } else {
                    call_stack.pop();
                    if let Some(&(parent, _)) = call_stack.last() {
                        self.lowlink[parent] = self.lowlink[parent].min(self.lowlink[v]);
                    }
                    if self.lowlink[v] == self.index[v] {
                        loop {
                            let w = self.stack.pop().unwrap();
                            self.on_stack[w] = false;
                            self.comp[w] = self.next_comp;
                            if w == v {
                                break;
                            }
                        }
                        self.next_comp += 1;
                    }
                }
            }
        }
    }
    let mut t = Tarjan {
        adj: &adj,
        index: vec![usize::MAX; n],
        lowlink: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next_index: 0,
        comp: vec![usize::MAX; n],
        next_comp: 0,
    };
    for v in 0..n {
        if t.index[v] == usize::MAX {
            t.run(v);
        }
    }
    t.comp
}

/// Exact rank of an integer matrix over the rationals, by fraction-free
/// (Bareiss) elimination in i128. Float rank is unreliable here; the
/// deficiency must be an exact integer.
pub fn integer_rank(rows: &[Vec<i64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let mut m: Vec<Vec<i128>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| x as i128).collect())
        .collect();
    let nrows = m.len();
    let ncols = m[0].len();
    let mut rank = 0;
    let mut prev_pivot: i128 = 1;
    for col in 0..ncols {
        // Find a pivot row at or below `rank`.
        let pivot_row = (rank..nrows).find(|&r| m[r][col] != 0);
        let Some(pr) = pivot_row else { continue };
        m.swap(rank, pr);
        let pivot = m[rank][col];
        for r in 0..nrows {
            if r == rank {
                continue;
            }
            for c in 0..ncols {
                if c == col {
                    continue;
                }
                m[r][c] = (pivot * m[r][c] - m[r][col] * m[rank][c]) / prev_pivot;
            }
            m[r][col] = 0;
        }
        prev_pivot = pivot;
        rank += 1;
        if rank == nrows {
            break;
        }
    }
    rank
}

/// Compute the structural summary of a network.
pub fn structural_summary(net: &ReactionNetwork) -> StructuralReport {
    let (complexes, edges) = complex_graph(net);
    let linkage_classes = connected_components(complexes.len(), &edges);
    let scc = strongly_connected(complexes.len(), &edges);
    let weakly_reversible = !complexes.is_empty() && edges.iter().all(|&(a, b)| scc[a] == scc[b]);

    let rows: Vec<Vec<i64>> = net.reactions().iter().map(|r| r.net_change()).collect();
    let stoich_dim = integer_rank(&rows);

    let deficiency = complexes.len() - linkage_classes.len() - stoich_dim;
    StructuralReport {
        num_complexes: complexes.len(),
        stoich_dim,
        deficiency,
        weakly_reversible,
        reversible: !net.reactions().is_empty() && net.is_reversible(),
        mass_preserving: net.is_mass_preserving(),
        max_molecularity: net
            .reactions()
            .iter()
            .map(|r| r.reactant.molecularity())
            .max()
            .unwrap_or(0),
        linkage_classes,
    }
}
