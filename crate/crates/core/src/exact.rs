//! Exact marginals by brute-force enumeration of every joint labeling of a
//! small graph. Used as ground truth for belief propagation.

use crate::error::{Error, Result};
use crate::hsidata::LabelField;
use crate::mrf::{mam_decide, BeliefField, GridGraph, PairwisePotential, UnaryField};

pub const MAX_NODES: usize = 14;
pub const MAX_CONFIGURATIONS: u64 = 1 << 24;

fn check_size(nodes: usize, states: usize) -> Result<u64> {
    let too_big = Error::EnumerationLimit { nodes, states };
    if nodes > MAX_NODES {
        return Err(too_big);
    }
    let total = (states as u64)
        .checked_pow(nodes as u32)
        .filter(|&t| t <= MAX_CONFIGURATIONS)
        .ok_or(too_big)?;
    Ok(total)
}

/// Marginal of every node under `prod unary * prod psi`, normalized by the
/// partition function.
pub fn exact_marginals(graph: &GridGraph, unary: &UnaryField, pairwise: &PairwisePotential) -> Result<BeliefField> {
    let n = graph.num_nodes();
    let m = unary.num_classes();
    if unary.num_nodes() != n || pairwise.num_classes() != m {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: unary.num_nodes(),
        });
    }
    let total = check_size(n, m)?;

    let log_unary: Vec<Vec<f64>> = (0..n).map(|i| unary.node(i).iter().map(|v| v.ln()).collect()).collect();
    let log_table: Vec<f64> = pairwise.table.transpose().iter().map(|v| v.ln()).collect();
    let edges = graph.edges();

    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    // The last node is enumerated innermost as a block: the rest of the graph
    // (the prefix) is scored once per block, and only the last node's unary
    // and its edges vary inside it.
    let last = n - 1;
    type Edges = Vec<(usize, usize)>;
    let (prefix_edges, last_edges): (Edges, Edges) =
        edges.iter().partition(|&&(a, b)| a != last && b != last);
    let last_neighbors: Vec<usize> = last_edges.iter().map(|&(a, b)| if a == last { b } else { a }).collect();

    // Weights are accumulated relative to the largest log-weight seen so far,
    // rescaling the sums whenever that reference grows.
    let mut marg = vec![0.0; n * m];
    let mut z = 0.0;
    let mut reference = f64::NEG_INFINITY;
    let mut config = vec![0usize; last];
    let mut block = vec![0.0; m];
    for _ in 0..total / m as u64 {
        let mut prefix: f64 = config.iter().enumerate().map(|(i, &k)| log_unary[i][k]).sum();
        for &(a, b) in &prefix_edges {
            prefix += log_table[config[a] * m + config[b]];
        }
        for (k, lw) in block.iter_mut().enumerate() {
            // the pairwise table is symmetric, so edge orientation is irrelevant
            *lw = prefix + log_unary[last][k] + last_neighbors.iter().map(|&j| log_table[config[j] * m + k]).sum::<f64>();
        }
        let block_max = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if block_max > reference {
            let scale = (reference - block_max).exp();
            marg.iter_mut().for_each(|v| *v *= scale);
            z *= scale;
            reference = block_max;
        }
        let mut block_sum = 0.0;
        for (k, lw) in block.iter().enumerate() {
            let w = (lw - reference).exp();
            marg[last * m + k] += w;
            block_sum += w;
        }
        z += block_sum;
        for (i, &k) in config.iter().enumerate() {
            marg[i * m + k] += block_sum;
        }
        // lexicographic odometer over the prefix, highest index fastest
        for i in (0..last).rev() {
            config[i] += 1;
            if config[i] < m {
                break;
            }
            config[i] = 0;
        }
    }
    if !(z > 0.0) {
        return Err(Error::Numerical("partition function is not positive".into()));
    }
    marg.iter_mut().for_each(|v| *v /= z);
    Ok(BeliefField::from_flat(m, marg))
}

/// Per-node argmax of the exact marginals.
pub fn exact_mam(graph: &GridGraph, unary: &UnaryField, pairwise: &PairwisePotential) -> Result<LabelField> {
    mam_decide(&exact_marginals(graph, unary, pairwise)?, graph)
}
