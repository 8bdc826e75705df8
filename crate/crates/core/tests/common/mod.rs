//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use elmlbp::{Connectivity, GridGraph, UnaryField};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Grows a random 4-connected tree of at most `max_nodes` cells inside an
/// `h x w` grid. A cell is only added when exactly one of its 4-neighbors is
/// already in the tree, so the induced grid graph has no cycles.
pub fn random_tree_mask(rng: &mut impl Rng, h: usize, w: usize, max_nodes: usize) -> Vec<bool> {
    let mut mask = vec![false; h * w];
    let start = rng.random_range(0..h * w);
    mask[start] = true;
    let mut count = 1;
    let target = rng.random_range(1..=max_nodes);
    let in_tree_neighbors = |mask: &[bool], p: usize| {
        let (r, c) = (p / w, p % w);
        let mut n = 0;
        if r > 0 && mask[p - w] {
            n += 1;
        }
        if r + 1 < h && mask[p + w] {
            n += 1;
        }
        if c > 0 && mask[p - 1] {
            n += 1;
        }
        if c + 1 < w && mask[p + 1] {
            n += 1;
        }
        n
    };
    while count < target {
        let mut frontier: Vec<usize> = (0..h * w).filter(|&p| !mask[p] && in_tree_neighbors(&mask, p) == 1).collect();
        if frontier.is_empty() {
            break;
        }
        frontier.shuffle(rng);
        mask[frontier[0]] = true;
        count += 1;
    }
    mask
}

pub fn random_tree(rng: &mut impl Rng, max_nodes: usize) -> GridGraph {
    let mask = random_tree_mask(rng, 5, 5, max_nodes);
    GridGraph::from_mask(5, 5, &mask, Connectivity::Four).unwrap()
}

pub fn full_grid(h: usize, w: usize) -> GridGraph {
    GridGraph::from_mask(h, w, &vec![true; h * w], Connectivity::Four).unwrap()
}

/// Strictly positive random unaries, each row normalized.
pub fn random_unaries(rng: &mut impl Rng, nodes: usize, classes: usize) -> UnaryField {
    let rows: Vec<Vec<f64>> = (0..nodes)
        .map(|_| {
            let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect();
    UnaryField::from_rows(&rows).unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Primal ridge solution `x (X^T X + I/C)^-1 X^T Y`, computed independently
/// of the library.
pub fn primal_ridge(train: &DMatrix<f64>, targets: &DMatrix<f64>, cost: f64, query: &DMatrix<f64>) -> DMatrix<f64> {
    let d = train.ncols();
    let a = train.transpose() * train + DMatrix::identity(d, d) / cost;
    let w = a.lu().solve(&(train.transpose() * targets)).unwrap();
    query * w
}
