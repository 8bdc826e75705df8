//! Background-masked grid MRF with a Potts smoothness prior, solved for
//! per-pixel marginals by synchronous sum-product loopy belief propagation.
//!
//! Only non-background pixels become nodes, so no message ever crosses a
//! background pixel. Training pixels stay in the graph with their unaries
//! clamped to the known class; their evidence then propagates to the test
//! pixels around them.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::elm::{argmax_first, ProbabilityField};
use crate::error::{Error, Result};
use crate::hsidata::{LabelField, Pixel, SampleSplit};

/// Unary entries are floored here before renormalization.
pub const UNARY_FLOOR: f64 = 1e-30;
/// Default probability mass spread over the wrong classes of a training node.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-6;
const MESSAGE_FLOOR: f64 = 1e-300;

/// Pixel neighborhood used to connect nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        // forward half only; each edge is generated once
        match self {
            Connectivity::Four => &[(0, 1), (1, 0)],
            Connectivity::Eight => &[(0, 1), (1, -1), (1, 0), (1, 1)],
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Connectivity::Four => "4",
            Connectivity::Eight => "8",
        })
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(Error::InvalidParameter(format!(
                "connectivity must be 4 or 8, got '{other}'"
            ))),
        }
    }
}

/// Undirected graph over the unmasked pixels of an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridGraph {
    height: usize,
    width: usize,
    node_coords: Vec<Pixel>,
    pixel_to_node: Vec<Option<usize>>,
    adjacency: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl GridGraph {
    /// Nodes for every `true` pixel of a row-major mask, numbered in raster order.
    pub fn from_mask(height: usize, width: usize, mask: &[bool], connectivity: Connectivity) -> Result<Self> {
        if height == 0 || width == 0 || mask.len() != height * width {
            return Err(Error::InvalidShape(format!(
                "mask of length {} does not describe a {height}x{width} grid",
                mask.len()
            )));
        }
        let mut pixel_to_node = vec![None; mask.len()];
        let mut node_coords = Vec::new();
        for (p, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            pixel_to_node[p] = Some(node_coords.len());
            node_coords.push((p / width, p % width));
        }
        if node_coords.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let mut adjacency = vec![Vec::new(); node_coords.len()];
        let mut edges = Vec::new();
        for (a, &(r, c)) in node_coords.iter().enumerate() {
            for &(dr, dc) in connectivity.offsets() {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr as usize >= height || nc as usize >= width {
                    continue;
                }
                if let Some(b) = pixel_to_node[nr as usize * width + nc as usize] {
                    edges.push((a, b));
                    adjacency[a].push(b);
                    adjacency[b].push(a);
                }
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(Self {
            height,
            width,
            node_coords,
            pixel_to_node,
            adjacency,
            edges,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn node_coords(&self) -> &[Pixel] {
        &self.node_coords
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Node id of a pixel, `None` for masked-out pixels.
    pub fn node_at(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.height || col >= self.width {
            return None;
        }
        self.pixel_to_node[row * self.width + col]
    }

    /// Connected component id per node, numbered by first appearance.
    pub fn components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.num_nodes()];
        let mut next = 0;
        for start in 0..self.num_nodes() {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = next;
            while let Some(u) = stack.pop() {
                for &v in &self.adjacency[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

/// Graph over the non-background pixels of `labels`.
pub fn build_graph(labels: &LabelField, connectivity: Connectivity) -> Result<GridGraph> {
    let mask: Vec<bool> = labels.labels().iter().map(|&l| l != 0).collect();
    GridGraph::from_mask(labels.height(), labels.width(), &mask, connectivity)
}

/// Potts interaction `psi(a, b) = exp(mu * [a == b])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwisePotential {
    pub mu: f64,
    pub table: DMatrix<f64>,
}

impl PairwisePotential {
    pub fn num_classes(&self) -> usize {
        self.table.nrows()
    }
}

pub fn make_pairwise(mu: f64, num_classes: usize) -> Result<PairwisePotential> {
    if num_classes < 2 {
        return Err(Error::InvalidParameter(format!(
            "pairwise potential needs at least 2 classes, got {num_classes}"
        )));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu must be finite and >= 0, got {mu}")));
    }
    let same = mu.exp();
    let table = DMatrix::from_fn(num_classes, num_classes, |a, b| if a == b { same } else { 1.0 });
    Ok(PairwisePotential { mu, table })
}

/// Per-node evidence vectors, strictly positive and normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    num_classes: usize,
    values: Vec<f64>,
}

impl UnaryField {
    /// Floors and renormalizes each row of `rows` (one per node).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_classes = rows.first().map_or(0, Vec::len);
        if num_classes == 0 {
            return Err(Error::InvalidDimension("unary field needs at least one class".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * num_classes);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != num_classes {
                return Err(Error::DimensionMismatch {
                    expected: num_classes,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Numerical(format!("unary {i} has a negative or non-finite entry")));
            }
            push_normalized(&mut values, row);
        }
        Ok(Self { num_classes, values })
    }

    pub fn num_nodes(&self) -> usize {
        self.values.len() / self.num_classes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_classes..(i + 1) * self.num_classes]
    }
}

fn push_normalized(out: &mut Vec<f64>, row: &[f64]) {
    if row.iter().all(|&v| v >= UNARY_FLOOR) {
        let sum: f64 = row.iter().sum();
        out.extend(row.iter().map(|v| v / sum));
    } else {
        let floored: Vec<f64> = row.iter().map(|&v| v.max(UNARY_FLOOR)).collect();
        let sum: f64 = floored.iter().sum();
        out.extend(floored.iter().map(|v| v / sum));
    }
}

/// Builds node unaries: classifier probabilities for test nodes, a clamp on
/// the true class for training nodes.
///
/// `probs` holds one row per graph node, in node order.
pub fn assemble_unaries(
    probs: &ProbabilityField,
    graph: &GridGraph,
    split: &SampleSplit,
    truth: &LabelField,
    clamp_eps: f64,
) -> Result<UnaryField> {
    let m = probs.num_classes();
    if probs.num_samples() < graph.num_nodes() {
        return Err(Error::MissingUnary(probs.num_samples()));
    }
    if !(clamp_eps > 0.0 && clamp_eps < 1.0) {
        return Err(Error::InvalidParameter(format!("clamp_eps must lie in (0, 1), got {clamp_eps}")));
    }
    if m < 2 {
        return Err(Error::InvalidParameter("unaries need at least 2 classes".into()));
    }
    let mut clamp = vec![None; graph.num_nodes()];
    for &(r, c) in &split.train_indices {
        let node = graph.node_at(r, c).ok_or(Error::IndexError {
            row: r,
            col: c,
            height: graph.height,
            width: graph.width,
        })?;
        let label = truth.get(r, c);
        if label == 0 || label as usize > m {
            return Err(Error::InvalidLabel { label, num_classes: m });
        }
        clamp[node] = Some(label as usize - 1);
    }

    let off = clamp_eps / (m - 1) as f64;
    let mut values = Vec::with_capacity(graph.num_nodes() * m);
    for (node, cl) in clamp.iter().enumerate() {
        match cl {
            Some(k) => values.extend((0..m).map(|j| if j == *k { 1.0 - clamp_eps } else { off })),
            None => push_normalized(&mut values, &probs.row(node)),
        }
    }
    Ok(UnaryField { num_classes: m, values })
}

/// Iteration controls for [`lbp_run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbpParams {
    pub max_iters: usize,
    pub tol: f64,
    /// Weight kept on the previous message, in `[0, 1)`.
    pub damping: f64,
}

impl Default for LbpParams {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-6,
            damping: 0.5,
        }
    }
}

/// Normalized per-node marginal estimates plus convergence metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefField {
    num_classes: usize,
    values: Vec<f64>,
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
}

impl BeliefField {
    pub(crate) fn from_flat(num_classes: usize, values: Vec<f64>) -> Self {
        Self {
            num_classes,
            values,
            iterations: 0,
            final_delta: 0.0,
            converged: true,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.values.len() / self.num_classes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Synchronous loopy BP state: two directed messages per edge.
///
/// Directed edge `e` runs from `src[e]` to `dst[e]`; edges leaving node `i`
/// occupy `out_start[i]..out_start[i + 1]` and `rev[e]` is the opposite edge.
pub struct Lbp<'a> {
    unary: &'a UnaryField,
    keep: f64,
    mix: f64,
    damping: f64,
    src: Vec<usize>,
    rev: Vec<usize>,
    out_start: Vec<usize>,
    messages: Vec<f64>,
    log_messages: Vec<f64>,
    iteration: usize,
}

impl<'a> Lbp<'a> {
    pub fn new(graph: &GridGraph, unary: &'a UnaryField, pairwise: &PairwisePotential, damping: f64) -> Result<Self> {
        let m = unary.num_classes();
        if pairwise.num_classes() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: pairwise.num_classes(),
            });
        }
        if unary.num_nodes() != graph.num_nodes() {
            return Err(Error::MissingUnary(unary.num_nodes().min(graph.num_nodes())));
        }
        if !(0.0..1.0).contains(&damping) {
            return Err(Error::InvalidParameter(format!("damping must lie in [0, 1), got {damping}")));
        }
        let n = graph.num_nodes();
        let mut out_start = Vec::with_capacity(n + 1);
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for i in 0..n {
            out_start.push(src.len());
            for &j in graph.neighbors(i) {
                src.push(i);
                dst.push(j);
            }
        }
        out_start.push(src.len());
        let rev = (0..src.len())
            .map(|e| {
                let (i, j) = (src[e], dst[e]);
                let pos = graph.neighbors(j).binary_search(&i).expect("symmetric adjacency");
                out_start[j] + pos
            })
            .collect();

        // sum_a psi(a, b) x(a) = e^mu (e^-mu sum(x) + (1 - e^-mu) x(b)); the
        // overall e^mu drops out under normalization.
        let keep = (-pairwise.mu).exp();
        let uniform = 1.0 / m as f64;
        let messages = vec![uniform; src.len() * m];
        let log_messages = vec![uniform.ln(); src.len() * m];
        Ok(Self {
            unary,
            keep,
            mix: 1.0 - keep,
            damping,
            src,
            rev,
            out_start,
            messages,
            log_messages,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn num_directed_edges(&self) -> usize {
        self.src.len()
    }

    /// Message on directed edge `e`.
    pub fn message(&self, e: usize) -> &[f64] {
        let m = self.unary.num_classes();
        &self.messages[e * m..(e + 1) * m]
    }

    /// Runs one flood update and returns the largest absolute message change.
    pub fn step(&mut self) -> Result<f64> {
        let m = self.unary.num_classes();
        let old = &self.messages;
        let logs = &self.log_messages;
        let (unary, src, rev, out_start) = (self.unary, &self.src, &self.rev, &self.out_start);
        let (keep, mix, damping) = (self.keep, self.mix, self.damping);

        let mut next = vec![0.0; old.len()];
        next.par_chunks_mut(m).enumerate().for_each(|(e, out)| {
            let i = src[e];
            let skip = rev[e];
            let mut pre: Vec<f64> = unary.node(i).iter().map(|p| p.ln()).collect();
            for &inc in &rev[out_start[i]..out_start[i + 1]] {
                if inc == skip {
                    continue;
                }
                for (p, l) in pre.iter_mut().zip(&logs[inc * m..(inc + 1) * m]) {
                    *p += l;
                }
            }
            let max = pre.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for p in pre.iter_mut() {
                *p = (*p - max).exp();
                total += *p;
            }
            let base = keep * total;
            let mut sum = 0.0;
            for (o, a) in out.iter_mut().zip(&pre) {
                *o = base + mix * a;
                sum += *o;
            }
            let prev = &old[e * m..(e + 1) * m];
            for (o, p) in out.iter_mut().zip(prev) {
                *o = ((1.0 - damping) * (*o / sum) + damping * p).max(MESSAGE_FLOOR);
            }
        });

        let mut delta = 0.0f64;
        for (a, b) in next.iter().zip(old) {
            if !a.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite message at iteration {}",
                    self.iteration + 1
                )));
            }
            delta = delta.max((a - b).abs());
        }
        self.log_messages = next.iter().map(|v| v.ln()).collect();
        self.messages = next;
        self.iteration += 1;
        Ok(delta)
    }

    /// Beliefs from the current messages: the unary times every incoming
    /// message, normalized.
    pub fn beliefs(&self) -> BeliefField {
        let m = self.unary.num_classes();
        let n = self.unary.num_nodes();
        let mut values = vec![0.0; n * m];
        values.par_chunks_mut(m).enumerate().for_each(|(i, out)| {
            let mut acc = vec![0.0; m];
            for &inc in &self.rev[self.out_start[i]..self.out_start[i + 1]] {
                for (a, l) in acc.iter_mut().zip(&self.log_messages[inc * m..(inc + 1) * m]) {
                    *a += l;
                }
            }
            let max = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for ((o, a), u) in out.iter_mut().zip(&acc).zip(self.unary.node(i)) {
                *o = u * (a - max).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        });
        BeliefField {
            num_classes: m,
            values,
            iterations: self.iteration,
            final_delta: 0.0,
            converged: false,
        }
    }
}

/// Runs flood-schedule sum-product BP until the largest message change drops
/// below `params.tol` or `params.max_iters` sweeps have run.
pub fn lbp_run(graph: &GridGraph, unary: &UnaryField, pairwise: &PairwisePotential, params: &LbpParams) -> Result<BeliefField> {
    if params.max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }
    let mut lbp = Lbp::new(graph, unary, pairwise, params.damping)?;
    let mut delta = 0.0;
    let mut converged = lbp.num_directed_edges() == 0;
    if !converged {
        for _ in 0..params.max_iters {
            delta = lbp.step()?;
            if delta < params.tol {
                converged = true;
                break;
            }
        }
    }
    let mut beliefs = lbp.beliefs();
    beliefs.final_delta = delta;
    beliefs.converged = converged;
    Ok(beliefs)
}

/// Label per node from the largest belief (lowest class on ties); masked
/// pixels get 0.
pub fn mam_decide(beliefs: &BeliefField, graph: &GridGraph) -> Result<LabelField> {
    if beliefs.num_nodes() != graph.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: graph.num_nodes(),
            got: beliefs.num_nodes(),
        });
    }
    let (h, w) = graph.shape();
    let mut labels = vec![0u16; h * w];
    for (i, &(r, c)) in graph.node_coords().iter().enumerate() {
        labels[r * w + c] = argmax_first(beliefs.node(i).iter().copied()) as u16 + 1;
    }
    LabelField::new(h, w, beliefs.num_classes(), labels)
}
