//! Linear extreme learning machine: a fixed random hidden layer followed by
//! output weights solved in closed form through the pseudoinverse of the
//! hidden activation matrix.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Hidden-node activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Sigmoid,
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" | "logistic" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::InvalidParameter(format!("unknown activation '{other}'"))),
        }
    }
}

/// Random input weights (`nodes x dim`) and biases of the hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    pub input_weights: DMatrix<f64>,
    pub biases: DVector<f64>,
    pub activation: Activation,
    pub seed: u64,
}

impl HiddenLayer {
    pub fn nodes(&self) -> usize {
        self.input_weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.ncols()
    }
}

/// Draws weights uniformly from `[-1, 1]` and biases from `[0, 1]`.
pub fn init_hidden(nodes: usize, dim: usize, activation: Activation, seed: u64) -> Result<HiddenLayer> {
    if nodes == 0 || dim == 0 {
        return Err(Error::InvalidDimension(format!(
            "hidden layer needs at least one node and one input, got L={nodes}, d={dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // filled row by row so each node's weights are a contiguous run of the stream
    let mut input_weights = DMatrix::zeros(nodes, dim);
    for j in 0..nodes {
        for k in 0..dim {
            input_weights[(j, k)] = rng.random_range(-1.0..=1.0);
        }
    }
    let biases = DVector::from_fn(nodes, |_, _| rng.random_range(0.0..=1.0));
    Ok(HiddenLayer {
        input_weights,
        biases,
        activation,
        seed,
    })
}

/// `G[i][j] = g(w_j . x_i + b_j)` for every sample row `x_i`.
pub fn hidden_map(layer: &HiddenLayer, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if samples.ncols() != layer.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: layer.input_dim(),
            got: samples.ncols(),
        });
    }
    let mut g = samples * layer.input_weights.transpose();
    for (j, mut col) in g.column_iter_mut().enumerate() {
        let b = layer.biases[j];
        for v in col.iter_mut() {
            *v = layer.activation.apply(*v + b);
        }
    }
    Ok(g)
}

/// Solves for output weights `beta` with `G beta ~ Y`.
///
/// With `ridge == 0` this is the minimum-norm least-squares solution `G^+ Y`,
/// computed from an SVD whose singular values below
/// `max(N, L) * sigma_max * eps` are dropped. With `ridge > 0` it is the
/// Tikhonov solution, solved in whichever of the primal (`L x L`) or dual
/// (`N x N`) systems is smaller.
pub fn train(g: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let (n, l) = g.shape();
    if n == 0 {
        return Err(Error::InvalidDimension("training requires at least one sample".into()));
    }
    if y.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.nrows(),
        });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {ridge}")));
    }
    if g.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in hidden matrix or targets".into()));
    }

    if ridge == 0.0 {
        return pinv_solve(g, y);
    }
    if n >= l {
        let mut a = g.tr_mul(g);
        for i in 0..l {
            a[(i, i)] += ridge;
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Numerical("ridge normal matrix is not positive definite".into()))?;
        Ok(chol.solve(&g.tr_mul(y)))
    } else {
        let mut a = g * g.transpose();
        for i in 0..n {
            a[(i, i)] += ridge;
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Numerical("ridge Gram matrix is not positive definite".into()))?;
        Ok(g.tr_mul(&chol.solve(y)))
    }
}

fn pinv_solve(g: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, l) = g.shape();
    let svd = g.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let s = &svd.singular_values;
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let cutoff = n.max(l) as f64 * s_max * f64::EPSILON;

    // beta = V diag(1/s) U^T Y, skipping singular values below the cutoff
    let mut uty = u.tr_mul(y);
    for (k, mut row) in uty.row_iter_mut().enumerate() {
        let sk = s[k];
        if sk > cutoff {
            row /= sk;
        } else {
            row.fill(0.0);
        }
    }
    let beta = v_t.tr_mul(&uty);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("pseudoinverse produced non-finite weights".into()));
    }
    Ok(beta)
}

/// Trained linear ELM.
#[derive(Debug, Clone, PartialEq)]
pub struct ElmModel {
    pub hidden: HiddenLayer,
    pub output_weights: DMatrix<f64>,
    pub ridge: f64,
}

impl ElmModel {
    /// Maps the samples through `hidden` and solves for the output weights.
    pub fn fit(hidden: HiddenLayer, samples: &DMatrix<f64>, targets: &DMatrix<f64>, ridge: f64) -> Result<Self> {
        let g = hidden_map(&hidden, samples)?;
        let output_weights = train(&g, targets, ridge)?;
        Ok(Self {
            hidden,
            output_weights,
            ridge,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.output_weights.ncols()
    }

    /// Raw scores `hidden_map(samples) * beta`.
    pub fn predict(&self, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(hidden_map(&self.hidden, samples)? * &self.output_weights)
    }
}

/// Per-sample class probability vectors, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    probs: DMatrix<f64>,
}

impl ProbabilityField {
    /// Wraps rows that are already nonnegative and sum to one.
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        for (i, row) in probs.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Numerical(format!(
                    "row {i} is not a probability vector (sum {sum})"
                )));
            }
        }
        Ok(Self { probs })
    }

    pub fn num_samples(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.probs.row(i).iter().copied().collect()
    }

    /// Zero-based class of the largest probability in row `i`, smallest index on ties.
    pub fn argmax(&self, i: usize) -> usize {
        argmax_first(self.probs.row(i).iter().copied())
    }
}

/// Index of the first maximum.
pub fn argmax_first(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Row-wise softmax of `scores / temperature`, max-shifted before exponentiation.
pub fn scores_to_probs(scores: &DMatrix<f64>, temperature: f64) -> Result<ProbabilityField> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite score".into()));
    }
    let mut probs = scores / temperature;
    for mut row in probs.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    Ok(ProbabilityField { probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn init_is_deterministic_and_in_range() {
        let a = init_hidden(3, 2, Activation::Sigmoid, 42).unwrap();
        let b = init_hidden(3, 2, Activation::Sigmoid, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_hidden(3, 2, Activation::Sigmoid, 43).unwrap());

        let big = init_hidden(200, 50, Activation::Sigmoid, 1).unwrap();
        assert!(big.input_weights.iter().all(|w| (-1.0..=1.0).contains(w)));
        assert!(big.biases.iter().all(|b| (0.0..=1.0).contains(b)));
    }

    #[test]
    fn init_weight_mean_near_zero() {
        let layer = init_hidden(1000, 1000, Activation::Sigmoid, 5).unwrap();
        let mean = layer.input_weights.mean();
        assert!(mean.abs() <= 0.01, "mean {mean}");
    }

    #[test]
    fn init_rejects_zero_dims() {
        assert!(matches!(
            init_hidden(0, 2, Activation::Sigmoid, 0),
            Err(Error::InvalidDimension(_))
        ));
        assert!(init_hidden(2, 0, Activation::Sigmoid, 0).is_err());
    }

    #[test]
    fn hidden_map_scalar_cases() {
        let zero = HiddenLayer {
            input_weights: DMatrix::zeros(4, 3),
            biases: DVector::zeros(4),
            activation: Activation::Sigmoid,
            seed: 0,
        };
        let x = DMatrix::from_element(5, 3, 0.7);
        assert!(hidden_map(&zero, &x).unwrap().iter().all(|&v| v == 0.5));

        let one = HiddenLayer {
            input_weights: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            biases: DVector::zeros(1),
            activation: Activation::Sigmoid,
            seed: 0,
        };
        let g = hidden_map(&one, &DMatrix::from_row_slice(1, 2, &[0.3, 0.2])).unwrap();
        assert_relative_eq!(g[(0, 0)], 1.0 / (1.0 + (-0.5f64).exp()), epsilon = 1e-15);

        let empty = hidden_map(&zero, &DMatrix::zeros(0, 3)).unwrap();
        assert_eq!(empty.shape(), (0, 4));

        assert!(matches!(
            hidden_map(&zero, &DMatrix::zeros(1, 2)),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn train_identity_returns_targets() {
        let g = DMatrix::identity(4, 4);
        let y = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 - 2.5);
        let beta = train(&g, &y, 0.0).unwrap();
        assert_relative_eq!(beta, y, epsilon = 1e-14);
    }

    #[test]
    fn train_matches_explicit_pseudoinverse_3x2() {
        // full column rank, so G^+ = (G^T G)^-1 G^T; 2x2 inverse written out
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 7.0]);
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let (a, b, d) = (1.0 + 9.0 + 25.0, 2.0 + 12.0 + 35.0, 4.0 + 16.0 + 49.0);
        let det = a * d - b * b;
        let inv = DMatrix::from_row_slice(2, 2, &[d / det, -b / det, -b / det, a / det]);
        let expected = inv * g.transpose() * &y;
        let beta = train(&g, &y, 0.0).unwrap();
        assert_relative_eq!(beta, expected, epsilon = 1e-12);
    }

    #[test]
    fn train_rejects_bad_input() {
        let mut g = DMatrix::identity(2, 2);
        let y = DMatrix::identity(2, 2);
        assert!(matches!(train(&g, &y, -1.0), Err(Error::InvalidParameter(_))));
        g[(0, 1)] = f64::NAN;
        assert!(matches!(train(&g, &y, 0.0), Err(Error::Numerical(_))));
        assert!(train(&DMatrix::zeros(0, 2), &DMatrix::zeros(0, 2), 0.0).is_err());
    }

    #[test]
    fn ridge_primal_and_dual_agree() {
        let g = DMatrix::from_fn(6, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.4);
        let y = DMatrix::from_fn(6, 2, |i, j| ((i + j) % 2) as f64);
        let primal = train(&g, &y, 0.5).unwrap();
        // dual path via the transposed-wide problem
        let gt = g.transpose();
        let mut a = &gt * g.clone();
        for i in 0..4 {
            a[(i, i)] += 0.5;
        }
        let explicit = a.try_inverse().unwrap() * gt * &y;
        assert_relative_eq!(primal, explicit, epsilon = 1e-12);

        let wide = g.transpose();
        let y_wide = DMatrix::from_fn(4, 2, |i, j| (i * j) as f64);
        let dual = train(&wide, &y_wide, 0.5).unwrap();
        let mut b = &g * g.transpose();
        for i in 0..6 {
            b[(i, i)] += 0.5;
        }
        let explicit = b.try_inverse().unwrap() * &g * &y_wide;
        assert_relative_eq!(dual, explicit, epsilon = 1e-10);
    }

    #[test]
    fn predict_is_hidden_times_beta() {
        let hidden = HiddenLayer {
            input_weights: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            biases: DVector::zeros(2),
            activation: Activation::Identity,
            seed: 0,
        };
        let model = ElmModel {
            hidden: hidden.clone(),
            output_weights: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            ridge: 0.0,
        };
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.5, -1.0]);
        let s = model.predict(&x).unwrap();
        // [1,1]*B = [4,6]; [0.5,-1]*B = [0.5-3, 1-4]
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[4.0, 6.0, -2.5, -3.0]));

        let zero = ElmModel {
            hidden,
            output_weights: DMatrix::zeros(2, 3),
            ridge: 0.0,
        };
        assert!(zero.predict(&x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_cases() {
        let p = scores_to_probs(&DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]), 1.0).unwrap();
        for k in 0..3 {
            assert_relative_eq!(p.matrix()[(0, k)], 1.0 / 3.0, epsilon = 1e-15);
        }
        let p = scores_to_probs(&DMatrix::from_row_slice(1, 2, &[2f64.ln(), 0.0]), 1.0).unwrap();
        assert_relative_eq!(p.matrix()[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(p.matrix()[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);

        let huge = scores_to_probs(&DMatrix::from_row_slice(1, 2, &[1e6, 0.0]), 1.0).unwrap();
        assert_eq!(huge.argmax(0), 0);
        assert!(scores_to_probs(&DMatrix::zeros(1, 2), 0.0).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_first([0.5, 0.5]), 0);
        assert_eq!(argmax_first([0.2, 0.5, 0.3]), 1);
    }
}
