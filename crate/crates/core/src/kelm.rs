//! Kernel extreme learning machine, trained in its dual form: the output is
//! `f(x) = K(x, train) A` with `A = (I/C + Omega)^-1 Y` and `Omega` the Gram
//! matrix of the training samples.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default cost `C = 2^9`.
pub const DEFAULT_COST: f64 = 512.0;
/// Default gaussian bandwidth `sigma = 2^-1`.
pub const DEFAULT_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `exp(-||x - y||^2 / (2 sigma^2))`
    Gaussian { sigma: f64 },
    /// `x . y`
    Linear,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Gaussian {
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { sigma } => write!(f, "gaussian(sigma={sigma})"),
            KernelSpec::Linear => f.write_str("linear"),
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::InvalidParameter(format!("gaussian sigma must be positive, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Kernel matrix with entry `(i, j) = K(a_i, b_j)`.
///
/// Gaussian distances use `|x|^2 + |y|^2 - 2 x.y` clamped at zero, with the
/// norms computed by the same dot product as the cross term so identical rows
/// give exactly 1.
pub fn gram(kernel: &KernelSpec, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    let ra = rows_of(a);
    let rb = rows_of(b);
    let nb = rb.len();
    let entries: Vec<f64> = match *kernel {
        KernelSpec::Linear => ra
            .par_iter()
            .flat_map_iter(|x| rb.iter().map(move |y| dot(x, y)))
            .collect(),
        KernelSpec::Gaussian { sigma } => {
            let scale = 1.0 / (2.0 * sigma * sigma);
            let nb_sq: Vec<f64> = rb.iter().map(|y| dot(y, y)).collect();
            ra.par_iter()
                .flat_map_iter(|x| {
                    let nx = dot(x, x);
                    rb.iter().zip(&nb_sq).map(move |(y, ny)| {
                        let d2 = (nx + ny - 2.0 * dot(x, y)).max(0.0);
                        (-d2 * scale).exp()
                    })
                })
                .collect()
        }
    };
    Ok(DMatrix::from_row_slice(ra.len(), nb, &entries))
}

/// Trained kernel ELM.
#[derive(Debug, Clone, PartialEq)]
pub struct KelmModel {
    pub kernel: KernelSpec,
    pub train_samples: DMatrix<f64>,
    pub dual_coefficients: DMatrix<f64>,
    pub cost: f64,
}

/// Solves `(I/C + Omega) A = Y` by Cholesky factorization.
pub fn train_kelm(train_samples: &DMatrix<f64>, targets: &DMatrix<f64>, kernel: KernelSpec, cost: f64) -> Result<KelmModel> {
    if !(cost > 0.0) {
        return Err(Error::InvalidParameter(format!("cost C must be positive, got {cost}")));
    }
    let n = train_samples.nrows();
    if n == 0 {
        return Err(Error::InvalidDimension("training requires at least one sample".into()));
    }
    if targets.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: targets.nrows(),
        });
    }
    let mut system = gram(&kernel, train_samples, train_samples)?;
    for i in 0..n {
        system[(i, i)] += 1.0 / cost;
    }
    let chol = match system.clone().cholesky() {
        Some(c) => c,
        None => {
            let eig = system.symmetric_eigenvalues();
            let (lo, hi) = (eig.min(), eig.max());
            return Err(Error::Numerical(format!(
                "regularized Gram matrix is not positive definite \
                 (eigenvalues in [{lo:.3e}, {hi:.3e}], condition ~{:.3e})",
                hi.abs() / lo.abs().max(f64::MIN_POSITIVE)
            )));
        }
    };
    let dual_coefficients = chol.solve(targets);
    if dual_coefficients.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite dual coefficients".into()));
    }
    Ok(KelmModel {
        kernel,
        train_samples: train_samples.clone(),
        dual_coefficients,
        cost,
    })
}

impl KelmModel {
    pub fn num_classes(&self) -> usize {
        self.dual_coefficients.ncols()
    }

    /// Scores `K(samples, train) * A`.
    pub fn predict(&self, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(gram(&self.kernel, samples, &self.train_samples)? * &self.dual_coefficients)
    }
}

/// Free-function form of [`KelmModel::predict`].
pub fn predict_kelm(model: &KelmModel, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.predict(samples)
}
