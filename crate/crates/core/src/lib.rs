//! Spectral-spatial classification of hyperspectral images.
//!
//! Per-pixel spectra are classified by a linear or kernel extreme learning
//! machine; the class probabilities then seed a Potts-prior MRF over the
//! non-background pixels, whose marginals are estimated by loopy belief
//! propagation and argmaxed into the final label map.

// Parameter checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod elm;
pub mod error;
pub mod exact;
pub mod formats;
pub mod hsidata;
pub mod kelm;
pub mod metrics;
pub mod mrf;
pub mod pipeline;
pub mod render;
pub mod seed;
pub mod synth;

pub use config::{ClassifierKind, PipelineConfig};
pub use elm::{Activation, ElmModel, HiddenLayer, ProbabilityField};
pub use error::{Error, Result};
pub use hsidata::{HsiCube, LabelField, NormalizedCube, Pixel, SampleSplit, TrainSpec};
pub use kelm::{KelmModel, KernelSpec};
pub use metrics::{ConfusionMatrix, RunReport};
pub use mrf::{BeliefField, Connectivity, GridGraph, LbpParams, PairwisePotential, UnaryField};
pub use synth::SceneSpec;
