//! Synthetic hyperspectral scenes: spatially coherent label maps with a
//! background mask, and per-class spectral signatures plus gaussian noise.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::hsidata::{HsiCube, LabelField};
use crate::seed::stream_seed;

const MAX_ATTEMPTS: u64 = 100;
const LABEL_STREAM: u64 = 1;
const SIGNATURE_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub classes: usize,
    /// Majority-vote passes applied to the i.i.d. initial labels.
    pub smoothing_passes: usize,
    pub noise_sigma: f64,
    pub background_fraction: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            bands: 20,
            classes: 4,
            smoothing_passes: 5,
            noise_sigma: 0.35,
            background_fraction: 0.1,
            seed: 1,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.bands == 0 {
            return Err(Error::InvalidParameter("scene dimensions must be positive".into()));
        }
        if self.classes < 2 || self.classes > u16::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "scene needs at least 2 classes, got {}",
                self.classes
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(0.0..1.0).contains(&self.background_fraction) {
            return Err(Error::InvalidParameter(format!(
                "background_fraction must lie in [0, 1), got {}",
                self.background_fraction
            )));
        }
        Ok(())
    }
}

/// One majority-vote pass over the 8 neighbors of each pixel, updated in
/// place in raster order. A label with a strict plurality replaces the
/// current label; ties keep it.
fn smooth_pass(labels: &mut [u16], h: usize, w: usize, classes: usize) {
    let mut counts = vec![0u8; classes + 1];
    for r in 0..h {
        for c in 0..w {
            counts.iter_mut().for_each(|n| *n = 0);
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if (dr, dc) == (0, 0) || rr < 0 || cc < 0 || rr as usize >= h || cc as usize >= w {
                        continue;
                    }
                    counts[labels[rr as usize * w + cc as usize] as usize] += 1;
                }
            }
            let best = *counts.iter().max().unwrap();
            let mut winners = counts.iter().enumerate().filter(|(_, &n)| n == best);
            let (first, _) = winners.next().unwrap();
            if winners.next().is_none() {
                labels[r * w + c] = first as u16;
            }
        }
    }
}

/// Spatially smoothed random label map with a random background subset.
pub fn gen_label_map(spec: &SceneSpec) -> Result<LabelField> {
    spec.validate()?;
    let (h, w, m) = (spec.height, spec.width, spec.classes);
    let n = h * w;
    let n_background = (spec.background_fraction * n as f64).round() as usize;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, LABEL_STREAM + 16 * attempt));
        let mut labels: Vec<u16> = (0..n).map(|_| rng.random_range(1..=m as u16)).collect();
        for _ in 0..spec.smoothing_passes {
            smooth_pass(&mut labels, h, w, m);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for &p in &order[..n_background] {
            labels[p] = 0;
        }
        let mut seen = vec![false; m + 1];
        labels.iter().for_each(|&l| seen[l as usize] = true);
        if seen[1..].iter().all(|&s| s) {
            return LabelField::new(h, w, m, labels);
        }
    }
    Err(Error::GenerationFailure(format!(
        "could not realize all {m} classes in {MAX_ATTEMPTS} attempts"
    )))
}

/// Per-class signatures, uniform on `[0.2, 1.0]` per band, for `spec.seed`.
pub fn class_signatures(spec: &SceneSpec) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, SIGNATURE_STREAM));
    (0..spec.classes)
        .map(|_| (0..spec.bands).map(|_| rng.random_range(0.2..=1.0)).collect())
        .collect()
}

/// Cube whose pixels are their class signature plus gaussian noise, clamped
/// at zero. Background pixels use the mean signature.
pub fn gen_cube(labels: &LabelField, spec: &SceneSpec) -> Result<HsiCube> {
    spec.validate()?;
    if labels.shape() != (spec.height, spec.width) || labels.num_classes() != spec.classes {
        return Err(Error::InvalidShape(format!(
            "label field {:?} with {} classes does not match scene spec",
            labels.shape(),
            labels.num_classes()
        )));
    }
    let d = spec.bands;
    let signatures = class_signatures(spec);
    let mean: Vec<f64> = (0..d)
        .map(|b| signatures.iter().map(|s| s[b]).sum::<f64>() / spec.classes as f64)
        .collect();
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, NOISE_STREAM));
    let mut values = Vec::with_capacity(labels.labels().len() * d);
    for &l in labels.labels() {
        let base = if l == 0 { &mean } else { &signatures[l as usize - 1] };
        for &s in base {
            let v = if spec.noise_sigma > 0.0 { s + noise.sample(&mut rng) } else { s };
            values.push(v.max(0.0));
        }
    }
    HsiCube::new(spec.height, spec.width, d, values)
}

/// Generates labels and cube together.
pub fn gen_scene(spec: &SceneSpec) -> Result<(HsiCube, LabelField)> {
    let labels = gen_label_map(spec)?;
    let cube = gen_cube(&labels, spec)?;
    Ok((cube, labels))
}

/// Fraction of 4-adjacent pixel pairs (both non-background) with equal labels.
pub fn same_label_fraction(labels: &LabelField) -> f64 {
    let (h, w) = labels.shape();
    let (mut same, mut total) = (0usize, 0usize);
    for r in 0..h {
        for c in 0..w {
            let a = labels.get(r, c);
            if a == 0 {
                continue;
            }
            for (rr, cc) in [(r + 1, c), (r, c + 1)] {
                if rr < h && cc < w {
                    let b = labels.get(rr, cc);
                    if b != 0 {
                        total += 1;
                        same += (a == b) as usize;
                    }
                }
            }
        }
    }
    same as f64 / total.max(1) as f64
}
