//! Cube and label-map data model, max normalization, stratified train/test
//! splitting, and one-hot target encoding.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `(row, col)` pixel coordinate.
pub type Pixel = (usize, usize);

/// One-hot training targets, one row per sample and one column per class.
pub type TargetMatrix = DMatrix<f64>;

/// Raw `height x width x bands` spectral cube, pixel-major with each pixel's
/// bands contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<f64>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::InvalidShape(format!(
                "cube dimensions must be positive, got {height}x{width}x{bands}"
            )));
        }
        let expected = height * width * bands;
        if values.len() != expected {
            return Err(Error::InvalidShape(format!(
                "expected {expected} values for {height}x{width}x{bands}, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            height,
            width,
            bands,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Spectrum of a single pixel.
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.bands;
        &self.values[start..start + self.bands]
    }

    /// Largest value over every pixel and band.
    pub fn global_max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A cube divided by its global maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCube {
    cube: HsiCube,
    divisor: f64,
}

impl NormalizedCube {
    pub fn cube(&self) -> &HsiCube {
        &self.cube
    }

    /// The global maximum the source cube was divided by.
    pub fn divisor(&self) -> f64 {
        self.divisor
    }

    pub fn into_inner(self) -> HsiCube {
        self.cube
    }
}

/// Divides every value by the maximum over the whole cube, background pixels
/// included.
pub fn normalize(cube: &HsiCube) -> Result<NormalizedCube> {
    let max = cube.global_max();
    if max <= 0.0 {
        return Err(Error::DegenerateCube(max));
    }
    let values = cube.values.iter().map(|v| v / max).collect();
    Ok(NormalizedCube {
        cube: HsiCube {
            values,
            ..*cube
        },
        divisor: max,
    })
}

/// `height x width` integer label map; 0 is background, classes are `1..=num_classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelField {
    height: usize,
    width: usize,
    num_classes: usize,
    labels: Vec<u16>,
}

impl LabelField {
    pub fn new(height: usize, width: usize, num_classes: usize, labels: Vec<u16>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidShape(format!(
                "label field dimensions must be positive, got {height}x{width}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::InvalidShape(format!(
                "expected {} labels for {height}x{width}, got {}",
                height * width,
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize > num_classes) {
            return Err(Error::InvalidLabel {
                label: bad,
                num_classes,
            });
        }
        Ok(Self {
            height,
            width,
            num_classes,
            labels,
        })
    }

    /// All-background field.
    pub fn background(height: usize, width: usize, num_classes: usize) -> Result<Self> {
        Self::new(height, width, num_classes, vec![0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, label: u16) -> Result<()> {
        if label as usize > self.num_classes {
            return Err(Error::InvalidLabel {
                label,
                num_classes: self.num_classes,
            });
        }
        self.check_bounds(row, col)?;
        self.labels[row * self.width + col] = label;
        Ok(())
    }

    pub fn check_bounds(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.height || col >= self.width {
            return Err(Error::IndexError {
                row,
                col,
                height: self.height,
                width: self.width,
            });
        }
        Ok(())
    }

    /// Non-background pixels in raster order.
    pub fn labeled_pixels(&self) -> Vec<Pixel> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    /// Number of pixels carrying each class, index 0 for class 1.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_classes];
        for &l in self.labels.iter().filter(|&&l| l != 0) {
            sizes[l as usize - 1] += 1;
        }
        sizes
    }
}

/// How many training pixels to draw from each class.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainSpec {
    /// `round(fraction * class size)`, at least one, for every class.
    Fraction(f64),
    /// Explicit per-class counts, index 0 for class 1.
    Counts(Vec<usize>),
}

/// Disjoint training and test pixel sets covering every labeled pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSplit {
    pub train_indices: Vec<Pixel>,
    pub test_indices: Vec<Pixel>,
    pub per_class_train_counts: Vec<usize>,
}

/// Draws a per-class random training subset; the rest of the labeled pixels
/// become the test set. Both lists come back in raster order.
///
/// One RNG seeded from `seed` is consumed class by class in class order, so a
/// given seed always reproduces the same split.
pub fn stratified_split(labels: &LabelField, spec: &TrainSpec, seed: u64) -> Result<SampleSplit> {
    let m = labels.num_classes();
    if m == 0 {
        return Err(Error::InvalidSplit("label field declares no classes".into()));
    }
    let mut by_class: Vec<Vec<Pixel>> = vec![Vec::new(); m];
    for (row, col) in labels.labeled_pixels() {
        by_class[labels.get(row, col) as usize - 1].push((row, col));
    }

    let counts: Vec<usize> = match spec {
        TrainSpec::Fraction(f) => {
            if !(*f > 0.0 && *f < 1.0) {
                return Err(Error::InvalidSplit(format!(
                    "training fraction must lie in (0, 1), got {f}"
                )));
            }
            by_class
                .iter()
                .map(|pix| ((f * pix.len() as f64).round() as usize).max(1))
                .collect()
        }
        TrainSpec::Counts(c) => {
            if c.len() != m {
                return Err(Error::InvalidSplit(format!(
                    "expected {m} per-class counts, got {}",
                    c.len()
                )));
            }
            if let Some(k) = c.iter().position(|&n| n == 0) {
                return Err(Error::InvalidSplit(format!(
                    "class {} needs at least one training sample",
                    k + 1
                )));
            }
            c.clone()
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (k, mut pixels) in by_class.into_iter().enumerate() {
        let class = (k + 1) as u16;
        if pixels.is_empty() {
            return Err(Error::MissingClass(class));
        }
        if counts[k] > pixels.len() {
            return Err(Error::InsufficientSamples {
                class,
                requested: counts[k],
                available: pixels.len(),
            });
        }
        pixels.shuffle(&mut rng);
        let (tr, te) = pixels.split_at(counts[k]);
        train.extend_from_slice(tr);
        test.extend_from_slice(te);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SampleSplit {
        train_indices: train,
        test_indices: test,
        per_class_train_counts: counts,
    })
}

/// One-hot encodes class labels `1..=num_classes`.
pub fn one_hot(labels: &[u16], num_classes: usize) -> Result<TargetMatrix> {
    let mut y = DMatrix::zeros(labels.len(), num_classes);
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 || l as usize > num_classes {
            return Err(Error::InvalidLabel {
                label: l,
                num_classes,
            });
        }
        y[(i, l as usize - 1)] = 1.0;
    }
    Ok(y)
}

/// Stacks the spectra of the given pixels into an `n x bands` matrix.
pub fn extract_samples(cube: &NormalizedCube, indices: &[Pixel]) -> Result<DMatrix<f64>> {
    let c = cube.cube();
    let mut out = DMatrix::zeros(indices.len(), c.bands());
    for (i, &(row, col)) in indices.iter().enumerate() {
        if row >= c.height() || col >= c.width() {
            return Err(Error::IndexError {
                row,
                col,
                height: c.height(),
                width: c.width(),
            });
        }
        for (b, &v) in c.pixel(row, col).iter().enumerate() {
            out[(i, b)] = v;
        }
    }
    Ok(out)
}

/// Labels at the given pixels.
pub fn labels_at(labels: &LabelField, indices: &[Pixel]) -> Result<Vec<u16>> {
    indices
        .iter()
        .map(|&(r, c)| {
            labels.check_bounds(r, c)?;
            Ok(labels.get(r, c))
        })
        .collect()
}
