//! Confusion matrices, overall/average accuracy, Cohen's kappa, and Monte
//! Carlo aggregation of run reports.

use log::warn;

use crate::error::{Error, Result};
use crate::hsidata::{LabelField, Pixel};

/// Counts indexed `[true class - 1][predicted class - 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    /// Builds from row-major counts.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidShape("confusion matrix must be square".into()));
        }
        Ok(Self {
            num_classes: m,
            counts: rows.concat(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|k| self.get(k, k)).sum()
    }

    pub fn row_sum(&self, k: usize) -> u64 {
        (0..self.num_classes).map(|j| self.get(k, j)).sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        (0..self.num_classes).map(|i| self.get(i, k)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.num_classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.num_classes).all(|i| (0..self.num_classes).all(|j| i == j || self.get(i, j) == 0))
    }
}

/// Tallies truth against prediction over `eval`.
pub fn confusion(truth: &LabelField, pred: &LabelField, eval: &[Pixel]) -> Result<ConfusionMatrix> {
    if truth.shape() != pred.shape() {
        return Err(Error::InvalidShape(format!(
            "truth is {:?} but prediction is {:?}",
            truth.shape(),
            pred.shape()
        )));
    }
    let m = truth.num_classes();
    let mut cm = ConfusionMatrix::zeros(m);
    for &(r, c) in eval {
        truth.check_bounds(r, c)?;
        let t = truth.get(r, c);
        let p = pred.get(r, c);
        if t == 0 {
            return Err(Error::InvalidLabel { label: 0, num_classes: m });
        }
        if p == 0 {
            return Err(Error::UnlabeledPrediction { row: r, col: c });
        }
        if p as usize > m {
            return Err(Error::InvalidLabel { label: p, num_classes: m });
        }
        cm.counts[(t as usize - 1) * m + p as usize - 1] += 1;
    }
    Ok(cm)
}

fn nonempty(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::EmptyEvaluation),
        t => Ok(t as f64),
    }
}

/// `trace / total`.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    Ok(cm.trace() as f64 / nonempty(cm)?)
}

/// Recall of each class, `None` for classes with no evaluated pixels.
pub fn per_class_accuracy(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.num_classes())
        .map(|k| match cm.row_sum(k) {
            0 => None,
            n => Some(cm.get(k, k) as f64 / n as f64),
        })
        .collect()
}

/// Mean per-class recall over the classes that have evaluated pixels.
pub fn average_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    nonempty(cm)?;
    let recalls = per_class_accuracy(cm);
    let missing: Vec<usize> = recalls
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_none())
        .map(|(k, _)| k + 1)
        .collect();
    if !missing.is_empty() {
        warn!("average accuracy excludes classes with no evaluated pixels: {missing:?}");
    }
    let present: Vec<f64> = recalls.into_iter().flatten().collect();
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)`.
///
/// When chance agreement is total (`p_e = 1`, a single class on both sides)
/// the result is 1 for perfect agreement and 0 otherwise.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = nonempty(cm)?;
    let po = cm.trace() as f64 / total;
    let pe = (0..cm.num_classes())
        .map(|k| cm.row_sum(k) as f64 * cm.col_sum(k) as f64)
        .sum::<f64>()
        / (total * total);
    if pe >= 1.0 {
        warn!("kappa is degenerate: expected agreement is 1");
        return Ok(if po >= 1.0 { 1.0 } else { 0.0 });
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Metrics of one evaluation stage of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub run: usize,
    pub stage: String,
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    pub per_class: Vec<Option<f64>>,
    pub seconds: f64,
}

impl RunReport {
    pub fn from_confusion(run: usize, stage: &str, cm: &ConfusionMatrix, seconds: f64) -> Result<Self> {
        Ok(Self {
            run,
            stage: stage.to_string(),
            oa: overall_accuracy(cm)?,
            aa: average_accuracy(cm)?,
            kappa: kappa(cm)?,
            per_class: per_class_accuracy(cm),
            seconds,
        })
    }
}

/// Sample mean and standard deviation (`n - 1` denominator).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

/// Monte Carlo summary of a set of reports from the same stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub runs: usize,
    pub oa: MeanStd,
    pub aa: MeanStd,
    pub kappa: MeanStd,
    pub per_class: Vec<MeanStd>,
    pub seconds: MeanStd,
}

pub fn aggregate(reports: &[RunReport]) -> Result<Aggregate> {
    if reports.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let pick = |f: fn(&RunReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    let m = reports.iter().map(|r| r.per_class.len()).max().unwrap_or(0);
    let per_class = (0..m)
        .map(|k| {
            let vals: Vec<f64> = reports.iter().filter_map(|r| r.per_class.get(k).copied().flatten()).collect();
            MeanStd::of(&vals)
        })
        .collect();
    Ok(Aggregate {
        runs: reports.len(),
        oa: pick(|r| r.oa),
        aa: pick(|r| r.aa),
        kappa: pick(|r| r.kappa),
        per_class,
        seconds: pick(|r| r.seconds),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn confusion_counts() {
        let truth = LabelField::new(1, 6, 2, vec![1, 1, 1, 2, 2, 2]).unwrap();
        let pred = LabelField::new(1, 6, 2, vec![1, 1, 2, 2, 2, 2]).unwrap();
        let all: Vec<Pixel> = (0..6).map(|c| (0, c)).collect();
        assert_eq!(confusion(&truth, &pred, &all).unwrap().rows(), vec![vec![2, 1], vec![0, 3]]);
        assert!(confusion(&truth, &truth, &all).unwrap().is_diagonal());

        let empty = confusion(&truth, &pred, &[]).unwrap();
        assert_eq!(empty.total(), 0);
        assert!(matches!(overall_accuracy(&empty), Err(Error::EmptyEvaluation)));

        let holes = LabelField::new(1, 6, 2, vec![1, 0, 2, 2, 2, 2]).unwrap();
        assert!(matches!(
            confusion(&truth, &holes, &all),
            Err(Error::UnlabeledPrediction { row: 0, col: 1 })
        ));
    }

    #[test]
    fn reference_matrix() {
        let m = cm(&[&[2, 1], &[0, 3]]);
        assert_relative_eq!(overall_accuracy(&m).unwrap(), 5.0 / 6.0, epsilon = 1e-12);
        assert_relative_eq!(average_accuracy(&m).unwrap(), 5.0 / 6.0, epsilon = 1e-12);
        assert_relative_eq!(kappa(&m).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn perfect_and_worst() {
        let d = cm(&[&[4, 0, 0], &[0, 2, 0], &[0, 0, 7]]);
        assert_eq!(overall_accuracy(&d).unwrap(), 1.0);
        assert_eq!(average_accuracy(&d).unwrap(), 1.0);
        assert_eq!(kappa(&d).unwrap(), 1.0);

        let off = cm(&[&[0, 3], &[5, 0]]);
        assert_eq!(overall_accuracy(&off).unwrap(), 0.0);
    }

    #[test]
    fn kappa_chance_and_degenerate() {
        assert_relative_eq!(kappa(&cm(&[&[1, 1], &[1, 1]])).unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(kappa(&cm(&[&[5, 0], &[0, 0]])).unwrap(), 1.0);
    }

    #[test]
    fn aa_skips_absent_class() {
        let m = cm(&[&[3, 1, 0], &[0, 0, 0], &[0, 0, 2]]);
        assert_relative_eq!(average_accuracy(&m).unwrap(), (0.75 + 1.0) / 2.0, epsilon = 1e-15);
        assert_eq!(per_class_accuracy(&m)[1], None);
    }

    fn report(oa: f64) -> RunReport {
        RunReport {
            run: 0,
            stage: "pixel".into(),
            oa,
            aa: oa,
            kappa: oa,
            per_class: vec![Some(oa)],
            seconds: 0.0,
        }
    }

    #[test]
    fn aggregate_mean_std() {
        let agg = aggregate(&[report(0.8), report(1.0)]).unwrap();
        assert_relative_eq!(agg.oa.mean, 0.9, epsilon = 1e-15);
        assert_relative_eq!(agg.oa.std, 0.02f64.sqrt(), epsilon = 1e-15);

        let one = aggregate(&[report(0.7)]).unwrap();
        assert_eq!((one.oa.mean, one.oa.std), (0.7, 0.0));

        let same = aggregate(&[report(0.6), report(0.6), report(0.6)]).unwrap();
        assert_eq!(same.kappa.std, 0.0);
        assert!(aggregate(&[]).is_err());
    }
}
