//! Pipeline configuration and its flat `key = value` file format.
//!
//! Lines are `key = value`; `#` starts a comment. Keys use snake_case and
//! mirror the CLI flags (`hidden_nodes` is `--hidden-nodes`).

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::elm::Activation;
use crate::error::{Error, Result};
use crate::hsidata::TrainSpec;
use crate::kelm::{KernelSpec, DEFAULT_COST, DEFAULT_SIGMA};
use crate::mrf::{Connectivity, LbpParams, DEFAULT_CLAMP_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassifierKind {
    #[default]
    Linear,
    Kernel,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Linear => "linear",
            ClassifierKind::Kernel => "kernel",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" | "lelm" | "elm" => Ok(ClassifierKind::Linear),
            "kernel" | "kelm" | "nlelm" => Ok(ClassifierKind::Kernel),
            other => Err(Error::Config(format!("unknown classifier '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub classifier: ClassifierKind,
    pub hidden_nodes: usize,
    pub activation: Activation,
    pub ridge: f64,
    pub kernel_c: f64,
    pub kernel_sigma: f64,
    pub temperature: f64,
    pub mu: f64,
    pub connectivity: Connectivity,
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
    pub clamp_eps: f64,
    pub train: TrainSpec,
    pub runs: usize,
    pub seed: u64,
    pub cube: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output: PathBuf,
    /// Write wall-clock seconds into the report; off keeps reports reproducible.
    pub timings: bool,
    pub dump_probs: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            classifier: ClassifierKind::Linear,
            hidden_nodes: 450,
            activation: Activation::Sigmoid,
            ridge: 0.0,
            kernel_c: DEFAULT_COST,
            kernel_sigma: DEFAULT_SIGMA,
            temperature: 1.0,
            mu: 20.0,
            connectivity: Connectivity::Four,
            max_iters: 50,
            tol: 1e-6,
            damping: 0.5,
            clamp_eps: DEFAULT_CLAMP_EPS,
            train: TrainSpec::Fraction(0.1),
            runs: 10,
            seed: 0,
            cube: None,
            labels: None,
            output: PathBuf::from("out"),
            timings: false,
            dump_probs: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{value}'"))),
    }
}

impl PipelineConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        match k {
            "classifier" => self.classifier = value.parse()?,
            "hidden_nodes" => self.hidden_nodes = parse(k, value)?,
            "activation" => self.activation = value.trim().parse()?,
            "ridge" => self.ridge = parse(k, value)?,
            "kernel_c" => self.kernel_c = parse(k, value)?,
            "kernel_sigma" => self.kernel_sigma = parse(k, value)?,
            "temperature" => self.temperature = parse(k, value)?,
            "mu" => self.mu = parse(k, value)?,
            "connectivity" => self.connectivity = value.parse()?,
            "max_iters" => self.max_iters = parse(k, value)?,
            "tol" => self.tol = parse(k, value)?,
            "damping" => self.damping = parse(k, value)?,
            "clamp_eps" => self.clamp_eps = parse(k, value)?,
            "train_fraction" => self.train = TrainSpec::Fraction(parse(k, value)?),
            "train_counts" => {
                let counts = value
                    .split(',')
                    .map(|c| parse(k, c))
                    .collect::<Result<Vec<usize>>>()?;
                self.train = TrainSpec::Counts(counts);
            }
            "runs" => self.runs = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "cube" => self.cube = Some(PathBuf::from(value.trim())),
            "labels" => self.labels = Some(PathBuf::from(value.trim())),
            "output" => self.output = PathBuf::from(value.trim()),
            "timings" => self.timings = parse_bool(k, value)?,
            "dump_probs" => self.dump_probs = parse_bool(k, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies every setting in a config file body on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::Gaussian {
            sigma: self.kernel_sigma,
        }
    }

    pub fn lbp_params(&self) -> LbpParams {
        LbpParams {
            max_iters: self.max_iters,
            tol: self.tol,
            damping: self.damping,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.hidden_nodes == 0 {
            return bad("hidden_nodes must be at least 1".into());
        }
        if !(self.ridge >= 0.0) {
            return bad(format!("ridge must be >= 0, got {}", self.ridge));
        }
        if !(self.kernel_c > 0.0) || !(self.kernel_sigma > 0.0) {
            return bad("kernel_c and kernel_sigma must be positive".into());
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive".into());
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be finite and >= 0, got {}", self.mu));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.damping) {
            return bad(format!("damping must lie in [0, 1), got {}", self.damping));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 1.0) {
            return bad(format!("clamp_eps must lie in (0, 1), got {}", self.clamp_eps));
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        Ok(())
    }

    /// Canonical `key = value` rendering, readable back by [`Self::from_text`].
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("classifier = {}", self.classifier),
            format!("hidden_nodes = {}", self.hidden_nodes),
            format!("activation = {}", self.activation),
            format!("ridge = {}", self.ridge),
            format!("kernel_c = {}", self.kernel_c),
            format!("kernel_sigma = {}", self.kernel_sigma),
            format!("temperature = {}", self.temperature),
            format!("mu = {}", self.mu),
            format!("connectivity = {}", self.connectivity),
            format!("max_iters = {}", self.max_iters),
            format!("tol = {}", self.tol),
            format!("damping = {}", self.damping),
            format!("clamp_eps = {}", self.clamp_eps),
        ];
        match &self.train {
            TrainSpec::Fraction(f) => lines.push(format!("train_fraction = {f}")),
            TrainSpec::Counts(c) => lines.push(format!(
                "train_counts = {}",
                c.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
            )),
        }
        lines.push(format!("runs = {}", self.runs));
        lines.push(format!("seed = {}", self.seed));
        if let Some(p) = &self.cube {
            lines.push(format!("cube = {}", p.display()));
        }
        if let Some(p) = &self.labels {
            lines.push(format!("labels = {}", p.display()));
        }
        lines.push(format!("output = {}", self.output.display()));
        lines.push(format!("timings = {}", self.timings));
        lines.push(format!("dump_probs = {}", self.dump_probs));
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_settings() {
        let c = PipelineConfig::default();
        assert_eq!((c.hidden_nodes, c.mu, c.runs), (450, 20.0, 10));
        assert_eq!((c.kernel_c, c.kernel_sigma), (512.0, 0.5));
        assert_eq!(c.connectivity, Connectivity::Four);
    }

    #[test]
    fn parses_file_body() {
        let text = "# sweep base\nclassifier = kernel\nhidden-nodes = 200 # inline\n\nmu=2\ntrain_counts = 3,4,5\nconnectivity = 8\ntimings = yes\n";
        let c = PipelineConfig::from_text(text).unwrap();
        assert_eq!(c.classifier, ClassifierKind::Kernel);
        assert_eq!(c.hidden_nodes, 200);
        assert_eq!(c.mu, 2.0);
        assert_eq!(c.train, TrainSpec::Counts(vec![3, 4, 5]));
        assert_eq!(c.connectivity, Connectivity::Eight);
        assert!(c.timings);
    }

    #[test]
    fn round_trips_text() {
        let c = PipelineConfig {
            mu: 0.25,
            cube: Some("a.hsc".into()),
            train: TrainSpec::Counts(vec![1, 2]),
            ..PipelineConfig::default()
        };
        assert_eq!(PipelineConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_garbage() {
        assert!(PipelineConfig::from_text("mu 3").is_err());
        assert!(PipelineConfig::from_text("nope = 3").is_err());
        assert!(PipelineConfig::from_text("runs = many").is_err());
        let c = PipelineConfig { damping: 1.0, ..PipelineConfig::default() };
        assert!(c.validate().is_err());
    }
}
