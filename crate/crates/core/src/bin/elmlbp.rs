use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use elmlbp::formats::{cube_from_csv, cube_to_csv, labels_from_csv, labels_to_csv, read_cube, read_labels, write_cube, write_labels};
use elmlbp::pipeline::{run_pipeline, sweep_hidden_nodes, sweep_mu, write_outputs, write_sweep_csv};
use elmlbp::render::{default_palette, render_map};
use elmlbp::synth::{gen_scene, SceneSpec};
use elmlbp::{Error, PipelineConfig, Result};

#[derive(Parser)]
#[command(name = "elmlbp", version, about = "Spectral-spatial HSI classification with ELM and loopy belief propagation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene (HSC1 cube + HSG1 labels)
    Synth(SynthArgs),
    /// Run the Monte Carlo classification pipeline
    Classify(PipelineArgs),
    /// Sweep the number of hidden nodes
    SweepL {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Comma-separated hidden-node counts
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
    /// Sweep the smoothness parameter mu
    SweepMu {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Comma-separated mu values
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Render an HSG1 label map as a PPM image
    Render {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Convert between CSV and the HSC1/HSG1 binary formats
    Convert(ConvertArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 20)]
    bands: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 5)]
    smoothing_passes: usize,
    #[arg(long, default_value_t = 0.35)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    background_fraction: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Config file of `key = value` lines; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cube: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, env = "ELMLBP_OUTPUT_DIR")]
    output: Option<PathBuf>,
    /// linear or kernel
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    hidden_nodes: Option<usize>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    kernel_c: Option<f64>,
    #[arg(long)]
    kernel_sigma: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    connectivity: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    clamp_eps: Option<f64>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Comma-separated per-class training counts
    #[arg(long)]
    train_counts: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record wall-clock seconds in report.csv
    #[arg(long)]
    timings: bool,
    /// Dump per-run probability fields as CSV
    #[arg(long)]
    dump_probs: bool,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_text(&fs::read_to_string(path)?)?;
        }
        let mut set = |key: &str, v: Option<String>| -> Result<()> {
            match v {
                Some(v) => cfg.set(key, &v),
                None => Ok(()),
            }
        };
        let s = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string());
        set("cube", s(&self.cube))?;
        set("labels", s(&self.labels))?;
        set("output", s(&self.output))?;
        set("classifier", self.classifier.clone())?;
        set("hidden_nodes", self.hidden_nodes.map(|v| v.to_string()))?;
        set("activation", self.activation.clone())?;
        set("ridge", self.ridge.map(|v| v.to_string()))?;
        set("kernel_c", self.kernel_c.map(|v| v.to_string()))?;
        set("kernel_sigma", self.kernel_sigma.map(|v| v.to_string()))?;
        set("mu", self.mu.map(|v| v.to_string()))?;
        set("connectivity", self.connectivity.clone())?;
        set("max_iters", self.max_iters.map(|v| v.to_string()))?;
        set("tol", self.tol.map(|v| v.to_string()))?;
        set("damping", self.damping.map(|v| v.to_string()))?;
        set("clamp_eps", self.clamp_eps.map(|v| v.to_string()))?;
        set("train_fraction", self.train_fraction.map(|v| v.to_string()))?;
        set("train_counts", self.train_counts.clone())?;
        set("runs", self.runs.map(|v| v.to_string()))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        if self.timings {
            cfg.timings = true;
        }
        if self.dump_probs {
            cfg.dump_probs = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_inputs(cfg: &PipelineConfig) -> Result<(elmlbp::HsiCube, elmlbp::LabelField)> {
    let cube_path = cfg.cube.as_ref().ok_or_else(|| Error::Config("no cube path given".into()))?;
    let labels_path = cfg.labels.as_ref().ok_or_else(|| Error::Config("no labels path given".into()))?;
    let cube = read_cube(cube_path).map_err(|e| e.at("read cube"))?;
    let labels = read_labels(labels_path).map_err(|e| e.at("read labels"))?;
    Ok((cube, labels))
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    kind: ConvertKind,
    /// Source file; `.csv` converts to binary, anything else converts to CSV
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Class count for CSV label import (defaults to the largest label)
    #[arg(long)]
    num_classes: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvertKind {
    Cube,
    Labels,
}

fn is_csv(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn convert(args: &ConvertArgs) -> Result<()> {
    let to_binary = is_csv(&args.input);
    match (args.kind, to_binary) {
        (ConvertKind::Cube, true) => write_cube(&cube_from_csv(BufReader::new(File::open(&args.input)?))?, &args.output),
        (ConvertKind::Cube, false) => cube_to_csv(&read_cube(&args.input)?, BufWriter::new(File::create(&args.output)?)),
        (ConvertKind::Labels, true) => write_labels(
            &labels_from_csv(BufReader::new(File::open(&args.input)?), args.num_classes)?,
            &args.output,
        ),
        (ConvertKind::Labels, false) => labels_to_csv(&read_labels(&args.input)?, BufWriter::new(File::create(&args.output)?)),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let spec = SceneSpec {
                height: a.height,
                width: a.width,
                bands: a.bands,
                classes: a.classes,
                smoothing_passes: a.smoothing_passes,
                noise_sigma: a.noise_sigma,
                background_fraction: a.background_fraction,
                seed: a.seed,
            };
            let (cube, labels) = gen_scene(&spec).map_err(|e| e.at("synth"))?;
            write_cube(&cube, &a.cube)?;
            write_labels(&labels, &a.labels)?;
            info!("wrote {} and {}", a.cube.display(), a.labels.display());
        }
        Command::Classify(p) => {
            let cfg = p.resolve()?;
            let (cube, labels) = load_inputs(&cfg)?;
            let result = run_pipeline(&cfg, &cube, &labels)?;
            write_outputs(&cfg, &result, labels.num_classes(), &cfg.output)?;
            fs::write(cfg.output.join("config.txt"), cfg.to_text())?;
            let mut out = std::io::stdout().lock();
            writeln!(
                out,
                "pixel   OA {:.4} +/- {:.4}  AA {:.4}  kappa {:.4}",
                result.pixel.oa.mean, result.pixel.oa.std, result.pixel.aa.mean, result.pixel.kappa.mean
            )?;
            writeln!(
                out,
                "spatial OA {:.4} +/- {:.4}  AA {:.4}  kappa {:.4}",
                result.spatial.oa.mean, result.spatial.oa.std, result.spatial.aa.mean, result.spatial.kappa.mean
            )?;
        }
        Command::SweepL { pipeline, values } => {
            let cfg = pipeline.resolve()?;
            let (cube, labels) = load_inputs(&cfg)?;
            let rows = sweep_hidden_nodes(&cfg, &cube, &labels, &values)?;
            fs::create_dir_all(&cfg.output)?;
            write_sweep_csv("hidden_nodes", &rows, &cfg.output.join("sweep_hidden_nodes.csv"))?;
        }
        Command::SweepMu { pipeline, values } => {
            let cfg = pipeline.resolve()?;
            let (cube, labels) = load_inputs(&cfg)?;
            let rows = sweep_mu(&cfg, &cube, &labels, &values)?;
            fs::create_dir_all(&cfg.output)?;
            write_sweep_csv("mu", &rows, &cfg.output.join("sweep_mu.csv"))?;
        }
        Command::Render { labels, output } => {
            let field = read_labels(&labels)?;
            render_map(&field, &default_palette(field.num_classes()), &output)?;
        }
        Command::Convert(a) => convert(&a)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
