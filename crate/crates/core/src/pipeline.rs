//! End-to-end spectral-spatial classification: normalize, split, train an
//! ELM or kernel ELM, turn its scores into probabilities, refine them with
//! masked loopy BP, and score both the pixel-only and the spatial labels.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::{ClassifierKind, PipelineConfig};
use crate::elm::{init_hidden, scores_to_probs, ElmModel, ProbabilityField};
use crate::error::{Error, Result, StageExt};
use crate::formats::{write_report_csv, write_summary_csv};
use crate::hsidata::{extract_samples, labels_at, normalize, one_hot, stratified_split, HsiCube, LabelField, NormalizedCube, SampleSplit};
use crate::kelm::train_kelm;
use crate::metrics::{aggregate, confusion, Aggregate, RunReport};
use crate::mrf::{assemble_unaries, build_graph, lbp_run, make_pairwise, mam_decide, GridGraph};
use crate::render::{default_palette, render_map};
use crate::seed::{run_seed, stream_seed};

pub const PIXEL_STAGE: &str = "pixel";
pub const SPATIAL_STAGE: &str = "spatial";

const SPLIT_STREAM: u64 = 0;
const HIDDEN_STREAM: u64 = 1;

/// Classifier output of one Monte Carlo run, reusable across `mu` values.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub run: usize,
    pub seed: u64,
    pub split: SampleSplit,
    pub graph: GridGraph,
    /// One row per graph node.
    pub probs: ProbabilityField,
    pub pixel_prediction: LabelField,
    pub pixel_report: RunReport,
}

/// Spatial refinement of a prepared run.
#[derive(Debug, Clone)]
pub struct SpatialOutcome {
    pub prediction: LabelField,
    pub report: RunReport,
    pub lbp_iterations: usize,
    pub lbp_converged: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub prepared: PreparedRun,
    pub spatial: SpatialOutcome,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub runs: Vec<RunOutcome>,
    pub pixel: Aggregate,
    pub spatial: Aggregate,
}

impl PipelineResult {
    /// Reports of every run, pixel-only row before spatial row.
    pub fn reports(&self) -> Vec<RunReport> {
        self.runs
            .iter()
            .flat_map(|r| [r.prepared.pixel_report.clone(), r.spatial.report.clone()])
            .collect()
    }
}

fn check_inputs(cube: &HsiCube, truth: &LabelField) -> Result<()> {
    if (cube.height(), cube.width()) != truth.shape() {
        return Err(Error::InvalidShape(format!(
            "cube is {}x{} but labels are {}x{}",
            cube.height(),
            cube.width(),
            truth.height(),
            truth.width()
        )));
    }
    if truth.num_classes() < 2 {
        return Err(Error::InvalidParameter("need at least 2 classes".into()));
    }
    Ok(())
}

fn classify_nodes(config: &PipelineConfig, cube: &NormalizedCube, train_x: &DMatrix<f64>, targets: &DMatrix<f64>, nodes_x: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    match config.classifier {
        ClassifierKind::Linear => {
            let hidden = init_hidden(config.hidden_nodes, cube.cube().bands(), config.activation, seed)?;
            let model = ElmModel::fit(hidden, train_x, targets, config.ridge)?;
            model.predict(nodes_x)
        }
        ClassifierKind::Kernel => {
            let model = train_kelm(train_x, targets, config.kernel(), config.kernel_c)?;
            model.predict(nodes_x)
        }
    }
}

/// Runs everything up to and including the pixel-only evaluation.
pub fn prepare_run(config: &PipelineConfig, cube: &NormalizedCube, truth: &LabelField, run: usize) -> Result<PreparedRun> {
    let start = Instant::now();
    let seed = run_seed(config.seed, run);
    let split = stratified_split(truth, &config.train, stream_seed(seed, SPLIT_STREAM)).stage("split")?;
    let graph = build_graph(truth, config.connectivity).stage("graph")?;

    let train_x = extract_samples(cube, &split.train_indices).stage("samples")?;
    let train_labels = labels_at(truth, &split.train_indices).stage("samples")?;
    let targets = one_hot(&train_labels, truth.num_classes()).stage("targets")?;
    let nodes_x = extract_samples(cube, graph.node_coords()).stage("samples")?;

    let scores = classify_nodes(config, cube, &train_x, &targets, &nodes_x, stream_seed(seed, HIDDEN_STREAM)).stage("classifier")?;
    let probs = scores_to_probs(&scores, config.temperature).stage("probabilities")?;

    let (h, w) = truth.shape();
    let mut pixel_prediction = LabelField::background(h, w, truth.num_classes())?;
    for (i, &(r, c)) in graph.node_coords().iter().enumerate() {
        pixel_prediction.set(r, c, probs.argmax(i) as u16 + 1)?;
    }
    let seconds = start.elapsed().as_secs_f64();
    let cm = confusion(truth, &pixel_prediction, &split.test_indices).stage("metrics")?;
    let pixel_report = RunReport::from_confusion(run, PIXEL_STAGE, &cm, seconds).stage("metrics")?;
    debug!("run {run}: pixel-only OA {:.4} ({seconds:.3}s)", pixel_report.oa);
    Ok(PreparedRun {
        run,
        seed,
        split,
        graph,
        probs,
        pixel_prediction,
        pixel_report,
    })
}

/// Masked LBP refinement of a prepared run at smoothness `mu`.
pub fn spatial_stage(config: &PipelineConfig, prepared: &PreparedRun, truth: &LabelField, mu: f64) -> Result<SpatialOutcome> {
    let start = Instant::now();
    let unary = assemble_unaries(&prepared.probs, &prepared.graph, &prepared.split, truth, config.clamp_eps).stage("unaries")?;
    let pairwise = make_pairwise(mu, truth.num_classes()).stage("pairwise")?;
    let beliefs = lbp_run(&prepared.graph, &unary, &pairwise, &config.lbp_params()).stage("lbp")?;
    let prediction = mam_decide(&beliefs, &prepared.graph).stage("decision")?;
    let seconds = start.elapsed().as_secs_f64();
    let cm = confusion(truth, &prediction, &prepared.split.test_indices).stage("metrics")?;
    let report = RunReport::from_confusion(prepared.run, SPATIAL_STAGE, &cm, seconds).stage("metrics")?;
    debug!(
        "run {}: spatial OA {:.4} after {} LBP sweeps (converged: {})",
        prepared.run, report.oa, beliefs.iterations, beliefs.converged
    );
    Ok(SpatialOutcome {
        prediction,
        report,
        lbp_iterations: beliefs.iterations,
        lbp_converged: beliefs.converged,
    })
}

fn prepare_all(config: &PipelineConfig, cube: &HsiCube, truth: &LabelField) -> Result<(NormalizedCube, Vec<PreparedRun>)> {
    config.validate()?;
    check_inputs(cube, truth)?;
    let normalized = normalize(cube).stage("normalize")?;
    let prepared = (0..config.runs)
        .into_par_iter()
        .map(|run| prepare_run(config, &normalized, truth, run))
        .collect::<Result<Vec<_>>>()?;
    Ok((normalized, prepared))
}

fn summarize(runs: Vec<RunOutcome>) -> Result<PipelineResult> {
    let pixel: Vec<RunReport> = runs.iter().map(|r| r.prepared.pixel_report.clone()).collect();
    let spatial: Vec<RunReport> = runs.iter().map(|r| r.spatial.report.clone()).collect();
    Ok(PipelineResult {
        pixel: aggregate(&pixel)?,
        spatial: aggregate(&spatial)?,
        runs,
    })
}

/// Every Monte Carlo run of the configured pipeline plus the aggregates.
pub fn run_pipeline(config: &PipelineConfig, cube: &HsiCube, truth: &LabelField) -> Result<PipelineResult> {
    let (_, prepared) = prepare_all(config, cube, truth)?;
    let runs = prepared
        .into_par_iter()
        .map(|p| {
            let spatial = spatial_stage(config, &p, truth, config.mu)?;
            Ok(RunOutcome { prepared: p, spatial })
        })
        .collect::<Result<Vec<_>>>()?;
    let result = summarize(runs)?;
    info!(
        "{} runs: pixel-only OA {:.4} +/- {:.4}, spatial OA {:.4} +/- {:.4}",
        config.runs, result.pixel.oa.mean, result.pixel.oa.std, result.spatial.oa.mean, result.spatial.oa.std
    );
    Ok(result)
}

/// One row of a parameter sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub pixel: Aggregate,
    pub spatial: Aggregate,
}

/// Repeats the pipeline for each hidden-layer size with the same seeds.
pub fn sweep_hidden_nodes(config: &PipelineConfig, cube: &HsiCube, truth: &LabelField, sizes: &[usize]) -> Result<Vec<SweepRow>> {
    if sizes.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one hidden-node count".into()));
    }
    sizes
        .iter()
        .map(|&l| {
            let cfg = PipelineConfig {
                hidden_nodes: l,
                ..config.clone()
            };
            let r = run_pipeline(&cfg, cube, truth)?;
            Ok(SweepRow {
                value: l as f64,
                pixel: r.pixel,
                spatial: r.spatial,
            })
        })
        .collect()
}

/// Repeats only the spatial stage for each `mu`; classifier outputs are
/// computed once per run and shared.
pub fn sweep_mu(config: &PipelineConfig, cube: &HsiCube, truth: &LabelField, mus: &[f64]) -> Result<Vec<SweepRow>> {
    if mus.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one mu value".into()));
    }
    let (_, prepared) = prepare_all(config, cube, truth)?;
    let pixel = aggregate(&prepared.iter().map(|p| p.pixel_report.clone()).collect::<Vec<_>>())?;
    mus.iter()
        .map(|&mu| {
            let reports = prepared
                .par_iter()
                .map(|p| spatial_stage(config, p, truth, mu).map(|s| s.report))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                value: mu,
                pixel: pixel.clone(),
                spatial: aggregate(&reports)?,
            })
        })
        .collect()
}

pub fn write_sweep_csv(key: &str, rows: &[SweepRow], path: &Path) -> Result<()> {
    let table: Vec<(String, String, Aggregate)> = rows
        .iter()
        .flat_map(|r| {
            [
                (r.value.to_string(), PIXEL_STAGE.to_string(), r.pixel.clone()),
                (r.value.to_string(), SPATIAL_STAGE.to_string(), r.spatial.clone()),
            ]
        })
        .collect();
    let mut w = BufWriter::new(File::create(path)?);
    write_summary_csv(key, &table, &mut w)?;
    w.flush()?;
    Ok(())
}

fn write_probs(run: &PreparedRun, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let m = run.probs.num_classes();
    let header: Vec<String> = ["row".to_string(), "col".to_string()]
        .into_iter()
        .chain((1..=m).map(|k| format!("p_{k}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, &(r, c)) in run.graph.node_coords().iter().enumerate() {
        let vals: Vec<String> = run.probs.row(i).iter().map(|p| format!("{p:e}")).collect();
        writeln!(w, "{r},{c},{}", vals.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.csv`, `summary.csv`, and per-run pixel/spatial maps to
/// `dir` (and probability dumps when configured).
pub fn write_outputs(config: &PipelineConfig, result: &PipelineResult, num_classes: usize, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("report.csv"))?);
    write_report_csv(&result.reports(), num_classes, config.timings, &mut w)?;
    w.flush()?;

    let rows = vec![
        ("all".to_string(), PIXEL_STAGE.to_string(), result.pixel.clone()),
        ("all".to_string(), SPATIAL_STAGE.to_string(), result.spatial.clone()),
    ];
    let mut w = BufWriter::new(File::create(dir.join("summary.csv"))?);
    write_summary_csv("runs", &rows, &mut w)?;
    w.flush()?;

    let palette = default_palette(num_classes);
    for run in &result.runs {
        let r = run.prepared.run;
        render_map(&run.prepared.pixel_prediction, &palette, &dir.join(format!("run{r}_pixel.ppm")))?;
        render_map(&run.spatial.prediction, &palette, &dir.join(format!("run{r}_spatial.ppm")))?;
        if config.dump_probs {
            write_probs(&run.prepared, &dir.join(format!("run{r}_probs.csv")))?;
        }
    }
    Ok(())
}
