//! The `train`, `compare`, `gradcheck` and `verify` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use dagnet::convergence::{trajectory_from_csv, trajectory_to_csv, verify_theorem1, ConvergenceVerdict, VerifyOptions};
use dagnet::data::{load_pgm_directory, synthetic_faces, teacher_regression, Dataset};
use dagnet::gradients::{evaluate_batch, finite_difference_gradients, relative_error, RELATIVE_ERROR_FLOOR};
use dagnet::metrics::{nrmse, psnr, ssim, ImagePair};
use dagnet::network::forward;
use dagnet::training::{train, EarlyStop, TrainOptions, TrainOutcome};
use dagnet::{Activation, DagTopology, Error, WeightSet};
use serde::Serialize;

use crate::config::{DatasetKind, RunConfig};

/// Largest network `gradcheck` will difference entry by entry.
pub const GRADCHECK_WEIGHT_LIMIT: usize = 10_000;
/// Both gradients below this magnitude switch gradcheck to absolute comparison.
pub const NEAR_ZERO_GRADIENT: f64 = 1e-8;
/// Pass threshold for the gradient check.
pub const GRADCHECK_TOLERANCE: f64 = 1e-6;

/// Training inputs and targets, plus held-out images when the data are images.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub test: Option<Dataset>,
    pub image_shape: Option<(usize, usize)>,
}

fn images(config: &RunConfig, all: Dataset, topology: &DagTopology) -> Result<PreparedData> {
    let dim = all.dim().unwrap_or(0);
    ensure!(
        topology.input_width() == dim && topology.output_width() == dim,
        "images have {dim} pixels but the network maps {} -> {}",
        topology.input_width(),
        topology.output_width()
    );
    let image_shape = all.image_shape();
    let (train_set, test) = match config.train_count {
        Some(n) => {
            let (a, b) = all.split_train_test(n, config.data_seed)?;
            (a, Some(b))
        }
        None => (all, None),
    };
    ensure!(!train_set.is_empty(), "the training set is empty");
    Ok(PreparedData {
        inputs: train_set.samples().to_vec(),
        targets: train_set.samples().to_vec(),
        test,
        image_shape,
    })
}

pub fn prepare_data(config: &RunConfig, topology: &DagTopology, activation: Activation) -> Result<PreparedData> {
    match config.dataset {
        DatasetKind::Teacher => {
            let r = teacher_regression(topology, activation, config.samples, config.teacher_scale, config.data_seed)?;
            ensure!(!r.inputs.is_empty(), "samples must be at least 1");
            Ok(PreparedData {
                inputs: r.inputs,
                targets: r.targets,
                test: None,
                image_shape: None,
            })
        }
        DatasetKind::SyntheticFaces => {
            let all = synthetic_faces(config.samples, config.image_rows, config.image_cols, config.data_seed)?;
            images(config, all, topology)
        }
        DatasetKind::Pgm => {
            let Some(dir) = &config.data_path else {
                bail!("dataset = \"pgm\" needs data_path");
            };
            let all = load_pgm_directory(dir).with_context(|| format!("loading images from {}", dir.display()))?;
            images(config, all, topology)
        }
    }
}

/// Mean PSNR, SSIM and NRMSE over a test set. Reconstructions are clamped
/// to the pixel range `[0, 1]` first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanQuality {
    pub psnr: f64,
    pub ssim: f64,
    pub nrmse: f64,
}

pub fn evaluate_images(
    topology: &DagTopology,
    weights: &WeightSet,
    activation: Activation,
    test: &Dataset,
) -> Result<MeanQuality> {
    let (rows, cols) = test.image_shape().context("test set has no image shape")?;
    ensure!(!test.is_empty(), "the test set is empty");
    let (mut p, mut s, mut n) = (0.0, 0.0, 0.0);
    for x in test.samples() {
        let y: Vec<f64> = forward(topology, weights, activation, x)?
            .output()
            .iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        let pair = ImagePair::from_slices(rows, cols, x, &y)?;
        p += psnr(&pair);
        s += ssim(&pair)?;
        n += nrmse(&pair)?;
    }
    let count = test.len() as f64;
    Ok(MeanQuality {
        psnr: p / count,
        ssim: s / count,
        nrmse: n / count,
    })
}

fn train_options(config: &RunConfig) -> TrainOptions {
    TrainOptions {
        eta: config.eta,
        s: config.s,
        rule: config.update_rule(),
        iterations: config.iterations,
        early_stop: config.early_stop.then_some(EarlyStop {
            threshold: config.tail_threshold,
            window: config.tail_window,
        }),
    }
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub topology: DagTopology,
    pub outcome: TrainOutcome,
    pub verdict: ConvergenceVerdict,
    pub quality: Option<MeanQuality>,
    pub trajectory_csv: String,
    pub config_hash: String,
}

/// Trains one model as configured, without touching the filesystem beyond
/// reading inputs.
pub fn run_training(config: &RunConfig) -> Result<TrainReport> {
    let topology = config.build_topology()?;
    let activation = config.activation()?;
    let data = prepare_data(config, &topology, activation)?;
    let weights = WeightSet::seeded(&topology, config.init_scale, config.seed);
    let outcome = train(&topology, weights, activation, &data.inputs, &data.targets, &train_options(config))?;
    let mut verdict = verify_theorem1(
        Some(&topology),
        &outcome.trajectory,
        config.eta,
        config.s,
        config.c,
        &config.verify_options(),
    )?;
    if config.update_rule() != dagnet::optimizer::UpdateRule::Adaptive {
        verdict
            .notes
            .push("fixed-momentum baseline: the convergence theorem does not cover this rule".into());
    }
    let quality = match &data.test {
        Some(test) if data.image_shape.is_some() => Some(evaluate_images(&topology, &outcome.weights, activation, test)?),
        _ => None,
    };
    let config_hash = config.hash();
    let meta = [
        ("config_hash", config_hash.clone()),
        ("topology_hash", topology.hash()),
        ("activation", activation.name().to_string()),
        ("eta", format!("{:e}", config.eta)),
        ("s", format!("{:e}", config.s)),
        ("optimizer", format!("{:?}", config.update_rule())),
        ("seed", config.seed.to_string()),
        ("iterations", config.iterations.to_string()),
    ];
    let trajectory_csv = trajectory_to_csv(&outcome.trajectory, &meta, Some(topology.edges()));
    Ok(TrainReport {
        topology,
        outcome,
        verdict,
        quality,
        trajectory_csv,
        config_hash,
    })
}

/// Paths written by [`write_training_artifacts`].
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub config: PathBuf,
    pub topology: PathBuf,
    pub weights: PathBuf,
    pub trajectory: PathBuf,
    pub verdict: PathBuf,
}

#[derive(Serialize)]
struct VerdictFile<'a> {
    config_hash: &'a str,
    converged: bool,
    final_error: f64,
    stopped_early: bool,
    verdict: &'a ConvergenceVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_quality: Option<MeanQuality>,
}

pub fn write_training_artifacts(config: &RunConfig, report: &TrainReport, dir: &Path) -> Result<Artifacts> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let paths = Artifacts {
        config: dir.join("config.toml"),
        topology: dir.join("topology.toml"),
        weights: dir.join("weights.txt"),
        trajectory: dir.join("trajectory.csv"),
        verdict: dir.join("verdict.json"),
    };
    fs::write(&paths.config, format!("# config_hash={}\n{}", report.config_hash, config.to_toml()))?;
    report.topology.save(&paths.topology)?;
    report.outcome.weights.save(
        &paths.weights,
        "weights",
        &report.topology,
        &[("config_hash", report.config_hash.as_str())],
    )?;
    fs::write(&paths.trajectory, &report.trajectory_csv)?;
    let verdict = VerdictFile {
        config_hash: &report.config_hash,
        converged: report.verdict.converged(),
        final_error: report.outcome.final_error,
        stopped_early: report.outcome.stopped_early,
        verdict: &report.verdict,
        test_quality: report.quality,
    };
    fs::write(&paths.verdict, serde_json::to_string_pretty(&verdict)? + "\n")?;
    Ok(paths)
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub code: usize,
    pub seed: u64,
    pub model: String,
    pub quality: MeanQuality,
    pub final_error: f64,
    /// Steps whose first-order change broke the descent inequality.
    pub descent_inequality_violations: usize,
    /// Per-edge increment bound failures over the run.
    pub increment_bound_violations: usize,
}

fn fmt_metric(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

pub fn compare_csv(rows: &[CompareRow], config_hash: &str) -> String {
    let mut out = format!("# config_hash={config_hash}\ncode,seed,model,psnr,ssim,nrmse,final_error\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:e}",
            r.code,
            r.seed,
            r.model,
            fmt_metric(r.quality.psnr),
            fmt_metric(r.quality.ssim),
            fmt_metric(r.quality.nrmse),
            r.final_error
        );
    }
    out
}

fn with_code(config: &RunConfig, topology: &DagTopology, code: Option<usize>) -> Result<DagTopology> {
    match code {
        None => Ok(topology.clone()),
        Some(width) => {
            let layer = topology
                .code_layer()
                .with_context(|| format!("{} has no code layer to resize", config.model_label(topology)))?;
            Ok(topology.with_width(layer, width)?)
        }
    }
}

/// Trains the primary model and a baseline on the same data, seed and budget
/// for every code width and seed, and scores both on the test images.
///
/// Without an explicit baseline the primary topology's sequential
/// counterpart is used.
pub fn run_compare(primary: &RunConfig, baseline: Option<&RunConfig>) -> Result<Vec<CompareRow>> {
    if let Some(b) = baseline {
        ensure!(
            b.dataset == primary.dataset
                && b.data_path == primary.data_path
                && b.samples == primary.samples
                && b.train_count == primary.train_count
                && b.data_seed == primary.data_seed
                && b.image_rows == primary.image_rows
                && b.image_cols == primary.image_cols,
            "both configurations must use the same dataset"
        );
        ensure!(b.iterations == primary.iterations, "both configurations must use the same budget");
        ensure!(b.seed == primary.seed && b.seeds == primary.seeds, "both configurations must use the same seeds");
    }
    ensure!(primary.train_count.is_some(), "compare needs train_count to hold out test images");
    ensure!(primary.dataset != DatasetKind::Teacher, "compare needs an image dataset");

    let primary_topology = primary.build_topology()?;
    let (baseline_config, baseline_topology) = match baseline {
        Some(b) => (b, b.build_topology()?),
        None => (primary, primary_topology.sequential_counterpart()),
    };
    let codes: Vec<Option<usize>> = if primary.codes.is_empty() {
        vec![None]
    } else {
        primary.codes.iter().copied().map(Some).collect()
    };
    let seeds = if primary.seeds.is_empty() {
        vec![primary.seed]
    } else {
        primary.seeds.clone()
    };

    let primary_activation = primary.activation()?;
    let data = prepare_data(primary, &primary_topology, primary_activation)?;
    let test = data.test.as_ref().context("no test images")?;

    let mut rows = Vec::new();
    for &code in &codes {
        for &seed in &seeds {
            let baseline_label = match baseline {
                Some(b) => b.model_label(&baseline_topology),
                None => "Autoencoder".to_string(),
            };
            for (config, base, label) in [
                (primary, &primary_topology, primary.model_label(&primary_topology)),
                (baseline_config, &baseline_topology, baseline_label),
            ] {
                let topology = with_code(config, base, code)?;
                let activation = config.activation()?;
                let weights = WeightSet::seeded(&topology, config.init_scale, seed);
                let outcome = train(&topology, weights, activation, &data.inputs, &data.targets, &train_options(config))?;
                let quality = evaluate_images(&topology, &outcome.weights, activation, test)?;
                let verdict = verify_theorem1(
                    Some(&topology),
                    &outcome.trajectory,
                    config.eta,
                    config.s,
                    config.c,
                    &config.verify_options(),
                )?;
                rows.push(CompareRow {
                    code: topology.code_layer().map_or(0, |c| topology.width(c)),
                    seed,
                    model: label,
                    quality,
                    final_error: outcome.final_error,
                    descent_inequality_violations: verdict.descent_inequality_violations,
                    increment_bound_violations: verdict.increment_bound_violations,
                });
            }
        }
    }
    Ok(rows)
}

/// Adjoint gradients against central differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub weights: usize,
    pub samples: usize,
    pub step: f64,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub max_gradient: f64,
    /// Both gradients vanish; the verdict uses absolute error instead.
    pub near_zero: bool,
    pub passed: bool,
}

pub fn run_gradcheck(config: &RunConfig) -> Result<GradcheckReport> {
    let topology = config.build_topology()?;
    let weights_count = topology.num_weights();
    if weights_count > GRADCHECK_WEIGHT_LIMIT {
        return Err(Error::TooLargeForFiniteDifference {
            weights: weights_count,
            limit: GRADCHECK_WEIGHT_LIMIT,
        }
        .into());
    }
    let activation = config.activation()?;
    let data = prepare_data(config, &topology, activation)?;
    let weights = WeightSet::seeded(&topology, config.init_scale, config.seed);
    let adjoint = evaluate_batch(&topology, &weights, activation, &data.inputs, &data.targets)?.gradients;
    let fd = finite_difference_gradients(&topology, &weights, activation, &data.inputs, &data.targets, config.fd_step)?;

    let (mut max_rel, mut max_abs, mut max_grad) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in adjoint.per_edge.matrices().iter().zip(fd.per_edge.matrices()) {
        for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
            max_rel = max_rel.max(relative_error(x, y, RELATIVE_ERROR_FLOOR));
            max_abs = max_abs.max((x - y).abs());
            max_grad = max_grad.max(x.abs()).max(y.abs());
        }
    }
    let near_zero = max_grad < NEAR_ZERO_GRADIENT;
    let passed = if near_zero {
        max_abs < RELATIVE_ERROR_FLOOR
    } else {
        max_rel < GRADCHECK_TOLERANCE
    };
    Ok(GradcheckReport {
        weights: weights_count,
        samples: data.inputs.len(),
        step: config.fd_step,
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
        max_gradient: max_grad,
        near_zero,
        passed,
    })
}

/// Settings for re-checking a saved trajectory.
#[derive(Debug, Clone, Default)]
pub struct VerifyRequest {
    pub trajectory: PathBuf,
    /// Defaults to `topology.toml` next to the trajectory, if present.
    pub topology: Option<PathBuf>,
    pub eta: Option<f64>,
    pub s: Option<f64>,
    pub c: Option<f64>,
    pub options: Option<VerifyOptions>,
}

pub fn run_verify(request: &VerifyRequest) -> Result<ConvergenceVerdict> {
    let text = fs::read_to_string(&request.trajectory)
        .with_context(|| format!("reading {}", request.trajectory.display()))?;
    let (meta, records) = trajectory_from_csv(&text)?;
    let lookup = |key: &str| -> Result<Option<f64>> {
        meta.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.parse::<f64>().with_context(|| format!("metadata {key}={v}")))
            .transpose()
    };
    let eta = match request.eta {
        Some(v) => v,
        None => lookup("eta")?.context("eta is neither in the trajectory metadata nor given")?,
    };
    let s = match request.s {
        Some(v) => v,
        None => lookup("s")?.context("s is neither in the trajectory metadata nor given")?,
    };
    let topology_path = request.topology.clone().or_else(|| {
        let sibling = request.trajectory.with_file_name("topology.toml");
        sibling.exists().then_some(sibling)
    });
    let topology = topology_path.map(DagTopology::load).transpose()?;
    if let Some(t) = &topology {
        if let Some((_, h)) = meta.iter().find(|(k, _)| k == "topology_hash") {
            ensure!(*h == t.hash(), "topology file does not match the trajectory's topology hash");
        }
    }
    Ok(verify_theorem1(
        topology.as_ref(),
        &records,
        eta,
        s,
        request.c,
        &request.options.unwrap_or_default(),
    )?)
}
