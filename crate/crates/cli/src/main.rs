//! Command-line driver wiring the pose-field library into reproducible
//! experiments: data generation, training, evaluation, projection, motion
//! denoising, partial fitting, interpolation, and sampling.
//!
//! Every subcommand prints a versioned JSON summary on stdout and exits
//! nonzero with a structured JSON error on stderr when something fails.
//! All randomized subcommands take an explicit `--seed`; nothing is seeded
//! from the clock.

use clap::{Args, Parser, Subcommand};
use posefield::dataset::{load_dataset, save_dataset, PoseDataset, Tier};
use posefield::error::Error;
use posefield::fk::{forward_kinematics, mean_joint_distance, JointPositions};
use posefield::manifold::{build_negatives, sample_manifold, spec_hash, SyntheticManifoldSpec};
use posefield::model::{load_model, save_model, FieldModel, ModelConfig};
use posefield::project::{project_batch, DifferentiableField, ProjectionConfig};
use posefield::so3::{Pose, SkeletonTopology};
use posefield::tasks::{
    apd, denoise, fit_partial, fit_partial_init, interpolate, sample_poses, smoothness,
    DenoiseConfig, InterpolateConfig, MotionSequence, OcclusionMask,
};
use posefield::train::{train, validate, TrainingConfig};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::time::Instant;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "posefield", version, about = "Pose distance field experiments")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    /// Results are identical for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled pose dataset from a synthetic manifold.
    GenData(GenDataArgs),
    /// Train a field model on a dataset.
    Train(TrainArgs),
    /// Evaluate a model on a labeled dataset.
    Eval(EvalArgs),
    /// Project poses onto the model's zero set.
    Project(ProjectArgs),
    /// Denoise a motion sequence against position observations.
    Denoise(DenoiseArgs),
    /// Fit occluded joints of a single frame to partial observations.
    FitPartial(FitPartialArgs),
    /// Interpolate between two poses along the manifold.
    Interp(InterpArgs),
    /// Sample diverse poses by random projection.
    Sample(SampleArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output dataset path (sidecar written at <out>.json).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Skeleton description JSON; defaults to a binary tree of --k joints.
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Manifold spec JSON; defaults to a random spec written to <out>.spec.json.
    #[arg(long)]
    manifold_spec: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    latent_dim: usize,
    #[arg(long, default_value_t = 20000)]
    manifold_count: usize,
    #[arg(long, default_value_t = 10000)]
    negatives_per_sigma: usize,
    /// Comma-separated perturbation scales for the negative tiers.
    #[arg(long, default_value = "0.8,0.4,0.15", value_delimiter = ',')]
    sigmas: Vec<f64>,
    /// Coarse-stage neighbor count of the two-stage labeling.
    #[arg(long, default_value_t = 500)]
    kprime: usize,
    /// Neighbors averaged for the final label.
    #[arg(long, default_value_t = 5)]
    knn: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out_model: PathBuf,
    /// Training config JSON; flags below override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda_eik: Option<f64>,
    #[arg(long)]
    flip_prob: Option<f64>,
    /// Comma-separated epochs per stage, overriding the config's stages.
    #[arg(long, value_delimiter = ',')]
    epochs: Option<Vec<usize>>,
    /// History CSV path (default: <out-model>.history.csv).
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    feature_dim: usize,
    #[arg(long, default_value_t = 32)]
    enc_hidden: usize,
    #[arg(long, default_value_t = 256)]
    head_width: usize,
    #[arg(long, default_value_t = 5)]
    head_layers: usize,
    /// Seed for parameter initialization (default: --seed).
    #[arg(long)]
    model_seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Args)]
struct ProjectionFlags {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 1)]
    renorm_period: usize,
}

impl ProjectionFlags {
    fn to_config(&self) -> ProjectionConfig {
        ProjectionConfig {
            alpha: self.alpha,
            max_iters: self.max_iters,
            tol: self.tol,
            renorm_period: self.renorm_period,
            record_trajectory: false,
        }
    }
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input poses (dataset binary format).
    #[arg(long)]
    poses: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    projection: ProjectionFlags,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long)]
    model: PathBuf,
    /// Noisy input sequence (dataset binary format, frames in order).
    #[arg(long)]
    seq: PathBuf,
    /// Observed joint positions: JSON `[[[x,y,z]; K]; frames]`.
    #[arg(long)]
    obs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda_v: f64,
    #[arg(long, default_value_t = 10.0)]
    w_prior: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda_t: f64,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 300)]
    steps: usize,
}

#[derive(Args)]
struct FitPartialArgs {
    #[arg(long)]
    model: PathBuf,
    /// Observed frame positions: JSON `[[x,y,z]; K]`.
    #[arg(long)]
    obs: PathBuf,
    /// Occlusion mask JSON `{"observed": [bool; K]}`.
    #[arg(long)]
    mask: PathBuf,
    /// Initial pose (dataset binary format, first record).
    #[arg(long)]
    init: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Perturbation of the near-identity initialization of occluded joints.
    #[arg(long, default_value_t = 0.05)]
    init_sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_v: f64,
    #[arg(long, default_value_t = 10.0)]
    w_prior: f64,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 300)]
    steps: usize,
}

#[derive(Args)]
struct InterpArgs {
    #[arg(long)]
    model: PathBuf,
    /// Start pose (dataset binary format, first record).
    #[arg(long)]
    start: PathBuf,
    /// End pose (dataset binary format, first record).
    #[arg(long)]
    end: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    #[arg(long, default_value_t = 1e-2)]
    stop_tol: f64,
    #[arg(long, default_value_t = 200)]
    max_frames: usize,
    #[command(flatten)]
    projection: ProjectionFlags,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(short, long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    projection: ProjectionFlags,
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Io(_) => 3,
        Error::Format(_) | Error::Json(_) => 4,
        Error::DimensionMismatch { .. } | Error::ShapeMismatch(_) => 5,
        Error::Numerical(_) | Error::DegenerateQuaternion { .. } => 6,
        Error::Sampling { .. } => 7,
        Error::InsufficientData { .. } => 8,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Format(_) => "format",
        Error::Json(_) => "json",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::ShapeMismatch(_) => "shape_mismatch",
        Error::Numerical(_) => "numerical",
        Error::DegenerateQuaternion { .. } => "degenerate_quaternion",
        Error::Sampling { .. } => "sampling",
        Error::InsufficientData { .. } => "insufficient_data",
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // thread count never changes results; reductions use fixed chunking
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("{}", json!({"schema_version": SCHEMA_VERSION, "error": {"kind": "config", "message": e.to_string()}}));
            std::process::exit(2);
        }
    }
    match run(cli.command) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
        }
        Err(err) => {
            let payload = json!({
                "schema_version": SCHEMA_VERSION,
                "error": {"kind": error_kind(&err), "message": err.to_string()},
            });
            eprintln!("{payload}");
            std::process::exit(exit_code_for(&err));
        }
    }
}

fn run(command: Command) -> Result<Value, Error> {
    match command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Project(args) => cmd_project(args),
        Command::Denoise(args) => cmd_denoise(args),
        Command::FitPartial(args) => cmd_fit_partial(args),
        Command::Interp(args) => cmd_interp(args),
        Command::Sample(args) => cmd_sample(args),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Loads a pose list stored in the dataset binary format.
fn load_poses(path: &Path) -> Result<(SkeletonTopology, Vec<Pose>), Error> {
    let ds = load_dataset(path)?;
    Ok((ds.skeleton.clone(), ds.poses()))
}

fn save_poses(
    skel: &SkeletonTopology,
    poses: Vec<Pose>,
    seed: u64,
    path: &Path,
) -> Result<(), Error> {
    let ds = PoseDataset::from_poses(skel.clone(), poses, seed)?;
    save_dataset(&ds, path)
}

fn label_stats(labels: &mut Vec<f64>) -> Value {
    if labels.is_empty() {
        return json!({"n": 0});
    }
    labels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = labels.len();
    let mean = labels.iter().sum::<f64>() / n as f64;
    let max = labels[n - 1];
    let buckets = 10usize;
    let width = if max > 0.0 { max / buckets as f64 } else { 1.0 };
    let mut hist = vec![0usize; buckets];
    for &l in labels.iter() {
        let b = ((l / width) as usize).min(buckets - 1);
        hist[b] += 1;
    }
    json!({
        "n": n,
        "min": labels[0],
        "median": labels[n / 2],
        "mean": mean,
        "max": max,
        "histogram": {"bucket_width": width, "counts": hist},
    })
}

fn cmd_gen_data(args: GenDataArgs) -> Result<Value, Error> {
    let t0 = Instant::now();
    let skel = match &args.skeleton {
        Some(path) => read_json::<SkeletonTopology>(path)?,
        None => SkeletonTopology::binary_tree(args.k)?,
    };
    let (spec, spec_path) = match &args.manifold_spec {
        Some(path) => (read_json::<SyntheticManifoldSpec>(path)?, path.clone()),
        None => {
            let spec = SyntheticManifoldSpec::random(skel.len(), args.latent_dim, args.seed)?;
            let mut p = args.out.as_os_str().to_owned();
            p.push(".spec.json");
            let p = PathBuf::from(p);
            std::fs::write(&p, serde_json::to_string_pretty(&spec)?)?;
            (spec, p)
        }
    };
    spec.validate()?;
    if spec.k() != skel.len() {
        return Err(Error::DimensionMismatch { expected: skel.len(), got: spec.k() });
    }
    let manifold = sample_manifold(&spec, args.manifold_count, args.seed)?;
    let negatives = build_negatives(
        &manifold,
        &args.sigmas,
        args.negatives_per_sigma,
        args.seed.wrapping_add(1),
    )?;
    let ds = PoseDataset::assemble(
        skel,
        manifold,
        negatives,
        args.kprime,
        args.knn,
        args.seed,
        spec_hash(&spec),
    )?;
    save_dataset(&ds, &args.out)?;

    let mut per_tier = serde_json::Map::new();
    for tier in Tier::ALL {
        let mut labels: Vec<f64> = ds
            .records
            .iter()
            .filter(|r| r.tier == tier)
            .map(|r| r.distance)
            .collect();
        per_tier.insert(tier.name().to_string(), label_stats(&mut labels));
    }
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "gen-data",
        "out": args.out,
        "manifold_spec": spec_path,
        "spec_hash": ds.meta.spec_hash,
        "records": ds.len(),
        "counts": ds.meta.counts,
        "labels_per_tier": Value::Object(per_tier),
        "elapsed_s": t0.elapsed().as_secs_f64(),
    }))
}

fn cmd_train(args: TrainArgs) -> Result<Value, Error> {
    let t0 = Instant::now();
    let ds = load_dataset(&args.dataset)?;
    let mut cfg = match &args.config {
        Some(path) => read_json::<TrainingConfig>(path)?,
        None => TrainingConfig::default(),
    };
    cfg.seed = args.seed;
    if let Some(lr) = args.lr {
        cfg.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        cfg.batch_size = b;
    }
    if let Some(l) = args.lambda_eik {
        cfg.lambda_eik = l;
    }
    if let Some(f) = args.flip_prob {
        cfg.flip_prob = f;
    }
    if let Some(epochs) = &args.epochs {
        if epochs.len() != cfg.stages.len() {
            return Err(Error::Config(format!(
                "--epochs has {} entries but the config has {} stages",
                epochs.len(),
                cfg.stages.len()
            )));
        }
        for (stage, e) in cfg.stages.iter_mut().zip(epochs) {
            stage.epochs = *e;
        }
    }
    let mcfg = ModelConfig {
        feature_dim: args.feature_dim,
        enc_hidden: args.enc_hidden,
        head_width: args.head_width,
        head_layers: args.head_layers,
        ..ModelConfig::default()
    };
    let mut model = FieldModel::init(&ds.skeleton, mcfg, args.model_seed.unwrap_or(args.seed))?;
    let history = match train(&mut model, &ds, &cfg) {
        Ok(h) => h,
        Err(e @ Error::Numerical(_)) => {
            // keep the rolled-back checkpoint on disk for inspection
            save_model(&model, &args.out_model)?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    save_model(&model, &args.out_model)?;
    let history_path = args.history.clone().unwrap_or_else(|| {
        let mut p = args.out_model.as_os_str().to_owned();
        p.push(".history.csv");
        PathBuf::from(p)
    });
    let mut csv = Vec::new();
    history.write_csv(&mut csv)?;
    std::fs::write(&history_path, csv)?;

    let last = history.records.last();
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "train",
        "out_model": args.out_model,
        "history": history_path,
        "epochs": history.records.len(),
        "params": model.params().len(),
        "final_l_udf": last.map(|r| r.l_udf),
        "final_l_eik": last.map(|r| r.l_eik),
        "final_validation": last.and_then(|r| r.validation),
        "elapsed_s": t0.elapsed().as_secs_f64(),
    }))
}

fn cmd_eval(args: EvalArgs) -> Result<Value, Error> {
    let model = load_model(&args.model)?;
    let ds = load_dataset(&args.dataset)?;
    let metrics = validate(&model, &ds)?;
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "eval",
        "records": ds.len(),
        "metrics": metrics,
    }))
}

fn cmd_project(args: ProjectArgs) -> Result<Value, Error> {
    let model = load_model(&args.model)?;
    let (skel, poses) = load_poses(&args.poses)?;
    if skel.len() != model.joint_count() {
        return Err(Error::ShapeMismatch(format!(
            "pose file skeleton has {} joints, model expects {}",
            skel.len(),
            model.joint_count()
        )));
    }
    let cfg = args.projection.to_config();
    let results = project_batch(&model, &poses, &cfg);
    let mut out_poses = Vec::with_capacity(poses.len());
    let mut failed = Vec::new();
    let mut values_before = Vec::new();
    let mut values_after = Vec::new();
    let mut converged = 0usize;
    let mut total_iters = 0usize;
    for (i, (input, result)) in poses.iter().zip(results).enumerate() {
        values_before.push(DifferentiableField::value(&model, input)?);
        match result {
            Ok(p) => {
                values_after.push(p.value);
                if p.value < cfg.tol {
                    converged += 1;
                }
                total_iters += p.iters;
                out_poses.push(p.pose);
            }
            Err(e) => {
                // keep 1:1 correspondence: failed entries pass through
                failed.push(json!({"index": i, "kind": error_kind(&e), "message": e.to_string()}));
                values_after.push(f64::NAN);
                out_poses.push(input.clone());
            }
        }
    }
    save_poses(&skel, out_poses, 0, &args.out)?;
    let median = |v: &mut Vec<f64>| -> Option<f64> {
        if v.is_empty() {
            return None;
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        Some(v[v.len() / 2])
    };
    let n = poses.len();
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "project",
        "out": args.out,
        "poses": n,
        "converged": converged,
        "mean_iters": if n == 0 { 0.0 } else { total_iters as f64 / n as f64 },
        "median_value_before": median(&mut values_before),
        "median_value_after": median(&mut values_after),
        "failed": failed,
    }))
}

fn cmd_denoise(args: DenoiseArgs) -> Result<Value, Error> {
    let t0 = Instant::now();
    let model = load_model(&args.model)?;
    let (skel, frames) = load_poses(&args.seq)?;
    let seq = MotionSequence::new(frames)?;
    let obs_raw: Vec<Vec<[f64; 3]>> = read_json(&args.obs)?;
    let observations: Vec<JointPositions> =
        obs_raw.into_iter().map(JointPositions::new).collect();
    let cfg = DenoiseConfig {
        lambda_v: args.lambda_v,
        w_prior: args.w_prior,
        lambda_t: args.lambda_t,
        lr: args.lr,
        steps: args.steps,
    };
    let out = denoise(&seq, &observations, &model, &skel, &cfg)?;
    let mut err_before = 0.0;
    let mut err_after = 0.0;
    for t in 0..seq.len() {
        err_before += mean_joint_distance(
            &forward_kinematics(seq.frame(t), &skel)?,
            &observations[t],
        )?;
        err_after += mean_joint_distance(
            &forward_kinematics(out.frame(t), &skel)?,
            &observations[t],
        )?;
    }
    let nf = seq.len() as f64;
    save_poses(&skel, out.into_frames(), 0, &args.out)?;
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "denoise",
        "out": args.out,
        "frames": seq.len(),
        "mean_obs_error_before": err_before / nf,
        "mean_obs_error_after": err_after / nf,
        "elapsed_s": t0.elapsed().as_secs_f64(),
    }))
}

fn cmd_fit_partial(args: FitPartialArgs) -> Result<Value, Error> {
    let model = load_model(&args.model)?;
    let (skel, poses) = load_poses(&args.init)?;
    let init = poses
        .first()
        .ok_or_else(|| Error::Config("init pose file is empty".into()))?
        .clone();
    let obs_raw: Vec<[f64; 3]> = read_json(&args.obs)?;
    let obs = JointPositions::new(obs_raw);
    let mask: OcclusionMask = read_json(&args.mask)?;
    let cfg = DenoiseConfig {
        lambda_v: args.lambda_v,
        w_prior: args.w_prior,
        lambda_t: 0.0,
        lr: args.lr,
        steps: args.steps,
    };
    let start = fit_partial_init(&init, &mask, args.init_sigma, args.seed)?;
    let fitted = fit_partial(&obs, &mask, &start, &model, &skel, &cfg)?;
    let value = DifferentiableField::value(&model, &fitted)?;
    let data_err = mean_joint_distance(&forward_kinematics(&fitted, &skel)?, &obs)?;
    save_poses(&skel, vec![fitted], args.seed, &args.out)?;
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "fit-partial",
        "out": args.out,
        "occluded_joints": mask.occluded_indices(),
        "field_value": value,
        "mean_obs_error": data_err,
    }))
}

fn cmd_interp(args: InterpArgs) -> Result<Value, Error> {
    let model = load_model(&args.model)?;
    let (skel, start_poses) = load_poses(&args.start)?;
    let (skel_end, end_poses) = load_poses(&args.end)?;
    if skel != skel_end {
        return Err(Error::ShapeMismatch("start and end pose files use different skeletons".into()));
    }
    let start = start_poses
        .first()
        .ok_or_else(|| Error::Config("start pose file is empty".into()))?;
    let end = end_poses
        .first()
        .ok_or_else(|| Error::Config("end pose file is empty".into()))?;
    let cfg = InterpolateConfig {
        tau: args.tau,
        stop_tol: args.stop_tol,
        max_frames: args.max_frames,
        projection: args.projection.to_config(),
    };
    let out = interpolate(start, end, &model, &skel, &cfg)?;
    let frames = out.sequence.len();
    let mut max_value: f64 = 0.0;
    for frame in out.sequence.frames() {
        max_value = max_value.max(DifferentiableField::value(&model, frame)?);
    }
    let smooth = if frames >= 2 { Some(smoothness(&out.sequence, &skel)?) } else { None };
    save_poses(&skel, out.sequence.into_frames(), 0, &args.out)?;
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "interp",
        "out": args.out,
        "frames": frames,
        "converged": out.converged,
        "max_field_value": max_value,
        "smoothness_mean": smooth.map(|s| s.0),
        "smoothness_stddev": smooth.map(|s| s.1),
    }))
}

fn cmd_sample(args: SampleArgs) -> Result<Value, Error> {
    let t0 = Instant::now();
    let model = load_model(&args.model)?;
    let cfg = args.projection.to_config();
    let samples = match sample_poses(&model, args.n, &cfg, args.seed) {
        Ok(s) => s,
        Err(Error::Sampling { accepted }) => {
            // write what was accepted before failing
            if !accepted.is_empty() {
                save_poses(model.skeleton(), accepted.clone(), args.seed, &args.out)?;
            }
            return Err(Error::Sampling { accepted });
        }
        Err(e) => return Err(e),
    };
    let mut max_value: f64 = 0.0;
    for p in &samples {
        max_value = max_value.max(DifferentiableField::value(&model, p)?);
    }
    let diversity = if samples.len() >= 2 { Some(apd(&samples, model.skeleton())?) } else { None };
    save_poses(model.skeleton(), samples.clone(), args.seed, &args.out)?;
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "sample",
        "out": args.out,
        "n": samples.len(),
        "max_field_value": max_value,
        "apd": diversity,
        "elapsed_s": t0.elapsed().as_secs_f64(),
    }))
}
