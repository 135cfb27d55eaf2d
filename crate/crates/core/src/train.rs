//! Multi-stage curriculum training of the field model.
//!
//! Training walks a list of stages; each stage fixes the tier composition
//! of every batch, starting with manifold poses plus far-off negatives and
//! introducing progressively nearer negatives in later stages. Batches are
//! drawn with replacement from per-tier pools, sign-flip augmented, and
//! stepped with bias-corrected adaptive moments.
//!
//! Everything is driven by one seeded RNG, so a `(seed, config, dataset)`
//! triple fully determines the trained model, bit for bit.

use crate::dataset::{LabeledPose, PoseDataset, Tier};
use crate::error::{Error, Result};
use crate::model::FieldModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Batch composition over the four tiers; fractions sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierMix {
    pub manifold: f64,
    pub far: f64,
    pub mid: f64,
    pub near: f64,
}

impl TierMix {
    pub fn fractions(&self) -> [f64; 4] {
        [self.manifold, self.far, self.mid, self.near]
    }

    fn validate(&self) -> Result<()> {
        let f = self.fractions();
        if f.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(Error::Config(format!("tier fractions must be >= 0, got {f:?}")));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("tier fractions must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

/// One curriculum stage: how many epochs and which tier mix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumStage {
    pub epochs: usize,
    pub mix: TierMix,
}

/// Full training configuration. Defaults give the three-stage curriculum
/// used for desk-scale runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub stages: Vec<CurriculumStage>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lambda_eik: f64,
    pub flip_prob: f64,
    pub seed: u64,
    /// Epochs between validation passes over the held-out split.
    pub validation_cadence: usize,
    /// Fraction of each tier held out for validation.
    pub val_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            stages: vec![
                CurriculumStage {
                    epochs: 20,
                    mix: TierMix { manifold: 0.5, far: 0.5, mid: 0.0, near: 0.0 },
                },
                CurriculumStage {
                    epochs: 20,
                    mix: TierMix { manifold: 0.4, far: 0.3, mid: 0.3, near: 0.0 },
                },
                CurriculumStage {
                    epochs: 40,
                    mix: TierMix { manifold: 0.3, far: 0.3, mid: 0.2, near: 0.2 },
                },
            ],
            batch_size: 256,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lambda_eik: 0.1,
            flip_prob: 0.5,
            seed: 0,
            validation_cadence: 1,
            val_fraction: 0.1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        for rate in [self.learning_rate, self.beta1, self.beta2, self.epsilon] {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::Config(format!("optimizer rates must be positive, got {rate}")));
            }
        }
        if !(self.beta1 < 1.0 && self.beta2 < 1.0) {
            return Err(Error::Config("moment coefficients must be < 1".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!("flip_prob must be in [0,1], got {}", self.flip_prob)));
        }
        if self.lambda_eik < 0.0 || !self.lambda_eik.is_finite() {
            return Err(Error::Config(format!("lambda_eik must be >= 0, got {}", self.lambda_eik)));
        }
        if self.validation_cadence == 0 {
            return Err(Error::Config("validation_cadence must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction must be in [0,1), got {}",
                self.val_fraction
            )));
        }
        for stage in &self.stages {
            stage.mix.validate()?;
        }
        Ok(())
    }
}

/// First/second moment accumulators for the adaptive update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// One bias-corrected adaptive-moment update, `t` counting from 1.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: u64,
) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), state.m.len());
    debug_assert!(t >= 1);
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let mhat = state.m[i] / bc1;
        let vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (vhat.sqrt() + epsilon);
    }
}

/// Sign-flip augmentation: each quaternion of each sample is independently
/// negated with probability `flip_prob`. Labels are untouched (a flipped
/// quaternion is the same rotation).
pub fn augment_flip<R: Rng>(batch: &mut [LabeledPose], flip_prob: f64, rng: &mut R) {
    for sample in batch.iter_mut() {
        for q in sample.pose.joints_mut() {
            if rng.gen::<f64>() < flip_prob {
                *q = q.negated();
            }
        }
    }
}

/// Per-tier batch counts for a mix: largest-remainder rounding so the
/// counts always sum to the batch size.
pub fn batch_tier_counts(mix: &TierMix, batch_size: usize) -> [usize; 4] {
    let f = mix.fractions();
    let mut counts = [0usize; 4];
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(4);
    let mut assigned = 0usize;
    for i in 0..4 {
        let target = f[i] * batch_size as f64;
        counts[i] = target.floor() as usize;
        assigned += counts[i];
        remainders.push((target - target.floor(), i));
    }
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for (_, i) in remainders.into_iter().take(batch_size - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Validation metrics over a held-out labeled set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    /// Mean field value over distance-zero samples.
    pub manifold_mean_f: f64,
    /// Mean `|f - d|` over off-manifold samples.
    pub negative_mae: f64,
    /// Mean `| ||grad f|| - 1 |` over off-manifold samples.
    pub eikonal_mean_dev: f64,
    /// Mean `|f(pose) - f(all joints sign-flipped)|` over all samples.
    pub flip_asymmetry: f64,
}

/// Computes validation metrics over raw records.
pub fn validate_records(model: &FieldModel, records: &[LabeledPose]) -> Result<ValidationMetrics> {
    if records.is_empty() {
        return Err(Error::Config("validation needs a non-empty held-out set".into()));
    }
    const CHUNK: usize = 64;
    struct Partial {
        f_manifold: f64,
        n_manifold: usize,
        mae: f64,
        eik: f64,
        n_neg: usize,
        flip: f64,
    }
    let eval_chunk = |chunk: &[LabeledPose]| -> Result<Partial> {
        let mut p = Partial { f_manifold: 0.0, n_manifold: 0, mae: 0.0, eik: 0.0, n_neg: 0, flip: 0.0 };
        for r in chunk {
            let f = model.value(&r.pose)?;
            let f_flip = model.value(&r.pose.flip_all())?;
            p.flip += (f - f_flip).abs();
            if r.distance == 0.0 {
                p.f_manifold += f;
                p.n_manifold += 1;
            } else {
                p.mae += (f - r.distance).abs();
                let g = model.input_gradient(&r.pose)?;
                let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                p.eik += (gn - 1.0).abs();
                p.n_neg += 1;
            }
        }
        Ok(p)
    };
    let chunks: Vec<&[LabeledPose]> = records.chunks(CHUNK).collect();
    let partials: Vec<Result<Partial>> = if chunks.len() == 1 {
        chunks.iter().map(|c| eval_chunk(c)).collect()
    } else {
        use rayon::prelude::*;
        chunks.par_iter().map(|c| eval_chunk(c)).collect()
    };
    let mut total = Partial { f_manifold: 0.0, n_manifold: 0, mae: 0.0, eik: 0.0, n_neg: 0, flip: 0.0 };
    for p in partials {
        let p = p?;
        total.f_manifold += p.f_manifold;
        total.n_manifold += p.n_manifold;
        total.mae += p.mae;
        total.eik += p.eik;
        total.n_neg += p.n_neg;
        total.flip += p.flip;
    }
    let div = |num: f64, den: usize| if den == 0 { 0.0 } else { num / den as f64 };
    Ok(ValidationMetrics {
        manifold_mean_f: div(total.f_manifold, total.n_manifold),
        negative_mae: div(total.mae, total.n_neg),
        eikonal_mean_dev: div(total.eik, total.n_neg),
        flip_asymmetry: div(total.flip, records.len()),
    })
}

/// Validation metrics over a dataset.
pub fn validate(model: &FieldModel, heldout: &PoseDataset) -> Result<ValidationMetrics> {
    if heldout.skeleton.len() != model.joint_count() {
        return Err(Error::ShapeMismatch(format!(
            "dataset skeleton has {} joints, model expects {}",
            heldout.skeleton.len(),
            model.joint_count()
        )));
    }
    validate_records(model, &heldout.records)
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: usize,
    /// Mean per-sample distance loss over the epoch.
    pub l_udf: f64,
    /// Mean per-sample Eikonal loss over the epoch.
    pub l_eik: f64,
    /// Samples drawn from each tier this epoch.
    pub tier_counts: [usize; 4],
    pub validation: Option<ValidationMetrics>,
}

/// Training history; one record per epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "epoch,stage,l_udf,l_eik,manifold_n,far_n,mid_n,near_n,\
             manifold_mean_f,negative_mae,eikonal_mean_dev,flip_asymmetry"
        )?;
        for r in &self.records {
            write!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.epoch,
                r.stage,
                r.l_udf,
                r.l_eik,
                r.tier_counts[0],
                r.tier_counts[1],
                r.tier_counts[2],
                r.tier_counts[3]
            )?;
            match &r.validation {
                Some(v) => writeln!(
                    w,
                    ",{},{},{},{}",
                    v.manifold_mean_f, v.negative_mae, v.eikonal_mean_dev, v.flip_asymmetry
                )?,
                None => writeln!(w, ",,,,")?,
            }
        }
        Ok(())
    }
}

/// Runs the curriculum. On success the model holds the trained parameters;
/// on a numerical abort the model is rolled back to the last epoch-end
/// checkpoint and the error is returned.
pub fn train(model: &mut FieldModel, ds: &PoseDataset, cfg: &TrainingConfig) -> Result<History> {
    cfg.validate()?;
    if ds.skeleton.len() != model.joint_count() {
        return Err(Error::ShapeMismatch(format!(
            "dataset skeleton has {} joints, model expects {}",
            ds.skeleton.len(),
            model.joint_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // deterministic per-tier train/validation split
    let by_tier = ds.indices_by_tier();
    let mut train_pool: [Vec<usize>; 4] = Default::default();
    let mut val_records: Vec<LabeledPose> = Vec::new();
    for t in 0..4 {
        let mut idx = by_tier[t].clone();
        shuffle(&mut idx, &mut rng);
        let n_val = (idx.len() as f64 * cfg.val_fraction).floor() as usize;
        let n_val = n_val.min(idx.len().saturating_sub(1));
        for &i in idx.iter().take(n_val) {
            val_records.push(ds.records[i].clone());
        }
        train_pool[t] = idx.split_off(n_val);
        train_pool[t].sort_unstable();
    }

    // every tier demanded by some stage must be populated
    for (s, stage) in cfg.stages.iter().enumerate() {
        let f = stage.mix.fractions();
        for t in 0..4 {
            if f[t] > 0.0 && train_pool[t].is_empty() {
                return Err(Error::Config(format!(
                    "stage {s} draws from tier {} but the dataset has no such samples",
                    Tier::ALL[t].name()
                )));
            }
        }
    }

    let train_total: usize = train_pool.iter().map(Vec::len).sum();
    let batches_per_epoch = train_total.div_ceil(cfg.batch_size).max(1);

    let mut state = AdamState::new(model.params().len());
    let mut history = History::default();
    let mut checkpoint = model.params().to_vec();
    let mut t_step = 0u64;
    let mut epoch = 0usize;

    for (stage_idx, stage) in cfg.stages.iter().enumerate() {
        let counts = batch_tier_counts(&stage.mix, cfg.batch_size);
        for _ in 0..stage.epochs {
            let mut sum_udf = 0.0;
            let mut sum_eik = 0.0;
            let mut n_samples = 0usize;
            let mut tier_counts = [0usize; 4];
            for _ in 0..batches_per_epoch {
                let mut batch = Vec::with_capacity(cfg.batch_size);
                for t in 0..4 {
                    let pool = &train_pool[t];
                    for _ in 0..counts[t] {
                        let i = pool[rng.gen_range(0..pool.len())];
                        batch.push(ds.records[i].clone());
                    }
                    tier_counts[t] += counts[t];
                }
                augment_flip(&mut batch, cfg.flip_prob, &mut rng);
                let out = match model.loss_and_param_grads(&batch, cfg.lambda_eik) {
                    Ok(out) => out,
                    Err(Error::Numerical(msg)) => {
                        model.params_mut().copy_from_slice(&checkpoint);
                        return Err(Error::Numerical(format!(
                            "aborted at epoch {epoch}: {msg}; last epoch checkpoint restored"
                        )));
                    }
                    Err(other) => return Err(other),
                };
                t_step += 1;
                adam_step(
                    model.params_mut(),
                    &out.grads,
                    &mut state,
                    cfg.learning_rate,
                    cfg.beta1,
                    cfg.beta2,
                    cfg.epsilon,
                    t_step,
                );
                sum_udf += out.l_udf;
                sum_eik += out.l_eik;
                n_samples += batch.len();
            }
            checkpoint.copy_from_slice(model.params());
            let validation = if (epoch + 1) % cfg.validation_cadence == 0 && !val_records.is_empty()
            {
                Some(validate_records(model, &val_records)?)
            } else {
                None
            };
            history.records.push(EpochRecord {
                epoch,
                stage: stage_idx,
                l_udf: sum_udf / n_samples as f64,
                l_eik: sum_eik / n_samples as f64,
                tier_counts,
                validation,
            });
            epoch += 1;
        }
    }
    Ok(history)
}

/// Fisher-Yates with the training RNG (avoids `SliceRandom` so the draw
/// sequence is pinned by this crate, not a dependency's implementation).
fn shuffle<R: Rng>(v: &mut [usize], rng: &mut R) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_negatives, sample_manifold, SyntheticManifoldSpec};
    use crate::model::ModelConfig;
    use crate::so3::{pose_distance, random_pose, SkeletonTopology};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_setup() -> (FieldModel, PoseDataset) {
        let skel = SkeletonTopology::binary_tree(4).unwrap();
        let spec = SyntheticManifoldSpec::random(4, 2, 3).unwrap();
        let manifold = sample_manifold(&spec, 120, 4).unwrap();
        let negatives = build_negatives(&manifold, &[0.8, 0.4, 0.15], 40, 5).unwrap();
        let ds =
            PoseDataset::assemble(skel.clone(), manifold, negatives, 60, 5, 4, String::new())
                .unwrap();
        let cfg = ModelConfig {
            feature_dim: 3,
            enc_hidden: 8,
            head_width: 16,
            head_layers: 3,
            beta: 100.0,
            out_beta: 1000.0,
        };
        let model = FieldModel::init(&skel, cfg, 6).unwrap();
        (model, ds)
    }

    fn tiny_config(epochs: usize) -> TrainingConfig {
        TrainingConfig {
            stages: vec![
                CurriculumStage {
                    epochs,
                    mix: TierMix { manifold: 0.5, far: 0.5, mid: 0.0, near: 0.0 },
                },
                CurriculumStage {
                    epochs,
                    mix: TierMix { manifold: 0.4, far: 0.2, mid: 0.2, near: 0.2 },
                },
            ],
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 11,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut params = vec![0.5, -1.0, 2.0];
        let before = params.clone();
        let mut state = AdamState::new(3);
        adam_step(&mut params, &[0.0; 3], &mut state, 0.1, 0.9, 0.999, 1e-8, 1);
        assert_eq!(params, before);
    }

    #[test]
    fn adam_first_step_magnitude() {
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        adam_step(&mut params, &[1.0], &mut state, 0.1, 0.9, 0.999, 1e-8, 1);
        // bias-corrected mhat = vhat = 1 => step = lr / (1 + eps)
        assert!((params[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut params = vec![0.3, -0.7];
            let mut state = AdamState::new(2);
            for t in 1..=5 {
                adam_step(&mut params, &[0.2, -0.1], &mut state, 0.05, 0.9, 0.999, 1e-8, t);
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn flip_prob_zero_and_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let skel = SkeletonTopology::binary_tree(4).unwrap();
        let pose = random_pose(4, &mut rng);
        let mut batch =
            vec![LabeledPose::new(pose.clone(), 0.25, Tier::Mid).unwrap()];
        augment_flip(&mut batch, 0.0, &mut rng);
        assert_eq!(batch[0].pose, pose);

        augment_flip(&mut batch, 1.0, &mut rng);
        for (a, b) in batch[0].pose.joints().iter().zip(pose.joints()) {
            assert_eq!(a.components(), b.negated().components());
        }
        assert_eq!(pose_distance(&batch[0].pose, &pose, &skel).unwrap(), 0.0);
        assert_eq!(batch[0].distance.to_bits(), 0.25f64.to_bits());
    }

    #[test]
    fn batch_counts_sum_and_follow_mix() {
        let mix = TierMix { manifold: 0.4, far: 0.3, mid: 0.3, near: 0.0 };
        let c = batch_tier_counts(&mix, 256);
        assert_eq!(c.iter().sum::<usize>(), 256);
        assert_eq!(c[3], 0);
        assert_eq!(c[0], 102);
    }

    #[test]
    fn zero_epoch_config_is_identity() {
        let (mut model, ds) = tiny_setup();
        let before = model.params().to_vec();
        let cfg = TrainingConfig { stages: vec![], seed: 1, ..TrainingConfig::default() };
        let history = train(&mut model, &ds, &cfg).unwrap();
        assert!(history.records.is_empty());
        assert_eq!(model.params(), &before[..]);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let (model0, ds) = tiny_setup();
        let cfg = tiny_config(2);
        let mut m1 = model0.clone();
        let h1 = train(&mut m1, &ds, &cfg).unwrap();
        let mut m2 = model0.clone();
        let h2 = train(&mut m2, &ds, &cfg).unwrap();
        assert_eq!(h1, h2);
        for (a, b) in m1.params().iter().zip(m2.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn missing_tier_is_config_error() {
        let skel = SkeletonTopology::binary_tree(4).unwrap();
        let spec = SyntheticManifoldSpec::random(4, 2, 3).unwrap();
        let manifold = sample_manifold(&spec, 50, 4).unwrap();
        // dataset with no "near" samples
        let negatives = build_negatives(&manifold, &[0.8], 20, 5).unwrap();
        let ds =
            PoseDataset::assemble(skel.clone(), manifold, negatives, 30, 5, 4, String::new())
                .unwrap();
        let cfg = ModelConfig {
            feature_dim: 3,
            enc_hidden: 8,
            head_width: 16,
            head_layers: 3,
            beta: 100.0,
            out_beta: 1000.0,
        };
        let mut model = FieldModel::init(&skel, cfg, 6).unwrap();
        let mut tcfg = tiny_config(1);
        tcfg.stages[1].mix = TierMix { manifold: 0.5, far: 0.3, mid: 0.0, near: 0.2 };
        assert!(matches!(train(&mut model, &ds, &tcfg), Err(Error::Config(_))));
    }

    #[test]
    fn near_tier_only_after_its_stage_activates() {
        let (mut model, ds) = tiny_setup();
        let cfg = tiny_config(2);
        let history = train(&mut model, &ds, &cfg).unwrap();
        assert_eq!(history.records.len(), 4);
        for r in &history.records {
            if r.stage == 0 {
                assert_eq!(r.tier_counts[3], 0, "near samples drawn in stage 0");
            } else {
                assert!(r.tier_counts[3] > 0);
            }
        }
    }

    #[test]
    fn loss_non_increasing_on_fixed_batch_with_small_lr() {
        let (mut model, ds) = tiny_setup();
        let batch: Vec<LabeledPose> = ds.records[..32].to_vec();
        let mut state = AdamState::new(model.params().len());
        let first = model.loss_and_param_grads(&batch, 0.1).unwrap();
        let initial = first.l_udf + 0.1 * first.l_eik;
        let mut grads = first.grads;
        for t in 1..=10u64 {
            adam_step(model.params_mut(), &grads, &mut state, 1e-5, 0.9, 0.999, 1e-8, t);
            grads = model.loss_and_param_grads(&batch, 0.1).unwrap().grads;
        }
        let last = model.loss_and_param_grads(&batch, 0.1).unwrap();
        let final_loss = last.l_udf + 0.1 * last.l_eik;
        assert!(
            final_loss <= initial,
            "loss increased under small-lr descent: {initial} -> {final_loss}"
        );
    }

    #[test]
    fn validate_perfect_stub_metrics() {
        // field that reproduces labels exactly: impossible with a real net,
        // so check the metric plumbing on manifold-only data where f == 0
        // cannot hold; instead check non-negativity and flip symmetry range
        let (model, ds) = tiny_setup();
        let metrics = validate(&model, &ds).unwrap();
        assert!(metrics.manifold_mean_f >= 0.0);
        assert!(metrics.negative_mae >= 0.0);
        assert!(metrics.eikonal_mean_dev >= 0.0);
        assert!(metrics.flip_asymmetry >= 0.0);
    }

    #[test]
    fn history_csv_shape() {
        let (mut model, ds) = tiny_setup();
        let history = train(&mut model, &ds, &tiny_config(1)).unwrap();
        let mut buf = Vec::new();
        history.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), history.records.len() + 1);
        assert!(lines[0].starts_with("epoch,stage,l_udf,l_eik"));
        assert_eq!(lines[1].split(',').count(), 12);
    }

    #[test]
    fn config_json_round_trips_with_defaults() {
        let cfg = TrainingConfig::default();
        let js = serde_json::to_string(&cfg).unwrap();
        let back: TrainingConfig = serde_json::from_str(&js).unwrap();
        assert_eq!(cfg, back);
        // partial config fills defaults
        let partial: TrainingConfig = serde_json::from_str(r#"{"seed": 7}"#).unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.batch_size, 256);
        assert_eq!(partial.stages.len(), 3);
    }
}
