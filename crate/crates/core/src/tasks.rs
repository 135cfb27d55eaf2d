//! Downstream pose optimization built on the learned field: motion
//! denoising, fitting to partial observations, manifold interpolation,
//! diverse sampling, and the associated metrics.
//!
//! The inner optimizer everywhere is the same: adaptive-moment updates on
//! the ambient quaternion coordinates with per-step renormalization of the
//! free joints. The field enters as an adaptively weighted prior whose
//! gradient contribution is `w_prior * f * grad f`, so the pull toward the
//! manifold fades as a pose approaches it.

use crate::error::{Error, Result};
use crate::fk::{fk_backward, fk_trace, forward_kinematics, mean_joint_distance, JointPositions};
use crate::model::FieldModel;
use crate::project::{project, DifferentiableField, ProjectionConfig};
use crate::so3::{perturb_pose, pose_distance, random_pose, Pose, SkeletonTopology, UnitQuaternion};
use crate::train::{adam_step, AdamState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// An ordered, non-empty list of poses with uniform joint count.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    frames: Vec<Pose>,
}

impl MotionSequence {
    pub fn new(frames: Vec<Pose>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Config("motion sequence must be non-empty".into()));
        };
        let k = first.len();
        if frames.iter().any(|f| f.len() != k) {
            return Err(Error::Config("all frames must share the joint count".into()));
        }
        Ok(MotionSequence { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, t: usize) -> &Pose {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[Pose] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Pose> {
        self.frames
    }
}

/// Weights and inner-optimizer settings for denoising and partial fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiseConfig {
    /// Data-term weight on observed joint positions.
    pub lambda_v: f64,
    /// Prior scale; the effective prior weight is `w_prior * f(pose)`.
    pub w_prior: f64,
    /// Temporal-smoothness weight against the previous solved frame.
    pub lambda_t: f64,
    /// Inner optimizer learning rate.
    pub lr: f64,
    /// Inner optimizer steps per frame.
    pub steps: usize,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig { lambda_v: 1.0, w_prior: 10.0, lambda_t: 0.5, lr: 1e-2, steps: 300 }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for w in [self.lambda_v, self.w_prior, self.lambda_t] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("weights must be >= 0, got {w}")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-joint observed/occluded flags. At least one joint must be observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionMask {
    observed: Vec<bool>,
}

impl OcclusionMask {
    pub fn new(observed: Vec<bool>) -> Result<Self> {
        if !observed.iter().any(|o| *o) {
            return Err(Error::Config("occlusion mask must observe at least one joint".into()));
        }
        Ok(OcclusionMask { observed })
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn is_observed(&self, k: usize) -> bool {
        self.observed[k]
    }

    pub fn occluded_indices(&self) -> Vec<usize> {
        (0..self.observed.len()).filter(|&k| !self.observed[k]).collect()
    }
}

/// Inner optimization of a single pose.
///
/// Free joints move; the rest stay bit-exactly at their initial values.
/// `data`: target positions and per-joint inclusion flags for the data
/// term. `temporal`: previous-frame positions for the smoothness term.
fn optimize_pose<F: DifferentiableField>(
    init: &Pose,
    free: &[bool],
    data: Option<(&JointPositions, &[bool])>,
    temporal: Option<&JointPositions>,
    field: &F,
    skel: &SkeletonTopology,
    cfg: &DenoiseConfig,
) -> Result<Pose> {
    let k = skel.len();
    let mut pose = init.clone();
    let mut state = AdamState::new(4 * k);
    let mut grad = vec![0.0; 4 * k];
    for step in 1..=cfg.steps {
        grad.fill(0.0);
        let need_fk = (data.is_some() && cfg.lambda_v > 0.0)
            || (temporal.is_some() && cfg.lambda_t > 0.0);
        if need_fk {
            let trace = fk_trace(&pose, skel)?;
            let mut pos_bar = vec![[0.0f64; 3]; k];
            let mut any = false;
            if let Some((obs, include)) = data {
                if cfg.lambda_v > 0.0 {
                    for j in 0..k {
                        if include[j] {
                            let p = trace.positions[j];
                            let o = obs.position(j);
                            for c in 0..3 {
                                pos_bar[j][c] += 2.0 * cfg.lambda_v * (p[c] - o[c]);
                            }
                            any = true;
                        }
                    }
                }
            }
            if let Some(prev) = temporal {
                if cfg.lambda_t > 0.0 {
                    for j in 0..k {
                        let p = trace.positions[j];
                        let o = prev.position(j);
                        for c in 0..3 {
                            pos_bar[j][c] += 2.0 * cfg.lambda_t * (p[c] - o[c]);
                        }
                    }
                    any = true;
                }
            }
            if any {
                let qbar = fk_backward(&pose, skel, &trace, pos_bar);
                for (g, q) in grad.iter_mut().zip(&qbar) {
                    *g += q;
                }
            }
        }
        if cfg.w_prior > 0.0 {
            let (f, g) = field.value_and_gradient(&pose)?;
            // adaptive weighting: the prior gradient scales with the
            // current distance, vanishing on the manifold
            let scale = cfg.w_prior * f;
            for (gi, pi) in grad.iter_mut().zip(&g) {
                *gi += scale * pi;
            }
        }
        for j in 0..k {
            if !free[j] {
                grad[4 * j..4 * j + 4].fill(0.0);
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient at inner step {step}")));
        }
        if grad.iter().all(|g| *g == 0.0) {
            continue;
        }
        let mut coords = pose.to_ambient();
        adam_step(&mut coords, &grad, &mut state, cfg.lr, 0.9, 0.999, 1e-8, step as u64);
        let joints = pose.joints_mut();
        for j in 0..k {
            if free[j] {
                let c = &coords[4 * j..4 * j + 4];
                joints[j] = UnitQuaternion::normalize(c[0], c[1], c[2], c[3])?;
            }
        }
    }
    Ok(pose)
}

/// Sequential motion denoising: frame `t` fits its observations, the prior,
/// and temporal consistency with the already-solved frame `t - 1`.
pub fn denoise<F: DifferentiableField>(
    seq: &MotionSequence,
    observations: &[JointPositions],
    field: &F,
    skel: &SkeletonTopology,
    cfg: &DenoiseConfig,
) -> Result<MotionSequence> {
    cfg.validate()?;
    if seq.len() != observations.len() {
        return Err(Error::DimensionMismatch { expected: seq.len(), got: observations.len() });
    }
    let k = skel.len();
    skel.check_pose(seq.frame(0))?;
    for obs in observations {
        if obs.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: obs.len() });
        }
    }
    let free = vec![true; k];
    let include = vec![true; k];
    let mut out = Vec::with_capacity(seq.len());
    let mut prev_fk: Option<JointPositions> = None;
    for (t, frame) in seq.frames().iter().enumerate() {
        let solved = optimize_pose(
            frame,
            &free,
            Some((&observations[t], &include)),
            prev_fk.as_ref(),
            field,
            skel,
            cfg,
        )?;
        prev_fk = Some(forward_kinematics(&solved, skel)?);
        out.push(solved);
    }
    MotionSequence::new(out)
}

/// Fits the occluded joints of a single frame to partial position
/// observations. Observed joints' quaternions stay bit-exactly at `init`;
/// the data term covers only observed joints, the prior the whole pose.
pub fn fit_partial<F: DifferentiableField>(
    frame_obs: &JointPositions,
    mask: &OcclusionMask,
    init: &Pose,
    field: &F,
    skel: &SkeletonTopology,
    cfg: &DenoiseConfig,
) -> Result<Pose> {
    cfg.validate()?;
    let k = skel.len();
    if mask.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: mask.len() });
    }
    if frame_obs.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: frame_obs.len() });
    }
    skel.check_pose(init)?;
    let occluded = mask.occluded_indices();
    if occluded.is_empty() {
        return Ok(init.clone());
    }
    let free: Vec<bool> = (0..k).map(|j| !mask.is_observed(j)).collect();
    let include: Vec<bool> = (0..k).map(|j| mask.is_observed(j)).collect();
    optimize_pose(init, &free, Some((frame_obs, &include)), None, field, skel, cfg)
}

/// Builds the conventional starting pose for [`fit_partial`]: observed
/// joints from `init`, occluded joints near the identity rotation
/// (perturbed by `sigma` radians).
pub fn fit_partial_init(
    init: &Pose,
    mask: &OcclusionMask,
    sigma: f64,
    seed: u64,
) -> Result<Pose> {
    if mask.len() != init.len() {
        return Err(Error::DimensionMismatch { expected: init.len(), got: mask.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let near_identity = perturb_pose(&Pose::identity(init.len()), sigma, 1.0, &mut rng);
    let mut out = init.clone();
    for j in 0..init.len() {
        if !mask.is_observed(j) {
            out.joints_mut()[j] = *near_identity.joint(j);
        }
    }
    Ok(out)
}

/// Interpolation settings; the stop tolerance is a pose distance, the
/// projection tolerance a field value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpolateConfig {
    /// Blend step toward the projected end pose, in `(0, 1]`.
    pub tau: f64,
    /// Stop once the current frame is this close to the projected end.
    pub stop_tol: f64,
    pub max_frames: usize,
    pub projection: ProjectionConfig,
}

impl Default for InterpolateConfig {
    fn default() -> Self {
        InterpolateConfig {
            tau: 0.1,
            stop_tol: 1e-2,
            max_frames: 200,
            projection: ProjectionConfig::default(),
        }
    }
}

/// An interpolation result; `converged` is false when the walk ran out of
/// frames before reaching the end pose.
#[derive(Debug, Clone)]
pub struct Interpolation {
    pub sequence: MotionSequence,
    pub converged: bool,
}

/// Walks the manifold from `start` to `end`: both endpoints are projected,
/// then each step blends linearly toward the projected end in ambient
/// coordinates, renormalizes, and projects back onto the zero set.
pub fn interpolate<F: DifferentiableField>(
    start: &Pose,
    end: &Pose,
    field: &F,
    skel: &SkeletonTopology,
    cfg: &InterpolateConfig,
) -> Result<Interpolation> {
    if !(cfg.tau > 0.0 && cfg.tau <= 1.0) {
        return Err(Error::Config(format!("tau must be in (0, 1], got {}", cfg.tau)));
    }
    if cfg.max_frames < 1 {
        return Err(Error::Config("max_frames must be >= 1".into()));
    }
    skel.check_pose(start)?;
    skel.check_pose(end)?;
    let start_p = project(field, start, &cfg.projection)?.pose;
    let end_p = project(field, end, &cfg.projection)?.pose;
    let mut frames = vec![start_p.clone()];
    let mut cur = start_p;
    while pose_distance(&cur, &end_p, skel)? >= cfg.stop_tol && frames.len() < cfg.max_frames {
        let blended = if cfg.tau == 1.0 {
            // a full step lands exactly on the projected end
            end_p.clone()
        } else {
            // per joint, blend toward the sign-matched end representative
            // (same rotation, shorter arc on the double cover)
            let mut blend = Vec::with_capacity(4 * cur.len());
            for j in 0..cur.len() {
                let c = cur.joint(j);
                let e = end_p.joint(j);
                let s = if c.dot(e) < 0.0 { -1.0 } else { 1.0 };
                let cc = c.components();
                let ec = e.components();
                for i in 0..4 {
                    blend.push((1.0 - cfg.tau) * cc[i] + cfg.tau * s * ec[i]);
                }
            }
            Pose::from_ambient(&blend)?
        };
        cur = project(field, &blended, &cfg.projection)?.pose;
        frames.push(cur.clone());
    }
    let converged = pose_distance(&cur, &end_p, skel)? < cfg.stop_tol;
    if converged && frames.last() != Some(&end_p) {
        frames.push(end_p);
    }
    Ok(Interpolation { sequence: MotionSequence::new(frames)?, converged })
}

/// Attempts per sampled index before giving up.
pub const SAMPLE_RETRY_BUDGET: usize = 8;

/// Draws `n` poses by projecting uniform random poses onto the zero set.
/// Each index has its own RNG stream, so results are deterministic and
/// independent of evaluation order. A sample is accepted once its projected
/// field value is below `cfg.tol`; indices that exhaust the retry budget
/// fail the whole call with the accepted poses attached.
pub fn sample_poses(
    model: &FieldModel,
    n: usize,
    cfg: &ProjectionConfig,
    seed: u64,
) -> Result<Vec<Pose>> {
    if n == 0 {
        return Err(Error::Config("sample_poses needs n >= 1".into()));
    }
    cfg.validate()?;
    let k = model.joint_count();
    let sample_one = |index: usize| -> Result<Pose> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        for _ in 0..SAMPLE_RETRY_BUDGET {
            let start = random_pose(k, &mut rng);
            let out = project(model, &start, cfg)?;
            if out.value < cfg.tol {
                return Ok(out.pose);
            }
        }
        Err(Error::Sampling { accepted: Vec::new() })
    };
    let results: Vec<Result<Pose>> = if n == 1 {
        vec![sample_one(0)]
    } else {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(sample_one).collect()
    };
    let mut accepted = Vec::with_capacity(n);
    let mut exhausted = false;
    for r in results {
        match r {
            Ok(p) => accepted.push(p),
            Err(Error::Sampling { .. }) => exhausted = true,
            Err(other) => return Err(other),
        }
    }
    if exhausted {
        return Err(Error::Sampling { accepted });
    }
    Ok(accepted)
}

/// Average pairwise diversity: mean over all unordered sample pairs of the
/// mean joint distance between their forward-kinematics positions.
pub fn apd(samples: &[Pose], skel: &SkeletonTopology) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Config(format!(
            "apd needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let positions: Vec<JointPositions> = samples
        .iter()
        .map(|p| forward_kinematics(p, skel))
        .collect::<Result<_>>()?;
    let mut acc = 0.0;
    let mut pairs = 0usize;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            acc += mean_joint_distance(&positions[i], &positions[j])?;
            pairs += 1;
        }
    }
    Ok(acc / pairs as f64)
}

/// Mean and population standard deviation of the joint distance between
/// consecutive frames.
pub fn smoothness(seq: &MotionSequence, skel: &SkeletonTopology) -> Result<(f64, f64)> {
    if seq.len() < 2 {
        return Err(Error::Config(format!("smoothness needs >= 2 frames, got {}", seq.len())));
    }
    let positions: Vec<JointPositions> = seq
        .frames()
        .iter()
        .map(|p| forward_kinematics(p, skel))
        .collect::<Result<_>>()?;
    let dists: Vec<f64> = positions
        .windows(2)
        .map(|w| mean_joint_distance(&w[0], &w[1]))
        .collect::<Result<_>>()?;
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    let var = dists.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / dists.len() as f64;
    Ok((mean, var.sqrt()))
}
