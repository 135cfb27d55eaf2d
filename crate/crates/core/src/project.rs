//! Projection of arbitrary poses onto the zero level set of a field.
//!
//! One step moves against the gradient scaled by the field value,
//! `x <- x - alpha * f(x) * grad f(x)`, in the 4K ambient coordinates,
//! re-projecting each joint to the sphere by normalization. With a
//! well-trained unit-gradient field the step length approximates the
//! remaining distance, so descent contracts geometrically.

use crate::error::{Error, Result};
use crate::model::FieldModel;
use crate::so3::{Pose, UnitQuaternion};
use serde::{Deserialize, Serialize};

/// Anything the projector can descend on. Implementations must accept
/// slightly off-sphere inputs: between re-projections the iterate is a raw
/// ambient point.
pub trait DifferentiableField {
    /// Non-negative field value.
    fn value(&self, pose: &Pose) -> Result<f64>;
    /// Gradient with respect to the 4K ambient quaternion coordinates.
    fn gradient(&self, pose: &Pose) -> Result<Vec<f64>>;
    fn value_and_gradient(&self, pose: &Pose) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(pose)?, self.gradient(pose)?))
    }
}

impl DifferentiableField for FieldModel {
    fn value(&self, pose: &Pose) -> Result<f64> {
        FieldModel::value(self, pose)
    }

    fn gradient(&self, pose: &Pose) -> Result<Vec<f64>> {
        self.input_gradient(pose)
    }

    fn value_and_gradient(&self, pose: &Pose) -> Result<(f64, Vec<f64>)> {
        self.value_and_input_gradient(pose)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    /// Step scale in `x <- x - alpha * f * grad f`.
    pub alpha: f64,
    pub max_iters: usize,
    /// Converged once the field value drops below this.
    pub tol: f64,
    /// Iterations between sphere re-projections.
    pub renorm_period: usize,
    pub record_trajectory: bool,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            alpha: 1.0,
            max_iters: 100,
            tol: 1e-3,
            renorm_period: 1,
            record_trajectory: false,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.max_iters < 1 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be >= 0, got {}", self.tol)));
        }
        if self.renorm_period < 1 {
            return Err(Error::Config("renorm_period must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a projection run.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Best normalized iterate seen (smallest recorded field value).
    pub pose: Pose,
    /// Field value at the returned pose.
    pub value: f64,
    /// Update steps performed.
    pub iters: usize,
    /// Normalized iterates, starting with the input, when recording.
    pub trajectory: Option<Vec<Pose>>,
}

fn raw_pose(coords: &[f64]) -> Pose {
    Pose::new(
        coords
            .chunks_exact(4)
            .map(|c| UnitQuaternion { w: c[0], x: c[1], y: c[2], z: c[3] })
            .collect(),
    )
}

fn normalize_coords(coords: &mut [f64]) -> Result<()> {
    for q in coords.chunks_exact_mut(4) {
        let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if !(norm > 1e-12) {
            return Err(Error::DegenerateQuaternion { norm });
        }
        for c in q {
            *c /= norm;
        }
    }
    Ok(())
}

/// Projects a pose onto the field's zero set. Returns the best normalized
/// iterate; candidates are evaluated on the sphere, so the returned value is
/// never above the input's.
pub fn project<F: DifferentiableField>(
    field: &F,
    pose: &Pose,
    cfg: &ProjectionConfig,
) -> Result<Projection> {
    cfg.validate()?;
    let mut x = pose.to_ambient();
    let mut best_f = field.value(pose)?;
    if !best_f.is_finite() {
        return Err(Error::Numerical(format!("field value {best_f} at projection start")));
    }
    let mut best_pose = pose.clone();
    let mut trajectory = cfg.record_trajectory.then(|| vec![pose.clone()]);
    if best_f < cfg.tol {
        return Ok(Projection { pose: best_pose, value: best_f, iters: 0, trajectory });
    }
    for it in 1..=cfg.max_iters {
        let cur = raw_pose(&x);
        let (f, g) = field.value_and_gradient(&cur)?;
        if !f.is_finite() || g.iter().any(|gi| !gi.is_finite()) {
            return Err(Error::Numerical(format!("non-finite field evaluation at iter {it}")));
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= cfg.alpha * f * gi;
        }
        if it % cfg.renorm_period == 0 {
            normalize_coords(&mut x)?;
        }
        // candidates are always judged on the sphere
        let mut cand_coords = x.clone();
        normalize_coords(&mut cand_coords)?;
        let cand = raw_pose(&cand_coords);
        let fc = field.value(&cand)?;
        if !fc.is_finite() {
            return Err(Error::Numerical(format!("non-finite candidate value at iter {it}")));
        }
        if let Some(t) = trajectory.as_mut() {
            t.push(cand.clone());
        }
        if fc < best_f {
            best_f = fc;
            best_pose = cand;
        }
        if best_f < cfg.tol {
            return Ok(Projection { pose: best_pose, value: best_f, iters: it, trajectory });
        }
    }
    Ok(Projection { pose: best_pose, value: best_f, iters: cfg.max_iters, trajectory })
}

/// Element-wise [`project`] over a batch; per-element failures do not abort
/// siblings, and output order matches input order.
pub fn project_batch<F: DifferentiableField + Sync>(
    field: &F,
    poses: &[Pose],
    cfg: &ProjectionConfig,
) -> Vec<Result<Projection>> {
    if poses.len() <= 1 {
        return poses.iter().map(|p| project(field, p, cfg)).collect();
    }
    use rayon::prelude::*;
    poses.par_iter().map(|p| project(field, p, cfg)).collect()
}

/// Analytic reference fields for validating the projector independently of
/// any trained model.
pub mod stubs {
    use super::*;
    use crate::so3::SkeletonTopology;

    /// The exact pose metric to a fixed target, with its ambient gradient.
    ///
    /// `f(pose) = sqrt(sum_i (w_i/2) * geodesic(q_i, t_i)^2)` where the
    /// geodesic is the chord form `2 asin(||q - s t|| / 2)` with
    /// `s = sign(q . t)`; the gradient differentiates exactly that
    /// expression, treating the quaternions as free 4-vectors.
    pub struct DistanceToTargetField {
        pub target: Pose,
        pub skel: SkeletonTopology,
    }

    impl DifferentiableField for DistanceToTargetField {
        fn value(&self, pose: &Pose) -> Result<f64> {
            crate::so3::pose_distance(pose, &self.target, &self.skel)
        }

        fn gradient(&self, pose: &Pose) -> Result<Vec<f64>> {
            let d = self.value(pose)?;
            let mut grad = vec![0.0; 4 * pose.len()];
            if d == 0.0 {
                return Ok(grad);
            }
            for i in 0..pose.len() {
                let q = pose.joint(i).components();
                let s = if pose.joint(i).dot(self.target.joint(i)) < 0.0 { -1.0 } else { 1.0 };
                let t = self.target.joint(i).components();
                let e = [q[0] - s * t[0], q[1] - s * t[1], q[2] - s * t[2], q[3] - s * t[3]];
                let r = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2] + e[3] * e[3]).sqrt();
                if r < 1e-12 {
                    continue;
                }
                let gamma = 2.0 * (0.5 * r).clamp(0.0, 1.0).asin();
                // d gamma / d e = e / (r * sqrt(1 - r^2/4))
                let dgamma_dr = 1.0 / (1.0 - 0.25 * r * r).max(1e-12).sqrt();
                let scale = (self.skel.weight(i) / 2.0) * gamma / d * dgamma_dr / r;
                for c in 0..4 {
                    grad[4 * i + c] = scale * e[c];
                }
            }
            Ok(grad)
        }
    }
}
