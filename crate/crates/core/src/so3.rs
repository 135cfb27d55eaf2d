//! Quaternion and pose-space primitives.
//!
//! A pose is an ordered list of `K` unit quaternions, one per joint, i.e. a
//! point on the product of `K` 3-spheres. The geodesic metric here treats
//! `q` and `-q` as the same rotation (double cover), and joints are weighted
//! by their position in the kinematic chain.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// A unit-norm quaternion `(w, x, y, z)` on the 3-sphere.
///
/// All constructors normalize, so `|norm - 1| <= 1e-9` holds for every value
/// of this type in circulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuaternion {
    /// The identity rotation.
    pub fn identity() -> Self {
        UnitQuaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 }
    }

    /// Normalizes an arbitrary quadruple onto the sphere.
    ///
    /// Fails with [`Error::DegenerateQuaternion`] when the input norm is at
    /// or below `1e-12`, where the direction is meaningless.
    pub fn normalize(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !(norm > 1e-12) {
            return Err(Error::DegenerateQuaternion { norm });
        }
        Ok(UnitQuaternion { w: w / norm, x: x / norm, y: y / norm, z: z / norm })
    }

    /// Rotation by `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Result<Self> {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !(n > 1e-12) {
            return Err(Error::DegenerateQuaternion { norm: n });
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Ok(UnitQuaternion {
            w: c,
            x: s * axis[0] / n,
            y: s * axis[1] / n,
            z: s * axis[2] / n,
        })
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn negated(&self) -> Self {
        UnitQuaternion { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product `self * rhs` (rhs applied in self's local frame).
    pub fn compose(&self, rhs: &Self) -> Self {
        let (a, b, c, d) = (self.w, self.x, self.y, self.z);
        let (e, f, g, h) = (rhs.w, rhs.x, rhs.y, rhs.z);
        UnitQuaternion {
            w: a * e - b * f - c * g - d * h,
            x: a * f + b * e + c * h - d * g,
            y: a * g - b * h + c * e + d * f,
            z: a * h + b * g - c * f + d * e,
        }
    }

    /// Rotates a 3-vector: `v + 2w(u x v) + 2 u x (u x v)` with `u = (x,y,z)`.
    ///
    /// Sign-flip invariant: `(-q)` rotates identically to `q`.
    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let u = [self.x, self.y, self.z];
        let uv = cross(u, v);
        let uuv = cross(u, uv);
        [
            v[0] + 2.0 * (self.w * uv[0] + uuv[0]),
            v[1] + 2.0 * (self.w * uv[1] + uuv[1]),
            v[2] + 2.0 * (self.w * uv[2] + uuv[2]),
        ]
    }

    /// Flips signs so the first nonzero component (w, x, y, z order) is positive.
    ///
    /// Canonical representative of the `{q, -q}` pair, used by the L2
    /// pre-filter in two-stage neighbor labeling.
    pub fn canonicalized(&self) -> Self {
        for c in [self.w, self.x, self.y, self.z] {
            if c != 0.0 {
                return if c < 0.0 { self.negated() } else { *self };
            }
        }
        // unreachable for unit norm, but keep a total function
        *self
    }

    pub fn components(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Uniform random unit quaternion (4D Gaussian, normalized).
pub fn random_unit_quaternion<R: Rng>(rng: &mut R) -> UnitQuaternion {
    loop {
        let w: f64 = rng.sample(StandardNormal);
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        if let Ok(q) = UnitQuaternion::normalize(w, x, y, z) {
            return q;
        }
    }
}

fn random_unit_axis<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let c: f64 = rng.sample(StandardNormal);
        let n = (a * a + b * b + c * c).sqrt();
        if n > 1e-12 {
            return [a / n, b / n, c / n];
        }
    }
}

/// An ordered list of `K` joint rotations: one point in the pose space.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    joints: Vec<UnitQuaternion>,
}

impl Pose {
    pub fn new(joints: Vec<UnitQuaternion>) -> Self {
        Pose { joints }
    }

    /// The all-identity pose for `k` joints.
    pub fn identity(k: usize) -> Self {
        Pose { joints: vec![UnitQuaternion::identity(); k] }
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joint(&self, k: usize) -> &UnitQuaternion {
        &self.joints[k]
    }

    pub fn joints(&self) -> &[UnitQuaternion] {
        &self.joints
    }

    pub fn joints_mut(&mut self) -> &mut [UnitQuaternion] {
        &mut self.joints
    }

    /// Flattens to 4K ambient coordinates in joint order, (w, x, y, z) per joint.
    pub fn to_ambient(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.joints.len());
        for q in &self.joints {
            out.extend_from_slice(&q.components());
        }
        out
    }

    /// Rebuilds a pose from 4K ambient coordinates, renormalizing each joint.
    pub fn from_ambient(coords: &[f64]) -> Result<Self> {
        if coords.len() % 4 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "ambient coordinate count {} is not a multiple of 4",
                coords.len()
            )));
        }
        let joints = coords
            .chunks_exact(4)
            .map(|c| UnitQuaternion::normalize(c[0], c[1], c[2], c[3]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Pose { joints })
    }

    /// Negates every joint quaternion. Represents the same set of rotations.
    pub fn flip_all(&self) -> Self {
        Pose { joints: self.joints.iter().map(|q| q.negated()).collect() }
    }

    /// Per-joint canonical sign representative (see [`UnitQuaternion::canonicalized`]).
    pub fn canonicalized(&self) -> Self {
        Pose { joints: self.joints.iter().map(|q| q.canonicalized()).collect() }
    }
}

/// Geodesic distance between two joint rotations: `arccos(|q . r|)`, in `[0, pi/2]`.
///
/// The absolute value folds the double cover, so `q` and `-q` are at
/// distance zero. Evaluated through the chord, `2 asin(||q -/+ r|| / 2)`,
/// which is algebraically the same function but stays accurate where
/// `arccos` loses ~8 digits near coincident rotations. Nothing
/// differentiates through this.
pub fn joint_geodesic(q: &UnitQuaternion, r: &UnitQuaternion) -> f64 {
    let r = if q.dot(r) < 0.0 { r.negated() } else { *r };
    let dw = q.w - r.w;
    let dx = q.x - r.x;
    let dy = q.y - r.y;
    let dz = q.z - r.z;
    let half_chord = 0.5 * (dw * dw + dx * dx + dy * dy + dz * dz).sqrt();
    2.0 * half_chord.clamp(0.0, 1.0).asin()
}

/// The weighted pose metric: `sqrt(sum_i (w_i / 2) * geodesic(a_i, b_i)^2)`.
pub fn pose_distance(a: &Pose, b: &Pose, skel: &SkeletonTopology) -> Result<f64> {
    if a.len() != skel.len() {
        return Err(Error::DimensionMismatch { expected: skel.len(), got: a.len() });
    }
    if b.len() != skel.len() {
        return Err(Error::DimensionMismatch { expected: skel.len(), got: b.len() });
    }
    let mut acc = 0.0;
    for k in 0..skel.len() {
        let g = joint_geodesic(a.joint(k), b.joint(k));
        acc += 0.5 * skel.weight(k) * g * g;
    }
    Ok(acc.sqrt())
}

/// Uniform random pose: each joint i.i.d. uniform on the 3-sphere.
pub fn random_pose<R: Rng>(k: usize, rng: &mut R) -> Pose {
    Pose { joints: (0..k).map(|_| random_unit_quaternion(rng)).collect() }
}

/// Perturbs each joint independently with probability `joint_prob` by a
/// geodesic arc of `|N(0, sigma^2)|` radians about a uniform random axis
/// (right-multiplied, i.e. in the joint's local frame).
///
/// The drawn arc is the displacement under [`joint_geodesic`], giving the
/// half-normal mean `sigma * sqrt(2/pi)` per perturbed joint. Untouched
/// joints are copied bit-exactly.
pub fn perturb_pose<R: Rng>(pose: &Pose, sigma: f64, joint_prob: f64, rng: &mut R) -> Pose {
    let joints = pose
        .joints
        .iter()
        .map(|q| {
            let include: f64 = rng.gen();
            let arc = sigma * rng.sample::<f64, _>(StandardNormal).abs();
            if include >= joint_prob || arc == 0.0 {
                return *q;
            }
            let axis = random_unit_axis(rng);
            // arc on S^3 = half the SO(3) rotation angle
            let delta = UnitQuaternion::from_axis_angle(axis, 2.0 * arc)
                .expect("axis is unit length");
            q.compose(&delta)
        })
        .collect();
    Pose { joints }
}

/// Kinematic-tree description: parent links, per-joint metric weights,
/// offsets for forward kinematics, and derived depths.
///
/// Parents must come before children (`parent(k) < k`); root-level joints
/// have no parent and depth zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonJson", into = "SkeletonJson")]
pub struct SkeletonTopology {
    parents: Vec<Option<usize>>,
    weights: Vec<f64>,
    offsets: Vec<[f64; 3]>,
    depths: Vec<usize>,
}

/// On-disk JSON shape: `{"k", "parents", "offsets", "weights"}`.
#[derive(Serialize, Deserialize)]
struct SkeletonJson {
    k: usize,
    parents: Vec<Option<usize>>,
    offsets: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl TryFrom<SkeletonJson> for SkeletonTopology {
    type Error = Error;
    fn try_from(j: SkeletonJson) -> Result<Self> {
        if j.parents.len() != j.k || j.offsets.len() != j.k || j.weights.len() != j.k {
            return Err(Error::Config(format!(
                "skeleton field lengths must all equal k={}: parents {}, offsets {}, weights {}",
                j.k,
                j.parents.len(),
                j.offsets.len(),
                j.weights.len()
            )));
        }
        SkeletonTopology::new(j.parents, j.offsets, j.weights)
    }
}

impl From<SkeletonTopology> for SkeletonJson {
    fn from(s: SkeletonTopology) -> Self {
        SkeletonJson {
            k: s.len(),
            parents: s.parents,
            offsets: s.offsets,
            weights: s.weights,
        }
    }
}

impl SkeletonTopology {
    /// Validates and builds a topology. Depths are derived from the parent map.
    pub fn new(
        parents: Vec<Option<usize>>,
        offsets: Vec<[f64; 3]>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let k = parents.len();
        if k == 0 {
            return Err(Error::Config("skeleton must have at least one joint".into()));
        }
        if offsets.len() != k || weights.len() != k {
            return Err(Error::Config(format!(
                "offsets ({}) and weights ({}) must match joint count {}",
                offsets.len(),
                weights.len(),
                k
            )));
        }
        let mut depths = vec![0usize; k];
        for (i, p) in parents.iter().enumerate() {
            match p {
                None => depths[i] = 0,
                Some(pi) if *pi < i => depths[i] = depths[*pi] + 1,
                Some(pi) => {
                    return Err(Error::Config(format!(
                        "parent index {pi} of joint {i} must be smaller than the joint index"
                    )))
                }
            }
        }
        for (i, w) in weights.iter().enumerate() {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::Config(format!("weight of joint {i} must be positive, got {w}")));
            }
        }
        for (i, o) in offsets.iter().enumerate() {
            if o.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config(format!("offset of joint {i} must be finite")));
            }
        }
        Ok(SkeletonTopology { parents, weights, offsets, depths })
    }

    /// A balanced binary tree of `k` joints with weights `2^-depth` and unit
    /// offsets alternating axes by depth (signs alternate between siblings).
    pub fn binary_tree(k: usize) -> Result<Self> {
        let parents: Vec<Option<usize>> =
            (0..k).map(|i| if i == 0 { None } else { Some((i - 1) / 2) }).collect();
        let mut depths = vec![0usize; k];
        for i in 1..k {
            depths[i] = depths[(i - 1) / 2] + 1;
        }
        let offsets = (0..k)
            .map(|i| {
                if i == 0 {
                    return [0.0, 0.0, 0.0];
                }
                let mut v = [0.0; 3];
                let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
                v[(depths[i] - 1) % 3] = sign;
                v
            })
            .collect();
        let weights = depths.iter().map(|d| 0.5f64.powi(*d as i32)).collect();
        SkeletonTopology::new(parents, offsets, weights)
    }

    /// A single chain of `k` joints: parent `k-1`, unit offsets along x,
    /// weights `2^-depth`.
    pub fn chain(k: usize) -> Result<Self> {
        let parents = (0..k).map(|i| if i == 0 { None } else { Some(i - 1) }).collect();
        let offsets = (0..k).map(|i| if i == 0 { [0.0; 3] } else { [1.0, 0.0, 0.0] }).collect();
        let weights = (0..k).map(|i| 0.5f64.powi(i as i32)).collect();
        SkeletonTopology::new(parents, offsets, weights)
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parent(&self, k: usize) -> Option<usize> {
        self.parents[k]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn offset(&self, k: usize) -> [f64; 3] {
        self.offsets[k]
    }

    pub fn depth(&self, k: usize) -> usize {
        self.depths[k]
    }

    /// Checks that a pose belongs to this skeleton.
    pub fn check_pose(&self, pose: &Pose) -> Result<()> {
        if pose.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: pose.len() });
        }
        Ok(())
    }
}
