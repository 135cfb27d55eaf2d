//! Forward kinematics on the synthetic skeleton.
//!
//! Positions feed the denoising data term, the pairwise-diversity metric,
//! and the interpolation smoothness metric. The global root translation is
//! fixed: a root-level joint sits at its own offset.

use crate::error::{Error, Result};
use crate::so3::{cross, Pose, SkeletonTopology, UnitQuaternion};

/// 3D positions of all joints, in skeleton order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPositions {
    positions: Vec<[f64; 3]>,
}

impl JointPositions {
    pub fn new(positions: Vec<[f64; 3]>) -> Self {
        JointPositions { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, k: usize) -> [f64; 3] {
        self.positions[k]
    }

    pub fn as_slice(&self) -> &[[f64; 3]] {
        &self.positions
    }
}

/// Forward pass state kept around for the adjoint pass.
pub struct FkTrace {
    pub positions: Vec<[f64; 3]>,
    global: Vec<UnitQuaternion>,
}

/// Runs forward kinematics and keeps the per-joint global rotations.
///
/// `position(k) = position(parent) + R_global(parent) * offset(k)` with the
/// global rotation composed down the tree; a root's global rotation is its
/// own local one and its position is its offset.
pub fn fk_trace(pose: &Pose, skel: &SkeletonTopology) -> Result<FkTrace> {
    skel.check_pose(pose)?;
    let k = skel.len();
    let mut positions = Vec::with_capacity(k);
    let mut global = Vec::with_capacity(k);
    for i in 0..k {
        match skel.parent(i) {
            None => {
                positions.push(skel.offset(i));
                global.push(*pose.joint(i));
            }
            Some(p) => {
                let rotated = global[p].rotate(skel.offset(i));
                let base = positions[p];
                positions.push([base[0] + rotated[0], base[1] + rotated[1], base[2] + rotated[2]]);
                global.push(global[p].compose(pose.joint(i)));
            }
        }
    }
    Ok(FkTrace { positions, global })
}

pub fn forward_kinematics(pose: &Pose, skel: &SkeletonTopology) -> Result<JointPositions> {
    Ok(JointPositions::new(fk_trace(pose, skel)?.positions))
}

/// Mean Euclidean distance between corresponding joints: `(1/K) sum ||a_k - b_k||`.
pub fn mean_joint_distance(a: &JointPositions, b: &JointPositions) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let mut acc = 0.0;
    for (pa, pb) in a.as_slice().iter().zip(b.as_slice()) {
        let d = [pa[0] - pb[0], pa[1] - pb[1], pa[2] - pb[2]];
        acc += (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    }
    Ok(acc / a.len() as f64)
}

/// Adjoint of `rotate(q, v)` with respect to the quaternion components.
///
/// `r = v + 2w(u x v) + 2 u x (u x v)`; given the output adjoint `rbar`,
/// returns `(wbar, ubar)`.
fn rotate_adjoint(q: &UnitQuaternion, v: [f64; 3], rbar: [f64; 3]) -> (f64, [f64; 3]) {
    let u = [q.x, q.y, q.z];
    let uxv = cross(u, v);
    let wbar = 2.0 * (uxv[0] * rbar[0] + uxv[1] * rbar[1] + uxv[2] * rbar[2]);
    let vxr = cross(v, rbar);
    let uxv_x_r = cross(uxv, rbar);
    let rxu = cross(rbar, u);
    let vx_rxu = cross(v, rxu);
    let ubar = [
        2.0 * (q.w * vxr[0] + uxv_x_r[0] + vx_rxu[0]),
        2.0 * (q.w * vxr[1] + uxv_x_r[1] + vx_rxu[1]),
        2.0 * (q.w * vxr[2] + uxv_x_r[2] + vx_rxu[2]),
    ];
    (wbar, ubar)
}

/// Adjoints of the Hamilton product `c = g * q` for both factors.
fn compose_adjoint(g: &UnitQuaternion, q: &UnitQuaternion, cbar: [f64; 4]) -> ([f64; 4], [f64; 4]) {
    let (cw, cx, cy, cz) = (cbar[0], cbar[1], cbar[2], cbar[3]);
    // c = L(g) q with rows of L as in `compose`; qbar = L(g)^T cbar
    let qbar = [
        g.w * cw + g.x * cx + g.y * cy + g.z * cz,
        -g.x * cw + g.w * cx + g.z * cy - g.y * cz,
        -g.y * cw - g.z * cx + g.w * cy + g.x * cz,
        -g.z * cw + g.y * cx - g.x * cy + g.w * cz,
    ];
    // c = R(q) g; gbar = R(q)^T cbar
    let gbar = [
        q.w * cw + q.x * cx + q.y * cy + q.z * cz,
        -q.x * cw + q.w * cx - q.z * cy + q.y * cz,
        -q.y * cw + q.z * cx + q.w * cy - q.x * cz,
        -q.z * cw - q.y * cx + q.x * cy + q.w * cz,
    ];
    (gbar, qbar)
}

/// Reverse pass of forward kinematics: given per-joint position adjoints,
/// returns the adjoint of the 4K ambient quaternion coordinates.
pub fn fk_backward(
    pose: &Pose,
    skel: &SkeletonTopology,
    trace: &FkTrace,
    mut pos_bar: Vec<[f64; 3]>,
) -> Vec<f64> {
    let k = skel.len();
    debug_assert_eq!(pos_bar.len(), k);
    let mut global_bar = vec![[0.0f64; 4]; k];
    let mut qbar = vec![0.0f64; 4 * k];
    for i in (0..k).rev() {
        match skel.parent(i) {
            None => {
                // global = local quaternion; position is a constant offset
                for c in 0..4 {
                    qbar[4 * i + c] += global_bar[i][c];
                }
            }
            Some(p) => {
                // position(i) = position(p) + rotate(global(p), offset(i))
                let pb = pos_bar[i];
                for c in 0..3 {
                    pos_bar[p][c] += pb[c];
                }
                let (wbar, ubar) = rotate_adjoint(&trace.global[p], skel.offset(i), pb);
                global_bar[p][0] += wbar;
                global_bar[p][1] += ubar[0];
                global_bar[p][2] += ubar[1];
                global_bar[p][3] += ubar[2];
                // global(i) = global(p) * q_i
                let (gbar, qb) = compose_adjoint(&trace.global[p], pose.joint(i), global_bar[i]);
                for c in 0..4 {
                    global_bar[p][c] += gbar[c];
                    qbar[4 * i + c] += qb[c];
                }
            }
        }
    }
    qbar
}
