//! Analytic derivatives of world-space points with respect to the pose
//! parameters of one motion frame `[r | omega | theta_0 .. theta_{J-1}]`.
//!
//! A world point rigidly attached to joint `m`'s frame satisfies
//! `x = p_m + R_m u` with `u` fixed in the joint frame, so the derivative
//! with respect to `theta_m` only needs the parent's world rotation and the
//! axis-angle derivative of the joint's local rotation. Parameters of
//! joints off the root-to-attachment chain contribute nothing.

use nalgebra::SMatrix;

use super::rotation::{axis_angle_with_jacobian, rot6d_with_jacobian};
use super::{KinematicsError, PosedFrame};
use crate::scene::{FramePose, Skeleton};
use crate::{Mat3, Real, Vec3};

/// Jacobian of one world-space point with respect to a frame's pose
/// parameters, stored blockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PointJacobian {
    /// d point / d root translation.
    pub wrt_root: Mat3,
    /// d point / d 6D global orientation.
    pub wrt_orientation: SMatrix<Real, 3, 6>,
    /// d point / d each joint's axis-angle rotation.
    pub wrt_joints: Vec<Mat3>,
}

impl PointJacobian {
    pub fn zeros(joint_count: usize) -> Self {
        Self {
            wrt_root: Mat3::zeros(),
            wrt_orientation: SMatrix::zeros(),
            wrt_joints: vec![Mat3::zeros(); joint_count],
        }
    }

    /// Frame parameter dimension D = 3 + 6 + 3J.
    pub fn param_dim(&self) -> usize {
        9 + 3 * self.wrt_joints.len()
    }

    /// Adds `scale * J^T residual` into a frame-parameter gradient slice of
    /// length D, laid out `[r | omega | theta]`.
    pub fn accumulate_vjp(&self, residual: &Vec3, scale: Real, grad: &mut [Real]) {
        assert_eq!(grad.len(), self.param_dim());
        let gr = self.wrt_root.transpose() * residual * scale;
        for i in 0..3 {
            grad[i] += gr[i];
        }
        let go = self.wrt_orientation.transpose() * residual * scale;
        for i in 0..6 {
            grad[3 + i] += go[i];
        }
        for (j, block) in self.wrt_joints.iter().enumerate() {
            let gj = block.transpose() * residual * scale;
            for i in 0..3 {
                grad[9 + 3 * j + i] += gj[i];
            }
        }
    }

    /// Adds `w * other` into `self`.
    pub fn scaled_add(&mut self, other: &PointJacobian, w: Real) {
        self.wrt_root += other.wrt_root * w;
        self.wrt_orientation += other.wrt_orientation * w;
        for (a, b) in self.wrt_joints.iter_mut().zip(&other.wrt_joints) {
            *a += b * w;
        }
    }

    /// Dense 3xD matrix view, used by finite-difference checks.
    pub fn to_dense(&self) -> nalgebra::DMatrix<Real> {
        let d = self.param_dim();
        let mut m = nalgebra::DMatrix::zeros(3, d);
        m.view_mut((0, 0), (3, 3)).copy_from(&self.wrt_root);
        m.view_mut((0, 3), (3, 6)).copy_from(&self.wrt_orientation);
        for (j, block) in self.wrt_joints.iter().enumerate() {
            m.view_mut((0, 9 + 3 * j), (3, 3)).copy_from(block);
        }
        m
    }
}

/// Jacobian of a world point `point` rigidly attached to `attach_joint`'s
/// frame, with respect to every pose parameter of `frame`. `posed` must be
/// the forward-kinematics result for the same frame.
pub fn point_jacobian(
    skeleton: &Skeleton,
    frame: &FramePose,
    posed: &PosedFrame,
    attach_joint: usize,
    point: &Vec3,
) -> Result<PointJacobian, KinematicsError> {
    let joints = skeleton.joint_count();
    if attach_joint >= joints {
        return Err(KinematicsError::JointOutOfRange {
            joint: attach_joint,
            joints,
        });
    }
    let (root_rotation, root_jac) = rot6d_with_jacobian(&frame.global_orientation)?;

    let mut jac = PointJacobian::zeros(joints);
    jac.wrt_root = Mat3::identity();

    // The whole chain rotates rigidly with the global orientation:
    // x = r + R6(omega) * y with y fixed.
    let y = root_rotation.transpose() * (point - frame.root_translation);
    for i in 0..6 {
        jac.wrt_orientation.set_column(i, &(root_jac[i] * y));
    }

    for &m in &skeleton.chain_to(attach_joint) {
        let parent_rotation = match skeleton.parent[m] {
            Some(p) => posed.rotation(p),
            None => root_rotation,
        };
        let world_rotation = posed.rotation(m);
        let local = world_rotation.transpose() * (point - posed.joint_positions[m]);
        let (_, dtheta) = axis_angle_with_jacobian(&frame.joint_rotations[m]);
        for a in 0..3 {
            jac.wrt_joints[m].set_column(a, &(parent_rotation * (dtheta[a] * local)));
        }
    }
    Ok(jac)
}

/// Jacobian of joint `joint`'s world position. The joint's own rotation
/// column and every descendant column are exactly zero.
pub fn joint_position_jacobian(
    skeleton: &Skeleton,
    frame: &FramePose,
    posed: &PosedFrame,
    joint: usize,
) -> Result<PointJacobian, KinematicsError> {
    point_jacobian(skeleton, frame, posed, joint, &posed.joint_positions[joint])
}

/// World position and Jacobian of one linear-blend-skinned point: the
/// weighted sum over joints of the point rigidly attached to each joint.
pub fn skinned_point_jacobian(
    skeleton: &Skeleton,
    frame: &FramePose,
    posed: &PosedFrame,
    weights: &[Real],
    canonical: &Vec3,
) -> Result<(Vec3, PointJacobian), KinematicsError> {
    let mut position = Vec3::zeros();
    let mut jac = PointJacobian::zeros(skeleton.joint_count());
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let attached = posed.rotation(k) * canonical + posed.joint_positions[k];
        position += attached * w;
        let part = point_jacobian(skeleton, frame, posed, k, &attached)?;
        jac.scaled_add(&part, w);
    }
    Ok((position, jac))
}
