//! Forward kinematics, linear blend skinning, velocity profiles, contact
//! joint/frame selection, and analytic pose Jacobians.
//!
//! Pose composition order is fixed as translate-then-rotate per joint,
//! parent to child: `G_j = G_parent * T(rest_offset_j) * Rot(theta_j)`,
//! with the root's parent transform being `T(r) * R6(omega)`. A joint's own
//! rotation therefore moves its children but not its own position.

mod jacobian;
pub mod rotation;

pub use jacobian::{joint_position_jacobian, point_jacobian, skinned_point_jacobian, PointJacobian};
pub use rotation::{axis_angle_to_matrix, axis_angle_with_jacobian, rot6d_to_matrix, rot6d_with_jacobian};

use thiserror::Error;

use crate::scene::{FramePose, MotionSequence, Skeleton, SkinnedHuman};
use crate::{Mat3, Mat4, Real, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("degenerate 6D rotation: {0}")]
    DegenerateRotation(String),
    #[error("motion has {0} frame(s); at least 2 are required")]
    InsufficientFrames(usize),
    #[error("frame carries {got} joint rotations but the skeleton has {expected} joints")]
    JointCountMismatch { got: usize, expected: usize },
    #[error("joint index {joint} out of range for {joints} joints")]
    JointOutOfRange { joint: usize, joints: usize },
}

/// World-space rigid transforms and positions of every joint at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedFrame {
    /// Per-joint 4x4 rigid transform, world space.
    pub joint_transforms: Vec<Mat4>,
    /// Per-joint world position (the transform's translation part).
    pub joint_positions: Vec<Vec3>,
}

impl PosedFrame {
    pub fn rotation(&self, joint: usize) -> Mat3 {
        self.joint_transforms[joint].fixed_view::<3, 3>(0, 0).into()
    }
}

fn rigid(rotation: &Mat3, translation: &Vec3) -> Mat4 {
    let mut m = Mat4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(translation);
    m
}

/// Evaluates the pose chain for one motion frame. Joint 0's transform is
/// the root translation composed with the global orientation, then the
/// uniform per-joint rule applies down the tree.
pub fn forward_kinematics(skeleton: &Skeleton, frame: &FramePose) -> Result<PosedFrame, KinematicsError> {
    let joints = skeleton.joint_count();
    if frame.joint_rotations.len() != joints {
        return Err(KinematicsError::JointCountMismatch {
            got: frame.joint_rotations.len(),
            expected: joints,
        });
    }
    let root_rotation = rot6d_to_matrix(&frame.global_orientation)?;
    let root_base = rigid(&root_rotation, &frame.root_translation);

    let mut transforms = Vec::with_capacity(joints);
    let mut positions = Vec::with_capacity(joints);
    for j in 0..joints {
        let parent = match skeleton.parent[j] {
            Some(p) => transforms[p],
            None => root_base,
        };
        let local = rigid(
            &axis_angle_to_matrix(&frame.joint_rotations[j]),
            &skeleton.rest_offsets[j],
        );
        let g: Mat4 = parent * local;
        positions.push(g.fixed_view::<3, 1>(0, 3).into());
        transforms.push(g);
    }
    Ok(PosedFrame {
        joint_transforms: transforms,
        joint_positions: positions,
    })
}

/// Linear blend skinning: each canonical splat position is deformed by the
/// weighted sum of the per-joint transforms, in homogeneous coordinates.
pub fn skin_splats(human: &SkinnedHuman, posed: &PosedFrame) -> Vec<Vec3> {
    let parts: Vec<(Mat3, Vec3)> = posed
        .joint_transforms
        .iter()
        .map(|g| (g.fixed_view::<3, 3>(0, 0).into(), g.fixed_view::<3, 1>(0, 3).into()))
        .collect();
    human.canonical_splats
        .iter()
        .zip(&human.skinning_weights)
        .map(|(splat, weights)| {
            let mut out = Vec3::zeros();
            for (k, &w) in weights.iter().enumerate() {
                if w != 0.0 {
                    let (r, t) = &parts[k];
                    out += (r * splat.position + t) * w;
                }
            }
            out
        })
        .collect()
}

/// Per-joint, per-frame-pair speeds in meters per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityProfile {
    /// `speeds[j][t] = ||p_j(t+1) - p_j(t)||` for `t` in `[0, T-2]`.
    pub speeds: Vec<Vec<Real>>,
}

impl VelocityProfile {
    pub fn joint_count(&self) -> usize {
        self.speeds.len()
    }

    pub fn cumulative(&self, joint: usize) -> Real {
        self.speeds[joint].iter().sum()
    }
}

/// Builds the velocity profile of a motion by evaluating forward kinematics
/// per frame and differencing joint positions.
pub fn velocity_profile(
    skeleton: &Skeleton,
    motion: &MotionSequence,
) -> Result<VelocityProfile, KinematicsError> {
    let frames = motion.frame_count();
    if frames < 2 {
        return Err(KinematicsError::InsufficientFrames(frames));
    }
    let joints = skeleton.joint_count();
    let mut positions = Vec::with_capacity(frames);
    for t in 0..frames {
        positions.push(forward_kinematics(skeleton, &motion.frame(t))?.joint_positions);
    }
    let mut speeds = vec![vec![0.0; frames - 1]; joints];
    for j in 0..joints {
        for t in 0..frames - 1 {
            speeds[j][t] = (positions[t + 1][j] - positions[t][j]).norm();
        }
    }
    Ok(VelocityProfile { speeds })
}

/// Picks the contact joint as the one with the highest cumulative speed and
/// the contact frame as that joint's peak. Ties break to the lowest joint
/// index, then the earliest frame.
pub fn select_contact_joint_and_frame(profile: &VelocityProfile) -> (usize, usize) {
    assert!(
        !profile.speeds.is_empty() && !profile.speeds[0].is_empty(),
        "velocity profile must be non-empty"
    );
    let mut best_joint = 0;
    let mut best_total = profile.cumulative(0);
    for j in 1..profile.joint_count() {
        let total = profile.cumulative(j);
        if total > best_total {
            best_total = total;
            best_joint = j;
        }
    }
    let row = &profile.speeds[best_joint];
    let mut best_frame = 0;
    for (t, &v) in row.iter().enumerate() {
        if v > row[best_frame] {
            best_frame = t;
        }
    }
    (best_joint, best_frame)
}
