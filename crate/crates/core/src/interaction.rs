//! Human-object coupling: the windowed attraction loss and its gradient,
//! contact detection over skinned splats and object particles, the
//! restitution impulse, and the temporally masked penetration objective
//! used by the refinement stage.

use thiserror::Error;

use crate::kinematics::{
    forward_kinematics, joint_position_jacobian, skinned_point_jacobian, KinematicsError,
};
use crate::mpm::ObjectTrajectory;
use crate::scene::{ContactParams, MotionSequence, ObjectVelocityMode, Skeleton, SkinnedHuman};
use crate::{Real, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InteractionError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("motion has {motion} frames but the trajectory has {trajectory}")]
    FrameCountMismatch { motion: usize, trajectory: usize },
    #[error("contact at frame 0: no previous frame to estimate the joint velocity from")]
    ContactAtFirstFrame,
    #[error("separating contact: approach speed {v_in} is not positive")]
    SeparatingContact { v_in: Real },
    #[error("contact frame {frame} out of range for {frames} frames")]
    FrameOutOfRange { frame: usize, frames: usize },
}

/// A detected strike: where, when, and the velocity bookkeeping that feeds
/// the impulse response.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContactEvent {
    /// Contact frame t_c.
    pub frame: usize,
    /// Contact joint j_c.
    pub joint: usize,
    /// Unit contact normal, pointing from the contacting surface toward the
    /// object's center of mass.
    pub normal: Vec3,
    /// Striking joint velocity at t_c, m/s.
    pub human_velocity: Vec3,
    /// Object velocity at t_c (center of mass by default), m/s.
    pub object_velocity_pre: Vec3,
    /// Uniform velocity change `(1 + e) v_in n` applied to the object.
    pub post_velocity_delta: Vec3,
    /// Fraction of the contact joint's splats within the proximity
    /// threshold at t_c.
    pub contacting_fraction: Real,
}

impl ContactEvent {
    /// Full post-impact object velocity.
    pub fn post_velocity(&self) -> Vec3 {
        self.object_velocity_pre + self.post_velocity_delta
    }
}

/// Gaussian window weight g(t) = exp(-(t - t*)^2 / (2 sigma^2)).
fn window_weight(t: usize, t_star: usize, sigma: Real) -> Real {
    let d = t as Real - t_star as Real;
    (-d * d / (2.0 * sigma * sigma)).exp()
}

/// Frames of the attraction window: `[t* - half_window, t* + half_window]`
/// clamped to the valid range.
fn window_frames(t_star: usize, half_window: usize, frames: usize) -> std::ops::RangeInclusive<usize> {
    let lo = t_star.saturating_sub(half_window);
    let hi = (t_star + half_window).min(frames - 1);
    lo..=hi
}

/// Windowed attraction loss and its gradient with respect to every motion
/// parameter (layout: frames-major `[r | omega | theta]`).
///
/// `L = sum_w g(t) ||p_j*(t) - c_obj(t)||^2 / sum_w g(t)` over the window
/// frames; the object trajectory is treated as constant, so no gradient
/// flows into the object.
#[allow(clippy::too_many_arguments)]
pub fn attraction_loss(
    motion: &MotionSequence,
    skeleton: &Skeleton,
    trajectory: &ObjectTrajectory,
    contact_joint: usize,
    contact_frame: usize,
    sigma: Real,
    half_window: usize,
) -> Result<(Real, Vec<Real>), InteractionError> {
    let frames = motion.frame_count();
    if trajectory.frame_count() != frames {
        return Err(InteractionError::FrameCountMismatch {
            motion: frames,
            trajectory: trajectory.frame_count(),
        });
    }
    assert!(contact_frame < frames, "contact frame within the sequence");
    assert!(sigma > 0.0);

    let d = motion.frame_dim();
    let mut gradient = vec![0.0; frames * d];
    let mut weight_sum = 0.0;
    let mut weighted_residual = 0.0;
    let window = window_frames(contact_frame, half_window, frames);

    for t in window {
        let g = window_weight(t, contact_frame, sigma);
        weight_sum += g;
        let frame = motion.frame(t);
        let posed = forward_kinematics(skeleton, &frame)?;
        let residual = posed.joint_positions[contact_joint] - trajectory.com[t];
        weighted_residual += g * residual.norm_squared();
        let jac = joint_position_jacobian(skeleton, &frame, &posed, contact_joint)?;
        jac.accumulate_vjp(&residual, 2.0 * g, &mut gradient[t * d..(t + 1) * d]);
    }

    let loss = weighted_residual / weight_sum;
    let inv = 1.0 / weight_sum;
    for g in &mut gradient {
        *g *= inv;
    }
    Ok((loss, gradient))
}

/// Dominant joint of each splat: argmax of its skinning weights, ties to
/// the lowest joint index.
pub fn assign_gaussians_to_joints(human: &SkinnedHuman) -> Vec<usize> {
    human
        .skinning_weights
        .iter()
        .map(|w| {
            let mut best = 0;
            for (k, &wk) in w.iter().enumerate() {
                if wk > w[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn from_points<'a>(points: impl Iterator<Item = &'a Vec3>) -> Option<Aabb> {
        let mut min = Vec3::repeat(Real::INFINITY);
        let mut max = Vec3::repeat(Real::NEG_INFINITY);
        let mut any = false;
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
            any = true;
        }
        any.then_some(Aabb { min, max })
    }

    fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] && self.max[a] >= other.min[a])
    }
}

fn nearest_particle_distance(point: &Vec3, particles: &[Vec3]) -> Real {
    particles
        .iter()
        .map(|q| (point - q).norm())
        .fold(Real::INFINITY, Real::min)
}

/// Scans frames in increasing order for the first joint whose splats both
/// overlap the object's bounding box and have at least `tau_contact` of
/// them within `d_contact` of the nearest object particle. Joint ties at a
/// frame break by higher contacting fraction, then lower joint index.
///
/// Returns `None` when no frame qualifies. Candidates whose approach speed
/// along the contact normal is not positive (separating contact) are
/// skipped and the scan continues.
pub fn detect_contact(
    human: &SkinnedHuman,
    motion: &MotionSequence,
    trajectory: &ObjectTrajectory,
    masses: &[Real],
    params: &ContactParams,
) -> Result<Option<ContactEvent>, InteractionError> {
    let frames = motion.frame_count();
    if trajectory.frame_count() != frames {
        return Err(InteractionError::FrameCountMismatch {
            motion: frames,
            trajectory: trajectory.frame_count(),
        });
    }
    let joints = human.skeleton.joint_count();
    let dominant = assign_gaussians_to_joints(human);
    let mut joint_splats: Vec<Vec<usize>> = vec![Vec::new(); joints];
    for (i, &j) in dominant.iter().enumerate() {
        joint_splats[j].push(i);
    }

    let mut positions_prev: Option<Vec<Vec3>> = None;
    for t in 0..frames {
        let posed = forward_kinematics(&human.skeleton, &motion.frame(t))?;
        let skinned = crate::kinematics::skin_splats(human, &posed);
        let object = &trajectory.positions[t];
        let object_box = Aabb::from_points(object.iter()).expect("object has particles");

        // Best candidate this frame: (fraction, joint), higher fraction
        // first, then lower joint index.
        let mut candidate: Option<(Real, usize)> = None;
        for j in 0..joints {
            if joint_splats[j].is_empty() {
                continue;
            }
            let joint_box = Aabb::from_points(joint_splats[j].iter().map(|&i| &skinned[i]))
                .expect("joint has splats");
            if !joint_box.intersects(&object_box) {
                continue;
            }
            let near = joint_splats[j]
                .iter()
                .filter(|&&i| nearest_particle_distance(&skinned[i], object) <= params.d_contact)
                .count();
            let fraction = near as Real / joint_splats[j].len() as Real;
            if fraction >= params.tau_contact {
                let better = match candidate {
                    None => true,
                    Some((best_fraction, best_joint)) => {
                        fraction > best_fraction || (fraction == best_fraction && j < best_joint)
                    }
                };
                if better {
                    candidate = Some((fraction, j));
                }
            }
        }

        if let Some((fraction, joint)) = candidate {
            if t == 0 {
                return Err(InteractionError::ContactAtFirstFrame);
            }
            let prev = match &positions_prev {
                Some(p) => p.clone(),
                None => unreachable!("t > 0 implies a previous frame"),
            };
            let fps = motion.fps;
            let human_velocity = (posed.joint_positions[joint] - prev[joint]) * fps;

            // Contacting object particles: those within d_contact of any of
            // the contact joint's splats.
            let contacting: Vec<usize> = (0..object.len())
                .filter(|&p| {
                    joint_splats[joint]
                        .iter()
                        .any(|&i| (object[p] - skinned[i]).norm() <= params.d_contact)
                })
                .collect();
            let com = trajectory.com[t];
            let mean_contacting = if contacting.is_empty() {
                com
            } else {
                contacting.iter().map(|&p| object[p]).sum::<Vec3>() / contacting.len() as Real
            };
            let normal_raw = com - mean_contacting;
            let normal = if normal_raw.norm() > 1e-9 {
                normal_raw / normal_raw.norm()
            } else {
                // Degenerate: contacting mean coincides with the center of
                // mass; fall back to the joint-to-center direction.
                let alt = com - posed.joint_positions[joint];
                if alt.norm() > 1e-9 {
                    alt / alt.norm()
                } else {
                    positions_prev = Some(posed.joint_positions.clone());
                    continue;
                }
            };

            let object_velocity = match params.object_velocity {
                ObjectVelocityMode::CenterOfMass => (trajectory.com[t] - trajectory.com[t - 1]) * fps,
                ObjectVelocityMode::ContactingMean => {
                    if contacting.is_empty() {
                        (trajectory.com[t] - trajectory.com[t - 1]) * fps
                    } else {
                        let mut acc = Vec3::zeros();
                        let mut mass = 0.0;
                        for &p in &contacting {
                            acc += (trajectory.positions[t][p] - trajectory.positions[t - 1][p])
                                * masses[p];
                            mass += masses[p];
                        }
                        acc * (fps / mass)
                    }
                }
            };

            let v_in = (human_velocity - object_velocity).dot(&normal);
            if v_in > 0.0 {
                return Ok(Some(ContactEvent {
                    frame: t,
                    joint,
                    normal,
                    human_velocity,
                    object_velocity_pre: object_velocity,
                    post_velocity_delta: Vec3::zeros(), // filled by the caller via impulse_response
                    contacting_fraction: fraction,
                }));
            }
            // Separating: no impulse here, keep scanning.
        }
        positions_prev = Some(posed.joint_positions.clone());
    }
    Ok(None)
}

/// Restitution impulse: `v_in = (V_human - V_obj) . n`,
/// `V_post = V_obj + (1 + e) v_in n`. Mass-independent by design. Errors on
/// separating contact (`v_in <= 0`).
pub fn impulse_response(
    human_velocity: &Vec3,
    object_velocity: &Vec3,
    normal: &Vec3,
    restitution: Real,
) -> Result<Vec3, InteractionError> {
    debug_assert!((normal.norm() - 1.0).abs() < 1e-9, "normal must be unit length");
    let v_in = (human_velocity - object_velocity).dot(normal);
    if v_in <= 0.0 {
        return Err(InteractionError::SeparatingContact { v_in });
    }
    Ok(object_velocity + normal * ((1.0 + restitution) * v_in))
}

/// Completes a detected event with its impulse delta.
pub fn resolve_event(mut event: ContactEvent, restitution: Real) -> Result<ContactEvent, InteractionError> {
    let post = impulse_response(
        &event.human_velocity,
        &event.object_velocity_pre,
        &event.normal,
        restitution,
    )?;
    event.post_velocity_delta = post - event.object_velocity_pre;
    Ok(event)
}

/// Temporally masked penetration penalty around the contact frame.
///
/// For frames in `[t_c - half_window, t_c + half_window]` only, the loss is
/// the mean over the contact joint's splats of
/// `max(0, d_contact - dist(splat, nearest particle))^2`; its gradient
/// flows into the motion parameters through skinning. Frames outside the
/// window contribute exactly zero loss and zero gradient.
#[allow(clippy::too_many_arguments)]
pub fn masked_refinement_loss(
    human: &SkinnedHuman,
    motion: &MotionSequence,
    trajectory: &ObjectTrajectory,
    contact_frame: usize,
    contact_joint: usize,
    half_window: usize,
    d_contact: Real,
) -> Result<(Real, Vec<Real>), InteractionError> {
    let frames = motion.frame_count();
    if trajectory.frame_count() != frames {
        return Err(InteractionError::FrameCountMismatch {
            motion: frames,
            trajectory: trajectory.frame_count(),
        });
    }
    if contact_frame >= frames {
        return Err(InteractionError::FrameOutOfRange {
            frame: contact_frame,
            frames,
        });
    }
    let dominant = assign_gaussians_to_joints(human);
    let splats: Vec<usize> = (0..human.canonical_splats.len())
        .filter(|&i| dominant[i] == contact_joint)
        .collect();
    let d = motion.frame_dim();
    let mut gradient = vec![0.0; frames * d];
    let mut loss = 0.0;
    if splats.is_empty() {
        return Ok((loss, gradient));
    }

    for t in window_frames(contact_frame, half_window, frames) {
        let frame = motion.frame(t);
        let posed = forward_kinematics(&human.skeleton, &frame)?;
        let object = &trajectory.positions[t];
        let inv_count = 1.0 / splats.len() as Real;
        for &i in &splats {
            let (position, jac) = skinned_point_jacobian(
                &human.skeleton,
                &frame,
                &posed,
                &human.skinning_weights[i],
                &human.canonical_splats[i].position,
            )?;
            let (mut best_dist, mut best_particle) = (Real::INFINITY, 0);
            for (p, q) in object.iter().enumerate() {
                let dist = (position - q).norm();
                if dist < best_dist {
                    best_dist = dist;
                    best_particle = p;
                }
            }
            let penetration = d_contact - best_dist;
            if penetration > 0.0 {
                loss += penetration * penetration * inv_count;
                // d/dx (d_contact - |x - q|)^2 = -2 penetration (x - q)/|x - q|;
                // at dist = 0 the direction is undefined, take subgradient 0.
                if best_dist > 1e-12 {
                    let direction = (position - object[best_particle]) / best_dist;
                    jac.accumulate_vjp(
                        &direction,
                        -2.0 * penetration * inv_count,
                        &mut gradient[t * d..(t + 1) * d],
                    );
                }
            }
        }
    }
    Ok((loss, gradient))
}

/// Deepest penetration of the contact joint's splats into the `d_contact`
/// shell at one frame, in meters. Zero when nothing is inside the shell.
pub fn penetration_depth(
    human: &SkinnedHuman,
    motion: &MotionSequence,
    trajectory: &ObjectTrajectory,
    frame: usize,
    contact_joint: usize,
    d_contact: Real,
) -> Result<Real, InteractionError> {
    let dominant = assign_gaussians_to_joints(human);
    let posed = forward_kinematics(&human.skeleton, &motion.frame(frame))?;
    let skinned = crate::kinematics::skin_splats(human, &posed);
    let object = &trajectory.positions[frame];
    let mut depth: Real = 0.0;
    for (i, position) in skinned.iter().enumerate() {
        if dominant[i] == contact_joint {
            let dist = nearest_particle_distance(position, object);
            depth = depth.max(d_contact - dist);
        }
    }
    Ok(depth.max(0.0))
}
