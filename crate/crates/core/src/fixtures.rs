//! Deterministic synthetic fixtures: a whole-body kick clip for the
//! built-in humanoid, a matching strike scene with the object placed on the
//! foot's path, and a small penetration scene for the refinement stage.
//! Tests and demos share these; nothing here reads files.

use crate::kinematics::{forward_kinematics, select_contact_joint_and_frame, velocity_profile};
use crate::mpm::{BoundaryKind, MpmParams, ObjectTrajectory};
use crate::scene::{
    builtin_toy_humanoid, lattice_ball, ContactParams, DenoiserConfig, DenoiserKind, HumanSource,
    MaterialParams, MotionSequence, ObjectConfig, ObjectShape, OptimizationParams, ParticleObject,
    SceneConfig, SkinnedHuman, Skeleton, Splat,
};
use crate::{Real, Vec3};

/// Smoothstep 3u^2 - 2u^3, clamped.
fn smoothstep(u: Real) -> Real {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Value ramping from `a` to `b` as `t` crosses `[t0, t1]`.
fn ramp(t: usize, t0: usize, t1: usize, a: Real, b: Real) -> Real {
    let u = (t as Real - t0 as Real) / (t1 as Real - t0 as Real);
    a + (b - a) * smoothstep(u)
}

/// Whole-body kick clip for the 24-joint built-in humanoid: wind-up,
/// left-leg swing accelerating into the strike (speed peaks near full
/// extension), arm counter-swing, spine twist and a step forward. The left
/// foot carries the highest cumulative velocity with a single speed peak.
///
/// Per-coordinate excursions stay below 0.24 so the motion is reachable by
/// Adam at the stage-1 learning rate within the configured iteration
/// budget.
pub fn synthetic_kick_clip(frames: usize, fps: Real) -> MotionSequence {
    let mut motion = MotionSequence::rest(frames, 24, fps);
    // Frame indices scale with the clip length (designed at T = 40).
    let s = frames as Real / 40.0;
    let f = |x: Real| -> usize { (x * s).round() as usize };
    let (wind0, wind1) = (f(2.0), f(8.0));
    let (swing0, swing1) = (f(8.0), f(21.0));
    let (follow0, follow1) = (f(21.0), f(30.0));
    let (step0, step1) = (f(5.0), f(16.0));

    for t in 0..frames {
        let poses = &mut motion.joint_poses[t];
        // Left hip: wind back, then accelerate through the swing (quadratic
        // easing puts the speed peak at the swing's end), small recoil.
        let hip = if t < swing0 {
            ramp(t, wind0, wind1, 0.0, 0.08)
        } else if t < follow0 {
            let u = ((t - swing0) as Real / (swing1 - swing0) as Real).clamp(0.0, 1.0);
            0.08 + (-0.24 - 0.08) * u * u
        } else {
            ramp(t, follow0, follow1, -0.24, -0.20)
        };
        poses[1].x = hip;
        // Left knee: flex during wind-up, extend through the strike.
        let knee = if t < swing0 {
            ramp(t, wind0, wind1, 0.0, 0.20)
        } else {
            ramp(t, swing0, f(20.0), 0.20, 0.02)
        };
        poses[4].x = knee;
        // Support leg braces slightly.
        poses[2].x = ramp(t, step0, step1, 0.0, 0.08);
        poses[5].x = ramp(t, step0, step1, 0.0, 0.10);
        // Spine twist and lean.
        poses[3].y = ramp(t, f(6.0), f(18.0), 0.0, 0.10);
        poses[6].y = ramp(t, f(6.0), f(18.0), 0.0, 0.08);
        poses[6].x = ramp(t, f(6.0), f(18.0), 0.0, -0.06);
        // Arms counter-swing: right forward, left back.
        poses[17].x = ramp(t, f(5.0), f(18.0), 0.0, 0.18);
        poses[19].x = ramp(t, f(5.0), f(18.0), 0.0, 0.12);
        poses[16].x = ramp(t, f(5.0), f(18.0), 0.0, -0.15);
        poses[18].x = ramp(t, f(5.0), f(18.0), 0.0, -0.10);
        // Slight head nod.
        poses[12].x = ramp(t, f(6.0), f(18.0), 0.0, 0.06);
        // Step into the kick with a small dip.
        motion.root_translation[t] = Vec3::new(
            0.0,
            -0.03 * smoothstep((t as Real - step0 as Real) / (step1 - step0) as Real),
            ramp(t, step0, step1, 0.0, 0.10),
        );
    }
    motion
}

/// Strike-joint selection of a clip: velocity-profile argmax plus the foot
/// world position at the selected frame.
pub fn clip_strike_point(human: &SkinnedHuman, clip: &MotionSequence) -> (usize, usize, Vec3) {
    let profile = velocity_profile(&human.skeleton, clip).expect("clip has at least two frames");
    let (joint, frame) = select_contact_joint_and_frame(&profile);
    let posed = forward_kinematics(&human.skeleton, &clip.frame(frame)).expect("valid clip frame");
    (joint, frame, posed.joint_positions[joint])
}

/// A complete strike fixture: the built-in humanoid, the kick clip, and a
/// particle ball parked on the foot's peak-velocity position.
pub struct KickFixture {
    pub config: SceneConfig,
    pub human: SkinnedHuman,
    pub object: ParticleObject,
    pub reference: MotionSequence,
    /// Selection computed from the reference clip: (joint, frame).
    pub reference_strike: (usize, usize),
}

/// Builds the kick scene at reduced resolution (grid 32, 250 substeps per
/// frame) with gravity off, sized so the whole pipeline runs in seconds.
pub fn kick_fixture() -> KickFixture {
    let human = builtin_toy_humanoid();
    let frames = 40;
    let fps = 20.0;
    let reference = synthetic_kick_clip(frames, fps);
    let (joint, frame, strike) = clip_strike_point(&human, &reference);

    // Park the ball slightly past the foot's position at the extension
    // frame, along the strike direction: the swing carries the foot into
    // the ball right around the selected frame.
    let extension = forward_kinematics(&human.skeleton, &reference.frame(frame + 1))
        .expect("valid clip frame")
        .joint_positions[joint];
    let direction = (extension - strike).normalize();
    let ball_center = extension + direction * 0.13;

    let ball_radius = 0.09;
    let spacing = 0.018;
    let material = MaterialParams {
        youngs_modulus: 1e7,
        poisson_ratio: 0.45,
        density: 400.0,
        restitution: 0.6,
    };
    let splats = lattice_ball(ball_center, ball_radius, spacing, [0.85, 0.4, 0.1], 0.012, 0.9);
    let object = ParticleObject::from_splats(splats, Vec3::zeros(), spacing.powi(3), material);

    let config = SceneConfig {
        frames,
        fps,
        motion_prompt: "a person kicks the ball".to_string(),
        human: HumanSource::Builtin,
        object: ObjectConfig {
            shape: ObjectShape::Ball {
                center: [ball_center.x, ball_center.y, ball_center.z],
                radius: ball_radius,
                spacing,
            },
            initial_velocity: [0.0; 3],
            particle_volume: Some(spacing.powi(3)),
            splat_radius: 0.012,
            splat_opacity: 0.9,
            color: [0.85, 0.4, 0.1],
            material,
        },
        mpm: MpmParams {
            grid_resolution: 32,
            domain_extent: 6.0,
            grid_origin: None,
            substep_dt: 2e-4,
            substeps_per_frame: 250,
            gravity: [0.0, 0.0, 0.0],
            boundary: BoundaryKind::Sticky,
            parallel: true,
        },
        optimization: OptimizationParams {
            n_refine: 100,
            seed: 7,
            ..OptimizationParams::default()
        },
        contact: ContactParams {
            tau_contact: 0.05,
            d_contact: 0.03,
            ..ContactParams::default()
        },
        denoiser: DenoiserConfig {
            kind: DenoiserKind::Projection { reference: None },
            ..DenoiserConfig::default()
        },
    };

    KickFixture {
        config,
        human,
        object,
        reference,
        reference_strike: (joint, frame),
    }
}

/// A small constructed-penetration scene for the refinement stage: a
/// two-joint arm whose tip splats sit a known depth inside the proximity
/// shell of a static particle ball at the contact frame.
pub struct PenetrationFixture {
    pub human: SkinnedHuman,
    pub motion: MotionSequence,
    pub trajectory: ObjectTrajectory,
    pub contact_frame: usize,
    pub contact_joint: usize,
    pub d_contact: Real,
    /// Nearest splat-to-particle distance at the contact frame.
    pub initial_distance: Real,
}

pub fn penetration_fixture() -> PenetrationFixture {
    let skeleton = Skeleton {
        parent: vec![None, Some(0)],
        rest_offsets: vec![Vec3::zeros(), Vec3::new(0.3, 0.0, 0.0)],
    };
    // A small cluster of tip splats bound to the outer joint; the on-axis
    // one sets the exact nearest distance.
    let mut canonical = vec![Splat::new(Vec3::zeros(), 0.005, 1.0, [0.6, 0.6, 0.6])];
    for i in 0..6 {
        let phi = std::f64::consts::TAU * i as Real / 6.0;
        canonical.push(Splat::new(
            Vec3::new(0.0, 0.008 * phi.cos(), 0.008 * phi.sin()),
            0.005,
            1.0,
            [0.6, 0.6, 0.6],
        ));
    }
    let n = canonical.len();
    let mut weights = vec![vec![0.0, 1.0]; n];
    weights.iter_mut().for_each(|w| w[0] = 0.0);
    let human = SkinnedHuman {
        skeleton,
        canonical_splats: canonical,
        skinning_weights: weights,
    };

    // Ball of particles ahead of the arm tip; the rest pose leaves the tip
    // 10 mm from the nearest particle with d_contact = 20 mm: a 10 mm
    // penetration of the shell.
    let ball_center = Vec3::new(0.35, 0.0, 0.0);
    let particles = lattice_ball(ball_center, 0.04, 0.01, [0.8, 0.3, 0.2], 0.005, 1.0);
    let frames = 7;
    let fps = 20.0;
    let positions: Vec<Vec3> = particles.iter().map(|s| s.position).collect();
    let com = positions.iter().sum::<Vec3>() / positions.len() as Real;
    let trajectory = ObjectTrajectory {
        fps,
        positions: vec![positions; frames],
        com: vec![com; frames],
    };

    let motion = MotionSequence::rest(frames, 2, fps);
    let mut nearest = Real::INFINITY;
    let tip = Vec3::new(0.3, 0.0, 0.0);
    for splat in &human.canonical_splats {
        for p in &trajectory.positions[0] {
            nearest = nearest.min((splat.position + tip - p).norm());
        }
    }

    PenetrationFixture {
        human,
        motion,
        trajectory,
        contact_frame: 3,
        contact_joint: 1,
        d_contact: 0.02,
        initial_distance: nearest,
    }
}
