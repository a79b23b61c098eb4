//! Three-stage trajectory optimizer: score distillation alone, distillation
//! plus windowed attraction followed by contact detection and object
//! re-simulation, then temporally masked refinement against the fixed
//! post-contact trajectory. Includes the first-order moment optimizer the
//! stages share.
//!
//! Determinism: every stage draws randomness from one seeded generator and
//! all inner operations honor their own deterministic contracts, so a fixed
//! seed reproduces runs bit for bit (wall-clock timings aside).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distill::{hmsd_gradient, Denoiser, DistillError, MotionShape, NoiseSchedule};
use crate::interaction::{
    attraction_loss, detect_contact, masked_refinement_loss, resolve_event, ContactEvent,
    InteractionError,
};
use crate::kinematics::{select_contact_joint_and_frame, velocity_profile, KinematicsError};
use crate::mpm::{resimulate_from, simulate, MpmError, ObjectTrajectory};
use crate::scene::{validate_scene, MotionSequence, ParticleObject, SceneConfig, SkinnedHuman, Violation};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("configuration is invalid: {0:?}")]
    InvalidConfig(Vec<Violation>),
    #[error("non-finite gradient component {index} in {stage} at iteration {iteration}")]
    NonFiniteGradient {
        stage: &'static str,
        iteration: usize,
        index: usize,
    },
    #[error("{stage} failed at iteration {iteration}: {source}")]
    Distill {
        stage: &'static str,
        iteration: usize,
        source: DistillError,
    },
    #[error("{stage} failed at iteration {iteration}: {source}")]
    Interaction {
        stage: &'static str,
        iteration: usize,
        source: InteractionError,
    },
    #[error("kinematics failed in {stage}: {source}")]
    Kinematics {
        stage: &'static str,
        source: KinematicsError,
    },
    #[error("simulation failed in {stage}: {source}")]
    Simulation {
        stage: &'static str,
        source: MpmError,
    },
    #[error("free trajectory has {got} frames but the scene is configured for {expected}")]
    TrajectoryFrames { got: usize, expected: usize },
}

/// A pipeline failure carrying whatever had been computed so far.
#[derive(Debug)]
pub struct PipelineFailure {
    pub error: PipelineError,
    pub partial: Box<RunReport>,
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for PipelineFailure {}

/// Adam moment buffers. One instance per optimized tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<Real>,
    second: Vec<Real>,
    step: u64,
}

pub const ADAM_BETA1: Real = 0.9;
pub const ADAM_BETA2: Real = 0.999;
pub const ADAM_EPSILON: Real = 1e-8;

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            first: vec![0.0; dim],
            second: vec![0.0; dim],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update in place. Errors on the first non-finite
/// gradient component (the caller attaches stage/iteration context).
pub fn adam_step(
    params: &mut [Real],
    grad: &[Real],
    state: &mut AdamState,
    lr: Real,
) -> Result<(), usize> {
    assert_eq!(params.len(), grad.len());
    assert_eq!(params.len(), state.first.len());
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(index);
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t);
    let bias2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.first[i] = ADAM_BETA1 * state.first[i] + (1.0 - ADAM_BETA1) * g;
        state.second[i] = ADAM_BETA2 * state.second[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.first[i] / bias1;
        let v_hat = state.second[i] / bias2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    }
    Ok(())
}

/// Loss curve and timing of one optimization stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub iterations: usize,
    pub losses: Vec<Real>,
    pub wall_seconds: Real,
    /// Present when the stage ran in a degenerate mode (e.g. skipped for
    /// lack of contact).
    pub note: Option<String>,
}

/// Everything a run produces: selection, loss curves, the contact event (or
/// its absence), the final motion and object trajectory, timing, and the
/// configuration echo.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    /// Strike selection (joint, frame) frozen after stage 1.
    pub selection: Option<(usize, usize)>,
    pub contact: Option<ContactEvent>,
    /// Why no contact/re-simulation happened, when it didn't.
    pub no_contact_reason: Option<String>,
    pub stages: Vec<StageRecord>,
    pub final_motion: MotionSequence,
    pub final_trajectory: ObjectTrajectory,
    pub config: SceneConfig,
}

impl RunReport {
    /// Copy with wall-clock timings zeroed; this is the part of a report
    /// that is reproducible bit for bit under a fixed seed.
    pub fn deterministic_view(&self) -> RunReport {
        let mut copy = self.clone();
        for stage in &mut copy.stages {
            stage.wall_seconds = 0.0;
        }
        copy
    }
}

/// Zeroes the 6D-orientation block of a frames-major gradient.
fn mask_orientation(grad: &mut [Real], shape: MotionShape) {
    let d = shape.frame_dim();
    for f in 0..shape.frames {
        for i in 3..9 {
            grad[f * d + i] = 0.0;
        }
    }
}

/// Shared state threaded through the stages: config, assets, schedule,
/// and the run's seeded generator.
pub struct StageContext<'a> {
    config: &'a SceneConfig,
    human: &'a SkinnedHuman,
    denoiser: &'a dyn Denoiser,
    schedule: NoiseSchedule,
    shape: MotionShape,
    rng: ChaCha8Rng,
}

impl<'a> StageContext<'a> {
    pub fn new(config: &'a SceneConfig, human: &'a SkinnedHuman, denoiser: &'a dyn Denoiser) -> Self {
        let schedule = NoiseSchedule::linear_beta(
            config.denoiser.schedule_steps,
            config.denoiser.beta_start,
            config.denoiser.beta_end,
        );
        let shape = MotionShape {
            frames: config.frames,
            joints: human.skeleton.joint_count(),
        };
        Self {
            config,
            human,
            denoiser,
            schedule,
            shape,
            rng: ChaCha8Rng::seed_from_u64(config.optimization.seed),
        }
    }

    fn hmsd(
        &mut self,
        flat: &[Real],
        stage: &'static str,
        iteration: usize,
    ) -> Result<crate::distill::HmsdGradient, PipelineError> {
        let opt = &self.config.optimization;
        hmsd_gradient(
            flat,
            self.shape,
            self.denoiser,
            &self.schedule,
            opt.hmsd_t_min,
            opt.hmsd_t_max,
            &self.config.motion_prompt,
            self.config.denoiser.guidance_scale,
            self.config.denoiser.samples,
            &mut self.rng,
        )
        .map_err(|source| PipelineError::Distill {
            stage,
            iteration,
            source,
        })
    }
}

fn finish_adam(
    result: Result<(), usize>,
    stage: &'static str,
    iteration: usize,
) -> Result<(), PipelineError> {
    result.map_err(|index| PipelineError::NonFiniteGradient {
        stage,
        iteration,
        index,
    })
}

/// Stage 1: distillation-only optimization from the rest motion.
pub fn stage1_init_motion(
    ctx: &mut StageContext<'_>,
) -> Result<(MotionSequence, StageRecord), PipelineError> {
    let start = std::time::Instant::now();
    let opt = &ctx.config.optimization;
    let motion = MotionSequence::rest(ctx.shape.frames, ctx.shape.joints, ctx.config.fps);
    let mut flat = motion.flatten();
    let mut adam = AdamState::new(flat.len());
    let mut losses = Vec::with_capacity(opt.n_init);
    for iteration in 0..opt.n_init {
        let sample = ctx.hmsd(&flat, "stage 1", iteration)?;
        let mut grad = sample.gradient;
        if opt.freeze_orientation {
            mask_orientation(&mut grad, ctx.shape);
        }
        finish_adam(
            adam_step(&mut flat, &grad, &mut adam, opt.lr_stage12),
            "stage 1",
            iteration,
        )?;
        losses.push(sample.surrogate_loss);
    }
    let motion = MotionSequence::from_flat(&flat, ctx.shape.frames, ctx.shape.joints, ctx.config.fps);
    let record = StageRecord {
        name: "distillation".to_string(),
        iterations: opt.n_init,
        losses,
        wall_seconds: start.elapsed().as_secs_f64(),
        note: None,
    };
    Ok((motion, record))
}

/// Outcome of stage 2: coordinated motion, the contact event if one was
/// found (with the impulse applied), and the object trajectory to carry
/// forward (spliced after contact, otherwise the free one).
pub struct Stage2Outcome {
    pub motion: MotionSequence,
    pub event: Option<ContactEvent>,
    pub trajectory: ObjectTrajectory,
    pub record: StageRecord,
    pub no_contact_reason: Option<String>,
}

/// Stage 2: distillation plus windowed attraction toward the object's
/// center of mass, then contact detection, impulse, and re-simulation.
/// The strike selection is frozen from the stage-1 motion.
pub fn stage2_coordinate(
    ctx: &mut StageContext<'_>,
    motion: MotionSequence,
    object: &ParticleObject,
    free_trajectory: &ObjectTrajectory,
    selection: (usize, usize),
) -> Result<Stage2Outcome, PipelineError> {
    let start = std::time::Instant::now();
    let opt = ctx.config.optimization.clone();
    let (joint, frame) = selection;
    let half_window = (3.0 * opt.sigma_window).ceil() as usize;

    let mut flat = motion.flatten();
    let mut adam = AdamState::new(flat.len());
    let mut losses = Vec::with_capacity(opt.n_sync);
    for iteration in 0..opt.n_sync {
        let sample = ctx.hmsd(&flat, "stage 2", iteration)?;
        let current =
            MotionSequence::from_flat(&flat, ctx.shape.frames, ctx.shape.joints, ctx.config.fps);
        let (attr_loss, attr_grad) = attraction_loss(
            &current,
            &ctx.human.skeleton,
            free_trajectory,
            joint,
            frame,
            opt.sigma_window,
            half_window,
        )
        .map_err(|source| PipelineError::Interaction {
            stage: "stage 2",
            iteration,
            source,
        })?;
        let mut grad: Vec<Real> = sample
            .gradient
            .iter()
            .zip(&attr_grad)
            .map(|(h, a)| opt.lambda_hmsd * h + opt.lambda_attr * a)
            .collect();
        if opt.freeze_orientation {
            mask_orientation(&mut grad, ctx.shape);
        }
        finish_adam(
            adam_step(&mut flat, &grad, &mut adam, opt.lr_stage12),
            "stage 2",
            iteration,
        )?;
        losses.push(opt.lambda_hmsd * sample.surrogate_loss + opt.lambda_attr * attr_loss);
    }
    let motion = MotionSequence::from_flat(&flat, ctx.shape.frames, ctx.shape.joints, ctx.config.fps);

    let mut event = None;
    let mut trajectory = free_trajectory.clone();
    let mut no_contact_reason = None;
    if ctx.config.contact.enabled {
        let detected = detect_contact(
            ctx.human,
            &motion,
            free_trajectory,
            &object.masses,
            &ctx.config.contact,
        )
        .map_err(|source| PipelineError::Interaction {
            stage: "stage 2 contact scan",
            iteration: opt.n_sync,
            source,
        })?;
        match detected {
            Some(raw) => {
                let resolved = resolve_event(raw, object.material.restitution).map_err(|source| {
                    PipelineError::Interaction {
                        stage: "stage 2 impulse",
                        iteration: opt.n_sync,
                        source,
                    }
                })?;
                trajectory = resimulate_from(
                    free_trajectory,
                    object,
                    &ctx.config.mpm,
                    resolved.frame,
                    resolved.post_velocity_delta,
                )
                .map_err(|source| PipelineError::Simulation {
                    stage: "stage 2 re-simulation",
                    source,
                })?;
                event = Some(resolved);
            }
            None => {
                no_contact_reason = Some("no frame satisfied the contact conditions".to_string());
            }
        }
    } else {
        no_contact_reason = Some("contact detection disabled in configuration".to_string());
    }

    let record = StageRecord {
        name: "coordination".to_string(),
        iterations: opt.n_sync,
        losses,
        wall_seconds: start.elapsed().as_secs_f64(),
        note: no_contact_reason.clone(),
    };
    Ok(Stage2Outcome {
        motion,
        event,
        trajectory,
        record,
        no_contact_reason,
    })
}

/// Stage 3: temporally masked penetration refinement against the fixed
/// trajectory, optionally keeping the weighted distillation prior active.
pub fn stage3_refine(
    ctx: &mut StageContext<'_>,
    motion: MotionSequence,
    trajectory: &ObjectTrajectory,
    event: &ContactEvent,
) -> Result<(MotionSequence, StageRecord), PipelineError> {
    let start = std::time::Instant::now();
    let opt = ctx.config.optimization.clone();
    let mut flat = motion.flatten();
    let mut adam = AdamState::new(flat.len());
    let mut losses = Vec::with_capacity(opt.n_refine);
    for iteration in 0..opt.n_refine {
        let current =
            MotionSequence::from_flat(&flat, ctx.shape.frames, ctx.shape.joints, ctx.config.fps);
        let (pen_loss, pen_grad) = masked_refinement_loss(
            ctx.human,
            &current,
            trajectory,
            event.frame,
            event.joint,
            opt.refine_half_window,
            ctx.config.contact.d_contact,
        )
        .map_err(|source| PipelineError::Interaction {
            stage: "stage 3",
            iteration,
            source,
        })?;
        let mut grad = pen_grad;
        let mut loss = pen_loss;
        if opt.stage3_use_prior {
            let sample = ctx.hmsd(&flat, "stage 3", iteration)?;
            for (g, h) in grad.iter_mut().zip(&sample.gradient) {
                *g += opt.lambda_hmsd * h;
            }
            loss += opt.lambda_hmsd * sample.surrogate_loss;
        }
        if opt.freeze_orientation {
            mask_orientation(&mut grad, ctx.shape);
        }
        finish_adam(
            adam_step(&mut flat, &grad, &mut adam, opt.lr_stage3),
            "stage 3",
            iteration,
        )?;
        losses.push(loss);
    }
    let motion = MotionSequence::from_flat(&flat, ctx.shape.frames, ctx.shape.joints, ctx.config.fps);
    let record = StageRecord {
        name: "refinement".to_string(),
        iterations: opt.n_refine,
        losses,
        wall_seconds: start.elapsed().as_secs_f64(),
        note: None,
    };
    Ok((motion, record))
}

/// Runs the full pipeline: free-motion simulation, the three optimization
/// stages, contact handling, and report assembly. Deterministic for a
/// given seed (timings aside). On error the partial report is returned
/// alongside the failure.
pub fn run_pipeline(
    config: &SceneConfig,
    human: &SkinnedHuman,
    object: &ParticleObject,
    denoiser: &dyn Denoiser,
) -> Result<RunReport, Box<PipelineFailure>> {
    let violations = validate_scene(config);
    if !violations.is_empty() {
        return Err(Box::new(PipelineFailure {
            error: PipelineError::InvalidConfig(violations),
            partial: Box::new(empty_report(config, human, object)),
        }));
    }
    let free_trajectory = simulate(object, &config.mpm, config.frames, None).map_err(|source| {
        Box::new(PipelineFailure {
            error: PipelineError::Simulation {
                stage: "free-motion simulation",
                source,
            },
            partial: Box::new(empty_report(config, human, object)),
        })
    })?;
    run_pipeline_with_trajectory(config, human, object, denoiser, free_trajectory)
}

fn empty_report(config: &SceneConfig, human: &SkinnedHuman, object: &ParticleObject) -> RunReport {
    RunReport {
        seed: config.optimization.seed,
        selection: None,
        contact: None,
        no_contact_reason: None,
        stages: Vec::new(),
        final_motion: MotionSequence::rest(config.frames, human.skeleton.joint_count(), config.fps),
        final_trajectory: ObjectTrajectory {
            fps: config.mpm.fps(),
            positions: vec![object.positions()],
            com: vec![object.center_of_mass()],
        },
        config: config.clone(),
    }
}

/// The optimization stages against an existing free-motion trajectory
/// (stage 1, selection, stage 2 with contact handling, stage 3).
pub fn run_pipeline_with_trajectory(
    config: &SceneConfig,
    human: &SkinnedHuman,
    object: &ParticleObject,
    denoiser: &dyn Denoiser,
    free_trajectory: ObjectTrajectory,
) -> Result<RunReport, Box<PipelineFailure>> {
    let mut report = empty_report(config, human, object);
    let fail = |error: PipelineError, partial: &RunReport| {
        Box::new(PipelineFailure {
            error,
            partial: Box::new(partial.clone()),
        })
    };

    let violations = validate_scene(config);
    if !violations.is_empty() {
        let err = PipelineError::InvalidConfig(violations);
        return Err(fail(err, &report));
    }
    if free_trajectory.frame_count() != config.frames {
        let err = PipelineError::TrajectoryFrames {
            got: free_trajectory.frame_count(),
            expected: config.frames,
        };
        return Err(fail(err, &report));
    }
    report.final_trajectory = free_trajectory.clone();

    let mut ctx = StageContext::new(config, human, denoiser);

    // Stage 1: distillation only.
    let (motion1, record1) = match stage1_init_motion(&mut ctx) {
        Ok(v) => v,
        Err(e) => return Err(fail(e, &report)),
    };
    report.stages.push(record1);
    report.final_motion = motion1.clone();

    // Strike selection is frozen from the stage-1 motion.
    let profile = velocity_profile(&human.skeleton, &motion1).map_err(|source| {
        fail(
            PipelineError::Kinematics {
                stage: "selection",
                source,
            },
            &report,
        )
    })?;
    let selection = select_contact_joint_and_frame(&profile);
    report.selection = Some(selection);

    // Stage 2: coordination, contact, re-simulation.
    let outcome = match stage2_coordinate(&mut ctx, motion1, object, &free_trajectory, selection) {
        Ok(v) => v,
        Err(e) => return Err(fail(e, &report)),
    };
    report.stages.push(outcome.record.clone());
    report.final_motion = outcome.motion.clone();
    report.final_trajectory = outcome.trajectory.clone();
    report.contact = outcome.event.clone();
    report.no_contact_reason = outcome.no_contact_reason.clone();

    // Stage 3: masked refinement (skipped without a contact event).
    match &outcome.event {
        Some(event) => {
            let (motion3, record3) =
                match stage3_refine(&mut ctx, outcome.motion, &outcome.trajectory, event) {
                    Ok(v) => v,
                    Err(e) => return Err(fail(e, &report)),
                };
            report.stages.push(record3);
            report.final_motion = motion3;
        }
        None => {
            report.stages.push(StageRecord {
                name: "refinement".to_string(),
                iterations: 0,
                losses: Vec::new(),
                wall_seconds: 0.0,
                note: Some("skipped: no contact event".to_string()),
            });
        }
    }

    Ok(report)
}
