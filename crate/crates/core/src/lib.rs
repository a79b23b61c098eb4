//! Desk-scale 4D human-object interaction engine.
//!
//! The engine couples two agents under one splat-based scene representation:
//! a kinematic articulated human whose pose trajectory is the optimization
//! variable, and a deformable particle object advanced by an explicit
//! MLS-MPM simulation. A three-stage optimizer drives the human toward a
//! motion prior via score distillation, synchronizes it with the object
//! through a time-windowed attraction objective, converts the detected
//! strike into an impulsive momentum transfer and object re-simulation, and
//! finally cleans up residual interpenetration around the contact frame.
//!
//! Modules map onto the engine's subsystems:
//!
//! - [`scene`]: shared value types (splats, particles, skeletons, motion
//!   sequences, configuration) and their validation.
//! - [`kinematics`]: forward kinematics, linear blend skinning, velocity
//!   profiles, and analytic pose Jacobians.
//! - [`mpm`]: the MLS-MPM solver for the particle object.
//! - [`distill`]: diffusion noise schedule, denoiser plugin interface, and
//!   the score-distillation gradient for motion.
//! - [`interaction`]: attraction loss, contact detection, impulse response,
//!   and the masked refinement objective.
//! - [`render`]: deterministic debug splat renderer (alpha compositing).
//! - [`pipeline`]: the three-stage orchestrator and its Adam optimizer.
//! - [`io`]: file formats (config, skeleton, motion, trajectory, PLY,
//!   run reports) and loaders/exporters.
//! - [`fixtures`]: deterministic synthetic scenes used by tests and demos.

pub mod distill;
pub mod fixtures;
pub mod interaction;
pub mod io;
pub mod kinematics;
pub mod mpm;
pub mod pipeline;
pub mod render;
pub mod scene;

/// Scalar type used throughout the engine. Simulation and optimization run
/// in f64; only serialized trajectory payloads narrow to f32.
pub type Real = f64;
pub type Vec3 = nalgebra::Vector3<Real>;
pub type Mat3 = nalgebra::Matrix3<Real>;
pub type Mat4 = nalgebra::Matrix4<Real>;
