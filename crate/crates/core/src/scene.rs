//! Core scene types shared by every subsystem: splats, the particle object,
//! the skinned human, motion sequences, and the run configuration.
//!
//! All types here are immutable value data after construction and safe to
//! share read-only across threads. Invariants are checked by
//! [`validate_scene`] (and the per-type `validate` helpers it delegates to),
//! which reports violations as data rather than failing.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::mpm::MpmParams;
use crate::{Mat3, Real, Vec3};

/// One isotropic Gaussian splat: position, radius (isotropic stand-in for a
/// full covariance), opacity, and a constant RGB color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splat {
    pub position: Vec3,
    /// Isotropic extent in meters. Must be positive.
    pub radius: Real,
    /// Opacity in [0, 1].
    pub opacity: Real,
    /// RGB color, each channel in [0, 1].
    pub color: [Real; 3],
}

impl Splat {
    pub fn new(position: Vec3, radius: Real, opacity: Real, color: [Real; 3]) -> Self {
        Self {
            position,
            radius,
            opacity,
            color,
        }
    }
}

/// Hyperelastic material description plus the restitution coefficient used
/// for impulsive contact response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialParams {
    /// Young's modulus E in pascals.
    pub youngs_modulus: Real,
    /// Poisson ratio in (0, 0.5); the incompressible limit is excluded.
    pub poisson_ratio: Real,
    /// Mass density in kg/m^3.
    pub density: Real,
    /// Coefficient of restitution e in [0, 1].
    pub restitution: Real,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            youngs_modulus: 1e7,
            poisson_ratio: 0.45,
            density: 1000.0,
            restitution: 0.6,
        }
    }
}

impl MaterialParams {
    /// Lamé parameters (mu, lambda) from E and nu.
    pub fn lame(&self) -> (Real, Real) {
        let e = self.youngs_modulus;
        let nu = self.poisson_ratio;
        let mu = e / (2.0 * (1.0 + nu));
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        (mu, lambda)
    }
}

/// The physical agent: a particle cloud with per-particle kinematic and
/// material state. At construction every deformation gradient is identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleObject {
    pub splats: Vec<Splat>,
    /// Per-particle velocity in m/s.
    pub velocities: Vec<Vec3>,
    /// Per-particle mass in kg, strictly positive.
    pub masses: Vec<Real>,
    /// Per-particle rest volume in m^3, strictly positive.
    pub volumes: Vec<Real>,
    /// Per-particle deformation gradient F.
    pub deformation_gradients: Vec<Mat3>,
    pub material: MaterialParams,
}

impl ParticleObject {
    /// Builds an object from splats with uniform velocity and per-particle
    /// volume; masses follow from the material density.
    pub fn from_splats(
        splats: Vec<Splat>,
        velocity: Vec3,
        particle_volume: Real,
        material: MaterialParams,
    ) -> Self {
        let n = splats.len();
        let mass = material.density * particle_volume;
        Self {
            splats,
            velocities: vec![velocity; n],
            masses: vec![mass; n],
            volumes: vec![particle_volume; n],
            deformation_gradients: vec![Mat3::identity(); n],
            material,
        }
    }

    pub fn particle_count(&self) -> usize {
        self.splats.len()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.splats.iter().map(|s| s.position).collect()
    }

    /// Mass-weighted center of mass.
    pub fn center_of_mass(&self) -> Vec3 {
        let mut acc = Vec3::zeros();
        let mut total = 0.0;
        for (s, &m) in self.splats.iter().zip(&self.masses) {
            acc += s.position * m;
            total += m;
        }
        acc / total
    }
}

/// Articulated skeleton: a tree of joints given by parent indices and rest
/// offsets relative to the parent. Joint 0 is the root; every non-root
/// parent index must be smaller than the joint's own index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    /// `parent[j]` is `None` for the root, `Some(k)` with `k < j` otherwise.
    pub parent: Vec<Option<usize>>,
    /// Offset of each joint relative to its parent frame, in meters. The
    /// root's offset is relative to the translated/oriented root base.
    pub rest_offsets: Vec<Vec3>,
}

impl Skeleton {
    pub fn joint_count(&self) -> usize {
        self.parent.len()
    }

    /// Chain of joints from the root down to `joint`, inclusive.
    pub fn chain_to(&self, joint: usize) -> Vec<usize> {
        let mut chain = vec![joint];
        let mut j = joint;
        while let Some(p) = self.parent[j] {
            chain.push(p);
            j = p;
        }
        chain.reverse();
        chain
    }
}

/// The semantic agent: canonical splats bound to a skeleton by per-splat
/// skinning weights (each weight vector is non-negative and sums to one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinnedHuman {
    pub skeleton: Skeleton,
    pub canonical_splats: Vec<Splat>,
    /// `skinning_weights[i][k]` associates splat `i` with joint `k`.
    pub skinning_weights: Vec<Vec<Real>>,
}

/// Per-frame pose parameters: root translation, 6D global orientation, and
/// per-joint axis-angle rotations. This is the optimization variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence {
    pub fps: Real,
    /// Per-frame root translation r^t.
    pub root_translation: Vec<Vec3>,
    /// Per-frame global orientation in the 6D rotation representation.
    pub global_orientation: Vec<[Real; 6]>,
    /// Per-frame, per-joint axis-angle rotations (J entries per frame).
    pub joint_poses: Vec<Vec<Vec3>>,
}

/// The 6D encoding of the identity rotation.
pub const IDENTITY_ROT6D: [Real; 6] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

/// One frame of a motion sequence, copied out for kinematic evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePose {
    pub root_translation: Vec3,
    pub global_orientation: [Real; 6],
    pub joint_rotations: Vec<Vec3>,
}

impl MotionSequence {
    /// A rest motion: zero translation, identity orientation, zero joint
    /// rotations. This is the stage-1 initialization.
    pub fn rest(frame_count: usize, joint_count: usize, fps: Real) -> Self {
        Self {
            fps,
            root_translation: vec![Vec3::zeros(); frame_count],
            global_orientation: vec![IDENTITY_ROT6D; frame_count],
            joint_poses: vec![vec![Vec3::zeros(); joint_count]; frame_count],
        }
    }

    pub fn frame_count(&self) -> usize {
        self.root_translation.len()
    }

    pub fn joint_count(&self) -> usize {
        self.joint_poses.first().map_or(0, |f| f.len())
    }

    /// Per-frame parameter dimension D = 3 + 6 + 3J.
    pub fn frame_dim(&self) -> usize {
        3 + 6 + 3 * self.joint_count()
    }

    pub fn frame(&self, t: usize) -> FramePose {
        FramePose {
            root_translation: self.root_translation[t],
            global_orientation: self.global_orientation[t],
            joint_rotations: self.joint_poses[t].clone(),
        }
    }

    /// Flattens to a single vector, frames-major, each frame laid out as
    /// `[r | omega | theta_0 .. theta_{J-1}]`. This ordering is the wire
    /// format used by denoisers and serialized motion tensors.
    pub fn flatten(&self) -> Vec<Real> {
        let t = self.frame_count();
        let d = self.frame_dim();
        let mut out = Vec::with_capacity(t * d);
        for f in 0..t {
            out.extend_from_slice(self.root_translation[f].as_slice());
            out.extend_from_slice(&self.global_orientation[f]);
            for rot in &self.joint_poses[f] {
                out.extend_from_slice(rot.as_slice());
            }
        }
        out
    }

    /// Inverse of [`MotionSequence::flatten`].
    pub fn from_flat(data: &[Real], frame_count: usize, joint_count: usize, fps: Real) -> Self {
        let d = 3 + 6 + 3 * joint_count;
        assert_eq!(
            data.len(),
            frame_count * d,
            "flat motion length {} does not match T={} J={}",
            data.len(),
            frame_count,
            joint_count
        );
        let mut motion = MotionSequence::rest(frame_count, joint_count, fps);
        for f in 0..frame_count {
            let base = f * d;
            motion.root_translation[f] = Vec3::from_column_slice(&data[base..base + 3]);
            motion.global_orientation[f].copy_from_slice(&data[base + 3..base + 9]);
            for j in 0..joint_count {
                let o = base + 9 + 3 * j;
                motion.joint_poses[f][j] = Vec3::from_column_slice(&data[o..o + 3]);
            }
        }
        motion
    }
}

/// Contact detection thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactParams {
    /// Minimum fraction of the candidate joint's splats that must lie within
    /// `d_contact` of the object for a contact to register.
    pub tau_contact: Real,
    /// Proximity threshold in meters.
    pub d_contact: Real,
    /// Disables contact detection and re-simulation entirely when false
    /// (the object then follows its free-motion trajectory throughout).
    pub enabled: bool,
    /// Which velocity stands in for the object at impact: the center-of-mass
    /// velocity or the mean velocity of the contacting particles.
    pub object_velocity: ObjectVelocityMode,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            tau_contact: 0.05,
            d_contact: 0.01,
            enabled: true,
            object_velocity: ObjectVelocityMode::CenterOfMass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectVelocityMode {
    CenterOfMass,
    ContactingMean,
}

/// Optimization schedule and hyperparameters for the three stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizationParams {
    /// Stage-1 iterations (score distillation only).
    pub n_init: usize,
    /// Stage-2 iterations (distillation + attraction).
    pub n_sync: usize,
    /// Stage-3 iterations (masked refinement).
    pub n_refine: usize,
    pub lambda_hmsd: Real,
    pub lambda_attr: Real,
    /// Standard deviation, in frames, of the attraction window weighting.
    pub sigma_window: Real,
    /// Half width, in frames, of the stage-3 temporal mask.
    pub refine_half_window: usize,
    /// Learning rate for stages 1 and 2.
    pub lr_stage12: Real,
    /// Learning rate for stage 3.
    pub lr_stage3: Real,
    /// Inclusive diffusion-timestep sampling range for the distillation
    /// gradient.
    pub hmsd_t_min: usize,
    pub hmsd_t_max: usize,
    pub seed: u64,
    /// When true, the 6D global orientation is excluded from optimization.
    pub freeze_orientation: bool,
    /// When true, stage 3 keeps the weighted distillation term alongside the
    /// masked refinement objective.
    pub stage3_use_prior: bool,
}

impl Default for OptimizationParams {
    fn default() -> Self {
        Self {
            n_init: 100,
            n_sync: 200,
            n_refine: 3000,
            lambda_hmsd: 10.0,
            lambda_attr: 1.0,
            sigma_window: 2.0,
            refine_half_window: 1,
            lr_stage12: 0.005,
            lr_stage3: 0.001,
            hmsd_t_min: 0,
            hmsd_t_max: 100,
            seed: 0,
            freeze_orientation: false,
            stage3_use_prior: true,
        }
    }
}

/// Where the human comes from: the built-in humanoid or external files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum HumanSource {
    Builtin,
    Files {
        skeleton: PathBuf,
        /// ASCII PLY holding canonical splat positions (and optional colors).
        splats: PathBuf,
        /// Optional whitespace-separated weight rows (one per splat, J
        /// columns). When absent, each splat is bound one-hot to its nearest
        /// joint in the rest pose.
        weights: Option<PathBuf>,
        #[serde(default = "default_splat_radius")]
        splat_radius: Real,
        #[serde(default = "default_splat_opacity")]
        splat_opacity: Real,
    },
}

/// Where the object particle cloud comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ObjectShape {
    /// ASCII PLY point cloud.
    Ply { path: PathBuf },
    /// Deterministic lattice-sampled ball, for fixtures and demos.
    Ball {
        center: [Real; 3],
        radius: Real,
        /// Lattice spacing in meters; also sets the per-particle volume
        /// (spacing^3) unless `particle_volume` overrides it.
        spacing: Real,
    },
}

fn default_splat_radius() -> Real {
    0.02
}

fn default_splat_opacity() -> Real {
    0.8
}

/// Object description: shape source plus material and splat appearance.
/// On disk this is one flat `[object]` table whose `source` key selects
/// which shape fields apply; every field is individually optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObjectConfigRepr", into = "ObjectConfigRepr")]
pub struct ObjectConfig {
    pub shape: ObjectShape,
    pub initial_velocity: [Real; 3],
    /// Per-particle rest volume. When absent it is estimated as the shape's
    /// bounding-box volume divided by the particle count (lattice spacing^3
    /// for balls).
    pub particle_volume: Option<Real>,
    pub splat_radius: Real,
    pub splat_opacity: Real,
    pub color: [Real; 3],
    pub material: MaterialParams,
}

/// File-schema form of [`ObjectConfig`]: a flat table with defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct ObjectConfigRepr {
    /// "ball" or "ply".
    source: String,
    path: Option<PathBuf>,
    center: [Real; 3],
    radius: Real,
    spacing: Real,
    initial_velocity: [Real; 3],
    particle_volume: Option<Real>,
    splat_radius: Real,
    splat_opacity: Real,
    color: [Real; 3],
    material: MaterialParams,
}

impl Default for ObjectConfigRepr {
    fn default() -> Self {
        ObjectConfigRepr::from(ObjectConfig::default())
    }
}

impl TryFrom<ObjectConfigRepr> for ObjectConfig {
    type Error = String;

    fn try_from(r: ObjectConfigRepr) -> Result<Self, String> {
        let shape = match r.source.as_str() {
            "ball" => ObjectShape::Ball {
                center: r.center,
                radius: r.radius,
                spacing: r.spacing,
            },
            "ply" => ObjectShape::Ply {
                path: r.path.ok_or("object.path is required when source = \"ply\"")?,
            },
            other => return Err(format!("unknown object source '{other}' (expected \"ball\" or \"ply\")")),
        };
        Ok(ObjectConfig {
            shape,
            initial_velocity: r.initial_velocity,
            particle_volume: r.particle_volume,
            splat_radius: r.splat_radius,
            splat_opacity: r.splat_opacity,
            color: r.color,
            material: r.material,
        })
    }
}

impl From<ObjectConfig> for ObjectConfigRepr {
    fn from(c: ObjectConfig) -> Self {
        let default_ball = match ObjectConfig::default().shape {
            ObjectShape::Ball {
                center,
                radius,
                spacing,
            } => (center, radius, spacing),
            ObjectShape::Ply { .. } => unreachable!("default object is a ball"),
        };
        let (source, path, center, radius, spacing) = match c.shape {
            ObjectShape::Ball {
                center,
                radius,
                spacing,
            } => ("ball".to_string(), None, center, radius, spacing),
            ObjectShape::Ply { path } => (
                "ply".to_string(),
                Some(path),
                default_ball.0,
                default_ball.1,
                default_ball.2,
            ),
        };
        ObjectConfigRepr {
            source,
            path,
            center,
            radius,
            spacing,
            initial_velocity: c.initial_velocity,
            particle_volume: c.particle_volume,
            splat_radius: c.splat_radius,
            splat_opacity: c.splat_opacity,
            color: c.color,
            material: c.material,
        }
    }
}

fn default_object_color() -> [Real; 3] {
    [0.85, 0.4, 0.1]
}

impl Default for ObjectConfig {
    fn default() -> Self {
        Self {
            shape: ObjectShape::Ball {
                center: [0.0, 1.0, 0.0],
                radius: 0.08,
                spacing: 0.02,
            },
            initial_velocity: [0.0; 3],
            particle_volume: None,
            splat_radius: default_splat_radius(),
            splat_opacity: default_splat_opacity(),
            color: default_object_color(),
            material: MaterialParams::default(),
        }
    }
}

/// Selects the denoiser plugged into the distillation objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenoiserKind {
    /// Returns a fixed reference motion regardless of input. When
    /// `reference` is absent, the built-in synthetic kick clip sized to the
    /// configured (T, J) is used.
    Projection { reference: Option<PathBuf> },
    /// Temporal moving average of the de-scaled input.
    Smoothing { window: usize },
    /// Returns the de-scaled input unchanged (zero expected gradient).
    Identity,
    /// Spawns `command` per request and exchanges motion tensors over
    /// stdin/stdout (see `io::tensor` for the wire format).
    External { command: Vec<String> },
}

/// Denoiser selection together with the diffusion schedule it runs under.
/// On disk this is one flat `[denoiser]` table whose `kind` key selects the
/// plugin; every field is individually optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenoiserConfigRepr", into = "DenoiserConfigRepr")]
pub struct DenoiserConfig {
    pub kind: DenoiserKind,
    /// Length of the noise schedule.
    pub schedule_steps: usize,
    /// Linear-beta schedule endpoints.
    pub beta_start: Real,
    pub beta_end: Real,
    /// Monte-Carlo samples per gradient evaluation.
    pub samples: usize,
    /// Classifier-free guidance scale, passed through to the denoiser.
    /// Oracle denoisers ignore it.
    pub guidance_scale: Real,
}

/// File-schema form of [`DenoiserConfig`]: a flat table with defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct DenoiserConfigRepr {
    /// "projection", "smoothing", "identity", or "external".
    kind: String,
    reference: Option<PathBuf>,
    window: usize,
    command: Vec<String>,
    schedule_steps: usize,
    beta_start: Real,
    beta_end: Real,
    samples: usize,
    guidance_scale: Real,
}

impl Default for DenoiserConfigRepr {
    fn default() -> Self {
        DenoiserConfigRepr::from(DenoiserConfig::default())
    }
}

impl TryFrom<DenoiserConfigRepr> for DenoiserConfig {
    type Error = String;

    fn try_from(r: DenoiserConfigRepr) -> Result<Self, String> {
        let kind = match r.kind.as_str() {
            "projection" => DenoiserKind::Projection {
                reference: r.reference,
            },
            "smoothing" => DenoiserKind::Smoothing { window: r.window },
            "identity" => DenoiserKind::Identity,
            "external" => DenoiserKind::External { command: r.command },
            other => {
                return Err(format!(
                    "unknown denoiser kind '{other}' (expected \"projection\", \"smoothing\", \"identity\", or \"external\")"
                ))
            }
        };
        Ok(DenoiserConfig {
            kind,
            schedule_steps: r.schedule_steps,
            beta_start: r.beta_start,
            beta_end: r.beta_end,
            samples: r.samples,
            guidance_scale: r.guidance_scale,
        })
    }
}

impl From<DenoiserConfig> for DenoiserConfigRepr {
    fn from(c: DenoiserConfig) -> Self {
        let (kind, reference, window, command) = match c.kind {
            DenoiserKind::Projection { reference } => ("projection", reference, 2, Vec::new()),
            DenoiserKind::Smoothing { window } => ("smoothing", None, window, Vec::new()),
            DenoiserKind::Identity => ("identity", None, 2, Vec::new()),
            DenoiserKind::External { command } => ("external", None, 2, command),
        };
        DenoiserConfigRepr {
            kind: kind.to_string(),
            reference,
            window,
            command,
            schedule_steps: c.schedule_steps,
            beta_start: c.beta_start,
            beta_end: c.beta_end,
            samples: c.samples,
            guidance_scale: c.guidance_scale,
        }
    }
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            kind: DenoiserKind::Identity,
            schedule_steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            samples: 1,
            guidance_scale: 7.5,
        }
    }
}

/// Full scene + hyperparameter description; the single source of truth for
/// a run. Mirrors the on-disk config schema one-to-one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Number of motion frames T.
    pub frames: usize,
    /// Frames per second.
    pub fps: Real,
    /// Text prompt passed through to the denoiser.
    pub motion_prompt: String,
    pub human: HumanSource,
    pub object: ObjectConfig,
    pub mpm: MpmParams,
    pub optimization: OptimizationParams,
    pub contact: ContactParams,
    pub denoiser: DenoiserConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            frames: 40,
            fps: 20.0,
            motion_prompt: String::new(),
            human: HumanSource::Builtin,
            object: ObjectConfig::default(),
            mpm: MpmParams::default(),
            optimization: OptimizationParams::default(),
            contact: ContactParams::default(),
            denoiser: DenoiserConfig::default(),
        }
    }
}

impl SceneConfig {
    pub fn gravity(&self) -> Vec3 {
        Vec3::from_column_slice(&self.mpm.gravity)
    }

    pub fn object_initial_velocity(&self) -> Vec3 {
        Vec3::from_column_slice(&self.object.initial_velocity)
    }
}

/// One invariant violation: which field broke, and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn check(violations: &mut Vec<Violation>, ok: bool, path: &str, message: impl Into<String>) {
    if !ok {
        violations.push(Violation {
            path: path.to_string(),
            message: message.into(),
        });
    }
}

pub fn validate_splat(splat: &Splat, path: &str, out: &mut Vec<Violation>) {
    check(out, splat.radius > 0.0, &format!("{path}.radius"), "must be > 0");
    check(
        out,
        (0.0..=1.0).contains(&splat.opacity),
        &format!("{path}.opacity"),
        "must be in [0, 1]",
    );
    for (c, chan) in splat.color.iter().zip(["r", "g", "b"]) {
        check(
            out,
            (0.0..=1.0).contains(c),
            &format!("{path}.color.{chan}"),
            "must be in [0, 1]",
        );
    }
}

pub fn validate_material(m: &MaterialParams, path: &str, out: &mut Vec<Violation>) {
    check(
        out,
        m.youngs_modulus > 0.0,
        &format!("{path}.youngs_modulus"),
        "must be > 0",
    );
    check(
        out,
        m.poisson_ratio > 0.0 && m.poisson_ratio < 0.5,
        &format!("{path}.poisson_ratio"),
        "must be in (0, 0.5); the incompressible limit is excluded",
    );
    check(out, m.density > 0.0, &format!("{path}.density"), "must be > 0");
    check(
        out,
        (0.0..=1.0).contains(&m.restitution),
        &format!("{path}.restitution"),
        "must be in [0, 1]",
    );
}

pub fn validate_object(obj: &ParticleObject, path: &str, out: &mut Vec<Violation>) {
    let n = obj.splats.len();
    check(out, n >= 1, &format!("{path}.splats"), "must hold at least one particle");
    for (name, len) in [
        ("velocities", obj.velocities.len()),
        ("masses", obj.masses.len()),
        ("volumes", obj.volumes.len()),
        ("deformation_gradients", obj.deformation_gradients.len()),
    ] {
        check(
            out,
            len == n,
            &format!("{path}.{name}"),
            format!("length {len} does not match {n} splats"),
        );
    }
    for (i, s) in obj.splats.iter().enumerate() {
        validate_splat(s, &format!("{path}.splats[{i}]"), out);
    }
    for (i, &m) in obj.masses.iter().enumerate() {
        check(out, m > 0.0, &format!("{path}.masses[{i}]"), "must be > 0");
    }
    for (i, &v) in obj.volumes.iter().enumerate() {
        check(out, v > 0.0, &format!("{path}.volumes[{i}]"), "must be > 0");
    }
    validate_material(&obj.material, &format!("{path}.material"), out);
}

pub fn validate_skeleton(skel: &Skeleton, path: &str, out: &mut Vec<Violation>) {
    let j = skel.parent.len();
    check(out, j >= 1, &format!("{path}.parent"), "needs at least one joint");
    check(
        out,
        skel.rest_offsets.len() == j,
        &format!("{path}.rest_offsets"),
        format!("length {} does not match {} joints", skel.rest_offsets.len(), j),
    );
    if j >= 1 {
        check(
            out,
            skel.parent[0].is_none(),
            &format!("{path}.parent[0]"),
            "root must have no parent",
        );
    }
    for (i, p) in skel.parent.iter().enumerate().skip(1) {
        match p {
            None => check(out, false, &format!("{path}.parent[{i}]"), "only joint 0 may be the root"),
            Some(k) => check(
                out,
                *k < i,
                &format!("{path}.parent[{i}]"),
                format!("parent index {k} must be smaller than {i} (topological order)"),
            ),
        }
    }
}

pub fn validate_human(human: &SkinnedHuman, path: &str, out: &mut Vec<Violation>) {
    validate_skeleton(&human.skeleton, &format!("{path}.skeleton"), out);
    let j = human.skeleton.joint_count();
    check(
        out,
        human.skinning_weights.len() == human.canonical_splats.len(),
        &format!("{path}.skinning_weights"),
        format!(
            "{} weight rows for {} splats",
            human.skinning_weights.len(),
            human.canonical_splats.len()
        ),
    );
    for (i, s) in human.canonical_splats.iter().enumerate() {
        validate_splat(s, &format!("{path}.canonical_splats[{i}]"), out);
    }
    for (i, w) in human.skinning_weights.iter().enumerate() {
        let p = format!("{path}.skinning_weights[{i}]");
        check(out, w.len() == j, &p, format!("length {} does not match {} joints", w.len(), j));
        if w.iter().any(|&x| x < 0.0) {
            check(out, false, &p, "weights must be non-negative");
        }
        let sum: Real = w.iter().sum();
        check(
            out,
            (sum - 1.0).abs() <= 1e-6,
            &p,
            format!("weights sum to {sum}, expected 1 within 1e-6"),
        );
    }
}

pub fn validate_motion(motion: &MotionSequence, joint_count: usize, path: &str, out: &mut Vec<Violation>) {
    let t = motion.frame_count();
    check(out, motion.fps > 0.0, &format!("{path}.fps"), "must be > 0");
    check(
        out,
        motion.global_orientation.len() == t,
        &format!("{path}.global_orientation"),
        format!("length {} does not match {} frames", motion.global_orientation.len(), t),
    );
    check(
        out,
        motion.joint_poses.len() == t,
        &format!("{path}.joint_poses"),
        format!("length {} does not match {} frames", motion.joint_poses.len(), t),
    );
    for (f, poses) in motion.joint_poses.iter().enumerate() {
        check(
            out,
            poses.len() == joint_count,
            &format!("{path}.joint_poses[{f}]"),
            format!("{} joint rotations for {} joints", poses.len(), joint_count),
        );
    }
}

pub fn validate_contact(c: &ContactParams, path: &str, out: &mut Vec<Violation>) {
    check(
        out,
        c.tau_contact > 0.0 && c.tau_contact <= 1.0,
        &format!("{path}.tau_contact"),
        "must be in (0, 1]",
    );
    check(out, c.d_contact > 0.0, &format!("{path}.d_contact"), "must be > 0");
}

pub fn validate_optimization(
    o: &OptimizationParams,
    schedule_steps: usize,
    path: &str,
    out: &mut Vec<Violation>,
) {
    check(
        out,
        o.hmsd_t_min <= o.hmsd_t_max,
        &format!("{path}.hmsd_t_min"),
        format!("hmsd_t_min {} exceeds hmsd_t_max {}", o.hmsd_t_min, o.hmsd_t_max),
    );
    check(
        out,
        o.hmsd_t_max < schedule_steps,
        &format!("{path}.hmsd_t_max"),
        format!("hmsd_t_max {} must be below the schedule length {}", o.hmsd_t_max, schedule_steps),
    );
    check(out, o.lr_stage12 > 0.0, &format!("{path}.lr_stage12"), "must be > 0");
    check(out, o.lr_stage3 > 0.0, &format!("{path}.lr_stage3"), "must be > 0");
    check(out, o.sigma_window > 0.0, &format!("{path}.sigma_window"), "must be > 0");
}

pub fn validate_mpm(p: &MpmParams, path: &str, out: &mut Vec<Violation>) {
    check(
        out,
        p.grid_resolution >= 8,
        &format!("{path}.grid_resolution"),
        "must be at least 8",
    );
    check(out, p.domain_extent > 0.0, &format!("{path}.domain_extent"), "must be > 0");
    check(out, p.substep_dt > 0.0, &format!("{path}.substep_dt"), "must be > 0");
    check(
        out,
        p.substeps_per_frame >= 1,
        &format!("{path}.substeps_per_frame"),
        "must be at least 1",
    );
}

pub fn validate_denoiser(d: &DenoiserConfig, path: &str, out: &mut Vec<Violation>) {
    check(out, d.schedule_steps >= 1, &format!("{path}.schedule_steps"), "must be at least 1");
    check(
        out,
        d.beta_start > 0.0 && d.beta_start < 1.0,
        &format!("{path}.beta_start"),
        "must be in (0, 1)",
    );
    check(
        out,
        d.beta_end >= d.beta_start && d.beta_end < 1.0,
        &format!("{path}.beta_end"),
        "must be in [beta_start, 1)",
    );
    check(out, d.samples >= 1, &format!("{path}.samples"), "must be at least 1");
    if let DenoiserKind::Smoothing { window } = d.kind {
        check(out, window >= 1, &format!("{path}.window"), "must be at least 1");
    }
    if let DenoiserKind::External { command } = &d.kind {
        check(out, !command.is_empty(), &format!("{path}.command"), "must not be empty");
    }
}

/// Reports every invariant violation across the nested configuration, in a
/// deterministic field-path traversal order. An empty result means the
/// configuration is well formed. Violations are data, not failures.
pub fn validate_scene(config: &SceneConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    check(&mut out, config.frames >= 1, "frames", "must be at least 1");
    check(&mut out, config.fps > 0.0, "fps", "must be > 0");
    match &config.object.shape {
        ObjectShape::Ball { radius, spacing, .. } => {
            check(&mut out, *radius > 0.0, "object.radius", "must be > 0");
            check(&mut out, *spacing > 0.0, "object.spacing", "must be > 0");
        }
        ObjectShape::Ply { path } => {
            check(
                &mut out,
                !path.as_os_str().is_empty(),
                "object.path",
                "must not be empty",
            );
        }
    }
    if let Some(v) = config.object.particle_volume {
        check(&mut out, v > 0.0, "object.particle_volume", "must be > 0");
    }
    validate_material(&config.object.material, "object.material", &mut out);
    validate_mpm(&config.mpm, "mpm", &mut out);
    validate_optimization(
        &config.optimization,
        config.denoiser.schedule_steps,
        "optimization",
        &mut out,
    );
    validate_contact(&config.contact, "contact", &mut out);
    validate_denoiser(&config.denoiser, "denoiser", &mut out);
    out
}

/// Fixed color palette for the built-in humanoid, cycled per joint.
const HUMANOID_PALETTE: [[Real; 3]; 8] = [
    [0.64, 0.37, 0.29],
    [0.35, 0.48, 0.68],
    [0.45, 0.62, 0.38],
    [0.72, 0.58, 0.30],
    [0.52, 0.41, 0.60],
    [0.38, 0.60, 0.62],
    [0.70, 0.46, 0.48],
    [0.48, 0.48, 0.48],
];

/// Joint tree of the built-in 24-joint humanoid: (parent, rest offset).
/// Topologically ordered, pelvis first, legs/spine/arms mirrored in x.
const HUMANOID_JOINTS: [(i32, [Real; 3]); 24] = [
    (-1, [0.0, 0.95, 0.0]),   // 0  pelvis
    (0, [0.09, -0.05, 0.0]),  // 1  left hip
    (0, [-0.09, -0.05, 0.0]), // 2  right hip
    (0, [0.0, 0.12, 0.0]),    // 3  spine1
    (1, [0.0, -0.40, 0.0]),   // 4  left knee
    (2, [0.0, -0.40, 0.0]),   // 5  right knee
    (3, [0.0, 0.13, 0.0]),    // 6  spine2
    (4, [0.0, -0.42, 0.0]),   // 7  left ankle
    (5, [0.0, -0.42, 0.0]),   // 8  right ankle
    (6, [0.0, 0.05, 0.0]),    // 9  spine3
    (7, [0.0, -0.06, 0.13]),  // 10 left foot
    (8, [0.0, -0.06, 0.13]),  // 11 right foot
    (9, [0.0, 0.12, 0.0]),    // 12 neck
    (9, [0.07, 0.09, 0.0]),   // 13 left collar
    (9, [-0.07, 0.09, 0.0]),  // 14 right collar
    (12, [0.0, 0.10, 0.0]),   // 15 head
    (13, [0.10, 0.0, 0.0]),   // 16 left shoulder
    (14, [-0.10, 0.0, 0.0]),  // 17 right shoulder
    (16, [0.26, 0.0, 0.0]),   // 18 left elbow
    (17, [-0.26, 0.0, 0.0]),  // 19 right elbow
    (18, [0.25, 0.0, 0.0]),   // 20 left wrist
    (19, [-0.25, 0.0, 0.0]),  // 21 right wrist
    (20, [0.08, 0.0, 0.0]),   // 22 left hand
    (21, [-0.08, 0.0, 0.0]),  // 23 right hand
];

/// Index of the built-in humanoid's left foot joint.
pub const HUMANOID_LEFT_FOOT: usize = 10;

/// Skeleton of the built-in humanoid.
pub fn builtin_humanoid_skeleton() -> Skeleton {
    Skeleton {
        parent: HUMANOID_JOINTS
            .iter()
            .map(|(p, _)| if *p < 0 { None } else { Some(*p as usize) })
            .collect(),
        rest_offsets: HUMANOID_JOINTS
            .iter()
            .map(|(_, o)| Vec3::from_column_slice(o))
            .collect(),
    }
}

/// Rest-pose world positions of a skeleton's joints (cumulative offsets).
fn rest_positions(skel: &Skeleton) -> Vec<Vec3> {
    let mut pos = vec![Vec3::zeros(); skel.joint_count()];
    for j in 0..skel.joint_count() {
        pos[j] = match skel.parent[j] {
            Some(p) => pos[p] + skel.rest_offsets[j],
            None => skel.rest_offsets[j],
        };
    }
    pos
}

/// Deterministic 24-joint humanoid with 552 splats distributed along its
/// bones, each bound one-hot to its nearest joint in the rest pose. Two
/// calls produce bit-identical output.
pub fn builtin_toy_humanoid() -> SkinnedHuman {
    let skeleton = builtin_humanoid_skeleton();
    let joints = rest_positions(&skeleton);

    let stations = 6;
    let ring = 4;
    let mut splats = Vec::new();
    let mut weights = Vec::new();
    for j in 1..skeleton.joint_count() {
        let a = joints[skeleton.parent[j].unwrap()];
        let b = joints[j];
        let axis = (b - a).normalize();
        // Any stable frame perpendicular to the bone works for the rings.
        let seed = if axis.x.abs() < 0.9 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        let u = axis.cross(&seed).normalize();
        let v = axis.cross(&u);
        for s in 0..stations {
            let t = (2 * s + 1) as Real / (2 * stations) as Real;
            let center = a + (b - a) * t;
            for r in 0..ring {
                let phi = std::f64::consts::TAU * (r as Real + 0.5 * (s % 2) as Real) / ring as Real;
                let offset = (u * phi.cos() + v * phi.sin()) * 0.03;
                let p = center + offset;
                let nearest = joints
                    .iter()
                    .enumerate()
                    .min_by(|(_, x), (_, y)| {
                        (*x - p).norm().partial_cmp(&(*y - p).norm()).unwrap()
                    })
                    .map(|(k, _)| k)
                    .unwrap();
                let mut w = vec![0.0; skeleton.joint_count()];
                w[nearest] = 1.0;
                splats.push(Splat::new(p, 0.02, 0.8, HUMANOID_PALETTE[nearest % 8]));
                weights.push(w);
            }
        }
    }

    SkinnedHuman {
        skeleton,
        canonical_splats: splats,
        skinning_weights: weights,
    }
}

/// Lattice-sampled ball of splats: every grid point with the given spacing
/// that falls inside the sphere. Deterministic; point order is z-major.
pub fn lattice_ball(center: Vec3, radius: Real, spacing: Real, color: [Real; 3], splat_radius: Real, opacity: Real) -> Vec<Splat> {
    let n = (radius / spacing).floor() as i64;
    let mut splats = Vec::new();
    for iz in -n..=n {
        for iy in -n..=n {
            for ix in -n..=n {
                let offset = Vec3::new(ix as Real, iy as Real, iz as Real) * spacing;
                if offset.norm() <= radius {
                    splats.push(Splat::new(center + offset, splat_radius, opacity, color));
                }
            }
        }
    }
    splats
}
