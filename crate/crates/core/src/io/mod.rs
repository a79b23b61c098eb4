//! File formats and loaders: ASCII PLY point clouds, the binary trajectory
//! format, TOML config/skeleton/motion/report files, the motion-tensor wire
//! protocol for external denoisers, and scene assembly from a config.
//!
//! All binary formats are little-endian and carry magic plus version;
//! loaders reject wrong magic. Every exporter/loader pair round-trips
//! exactly (floats are printed in shortest-round-trip form, binary payloads
//! are f32-pinned).

mod ply;
mod tensor;
mod text;
mod trajectory;

pub use ply::{load_ply_points, save_ply_points, PlyPoints};
pub use tensor::{read_motion_tensor, write_motion_tensor, ExternalDenoiser, TENSOR_MAGIC};
pub use text::{
    export_motion, export_report, export_skeleton, load_config, load_motion, load_report,
    load_skeleton, LoadedReport,
};
pub use trajectory::{export_trajectory, load_trajectory, TRAJECTORY_MAGIC};

use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::distill::Denoiser;
use crate::fixtures::synthetic_kick_clip;
use crate::scene::{
    builtin_toy_humanoid, lattice_ball, validate_human, DenoiserKind, HumanSource, MotionSequence,
    ObjectConfig, ObjectShape, ParticleObject, SceneConfig, SkinnedHuman, Splat, Violation,
};
use crate::{Real, Vec3};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: bad magic (expected {expected:?})")]
    BadMagic { path: PathBuf, expected: String },
    #[error("{path}: {message}")]
    Toml { path: PathBuf, message: String },
    #[error("{path}: unknown keys: {keys:?}")]
    UnknownKeys { path: PathBuf, keys: Vec<String> },
    #[error("{path}: {message}")]
    Dimension { path: PathBuf, message: String },
    #[error("validation failed: {0:?}")]
    Validation(Vec<Violation>),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Resolves `relative` against the directory `base` unless it is absolute.
fn resolve(base: &Path, relative: &Path) -> PathBuf {
    if relative.is_absolute() {
        relative.to_path_buf()
    } else {
        base.join(relative)
    }
}

/// Loads the human described by the config (built-in humanoid or external
/// skeleton + splats + optional weights). Relative paths resolve against
/// `base_dir`.
pub fn load_human(config: &SceneConfig, base_dir: &Path) -> Result<SkinnedHuman, IoError> {
    let human = match &config.human {
        HumanSource::Builtin => builtin_toy_humanoid(),
        HumanSource::Files {
            skeleton,
            splats,
            weights,
            splat_radius,
            splat_opacity,
        } => {
            let skeleton = load_skeleton(&resolve(base_dir, skeleton))?;
            let points = load_ply_points(&resolve(base_dir, splats))?;
            let joints = skeleton.joint_count();
            let canonical: Vec<Splat> = points
                .positions
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let color = points
                        .colors
                        .as_ref()
                        .map(|c| c[i])
                        .unwrap_or([0.35, 0.48, 0.68]);
                    Splat::new(*p, *splat_radius, *splat_opacity, color)
                })
                .collect();
            let weights = match weights {
                Some(path) => {
                    let path = resolve(base_dir, path);
                    text::load_weights(&path, canonical.len(), joints)?
                }
                None => {
                    // One-hot binding to the nearest joint in the rest pose.
                    let rest = rest_joint_positions(&skeleton);
                    canonical
                        .iter()
                        .map(|s| {
                            let nearest = rest
                                .iter()
                                .enumerate()
                                .min_by(|(_, a), (_, b)| {
                                    (*a - s.position)
                                        .norm()
                                        .total_cmp(&(*b - s.position).norm())
                                })
                                .map(|(k, _)| k)
                                .unwrap();
                            let mut w = vec![0.0; joints];
                            w[nearest] = 1.0;
                            w
                        })
                        .collect()
                }
            };
            SkinnedHuman {
                skeleton,
                canonical_splats: canonical,
                skinning_weights: weights,
            }
        }
    };
    let mut violations = Vec::new();
    validate_human(&human, "human", &mut violations);
    if !violations.is_empty() {
        return Err(IoError::Validation(violations));
    }
    Ok(human)
}

fn rest_joint_positions(skeleton: &crate::scene::Skeleton) -> Vec<Vec3> {
    let mut positions = vec![Vec3::zeros(); skeleton.joint_count()];
    for j in 0..skeleton.joint_count() {
        positions[j] = match skeleton.parent[j] {
            Some(p) => positions[p] + skeleton.rest_offsets[j],
            None => skeleton.rest_offsets[j],
        };
    }
    positions
}

/// Builds the particle object described by the config. The per-particle
/// volume defaults to the lattice spacing cubed for balls and to the
/// bounding-box volume divided by the particle count for point clouds.
pub fn load_object(config: &SceneConfig, base_dir: &Path) -> Result<ParticleObject, IoError> {
    let obj: &ObjectConfig = &config.object;
    let (splats, default_volume) = match &obj.shape {
        ObjectShape::Ball {
            center,
            radius,
            spacing,
        } => {
            let splats = lattice_ball(
                Vec3::from_column_slice(center),
                *radius,
                *spacing,
                obj.color,
                obj.splat_radius,
                obj.splat_opacity,
            );
            (splats, spacing.powi(3))
        }
        ObjectShape::Ply { path } => {
            let path = resolve(base_dir, path);
            let points = load_ply_points(&path)?;
            if points.positions.is_empty() {
                return Err(IoError::Dimension {
                    path,
                    message: "point cloud is empty".to_string(),
                });
            }
            let mut min = Vec3::repeat(Real::INFINITY);
            let mut max = Vec3::repeat(Real::NEG_INFINITY);
            for p in &points.positions {
                min = min.inf(p);
                max = max.sup(p);
            }
            let extent = max - min;
            let volume = (extent.x * extent.y * extent.z).max(1e-12) / points.positions.len() as Real;
            let splats = points
                .positions
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let color = points.colors.as_ref().map(|c| c[i]).unwrap_or(obj.color);
                    Splat::new(*p, obj.splat_radius, obj.splat_opacity, color)
                })
                .collect();
            (splats, volume)
        }
    };
    let volume = obj.particle_volume.unwrap_or(default_volume);
    Ok(ParticleObject::from_splats(
        splats,
        Vec3::from_column_slice(&obj.initial_velocity),
        volume,
        obj.material,
    ))
}

/// Loads both agents of a scene.
pub fn load_scene(
    config: &SceneConfig,
    base_dir: &Path,
) -> Result<(SkinnedHuman, ParticleObject), IoError> {
    Ok((load_human(config, base_dir)?, load_object(config, base_dir)?))
}

/// Instantiates the denoiser the config selects. A projection denoiser
/// without an explicit reference file targets the built-in kick clip sized
/// to the configured sequence.
pub fn build_denoiser(
    config: &SceneConfig,
    joints: usize,
    base_dir: &Path,
) -> Result<Box<dyn Denoiser>, IoError> {
    Ok(match &config.denoiser.kind {
        DenoiserKind::Projection { reference } => {
            let motion: MotionSequence = match reference {
                Some(path) => {
                    let path = resolve(base_dir, path);
                    let motion = load_motion(&path)?;
                    if motion.joint_count() != joints || motion.frame_count() != config.frames {
                        return Err(IoError::Dimension {
                            path,
                            message: format!(
                                "reference motion is {}x{} joints/frames; scene needs {}x{}",
                                motion.joint_count(),
                                motion.frame_count(),
                                joints,
                                config.frames
                            ),
                        });
                    }
                    motion
                }
                None => synthetic_kick_clip(config.frames, config.fps),
            };
            Box::new(crate::distill::ProjectionDenoiser {
                reference: motion.flatten(),
            })
        }
        DenoiserKind::Smoothing { window } => Box::new(crate::distill::SmoothingDenoiser {
            half_width: *window,
        }),
        DenoiserKind::Identity => Box::new(crate::distill::IdentityDenoiser),
        DenoiserKind::External { command } => Box::new(ExternalDenoiser {
            command: command.clone(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SceneConfig;

    #[test]
    fn builtin_scene_loads() {
        let config = SceneConfig::default();
        let (human, object) = load_scene(&config, Path::new(".")).unwrap();
        assert_eq!(human.skeleton.joint_count(), 24);
        assert!(object.particle_count() > 50);
        // Ball default volume is the spacing cubed.
        assert!((object.volumes[0] - 0.02f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn ply_object_estimates_volume_from_bounding_box() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        let positions = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.1, 0.0, 0.0),
            Vec3::new(0.0, 0.2, 0.0),
            Vec3::new(0.0, 0.0, 0.4),
        ];
        save_ply_points(&path, &positions, None).unwrap();
        let mut config = SceneConfig::default();
        config.object.shape = ObjectShape::Ply { path: path.clone() };
        config.object.particle_volume = None;
        let object = load_object(&config, Path::new("/")).unwrap();
        let expected = 0.1 * 0.2 * 0.4 / 4.0;
        assert!((object.volumes[0] - expected).abs() < 1e-15);
        assert_eq!(object.particle_count(), 4);
    }
}
