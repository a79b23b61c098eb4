//! Structured-text (TOML) formats: scene config, skeleton, motion, and the
//! run report. File schemas are explicit structs with plain arrays so the
//! on-disk layout is decoupled from internal types; floats are emitted in
//! shortest round-trip form, so every exporter/loader pair is exact.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::{io_err, load_trajectory, IoError};
use crate::interaction::ContactEvent;
use crate::mpm::ObjectTrajectory;
use crate::pipeline::{RunReport, StageRecord};
use crate::scene::{validate_scene, MotionSequence, SceneConfig, Skeleton};
use crate::{Real, Vec3};

fn toml_err(path: &Path) -> impl FnOnce(toml::de::Error) -> IoError + '_ {
    move |e| IoError::Toml {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Collects key paths present in `input` but absent from `echo`
/// (recursing through tables).
fn unknown_keys(input: &toml::Value, echo: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    let (Some(input_table), Some(echo_table)) = (input.as_table(), echo.as_table()) else {
        return;
    };
    for (key, value) in input_table {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match echo_table.get(key) {
            None => out.push(path),
            Some(echo_value) => unknown_keys(value, echo_value, &path, out),
        }
    }
}

/// Parses a TOML file into `T`, reporting keys the schema does not echo
/// back. In strict mode unknown keys are an error; in lenient mode they
/// come back as warnings.
fn load_toml_checked<T: Serialize + for<'de> Deserialize<'de>>(
    path: &Path,
    strict: bool,
) -> Result<(T, Vec<String>), IoError> {
    let content = std::fs::read_to_string(path).map_err(io_err(path))?;
    let value: toml::Value = toml::from_str(&content).map_err(toml_err(path))?;
    let parsed: T = value.clone().try_into().map_err(toml_err(path))?;
    let echo = toml::Value::try_from(&parsed).map_err(|e| IoError::Toml {
        path: path.to_path_buf(),
        message: format!("re-serialization failed: {e}"),
    })?;
    let mut unknown = Vec::new();
    unknown_keys(&value, &echo, "", &mut unknown);
    if strict && !unknown.is_empty() {
        return Err(IoError::UnknownKeys {
            path: path.to_path_buf(),
            keys: unknown,
        });
    }
    let warnings = unknown
        .into_iter()
        .map(|k| format!("{}: unknown key '{k}' ignored", path.display()))
        .collect();
    Ok((parsed, warnings))
}

/// Loads and validates a scene configuration. An empty file yields the
/// full defaults.
pub fn load_config(path: &Path, strict: bool) -> Result<(SceneConfig, Vec<String>), IoError> {
    let (config, warnings) = load_toml_checked::<SceneConfig>(path, strict)?;
    let violations = validate_scene(&config);
    if !violations.is_empty() {
        return Err(IoError::Validation(violations));
    }
    Ok((config, warnings))
}

#[derive(Debug, Serialize, Deserialize)]
struct SkeletonFile {
    /// Parent index per joint, -1 for the root.
    parents: Vec<i64>,
    rest_offsets: Vec<[Real; 3]>,
}

pub fn load_skeleton(path: &Path) -> Result<Skeleton, IoError> {
    let (file, _) = load_toml_checked::<SkeletonFile>(path, true)?;
    if file.parents.len() != file.rest_offsets.len() {
        return Err(IoError::Dimension {
            path: path.to_path_buf(),
            message: format!(
                "{} parents vs {} rest offsets",
                file.parents.len(),
                file.rest_offsets.len()
            ),
        });
    }
    let skeleton = Skeleton {
        parent: file
            .parents
            .iter()
            .map(|&p| if p < 0 { None } else { Some(p as usize) })
            .collect(),
        rest_offsets: file.rest_offsets.iter().map(|o| Vec3::from_column_slice(o)).collect(),
    };
    let mut violations = Vec::new();
    crate::scene::validate_skeleton(&skeleton, "skeleton", &mut violations);
    if !violations.is_empty() {
        return Err(IoError::Validation(violations));
    }
    Ok(skeleton)
}

pub fn export_skeleton(skeleton: &Skeleton, path: &Path) -> Result<(), IoError> {
    let file = SkeletonFile {
        parents: skeleton
            .parent
            .iter()
            .map(|p| p.map_or(-1, |v| v as i64))
            .collect(),
        rest_offsets: skeleton.rest_offsets.iter().map(|o| [o.x, o.y, o.z]).collect(),
    };
    std::fs::write(path, toml::to_string(&file).expect("skeleton serializes")).map_err(io_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct MotionFile {
    fps: Real,
    joints: usize,
    root_translation: Vec<[Real; 3]>,
    global_orientation: Vec<[Real; 6]>,
    joint_poses: Vec<Vec<[Real; 3]>>,
}

pub fn load_motion(path: &Path) -> Result<MotionSequence, IoError> {
    let (file, _) = load_toml_checked::<MotionFile>(path, true)?;
    let frames = file.root_translation.len();
    if file.global_orientation.len() != frames || file.joint_poses.len() != frames {
        return Err(IoError::Dimension {
            path: path.to_path_buf(),
            message: format!(
                "per-frame arrays disagree: {} translations, {} orientations, {} pose frames",
                frames,
                file.global_orientation.len(),
                file.joint_poses.len()
            ),
        });
    }
    for (t, poses) in file.joint_poses.iter().enumerate() {
        if poses.len() != file.joints {
            return Err(IoError::Dimension {
                path: path.to_path_buf(),
                message: format!("frame {t} has {} joint rotations, header says {}", poses.len(), file.joints),
            });
        }
    }
    Ok(MotionSequence {
        fps: file.fps,
        root_translation: file
            .root_translation
            .iter()
            .map(|v| Vec3::from_column_slice(v))
            .collect(),
        global_orientation: file.global_orientation,
        joint_poses: file
            .joint_poses
            .iter()
            .map(|frame| frame.iter().map(|v| Vec3::from_column_slice(v)).collect())
            .collect(),
    })
}

pub fn export_motion(motion: &MotionSequence, path: &Path) -> Result<(), IoError> {
    let file = MotionFile {
        fps: motion.fps,
        joints: motion.joint_count(),
        root_translation: motion.root_translation.iter().map(|v| [v.x, v.y, v.z]).collect(),
        global_orientation: motion.global_orientation.clone(),
        joint_poses: motion
            .joint_poses
            .iter()
            .map(|frame| frame.iter().map(|v| [v.x, v.y, v.z]).collect())
            .collect(),
    };
    std::fs::write(path, toml::to_string(&file).expect("motion serializes")).map_err(io_err(path))
}

/// Whitespace-separated skinning-weight rows (one per splat, J columns);
/// `#` starts a comment line.
pub(super) fn load_weights(path: &Path, splats: usize, joints: usize) -> Result<Vec<Vec<Real>>, IoError> {
    let content = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::with_capacity(splats);
    for (idx, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<Real>, _> = line.split_whitespace().map(|w| w.parse::<Real>()).collect();
        let row = row.map_err(|_| IoError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: "bad number in weight row".to_string(),
        })?;
        if row.len() != joints {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("{} weights in row, skeleton has {} joints", row.len(), joints),
            });
        }
        rows.push(row);
    }
    if rows.len() != splats {
        return Err(IoError::Dimension {
            path: path.to_path_buf(),
            message: format!("{} weight rows for {} splats", rows.len(), splats),
        });
    }
    Ok(rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct ContactEventFile {
    frame: usize,
    joint: usize,
    normal: [Real; 3],
    human_velocity: [Real; 3],
    object_velocity_pre: [Real; 3],
    post_velocity_delta: [Real; 3],
    contacting_fraction: Real,
}

impl From<&ContactEvent> for ContactEventFile {
    fn from(e: &ContactEvent) -> Self {
        let a = |v: &Vec3| [v.x, v.y, v.z];
        Self {
            frame: e.frame,
            joint: e.joint,
            normal: a(&e.normal),
            human_velocity: a(&e.human_velocity),
            object_velocity_pre: a(&e.object_velocity_pre),
            post_velocity_delta: a(&e.post_velocity_delta),
            contacting_fraction: e.contacting_fraction,
        }
    }
}

impl From<&ContactEventFile> for ContactEvent {
    fn from(f: &ContactEventFile) -> Self {
        let v = |a: &[Real; 3]| Vec3::from_column_slice(a);
        ContactEvent {
            frame: f.frame,
            joint: f.joint,
            normal: v(&f.normal),
            human_velocity: v(&f.human_velocity),
            object_velocity_pre: v(&f.object_velocity_pre),
            post_velocity_delta: v(&f.post_velocity_delta),
            contacting_fraction: f.contacting_fraction,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectionFile {
    joint: usize,
    frame: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportFile {
    seed: u64,
    selection: Option<SelectionFile>,
    no_contact_reason: Option<String>,
    contact: Option<ContactEventFile>,
    stages: Vec<StageRecord>,
    /// Sibling artifact files, relative to the report.
    motion_file: String,
    trajectory_file: String,
    config: SceneConfig,
}

/// A report reloaded from disk.
pub type LoadedReport = RunReport;

/// Writes `report.toml` plus the final motion and trajectory as sibling
/// files into `dir`. Returns the report path.
pub fn export_report(report: &RunReport, dir: &Path) -> Result<PathBuf, IoError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let motion_file = "motion.toml".to_string();
    let trajectory_file = "trajectory.bin".to_string();
    export_motion(&report.final_motion, &dir.join(&motion_file))?;
    super::export_trajectory(&report.final_trajectory, &dir.join(&trajectory_file))?;
    let file = ReportFile {
        seed: report.seed,
        selection: report.selection.map(|(joint, frame)| SelectionFile { joint, frame }),
        no_contact_reason: report.no_contact_reason.clone(),
        contact: report.contact.as_ref().map(ContactEventFile::from),
        stages: report.stages.clone(),
        motion_file,
        trajectory_file,
        config: report.config.clone(),
    };
    let path = dir.join("report.toml");
    std::fs::write(&path, toml::to_string(&file).expect("report serializes")).map_err(io_err(&path))?;
    Ok(path)
}

/// Reassembles a full report from `report.toml` and its sibling artifacts.
pub fn load_report(report_path: &Path) -> Result<LoadedReport, IoError> {
    let (file, _) = load_toml_checked::<ReportFile>(report_path, true)?;
    let dir = report_path.parent().unwrap_or(Path::new("."));
    let final_motion = load_motion(&dir.join(&file.motion_file))?;
    let final_trajectory: ObjectTrajectory = load_trajectory(&dir.join(&file.trajectory_file))?;
    Ok(RunReport {
        seed: file.seed,
        selection: file.selection.map(|s| (s.joint, s.frame)),
        contact: file.contact.as_ref().map(ContactEvent::from),
        no_contact_reason: file.no_contact_reason,
        stages: file.stages,
        final_motion,
        final_trajectory,
        config: file.config,
    })
}
