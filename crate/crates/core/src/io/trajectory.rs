//! Binary trajectory files: magic + version header, then per-frame
//! particle positions and centers of mass as little-endian f32.
//!
//! Layout: `"HOITRAJ1"` (8 bytes), version u32, frame count T u32,
//! particle count N u32, fps f32, positions block (T x N x 3 f32), COM
//! block (T x 3 f32).

use std::path::Path;

use super::{io_err, IoError};
use crate::mpm::ObjectTrajectory;
use crate::{Real, Vec3};

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"HOITRAJ1";
const TRAJECTORY_VERSION: u32 = 1;

/// Writes a trajectory. Positions narrow to f32 (analysis precision); the
/// simulation keeps f64 internally.
pub fn export_trajectory(trajectory: &ObjectTrajectory, path: &Path) -> Result<(), IoError> {
    let frames = trajectory.frame_count();
    let particles = trajectory.particle_count();
    let mut out = Vec::with_capacity(24 + frames * particles * 12 + frames * 12);
    out.extend_from_slice(TRAJECTORY_MAGIC);
    out.extend_from_slice(&TRAJECTORY_VERSION.to_le_bytes());
    out.extend_from_slice(&(frames as u32).to_le_bytes());
    out.extend_from_slice(&(particles as u32).to_le_bytes());
    out.extend_from_slice(&(trajectory.fps as f32).to_le_bytes());
    for frame in &trajectory.positions {
        for p in frame {
            for c in 0..3 {
                out.extend_from_slice(&(p[c] as f32).to_le_bytes());
            }
        }
    }
    for com in &trajectory.com {
        for c in 0..3 {
            out.extend_from_slice(&(com[c] as f32).to_le_bytes());
        }
    }
    std::fs::write(path, out).map_err(io_err(path))
}

fn take_f32(data: &[u8], offset: &mut usize) -> Real {
    let bytes: [u8; 4] = data[*offset..*offset + 4].try_into().unwrap();
    *offset += 4;
    f32::from_le_bytes(bytes) as Real
}

/// Reads a trajectory file, validating magic, version, and exact payload
/// size.
pub fn load_trajectory(path: &Path) -> Result<ObjectTrajectory, IoError> {
    let data = std::fs::read(path).map_err(io_err(path))?;
    if data.len() < 24 || &data[..8] != TRAJECTORY_MAGIC {
        return Err(IoError::BadMagic {
            path: path.to_path_buf(),
            expected: String::from_utf8_lossy(TRAJECTORY_MAGIC).into_owned(),
        });
    }
    let version = u32::from_le_bytes(data[8..12].try_into().unwrap());
    if version != TRAJECTORY_VERSION {
        return Err(IoError::Toml {
            path: path.to_path_buf(),
            message: format!("unsupported trajectory version {version}"),
        });
    }
    let frames = u32::from_le_bytes(data[12..16].try_into().unwrap()) as usize;
    let particles = u32::from_le_bytes(data[16..20].try_into().unwrap()) as usize;
    let fps = f32::from_le_bytes(data[20..24].try_into().unwrap()) as Real;
    let expected = 24 + frames * particles * 12 + frames * 12;
    if data.len() != expected {
        return Err(IoError::Dimension {
            path: path.to_path_buf(),
            message: format!(
                "payload is {} bytes; {} frames x {} particles requires {}",
                data.len(),
                frames,
                particles,
                expected
            ),
        });
    }
    let mut offset = 24;
    let mut positions = Vec::with_capacity(frames);
    for _ in 0..frames {
        let mut frame = Vec::with_capacity(particles);
        for _ in 0..particles {
            let x = take_f32(&data, &mut offset);
            let y = take_f32(&data, &mut offset);
            let z = take_f32(&data, &mut offset);
            frame.push(Vec3::new(x, y, z));
        }
        positions.push(frame);
    }
    let mut com = Vec::with_capacity(frames);
    for _ in 0..frames {
        let x = take_f32(&data, &mut offset);
        let y = take_f32(&data, &mut offset);
        let z = take_f32(&data, &mut offset);
        com.push(Vec3::new(x, y, z));
    }
    Ok(ObjectTrajectory { fps, positions, com })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_trajectory() -> ObjectTrajectory {
        let positions = vec![
            vec![Vec3::new(0.5, 0.25, -1.0), Vec3::new(1.5, 2.5, 3.5)],
            vec![Vec3::new(0.625, 0.25, -1.0), Vec3::new(1.5, 2.375, 3.5)],
        ];
        let com = vec![Vec3::new(1.0, 1.375, 1.25), Vec3::new(1.0625, 1.3125, 1.25)];
        ObjectTrajectory {
            fps: 20.0,
            positions,
            com,
        }
    }

    #[test]
    fn round_trip_is_bit_exact_in_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.traj");
        let trajectory = sample_trajectory();
        export_trajectory(&trajectory, &path).unwrap();
        let loaded = load_trajectory(&path).unwrap();
        // The sample uses dyadic values, exactly representable in f32.
        assert_eq!(loaded, trajectory);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.traj");
        std::fs::write(&path, b"NOTTRAJ1withsomepayload").unwrap();
        assert!(matches!(
            load_trajectory(&path),
            Err(IoError::BadMagic { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.traj");
        export_trajectory(&sample_trajectory(), &path).unwrap();
        let mut data = std::fs::read(&path).unwrap();
        data.truncate(data.len() - 4);
        std::fs::write(&path, data).unwrap();
        assert!(matches!(
            load_trajectory(&path),
            Err(IoError::Dimension { .. })
        ));
    }
}
