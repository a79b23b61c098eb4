//! Explicit MLS-MPM simulation of the particle object.
//!
//! One substep is the standard three-phase cycle: particle-to-grid scatter
//! with quadratic B-spline weights and fixed-corotated stress, grid momentum
//! update with gravity and boundary conditions, and grid-to-particle gather
//! updating velocity, the APIC affine matrix, position, and the deformation
//! gradient.
//!
//! Determinism contract: output is bit-identical across runs and across
//! thread counts. The parallel path only parallelizes pure per-particle
//! work (stress/weight evaluation and the G2P gather); every scatter and
//! reduction is applied serially in particle/node index order. The serial
//! path (`parallel = false`) is the reference the parallel path is tested
//! against, bit for bit.

mod solver;

pub use solver::{init_sim, resimulate_from, simulate, Simulator, SubstepStats};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::MaterialParams;
use crate::{Mat3, Real, Vec3};

/// MPM discretization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpmParams {
    /// Cells per axis of the cubic background grid.
    pub grid_resolution: usize,
    /// World-space edge length of the cubic domain, meters.
    pub domain_extent: Real,
    /// World position of the domain's minimum corner. When absent the
    /// domain is centered on the object's initial center of mass.
    pub grid_origin: Option<[Real; 3]>,
    /// Substep length in seconds.
    pub substep_dt: Real,
    /// Substeps advanced per output frame; together with `substep_dt` this
    /// fixes the frame pacing (default 1250 x 4e-5 s = 20 FPS).
    pub substeps_per_frame: usize,
    pub gravity: [Real; 3],
    pub boundary: BoundaryKind,
    /// Enables the parallel per-particle phases. Results are bit-identical
    /// to the serial reference either way.
    pub parallel: bool,
}

impl Default for MpmParams {
    fn default() -> Self {
        Self {
            grid_resolution: 64,
            domain_extent: 4.0,
            grid_origin: None,
            substep_dt: 4e-5,
            substeps_per_frame: 1250,
            gravity: [0.0, -9.8, 0.0],
            boundary: BoundaryKind::Sticky,
            parallel: true,
        }
    }
}

impl MpmParams {
    pub fn cell_size(&self) -> Real {
        self.domain_extent / self.grid_resolution as Real
    }

    /// Seconds of simulated time per output frame.
    pub fn frame_dt(&self) -> Real {
        self.substep_dt * self.substeps_per_frame as Real
    }

    /// Output frame rate implied by the substep pacing.
    pub fn fps(&self) -> Real {
        1.0 / self.frame_dt()
    }

    pub fn gravity_vec(&self) -> Vec3 {
        Vec3::from_column_slice(&self.gravity)
    }
}

/// Treatment of grid nodes in the three-cell band at the domain walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Velocity zeroed in the band (particles stick).
    Sticky,
    /// Normal velocity component zeroed in the band (particles slide).
    Slip,
    /// No boundary handling; escaping the domain is an error.
    None,
}

/// Sound-speed sanity check: warns when the substep is too long for the
/// material's stiffness at the configured cell size.
pub fn cfl_warning(params: &MpmParams, material: &MaterialParams) -> Option<String> {
    let (mu, lambda) = material.lame();
    let sound_speed = ((lambda + 2.0 * mu) / material.density).sqrt();
    let travel = params.substep_dt * sound_speed;
    let dx = params.cell_size();
    if travel >= dx {
        Some(format!(
            "substep_dt {} x sound speed {:.1} m/s = {:.3e} m exceeds the cell size {:.3e} m; \
             expect instability",
            params.substep_dt, sound_speed, travel, dx
        ))
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpmError {
    #[error("particle {particle} at ({x:.4}, {y:.4}, {z:.4}) is outside the safe domain margin at substep {step}")]
    OutOfDomain {
        particle: usize,
        x: Real,
        y: Real,
        z: Real,
        step: u64,
    },
    #[error("deformation gradient of particle {particle} inverted (det <= 0) at substep {step} (frame {frame})")]
    Inverted { particle: usize, step: u64, frame: u64 },
    #[error("frame {frame} out of range; trajectory has {frames} frames")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error("object has no particles")]
    EmptyObject,
}

/// Full per-particle simulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    /// APIC affine velocity matrices C.
    pub affine: Vec<Mat3>,
    /// Deformation gradients F; det(F) > 0 is an invariant.
    pub deformation: Vec<Mat3>,
    pub masses: Vec<Real>,
    pub volumes: Vec<Real>,
    /// Substeps taken since initialization.
    pub step: u64,
}

impl SimState {
    pub fn particle_count(&self) -> usize {
        self.positions.len()
    }

    pub fn total_mass(&self) -> Real {
        self.masses.iter().sum()
    }

    pub fn total_momentum(&self) -> Vec3 {
        self.positions
            .iter()
            .zip(&self.velocities)
            .zip(&self.masses)
            .fold(Vec3::zeros(), |acc, ((_, v), &m)| acc + v * m)
    }

    /// Mass-weighted center of mass.
    pub fn center_of_mass(&self) -> Vec3 {
        center_of_mass(&self.positions, &self.masses)
    }
}

pub(crate) fn center_of_mass(positions: &[Vec3], masses: &[Real]) -> Vec3 {
    let mut acc = Vec3::zeros();
    let mut total = 0.0;
    for (x, &m) in positions.iter().zip(masses) {
        acc += x * m;
        total += m;
    }
    acc / total
}

/// Per-frame particle positions and centers of mass of one simulation run.
/// Frame 0 is the initial state; frame k is the state after k groups of
/// `substeps_per_frame` substeps.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrajectory {
    /// Output frame rate (from the substep pacing).
    pub fps: Real,
    /// `positions[frame][particle]`.
    pub positions: Vec<Vec<Vec3>>,
    /// Mass-weighted center of mass per frame.
    pub com: Vec<Vec3>,
}

impl ObjectTrajectory {
    pub fn frame_count(&self) -> usize {
        self.positions.len()
    }

    pub fn particle_count(&self) -> usize {
        self.positions.first().map_or(0, |f| f.len())
    }

    /// Backward-difference center-of-mass velocity at `frame`, in m/s.
    pub fn com_velocity(&self, frame: usize) -> Vec3 {
        assert!(frame >= 1 && frame < self.frame_count());
        (self.com[frame] - self.com[frame - 1]) * self.fps
    }
}
