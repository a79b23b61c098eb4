//! The MLS-MPM substep loop: APIC-style affine transfers over quadratic
//! B-spline kernels, fixed-corotated hyperelasticity, and a stamped dense
//! grid so only touched nodes are cleared and visited.

use rayon::prelude::*;

use super::{center_of_mass, BoundaryKind, MpmError, MpmParams, ObjectTrajectory, SimState};
use crate::scene::{MaterialParams, ParticleObject};
use crate::{Mat3, Real, Vec3};

/// Rotation factor of the polar decomposition of `f`, sign-corrected so the
/// result is a proper rotation (det = +1) even for reflective inputs.
pub(crate) fn polar_rotation(f: &Mat3) -> Mat3 {
    let svd = f.svd(true, true);
    let mut u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let r = u * v_t;
    if r.determinant() < 0.0 {
        // Singular values are sorted descending; flip the least one.
        let flipped = -u.column(2).clone_owned();
        u.set_column(2, &flipped);
        u * v_t
    } else {
        r
    }
}

/// Per-particle scatter payload, computed in the (optionally parallel)
/// pure phase and applied to the grid serially in particle order.
#[derive(Clone)]
struct ScatterTask {
    base: [usize; 3],
    /// Per-offset, per-axis quadratic B-spline weights.
    weights: [Vec3; 3],
    /// Cell-relative particle position, in grid units.
    fx: Vec3,
    /// Fused stress + APIC momentum matrix.
    affine: Mat3,
    mass: Real,
    momentum: Vec3,
}

impl Default for ScatterTask {
    fn default() -> Self {
        Self {
            base: [0; 3],
            weights: [Vec3::zeros(); 3],
            fx: Vec3::zeros(),
            affine: Mat3::zeros(),
            mass: 0.0,
            momentum: Vec3::zeros(),
        }
    }
}

/// Diagnostics from one substep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstepStats {
    /// Total mass on the grid after the particle-to-grid transfer. Equals
    /// the total particle mass up to roundoff (partition of unity).
    pub grid_mass: Real,
}

/// Reusable solver scratch: background grid plus per-particle buffers.
pub struct Simulator {
    params: MpmParams,
    origin: Vec3,
    nodes: usize,
    dx: Real,
    inv_dx: Real,
    mu: Real,
    lambda: Real,
    grid_mass: Vec<Real>,
    /// Holds momentum during scatter, velocity after the grid update.
    grid_velocity: Vec<Vec3>,
    stamp: Vec<u64>,
    touched: Vec<u32>,
    epoch: u64,
    tasks: Vec<Result<ScatterTask, MpmError>>,
    gathered: Vec<(Vec3, Mat3)>,
}

impl Simulator {
    pub fn new(params: MpmParams, material: MaterialParams, origin: Vec3) -> Self {
        let nodes = params.grid_resolution + 1;
        let dx = params.cell_size();
        let (mu, lambda) = material.lame();
        let node_count = nodes * nodes * nodes;
        Self {
            params,
            origin,
            nodes,
            dx,
            inv_dx: 1.0 / dx,
            mu,
            lambda,
            grid_mass: vec![0.0; node_count],
            grid_velocity: vec![Vec3::zeros(); node_count],
            stamp: vec![0; node_count],
            touched: Vec::new(),
            epoch: 0,
            tasks: Vec::new(),
            gathered: Vec::new(),
        }
    }

    pub fn params(&self) -> &MpmParams {
        &self.params
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    #[inline]
    fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.nodes + j) * self.nodes + k
    }

    fn build_task(&self, state: &SimState, p: usize) -> Result<ScatterTask, MpmError> {
        let xg = (state.positions[p] - self.origin) * self.inv_dx;
        let base = xg - Vec3::repeat(0.5);
        let base = [base.x.floor(), base.y.floor(), base.z.floor()];
        for (axis, &b) in base.iter().enumerate() {
            if !(b >= 0.0 && b + 2.0 <= (self.nodes - 1) as Real) || !xg[axis].is_finite() {
                let x = state.positions[p];
                return Err(MpmError::OutOfDomain {
                    particle: p,
                    x: x.x,
                    y: x.y,
                    z: x.z,
                    step: state.step,
                });
            }
        }
        let fx = xg - Vec3::new(base[0], base[1], base[2]);
        let weights = [
            (Vec3::repeat(1.5) - fx).map(|v| 0.5 * v * v),
            (fx - Vec3::repeat(1.0)).map(|v| 0.75 - v * v),
            (fx - Vec3::repeat(0.5)).map(|v| 0.5 * v * v),
        ];

        let f = state.deformation[p];
        let j = f.determinant();
        let r = polar_rotation(&f);
        // Fixed corotated first Piola-Kirchhoff stress, fused with F^T and
        // the MLS-MPM D^{-1} = 4/dx^2 factor.
        let pf = (f - r) * f.transpose() * (2.0 * self.mu)
            + Mat3::identity() * (self.lambda * (j - 1.0) * j);
        let stress = pf * (-self.params.substep_dt * state.volumes[p] * 4.0 * self.inv_dx * self.inv_dx);
        let mass = state.masses[p];
        Ok(ScatterTask {
            base: [base[0] as usize, base[1] as usize, base[2] as usize],
            weights,
            fx,
            affine: stress + state.affine[p] * mass,
            mass,
            momentum: state.velocities[p] * mass,
        })
    }

    fn gather(&self, task: &ScatterTask) -> (Vec3, Mat3) {
        let mut velocity = Vec3::zeros();
        let mut b = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let wij = task.weights[i].x * task.weights[j].y;
                for k in 0..3 {
                    let w = wij * task.weights[k].z;
                    let node = self.node_index(task.base[0] + i, task.base[1] + j, task.base[2] + k);
                    let v = self.grid_velocity[node];
                    let dpos = (Vec3::new(i as Real, j as Real, k as Real) - task.fx) * self.dx;
                    velocity += v * w;
                    b += (v * w) * dpos.transpose();
                }
            }
        }
        let c = b * (4.0 * self.inv_dx * self.inv_dx);
        (velocity, c)
    }

    /// Advances the state by one substep. Errors abort the step with the
    /// offending particle; no state is silently clamped.
    pub fn substep(&mut self, state: &mut SimState) -> Result<SubstepStats, MpmError> {
        let n = state.particle_count();
        let dt = self.params.substep_dt;

        // Phase 1: pure per-particle stress/weight evaluation.
        let mut tasks = std::mem::take(&mut self.tasks);
        tasks.clear();
        if self.params.parallel {
            (0..n)
                .into_par_iter()
                .map(|p| self.build_task(state, p))
                .collect_into_vec(&mut tasks);
        } else {
            tasks.extend((0..n).map(|p| self.build_task(state, p)));
        }
        if let Some(err) = tasks.iter().find_map(|t| t.as_ref().err()) {
            let err = err.clone();
            self.tasks = tasks;
            return Err(err);
        }

        // Phase 2: serial scatter in particle order (deterministic sums).
        self.epoch += 1;
        self.touched.clear();
        for task in tasks.iter().map(|t| t.as_ref().unwrap()) {
            for i in 0..3 {
                for j in 0..3 {
                    let wij = task.weights[i].x * task.weights[j].y;
                    for k in 0..3 {
                        let w = wij * task.weights[k].z;
                        let node =
                            self.node_index(task.base[0] + i, task.base[1] + j, task.base[2] + k);
                        if self.stamp[node] != self.epoch {
                            self.stamp[node] = self.epoch;
                            self.grid_mass[node] = 0.0;
                            self.grid_velocity[node] = Vec3::zeros();
                            self.touched.push(node as u32);
                        }
                        let dpos = (Vec3::new(i as Real, j as Real, k as Real) - task.fx) * self.dx;
                        self.grid_mass[node] += w * task.mass;
                        self.grid_velocity[node] += (task.momentum + task.affine * dpos) * w;
                    }
                }
            }
        }

        // Phase 3: grid momentum update, gravity, boundaries.
        let gravity = self.params.gravity_vec();
        let band = 3;
        let hi = self.nodes - 1 - band;
        let mut grid_mass_total = 0.0;
        for &node in &self.touched {
            let node = node as usize;
            let mass = self.grid_mass[node];
            grid_mass_total += mass;
            if mass <= 0.0 {
                self.grid_velocity[node] = Vec3::zeros();
                continue;
            }
            let mut v = self.grid_velocity[node] / mass + gravity * dt;
            match self.params.boundary {
                BoundaryKind::None => {}
                BoundaryKind::Sticky | BoundaryKind::Slip => {
                    let k = node % self.nodes;
                    let j = (node / self.nodes) % self.nodes;
                    let i = node / (self.nodes * self.nodes);
                    let in_band = [i < band || i > hi, j < band || j > hi, k < band || k > hi];
                    if in_band.iter().any(|&b| b) {
                        if self.params.boundary == BoundaryKind::Sticky {
                            v = Vec3::zeros();
                        } else {
                            for (axis, &b) in in_band.iter().enumerate() {
                                if b {
                                    v[axis] = 0.0;
                                }
                            }
                        }
                    }
                }
            }
            self.grid_velocity[node] = v;
        }

        // Phase 4: pure per-particle gather, then serial integration.
        let mut gathered = std::mem::take(&mut self.gathered);
        if self.params.parallel {
            tasks
                .par_iter()
                .map(|t| self.gather(t.as_ref().unwrap()))
                .collect_into_vec(&mut gathered);
        } else {
            gathered.clear();
            gathered.extend(tasks.iter().map(|t| self.gather(t.as_ref().unwrap())));
        }
        state.step += 1;
        let mut failed = None;
        for p in 0..n {
            let (v, c) = gathered[p];
            state.velocities[p] = v;
            state.affine[p] = c;
            state.positions[p] += v * dt;
            let f = (Mat3::identity() + c * dt) * state.deformation[p];
            if !(f.determinant() > 0.0) && failed.is_none() {
                failed = Some(p);
            }
            state.deformation[p] = f;
        }
        self.tasks = tasks;
        self.gathered = gathered;
        if let Some(particle) = failed {
            return Err(MpmError::Inverted {
                particle,
                step: state.step,
                frame: state.step / self.params.substeps_per_frame as u64,
            });
        }

        Ok(SubstepStats {
            grid_mass: grid_mass_total,
        })
    }
}

/// Resolves the domain's minimum corner: explicit configuration wins,
/// otherwise the domain is centered on the object's initial center of mass.
pub(crate) fn resolve_origin(object: &ParticleObject, params: &MpmParams) -> Vec3 {
    match params.grid_origin {
        Some(o) => Vec3::from_column_slice(&o),
        None => {
            let positions = object.positions();
            center_of_mass(&positions, &object.masses) - Vec3::repeat(params.domain_extent / 2.0)
        }
    }
}

/// Initializes simulation state from an object: F = I, C = 0, velocities
/// from the object's velocity field. Every particle must sit at least two
/// cells inside the domain.
pub fn init_sim(object: &ParticleObject, params: &MpmParams) -> Result<SimState, MpmError> {
    if object.particle_count() == 0 {
        return Err(MpmError::EmptyObject);
    }
    let origin = resolve_origin(object, params);
    let inv_dx = 1.0 / params.cell_size();
    let res = params.grid_resolution as Real;
    for (p, splat) in object.splats.iter().enumerate() {
        let xg = (splat.position - origin) * inv_dx;
        for axis in 0..3 {
            if !(xg[axis] >= 2.0 && xg[axis] <= res - 2.0) {
                return Err(MpmError::OutOfDomain {
                    particle: p,
                    x: splat.position.x,
                    y: splat.position.y,
                    z: splat.position.z,
                    step: 0,
                });
            }
        }
    }
    let n = object.particle_count();
    Ok(SimState {
        positions: object.positions(),
        velocities: object.velocities.clone(),
        affine: vec![Mat3::zeros(); n],
        deformation: vec![Mat3::identity(); n],
        masses: object.masses.clone(),
        volumes: object.volumes.clone(),
        step: 0,
    })
}

fn record_frame(trajectory: &mut ObjectTrajectory, state: &SimState) {
    trajectory.com.push(state.center_of_mass());
    trajectory.positions.push(state.positions.clone());
}

/// Runs `frames` output frames of free motion from the object's initial
/// state (frame 0 is that initial state). Fully deterministic.
pub fn simulate(
    object: &ParticleObject,
    params: &MpmParams,
    frames: usize,
    initial_velocity_override: Option<&[Vec3]>,
) -> Result<ObjectTrajectory, MpmError> {
    assert!(frames >= 1, "at least one output frame is required");
    let mut state = init_sim(object, params)?;
    if let Some(velocities) = initial_velocity_override {
        assert_eq!(velocities.len(), state.particle_count());
        state.velocities = velocities.to_vec();
    }
    let mut sim = Simulator::new(params.clone(), object.material, resolve_origin(object, params));
    let mut trajectory = ObjectTrajectory {
        fps: params.fps(),
        positions: Vec::with_capacity(frames),
        com: Vec::with_capacity(frames),
    };
    record_frame(&mut trajectory, &state);
    for _ in 1..frames {
        for _ in 0..params.substeps_per_frame {
            sim.substep(&mut state)?;
        }
        record_frame(&mut trajectory, &state);
    }
    Ok(trajectory)
}

/// Restarts the simulation at frame `t_c` of an existing trajectory with
/// `post_velocity` added to every particle, and splices: frames `[0, t_c]`
/// come from the original trajectory, frames `(t_c, T)` from the new run.
///
/// State reconstruction at `t_c`: positions from the trajectory; F = I and
/// C = 0 (pre-contact deformation history is discarded); per-particle base
/// velocities from the backward position difference at `t_c` (the object's
/// own initial velocities when `t_c = 0`).
pub fn resimulate_from(
    trajectory: &ObjectTrajectory,
    object: &ParticleObject,
    params: &MpmParams,
    t_c: usize,
    post_velocity: Vec3,
) -> Result<ObjectTrajectory, MpmError> {
    let frames = trajectory.frame_count();
    if t_c >= frames {
        return Err(MpmError::FrameOutOfRange {
            frame: t_c,
            frames,
        });
    }
    let n = trajectory.particle_count();
    let fps = trajectory.fps;
    let base_velocities: Vec<Vec3> = if t_c == 0 {
        object.velocities.clone()
    } else {
        (0..n)
            .map(|p| (trajectory.positions[t_c][p] - trajectory.positions[t_c - 1][p]) * fps)
            .collect()
    };

    let origin = resolve_origin(object, params);
    let mut state = SimState {
        positions: trajectory.positions[t_c].clone(),
        velocities: base_velocities.iter().map(|v| v + post_velocity).collect(),
        affine: vec![Mat3::zeros(); n],
        deformation: vec![Mat3::identity(); n],
        masses: object.masses.clone(),
        volumes: object.volumes.clone(),
        step: t_c as u64 * params.substeps_per_frame as u64,
    };

    let inv_dx = 1.0 / params.cell_size();
    let res = params.grid_resolution as Real;
    for (p, x) in state.positions.iter().enumerate() {
        let xg = (x - origin) * inv_dx;
        for axis in 0..3 {
            if !(xg[axis] >= 2.0 && xg[axis] <= res - 2.0) {
                return Err(MpmError::OutOfDomain {
                    particle: p,
                    x: x.x,
                    y: x.y,
                    z: x.z,
                    step: state.step,
                });
            }
        }
    }

    let mut sim = Simulator::new(params.clone(), object.material, origin);
    let mut out = ObjectTrajectory {
        fps,
        positions: trajectory.positions[..=t_c].to_vec(),
        com: trajectory.com[..=t_c].to_vec(),
    };
    for _ in (t_c + 1)..frames {
        for _ in 0..params.substeps_per_frame {
            sim.substep(&mut state)?;
        }
        record_frame(&mut out, &state);
    }
    Ok(out)
}
