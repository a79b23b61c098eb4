//! Command-line interface for the interaction engine.
//!
//! Subcommands: `simulate` (free-motion MPM only), `select` (print the
//! strike joint/frame of a motion), `optimize` (stages 1-3 against an
//! existing trajectory), `run` (full pipeline), `render` (images from a
//! trajectory + motion pair), and `inspect` (validate and pretty-print any
//! artifact file).
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 runtime error.
//! Environment: `HOI_THREADS` caps worker parallelism (0 = auto),
//! `HOI_SEED` overrides the configured seed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hoi_core::io::{self, IoError};
use hoi_core::kinematics::{
    forward_kinematics, select_contact_joint_and_frame, skin_splats, velocity_profile,
};
use hoi_core::mpm::{cfl_warning, simulate};
use hoi_core::pipeline::{run_pipeline, run_pipeline_with_trajectory, RunReport};
use hoi_core::render::{orbit_cameras, render_frame};
use hoi_core::scene::{builtin_humanoid_skeleton, validate_scene, SceneConfig, Splat};
use hoi_core::{Real, Vec3};

#[derive(Parser)]
#[command(
    name = "hoi",
    about = "Desk-scale human-object interaction engine",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: CommandKind,
}

#[derive(Subcommand)]
enum CommandKind {
    /// Run the free-motion object simulation and write a trajectory file.
    Simulate(SimulateArgs),
    /// Print the strike joint and frame selected from a motion file.
    Select(SelectArgs),
    /// Run optimization stages 1-3 against an existing free trajectory.
    Optimize(OptimizeArgs),
    /// Run the full pipeline: simulate, optimize, contact, re-simulate.
    Run(RunArgs),
    /// Render composed frames from a trajectory + motion pair.
    Render(RenderArgs),
    /// Validate and pretty-print any artifact file.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output trajectory file.
    #[arg(long)]
    out: PathBuf,
    /// Accept unknown config keys with a warning instead of an error.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct SelectArgs {
    /// Motion file to analyze.
    #[arg(long)]
    motion: PathBuf,
    /// Skeleton file (defaults to the built-in 24-joint humanoid).
    #[arg(long)]
    skeleton: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Free-motion trajectory produced by `simulate`.
    #[arg(long)]
    trajectory: PathBuf,
    /// Output directory for the report and artifacts.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the report and artifacts.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    config: PathBuf,
    /// Trajectory file for the object (e.g. from a run's output).
    #[arg(long)]
    trajectory: PathBuf,
    /// Motion file for the human (e.g. from a run's output).
    #[arg(long)]
    motion: PathBuf,
    /// Frame range "a..b" (inclusive) or a single index; all frames when
    /// omitted.
    #[arg(long)]
    frames: Option<String>,
    /// Number of orbit cameras.
    #[arg(long, default_value_t = 1)]
    cameras: usize,
    /// Orbit radius in meters.
    #[arg(long, default_value_t = 3.0)]
    radius: Real,
    /// Orbit elevation angle in radians.
    #[arg(long, default_value_t = 0.35)]
    elevation: Real,
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Output directory for PPM images.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct InspectArgs {
    /// Artifact to inspect: config, skeleton, motion, report, trajectory,
    /// or PLY point cloud.
    file: PathBuf,
}

/// Errors carry the exit code the contract assigns them.
enum CliError {
    /// Bad input data: exit 1.
    Validation(String),
    /// Runtime failure: exit 2.
    Runtime(String),
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage and unknown-flag errors exit with the validation code.
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };

    if let Some(threads) = read_env_threads() {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let result = match cli.command {
        CommandKind::Simulate(args) => cmd_simulate(args),
        CommandKind::Select(args) => cmd_select(args),
        CommandKind::Optimize(args) => cmd_optimize(args),
        CommandKind::Run(args) => cmd_run(args),
        CommandKind::Render(args) => cmd_render(args),
        CommandKind::Inspect(args) => cmd_inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn read_env_threads() -> Option<usize> {
    let raw = std::env::var("HOI_THREADS").ok()?;
    match raw.trim().parse::<usize>() {
        Ok(0) | Err(_) => None, // 0 = auto
        Ok(n) => Some(n),
    }
}

/// Loads a config, applying the `HOI_SEED` override and printing lenient
/// warnings plus any CFL advisory.
fn load_config(path: &Path, lenient: bool) -> Result<(SceneConfig, PathBuf), CliError> {
    let (mut config, warnings) = io::load_config(path, !lenient)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    if let Ok(seed) = std::env::var("HOI_SEED") {
        match seed.trim().parse::<u64>() {
            Ok(seed) => config.optimization.seed = seed,
            Err(_) => {
                return Err(CliError::Validation(format!(
                    "HOI_SEED must be an unsigned integer, got '{seed}'"
                )))
            }
        }
    }
    if let Some(warning) = cfl_warning(&config.mpm, &config.object.material) {
        eprintln!("warning: {warning}");
    }
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((config, base))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let (config, base) = load_config(&args.config, args.lenient)?;
    let (_, object) = io::load_scene(&config, &base)?;
    let trajectory = simulate(&object, &config.mpm, config.frames, None)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    io::export_trajectory(&trajectory, &args.out)?;
    println!(
        "simulated {} frames of {} particles -> {}",
        trajectory.frame_count(),
        trajectory.particle_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_select(args: SelectArgs) -> Result<(), CliError> {
    let motion = io::load_motion(&args.motion)?;
    let skeleton = match &args.skeleton {
        Some(path) => io::load_skeleton(path)?,
        None => builtin_humanoid_skeleton(),
    };
    let profile = velocity_profile(&skeleton, &motion)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let (joint, frame) = select_contact_joint_and_frame(&profile);
    println!("{joint} {frame}");
    Ok(())
}

fn report_summary(report: &RunReport) {
    if let Some((joint, frame)) = report.selection {
        println!("selection: joint {joint}, frame {frame}");
    }
    match &report.contact {
        Some(event) => println!(
            "contact: frame {} joint {} (fraction {:.3}), post-impact delta ({:.3}, {:.3}, {:.3}) m/s",
            event.frame,
            event.joint,
            event.contacting_fraction,
            event.post_velocity_delta.x,
            event.post_velocity_delta.y,
            event.post_velocity_delta.z
        ),
        None => println!(
            "no contact: {}",
            report.no_contact_reason.as_deref().unwrap_or("unknown")
        ),
    }
    for stage in &report.stages {
        println!(
            "stage {:13} {:5} iterations  {:8.2}s  final loss {}",
            stage.name,
            stage.iterations,
            stage.wall_seconds,
            stage
                .losses
                .last()
                .map_or("-".to_string(), |l| format!("{l:.3e}"))
        );
    }
}

fn export_run(report: &RunReport, out: &Path) -> Result<(), CliError> {
    let path = io::export_report(report, out)?;
    println!("report: {}", path.display());
    Ok(())
}

fn cmd_optimize(args: OptimizeArgs) -> Result<(), CliError> {
    let (config, base) = load_config(&args.config, args.lenient)?;
    let (human, object) = io::load_scene(&config, &base)?;
    let denoiser = io::build_denoiser(&config, human.skeleton.joint_count(), &base)?;
    let trajectory = io::load_trajectory(&args.trajectory)?;
    let report =
        run_pipeline_with_trajectory(&config, &human, &object, denoiser.as_ref(), trajectory)
            .map_err(|failure| {
                let _ = io::export_report(&failure.partial, &args.out);
                CliError::Runtime(failure.error.to_string())
            })?;
    report_summary(&report);
    export_run(&report, &args.out)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let (config, base) = load_config(&args.config, args.lenient)?;
    let (human, object) = io::load_scene(&config, &base)?;
    let denoiser = io::build_denoiser(&config, human.skeleton.joint_count(), &base)?;
    let report = run_pipeline(&config, &human, &object, denoiser.as_ref()).map_err(|failure| {
        let _ = io::export_report(&failure.partial, &args.out);
        CliError::Runtime(failure.error.to_string())
    })?;
    report_summary(&report);
    export_run(&report, &args.out)
}

fn parse_frames(spec: Option<&str>, frames: usize) -> Result<(usize, usize), CliError> {
    let Some(spec) = spec else {
        return Ok((0, frames.saturating_sub(1)));
    };
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| CliError::Validation(format!("bad frame index '{s}'")))
    };
    let (lo, hi) = match spec.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let k = parse(spec)?;
            (k, k)
        }
    };
    if lo > hi || hi >= frames {
        return Err(CliError::Validation(format!(
            "frame range {lo}..{hi} out of bounds for {frames} frames"
        )));
    }
    Ok((lo, hi))
}

fn cmd_render(args: RenderArgs) -> Result<(), CliError> {
    let (config, base) = load_config(&args.config, args.lenient)?;
    let (human, object) = io::load_scene(&config, &base)?;
    let trajectory = io::load_trajectory(&args.trajectory)?;
    let motion = io::load_motion(&args.motion)?;
    if motion.frame_count() != trajectory.frame_count() {
        return Err(CliError::Validation(format!(
            "motion has {} frames, trajectory {}",
            motion.frame_count(),
            trajectory.frame_count()
        )));
    }
    if motion.joint_count() != human.skeleton.joint_count() {
        return Err(CliError::Validation(format!(
            "motion drives {} joints, human has {}",
            motion.joint_count(),
            human.skeleton.joint_count()
        )));
    }
    let (lo, hi) = parse_frames(args.frames.as_deref(), trajectory.frame_count())?;
    if args.cameras == 0 {
        return Err(CliError::Validation("at least one camera is required".into()));
    }

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;

    // Orbit around the midpoint of the human and the object at the first
    // rendered frame.
    let first_pose = forward_kinematics(&human.skeleton, &motion.frame(lo))
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let center = (first_pose.joint_positions[0] + trajectory.com[lo]) / 2.0;
    let cameras = orbit_cameras(
        args.cameras,
        args.radius,
        args.elevation,
        center,
        50f64.to_radians(),
        args.size,
        args.size,
    );

    let background = [1.0, 1.0, 1.0];
    for frame in lo..=hi {
        let posed = forward_kinematics(&human.skeleton, &motion.frame(frame))
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let human_positions = skin_splats(&human, &posed);
        let mut splats: Vec<Splat> = human
            .canonical_splats
            .iter()
            .zip(&human_positions)
            .map(|(s, p)| Splat::new(*p, s.radius, s.opacity, s.color))
            .collect();
        splats.extend(
            object
                .splats
                .iter()
                .zip(&trajectory.positions[frame])
                .map(|(s, p)| Splat::new(*p, s.radius, s.opacity, s.color)),
        );
        for (c, camera) in cameras.iter().enumerate() {
            let image = render_frame(&splats, camera, background);
            let path = args.out.join(format!("cam{c:02}_frame{frame:04}.ppm"));
            image
                .write_ppm(&path)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        }
    }
    println!(
        "rendered {} frames x {} cameras -> {}",
        hi - lo + 1,
        args.cameras,
        args.out.display()
    );
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<(), CliError> {
    let path = &args.file;
    let bytes = std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;

    if bytes.starts_with(io::TRAJECTORY_MAGIC) {
        let t = io::load_trajectory(path)?;
        println!("trajectory: {} frames, {} particles, {} fps", t.frame_count(), t.particle_count(), t.fps);
        for frame in [0, t.frame_count() - 1] {
            let c = t.com[frame];
            println!("  frame {frame}: com ({:.4}, {:.4}, {:.4})", c.x, c.y, c.z);
        }
        return Ok(());
    }
    if bytes.starts_with(b"ply") {
        let p = io::load_ply_points(path)?;
        println!(
            "ply point cloud: {} points, colors: {}",
            p.positions.len(),
            if p.colors.is_some() { "yes" } else { "no" }
        );
        return Ok(());
    }

    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Validation(format!("{}: not a known binary or text artifact", path.display())))?;
    let value: toml::Value = toml::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let table = value.as_table();
    let has = |k: &str| table.map_or(false, |t| t.contains_key(k));

    if has("stages") {
        let report = io::load_report(path)?;
        println!("run report (seed {})", report.seed);
        report_summary(&report);
        return Ok(());
    }
    if has("root_translation") {
        let motion = io::load_motion(path)?;
        println!(
            "motion: {} frames, {} joints, {} fps, frame dim {}",
            motion.frame_count(),
            motion.joint_count(),
            motion.fps,
            motion.frame_dim()
        );
        return Ok(());
    }
    if has("parents") {
        let skeleton = io::load_skeleton(path)?;
        println!("skeleton: {} joints", skeleton.joint_count());
        return Ok(());
    }

    // Otherwise treat it as a scene config.
    let (config, warnings) = io::load_config(path, false)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let violations = validate_scene(&config);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        return Err(CliError::Validation(format!("{} violations", violations.len())));
    }
    println!("scene config: valid");
    println!(
        "  frames {} @ {} fps, grid {}^3, dt {:.1e} x {} substeps/frame",
        config.frames,
        config.fps,
        config.mpm.grid_resolution,
        config.mpm.substep_dt,
        config.mpm.substeps_per_frame
    );
    let gravity = Vec3::from_column_slice(&config.mpm.gravity);
    println!(
        "  gravity ({:.2}, {:.2}, {:.2}), restitution {}, tau {}, d_contact {}",
        gravity.x,
        gravity.y,
        gravity.z,
        config.object.material.restitution,
        config.contact.tau_contact,
        config.contact.d_contact
    );
    Ok(())
}
