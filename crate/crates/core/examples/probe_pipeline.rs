use hoi_core::distill::ProjectionDenoiser;
use hoi_core::fixtures::{kick_fixture, synthetic_kick_clip};
use hoi_core::pipeline::run_pipeline;

fn main() {
    let fixture = kick_fixture();
    let reference = synthetic_kick_clip(40, 20.0).flatten();
    let denoiser = ProjectionDenoiser { reference: reference.clone() };
    let start = std::time::Instant::now();
    let report = run_pipeline(&fixture.config, &fixture.human, &fixture.object, &denoiser)
        .expect("pipeline should succeed");
    println!("pipeline wall time: {:.1} s", start.elapsed().as_secs_f64());
    println!("selection: {:?} (reference strike {:?})", report.selection, fixture.reference_strike);
    match &report.contact {
        Some(e) => {
            println!("contact at frame {} joint {} fraction {:.3}", e.frame, e.joint, e.contacting_fraction);
            println!("  V_human {:?}", e.human_velocity);
            println!("  normal  {:?}", e.normal);
            println!("  V_post  {:?}", e.post_velocity());
            let traj = &report.final_trajectory;
            for t in (e.frame + 1)..(e.frame + 3).min(traj.frame_count()) {
                let v = traj.com_velocity(t);
                let err = (v - e.post_velocity()).norm() / e.post_velocity().norm();
                println!("  frame {t}: com velocity {:?} rel err {:.4}", v, err);
            }
        }
        None => println!("NO CONTACT: {:?}", report.no_contact_reason),
    }
    // stage-1 contraction margin
    let flat_after_stage1_unavailable = ();
    let _ = flat_after_stage1_unavailable;
    let final_flat = report.final_motion.flatten();
    let dist: f64 = final_flat.iter().zip(&reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    println!("final motion vs reference distance: {dist:.3}");
    for s in &report.stages {
        println!("stage {} iters {} wall {:.2}s first/last loss {:?} {:?}", s.name, s.iterations, s.wall_seconds, s.losses.first(), s.losses.last());
    }
}
