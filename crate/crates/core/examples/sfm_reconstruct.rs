//! Fuses the simulated sensor log, then reconstructs sparse road points with
//! the rigid multi-camera bundle adjustment.

use std::time::Instant;

use mapforge::geometry::CameraRig;
use mapforge::scenario::{generate_tracks, generate_world, simulate_sensors, NoiseSpec, TrackSpec, WorldSpec};
use mapforge::sfm::{run_sfm, SfmConfig};
use mapforge::wigo::{build_graph, optimize, WigoConfig};

fn main() -> mapforge::Result<()> {
    let world = generate_world(&WorldSpec::default())?;
    let rig = CameraRig::surround();
    let noise = NoiseSpec::default();
    let log = simulate_sensors(&world, &noise, 1)?;
    let fused = optimize(&build_graph(&log)?, &WigoConfig::default())?;
    let tracks = generate_tracks(&world, &rig, &noise, &TrackSpec::default(), 2)?;

    let start = Instant::now();
    let out = run_sfm(&fused.poses, &rig, &tracks, world.spec.wheel_offset, &SfmConfig::default())?;
    println!("sfm took {:.1}s", start.elapsed().as_secs_f64());
    println!("{:#?}", out.stats);
    for (i, r) in out.trace.rounds.iter().enumerate() {
        println!(
            "round {i}: {} points, {} iterations ({:?}), rms {:.3} -> {:.3} px, removed {}",
            r.points, r.iterations, r.termination, r.rms_before, r.rms_after, r.removed
        );
    }
    let truth = world.poses();
    let rmse = |poses: &mapforge::scenario::PoseTable| {
        let s: f64 = poses.iter().map(|(f, p)| (p.translation - truth[f].translation).norm_squared()).sum();
        (s / poses.len() as f64).sqrt()
    };
    println!("position rmse: fused {:.3} m, refined {:.3} m", rmse(&fused.poses), rmse(&out.model.poses));
    Ok(())
}
