//! Scores the ground-truth map under perturbed poses to show how the
//! reprojection error reacts to pose error.

use mapforge::evaluate::evaluate_map;
use mapforge::geometry::{CameraRig, Pose};
use mapforge::pipeline::{generate, PipelineConfig};
use nalgebra::{UnitQuaternion, Vector3};

fn main() -> mapforge::Result<()> {
    let cfg = PipelineConfig::default();
    let rig = CameraRig::surround();
    let sc = generate(&cfg, &rig)?;
    println!("{:>10} {:>10} {:>8} {:>8}", "offset[m]", "SRE[px]", "P", "R");
    for offset in [0.0, 0.05, 0.1, 0.2, 0.4] {
        let shift = Pose::new(UnitQuaternion::identity(), Vector3::new(0.0, offset, offset));
        let poses = sc.world.poses().into_iter().map(|(f, p)| (f, shift.compose(&p))).collect();
        let (r, _) = evaluate_map(&sc.world.map, &poses, &rig, &sc.instances, &cfg.evaluate)?;
        println!("{offset:>10.2} {:>10.3} {:>8.3} {:>8.3}", r.sre.unwrap_or(f64::NAN), r.precision, r.recall);
    }
    Ok(())
}
