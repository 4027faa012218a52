//! Fuses noisy GNSS with wheel odometry and compares against dead reckoning.

use mapforge::pipeline::{generate, PipelineConfig};
use mapforge::scenario::PoseTable;
use mapforge::wigo::{build_graph, optimize};

fn main() -> mapforge::Result<()> {
    let cfg = PipelineConfig::default();
    let sc = generate(&cfg, &mapforge::geometry::CameraRig::surround())?;
    let truth = sc.world.poses();
    let graph = build_graph(&sc.log)?;
    let fused = optimize(&graph, &cfg.wigo)?;
    let rmse = |poses: &PoseTable| {
        let s: f64 = poses.iter().map(|(f, p)| (p.translation - truth[f].translation).norm_squared()).sum();
        (s / poses.len() as f64).sqrt()
    };
    println!("factors: {} gnss, {} relative", graph.gnss_factors.len(), graph.relative_factors.len());
    println!(
        "{} iterations, {:?}, cost {:.3} -> {:.3}",
        fused.trace.iterations,
        fused.trace.termination,
        fused.trace.costs[0],
        fused.trace.costs.last().unwrap()
    );
    println!("position rmse: dead reckoning {:.3} m, fused {:.3} m", rmse(&graph.nodes), rmse(&fused.poses));
    Ok(())
}
