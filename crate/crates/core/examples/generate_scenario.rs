//! Builds the default synthetic world and summarizes what the vehicle records.

use mapforge::geometry::CameraRig;
use mapforge::pipeline::{generate, PipelineConfig};

fn main() -> mapforge::Result<()> {
    let cfg = PipelineConfig::default();
    let sc = generate(&cfg, &CameraRig::surround())?;
    println!("frames: {}", sc.world.trajectory.len());
    for class in mapforge::vectorize::ElementClass::ALL {
        let n = sc.world.map.elements.iter().filter(|e| e.class == class).count();
        println!("{:>12}: {n} elements", class.name());
    }
    let (zmin, zmax) = sc
        .world
        .map
        .elements
        .iter()
        .flat_map(|e| e.polyline.points().iter().map(|p| p.z))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), z| (a.min(z), b.max(z)));
    println!("map height range: {zmin:.2} .. {zmax:.2} m");
    println!("gnss fixes: {}, odometry deltas: {}", sc.log.gnss.len(), sc.log.relative_odometry.len());
    println!("tracks: {}, observations: {}", sc.tracks.tracks.len(), sc.tracks.observation_count());
    let instances: usize = sc.instances.values().map(Vec::len).sum();
    println!("observed instances: {instances} over {} images", sc.instances.len());
    Ok(())
}
