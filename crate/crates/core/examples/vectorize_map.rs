//! Extracts vector elements from the reconstructed surface and writes the map.

use mapforge::geometry::CameraRig;
use mapforge::pipeline::{generate, reconstruct, PipelineConfig};

fn main() -> mapforge::Result<()> {
    let cfg = PipelineConfig::default();
    let rig = CameraRig::surround();
    let sc = generate(&cfg, &rig)?;
    let rec = reconstruct(&cfg, &rig, &sc.log, &sc.tracks)?;
    for e in &rec.map.elements {
        let first = e.polyline.points()[0];
        println!(
            "{:>3} {:>12} {:>3} vertices, {:>6.1} m, starts at ({:.1}, {:.1}, {:.2})",
            e.id,
            e.class.name(),
            e.polyline.len(),
            e.polyline.length(),
            first.x,
            first.y,
            first.z
        );
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, serde_json::to_vec_pretty(&rec.map)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
