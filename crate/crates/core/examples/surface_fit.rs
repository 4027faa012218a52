//! Fits the elevation field to reconstructed road points and reports its
//! error against the analytic road height.

use mapforge::geometry::CameraRig;
use mapforge::pipeline::{generate, reconstruct, PipelineConfig};
use mapforge::surface::{query_elevation, SurfaceClass};

fn main() -> mapforge::Result<()> {
    let cfg = PipelineConfig::default();
    let sc = generate(&cfg, &CameraRig::surround())?;
    let rec = reconstruct(&cfg, &CameraRig::surround(), &sc.log, &sc.tracks)?;
    let field = &rec.surface.elevation;
    let raster = &rec.surface.semantics;
    let (mut sum, mut n) = (0.0, 0);
    for j in 0..raster.grid.ny {
        for i in 0..raster.grid.nx {
            if raster.class_at(i, j) == SurfaceClass::Empty {
                continue;
            }
            let c = raster.grid.cell_center(i, j);
            if let Ok(z) = query_elevation(field, &c) {
                sum += (z - sc.world.elevation(c.x, c.y)).powi(2);
                n += 1;
            }
        }
    }
    println!("elevation grid {} x {} nodes", field.grid.nx, field.grid.ny);
    println!("semantic raster {} x {} cells, {n} labeled", raster.grid.nx, raster.grid.ny);
    println!("height rmse over labeled cells: {:.3} m", (sum / n as f64).sqrt());
    Ok(())
}
