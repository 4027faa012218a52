//! Runs both experiment arms on one seed and prints the comparison.

use std::time::Instant;

use mapforge::geometry::CameraRig;
use mapforge::pipeline::{run_experiment, PipelineConfig};

fn main() -> mapforge::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = PipelineConfig { seed, ..PipelineConfig::default() };
    let start = Instant::now();
    let run = run_experiment(&cfg, &CameraRig::surround())?;
    println!("took {:.1}s", start.elapsed().as_secs_f64());
    println!("{}", serde_json::to_string_pretty(&run.result).unwrap());
    for (name, r) in [("baseline", &run.baseline), ("reconstructed", &run.reconstructed)] {
        for (c, m) in &r.per_class {
            println!("{name:>13} {:>12} sre {:?} p {:.3} r {:.3} matched {}", c.name(), m.sre, m.precision, m.recall, m.matched);
        }
    }
    let mut counts = std::collections::BTreeMap::new();
    for e in &run.reconstruction.map.elements {
        *counts.entry(e.class.name()).or_insert(0) += 1;
    }
    println!("reconstructed elements {counts:?}");
    Ok(())
}
