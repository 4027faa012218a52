use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const WORLD: &str = "world.json";
pub const RIG: &str = "rig.json";
pub const SENSOR_LOG: &str = "sensor_log.json";
pub const TRACKS: &str = "tracks.json";
pub const INSTANCES: &str = "instances";
pub const POSES_WIGO: &str = "poses_wigo.json";
pub const WIGO_TRACE: &str = "wigo_trace.json";
pub const SPARSE_MODEL: &str = "sparse_model.json";
pub const POSES_REFINED: &str = "poses_refined.json";
pub const BA_TRACE: &str = "ba_trace.json";
pub const SFM_STATS: &str = "sfm_stats.json";
pub const ELEVATION: &str = "elevation.json";
pub const SEMANTICS: &str = "semantics.json";
pub const MAP: &str = "map.json";
pub const REPORT: &str = "report.json";
pub const OVERLAYS: &str = "overlays";
pub const EXPERIMENT: &str = "experiment.json";
pub const EFFECTIVE_CONFIG: &str = "effective_config.json";
const LOCK: &str = ".mapforge.lock";

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_vec(value)?)
}

pub fn write_json_pretty<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Reads an upstream artifact; a missing file is reported by its name
/// relative to the output directory.
pub fn read_json<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(name.to_string()),
        _ => Error::Io(e),
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn instance_file_name(frame: u32, camera: &str) -> String {
    format!("{frame:06}_{camera}.json")
}

/// Exclusive ownership of an output directory for the lifetime of the guard.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
