use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::world::GroundTruthWorld;
use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub gnss_sigma_xy: f64,
    pub gnss_sigma_z: f64,
    pub odom_sigma_trans: f64,
    pub odom_sigma_rot: f64,
    pub pixel_sigma: f64,
    pub track_dropout: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            gnss_sigma_xy: 0.5,
            gnss_sigma_z: 1.0,
            odom_sigma_trans: 0.02,
            odom_sigma_rot: 0.002,
            pixel_sigma: 0.5,
            track_dropout: 0.1,
        }
    }
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            gnss_sigma_xy: 0.0,
            gnss_sigma_z: 0.0,
            odom_sigma_trans: 0.0,
            odom_sigma_rot: 0.0,
            pixel_sigma: 0.0,
            track_dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gnss_sigma_xy", self.gnss_sigma_xy),
            ("gnss_sigma_z", self.gnss_sigma_z),
            ("odom_sigma_trans", self.odom_sigma_trans),
            ("odom_sigma_rot", self.odom_sigma_rot),
            ("pixel_sigma", self.pixel_sigma),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidSpec(format!("noise.{name}")));
            }
        }
        if !(self.track_dropout >= 0.0 && self.track_dropout < 1.0) {
            return Err(Error::InvalidSpec("noise.track_dropout".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnssFix {
    pub frame: u32,
    pub timestamp: f64,
    pub position: [f64; 3],
    pub sigma_xy: f64,
    pub sigma_z: f64,
}

impl GnssFix {
    pub fn position_vec(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdometryDelta {
    pub from: u32,
    pub to: u32,
    /// Measured `T_body(from)_body(to)`.
    pub delta: Pose,
    pub sigma_trans: f64,
    pub sigma_rot: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SensorLog {
    /// `(frame, timestamp)` of every frame.
    pub frames: Vec<(u32, f64)>,
    pub gnss: Vec<GnssFix>,
    pub relative_odometry: Vec<OdometryDelta>,
}

pub(crate) fn gaussian3(rng: &mut ChaCha8Rng, sigma: Vector3<f64>) -> Vector3<f64> {
    let mut n = || -> f64 { StandardNormal.sample(rng) };
    let v = Vector3::new(n(), n(), n());
    v.component_mul(&sigma)
}

pub fn simulate_sensors(world: &GroundTruthWorld, noise: &NoiseSpec, seed: u64) -> Result<SensorLog> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traj = &world.trajectory;
    let sxy = noise.gnss_sigma_xy;
    let sz = noise.gnss_sigma_z;

    let gnss = traj
        .iter()
        .map(|t| {
            let p = t.pose.translation + gaussian3(&mut rng, Vector3::new(sxy, sxy, sz));
            GnssFix { frame: t.frame, timestamp: t.timestamp, position: p.into(), sigma_xy: sxy, sigma_z: sz }
        })
        .collect();

    let relative_odometry = traj
        .windows(2)
        .map(|w| {
            let truth = w[0].pose.inverse().compose(&w[1].pose);
            let dr = gaussian3(&mut rng, Vector3::repeat(noise.odom_sigma_rot));
            let dt = gaussian3(&mut rng, Vector3::repeat(noise.odom_sigma_trans));
            let delta = Pose::new(UnitQuaternion::from_scaled_axis(dr) * truth.rotation, truth.translation + dt);
            OdometryDelta {
                from: w[0].frame,
                to: w[1].frame,
                delta,
                sigma_trans: noise.odom_sigma_trans,
                sigma_rot: noise.odom_sigma_rot,
            }
        })
        .collect();

    Ok(SensorLog { frames: traj.iter().map(|t| (t.frame, t.timestamp)).collect(), gnss, relative_odometry })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_world, WorldSpec};

    #[test]
    fn zero_noise_is_exact() {
        let w = generate_world(&WorldSpec::default()).unwrap();
        let log = simulate_sensors(&w, &NoiseSpec::zero(), 1).unwrap();
        assert_eq!(log.relative_odometry.len(), w.trajectory.len() - 1);
        for (g, t) in log.gnss.iter().zip(&w.trajectory) {
            assert_eq!(Vector3::from(g.position), t.pose.translation);
            assert_eq!(g.timestamp, t.timestamp);
        }
        for (o, t) in log.relative_odometry.iter().zip(w.trajectory.windows(2)) {
            let truth = t[0].pose.inverse().compose(&t[1].pose);
            let (a, d) = o.delta.distance_to(&truth);
            assert!(a < 1e-12 && d < 1e-12);
        }
    }

    #[test]
    fn gnss_noise_statistics() {
        let spec = WorldSpec { frame_count: 10_000, frame_spacing: 0.02, road_length: 240.0, ..WorldSpec::default() };
        let w = generate_world(&spec).unwrap();
        let noise = NoiseSpec { gnss_sigma_xy: 0.5, ..NoiseSpec::zero() };
        let log = simulate_sensors(&w, &noise, 9).unwrap();
        let errs: Vec<f64> =
            log.gnss.iter().zip(&w.trajectory).map(|(g, t)| g.position[0] - t.pose.translation.x).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (errs.len() - 1) as f64).sqrt();
        assert!((std - 0.5).abs() < 0.05, "std {std}");
    }

    #[test]
    fn rejects_negative_sigma() {
        let w = generate_world(&WorldSpec::default()).unwrap();
        let noise = NoiseSpec { odom_sigma_rot: -1.0, ..NoiseSpec::default() };
        assert!(matches!(simulate_sensors(&w, &noise, 0), Err(Error::InvalidSpec(_))));
        let noise = NoiseSpec { track_dropout: 1.0, ..NoiseSpec::default() };
        assert!(noise.validate().is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let w = generate_world(&WorldSpec::default()).unwrap();
        let a = simulate_sensors(&w, &NoiseSpec::default(), 3).unwrap();
        let b = simulate_sensors(&w, &NoiseSpec::default(), 3).unwrap();
        let c = simulate_sensors(&w, &NoiseSpec::default(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
