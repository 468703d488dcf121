use serde::{Deserialize, Serialize};

use super::Mpc;
use crate::math::{db_from_linear, Vec3};
use crate::projection::Pose;
use crate::spectrum::SpectrumGrid;

/// Gaussian-shaped main lobe of a scanning beam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Psf {
    /// Full width at half maximum (rad).
    pub beamwidth: f64,
    /// Kernel support in standard deviations.
    pub truncate_sigma: f64,
}

impl Default for Psf {
    fn default() -> Self {
        Psf {
            beamwidth: 6f64.to_radians(),
            truncate_sigma: 3.0,
        }
    }
}

impl Psf {
    pub fn sigma(&self) -> f64 {
        self.beamwidth / (2.0 * (2.0 * 2f64.ln()).sqrt())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpectrumStats {
    pub deposited: usize,
    pub dropped: usize,
}

fn deposit(
    dirs: &[(Vec3, f64)],
    pose: &Pose,
    floor_db: f64,
    psf: Option<&Psf>,
) -> (SpectrumGrid, SpectrumStats) {
    let n = pose.pixel_count();
    let mut power = vec![0.0; n];
    let mut stats = SpectrumStats::default();
    let pixel_dirs = psf.map(|_| pose.directions());
    for (dir, p) in dirs {
        match (psf, &pixel_dirs) {
            (Some(psf), Some(pd)) => {
                let sigma = psf.sigma();
                let cut = psf.truncate_sigma * sigma;
                let cos_cut = cut.cos();
                let mut weights = Vec::new();
                for (i, d) in pd.iter().enumerate() {
                    let c = d.dot(dir);
                    if c >= cos_cut {
                        let th = crate::math::angle_between(d, dir);
                        weights.push((i, (-0.5 * (th / sigma).powi(2)).exp()));
                    }
                }
                let total: f64 = weights.iter().map(|w| w.1).sum();
                if total <= 0.0 || pose.direction_to_pixel(dir).is_none() {
                    stats.dropped += 1;
                    continue;
                }
                for (i, w) in weights {
                    power[i] += p * w / total;
                }
                stats.deposited += 1;
            }
            _ => match pose.direction_to_pixel(dir) {
                Some((c, r)) => {
                    power[r * pose.width + c] += p;
                    stats.deposited += 1;
                }
                None => stats.dropped += 1,
            },
        }
    }
    let values = power
        .iter()
        .map(|&p| if p > 0.0 { db_from_linear(p).unwrap_or(floor_db) } else { floor_db })
        .collect();
    let grid = SpectrumGrid::pathloss(pose, values, floor_db).expect("raster sized from pose");
    (grid, stats)
}

/// Rx-side spectrum: each MPC's power lands in the pixel containing its AoA
/// (colliding paths add in linear power), optionally spread by a beam PSF.
pub fn mpcs_to_spectrum(mpcs: &[Mpc], pose: &Pose, floor_db: f64, psf: Option<&Psf>) -> (SpectrumGrid, SpectrumStats) {
    let dirs: Vec<(Vec3, f64)> = mpcs.iter().map(|m| (m.aoa_dir(), m.linear_power())).collect();
    deposit(&dirs, pose, floor_db, psf)
}

/// Tx-side spectrum, binning by AoD in the Tx pose raster.
pub fn mpcs_to_tx_spectrum(mpcs: &[Mpc], tx_pose: &Pose, floor_db: f64, psf: Option<&Psf>) -> (SpectrumGrid, SpectrumStats) {
    let dirs: Vec<(Vec3, f64)> = mpcs.iter().map(|m| (m.aod_dir(), m.linear_power())).collect();
    deposit(&dirs, tx_pose, floor_db, psf)
}
