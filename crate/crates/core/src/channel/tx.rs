use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::Result;
use crate::math::{quat_from_axis_angle, Vec3};
use crate::projection::{Pose, Projection};
use crate::rftrain::GainCache;
use crate::scene::SceneModel;
use crate::spectrum::SpectrumGrid;
use crate::splat::RenderOptions;

/// Tx raster facing `yaw` about world up with the default 180° × 90° FoV.
pub fn tx_pose(position: Vec3, yaw: f64, width: usize, height: usize) -> Result<Pose> {
    Pose::new(
        position,
        quat_from_axis_angle(&Vec3::z(), yaw),
        Projection::Equirectangular,
        PI,
        FRAC_PI_2,
        width,
        height,
    )
}

/// Tx-side spectrum aggregated from the model's Rx-side prediction: every
/// above-floor Rx pixel lands at its departure direction, strongest wins.
pub fn render_tx_spectrum(scene: &SceneModel, tx: &Pose, rx: &Pose, floor_db: f64, opts: &RenderOptions) -> Result<SpectrumGrid> {
    let cache = GainCache::build(scene, rx, floor_db, opts)?;
    Ok(tx_spectrum_from_cache(scene, &cache, tx))
}

pub(crate) fn tx_spectrum_from_cache(scene: &SceneModel, cache: &GainCache, tx: &Pose) -> SpectrumGrid {
    let floor = cache.floor_db;
    let raw = cache.predict_raw(scene);
    let mut out = vec![floor; tx.pixel_count()];
    for (px, &v) in raw.iter().enumerate() {
        let v = v.min(0.0);
        if v <= floor {
            continue;
        }
        let aod = if cache.los_pixel == Some(px) {
            cache.pose.position - scene.tx_position
        } else {
            match cache.intersection(px) {
                Some(x) => x - scene.tx_position,
                None => continue,
            }
        };
        let n = aod.norm();
        if n <= 0.0 {
            continue;
        }
        if let Some((c, r)) = tx.direction_to_pixel(&(aod / n)) {
            let slot = &mut out[r * tx.width + c];
            if v > *slot {
                *slot = v;
            }
        }
    }
    SpectrumGrid::pathloss(tx, out, floor).expect("raster sized from pose")
}
