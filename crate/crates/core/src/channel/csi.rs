use crate::error::Result;
use crate::math::{direction_angles, SPEED_OF_LIGHT};
use crate::oracle::{Mpc, MpcKind};
use crate::projection::Pose;
use crate::rftrain::GainCache;
use crate::scene::SceneModel;
use crate::splat::RenderOptions;

/// A peak must stand this far above the median of its neighborhood (dB).
pub const PEAK_PROMINENCE_DB: f64 = 6.0;
/// Side of the square neighborhood for peak tests.
pub const PEAK_WINDOW: usize = 5;

/// Local maxima of a raster that clear `floor` and stand at least
/// `prominence` dB over the median of their `window × window` neighborhood.
/// Plateaus resolve to their lowest pixel index.
pub fn find_peaks(values: &[f64], pose: &Pose, floor: f64, window: usize, prominence: f64) -> Vec<usize> {
    let h = (window / 2) as isize;
    let mut out = Vec::new();
    let mut ring = Vec::with_capacity(window * window);
    for (px, &v) in values.iter().enumerate() {
        if v <= floor {
            continue;
        }
        let (c, r) = (px % pose.width, px / pose.width);
        ring.clear();
        let mut is_max = true;
        'scan: for dr in -h..=h {
            for dc in -h..=h {
                if dr == 0 && dc == 0 {
                    continue;
                }
                // border pixels see the raster edge as floor
                let q = match pose.neighbor(c, r, dc, dr) {
                    Some((cc, rr)) => rr * pose.width + cc,
                    None => {
                        ring.push(floor);
                        continue;
                    }
                };
                if values[q] > v || (values[q] == v && q < px) {
                    is_max = false;
                    break 'scan;
                }
                ring.push(values[q].max(floor));
            }
        }
        if !is_max {
            continue;
        }
        ring.sort_by(f64::total_cmp);
        let median = ring[ring.len() / 2];
        if v - median >= prominence {
            out.push(px);
        }
    }
    out
}

/// Multipath components read off the model's predicted Rx spectrum.
pub fn extract_spatial_csi(scene: &SceneModel, rx: &Pose, floor_db: f64, opts: &RenderOptions) -> Result<Vec<Mpc>> {
    let cache = GainCache::build(scene, rx, floor_db, opts)?;
    Ok(csi_from_cache(scene, &cache))
}

pub(crate) fn csi_from_cache(scene: &SceneModel, cache: &GainCache) -> Vec<Mpc> {
    let pose = &cache.pose;
    let raw: Vec<f64> = cache.predict_raw(scene).into_iter().map(|v| v.min(0.0)).collect();
    let peaks = find_peaks(&raw, pose, cache.floor_db, PEAK_WINDOW, PEAK_PROMINENCE_DB);
    let tx = scene.tx_position;
    let rxp = pose.position;
    let mut out = Vec::with_capacity(peaks.len());
    for px in peaks {
        let (c, r) = (px % pose.width, px / pose.width);
        let Ok(d) = pose.pixel_to_direction(c, r) else { continue };
        if cache.los_pixel == Some(px) {
            let length = (rxp - tx).norm();
            let (aod_az, aod_zen) = direction_angles(&(rxp - tx));
            let (aoa_az, aoa_zen) = direction_angles(&(tx - rxp));
            out.push(Mpc {
                pathloss_db: raw[px],
                tof_ns: length / SPEED_OF_LIGHT * 1e9,
                aod_az,
                aod_zen,
                aoa_az,
                aoa_zen,
                n_interactions: 0,
                retx_point: None,
                kind: MpcKind::Los,
            });
            continue;
        }
        let Some(x) = cache.intersection(px) else { continue };
        let kind = match cache.dominant(px) {
            Some(g) if scene.gaussians[g].is_wedge => MpcKind::Diffraction,
            _ => MpcKind::Reflection,
        };
        let (aod_az, aod_zen) = direction_angles(&(x - tx));
        let (aoa_az, aoa_zen) = direction_angles(&d);
        out.push(Mpc {
            pathloss_db: raw[px],
            tof_ns: (cache.d1[px] + cache.depth[px]) / SPEED_OF_LIGHT * 1e9,
            aod_az,
            aod_zen,
            aoa_az,
            aoa_zen,
            n_interactions: 1,
            retx_point: Some(x),
            kind,
        });
    }
    out
}
