use crate::error::Result;
use crate::math::{angle_between, reflect};
use crate::projection::Pose;
use crate::rftrain::GainCache;
use crate::scene::SceneModel;
use crate::splat::{render, RenderOptions};

pub const SPECULAR_TOLERANCE_DEG: f64 = 10.0;

/// Pixels whose predicted energy does not fit a single specular bounce off
/// the rendered surface. LoS and wedge-covered pixels are never flagged.
pub fn flag_multibounce_candidates(
    scene: &SceneModel,
    rx: &Pose,
    floor_db: f64,
    tau_spec_rad: f64,
    opts: &RenderOptions,
) -> Result<Vec<bool>> {
    let out = render(scene, rx, opts)?;
    let cache = GainCache::build(scene, rx, floor_db, opts)?;
    let raw = cache.predict_raw(scene);
    let tx = scene.tx_position;
    let flags = (0..out.pixel_count())
        .map(|px| {
            if raw[px].min(0.0) <= floor_db || !cache.trainable(px) {
                return false;
            }
            if out.pixel_hits(px).iter().any(|h| scene.gaussians[h.gid as usize].is_wedge) {
                return false;
            }
            let Some(x) = out.intersection(px) else { return false };
            let n = out.normal_map[px];
            if n.norm() < 1e-9 {
                return false;
            }
            let incident = (x - tx).normalize();
            let outgoing = -out.directions[px];
            angle_between(&reflect(&incident, &n.normalize()), &outgoing) > tau_spec_rad
        })
        .collect();
    Ok(flags)
}
