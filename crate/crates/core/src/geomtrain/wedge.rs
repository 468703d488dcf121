use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::curvature::CurvatureMap;
use crate::math::Vec3;
use crate::scene::{min_axis, SceneModel};
use crate::splat::RenderOutput;

/// One training view's contribution to wedge detection.
pub struct WedgeView<'a> {
    pub render: &'a RenderOutput,
    pub curvature: &'a CurvatureMap,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WedgeReport {
    pub wedge_pixels: usize,
    pub clusters: usize,
    pub confirmed: usize,
    /// Gaussian index claimed by each confirmed cluster.
    pub flagged: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WedgeParams {
    /// Minimum number of distinct views a cluster must appear in.
    pub min_views: usize,
    /// World-space radius around a cluster seed, meters.
    pub cluster_radius: f64,
    pub radius_boost: f64,
}

impl Default for WedgeParams {
    fn default() -> Self {
        WedgeParams {
            min_views: 3,
            cluster_radius: 0.3,
            radius_boost: 3.0,
        }
    }
}

struct Cluster {
    seed: Vec3,
    views: Vec<usize>,
    weights: BTreeMap<u32, f64>,
}

/// Clusters wedge pixels of all views by their world intersection points and
/// marks the top-contributing Gaussian of each multi-view cluster as a wedge:
/// `is_wedge`, the radius boost, and in-plane scales set to their geometric
/// mean. Only geometry fields change.
pub fn enlarge_wedge_gaussians(scene: &mut SceneModel, views: &[WedgeView], params: &WedgeParams) -> WedgeReport {
    let mut report = WedgeReport::default();
    let mut clusters: Vec<Cluster> = Vec::new();
    let r2 = params.cluster_radius * params.cluster_radius;
    for (vi, v) in views.iter().enumerate() {
        for px in 0..v.curvature.wedge_mask.len() {
            if !v.curvature.wedge_mask[px] {
                continue;
            }
            let Some(p) = v.render.intersection(px) else { continue };
            report.wedge_pixels += 1;
            let k = match clusters.iter().position(|c| (c.seed - p).norm_squared() <= r2) {
                Some(k) => k,
                None => {
                    clusters.push(Cluster {
                        seed: p,
                        views: Vec::new(),
                        weights: BTreeMap::new(),
                    });
                    clusters.len() - 1
                }
            };
            let c = &mut clusters[k];
            if !c.views.contains(&vi) {
                c.views.push(vi);
            }
            for (gid, w) in v.render.contrib_index(px) {
                *c.weights.entry(gid).or_insert(0.0) += w;
            }
        }
    }
    report.clusters = clusters.len();
    let mut claimed = vec![false; scene.gaussians.len()];
    for c in clusters.iter().filter(|c| c.views.len() >= params.min_views) {
        report.confirmed += 1;
        let mut ranked: Vec<(u32, f64)> = c.weights.iter().map(|(&g, &w)| (g, w)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let Some(&(gid, _)) = ranked.iter().find(|(g, _)| !claimed[*g as usize]) else {
            continue;
        };
        let gi = gid as usize;
        claimed[gi] = true;
        let g = &mut scene.gaussians[gi];
        let k = min_axis(&g.s_scale);
        let (i, j) = match k {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let r = (g.s_scale[i] * g.s_scale[j]).sqrt();
        g.s_scale[i] = r;
        g.s_scale[j] = r;
        // keep the flattened axis strictly minimal after equalizing
        if g.s_scale[k] >= r {
            g.s_scale[k] = r * 0.5;
        }
        g.is_wedge = true;
        g.radius_boost = params.radius_boost;
        report.flagged.push(gi);
    }
    report
}
