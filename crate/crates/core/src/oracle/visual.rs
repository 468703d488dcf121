use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::OracleScene;
use crate::math::Vec3;
use crate::projection::Pose;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Light {
    /// Parallel light arriving from the given direction (points toward the light).
    Directional(Vec3),
    /// Light co-located with the camera.
    Headlight,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisualRender {
    pub width: usize,
    pub height: usize,
    pub image: Vec<f64>,
    /// Ray distance to the nearest facet, `None` for background.
    pub depth: Vec<Option<f64>>,
    pub facet: Vec<Option<usize>>,
}

pub const SKY: f64 = 1.0;

/// Lambertian shading `albedo · max(0, n · light)` with `n` the facet normal
/// turned toward the camera; background pixels get the sky constant.
pub fn render_visual(scene: &OracleScene, pose: &Pose, light: Light) -> VisualRender {
    let o = pose.position;
    let normals: Vec<Vec3> = scene.facets.iter().map(|f| f.normal()).collect();
    let px: Vec<(f64, Option<f64>, Option<usize>)> = pose
        .directions()
        .par_iter()
        .map(|d| match scene.first_hit(&o, d) {
            Some((t, i)) => {
                let n = if normals[i].dot(d) > 0.0 { -normals[i] } else { normals[i] };
                let l = match light {
                    Light::Directional(v) => v.normalize(),
                    Light::Headlight => -d,
                };
                (scene.facets[i].albedo * n.dot(&l).max(0.0), Some(t), Some(i))
            }
            None => (SKY, None, None),
        })
        .collect();
    VisualRender {
        width: pose.width,
        height: pose.height,
        image: px.iter().map(|p| p.0).collect(),
        depth: px.iter().map(|p| p.1).collect(),
        facet: px.iter().map(|p| p.2).collect(),
    }
}
