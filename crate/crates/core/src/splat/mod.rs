//! Differentiable renderer for planar Gaussians over angular rasters.

mod backward;
mod footprint;
mod forward;

pub use backward::{render_backward, GaussianGrad, RenderUpstream, SceneGrad};
pub use forward::render;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::{normal_from_gaussian, PlanarGaussian};

/// Transmittance model used when compositing along a ray.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transmittance {
    /// `T_k = Π_{j<k} (1 - α_j)`.
    Product,
    /// `T_k = exp(-Σ_{j<k} α_j)`.
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    pub transmittance: Transmittance,
    /// Minimum per-hit and accumulated opacity for a contribution to count.
    pub alpha_min: f64,
    pub eps_parallel: f64,
    /// Footprint cutoff in standard deviations.
    pub sigma_cutoff: f64,
    /// Upper clamp on per-hit opacity.
    pub alpha_max: f64,
    /// Stop marching once transmittance drops below this value.
    pub t_min: f64,
    pub background_color: f64,
    /// Number of entries reported by `RenderOutput::contrib_index`.
    pub max_contrib: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            transmittance: Transmittance::Product,
            alpha_min: 1.0 / 255.0,
            eps_parallel: 1e-4,
            sigma_cutoff: 2.0,
            alpha_max: 0.999,
            t_min: 1e-4,
            background_color: 0.0,
            max_contrib: 32,
        }
    }
}

/// `|(x_rx - x_g) · n_g|`.
pub fn perpendicular_distance(g: &PlanarGaussian, x_rx: &Vec3) -> f64 {
    (x_rx - g.x_g).dot(&normal_from_gaussian(g)).abs()
}

/// `|d_perp / (d_query · n_g)|`: the distance along `d_query` from `x_rx` to
/// the Gaussian's supporting plane when the ray heads toward it. `None` for
/// rays within `eps_parallel` of the plane.
pub fn plane_depth(g: &PlanarGaussian, x_rx: &Vec3, d_query: &Vec3, eps_parallel: f64) -> Option<f64> {
    let n = normal_from_gaussian(g);
    let c = d_query.dot(&n);
    if c.abs() <= eps_parallel {
        return None;
    }
    Some((perpendicular_distance(g, x_rx) / c).abs())
}

/// One ray hit handed to [`composite_ray`].
#[derive(Clone, Debug)]
pub struct RayHit {
    pub depth: f64,
    pub alpha: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Composite {
    pub values: Vec<f64>,
    pub accumulated_alpha: f64,
    pub weights: Vec<f64>,
    /// Transmittance in front of each hit.
    pub transmittance: Vec<f64>,
}

/// Front-to-back blend `m = Σ T_k α_k c_k`.
pub fn composite_ray(hits: &[RayHit], mode: Transmittance) -> Result<Composite> {
    let channels = hits.first().map_or(0, |h| h.values.len());
    for w in hits.windows(2) {
        if !(w[0].depth <= w[1].depth) {
            debug_assert!(false, "composite_ray input not depth-sorted");
            return Err(Error::invalid("hits are not sorted by depth"));
        }
    }
    let mut values = vec![0.0; channels];
    let mut weights = Vec::with_capacity(hits.len());
    let mut trans = Vec::with_capacity(hits.len());
    let mut t = 1.0;
    let mut acc = 0.0;
    for h in hits {
        if !(0.0..=1.0).contains(&h.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", h.alpha)));
        }
        if h.values.len() != channels {
            return Err(Error::DimensionMismatch("hit channel counts differ".into()));
        }
        let w = t * h.alpha;
        for (v, c) in values.iter_mut().zip(&h.values) {
            *v += w * c;
        }
        acc += w;
        weights.push(w);
        trans.push(t);
        t = advance(t, h.alpha, mode);
    }
    Ok(Composite {
        values,
        accumulated_alpha: acc,
        weights,
        transmittance: trans,
    })
}

#[inline]
pub(crate) fn advance(t: f64, alpha: f64, mode: Transmittance) -> f64 {
    match mode {
        Transmittance::Product => t * (1.0 - alpha),
        Transmittance::Exponential => t * (-alpha).exp(),
    }
}

/// Hit flag: ray nearly parallel to the plane (no depth contribution).
pub const HIT_PARALLEL: u8 = 1;
/// Hit flag: opacity hit the `alpha_max` clamp.
pub const HIT_CLAMPED: u8 = 2;

/// One Gaussian intersected by a pixel ray, in compositing order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HitRecord {
    pub gid: u32,
    /// Ray parameter of the intersection (plane depth).
    pub t: f64,
    pub perp: f64,
    pub alpha: f64,
    pub weight: f64,
    pub flags: u8,
}

impl HitRecord {
    pub fn is_parallel(&self) -> bool {
        self.flags & HIT_PARALLEL != 0
    }
}

/// Blended channel maps for one pose, row-major rasters.
#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    pub origin: Vec3,
    pub directions: Vec<Vec3>,
    /// Blended interaction gain (dB offset); 0 on invalid pixels.
    pub gain_map: Vec<f64>,
    /// Blended visual color including the background term.
    pub color_map: Vec<f64>,
    pub depth_map: Vec<f64>,
    pub perp_map: Vec<f64>,
    pub normal_map: Vec<Vec3>,
    pub alpha_map: Vec<f64>,
    /// Sum of blend weights over non-parallel hits.
    pub depth_weight: Vec<f64>,
    /// Transmittance left after the last hit.
    pub final_transmittance: Vec<f64>,
    pub hit_offsets: Vec<usize>,
    pub hits: Vec<HitRecord>,
    pub alpha_min: f64,
    pub max_contrib: usize,
}

impl RenderOutput {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel_hits(&self, px: usize) -> &[HitRecord] {
        &self.hits[self.hit_offsets[px]..self.hit_offsets[px + 1]]
    }

    /// Pixel carries enough opacity to report geometry.
    pub fn is_valid(&self, px: usize) -> bool {
        self.alpha_map[px] >= self.alpha_min && self.depth_weight[px] > 0.0
    }

    /// World intersection point along the pixel ray at the blended depth.
    pub fn intersection(&self, px: usize) -> Option<Vec3> {
        self.is_valid(px)
            .then(|| self.origin + self.directions[px] * self.depth_map[px])
    }

    /// Top contributors `(gaussian id, blend weight)` by descending weight.
    pub fn contrib_index(&self, px: usize) -> Vec<(u32, f64)> {
        let mut v: Vec<(u32, f64)> = self.pixel_hits(px).iter().map(|h| (h.gid, h.weight)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v.truncate(self.max_contrib);
        v
    }
}
