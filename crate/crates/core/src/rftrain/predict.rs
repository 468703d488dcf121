use rayon::prelude::*;

use crate::error::Result;
use crate::math::{fspl_gain_db, Vec3};
use crate::projection::Pose;
use crate::scene::SceneModel;
use crate::sh::{basis, MAX_DEGREE};
use crate::spectrum::SpectrumGrid;
use crate::splat::{render, RenderOptions};

/// Margin by which a rendered surface must be nearer than the Tx to block
/// the line of sight (m).
pub const LOS_BLOCK_MARGIN_M: f64 = 0.1;

/// Frozen-geometry view of one pose: per-pixel blend weights, distance
/// terms and the line-of-sight pixel. Gains are linear in the SH
/// coefficients given these weights, so stage 2 never re-renders.
#[derive(Clone, Debug)]
pub struct GainCache {
    pub pose: Pose,
    pub floor_db: f64,
    pub offsets: Vec<usize>,
    pub gids: Vec<u32>,
    pub weights: Vec<f64>,
    /// SH basis at `-d` per pixel.
    pub basis: Vec<[f64; 16]>,
    pub valid: Vec<bool>,
    /// Plane depth `d₂` along the pixel ray.
    pub depth: Vec<f64>,
    /// Tx-to-surface distance `d₁`.
    pub d1: Vec<f64>,
    /// `20·log10(λ / (4π (d₁ + d₂)))` on valid pixels.
    pub fspl_db: Vec<f64>,
    pub los_pixel: Option<usize>,
    pub los_db: f64,
    pub accumulated_alpha: Vec<f64>,
}

impl GainCache {
    pub fn build(scene: &SceneModel, pose: &Pose, floor_db: f64, opts: &RenderOptions) -> Result<GainCache> {
        let out = render(scene, pose, opts)?;
        let n = out.pixel_count();
        let lambda = scene.wavelength_m;
        let tx = scene.tx_position;
        let mut offsets = Vec::with_capacity(n + 1);
        let mut gids = Vec::with_capacity(out.hits.len());
        let mut weights = Vec::with_capacity(out.hits.len());
        offsets.push(0);
        for px in 0..n {
            for h in out.pixel_hits(px) {
                gids.push(h.gid);
                weights.push(h.weight);
            }
            offsets.push(gids.len());
        }
        let basis_px: Vec<[f64; 16]> = out.directions.par_iter().map(|d| basis(MAX_DEGREE, &(-d))).collect();
        let valid: Vec<bool> = (0..n).map(|i| out.is_valid(i)).collect();
        let mut d1 = vec![0.0; n];
        let mut fspl = vec![floor_db; n];
        for i in 0..n {
            if valid[i] {
                let x = out.origin + out.directions[i] * out.depth_map[i];
                d1[i] = (x - tx).norm();
                fspl[i] = fspl_gain_db(lambda, d1[i] + out.depth_map[i]);
            }
        }
        let (los_pixel, los_db) = los_pixel(pose, &tx, &out.depth_map, &valid, lambda);
        Ok(GainCache {
            pose: pose.clone(),
            floor_db,
            offsets,
            gids,
            weights,
            basis: basis_px,
            valid,
            depth: out.depth_map,
            d1,
            fspl_db: fspl,
            los_pixel,
            los_db,
            accumulated_alpha: out.alpha_map,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.valid.len()
    }

    /// World intersection of a valid pixel.
    pub fn intersection(&self, px: usize) -> Option<Vec3> {
        if !self.valid[px] {
            return None;
        }
        let (c, r) = (px % self.pose.width, px / self.pose.width);
        let d = self.pose.pixel_to_direction(c, r).ok()?;
        Some(self.pose.position + d * self.depth[px])
    }

    /// Blended interaction gain (dB) of every pixel for the scene's SH tables.
    pub fn gains(&self, scene: &SceneModel) -> Vec<f64> {
        (0..self.pixel_count())
            .map(|px| {
                let y = &self.basis[px];
                (self.offsets[px]..self.offsets[px + 1])
                    .map(|k| self.weights[k] * scene.gaussians[self.gids[k] as usize].sh.eval_channel_with_basis(0, y))
                    .sum()
            })
            .collect()
    }

    /// Unclamped prediction; invalid pixels report the floor and LoS pixels
    /// the free-space value. Blended gains above 0 dB clip to 0 dB since
    /// surfaces are passive.
    pub fn predict_raw(&self, scene: &SceneModel) -> Vec<f64> {
        self.assemble(&self.gains(scene))
    }

    /// `predict_raw` from precomputed gains.
    pub fn assemble(&self, gains: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.pixel_count())
            .map(|i| if self.valid[i] { gains[i].min(0.0) + self.fspl_db[i] } else { self.floor_db })
            .collect();
        if let Some(p) = self.los_pixel {
            out[p] = self.los_db;
        }
        out
    }

    /// Gaussian with the largest blend weight on the pixel.
    pub fn dominant(&self, px: usize) -> Option<usize> {
        (self.offsets[px]..self.offsets[px + 1])
            .max_by(|&a, &b| self.weights[a].total_cmp(&self.weights[b]))
            .map(|k| self.gids[k] as usize)
    }

    /// Whether the pixel's prediction depends on the SH gains.
    pub fn trainable(&self, px: usize) -> bool {
        self.valid[px] && self.los_pixel != Some(px)
    }
}

/// Pixel containing the Tx direction, unless a rendered surface sits
/// clearly in front of the Tx.
fn los_pixel(pose: &Pose, tx: &Vec3, depth: &[f64], valid: &[bool], lambda: f64) -> (Option<usize>, f64) {
    let v = tx - pose.position;
    let dist = v.norm();
    if dist <= 0.0 {
        return (None, 0.0);
    }
    let Some((c, r)) = pose.direction_to_pixel(&(v / dist)) else {
        return (None, 0.0);
    };
    let px = r * pose.width + c;
    if valid[px] && depth[px] < dist - LOS_BLOCK_MARGIN_M {
        return (None, 0.0);
    }
    (Some(px), fspl_gain_db(lambda, dist))
}

/// Predicted path-loss spectrum: blended gain plus free-space loss over
/// `d₁ + d₂`, the LoS pixel at pure free-space loss, clamped to
/// `[floor_db, 0]`.
pub fn predict_pathloss(scene: &SceneModel, pose: &Pose, floor_db: f64, opts: &RenderOptions) -> Result<SpectrumGrid> {
    let cache = GainCache::build(scene, pose, floor_db, opts)?;
    let v = cache.predict_raw(scene).into_iter().map(|v| v.min(0.0)).collect();
    SpectrumGrid::pathloss(pose, v, floor_db)
}
