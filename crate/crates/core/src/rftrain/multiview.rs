use serde::{Deserialize, Serialize};

use super::RfSample;
use crate::math::{angle_between, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// Elementwise minimum of received power: keeps the least spread energy.
    MinMerge,
    /// Elementwise maximum: keeps weak components seen by any view.
    MaxMerge,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborCriteria {
    /// Maximum angle between view directions (rad).
    pub max_angle: f64,
    pub min_distance: f64,
    pub max_distance: f64,
}

impl Default for NeighborCriteria {
    fn default() -> Self {
        NeighborCriteria {
            max_angle: 30f64.to_radians(),
            min_distance: 0.0,
            max_distance: 2.0,
        }
    }
}

/// Indices of dataset entries whose forward axis is within `max_angle` of
/// the sample's and whose position lies within the distance range. The
/// entry at `own_index` is excluded.
pub fn select_neighbor_views(sample: &RfSample, own_index: Option<usize>, dataset: &[RfSample], c: &NeighborCriteria) -> Vec<usize> {
    let f = sample.pose.forward();
    dataset
        .iter()
        .enumerate()
        .filter(|(i, s)| {
            if Some(*i) == own_index {
                return false;
            }
            let dist = (s.pose.position - sample.pose.position).norm();
            angle_between(&f, &s.pose.forward()) <= c.max_angle && dist >= c.min_distance && dist <= c.max_distance
        })
        .map(|(i, _)| i)
        .collect()
}

/// Reprojects world points into the neighbor's raster and reads its target
/// path loss there. A point is invalid when it falls outside the raster or,
/// given the neighbor's rendered depth, is hidden from it.
pub fn project_patch(points: &[Option<Vec3>], neighbor: &RfSample, neighbor_depth: Option<(&[f64], &[bool])>) -> Vec<Option<f64>> {
    let pose = &neighbor.pose;
    let Ok(values) = neighbor.spectrum.pathloss_values() else {
        return vec![None; points.len()];
    };
    points
        .iter()
        .map(|p| {
            let p = (*p)?;
            let v = p - pose.position;
            let dist = v.norm();
            if dist <= 1e-9 {
                return None;
            }
            let (c, r) = pose.direction_to_pixel(&(v / dist))?;
            let px = r * pose.width + c;
            if let Some((depth, valid)) = neighbor_depth {
                if !valid[px] || (depth[px] - dist).abs() > 0.1 + 0.05 * dist {
                    return None;
                }
            }
            Some(values[px])
        })
        .collect()
}

/// Elementwise min or max over the valid entries of each position; `None`
/// when no patch has any valid entry.
pub fn merge_patches(patches: &[Vec<Option<f64>>], mode: MergeMode) -> Option<Vec<Option<f64>>> {
    let n = patches.first()?.len();
    let mut out: Vec<Option<f64>> = vec![None; n];
    let mut any = false;
    for p in patches {
        for (o, v) in out.iter_mut().zip(p) {
            let Some(v) = *v else { continue };
            any = true;
            *o = Some(match (*o, mode) {
                (None, _) => v,
                (Some(a), MergeMode::MinMerge) => a.min(v),
                (Some(a), MergeMode::MaxMerge) => a.max(v),
            });
        }
    }
    any.then_some(out)
}

/// Minimum number of shared valid entries for a meaningful correlation.
pub const NCC_MIN_ENTRIES: usize = 4;

/// `1 − NCC` over entries valid in both patches, with its gradient with
/// respect to `a`. `None` when too few entries or either side is constant.
pub fn ncc_loss_grad(a: &[Option<f64>], b: &[Option<f64>]) -> Option<(f64, Vec<f64>)> {
    let idx: Vec<usize> = (0..a.len().min(b.len())).filter(|&i| a[i].is_some() && b[i].is_some()).collect();
    if idx.len() < NCC_MIN_ENTRIES {
        return None;
    }
    let k = idx.len() as f64;
    let ma = idx.iter().map(|&i| a[i].unwrap_or(0.0)).sum::<f64>() / k;
    let mb = idx.iter().map(|&i| b[i].unwrap_or(0.0)).sum::<f64>() / k;
    let ah: Vec<f64> = idx.iter().map(|&i| a[i].unwrap_or(0.0) - ma).collect();
    let bh: Vec<f64> = idx.iter().map(|&i| b[i].unwrap_or(0.0) - mb).collect();
    let na = ah.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = bh.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = ma.abs().max(mb.abs()).max(1.0);
    if na <= 1e-9 * scale || nb <= 1e-9 * scale {
        return None;
    }
    let dot: f64 = ah.iter().zip(&bh).map(|(x, y)| x * y).sum();
    let ncc = (dot / (na * nb)).clamp(-1.0, 1.0);
    let mut grad = vec![0.0; a.len()];
    // at a perfect match the gradient is rounding noise, which an adaptive
    // optimizer would amplify into full steps
    if 1.0 - ncc < 1e-12 {
        return Some((0.0, grad));
    }
    for (j, &i) in idx.iter().enumerate() {
        grad[i] = -(bh[j] / (na * nb) - ncc * ah[j] / (na * na));
    }
    Some((1.0 - ncc, grad))
}

/// `1 − NCC` of two patches, see [`ncc_loss_grad`].
pub fn ncc_loss(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    ncc_loss_grad(a, b).map(|(l, _)| l)
}

/// Odd patch side for a surface at `depth`: `base` at `ref_depth`, growing
/// for nearer surfaces, within `[3, cap]`.
pub fn patch_size(depth: f64, base: usize, cap: usize, ref_depth: f64) -> usize {
    let raw = if depth > 0.0 { base as f64 * ref_depth / depth } else { cap as f64 };
    let mut s = raw.round().clamp(3.0, cap as f64) as usize;
    if s % 2 == 0 {
        s -= 1;
    }
    s.max(3)
}
