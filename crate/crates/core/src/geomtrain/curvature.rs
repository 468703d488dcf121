use crate::error::{Error, Result};
use crate::projection::Pose;
use crate::splat::RenderOutput;

/// Per-pixel curvature evidence and the derived wedge mask.
///
/// Every masked pixel has `score > tau_perp / 2`, since the depth gate
/// keeps the sigmoid factor above one half.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureMap {
    pub width: usize,
    pub height: usize,
    pub score: Vec<f64>,
    pub wedge_mask: Vec<bool>,
    pub g_perp: Vec<f64>,
    pub g_depth: Vec<f64>,
    pub tau_perp: f64,
    pub tau_depth: f64,
}

impl CurvatureMap {
    pub fn wedge_count(&self) -> usize {
        self.wedge_mask.iter().filter(|&&m| m).count()
    }

    pub fn max_score(&self) -> f64 {
        self.score.iter().cloned().fold(0.0, f64::max)
    }
}

/// Central-difference gradient magnitudes over the 4-neighborhood; pixels
/// with any invalid neighbor get `None`. `wrap` joins the first and last
/// columns (full-azimuth panoramas).
fn central_gradient(f: &[f64], valid: &[bool], w: usize, h: usize, wrap: bool, c: usize, r: usize) -> Option<f64> {
    if r == 0 || r + 1 >= h {
        return None;
    }
    let (cl, cr) = if wrap {
        ((c + w - 1) % w, (c + 1) % w)
    } else if c == 0 || c + 1 >= w {
        return None;
    } else {
        (c - 1, c + 1)
    };
    let idx = [r * w + cl, r * w + cr, (r - 1) * w + c, (r + 1) * w + c];
    if !valid[r * w + c] || idx.iter().any(|&i| !valid[i]) {
        return None;
    }
    let gx = 0.5 * (f[idx[1]] - f[idx[0]]);
    let gy = 0.5 * (f[idx[3]] - f[idx[2]]);
    Some(gx.hypot(gy))
}

/// Scores `g_perp · sigmoid((τ_depth − g_depth) / τ_depth)` and flags pixels
/// with `g_perp > τ_perp` and `g_depth < τ_depth`. Thresholds are in meters
/// per pixel of the given rasters.
#[allow(clippy::too_many_arguments)]
pub fn estimate_curvature(
    depth: &[f64],
    perp: &[f64],
    valid: &[bool],
    width: usize,
    height: usize,
    wrap: bool,
    tau_perp: f64,
    tau_depth: f64,
) -> Result<CurvatureMap> {
    let n = width * height;
    if depth.len() != n || perp.len() != n || valid.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "curvature maps of {} / {} / {} entries for a {width}x{height} raster",
            depth.len(),
            perp.len(),
            valid.len()
        )));
    }
    if !(tau_perp > 0.0 && tau_depth > 0.0) {
        return Err(Error::invalid("wedge thresholds must be positive"));
    }
    let mut out = CurvatureMap {
        width,
        height,
        score: vec![0.0; n],
        wedge_mask: vec![false; n],
        g_perp: vec![0.0; n],
        g_depth: vec![0.0; n],
        tau_perp,
        tau_depth,
    };
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            let (Some(gp), Some(gd)) = (
                central_gradient(perp, valid, width, height, wrap, c, r),
                central_gradient(depth, valid, width, height, wrap, c, r),
            ) else {
                continue;
            };
            out.g_perp[i] = gp;
            out.g_depth[i] = gd;
            out.score[i] = gp * crate::math::sigmoid((tau_depth - gd) / tau_depth);
            out.wedge_mask[i] = gp > tau_perp && gd < tau_depth;
        }
    }
    Ok(out)
}

/// Thresholds are given at a 1° pixel pitch and scaled linearly with the
/// pose's mean angular pitch.
pub fn thresholds_for_pose(pose: &Pose, tau_perp: f64, tau_depth: f64) -> (f64, f64) {
    let (pa, pz) = pose.pixel_pitch();
    let k = 0.5 * (pa + pz) / 1f64.to_radians();
    (tau_perp * k, tau_depth * k)
}

/// Curvature of a rendered view using its blended depth and perpendicular maps.
pub fn curvature_from_render(out: &RenderOutput, pose: &Pose, tau_perp: f64, tau_depth: f64) -> Result<CurvatureMap> {
    let valid: Vec<bool> = (0..out.pixel_count()).map(|i| out.is_valid(i)).collect();
    let (tp, td) = thresholds_for_pose(pose, tau_perp, tau_depth);
    estimate_curvature(&out.depth_map, &out.perp_map, &valid, out.width, out.height, pose.wraps_azimuth(), tp, td)
}
