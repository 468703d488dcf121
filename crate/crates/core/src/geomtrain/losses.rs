use super::curvature::CurvatureMap;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::{min_axis, SceneModel};

/// `Σ_g min(s_g)` and its subgradient, which lands on the minimal axis only.
pub fn loss_min_scale(scene: &SceneModel) -> (f64, Vec<Vec3>) {
    let mut total = 0.0;
    let grads = scene
        .gaussians
        .iter()
        .map(|g| {
            let k = min_axis(&g.s_scale);
            total += g.s_scale[k];
            let mut d = Vec3::zeros();
            d[k] = 1.0;
            d
        })
        .collect();
    (total, grads)
}

/// Per-pixel alignment weights `λ · (1 − score / max score)`, zero on wedge
/// pixels.
pub fn alignment_weights(curv: &CurvatureMap, lambda_normal: f64) -> Vec<f64> {
    let max = curv.max_score();
    curv.score
        .iter()
        .zip(&curv.wedge_mask)
        .map(|(&s, &m)| {
            if m {
                0.0
            } else if max > 0.0 {
                lambda_normal * (1.0 - s / max)
            } else {
                lambda_normal
            }
        })
        .collect()
}

/// `Σ_px w(px) · (1 − n_blend · N_local)` with the local normals treated as
/// constants; returns the loss and its gradient on the normal map. Pixels
/// without a local normal or with a zero blended normal are skipped.
pub fn loss_normal_alignment(
    normal_map: &[Vec3],
    local: &[Option<Vec3>],
    curv: &CurvatureMap,
    lambda_normal: f64,
) -> Result<(f64, Vec<Vec3>)> {
    let n = normal_map.len();
    if local.len() != n || curv.score.len() != n {
        return Err(Error::DimensionMismatch("normal alignment inputs differ in size".into()));
    }
    let w = alignment_weights(curv, lambda_normal);
    let mut loss = 0.0;
    let mut grad = vec![Vec3::zeros(); n];
    for i in 0..n {
        let Some(nl) = local[i] else { continue };
        if w[i] == 0.0 || normal_map[i].norm_squared() == 0.0 {
            continue;
        }
        loss += w[i] * (1.0 - normal_map[i].dot(&nl));
        grad[i] = -nl * w[i];
    }
    Ok((loss, grad))
}
