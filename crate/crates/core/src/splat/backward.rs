use nalgebra::Matrix3;
use rayon::prelude::*;

use super::forward::{intersect, prepare};
use super::{RenderOptions, RenderOutput, Transmittance, HIT_CLAMPED, HIT_PARALLEL};
use crate::error::{Error, Result};
use crate::math::{rotation_backward, Quat, Vec3};
use crate::projection::Pose;
use crate::scene::SceneModel;
use crate::sh::{basis, MAX_DEGREE};

/// Upstream gradients on the rendered maps; absent maps count as zero.
#[derive(Clone, Debug, Default)]
pub struct RenderUpstream {
    pub gain: Option<Vec<f64>>,
    pub color: Option<Vec<f64>>,
    pub depth: Option<Vec<f64>>,
    pub perp: Option<Vec<f64>>,
    pub normal: Option<Vec<Vec3>>,
    pub alpha: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianGrad {
    pub x: Vec3,
    /// Gradient with respect to the positive scales `s_scale`.
    pub s: Vec3,
    pub q: Quat,
    pub alpha_logit: f64,
    pub sh: Vec<f64>,
    pub color: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneGrad {
    pub gaussians: Vec<GaussianGrad>,
}

impl SceneGrad {
    pub fn zeros(scene: &SceneModel) -> Self {
        SceneGrad {
            gaussians: scene
                .gaussians
                .iter()
                .map(|g| GaussianGrad {
                    x: Vec3::zeros(),
                    s: Vec3::zeros(),
                    q: [0.0; 4],
                    alpha_logit: 0.0,
                    sh: vec![0.0; g.sh.coeffs.len()],
                    color: vec![0.0; g.color.coeffs.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &SceneGrad) {
        for (a, b) in self.gaussians.iter_mut().zip(&other.gaussians) {
            a.x += b.x;
            a.s += b.s;
            for i in 0..4 {
                a.q[i] += b.q[i];
            }
            a.alpha_logit += b.alpha_logit;
            for (x, y) in a.sh.iter_mut().zip(&b.sh) {
                *x += y;
            }
            for (x, y) in a.color.iter_mut().zip(&b.color) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in &mut self.gaussians {
            a.x *= k;
            a.s *= k;
            for v in a.q.iter_mut() {
                *v *= k;
            }
            a.alpha_logit *= k;
            a.sh.iter_mut().for_each(|v| *v *= k);
            a.color.iter_mut().for_each(|v| *v *= k);
        }
    }
}

struct HitGrad {
    gid: u32,
    x: Vec3,
    sa: f64,
    sb: f64,
    a: Vec3,
    b: Vec3,
    n: Vec3,
    logit: f64,
    sh_w: f64,
    color_w: f64,
}

fn pick(v: &Option<Vec<f64>>, px: usize) -> f64 {
    v.as_ref().map_or(0.0, |m| m[px])
}

fn check_len<T>(v: &Option<Vec<T>>, n: usize, what: &str) -> Result<()> {
    if let Some(m) = v {
        if m.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{what} upstream has {} entries for {n} pixels",
                m.len()
            )));
        }
    }
    Ok(())
}

/// Analytic gradients of `Σ_px upstream · maps` with respect to every
/// Gaussian parameter, given the forward output of the same scene and pose.
pub fn render_backward(
    scene: &SceneModel,
    pose: &Pose,
    output: &RenderOutput,
    upstream: &RenderUpstream,
    opts: &RenderOptions,
) -> Result<SceneGrad> {
    let n = output.pixel_count();
    if pose.width != output.width || pose.height != output.height {
        return Err(Error::DimensionMismatch("pose and render output differ".into()));
    }
    check_len(&upstream.gain, n, "gain")?;
    check_len(&upstream.color, n, "color")?;
    check_len(&upstream.depth, n, "depth")?;
    check_len(&upstream.perp, n, "perp")?;
    check_len(&upstream.normal, n, "normal")?;
    check_len(&upstream.alpha, n, "alpha")?;
    let prep = prepare(scene)?;
    let o = output.origin;
    let w = output.width;

    let per_row: Vec<Vec<(usize, Vec<HitGrad>)>> = (0..output.height)
        .into_par_iter()
        .map(|row| {
            (row * w..(row + 1) * w)
                .filter_map(|px| {
                    let g = pixel_backward(scene, &prep, output, upstream, opts, &o, px);
                    (!g.is_empty()).then_some((px, g))
                })
                .collect()
        })
        .collect();

    // fixed-order reduction keeps results independent of the worker count
    let mut grad = SceneGrad::zeros(scene);
    let mut rot: Vec<Matrix3<f64>> = vec![Matrix3::zeros(); scene.gaussians.len()];
    for (px, hits) in per_row.into_iter().flatten() {
        let y = basis(MAX_DEGREE, &(-output.directions[px]));
        for hg in hits {
            let i = hg.gid as usize;
            let f = &prep.frames[i];
            let gg = &mut grad.gaussians[i];
            gg.x += hg.x;
            gg.s[f.axes[0]] += hg.sa * f.boost;
            gg.s[f.axes[1]] += hg.sb * f.boost;
            gg.alpha_logit += hg.logit;
            let r = &mut rot[i];
            for k in 0..3 {
                r[(k, f.axes[0])] += hg.a[k];
                r[(k, f.axes[1])] += hg.b[k];
                r[(k, f.axes[2])] += hg.n[k];
            }
            let g = &scene.gaussians[i];
            if hg.sh_w != 0.0 {
                let nb = g.sh.basis_len();
                for (c, yv) in gg.sh[..nb].iter_mut().zip(&y) {
                    *c += hg.sh_w * yv;
                }
            }
            if hg.color_w != 0.0 {
                let nb = g.color.basis_len();
                for (c, yv) in gg.color[..nb].iter_mut().zip(&y) {
                    *c += hg.color_w * yv;
                }
            }
        }
    }
    for (i, gg) in grad.gaussians.iter_mut().enumerate() {
        if rot[i] != Matrix3::zeros() {
            gg.q = rotation_backward(&scene.gaussians[i].q, &rot[i]);
        }
    }
    Ok(grad)
}

fn pixel_backward(
    scene: &SceneModel,
    prep: &super::forward::Prepared,
    out: &RenderOutput,
    up: &RenderUpstream,
    opts: &RenderOptions,
    o: &Vec3,
    px: usize,
) -> Vec<HitGrad> {
    let hits = out.pixel_hits(px);
    if hits.is_empty() {
        return Vec::new();
    }
    let d = out.directions[px];
    let y = basis(MAX_DEGREE, &(-d));
    let acc = out.alpha_map[px];
    let dw = out.depth_weight[px];
    let valid = acc >= opts.alpha_min;
    let geo = valid && dw > 0.0;

    let mut nsum = Vec3::zeros();
    for h in hits {
        if !h.is_parallel() {
            let f = &prep.frames[h.gid as usize];
            let side = -d.dot(&f.n).signum();
            nsum += f.n * (side * h.weight);
        }
    }
    let nn = nsum.norm();
    let ug = if valid { pick(&up.gain, px) } else { 0.0 };
    let uc = pick(&up.color, px);
    let ud = if geo { pick(&up.depth, px) } else { 0.0 };
    let upp = if geo { pick(&up.perp, px) } else { 0.0 };
    let ua = pick(&up.alpha, px);
    let gv = match &up.normal {
        Some(m) if geo && nn > 1e-12 => {
            let gn = m[px];
            let nh = nsum / nn;
            (gn - nh * gn.dot(&nh)) / nn
        }
        _ => Vec3::zeros(),
    };
    if ug == 0.0 && uc == 0.0 && ud == 0.0 && upp == 0.0 && ua == 0.0 && gv == Vec3::zeros() {
        return Vec::new();
    }
    let depth = out.depth_map[px];
    let perp = out.perp_map[px];
    let bg_term = uc * opts.background_color * out.final_transmittance[px];

    // per-hit dL/dw and the transmittance in front of each hit
    let k = hits.len();
    let mut gw = vec![0.0; k];
    let mut trans = vec![0.0; k];
    let mut t = 1.0;
    for (j, h) in hits.iter().enumerate() {
        let g = &scene.gaussians[h.gid as usize];
        let mut v = ua;
        v += ug * g.sh.eval_channel_with_basis(0, &y);
        v += uc * g.color.eval_channel_with_basis(0, &y);
        if !h.is_parallel() && geo {
            let f = &prep.frames[h.gid as usize];
            let side = -d.dot(&f.n).signum();
            v += ud * (h.t - depth) / dw + upp * (h.perp - perp) / dw + side * f.n.dot(&gv);
        }
        gw[j] = v;
        trans[j] = t;
        t = super::advance(t, h.alpha, opts.transmittance);
    }

    let mut res = Vec::with_capacity(k);
    let mut suffix = 0.0;
    for j in (0..k).rev() {
        let h = &hits[j];
        let i = h.gid as usize;
        let g = &scene.gaussians[i];
        let f = &prep.frames[i];
        let d_alpha = match opts.transmittance {
            Transmittance::Product => gw[j] * trans[j] - (suffix + bg_term) / (1.0 - h.alpha),
            Transmittance::Exponential => gw[j] * trans[j] - (suffix + bg_term),
        };
        suffix += gw[j] * h.weight;

        let mut hg = HitGrad {
            gid: h.gid,
            x: Vec3::zeros(),
            sa: 0.0,
            sb: 0.0,
            a: Vec3::zeros(),
            b: Vec3::zeros(),
            n: Vec3::zeros(),
            logit: 0.0,
            sh_w: h.weight * ug,
            color_w: h.weight * uc,
        };
        let Some(geom) = intersect(o, &d, &g.x_g, f, prep.alphas[i], opts) else {
            res.push(hg);
            continue;
        };
        let d_raw = if h.flags & HIT_CLAMPED != 0 { 0.0 } else { d_alpha };
        hg.logit = d_raw * geom.raw * (1.0 - prep.alphas[i]);
        let g_m = d_raw * (-0.5 * geom.raw);
        let (sa2, sb2) = (f.sa * f.sa, f.sb * f.sb);
        let ca = 2.0 * geom.ua / sa2;
        let cb = 2.0 * geom.ub / sb2;
        let gr = (f.a * ca + f.b * cb) * g_m;
        hg.a = geom.r * (g_m * ca);
        hg.b = geom.r * (g_m * cb);
        hg.sa = g_m * (-2.0 * geom.ua * geom.ua / (sa2 * f.sa));
        hg.sb = g_m * (-2.0 * geom.ub * geom.ub / (sb2 * f.sb));
        if h.flags & HIT_PARALLEL != 0 {
            // closest-approach point: r = (I - d dᵀ)(o - x_g)
            hg.x = -(gr - d * gr.dot(&d));
        } else {
            let (gt, gp) = if geo {
                (ud * h.weight / dw, upp * h.weight / dw)
            } else {
                (0.0, 0.0)
            };
            let gt_tot = gt + gr.dot(&d);
            let sgn = geom.offset.signum();
            let om_x = o - g.x_g;
            let side = -geom.denom.signum();
            hg.x = -gr + f.n * (gt_tot / geom.denom) - f.n * (sgn * gp);
            hg.n = -geom.r * (gt_tot / geom.denom) + om_x * (sgn * gp) + gv * (h.weight * side);
        }
        res.push(hg);
    }
    res
}
