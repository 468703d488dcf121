use rayon::prelude::*;

use super::footprint::bin_gaussians;
use super::{advance, HitRecord, RenderOptions, RenderOutput, HIT_CLAMPED, HIT_PARALLEL};
use crate::error::{Error, Result};
use crate::math::{sigmoid, Vec3};
use crate::projection::Pose;
use crate::scene::{GaussianFrame, SceneModel};
use crate::sh::{basis, MAX_DEGREE};

/// Geometry of one ray–disk intersection, shared with the backward pass.
#[derive(Clone, Copy, Debug)]
pub(crate) struct HitGeom {
    pub t: f64,
    pub perp: f64,
    /// Opacity before clamping: `alpha_g · exp(-M/2)`.
    pub raw: f64,
    pub alpha: f64,
    pub flags: u8,
    pub denom: f64,
    /// Signed offset `(o - x_g) · n`.
    pub offset: f64,
    /// In-plane offset of the intersection from the center.
    pub r: Vec3,
    pub ua: f64,
    pub ub: f64,
}

pub(crate) fn intersect(
    o: &Vec3,
    d: &Vec3,
    x: &Vec3,
    f: &GaussianFrame,
    alpha_g: f64,
    opts: &RenderOptions,
) -> Option<HitGeom> {
    let denom = d.dot(&f.n);
    let offset = (o - x).dot(&f.n);
    let (t, r, flags) = if denom.abs() > opts.eps_parallel {
        let t = -offset / denom;
        (t, o + d * t - x, 0)
    } else {
        // grazing ray: use the closest approach to the center, which must
        // lie within the disk's thickness
        let t = (x - o).dot(d);
        let r = o + d * t - x;
        if r.dot(&f.n).abs() > opts.sigma_cutoff * f.sn {
            return None;
        }
        (t, r, HIT_PARALLEL)
    };
    if !(t > 1e-9) {
        return None;
    }
    let ua = r.dot(&f.a);
    let ub = r.dot(&f.b);
    let m = (ua / f.sa).powi(2) + (ub / f.sb).powi(2);
    if m > opts.sigma_cutoff * opts.sigma_cutoff {
        return None;
    }
    let raw = alpha_g * (-0.5 * m).exp();
    if raw < opts.alpha_min {
        return None;
    }
    let (alpha, flags) = if raw > opts.alpha_max {
        (opts.alpha_max, flags | HIT_CLAMPED)
    } else {
        (raw, flags)
    };
    Some(HitGeom {
        t,
        perp: offset.abs(),
        raw,
        alpha,
        flags,
        denom,
        offset,
        r,
        ua,
        ub,
    })
}

struct PixelOut {
    hits: Vec<HitRecord>,
    gain: f64,
    color: f64,
    depth: f64,
    perp: f64,
    normal: Vec3,
    alpha: f64,
    depth_weight: f64,
    final_t: f64,
}

pub(crate) struct Prepared {
    pub frames: Vec<GaussianFrame>,
    pub alphas: Vec<f64>,
    pub centers: Vec<Vec3>,
}

pub(crate) fn prepare(scene: &SceneModel) -> Result<Prepared> {
    for (i, g) in scene.gaussians.iter().enumerate() {
        if !g.s_scale.iter().all(|&s| s > 0.0) || !g.x_g.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("Gaussian {i} has invalid geometry")));
        }
        if g.sh.degree > MAX_DEGREE || g.color.degree > MAX_DEGREE {
            return Err(Error::invalid(format!("Gaussian {i} SH degree above {MAX_DEGREE}")));
        }
    }
    Ok(Prepared {
        frames: scene.gaussians.iter().map(|g| g.frame()).collect(),
        alphas: scene.gaussians.iter().map(|g| sigmoid(g.alpha_logit)).collect(),
        centers: scene.gaussians.iter().map(|g| g.x_g).collect(),
    })
}

/// Renders every channel map of `scene` as seen from `pose`.
pub fn render(scene: &SceneModel, pose: &Pose, opts: &RenderOptions) -> Result<RenderOutput> {
    pose.validate()?;
    let prep = prepare(scene)?;
    let bins = bin_gaussians(&prep.centers, &prep.frames, pose, opts.sigma_cutoff);
    let directions = pose.directions();
    let o = pose.position;
    let (w, h) = (pose.width, pose.height);

    let rows: Vec<Vec<PixelOut>> = (0..h)
        .into_par_iter()
        .map(|row| {
            (0..w)
                .map(|col| {
                    let d = directions[row * w + col];
                    shade_pixel(scene, &prep, bins.candidates(col, row), &o, &d, opts)
                })
                .collect()
        })
        .collect();

    let n = w * h;
    let mut out = RenderOutput {
        width: w,
        height: h,
        origin: o,
        directions,
        gain_map: Vec::with_capacity(n),
        color_map: Vec::with_capacity(n),
        depth_map: Vec::with_capacity(n),
        perp_map: Vec::with_capacity(n),
        normal_map: Vec::with_capacity(n),
        alpha_map: Vec::with_capacity(n),
        depth_weight: Vec::with_capacity(n),
        final_transmittance: Vec::with_capacity(n),
        hit_offsets: Vec::with_capacity(n + 1),
        hits: Vec::new(),
        alpha_min: opts.alpha_min,
        max_contrib: opts.max_contrib,
    };
    out.hit_offsets.push(0);
    for p in rows.into_iter().flatten() {
        out.hits.extend_from_slice(&p.hits);
        out.hit_offsets.push(out.hits.len());
        out.gain_map.push(p.gain);
        out.color_map.push(p.color);
        out.depth_map.push(p.depth);
        out.perp_map.push(p.perp);
        out.normal_map.push(p.normal);
        out.alpha_map.push(p.alpha);
        out.depth_weight.push(p.depth_weight);
        out.final_transmittance.push(p.final_t);
    }
    Ok(out)
}

fn shade_pixel(
    scene: &SceneModel,
    prep: &Prepared,
    candidates: &[u32],
    o: &Vec3,
    d: &Vec3,
    opts: &RenderOptions,
) -> PixelOut {
    let mut found: Vec<(u32, HitGeom)> = candidates
        .iter()
        .filter_map(|&gid| {
            let i = gid as usize;
            intersect(o, d, &prep.centers[i], &prep.frames[i], prep.alphas[i], opts).map(|hg| (gid, hg))
        })
        .collect();
    found.sort_by(|a, b| a.1.t.total_cmp(&b.1.t).then(a.0.cmp(&b.0)));

    let y = basis(MAX_DEGREE, &(-d));
    let mut t = 1.0;
    let mut hits = Vec::with_capacity(found.len());
    let (mut gain, mut color, mut acc) = (0.0, 0.0, 0.0);
    let (mut dsum, mut psum, mut dw) = (0.0, 0.0, 0.0);
    let mut nsum = Vec3::zeros();
    for (gid, hg) in found {
        let g = &scene.gaussians[gid as usize];
        let wgt = t * hg.alpha;
        gain += wgt * g.sh.eval_channel_with_basis(0, &y);
        color += wgt * g.color.eval_channel_with_basis(0, &y);
        acc += wgt;
        if hg.flags & HIT_PARALLEL == 0 {
            dsum += wgt * hg.t;
            psum += wgt * hg.perp;
            dw += wgt;
            let side = -hg.denom.signum();
            nsum += prep.frames[gid as usize].n * (side * wgt);
        }
        hits.push(HitRecord {
            gid,
            t: hg.t,
            perp: hg.perp,
            alpha: hg.alpha,
            weight: wgt,
            flags: hg.flags,
        });
        t = advance(t, hg.alpha, opts.transmittance);
        if t < opts.t_min {
            break;
        }
    }
    color += t * opts.background_color;
    let valid = acc >= opts.alpha_min;
    let geo = valid && dw > 0.0;
    let nn = nsum.norm();
    PixelOut {
        hits,
        gain: if valid { gain } else { 0.0 },
        color,
        depth: if geo { dsum / dw } else { 0.0 },
        perp: if geo { psum / dw } else { 0.0 },
        normal: if geo && nn > 1e-12 { nsum / nn } else { Vec3::zeros() },
        alpha: acc,
        depth_weight: dw,
        final_t: t,
    }
}
