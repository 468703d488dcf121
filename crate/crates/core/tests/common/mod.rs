#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfpgs::math::{quat_from_axis_angle, quat_normalize, Vec3, QUAT_IDENTITY};
use rfpgs::projection::{Pose, Projection};
use rfpgs::scene::{min_axis, Aabb, PlanarGaussian, SceneModel};
use rfpgs::sh::ShTable;
use rfpgs::splat::{render, render_backward, RenderOptions, RenderOutput, RenderUpstream};

pub fn rand_vec(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec3 {
    Vec3::new(rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi))
}

pub fn rand_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = rand_vec(rng, -1.0, 1.0);
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn empty_scene() -> SceneModel {
    SceneModel::new(
        Vec3::new(0.0, 0.0, 1.0),
        2.4e9,
        Aabb {
            min: Vec3::new(-10.0, -10.0, -10.0),
            max: Vec3::new(10.0, 10.0, 10.0),
        },
        3,
    )
}

pub fn disk(x: Vec3, normal: Vec3, sa: f64, sb: f64, alpha: f64) -> PlanarGaussian {
    // rotate e_z onto the requested normal
    let z = Vec3::z();
    let axis = z.cross(&normal);
    let q = if axis.norm() < 1e-12 {
        if normal.z > 0.0 {
            QUAT_IDENTITY
        } else {
            quat_from_axis_angle(&Vec3::x(), std::f64::consts::PI)
        }
    } else {
        quat_from_axis_angle(&axis.normalize(), z.dot(&normal).clamp(-1.0, 1.0).acos())
    };
    PlanarGaussian {
        x_g: x,
        s_scale: Vec3::new(sa, sb, 1e-4),
        q,
        alpha_logit: rfpgs::math::logit(alpha),
        sh: ShTable::zeros(3, 1),
        color: ShTable::zeros(1, 1),
        is_wedge: false,
        radius_boost: 1.0,
    }
}

/// Up to `n` random Gaussians in front of a camera at the origin looking
/// along +x, with random SH tables on both channels.
pub fn random_scene(seed: u64, n: usize) -> (SceneModel, Pose) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = empty_scene();
    for i in 0..n {
        let x = Vec3::new(
            rng.random_range(1.5..3.0),
            rng.random_range(-1.2..1.2),
            rng.random_range(-0.6..0.6),
        );
        let axis = rand_unit(&mut rng);
        let mut q = quat_from_axis_angle(&axis, rng.random_range(0.0..3.0));
        // slightly non-unit quaternions exercise the normalization path
        let k = rng.random_range(0.9..1.1);
        q.iter_mut().for_each(|v| *v *= k);
        q = if i % 2 == 0 { quat_normalize(&q) } else { q };
        let mut sh = ShTable::zeros(3, 1);
        sh.coeffs.iter_mut().for_each(|c| *c = rng.random_range(-2.0..2.0));
        let mut color = ShTable::zeros(1, 1);
        color.coeffs.iter_mut().for_each(|c| *c = rng.random_range(-1.0..1.0));
        scene.gaussians.push(PlanarGaussian {
            x_g: x,
            s_scale: Vec3::new(
                rng.random_range(0.1..0.35),
                rng.random_range(0.1..0.35),
                rng.random_range(0.002..0.01),
            ),
            q,
            alpha_logit: rng.random_range(-1.5..2.5),
            sh,
            color,
            is_wedge: i % 7 == 3,
            radius_boost: 1.3,
        });
    }
    let pose = Pose::new(
        Vec3::zeros(),
        quat_from_axis_angle(&Vec3::new(0.1, 0.2, 1.0).normalize(), 0.05),
        Projection::Equirectangular,
        1.6,
        0.9,
        28,
        16,
    )
    .unwrap();
    (scene, pose)
}

pub fn random_upstream(seed: u64, n: usize) -> RenderUpstream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = || (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let gain = map();
    let color = map();
    let depth = map();
    let perp = map();
    let alpha = map();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    RenderUpstream {
        gain: Some(gain),
        color: Some(color),
        depth: Some(depth),
        perp: Some(perp),
        normal: Some((0..n).map(|_| rand_vec(&mut rng, -1.0, 1.0)).collect()),
        alpha: Some(alpha),
    }
}

/// Discrete structure of a render: hit sets, their flags, pixel validity and
/// the choice of normal axis per Gaussian.
pub fn signature(scene: &SceneModel, out: &RenderOutput) -> Vec<u64> {
    let mut sig = Vec::new();
    for px in 0..out.pixel_count() {
        for h in out.pixel_hits(px) {
            sig.push(((h.gid as u64) << 8) | h.flags as u64);
        }
        sig.push(u64::MAX - (out.is_valid(px) as u64) - 2 * (out.alpha_map[px] >= out.alpha_min) as u64);
    }
    for g in &scene.gaussians {
        sig.push(min_axis(&g.s_scale) as u64);
    }
    sig
}

fn pixel_terms(out: &RenderOutput, up: &RenderUpstream) -> Vec<f64> {
    let get = |m: &Option<Vec<f64>>, i: usize| m.as_ref().map_or(0.0, |v| v[i]);
    (0..out.pixel_count())
        .map(|i| {
            get(&up.gain, i) * out.gain_map[i]
                + get(&up.color, i) * out.color_map[i]
                + get(&up.depth, i) * out.depth_map[i]
                + get(&up.perp, i) * out.perp_map[i]
                + get(&up.alpha, i) * out.alpha_map[i]
                + up.normal.as_ref().map_or(0.0, |v| v[i].dot(&out.normal_map[i]))
        })
        .collect()
}

#[derive(Debug, Default, Clone)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped_discontinuous: usize,
    pub below_threshold: usize,
    pub max_rel_err: f64,
    pub failures: Vec<String>,
}

impl GradCheck {
    pub fn merge(&mut self, o: GradCheck) {
        self.checked += o.checked;
        self.skipped_discontinuous += o.skipped_discontinuous;
        self.below_threshold += o.below_threshold;
        self.max_rel_err = self.max_rel_err.max(o.max_rel_err);
        self.failures.extend(o.failures);
    }
}

/// Central-difference sweep over every scalar parameter of every Gaussian.
pub fn fd_check(scene: &SceneModel, pose: &Pose, opts: &RenderOptions, up: &RenderUpstream) -> GradCheck {
    let h = 1e-4;
    let base = render(scene, pose, opts).unwrap();
    let grad = render_backward(scene, pose, &base, up, opts).unwrap();
    let base_sig = signature(scene, &base);
    let mut report = GradCheck::default();
    for gi in 0..scene.gaussians.len() {
        let g = &scene.gaussians[gi];
        let gg = &grad.gaussians[gi];
        let mut params: Vec<(String, f64, Box<dyn Fn(&mut PlanarGaussian, f64)>)> = Vec::new();
        for k in 0..3 {
            params.push((format!("x[{k}]"), gg.x[k], Box::new(move |p: &mut PlanarGaussian, e| p.x_g[k] += e)));
            params.push((format!("s[{k}]"), gg.s[k], Box::new(move |p: &mut PlanarGaussian, e| p.s_scale[k] += e)));
        }
        for k in 0..4 {
            params.push((format!("q[{k}]"), gg.q[k], Box::new(move |p: &mut PlanarGaussian, e| p.q[k] += e)));
        }
        params.push(("alpha_logit".into(), gg.alpha_logit, Box::new(|p: &mut PlanarGaussian, e| p.alpha_logit += e)));
        for k in 0..g.sh.coeffs.len() {
            params.push((format!("sh[{k}]"), gg.sh[k], Box::new(move |p: &mut PlanarGaussian, e| p.sh.coeffs[k] += e)));
        }
        for k in 0..g.color.coeffs.len() {
            params.push((format!("color[{k}]"), gg.color[k], Box::new(move |p: &mut PlanarGaussian, e| p.color.coeffs[k] += e)));
        }
        for (name, analytic, apply) in params {
            let fd_at = |h: f64| -> Option<f64> {
                let mut plus = scene.clone();
                apply(&mut plus.gaussians[gi], h);
                let mut minus = scene.clone();
                apply(&mut minus.gaussians[gi], -h);
                let op = render(&plus, pose, opts).unwrap();
                let om = render(&minus, pose, opts).unwrap();
                if signature(&plus, &op) != base_sig || signature(&minus, &om) != base_sig {
                    return None;
                }
                let tp = pixel_terms(&op, up);
                let tm = pixel_terms(&om, up);
                Some(tp.iter().zip(&tm).map(|(a, b)| a - b).sum::<f64>() / (2.0 * h))
            };
            let Some(mut fd) = fd_at(h) else {
                report.skipped_discontinuous += 1;
                continue;
            };
            // strongly curved parameters: shrink the step before judging
            if (analytic - fd).abs() >= 1e-3 * analytic.abs().max(fd.abs()) {
                if let Some(fine) = fd_at(h / 10.0) {
                    fd = fine;
                }
            }
            if analytic.abs() <= 1e-8 {
                report.below_threshold += 1;
                if fd.abs() > 1e-6 {
                    report.failures.push(format!("g{gi} {name}: analytic {analytic:e} vs fd {fd:e}"));
                }
                continue;
            }
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs());
            report.checked += 1;
            report.max_rel_err = report.max_rel_err.max(rel);
            if rel >= 1e-3 {
                report.failures.push(format!("g{gi} {name}: analytic {analytic:e} vs fd {fd:e} (rel {rel:e})"));
            }
        }
    }
    report
}

/// Oracle depth and perpendicular-distance maps of a pose plus the facet hit
/// by each pixel.
pub fn oracle_maps(scene: &rfpgs::oracle::OracleScene, pose: &Pose) -> (Vec<f64>, Vec<f64>, Vec<bool>, Vec<Option<usize>>) {
    let v = rfpgs::oracle::render_visual(scene, pose, rfpgs::oracle::Light::Headlight);
    let n = pose.pixel_count();
    let mut depth = vec![0.0; n];
    let mut perp = vec![0.0; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        if let (Some(d), Some(f)) = (v.depth[i], v.facet[i]) {
            let facet = &scene.facets[f];
            depth[i] = d;
            perp[i] = facet.normal().dot(&(pose.position - facet.vertices[0])).abs();
            valid[i] = true;
        }
    }
    (depth, perp, valid, v.facet)
}

/// Pixels whose 4-neighborhood touches a different facet than their own.
pub fn facet_edge_mask(facet: &[Option<usize>], pose: &Pose) -> Vec<bool> {
    let w = pose.width;
    (0..facet.len())
        .map(|i| {
            let (c, r) = (i % w, i / w);
            let Some(f) = facet[i] else { return false };
            [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|&(dc, dr)| match pose.neighbor(c, r, dc, dr) {
                Some((cc, rr)) => facet[rr * w + cc].is_some_and(|g| g != f),
                None => false,
            })
        })
        .collect()
}

/// Whether any pixel within `radius` (Chebyshev) of `i` is set in `mask`.
pub fn near(mask: &[bool], pose: &Pose, i: usize, radius: isize) -> bool {
    let w = pose.width;
    let (c, r) = (i % w, i / w);
    for dr in -radius..=radius {
        for dc in -radius..=radius {
            if let Some((cc, rr)) = pose.neighbor(c, r, dc, dr) {
                if mask[rr * w + cc] {
                    return true;
                }
            }
        }
    }
    false
}

/// Precision and recall of `pred` against `truth` with a pixel tolerance.
pub fn precision_recall(pred: &[bool], truth: &[bool], pose: &Pose, tol: isize) -> (f64, f64, usize, usize) {
    let np = pred.iter().filter(|&&m| m).count();
    let nt = truth.iter().filter(|&&m| m).count();
    let tp = (0..pred.len()).filter(|&i| pred[i] && near(truth, pose, i, tol)).count();
    let hit = (0..truth.len()).filter(|&i| truth[i] && near(pred, pose, i, tol)).count();
    let p = if np == 0 { 0.0 } else { tp as f64 / np as f64 };
    let r = if nt == 0 { 0.0 } else { hit as f64 / nt as f64 };
    (p, r, np, nt)
}
