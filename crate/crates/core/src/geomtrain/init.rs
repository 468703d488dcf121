use nalgebra::Matrix3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{logit, quat_from_matrix, Vec3};
use crate::oracle::OracleScene;
use crate::scene::{Aabb, PlanarGaussian, SceneModel};
use crate::sh::ShTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub count: usize,
    /// In-plane scale as a multiple of the mean surface spacing.
    pub spacing_scale: f64,
    /// Thickness relative to the in-plane scale.
    pub thickness_ratio: f64,
    /// Standard deviation of the positional jitter along the surface normal (m).
    pub normal_jitter_m: f64,
    /// Standard deviation of the normal tilt (rad).
    pub tilt_jitter_rad: f64,
    pub opacity: f64,
    pub color: f64,
    pub color_degree: usize,
    /// Initial interaction gain of every Gaussian (dB).
    pub gain_db: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            count: 20_000,
            spacing_scale: 0.75,
            thickness_ratio: 0.3,
            normal_jitter_m: 0.005,
            tilt_jitter_rad: 0.03,
            opacity: 0.7,
            color: 0.5,
            color_degree: 1,
            gain_db: -10.0,
        }
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let h = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t1 = n.cross(&h).normalize();
    (t1, n.cross(&t1))
}

fn make_gaussian(x: Vec3, n: Vec3, s_plane: f64, cfg: &InitConfig, sh_degree: usize, rng: &mut ChaCha8Rng) -> PlanarGaussian {
    let (t1, t2) = tangent_basis(&n);
    let tilt = Vec3::new(gauss(rng), gauss(rng), 0.0) * cfg.tilt_jitter_rad;
    let n = (n + t1 * tilt.x + t2 * tilt.y).normalize();
    let (t1, t2) = tangent_basis(&n);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let a = t1 * phi.cos() + t2 * phi.sin();
    let b = n.cross(&a);
    let r = Matrix3::from_columns(&[a, b, n]);
    let aniso: f64 = rng.random_range(0.8..1.25);
    let sa = s_plane * aniso;
    let sb = s_plane / aniso;
    PlanarGaussian {
        x_g: x + n * (gauss(rng) * cfg.normal_jitter_m),
        s_scale: Vec3::new(sa, sb, s_plane * cfg.thickness_ratio),
        q: quat_from_matrix(&r),
        alpha_logit: logit(cfg.opacity),
        sh: ShTable::constant(sh_degree, 1, cfg.gain_db),
        color: ShTable::constant(cfg.color_degree, 1, cfg.color),
        is_wedge: false,
        radius_boost: 1.0,
    }
}

fn sample_triangle(a: &Vec3, b: &Vec3, c: &Vec3, rng: &mut ChaCha8Rng) -> Vec3 {
    let (mut u, mut v): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    if u + v > 1.0 {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    a + (b - a) * u + (c - a) * v
}

/// Gaussians placed uniformly (by area) on the oracle facets, oriented along
/// the facet normals with seeded position and tilt jitter.
pub fn init_from_facets(
    oracle: &OracleScene,
    tx: Vec3,
    carrier_hz: f64,
    sh_degree: usize,
    cfg: &InitConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SceneModel> {
    let mut tris = Vec::new();
    for f in &oracle.facets {
        let n = f.normal();
        let v0 = f.vertices[0];
        for i in 1..f.vertices.len() - 1 {
            let (b, c) = (f.vertices[i], f.vertices[i + 1]);
            let area = 0.5 * (b - v0).cross(&(c - v0)).norm();
            if area > 0.0 {
                tris.push((v0, b, c, n, area));
            }
        }
    }
    let total: f64 = tris.iter().map(|t| t.4).sum();
    if tris.is_empty() || cfg.count == 0 {
        return Err(Error::invalid("initialization needs facets with area and a positive count"));
    }
    let mut cdf = Vec::with_capacity(tris.len());
    let mut acc = 0.0;
    for t in &tris {
        acc += t.4 / total;
        cdf.push(acc);
    }
    let s_plane = cfg.spacing_scale * (total / cfg.count as f64).sqrt();
    let mut scene = SceneModel::new(tx, carrier_hz, oracle.bbox, sh_degree);
    let inner = oracle.bbox.inflated(0.1);
    for _ in 0..cfg.count {
        let u: f64 = rng.random_range(0.0..1.0);
        let k = cdf.partition_point(|&c| c < u).min(tris.len() - 1);
        let (a, b, c, n, _) = tris[k];
        let x = sample_triangle(&a, &b, &c, rng);
        let mut g = make_gaussian(x, n, s_plane, cfg, sh_degree, rng);
        g.x_g = clamp_to(&inner, &g.x_g);
        scene.gaussians.push(g);
    }
    Ok(scene)
}

/// Gaussians with random orientation placed uniformly inside `bbox`.
pub fn init_in_bbox(bbox: &Aabb, tx: Vec3, carrier_hz: f64, sh_degree: usize, cfg: &InitConfig, rng: &mut ChaCha8Rng) -> Result<SceneModel> {
    if cfg.count == 0 {
        return Err(Error::invalid("initialization count must be positive"));
    }
    let e = bbox.max - bbox.min;
    let s_plane = cfg.spacing_scale * (e.x * e.y * e.z / cfg.count as f64).cbrt();
    let mut scene = SceneModel::new(tx, carrier_hz, *bbox, sh_degree);
    for _ in 0..cfg.count {
        let x = Vec3::new(
            rng.random_range(bbox.min.x..=bbox.max.x),
            rng.random_range(bbox.min.y..=bbox.max.y),
            rng.random_range(bbox.min.z..=bbox.max.z),
        );
        let n = Vec3::new(gauss(rng), gauss(rng), gauss(rng)).normalize();
        let mut g = make_gaussian(x, n, s_plane, cfg, sh_degree, rng);
        g.x_g = x;
        scene.gaussians.push(g);
    }
    Ok(scene)
}

pub(crate) fn clamp_to(b: &Aabb, x: &Vec3) -> Vec3 {
    Vec3::new(
        x.x.clamp(b.min.x, b.max.x),
        x.y.clamp(b.min.y, b.max.y),
        x.z.clamp(b.min.z, b.max.z),
    )
}
