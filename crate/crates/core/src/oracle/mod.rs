//! Deterministic ground truth: analytic facet/wedge scenes, an image-method
//! single-bounce tracer, spectrum synthesis and lambertian visual renders.

mod boxroom;
mod measure;
mod mpc_csv;
mod spectrum;
mod trace;
mod visual;

pub use boxroom::{generate_box_scene, two_plane_corner, BoxScene, BoxSceneConfig, PoseSpec};
pub use measure::{measure_mpcs, MeasurementModel};
pub use mpc_csv::{read_mpc_csv, write_mpc_csv};
pub use spectrum::{mpcs_to_spectrum, mpcs_to_tx_spectrum, Psf, SpectrumStats};
pub use trace::{trace, Mpc, MpcKind, TraceOptions};
pub use visual::{render_visual, Light, VisualRender, SKY};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::Aabb;

/// Convex planar polygon with its radio and visual surface properties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub vertices: Vec<Vec3>,
    /// Specular reflection gain (dB, ≤ 0 for passive surfaces).
    pub gain_db: f64,
    pub albedo: f64,
}

/// Straight edge where two facets meet, source of diffraction paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wedge {
    pub a: Vec3,
    pub b: Vec3,
    /// Angle inside the solid (rad), in (0, π).
    pub interior_angle: f64,
    /// Gain at zero bend (dB).
    pub a0_db: f64,
    /// Gain slope with bend angle (dB per rad).
    pub kappa_db_per_rad: f64,
}

/// Fixed diffuse scattering point on a facet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Vec3,
    pub facet: usize,
    pub gain_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleScene {
    pub facets: Vec<Facet>,
    pub wedges: Vec<Wedge>,
    #[serde(default)]
    pub scatterers: Vec<Scatterer>,
    pub bbox: Aabb,
}

impl Facet {
    /// Newell normal, unit length.
    pub fn normal(&self) -> Vec3 {
        let mut n = Vec3::zeros();
        let k = self.vertices.len();
        for i in 0..k {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % k];
            n.x += (p.y - q.y) * (p.z + q.z);
            n.y += (p.z - q.z) * (p.x + q.x);
            n.z += (p.x - q.x) * (p.y + q.y);
        }
        n.normalize()
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    pub fn area(&self) -> f64 {
        let c = self.vertices[0];
        let mut a = 0.0;
        for i in 1..self.vertices.len() - 1 {
            a += 0.5 * (self.vertices[i] - c).cross(&(self.vertices[i + 1] - c)).norm();
        }
        a
    }

    /// Whether an in-plane point lies inside the polygon (boundary inclusive).
    pub fn contains(&self, p: &Vec3) -> bool {
        let n = self.normal();
        let k = self.vertices.len();
        let tol = 1e-9 * (1.0 + p.norm());
        for i in 0..k {
            let e = self.vertices[(i + 1) % k] - self.vertices[i];
            if e.cross(&(p - self.vertices[i])).dot(&n) < -tol {
                return false;
            }
        }
        true
    }

    /// Ray parameter of the intersection with the polygon, if any.
    pub fn intersect_ray(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        let n = self.normal();
        let denom = d.dot(&n);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.vertices[0] - o).dot(&n) / denom;
        if t <= 0.0 {
            return None;
        }
        self.contains(&(o + d * t)).then_some(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::invalid("facet needs at least 3 vertices"));
        }
        let n = self.normal();
        if !n.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("degenerate facet"));
        }
        let v0 = self.vertices[0];
        for v in &self.vertices {
            if ((v - v0).dot(&n)).abs() > 1e-9 {
                return Err(Error::invalid("facet vertices are not coplanar"));
            }
        }
        let k = self.vertices.len();
        for i in 0..k {
            let e0 = self.vertices[(i + 1) % k] - self.vertices[i];
            let e1 = self.vertices[(i + 2) % k] - self.vertices[(i + 1) % k];
            if e0.cross(&e1).dot(&n) < -1e-12 {
                return Err(Error::invalid("facet polygon is not convex"));
            }
        }
        Ok(())
    }
}

impl OracleScene {
    pub fn validate(&self) -> Result<()> {
        for f in &self.facets {
            f.validate()?;
        }
        for w in &self.wedges {
            if !(w.interior_angle > 0.0 && w.interior_angle < std::f64::consts::PI) {
                return Err(Error::invalid("wedge interior angle outside (0, π)"));
            }
            if (w.b - w.a).norm() < 1e-9 {
                return Err(Error::invalid("degenerate wedge edge"));
            }
        }
        for s in &self.scatterers {
            if s.facet >= self.facets.len() {
                return Err(Error::invalid("scatterer refers to a missing facet"));
            }
        }
        Ok(())
    }

    /// Nearest facet hit along a ray: `(t, facet index)`.
    pub fn first_hit(&self, o: &Vec3, d: &Vec3) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, f) in self.facets.iter().enumerate() {
            if let Some(t) = f.intersect_ray(o, d) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, i));
                }
            }
        }
        best
    }

    /// True when some facet (other than those in `skip`) blocks the open segment
    /// between `p` and `q`.
    pub fn occluded(&self, p: &Vec3, q: &Vec3, skip: &[usize]) -> bool {
        let v = q - p;
        let len = v.norm();
        if len < 1e-12 {
            return false;
        }
        let d = v / len;
        let eps = 1e-7 * (1.0 + len);
        self.facets.iter().enumerate().any(|(i, f)| {
            !skip.contains(&i) && f.intersect_ray(p, &d).is_some_and(|t| t > eps && t < len - eps)
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: OracleScene = serde_json::from_str(&text).map_err(|e| Error::Schema {
            what: path.display().to_string(),
            detail: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }
}

/// Axis-aligned rectangle facet from a corner and two edge vectors.
pub fn rect_facet(corner: Vec3, u: Vec3, v: Vec3, gain_db: f64, albedo: f64) -> Facet {
    Facet {
        vertices: vec![corner, corner + u, corner + u + v, corner + v],
        gain_db,
        albedo,
    }
}
