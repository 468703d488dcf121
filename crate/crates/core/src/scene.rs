//! Planar Gaussian primitives and the scene model shared by both training
//! stages.

use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{rotation_matrix, sigmoid, wavelength_from_carrier, Quat, Vec3};
use crate::sh::ShTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarGaussian {
    pub x_g: Vec3,
    /// Positive axis scales in meters (optimizers work on their logarithm).
    pub s_scale: Vec3,
    /// Rotation to world frame, `[w, x, y, z]`.
    pub q: Quat,
    /// Unconstrained opacity parameter; `alpha_g = sigmoid(alpha_logit)`.
    pub alpha_logit: f64,
    /// Interaction gain in dB-offset space (one channel).
    pub sh: ShTable,
    /// Lambertian color used by the visual stage (one channel, grayscale).
    pub color: ShTable,
    pub is_wedge: bool,
    pub radius_boost: f64,
}

/// Local frame of a Gaussian: in-plane axes `a`, `b` with their effective
/// (boost-applied) scales and the plane normal.
#[derive(Clone, Copy, Debug)]
pub struct GaussianFrame {
    pub a: Vec3,
    pub b: Vec3,
    pub n: Vec3,
    pub sa: f64,
    pub sb: f64,
    /// Thickness along the normal (never boosted).
    pub sn: f64,
    /// Axis indices of `a`, `b`, `n` into `s_scale`.
    pub axes: [usize; 3],
    pub boost: f64,
}

/// Index of the smallest scale; ties go to the lowest index.
pub fn min_axis(s: &Vec3) -> usize {
    let mut k = 0;
    for i in 1..3 {
        if s[i] < s[k] {
            k = i;
        }
    }
    k
}

impl PlanarGaussian {
    pub fn alpha_g(&self) -> f64 {
        sigmoid(self.alpha_logit)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_matrix(&self.q)
    }

    pub fn frame(&self) -> GaussianFrame {
        let r = self.rotation();
        let k = min_axis(&self.s_scale);
        let (i, j) = match k {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let boost = if self.is_wedge { self.radius_boost } else { 1.0 };
        GaussianFrame {
            a: r.column(i).into_owned(),
            b: r.column(j).into_owned(),
            n: r.column(k).into_owned(),
            sa: self.s_scale[i] * boost,
            sb: self.s_scale[j] * boost,
            sn: self.s_scale[k],
            axes: [i, j, k],
            boost,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.s_scale.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(Error::invalid("Gaussian scales must be positive"));
        }
        if !self.x_g.iter().all(|v| v.is_finite()) || !self.alpha_logit.is_finite() {
            return Err(Error::invalid("Gaussian parameters must be finite"));
        }
        let qn = crate::math::quat_norm(&self.q);
        if (qn - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("quaternion norm {qn} is not unit")));
        }
        if self.radius_boost < 1.0 {
            return Err(Error::invalid("radius_boost must be at least 1"));
        }
        self.sh.validate()?;
        self.color.validate()?;
        Ok(())
    }
}

/// Rotated minimum-scale axis.
pub fn normal_from_gaussian(g: &PlanarGaussian) -> Vec3 {
    let n: Vec3 = g.rotation().column(min_axis(&g.s_scale)).into_owned();
    n.normalize()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn extent(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.min + self.max)
    }

    pub fn inflated(&self, frac: f64) -> Aabb {
        let pad = (self.max - self.min) * (0.5 * frac);
        Aabb {
            min: self.min - pad,
            max: self.max + pad,
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Grown by `pad` on both horizontal axes only.
    pub fn inflated_xy(&self, pad: f64) -> Aabb {
        Aabb {
            min: Vec3::new(self.min.x - pad, self.min.y - pad, self.min.z),
            max: Vec3::new(self.max.x + pad, self.max.y + pad, self.max.z),
        }
    }

    pub fn contains_xy(&self, p: &Vec3) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn overlaps_xy(&self, o: &Aabb) -> bool {
        (0..2).all(|i| self.min[i] <= o.max[i] && o.min[i] <= self.max[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneModel {
    pub gaussians: Vec<PlanarGaussian>,
    pub tx_position: Vec3,
    pub carrier_hz: f64,
    pub wavelength_m: f64,
    pub bbox: Aabb,
    pub sh_degree: usize,
}

impl SceneModel {
    pub fn new(tx_position: Vec3, carrier_hz: f64, bbox: Aabb, sh_degree: usize) -> Self {
        SceneModel {
            gaussians: Vec::new(),
            tx_position,
            carrier_hz,
            wavelength_m: wavelength_from_carrier(carrier_hz),
            bbox,
            sh_degree,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0) {
            return Err(Error::invalid("carrier_hz must be positive"));
        }
        let lambda = wavelength_from_carrier(self.carrier_hz);
        if ((self.wavelength_m - lambda) / lambda).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "wavelength_m {} disagrees with carrier ({lambda})",
                self.wavelength_m
            )));
        }
        let grown = self.bbox.inflated(0.1);
        for (i, g) in self.gaussians.iter().enumerate() {
            g.validate()?;
            if !grown.contains(&g.x_g) {
                return Err(Error::invalid(format!("Gaussian {i} lies outside the scene bounds")));
            }
        }
        Ok(())
    }

    /// Hash of the geometric parameters (positions, scales, rotations, opacities,
    /// wedge flags). Stable within a process; used to assert frozen geometry.
    pub fn geometry_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for g in &self.gaussians {
            for v in g.x_g.iter().chain(g.s_scale.iter()).chain(g.q.iter()) {
                v.to_bits().hash(&mut h);
            }
            g.alpha_logit.to_bits().hash(&mut h);
            g.is_wedge.hash(&mut h);
            g.radius_boost.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: SceneModel = serde_json::from_str(&text).map_err(|e| Error::Schema {
            what: path.display().to_string(),
            detail: e.to_string(),
        })?;
        scene.validate()?;
        Ok(scene)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{quat_from_axis_angle, QUAT_IDENTITY};
    use std::f64::consts::FRAC_PI_2;

    fn gaussian(q: Quat, s: Vec3) -> PlanarGaussian {
        PlanarGaussian {
            x_g: Vec3::zeros(),
            s_scale: s,
            q,
            alpha_logit: 0.0,
            sh: ShTable::zeros(3, 1),
            color: ShTable::zeros(1, 1),
            is_wedge: false,
            radius_boost: 1.0,
        }
    }

    #[test]
    fn normal_examples() {
        let g = gaussian(QUAT_IDENTITY, Vec3::new(0.2, 0.2, 0.001));
        assert!((normal_from_gaussian(&g) - Vec3::z()).norm() < 1e-12);
        let g = gaussian(quat_from_axis_angle(&Vec3::x(), FRAC_PI_2), Vec3::new(0.2, 0.2, 0.001));
        assert!((normal_from_gaussian(&g) - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-9);
        let g = gaussian(QUAT_IDENTITY, Vec3::new(0.001, 0.001, 0.2));
        assert!((normal_from_gaussian(&g) - Vec3::x()).norm() < 1e-12);
    }

    #[test]
    fn wavelength_checked() {
        let bbox = Aabb {
            min: Vec3::zeros(),
            max: Vec3::new(1.0, 1.0, 1.0),
        };
        let mut s = SceneModel::new(Vec3::zeros(), 2.4e9, bbox, 3);
        assert!((s.wavelength_m - 299792458.0 / 2.4e9).abs() < 1e-15);
        s.validate().unwrap();
        s.wavelength_m *= 1.01;
        assert!(s.validate().is_err());
    }

    #[test]
    fn bbox_containment_checked() {
        let bbox = Aabb {
            min: Vec3::zeros(),
            max: Vec3::new(10.0, 10.0, 10.0),
        };
        let mut s = SceneModel::new(Vec3::zeros(), 2.4e9, bbox, 3);
        let mut g = gaussian(QUAT_IDENTITY, Vec3::new(0.1, 0.1, 0.01));
        g.x_g = Vec3::new(10.4, 5.0, 5.0);
        s.gaussians.push(g.clone());
        s.validate().unwrap();
        s.gaussians[0].x_g.x = 10.6;
        assert!(s.validate().is_err());
    }
}
