//! Receiver/camera poses and the angular raster mappings (equirectangular and
//! pinhole).
//!
//! Camera frame: forward = +x, left = +y, up = +z. Equirectangular azimuth is
//! measured from the forward axis, counter-clockwise about up, in
//! `[-fov_az/2, fov_az/2)`; zenith is measured from the up axis. Columns grow
//! with azimuth and rows grow with zenith; pixel centers sit at half-pixel
//! offsets.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{quat_from_axis_angle, quat_normalize, rotation_matrix, Quat, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Equirectangular,
    Pinhole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position: Vec3,
    /// Camera-to-world rotation `[w, x, y, z]`.
    pub orientation: Quat,
    pub projection: Projection,
    pub fov_az: f64,
    pub fov_zen: f64,
    pub width: usize,
    pub height: usize,
}

impl Pose {
    pub fn new(
        position: Vec3,
        orientation: Quat,
        projection: Projection,
        fov_az: f64,
        fov_zen: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let pose = Pose {
            position,
            orientation: quat_normalize(&orientation),
            projection,
            fov_az,
            fov_zen,
            width,
            height,
        };
        pose.validate()?;
        Ok(pose)
    }

    /// Full-sphere equirectangular pose with the forward axis rotated by `yaw`
    /// about world up.
    pub fn panorama(position: Vec3, yaw: f64, width: usize, height: usize) -> Result<Self> {
        Pose::new(
            position,
            quat_from_axis_angle(&Vec3::z(), yaw),
            Projection::Equirectangular,
            TAU,
            PI,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fov_az > 0.0 && self.fov_az <= TAU + 1e-12) {
            return Err(Error::invalid(format!("fov_az {} outside (0, 2π]", self.fov_az)));
        }
        if !(self.fov_zen > 0.0 && self.fov_zen <= PI + 1e-12) {
            return Err(Error::invalid(format!("fov_zen {} outside (0, π]", self.fov_zen)));
        }
        if self.projection == Projection::Pinhole && (self.fov_az >= PI || self.fov_zen >= PI) {
            return Err(Error::invalid("pinhole field of view must be below 180°"));
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::invalid(format!(
                "raster {}x{} must be at least 2x2",
                self.width, self.height
            )));
        }
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("pose position is not finite"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_matrix(&self.orientation)
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation().column(0).into_owned()
    }

    /// True when the azimuth axis closes on itself (full 360° panorama).
    pub fn wraps_azimuth(&self) -> bool {
        self.projection == Projection::Equirectangular && (self.fov_az - TAU).abs() < 1e-9
    }

    /// `(azimuth, zenith)` angular pitch of one pixel. For pinhole rasters this is
    /// the pitch at the image center.
    pub fn pixel_pitch(&self) -> (f64, f64) {
        match self.projection {
            Projection::Equirectangular => (
                self.fov_az / self.width as f64,
                self.fov_zen / self.height as f64,
            ),
            Projection::Pinhole => {
                let tx = (0.5 * self.fov_az).tan();
                let tz = (0.5 * self.fov_zen).tan();
                (
                    (2.0 * tx / self.width as f64).atan(),
                    (2.0 * tz / self.height as f64).atan(),
                )
            }
        }
    }

    pub fn local_to_world(&self, v: &Vec3) -> Vec3 {
        self.rotation() * v
    }

    pub fn world_to_local(&self, v: &Vec3) -> Vec3 {
        self.rotation().transpose() * v
    }

    /// World-frame unit direction through the center of pixel `(col, row)`.
    pub fn pixel_to_direction(&self, col: usize, row: usize) -> Result<Vec3> {
        if col >= self.width || row >= self.height {
            return Err(Error::PixelOutOfBounds {
                col,
                row,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.local_to_world(&self.local_direction(col as f64 + 0.5, row as f64 + 0.5)))
    }

    /// Camera-frame direction at continuous raster coordinates `(u, v)`.
    pub fn local_direction(&self, u: f64, v: f64) -> Vec3 {
        match self.projection {
            Projection::Equirectangular => {
                let az = -0.5 * self.fov_az + u * self.fov_az / self.width as f64;
                let zen0 = FRAC_PI_2 - 0.5 * self.fov_zen;
                let zen = zen0 + v * self.fov_zen / self.height as f64;
                let (sz, cz) = zen.sin_cos();
                let (sa, ca) = az.sin_cos();
                Vec3::new(sz * ca, sz * sa, cz)
            }
            Projection::Pinhole => {
                let px = 2.0 * u / self.width as f64 - 1.0;
                let py = 1.0 - 2.0 * v / self.height as f64;
                let x = px * (0.5 * self.fov_az).tan();
                let y = py * (0.5 * self.fov_zen).tan();
                Vec3::new(1.0, -x, y).normalize()
            }
        }
    }

    /// Continuous raster coordinates of a world direction, or `None` when the
    /// direction falls outside the field of view. The result may lie on the
    /// far edge (`u == width`) only for non-wrapping rasters; callers that need a
    /// pixel index should use [`Pose::direction_to_pixel`].
    pub fn direction_to_coords(&self, dir: &Vec3) -> Option<(f64, f64)> {
        let l = self.world_to_local(dir);
        let n = l.norm();
        if !(n > 0.0) {
            return None;
        }
        let l = l / n;
        match self.projection {
            Projection::Equirectangular => {
                let az = l.y.atan2(l.x);
                let zen = l.z.clamp(-1.0, 1.0).acos();
                let mut a = az + 0.5 * self.fov_az;
                if self.wraps_azimuth() {
                    a = a.rem_euclid(TAU);
                }
                let u = a / self.fov_az * self.width as f64;
                let zen0 = FRAC_PI_2 - 0.5 * self.fov_zen;
                let v = (zen - zen0) / self.fov_zen * self.height as f64;
                let (w, h) = (self.width as f64, self.height as f64);
                if u < 0.0 || u > w || v < 0.0 || v > h {
                    return None;
                }
                Some((u, v))
            }
            Projection::Pinhole => {
                if l.x <= 1e-12 {
                    return None;
                }
                let x = -l.y / l.x / (0.5 * self.fov_az).tan();
                let y = l.z / l.x / (0.5 * self.fov_zen).tan();
                if x.abs() > 1.0 || y.abs() > 1.0 {
                    return None;
                }
                Some((
                    0.5 * (x + 1.0) * self.width as f64,
                    0.5 * (1.0 - y) * self.height as f64,
                ))
            }
        }
    }

    /// Pixel containing a world direction.
    pub fn direction_to_pixel(&self, dir: &Vec3) -> Option<(usize, usize)> {
        let (u, v) = self.direction_to_coords(dir)?;
        let mut col = u.floor() as isize;
        let mut row = v.floor() as isize;
        if self.wraps_azimuth() {
            col = col.rem_euclid(self.width as isize);
        } else if col == self.width as isize {
            col -= 1;
        }
        if row == self.height as isize {
            row -= 1;
        }
        if col < 0 || row < 0 || col >= self.width as isize || row >= self.height as isize {
            return None;
        }
        Some((col as usize, row as usize))
    }

    /// All pixel directions of the raster in row-major order.
    pub fn directions(&self) -> Vec<Vec3> {
        let rot = self.rotation();
        let mut out = Vec::with_capacity(self.pixel_count());
        for row in 0..self.height {
            for col in 0..self.width {
                out.push(rot * self.local_direction(col as f64 + 0.5, row as f64 + 0.5));
            }
        }
        out
    }

    /// Horizontal 4-neighbour column index, honoring azimuth wrap.
    pub fn neighbor(&self, col: usize, row: usize, dc: isize, dr: isize) -> Option<(usize, usize)> {
        let r = row as isize + dr;
        if r < 0 || r >= self.height as isize {
            return None;
        }
        let mut c = col as isize + dc;
        if self.wraps_azimuth() {
            c = c.rem_euclid(self.width as isize);
        } else if c < 0 || c >= self.width as isize {
            return None;
        }
        Some((c as usize, r as usize))
    }
}
