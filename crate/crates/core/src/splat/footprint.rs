//! Conservative screen-space footprints and tile binning.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rayon::prelude::*;

use crate::math::Vec3;
use crate::projection::{Pose, Projection};
use crate::scene::GaussianFrame;

pub(crate) const TILE: usize = 2;
const BOUNDARY_SAMPLES: usize = 32;
const MARGIN_PX: f64 = 1.5;
/// The bounding cone is exact, so equirect rectangles only need to reach
/// the pixel centers.
const CONE_MARGIN_PX: f64 = 0.5 + 1e-6;

/// Inclusive pixel rectangle; `c0 > c1` never occurs, wrapped spans are split.
#[derive(Clone, Copy, Debug)]
struct Rect {
    c0: usize,
    c1: usize,
    r0: usize,
    r1: usize,
}

#[derive(Debug)]
enum Footprint {
    Culled,
    Full,
    Rects(Vec<Rect>),
}

pub(crate) struct TileBins {
    pub tiles_x: usize,
    pub lists: Vec<Vec<u32>>,
}

impl TileBins {
    pub fn candidates(&self, col: usize, row: usize) -> &[u32] {
        &self.lists[(row / TILE) * self.tiles_x + col / TILE]
    }
}

pub(crate) fn bin_gaussians(
    centers: &[Vec3],
    frames: &[GaussianFrame],
    pose: &Pose,
    cutoff: f64,
) -> TileBins {
    let rot_t = pose.rotation().transpose();
    let footprints: Vec<Footprint> = centers
        .par_iter()
        .zip(frames.par_iter())
        .map(|(x, f)| footprint(x, f, pose, cutoff, &rot_t))
        .collect();
    let tiles_x = pose.width.div_ceil(TILE);
    let tiles_y = pose.height.div_ceil(TILE);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    let full = Rect {
        c0: 0,
        c1: pose.width - 1,
        r0: 0,
        r1: pose.height - 1,
    };
    for (gid, fp) in footprints.iter().enumerate() {
        let rects = match fp {
            Footprint::Culled => continue,
            Footprint::Full => std::slice::from_ref(&full),
            Footprint::Rects(r) => r.as_slice(),
        };
        // rectangles of one Gaussian may share tiles; dedupe per tile
        for rect in rects {
            for ty in rect.r0 / TILE..=rect.r1 / TILE {
                for tx in rect.c0 / TILE..=rect.c1 / TILE {
                    let list = &mut lists[ty * tiles_x + tx];
                    if list.last() != Some(&(gid as u32)) {
                        list.push(gid as u32);
                    }
                }
            }
        }
    }
    TileBins { tiles_x, lists }
}

fn footprint(x: &Vec3, f: &GaussianFrame, pose: &Pose, cutoff: f64, rot_t: &nalgebra::Matrix3<f64>) -> Footprint {
    let o = pose.position;
    let radius = cutoff * f.sa.max(f.sb).hypot(f.sn);
    if (x - o).norm() < 1.5 * radius + 1e-9 {
        return Footprint::Full;
    }
    match pose.projection {
        Projection::Pinhole => pinhole_footprint(x, f, pose, cutoff, rot_t),
        Projection::Equirectangular => equirect_footprint(&(rot_t * (x - o)), radius, pose),
    }
}

fn pinhole_footprint(x: &Vec3, f: &GaussianFrame, pose: &Pose, cutoff: f64, rot_t: &nalgebra::Matrix3<f64>) -> Footprint {
    let o = pose.position;
    let samples: Vec<Vec3> = (0..BOUNDARY_SAMPLES)
        .map(|i| {
            let th = TAU * i as f64 / BOUNDARY_SAMPLES as f64;
            let p = x + (f.a * (f.sa * th.cos()) + f.b * (f.sb * th.sin())) * cutoff;
            rot_t * (p - o)
        })
        .collect();
    if samples.iter().all(|l| l.x <= 0.0) {
        return Footprint::Culled;
    }
    if samples.iter().any(|l| l.x <= 1e-9) {
        return Footprint::Full;
    }
    let (w, h) = (pose.width as f64, pose.height as f64);
    let (tx, tz) = ((0.5 * pose.fov_az).tan(), (0.5 * pose.fov_zen).tan());
    let mut umin = f64::INFINITY;
    let mut umax = f64::NEG_INFINITY;
    let mut vmin = f64::INFINITY;
    let mut vmax = f64::NEG_INFINITY;
    for l in &samples {
        let u = 0.5 * (-l.y / l.x / tx + 1.0) * w;
        let v = 0.5 * (1.0 - l.z / l.x / tz) * h;
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    clamp_rect(umin, umax, vmin, vmax, pose).map_or(Footprint::Culled, |r| Footprint::Rects(vec![r]))
}

/// Angular rectangle of the cone that bounds the cutoff disk, with center
/// `c` in the camera frame.
fn equirect_footprint(c: &Vec3, radius: f64, pose: &Pose) -> Footprint {
    let (w, h) = (pose.width as f64, pose.height as f64);
    let dist = c.norm();
    let half = (radius / dist).min(1.0).asin();
    let azc = c.y.atan2(c.x);
    let zc = (c.z / dist).clamp(-1.0, 1.0).acos();
    let covers_north = zc - half <= 0.0;
    let covers_south = zc + half >= PI;
    let mut full_az = covers_north || covers_south;
    let daz = if full_az {
        PI
    } else {
        (half.sin() / zc.sin()).min(1.0).asin()
    };
    let (amin, amax) = (azc - daz, azc + daz);
    let zmin = (zc - half).max(0.0);
    let zmax = (zc + half).min(PI);
    let zen0 = FRAC_PI_2 - 0.5 * pose.fov_zen;
    let vmin = (zmin - zen0) / pose.fov_zen * h;
    let vmax = (zmax - zen0) / pose.fov_zen * h;
    let scale = w / pose.fov_az;
    let umin = (amin + 0.5 * pose.fov_az) * scale;
    let umax = (amax + 0.5 * pose.fov_az) * scale;
    if pose.wraps_azimuth() {
        if umax - umin + 2.0 * CONE_MARGIN_PX >= w {
            full_az = true;
        }
        let Some(rows) = clamp_rect_margin(0.0, w, vmin, vmax, pose, CONE_MARGIN_PX) else {
            return Footprint::Culled;
        };
        if full_az {
            return Footprint::Rects(vec![Rect {
                c0: 0,
                c1: pose.width - 1,
                ..rows
            }]);
        }
        let c0 = (umin - CONE_MARGIN_PX).floor() as i64;
        let c1 = (umax + CONE_MARGIN_PX).floor() as i64;
        let wi = pose.width as i64;
        let s = c0.rem_euclid(wi);
        let e = s + (c1 - c0);
        if e < wi {
            Footprint::Rects(vec![Rect {
                c0: s as usize,
                c1: e as usize,
                ..rows
            }])
        } else {
            Footprint::Rects(vec![
                Rect {
                    c0: s as usize,
                    c1: pose.width - 1,
                    ..rows
                },
                Rect {
                    c0: 0,
                    c1: (e - wi) as usize,
                    ..rows
                },
            ])
        }
    } else {
        if full_az {
            return clamp_rect_margin(0.0, w, vmin, vmax, pose, CONE_MARGIN_PX).map_or(Footprint::Culled, |r| Footprint::Rects(vec![r]));
        }
        // non-wrapping rasters: test the span on both sides of ±π
        let rects: Vec<Rect> = [-TAU, 0.0, TAU]
            .iter()
            .filter_map(|shift| clamp_rect_margin(umin + shift * scale, umax + shift * scale, vmin, vmax, pose, CONE_MARGIN_PX))
            .collect();
        if rects.is_empty() {
            Footprint::Culled
        } else {
            Footprint::Rects(rects)
        }
    }
}

fn clamp_rect(umin: f64, umax: f64, vmin: f64, vmax: f64, pose: &Pose) -> Option<Rect> {
    clamp_rect_margin(umin, umax, vmin, vmax, pose, MARGIN_PX)
}

fn clamp_rect_margin(umin: f64, umax: f64, vmin: f64, vmax: f64, pose: &Pose, m: f64) -> Option<Rect> {
    let (w, h) = (pose.width as f64, pose.height as f64);
    let u0 = (umin - m).floor().max(0.0);
    let u1 = (umax + m).floor().min(w - 1.0);
    let v0 = (vmin - m).floor().max(0.0);
    let v1 = (vmax + m).floor().min(h - 1.0);
    if u0 > u1 || v0 > v1 || !(u0.is_finite() && v0.is_finite()) {
        return None;
    }
    Some(Rect {
        c0: u0 as usize,
        c1: u1 as usize,
        r0: v0 as usize,
        r1: v1 as usize,
    })
}
