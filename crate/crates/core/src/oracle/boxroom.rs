use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rect_facet, Facet, OracleScene, Scatterer, Wedge};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::Aabb;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxSceneConfig {
    pub room: [f64; 3],
    pub boxes: usize,
    pub box_footprint: [f64; 2],
    pub box_height: [f64; 2],
    pub pose_height: f64,
    pub wall_margin: f64,
    pub box_clearance: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub tx_position: Vec3,
    pub wall_gain_db: f64,
    pub floor_gain_db: f64,
    pub ceiling_gain_db: f64,
    pub box_gain_db: f64,
    pub scatterers_per_facet: usize,
    pub scatter_gain_db: [f64; 2],
    pub diffraction_a0_db: f64,
    pub diffraction_kappa: f64,
    pub seed: u64,
}

impl Default for BoxSceneConfig {
    fn default() -> Self {
        BoxSceneConfig {
            room: [6.0, 4.0, 3.0],
            boxes: 2,
            box_footprint: [0.5, 1.0],
            box_height: [0.6, 1.1],
            pose_height: 1.5,
            wall_margin: 0.5,
            box_clearance: 0.3,
            n_train: 24,
            n_test: 10,
            tx_position: Vec3::new(0.3, 2.0, 2.0),
            wall_gain_db: -6.0,
            floor_gain_db: -4.0,
            ceiling_gain_db: -9.0,
            box_gain_db: -5.0,
            scatterers_per_facet: 2,
            scatter_gain_db: [-24.0, -16.0],
            diffraction_a0_db: -10.0,
            diffraction_kappa: 15.0,
            seed: 0,
        }
    }
}

/// Receiver placement: position plus heading about world up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub position: Vec3,
    pub yaw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxScene {
    pub scene: OracleScene,
    pub tx_position: Vec3,
    /// Footprints `(min, max)` of the interior boxes.
    pub boxes: Vec<Aabb>,
    pub train: Vec<PoseSpec>,
    pub test: Vec<PoseSpec>,
}

fn push_box(facets: &mut Vec<Facet>, wedges: &mut Vec<Wedge>, b: &Aabb, gain: f64, albedo: f64, cfg: &BoxSceneConfig) {
    let (lo, hi) = (b.min, b.max);
    let d = hi - lo;
    let (ex, ey, ez) = (Vec3::new(d.x, 0.0, 0.0), Vec3::new(0.0, d.y, 0.0), Vec3::new(0.0, 0.0, d.z));
    // four sides and the top; the bottom rests on the floor
    facets.push(rect_facet(lo, ez, ex, gain, albedo));
    facets.push(rect_facet(lo + ey, ex, ez, gain, albedo * 0.9));
    facets.push(rect_facet(lo, ey, ez, gain, albedo * 0.8));
    facets.push(rect_facet(lo + ex, ez, ey, gain, albedo * 0.85));
    facets.push(rect_facet(lo + ez, ex, ey, gain, albedo * 0.95));
    let wedge = |a: Vec3, b: Vec3| Wedge {
        a,
        b,
        interior_angle: FRAC_PI_2,
        a0_db: cfg.diffraction_a0_db,
        kappa_db_per_rad: cfg.diffraction_kappa,
    };
    for c in [lo, lo + ex, lo + ey, lo + ex + ey] {
        wedges.push(wedge(c, c + ez));
    }
    let top = lo + ez;
    wedges.push(wedge(top, top + ex));
    wedges.push(wedge(top + ey, top + ey + ex));
    wedges.push(wedge(top, top + ey));
    wedges.push(wedge(top + ex, top + ex + ey));
}

/// Axis-aligned room with `k` interior boxes resting on the floor, a fixed Tx
/// and seeded train/test receiver poses at a common height.
pub fn generate_box_scene(cfg: &BoxSceneConfig) -> Result<BoxScene> {
    let [lx, ly, lz] = cfg.room;
    if !(lx > 2.0 * cfg.wall_margin && ly > 2.0 * cfg.wall_margin && lz > cfg.pose_height && cfg.pose_height > 0.0) {
        return Err(Error::invalid(format!("degenerate room dimensions {:?}", cfg.room)));
    }
    if cfg.box_footprint[0] <= 0.0 || cfg.box_footprint[1] < cfg.box_footprint[0] || cfg.box_height[0] <= 0.0 || cfg.box_height[1] < cfg.box_height[0] {
        return Err(Error::invalid("degenerate box size ranges"));
    }
    let inside = |p: &Vec3| p.x > 0.0 && p.x < lx && p.y > 0.0 && p.y < ly && p.z > 0.0 && p.z < lz;
    if !inside(&cfg.tx_position) {
        return Err(Error::invalid("tx_position outside the room"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut facets = Vec::new();
    let mut wedges = Vec::new();
    let o = Vec3::zeros();
    let (ex, ey, ez) = (Vec3::new(lx, 0.0, 0.0), Vec3::new(0.0, ly, 0.0), Vec3::new(0.0, 0.0, lz));
    facets.push(rect_facet(o, ex, ey, cfg.floor_gain_db, 0.55));
    facets.push(rect_facet(o + ez, ey, ex, cfg.ceiling_gain_db, 0.9));
    facets.push(rect_facet(o, ez, ey, cfg.wall_gain_db, 0.7));
    facets.push(rect_facet(o + ex, ey, ez, cfg.wall_gain_db, 0.75));
    facets.push(rect_facet(o, ex, ez, cfg.wall_gain_db, 0.65));
    facets.push(rect_facet(o + ey, ez, ex, cfg.wall_gain_db, 0.8));

    let mut boxes: Vec<Aabb> = Vec::new();
    let mut attempts = 0;
    while boxes.len() < cfg.boxes {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::invalid("could not place the requested boxes"));
        }
        let w = rng.random_range(cfg.box_footprint[0]..=cfg.box_footprint[1]);
        let d = rng.random_range(cfg.box_footprint[0]..=cfg.box_footprint[1]);
        let h = rng.random_range(cfg.box_height[0]..=cfg.box_height[1]).min(cfg.pose_height - 0.1);
        let m = cfg.wall_margin;
        if lx - 2.0 * m <= w || ly - 2.0 * m <= d {
            continue;
        }
        let x0 = rng.random_range(m..lx - m - w);
        let y0 = rng.random_range(m..ly - m - d);
        let b = Aabb {
            min: Vec3::new(x0, y0, 0.0),
            max: Vec3::new(x0 + w, y0 + d, h),
        };
        let grown = b.inflated_xy(cfg.box_clearance);
        let tx = cfg.tx_position;
        if grown.contains_xy(&tx) || boxes.iter().any(|o| o.inflated_xy(cfg.box_clearance).overlaps_xy(&b)) {
            continue;
        }
        boxes.push(b);
    }
    for (i, b) in boxes.iter().enumerate() {
        push_box(&mut facets, &mut wedges, b, cfg.box_gain_db, 0.4 + 0.1 * i as f64, cfg);
    }

    let mut scatterers = Vec::new();
    for (fi, f) in facets.iter().enumerate() {
        let v = &f.vertices;
        let (u, w) = (v[1] - v[0], v[3] - v[0]);
        for _ in 0..cfg.scatterers_per_facet {
            let a = rng.random_range(0.15..0.85);
            let b = rng.random_range(0.15..0.85);
            scatterers.push(Scatterer {
                position: v[0] + u * a + w * b,
                facet: fi,
                gain_db: rng.random_range(cfg.scatter_gain_db[0]..=cfg.scatter_gain_db[1]),
            });
        }
    }

    let mut sample_poses = |count: usize| -> Result<Vec<PoseSpec>> {
        let mut out = Vec::with_capacity(count);
        let mut tries = 0;
        while out.len() < count {
            tries += 1;
            if tries > 100_000 {
                return Err(Error::invalid("could not place receiver poses"));
            }
            let m = cfg.wall_margin;
            let p = Vec3::new(rng.random_range(m..lx - m), rng.random_range(m..ly - m), cfg.pose_height);
            let yaw = rng.random_range(-PI..PI);
            if (p - cfg.tx_position).norm() < 0.5 {
                continue;
            }
            if boxes.iter().any(|b| b.inflated_xy(cfg.box_clearance).contains_xy(&p)) {
                continue;
            }
            out.push(PoseSpec { position: p, yaw });
        }
        Ok(out)
    };
    let train = sample_poses(cfg.n_train)?;
    let test = sample_poses(cfg.n_test)?;
    let scene = OracleScene {
        facets,
        wedges,
        scatterers,
        bbox: Aabb {
            min: Vec3::zeros(),
            max: Vec3::new(lx, ly, lz),
        },
    };
    scene.validate()?;
    Ok(BoxScene {
        scene,
        tx_position: cfg.tx_position,
        boxes,
        train,
        test,
    })
}

/// Two large planes meeting along the y-axis edge through `(depth, 0, 0)`:
/// a wall at `x = depth` for `y ≥ 0` and a second wall at `y = 0` for `x ≤ depth`,
/// forming a concave corner as seen from a camera near the origin at `y > 0`,
/// plus the edge as a wedge.
pub fn two_plane_corner(depth: f64, half: f64) -> OracleScene {
    let c = Vec3::new(depth, 0.0, -half);
    let facets = vec![
        rect_facet(c, Vec3::new(0.0, 2.0 * half, 0.0), Vec3::new(0.0, 0.0, 2.0 * half), -6.0, 0.7),
        rect_facet(c, Vec3::new(0.0, 0.0, 2.0 * half), Vec3::new(-2.0 * half, 0.0, 0.0), -6.0, 0.5),
    ];
    OracleScene {
        facets,
        wedges: vec![Wedge {
            a: c,
            b: c + Vec3::new(0.0, 0.0, 2.0 * half),
            interior_angle: FRAC_PI_2,
            a0_db: -10.0,
            kappa_db_per_rad: 15.0,
        }],
        scatterers: vec![],
        bbox: Aabb {
            min: Vec3::new(depth - 2.0 * half, 0.0, -half),
            max: Vec3::new(depth, 2.0 * half, half),
        },
    }
}
