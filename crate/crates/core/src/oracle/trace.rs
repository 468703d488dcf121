use serde::{Deserialize, Serialize};

use super::OracleScene;
use crate::math::{angle_between, direction_angles, direction_from_angles, fspl_gain_db, linear_from_db, Vec3, SPEED_OF_LIGHT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MpcKind {
    Los,
    Reflection,
    Diffraction,
    /// Diffuse scattering from a fixed point on a facet.
    Scatter,
}

impl MpcKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MpcKind::Los => "los",
            MpcKind::Reflection => "reflection",
            MpcKind::Diffraction => "diffraction",
            MpcKind::Scatter => "scatter",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "los" => Some(MpcKind::Los),
            "reflection" => Some(MpcKind::Reflection),
            "diffraction" => Some(MpcKind::Diffraction),
            "scatter" => Some(MpcKind::Scatter),
            _ => None,
        }
    }
}

/// One propagation path. Angles are world-frame `(azimuth, zenith)`; AoD points
/// from the Tx along the first leg and AoA points from the Rx back along the
/// last leg.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mpc {
    pub pathloss_db: f64,
    pub tof_ns: f64,
    pub aod_az: f64,
    pub aod_zen: f64,
    pub aoa_az: f64,
    pub aoa_zen: f64,
    pub n_interactions: u8,
    pub retx_point: Option<Vec3>,
    pub kind: MpcKind,
}

impl Mpc {
    /// Path through an optional interaction point with the given gain.
    pub fn from_path(tx: &Vec3, retx: Option<Vec3>, rx: &Vec3, gain_db: f64, kind: MpcKind, wavelength: f64) -> Mpc {
        let (first, last, length) = match retx {
            Some(p) => (p - tx, p - rx, (p - tx).norm() + (rx - p).norm()),
            None => (rx - tx, tx - rx, (rx - tx).norm()),
        };
        let (aod_az, aod_zen) = direction_angles(&first);
        let (aoa_az, aoa_zen) = direction_angles(&last);
        Mpc {
            pathloss_db: gain_db + fspl_gain_db(wavelength, length),
            tof_ns: length / SPEED_OF_LIGHT * 1e9,
            aod_az,
            aod_zen,
            aoa_az,
            aoa_zen,
            n_interactions: retx.is_some() as u8,
            retx_point: retx,
            kind,
        }
    }

    pub fn aod_dir(&self) -> Vec3 {
        direction_from_angles(self.aod_az, self.aod_zen)
    }

    pub fn aoa_dir(&self) -> Vec3 {
        direction_from_angles(self.aoa_az, self.aoa_zen)
    }

    pub fn linear_power(&self) -> f64 {
        linear_from_db(self.pathloss_db)
    }

    pub fn path_length_m(&self) -> f64 {
        self.tof_ns * 1e-9 * SPEED_OF_LIGHT
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceOptions {
    pub carrier_hz: f64,
    pub los: bool,
    pub reflections: bool,
    pub diffraction: bool,
    pub scattering: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            carrier_hz: 2.4e9,
            los: true,
            reflections: true,
            diffraction: true,
            scattering: true,
        }
    }
}

/// Point on segment `[a, b]` minimizing `|tx - p| + |p - rx|`, when it lies
/// strictly inside the segment.
fn diffraction_point(a: &Vec3, b: &Vec3, tx: &Vec3, rx: &Vec3) -> Option<Vec3> {
    let len = (b - a).norm();
    let u = (b - a) / len;
    let (st, sr) = ((tx - a).dot(&u), (rx - a).dot(&u));
    let rt = (tx - a - u * st).norm();
    let rr = (rx - a - u * sr).norm();
    if rt + rr < 1e-12 {
        return None;
    }
    // unfolding both points into a common half-plane makes the optimum a
    // straight line; it crosses the edge at this fraction
    let s = st + (sr - st) * rt / (rt + rr);
    (s > 1e-9 && s < len - 1e-9).then(|| a + u * s)
}

/// LoS, single-bounce specular reflections, wedge diffraction and diffuse
/// scattering paths between `tx` and `rx`.
pub fn trace(scene: &OracleScene, tx: &Vec3, rx: &Vec3, opts: &TraceOptions) -> Vec<Mpc> {
    let lambda = crate::math::wavelength_from_carrier(opts.carrier_hz);
    let mut out = Vec::new();
    if (tx - rx).norm() < 1e-12 {
        return out;
    }
    if opts.los && !scene.occluded(tx, rx, &[]) {
        out.push(Mpc::from_path(tx, None, rx, 0.0, MpcKind::Los, lambda));
    }
    if opts.reflections {
        for (i, f) in scene.facets.iter().enumerate() {
            let n = f.normal();
            let p0 = f.vertices[0];
            let st = (tx - p0).dot(&n);
            let sr = (rx - p0).dot(&n);
            if st * sr <= 0.0 {
                continue;
            }
            let mirror = tx - n * (2.0 * st);
            // crossing of the mirror→rx segment with the facet plane
            let frac = st.abs() / (st.abs() + sr.abs());
            let p = mirror + (rx - mirror) * frac;
            if !f.contains(&p) {
                continue;
            }
            if scene.occluded(tx, &p, &[i]) || scene.occluded(&p, rx, &[i]) {
                continue;
            }
            out.push(Mpc::from_path(tx, Some(p), rx, f.gain_db, MpcKind::Reflection, lambda));
        }
    }
    if opts.diffraction {
        for w in &scene.wedges {
            let Some(p) = diffraction_point(&w.a, &w.b, tx, rx) else {
                continue;
            };
            // legs end on the edge, so adjacent facets only touch them at the
            // trimmed endpoint; a leg entering the solid crosses another facet
            if scene.occluded(tx, &p, &[]) || scene.occluded(&p, rx, &[]) {
                continue;
            }
            let bend = angle_between(&(p - tx), &(rx - p));
            let gain = w.a0_db - w.kappa_db_per_rad * bend;
            out.push(Mpc::from_path(tx, Some(p), rx, gain, MpcKind::Diffraction, lambda));
        }
    }
    if opts.scattering {
        for s in &scene.scatterers {
            let f = &scene.facets[s.facet];
            let n = f.normal();
            let st = (tx - s.position).dot(&n);
            let sr = (rx - s.position).dot(&n);
            if st * sr <= 0.0 {
                continue;
            }
            if scene.occluded(tx, &s.position, &[s.facet]) || scene.occluded(&s.position, rx, &[s.facet]) {
                continue;
            }
            out.push(Mpc::from_path(tx, Some(s.position), rx, s.gain_db, MpcKind::Scatter, lambda));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{rect_facet, OracleScene};
    use crate::scene::Aabb;

    fn bbox() -> Aabb {
        Aabb {
            min: Vec3::new(-10.0, -10.0, -10.0),
            max: Vec3::new(10.0, 10.0, 10.0),
        }
    }

    fn floor_scene() -> OracleScene {
        OracleScene {
            facets: vec![rect_facet(
                Vec3::new(-5.0, -5.0, 0.0),
                Vec3::new(10.0, 0.0, 0.0),
                Vec3::new(0.0, 10.0, 0.0),
                -3.0,
                0.5,
            )],
            wedges: vec![],
            scatterers: vec![],
            bbox: bbox(),
        }
    }

    #[test]
    fn free_space_single_los() {
        let scene = OracleScene {
            facets: vec![],
            wedges: vec![],
            scatterers: vec![],
            bbox: bbox(),
        };
        let m = trace(&scene, &Vec3::zeros(), &Vec3::new(10.0, 0.0, 0.0), &TraceOptions::default());
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].kind, MpcKind::Los);
        let lambda = 299792458.0 / 2.4e9;
        let expect = -20.0 * (4.0 * std::f64::consts::PI * 10.0 / lambda).log10();
        assert!((m[0].pathloss_db - expect).abs() < 1e-12);
        assert!((m[0].tof_ns - 33.35640951981521).abs() < 1e-9);
    }

    #[test]
    fn floor_reflection_example() {
        let m = trace(&floor_scene(), &Vec3::new(0.0, 0.0, 1.0), &Vec3::new(4.0, 0.0, 1.0), &TraceOptions::default());
        let r: Vec<_> = m.iter().filter(|m| m.kind == MpcKind::Reflection).collect();
        assert_eq!(r.len(), 1);
        let p = r[0].retx_point.unwrap();
        assert!((p - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((r[0].path_length_m() - 20f64.sqrt()).abs() < 1e-9);
        let lambda = 299792458.0 / 2.4e9;
        assert!((r[0].pathloss_db - (-3.0 + fspl_gain_db(lambda, 20f64.sqrt()))).abs() < 1e-9);
        // the AoD points at the retransmission point, not at the receiver
        let aod = r[0].aod_dir();
        assert!((aod - Vec3::new(2.0, 0.0, -1.0).normalize()).norm() < 1e-12);
    }

    #[test]
    fn occluder_blocks_los() {
        let mut scene = floor_scene();
        scene.facets.push(rect_facet(
            Vec3::new(2.0, -1.0, 0.5),
            Vec3::new(0.0, 2.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            -5.0,
            0.5,
        ));
        let m = trace(&scene, &Vec3::new(0.0, 0.0, 1.0), &Vec3::new(4.0, 0.0, 1.0), &TraceOptions::default());
        assert!(m.iter().all(|m| m.kind != MpcKind::Los));
    }

    #[test]
    fn diffraction_around_edge() {
        // a half-plane screen with a horizontal top edge at z = 1
        let scene = OracleScene {
            facets: vec![rect_facet(
                Vec3::new(0.0, -5.0, -5.0),
                Vec3::new(0.0, 10.0, 0.0),
                Vec3::new(0.0, 0.0, 6.0),
                -5.0,
                0.5,
            )],
            wedges: vec![crate::oracle::Wedge {
                a: Vec3::new(0.0, -5.0, 1.0),
                b: Vec3::new(0.0, 5.0, 1.0),
                interior_angle: 0.1,
                a0_db: -10.0,
                kappa_db_per_rad: 15.0,
            }],
            scatterers: vec![],
            bbox: bbox(),
        };
        let tx = Vec3::new(-2.0, 0.0, 0.0);
        let rx = Vec3::new(3.0, 0.0, 0.0);
        let m = trace(&scene, &tx, &rx, &TraceOptions::default());
        assert!(m.iter().all(|m| m.kind != MpcKind::Los));
        let d: Vec<_> = m.iter().filter(|m| m.kind == MpcKind::Diffraction).collect();
        assert_eq!(d.len(), 1);
        let p = d[0].retx_point.unwrap();
        assert!((p - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        let bend = angle_between(&(p - tx), &(rx - p));
        let lambda = 299792458.0 / 2.4e9;
        let len = (p - tx).norm() + (rx - p).norm();
        assert!((d[0].pathloss_db - (-10.0 - 15.0 * bend + fspl_gain_db(lambda, len))).abs() < 1e-9);
    }
}
