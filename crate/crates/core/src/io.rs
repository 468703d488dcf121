//! On-disk dataset layout: a JSON pose manifest per split that points at
//! spectrum grids, visual views and MPC lists stored next to it, plus
//! tone-mapped PNG panels for inspection.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomtrain::GeomView;
use crate::math::Vec3;
use crate::oracle::{read_mpc_csv, Mpc};
use crate::projection::Pose;
use crate::rftrain::{Provenance, RfSample};
use crate::spectrum::SpectrumGrid;

pub const MANIFEST_VERSION: u32 = 1;

const INTENSITY: &str = "intensity";
const DEPTH: &str = "depth_m";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisualEntry {
    pub pose: Pose,
    pub stem: String,
}

/// One receiver placement. File references are stems or paths relative to
/// the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: usize,
    pub pose: Pose,
    pub spectrum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum_psf: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_spectrum: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpcs: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual: Option<VisualEntry>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub split: String,
    pub tx_position: Vec3,
    pub carrier_hz: f64,
    pub floor_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_pose: Option<Pose>,
    pub entries: Vec<ManifestEntry>,
}

/// A manifest together with the directory its references resolve against.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        what: path.display().to_string(),
        detail: e.to_string(),
    })
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(manifest_path)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Schema {
                what: manifest_path.display().to_string(),
                detail: format!("manifest version {} (expected {MANIFEST_VERSION})", manifest.version),
            });
        }
        for e in &manifest.entries {
            e.pose.validate()?;
        }
        let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Dataset { dir, manifest })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Rx spectra of the first `limit` entries, PSF-blurred when requested.
    pub fn rf_samples(&self, psf: bool, limit: Option<usize>) -> Result<Vec<RfSample>> {
        let n = limit.unwrap_or(usize::MAX).min(self.manifest.entries.len());
        self.manifest.entries[..n]
            .iter()
            .map(|e| {
                let stem = match (psf, &e.spectrum_psf) {
                    (false, _) => &e.spectrum,
                    (true, Some(s)) => s,
                    (true, None) => return Err(Error::invalid(format!("entry {} has no blurred spectrum", e.id))),
                };
                let grid = SpectrumGrid::load(&self.path(stem))?;
                let provenance = if psf { Provenance::OracleBeamformed } else { e.provenance };
                RfSample::new(e.pose.clone(), grid, provenance)
            })
            .collect()
    }

    pub fn geom_views(&self) -> Result<Vec<GeomView>> {
        self.manifest
            .entries
            .iter()
            .map(|e| {
                let v = e
                    .visual
                    .as_ref()
                    .ok_or_else(|| Error::invalid(format!("entry {} has no visual view", e.id)))?;
                let (image, depth) = load_visual(&self.path(&v.stem), &v.pose)?;
                Ok(GeomView {
                    pose: v.pose.clone(),
                    image,
                    depth: Some(depth),
                })
            })
            .collect()
    }

    pub fn mpcs(&self, entry: &ManifestEntry) -> Result<Vec<Mpc>> {
        let rel = entry
            .mpcs
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("entry {} has no MPC list", entry.id)))?;
        read_mpc_csv(&self.path(rel))
    }

    pub fn tx_spectrum(&self, entry: &ManifestEntry) -> Result<SpectrumGrid> {
        let rel = entry
            .tx_spectrum
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("entry {} has no Tx spectrum", entry.id)))?;
        SpectrumGrid::load(&self.path(rel))
    }
}

/// Stores a grayscale view and its ray depth as a two-channel grid;
/// background depth is written as −1.
pub fn save_visual(stem: &Path, pose: &Pose, image: &[f64], depth: &[Option<f64>]) -> Result<()> {
    let n = pose.pixel_count();
    if image.len() != n || depth.len() != n {
        return Err(Error::DimensionMismatch(format!("visual buffers for {}x{} raster", pose.width, pose.height)));
    }
    let mut g = SpectrumGrid::for_pose(pose, &[INTENSITY, DEPTH], 0.0);
    g.data[..n].copy_from_slice(image);
    for (dst, d) in g.data[n..].iter_mut().zip(depth) {
        *dst = d.unwrap_or(-1.0);
    }
    g.save(stem)
}

pub fn load_visual(stem: &Path, pose: &Pose) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    let g = SpectrumGrid::load(stem)?;
    if g.width != pose.width || g.height != pose.height {
        return Err(Error::DimensionMismatch(format!(
            "visual {} is {}x{}, pose wants {}x{}",
            stem.display(),
            g.width,
            g.height,
            pose.width,
            pose.height
        )));
    }
    let image = g.channel(INTENSITY)?.to_vec();
    let depth = g.channel(DEPTH)?.iter().map(|&d| (d >= 0.0).then_some(d)).collect();
    Ok((image, depth))
}

// Fixed color stops from the floor (dark) to 0 dB (bright).
const RAMP: [[f64; 3]; 5] = [
    [0.0, 0.0, 0.0],
    [40.0, 20.0, 120.0],
    [180.0, 40.0, 120.0],
    [250.0, 150.0, 30.0],
    [255.0, 255.0, 210.0],
];

/// Color for `db` on the fixed ramp over `[floor_db, 0]`.
pub fn ramp_color(db: f64, floor_db: f64) -> [u8; 3] {
    let t = if floor_db < 0.0 { ((db - floor_db) / -floor_db).clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (RAMP[i][c] + f * (RAMP[i + 1][c] - RAMP[i][c])).round() as u8;
    }
    out
}

/// Writes the path-loss panels side by side (e.g. ground truth | prediction)
/// separated by a 2 px white gutter.
pub fn write_panel_png(path: &Path, panels: &[&SpectrumGrid]) -> Result<()> {
    let first = panels.first().ok_or_else(|| Error::invalid("no panels to draw"))?;
    for p in panels {
        p.same_shape(first)?;
    }
    const GUTTER: usize = 2;
    let (w, h) = (first.width, first.height);
    let total_w = panels.len() * w + (panels.len() - 1) * GUTTER;
    let mut rgb = vec![255u8; total_w * h * 3];
    for (k, p) in panels.iter().enumerate() {
        let values = p.pathloss_values()?;
        let x0 = k * (w + GUTTER);
        for r in 0..h {
            for c in 0..w {
                let px = ramp_color(values[r * w + c], first.floor_db);
                let o = (r * total_w + x0 + c) * 3;
                rgb[o..o + 3].copy_from_slice(&px);
            }
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), total_w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&rgb)?;
    writer.finish()?;
    Ok(())
}
