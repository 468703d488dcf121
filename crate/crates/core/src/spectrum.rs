//! Angular rasters of Spatial-CSI channels and their on-disk format
//! (little-endian f32 blob plus a JSON sidecar).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{Pose, Projection};

pub const PATHLOSS: &str = "pathloss_db";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FovInfo {
    pub projection: Projection,
    pub fov_az: f64,
    pub fov_zen: f64,
}

/// Channel-major raster: `data[ch * width * height + row * width + col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumGrid {
    pub width: usize,
    pub height: usize,
    pub channels: Vec<String>,
    pub data: Vec<f64>,
    pub floor_db: f64,
    pub fov: FovInfo,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    width: usize,
    height: usize,
    channels: Vec<String>,
    fov: FovInfo,
    floor_db: f64,
    dtype: String,
    byte_order: String,
}

impl SpectrumGrid {
    /// Grid for `pose` with every channel filled with floor values
    /// (`floor_db` for path loss, 0 elsewhere).
    pub fn for_pose(pose: &Pose, channels: &[&str], floor_db: f64) -> Self {
        let n = pose.pixel_count();
        let mut data = vec![0.0; n * channels.len()];
        for (ci, name) in channels.iter().enumerate() {
            if *name == PATHLOSS {
                data[ci * n..(ci + 1) * n].fill(floor_db);
            }
        }
        SpectrumGrid {
            width: pose.width,
            height: pose.height,
            channels: channels.iter().map(|s| s.to_string()).collect(),
            data,
            floor_db,
            fov: FovInfo {
                projection: pose.projection,
                fov_az: pose.fov_az,
                fov_zen: pose.fov_zen,
            },
        }
    }

    /// Single path-loss channel grid built from a row-major raster.
    pub fn pathloss(pose: &Pose, values: Vec<f64>, floor_db: f64) -> Result<Self> {
        if values.len() != pose.pixel_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {}x{} raster",
                values.len(),
                pose.width,
                pose.height
            )));
        }
        let mut g = SpectrumGrid::for_pose(pose, &[PATHLOSS], floor_db);
        g.data = values;
        g.clamp_floor();
        Ok(g)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        let i = self
            .channel_index(name)
            .ok_or_else(|| Error::invalid(format!("grid has no channel {name}")))?;
        let n = self.pixel_count();
        Ok(&self.data[i * n..(i + 1) * n])
    }

    pub fn channel_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let i = self
            .channel_index(name)
            .ok_or_else(|| Error::invalid(format!("grid has no channel {name}")))?;
        let n = self.pixel_count();
        Ok(&mut self.data[i * n..(i + 1) * n])
    }

    pub fn pathloss_values(&self) -> Result<&[f64]> {
        self.channel(PATHLOSS)
    }

    /// Raise every path-loss value to at least `floor_db`.
    pub fn clamp_floor(&mut self) {
        let floor = self.floor_db;
        if let Ok(ch) = self.channel_mut(PATHLOSS) {
            for v in ch.iter_mut() {
                if !(*v >= floor) {
                    *v = floor;
                }
            }
        }
    }

    pub fn above_floor_count(&self) -> usize {
        self.pathloss_values()
            .map(|v| v.iter().filter(|&&x| x > self.floor_db).count())
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.pixel_count() * self.channels.len() {
            return Err(Error::DimensionMismatch(format!(
                "data length {} != {}x{}x{}",
                self.data.len(),
                self.width,
                self.height,
                self.channels.len()
            )));
        }
        if let Ok(pl) = self.pathloss_values() {
            if pl.iter().any(|&v| !(v >= self.floor_db)) {
                return Err(Error::invalid("path loss below floor_db"));
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &SpectrumGrid) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Writes `<stem>.bin` and `<stem>.json` next to each other.
    pub fn save(&self, stem: &Path) -> Result<()> {
        self.validate()?;
        let bin = stem.with_extension("bin");
        let json = stem.with_extension("json");
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let side = Sidecar {
            width: self.width,
            height: self.height,
            channels: self.channels.clone(),
            fov: self.fov.clone(),
            floor_db: self.floor_db,
            dtype: "float32".into(),
            byte_order: "little".into(),
        };
        let text = serde_json::to_string_pretty(&side)?;
        fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let bin = stem.with_extension("bin");
        let json = stem.with_extension("json");
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let side: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Schema {
            what: json.display().to_string(),
            detail: e.to_string(),
        })?;
        if side.dtype != "float32" || side.byte_order != "little" {
            return Err(Error::Schema {
                what: json.display().to_string(),
                detail: format!("unsupported dtype {} / {}", side.dtype, side.byte_order),
            });
        }
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        let expected = side.width * side.height * side.channels.len() * 4;
        if bytes.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} holds {} bytes, sidecar implies {expected}",
                bin.display(),
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let g = SpectrumGrid {
            width: side.width,
            height: side.height,
            channels: side.channels,
            data,
            floor_db: side.floor_db,
            fov: side.fov,
        };
        g.validate()?;
        Ok(g)
    }
}
