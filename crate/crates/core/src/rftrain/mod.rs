//! Stage-2 training: learns per-Gaussian SH interaction gains from Rx-side
//! path-loss spectra with frozen geometry, plus measurement fine-tuning.

mod multiview;
mod predict;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::Pose;
use crate::spectrum::SpectrumGrid;

pub use multiview::{
    merge_patches, ncc_loss, ncc_loss_grad, patch_size, project_patch, select_neighbor_views, MergeMode, NeighborCriteria,
    NCC_MIN_ENTRIES,
};
pub use predict::{predict_pathloss, GainCache, LOS_BLOCK_MARGIN_M};
pub use trainer::{finetune, train_rf, write_rf_log, RfLossRecord, RfTrainConfig, RfTrainer, RfTrainerState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    OracleClean,
    OracleBeamformed,
    MeasuredMpc,
}

/// One Rx-side training spectrum and the pose it was taken at.
#[derive(Clone, Debug, PartialEq)]
pub struct RfSample {
    pub pose: Pose,
    pub spectrum: SpectrumGrid,
    pub provenance: Provenance,
}

impl RfSample {
    pub fn new(pose: Pose, spectrum: SpectrumGrid, provenance: Provenance) -> Result<Self> {
        if spectrum.width != pose.width || spectrum.height != pose.height {
            return Err(Error::DimensionMismatch(format!(
                "spectrum {}x{} does not match pose raster {}x{}",
                spectrum.width, spectrum.height, pose.width, pose.height
            )));
        }
        spectrum.pathloss_values()?;
        Ok(RfSample {
            pose,
            spectrum,
            provenance,
        })
    }
}
