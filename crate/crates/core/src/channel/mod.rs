//! Channel-level products of a trained model: Tx-side spectra, multipath
//! extraction, impulse responses, multi-bounce flags, metrics and
//! beamforming evaluation.

mod beamform;
mod cir;
mod csi;
pub mod metrics;
mod multibounce;
mod report;
mod tx;

pub use beamform::{beamform_eval, ArrayConfig, BeamformingReport};
pub use cir::{spectrum_to_cir, Cir, TAP_MERGE_NS};
pub use csi::{extract_spatial_csi, find_peaks, PEAK_PROMINENCE_DB, PEAK_WINDOW};
pub use metrics::{psnr, psnr_values, ssim, ssim_values, PSNR_CAP_DB};
pub use multibounce::{flag_multibounce_candidates, SPECULAR_TOLERANCE_DEG};
pub use report::{summarize, write_eval_csv, write_summary_json, EvalRow, MetricSummary};
pub use tx::{render_tx_spectrum, tx_pose};
