//! Stage-1 training: fits planar Gaussians to visual and depth supervision,
//! flattens them, detects wedges and aligns normals to local planes.

mod curvature;
mod init;
mod losses;
mod normals;
mod trainer;
mod wedge;

pub use curvature::{curvature_from_render, estimate_curvature, thresholds_for_pose, CurvatureMap};
pub use init::{init_from_facets, init_in_bbox, InitConfig};
pub use losses::{alignment_weights, loss_min_scale, loss_normal_alignment};
pub use normals::{intersection_buffer, local_normals, local_plane_normal, plane_normal_from_neighbors};
pub use trainer::{
    train_geometry, views_from_oracle, write_geom_log, DensifyConfig, GeomLossRecord, GeomTrainConfig, GeomTrainResult,
    GeomTrainer, GeomTrainerState, GeomView,
};
pub use wedge::{enlarge_wedge_gaussians, WedgeParams, WedgeReport, WedgeView};
